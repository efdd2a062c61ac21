import collections
import json
import threading

import numpy as np
import pytest
from fastapi.testclient import TestClient

from affineiq.imaging import ImageBuffer, save_image
from affineiq.psychophysics import (
    TrialRecord,
    fit_psychometric,
    psychometric_probability,
)
from affineiq.service.app import create_app

from conftest import random_image


def make_stimuli(data_dir, levels, pairs_per_level=2, size=16, seed=0):
    rng = np.random.default_rng(seed)
    level_specs = []
    for i, level in enumerate(levels):
        pairs = []
        for j in range(pairs_per_level):
            ref = f"exp/l{i:02d}_p{j}_ref.png"
            dist = f"exp/l{i:02d}_p{j}_dist.png"
            ref_img = random_image(rng, size, size, 3)
            save_image(ref_img, data_dir / "stimuli" / ref)
            noisy = np.clip(ref_img.data + rng.normal(0, 0.02 + 0.3 * level, ref_img.data.shape), 0, 1)
            save_image(ImageBuffer(noisy), data_dir / "stimuli" / dist)
            pairs.append({"ref": ref, "dist": dist})
        level_specs.append({"level": float(level), "pairs": pairs})
    return level_specs


@pytest.fixture
def service(tmp_path):
    levels = make_stimuli(tmp_path, np.linspace(0.1, 1.0, 5))
    app = create_app(tmp_path)
    client = TestClient(app)
    return client, tmp_path, levels


def create_session(client, levels, reps=3, observer="obs", seed=7):
    resp = client.post(
        "/api/session",
        json={
            "observer": observer,
            "seed": seed,
            "plan": {"kind": "internal-d", "axis": "D", "reps": reps, "levels": levels},
        },
    )
    assert resp.status_code == 201, resp.text
    return resp.json()


class TestSessionCreation:
    def test_default_internal_d_session_size(self, tmp_path):
        levels = make_stimuli(tmp_path, np.linspace(0.05, 1.0, 20), pairs_per_level=1)
        client = TestClient(create_app(tmp_path))
        created = create_session(client, levels, reps=15)
        assert created["total"] == 300

    def test_single_level_smoke_session(self, service):
        client, _, levels = service
        created = create_session(client, levels[:1], reps=15)
        assert created["total"] == 15

    def test_same_seed_same_trial_order(self, service):
        client, tmp_path, levels = service
        a = create_session(client, levels, reps=4, seed=5)
        b = create_session(client, levels, reps=4, seed=5)
        ma = json.loads((tmp_path / "sessions" / a["id"] / "manifest.json").read_text())
        mb = json.loads((tmp_path / "sessions" / b["id"] / "manifest.json").read_text())
        assert ma["plan"] == mb["plan"]
        assert a["id"] != b["id"]

    def test_missing_stimuli_listed(self, service):
        client, _, levels = service
        bad = [{"level": 0.5, "pairs": [{"ref": "nope/a.png", "dist": "nope/b.png"}]}]
        resp = client.post(
            "/api/session",
            json={"observer": "o", "plan": {"reps": 2, "levels": bad}},
        )
        assert resp.status_code == 400
        assert "nope/a.png" in resp.json()["detail"]

    def test_manifest_persisted_before_first_trial(self, service):
        client, tmp_path, levels = service
        created = create_session(client, levels)
        assert (tmp_path / "sessions" / created["id"] / "manifest.json").is_file()


class TestTrialFlow:
    def test_first_trial_index_zero(self, service):
        client, _, levels = service
        sid = create_session(client, levels)["id"]
        trial = client.get(f"/api/session/{sid}/trial").json()
        assert trial["done"] is False
        assert trial["index"] == 0
        assert trial["left"] and trial["right"]

    def test_repeated_get_is_idempotent(self, service):
        client, _, levels = service
        sid = create_session(client, levels)["id"]
        t1 = client.get(f"/api/session/{sid}/trial").json()
        t2 = client.get(f"/api/session/{sid}/trial").json()
        assert t1 == t2

    def test_payload_never_reveals_distorted(self, service):
        client, _, levels = service
        sid = create_session(client, levels)["id"]
        trial = client.get(f"/api/session/{sid}/trial").json()
        assert set(trial) == {"done", "index", "total", "left", "right"}

    def test_submit_advances_and_logs(self, service):
        client, tmp_path, levels = service
        sid = create_session(client, levels)["id"]
        trial = client.get(f"/api/session/{sid}/trial").json()
        ack = client.post(
            f"/api/session/{sid}/response", json={"index": 0, "choice": "left"}
        ).json()
        assert ack["accepted"] is True
        after = client.get(f"/api/session/{sid}/trial").json()
        assert after["index"] == 1
        log = tmp_path / "sessions" / sid / "trials.jsonl"
        lines = log.read_text().splitlines()
        assert len(lines) == 1
        record = json.loads(lines[0])
        assert record["choice"] == "left"
        assert record["correct"] == (record["side"] == "left")

    def test_duplicate_submission_conflict(self, service):
        client, tmp_path, levels = service
        sid = create_session(client, levels)["id"]
        assert client.post(f"/api/session/{sid}/response", json={"index": 0, "choice": "left"}).status_code == 200
        resp = client.post(f"/api/session/{sid}/response", json={"index": 0, "choice": "right"})
        assert resp.status_code == 409
        log = tmp_path / "sessions" / sid / "trials.jsonl"
        assert len(log.read_text().splitlines()) == 1

    def test_out_of_order_submission_conflict(self, service):
        client, _, levels = service
        sid = create_session(client, levels)["id"]
        resp = client.post(f"/api/session/{sid}/response", json={"index": 3, "choice": "left"})
        assert resp.status_code == 409

    def test_end_of_session_signal(self, service):
        client, _, levels = service
        sid = create_session(client, levels[:1], reps=2)["id"]
        for i in range(2):
            client.post(f"/api/session/{sid}/response", json={"index": i, "choice": "left"})
        trial = client.get(f"/api/session/{sid}/trial").json()
        assert trial["done"] is True
        resp = client.post(f"/api/session/{sid}/response", json={"index": 2, "choice": "left"})
        assert resp.status_code == 409

    def test_unknown_session_404(self, service):
        client, _, _ = service
        assert client.get("/api/session/deadbeef/trial").status_code == 404

    def test_interval_sides_roughly_balanced(self, service):
        client, _, levels = service
        sid = create_session(client, levels, reps=40, seed=3)["id"]
        sides = collections.Counter()
        index = 0
        while True:
            trial = client.get(f"/api/session/{sid}/trial").json()
            if trial["done"]:
                break
            # recover which side is distorted from the log after answering
            client.post(f"/api/session/{sid}/response", json={"index": index, "choice": "left"})
            index += 1
        # read back the log: distorted side distribution
        import affineiq.psychophysics as psy

        # counted from the summary instead: correctness of always-left equals
        # the fraction of trials whose distorted side was left
        summary = client.get(f"/api/session/{sid}/summary").json()
        total = sum(lv["trials"] for lv in summary["levels"])
        correct = sum(lv["correct"] for lv in summary["levels"])
        assert total == 200
        # binomial bound: 200 trials, p=0.5 -> within 4 sigma of 100
        assert abs(correct - 100) < 4 * (200 * 0.25) ** 0.5


class TestStimulusServing:
    def test_bytes_identical(self, service):
        client, tmp_path, levels = service
        key = levels[0]["pairs"][0]["ref"]
        served = client.get(f"/api/stimulus/{key}").content
        on_disk = (tmp_path / "stimuli" / key).read_bytes()
        assert served == on_disk

    def test_traversal_rejected(self, service):
        client, _, _ = service
        resp = client.get("/api/stimulus/../sessions/x.png")
        assert resp.status_code in (404, 400)

    def test_unknown_stimulus_404(self, service):
        client, _, _ = service
        assert client.get("/api/stimulus/exp/absent.png").status_code == 404


class TestEventSourcing:
    def test_replay_reconstructs_cursor(self, service):
        client, tmp_path, levels = service
        sid = create_session(client, levels, reps=4)["id"]
        for i in range(5):
            client.post(f"/api/session/{sid}/response", json={"index": i, "choice": "right"})
        # a fresh app instance replays the log from disk
        client2 = TestClient(create_app(tmp_path))
        trial = client2.get(f"/api/session/{sid}/trial").json()
        assert trial["index"] == 5
        resp = client2.post(f"/api/session/{sid}/response", json={"index": 4, "choice": "left"})
        assert resp.status_code == 409

    def test_summary_counts(self, service):
        client, _, levels = service
        sid = create_session(client, levels[:2], reps=3)["id"]
        for i in range(6):
            client.post(f"/api/session/{sid}/response", json={"index": i, "choice": "left"})
        summary = client.get(f"/api/session/{sid}/summary").json()
        assert summary["done"] is True
        assert summary["completed"] == 6
        assert sum(lv["trials"] for lv in summary["levels"]) == 6


class TestConcurrency:
    def test_racing_submissions_accept_exactly_one(self, tmp_path):
        from affineiq.errors import ConflictError
        from affineiq.service.schemas import SessionCreateRequest, PlanSpec, LevelSpec, PairSpec
        from affineiq.service.store import SessionStore

        levels = make_stimuli(tmp_path, [0.5], pairs_per_level=1)
        store = SessionStore(tmp_path)
        req = SessionCreateRequest(
            observer="o",
            seed=1,
            plan=PlanSpec(
                reps=8,
                levels=[LevelSpec(level=0.5, pairs=[PairSpec(**levels[0]["pairs"][0])])],
            ),
        )
        session = store.create(req)
        results = []

        def worker():
            try:
                store.submit(session.id, 0, "left")
                results.append("ok")
            except ConflictError:
                results.append("conflict")

        threads = [threading.Thread(target=worker) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert results.count("ok") == 1
        assert results.count("conflict") == 7
        log = tmp_path / "sessions" / session.id / "trials.jsonl"
        assert len(log.read_text().splitlines()) == 1


class TestSimulatedObserver:
    def run_observer(self, client, sid, k, tau, rng):
        """Answer every trial with the model's correct-probability."""
        index = 0
        while True:
            trial = client.get(f"/api/session/{sid}/trial").json()
            if trial["done"]:
                return
            # the simulated observer knows the level only through its own
            # session manifest; read it from the summary-side: levels are in
            # the plan order, so re-fetch from the log path via index
            level = self.levels_by_index[index]
            p = psychometric_probability(level, k, tau)
            correct = rng.random() < p
            side = self.sides_by_index[index]
            choice = side if correct else ("left" if side == "right" else "right")
            client.post(f"/api/session/{sid}/response", json={"index": index, "choice": choice})
            index += 1

    def test_full_experiment_recovers_tau(self, tmp_path):
        levels = make_stimuli(tmp_path, np.linspace(0.05, 1.0, 20), pairs_per_level=1)
        client = TestClient(create_app(tmp_path))
        k_true, tau_true = 40.0, 0.44
        rng = np.random.default_rng(99)
        all_trials = []
        for obs in range(5):
            sid = create_session(client, levels, reps=15, observer=f"obs{obs}", seed=100 + obs)["id"]
            manifest = json.loads((tmp_path / "sessions" / sid / "manifest.json").read_text())
            self.levels_by_index = [p["level"] for p in manifest["plan"]]
            self.sides_by_index = [p["side"] for p in manifest["plan"]]
            self.run_observer(client, sid, k_true, tau_true, rng)
            log = tmp_path / "sessions" / sid / "trials.jsonl"
            for line in log.read_text().splitlines():
                all_trials.append(TrialRecord(**json.loads(line)))
        assert len(all_trials) == 1500
        fit = fit_psychometric(all_trials, n_boot=200)
        assert abs(fit.tau - tau_true) <= 0.03
