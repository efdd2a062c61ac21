"""Session persistence: a manifest plus an append-only trial log per session.

State is event-sourced; replaying the log against the manifest reconstructs
the cursor, so a restarted service resumes every session exactly where its
observers left it. Within a session, submissions are serialized by a lock
and an optimistic index check.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from ..errors import ArgumentError, ConflictError, SetupError
from ..psychophysics import TrialRecord, append_trial, schedule_trials
from .schemas import PlanSpec, SessionCreateRequest


@dataclass
class PlannedTrial:
    level: float
    ref: str
    dist: str
    side: str  # interval holding the distorted image


@dataclass
class Session:
    id: str
    observer: str
    kind: str
    axis: str
    seed: int
    plan: list[PlannedTrial]
    cursor: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def total(self) -> int:
        return len(self.plan)

    @property
    def done(self) -> bool:
        return self.cursor >= self.total


class SessionStore:
    def __init__(self, data_dir: Path):
        self.data_dir = Path(data_dir)
        self.stimuli_dir = self.data_dir / "stimuli"
        self.sessions_dir = self.data_dir / "sessions"
        self.experiments_dir = self.data_dir / "experiments"
        self.sessions_dir.mkdir(parents=True, exist_ok=True)
        self._sessions: dict[str, Session] = {}
        self._registry_lock = threading.Lock()

    # -- stimuli ------------------------------------------------------

    def stimulus_path(self, key: str) -> Path:
        path = (self.stimuli_dir / key).resolve()
        if not str(path).startswith(str(self.stimuli_dir.resolve())):
            raise ArgumentError(f"stimulus key {key!r} escapes the stimulus root")
        if path.suffix.lower() != ".png" or not path.is_file():
            raise ArgumentError(f"unknown stimulus {key!r}")
        return path

    def _check_plan_stimuli(self, plan: PlanSpec) -> None:
        missing = []
        for level in plan.levels:
            for pair in level.pairs:
                for key in (pair.ref, pair.dist):
                    if not (self.stimuli_dir / key).is_file():
                        missing.append((level.level, key))
        if missing:
            lines = ", ".join(f"level {lv}: {key}" for lv, key in missing[:10])
            raise SetupError(f"missing stimuli for {len(missing)} entries ({lines})")

    # -- creation -----------------------------------------------------

    def _load_experiment(self, name: str) -> PlanSpec:
        path = self.experiments_dir / f"{name}.json"
        if not path.is_file():
            raise SetupError(f"experiment '{name}' not found under {self.experiments_dir}")
        return PlanSpec.model_validate(json.loads(path.read_text()))

    def create(self, req: SessionCreateRequest) -> Session:
        if (req.plan is None) == (req.experiment is None):
            raise SetupError("provide exactly one of 'experiment' or 'plan'")
        plan_spec = req.plan if req.plan is not None else self._load_experiment(req.experiment)
        self._check_plan_stimuli(plan_spec)

        seed = req.seed if req.seed is not None else 0
        levels = [ls.level for ls in plan_spec.levels]
        scheduled = schedule_trials(levels, plan_spec.reps, observers=1, seed=seed)
        pair_rng = np.random.default_rng(seed + 1)
        pairs_by_level = {ls.level: ls.pairs for ls in plan_spec.levels}
        plan = []
        for t in scheduled:
            pairs = pairs_by_level[t.level]
            pair = pairs[int(pair_rng.integers(len(pairs)))]
            plan.append(
                PlannedTrial(level=t.level, ref=pair.ref, dist=pair.dist, side=t.distorted_side)
            )

        session = Session(
            id=uuid.uuid4().hex,
            observer=req.observer,
            kind=plan_spec.kind,
            axis=plan_spec.axis,
            seed=seed,
            plan=plan,
        )
        # persist the manifest before the first trial can be served
        sdir = self.sessions_dir / session.id
        sdir.mkdir(parents=True)
        manifest = {
            "id": session.id,
            "observer": session.observer,
            "kind": session.kind,
            "axis": session.axis,
            "seed": session.seed,
            "plan": [
                {"level": p.level, "ref": p.ref, "dist": p.dist, "side": p.side}
                for p in session.plan
            ],
        }
        with open(sdir / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, sort_keys=True, indent=1)
        with self._registry_lock:
            self._sessions[session.id] = session
        return session

    # -- loading / replay ---------------------------------------------

    def _log_path(self, session_id: str) -> Path:
        return self.sessions_dir / session_id / "trials.jsonl"

    def _replay(self, session_id: str) -> Session:
        sdir = self.sessions_dir / session_id
        manifest_path = sdir / "manifest.json"
        if not manifest_path.is_file():
            raise ArgumentError(f"unknown session {session_id!r}")
        manifest = json.loads(manifest_path.read_text())
        session = Session(
            id=manifest["id"],
            observer=manifest["observer"],
            kind=manifest["kind"],
            axis=manifest["axis"],
            seed=manifest["seed"],
            plan=[PlannedTrial(**p) for p in manifest["plan"]],
        )
        log = self._log_path(session_id)
        if log.is_file():
            with open(log, encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    record = json.loads(line)
                    if record["index"] != session.cursor:
                        raise SetupError(
                            f"corrupt log for session {session_id}: "
                            f"record index {record['index']} at cursor {session.cursor}"
                        )
                    session.cursor += 1
        return session

    def get(self, session_id: str) -> Session:
        with self._registry_lock:
            session = self._sessions.get(session_id)
            if session is None:
                session = self._replay(session_id)
                self._sessions[session_id] = session
            return session

    # -- trial flow ----------------------------------------------------

    def current_trial(self, session_id: str):
        session = self.get(session_id)
        with session.lock:
            if session.done:
                return session, None
            return session, session.plan[session.cursor]

    def submit(self, session_id: str, index: int, choice: str) -> TrialRecord:
        session = self.get(session_id)
        with session.lock:
            if session.done:
                raise ConflictError(f"session complete at {session.total} trials")
            if index != session.cursor:
                raise ConflictError(
                    f"expected trial index {session.cursor}, got {index}; no state changed"
                )
            trial = session.plan[index]
            record = TrialRecord(
                session=session.id,
                index=index,
                level=trial.level,
                axis=session.axis,
                ref=trial.ref,
                dist=trial.dist,
                side=trial.side,
                choice=choice,
                correct=choice == trial.side,
                timestamp=datetime.now(timezone.utc).isoformat(),
            )
            append_trial(self._log_path(session_id), record)
            session.cursor += 1
            return record

    def summary(self, session_id: str) -> dict:
        session = self.get(session_id)
        with session.lock:
            per_level: dict[float, list[int]] = {}
            log = self._log_path(session_id)
            if log.is_file():
                with open(log, encoding="utf-8") as fh:
                    for line in fh:
                        if not line.strip():
                            continue
                        record = json.loads(line)
                        bucket = per_level.setdefault(record["level"], [0, 0])
                        bucket[0] += 1
                        bucket[1] += int(record["correct"])
            return {
                "id": session.id,
                "observer": session.observer,
                "kind": session.kind,
                "axis": session.axis,
                "total": session.total,
                "completed": session.cursor,
                "done": session.done,
                "levels": [
                    {"level": lv, "trials": n, "correct": c}
                    for lv, (n, c) in sorted(per_level.items())
                ],
            }
