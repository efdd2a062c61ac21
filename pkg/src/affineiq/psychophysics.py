"""2AFC trial scheduling and psychometric threshold fitting.

The detection model is the two-parameter sigmoid

    p(x) = 1/2 + 1 / (2 * (1 + exp(-k * (x - tau))))

which runs from chance (0.5) to certainty (1.0) and equals 0.75 exactly at
x = tau, the threshold. Fitting is maximum likelihood under the Bernoulli
model (correct/incorrect per trial), with threshold uncertainty from a
nonparametric bootstrap over trials.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.special import expit

from .errors import ArgumentError, NonIdentifiableFitError

DEFAULT_BOOTSTRAP_RESAMPLES = 1000
DEFAULT_BOOTSTRAP_SEED = 1895
_K_CLAMP = (1e-4, 1e6)


@dataclass(frozen=True)
class TrialRecord:
    """One forced choice: which interval held the distorted image, and the answer."""

    session: str
    index: int
    level: float
    axis: str
    ref: str
    dist: str
    side: str  # interval holding the distorted image: "left" | "right"
    choice: str
    correct: bool
    timestamp: str


@dataclass(frozen=True)
class PlannedTrial:
    observer: int
    level: float
    rep: int
    distorted_side: str


@dataclass(frozen=True)
class PsychometricFit:
    """Fitted slope and threshold with bootstrap quartiles of the threshold.

    Quartiles are the 25th/75th bootstrap percentiles, widened if needed so
    they always bracket the point estimate.
    """

    k: float
    tau: float
    quartile_lo: float
    quartile_hi: float
    n_trials: int
    axis: str = "D"
    loglik: float = 0.0
    n_boot: int = DEFAULT_BOOTSTRAP_RESAMPLES
    bootstrap_seed: int = DEFAULT_BOOTSTRAP_SEED

    def __post_init__(self):
        if not (self.k > 0):
            raise ArgumentError("slope k must be positive")
        if not (self.quartile_lo <= self.tau <= self.quartile_hi):
            raise ArgumentError("quartiles must bracket tau")

    @property
    def quartile_halfwidth(self) -> float:
        return 0.5 * (self.quartile_hi - self.quartile_lo)


def psychometric_probability(level, k, tau):
    """Probability of a correct 2AFC response at the given stimulus level."""
    k = np.asarray(k, dtype=np.float64)
    if np.any(k <= 0):
        raise ArgumentError("slope k must be positive")
    level = np.asarray(level, dtype=np.float64)
    out = 0.5 + 0.5 * expit(k * (level - np.asarray(tau, dtype=np.float64)))
    return float(out) if out.ndim == 0 else out


def schedule_trials(
    levels: Sequence[float], reps: int, observers: int = 1, seed: int = 0
) -> list[PlannedTrial]:
    """Constant-stimulus plan: every level repeated ``reps`` times per observer.

    Order is randomized independently per observer and the interval holding
    the distorted image is balanced per level (odd reps leave one extra on a
    random side) and shuffled.
    """
    levels = [float(v) for v in levels]
    if len(set(levels)) != len(levels):
        raise ArgumentError("levels must be distinct")
    if not levels or reps < 1 or observers < 1:
        raise ArgumentError("need at least one level, one rep, and one observer")
    rng = np.random.default_rng(seed)
    plan: list[PlannedTrial] = []
    for obs in range(observers):
        trials: list[tuple[float, int, str]] = []
        for lv in levels:
            sides = ["left"] * (reps // 2) + ["right"] * (reps // 2)
            if reps % 2:
                sides.append("left" if rng.random() < 0.5 else "right")
            rng.shuffle(sides)
            trials.extend((lv, rep, side) for rep, side in enumerate(sides))
        order = rng.permutation(len(trials))
        plan.extend(
            PlannedTrial(observer=obs, level=trials[i][0], rep=trials[i][1], distorted_side=trials[i][2])
            for i in order
        )
    return plan


def _aggregate(trials) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    levels = []
    for t in trials:
        levels.append((float(t.level), bool(t.correct)))
    if not levels:
        raise ArgumentError("no trials to fit")
    xs = sorted({lv for lv, _ in levels})
    index = {lv: i for i, lv in enumerate(xs)}
    n = np.zeros(len(xs))
    c = np.zeros(len(xs))
    for lv, ok in levels:
        n[index[lv]] += 1
        c[index[lv]] += ok
    return np.asarray(xs, dtype=np.float64), n, c


def _nll(x, n, c, tau, k):
    # stable pieces: log p = -log2 + log1p(sigma), log(1-p) = -log2 - softplus(z)
    z = k[..., None] * (x - tau[..., None])
    log_p = -math.log(2.0) + np.log1p(expit(z))
    log_q = -math.log(2.0) - np.logaddexp(0.0, z)
    miss = n - c
    # avoid 0 * -inf when a fully-correct level saturates
    miss_term = np.where(miss > 0, miss * log_q, 0.0)
    return -(c * log_p + miss_term).sum(axis=-1)


def _fisher_fit(x, n, c, tau0, k0, iterations=80):
    """Batched Fisher-scoring MLE of (tau, k); inputs broadcast over a batch axis.

    Monotone line search per replicate; replicates whose search fails to
    improve are converged and drop out of further iterations.
    """
    tau = np.array(tau0, dtype=np.float64, ndmin=1).copy()
    k = np.array(k0, dtype=np.float64, ndmin=1).copy()
    n = np.atleast_2d(n)
    c = np.atleast_2d(c)
    span = x[-1] - x[0] if x[-1] > x[0] else 1.0
    tau_lim = (x[0] - 5.0 * span, x[-1] + 5.0 * span)
    nll = _nll(x, n, c, tau, k)
    active = np.arange(len(tau))
    for _ in range(iterations):
        if len(active) == 0:
            break
        na, ca = n[active], c[active]
        ta, ka = tau[active], k[active]
        z = ka[:, None] * (x - ta[:, None])
        sig = expit(z)
        # with p = (1 + sigma)/2 the score and Fisher weights reduce to
        # division-free forms, immune to saturation at sigma in {0, 1}
        g_z = ca * sig * (1.0 - sig) / (1.0 + sig) - (na - ca) * sig
        grad_tau = (-ka[:, None] * g_z).sum(axis=1)
        grad_k = (g_z * (x - ta[:, None])).sum(axis=1)
        w = na * sig * sig * (1.0 - sig) / (1.0 + sig)
        i_tt = (w * ka[:, None] ** 2).sum(axis=1) + 1e-12
        i_tk = (-w * ka[:, None] * (x - ta[:, None])).sum(axis=1)
        i_kk = (w * (x - ta[:, None]) ** 2).sum(axis=1) + 1e-12
        det = i_tt * i_kk - i_tk * i_tk
        det = np.where(np.abs(det) < 1e-300, 1e-300, det)
        d_tau = (i_kk * grad_tau - i_tk * grad_k) / det
        d_k = (i_tt * grad_k - i_tk * grad_tau) / det
        step = 1.0
        improved = np.zeros(len(active), dtype=bool)
        new_tau, new_k = ta.copy(), ka.copy()
        new_nll = nll[active].copy()
        for _ in range(10):
            todo = ~improved
            cand_tau = np.clip(ta[todo] + step * d_tau[todo], *tau_lim)
            cand_k = np.clip(ka[todo] + step * d_k[todo], *_K_CLAMP)
            cand_nll = _nll(x, na[todo], ca[todo], cand_tau, cand_k)
            better = cand_nll < new_nll[todo] - 1e-15
            idx = np.nonzero(todo)[0][better]
            new_tau[idx] = cand_tau[better]
            new_k[idx] = cand_k[better]
            new_nll[idx] = cand_nll[better]
            improved[idx] = True
            if improved.all():
                break
            step *= 0.5
        tau[active], k[active], nll[active] = new_tau, new_k, new_nll
        active = active[improved]
    return tau, k, nll


def _grid_init(x, n, c):
    span = x[-1] - x[0] if x[-1] > x[0] else 1.0
    taus = np.linspace(x[0], x[-1], 25)
    ks = np.geomspace(0.5 / span, 5000.0 / span, 30)
    tg, kg = np.meshgrid(taus, ks)
    tg, kg = tg.ravel(), kg.ravel()
    z = kg[:, None] * (x - tg[:, None])
    log_p = -math.log(2.0) + np.log1p(expit(z))
    log_q = -math.log(2.0) - np.logaddexp(0.0, z)
    n = np.atleast_2d(n)
    c = np.atleast_2d(c)
    nll = -(c @ log_p.T + (n - c) @ log_q.T)
    best = np.argmin(nll, axis=1)
    return tg[best], kg[best]


def fit_psychometric_counts(
    x: np.ndarray,
    n: np.ndarray,
    c: np.ndarray,
    axis: str = "D",
    n_boot: int = DEFAULT_BOOTSTRAP_RESAMPLES,
    bootstrap_seed: int = DEFAULT_BOOTSTRAP_SEED,
) -> PsychometricFit:
    """MLE from per-level counts (n trials, c correct at each level in x)."""
    x = np.asarray(x, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    if len(x) < 2:
        raise ArgumentError("need responses at >= 2 distinct levels")
    total = n.sum()
    if c.sum() == total:
        raise NonIdentifiableFitError(
            "all responses correct (ceiling): the threshold lies below the sampled levels"
        )
    if c.sum() == 0:
        raise NonIdentifiableFitError(
            "no correct responses (floor): data are inconsistent with a 2AFC above-chance model"
        )

    tau0, k0 = _grid_init(x, n, c)
    tau, k, nll = _fisher_fit(x, n, c, tau0, k0)
    tau_hat, k_hat, nll_hat = float(tau[0]), float(k[0]), float(nll[0])

    span = x[-1] - x[0]
    if tau_hat > x[-1] + 0.5 * span or tau_hat < x[0] - 0.5 * span:
        raise NonIdentifiableFitError(
            f"fitted threshold {tau_hat:.4g} falls outside the sampled level range "
            "(responses at chance or saturated across all levels)"
        )

    # nonparametric bootstrap over trials, vectorized as multinomial cell counts
    if n_boot > 0:
        rng = np.random.default_rng(bootstrap_seed)
        cells = np.concatenate([c, n - c])  # per-level correct and incorrect counts
        probs = cells / total
        draws = rng.multinomial(int(total), probs, size=n_boot).astype(np.float64)
        cb = draws[:, : len(x)]
        nb = cb + draws[:, len(x) :]
        # refine from both a per-replicate grid init and the full-data MLE;
        # near-separable resamples have flat likelihoods where Fisher steps
        # stall, so the grid provides the in-gap starting point
        gt, gk = _grid_init(x, nb, cb)
        t1, k1, nll1 = _fisher_fit(x, nb, cb, gt, gk, iterations=40)
        t2, k2, nll2 = _fisher_fit(
            x, nb, cb, np.full(n_boot, tau_hat), np.full(n_boot, k_hat), iterations=40
        )
        bt = np.where(nll1 <= nll2, t1, t2)
        q_lo, q_hi = np.percentile(bt, [25.0, 75.0])
        q_lo, q_hi = min(float(q_lo), tau_hat), max(float(q_hi), tau_hat)
    else:
        q_lo = q_hi = tau_hat

    return PsychometricFit(
        k=k_hat,
        tau=tau_hat,
        quartile_lo=q_lo,
        quartile_hi=q_hi,
        n_trials=int(total),
        axis=axis,
        loglik=-nll_hat,
        n_boot=n_boot,
        bootstrap_seed=bootstrap_seed,
    )


def fit_psychometric(
    trials: Iterable[TrialRecord],
    axis: str = "D",
    n_boot: int = DEFAULT_BOOTSTRAP_RESAMPLES,
    bootstrap_seed: int = DEFAULT_BOOTSTRAP_SEED,
) -> PsychometricFit:
    """Maximum-likelihood psychometric fit from trial records."""
    x, n, c = _aggregate(trials)
    return fit_psychometric_counts(x, n, c, axis=axis, n_boot=n_boot, bootstrap_seed=bootstrap_seed)


def human_threshold_physical(trials: Iterable[TrialRecord], axis: str, **kwargs) -> PsychometricFit:
    """fit_psychometric with the level axis in physical units (degrees, factor, xy radius)."""
    return fit_psychometric(trials, axis=axis, **kwargs)


def simulate_trials(
    levels: Sequence[float],
    reps: int,
    k: float,
    tau: float,
    seed: int = 0,
    observers: int = 1,
    session: str = "sim",
) -> list[TrialRecord]:
    """Synthetic observer responding by the model probabilities; used for validation."""
    rng = np.random.default_rng(seed)
    plan = schedule_trials(levels, reps, observers=observers, seed=seed)
    records = []
    now = datetime.now(timezone.utc).isoformat()
    for i, t in enumerate(plan):
        p = psychometric_probability(t.level, k, tau)
        correct = bool(rng.random() < p)
        choice = t.distorted_side if correct else ("left" if t.distorted_side == "right" else "right")
        records.append(
            TrialRecord(
                session=session,
                index=i,
                level=t.level,
                axis="D",
                ref="sim-ref",
                dist="sim-dist",
                side=t.distorted_side,
                choice=choice,
                correct=correct,
                timestamp=now,
            )
        )
    return records


def append_trial(path, record: TrialRecord) -> None:
    """Append one record to a line-delimited JSON log."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(asdict(record), sort_keys=True) + "\n")


def load_trials(path) -> list[TrialRecord]:
    """Read a line-delimited JSON trial log."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            records.append(TrialRecord(**json.loads(line)))
    return records
