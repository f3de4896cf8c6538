"""Empirical checks of the learner's guarantees, with brute-force oracles."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from . import bandit, engine
from .core import SimConfig
from .workload import SyntheticWorkload

MAX_BRUTE_FORCE_F = 20


def brute_force_top_c(values: Sequence[float], c: int) -> set[int]:
    """Max-sum ``c``-subset by exhaustive enumeration.

    Ties go to the lexicographically smallest id sequence, which is the
    first maximiser ``itertools.combinations`` yields.
    """
    values = [float(v) for v in values]
    if len(values) > MAX_BRUTE_FORCE_F:
        raise ValueError(f"F={len(values)} too large for enumeration (max {MAX_BRUTE_FORCE_F})")
    if not 0 <= c <= len(values):
        raise ValueError(f"c={c} outside [0, {len(values)}]")
    best, best_sum = (), -math.inf
    for combo in itertools.combinations(range(len(values)), c):
        total = math.fsum(values[i] for i in combo)
        if total > best_sum:
            best, best_sum = combo, total
    return set(best)


@dataclass(frozen=True)
class CoverageSamples:
    """Per-update prediction errors and confidence radii from one or more runs.

    ``error[i] = |x^T theta_hat - x^T theta*|`` and ``radius[i] =
    sqrt(x^T V^-1 x)``, taken for the feature about to be folded in.
    """

    error: np.ndarray
    radius: np.ndarray
    zeta: float
    lam: float

    def __len__(self):
        return len(self.error)

    @staticmethod
    def concat(parts: Sequence["CoverageSamples"]) -> "CoverageSamples":
        return CoverageSamples(
            error=np.concatenate([p.error for p in parts]),
            radius=np.concatenate([p.radius for p in parts]),
            zeta=max(p.zeta for p in parts),
            lam=parts[0].lam,
        )


@dataclass(frozen=True)
class CoverageResult:
    delta: float
    trials: int
    violations: int
    rate: float
    bound: float

    @property
    def margin(self) -> float:
        """Three-sigma binomial half-width at the bound plus 0.02 absolute slack."""
        if self.trials == 0:
            return math.inf
        return 3.0 * math.sqrt(self.bound * (1.0 - self.bound) / self.trials) + 0.02

    @property
    def passed(self) -> bool:
        return self.rate <= self.bound + self.margin

    def to_dict(self) -> dict:
        return {**asdict(self), "margin": self.margin, "passed": self.passed}


def coverage_samples(config: SimConfig, workload: Optional[SyntheticWorkload], seed: int,
                     policy: str = "ucb", exact_theta: bool = False) -> CoverageSamples:
    """Run ``policy`` on a synthetic workload and log error/radius at each update.

    With ``exact_theta`` the estimate is replaced by the ground truth, which
    must produce zero violations at any radius.
    """
    if workload is None or getattr(workload, "theta_star", None) is None:
        raise ValueError("verification requires ground truth")
    theta_star = workload.theta_star
    errors, radii = [], []

    def observe(t, n, state, x, demand):
        theta = theta_star[n] if exact_theta else bandit.estimate_theta(state)
        errors.append(abs(float(x @ theta) - float(x @ theta_star[n])))
        radii.append(math.sqrt(max(0.0, float(x @ state.V_inv @ x))))

    engine.run(config, workload.trace, policy=policy, seed=seed,
               features=workload.features, observer=observe)
    return CoverageSamples(np.array(errors), np.array(radii), zeta=config.zeta, lam=config.lam)


def lemma1_coverage(samples: CoverageSamples, delta: float) -> CoverageResult:
    """Frequency with which the error exceeds ``(delta + zeta*lam) * radius``."""
    if delta < 0:
        raise ValueError("delta must be >= 0")
    limit = (delta + samples.zeta * samples.lam) * samples.radius
    violations = int(np.count_nonzero(samples.error > limit))
    trials = len(samples)
    return CoverageResult(
        delta=float(delta),
        trials=trials,
        violations=violations,
        rate=violations / trials if trials else 0.0,
        bound=min(1.0, 2.0 * math.exp(-2.0 * delta * delta)),
    )


@dataclass(frozen=True)
class SlopeResult:
    checkpoints: list  # [(t, mean R(t)/t)]
    monotone_fraction: float

    @property
    def first(self) -> float:
        return self.checkpoints[0][1]

    @property
    def last(self) -> float:
        return self.checkpoints[-1][1]

    def shrinks_by(self, ratio: float) -> bool:
        """True when the last average regret is at most ``ratio`` times the first."""
        return self.last <= ratio * self.first

    def to_dict(self) -> dict:
        return {"checkpoints": [list(p) for p in self.checkpoints],
                "monotone_fraction": self.monotone_fraction}


def regret_slope_check(reports: Sequence[engine.RunReport], checkpoints: Sequence[int],
                       min_seeds: int = 10) -> SlopeResult:
    """Average ``R(t)/t`` across runs at each checkpoint."""
    if len(reports) < min_seeds:
        raise ValueError(f"need at least {min_seeds} runs, got {len(reports)}")
    checkpoints = sorted(int(t) for t in checkpoints)
    if not checkpoints or checkpoints[0] < 1:
        raise ValueError("checkpoints must be positive")
    if len(set(checkpoints)) != len(checkpoints):
        raise ValueError("checkpoints must be distinct")
    for rep in reports:
        if checkpoints[-1] > rep.T:
            raise ValueError(f"checkpoint {checkpoints[-1]} beyond horizon T={rep.T}")
    points = []
    for t in checkpoints:
        points.append((t, float(np.mean([rep.cum_regret[t - 1] / t for rep in reports]))))
    pairs = list(zip(points, points[1:]))
    # a decrease must beat float noise in R/t
    decreased = sum(1 for (_, a), (_, b) in pairs if b < a - 1e-12 * max(1.0, abs(a)))
    return SlopeResult(points, decreased / len(pairs) if pairs else 0.0)


def expected_regret(report: engine.RunReport, workload: SyntheticWorkload) -> np.ndarray:
    """Cumulative regret measured on expected rather than realised demand.

    Realised-demand regret carries a floor from noise that no policy can
    beat; this variant removes it, so it is the quantity that should vanish
    per slot.
    """
    mean = np.einsum("fntd,nd->fnt", workload.features, workload.theta_star)
    T, N, c = report.cached.shape
    best = engine.top_c_by_slot(mean, c)
    t_idx = np.arange(T)[:, None, None]
    n_idx = np.arange(N)[None, :, None]
    got = mean[report.cached, n_idx, t_idx].sum(axis=(1, 2))
    opt = mean[best, n_idx, t_idx].sum(axis=(1, 2))
    return np.cumsum(opt - got)


def estimator_error_trace(config: SimConfig, workload: SyntheticWorkload, seed: int,
                          at_updates: Sequence[int], policy: str = "ucb") -> np.ndarray:
    """``||theta_hat_n - theta*_n||`` per node after each count in ``at_updates``.

    Returns ``(len(at_updates), N)``; counts never reached are NaN.
    """
    wanted = {int(k): i for i, k in enumerate(at_updates)}
    out = np.full((len(wanted), config.N), np.nan)

    def observe(t, n, state, x, demand):
        # the observer fires before the update, so state reflects k updates
        k = state.updates_applied
        if k in wanted:
            out[wanted[k], n] = np.linalg.norm(bandit.estimate_theta(state) - workload.theta_star[n])

    engine.run(config, workload.trace, policy=policy, seed=seed,
               features=workload.features, observer=observe)
    return out


def report_json(coverage: Sequence[CoverageResult], slope: Optional[SlopeResult], **extra) -> str:
    return json.dumps({
        "coverage": [r.to_dict() for r in coverage],
        "slope": slope.to_dict() if slope is not None else None,
        **extra,
    }, indent=2)
