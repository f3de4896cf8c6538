"""Slot-by-slot simulation of per-node caching policies against a demand trace."""
from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from . import bandit
from .core import DemandHistory, DemandWindow, FeatureMap, PrecomputedFeatures, SimConfig, cap_norm
from .workload import Trace

# called before every learner update as observer(t, n, state, x, demand)
UpdateObserver = Callable[[int, int, bandit.NodeLearnerState, np.ndarray, float], None]


@dataclass(frozen=True)
class SlotResult:
    slot: int
    cached: np.ndarray  # (N, c)
    hits: np.ndarray  # (N,)
    oracle_hits: np.ndarray  # (N,)


@dataclass
class RunReport:
    config: dict
    policy: str
    seed: int
    initial_cache: np.ndarray  # (N, c), the slot-0 placement
    cached: np.ndarray  # (T, N, c), ascending file ids
    hits: np.ndarray  # (T, N)
    oracle_hits: np.ndarray  # (T, N), per-slot hindsight optimum
    static_oracle_hits: np.ndarray  # (T, N), whole-horizon top-c placement
    eta: float = 0.0
    wall_clock: float = 0.0
    scores: Optional[np.ndarray] = field(default=None, repr=False)  # (T, N, F) when recorded

    @property
    def T(self) -> int:
        return self.hits.shape[0]

    def slot(self, t: int) -> SlotResult:
        return SlotResult(t, self.cached[t - 1], self.hits[t - 1], self.oracle_hits[t - 1])

    def __iter__(self):
        return (self.slot(t) for t in range(1, self.T + 1))

    @property
    def node_regret(self) -> np.ndarray:
        """Cumulative regret per node, shape ``(T, N)``."""
        return np.cumsum(self.oracle_hits - self.hits, axis=0)

    @property
    def cum_regret(self) -> np.ndarray:
        return np.cumsum((self.oracle_hits - self.hits).sum(axis=1))

    @property
    def cum_hits(self) -> np.ndarray:
        return np.cumsum(self.hits.sum(axis=1))

    @property
    def total_hits(self) -> float:
        return float(self.hits.sum())

    @property
    def final_regret(self) -> float:
        return float(self.cum_regret[-1]) if self.T else 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["slot", "node", "hits", "oracle_hits", "cum_regret"])
        node_regret = self.node_regret
        for t in range(self.T):
            for n in range(self.hits.shape[1]):
                writer.writerow([t + 1, n, repr(float(self.hits[t, n])),
                                 repr(float(self.oracle_hits[t, n])),
                                 repr(float(node_regret[t, n]))])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "policy": self.policy,
            "seed": self.seed,
            "initial_cache": self.initial_cache.tolist(),
            "cached": self.cached.tolist(),
            "hits": self.hits.tolist(),
            "oracle_hits": self.oracle_hits.tolist(),
            "static_oracle_hits": self.static_oracle_hits.tolist(),
            "cum_hits": self.cum_hits.tolist(),
            "cum_regret": self.cum_regret.tolist(),
            "total_hits": self.total_hits,
            "final_regret": self.final_regret,
            "eta": self.eta,
            "wall_clock": self.wall_clock,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def top_c_by_slot(values: np.ndarray, c: int) -> np.ndarray:
    """Top-``c`` files of ``values[f, n, t]`` for every (t, n), ascending ids.

    Ties go to the smaller file id. Returns ``(T, N, c)``.
    """
    F = values.shape[0]
    if not 0 <= c <= F:
        raise ValueError(f"c={c} outside [0, {F}]")
    by_slot = np.transpose(values, (2, 1, 0))  # (T, N, F)
    order = np.argsort(-by_slot, axis=-1, kind="stable")[..., :c]
    return np.sort(order, axis=-1)


def hindsight_per_slot(trace: Trace, c: int) -> np.ndarray:
    """Best ``c`` files for each (slot, node) given that slot's demand; ``(T, N, c)``."""
    return top_c_by_slot(trace.demands, c)


def hindsight_static(trace: Trace, c: int) -> np.ndarray:
    """Per node, the ``c`` files with the largest total demand over the horizon; ``(N, c)``."""
    totals = trace.demands.sum(axis=2)[:, :, None]  # (F, N, 1)
    return top_c_by_slot(totals, c)[0]


def set_hits(trace: Trace, cached: np.ndarray) -> np.ndarray:
    """Exactly rounded hit totals ``(T, N)`` of cached sets ``(T, N, c)``.

    fsum keeps the total a monotone function of the exact sum, so an oracle
    set can never score below another set because of summation order.
    """
    T, N = cached.shape[:2]
    out = np.zeros((T, N))
    for t in range(T):
        for n in range(N):
            out[t, n] = math.fsum(trace.demands[cached[t, n], n, t].tolist())
    return out


def compute_regret(report: RunReport, oracle: np.ndarray, trace: Trace) -> np.ndarray:
    """Cumulative regret ``R(t)`` summed over nodes, from cached sets and oracle sets."""
    if oracle.shape[:2] != report.cached.shape[:2]:
        raise ValueError("oracle must cover every (slot, node) of the report")
    gap = set_hits(trace, oracle) - set_hits(trace, report.cached)
    return np.cumsum(gap.sum(axis=1))


def _resolve_features(config: SimConfig, trace: Trace, features) -> FeatureMap:
    if features is None:
        if config.window != config.d:
            raise ValueError(f"demand-window features need window == d, got {config.window} != {config.d}")
        return DemandWindow(config.window)
    if isinstance(features, np.ndarray):
        expected = (trace.F, trace.N, trace.T, config.d)
        if features.shape != expected:
            raise ValueError(f"feature tensor shape {features.shape} != {expected}")
        return PrecomputedFeatures(features)
    if features.dim != config.d:
        raise ValueError(f"feature map dimension {features.dim} != d={config.d}")
    return features


def _check_dims(config: SimConfig, trace: Trace) -> None:
    for name in ("F", "N", "T"):
        if getattr(config, name) != getattr(trace, name):
            raise ValueError(f"trace {name}={getattr(trace, name)} does not match config {name}={getattr(config, name)}")


def _streams(seed: int):
    init_ss, policy_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(init_ss), np.random.default_rng(policy_ss)


def run(config: SimConfig, trace: Trace, policy: Optional[str] = None, seed: Optional[int] = None,
        features: Union[None, np.ndarray, FeatureMap] = None,
        observer: Optional[UpdateObserver] = None,
        record_scores: bool = False) -> RunReport:
    """Run one policy over ``trace``.

    ``features`` defaults to the demand window of ``config.window`` slots
    built from observed history; an ``(F, N, T, d)`` array supplies
    exogenous features instead. Learner updates use cached files only.
    The feature history receives every file's demand unless
    ``config.strict_bandit`` is set.
    """
    started = time.perf_counter()
    policy = policy or config.policy
    if policy not in bandit.POLICIES:
        raise ValueError(f"unknown policy {policy!r}")
    seed = config.seed if seed is None else seed
    _check_dims(config, trace)
    fmap = _resolve_features(config, trace, features)
    F, N, T, c = config.F, config.N, config.T, config.c

    init_rng, policy_rng = _streams(seed)
    initial = np.stack([np.sort(init_rng.choice(F, size=c, replace=False)) for _ in range(N)]) \
        if N else np.zeros((0, c), dtype=np.int64)
    learners = [bandit.init_state(config.d, config.lam, config.refactor_every) for _ in range(N)]
    history = DemandHistory(F, N, T)

    cached = np.zeros((T, N, c), dtype=np.int64)
    scores_log = np.zeros((T, N, F)) if record_scores else None
    eta_seen = 0.0
    for t in range(1, T + 1):
        for n in range(N):
            X = fmap(history, n, t)
            if config.eta is not None:
                X = cap_norm(X, config.eta)
            if X.size:
                eta_seen = max(eta_seen, float(np.sqrt(np.max(np.einsum("ij,ij->i", X, X)))))
            scores = bandit.score_all(learners[n], X, t, F, config.zeta, config.lam,
                                      policy=policy, rng=policy_rng)
            chosen = bandit.select_top_c(scores, c)
            cached[t - 1, n] = chosen
            if record_scores:
                scores_log[t - 1, n] = scores.ucb
            demand = trace.demands[:, n, t - 1]
            state = learners[n]
            for f in chosen:
                if observer is not None:
                    observer(t, n, state, X[f], float(demand[f]))
                bandit.update(state, X[f], float(demand[f]))
            if config.strict_bandit:
                mask = np.zeros(F, dtype=bool)
                mask[chosen] = True
            else:
                mask = None
            history.record_slot(n, t, demand, mask, allow_negative=trace.signed)

    report = _assemble(config, trace, policy, seed, initial, cached)
    report.eta = eta_seen
    report.scores = scores_log
    report.wall_clock = time.perf_counter() - started
    return report


def replay(config: SimConfig, trace: Trace, cached: np.ndarray, label: str,
           seed: Optional[int] = None) -> RunReport:
    """Score a fixed placement: ``(T, N, c)`` per slot or ``(N, c)`` for every slot."""
    started = time.perf_counter()
    _check_dims(config, trace)
    cached = np.asarray(cached, dtype=np.int64)
    if cached.ndim == 2:
        cached = np.broadcast_to(cached, (config.T,) + cached.shape)
    if cached.shape != (config.T, config.N, config.c):
        raise ValueError(f"placement shape {cached.shape} != {(config.T, config.N, config.c)}")
    cached = np.sort(cached, axis=-1)
    seed = config.seed if seed is None else seed
    initial = cached[0] if config.T else np.zeros((config.N, config.c), dtype=np.int64)
    report = _assemble(config, trace, label, seed, initial, cached)
    report.wall_clock = time.perf_counter() - started
    return report


def _assemble(config, trace, policy, seed, initial, cached) -> RunReport:
    oracle_sets = hindsight_per_slot(trace, config.c)
    static_sets = np.broadcast_to(hindsight_static(trace, config.c), oracle_sets.shape)
    return RunReport(
        config=config.to_dict(),
        policy=policy,
        seed=int(seed),
        initial_cache=np.asarray(initial),
        cached=np.ascontiguousarray(cached),
        hits=set_hits(trace, cached),
        oracle_hits=set_hits(trace, oracle_sets),
        static_oracle_hits=set_hits(trace, static_sets),
    )
