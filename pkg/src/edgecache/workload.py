"""Demand tensors: CSV traces, per-node time shifting, synthetic and Zipf generators."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np


class TraceFormatError(ValueError):
    pass


@dataclass
class Trace:
    """Dense demand tensor indexed ``demands[file, node, slot - 1]``."""

    demands: np.ndarray
    source: str = "memory"
    # only unclamped synthetic workloads may carry negative demand
    signed: bool = False

    def __post_init__(self):
        self.demands = np.asarray(self.demands, dtype=float)
        if self.demands.ndim != 3:
            raise ValueError("demands must have shape (F, N, T)")
        if not np.all(np.isfinite(self.demands)):
            raise ValueError("demands must be finite")
        if not self.signed and np.any(self.demands < 0):
            raise ValueError("demands must be non-negative")

    @property
    def F(self) -> int:
        return self.demands.shape[0]

    @property
    def N(self) -> int:
        return self.demands.shape[1]

    @property
    def T(self) -> int:
        return self.demands.shape[2]


@dataclass(frozen=True)
class TraceSchema:
    file_col: str = "file_id"
    slot_col: str = "slot"
    count_col: str = "count"
    # optional: multi-node traces written by gen-trace carry a node column
    node_col: str = "node"


def load_trace(path, schema: TraceSchema = TraceSchema()) -> Trace:
    """Read a ``file_id,slot,count`` CSV (slots 1-based) into a dense trace.

    Missing (file, slot) cells are zero. A ``node`` column, when present,
    yields a multi-node trace; otherwise N = 1.
    """
    path = Path(path)
    records = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise TraceFormatError(f"{path}: no records") from None
        try:
            i_file = header.index(schema.file_col)
            i_slot = header.index(schema.slot_col)
            i_count = header.index(schema.count_col)
        except ValueError:
            raise TraceFormatError(
                f"{path}: header must contain {schema.file_col},{schema.slot_col},"
                f"{schema.count_col}; got {','.join(header)}") from None
        i_node = header.index(schema.node_col) if schema.node_col in header else None
        width = len(header)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != width:
                raise TraceFormatError(f"malformed row at line {lineno}: expected {width} fields")
            try:
                f = int(row[i_file])
                slot = int(row[i_slot])
                node = int(row[i_node]) if i_node is not None else 0
            except ValueError:
                raise TraceFormatError(f"malformed row at line {lineno}: non-integer id") from None
            try:
                count = float(row[i_count])
            except ValueError:
                raise TraceFormatError(f"non-numeric demand at line {lineno}") from None
            if not math.isfinite(count):
                raise TraceFormatError(f"non-finite demand at line {lineno}")
            if count < 0:
                raise TraceFormatError(f"negative demand at line {lineno}")
            if f < 0 or node < 0 or slot < 1:
                raise TraceFormatError(f"malformed row at line {lineno}: id out of range")
            key = (f, node, slot)
            if key in records:
                raise TraceFormatError(f"duplicate (file, slot) ({f}, {slot}) at line {lineno}")
            records[key] = count
    if not records:
        raise TraceFormatError(f"{path}: no records")
    F = 1 + max(k[0] for k in records)
    N = 1 + max(k[1] for k in records)
    T = max(k[2] for k in records)
    demands = np.zeros((F, N, T))
    for (f, n, slot), count in records.items():
        demands[f, n, slot - 1] = count
    return Trace(demands, source=str(path))


def _fmt(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else repr(float(value))


def save_trace(trace: Trace, path) -> None:
    """Write every cell (zeros included) so F and T survive a round trip."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        multi = trace.N > 1
        writer.writerow(["file_id", "node", "slot", "count"] if multi else ["file_id", "slot", "count"])
        for f in range(trace.F):
            for n in range(trace.N):
                for t in range(trace.T):
                    count = _fmt(trace.demands[f, n, t])
                    if multi:
                        writer.writerow([f, n, t + 1, count])
                    else:
                        writer.writerow([f, t + 1, count])


def derive_node_traces(base: Trace, shifts: Sequence[int], N: Optional[int] = None) -> Trace:
    """Emulate N locations by cyclically shifting a single-node trace in time.

    Node ``n`` sees ``base[f, t - shifts[n]]`` (indices mod T), so a shift of
    +1 moves each series one slot later.
    """
    if base.N != 1:
        raise ValueError("base trace must have exactly one node")
    shifts = [int(s) for s in shifts]
    if N is not None and N != len(shifts):
        raise ValueError(f"N={N} but {len(shifts)} shifts given")
    for s in shifts:
        if abs(s) > base.T:
            raise ValueError(f"shift {s} outside [-T, T]")
    series = base.demands[:, 0, :]
    out = np.stack([np.roll(series, s, axis=1) for s in shifts], axis=1)
    return Trace(out, source=f"{base.source}+shift{shifts}", signed=base.signed)


@dataclass(frozen=True)
class SyntheticSpec:
    """Linear-model workload: demand = x^T theta*_n + uniform noise of range sigma.

    Features are i.i.d. uniform on [0, x_max]. ``theta_star`` pins the ground truth (shape ``(N, d)`` or ``(d,)`` shared
    by all nodes); otherwise each node draws theta* uniformly on [0, 1]^d.
    """

    d: int = 5
    x_max: float = 10.0
    sigma: float = 0.5
    clamp_at_zero: bool = True
    theta_star: Optional[tuple] = None

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if not 0 < self.sigma <= 1:
            raise ValueError("sigma must lie in (0, 1]")
        if self.x_max < 0:
            raise ValueError("x_max must be >= 0")


@dataclass
class SyntheticWorkload:
    trace: Trace
    features: np.ndarray = field(repr=False)  # (F, N, T, d)
    theta_star: np.ndarray  # (N, d)
    sigma: float
    seed: int

    @property
    def zeta(self) -> float:
        """Largest ground-truth parameter norm across nodes."""
        return float(np.max(np.linalg.norm(self.theta_star, axis=1)))

    def ground_truth_json(self) -> str:
        return json.dumps({
            "theta_star": self.theta_star.tolist(),
            "sigma": self.sigma,
            "seed": self.seed,
        })


def gen_synthetic(spec: SyntheticSpec, F: int, N: int, T: int, seed: int) -> SyntheticWorkload:
    rng = np.random.default_rng(seed)
    if spec.theta_star is not None:
        theta = np.broadcast_to(np.asarray(spec.theta_star, dtype=float), (N, spec.d)).copy()
    else:
        theta = rng.uniform(0.0, 1.0, size=(N, spec.d))
    x = rng.uniform(0.0, spec.x_max, size=(F, N, T, spec.d))
    noise = rng.uniform(-spec.sigma / 2, spec.sigma / 2, size=(F, N, T))
    demand = np.einsum("fntd,nd->fnt", x, theta) + noise
    if spec.clamp_at_zero:
        demand = np.maximum(demand, 0.0)
    trace = Trace(demand, source=f"synthetic(seed={seed})", signed=not spec.clamp_at_zero)
    return SyntheticWorkload(trace=trace, features=x, theta_star=theta,
                             sigma=spec.sigma, seed=seed)


def greedy_trap_workload(spec: SyntheticSpec, F: int, N: int, T: int, c: int,
                         seed: int) -> SyntheticWorkload:
    """Synthetic workload on which a pure-exploitation learner never leaves the start.

    Files ``0..c-1`` carry zero features and zero demand. A learner with no
    exploration bonus scores every file 0, tie-breaks onto those files,
    learns nothing from their zero features, and pays the full optimum as
    regret every slot.
    """
    wl = gen_synthetic(spec, F, N, T, seed)
    wl.features[:c] = 0.0
    wl.trace.demands[:c] = 0.0
    return wl


@dataclass(frozen=True)
class ZipfSpec:
    """Skewed popularity: the rank-r file expects ``scale * r**-s`` requests per slot.

    Ranks are assigned to files by a seeded permutation, redrawn every
    ``drift_period`` slots when set. Realised counts are Poisson.
    """

    s: float = 1.0
    scale: float = 50.0
    drift_period: Optional[int] = None

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError("exponent s must be > 0")
        if not self.scale > 0:
            raise ValueError("scale must be > 0")
        if self.drift_period is not None and self.drift_period < 1:
            raise ValueError("drift_period must be >= 1")


def zipf_expected(spec: ZipfSpec, F: int) -> np.ndarray:
    """Expected per-slot demand by popularity rank (rank 1 first)."""
    ranks = np.arange(1, F + 1, dtype=float)
    return spec.scale * ranks ** -spec.s


def gen_zipf_trace(spec: ZipfSpec, F: int, N: int, T: int, seed: int) -> Trace:
    """Zipf demand; each node gets its own rank permutation."""
    rng = np.random.default_rng(seed)
    expected_by_rank = zipf_expected(spec, F)
    rates = np.empty((F, N, T))
    period = spec.drift_period or T or 1
    for n in range(N):
        for start in range(0, T, period):
            perm = rng.permutation(F)  # perm[r] = file holding rank r+1
            file_rate = np.empty(F)
            file_rate[perm] = expected_by_rank
            rates[:, n, start:start + period] = file_rate[:, None]
    counts = rng.poisson(rates).astype(float)
    return Trace(counts, source=f"zipf(s={spec.s},seed={seed})")
