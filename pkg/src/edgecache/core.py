"""Domain types shared across the simulator and demand-window feature maps."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Protocol

import numpy as np

POLICIES = ("ucb", "ridge_greedy", "random")


class ConfigError(ValueError):
    """Raised when a configuration violates a field-level constraint."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


@dataclass(frozen=True)
class SimConfig:
    """Parameters of a single simulation run.

    ``window`` is the demand-window length of the default feature map and
    must equal ``d`` whenever that map is used. ``eta`` enables norm capping
    of feature vectors when set. ``strict_bandit`` hides the demand of
    uncached files from the feature history.
    """

    F: int
    N: int
    c: int
    T: int
    d: int = 5
    lam: float = 1.0
    zeta: float = 1.0
    window: Optional[int] = None
    policy: str = "ucb"
    source: str = "trace"
    seed: int = 0
    eta: Optional[float] = None
    strict_bandit: bool = False
    refactor_every: int = 1000

    def __post_init__(self):
        if self.window is None:
            object.__setattr__(self, "window", self.d)
        for name in ("F", "N", "d", "window", "refactor_every"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(name, f"must be a positive integer, got {value!r}")
        for name in ("c", "T"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 0:
                raise ConfigError(name, f"must be a non-negative integer, got {value!r}")
        if self.c > self.F:
            raise ConfigError("c", f"cache size {self.c} exceeds catalog size {self.F}")
        if not self.lam > 0:
            raise ConfigError("lam", "must be > 0")
        if not self.zeta > 0:
            raise ConfigError("zeta", "must be > 0")
        if self.eta is not None and not self.eta > 0:
            raise ConfigError("eta", "must be > 0 when set")
        if self.policy not in POLICIES:
            raise ConfigError("policy", f"unknown policy {self.policy!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **changes) -> "SimConfig":
        return SimConfig(**{**asdict(self), **changes})


class DemandHistory:
    """Append-only per-(file, node) log of observed demand.

    Storage is dense: ``values[f, n, slot]`` holds the observation or 0 when
    nothing was observed, so window features can be sliced directly.
    """

    def __init__(self, F: int, N: int, T: int):
        self.F, self.N, self.T = F, N, T
        self.values = np.zeros((F, N, T + 1))
        self.observed = np.zeros((F, N, T + 1), dtype=bool)
        self.last_slot = np.zeros((F, N), dtype=np.int64)

    def record(self, f: int, n: int, slot: int, demand: float) -> None:
        if not 1 <= slot <= self.T:
            raise ValueError(f"slot {slot} outside [1, {self.T}]")
        if slot <= self.last_slot[f, n]:
            raise ValueError(
                f"slot {slot} not after last observed slot {self.last_slot[f, n]} "
                f"for file {f} node {n}")
        if not demand >= 0:
            raise ValueError(f"negative demand {demand}")
        self.values[f, n, slot] = demand
        self.observed[f, n, slot] = True
        self.last_slot[f, n] = slot

    def record_slot(self, n: int, slot: int, demands: np.ndarray,
                    mask: Optional[np.ndarray] = None, allow_negative: bool = False) -> None:
        """Record one slot of demand at node ``n`` for every file in ``mask``."""
        if not 1 <= slot <= self.T:
            raise ValueError(f"slot {slot} outside [1, {self.T}]")
        if mask is None:
            mask = np.ones(self.F, dtype=bool)
        if np.any(self.last_slot[mask, n] >= slot):
            raise ValueError(f"slot {slot} already recorded at node {n}")
        demands = np.asarray(demands, dtype=float)
        if not allow_negative and np.any(demands[mask] < 0):
            raise ValueError("negative demand")
        self.values[mask, n, slot] = demands[mask]
        self.observed[mask, n, slot] = True
        self.last_slot[mask, n] = slot

    def entries(self, f: int, n: int) -> list[tuple[int, float]]:
        slots = np.flatnonzero(self.observed[f, n])
        return [(int(s), float(self.values[f, n, s])) for s in slots]

    def window(self, n: int, t: int, w: int) -> np.ndarray:
        """Demand of every file at node ``n`` in slots t-1, t-2, ..., t-w.

        Returns an ``(F, w)`` array, most recent slot first, zero where the
        slot precedes the run or carries no observation.
        """
        out = np.zeros((self.F, w))
        hi = min(t - 1, self.T)
        lo = max(1, t - w)
        if hi >= lo:
            # column k holds slot t-1-k
            block = self.values[:, n, lo:hi + 1][:, ::-1]
            start = t - 1 - hi
            out[:, start:start + block.shape[1]] = block
        return out


def extract_features(history: DemandHistory, f: int, n: int, t: int, w: int) -> np.ndarray:
    """Demand-window feature vector of file ``f`` at node ``n`` before slot ``t``."""
    if t < 1:
        raise ValueError("t must be >= 1")
    x = np.zeros(w)
    for k in range(w):
        slot = t - 1 - k
        if 1 <= slot <= history.T and history.observed[f, n, slot]:
            x[k] = history.values[f, n, slot]
    return x


def cap_norm(x: np.ndarray, eta: float) -> np.ndarray:
    """Scale ``x`` (or each row of a 2-D ``x``) onto the ball of radius ``eta``."""
    if not eta > 0:
        raise ValueError("eta must be > 0")
    x = np.asarray(x, dtype=float)
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    scale = np.where(norms > eta, eta / np.where(norms > 0, norms, 1.0), 1.0)
    return x * scale


class FeatureMap(Protocol):
    """Produces the ``(F, d)`` feature matrix for node ``n`` at slot ``t``."""

    dim: int

    def __call__(self, history: DemandHistory, n: int, t: int) -> np.ndarray: ...


@dataclass(frozen=True)
class DemandWindow:
    """Last ``w`` slots of observed demand, most recent first."""

    w: int = 5

    @property
    def dim(self) -> int:
        return self.w

    def __call__(self, history, n, t):
        return history.window(n, t, self.w)


@dataclass(frozen=True)
class WindowMeans:
    """Mean observed demand over several trailing windows (e.g. 1, 5, 30 slots)."""

    windows: tuple = (1, 5, 30)

    @property
    def dim(self) -> int:
        return len(self.windows)

    def __call__(self, history, n, t):
        full = history.window(n, t, max(self.windows))
        return np.stack([full[:, :k].mean(axis=1) for k in self.windows], axis=1)


@dataclass
class PrecomputedFeatures:
    """Exogenous features indexed ``[f, n, t-1, :]``; history is ignored."""

    tensor: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.tensor.shape[-1]

    def __call__(self, history, n, t):
        return self.tensor[:, n, t - 1, :]
