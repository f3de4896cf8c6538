"""Per-node linear UCB learner.

Each edge node keeps a ridge-regression state ``V = lam*I + sum x x^T`` and
``h = sum x * demand`` pooled over every file it has cached. Files are
scored by ``x^T theta + alpha_t * sqrt(x^T V^-1 x)`` and the ``c`` best are
cached. The inverse of ``V`` is maintained with Sherman-Morrison updates
and periodically rebuilt from ``V`` to keep round-off in check.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .core import POLICIES

log = logging.getLogger(__name__)

STATE_FORMAT_VERSION = 1
INVERSE_TOL = 1e-8


@dataclass
class NodeLearnerState:
    V: np.ndarray
    V_inv: np.ndarray
    h: np.ndarray
    lam: float
    updates_applied: int = 0
    since_refactor: int = 0
    refactor_every: int = 1000
    # residual of the most recent fresh factorization; raises the drift
    # threshold when V is too ill-conditioned to reach INVERSE_TOL at all
    floor_residual: float = 0.0

    @property
    def d(self) -> int:
        return self.h.shape[0]

    def inverse_residual(self) -> float:
        return float(np.max(np.abs(self.V @ self.V_inv - np.eye(self.d))))

    def refactorize(self) -> None:
        cho = scipy.linalg.cho_factor(self.V, lower=True)
        inv = scipy.linalg.cho_solve(cho, np.eye(self.d))
        self.V_inv = 0.5 * (inv + inv.T)
        self.since_refactor = 0
        self.floor_residual = self.inverse_residual()

    def to_json(self) -> str:
        return json.dumps({
            "version": STATE_FORMAT_VERSION,
            "d": self.d,
            "lam": self.lam,
            "V": self.V.ravel().tolist(),
            "V_inv": self.V_inv.ravel().tolist(),
            "h": self.h.tolist(),
            "updates_applied": self.updates_applied,
            "since_refactor": self.since_refactor,
            "refactor_every": self.refactor_every,
        })

    @classmethod
    def from_json(cls, text: str) -> "NodeLearnerState":
        obj = json.loads(text)
        if obj.get("version") != STATE_FORMAT_VERSION:
            raise ValueError(f"unsupported learner state version {obj.get('version')!r}")
        d = int(obj["d"])
        state = cls(
            V=np.array(obj["V"], dtype=float).reshape(d, d),
            V_inv=np.array(obj["V_inv"], dtype=float).reshape(d, d),
            h=np.array(obj["h"], dtype=float),
            lam=float(obj["lam"]),
            updates_applied=int(obj["updates_applied"]),
            since_refactor=int(obj["since_refactor"]),
            refactor_every=int(obj["refactor_every"]),
        )
        state.floor_residual = state.inverse_residual()
        return state


def init_state(d: int, lam: float, refactor_every: int = 1000) -> NodeLearnerState:
    if d < 1:
        raise ValueError("d must be >= 1")
    if not lam > 0:
        raise ValueError(f"lam must be > 0, got {lam}")
    return NodeLearnerState(
        V=lam * np.eye(d),
        V_inv=np.eye(d) / lam,
        h=np.zeros(d),
        lam=float(lam),
        refactor_every=refactor_every,
    )


def estimate_theta(s: NodeLearnerState) -> np.ndarray:
    return s.V_inv @ s.h


def _check_dim(s: NodeLearnerState, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != s.d:
        raise ValueError(f"feature dimension {x.shape[-1]} != learner dimension {s.d}")
    return x


def predict(s: NodeLearnerState, x: np.ndarray):
    """Point prediction ``x^T theta``; accepts one vector or an ``(F, d)`` matrix."""
    x = _check_dim(s, x)
    return x @ estimate_theta(s)


def alpha(t: int, F: int, zeta: float, lam: float) -> float:
    """Exploration coefficient ``sqrt(ln(t * sqrt(F))) + zeta * lam``."""
    if t < 1 or F < 1:
        raise ValueError("t and F must be >= 1")
    return math.sqrt(max(0.0, math.log(t * math.sqrt(F)))) + zeta * lam


def perturbation(s: NodeLearnerState, x: np.ndarray, alpha_t: float):
    """Confidence width ``alpha_t * sqrt(x^T V^-1 x)`` for one or many vectors."""
    if alpha_t < 0:
        raise ValueError("alpha_t must be >= 0")
    x = _check_dim(s, x)
    quad = np.einsum("...i,ij,...j->...", x, s.V_inv, x)
    return alpha_t * np.sqrt(np.maximum(quad, 0.0))


@dataclass(frozen=True)
class Score:
    file: int
    predicted: float
    width: float
    ucb: float


@dataclass
class Scores:
    """Vectorised scores for a whole catalog; indexing yields a :class:`Score`."""

    predicted: np.ndarray
    width: np.ndarray
    ucb: np.ndarray

    def __len__(self):
        return len(self.ucb)

    def __getitem__(self, f: int) -> Score:
        return Score(int(f), float(self.predicted[f]), float(self.width[f]), float(self.ucb[f]))


def score_all(s: NodeLearnerState, features: np.ndarray, t: int, F: int, zeta: float,
              lam: float, policy: str = "ucb",
              rng: Optional[np.random.Generator] = None) -> Scores:
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}")
    features = _check_dim(s, features)
    if policy == "random":
        if rng is None:
            raise ValueError("random policy needs a generator")
        draws = rng.random(features.shape[0])
        zeros = np.zeros_like(draws)
        return Scores(predicted=zeros, width=zeros.copy(), ucb=draws)
    predicted = predict(s, features)
    # ridge_greedy is the same scorer with the exploration coefficient at 0
    a = alpha(t, F, zeta, lam) if policy == "ucb" else 0.0
    width = perturbation(s, features, a)
    return Scores(predicted=predicted, width=width, ucb=predicted + width)


def select_top_c(scores, c: int) -> np.ndarray:
    """Indices of the ``c`` largest scores, ties to the smaller index, ascending."""
    ucb = scores.ucb if isinstance(scores, Scores) else np.asarray(scores, dtype=float)
    if not 0 <= c <= len(ucb):
        raise ValueError(f"c={c} outside [0, {len(ucb)}]")
    order = np.argsort(-ucb, kind="stable")
    return np.sort(order[:c])


def update(s: NodeLearnerState, x: np.ndarray, observed: float) -> NodeLearnerState:
    """Fold one (feature, demand) observation into ``s`` in place and return it."""
    x = _check_dim(s, x)
    s.updates_applied += 1
    if not np.any(x):
        return s
    s.V += np.outer(x, x)
    s.h += x * observed
    vx = s.V_inv @ x
    s.V_inv -= np.outer(vx, vx) / (1.0 + x @ vx)
    s.since_refactor += 1
    if s.since_refactor >= s.refactor_every:
        s.refactorize()
    else:
        threshold = max(INVERSE_TOL, 10.0 * s.floor_residual)
        if s.inverse_residual() > threshold:
            s.refactorize()
            if s.floor_residual > INVERSE_TOL:
                log.debug("V ill-conditioned: fresh inverse residual %.3g", s.floor_residual)
    return s
