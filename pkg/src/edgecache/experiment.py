"""Experiment configuration, presets and workload construction for the CLI."""
from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .core import POLICIES, ConfigError, SimConfig
from .workload import (SyntheticSpec, SyntheticWorkload, Trace, ZipfSpec, derive_node_traces,
                       gen_synthetic, gen_zipf_trace, greedy_trap_workload, load_trace)

ORACLES = ("hindsight_per_slot", "hindsight_static")
ALL_POLICIES = POLICIES + ORACLES
WORKLOAD_KINDS = ("trace", "synthetic", "zipf")

_SIM_FIELDS = ("F", "N", "c", "T", "d", "lam", "zeta", "window", "eta", "strict_bandit",
               "refactor_every")
_TOP_FIELDS = set(_SIM_FIELDS) | {"policies", "seeds", "workload", "output_dir", "checkpoints",
                                  "verify"}

_WORKLOAD_KEYS = {
    "trace": {"kind", "path", "shifts"},
    "synthetic": {"kind", "x_max", "sigma", "clamp_at_zero", "theta_star", "adversarial"},
    "zipf": {"kind", "s", "scale", "drift_period", "shifts"},
}

DEFAULT_VERIFY = {
    "deltas": [0.5, 1.0, 2.0, 10.0],
    "coverage_T": 1000,
    "coverage_seeds": 3,
    "slope_policy": "ucb",
    "slope_ratio": 0.5,
}


@dataclass
class ExperimentConfig:
    """A sweep: every policy in ``policies`` runs once per seed in ``seeds``.

    ``zeta`` may be ``"auto"`` for synthetic workloads, meaning the largest
    ground-truth parameter norm of the generated workload.
    """

    F: int
    N: int
    c: int
    T: int
    workload: dict
    policies: list = field(default_factory=lambda: ["ucb"])
    seeds: list = field(default_factory=lambda: [0])
    d: int = 5
    lam: float = 1.0
    zeta: Union[float, str] = 1.0
    window: Optional[int] = None
    eta: Optional[float] = None
    strict_bandit: bool = False
    refactor_every: int = 1000
    output_dir: str = "runs"
    checkpoints: list = field(default_factory=list)
    verify: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config", "must be a JSON object")
        unknown = sorted(set(raw) - _TOP_FIELDS)
        if unknown:
            raise ConfigError(unknown[0], "unknown field")
        if "workload" not in raw or raw["workload"] is None:
            raise ConfigError("workload", "required")
        for name in ("F", "N", "c", "T"):
            if name not in raw:
                raise ConfigError(name, "required")
        cfg = cls(**copy.deepcopy(raw))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON: {exc}") from None
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> None:
        if not self.policies:
            raise ConfigError("policies", "at least one policy required")
        for p in self.policies:
            if p not in ALL_POLICIES:
                raise ConfigError("policies", f"unknown policy {p!r}")
        if not self.seeds:
            raise ConfigError("seeds", "at least one seed required")
        if not all(isinstance(s, int) and s >= 0 for s in self.seeds):
            raise ConfigError("seeds", "seeds must be non-negative integers")
        wl = self.workload
        if not isinstance(wl, dict):
            raise ConfigError("workload", "must be an object")
        kind = wl.get("kind")
        if kind not in WORKLOAD_KINDS:
            raise ConfigError("workload.kind", f"must be one of {', '.join(WORKLOAD_KINDS)}")
        extra = sorted(set(wl) - _WORKLOAD_KEYS[kind])
        if extra:
            raise ConfigError(f"workload.{extra[0]}", "unknown field")
        if kind == "trace" and not wl.get("path"):
            raise ConfigError("workload.path", "required for trace workloads")
        if "shifts" in wl and wl["shifts"] is not None and len(wl["shifts"]) != self.N:
            raise ConfigError("workload.shifts", f"need exactly N={self.N} shifts")
        if kind == "zipf" and wl.get("shifts") is not None:
            if any(not isinstance(k, int) or abs(k) > self.T for k in wl["shifts"]):
                raise ConfigError("workload.shifts", f"shifts must be integers in [-T, T] with T={self.T}")
        if kind == "trace" and wl.get("shifts") is None and self.N != 1:
            raise ConfigError("workload.shifts", "trace workloads with N > 1 need per-node shifts")
        try:
            if kind == "synthetic":
                self.synthetic_spec()
            elif kind == "zipf":
                self.zipf_spec()
        except (TypeError, ValueError) as exc:
            raise ConfigError("workload", str(exc)) from None
        if self.zeta == "auto":
            if kind != "synthetic":
                raise ConfigError("zeta", "'auto' needs a synthetic workload")
        elif not isinstance(self.zeta, (int, float)) or not self.zeta > 0:
            raise ConfigError("zeta", "must be > 0 or 'auto'")
        for t in self.checkpoints:
            if not isinstance(t, int) or not 1 <= t <= self.T:
                raise ConfigError("checkpoints", f"checkpoint {t!r} outside [1, T={self.T}]")
        unknown_v = sorted(set(self.verify) - set(DEFAULT_VERIFY))
        if unknown_v:
            raise ConfigError(f"verify.{unknown_v[0]}", "unknown field")
        # surfaces the SimConfig field checks under their own names
        self.sim_config(zeta=1.0 if self.zeta == "auto" else self.zeta)

    def sim_config(self, seed: int = 0, policy: str = "ucb", zeta: Optional[float] = None) -> SimConfig:
        values = {name: getattr(self, name) for name in _SIM_FIELDS}
        values["zeta"] = float(zeta if zeta is not None else values["zeta"])
        return SimConfig(**values, policy=policy if policy in POLICIES else "ucb",
                         source=self.workload["kind"], seed=seed)

    def synthetic_spec(self) -> SyntheticSpec:
        wl = self.workload
        theta = wl.get("theta_star")
        return SyntheticSpec(
            d=self.d,
            x_max=float(wl.get("x_max", 10.0)),
            sigma=float(wl.get("sigma", 0.5)),
            clamp_at_zero=bool(wl.get("clamp_at_zero", True)),
            theta_star=tuple(map(tuple, np.atleast_2d(theta).tolist())) if theta is not None else None,
        )

    def zipf_spec(self) -> ZipfSpec:
        wl = self.workload
        return ZipfSpec(s=float(wl.get("s", 1.0)), scale=float(wl.get("scale", 20.0)),
                        drift_period=wl.get("drift_period"))

    def verify_settings(self) -> dict:
        return {**DEFAULT_VERIFY, **self.verify}


@dataclass
class Workload:
    trace: Trace
    features: Optional[np.ndarray] = None
    synthetic: Optional[SyntheticWorkload] = None

    @property
    def zeta(self) -> Optional[float]:
        return self.synthetic.zeta if self.synthetic is not None else None


def build_workload(cfg: ExperimentConfig, seed: int, T: Optional[int] = None,
                   clamp: Optional[bool] = None) -> Workload:
    """Materialise the configured workload; generated workloads are seeded by ``seed``."""
    T = cfg.T if T is None else T
    wl = cfg.workload
    kind = wl["kind"]
    if kind == "trace":
        base = load_trace(wl["path"])
        trace = derive_node_traces(base, wl["shifts"]) if wl.get("shifts") is not None else base
        if trace.T < T:
            raise ConfigError("T", f"trace has only {trace.T} slots")
        trace = Trace(trace.demands[:, :, :T], source=trace.source)
        return Workload(trace)
    if kind == "zipf":
        spec = cfg.zipf_spec()
        if wl.get("shifts") is not None:
            base = gen_zipf_trace(spec, cfg.F, 1, T, seed)
            return Workload(derive_node_traces(base, wl["shifts"]))
        return Workload(gen_zipf_trace(spec, cfg.F, cfg.N, T, seed))
    spec = cfg.synthetic_spec()
    if clamp is not None:
        spec = SyntheticSpec(**{**asdict(spec), "clamp_at_zero": clamp})
    if wl.get("adversarial"):
        syn = greedy_trap_workload(spec, cfg.F, cfg.N, T, cfg.c, seed)
    else:
        syn = gen_synthetic(spec, cfg.F, cfg.N, T, seed)
    return Workload(syn.trace, syn.features, syn)


def resolve_zeta(cfg: ExperimentConfig, workload: Workload) -> float:
    if cfg.zeta == "auto":
        return workload.zeta
    return float(cfg.zeta)


PRESETS = {
    # 100 videos on 3 edge nodes over four years of daily slots; nodes see
    # the same popularity process shifted four months apart
    "fig3": {
        "F": 100, "N": 3, "c": 10, "T": 1460, "d": 5, "lam": 1.0, "zeta": 1.0,
        "policies": ["ucb", "ridge_greedy", "random", "hindsight_per_slot", "hindsight_static"],
        "seeds": list(range(10)),
        "workload": {"kind": "zipf", "s": 1.0, "scale": 20.0, "drift_period": 90,
                     "shifts": [0, 120, -120]},
        "output_dir": "runs/fig3",
    },
    "synthetic": {
        "F": 50, "N": 3, "c": 5, "T": 5000, "d": 5, "lam": 1.0, "zeta": "auto",
        "policies": ["ucb", "ridge_greedy", "random", "hindsight_per_slot"],
        "seeds": list(range(20)),
        "workload": {"kind": "synthetic", "x_max": 10.0, "sigma": 0.5},
        "checkpoints": [500, 5000],
        "output_dir": "runs/synthetic",
    },
}


def preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError("preset", f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return copy.deepcopy(PRESETS[name])
