"""Command-line entry point: ``run``, ``verify`` and ``gen-trace``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import engine, verify
from .core import ConfigError
from .experiment import ORACLES, ExperimentConfig, build_workload, preset, resolve_zeta
from .workload import SyntheticSpec, ZipfSpec, derive_node_traces, gen_synthetic, gen_zipf_trace, save_trace

log = logging.getLogger("edgecache")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def _load_config(args) -> ExperimentConfig:
    raw = preset(args.preset) if getattr(args, "preset", None) else {}
    if args.config:
        try:
            user = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError("config", f"no such file {args.config}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError("config", "must be a JSON object")
        raw.update(user)
    elif not raw:
        raise ConfigError("config", "--config or --preset required")
    for name in ("c", "T"):
        value = getattr(args, name, None)
        if value is not None:
            raw[name] = value
    if getattr(args, "out", None):
        raw["output_dir"] = args.out
    env_seed = os.environ.get("EBC_SEED")
    if env_seed is not None:
        try:
            first = int(env_seed)
        except ValueError:
            raise ConfigError("EBC_SEED", f"not an integer: {env_seed!r}") from None
        seeds = list(raw.get("seeds") or [0])
        raw["seeds"] = [first] + seeds[1:]
    return ExperimentConfig.from_dict(raw)


def _run_one(cfg_dict: dict, policy: str, seed: int, out_dir: str) -> dict:
    cfg = ExperimentConfig.from_dict(cfg_dict)
    wl = build_workload(cfg, seed)
    zeta = resolve_zeta(cfg, wl)
    sim = cfg.sim_config(seed=seed, policy=policy, zeta=zeta)
    if policy == "hindsight_per_slot":
        report = engine.replay(sim, wl.trace, engine.hindsight_per_slot(wl.trace, cfg.c), policy, seed)
    elif policy == "hindsight_static":
        report = engine.replay(sim, wl.trace, engine.hindsight_static(wl.trace, cfg.c), policy, seed)
    else:
        report = engine.run(sim, wl.trace, policy=policy, seed=seed, features=wl.features)
    stem = Path(out_dir) / f"{policy}_seed{seed}"
    payload = report.to_dict()
    payload["experiment"] = cfg_dict
    stem.with_suffix(".json").write_text(json.dumps(payload), encoding="utf-8")
    stem.with_suffix(".csv").write_text(report.to_csv(), encoding="utf-8")
    return {"policy": policy, "seed": seed, "total_hits": report.total_hits,
            "final_regret": report.final_regret,
            "static_oracle_hits": float(report.static_oracle_hits.sum())}


def _prepare_output(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    probe = out / ".write-test"
    probe.write_text("", encoding="utf-8")
    probe.unlink()
    return out


def cmd_run(args) -> int:
    cfg = _load_config(args)
    try:
        out = _prepare_output(cfg.output_dir)
    except OSError as exc:
        log.error("output directory %s not writable: %s", cfg.output_dir, exc)
        return EXIT_RUNTIME
    cfg_dict = cfg.to_dict()
    (out / "config.json").write_text(json.dumps(cfg_dict, indent=2), encoding="utf-8")
    tasks = [(cfg_dict, p, s, str(out)) for p in cfg.policies for s in cfg.seeds]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_run_one, *zip(*tasks)))
    else:
        rows = [_run_one(*task) for task in tasks]
    summary = []
    for policy in cfg.policies:
        mine = [r for r in rows if r["policy"] == policy]
        summary.append({
            "policy": policy,
            "runs": len(mine),
            "mean_cumulative_hits": float(np.mean([r["total_hits"] for r in mine])),
            "mean_final_regret": float(np.mean([r["final_regret"] for r in mine])),
        })
    with (out / "summary.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(summary[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(summary)
    (out / "summary.json").write_text(json.dumps({"summary": summary, "runs": rows}, indent=2),
                                      encoding="utf-8")
    for row in summary:
        print(f"{row['policy']:<20} hits={row['mean_cumulative_hits']:.1f} "
              f"regret={row['mean_final_regret']:.1f}")
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _load_config(args)
    if cfg.workload["kind"] != "synthetic":
        raise ConfigError("workload", "verification requires ground truth")
    settings = cfg.verify_settings()
    if settings["slope_policy"] in ORACLES:
        raise ConfigError("verify.slope_policy", "must be a learning policy")
    try:
        out = _prepare_output(cfg.output_dir)
    except OSError as exc:
        log.error("output directory %s not writable: %s", cfg.output_dir, exc)
        return EXIT_RUNTIME

    parts = []
    cov_T = min(int(settings["coverage_T"]), cfg.T)
    for k in range(int(settings["coverage_seeds"])):
        seed = cfg.seeds[k % len(cfg.seeds)] + 1000 * (k // len(cfg.seeds))
        wl = build_workload(cfg, seed, T=cov_T, clamp=False)
        zeta = resolve_zeta(cfg, wl)
        if zeta < wl.zeta:
            raise ConfigError("zeta", f"{zeta} is below the ground-truth norm {wl.zeta:.4f}")
        sim = cfg.sim_config(seed=seed, zeta=zeta).replace(T=cov_T)
        parts.append(verify.coverage_samples(sim, wl.synthetic, seed))
    samples = verify.CoverageSamples.concat(parts)
    coverage = [verify.lemma1_coverage(samples, float(d)) for d in settings["deltas"]]

    checkpoints = cfg.checkpoints or [max(1, cfg.T // 10), cfg.T]
    reports = []
    for seed in cfg.seeds:
        wl = build_workload(cfg, seed)
        sim = cfg.sim_config(seed=seed, zeta=resolve_zeta(cfg, wl))
        reports.append(engine.run(sim, wl.trace, policy=settings["slope_policy"], seed=seed,
                                  features=wl.features))
    slope = verify.regret_slope_check(reports, checkpoints, min_seeds=1)
    slope_ok = slope.shrinks_by(float(settings["slope_ratio"]))

    text = verify.report_json(coverage, slope, slope_policy=settings["slope_policy"],
                              slope_ratio=settings["slope_ratio"], slope_passed=slope_ok,
                              seeds=cfg.seeds)
    (out / "verify_report.json").write_text(text, encoding="utf-8")
    ok = slope_ok and all(r.passed for r in coverage)
    for r in coverage:
        print(f"coverage delta={r.delta:g}: {r.violations}/{r.trials} rate={r.rate:.5f} "
              f"bound={r.bound:.5f} {'PASS' if r.passed else 'FAIL'}")
    print(f"slope {settings['slope_policy']}: R/t {slope.first:.4f} -> {slope.last:.4f} "
          f"{'PASS' if slope_ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_RUNTIME


def cmd_gen_trace(args) -> int:
    try:
        spec = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError("spec", f"no such file {args.spec}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("spec", f"invalid JSON: {exc}") from None
    if not isinstance(spec, dict):
        raise ConfigError("spec", "must be a JSON object")
    kind = spec.get("kind")
    for name in ("F", "T"):
        if not isinstance(spec.get(name), int) or spec[name] < 1:
            raise ConfigError(name, "required positive integer")
    F, T, N = spec["F"], spec["T"], spec.get("N", 1)
    seed = spec.get("seed", 0)
    if not isinstance(N, int) or N < 1:
        raise ConfigError("N", "must be a positive integer")
    out = Path(args.out)
    try:
        if kind == "zipf":
            zs = ZipfSpec(s=float(spec.get("s", 1.0)), scale=float(spec.get("scale", 20.0)),
                          drift_period=spec.get("drift_period"))
            shifts = spec.get("shifts")
            if shifts is not None:
                trace = derive_node_traces(gen_zipf_trace(zs, F, 1, T, seed), shifts)
            else:
                trace = gen_zipf_trace(zs, F, N, T, seed)
            save_trace(trace, out)
        elif kind == "synthetic":
            ss = SyntheticSpec(d=int(spec.get("d", 5)), x_max=float(spec.get("x_max", 10.0)),
                               sigma=float(spec.get("sigma", 0.5)),
                               clamp_at_zero=True, theta_star=spec.get("theta_star"))
            wl = gen_synthetic(ss, F, N, T, seed)
            save_trace(wl.trace, out)
            truth = out.with_name(out.stem + ".truth.json")
            truth.write_text(wl.ground_truth_json(), encoding="utf-8")
        else:
            raise ConfigError("kind", "must be 'zipf' or 'synthetic'")
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("spec", str(exc)) from None
    print(f"wrote {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="edgecache", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a policy x seed sweep")
    p.add_argument("--config")
    p.add_argument("--preset")
    p.add_argument("--c", type=int)
    p.add_argument("--T", type=int)
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="coverage and regret-slope checks on a synthetic workload")
    p.add_argument("--config")
    p.add_argument("--preset")
    p.add_argument("--T", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("gen-trace", help="write a generated trace as CSV")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_trace)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
