"""Stage runners behind the CLI, and the plot-ready CSV emitter.

Every stage returns a :class:`StageOutput`; files are written by the caller
through the atomic writers in :mod:`nonhyp.io`, so no timings or other
run-dependent values ever reach an output file.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..horseshoe import load_system, run_horseshoe
from ..io import write_csv, write_json
from ..lyapunov import LyapunovPair, RegionSpec, condition_suite
from ..maps import Box, DomainError, MapSystem, builtin_map, load_map_file
from ..parallel import pmap
from ..seeding import stream
from ..shadowing import (
    RESIDUAL_TOL,
    SHADOW_HEADER,
    ShadowExperiment,
    ShadowRow,
    find_shadow_point,
    generate_pseudotrajectory,
    shadowing_experiment,
)
from ..tangency import quasitransverse_pipeline
from ..tangency.pipeline import compile_scalar
from .config import ConfigError, ExperimentConfig
from .manifest import RunManifest, StageStatus

STAGE_ORDER = ("conditions", "shadow", "horseshoe", "tangency")
DEFAULT_NAMES = {
    "conditions": "conditions.json",
    "shadow": "shadow.csv",
    "horseshoe": "horseshoe.json",
    "tangency": "tangency.json",
}
PLOT_DIR = "plots"

# documented plot-data schemas: file name -> column headers
PLOT_SCHEMAS = {
    "condition_margins.csv": ["condition", "delta", "margin"],
    "lambda_trace.csv": ["m", "lambda", "bound", "orbit"],
    "disks.csv": ["z", "eta", "word"],
    "coding.csv": ["lead", "k", "dist1", "log2_dist1"],
    "flatness.csv": ["radius", "jac_gap", "tau_max", "tau_min"],
    "delta0.csv": ["xi", "delta", "log_delta0", "log_t"],
    "shadow_rates.csv": ["epsilon", "d", "success_rate"],
}


@dataclass
class StageOutput:
    passed: bool
    report: dict
    files: list[Path] = field(default_factory=list)


# --------------------------------------------------------------------------
# preparation: anything that depends only on the config is resolved here so
# that problems surface as config errors (exit 2) before any stage runs


def load_map(spec: str) -> MapSystem:
    try:
        if spec.startswith("builtin:"):
            return builtin_map(spec.split(":", 1)[1])
        return load_map_file(spec)
    except OSError as exc:
        raise ConfigError("map", f"cannot read map file {spec}: {exc.strerror}") from None
    except (ValueError, KeyError) as exc:
        raise ConfigError("map", str(exc)) from None


def region_specs(cfg: ExperimentConfig) -> list[RegionSpec]:
    r = cfg.region
    box = Box.from_intervals(r.calN)
    try:
        return [RegionSpec(delta=d, K=r.K, calN=box, alpha=r.alpha, delta1=r.delta1) for d in r.deltas]
    except ValueError as exc:
        raise ConfigError("region", str(exc)) from None


def lyapunov_pair(cfg: ExperimentConfig, sys: MapSystem) -> LyapunovPair:
    c = cfg.conditions
    try:
        if c.W is not None:
            return LyapunovPair.user(sys.dimension, c.W, c.V)
        return LyapunovPair.for_map(sys)
    except ValueError as exc:
        raise ConfigError("conditions.W" if c.W is not None else "map", str(exc)) from None


def prepare(cfg: ExperimentConfig, stages: tuple[str, ...]) -> dict:
    """Validate map files, systems and expressions without running anything."""
    ctx: dict = {}
    if {"shadow", "conditions"} & set(stages):
        ctx["map"] = load_map(cfg.map)
        if len(cfg.region.calN) != ctx["map"].dimension:
            raise ConfigError("region.calN", f"has {len(cfg.region.calN)} intervals, map dimension is {ctx['map'].dimension}")
        ctx["regions"] = region_specs(cfg)
        if cfg.shadow.p0 is not None and len(cfg.shadow.p0) != ctx["map"].dimension:
            raise ConfigError("shadow.p0", f"has {len(cfg.shadow.p0)} coordinates, map dimension is {ctx['map'].dimension}")
    if "conditions" in stages:
        ctx["pair"] = lyapunov_pair(cfg, ctx["map"])
    if "horseshoe" in stages:
        try:
            ctx["system"] = load_system(cfg.horseshoe.system)
        except OSError as exc:
            raise ConfigError("horseshoe.system", f"cannot read system file: {exc.strerror}") from None
        except (ValueError, KeyError) as exc:
            raise ConfigError("horseshoe.system", str(exc)) from None
    if "tangency" in stages:
        t = cfg.tangency
        for key, src in (("tangency.g", t.g), ("tangency.delta", t.delta)):
            if src is None:
                continue
            try:
                compile_scalar(src)
            except ValueError as exc:
                raise ConfigError(key, str(exc)) from None
    return ctx


# --------------------------------------------------------------------------
# stages


def run_conditions(cfg: ExperimentConfig, ctx: dict, workers: int | None) -> StageOutput:
    c = cfg.conditions
    report = condition_suite(ctx["map"], ctx["pair"], ctx["regions"], epsilon=c.epsilon, samples_per_set=c.samples,
                             seed=cfg.seed)
    return StageOutput(report.passed, report.to_dict())


def _p0_trials(sys: MapSystem, cfg: ExperimentConfig, box: Box, workers: int | None) -> ShadowExperiment:
    """Trials started at the configured p0; an escaping pseudotrajectory
    counts as a failed trial."""
    s = cfg.shadow
    rows: list[ShadowRow] = []
    largest: dict[float, float | None] = {float(e): None for e in s.epsilon}
    for d in sorted(s.d):
        def one(i: int, d=d):
            sub = int(stream(cfg.seed, f"shadow.p0.d{d!r}", i).integers(0, 2**31 - 1))
            try:
                traj = generate_pseudotrajectory(sys, s.p0, s.steps, d, s.noise, sub, domain=box)
            except DomainError:
                return np.inf, np.inf, 0
            res = find_shadow_point(sys, traj, np.inf)
            return res.deviation, res.residual, res.iterations

        out = pmap(one, range(s.trials), workers)
        devs = np.array([o[0] for o in out])
        ok = np.array([o[1] < RESIDUAL_TOL for o in out], bool)
        iters = np.array([o[2] for o in out], float)
        for eps in sorted(s.epsilon):
            if not s.trials:
                continue
            succ = float(np.mean(ok & (devs < eps)))
            rows.append(ShadowRow(eps, d, s.trials, succ, float(devs.max()), float(iters.mean()), 0))
            if succ == 1.0:
                largest[eps] = d if largest[eps] is None else max(largest[eps], d)
    rows.sort(key=lambda r: (r.epsilon, r.d))
    return ShadowExperiment(rows, None, largest)


def run_shadow(cfg: ExperimentConfig, ctx: dict, workers: int | None) -> StageOutput:
    s = cfg.shadow
    sys = ctx["map"]
    region = ctx["regions"][0]
    if s.p0 is not None:
        exp = _p0_trials(sys, cfg, region.calN, workers)
    else:
        exp = shadowing_experiment(sys, None, region, s.d, s.epsilon, s.trials, seed=cfg.seed, m=s.steps,
                                   noise_model=s.noise, workers=workers)
    passed = bool(exp.rows) and all(r.success_rate == 1.0 for r in exp.rows)
    report = {"map": sys.name, "steps": s.steps, "noise": s.noise, "p0": s.p0, **exp.to_dict(), "pass": passed}
    return StageOutput(passed, report)


def run_horseshoe_stage(cfg: ExperimentConfig, ctx: dict, workers: int | None) -> StageOutput:
    h = cfg.horseshoe
    report = run_horseshoe(ctx["system"], h.words, h.auto_k, trials=h.trials, seed=cfg.seed, workers=workers,
                           inclination_count=h.inclination_count, inclination_steps=h.inclination_steps, k_max=h.k_max)
    return StageOutput(bool(report["pass"]), report)


def run_tangency(cfg: ExperimentConfig, ctx: dict, workers: int | None) -> StageOutput:
    t = cfg.tangency
    _, report = quasitransverse_pipeline(t.B, t.C, t.g, t.delta, t.radii, rho=t.rho, roundtrip_count=t.roundtrip,
                                         seed=cfg.seed)
    report = {"B": t.B, "C": t.C, "g": t.g, "delta": t.delta, **report}
    return StageOutput(bool(report["pass"]), report)


RUNNERS: dict[str, Callable[[ExperimentConfig, dict, int | None], StageOutput]] = {
    "conditions": run_conditions,
    "shadow": run_shadow,
    "horseshoe": run_horseshoe_stage,
    "tangency": run_tangency,
}


# --------------------------------------------------------------------------
# plot-ready data


def emit_plot_data(kind: str, report: dict, out_dir: str | Path) -> list[Path]:
    """One CSV per figure analog; headers are listed in ``PLOT_SCHEMAS``."""
    out_dir = Path(out_dir)
    files: list[Path] = []

    def emit(name: str, rows: list[list]) -> None:
        files.append(write_csv(out_dir / name, PLOT_SCHEMAS[name], rows))

    if kind == "conditions":
        emit("condition_margins.csv", [[r["name"], r["delta"], r["margin"]] for r in report["conditions"]])
    elif kind == "shadow":
        emit("shadow_rates.csv", [[row[0], row[1], row[3]] for row in report["rows"]])
    elif kind == "horseshoe":
        rows = []
        for i, tr in enumerate(report.get("inclination", [])):
            rows += [[m, lam, b, i] for m, (lam, b) in enumerate(zip(tr["lambda"], tr["bound"]))]
        emit("lambda_trace.csv", rows)
        rows = []
        for w in report.get("words", []):
            if "disk" in w:
                rows += [[z, e, w["word"]] for z, e in zip(w["disk"]["z"], w["disk"]["eta"])]
        emit("disks.csv", rows)
        rows = []
        for fam in report.get("coding", []):
            rows += [[fam["lead"], k, d, float(np.log2(d))] for k, d in zip(fam["k"], fam["dist1"])]
        emit("coding.csv", rows)
    elif kind == "tangency":
        emit("flatness.csv", [[r["radius"], r["jac_gap"], r["tau_max"], r["tau_min"]] for r in report["flatness"]["rows"]])
        tb = report["tables"]
        emit("delta0.csv", [list(r) for r in zip(tb["xi"], tb["delta"], tb["log_delta0"], tb["log_t"])])
    else:
        raise ValueError(f"no plot data for report kind {kind!r}")
    return files


# --------------------------------------------------------------------------
# orchestration


def output_root(cfg: ExperimentConfig) -> Path:
    if cfg.output_dir is not None:
        return Path(cfg.output_dir)
    if cfg.out is not None:
        return Path(cfg.out).parent
    return Path("nonhyp-out")


def _write_main(kind: str, report: dict, path: Path) -> Path:
    if kind == "shadow" and path.suffix.lower() == ".csv":
        return write_csv(path, SHADOW_HEADER, report["rows"])
    return write_json(path, report)


def run(cfg: ExperimentConfig, workers: int | None = None) -> RunManifest:
    """Run the configured stage(s); every stage's outcome lands in the manifest.

    Config problems raise :class:`ConfigError` before anything is written.
    """
    stages = STAGE_ORDER if cfg.subcommand == "all" else (cfg.subcommand,)
    ctx = prepare(cfg, stages)
    root = output_root(cfg)
    root.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(cfg.to_dict(), cfg.seed, root)
    workers = workers if workers is not None else cfg.workers
    for name in stages:
        t0 = time.perf_counter()
        try:
            out = RUNNERS[name](cfg, ctx, workers)
        except Exception as exc:  # noqa: BLE001 - recorded in the manifest, exit 1
            manifest.record(name, StageStatus("error", [], f"{type(exc).__name__}: {exc}", time.perf_counter() - t0))
            continue
        main = Path(cfg.out) if cfg.out is not None else root / DEFAULT_NAMES[name]
        files = [_write_main(name, out.report, main)]
        if name == "shadow" and main.suffix.lower() == ".csv":
            files.append(write_json(main.with_suffix(".json"), out.report))
        files += emit_plot_data(name, out.report, root / PLOT_DIR)
        keys = [manifest.key(f) for f in files]
        manifest.record(name, StageStatus("pass" if out.passed else "fail", keys, None, time.perf_counter() - t0))
    manifest.write()
    return manifest
