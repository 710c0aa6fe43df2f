"""``nonhyp`` command line.

Exit codes: 0 success, 1 a check failed or a stage errored, 2 config error.
"""
from __future__ import annotations

import argparse
import logging
import sys
import tempfile
from pathlib import Path
from typing import Sequence

from .. import __version__
from .config import ConfigError, ExperimentConfig, resolve
from .manifest import RunManifest, verify_manifest
from .stages import run

log = logging.getLogger("nonhyp")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _p0(text: str) -> list[float]:
    """Comma-separated coordinates, or a CSV file whose first data row is p0."""
    path = Path(text)
    if path.is_file():
        for line in path.read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if line and not line.startswith("#"):
                try:
                    return _float_list(line)
                except argparse.ArgumentTypeError:
                    continue  # header row
        raise argparse.ArgumentTypeError(f"{text}: no numeric row found")
    return _float_list(text)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML config file; flags override its keys")
    p.add_argument("--seed", type=int, dest="seed")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--workers", type=int, help="worker threads (capped by $NONHYP_THREADS)")
    p.add_argument("-v", "--verbose", action="store_true")


def _region(p: argparse.ArgumentParser) -> None:
    p.add_argument("--map", help="map file (YAML) or builtin:<name>")
    p.add_argument("--deltas", type=_float_list, help="region deltas, comma separated")
    p.add_argument("--K", type=float, dest="K")
    p.add_argument("--alpha", type=float)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nonhyp", description="Shadowing, horseshoe and tangency experiments.")
    ap.add_argument("--version", action="version", version=f"nonhyp {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("shadow", help="shadowing success statistics")
    _common(p)
    _region(p)
    p.add_argument("--p0", type=_p0, help="start point 'x1,x2,...' or a CSV file")
    p.add_argument("--steps", type=int)
    p.add_argument("--d", type=_float_list)
    p.add_argument("--epsilon", type=_float_list)
    p.add_argument("--trials", type=int)
    p.add_argument("--noise")
    p.add_argument("--out", help="report path (.csv table or .json)")

    p = sub.add_parser("conditions", help="Lyapunov-pair condition suite")
    _common(p)
    _region(p)
    p.add_argument("--samples", type=int)
    p.add_argument("--out")

    p = sub.add_parser("horseshoe", help="disks, coding, periodic points, inclination")
    _common(p)
    p.add_argument("--system", help="builtin or a system file")
    p.add_argument("--words", help="comma-separated 0/1 words")
    p.add_argument("--auto-k", action="store_true", default=None, dest="auto_k")
    p.add_argument("--trials", type=int)
    p.add_argument("--out")

    p = sub.add_parser("tangency", help="flatten a quasitransverse tangency")
    _common(p)
    p.add_argument("--B", dest="B", help="stable block, number or matrix literal")
    p.add_argument("--C", dest="C", help="center block, number or matrix literal")
    p.add_argument("--g", help="tangency function, expression in x1")
    p.add_argument("--delta", help="modulus override, expression in x1")
    p.add_argument("--radii", type=_float_list)
    p.add_argument("--out")

    p = sub.add_parser("all", help="every stage into one output directory")
    _common(p)
    _region(p)

    p = sub.add_parser("verify", help="recompute output digests recorded in a manifest")
    p.add_argument("manifest", help="manifest.json or the directory holding it")
    p.add_argument("--rerun", action="store_true", help="also re-run the recorded config and compare outputs")
    p.add_argument("--workers", type=int)
    p.add_argument("-v", "--verbose", action="store_true")
    return ap


# flag name -> dotted config key
_OVERRIDES = {
    "seed": "seed", "output_dir": "output_dir", "workers": "workers", "out": "out", "map": "map",
    "deltas": "region.deltas", "K": "region.K", "alpha": "region.alpha",
    "p0": "shadow.p0", "steps": "shadow.steps", "d": "shadow.d", "epsilon": "shadow.epsilon", "noise": "shadow.noise",
    "samples": "conditions.samples",
    "system": "horseshoe.system", "words": "horseshoe.words", "auto_k": "horseshoe.auto_k",
    "B": "tangency.B", "C": "tangency.C", "g": "tangency.g", "delta": "tangency.delta", "radii": "tangency.radii",
}


def overrides_from_args(args: argparse.Namespace) -> dict:
    out = {"subcommand": args.command}
    for name, key in _OVERRIDES.items():
        val = getattr(args, name, None)
        if val is not None:
            out[key] = val
    if getattr(args, "trials", None) is not None:
        out["horseshoe.trials" if args.command == "horseshoe" else "shadow.trials"] = args.trials
    return out


def _verify(args: argparse.Namespace) -> int:
    try:
        manifest = RunManifest.load(args.manifest)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: cannot load manifest: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    rep = verify_manifest(manifest)
    for line in rep.lines():
        print(line)
    clean = rep.clean
    if args.rerun:
        cfg = ExperimentConfig.from_dict(manifest.config)
        with tempfile.TemporaryDirectory() as tmp:
            cfg.output_dir = tmp
            if cfg.out is not None:
                cfg.out = str(Path(tmp) / Path(cfg.out).name)
            fresh = run(cfg, args.workers)
            for stage, st in manifest.stages.items():
                new = fresh.stages.get(stage)
                old_d = [manifest.digests.get(k) for k in st.outputs]
                new_d = [fresh.digests.get(k) for k in new.outputs] if new else []
                same = old_d == new_d
                clean &= same
                print(f"RERUN    {stage}: {'identical' if same else 'DIFFERS'}")
    print("verify: clean" if clean else "verify: TAMPERED OR NOT REPRODUCIBLE")
    return EXIT_OK if clean else EXIT_FAIL


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "verify":
        return _verify(args)
    try:
        cfg = resolve(args.config, overrides_from_args(args))
        manifest = run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for name, st in manifest.stages.items():
        line = f"{name}: {st.status}"
        if st.error:
            line += f" ({st.error})"
        print(line)
    print(f"manifest: {manifest.root / 'manifest.json'}")
    return manifest.exit_code


if __name__ == "__main__":
    sys.exit(main())
