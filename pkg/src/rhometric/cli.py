"""Command line entry point: ``rhometric run|spectrum|list``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from pathlib import Path

from . import __version__
from . import theory as th
from .errors import ConfigError, RhoMetricError
from .experiments import EXPERIMENTS, ExperimentConfig, Outcome, get_runner


def _schedule(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


KEY_TYPES = {
    "experiment": str,
    "seed": int,
    "output": str,
    "domain.type": str,
    "density.type": str,
    "density.beta": float,
    "density.lambda": float,
    "density.a": float,
    "density.b": float,
    "density.schedule": _schedule,
    "density.level": int,
    "grid.depth": int,
    "anchors.count": int,
    "anchors.level": int,
    "ladder.r0": float,
    "ladder.factor": float,
    "ladder.count": int,
    "tolerance": float,
    "predicted": float,
    "gap": float,
    "ratio.min": float,
    "ratio.max": float,
    "spectrum.steps": int,
}

# domain and density each experiment is defined on
EXPERIMENT_KINDS = {
    "snowflake-exponent": ("half-plane-window", "power-boundary"),
    "cantor-beta": ("half-plane-window", "power-dist-to-set"),
    "triadic-spectrum": (None, "triadic"),
    "gh-comparison": ("half-plane-window", "triadic"),
    "two-phase-packing": (None, "two-phase"),
    "exp-density-bound": ("half-plane-window", "exp-reciprocal"),
    "volume-growth": ("half-plane-window", "triadic"),
    "dims-sanity": (None, None),
}


def parse_config(text: str) -> ExperimentConfig:
    """Parse ``key=value`` lines; ``#`` starts a comment; unknown keys are errors."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected key=value, got {line!r}", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KEY_TYPES:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        try:
            KEY_TYPES[key](value)
        except ValueError:
            raise ConfigError(f"invalid value {value!r} for {key}", lineno) from None
        values[key] = value
    if "experiment" not in values:
        raise ConfigError("missing required key 'experiment'")
    if "seed" not in values:
        raise ConfigError("missing required key 'seed'")
    return ExperimentConfig(values["experiment"], int(values["seed"]), values)


def _check_kinds(cfg: ExperimentConfig) -> None:
    want_domain, want_density = EXPERIMENT_KINDS[cfg.experiment]
    for key, want in (("domain.type", want_domain), ("density.type", want_density)):
        got = cfg.values.get(key)
        if got is not None and got != want:
            raise ConfigError(f"{cfg.experiment} uses {key}={want}, not {got}")
    if cfg.experiment == "cantor-beta" and "anchors.count" in cfg.values:
        level = cfg.get("anchors.level", 10)
        if cfg.get("anchors.count", 0) != 2 ** level:
            raise ConfigError(f"anchors.count must equal 2**anchors.level = {2 ** level}")


def config_hash(cfg: ExperimentConfig) -> str:
    canon = "".join(f"{k}={cfg.values[k]}\n" for k in sorted(cfg.values))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_outputs(out: Path, cfg: ExperimentConfig, outcome: Outcome, runtime: float) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "counts.csv", ("r", "count", "variant"),
               [(repr(float(r)), int(c), cv.variant)
                for cv in outcome.counts for r, c in zip(cv.radii, cv.counts)])
    _write_csv(out / "dims.csv", ("slope", "stderr", "r2", "win_lo", "win_hi", "slope_min", "slope_max"),
               [(repr(e.slope), repr(e.stderr), repr(e.r2), e.win_lo, e.win_hi,
                 repr(e.slope_min), repr(e.slope_max)) for e in outcome.dims])
    for name, (header, rows) in outcome.tables.items():
        _write_csv(out / name, header, rows)
    report = {
        "experiment": cfg.experiment,
        "version": __version__,
        "config": dict(sorted(cfg.values.items())),
        "config_hash": config_hash(cfg),
        "reference": outcome.reference,
        "predicted": outcome.predicted,
        "measured": outcome.measured,
        "tolerance": outcome.tolerance,
        "pass": bool(outcome.passed),
        "details": outcome.details,
        "runtime_s": round(runtime, 3),
    }
    with open(out / "report.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")
    return report


def run_experiment(cfg: ExperimentConfig, out: Path | None = None) -> dict:
    """Run a named experiment, write its outputs and return the report."""
    runner = get_runner(cfg.experiment)
    _check_kinds(cfg)
    start = time.perf_counter()
    outcome = runner(cfg)
    runtime = time.perf_counter() - start
    out = Path(out if out is not None else cfg.values.get("output", f"out/{cfg.experiment}"))
    return write_outputs(out, cfg, outcome, runtime)


def _cmd_run(args) -> int:
    text = Path(args.config).read_text(encoding="utf-8")
    cfg = parse_config(text)
    if args.depth is not None:
        cfg.values["grid.depth"] = str(args.depth)
    if args.seed is not None:
        cfg.values["seed"] = str(args.seed)
        cfg.seed = args.seed
    print(f"[rhometric] running {cfg.experiment}", file=sys.stderr)
    report = run_experiment(cfg, args.out)
    status = "PASS" if report["pass"] else "FAIL"
    print(f"{cfg.experiment}: {status} predicted={report['predicted']:.6g} "
          f"measured={report['measured']:.6g} tolerance={report['tolerance']:.6g} "
          f"({report['runtime_s']:.1f}s)")
    return 0 if report["pass"] else 2


def _cmd_spectrum(args) -> int:
    rows = th.spectrum_table(args.beta, args.lam, args.steps)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["t", "dim_d", "dim_rho"])
    for r in rows:
        w.writerow([repr(float(v)) for v in r])
    print("# f_max " + th.f_max(args.beta, args.lam).to_text())
    return 0


def _cmd_list(args) -> int:
    for name, fn in EXPERIMENTS.items():
        print(f"{name:20s} {fn.__doc__.strip().splitlines()[0]}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rhometric", description="Density-metric boundary experiments.")
    p.add_argument("--version", action="version", version=f"rhometric {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment from a key=value config file")
    run.add_argument("config")
    run.add_argument("--out", default=None, help="output directory")
    run.add_argument("--depth", type=int, default=None, help="override grid.depth")
    run.add_argument("--seed", type=int, default=None, help="override seed")
    run.set_defaults(func=_cmd_run)
    spec = sub.add_parser("spectrum", help="print the digit-frequency spectrum as CSV")
    spec.add_argument("--beta", type=float, required=True)
    spec.add_argument("--lambda", dest="lam", type=float, required=True)
    spec.add_argument("--steps", type=int, default=100)
    spec.set_defaults(func=_cmd_spectrum)
    lst = sub.add_parser("list", help="list experiment names")
    lst.set_defaults(func=_cmd_list)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (RhoMetricError, OSError) as exc:
        print(f"rhometric: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
