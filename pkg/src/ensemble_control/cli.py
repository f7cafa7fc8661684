"""Command line entry point.

Exit codes: 0 success, 2 validation failure (assumptions or bad input),
3 tolerance unreachable, 4 budget exhausted, 5 averaging validity window
exceeded, 6 no phase alignment within the horizon.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import EnsembleControlError
from .galerkin import PiecewiseControl, ensemble_report
from .pipeline import (
    PipelineConfig,
    build_model,
    pipeline_dimension,
    run_pipeline,
    synthesize,
    jsonable,
    target_curve,
)
from .spectral import truncate, validate_assumptions

EXIT_OK = 0
EXIT_INVALID = 2

log = logging.getLogger("ensemble_control")


def _load_config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config)
    if args.grid is not None:
        cfg.alpha_points = args.grid
    if args.n is not None:
        cfg.split_n = args.n
    if args.averaging_n is not None:
        cfg.averaging_n = args.averaging_n
    if args.out is not None:
        cfg.output_dir = args.out
    return cfg


def _model_spec(arg: str) -> dict:
    # "planar_rotor:9" selects the built-in rotor, anything else is a JSON file
    if arg.startswith("planar_rotor"):
        _, _, dim = arg.partition(":")
        return {"preset": "planar_rotor", "dimension": int(dim or 9)}
    return {"file": arg}


def cmd_validate(args) -> int:
    model = build_model(_model_spec(args.model))
    report = validate_assumptions(model)
    print(json.dumps(report.as_dict(), indent=1))
    return EXIT_OK if report.passed else EXIT_INVALID


def cmd_synthesize(args) -> int:
    cfg = _load_config(args)
    syn = synthesize(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "control.csv").write_text(syn.control.to_csv())
    (out / "pulse_train.json").write_text(syn.train.to_json())
    (out / "summary.json").write_text(json.dumps(syn.summary, indent=1, default=jsonable))
    print(f"{len(syn.control)} segments, duration {syn.control.total_duration:.6g} -> {out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    model = build_model(cfg.model)
    N = args.dimension if args.dimension is not None else pipeline_dimension(cfg, model)[0]
    control = PiecewiseControl.from_csv(Path(args.control).read_text())
    if control.max_amplitude > cfg.delta * (1 + 1e-12):
        log.warning("control amplitude %.6g exceeds delta %.6g", control.max_amplitude, cfg.delta)
    report, _ = ensemble_report(truncate(model, N), control, cfg.alpha_grid,
                                target_curve(cfg.target))
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(report.to_csv())
    print(f"sup moduli error {report.sup_error:.6e} (N={N}) -> {out / 'report.csv'}")
    return EXIT_OK


def cmd_report(args) -> int:
    cfg = _load_config(args)
    report, summary = run_pipeline(cfg, write=True)
    print(f"sup moduli error {report.sup_error:.6e}, fit floor "
          f"{summary['fit_floor_modulus']:.3e} -> {cfg.output_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ensemble-control", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check the spectral assumptions of a model")
    v.add_argument("model", help="model JSON file, or planar_rotor:N")
    v.set_defaults(func=cmd_validate)

    def common(sp):
        sp.add_argument("config", help="pipeline config (JSON)")
        sp.add_argument("--grid", type=int, help="number of alpha grid points")
        sp.add_argument("--n", type=int, help="splitting budget n")
        sp.add_argument("--averaging-n", type=float, help="minimal averaging n")
        sp.add_argument("--out", help="output directory")

    s = sub.add_parser("synthesize", help="emit the control schedule")
    common(s)
    s.set_defaults(func=cmd_synthesize)

    m = sub.add_parser("simulate", help="simulate a control schedule on the alpha grid")
    common(m)
    m.add_argument("control", help="control CSV")
    m.add_argument("--dimension", type=int, help="truncation dimension (default: config N)")
    m.set_defaults(func=cmd_simulate)

    r = sub.add_parser("report", help="synthesize, simulate and summarise")
    common(r)
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except EnsembleControlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code if exc.exit_code != 1 else EXIT_INVALID
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
