"""Command line entry point: ``generate``, ``evaluate`` and ``report``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .errors import ConfigError, MotionPoseError
from .evaluation import ExperimentConfig, csv_exports, dumps, refilter, run_evaluation
from .metrics import FILTER_THRESHOLDS
from .simulation import RenderConfig, TrajectoryConfig, export_dataset, generate_dataset


def _thresholds(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad threshold list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="motionpose", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--sequences", type=int, default=3)
    g.add_argument("--frames", type=int, default=30)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--noise", type=float, default=0.0, help="sensor noise sigma, intensity units")
    g.add_argument("--stars", type=int, default=40)
    g.add_argument("--jobs", type=int, default=1)

    e = sub.add_parser("evaluate", help="predict, solve poses and score a dataset")
    e.add_argument("--dataset")
    e.add_argument("--predictor", choices=("oracle", "flow", "import"))
    e.add_argument("--config", help="JSON config (or a previous report.json to re-run)")
    e.add_argument("--out", help="report JSON path")
    e.add_argument("--jobs", type=int, default=1)
    e.add_argument("--seed", type=int)
    e.add_argument("--stride", type=int)
    e.add_argument("--all-frames", action="store_true", default=None)
    e.add_argument("--heatmaps", help="directory of seq_NNN/FFFFFF.mahm files (import predictor)")
    e.add_argument("--sigma", type=float, help="oracle pixel noise")
    e.add_argument("--outlier-rate", type=float)

    r = sub.add_parser("report", help="re-render tables from a report JSON")
    r.add_argument("--in", dest="inp", required=True)
    r.add_argument("--format", choices=("csv", "json"), default="csv")
    r.add_argument("--filter-thresholds", type=_thresholds, default=FILTER_THRESHOLDS)
    r.add_argument("--out", help="directory for CSV files (default: stdout)")
    return p


def cmd_generate(args) -> int:
    seqs = generate_dataset(
        args.sequences,
        trajectory=TrajectoryConfig(frame_count=args.frames),
        render=RenderConfig(background_star_count=args.stars, sensor_noise_sigma=args.noise),
        seed=args.seed,
        jobs=args.jobs,
    )
    summary = export_dataset(args.out, seqs)
    print(f"wrote {len(summary['images'])} frames in {len(summary['annotations'])} sequences to {summary['root']}")
    return 0


def _config_from_args(args) -> ExperimentConfig:
    overrides = {"dataset": args.dataset, "predictor": args.predictor, "output": args.out, "seed": args.seed,
                 "stride": args.stride, "all_frames": args.all_frames, "heatmaps": args.heatmaps}
    if args.config:
        cfg = ExperimentConfig.from_file(args.config, **overrides)
    else:
        if not args.dataset:
            raise ConfigError("evaluate needs --dataset or --config")
        cfg = ExperimentConfig.from_dict({k: v for k, v in overrides.items() if v is not None})
    if args.sigma is not None or args.outlier_rate is not None:
        oracle = cfg.oracle
        if args.sigma is not None:
            oracle = replace(oracle, pixel_sigma=args.sigma)
        if args.outlier_rate is not None:
            oracle = replace(oracle, outlier_rate=args.outlier_rate)
        cfg = replace(cfg, oracle=oracle)
    return cfg


def cmd_evaluate(args) -> int:
    cfg = _config_from_args(args)
    if not cfg.output:
        raise ConfigError("evaluate needs --out (or 'output' in the config)")
    report = run_evaluation(cfg, jobs=args.jobs)
    for err in report.sequence_errors:
        print(f"sequence {err['sequence_id']} failed: {err['error']}", file=sys.stderr)
    g = report.global_metrics
    print(f"pck@10 {g.get('pck@10')}  e_p {g.get('e_p')}  report: {cfg.output}")
    return report.exit_code


def cmd_report(args) -> int:
    try:
        report = json.loads(Path(args.inp).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read report {args.inp}: {exc}") from None
    thresholds = tuple(args.filter_thresholds)
    if args.format == "json":
        doc = {
            "filtering_table": refilter(report, thresholds),
            "pck10_by_sequence": report["pck10_by_sequence"],
            "global": report["global"],
        }
        sys.stdout.write(dumps(doc))
        return 0
    docs = csv_exports(report, thresholds)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in docs.items():
            (out / f"{name}.csv").write_text(text, encoding="utf-8")
        print(f"wrote {', '.join(f'{n}.csv' for n in docs)} to {out}")
    else:
        for name, text in docs.items():
            sys.stdout.write(f"# {name}\n{text}\n")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    handler = {"generate": cmd_generate, "evaluate": cmd_evaluate, "report": cmd_report}[args.command]
    try:
        return handler(args)
    except (MotionPoseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
