"""Experiment configuration, the evaluation loop and report export.

A run predicts keypoints for the evaluated frames of every sequence, solves
the pose with RANSAC PnP against the dataset's model and intrinsics, and
scores both. Keypoint metrics are averaged per frame, then per sequence; the
global figures are means over sequences. The filtering table pools frames.
"""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dataset import DEFAULT_STRIDE, SequenceDataset, load_dataset, sample_triplets
from .errors import ConfigError, MotionPoseError, NoConsensus
from .flow import FlowParams
from .heatmaps import MotionEncodingParams
from .metrics import FILTER_THRESHOLDS, FrameEvaluation, aggregate, evaluate_frame, filtering_table
from .pnp import MIN_SAMPLE, RansacParams, correspondences_from_arrays, solve_ransac
from .predictors import OracleNoiseConfig, import_heatmaps_predict, oracle_predict, track_sequence

REPORT_SCHEMA_VERSION = 1
PREDICTORS = ("oracle", "flow", "import")
TIMING_KEY = "timings"


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str
    predictor: str = "oracle"
    oracle: OracleNoiseConfig = OracleNoiseConfig()
    heatmaps: str | None = None
    stride: int = DEFAULT_STRIDE
    all_frames: bool = False
    codec: MotionEncodingParams = MotionEncodingParams()
    flow: FlowParams = FlowParams()
    ransac: RansacParams = RansacParams()
    output: str | None = None
    seed: int = 0

    def __post_init__(self):
        if self.predictor not in PREDICTORS:
            raise ConfigError(f"unknown predictor {self.predictor!r}; choose from {', '.join(PREDICTORS)}")
        if self.stride < 1:
            raise ConfigError("stride must be >= 1")
        if self.predictor == "import" and not self.heatmaps:
            raise ConfigError("the import predictor needs a heatmaps directory")
        # one master seed drives every stream
        if self.oracle.seed != self.seed:
            object.__setattr__(self, "oracle", replace(self.oracle, seed=self.seed))
        if self.ransac.seed != self.seed:
            object.__setattr__(self, "ransac", replace(self.ransac, seed=self.seed))

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "predictor": self.predictor,
            "oracle": self.oracle.to_dict(),
            "heatmaps": self.heatmaps,
            "stride": self.stride,
            "all_frames": self.all_frames,
            "codec": self.codec.to_dict(),
            "flow": self.flow.to_dict(),
            "ransac": self.ransac.to_dict(),
            "output": self.output,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        d = dict(d)
        if "config" in d and "dataset" not in d:
            d = dict(d["config"])  # a RunReport: re-run its echoed config
        sections = {"oracle": OracleNoiseConfig, "codec": MotionEncodingParams,
                    "flow": FlowParams, "ransac": RansacParams}
        try:
            for key, typ in sections.items():
                if key in d and isinstance(d[key], dict):
                    d[key] = typ(**d[key])
            unknown = set(d) - set(cls.__dataclass_fields__)
            if unknown:
                raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"invalid configuration: {exc}") from None

    @classmethod
    def from_file(cls, path, **overrides) -> ExperimentConfig:
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if "config" in d and "dataset" not in d:
            d = d["config"]
        d.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(d)


@dataclass
class RunReport:
    config: dict
    sequences: list  # SequenceReport
    global_metrics: dict
    filtering: list
    failures: dict
    sequence_errors: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return 2 if self.sequence_errors else 0

    def to_dict(self, include_timings: bool = True) -> dict:
        d = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "config": self.config,
            "sequences": [s.to_dict() for s in self.sequences],
            "global": self.global_metrics,
            "filtering_table": self.filtering,
            "pck10_by_sequence": pck10_by_sequence(self.sequences),
            "failures": self.failures,
            "sequence_errors": self.sequence_errors,
        }
        if include_timings:
            d[TIMING_KEY] = self.timings
        return d

    def to_json(self, include_timings: bool = True) -> str:
        return dumps(self.to_dict(include_timings))


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def pck10_by_sequence(sequences) -> list:
    return [{"sequence_id": s.sequence_id, "mean_pck10": s.metrics["pck@10"]["mean"]} for s in sequences]


def _frame_seed(seed: int, seq_index: int, t: int) -> int:
    return int(np.random.SeedSequence([seed, seq_index, t, 1]).generate_state(1, dtype=np.uint64)[0])


def evaluated_frames(n_frames: int, config: ExperimentConfig) -> list[int]:
    if config.all_frames:
        return list(range(n_frames))
    return [t for _, t, _ in sample_triplets(n_frames, config.stride)]


def evaluate_sequence(dataset: SequenceDataset, seq_index: int, config: ExperimentConfig):
    """Evaluate one sequence; returns ``(SequenceReport | None, error | None, seconds)``."""
    start = time.perf_counter()
    seq = dataset.sequences[seq_index]
    try:
        frames = evaluated_frames(len(seq), config)
        if not frames:
            raise MotionPoseError(f"sequence {seq.sequence_id} has no frames to evaluate at stride {config.stride}")
        if config.predictor == "flow":
            tracked = track_sequence(seq, config.flow, config.oracle, seq_index, last_frame=max(frames))
        X = dataset.model.points
        evals: list[FrameEvaluation] = []
        for t in frames:
            rec = seq.records[t]
            if config.predictor == "oracle":
                pred = oracle_predict(rec.keypoints_2d, config.oracle, seq_index, t)
            elif config.predictor == "flow":
                pred = tracked[t]
            else:
                path = Path(config.heatmaps) / seq.sequence_id / f"{rec.frame_index:06d}.mahm"
                pred = import_heatmaps_predict(path, config.codec)
            det = pred.detected
            pose, reason = None, None
            if det.sum() < MIN_SAMPLE:
                reason = f"only {int(det.sum())} keypoints detected"
            else:
                corr = correspondences_from_arrays(X[det], pred.keypoints[det])
                try:
                    pose = solve_ransac(corr, dataset.camera,
                                        replace(config.ransac, seed=_frame_seed(config.seed, seq_index, t))).pose
                except NoConsensus as exc:
                    reason = str(exc)
            evals.append(evaluate_frame(seq.sequence_id, rec.frame_index, pred.keypoints, rec.keypoints_2d,
                                        pose, rec.pose, reason))
        return aggregate(evals, seq.sequence_id), None, time.perf_counter() - start
    except (MotionPoseError, OSError) as exc:
        return None, {"sequence_id": seq.sequence_id, "error": f"{type(exc).__name__}: {exc}"}, time.perf_counter() - start


def _worker(args):
    dataset, k, config = args
    return evaluate_sequence(dataset, k, config)


def global_metrics(reports) -> dict:
    """Mean over sequences of each per-sequence mean."""
    out = {}
    if not reports:
        return out
    for name in reports[0].metrics:
        vals = [r.metrics[name]["mean"] for r in reports if r.metrics[name]["mean"] is not None]
        out[name] = float(np.mean(vals)) if vals else None
    return out


def run_evaluation(config: ExperimentConfig, jobs: int = 1, dataset: SequenceDataset | None = None) -> RunReport:
    """Evaluate every sequence and, when ``config.output`` is set, write the report and CSV exports."""
    t0 = time.perf_counter()
    if dataset is None:
        if not Path(config.dataset).is_dir():
            raise ConfigError(f"dataset directory {config.dataset} does not exist")
        dataset = load_dataset(config.dataset)
    if config.predictor == "import" and not Path(config.heatmaps).is_dir():
        raise ConfigError(f"heatmaps directory {config.heatmaps} does not exist")

    work = [(dataset, k, config) for k in range(len(dataset.sequences))]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_worker, work))  # map keeps sequence order
    else:
        results = [_worker(w) for w in work]

    reports = [r for r, _, _ in results if r is not None]
    errors = [e for _, e, _ in results if e is not None]
    all_frames = [f for r in reports for f in r.frames]
    report = RunReport(
        config=config.to_dict(),
        sequences=reports,
        global_metrics=global_metrics(reports),
        filtering=filtering_table(all_frames) if all_frames else [],
        failures={
            "frames_evaluated": len(all_frames),
            "pose_failures": sum(f.pose_failed for f in all_frames),
            "sequence_failures": len(errors),
        },
        sequence_errors=errors,
        timings={
            "per_sequence_seconds": {ds.sequence_id: sec for ds, (_, _, sec) in zip(dataset.sequences, results)},
        },
    )
    report.timings["total_seconds"] = time.perf_counter() - t0
    if config.output:
        write_report(report, config.output)
    return report


def write_report(report: RunReport, path) -> list[Path]:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.to_json(), encoding="utf-8")
    written = [path]
    for name, text in csv_exports(report.to_dict()).items():
        p = path.with_name(f"{path.stem}_{name}.csv")
        p.write_text(text, encoding="utf-8")
        written.append(p)
    return written


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if v is None else v for v in row])
    return buf.getvalue()


def refilter(report: dict, thresholds=FILTER_THRESHOLDS) -> list[dict]:
    """Recompute the filtering table of a report dict with other thresholds."""
    frames = [FrameEvaluation.from_dict(f) for s in report["sequences"] for f in s["frames"]]
    return filtering_table(frames, thresholds) if frames else []


def csv_exports(report: dict, thresholds=None) -> dict[str, str]:
    """``metrics``, ``filtering`` and ``pck10_by_sequence`` CSV documents."""
    metric_rows = []
    for s in report["sequences"]:
        for name, st in s["metrics"].items():
            metric_rows.append((s["sequence_id"], name, st["mean"], st["median"]))
    table = report["filtering_table"] if thresholds is None else refilter(report, thresholds)
    cols = ("setup", "data_percent", "pck10", "e_t", "e_q_deg", "e_p", "frames", "pose_failures")
    return {
        "metrics": _csv(metric_rows, ("sequence_id", "metric", "mean", "median")),
        "filtering": _csv([tuple(r[c] for c in cols) for r in table], cols),
        "pck10_by_sequence": _csv([(r["sequence_id"], r["mean_pck10"]) for r in report["pck10_by_sequence"]],
                                  ("sequence_id", "mean_pck10")),
    }
