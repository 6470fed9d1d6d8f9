import json
import shutil
from dataclasses import replace
from pathlib import Path

import jsonschema
import numpy as np
import pytest

from motionpose.dataset import load_dataset
from motionpose.errors import ConfigError
from motionpose.evaluation import TIMING_KEY, ExperimentConfig, RunReport, csv_exports, refilter, run_evaluation
from motionpose.heatmaps import encode_keypoints, write_heatmap_file
from motionpose.predictors import OracleNoiseConfig
from motionpose.simulation import RenderConfig, TrajectoryConfig, export_dataset, generate_dataset

SCHEMA = json.loads((Path(__file__).resolve().parents[1] / "docs" / "report_schema.json").read_text())


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("data") / "ds"
    export_dataset(root, generate_dataset(3, trajectory=TrajectoryConfig(frame_count=30), render=RenderConfig(), seed=0))
    return root


def validate(report):
    d = report.to_dict() if isinstance(report, RunReport) else report
    jsonschema.validate(d, SCHEMA)
    return d


def check_e_p_consistency(d):
    for s in d["sequences"]:
        for f in s["frames"]:
            if not f["pose_failed"]:
                assert abs(f["e_p"] - (f["e_q"] + f["e_t"] / f["gt_translation_norm"])) <= 1e-12


def test_oracle_exact(dataset_dir, tmp_path):
    rep = run_evaluation(ExperimentConfig(str(dataset_dir), output=str(tmp_path / "r.json")))
    d = validate(rep)
    assert rep.exit_code == 0
    assert d["failures"] == {"frames_evaluated": 48, "pose_failures": 0, "sequence_failures": 0}
    for s in d["sequences"]:
        assert all(p == 100.0 for p in s["pck10_per_frame"])
    assert d["global"]["pck@10"] == 100.0 and d["global"]["e_p"] < 1e-6
    check_e_p_consistency(d)
    for name in ("r.json", "r_metrics.csv", "r_filtering.csv", "r_pck10_by_sequence.csv"):
        assert (tmp_path / name).is_file()
    validate(json.loads((tmp_path / "r.json").read_text()))


def test_all_frames_and_stride(dataset_dir):
    d = run_evaluation(ExperimentConfig(str(dataset_dir), all_frames=True)).to_dict()
    assert [s["frame_count"] for s in d["sequences"]] == [30, 30, 30]
    d = run_evaluation(ExperimentConfig(str(dataset_dir), stride=3)).to_dict()
    assert [s["frame_count"] for s in d["sequences"]] == [24, 24, 24]
    assert d["sequences"][0]["frames"][0]["frame_index"] == 3


def test_reproducible_from_echo(dataset_dir):
    cfg = ExperimentConfig(str(dataset_dir), oracle=OracleNoiseConfig(pixel_sigma=1.5, outlier_rate=0.2), seed=5)
    first = run_evaluation(cfg)
    again = run_evaluation(ExperimentConfig.from_dict(first.to_dict()))
    assert first.to_json(include_timings=False) == again.to_json(include_timings=False)
    assert TIMING_KEY in json.loads(first.to_json()) and TIMING_KEY not in json.loads(first.to_json(False))
    other = run_evaluation(replace(cfg, seed=6))
    assert other.to_json(False) != first.to_json(False)


def test_jobs_invariant(dataset_dir):
    cfg = ExperimentConfig(str(dataset_dir), oracle=OracleNoiseConfig(pixel_sigma=1.0), seed=2)
    assert run_evaluation(cfg, jobs=1).to_json(False) == run_evaluation(cfg, jobs=3).to_json(False)


def noisy_benchmark(dataset_dir):
    cfg = ExperimentConfig(str(dataset_dir), oracle=OracleNoiseConfig(pixel_sigma=2.0, outlier_rate=0.1), seed=3)
    return run_evaluation(cfg).to_dict()


def test_noisy_filtering_trend(dataset_dir):
    d = validate(noisy_benchmark(dataset_dir))
    rows = d["filtering_table"]
    assert [r["setup"] for r in rows] == ["No filtering", "PCK>12.5", "PCK>25", "PCK>50", "PCK>90"]
    pct = [r["data_percent"] for r in rows]
    assert all(b <= a for a, b in zip(pct, pct[1:])) and pct[-1] < pct[0]
    e_p = [r["e_p"] for r in rows if r["e_p"] is not None]
    assert all(b <= a for a, b in zip(e_p, e_p[1:]))
    check_e_p_consistency(d)


def test_flow_predictor(dataset_dir):
    d = validate(run_evaluation(ExperimentConfig(str(dataset_dir), predictor="flow")))
    assert d["failures"]["sequence_failures"] == 0
    assert d["global"]["pck@10"] > 90.0
    check_e_p_consistency(d)


def test_import_predictor(dataset_dir, tmp_path):
    ds = load_dataset(dataset_dir)
    for seq in ds.sequences:
        (tmp_path / seq.sequence_id).mkdir()
        for rec in seq.records:
            write_heatmap_file(tmp_path / seq.sequence_id / f"{rec.frame_index:06d}.mahm", encode_keypoints(rec.keypoints_2d))
    d = validate(run_evaluation(ExperimentConfig(str(dataset_dir), predictor="import", heatmaps=str(tmp_path))))
    assert d["global"]["pck@10"] == 100.0
    assert d["failures"]["pose_failures"] == 0
    assert d["filtering_table"][0]["e_q_deg"] < 1.0


def test_sequence_failure_exit_code(dataset_dir, tmp_path):
    broken = tmp_path / "ds"
    shutil.copytree(dataset_dir, broken)
    (broken / "seq_001" / "frames" / "000003.pgm").unlink()
    out = tmp_path / "r.json"
    rep = run_evaluation(ExperimentConfig(str(broken), predictor="flow", output=str(out)))
    assert rep.exit_code == 2
    d = validate(json.loads(out.read_text()))
    assert [e["sequence_id"] for e in d["sequence_errors"]] == ["seq_001"]
    assert "000003.pgm" in d["sequence_errors"][0]["error"]
    assert [s["sequence_id"] for s in d["sequences"]] == ["seq_000", "seq_002"]


def test_detection_failure_counted(dataset_dir, tmp_path):
    ds = load_dataset(dataset_dir)
    for seq in ds.sequences:
        (tmp_path / seq.sequence_id).mkdir()
        for rec in seq.records:
            maps = encode_keypoints(rec.keypoints_2d)
            if rec.frame_index == 10:
                maps[:3] = 0  # three keypoints missing: too few for PnP
            write_heatmap_file(tmp_path / seq.sequence_id / f"{rec.frame_index:06d}.mahm", maps)
    d = validate(run_evaluation(ExperimentConfig(str(dataset_dir), predictor="import", heatmaps=str(tmp_path))))
    assert d["failures"]["pose_failures"] == 3
    f = next(f for f in d["sequences"][0]["frames"] if f["frame_index"] == 10)
    assert f["pose_failed"] and f["detected"] == 5 and f["pck_at"]["10"] == 62.5
    assert d["filtering_table"][0]["pose_failures"] == 3


def test_config_errors(dataset_dir, tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig(str(dataset_dir), predictor="network")
    with pytest.raises(ConfigError):
        ExperimentConfig(str(dataset_dir), stride=0)
    with pytest.raises(ConfigError):
        ExperimentConfig(str(dataset_dir), predictor="import")
    with pytest.raises(ConfigError, match="unknown config keys"):
        ExperimentConfig.from_dict({"dataset": "x", "bogus": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"dataset": "x", "ransac": {"nope": 1}})
    with pytest.raises(ConfigError, match="does not exist"):
        run_evaluation(ExperimentConfig(str(tmp_path / "missing")))
    with pytest.raises(ConfigError, match="does not exist"):
        run_evaluation(ExperimentConfig(str(dataset_dir), predictor="import", heatmaps=str(tmp_path / "none")))
    bad = tmp_path / "cfg.json"
    bad.write_text("{nope")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_file(bad)


def test_config_seed_propagates():
    cfg = ExperimentConfig("x", seed=9)
    assert cfg.oracle.seed == 9 and cfg.ransac.seed == 9
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg


def test_refilter_and_csv(dataset_dir):
    d = noisy_benchmark(dataset_dir)
    assert refilter(d) == d["filtering_table"]
    rows = refilter(d, (40.0, 80.0))
    assert [r["setup"] for r in rows] == ["No filtering", "PCK>40", "PCK>80"]
    docs = csv_exports(d)
    lines = docs["filtering"].strip().splitlines()
    assert lines[0] == "setup,data_percent,pck10,e_t,e_q_deg,e_p,frames,pose_failures"
    assert [ln.split(",")[0] for ln in lines[1:]] == ["No filtering", "PCK>12.5", "PCK>25", "PCK>50", "PCK>90"]
    per_seq = docs["pck10_by_sequence"].strip().splitlines()
    assert per_seq[0] == "sequence_id,mean_pck10" and len(per_seq) == 4
    means = [float(ln.split(",")[1]) for ln in per_seq[1:]]
    np.testing.assert_allclose(means, [s["metrics"]["pck@10"]["mean"] for s in d["sequences"]])
    assert len(docs["metrics"].strip().splitlines()) == 1 + 3 * 8
