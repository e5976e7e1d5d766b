"""End-to-end tests for the batch command-line interface.

Everything runs through `main(argv)` so the exit-code contract
(0 success, 2 usage, 3 data error, 4 numeric failure) is tested exactly
as a shell would see it.
"""

import csv
import json

import numpy as np
import pytest

from cloudedges.cli import main
from cloudedges.cloud import PointCloud, load_labels, save_cloud
from cloudedges.data import gen_primitive, save_manifest
from cloudedges.descriptor import FeatureSet, load_ssm

pytestmark = pytest.mark.filterwarnings("ignore::UserWarning")


def tiny_manifest(tmp_path, train_density=120.0, eval_density=60.0):
    entries = [
        {"name": "train-cube", "generator": "cube",
         "parameters": {"samples_per_unit_area": train_density},
         "sigma": 0.0, "seed": 41, "role": "train",
         "files": {"cloud": "train-cube.ply", "labels": "train-cube.labels"}},
        {"name": "eval-two-cube", "generator": "two_cube",
         "parameters": {"samples_per_unit_area": eval_density},
         "sigma": 0.0, "seed": 42, "role": "eval",
         "files": {"cloud": "eval-two-cube.ply",
                   "labels": "eval-two-cube.labels"}},
    ]
    path = tmp_path / "manifest.json"
    save_manifest(entries, path)
    return path, entries


def write_cube_ply(tmp_path, density=400.0, seed=3, with_normals=True):
    lab = gen_primitive("cube", density, seed=seed)
    cloud = lab.cloud
    if not with_normals:
        cloud = PointCloud(cloud.points.copy())
    path = tmp_path / ("cube.ply" if with_normals else "bare.ply")
    save_cloud(cloud, path)
    labels_path = tmp_path / "cube.labels"
    with open(labels_path, "w") as fh:
        fh.write("\n".join(str(int(v)) for v in lab.labels) + "\n")
    return path, labels_path, lab


# ---------------------------------------------------------------- generate


def test_generate_writes_dataset_and_reruns_identically(tmp_path):
    manifest_path, entries = tiny_manifest(tmp_path)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["generate", "--manifest", str(manifest_path),
                 "--out", str(out_a)]) == 0
    for entry in entries:
        assert (out_a / entry["files"]["cloud"]).exists()
        assert (out_a / entry["files"]["labels"]).exists()
    assert (out_a / "manifest.json").exists()
    run_doc = json.loads((out_a / "generate.run.json").read_text())
    assert run_doc["command"] == "generate"
    assert "wall_seconds" in run_doc["timings"]

    assert main(["generate", "--manifest", str(manifest_path),
                 "--out", str(out_b)]) == 0
    for entry in entries:
        for key in ("cloud", "labels"):
            assert ((out_a / entry["files"][key]).read_bytes()
                    == (out_b / entry["files"][key]).read_bytes())


def test_generate_empty_manifest_is_usage_error(tmp_path):
    empty = tmp_path / "empty.json"
    empty.write_text("[]\n")
    assert main(["generate", "--manifest", str(empty),
                 "--out", str(tmp_path / "out")]) == 2


def test_generate_requires_exactly_one_source(tmp_path):
    assert main(["generate", "--out", str(tmp_path / "out")]) == 2


# --------------------------------------------------------------------- ssm


def test_ssm_builds_expected_cache_file(tmp_path):
    cloud_path, _, lab = write_cube_ply(tmp_path)
    out = tmp_path / "cube.ssm"
    assert main(["ssm", str(cloud_path), "--out", str(out),
                 "--scales", "8"]) == 0
    matrix = load_ssm(out)
    assert matrix.values.shape == (len(lab.cloud), 8, 6)
    assert matrix.values.dtype == np.float32
    assert matrix.feature_set is FeatureSet.STANDARD6

    run_doc = json.loads((tmp_path / "ssm.run.json").read_text())
    assert run_doc["timings"]["stages"]["descriptor_seconds"] > 0

    again = tmp_path / "again.ssm"
    assert main(["ssm", str(cloud_path), "--out", str(again),
                 "--scales", "8"]) == 0
    assert out.read_bytes() == again.read_bytes()


def test_ssm_without_normals_requires_flag(tmp_path):
    bare_path, _, _ = write_cube_ply(tmp_path, density=150.0,
                                     with_normals=False)
    out = tmp_path / "bare.ssm"
    assert main(["ssm", str(bare_path), "--out", str(out),
                 "--scales", "4"]) == 3
    assert not out.exists()
    assert main(["ssm", str(bare_path), "--out", str(out),
                 "--scales", "4", "--estimate-normals"]) == 0
    assert out.exists()


# ------------------------------------------------------- train + classify


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """A small but real pipeline: cube cloud -> SSM -> trained weights."""
    root = tmp_path_factory.mktemp("pipeline")
    cloud_path, labels_path, lab = write_cube_ply(root, density=400.0)
    ssm_path = root / "cube.ssm"
    assert main(["ssm", str(cloud_path), "--out", str(ssm_path),
                 "--scales", "8"]) == 0
    weights = root / "weights.json"
    history = root / "history.csv"
    code = main(["train", "--ssm", str(ssm_path),
                 "--labels", str(labels_path),
                 "--out", str(weights), "--history", str(history),
                 "--epochs", "10", "--seed", "5", "--val-per-class", "10"])
    assert code == 0
    return dict(root=root, cloud=cloud_path, labels=labels_path,
                ssm=ssm_path, weights=weights, history=history, lab=lab)


def test_train_outputs_history_rows_and_reruns_identically(trained):
    with open(trained["history"]) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 10
    assert {"epoch", "train_loss", "train_accuracy", "val_loss",
            "val_accuracy"} <= set(rows[0])
    assert float(rows[-1]["train_loss"]) < float(rows[0]["train_loss"])

    repeat = trained["root"] / "weights-repeat.json"
    assert main(["train", "--ssm", str(trained["ssm"]),
                 "--labels", str(trained["labels"]),
                 "--out", str(repeat),
                 "--history", str(trained["root"] / "history2.csv"),
                 "--epochs", "10", "--seed", "5",
                 "--val-per-class", "10"]) == 0
    assert repeat.read_bytes() == trained["weights"].read_bytes()


def test_train_missing_class_is_data_error(tmp_path):
    cloud_path, _, lab = write_cube_ply(tmp_path, density=150.0)
    ssm_path = tmp_path / "c.ssm"
    assert main(["ssm", str(cloud_path), "--out", str(ssm_path),
                 "--scales", "4"]) == 0
    flat = tmp_path / "flat.labels"
    flat.write_text("0\n" * len(lab.cloud))
    assert main(["train", "--ssm", str(ssm_path), "--labels", str(flat),
                 "--out", str(tmp_path / "w.json"),
                 "--history", str(tmp_path / "h.csv"),
                 "--epochs", "2"]) == 3


def test_classify_from_cached_ssm_skips_descriptor_time(trained):
    out = trained["root"] / "pred.labels"
    assert main(["classify", "--weights", str(trained["weights"]),
                 "--ssm", str(trained["ssm"]), "--out", str(out)]) == 0
    pred = load_labels(out)
    assert pred.shape == (len(trained["lab"].cloud),)
    assert set(np.unique(pred)) <= {0, 1, 2}
    run_doc = json.loads((trained["root"] / "classify.run.json").read_text())
    stages = run_doc["timings"]["stages"]
    assert stages["descriptor_seconds"] == 0.0
    assert stages["network_seconds"] > 0


def test_classify_from_cloud_matches_cached_ssm(trained, tmp_path):
    from_cloud = tmp_path / "pred-cloud.labels"
    # No --scales: the descriptor layout defaults to the network's own.
    assert main(["classify", "--weights", str(trained["weights"]),
                 "--cloud", str(trained["cloud"]), "--out", str(from_cloud),
                 "--ply", str(tmp_path / "pred.ply")]) == 0
    run_doc = json.loads((tmp_path / "classify.run.json").read_text())
    assert run_doc["timings"]["stages"]["descriptor_seconds"] > 0

    cached_dir = tmp_path / "cached"
    cached_dir.mkdir()
    from_ssm = cached_dir / "pred-ssm.labels"
    assert main(["classify", "--weights", str(trained["weights"]),
                 "--ssm", str(trained["ssm"]), "--out", str(from_ssm)]) == 0
    np.testing.assert_array_equal(load_labels(from_cloud),
                                  load_labels(from_ssm))
    assert (tmp_path / "pred.ply").exists()


def test_classify_feature_mismatch_is_data_error(trained, tmp_path):
    narrow = tmp_path / "narrow.ssm"
    assert main(["ssm", str(trained["cloud"]), "--out", str(narrow),
                 "--scales", "8", "--feature-set", "nocurvature3"]) == 0
    assert main(["classify", "--weights", str(trained["weights"]),
                 "--ssm", str(narrow),
                 "--out", str(tmp_path / "x.labels")]) == 3


# ---------------------------------------------------------------- evaluate


def test_evaluate_writes_report_files(trained, tmp_path):
    pred = tmp_path / "pred.labels"
    assert main(["classify", "--weights", str(trained["weights"]),
                 "--ssm", str(trained["ssm"]), "--out", str(pred)]) == 0
    out_dir = tmp_path / "report"
    assert main(["evaluate", "--predictions", str(pred),
                 "--truth", str(trained["labels"]),
                 "--name", "cube", "--out", str(out_dir)]) == 0
    with open(out_dir / "report.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2  # both positive rules
    assert {row["rule"] for row in rows} == {"sharp", "sharp+"}
    assert all(-1.0 <= float(row["mcc"]) <= 1.0 for row in rows)
    assert (out_dir / "report.json").exists()
    assert (out_dir / "pr_points.csv").exists()
    summary = json.loads((out_dir / "summary.json").read_text())
    assert "median" in summary


def test_evaluate_length_mismatch_is_data_error(trained, tmp_path):
    short = tmp_path / "short.labels"
    short.write_text("0\n1\n2\n")
    assert main(["evaluate", "--predictions", str(short),
                 "--truth", str(trained["labels"]),
                 "--name", "cube", "--out", str(tmp_path / "r")]) == 3


# ------------------------------------------------------------------ ablate


def test_ablate_produces_comparison_table(tmp_path):
    manifest_path, _ = tiny_manifest(tmp_path)
    out_dir = tmp_path / "ablation"
    assert main(["ablate", "--manifest", str(manifest_path),
                 "--out", str(out_dir), "--epochs", "3", "--scales", "4",
                 "--seed", "9"]) == 0
    with open(out_dir / "ablate.csv") as fh:
        rows = list(csv.DictReader(fh))
    configs = {(r["feature_set"], r["classes"]) for r in rows}
    assert configs == {("full28", "3"), ("invariant7", "3"),
                       ("standard6", "3"), ("noscale4", "3"),
                       ("nocurvature3", "3"), ("standard6", "2")}
    # eval clouds x both rules for every config
    assert len(rows) == 6 * 1 * 2
    with open(out_dir / "ablate_median.csv") as fh:
        medians = list(csv.DictReader(fh))
    assert len(medians) == 6 * 2


def test_ablate_single_feature_set(tmp_path):
    manifest_path, _ = tiny_manifest(tmp_path)
    out_dir = tmp_path / "single"
    assert main(["ablate", "--manifest", str(manifest_path),
                 "--out", str(out_dir), "--epochs", "2", "--scales", "4",
                 "--feature-set", "standard6", "--no-two-class"]) == 0
    with open(out_dir / "ablate.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert {(r["feature_set"], r["classes"]) for r in rows} == {
        ("standard6", "3")}


# --------------------------------------------------------------- benchmark


def test_benchmark_reports_both_stages(tmp_path):
    out = tmp_path / "bench.csv"
    assert main(["benchmark", "--points", "500", "--out", str(out),
                 "--scales", "4"]) == 0
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1
    row = rows[0]
    assert float(row["descriptor_points_per_s"]) > 0
    assert float(row["network_points_per_s"]) > 0
    assert float(row["network_points_per_s"]) > float(
        row["descriptor_points_per_s"])
    assert "descriptor_e_k" not in row  # no energy without a TDP rating

    with_tdp = tmp_path / "bench-tdp.csv"
    assert main(["benchmark", "--points", "500", "--out", str(with_tdp),
                 "--scales", "4", "--tdp-watts", "90"]) == 0
    with open(with_tdp) as fh:
        rows = list(csv.DictReader(fh))
    assert float(rows[0]["network_e_k"]) > 0
    assert float(rows[0]["descriptor_e_k"]) > float(rows[0]["network_e_k"])


def test_benchmark_zero_points_is_error(tmp_path):
    assert main(["benchmark", "--points", "0",
                 "--out", str(tmp_path / "bench.csv")]) == 3


# ------------------------------------------------------------------ replay


def test_replay_reproduces_outputs(tmp_path):
    cloud_path, _, _ = write_cube_ply(tmp_path, density=150.0)
    out = tmp_path / "cube.ssm"
    assert main(["ssm", str(cloud_path), "--out", str(out),
                 "--scales", "4"]) == 0
    original = out.read_bytes()
    out.unlink()
    assert main(["replay", str(tmp_path / "ssm.run.json")]) == 0
    assert out.read_bytes() == original


# ------------------------------------------------------------- exit codes


def test_unknown_command_is_usage_error():
    assert main(["frobnicate"]) == 2


def test_help_exits_cleanly():
    assert main(["--help"]) == 0
    assert main(["train", "--help"]) == 0
