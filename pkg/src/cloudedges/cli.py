"""Batch command-line interface.

Every command writes a small run manifest (``<command>.run.json``) next to
its outputs: the canonical argument vector, the files read and written, the
seeds involved, and wall-clock timings with descriptor (geometry) time and
network time reported separately.  ``cloudedges replay <run.json>`` re-runs
the recorded command; outputs are byte-identical on replay (timings in the
manifest itself are the one exception, since they measure the machine).

Exit codes: 0 success, 2 usage error, 3 bad or inconsistent data,
4 numerical failure.
"""

import csv
import json
import sys
import time
from pathlib import Path

import click
from click.core import ParameterSource
import numpy as np

from .cloud import (estimate_normals, load_cloud, load_labels, save_cloud,
                    save_labels)
from .data import (generate_dataset, load_manifest, default_manifest,
                   dataset_stats, gen_primitive, realize_entry,
                   save_manifest, split_validation, to_two_class)
from .descriptor import (FeatureSet, FitMethod, build_scale_sampling,
                         build_ssm, load_ssm, save_ssm)
from .errors import DataError, NumericError, ParseError
from .metrics import (POSITIVE_RULES, REPORT_COLUMNS, RULE_DISPLAY,
                      SCORE_KEYS, aggregate, confusion, energy_report,
                      evaluation_row, write_pr_points_csv, write_report_csv,
                      write_report_json)
from .net import (NetworkSpec, TrainConfig, build_network, load_weights,
                  predict, save_weights, train)
from .net.model import ARCHITECTURES

_FEATURE_LABELS = tuple(fs.label for fs in FeatureSet)
_FIT_LABELS = tuple(fm.label for fm in FitMethod)
_RULE_CHOICES = POSITIVE_RULES + ("both",)


# ------------------------------------------------------------------ helpers


def _fnum(value) -> str:
    """Full-precision decimal text that round-trips through float()."""
    return repr(float(value))


def _write_run_manifest(directory, command, argv, *, inputs, outputs,
                        seeds=None, stages=None, wall=0.0, extra=None):
    doc = {
        "command": command,
        "argv": [str(a) for a in argv],
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "seeds": dict(seeds or {}),
        "timings": {"wall_seconds": wall, "stages": dict(stages or {})},
    }
    if extra:
        doc.update(extra)
    path = Path(directory) / f"{command}.run.json"
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _load_cloud_checked(path, estimate, normal_k):
    cloud = load_cloud(path)
    if not cloud.has_normals:
        if not estimate:
            raise DataError(
                f"{path}: cloud has no normals; pass --estimate-normals "
                "to compute them from local neighbourhoods")
        cloud = estimate_normals(cloud, k=normal_k)
    return cloud


def _resolve_sampling(cloud, scales, smin, smax):
    return build_scale_sampling(cloud, n=scales, s_min=smin, s_max=smax)


def _scale_options(fn):
    decorators = [
        click.option("--scales", type=int, default=16, show_default=True,
                     help="Number of geometrically spaced analysis scales."),
        click.option("--smin", type=float, default=None,
                     help="Smallest scale (default: mean point spacing)."),
        click.option("--smax", type=float, default=None,
                     help="Largest scale (default: 10% of the bounding-box "
                          "diagonal)."),
        click.option("--feature-set", "feature_set",
                     type=click.Choice(_FEATURE_LABELS), default="standard6",
                     show_default=True,
                     help="Which per-scale feature columns to keep."),
        click.option("--fit", "fit_method", type=click.Choice(_FIT_LABELS),
                     default="apss", show_default=True,
                     help="Local surface fit used for the descriptors."),
    ]
    for dec in reversed(decorators):
        fn = dec(fn)
    return fn


def _normal_options(fn):
    fn = click.option("--normal-k", type=int, default=16, show_default=True,
                      help="Neighbourhood size for normal estimation.")(fn)
    fn = click.option("--estimate-normals", is_flag=True,
                      help="Estimate normals when the input has none.")(fn)
    return fn


def _concat_training_data(ssm_paths, label_paths):
    if len(ssm_paths) != len(label_paths):
        raise click.UsageError(
            "--ssm and --labels must be given the same number of times")
    matrices, labels = [], []
    first = None
    for spath, lpath in zip(ssm_paths, label_paths):
        matrix = load_ssm(spath)
        lab = load_labels(lpath)
        if lab.shape[0] != matrix.values.shape[0]:
            raise DataError(
                f"{lpath}: {lab.shape[0]} labels for "
                f"{matrix.values.shape[0]} descriptor rows in {spath}")
        if first is None:
            first = matrix
        elif (matrix.feature_set is not first.feature_set
              or matrix.values.shape[1:] != first.values.shape[1:]):
            raise DataError(
                f"{spath}: descriptor layout differs from {ssm_paths[0]} "
                "(feature set and scale count must match)")
        matrices.append(matrix.values)
        labels.append(lab)
    values = np.concatenate(matrices, axis=0)
    return first, values, np.concatenate(labels, axis=0)


def _check_matrix_for_network(matrix, net):
    spec = net.spec
    if matrix.values.shape[1] != spec.num_scales:
        raise DataError(
            f"descriptor has {matrix.values.shape[1]} scales but the "
            f"network expects {spec.num_scales}")
    target = FeatureSet.from_label(spec.feature_set)
    if matrix.feature_set is target:
        return matrix.values
    return matrix.select(target).values  # raises DataError when impossible


def _write_history_csv(history, path):
    def cell(value):
        return "" if np.isnan(value) else _fnum(value)

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "train_accuracy",
                         "val_loss", "val_accuracy"])
        for i in range(history.epochs):
            writer.writerow([i + 1,
                             _fnum(history.train_loss[i]),
                             _fnum(history.train_accuracy[i]),
                             cell(history.val_loss[i]),
                             cell(history.val_accuracy[i])])


def _write_rows_csv(rows, columns, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns))
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


# -------------------------------------------------------------------- group


@click.group(name="cloudedges")
def cli():
    """Edge detection for point clouds: multi-scale surface descriptors
    feeding small per-point classifiers."""


# ----------------------------------------------------------------- generate


@cli.command()
@click.option("--manifest", "manifest_path", type=click.Path(), default=None,
              help="Dataset manifest (JSON list of generator entries).")
@click.option("--default", "use_default", is_flag=True,
              help="Use the built-in training/evaluation recipe.")
@click.option("--out", "out_dir", type=click.Path(), required=True,
              help="Directory that receives clouds, labels, and manifest.")
def generate(manifest_path, use_default, out_dir):
    """Synthesize labelled point clouds from a dataset manifest."""
    if use_default == (manifest_path is not None):
        raise click.UsageError(
            "pass exactly one of --manifest or --default")
    entries = default_manifest() if use_default else load_manifest(
        manifest_path)
    if not entries:
        raise click.UsageError(f"{manifest_path}: manifest has no entries")

    out = Path(out_dir)
    start = time.perf_counter()
    realized = generate_dataset(entries, out)
    wall = time.perf_counter() - start
    saved_manifest = out / "manifest.json"
    save_manifest(entries, saved_manifest)

    outputs = [saved_manifest]
    for entry, labeled in zip(entries, realized):
        outputs += [out / entry["files"]["cloud"],
                    out / entry["files"]["labels"]]
        stats = dataset_stats(labeled)
        click.echo(f"{entry['name']}: {stats['total']} points, "
                   f"{stats['percent']['sharp_edge']:.1f}% sharp, "
                   f"{stats['percent']['smooth_edge']:.1f}% smooth")

    argv = ["generate", "--manifest", str(saved_manifest),
            "--out", str(out)]
    _write_run_manifest(out, "generate", argv,
                        inputs=[] if use_default else [manifest_path],
                        outputs=outputs,
                        seeds={e["name"]: e["seed"] for e in entries},
                        stages={"generate_seconds": wall}, wall=wall)


# ---------------------------------------------------------------------- ssm


@cli.command()
@click.argument("cloud_path", type=click.Path(exists=True))
@click.option("--out", "out_path", type=click.Path(), required=True,
              help="Destination descriptor cache file.")
@_scale_options
@_normal_options
def ssm(cloud_path, out_path, scales, smin, smax, feature_set, fit_method,
        estimate_normals, normal_k):
    """Precompute the multi-scale descriptor stack for one cloud."""
    start = time.perf_counter()
    cloud = _load_cloud_checked(cloud_path, estimate_normals, normal_k)
    sampling = _resolve_sampling(cloud, scales, smin, smax)
    fs = FeatureSet.from_label(feature_set)
    fm = FitMethod.from_label(fit_method)

    t0 = time.perf_counter()
    matrix = build_ssm(cloud, sampling, feature_set=fs, fit_method=fm)
    descriptor_seconds = time.perf_counter() - t0
    out = Path(out_path)
    save_ssm(matrix, out)
    wall = time.perf_counter() - start

    rate = len(cloud) / descriptor_seconds if descriptor_seconds else 0.0
    click.echo(f"{out}: {len(cloud)} points x {scales} scales x "
               f"{fs.width} features ({rate:,.0f} points/s)")
    argv = ["ssm", str(cloud_path), "--out", str(out),
            "--scales", str(scales),
            "--smin", _fnum(sampling.s_min), "--smax", _fnum(sampling.s_max),
            "--feature-set", fs.label, "--fit", fm.label]
    if estimate_normals:
        argv += ["--estimate-normals", "--normal-k", str(normal_k)]
    _write_run_manifest(out.parent, "ssm", argv,
                        inputs=[cloud_path], outputs=[out],
                        stages={"descriptor_seconds": descriptor_seconds},
                        wall=wall,
                        extra={"points": len(cloud),
                               "skipped": len(matrix.skipped)})


# -------------------------------------------------------------------- train


@cli.command(name="train")
@click.option("--ssm", "ssm_paths", type=click.Path(exists=True),
              multiple=True, required=True,
              help="Descriptor cache (repeat to pool several clouds).")
@click.option("--labels", "label_paths", type=click.Path(exists=True),
              multiple=True, required=True,
              help="Label file matching each --ssm, in order.")
@click.option("--out", "weights_path", type=click.Path(), required=True,
              help="Destination weight file.")
@click.option("--history", "history_path", type=click.Path(), required=True,
              help="Destination per-epoch history CSV.")
@click.option("--arch", type=click.Choice(ARCHITECTURES),
              default="scaletree", show_default=True)
@click.option("--classes", type=int, default=3, show_default=True)
@click.option("--smooth-to", type=click.Choice(["non_edge", "sharp_edge"]),
              default="non_edge", show_default=True,
              help="Where the smooth-edge class goes when --classes 2.")
@click.option("--epochs", type=int, default=200, show_default=True)
@click.option("--lr", type=float, default=0.01, show_default=True)
@click.option("--momentum", type=float, default=0.9, show_default=True)
@click.option("--batch", type=int, default=100, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--val-per-class", type=int, default=0, show_default=True,
              help="Monitor this many points per class during training.")
def train_cmd(ssm_paths, label_paths, weights_path, history_path, arch,
              classes, smooth_to, epochs, lr, momentum, batch, seed,
              val_per_class):
    """Train a classifier on precomputed descriptors and labels."""
    start = time.perf_counter()
    first, values, labels = _concat_training_data(ssm_paths, label_paths)
    if classes == 2:
        labels = to_two_class(labels, smooth_to=smooth_to)

    spec = NetworkSpec(arch, num_scales=values.shape[1],
                       feature_width=values.shape[2], classes=classes,
                       feature_set=first.feature_set.label)
    network = build_network(spec, seed)
    config = TrainConfig(learning_rate=lr, momentum=momentum,
                         batch_size=batch, epochs=epochs, seed=seed)
    validation = None
    if val_per_class > 0:
        _, validation = _split_indices(labels, val_per_class, seed)

    t0 = time.perf_counter()
    network, history = train(network, values, labels, config,
                             validation_indices=validation)
    network_seconds = time.perf_counter() - t0

    save_weights(network, weights_path)
    _write_history_csv(history, history_path)
    wall = time.perf_counter() - start

    click.echo(f"{weights_path}: {network.param_count} parameters, "
               f"final loss {history.train_loss[-1]:.4f}, "
               f"balanced accuracy {history.train_accuracy[-1]:.4f}")
    argv = ["train"]
    for spath, lpath in zip(ssm_paths, label_paths):
        argv += ["--ssm", str(spath), "--labels", str(lpath)]
    argv += ["--out", str(weights_path), "--history", str(history_path),
             "--arch", arch, "--classes", str(classes),
             "--smooth-to", smooth_to, "--epochs", str(epochs),
             "--lr", _fnum(lr), "--momentum", _fnum(momentum),
             "--batch", str(batch), "--seed", str(seed),
             "--val-per-class", str(val_per_class)]
    _write_run_manifest(Path(weights_path).parent, "train", argv,
                        inputs=list(ssm_paths) + list(label_paths),
                        outputs=[weights_path, history_path],
                        seeds={"init": seed, "batches": seed},
                        stages={"network_seconds": network_seconds},
                        wall=wall,
                        extra={"points": int(values.shape[0]),
                               "parameters": network.param_count})


def _split_indices(labels, per_class, seed):
    """Per-class monitoring subset without needing a cloud object."""
    rng = np.random.default_rng(seed)
    chosen = []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if idx.size < per_class:
            raise DataError(
                f"class {int(cls)} has {idx.size} points, "
                f"need {per_class} for validation")
        chosen.append(rng.choice(idx, size=per_class, replace=False))
    val = np.sort(np.concatenate(chosen))
    return np.arange(labels.shape[0]), val


# ----------------------------------------------------------------- classify


@cli.command()
@click.option("--weights", "weights_path", type=click.Path(exists=True),
              required=True, help="Weight file produced by train.")
@click.option("--cloud", "cloud_path", type=click.Path(exists=True),
              default=None, help="Raw cloud; descriptors are built here.")
@click.option("--ssm", "ssm_path", type=click.Path(exists=True),
              default=None, help="Cached descriptors (skips geometry).")
@click.option("--out", "out_path", type=click.Path(), required=True,
              help="Destination label file.")
@click.option("--ply", "ply_path", type=click.Path(), default=None,
              help="Also write the cloud with predicted labels embedded.")
@_scale_options
@_normal_options
def classify(weights_path, cloud_path, ssm_path, out_path, ply_path, scales,
             smin, smax, feature_set, fit_method, estimate_normals,
             normal_k):
    """Label every point of a cloud with a trained classifier."""
    if (cloud_path is None) == (ssm_path is None):
        raise click.UsageError("pass exactly one of --cloud or --ssm")
    if ply_path is not None and cloud_path is None:
        raise click.UsageError("--ply needs --cloud (the geometry to save)")

    start = time.perf_counter()
    network = load_weights(weights_path)

    argv = ["classify", "--weights", str(weights_path)]
    if ssm_path is not None:
        matrix = load_ssm(ssm_path)
        descriptor_seconds = 0.0  # cached: geometry stage already paid for
        argv += ["--ssm", str(ssm_path)]
    else:
        # Descriptor layout defaults to what the classifier was trained on.
        ctx = click.get_current_context()
        if ctx.get_parameter_source("scales") == ParameterSource.DEFAULT:
            scales = network.spec.num_scales
        if ctx.get_parameter_source("feature_set") == ParameterSource.DEFAULT:
            feature_set = network.spec.feature_set
        cloud = _load_cloud_checked(cloud_path, estimate_normals, normal_k)
        sampling = _resolve_sampling(cloud, scales, smin, smax)
        fs = FeatureSet.from_label(feature_set)
        fm = FitMethod.from_label(fit_method)
        t0 = time.perf_counter()
        matrix = build_ssm(cloud, sampling, feature_set=fs, fit_method=fm)
        descriptor_seconds = time.perf_counter() - t0
        argv += ["--cloud", str(cloud_path), "--scales", str(scales),
                 "--smin", _fnum(sampling.s_min),
                 "--smax", _fnum(sampling.s_max),
                 "--feature-set", fs.label, "--fit", fm.label]
        if estimate_normals:
            argv += ["--estimate-normals", "--normal-k", str(normal_k)]

    values = _check_matrix_for_network(matrix, network)
    t0 = time.perf_counter()
    pred, _ = predict(network, values)
    network_seconds = time.perf_counter() - t0

    save_labels(pred, out_path)
    outputs = [out_path]
    if ply_path is not None:
        save_cloud(cloud, ply_path, labels=pred)
        outputs.append(ply_path)
        argv += ["--ply", str(ply_path)]
    argv += ["--out", str(out_path)]
    wall = time.perf_counter() - start

    counts = np.bincount(pred, minlength=network.spec.classes)
    rate = (pred.shape[0] / network_seconds) if network_seconds else 0.0
    click.echo(f"{out_path}: {pred.shape[0]} points "
               f"{counts.tolist()} per class ({rate:,.0f} points/s "
               "through the network)")
    _write_run_manifest(
        Path(out_path).parent, "classify", argv,
        inputs=[p for p in (weights_path, cloud_path, ssm_path) if p],
        outputs=outputs,
        stages={"descriptor_seconds": descriptor_seconds,
                "network_seconds": network_seconds},
        wall=wall, extra={"points": int(pred.shape[0])})


# ----------------------------------------------------------------- evaluate


@cli.command()
@click.option("--predictions", "pred_paths", type=click.Path(exists=True),
              multiple=True, required=True)
@click.option("--truth", "truth_paths", type=click.Path(exists=True),
              multiple=True, required=True)
@click.option("--name", "names", multiple=True,
              help="Display name per prediction/truth pair.")
@click.option("--rule", type=click.Choice(_RULE_CHOICES), default="both",
              show_default=True,
              help="Which labels count as edge-positive.")
@click.option("--out", "out_dir", type=click.Path(), required=True)
def evaluate(pred_paths, truth_paths, names, rule, out_dir):
    """Score predicted labels against ground truth."""
    if len(pred_paths) != len(truth_paths):
        raise click.UsageError(
            "--predictions and --truth must be given the same number "
            "of times")
    if names and len(names) != len(pred_paths):
        raise click.UsageError("--name must match the number of pairs")
    if not names:
        names = tuple(Path(p).stem for p in pred_paths)
    rules = POSITIVE_RULES if rule == "both" else (rule,)

    start = time.perf_counter()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for pred_path, truth_path, name in zip(pred_paths, truth_paths, names):
        pred = load_labels(pred_path)
        truth = load_labels(truth_path)
        for r in rules:
            rows.append(evaluation_row(name, r, confusion(pred, truth, r)))

    write_report_csv(rows, out / "report.csv")
    write_report_json(rows, out / "report.json")
    summary = {}
    for r in rules:
        display = RULE_DISPLAY[r]
        agg = aggregate([row for row in rows if row["rule"] == display])
        summary[display] = agg["median"]
        write_pr_points_csv(agg["points"],
                            out / f"pr_points_{r}.csv")
    write_pr_points_csv([(row["precision"], row["recall"]) for row in rows],
                        out / "pr_points.csv")
    with open(out / "summary.json", "w") as fh:
        json.dump({"median": summary}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    wall = time.perf_counter() - start

    for row in rows:
        click.echo(f"{row['cloud']} [{row['rule']}]: "
                   f"mcc {row['mcc']:.4f}, f1 {row['f1']:.4f}, "
                   f"iou {row['iou']:.4f}")
    argv = ["evaluate"]
    for pred_path, truth_path in zip(pred_paths, truth_paths):
        argv += ["--predictions", str(pred_path), "--truth", str(truth_path)]
    for name in names:
        argv += ["--name", name]
    argv += ["--rule", rule, "--out", str(out)]
    _write_run_manifest(out, "evaluate", argv,
                        inputs=list(pred_paths) + list(truth_paths),
                        outputs=[out / "report.csv", out / "report.json",
                                 out / "pr_points.csv",
                                 out / "summary.json"],
                        wall=wall)


# ------------------------------------------------------------------- ablate


@cli.command()
@click.option("--manifest", "manifest_path", type=click.Path(exists=True),
              default=None)
@click.option("--default", "use_default", is_flag=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--feature-set", "only_feature_set",
              type=click.Choice(_FEATURE_LABELS), default=None,
              help="Restrict the sweep to one feature set.")
@click.option("--two-class/--no-two-class", default=True,
              show_default=True,
              help="Also train a two-class variant for comparison.")
@click.option("--arch", type=click.Choice(ARCHITECTURES),
              default="scaletree", show_default=True)
@click.option("--scales", type=int, default=16, show_default=True)
@click.option("--fit", "fit_method", type=click.Choice(_FIT_LABELS),
              default="apss", show_default=True)
@click.option("--epochs", type=int, default=200, show_default=True)
@click.option("--lr", type=float, default=0.01, show_default=True)
@click.option("--momentum", type=float, default=0.9, show_default=True)
@click.option("--batch", type=int, default=100, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def ablate(manifest_path, use_default, out_dir, only_feature_set, two_class,
           arch, scales, fit_method, epochs, lr, momentum, batch, seed):
    """Feature-set sweep: shared data and seeds, one comparison table.

    Descriptors are computed once at full width and narrowed per run, so
    every variant sees exactly the same geometry.
    """
    if use_default == (manifest_path is not None):
        raise click.UsageError("pass exactly one of --manifest or --default")
    entries = default_manifest() if use_default else load_manifest(
        manifest_path)
    train_entries = [e for e in entries if e["role"] == "train"]
    eval_entries = [e for e in entries if e["role"] == "eval"]
    if not train_entries or not eval_entries:
        raise DataError(
            "ablation needs at least one train entry and one eval entry")

    start = time.perf_counter()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fm = FitMethod.from_label(fit_method)

    def realize_with_ssm(entry):
        labeled = realize_entry(entry)
        sampling = _resolve_sampling(labeled.cloud, scales, None, None)
        matrix = build_ssm(labeled.cloud, sampling,
                           feature_set=FeatureSet.FULL28, fit_method=fm)
        return labeled, matrix

    t0 = time.perf_counter()
    train_data = [realize_with_ssm(e) for e in train_entries]
    eval_data = [(e["name"],) + realize_with_ssm(e) for e in eval_entries]
    descriptor_seconds = time.perf_counter() - t0

    train_labels3 = np.concatenate(
        [lab.labels for lab, _ in train_data], axis=0)

    if only_feature_set is not None:
        sweep = [FeatureSet.from_label(only_feature_set)]
    else:
        sweep = [FeatureSet.FULL28, FeatureSet.INVARIANT7,
                 FeatureSet.STANDARD6, FeatureSet.NOSCALE4,
                 FeatureSet.NOCURVATURE3]
    configs = [(fs, 3) for fs in sweep]
    if two_class:
        two_fs = (FeatureSet.from_label(only_feature_set)
                  if only_feature_set is not None else FeatureSet.STANDARD6)
        configs.append((two_fs, 2))

    rows, median_rows = [], []
    network_seconds = 0.0
    for fs, classes in configs:
        values = np.concatenate(
            [matrix.select(fs).values for _, matrix in train_data], axis=0)
        labels = (to_two_class(train_labels3) if classes == 2
                  else train_labels3)
        spec = NetworkSpec(arch, num_scales=scales, feature_width=fs.width,
                           classes=classes, feature_set=fs.label)
        network = build_network(spec, seed)
        config = TrainConfig(learning_rate=lr, momentum=momentum,
                             batch_size=batch, epochs=epochs, seed=seed)
        t0 = time.perf_counter()
        network, history = train(network, values, labels, config)
        per_rule = {r: [] for r in POSITIVE_RULES}
        for name, labeled, matrix in eval_data:
            pred, _ = predict(network, matrix.select(fs).values)
            for r in POSITIVE_RULES:
                row = evaluation_row(name, r,
                                     confusion(pred, labeled.labels, r))
                row = {"feature_set": fs.label, "classes": classes, **row}
                rows.append(row)
                per_rule[r].append(row)
        network_seconds += time.perf_counter() - t0
        for r in POSITIVE_RULES:
            agg = aggregate(per_rule[r])
            median_rows.append({"feature_set": fs.label, "classes": classes,
                                "rule": per_rule[r][0]["rule"],
                                **agg["median"]})
        click.echo(f"{fs.label}/{classes}-class: final loss "
                   f"{history.train_loss[-1]:.4f}, median mcc "
                   f"{median_rows[-2]['mcc']:.4f} (sharp rule)")

    _write_rows_csv(rows, ("feature_set", "classes") + REPORT_COLUMNS,
                    out / "ablate.csv")
    _write_rows_csv(median_rows,
                    ("feature_set", "classes", "rule") + SCORE_KEYS,
                    out / "ablate_median.csv")
    wall = time.perf_counter() - start

    argv = ["ablate"]
    argv += (["--default"] if use_default
             else ["--manifest", str(manifest_path)])
    argv += ["--out", str(out)]
    if only_feature_set is not None:
        argv += ["--feature-set", only_feature_set]
    argv += ["--two-class" if two_class else "--no-two-class",
             "--arch", arch, "--scales", str(scales), "--fit", fm.label,
             "--epochs", str(epochs), "--lr", _fnum(lr),
             "--momentum", _fnum(momentum), "--batch", str(batch),
             "--seed", str(seed)]
    _write_run_manifest(out, "ablate", argv,
                        inputs=[manifest_path] if manifest_path else [],
                        outputs=[out / "ablate.csv",
                                 out / "ablate_median.csv"],
                        seeds={"init": seed, "batches": seed},
                        stages={"descriptor_seconds": descriptor_seconds,
                                "network_seconds": network_seconds},
                        wall=wall)


# ---------------------------------------------------------------- benchmark


@cli.command()
@click.option("--points", "point_counts", type=int, multiple=True,
              required=True, help="Cloud size to benchmark (repeatable).")
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--arch", type=click.Choice(ARCHITECTURES),
              default="scaletree", show_default=True)
@click.option("--scales", type=int, default=16, show_default=True)
@click.option("--feature-set", "feature_set",
              type=click.Choice(_FEATURE_LABELS), default="standard6",
              show_default=True)
@click.option("--fit", "fit_method", type=click.Choice(_FIT_LABELS),
              default="apss", show_default=True)
@click.option("--tdp-watts", type=float, default=None,
              help="CPU power rating; adds per-kilopoint energy columns.")
@click.option("--seed", type=int, default=0, show_default=True)
def benchmark(point_counts, out_path, arch, scales, feature_set, fit_method,
              tdp_watts, seed):
    """Time the descriptor stage and the network stage separately."""
    for n in point_counts:
        if n <= 0:
            raise DataError(f"benchmark needs a positive point count, "
                            f"got {n}")
    fs = FeatureSet.from_label(feature_set)
    fm = FitMethod.from_label(fit_method)
    start = time.perf_counter()

    rows = []
    for n in point_counts:
        labeled = gen_primitive("cube", n / 6.0, seed=seed)
        cloud = labeled.cloud
        m = len(cloud)
        sampling = _resolve_sampling(cloud, scales, None, None)
        t0 = time.perf_counter()
        matrix = build_ssm(cloud, sampling, feature_set=fs, fit_method=fm)
        descriptor_seconds = time.perf_counter() - t0

        spec = NetworkSpec(arch, num_scales=scales, feature_width=fs.width,
                           feature_set=fs.label)
        network = build_network(spec, seed)
        predict(network, matrix.values[:min(m, 256)])  # warm the code path
        t0 = time.perf_counter()
        predict(network, matrix.values)
        network_seconds = time.perf_counter() - t0

        row = {"points": m,
               "descriptor_seconds": _fnum(descriptor_seconds),
               "descriptor_points_per_s": _fnum(m / descriptor_seconds),
               "network_seconds": _fnum(network_seconds),
               "network_points_per_s": _fnum(m / network_seconds)}
        if tdp_watts is not None:
            for stage, seconds in (("descriptor", descriptor_seconds),
                                   ("network", network_seconds)):
                report = energy_report(tdp_watts, seconds, m)
                row[f"{stage}_t_k"] = _fnum(report.t_k)
                row[f"{stage}_e_k"] = _fnum(report.e_k)
        rows.append(row)
        click.echo(f"{m} points: descriptors "
                   f"{float(row['descriptor_points_per_s']):,.0f} points/s, "
                   f"network "
                   f"{float(row['network_points_per_s']):,.0f} points/s")

    columns = list(rows[0].keys())
    _write_rows_csv(rows, columns, out_path)
    wall = time.perf_counter() - start
    argv = ["benchmark"]
    for n in point_counts:
        argv += ["--points", str(n)]
    argv += ["--out", str(out_path), "--arch", arch,
             "--scales", str(scales), "--feature-set", fs.label,
             "--fit", fm.label, "--seed", str(seed)]
    if tdp_watts is not None:
        argv += ["--tdp-watts", _fnum(tdp_watts)]
    _write_run_manifest(Path(out_path).parent, "benchmark", argv,
                        inputs=[], outputs=[out_path],
                        seeds={"cloud": seed, "init": seed}, wall=wall)


# -------------------------------------------------------------------- serve


@cli.command()
@click.option("--state-dir", type=click.Path(), required=True,
              help="Directory where sessions persist across restarts.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8765, show_default=True)
@click.option("--max-points", type=int, default=2_000_000,
              show_default=True, help="Largest accepted upload.")
def serve(state_dir, host, port, max_points):
    """Run the interactive annotation service (HTTP, /api/v1)."""
    import uvicorn

    from .service import create_app

    app = create_app(state_dir, max_points=max_points)
    click.echo(f"serving on http://{host}:{port}{'' if port else ''} "
               f"(state in {state_dir})")
    uvicorn.run(app, host=host, port=port, log_level="info")


# ------------------------------------------------------------------- replay


@cli.command()
@click.argument("run_manifest", type=click.Path(exists=True))
def replay(run_manifest):
    """Re-run a previously recorded command from its run manifest."""
    try:
        with open(run_manifest) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(str(exc), path=run_manifest) from exc
    argv = doc.get("argv")
    if not isinstance(argv, list) or not argv:
        raise DataError(f"{run_manifest}: no argv recorded")
    click.echo("replaying: " + " ".join(argv))
    _dispatch([str(a) for a in argv])


# -------------------------------------------------------------- entry point


def _dispatch(argv):
    cli.main(args=list(argv), prog_name="cloudedges",
             standalone_mode=False)


def main(argv=None) -> int:
    """Run the CLI and map package errors onto exit codes."""
    if argv is None:
        argv = sys.argv[1:]
    try:
        _dispatch(argv)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.ClickException as exc:
        exc.show()
        return 2
    except DataError as exc:  # ParseError included
        click.echo(f"error: {exc}", err=True)
        return 3
    except NumericError as exc:
        click.echo(f"error: {exc}", err=True)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
