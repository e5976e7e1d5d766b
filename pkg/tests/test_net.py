"""Neural engine against hand-coded oracles: naive per-point forward loops,
central finite differences of the loss, and closed-form optimizer series."""

import json

import numpy as np
import pytest

from cloudedges.errors import DataError, ParseError
from cloudedges.net import (Network, NetworkSpec, TrainConfig, build_network,
                            load_weights, loss_and_gradient, param_count,
                            predict, save_weights, sgd_momentum_step, train)
from cloudedges.net.layers import (Conv1DLayer, DenseLayer, FlattenLayer,
                                   GroupedDenseLayer)


def naive_sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.asarray(z, dtype=np.float64)))


def naive_softmax(z):
    e = np.exp(z - np.max(z))
    return e / e.sum()


def naive_forward(net, x):
    """Independent per-point evaluation by explicit loops over blocks,
    channels, and positions. Never calls the layer forward methods."""
    x = np.asarray(x, dtype=np.float64)
    if net.spec.architecture == "cnn":
        cur = x                      # channels = scales, length = features
        for layer in net.layers:
            if isinstance(layer, Conv1DLayer):
                f, c, k = layer.weights.shape
                pad = layer.padding
                length = cur.shape[1]
                out_len = length + 2 * pad - k + 1
                padded = np.zeros((c, length + 2 * pad))
                padded[:, pad:pad + length] = cur
                z = np.zeros((f, out_len))
                for fi in range(f):
                    for pos in range(out_len):
                        acc = layer.biases[fi]
                        for ci in range(c):
                            for ki in range(k):
                                acc += layer.weights[fi, ci, ki] * \
                                    padded[ci, pos + ki]
                        z[fi, pos] = acc
                cur = naive_sigmoid(z)
            elif isinstance(layer, FlattenLayer):
                cur = cur.reshape(-1)
            elif layer.activation == "softmax":
                return naive_softmax(layer.weights @ cur + layer.biases)
            else:
                cur = naive_sigmoid(layer.weights @ cur + layer.biases)
        raise AssertionError("no softmax head")
    if net.spec.architecture == "scaletree":
        vecs = [x[i] for i in range(x.shape[0])]
        tree = [l for l in net.layers if isinstance(l, GroupedDenseLayer)]
        for layer in tree:
            merged = []
            for g in range(len(vecs) // 2):
                cat = np.concatenate([vecs[2 * g], vecs[2 * g + 1]])
                merged.append(
                    naive_sigmoid(layer.weights[g] @ cat + layer.biases[g]))
            vecs = merged
        cur = np.concatenate(vecs)
        rest = net.layers[len(tree):]
    else:                            # fc
        cur = x.reshape(-1)
        rest = net.layers
    for layer in rest[:-1]:
        cur = naive_sigmoid(layer.weights @ cur + layer.biases)
    head = rest[-1]
    return naive_softmax(head.weights @ cur + head.biases)


# ----------------------------------------------------------- shape anchors

def test_parameter_counts_are_exact():
    # independent arithmetic:
    # tree: (8+4+2) blocks of (6x12+6) + mlp 12->16->16->3
    tree = (8 + 4 + 2) * (6 * 12 + 6)
    mlp = (16 * 12 + 16) + (16 * 16 + 16) + (3 * 16 + 3)
    assert tree + mlp == 1623
    assert param_count(NetworkSpec("scaletree")) == 1623

    fc = (48 * 96 + 48) + (24 * 48 + 24) + (12 * 24 + 12)
    assert fc + mlp == 6663
    assert param_count(NetworkSpec("fc")) == 6663

    conv = (15 * 16 * 6 + 15) + (15 * 15 * 5 + 15)
    dense = (75 * 75 + 75) + (15 * 75 + 15) + (15 * 15 + 15) + (3 * 15 + 3)
    assert conv + dense == 9723
    assert param_count(NetworkSpec("cnn")) == 9723

    # 2-class heads lose (classes_out x 16 + bias) minus the 2-wide version
    assert param_count(NetworkSpec("scaletree", classes=2)) == 1623 - 17
    # built networks agree with the arithmetic
    for arch, count in [("scaletree", 1623), ("fc", 6663), ("cnn", 9723)]:
        net = build_network(NetworkSpec(arch), seed=0)
        assert net.param_count == count
        assert net.get_flat().size == count


@pytest.mark.parametrize("num_scales,depth",
                         [(4, 1), (8, 2), (16, 3), (32, 4), (64, 5), (128, 6)])
def test_tree_depth_follows_scale_count(num_scales, depth):
    net = build_network(NetworkSpec("scaletree", num_scales=num_scales),
                        seed=0)
    tree = [l for l in net.layers if isinstance(l, GroupedDenseLayer)]
    assert len(tree) == depth
    assert tree[0].weights.shape[0] == num_scales // 2
    assert tree[-1].weights.shape[0] == 2   # always ends in a 12-wide concat


def test_scaletree_rejects_bad_scale_counts():
    for bad in (2, 6, 12, 17):
        with pytest.raises(DataError):
            NetworkSpec("scaletree", num_scales=bad)
    with pytest.raises(DataError):
        NetworkSpec("warp")
    with pytest.raises(DataError):
        NetworkSpec("scaletree", classes=4)


def test_cnn_first_conv_output_shape():
    net = build_network(NetworkSpec("cnn"), seed=1)
    conv = net.layers[0]
    assert conv.weights.shape == (15, 16, 6)
    x = np.random.default_rng(0).normal(size=(1, 16, 6))
    out = conv.forward(x)
    assert out.shape == (1, 15, 5)


# ------------------------------------------------------------- initializer

def test_glorot_bounds_and_statistics():
    a = np.sqrt(6.0 / (12 + 6))
    samples = []
    for seed in range(2):
        net = build_network(NetworkSpec("scaletree", num_scales=128),
                            seed=seed)
        for layer in net.layers:
            assert np.all(layer.biases == 0.0)
        for layer in net.layers:
            if isinstance(layer, GroupedDenseLayer):   # every block is 12->6
                assert np.abs(layer.weights).max() <= a
                assert np.abs(layer.weights).max() > 0.5 * a
                samples.append(layer.weights.ravel())
    pool = np.concatenate(samples)               # > 1e4 draws of U(-a, a)
    assert pool.size >= 10_000
    sigma = a / np.sqrt(3.0)
    assert abs(pool.mean()) < 3.0 * sigma / np.sqrt(pool.size)

    one = build_network(NetworkSpec("fc"), seed=7).get_flat()
    two = build_network(NetworkSpec("fc"), seed=7).get_flat()
    np.testing.assert_array_equal(one, two)
    assert not np.array_equal(
        one, build_network(NetworkSpec("fc"), seed=8).get_flat())


# ----------------------------------------------------------------- forward

def test_zero_network_predicts_uniform():
    net = build_network(NetworkSpec("scaletree"), seed=0)
    net.set_flat(np.zeros(net.param_count))
    p = net.forward(np.zeros((16, 6)))
    np.testing.assert_allclose(p, [1 / 3, 1 / 3, 1 / 3], atol=1e-12)


@pytest.mark.parametrize("arch", ["scaletree", "fc", "cnn"])
def test_probabilities_sum_to_one(arch):
    net = build_network(NetworkSpec(arch), seed=3)
    rng = np.random.default_rng(5)
    x = rng.normal(scale=2.0, size=(40, 16, 6))
    p = net.forward(x)
    assert p.shape == (40, 3)
    assert np.all(p >= 0)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)


@pytest.mark.parametrize("arch", ["scaletree", "fc", "cnn"])
def test_forward_matches_naive_oracle(arch):
    net = build_network(NetworkSpec(arch), seed=11)
    rng = np.random.default_rng(13)
    for _ in range(8):
        x = rng.normal(size=(16, 6))
        got = net.forward(x)
        want = naive_forward(net, x)
        np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-14)


def test_forward_rejects_dimension_mismatch():
    net = build_network(NetworkSpec("scaletree"), seed=0)
    with pytest.raises(DataError):
        net.forward(np.zeros((8, 6)))
    with pytest.raises(DataError):
        net.forward(np.zeros((16, 7)))


# ------------------------------------------------------------------- loss

def test_loss_analytic_values():
    net = build_network(NetworkSpec("scaletree"), seed=0)
    net.set_flat(np.zeros(net.param_count))
    x = np.zeros((4, 16, 6))
    y = np.zeros((4, 3))
    y[:, 1] = 1.0
    loss, _ = loss_and_gradient(net, x, y)
    assert abs(loss - np.log(3.0)) < 1e-12   # uniform prediction


def test_loss_gradient_matches_finite_differences():
    rng = np.random.default_rng(17)
    for arch in ("scaletree", "fc", "cnn"):
        net = build_network(NetworkSpec(arch), seed=19)
        worst = 0.0
        for trial in range(8):
            x = rng.normal(size=(5, 16, 6))
            y = np.eye(3)[rng.integers(0, 3, size=5)]
            _, grad = loss_and_gradient(net, x, y)
            flat = net.get_flat()
            for pi in rng.integers(0, flat.size, size=6):
                h = 1e-4
                for sgn, store in ((1, "up"), (-1, "down")):
                    probe = flat.copy()
                    probe[pi] += sgn * h
                    net.set_flat(probe)
                    val, _ = loss_and_gradient(net, x, y)
                    if sgn == 1:
                        up = val
                    else:
                        down = val
                net.set_flat(flat)
                fd = (up - down) / (2 * h)
                denom = max(abs(fd), abs(grad[pi]), 1e-8)
                worst = max(worst, abs(fd - grad[pi]) / denom)
        assert worst < 1e-4, f"{arch}: max rel err {worst}"


# -------------------------------------------------------------- optimizer

def test_sgd_momentum_against_closed_form():
    cfg = TrainConfig(learning_rate=0.01, momentum=0.9, epochs=1)
    net = build_network(NetworkSpec("scaletree"), seed=2)
    theta0 = net.get_flat().copy()

    # zero gradient: nothing moves
    vel = np.zeros(net.param_count)
    _, vel = sgd_momentum_step(net, np.zeros(net.param_count), vel, cfg)
    np.testing.assert_array_equal(net.get_flat(), theta0)

    # constant gradient, k steps: v_k = -lr g (1 - m^k) / (1 - m)
    g = np.full(net.param_count, 0.5)
    vel = np.zeros(net.param_count)
    for k in range(1, 6):
        _, vel = sgd_momentum_step(net, g, vel, cfg)
        expect = -0.01 * 0.5 * (1 - 0.9 ** k) / (1 - 0.9)
        np.testing.assert_allclose(vel, expect, rtol=1e-12)

    # momentum 0 reduces to plain SGD
    net.set_flat(theta0.copy())
    cfg0 = TrainConfig(learning_rate=0.01, momentum=0.0, epochs=1)
    _, _ = sgd_momentum_step(net, g, np.zeros(net.param_count), cfg0)
    np.testing.assert_allclose(net.get_flat(), theta0 - 0.01 * g, rtol=1e-12)


# --------------------------------------------------------------- training

def separable_block(m_per_class, seed, num_scales=16):
    rng = np.random.default_rng(seed)
    values = rng.normal(scale=0.15, size=(2 * m_per_class, num_scales, 6))
    values[:m_per_class] += 1.2
    values[m_per_class:] += 0.2
    labels = np.repeat([0, 1], m_per_class).astype(np.int64)
    perm = rng.permutation(2 * m_per_class)
    return values[perm], labels[perm]


def test_training_separates_two_clusters():
    values, labels = separable_block(1000, seed=23, num_scales=4)
    val_idx = np.arange(0, 2000, 6)
    net = build_network(NetworkSpec("scaletree", num_scales=4, classes=2),
                        seed=29)
    cfg = TrainConfig(epochs=50, seed=31, learning_rate=0.05)
    net, hist = train(net, values, labels, cfg, validation_indices=val_idx)
    assert hist.train_loss.shape == (50,)
    assert hist.val_accuracy[-1] >= 0.99
    # epoch-averaged loss settles monotonically after warm-up
    tail = hist.train_loss[5:]
    assert np.all(np.diff(tail) <= 1e-9)
    classes, scores = predict(net, values)
    assert (classes == labels).mean() >= 0.99
    assert scores.shape == (2000, 2)


def test_training_is_deterministic_and_epochs_zero_is_identity():
    values, labels = separable_block(120, seed=37)
    runs = []
    for _ in range(2):
        net = build_network(NetworkSpec("scaletree", classes=2), seed=41)
        net, hist = train(net, values, labels,
                          TrainConfig(epochs=4, seed=43))
        runs.append((net.get_flat().copy(), hist.train_loss.copy()))
    np.testing.assert_array_equal(runs[0][0], runs[1][0])
    np.testing.assert_array_equal(runs[0][1], runs[1][1])

    net = build_network(NetworkSpec("scaletree", classes=2), seed=41)
    before = net.get_flat().copy()
    net, hist = train(net, values, labels, TrainConfig(epochs=0, seed=1))
    np.testing.assert_array_equal(net.get_flat(), before)
    assert hist.train_loss.size == 0


def test_training_requires_every_class():
    values, labels = separable_block(50, seed=47)
    net = build_network(NetworkSpec("scaletree", classes=2), seed=0)
    with pytest.raises(DataError):
        train(net, values, np.zeros_like(labels), TrainConfig(epochs=1, seed=0))


def test_predict_subset_and_logit_shift_invariance():
    values, labels = separable_block(80, seed=53)
    net = build_network(NetworkSpec("scaletree", classes=2), seed=59)
    net, _ = train(net, values, labels, TrainConfig(epochs=10, seed=61))
    full_classes, full_scores = predict(net, values)
    sub_classes, sub_scores = predict(net, values, subset=[5])
    assert sub_classes.shape == (1,)
    assert sub_classes[0] == full_classes[5]
    np.testing.assert_allclose(sub_scores[0], full_scores[5], rtol=1e-6)

    # adding a constant to every output logit leaves the argmax unchanged
    head = net.layers[-1]
    head.biases += 7.5
    shifted, _ = predict(net, values)
    np.testing.assert_array_equal(shifted, full_classes)


# ----------------------------------------------------------- serialization

def test_weights_roundtrip_bit_exact(tmp_path):
    values, labels = separable_block(60, seed=67)
    net = build_network(NetworkSpec("scaletree", classes=2), seed=71)
    net, _ = train(net, values, labels, TrainConfig(epochs=2, seed=73))
    path = tmp_path / "weights.json"
    save_weights(net, path)
    back = load_weights(path)
    np.testing.assert_array_equal(back.get_flat(), net.get_flat())
    assert back.spec == net.spec
    assert back.training_meta["epochs"] == 2
    p_old = net.forward(values[0])
    p_new = back.forward(values[0])
    np.testing.assert_array_equal(p_old, p_new)


def test_load_weights_rejects_bad_files(tmp_path):
    net = build_network(NetworkSpec("fc"), seed=0)
    path = tmp_path / "weights.json"
    save_weights(net, path)
    doc = json.loads(path.read_text())

    wrong_version = dict(doc, formatVersion=99)
    bad1 = tmp_path / "v.json"
    bad1.write_text(json.dumps(wrong_version))
    with pytest.raises(ParseError):
        load_weights(bad1)

    clipped = json.loads(path.read_text())
    clipped["layers"][0]["weights"] = clipped["layers"][0]["weights"][:-1]
    bad2 = tmp_path / "s.json"
    bad2.write_text(json.dumps(clipped))
    with pytest.raises(ParseError):
        load_weights(bad2)

    bad3 = tmp_path / "j.json"
    bad3.write_text("{not json")
    with pytest.raises(ParseError):
        load_weights(bad3)


# ---------------------------------------------------------- fast-path parity

def test_fast_training_path_matches_reference():
    fastloop = pytest.importorskip("cloudedges.net.fastloop")
    values, labels = separable_block(90, seed=79)
    cfg = TrainConfig(epochs=3, seed=83)
    val_idx = np.arange(0, 180, 9)

    nets = []
    hists = []
    for use_fast in (False, True):
        net = build_network(NetworkSpec("scaletree", classes=2), seed=89)
        net, hist = train(net, values, labels, cfg,
                          validation_indices=val_idx, use_fast=use_fast)
        nets.append(net.get_flat().copy())
        hists.append(hist)
    scale = np.abs(nets[0]).max()
    assert np.abs(nets[0] - nets[1]).max() < 1e-9 * max(scale, 1.0)
    np.testing.assert_allclose(hists[0].train_loss, hists[1].train_loss,
                               rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(hists[0].val_accuracy, hists[1].val_accuracy,
                               rtol=0, atol=0)
