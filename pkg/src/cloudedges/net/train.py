"""Training loop (cross-entropy, SGD with momentum, balanced batches),
prediction, and the gradient entry point used by the optimizer.

Balanced batches: each epoch, every class' training indices are
replicated (cyclically) up to the largest class count, the pooled
indices are shuffled, and batches are consecutive slices. Validation
metrics use the same class-equalizing replication but without
shuffling, so they are deterministic for a fixed index set.

A compiled fast path (see fastloop) handles architectures made solely
of dense/grouped-dense layers; it follows the same arithmetic as the
reference path and is cross-checked against it in the test suite.
"""

import dataclasses

import numpy as np

from ..errors import DataError

try:
    from . import fastloop
except ImportError:                  # numba not installed
    fastloop = None

PROB_FLOOR = 1e-12


@dataclasses.dataclass
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 100
    epochs: int = 200
    seed: int = 0
    balanced_batches: bool = True

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or \
                self.epochs < 0 or self.momentum < 0:
            raise DataError("hyperparameters out of range")


@dataclasses.dataclass
class TrainHistory:
    """Per-epoch averages; validation entries are NaN when no validation
    indices were supplied."""

    train_loss: np.ndarray
    train_accuracy: np.ndarray       # balanced (mean per-class recall)
    val_loss: np.ndarray
    val_accuracy: np.ndarray

    @property
    def epochs(self):
        return self.train_loss.size


def loss_and_gradient(network, inputs, targets):
    """Mean cross-entropy over the batch and the flat parameter gradient."""
    x, single = network.prepare_input(inputs)
    targets = np.asarray(targets, dtype=np.float64)
    if single:
        targets = targets.reshape(1, -1)
    if targets.shape != (x.shape[0], network.spec.classes):
        raise DataError(
            f"targets must be one-hot ({x.shape[0]}, "
            f"{network.spec.classes}), got {targets.shape}")
    cur = x
    for layer in network.layers:
        cur = layer.forward(cur)
    probs = cur
    p_target = np.maximum((probs * targets).sum(axis=1), PROB_FLOOR)
    loss = -float(np.log(p_target).mean())
    grad = (probs - targets) / x.shape[0]
    for layer in reversed(network.layers):
        grad = layer.backward(grad)
    return loss, network.grad_flat()


def sgd_momentum_step(network, gradient, velocity, config):
    """v <- momentum v - lr g; parameters <- parameters + v."""
    velocity = config.momentum * velocity - config.learning_rate * gradient
    network.set_flat(network.get_flat() + velocity)
    return network, velocity


def _class_pools(labels, indices, classes, where):
    pools = []
    for c in range(classes):
        pool = indices[labels[indices] == c]
        if pool.size == 0:
            raise DataError(f"class {c} absent from {where} labels")
        pools.append(pool)
    return pools


def _balanced_pool(pools):
    target = max(p.size for p in pools)
    return np.concatenate([np.resize(p, target) for p in pools])


def _prepare_values(network, values):
    values = getattr(values, "values", values)
    values = np.asarray(values, dtype=np.float64)
    expect = (network.spec.num_scales, network.spec.feature_width)
    if values.ndim != 3 or values.shape[1:] != expect:
        raise DataError(
            f"feature block must be (points, {expect[0]}, {expect[1]}), "
            f"got {values.shape}")
    if network.spec.architecture != "cnn":
        return np.ascontiguousarray(values.reshape(values.shape[0], -1))
    return values


def _eval_reference(network, flat_vals, labels, pool, batch, classes):
    loss_sum = 0.0
    correct = np.zeros(classes, dtype=np.int64)
    total = np.zeros(classes, dtype=np.int64)
    for start in range(0, pool.size, batch):
        idx = pool[start:start + batch]
        cur = flat_vals[idx]
        for layer in network.layers:
            cur = layer.forward(cur)
        lbl = labels[idx]
        p_target = np.maximum(cur[np.arange(idx.size), lbl], PROB_FLOOR)
        loss_sum -= float(np.log(p_target).sum())
        hits = cur.argmax(axis=1) == lbl
        np.add.at(total, lbl, 1)
        np.add.at(correct, lbl[hits], 1)
    return loss_sum / pool.size, float((correct / total).mean())


def train(network, values, labels, config, validation_indices=None,
          use_fast=None, progress=None):
    """Optimize the network in place; returns (network, history).

    `values` is a ScaleSpaceMatrix or a (points, scales, features) array;
    `labels` integer classes; `validation_indices` selects the points
    monitored each epoch (they stay in the batch pool: the monitoring
    subset is drawn from within the training data)."""
    flat_vals = _prepare_values(network, values)
    labels = np.asarray(labels)
    m = flat_vals.shape[0]
    if labels.shape != (m,):
        raise DataError(f"labels must be ({m},), got {labels.shape}")
    classes = network.spec.classes
    labels = labels.astype(np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise DataError("label outside class range")

    if validation_indices is not None:
        val_idx = np.asarray(validation_indices, dtype=np.intp)
    else:
        val_idx = np.empty(0, dtype=np.intp)
    train_idx = np.arange(m, dtype=np.intp)
    pools = _class_pools(labels, train_idx, classes, "training")
    val_pool = None
    if val_idx.size:
        val_pool = _balanced_pool(
            _class_pools(labels, val_idx, classes, "validation"))

    if use_fast is None:
        use_fast = (fastloop is not None
                    and fastloop.supports(network)
                    and network.spec.architecture != "cnn")
    packed = fastloop.pack_network(network) if use_fast else None

    epochs = config.epochs
    hist = TrainHistory(np.zeros(epochs), np.zeros(epochs),
                        np.full(epochs, np.nan), np.full(epochs, np.nan))
    rng = np.random.default_rng(config.seed)
    flat = network.get_flat()
    velocity = np.zeros_like(flat)
    eye = np.eye(classes)

    for epoch in range(epochs):
        if config.balanced_batches:
            order = rng.permutation(_balanced_pool(pools))
        else:
            order = rng.permutation(train_idx)
        if use_fast:
            loss, acc = fastloop.run_epoch(
                packed, flat, velocity, flat_vals, labels, order,
                config.learning_rate, config.momentum, config.batch_size)
        else:
            loss_sum = 0.0
            correct = np.zeros(classes, dtype=np.int64)
            total = np.zeros(classes, dtype=np.int64)
            for start in range(0, order.size, config.batch_size):
                idx = order[start:start + config.batch_size]
                cur = flat_vals[idx]
                for layer in network.layers:
                    cur = layer.forward(cur)
                lbl = labels[idx]
                p_target = np.maximum(cur[np.arange(idx.size), lbl],
                                      PROB_FLOOR)
                loss_sum -= float(np.log(p_target).sum())
                hits = cur.argmax(axis=1) == lbl
                np.add.at(total, lbl, 1)
                np.add.at(correct, lbl[hits], 1)
                grad = (cur - eye[lbl]) / idx.size
                for layer in reversed(network.layers):
                    grad = layer.backward(grad)
                gflat = network.grad_flat()
                velocity *= config.momentum
                velocity -= config.learning_rate * gflat
                flat = flat + velocity
                network.set_flat(flat)
            loss = loss_sum / order.size
            acc = float((correct / total).mean())
        hist.train_loss[epoch] = loss
        hist.train_accuracy[epoch] = acc
        if val_pool is not None:
            if use_fast:
                vloss, vacc = fastloop.eval_pool(
                    packed, flat, flat_vals, labels, val_pool,
                    config.batch_size)
            else:
                vloss, vacc = _eval_reference(
                    network, flat_vals, labels, val_pool,
                    config.batch_size, classes)
            hist.val_loss[epoch] = vloss
            hist.val_accuracy[epoch] = vacc
        if progress is not None:
            progress((epoch + 1) / epochs)

    if use_fast:
        network.set_flat(flat)
    network.training_meta = {
        "seed": config.seed,
        "epochs": epochs,
        "finalLoss": float(hist.train_loss[-1]) if epochs else None,
    }
    return network, hist


def predict(network, values, subset=None, chunk=4096):
    """Argmax class and per-class scores for every point (or a subset)."""
    flat_vals = _prepare_values(network, values)
    if subset is not None:
        flat_vals = flat_vals[np.asarray(subset, dtype=np.intp)]
    n = flat_vals.shape[0]
    scores = np.empty((n, network.spec.classes), dtype=np.float32)
    for start in range(0, n, chunk):
        cur = flat_vals[start:start + chunk]
        for layer in network.layers:
            cur = layer.forward(cur)
        scores[start:start + chunk] = cur
    return scores.argmax(axis=1).astype(np.uint8), scores
