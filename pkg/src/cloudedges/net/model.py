"""Concrete edge-classifier networks and their serialization.

Three architectures over a per-point (numScales x featureWidth) block:

scaletree  adjacent scale vectors are concatenated in pairs and pushed
           through independent (unshared) sigmoid blocks; the pairing
           repeats until two blocks remain, whose outputs concatenate
           into the trunk feature fed to a small sigmoid MLP and a
           softmax head. Depth is log2(numScales) - 1, so 16 scales
           give three pairwise layers (8, 4, 2 blocks).
fc         the flattened block through dense reductions (48, 24, 12 by
           default) and the same MLP + head.
cnn        scales as channels, features as positions: two sigmoid
           convolutions (15 filters, kernels 6 and 5, zero padding 2),
           flatten, dense 75/15/15, softmax head.

Weight files are JSON: {formatVersion, spec, layers, trainingMeta};
layer weights are stored row-major and round-trip bit-exactly.
"""

import dataclasses
import json

import numpy as np

from ..errors import DataError, ParseError
from .layers import Conv1DLayer, DenseLayer, FlattenLayer, GroupedDenseLayer

ARCHITECTURES = ("scaletree", "fc", "cnn")
FORMAT_VERSION = 1

CNN_FILTERS = (15, 15)
CNN_KERNELS = (6, 5)
CNN_PADDING = 2
CNN_DENSE = (75, 15, 15)


@dataclasses.dataclass(frozen=True)
class NetworkSpec:
    """Architecture choice plus the widths that define every layer shape."""

    architecture: str
    num_scales: int = 16
    feature_width: int = 6
    classes: int = 3
    feature_set: str = "standard6"
    block_out: tuple = 6
    mlp_widths: tuple = (16, 16)
    fc_widths: tuple = (48, 24, 12)

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise DataError(f"unknown architecture {self.architecture!r}")
        if self.num_scales < 1 or self.feature_width < 1:
            raise DataError("numScales and featureWidth must be positive")
        if self.classes < 2:
            raise DataError("need at least two classes")
        object.__setattr__(self, "mlp_widths", tuple(self.mlp_widths))
        object.__setattr__(self, "fc_widths", tuple(self.fc_widths))
        if self.architecture == "scaletree":
            n = self.num_scales
            if n < 4 or n & (n - 1):
                raise DataError(
                    "scaletree needs a power-of-two scale count >= 4")
            if self.classes not in (2, 3):
                raise DataError("scaletree supports 2 or 3 classes")
            depth = self.tree_depth
            block = self.block_out
            if isinstance(block, int):
                block = (block,) * depth
            block = tuple(block)
            if len(block) != depth or any(b < 1 for b in block):
                raise DataError(
                    f"block_out needs {depth} positive widths")
            object.__setattr__(self, "block_out", block)

    @property
    def tree_depth(self):
        return int(np.log2(self.num_scales)) - 1

    def to_json(self):
        doc = {
            "architecture": self.architecture,
            "numScales": self.num_scales,
            "featureWidth": self.feature_width,
            "classes": self.classes,
            "featureSet": self.feature_set,
            "widths": {"mlp": list(self.mlp_widths)},
        }
        if self.architecture == "scaletree":
            doc["widths"]["blockOut"] = list(self.block_out)
        elif self.architecture == "fc":
            doc["widths"]["reduction"] = list(self.fc_widths)
        return doc

    @classmethod
    def from_json(cls, doc):
        try:
            widths = doc.get("widths", {})
            kwargs = {}
            if "blockOut" in widths:
                kwargs["block_out"] = tuple(widths["blockOut"])
            if "reduction" in widths:
                kwargs["fc_widths"] = tuple(widths["reduction"])
            if "mlp" in widths:
                kwargs["mlp_widths"] = tuple(widths["mlp"])
            return cls(architecture=doc["architecture"],
                       num_scales=int(doc["numScales"]),
                       feature_width=int(doc["featureWidth"]),
                       classes=int(doc["classes"]),
                       feature_set=doc.get("featureSet", ""),
                       **kwargs)
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad network spec: {exc}") from exc


def _layer_shapes(spec):
    """Yield (kind, shape info) for every parameterized layer, in order.

    dense:         ("dense", out, in, activation)
    grouped_dense: ("grouped_dense", groups, out, in, activation)
    conv1d:        ("conv1d", filters, channels, kernel, padding, activation)
    flatten:       ("flatten",)
    """
    if spec.architecture == "scaletree":
        width = spec.feature_width
        groups = spec.num_scales // 2
        for out in spec.block_out:
            yield ("grouped_dense", groups, out, 2 * width, "sigmoid")
            width = out
            groups //= 2
        mlp_in = 2 * width           # the final two block outputs, joined
    elif spec.architecture == "fc":
        mlp_in = spec.num_scales * spec.feature_width
        for out in spec.fc_widths:
            yield ("dense", out, mlp_in, "sigmoid")
            mlp_in = out
    else:
        channels = spec.num_scales
        length = spec.feature_width
        for filters, kernel in zip(CNN_FILTERS, CNN_KERNELS):
            yield ("conv1d", filters, channels, kernel, CNN_PADDING,
                   "sigmoid")
            length = length + 2 * CNN_PADDING - kernel + 1
            channels = filters
        yield ("flatten",)
        mlp_in = channels * length
        for out in CNN_DENSE:
            yield ("dense", out, mlp_in, "sigmoid")
            mlp_in = out
        yield ("dense", spec.classes, mlp_in, "softmax")
        return
    for out in spec.mlp_widths:
        yield ("dense", out, mlp_in, "sigmoid")
        mlp_in = out
    yield ("dense", spec.classes, mlp_in, "softmax")


def param_count(spec):
    """Exact number of weights plus biases, from shapes alone."""
    total = 0
    for shape in _layer_shapes(spec):
        if shape[0] == "dense":
            _, out, inw, _ = shape
            total += out * inw + out
        elif shape[0] == "grouped_dense":
            _, groups, out, inw, _ = shape
            total += groups * (out * inw + out)
        elif shape[0] == "conv1d":
            _, filters, channels, kernel, _, _ = shape
            total += filters * channels * kernel + filters
    return total


def build_network(spec, seed):
    """Construct the network with Glorot-uniform weights and zero biases."""
    rng = np.random.default_rng(seed)
    layers = []
    for shape in _layer_shapes(spec):
        if shape[0] == "dense":
            _, out, inw, act = shape
            a = np.sqrt(6.0 / (inw + out))
            layers.append(DenseLayer(rng.uniform(-a, a, size=(out, inw)),
                                     np.zeros(out), act))
        elif shape[0] == "grouped_dense":
            _, groups, out, inw, act = shape
            a = np.sqrt(6.0 / (inw + out))
            layers.append(GroupedDenseLayer(
                rng.uniform(-a, a, size=(groups, out, inw)),
                np.zeros((groups, out)), act))
        elif shape[0] == "conv1d":
            _, filters, channels, kernel, padding, act = shape
            fan_in = channels * kernel
            fan_out = filters * kernel
            a = np.sqrt(6.0 / (fan_in + fan_out))
            layers.append(Conv1DLayer(
                rng.uniform(-a, a, size=(filters, channels, kernel)),
                np.zeros(filters), padding, act))
        else:
            layers.append(FlattenLayer())
    return Network(spec=spec, layers=layers, seed=seed)


class Network:
    """Spec, ordered layers, and flat parameter access."""

    def __init__(self, spec, layers, seed=None, training_meta=None):
        self.spec = spec
        self.layers = layers
        self.seed = seed
        self.training_meta = training_meta

    @property
    def param_count(self):
        return sum(l.weights.size + l.biases.size
                   for l in self.layers if l.weights is not None)

    def prepare_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 2
        if single:
            x = x[None]
        expect = (self.spec.num_scales, self.spec.feature_width)
        if x.ndim != 3 or x.shape[1:] != expect:
            raise DataError(
                f"input must be (batch, {expect[0]}, {expect[1]}) or "
                f"{expect}, got {x.shape}")
        if self.spec.architecture != "cnn":
            x = x.reshape(x.shape[0], -1)
        return x, single

    def forward(self, x):
        """Class probabilities for one (N, P) block or a (B, N, P) batch."""
        cur, single = self.prepare_input(x)
        for layer in self.layers:
            cur = layer.forward(cur)
        return cur[0] if single else cur

    def get_flat(self):
        parts = []
        for layer in self.layers:
            if layer.weights is None:
                continue
            parts.append(layer.weights.ravel())
            parts.append(layer.biases.ravel())
        return np.concatenate(parts)

    def set_flat(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.param_count:
            raise DataError(
                f"expected {self.param_count} parameters, got {flat.size}")
        pos = 0
        for layer in self.layers:
            if layer.weights is None:
                continue
            n = layer.weights.size
            layer.weights[...] = flat[pos:pos + n].reshape(
                layer.weights.shape)
            pos += n
            n = layer.biases.size
            layer.biases[...] = flat[pos:pos + n].reshape(layer.biases.shape)
            pos += n

    def grad_flat(self):
        """Flat gradient vector; valid after a backward pass."""
        parts = []
        for layer in self.layers:
            if layer.weights is None:
                continue
            parts.append(layer.grad_weights.ravel())
            parts.append(layer.grad_biases.ravel())
        return np.concatenate(parts)


def save_weights(network, path):
    """JSON weight file; floats round-trip bit-exactly via repr."""
    layers = []
    for layer in network.layers:
        if layer.weights is None:
            continue
        entry = {"type": layer.kind,
                 "activation": layer.activation,
                 "shape": list(layer.weights.shape),
                 "weights": layer.weights.ravel().tolist(),
                 "biases": layer.biases.ravel().tolist()}
        if layer.kind == "conv1d":
            entry["padding"] = layer.padding
        layers.append(entry)
    doc = {"formatVersion": FORMAT_VERSION,
           "spec": network.spec.to_json(),
           "layers": layers,
           "trainingMeta": network.training_meta}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_weights(path):
    """Rebuild a Network from a weight file; shape or version mismatches
    raise ParseError."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"unreadable weight file: {exc}",
                         path=str(path)) from exc
    if not isinstance(doc, dict) or doc.get("formatVersion") != FORMAT_VERSION:
        raise ParseError(
            f"unsupported weight format {doc.get('formatVersion')!r}",
            path=str(path))
    spec = NetworkSpec.from_json(doc.get("spec", {}))
    network = build_network(spec, seed=0)
    stored = doc.get("layers", [])
    own = [l for l in network.layers if l.weights is not None]
    if len(stored) != len(own):
        raise ParseError(
            f"expected {len(own)} parameterized layers, file has "
            f"{len(stored)}", path=str(path))
    for layer, entry in zip(own, stored):
        try:
            if entry["type"] != layer.kind or \
                    tuple(entry["shape"]) != layer.weights.shape:
                raise ParseError(
                    f"layer mismatch: file has {entry['type']} "
                    f"{entry['shape']}, spec wants {layer.kind} "
                    f"{list(layer.weights.shape)}", path=str(path))
            weights = np.asarray(entry["weights"], dtype=np.float64)
            biases = np.asarray(entry["biases"], dtype=np.float64)
            if weights.size != layer.weights.size or \
                    biases.size != layer.biases.size:
                raise ParseError("layer parameter count mismatch",
                                 path=str(path))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad layer entry: {exc}",
                             path=str(path)) from exc
        layer.weights[...] = weights.reshape(layer.weights.shape)
        layer.biases[...] = biases.reshape(layer.biases.shape)
    network.training_meta = doc.get("trainingMeta")
    return network
