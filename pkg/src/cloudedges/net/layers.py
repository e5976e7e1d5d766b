"""Layer primitives for the from-scratch neural engine.

Every layer works on double-precision batches, caches what its backward
pass needs during forward, and exposes its parameters as `weights` /
`biases` arrays plus the gradients `grad_weights` / `grad_biases` filled
in by `backward`.

Gradient convention: `backward(grad)` receives dLoss/dOutput and returns
dLoss/dInput — except for a softmax head, which receives dLoss/dZ
directly (the cross-entropy loss produces `probs - targets` in one step;
no other loss is supported, so the softmax Jacobian is never
materialized).
"""

import numpy as np

from ..errors import DataError

ACTIVATIONS = ("sigmoid", "softmax", "none")


def sigmoid(z):
    """Numerically stable logistic function."""
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(z):
    """Row-wise softmax of a (B, C) batch."""
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _activate(z, activation):
    if activation == "sigmoid":
        return sigmoid(z)
    if activation == "softmax":
        return softmax(z)
    return z


class DenseLayer:
    """Fully connected layer: z = x W^T + b, then the activation."""

    kind = "dense"

    def __init__(self, weights, biases, activation="sigmoid"):
        if activation not in ACTIVATIONS:
            raise DataError(f"unknown activation {activation!r}")
        self.weights = np.asarray(weights, dtype=np.float64)   # (out, in)
        self.biases = np.asarray(biases, dtype=np.float64)     # (out,)
        self.activation = activation
        self.grad_weights = None
        self.grad_biases = None
        self._x = None
        self._a = None

    @property
    def in_width(self):
        return self.weights.shape[1]

    @property
    def out_width(self):
        return self.weights.shape[0]

    def forward(self, x):
        self._x = x
        z = x @ self.weights.T + self.biases
        self._a = _activate(z, self.activation)
        return self._a

    def backward(self, grad):
        if self.activation == "sigmoid":
            dz = grad * self._a * (1.0 - self._a)
        else:                       # "none", or softmax fed dL/dZ directly
            dz = grad
        self.grad_weights = dz.T @ self._x
        self.grad_biases = dz.sum(axis=0)
        return dz @ self.weights


class GroupedDenseLayer:
    """A bank of independent dense blocks applied to consecutive slices
    of the input: block g sees input columns [g*in, (g+1)*in) and emits
    output columns [g*out, (g+1)*out). Weights are not shared between
    blocks."""

    kind = "grouped_dense"

    def __init__(self, weights, biases, activation="sigmoid"):
        if activation not in ACTIVATIONS:
            raise DataError(f"unknown activation {activation!r}")
        self.weights = np.asarray(weights, dtype=np.float64)   # (G, out, in)
        self.biases = np.asarray(biases, dtype=np.float64)     # (G, out)
        self.activation = activation
        self.grad_weights = None
        self.grad_biases = None
        self._xg = None
        self._a = None

    @property
    def groups(self):
        return self.weights.shape[0]

    @property
    def in_width(self):
        return self.weights.shape[2]

    @property
    def out_width(self):
        return self.weights.shape[1]

    def forward(self, x):
        batch = x.shape[0]
        self._xg = x.reshape(batch, self.groups, self.in_width)
        z = np.einsum("goi,bgi->bgo", self.weights, self._xg) + self.biases
        self._a = _activate(z, self.activation)
        return self._a.reshape(batch, self.groups * self.out_width)

    def backward(self, grad):
        batch = grad.shape[0]
        dg = grad.reshape(batch, self.groups, self.out_width)
        if self.activation == "sigmoid":
            dz = dg * self._a * (1.0 - self._a)
        else:
            dz = dg
        self.grad_weights = np.einsum("bgo,bgi->goi", dz, self._xg)
        self.grad_biases = dz.sum(axis=0)
        dx = np.einsum("goi,bgo->bgi", self.weights, dz)
        return dx.reshape(batch, self.groups * self.in_width)


class Conv1DLayer:
    """1-D convolution (stride 1, symmetric zero padding) over a
    (batch, channels, length) block. Output length is
    length + 2*padding - kernel + 1."""

    kind = "conv1d"

    def __init__(self, weights, biases, padding, activation="sigmoid"):
        if activation not in ACTIVATIONS:
            raise DataError(f"unknown activation {activation!r}")
        self.weights = np.asarray(weights, dtype=np.float64)  # (F, C, K)
        self.biases = np.asarray(biases, dtype=np.float64)    # (F,)
        self.padding = int(padding)
        self.activation = activation
        self.grad_weights = None
        self.grad_biases = None
        self._windows = None
        self._in_length = None
        self._a = None

    @property
    def filters(self):
        return self.weights.shape[0]

    @property
    def in_channels(self):
        return self.weights.shape[1]

    @property
    def kernel(self):
        return self.weights.shape[2]

    def out_length(self, in_length):
        return in_length + 2 * self.padding - self.kernel + 1

    def forward(self, x):
        batch, channels, length = x.shape
        self._in_length = length
        padded = np.zeros((batch, channels, length + 2 * self.padding))
        padded[:, :, self.padding:self.padding + length] = x
        # (B, C, L_out, K) sliding windows
        self._windows = np.lib.stride_tricks.sliding_window_view(
            padded, self.kernel, axis=2)
        z = np.einsum("fck,bclk->bfl", self.weights, self._windows)
        z += self.biases[:, None]
        self._a = _activate(z, self.activation)
        return self._a

    def backward(self, grad):
        if self.activation == "sigmoid":
            dz = grad * self._a * (1.0 - self._a)
        else:
            dz = grad
        self.grad_weights = np.einsum("bfl,bclk->fck", dz, self._windows)
        self.grad_biases = dz.sum(axis=(0, 2))
        batch = grad.shape[0]
        out_len = dz.shape[2]
        padded_len = self._in_length + 2 * self.padding
        dpadded = np.zeros((batch, self.in_channels, padded_len))
        spread = np.einsum("fck,bfl->bclk", self.weights, dz)
        for k in range(self.kernel):
            dpadded[:, :, k:k + out_len] += spread[:, :, :, k]
        return dpadded[:, :, self.padding:self.padding + self._in_length]


class FlattenLayer:
    """(B, C, L) -> (B, C*L), channel-major. No parameters."""

    kind = "flatten"

    def __init__(self):
        self.weights = None
        self.biases = None
        self._shape = None

    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._shape)
