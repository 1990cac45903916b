"""Instance kernels: flat parameter vectors for a per-instance 1x1-conv mask decoder."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

# keeps sigmoid outputs strictly inside (0, 1) in float64
_LOGIT_CLIP = 30.0


@dataclass(frozen=True)
class DecoderShape:
    input_dim: int
    channels: tuple[int, ...] = (16, 1)

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        if self.input_dim < 3:
            raise ValueError("decoder input must include the 3 offset channels")
        if not self.channels or self.channels[-1] != 1:
            raise ValueError("decoder must end in a single output channel")
        if min(self.channels) < 1:
            raise ValueError("channel widths must be >= 1")

    @classmethod
    def for_features(cls, feature_dim: int, channels=(16, 1)) -> "DecoderShape":
        return cls(feature_dim + 3, tuple(channels))

    def layer_dims(self) -> list[tuple[int, int]]:
        ins = (self.input_dim,) + self.channels[:-1]
        return list(zip(ins, self.channels))


def kernel_length(shape: DecoderShape) -> int:
    return sum(i * o + o for i, o in shape.layer_dims())


def slice_kernel(kernel, shape: DecoderShape) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split a flat kernel into ``(weight [in x out], bias [out])`` per layer.

    Layout is layer by layer, weights before biases; within a weight block the
    input index runs fastest.
    """
    w = np.asarray(kernel, dtype=np.float64)
    if w.shape != (kernel_length(shape),):
        raise ValueError(f"kernel length {w.size} does not match shape (L={kernel_length(shape)})")
    layers, pos = [], 0
    for i, o in shape.layer_dims():
        W = w[pos:pos + i * o].reshape(o, i).T
        pos += i * o
        b = w[pos:pos + o]
        pos += o
        layers.append((W, b))
    return layers


def flatten_kernel(layers) -> np.ndarray:
    parts = []
    for W, b in layers:
        parts.append(np.asarray(W).T.reshape(-1))
        parts.append(np.asarray(b).reshape(-1))
    return np.concatenate(parts)


def build_decoding_features(F_m, X, c) -> np.ndarray:
    """Rows ``[F_m,i | c - X_i]``."""
    F_m = np.asarray(F_m, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if len(F_m) != len(X):
        raise ValueError("F_m and X must have the same number of rows")
    return np.hstack([F_m.reshape(len(X), -1), np.asarray(c, dtype=np.float64) - X])


def decode_masks(F_m, X, C_ins, kernels, shape: DecoderShape) -> np.ndarray:
    """Soft masks [I x N]: every kernel scans every point of the scene."""
    kernels = np.asarray(kernels, dtype=np.float64)
    C_ins = np.asarray(C_ins, dtype=np.float64).reshape(-1, 3)
    if kernels.ndim != 2 or len(kernels) != len(C_ins):
        raise ValueError("need one kernel per instance centroid")
    F_m = np.asarray(F_m, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if F_m.reshape(len(X), -1).shape[1] + 3 != shape.input_dim:
        raise ValueError("feature width does not match the decoder input")
    masks = np.empty((len(kernels), len(X)))
    for k, (w, c) in enumerate(zip(kernels, C_ins)):
        h = build_decoding_features(F_m, X, c)
        layers = slice_kernel(w, shape)
        for depth, (W, b) in enumerate(layers):
            h = h @ W + b
            if depth < len(layers) - 1:
                h = np.maximum(h, 0.0)
        masks[k] = expit(np.clip(h[:, 0], -_LOGIT_CLIP, _LOGIT_CLIP))
    return masks


@dataclass(frozen=True)
class DirectHead:
    """Feature rows are already kernel vectors."""

    def __call__(self, F_ins, shape: DecoderShape) -> np.ndarray:
        F_ins = np.asarray(F_ins, dtype=np.float64)
        L = kernel_length(shape)
        if F_ins.ndim != 2 or F_ins.shape[1] != L:
            raise ValueError(f"direct head needs feature width {L}, got {F_ins.shape}")
        return F_ins.copy()


@dataclass(frozen=True)
class PrototypeHead:
    """Analytic kernel head standing in for the learned kernel MLP.

    The first layer scores feature affinity ``gamma * (<F_m, F_ins> - tau * |F_ins|^2)``
    through a positive and a negative ReLU unit, and, given at least 8 hidden units,
    six axis gates ``relu(+-Z_axis - rho)`` that penalise points farther than ``rho``
    from the instance centroid along any axis. Extra layers carry the resulting
    logit through a positive/negative unit pair. The output logit is

        gamma * (<F_m, F_ins> - tau * |F_ins|^2) - gamma * sum(gates) + bias
    """

    gamma: float = 10.0
    tau: float = 0.5
    rho: float = 0.5
    bias: float = -5.0

    def kernel(self, f, shape: DecoderShape) -> np.ndarray:
        f = np.asarray(f, dtype=np.float64)
        d = shape.input_dim - 3
        if f.shape != (d,):
            raise ValueError(f"instance feature must have width {d}")
        dims = shape.layer_dims()
        if len(dims) > 1 and min(shape.channels[:-1]) < 2:
            raise ValueError("prototype head needs hidden widths >= 2")
        layers = [(np.zeros((i, o)), np.zeros(o)) for i, o in dims]
        g = self.gamma
        affinity_bias = -g * self.tau * float(f @ f)

        if len(dims) == 1:
            W, b = layers[0]
            W[:d, 0] = g * f
            b[0] = affinity_bias + self.bias
            return flatten_kernel(layers)

        # first hidden layer: affinity pair and, if room, the six axis gates
        W1, b1 = layers[0]
        W1[:d, 0], b1[0] = g * f, affinity_bias
        W1[:d, 1], b1[1] = -g * f, -affinity_bias
        n_gates = 6 if dims[0][1] >= 8 else 0
        for a in range(n_gates):
            axis, sign = divmod(a, 2)
            W1[d + axis, 2 + a] = 1.0 if sign == 0 else -1.0
            b1[2 + a] = -self.rho
        # logit = h0 - h1 - gamma * sum(gates) + bias
        readout = np.zeros(dims[0][1])
        readout[0], readout[1] = 1.0, -1.0
        readout[2:2 + n_gates] = -g

        for depth in range(1, len(dims)):
            W, b = layers[depth]
            if depth == len(dims) - 1:
                W[:, 0] = readout
                b[0] = self.bias if depth == 1 else 0.0
            else:
                # split the logit into its positive and negative part
                W[:, 0], W[:, 1] = readout, -readout
                if depth == 1:
                    b[0], b[1] = self.bias, -self.bias
                readout = np.zeros(dims[depth][1])
                readout[0], readout[1] = 1.0, -1.0
        return flatten_kernel(layers)

    def __call__(self, F_ins, shape: DecoderShape) -> np.ndarray:
        F_ins = np.asarray(F_ins, dtype=np.float64)
        L = kernel_length(shape)
        if len(F_ins) == 0:
            return np.zeros((0, L))
        return np.stack([self.kernel(f, shape) for f in F_ins])


def encode_kernels(F_ins, head, shape: DecoderShape) -> np.ndarray:
    """Kernel matrix [I x L] from instance features."""
    return head(F_ins, shape)
