"""Dense networks on top of the tape."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .tape import Tensor

ACTIVATIONS = {"tanh": ops.tanh, "relu": ops.relu, "linear": ops.identity}


@dataclass(frozen=True)
class MlpParams:
    """Layer ``i`` computes ``act_i(x @ weights[i] + biases[i])``.

    Entries are numpy arrays for a frozen snapshot, or :class:`Tensor` leaves
    while a training step is being recorded (see :meth:`trainable`).
    """

    weights: tuple
    biases: tuple
    activations: tuple

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ValueError("weights, biases and activations must have equal length")
        for a in self.activations:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        for w0, w1 in zip(self.weights, self.weights[1:]):
            if _shape(w0)[1] != _shape(w1)[0]:
                raise ValueError("layer dimensions do not chain")

    @property
    def sizes(self) -> list[int]:
        return [_shape(self.weights[0])[0]] + [_shape(w)[1] for w in self.weights]

    @property
    def n_params(self) -> int:
        return int(sum(np.prod(_shape(w)) + np.prod(_shape(b)) for w, b in zip(self.weights, self.biases)))

    def arrays(self) -> list[np.ndarray]:
        return [_arr(a) for pair in zip(self.weights, self.biases) for a in pair]

    def with_arrays(self, arrays) -> "MlpParams":
        arrays = list(arrays)
        return MlpParams(tuple(arrays[0::2]), tuple(arrays[1::2]), self.activations)

    def trainable(self) -> "MlpParams":
        return self.with_arrays([Tensor(a.copy(), requires_grad=True) for a in self.arrays()])

    def leaves(self) -> list[Tensor]:
        return [a for pair in zip(self.weights, self.biases) for a in pair]


def _shape(a):
    return a.shape if not isinstance(a, Tensor) else a.value.shape


def _arr(a):
    return a.value if isinstance(a, Tensor) else np.asarray(a)


def init_mlp(sizes, activations, rng: np.random.Generator, zero_last=False) -> MlpParams:
    """Glorot-uniform weights, zero biases.  ``zero_last`` zeroes the output layer
    so a residual network starts as the identity."""
    ws, bs = [], []
    for i, (n_in, n_out) in enumerate(zip(sizes, sizes[1:])):
        lim = np.sqrt(6.0 / (n_in + n_out))
        w = rng.uniform(-lim, lim, size=(n_in, n_out))
        if zero_last and i == len(sizes) - 2:
            w = np.zeros_like(w)
        ws.append(w)
        bs.append(np.zeros(n_out))
    return MlpParams(tuple(ws), tuple(bs), tuple(activations))


def identity_layer(n: int) -> MlpParams:
    return MlpParams((np.eye(n),), (np.zeros(n),), ("linear",))


def mlp_apply(p: MlpParams, x):
    """Apply the network to ``x`` of shape ``(N, in)`` (or a 1-D input vector)."""
    squeeze = np.ndim(_arr(x)) == 1
    if squeeze:
        x = ops.reshape(x, (1, -1))
    if _shape(x)[1] != _shape(p.weights[0])[0]:
        raise ValueError(f"input width {_shape(x)[1]} does not match first layer {_shape(p.weights[0])[0]}")
    h = x
    for w, b, act in zip(p.weights, p.biases, p.activations):
        h = ACTIVATIONS[act](ops.add(ops.matmul(h, w), b))
    return ops.reshape(h, (-1,)) if squeeze else h
