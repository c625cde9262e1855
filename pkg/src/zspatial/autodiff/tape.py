"""Tape-based reverse-mode differentiation on numpy arrays.

Gradients of a real scalar loss ``L`` are stored per tensor.  For complex
tensors the stored gradient is ``dL/dRe + 1j * dL/dIm``, which makes the
adjoint of any complex-linear map ``A`` simply ``A^H``.
"""

from __future__ import annotations

import numpy as np

_ACTIVE: list["Tape"] = []


class TapeError(RuntimeError):
    pass


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "node", "name")

    def __init__(self, value, requires_grad=False, name=None):
        self.value = np.asarray(value)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.node = None
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def is_complex(self):
        return np.iscomplexobj(self.value)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.value.dtype}, requires_grad={self.requires_grad})"

    # arithmetic sugar, resolved lazily to avoid an import cycle
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)


class Node:
    __slots__ = ("op", "inputs", "output", "backward_fn")

    def __init__(self, op, inputs, output, backward_fn):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


class Tape:
    """Records nodes in execution order while active (``with Tape() as tape:``)."""

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self):
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.remove(self)
        return False

    def __len__(self):
        return len(self.nodes)

    def backward(self, loss: Tensor, seed=None) -> None:
        """Accumulate gradients into every tensor upstream of ``loss``.

        ``seed`` is the incoming gradient of ``loss`` (defaults to ones, i.e. the
        loss itself is treated as a real scalar sum).
        """
        if loss.node is None or loss.node.output is not loss or loss.node not in self._index():
            raise TapeError("loss was not produced by an operation recorded on this tape")
        loss.grad = np.ones_like(loss.value) if seed is None else np.asarray(seed)
        for node in reversed(self.nodes):
            g = node.output.grad
            if g is None:
                continue
            grads = node.backward_fn(g)
            for t, gi in zip(node.inputs, grads):
                if gi is None or not isinstance(t, Tensor) or not t.requires_grad:
                    continue
                if not t.is_complex and np.iscomplexobj(gi):
                    gi = gi.real
                t.grad = gi if t.grad is None else t.grad + gi

    def _index(self):
        return set(self.nodes)


def active_tape() -> Tape | None:
    return _ACTIVE[-1] if _ACTIVE else None


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def record(op: str, inputs, value, backward_fn) -> Tensor:
    """Wrap ``value`` as the output of ``op``; record it when a tape is active and
    any input needs a gradient."""
    out = Tensor(value)
    tape = active_tape()
    if tape is not None and any(isinstance(t, Tensor) and t.requires_grad for t in inputs):
        out.requires_grad = True
        node = Node(op, tuple(inputs), out, backward_fn)
        out.node = node
        tape.nodes.append(node)
    return out


def gradient_check(f, x0, h=1e-6, rng=None, n_probe=None) -> float:
    """Max relative error between tape gradients and central differences.

    ``f`` maps a :class:`Tensor` to a real scalar :class:`Tensor`.  ``x0`` may be
    real or complex; complex entries are probed along their real and imaginary
    parts.  ``n_probe`` limits the check to a random subset of entries.
    """
    x0 = np.asarray(x0)
    x = Tensor(x0.copy(), requires_grad=True)
    with Tape() as tape:
        y = f(x)
    tape.backward(y)
    analytic = np.zeros_like(x0) if x.grad is None else np.asarray(x.grad)
    flat = x0.ravel()
    idx = np.arange(flat.size)
    if n_probe is not None and n_probe < flat.size:
        rng = rng or np.random.default_rng(0)
        idx = rng.choice(flat.size, size=n_probe, replace=False)
    directions = [1.0] + ([1j] if np.iscomplexobj(x0) else [])
    worst = 0.0
    scale = max(np.max(np.abs(analytic)), 1e-300)
    for i in idx:
        for d in directions:
            xp = flat.copy()
            xm = flat.copy()
            xp[i] += h * d
            xm[i] -= h * d
            fp = float(np.sum(f(Tensor(xp.reshape(x0.shape))).value))
            fm = float(np.sum(f(Tensor(xm.reshape(x0.shape))).value))
            fd = (fp - fm) / (2 * h)
            a = analytic.ravel()[i]
            a = a.real if d == 1.0 else np.imag(a)
            err = abs(fd - a) / max(abs(fd), abs(a), 1e-8 * scale)
            worst = max(worst, err)
    return float(worst)
