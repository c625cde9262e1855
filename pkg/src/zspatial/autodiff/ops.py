"""Differentiable operations.  Each returns a :class:`Tensor` and, when recorded,
an adjoint that maps the output gradient to input gradients.

The last axis is the time/feature axis throughout; leading axes are batch.
"""

from __future__ import annotations

import numpy as np

from .tape import Tensor, as_tensor, record


def _val(x):
    return x.value if isinstance(x, Tensor) else np.asarray(x)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# -- elementwise ---------------------------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return record("add", (a, b), a.value + b.value,
                  lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return record("sub", (a, b), a.value - b.value,
                  lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.value, b.value
    return record("mul", (a, b), av * bv,
                  lambda g: (_unbroadcast(g * np.conj(bv), a.shape), _unbroadcast(g * np.conj(av), b.shape)))


def scale(x, c):
    """Multiply by a constant array or scalar (not differentiated)."""
    x = as_tensor(x)
    c = np.asarray(c)
    return record("scale", (x,), x.value * c, lambda g: (_unbroadcast(g * np.conj(c), x.shape),))


def add_constant(x, c):
    """``x + c`` with ``c`` a fixed realization (noise); gradient passes straight through."""
    x = as_tensor(x)
    return record("add_constant", (x,), x.value + np.asarray(c), lambda g: (g,))


def tanh(x):
    x = as_tensor(x)
    y = np.tanh(x.value)
    return record("tanh", (x,), y, lambda g: (g * (1.0 - y * y),))


def relu(x):
    x = as_tensor(x)
    m = x.value > 0
    return record("relu", (x,), x.value * m, lambda g: (g * m,))


def identity(x):
    x = as_tensor(x)
    return record("identity", (x,), x.value, lambda g: (g,))


# -- reductions / linear algebra -----------------------------------------------


def sum_all(x):
    x = as_tensor(x)
    return record("sum", (x,), np.sum(x.value), lambda g: (np.broadcast_to(g, x.shape).copy(),))


def mean_all(x):
    x = as_tensor(x)
    n = x.value.size
    return record("mean", (x,), np.mean(x.value), lambda g: (np.broadcast_to(g / n, x.shape).copy(),))


def matmul(x, w):
    """``x @ w`` for real 2-D ``x`` of shape (N, I) and ``w`` of shape (I, O)."""
    x, w = as_tensor(x), as_tensor(w)
    xv, wv = x.value, w.value
    return record("matmul", (x, w), xv @ wv, lambda g: (g @ wv.T, xv.T @ g))


def abs2(x):
    """``|x|^2`` elementwise (real output)."""
    x = as_tensor(x)
    xv = x.value
    return record("abs2", (x,), (xv * np.conj(xv)).real, lambda g: (2.0 * g * xv,))


def cross_entropy(logits, labels):
    """Mean negative log-softmax of the true class, in nats."""
    logits = as_tensor(logits)
    z = logits.value
    labels = np.asarray(labels).ravel()
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.sum(np.exp(z - zmax), axis=1))
    n = z.shape[0]
    loss = float(np.mean(lse - z[np.arange(n), labels]))

    def back(g):
        p = np.exp(z - lse[:, None])
        p[np.arange(n), labels] -= 1.0
        return (g * p / n,)

    return record("cross_entropy", (logits,), np.asarray(loss), back)


# -- shape plumbing --------------------------------------------------------------


def reshape(x, shape):
    x = as_tensor(x)
    return record("reshape", (x,), x.value.reshape(shape), lambda g: (g.reshape(x.shape),))


def concat(xs, axis=-1):
    xs = [as_tensor(x) for x in xs]
    sizes = [x.shape[axis] for x in xs]
    cuts = np.cumsum(sizes)[:-1]
    return record("concat", tuple(xs), np.concatenate([x.value for x in xs], axis=axis),
                  lambda g: tuple(np.split(g, cuts, axis=axis)))


def complex_to_real(z):
    """Interleave re/im along the last axis: (..., m) complex -> (..., 2m) real."""
    z = as_tensor(z)
    zv = z.value
    out = np.empty(zv.shape[:-1] + (2 * zv.shape[-1],))
    out[..., 0::2] = zv.real
    out[..., 1::2] = zv.imag
    return record("complex_to_real", (z,), out, lambda g: (g[..., 0::2] + 1j * g[..., 1::2],))


def real_to_complex(r):
    """Inverse of :func:`complex_to_real`."""
    r = as_tensor(r)
    rv = r.value

    def back(g):
        out = np.empty(rv.shape)
        out[..., 0::2] = g.real
        out[..., 1::2] = g.imag
        return (out,)

    return record("real_to_complex", (r,), rv[..., 0::2] + 1j * rv[..., 1::2], back)


def windows(x, k):
    """Circular sliding windows: ``out[..., n, i] = x[..., (n + i - k) mod N]``."""
    x = as_tensor(x)
    n = x.shape[-1]
    idx = (np.arange(n)[:, None] + np.arange(-k, k + 1)[None, :]) % n

    def back(g):
        out = np.zeros(x.shape, dtype=g.dtype)
        for j in range(2 * k + 1):
            out += np.roll(g[..., :, j], j - k, axis=-1)
        return (out,)

    return record("windows", (x,), x.value[..., idx], back)


def gather_last(x, idx):
    """``x[..., idx]`` for a fixed integer index array (adjoint: scatter-add)."""
    x = as_tensor(x)
    idx = np.asarray(idx)

    def back(g):
        out = np.zeros(x.shape, dtype=g.dtype)
        np.add.at(out, (..., idx), g)
        return (out,)

    return record("gather", (x,), x.value[..., idx], back)


def upsample(x, factor):
    """Zero-stuffing along the last axis."""
    x = as_tensor(x)
    out = np.zeros(x.shape[:-1] + (x.shape[-1] * factor,), dtype=x.value.dtype)
    out[..., ::factor] = x.value
    return record("upsample", (x,), out, lambda g: (g[..., ::factor].copy(),))


def downsample(x, factor, phase=0):
    """Strided gather along the last axis."""
    x = as_tensor(x)

    def back(g):
        out = np.zeros(x.shape, dtype=g.dtype)
        out[..., phase::factor] = g
        return (out,)

    return record("downsample", (x,), x.value[..., phase::factor].copy(), back)


# -- spectral / physics ---------------------------------------------------------


def fft(x):
    x = as_tensor(x)
    n = x.shape[-1]
    return record("fft", (x,), np.fft.fft(x.value, axis=-1), lambda g: (n * np.fft.ifft(g, axis=-1),))


def ifft(x):
    x = as_tensor(x)
    n = x.shape[-1]
    return record("ifft", (x,), np.fft.ifft(x.value, axis=-1), lambda g: (np.fft.fft(g, axis=-1) / n,))


def freq_filter(x, h):
    """``ifft(h * fft(x))`` for a fixed response ``h``; adjoint uses ``conj(h)``.

    Covers brickwall masks, dispersion compensation and the linear half of a
    split step.
    """
    x = as_tensor(x)
    h = np.asarray(h)
    y = np.fft.ifft(np.fft.fft(x.value, axis=-1) * h, axis=-1)
    return record("freq_filter", (x,), y, lambda g: (np.fft.ifft(np.fft.fft(g, axis=-1) * np.conj(h), axis=-1),))


def nl_phase(x, c):
    """Kerr step ``x * exp(-j c |x|^2)`` with ``c = gamma * dz``."""
    x = as_tensor(x)
    q = x.value
    rot = np.exp(-1j * c * (q.real**2 + q.imag**2))
    y = q * rot

    def back(g):
        return (g * np.conj(rot) + 2.0 * c * np.imag(np.conj(g) * y) * q,)

    return record("nl_phase", (x,), y, back)


def normalize_power(x, p_avg):
    """Scale each frame (last axis) to mean power ``p_avg``."""
    x = as_tensor(x)
    xv = x.value
    n = xv.shape[-1]
    norm = np.sqrt(np.sum((xv * np.conj(xv)).real, axis=-1, keepdims=True))
    s = np.sqrt(p_avg * n)
    y = xv * (s / norm)

    def back(g):
        proj = np.sum((np.conj(xv) * g).real, axis=-1, keepdims=True)
        return ((s / norm) * (g - xv * proj / norm**2),)

    return record("normalize_power", (x,), y, back)
