"""Radix-2 decimation-in-time FFT, batched over leading axes.

Lengths must be powers of two.  Sign and scaling follow ``numpy.fft``:
``fft`` uses ``exp(-2 pi i j k / n)`` and ``ifft`` carries the ``1/n``.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

__all__ = ["fft", "ifft", "fftfreq", "is_power_of_two"]


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@lru_cache(maxsize=32)
def _bit_reversal(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=32)
def _twiddles(n: int, sign: int) -> tuple:
    out = []
    m = 2
    while m <= n:
        out.append(np.exp(sign * 2j * np.pi * np.arange(m // 2) / m))
        m *= 2
    return tuple(out)


def _transform(a, axis: int, sign: int) -> np.ndarray:
    x = np.moveaxis(np.asarray(a, dtype=complex), axis, -1)
    n = x.shape[-1]
    if not is_power_of_two(n):
        raise ValueError(f"radix-2 FFT needs a power-of-two length, got {n}")
    lead = x.shape[:-1]
    y = x[..., _bit_reversal(n)]
    m = 2
    for w in _twiddles(n, sign):
        y = y.reshape(lead + (n // m, 2, m // 2))
        u = y[..., 0, :]
        v = y[..., 1, :] * w
        y = np.concatenate([u + v, u - v], axis=-1)
        m *= 2
    y = y.reshape(lead + (n,))
    return np.moveaxis(y, -1, axis)


def fft(a, axis: int = -1) -> np.ndarray:
    return _transform(a, axis, -1)


def ifft(a, axis: int = -1) -> np.ndarray:
    a = np.asarray(a)
    return _transform(a, axis, +1) / a.shape[axis]


def fftfreq(n: int, d: float = 1.0) -> np.ndarray:
    """Sample frequencies (cycles per unit) in standard FFT order."""
    k = np.arange(n)
    k[k >= (n + 1) // 2] -= n
    return k / (n * d)
