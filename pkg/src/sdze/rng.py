"""Deterministic, splittable, counter-based random streams.

Every random quantity in a run (collocation batches, dimension index sets,
subspace bases and cores, weight init, test points) is drawn from a stream
addressed by a :class:`StreamKey` ``(master, role, step, index)``.  Streams
are pure functions of their key: draw ``i`` of a stream is
``mix64(state + (i+1) * GAMMA)`` where ``state`` is a hash of the key fields
and ``mix64`` is the 64-bit finalizer below.  There is no global state, so
evaluation order and parallel scheduling cannot change any draw — which is
what makes seed locking across the +eps/-eps passes exact, and lets samples
be regenerated instead of cached.

Gaussian variates use the trigonometric Box-Muller transform, fixed
bit-exactly: each consecutive pair of uniforms ``(u1, u2)`` with
``u1 = (bits >> 11 + 1) * 2^-53`` in (0, 1] and ``u2 = (bits >> 11) * 2^-53``
in [0, 1) yields the pair ``sqrt(-2 ln u1) * (cos(2 pi u2), sin(2 pi u2))``.
Two uniforms are consumed per pair of normals.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_TO_UNIT = float(2.0**-53)


class Role(IntEnum):
    """Stream roles; the role value participates in the key hash."""

    COLLOCATION = 0
    DIM_SET_1 = 1
    DIM_SET_2 = 2
    BASE_U = 3
    BASE_V = 4
    CORE_Z = 5
    SOLUTION_COEFFS = 6
    FULLSPACE_Z = 7
    TEST_POINTS = 8
    WEIGHT_INIT = 9


@dataclass(frozen=True)
class StreamKey:
    master: int
    role: Role
    step: int = 0
    index: int = 0

    def __post_init__(self):
        if self.step < 0 or self.index < 0:
            raise ValueError("step and index must be non-negative")


def _mix64(z: np.ndarray | np.uint64) -> np.ndarray | np.uint64:
    # uint64 arithmetic wraps mod 2^64 by design
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def _absorb(h: np.uint64, field_value: int) -> np.uint64:
    with np.errstate(over="ignore"):
        h = h + _GAMMA * (np.uint64(field_value & 0xFFFFFFFFFFFFFFFF) + np.uint64(1))
    return _mix64(h)


def _key_state(key: StreamKey) -> np.uint64:
    h = _mix64(np.uint64(key.master & 0xFFFFFFFFFFFFFFFF) ^ _GAMMA)
    h = _absorb(h, int(key.role))
    h = _absorb(h, key.step)
    h = _absorb(h, key.index)
    return h


class RngStream:
    """Counter-based stream; state is (key hash, draws consumed)."""

    __slots__ = ("state", "offset")

    def __init__(self, state: np.uint64, offset: int = 0):
        self.state = np.uint64(state)
        self.offset = offset

    def raw(self, n: int) -> np.ndarray:
        """Next ``n`` raw uint64 words."""
        idx = np.arange(self.offset + 1, self.offset + n + 1, dtype=np.uint64)
        self.offset += n
        with np.errstate(over="ignore"):
            z = self.state + idx * _GAMMA
        return _mix64(z)

    def uniforms(self, n: int) -> np.ndarray:
        """i.i.d. uniform float64 in [0, 1)."""
        return (self.raw(n) >> np.uint64(11)).astype(np.float64) * _TO_UNIT

    def normals(self, n: int) -> np.ndarray:
        """i.i.d. standard normal float64 via Box-Muller (see module docstring)."""
        npairs = (n + 1) // 2
        bits = self.raw(2 * npairs)
        u1 = ((bits[0::2] >> np.uint64(11)).astype(np.float64) + 1.0) * _TO_UNIT
        u2 = (bits[1::2] >> np.uint64(11)).astype(np.float64) * _TO_UNIT
        radius = np.sqrt(-2.0 * np.log(u1))
        angle = (2.0 * np.pi) * u2
        out = np.empty(2 * npairs)
        out[0::2] = radius * np.cos(angle)
        out[1::2] = radius * np.sin(angle)
        return out[:n]


def derive_stream(key: StreamKey) -> RngStream:
    """Stream whose output depends only on the key; no global state."""
    return RngStream(_key_state(key))


def gaussian_matrix(stream: RngStream, rows: int, cols: int) -> np.ndarray:
    """``rows x cols`` matrix of i.i.d. standard normals."""
    if rows < 1 or cols < 1:
        raise ValueError(f"gaussian_matrix needs rows, cols >= 1, got ({rows}, {cols})")
    return stream.normals(rows * cols).reshape(rows, cols)


def sample_index_set(
    stream: RngStream, n_total: int, k: int, with_replacement: bool = False
) -> np.ndarray:
    """Ordered list of ``k`` indices from ``{0..n_total-1}``.

    Without replacement: partial Fisher-Yates shuffle driven by ``k`` uniform
    draws, every k-subset equiprobable.  With replacement: ``k`` i.i.d.
    uniform indices (the convention of the variance-law enumeration).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if with_replacement:
        u = stream.uniforms(k)
        return np.minimum((u * n_total).astype(np.int64), n_total - 1)
    if k > n_total:
        raise ValueError(f"cannot draw {k} of {n_total} without replacement")
    u = stream.uniforms(k)
    pool = np.arange(n_total, dtype=np.int64)
    from . import alloc

    alloc.record(n_total, d_scaled=True)
    for j in range(k):
        r = j + int(u[j] * (n_total - j))
        pool[j], pool[r] = pool[r], pool[j]
    return pool[:k].copy()
