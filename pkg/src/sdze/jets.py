"""Order-2 directional Taylor propagation through network primitives.

A :class:`Jet2` batch carries three aligned coefficient planes — value,
first, and second directional derivative — through linear maps and
activations, giving per-dimension second derivatives in a single forward
sweep with no reverse pass.  When several directions are seeded at one
point, the tangent planes get a leading direction axis while the value plane
is computed once and shared across directions.

Maximum order is fixed at 2: every supported spatial operator is at most
second order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import alloc

# Incremented once per jet_activation call; each call evaluates the shared
# primal plane exactly once, so tests can assert the sharing property.
_primal_evals = 0


def primal_eval_count() -> int:
    return _primal_evals


def note_primal_eval() -> None:
    """Called by fused jet sweeps that evaluate the shared primal directly."""
    global _primal_evals
    _primal_evals += 1


def activation_triple(act: str, scale: float = 1.0):
    """(sigma, sigma', sigma'') for the supported activation tags."""
    if act == "sin":
        return np.sin, np.cos, lambda u: -np.sin(u)
    if act == "tanh_scaled":
        # scale * tanh; scale <= 1 keeps |sigma^(k)| <= 1 for k <= 2
        def f(u):
            return scale * np.tanh(u)

        def f1(u):
            t = np.tanh(u)
            return scale * (1.0 - t * t)

        def f2(u):
            t = np.tanh(u)
            return scale * (-2.0 * t * (1.0 - t * t))

        return f, f1, f2
    raise ValueError(f"unknown activation tag: {act!r}")


@dataclass
class Jet2:
    """Truncated second-order directional Taylor coefficients.

    ``value`` has shape ``(..., width)``; ``d1`` and ``d2`` broadcast against
    it and may carry a leading direction axis, e.g. value ``(B, w)`` with
    ``d1``/``d2`` of shape ``(k, B, w)`` for ``k`` directions.
    """

    value: np.ndarray
    d1: np.ndarray
    d2: np.ndarray


def jet_linear(W: np.ndarray, J: Jet2) -> Jet2:
    """Right-multiply every coefficient plane by ``W``; planes do not mix."""
    if J.value.shape[-1] != W.shape[0]:
        raise ValueError(
            f"jet width {J.value.shape[-1]} does not match W rows {W.shape[0]}"
        )
    value = J.value @ W
    d1 = J.d1 @ W
    d2 = J.d2 @ W
    for arr in (value, d1, d2):
        alloc.record(arr.size)
    return Jet2(value, d1, d2)


def jet_activation(act: str, J: Jet2, scale: float = 1.0) -> Jet2:
    """Elementwise chain rule: (s(u), s'(u) d1, s''(u) d1^2 + s'(u) d2)."""
    global _primal_evals
    f, f1, f2 = activation_triple(act, scale)
    _primal_evals += 1
    value = f(J.value)
    s1 = f1(J.value)
    d1 = s1 * J.d1
    d2 = f2(J.value) * (J.d1 * J.d1) + s1 * J.d2
    for arr in (value, s1, d1, d2):
        alloc.record(arr.size)
    return Jet2(value, d1, d2)


def coordinate_jet_seed(x: np.ndarray, i: int) -> Jet2:
    """Seed jets along coordinate direction e_i at point(s) ``x``.

    ``x`` is a single point ``(d,)`` or batch ``(B, d)``; the seed is
    value = x, d1 = e_i, d2 = 0.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    d = x.shape[-1]
    if not 0 <= i < d:
        raise ValueError(f"direction index {i} out of range for dimension {d}")
    d1 = np.zeros_like(x)
    d1[:, i] = 1.0
    alloc.record(2 * x.size, d_scaled=True)
    return Jet2(x, d1, np.zeros_like(x))
