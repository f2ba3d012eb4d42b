"""The solution-ansatz network and its three forward modes.

The raw network is a composition of weight-only linear layers with an
elementwise activation everywhere except the scalar output layer
(input-times-weight convention: a batch of row vectors times W).  The ansatz
hardens the zero boundary condition on the unit sphere by multiplying the raw
output with (1 - ||x||^2), so no boundary loss term is needed.

Forward modes:

* plain values (``sign=0``),
* implicitly perturbed values — each layer computes
  ``sigma(H W +/- eps * contract(H, U, Z, V))`` where ``contract`` is the
  segmented low-rank product of :mod:`sdze.subspace`; the full-size
  perturbation matrix is never formed,
* implicitly perturbed order-2 jets along coordinate directions, where the
  same contraction is applied to every Taylor plane and the first layer seeds
  directions by row extraction instead of one-hot tangents.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import alloc
from . import jets as jets_mod
from .jets import Jet2, activation_triple
from .rng import Role, StreamKey, derive_stream
from .subspace import LayerSubspace, delta_rows, perturb_product


@dataclass
class MlpParams:
    """Weight-only MLP; adjacent layer shapes chain and the output is scalar.

    The default network has no bias terms, which makes it an odd function of
    its input under odd activations.  The optional bias extension (off by
    default) appends a constant-1 input to every layer, absorbed as an extra
    weight row, so biases live inside the weight matrices and are explored
    and updated by the low-rank machinery like any other parameter.
    """

    weights: list[np.ndarray]
    activation: str = "sin"
    act_scale: float = 1.0
    bias: bool = False

    def __post_init__(self):
        extra = 1 if self.bias else 0
        for a, b in zip(self.weights, self.weights[1:]):
            if a.shape[1] + extra != b.shape[0]:
                raise ValueError(f"layer shapes do not chain: {a.shape} -> {b.shape}")
        if self.weights[-1].shape[1] != 1:
            raise ValueError("output layer must have a single column")

    @property
    def dim(self) -> int:
        return self.weights[0].shape[0] - (1 if self.bias else 0)

    @property
    def depth(self) -> int:
        return len(self.weights)

    @property
    def widths(self) -> list[int]:
        return [self.dim] + [W.shape[1] for W in self.weights]

    @property
    def n_params(self) -> int:
        return sum(W.size for W in self.weights)


def init_mlp(
    widths: list[int],
    activation: str,
    master: int,
    act_scale: float = 1.0,
    bias: bool = False,
) -> MlpParams:
    """Layer weights ~ N(0, 1/fan_in) from per-layer weight-init streams.

    With the bias extension each matrix carries one extra input row,
    zero-initialized (the constant feature's row).
    """
    weights = []
    for l, (m, n) in enumerate(zip(widths, widths[1:])):
        stream = derive_stream(StreamKey(master, Role.WEIGHT_INIT, 0, l))
        W = stream.normals(m * n).reshape(m, n) / np.sqrt(m)
        if bias:
            W = np.vstack([W, np.zeros((1, n))])
        weights.append(W)
    return MlpParams(weights, activation, act_scale, bias)


@dataclass
class PerturbView:
    """A (possibly sign-perturbed) read-only view of the network.

    ``sign=0`` skips the perturbation branch entirely and reproduces the
    unperturbed network bitwise.
    """

    params: MlpParams
    subspaces: list[LayerSubspace] | None = None
    cores: list[np.ndarray] | None = None
    sign: int = 0
    eps: float = 0.0
    dtype: np.dtype = field(default_factory=lambda: np.dtype(np.float64))

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise ValueError("sign must be -1, 0 or +1")
        if self.sign != 0 and (self.subspaces is None or self.cores is None):
            raise ValueError("perturbed view needs subspaces and cores")

    def _weight(self, l: int) -> np.ndarray:
        W = self.params.weights[l]
        return W if W.dtype == self.dtype else W.astype(self.dtype)

    # Loss-pipeline surface shared with the exact-solution stand-in.
    def values(self, X: np.ndarray) -> np.ndarray:
        return ansatz(self, X)[:, 0]

    def jet_eval(self, X: np.ndarray, dims: np.ndarray):
        J = jet_forward(self, X, dims)
        return J.value, J.d1, J.d2


def plain_view(params: MlpParams) -> PerturbView:
    return PerturbView(params)


def forward(view: PerturbView, X: np.ndarray) -> np.ndarray:
    """Raw network values, shape (B, 1)."""
    params = view.params
    if X.ndim != 2 or X.shape[1] != params.dim:
        raise ValueError(f"input shape {X.shape} does not match dim {params.dim}")
    bias = params.bias
    with alloc.phase("forward"):
        H = X.astype(view.dtype, copy=False)
        for l in range(params.depth):
            W = view._weight(l)
            G = (H @ W[:-1] + W[-1]) if bias else (H @ W)
            alloc.record(G.size)
            if view.sign != 0:
                G += (view.sign * view.eps) * perturb_product(
                    H, view.subspaces[l], view.cores[l], tail="one" if bias else None
                )
            if l < params.depth - 1:
                f = activation_triple(params.activation, params.act_scale)[0]
                H = f(G)
            else:
                H = G
        return H


def boundary_factor(X: np.ndarray) -> np.ndarray:
    return 1.0 - np.sum(X * X, axis=-1)


def ansatz(view: PerturbView, X: np.ndarray) -> np.ndarray:
    """u(x) = (1 - ||x||^2) * raw(x); exactly zero on the unit sphere."""
    return boundary_factor(X)[:, None] * forward(view, X)


# directions transported per cache-sized block during jet sweeps
JET_CHUNK = 8


def _raw_jets(view: PerturbView, X: np.ndarray, dims: np.ndarray) -> Jet2:
    """Jets of the raw network along coordinate directions ``dims``.

    The primal trajectory (values plus the activation-derivative planes) is
    computed once and shared by every direction; tangents are then
    transported through the layers in cache-sized direction chunks.  The
    first layer maps one-hot seeds to weight rows directly, so no (b, B, d)
    tangent block is ever materialized.  The perturbation sign and scale are
    folded into the core; with the bias extension the perturbation's
    constant-feature row only touches the value plane.

    Returns planes value (B, 1), d1/d2 (b, B, 1).
    """
    params = view.params
    dims = np.asarray(dims, dtype=np.int64)
    if dims.size and (dims.min() < 0 or dims.max() >= params.dim):
        raise ValueError("direction index out of range")
    sign_eps = view.sign * view.eps
    bias = params.bias
    perturbed = view.sign != 0
    depth = params.depth
    b = dims.size
    tail_one = "one" if bias else None
    tail_zero = "zero" if bias else None
    if perturbed:
        zcores = [np.asarray(sign_eps * Z, dtype=view.dtype) for Z in view.cores]

    with alloc.phase("jets"):
        f, f1, f2 = activation_triple(params.activation, params.act_scale)

        # shared primal sweep
        H = X.astype(view.dtype, copy=False)
        s1s: list[np.ndarray] = []
        s2s: list[np.ndarray] = []
        for l in range(depth):
            W = view._weight(l)
            G = (H @ W[:-1] + W[-1]) if bias else (H @ W)
            alloc.record(G.size)
            if perturbed:
                G += perturb_product(H, view.subspaces[l], zcores[l], tail_one)
            if l < depth - 1:
                s1s.append(f1(G))
                s2s.append(f2(G))
                H = f(G)
                for arr in (s1s[-1], s2s[-1], H):
                    alloc.record(arr.size)
            else:
                H = G
            jets_mod.note_primal_eval()
        value = H

        B = X.shape[0]
        W0 = view._weight(0)
        seed_rows = W0[dims]  # e_i @ W0; a constant feature has zero tangent
        if perturbed:
            seed_rows = seed_rows + delta_rows(view.subspaces[0], zcores[0], dims)
        alloc.record(seed_rows.size)

        if depth == 1:
            d1 = np.broadcast_to(seed_rows[:, None, :], (b, B, value.shape[1]))
            return Jet2(value, d1.copy(), np.zeros_like(d1))

        d1_out = np.empty((b, B, 1), dtype=view.dtype)
        d2_out = np.empty((b, B, 1), dtype=view.dtype)
        alloc.record(d1_out.size)
        alloc.record(d2_out.size)
        # a chunk's stacked d1/d2 block holds 2*chunk planes; capping the
        # chunk at (b+1)/2 keeps any single buffer within B*(1+b)*width
        chunk = max(1, min(JET_CHUNK, (b + 1) // 2))
        for c0 in range(0, b, chunk):
            c1 = min(c0 + chunk, b)
            nc = c1 - c0
            rows = seed_rows[c0:c1]
            # first activation: d1 = s1 * rows, d2 = s2 * rows^2 (seed d2 = 0)
            tg = np.empty((2 * nc, B, W0.shape[1]), dtype=view.dtype)
            np.multiply(rows[:, None, :], s1s[0], out=tg[:nc])
            np.multiply((rows * rows)[:, None, :], s2s[0], out=tg[nc:])
            alloc.record(tg.size)
            for l in range(1, depth):
                W = view._weight(l)
                n_out = W.shape[1]
                flat = tg.reshape(-1, tg.shape[-1])
                Ww = W[:-1] if bias else W
                new = (flat @ Ww).reshape(2 * nc, B, n_out)
                alloc.record(new.size)
                if perturbed:
                    new += perturb_product(
                        flat, view.subspaces[l], zcores[l], tail_zero
                    ).reshape(2 * nc, B, n_out)
                tg = new
                if l < depth - 1:
                    d1, d2 = tg[:nc], tg[nc:]
                    d2 *= s1s[l]
                    tmp = d1 * d1
                    tmp *= s2s[l]
                    d2 += tmp
                    d1 *= s1s[l]
                    alloc.record(tmp.size)
            d1_out[c0:c1] = tg[:nc]
            d2_out[c0:c1] = tg[nc:]
        return Jet2(value, d1_out, d2_out)


def jet_forward(view: PerturbView, X: np.ndarray, dims: np.ndarray) -> Jet2:
    """Order-2 jets of the *ansatz* along coordinate directions.

    With g the raw network and phi = 1 - ||x||^2:
    u = phi g,  du_i = phi g'_i - 2 x_i g,  d2u_i = phi g''_i - 4 x_i g'_i - 2 g.
    Returns planes value (B,), d1/d2 (b, B).
    """
    X = np.atleast_2d(np.asarray(X))
    J = _raw_jets(view, X, dims)
    g = J.value[:, 0]
    g1 = J.d1[:, :, 0]
    g2 = J.d2[:, :, 0]
    phi = boundary_factor(X)
    xi = X[:, np.asarray(dims, dtype=np.int64)].T  # (b, B)
    u = phi * g
    du = phi * g1 - 2.0 * xi * g
    d2u = phi * g2 - 4.0 * xi * g1 - 2.0 * g
    for arr in (u, du, d2u):
        alloc.record(arr.size)
    return Jet2(u, du, d2u)


def derivative_bound_monitor(
    params: MlpParams, x: np.ndarray, order: int
) -> tuple[float, float]:
    """Observed derivative norm vs the analytic weight-norm bound.

    Observed: l2 norm of the per-dimension order-``order`` jet coefficients of
    the raw network over all d coordinate directions (for order 2 this is the
    Hessian diagonal, a lower bound on the full tensor norm the bound covers).
    Bound: (n-1)! d^(n-1) (L-1)^(n-1) M(L) prod_{l<L} M(l)^n with
    M(l) = max(||W_l||_2, 1).
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if params.bias:
        raise ValueError("the derivative bound covers weight-only composition")
    if params.activation == "tanh_scaled" and params.act_scale > 1.0:
        raise ValueError("tanh scale must be <= 1 for the bound to apply")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    d = params.dim
    J = _raw_jets(plain_view(params), x, np.arange(d))
    coeffs = (J.d1 if order == 1 else J.d2)[:, 0, 0]
    observed = float(np.linalg.norm(coeffs))
    L = params.depth
    M = [max(np.linalg.norm(W, 2), 1.0) for W in params.weights]
    n = order
    bound = (
        float(math.factorial(n - 1))
        * d ** (n - 1)
        * (L - 1) ** (n - 1)
        * M[-1]
        * float(np.prod([m**n for m in M[:-1]]))
    )
    if observed > bound * (1.0 + 1e-12):
        raise AssertionError(f"derivative norm {observed} exceeds bound {bound}")
    return observed, bound
