"""Theory-verification harness and brute-force oracles.

Everything here is deliberately independent of the training path: dense
explicit materialization of the per-layer perturbation, dense one-hot jet
propagation, coordinate-wise finite differences, and exact enumeration over
with-replacement draws.  Agreement between these oracles and the implicit
kernels is evidence, not tautology.

The "backprop gradient" referenced by the identities is realized by the
finite-difference oracle; the artifact has no reverse mode by design.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from .net import MlpParams, PerturbView, plain_view
from .optimizer import directional_delta
from .rng import Role, StreamKey, derive_stream
from .spatial import PdeProblem, SpatialSample, rhs_eval, sample_unit_ball
from .subspace import LayerSubspace, sample_core, subspace_for_layer

FD_STEP = 1e-5  # oracle step for coordinate-wise central differences


@dataclass
class IdentityReport:
    name: str
    theoretical: float
    empirical: float
    n_samples: int
    rel_deviation: float
    passed: bool

    def row(self) -> dict:
        return {
            "name": self.name,
            "theoretical": self.theoretical,
            "empirical": self.empirical,
            "n_samples": self.n_samples,
            "rel_deviation": self.rel_deviation,
            "passed": self.passed,
        }


# --- explicit oracles -------------------------------------------------------


def explicit_delta_w(state: LayerSubspace, Z: np.ndarray) -> np.ndarray:
    """Densely materialized T^-1(U Z V^T) via column-major reshape."""
    return np.reshape(state.U @ Z @ state.V.T, state.plan.orig, order="F")


def explicit_forward(
    params: MlpParams,
    X: np.ndarray,
    deltas: list[np.ndarray] | None = None,
    sign: int = 0,
    eps: float = 0.0,
) -> np.ndarray:
    """Dense forward with explicitly perturbed weights."""
    from .jets import activation_triple

    f = activation_triple(params.activation, params.act_scale)[0]
    H = X
    for l, W in enumerate(params.weights):
        Wp = W if sign == 0 else W + sign * eps * deltas[l]
        H = H @ Wp
        if l < params.depth - 1:
            H = f(H)
    return H


def explicit_jet_forward(
    params: MlpParams,
    X: np.ndarray,
    dims,
    deltas: list[np.ndarray] | None = None,
    sign: int = 0,
    eps: float = 0.0,
):
    """Dense order-2 jets of the hardened ansatz with one-hot seeds.

    Returns (u, d1, d2) with d1/d2 of shape (len(dims), B).
    """
    from .jets import activation_triple

    f, f1, f2 = activation_triple(params.activation, params.act_scale)
    X = np.atleast_2d(X)
    B = X.shape[0]
    dims = np.asarray(dims, dtype=np.int64)
    d1_out = np.empty((dims.size, B))
    d2_out = np.empty((dims.size, B))
    u_out = None
    for j, i in enumerate(dims):
        val = X.copy()
        d1 = np.zeros_like(X)
        d1[:, i] = 1.0
        d2 = np.zeros_like(X)
        for l, W in enumerate(params.weights):
            Wp = W if sign == 0 else W + sign * eps * deltas[l]
            val, d1, d2 = val @ Wp, d1 @ Wp, d2 @ Wp
            if l < params.depth - 1:
                s1, s2 = f1(val), f2(val)
                val, d1, d2 = f(val), s1 * d1, s2 * d1 * d1 + s1 * d2
        g, g1, g2 = val[:, 0], d1[:, 0], d2[:, 0]
        phi = 1.0 - (X * X).sum(axis=1)
        xi = X[:, i]
        u_out = phi * g
        d1_out[j] = phi * g1 - 2.0 * xi * g
        d2_out[j] = phi * g2 - 4.0 * xi * g1 - 2.0 * g
    return u_out, d1_out, d2_out


def flatten_params(params: MlpParams) -> np.ndarray:
    """Global parameter vector: column-major vec of each layer, concatenated."""
    return np.concatenate([W.reshape(-1, order="F") for W in params.weights])


def unflatten_params(theta: np.ndarray, like: MlpParams) -> MlpParams:
    weights = []
    at = 0
    for W in like.weights:
        weights.append(theta[at : at + W.size].reshape(W.shape, order="F").copy())
        at += W.size
    return MlpParams(weights, like.activation, like.act_scale)


def build_projection(subspaces: list[LayerSubspace]) -> np.ndarray:
    """Desk-scale materialization of the block-diagonal Kronecker projection."""
    blocks = [np.kron(s.V, s.U) for s in subspaces]
    P = sum(b.shape[0] for b in blocks)
    q = sum(b.shape[1] for b in blocks)
    out = np.zeros((P, q))
    i = j = 0
    for b in blocks:
        out[i : i + b.shape[0], j : j + b.shape[1]] = b
        i += b.shape[0]
        j += b.shape[1]
    return out


def brute_force_gradient(loss_fn, theta: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Coordinate-wise central differences; the stand-in for backprop."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.size > 10**4:
        raise ValueError("parameter count too large to enumerate")
    grad = np.empty_like(theta)
    for k in range(theta.size):
        step = np.zeros_like(theta)
        step[k] = h
        fp = loss_fn(theta + step)
        fm = loss_fn(theta - step)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError(f"non-finite loss at coordinate {k}")
        grad[k] = (fp - fm) / (2.0 * h)
    return grad


# --- quadratic / smooth-loss identities --------------------------------------


def _subspaces_for_shapes(
    shapes: list[tuple[int, int]], r: int, master: int
) -> list[LayerSubspace]:
    return [subspace_for_layer(master, l, m, n, r) for l, (m, n) in enumerate(shapes)]


def quadratic_identity_check(
    H: np.ndarray,
    theta: np.ndarray,
    r: int,
    layer_shapes: list[tuple[int, int]],
    n_samples: int,
    master: int = 0,
    eps: float = 1e-3,
    tol_mean: float = 0.02,
    tol_second: float = 0.05,
    tol_cosine: float = 0.10,
) -> list[IdentityReport]:
    """Monte Carlo checks of the three quadratic-loss identities.

    On L(theta) = theta^T H theta the estimate delta*(Pz) has mean exactly
    P P^T grad, second moment (q+2) ||P^T grad||^2, and its squared
    normalized alignment with the gradient averages 1/q.
    """
    P_dim = H.shape[0]
    if sum(m * n for m, n in layer_shapes) != P_dim:
        raise ValueError("layer shapes must tile the parameter dimension")
    subs = _subspaces_for_shapes(layer_shapes, r, master)
    q = sum(s.rank**2 for s in subs)
    if q > P_dim:
        raise ValueError(f"subspace dimension q={q} exceeds P={P_dim}")
    Pmat = build_projection(subs)
    grad = (H + H.T) @ theta
    a = Pmat.T @ grad
    a_norm2 = float(a @ a)

    z = derive_stream(StreamKey(master, Role.CORE_Z, 0, 0)).normals(
        n_samples * q
    ).reshape(n_samples, q)
    v = z @ Pmat.T
    lp = np.einsum("np,pq,nq->n", theta + eps * v, H, theta + eps * v)
    lm = np.einsum("np,pq,nq->n", theta - eps * v, H, theta - eps * v)
    delta = (lp - lm) / (2.0 * eps)
    ghat = delta[:, None] * v

    target_mean = Pmat @ a
    target_norm = float(np.linalg.norm(target_mean))
    grad_norm = float(np.linalg.norm(grad))
    # gradient mass outside the subspace leaves a ~0 target; scale by the
    # full gradient then so "mean ~ 0" is judged against something real
    scale = target_norm if target_norm > 1e-9 * max(grad_norm, 1.0) else max(grad_norm, 1.0)
    dev_mean = float(np.linalg.norm(ghat.mean(axis=0) - target_mean)) / scale
    reports = [
        IdentityReport("mean_vs_projected_gradient", 0.0, dev_mean, n_samples, dev_mean, dev_mean <= tol_mean)
    ]

    if a_norm2 > (1e-9 * max(grad_norm, 1.0)) ** 2:
        second = float(np.mean(np.einsum("np,np->n", ghat, ghat))) / ((q + 2) * a_norm2)
        reports.append(
            IdentityReport(
                "second_moment_over_(q+2)",
                1.0,
                second,
                n_samples,
                abs(second - 1.0),
                abs(second - 1.0) <= tol_second,
            )
        )
        inner = ghat @ grad
        g2 = np.einsum("np,np->n", ghat, ghat)
        ok = g2 > 0
        cosine = float(np.mean(inner[ok] ** 2 / (a_norm2 * g2[ok])))
        reports.append(
            IdentityReport(
                "cosine_alignment_times_q",
                1.0,
                cosine * q,
                n_samples,
                abs(cosine * q - 1.0),
                abs(cosine * q - 1.0) <= tol_cosine,
            )
        )
    return reports


def mean_bias_check(
    theta: np.ndarray,
    r: int,
    layer_shapes: list[tuple[int, int]],
    eps_list: list[float],
    n_samples: int,
    master: int = 0,
) -> tuple[IdentityReport, list[dict]]:
    """O(eps^2) shrinkage of the estimator-mean bias on a quartic loss.

    Loss sum_i theta_i^4 (Hessian diag(12 theta_i^2); its Lipschitz constant
    on the perturbation-reachable box is 24*(max|theta_i| + 1), used for the
    bound row).  Uses common z across eps values and subtracts the
    first-order term (whose mean is the projected gradient, exactly) as a
    control variate, leaving an unbiased low-noise estimate of the bias.
    """
    subs = _subspaces_for_shapes(layer_shapes, r, master)
    q = sum(s.rank**2 for s in subs)
    Pmat = build_projection(subs)
    grad = 4.0 * theta**3
    z = derive_stream(StreamKey(master, Role.CORE_Z, 0, 1)).normals(
        n_samples * q
    ).reshape(n_samples, q)
    v = z @ Pmat.T
    first_order = (v @ grad)[:, None] * v  # mean is exactly P P^T grad

    L2 = 24.0 * (float(np.max(np.abs(theta))) + 1.0)
    rows = []
    devs = []
    for eps in eps_list:
        lp = ((theta + eps * v) ** 4).sum(axis=1)
        lm = ((theta - eps * v) ** 4).sum(axis=1)
        ghat = (((lp - lm) / (2.0 * eps)))[:, None] * v
        dev = float(np.linalg.norm((ghat - first_order).mean(axis=0)))
        bound = (eps**2 / 6.0) * L2 * (q + 4) ** 2
        devs.append(dev)
        rows.append(
            {"eps": eps, "deviation": dev, "bound": bound, "within_bound": dev <= bound}
        )
    ratios = [devs[i] / devs[i + 1] for i in range(len(devs) - 1)]
    scale_ratios = [
        (eps_list[i] / eps_list[i + 1]) ** 2 for i in range(len(eps_list) - 1)
    ]
    worst = max(abs(rr / sr - 1.0) for rr, sr in zip(ratios, scale_ratios))
    passed = all(r for r in (row["within_bound"] for row in rows)) and worst <= 0.25
    report = IdentityReport(
        "mean_bias_eps2_scaling",
        1.0,
        1.0 + worst,
        n_samples,
        worst,
        passed,
    )
    return report, rows


# --- exact enumeration of the spatial sampling laws ---------------------------


def _tiny_setup(master: int, term_dims: list[int], n_points: int = 3):
    """Tiny problem + net + per-(point, term) gradient table.

    Terms are the pure second derivatives along ``term_dims`` (repeats allowed
    to construct aliased operators).  Gradients w.r.t. the flattened
    parameters come from the coordinate-wise finite-difference oracle.
    """
    from .net import init_mlp

    d = 4
    problem = PdeProblem(d, "none", "two_body", np.array([0.7, -1.1, 0.4]))
    params = init_mlp([d, 3, 1], "sin", master)
    X = sample_unit_ball(
        derive_stream(StreamKey(master, Role.COLLOCATION, 0, 0)), n_points, d
    )
    theta0 = flatten_params(params)
    n_terms = len(term_dims)

    def term_value(theta: np.ndarray, point: int, term: int) -> float:
        p = unflatten_params(theta, params)
        _, _, d2 = plain_view(p).jet_eval(X[point : point + 1], [term_dims[term]])
        return float(d2[0, 0])

    # residuals use the constructed operator Lu = sum_j L_j u
    term_vals = np.array(
        [[term_value(theta0, i, j) for j in range(n_terms)] for i in range(n_points)]
    )
    R_vals = np.array([rhs_eval(problem, X[i : i + 1])[0] for i in range(n_points)])
    resid = term_vals.sum(axis=1) - R_vals
    grads = np.empty((n_points, n_terms, theta0.size))
    for i in range(n_points):
        for j in range(n_terms):
            grads[i, j] = brute_force_gradient(
                lambda th, i=i, j=j: term_value(th, i, j), theta0
            )
    return resid, term_vals, grads, R_vals, n_points, n_terms


def _surrogate_gradient(resid, grads, B_slots, I_slots, n_terms):
    """g_{B,I} for explicit slot lists (with-replacement draws)."""
    acc = np.zeros(grads.shape[-1])
    for n in B_slots:
        acc += resid[n] * grads[n][list(I_slots)].sum(axis=0)
    return acc / (len(B_slots) * len(I_slots) * n_terms)


def _full_batch_gradient(resid, grads, n_points, n_terms):
    g = np.zeros(grads.shape[-1])
    for i in range(n_points):
        g += resid[i] * grads[i].sum(axis=0)
    return g / (n_points * n_terms**2)


def variance_law_check(
    master: int = 0, term_dims: list[int] | None = None
) -> tuple[IdentityReport, dict]:
    """Exact enumeration of the (C1|I| + C2|B| + C3)/(|B||I|) variance law.

    Enumerates every equally likely with-replacement draw for
    (|B|, |I|) in {1,2}^2, fits the three constants from three
    configurations, and checks the fourth against the law.
    """
    term_dims = term_dims if term_dims is not None else [0, 1, 2, 3]
    resid, _, grads, _, n_points, n_terms = _tiny_setup(master, term_dims)
    g_full = _full_batch_gradient(resid, grads, n_points, n_terms)

    def enumerate_var(nB: int, nI: int) -> float:
        total = 0.0
        count = 0
        for B_slots in product(range(n_points), repeat=nB):
            for I_slots in product(range(n_terms), repeat=nI):
                gv = _surrogate_gradient(resid, grads, B_slots, I_slots, n_terms)
                diff = gv - g_full
                total += diff @ diff
                count += 1
        return total / count

    V = {(nB, nI): enumerate_var(nB, nI) for nB, nI in product((1, 2), repeat=2)}
    # Var * |B||I| = C1|I| + C2|B| + C3, solved from three configs
    A = np.array([[1.0, 1.0, 1.0], [1.0, 2.0, 1.0], [2.0, 1.0, 1.0]])
    y = np.array([V[(1, 1)], 2.0 * V[(2, 1)], 2.0 * V[(1, 2)]])
    C1, C2, C3 = np.linalg.solve(A, y)
    predicted = (C1 * 2 + C2 * 2 + C3) / 4.0
    residual = abs(V[(2, 2)] - predicted)
    tol = 1e-10 * max(1.0, abs(V[(2, 2)]))
    report = IdentityReport(
        "variance_law_fourth_point",
        predicted,
        V[(2, 2)],
        sum((n_points**nB) * (n_terms**nI) for nB, nI in V),
        residual,
        residual <= tol,
    )
    return report, {"C1": C1, "C2": C2, "C3": C3, "variances": V}


def unbiasedness_check(master: int = 0) -> list[IdentityReport]:
    """Enumerated expectations of the sampled gradients equal the full gradient."""
    term_dims = [0, 1, 2, 3]
    resid, term_vals, grads, R_vals, n_points, n_terms = _tiny_setup(master, term_dims)
    g_full = _full_batch_gradient(resid, grads, n_points, n_terms)
    scale = max(1.0, float(np.max(np.abs(g_full))))
    reports = []

    for nB, nI in [(1, 1), (2, 1), (1, 2), (2, 2)]:
        acc = np.zeros_like(g_full)
        count = 0
        for B_slots in product(range(n_points), repeat=nB):
            for I_slots in product(range(n_terms), repeat=nI):
                acc += _surrogate_gradient(resid, grads, B_slots, I_slots, n_terms)
                count += 1
        dev = float(np.max(np.abs(acc / count - g_full))) / scale
        reports.append(
            IdentityReport(
                f"unbiased_single_B{nB}_I{nI}",
                0.0,
                dev,
                count,
                dev,
                dev <= 1e-12,
            )
        )

    # double-sampled variant: residual factor itself subsampled over J
    for nB, nI, nJ in [(1, 1, 1), (2, 1, 2), (1, 2, 1)]:
        acc = np.zeros_like(g_full)
        count = 0
        for B_slots in product(range(n_points), repeat=nB):
            for I_slots in product(range(n_terms), repeat=nI):
                for J_slots in product(range(n_terms), repeat=nJ):
                    gv = np.zeros_like(g_full)
                    for n in B_slots:
                        r_hat = (n_terms / nJ) * sum(
                            term_vals[n][j] for j in J_slots
                        ) - R_vals[n]
                        gv += r_hat * grads[n][list(I_slots)].sum(axis=0)
                    acc += gv / (nB * nI * n_terms)
                    count += 1
        dev = float(np.max(np.abs(acc / count - g_full))) / scale
        reports.append(
            IdentityReport(
                f"unbiased_double_B{nB}_I{nI}_J{nJ}", 0.0, dev, count, dev, dev <= 1e-12
            )
        )
    return reports


# --- seed-locking variance sweep ---------------------------------------------


def crns_variance_sweep(
    problem: PdeProblem,
    params: MlpParams,
    rank: int,
    eps_list: list[float],
    replicates: int,
    B: int,
    b: int,
    master: int = 0,
) -> tuple[list[dict], float, float]:
    """Sample variance of the directional estimate over the spatial measure.

    Parameters, the perturbation direction (cores), and the collocation batch
    are frozen; replicates vary only the dimension index sets — the spatial
    random measure the variance statements quantify over (they condition on
    the direction and the batch).  Returns rows plus the two log-log slope
    estimates of variance against eps: locked should be flat, unlocked should
    follow eps^-2.
    """
    if replicates < 2:
        raise ValueError("need at least 2 replicates")
    subs = [
        subspace_for_layer(master, l, W.shape[0], W.shape[1], rank)
        for l, W in enumerate(params.weights)
    ]
    cores = [
        sample_core(derive_stream(StreamKey(master, Role.CORE_Z, 0, l)), s.rank)
        for l, s in enumerate(subs)
    ]
    variances: dict[tuple[str, float], float] = {}
    rows = []
    for eps in eps_list:
        acc = {"crns": [], "naive": []}
        for k in range(1, replicates + 1):
            sample = SpatialSample(master, k, B, b, problem.dim, collocation_step=0)
            for mode, locked in (("crns", True), ("naive", False)):
                delta, _, _ = directional_delta(
                    params, subs, cores, problem, sample, eps, locked=locked
                )
                acc[mode].append(delta)
        for mode in ("crns", "naive"):
            var = float(np.var(np.asarray(acc[mode]), ddof=1))
            variances[(mode, eps)] = var
            rows.append({"mode": mode, "eps": eps, "variance": var})
    log_eps = np.log(np.asarray(eps_list))
    slope_crns = float(
        np.polyfit(log_eps, np.log([variances[("crns", e)] for e in eps_list]), 1)[0]
    )
    slope_naive = float(
        np.polyfit(log_eps, np.log([variances[("naive", e)] for e in eps_list]), 1)[0]
    )
    return rows, slope_crns, slope_naive


# --- forward-correctness suites (also driven by the CLI) ----------------------


def jets_suite(master: int = 0) -> list[IdentityReport]:
    """Jet coefficients vs central differences; manufactured-solution residual."""
    from .net import init_mlp, jet_forward
    from .spatial import ExactSolutionView, make_problem, sampled_operator

    reports = []
    rng_key = StreamKey(master, Role.TEST_POINTS, 0, 0)
    for widths, act in [([5, 8, 1], "sin"), ([7, 6, 6, 1], "tanh_scaled"), ([3, 10, 1], "sin")]:
        params = MlpParams(
            init_mlp(widths, act, master).weights, act, 1.0
        )
        d = widths[0]
        X = sample_unit_ball(derive_stream(rng_key), 6, d) * 0.9
        dims = np.arange(d)
        J = jet_forward(plain_view(params), X, dims)
        worst = 0.0
        h = 1e-4
        for j, i in enumerate(dims):
            e = np.zeros(d)
            e[i] = h
            from .net import ansatz

            up = ansatz(plain_view(params), X + e)[:, 0]
            um = ansatz(plain_view(params), X - e)[:, 0]
            u0 = ansatz(plain_view(params), X)[:, 0]
            fd1 = (up - um) / (2 * h)
            fd2 = (up - 2 * u0 + um) / h**2
            worst = max(
                worst,
                float(np.max(np.abs(J.d1[j] - fd1)) / np.max(np.abs(fd1))),
                float(np.max(np.abs(J.d2[j] - fd2)) / np.max(np.abs(fd2))),
            )
        reports.append(
            IdentityReport(
                f"jet_vs_fd_{'x'.join(map(str, widths))}_{act}",
                0.0,
                worst,
                6 * d,
                worst,
                worst <= 1e-6,
            )
        )

    for kind, sol, d in [("none", "two_body", 8), ("allen_cahn", "two_body", 6), ("sine_gordon", "three_body", 7)]:
        problem = make_problem(kind, d, sol, master)
        ev = ExactSolutionView(problem)
        X = sample_unit_ball(derive_stream(StreamKey(master, Role.TEST_POINTS, 1, 0)), 200, d)
        resid = sampled_operator(ev, problem, X, np.arange(d)) - rhs_eval(problem, X)
        dev = float(np.max(np.abs(resid)))
        reports.append(
            IdentityReport(
                f"manufactured_residual_{kind}_{sol}", 0.0, dev, 200, dev, dev <= 1e-10
            )
        )
    return reports


def implicit_suite(master: int = 0, n_cases: int = 20) -> list[IdentityReport]:
    """Implicit perturbed forward and jets vs the dense explicit oracle.

    Random layer shapes (k > 1 splits on both sides included), random ranks,
    random cores; the relative difference on both the values and every jet
    plane must stay within 1e-10.
    """
    from .net import init_mlp, jet_forward

    fixed = [(6, 5), (40, 8), (8, 40), (128, 1), (7, 3), (12, 12)]
    stream = derive_stream(StreamKey(master, Role.CORE_Z, 0, 99))
    cases = list(fixed)
    while len(cases) < n_cases:
        m = 1 + int(stream.uniforms(1)[0] * 48)
        n = 1 + int(stream.uniforms(1)[0] * 48)
        cases.append((m, n))

    reports = []
    for idx, (m, n) in enumerate(cases):
        widths = [m, n] if n == 1 else [m, n, 1]
        params = init_mlp(widths, "sin", master + idx)
        subs = [
            subspace_for_layer(master + idx, l, W.shape[0], W.shape[1], 4)
            for l, W in enumerate(params.weights)
        ]
        cores = [
            sample_core(derive_stream(StreamKey(master + idx, Role.CORE_Z, 1, l)), s.rank)
            for l, s in enumerate(subs)
        ]
        deltas = [explicit_delta_w(s, Z) for s, Z in zip(subs, cores)]
        X = sample_unit_ball(
            derive_stream(StreamKey(master + idx, Role.TEST_POINTS, 0, 0)), 5, m
        )
        dims = np.unique(
            np.minimum((derive_stream(StreamKey(master + idx, Role.DIM_SET_1, 0, 0)).uniforms(3) * m).astype(int), m - 1)
        )
        worst = 0.0
        for sign in (+1, -1):
            view = PerturbView(params, subs, cores, sign, 0.31)
            got = view.values(X)
            phi = 1.0 - (X * X).sum(axis=1)
            want = phi * explicit_forward(params, X, deltas, sign, 0.31)[:, 0]
            worst = max(worst, float(np.max(np.abs(got - want)) / max(np.max(np.abs(want)), 1e-300)))
            J = jet_forward(view, X, dims)
            u_o, d1_o, d2_o = explicit_jet_forward(params, X, dims, deltas, sign, 0.31)
            for got_p, want_p in ((J.value, u_o), (J.d1, d1_o), (J.d2, d2_o)):
                denom = max(float(np.max(np.abs(want_p))), 1e-300)
                worst = max(worst, float(np.max(np.abs(got_p - want_p))) / denom)
        k = subs[0].plan.split_factor
        reports.append(
            IdentityReport(
                f"implicit_vs_explicit_{m}x{n}_k{k}", 0.0, worst, 2, worst, worst <= 1e-10
            )
        )
    return reports
