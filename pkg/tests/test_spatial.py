from itertools import product

import numpy as np
import pytest
from scipy import stats

from sdze.net import init_mlp, plain_view
from sdze.rng import Role, StreamKey, derive_stream
from sdze.spatial import (
    ExactSolutionView,
    PdeProblem,
    SpatialSample,
    exact_solution,
    make_problem,
    relative_l2,
    rhs_eval,
    sample_unit_ball,
    sampled_operator,
    stochastic_loss,
)

TEST_KEY = StreamKey(3, Role.TEST_POINTS, 0, 0)


def test_ball_points_inside():
    X = sample_unit_ball(derive_stream(TEST_KEY), 5000, 7)
    assert np.all(np.linalg.norm(X, axis=1) <= 1.0 + 1e-12)


def test_ball_d1_is_uniform_on_segment():
    x = sample_unit_ball(derive_stream(TEST_KEY), 10**5, 1)[:, 0]
    p = stats.kstest(x, stats.uniform(loc=-1, scale=2).cdf).pvalue
    assert p > 0.001


def test_ball_second_moment_d2():
    X = sample_unit_ball(derive_stream(TEST_KEY), 10**6, 2)
    m = (X * X).sum(axis=1).mean()  # E||x||^2 = d/(d+2) = 1/2
    assert abs(m - 0.5) < 0.005


def test_exact_solution_values():
    p = PdeProblem(2, "none", "two_body", np.array([1.0]))
    assert np.isclose(
        exact_solution(p, np.array([[0.5, 0.5]]))[0], 0.5 * np.exp(0.25), rtol=1e-15
    )
    assert exact_solution(p, np.array([[1.0, 0.0]]))[0] == 0.0
    p3 = make_problem("none", 5, "three_body", 7)
    assert np.isclose(
        exact_solution(p3, np.zeros((1, 5)))[0], p3.coeffs.sum(), rtol=1e-15
    )


def test_problem_construction_guards():
    with pytest.raises(ValueError):
        make_problem("none", 1, "two_body", 0)
    with pytest.raises(ValueError):
        make_problem("none", 2, "three_body", 0)
    with pytest.raises(ValueError):
        PdeProblem(3, "unknown", "two_body", np.array([1.0, 1.0]))


def test_rhs_poisson_value_at_origin():
    # Lap[(1-|x|^2) c e^{x1 x2}](0) = -4c; verified against finite differences
    c = -0.8
    p = PdeProblem(2, "none", "two_body", np.array([c]))
    assert np.isclose(rhs_eval(p, np.zeros((1, 2)))[0], -4.0 * c, rtol=1e-13)
    h = 1e-5
    fd = 0.0
    for i in range(2):
        e = np.zeros((1, 2))
        e[0, i] = h
        fd += (
            exact_solution(p, e) - 2 * exact_solution(p, e * 0) + exact_solution(p, -e)
        )[0] / h**2
    assert np.isclose(fd, -4.0 * c, atol=1e-5)


@pytest.mark.parametrize(
    "kind,solution,d",
    [("none", "two_body", 6), ("allen_cahn", "two_body", 5), ("sine_gordon", "three_body", 7)],
)
def test_manufactured_solution_consistency(kind, solution, d):
    prob = make_problem(kind, d, solution, 77)
    ev = ExactSolutionView(prob)
    X = sample_unit_ball(derive_stream(TEST_KEY), 200, d)
    resid = sampled_operator(ev, prob, X, np.arange(d)) - rhs_eval(prob, X)
    assert np.abs(resid).max() <= 1e-10


def test_sampled_operator_scaling_single_dim():
    prob = make_problem("allen_cahn", 4, "two_body", 5)
    net = init_mlp([4, 5, 1], "sin", 9)
    view = plain_view(net)
    X = sample_unit_ball(derive_stream(TEST_KEY), 6, 4)
    u, _, d2 = view.jet_eval(X, np.array([2]))
    want = 4.0 * d2[0] + (u - u**3)
    got = sampled_operator(view, prob, X, [2])
    assert np.allclose(got, want, rtol=1e-14)
    with pytest.raises(ValueError):
        sampled_operator(view, prob, X, [])


def test_operator_unbiasedness_by_enumeration():
    prob = make_problem("none", 3, "two_body", 5)
    net = init_mlp([3, 4, 1], "sin", 9)
    view = plain_view(net)
    X = sample_unit_ball(derive_stream(TEST_KEY), 10, 3)
    full = sampled_operator(view, prob, X, np.arange(3))
    mean_single = np.mean(
        [sampled_operator(view, prob, X, [i]) for i in range(3)], axis=0
    )
    assert np.abs(full - mean_single).max() <= 1e-12 * max(1, np.abs(full).max())


def test_loss_full_sampling_identity():
    prob = PdeProblem(3, "allen_cahn", "two_body", np.array([0.5, -1.0]), "raw")
    net = init_mlp([3, 4, 1], "sin", 2)
    sample = SpatialSample(master=8, step=1, B=5, b=3, d=3)
    got = stochastic_loss(plain_view(net), prob, sample)
    X = sample.points()
    r = sampled_operator(plain_view(net), prob, X, np.arange(3)) - rhs_eval(prob, X)
    assert np.isclose(got, float(r @ r) / (2 * 5), rtol=1e-12)


def test_loss_dim_normalization():
    prob_raw = PdeProblem(3, "none", "two_body", np.array([0.5, -1.0]), "raw")
    prob_norm = PdeProblem(3, "none", "two_body", np.array([0.5, -1.0]), "dim_normalized")
    net = init_mlp([3, 4, 1], "sin", 2)
    sample = SpatialSample(master=8, step=1, B=5, b=3, d=3)
    a = stochastic_loss(plain_view(net), prob_raw, sample)
    b = stochastic_loss(plain_view(net), prob_norm, sample)
    assert np.isclose(a, b * 9.0, rtol=1e-12)


def test_loss_vanishes_on_exact_solution():
    prob = make_problem("allen_cahn", 4, "two_body", 5)
    sample = SpatialSample(master=3, step=1, B=6, b=4, d=4)
    assert abs(stochastic_loss(ExactSolutionView(prob), prob, sample)) <= 1e-10


def test_loss_unbiasedness_enumeration_d3():
    # expectation over all 9 (I1, I2) singleton pairs equals the exact loss
    prob = PdeProblem(3, "allen_cahn", "two_body", np.array([0.9, 0.3]), "raw")
    net = init_mlp([3, 4, 1], "sin", 4)
    view = plain_view(net)
    X = sample_unit_ball(derive_stream(TEST_KEY), 1, 3)
    f = rhs_eval(prob, X)
    res_full = sampled_operator(view, prob, X, np.arange(3)) - f
    exact = float(res_full @ res_full) / 2.0
    acc = 0.0
    for i, j in product(range(3), repeat=2):
        r1 = sampled_operator(view, prob, X, [i]) - f
        r2 = sampled_operator(view, prob, X, [j]) - f
        acc += float(r1 @ r2) / 2.0
    assert abs(acc / 9.0 - exact) <= 1e-12 * max(1.0, abs(exact))


def test_crns_sample_regeneration_is_bitwise():
    s = SpatialSample(master=3, step=5, B=4, b=2, d=6)
    assert np.array_equal(s.points(), s.points())
    assert np.array_equal(s.set1(), s.set1())
    assert np.array_equal(s.set2(), s.set2())
    # replicate index reroutes only the index sets, not the batch
    s2 = SpatialSample(master=3, step=5, B=4, b=2, d=6, set_replicate=1)
    assert np.array_equal(s.points(), s2.points())


def test_independent_dim_set_streams():
    # I1 and I2 come from different roles: over many steps they must differ
    diff = sum(
        not np.array_equal(
            SpatialSample(1, t, 1, 3, 30).set1(), SpatialSample(1, t, 1, 3, 30).set2()
        )
        for t in range(50)
    )
    assert diff >= 45


def test_relative_l2_trivials_and_hand_value():
    prob = make_problem("none", 2, "two_body", 6)
    assert relative_l2(ExactSolutionView(prob), prob, TEST_KEY, 64) <= 1e-15

    class Zero:
        def values(self, X):
            return np.zeros(len(X))

    assert np.isclose(relative_l2(Zero(), prob, TEST_KEY, 64), 1.0, rtol=1e-15)

    class Shifted:
        # u_theta - u_exact = (1, 0) on a 2-point test set with u_exact = (1, 1)
        def values(self, X):
            return np.array([2.0, 1.0])

    class Exact2:
        def values(self, X):
            return np.array([1.0, 1.0])

    class FakeProblem:
        dim = 2

    import sdze.spatial as sp

    orig = sp.exact_solution
    sp.exact_solution = lambda p, X: np.array([1.0, 1.0])
    try:
        got = sp.relative_l2(Shifted(), prob, TEST_KEY, 2)
    finally:
        sp.exact_solution = orig
    assert np.isclose(got, np.sqrt(0.5), rtol=1e-15)


def test_aliased_terms_construction():
    prob = PdeProblem(4, "none", "two_body", np.array([1.0, 1.0, 1.0]), alias_terms=True)
    net = init_mlp([4, 5, 1], "sin", 9)
    view = plain_view(net)
    X = sample_unit_ball(derive_stream(TEST_KEY), 4, 4)
    a = sampled_operator(view, prob, X, [2])
    b = sampled_operator(view, prob, X, [0])
    assert np.array_equal(a, b)
