import numpy as np
import pytest
from hypothesis import given, strategies as st

from sclipnet.errors import SingularAggregate
from sclipnet.problem import (from_matrices, generate, gradient, gradients, load_problem, objective,
                              objective_gap, save_problem, stochastic_gradient)


def test_scalar_problem(scalar_problem):
    p = scalar_problem
    assert p.x_star[0] == pytest.approx(2.0)
    assert objective_gap(p, [3.0]) == pytest.approx(1.0)
    assert objective(p, [3.0]) - objective(p, [2.0]) == pytest.approx(1.0)
    assert p.mu == p.L == 2.0


def test_two_node_heterogeneity():
    p = from_matrices([[[1.0]], [[1.0]]], [[-1.0], [1.0]])
    assert p.x_star[0] == pytest.approx(0.0)
    assert p.c_star == pytest.approx(1.0)


def test_generated_minimizer_matches_dense_solve(ref_problem):
    p = ref_problem
    x = np.linalg.solve(p.A.sum(0), -p.b.sum(0))
    np.testing.assert_allclose(p.x_star, x, rtol=0, atol=1e-10)
    assert np.linalg.norm(p.A_mean @ p.x_star + p.b_mean) <= 1e-8
    assert p.mu >= 0.01 - 1e-12
    assert p.c_star > 1e-6
    for Ai in p.A:
        np.testing.assert_array_equal(Ai, Ai.T)
        assert np.linalg.eigvalsh(Ai)[0] >= 0.01 - 1e-12


def test_generation_is_deterministic():
    a = generate(5, 3, np.random.default_rng(4))
    b = generate(5, 3, np.random.default_rng(4))
    np.testing.assert_array_equal(a.A, b.A)
    np.testing.assert_array_equal(a.b, b.b)


def test_gradient_finite_differences(small_problem):
    p = small_problem
    rng = np.random.default_rng(0)
    x = rng.normal(size=p.d)
    h = 1e-6
    for i in range(p.n):
        fd = np.array([(0.5 * (x + h * e) @ p.A[i] @ (x + h * e) + p.b[i] @ (x + h * e)
                        - 0.5 * (x - h * e) @ p.A[i] @ (x - h * e) - p.b[i] @ (x - h * e)) / (2 * h)
                       for e in np.eye(p.d)])
        np.testing.assert_allclose(gradient(p, i, x), fd, atol=1e-6)
    X = rng.normal(size=(p.n, p.d))
    np.testing.assert_allclose(gradients(p, X), [gradient(p, i, X[i]) for i in range(p.n)], atol=1e-14)


def test_stochastic_gradient_is_unbiased(small_problem, heavy):
    p = small_problem
    rng = np.random.default_rng(3)
    x = np.ones(p.d)
    draws = np.array([stochastic_gradient(p, 1, x, heavy, rng) for _ in range(20000)])
    se = heavy.sigma / np.sqrt(len(draws))
    assert np.all(np.abs(draws.mean(0) - gradient(p, 1, x)) < 5 * se)


def test_curvature_bounds_hold(small_problem):
    p = small_problem
    rng = np.random.default_rng(8)
    for _ in range(100):
        x, y = rng.normal(size=(2, p.d)) * 3
        for i in range(p.n):
            g = gradient(p, i, x) - gradient(p, i, y)
            dist2 = (x - y) @ (x - y)
            assert g @ (x - y) >= p.mu * dist2 - 1e-9
            assert np.linalg.norm(g) <= p.L * np.sqrt(dist2) + 1e-9


def test_save_load_round_trip(tmp_path, small_problem):
    path = tmp_path / "problem.txt"
    save_problem(small_problem, path)
    q = load_problem(path)
    np.testing.assert_array_equal(q.A, small_problem.A)
    np.testing.assert_array_equal(q.b, small_problem.b)
    np.testing.assert_array_equal(q.x_star, small_problem.x_star)


def test_load_rejects_bad_shape(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("1 2\n1 0\n")
    with pytest.raises(ValueError):
        load_problem(path)


def test_singular_aggregate():
    with pytest.raises(SingularAggregate):
        from_matrices([[[1.0, 0.0], [0.0, 0.0]]], [[0.0, 0.0]])


def test_non_strongly_convex_local_rejected():
    A = [[[1.0, 0.0], [0.0, 0.0]], [[1.0, 0.0], [0.0, 2.0]]]
    with pytest.raises(ValueError):
        from_matrices(A, [[0.0, 0.0], [0.0, 0.0]])


@given(st.integers(0, 10**6), st.integers(1, 4), st.integers(1, 5))
def test_gap_is_nonnegative_and_zero_at_minimizer(seed, n, d):
    p = generate(n, d, np.random.default_rng(seed))
    assert objective_gap(p, p.x_star) == 0.0
    x = np.random.default_rng(seed + 1).normal(size=d)
    assert objective_gap(p, x) >= 0.0
    assert objective_gap(p, x) == pytest.approx(objective(p, x) - objective(p, p.x_star), rel=1e-6, abs=1e-9)
