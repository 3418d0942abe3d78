import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oslfmvc.nnqp import QpProblem, kkt_residual, project_simplex, solve_qp


def simplex_grid_min(problem, step):
    """Brute-force minimum over a regular simplex grid (p <= 3)."""
    p = problem.p
    t = np.arange(0.0, 1.0 + step / 2, step)
    if p == 1:
        return problem.value(np.ones(1))
    if p == 2:
        B = np.stack([t, 1 - t], axis=1)
    else:
        a, b = np.meshgrid(t, t, indexing="ij")
        keep = a + b <= 1.0 + 1e-12
        a, b = a[keep], b[keep]
        B = np.stack([a, b, np.maximum(1 - a - b, 0.0)], axis=1)
    vals = np.einsum("ij,jk,ik->i", B, problem.M, B) + B @ problem.f
    return float(vals.min())


def test_identity_symmetric():
    b = solve_qp(QpProblem(np.eye(2), np.zeros(2)), np.array([1.0, 0.0]))
    np.testing.assert_allclose(b, [0.5, 0.5], atol=1e-8)


def test_single_view():
    b = solve_qp(QpProblem([[-3.0]], [5.0]), np.ones(1))
    np.testing.assert_array_equal(b, [1.0])


def test_diag_1_2():
    prob = QpProblem(np.diag([1.0, 2.0]), np.zeros(2))
    b = solve_qp(prob, np.array([0.5, 0.5]))
    # grid search at step 1e-5 puts the minimum at t = 0.66667
    t = np.arange(0, 1 + 1e-12, 1e-5)
    grid_t = t[np.argmin(t ** 2 + 2 * (1 - t) ** 2)]
    assert b[0] == pytest.approx(grid_t, abs=2e-5)
    np.testing.assert_allclose(b, [2 / 3, 1 / 3], atol=1e-8)


def test_zero_problem_returns_warm_start():
    w = np.array([0.2, 0.8])
    np.testing.assert_array_equal(solve_qp(QpProblem(np.zeros((2, 2)), np.zeros(2)), w), w)


def test_symmetrization():
    prob = QpProblem(np.array([[1.0, 2.0], [0.0, 1.0]]), np.zeros(2))
    np.testing.assert_array_equal(prob.M, [[1.0, 1.0], [1.0, 1.0]])


def test_rejects_non_finite():
    with pytest.raises(ValueError):
        QpProblem(np.array([[np.inf]]), np.zeros(1))


def test_rejects_infeasible_warm_start():
    with pytest.raises(ValueError):
        solve_qp(QpProblem(np.eye(2), np.zeros(2)), np.array([0.7, 0.7]))


def test_projection_on_simplex():
    x = project_simplex(np.array([3.0, 1.0, -2.0]))
    np.testing.assert_allclose(x, [1.0, 0.0, 0.0])
    x = project_simplex(np.array([0.5, 0.5, 0.5]))
    np.testing.assert_allclose(x, [1 / 3] * 3)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_feasible_monotone_kkt(p, seed):
    rng = np.random.default_rng(seed)
    A = rng.uniform(-1, 1, (p, p))
    prob = QpProblem(A, rng.uniform(-1, 1, p))
    w0 = rng.dirichlet(np.ones(p))
    b = solve_qp(prob, w0)
    assert np.all(b >= 0)
    assert abs(b.sum() - 1.0) <= 1e-12
    assert prob.value(b) <= prob.value(w0) + 1e-12
    assert kkt_residual(prob, b) < 1e-6


@pytest.mark.parametrize("seed", range(20))
def test_grid_oracle_p2(seed):
    rng = np.random.default_rng(seed)
    prob = QpProblem(rng.uniform(-1, 1, (2, 2)), rng.uniform(-1, 1, 2))
    b = solve_qp(prob, np.array([0.5, 0.5]))
    assert prob.value(b) <= simplex_grid_min(prob, 1e-5) + 1e-3


def test_nonneg_orthant_mode():
    # min b^T I b + (-2, -4) b over b >= 0 is at (1, 2)
    prob = QpProblem(np.eye(2), np.array([-2.0, -4.0]), simplex=False)
    b = solve_qp(prob, np.zeros(2))
    np.testing.assert_allclose(b, [1.0, 2.0], atol=1e-6)
    prob = QpProblem(np.eye(2), np.array([2.0, -4.0]), simplex=False)
    np.testing.assert_allclose(solve_qp(prob, np.zeros(2)), [0.0, 2.0], atol=1e-6)
