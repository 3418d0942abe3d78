"""Small nonnegative / simplex-constrained quadratic programs.

Minimizes ``b^T M b + f^T b`` over ``b >= 0`` (optionally with ``sum(b) = 1``).
``M`` may be indefinite, so the solver runs projected gradient descent from
several starting points and never returns anything worse than the warm start.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["QpProblem", "solve_qp", "project_simplex", "project_nonneg", "kkt_residual"]

MAX_INNER = 5000


@dataclass
class QpProblem:
    M: np.ndarray
    f: np.ndarray
    simplex: bool = True

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.M, dtype=np.float64))
        f = np.atleast_1d(np.asarray(self.f, dtype=np.float64))
        if M.shape != (f.size, f.size):
            raise ValueError("M must be p x p with p = len(f)")
        if not (np.all(np.isfinite(M)) and np.all(np.isfinite(f))):
            raise ValueError("non-finite QP coefficients")
        self.M = 0.5 * (M + M.T)
        self.f = f

    @property
    def p(self) -> int:
        return self.f.size

    def value(self, b) -> float:
        return float(b @ self.M @ b + self.f @ b)

    def grad(self, b) -> np.ndarray:
        return 2.0 * self.M @ b + self.f

    def project(self, b) -> np.ndarray:
        return project_simplex(b) if self.simplex else project_nonneg(b)


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum(x) = 1} by sorting."""
    v = np.asarray(v, dtype=np.float64)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    rho = ind[u - css / ind > 0][-1]
    theta = css[rho - 1] / rho
    x = np.maximum(v - theta, 0.0)
    # push the residual rounding error of the sum onto the largest entry
    x[np.argmax(x)] += 1.0 - x.sum()
    return x


def project_nonneg(v) -> np.ndarray:
    return np.maximum(np.asarray(v, dtype=np.float64), 0.0)


def kkt_residual(problem: QpProblem, b) -> float:
    """Norm of the projected-gradient map b - proj(b - grad)."""
    return float(np.linalg.norm(b - problem.project(b - problem.grad(b))))


def _pgd(problem: QpProblem, b, max_iter: int, tol: float):
    fb = problem.value(b)
    step = 1.0 / max(2.0 * np.linalg.norm(problem.M, 2), 1e-12)
    for _ in range(max_iter):
        g = problem.grad(b)
        if np.linalg.norm(b - problem.project(b - g)) < tol:
            break
        t = step * 4.0
        while True:
            cand = problem.project(b - t * g)
            fc = problem.value(cand)
            # Armijo condition on the projected step
            if fc <= fb + g @ (cand - b) + 0.5 / t * np.sum((cand - b) ** 2) or t < 1e-20:
                break
            t *= 0.5
        if fc > fb:
            break
        moved = np.max(np.abs(cand - b))
        b, fb = cand, fc
        step = t
        if moved == 0.0 or not np.isfinite(fb) or np.abs(b).max() > 1e12:
            # unbounded below (orthant mode with indefinite M)
            break
    return b, fb


def solve_qp(problem: QpProblem, warm_start=None, max_iter: int = MAX_INNER,
             tol: float = 1e-10) -> np.ndarray:
    """Minimize the QP, never returning a worse point than ``warm_start``.

    Starts from the warm start, every vertex of the feasible region (the simplex
    corners, or the coordinate axes scaled to the warm start's mass) and the
    barycenter, then keeps the best local solution found.
    """
    p = problem.p
    if warm_start is None:
        warm_start = np.full(p, 1.0 / p) if problem.simplex else np.zeros(p)
    w0 = np.asarray(warm_start, dtype=np.float64)
    if w0.shape != (p,):
        raise ValueError("warm start has wrong length")
    if np.any(w0 < 0) or (problem.simplex and abs(w0.sum() - 1.0) > 1e-9):
        raise ValueError("warm start is not feasible")
    if p == 1 and problem.simplex:
        return np.ones(1)
    if not np.any(problem.M) and not np.any(problem.f):
        return w0.copy()

    best, best_val = w0.copy(), problem.value(w0)
    starts = [w0]
    if problem.simplex:
        starts += list(np.eye(p)) + [np.full(p, 1.0 / p)]
    else:
        mass = max(w0.sum(), 1.0)
        starts += list(mass * np.eye(p))
    for s in starts:
        b, val = _pgd(problem, s.copy(), max_iter, tol)
        if val < best_val:
            best, best_val = b, val
    best = np.maximum(best, 0.0)
    if problem.simplex:
        best = best / best.sum()
    # clamping/renormalizing can cost a hair of objective; keep the safeguard exact
    if problem.value(best) > problem.value(w0):
        return w0.copy()
    return best
