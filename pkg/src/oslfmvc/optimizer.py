"""One-step late-fusion multi-view clustering in a compressed subspace.

Given base partitions ``H_i`` (k x n, orthonormal rows) the method maximizes

    tr(H (H P S)^T) + tr(Y^T C^T H),    H = sum_i beta_i W_i H_i

over orthogonal ``W_i`` (k x k), view weights ``beta``, a column-orthonormal
compression ``P`` (n x m), a reconstruction ``S`` (m x n) with unit-norm
columns, column-orthonormal centroids ``C`` (k x mu) and one-hot labels ``Y``
(mu x n). Each block has a closed-form (or tiny QP) update; alternating them
yields discrete labels without a trailing k-means.

Nothing in the loop forms an n x n matrix: every product is ordered so the
per-iteration cost is linear in n.
"""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .data_io import ClusteringResult
from .kernels import PartitionSet
from .metrics import evaluate
from .nnqp import QpProblem, solve_qp

__all__ = [
    "Hyperparams",
    "FusionState",
    "init_state",
    "objective",
    "objective_terms",
    "objective_upper_bound",
    "consensus",
    "procrustes",
    "w_coefficient",
    "beta_qp",
    "p_coefficient",
    "s_coefficient",
    "c_coefficient",
    "y_scores",
    "update_W",
    "update_beta",
    "update_P",
    "update_S",
    "update_C",
    "update_Y",
    "iterate",
    "run",
    "invariant_report",
]

logger = logging.getLogger(__name__)

W_STEP_RTOL = 1e-6


@dataclass
class Hyperparams:
    k: int
    m: int
    mu: int
    max_iters: int = 200
    tol: float = 1e-3
    seed: int = 0
    simplex: bool = True
    strict_s: bool = False
    criterion: str = "absolute"
    rel_tol: float = 1e-6
    init_labels: str = "projection"

    def validate(self, n: Optional[int] = None, k: Optional[int] = None) -> None:
        if self.mu < 1:
            raise ValueError("mu must be positive")
        if self.k < self.mu:
            raise ValueError("k=%d is smaller than mu=%d" % (self.k, self.mu))
        if self.m < self.mu:
            raise ValueError("m=%d is smaller than mu=%d" % (self.m, self.mu))
        if n is not None and self.m > n:
            raise ValueError("m=%d exceeds n=%d" % (self.m, n))
        if k is not None and k != self.k:
            raise ValueError("partitions have k=%d but hyperparams say k=%d" % (k, self.k))
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        if self.criterion not in ("absolute", "relative"):
            raise ValueError("criterion must be 'absolute' or 'relative'")
        if self.init_labels not in ("projection", "random"):
            raise ValueError("init_labels must be 'projection' or 'random'")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class FusionState:
    W: np.ndarray            # (p, k, k)
    beta: np.ndarray         # (p,)
    P: np.ndarray            # (n, m)
    S: np.ndarray            # (m, n)
    C: np.ndarray            # (k, mu)
    Y: np.ndarray            # (mu, n), 0/1
    H: np.ndarray            # (k, n)
    objective_trace: list = field(default_factory=list)

    @property
    def labels(self) -> np.ndarray:
        return np.argmax(self.Y, axis=0)

    def copy(self) -> "FusionState":
        return FusionState(self.W.copy(), self.beta.copy(), self.P.copy(), self.S.copy(),
                           self.C.copy(), self.Y.copy(), self.H.copy(),
                           list(self.objective_trace))


def _as_partitions(partitions) -> np.ndarray:
    if isinstance(partitions, PartitionSet):
        return partitions.partitions
    return np.asarray(partitions, dtype=np.float64)


def consensus(W, beta, Hs) -> np.ndarray:
    """sum_i beta_i W_i H_i."""
    p, k, n = Hs.shape
    # one (k x pk) @ (pk x n) product instead of p passes over n
    Wcat = (np.asarray(beta)[:, None, None] * W).transpose(1, 0, 2).reshape(k, p * k)
    return Wcat @ Hs.reshape(p * k, n)


def one_hot(labels, mu: int) -> np.ndarray:
    Y = np.zeros((mu, labels.size))
    Y[labels, np.arange(labels.size)] = 1.0
    return Y


def procrustes(G) -> np.ndarray:
    """argmax_W tr(G W^T) over matrices with orthonormal columns: U V^T of G."""
    U, _, Vt = np.linalg.svd(G, full_matrices=False)
    return U @ Vt


def init_state(partitions, hp: Hyperparams) -> FusionState:
    """Seeded starting point satisfying every constraint.

    P is the Q factor of a uniform random n x m matrix, S a uniform random
    nonnegative matrix with unit columns, beta uniform, W_i = I and C the first
    mu columns of I_k. With ``init_labels="projection"`` Y is the label step
    applied to this start (argmax of C^T H); if that leaves a cluster empty, or
    with ``init_labels="random"``, Y is a seeded random balanced assignment.
    """
    Hs = _as_partitions(partitions)
    p, k, n = Hs.shape
    hp.validate(n=n, k=k)
    rng = np.random.default_rng(hp.seed)
    P, _ = np.linalg.qr(rng.uniform(size=(n, hp.m)))
    S = rng.uniform(size=(hp.m, n))
    S /= np.linalg.norm(S, axis=0)
    labels = rng.permutation(np.arange(n) % hp.mu)
    W = np.stack([np.eye(k)] * p)
    beta = np.full(p, 1.0 / p)
    C = np.eye(k)[:, : hp.mu]
    H = consensus(W, beta, Hs)
    if hp.init_labels == "projection":
        projected = np.argmax(C.T @ H, axis=0)
        if np.unique(projected).size == hp.mu:
            labels = projected
    state = FusionState(W=W, beta=beta, P=P, S=S, C=C, Y=one_hot(labels, hp.mu), H=H)
    state.objective_trace.append(objective(state))
    return state


def objective_terms(state: FusionState, partitions=None) -> tuple:
    """(tr(H (HPS)^T), tr(Y^T C^T H)); H is recomputed if partitions are given."""
    H = state.H if partitions is None else consensus(state.W, state.beta,
                                                      _as_partitions(partitions))
    fusion = float(np.sum((H @ state.S.T) * (H @ state.P)))
    label = float(np.sum(state.C * (H @ state.Y.T)))
    return fusion, label


def objective(state: FusionState, partitions=None) -> float:
    fusion, label = objective_terms(state, partitions)
    return fusion + label


def objective_upper_bound(state: FusionState) -> float:
    """||H||_F^2 ||S||_2 + sum_j max_i (C^T H)_ij, valid for every feasible P, Y."""
    s_norm = float(np.sqrt(np.linalg.eigvalsh(state.S @ state.S.T)[-1]))
    B = state.C.T @ state.H
    return float(np.sum(state.H ** 2)) * s_norm + float(B.max(axis=0).sum())


# -- block updates ------------------------------------------------------------

def w_coefficient(state: FusionState, partitions, delta: int) -> np.ndarray:
    """G = beta_d (sum_{j != d} beta_j W_j H_j) S^T P^T H_d^T + beta_d C Y H_d^T (k x k)."""
    Hs = _as_partitions(partitions)
    Hd = Hs[delta]
    bd = state.beta[delta]
    rest = np.zeros_like(state.H)
    for j in range(Hs.shape[0]):
        if j != delta:
            rest += state.beta[j] * (state.W[j] @ Hs[j])
    return bd * ((rest @ state.S.T) @ (state.P.T @ Hd.T)) + bd * (state.C @ (state.Y @ Hd.T))


def update_W(state: FusionState, partitions, delta: int) -> None:
    """Procrustes step for view ``delta``: W_d = U V^T from the SVD of G.

    The G used here leaves out the quadratic self-term of view ``delta``, so
    this step is not guaranteed to raise the objective.
    """
    Hs = _as_partitions(partitions)
    G = w_coefficient(state, Hs, delta)
    if not np.all(np.isfinite(G)):
        raise FloatingPointError("non-finite W-step coefficient")
    state.W[delta] = procrustes(G)
    state.H = consensus(state.W, state.beta, Hs)


def beta_qp(state: FusionState, partitions, simplex: bool = True) -> QpProblem:
    """QP data for the weight step (negated, to be minimized)."""
    Hs = _as_partitions(partitions)
    U = [Wi @ Hi for Wi, Hi in zip(state.W, Hs)]
    US = [Ui @ state.S.T for Ui in U]
    UP = [Ui @ state.P for Ui in U]
    p = len(U)
    M = np.empty((p, p))
    for i in range(p):
        for j in range(p):
            M[i, j] = -np.sum(US[i] * UP[j])
    f = np.array([-np.sum(state.C * (Ui @ state.Y.T)) for Ui in U])
    return QpProblem(M, f, simplex=simplex)


def update_beta(state: FusionState, partitions, simplex: bool = True) -> None:
    Hs = _as_partitions(partitions)
    state.beta = solve_qp(beta_qp(state, Hs, simplex=simplex), warm_start=state.beta)
    state.H = consensus(state.W, state.beta, Hs)


def p_coefficient(state: FusionState) -> np.ndarray:
    """A = H^T H S^T (n x m), so that the fusion term equals tr(A^T P)."""
    return state.H.T @ (state.H @ state.S.T)


def update_P(state: FusionState) -> None:
    state.P = procrustes(p_coefficient(state))


def s_coefficient(state: FusionState) -> np.ndarray:
    """Q = H^T H P (n x m); the fusion term equals sum_i <row i of Q, column i of S>."""
    return state.H.T @ (state.H @ state.P)


def update_S(state: FusionState, strict: bool = False) -> None:
    """Column i of S is row i of Q = H^T H P, normalized.

    Zero rows give the uniform column 1/sqrt(m). ``strict`` keeps S >= 0 by
    using the exact nonnegative maximizer instead.
    """
    Q = s_coefficient(state)
    m = Q.shape[1]
    if strict:
        pos = np.maximum(Q, 0.0)
        empty = ~np.any(pos > 0.0, axis=1)
        if np.any(empty):
            # no positive entry: best nonnegative unit vector is a coordinate vector
            pos[empty] = 0.0
            pos[empty, np.argmax(Q[empty], axis=1)] = 1.0
        Q = pos
    norms = np.linalg.norm(Q, axis=1)
    zero = norms < 1e-14
    if np.any(zero):
        norms[zero] = 1.0
        Q[zero] = 1.0 / np.sqrt(m)
    Q /= norms[:, None]
    state.S = np.ascontiguousarray(Q.T)


def c_coefficient(state: FusionState) -> np.ndarray:
    return state.H @ state.Y.T


def update_C(state: FusionState) -> None:
    state.C = procrustes(c_coefficient(state))


def y_scores(state: FusionState) -> np.ndarray:
    """B = C^T H (mu x n)."""
    return state.C.T @ state.H


def update_Y(state: FusionState) -> None:
    """One-hot at argmax of each column of C^T H; ties go to the lowest row."""
    B = y_scores(state)
    state.Y = one_hot(np.argmax(B, axis=0), B.shape[0])


# -- loop ---------------------------------------------------------------------

def view_projections(state: FusionState, partitions):
    """Per-view k x m / k x mu products (H_i S^T, H_i P, H_i Y^T).

    They depend only on S, P and Y, which the W and beta steps leave alone, so
    one pass over the n-sized data per iteration serves both steps.
    """
    Hs = _as_partitions(partitions)
    p, k, n = Hs.shape
    flat = Hs.reshape(p * k, n)
    HS = (flat @ state.S.T).reshape(p, k, -1)
    HP = (flat @ state.P).reshape(p, k, -1)
    HY = (flat @ state.Y.T).reshape(p, k, -1)
    return HS, HP, HY


def _projected_objective(state: FusionState, proj) -> float:
    HS, HP, HY = proj
    beta_w = state.beta[:, None, None] * state.W
    hs = np.einsum("pab,pbm->am", beta_w, HS)
    hp = np.einsum("pab,pbm->am", beta_w, HP)
    hy = np.einsum("pab,pbm->am", beta_w, HY)
    return float(np.sum(hs * hp) + np.sum(state.C * hy))


def update_W_sweep(state: FusionState, partitions, proj=None) -> None:
    """All W updates in view order (Gauss-Seidel), same result as calling
    :func:`update_W` for delta = 0..p-1 but in k x k arithmetic only."""
    Hs = _as_partitions(partitions)
    HS, HP, HY = view_projections(state, Hs) if proj is None else proj
    WS = np.einsum("pab,pbm->pam", state.W, HS)   # W_j H_j S^T
    for d in range(Hs.shape[0]):
        bd = state.beta[d]
        rest = np.tensordot(np.delete(state.beta, d), np.delete(WS, d, axis=0), axes=1)
        G = bd * (rest @ HP[d].T) + bd * (state.C @ HY[d].T)
        if not np.all(np.isfinite(G)):
            raise FloatingPointError("non-finite W-step coefficient")
        state.W[d] = procrustes(G)
        WS[d] = state.W[d] @ HS[d]
    state.H = consensus(state.W, state.beta, Hs)


def beta_qp_projected(state: FusionState, proj, simplex: bool = True) -> QpProblem:
    """:func:`beta_qp` computed from :func:`view_projections`."""
    HS, HP, HY = proj
    US = np.einsum("pab,pbm->pam", state.W, HS)
    UP = np.einsum("pab,pbm->pam", state.W, HP)
    UY = np.einsum("pab,pbm->pam", state.W, HY)
    M = -np.einsum("iam,jam->ij", US, UP)
    f = -np.einsum("am,pam->p", state.C, UY)
    return QpProblem(M, f, simplex=simplex)


def iterate(state: FusionState, partitions, hp: Hyperparams) -> bool:
    """One full sweep W -> beta -> P -> S -> C -> Y. Returns True if the W sweep
    lowered the objective beyond the relative tolerance."""
    Hs = _as_partitions(partitions)
    proj = view_projections(state, Hs)
    before = _projected_objective(state, proj)
    update_W_sweep(state, Hs, proj)
    after = _projected_objective(state, proj)
    w_drop = after < before - W_STEP_RTOL * abs(before)
    if w_drop:
        logger.info("W sweep lowered the objective: %.10g -> %.10g", before, after)
    qp = beta_qp_projected(state, proj, simplex=hp.simplex)
    state.beta = solve_qp(qp, warm_start=state.beta)
    state.H = consensus(state.W, state.beta, Hs)
    update_P(state)
    update_S(state, strict=hp.strict_s)
    update_C(state)
    update_Y(state)
    state.objective_trace.append(objective(state))
    return w_drop


def _converged(prev: float, cur: float, hp: Hyperparams) -> bool:
    if hp.criterion == "relative":
        return abs(cur - prev) < hp.rel_tol * max(abs(cur), 1e-300)
    return (cur - prev) ** 2 < hp.tol


# without the sum-to-one constraint the beta block is unbounded; give up past this
DIVERGENCE_LIMIT = 1e100


def run(partitions, hp: Hyperparams, truth=None,
        callback: Optional[Callable[[FusionState, int], None]] = None) -> ClusteringResult:
    """Alternate the six block updates until the objective settles.

    Stops when ``(obj_t - obj_{t-1})**2 < hp.tol`` (or the relative rule) or
    after ``hp.max_iters`` sweeps. ``callback(state, t)`` runs after every sweep.
    """
    Hs = _as_partitions(partitions)
    t0 = time.perf_counter()
    state = init_state(Hs, hp)
    iter_times = []
    converged = False
    violations = 0
    t = 0
    for t in range(1, hp.max_iters + 1):
        ti = time.perf_counter()
        violations += iterate(state, Hs, hp)
        iter_times.append(time.perf_counter() - ti)
        if callback is not None:
            callback(state, t)
        cur = state.objective_trace[-1]
        if not np.isfinite(cur) or abs(cur) > DIVERGENCE_LIMIT:
            logger.warning("objective diverged at iteration %d (%.3g); stopping", t, cur)
            break
        if _converged(state.objective_trace[-2], state.objective_trace[-1], hp):
            converged = True
            break
    seconds = time.perf_counter() - t0
    if violations:
        logger.warning("W sweep lowered the objective in %d of %d iterations", violations, t)
    result = ClusteringResult(
        labels=state.labels.astype(np.int64),
        objective_trace=list(state.objective_trace),
        iterations=t,
        seconds=seconds,
        seed=hp.seed,
        hyperparams=hp.as_dict(),
        converged=converged,
        beta=state.beta.copy(),
        w_step_violations=violations,
        iteration_times=iter_times,
        state=state,
    )
    if truth is not None:
        scores = evaluate(result.labels, truth)
        result.acc, result.nmi, result.purity = scores["acc"], scores["nmi"], scores["purity"]
    return result


def invariant_report(state: FusionState, partitions) -> dict:
    """Max-abs deviation of every constraint (0 means exactly satisfied)."""
    Hs = _as_partitions(partitions)
    k = state.W.shape[1]
    m = state.P.shape[1]
    mu = state.C.shape[1]
    Y = state.Y
    return {
        "W": max(float(np.max(np.abs(Wi.T @ Wi - np.eye(k)))) for Wi in state.W),
        "P": float(np.max(np.abs(state.P.T @ state.P - np.eye(m)))),
        "C": float(np.max(np.abs(state.C.T @ state.C - np.eye(mu)))),
        "S": float(np.max(np.abs(np.linalg.norm(state.S, axis=0) - 1.0))),
        "Y": float(np.max(np.abs(Y.sum(axis=0) - 1.0)) + np.count_nonzero((Y != 0) & (Y != 1))),
        "beta_neg": float(max(0.0, -state.beta.min())),
        "beta_sum": float(abs(state.beta.sum() - 1.0)),
        "H": float(np.max(np.abs(state.H - consensus(state.W, state.beta, Hs)))),
    }
