"""Kernel k-means baselines: single kernel, average kernel, best single view, MKKM."""
from __future__ import annotations

import numpy as np
from sklearn.cluster import KMeans

from .kernels import KernelSet, extract_partition
from .metrics import accuracy

__all__ = ["discretize", "kernel_kmeans", "avg_kkm", "sb_kkm", "mkkm", "mkkm_objective"]

N_RESTARTS = 10


def _kernels(kernels):
    return kernels.kernels if isinstance(kernels, KernelSet) else [np.asarray(K) for K in kernels]


def discretize(H, mu: int, seed: int = 0) -> np.ndarray:
    """Lloyd k-means on the row-normalized embedding H^T (n x r).

    Samples whose embedding row is zero go to cluster 0.
    """
    E = np.asarray(H, dtype=np.float64).T
    n = E.shape[0]
    if mu == 1:
        return np.zeros(n, dtype=np.int64)
    norms = np.linalg.norm(E, axis=1)
    live = norms > 1e-14
    labels = np.zeros(n, dtype=np.int64)
    if np.count_nonzero(live) < mu:
        return labels
    E = E[live] / norms[live, None]
    km = KMeans(n_clusters=mu, init="k-means++", n_init=N_RESTARTS, algorithm="lloyd",
                random_state=seed)
    labels[live] = km.fit_predict(E)
    return labels


def kernel_kmeans(K, mu: int, seed: int = 0) -> np.ndarray:
    """Relaxed kernel k-means: top-mu eigenvectors of K, then discretize."""
    K = np.asarray(K, dtype=np.float64)
    if mu > K.shape[0]:
        raise ValueError("mu=%d exceeds n=%d" % (mu, K.shape[0]))
    if mu < 1:
        raise ValueError("mu must be positive")
    return discretize(extract_partition(K, mu), mu, seed)


def avg_kkm(kernels, mu: int, seed: int = 0) -> np.ndarray:
    Ks = _kernels(kernels)
    return kernel_kmeans(sum(Ks) / len(Ks), mu, seed)


def sb_kkm(kernels, mu: int, truth, seed: int = 0):
    """Per-view kernel k-means; return the labels scoring best against truth and
    the winning view index (lowest index on ties)."""
    if truth is None:
        raise ValueError("sb_kkm needs ground-truth labels")
    best_labels, best_view, best_acc = None, -1, -1.0
    for v, K in enumerate(_kernels(kernels)):
        labels = kernel_kmeans(K, mu, seed)
        acc = accuracy(labels, truth)
        if acc > best_acc:
            best_labels, best_view, best_acc = labels, v, acc
    return best_labels, best_view


def mkkm_objective(Ks, beta, H) -> float:
    """tr(K_beta (I - H^T H)) with K_beta = sum beta_i^2 K_i."""
    return float(sum(b * b * (np.trace(K) - np.sum((H @ K) * H)) for b, K in zip(beta, Ks)))


def _beta_step(residuals):
    r = np.asarray(residuals, dtype=np.float64)
    perfect = np.flatnonzero(r <= 1e-14)
    if perfect.size:
        beta = np.zeros_like(r)
        beta[perfect[0]] = 1.0
        return beta
    inv = 1.0 / r
    return inv / inv.sum()


def mkkm(kernels, mu: int, seed: int = 0, max_iters: int = 50, tol: float = 1e-6,
         return_history: bool = False):
    """Multiple kernel k-means with squared weights.

    Alternates H = top-mu eigenvectors of sum beta_i^2 K_i and the closed-form
    beta_i proportional to 1 / tr(K_i (I - H^T H)). Returns ``(labels, beta)``,
    plus the per-half-step objective history when ``return_history`` is set.
    """
    Ks = _kernels(kernels)
    p = len(Ks)
    if mu > Ks[0].shape[0]:
        raise ValueError("mu=%d exceeds n=%d" % (mu, Ks[0].shape[0]))
    beta = np.full(p, 1.0 / p)
    history = []
    prev = np.inf
    H = None
    for _ in range(max_iters):
        H = extract_partition(sum(b * b * K for b, K in zip(beta, Ks)), mu)
        history.append(mkkm_objective(Ks, beta, H))
        residuals = [np.trace(K) - np.sum((H @ K) * H) for K in Ks]
        beta = _beta_step(residuals)
        obj = mkkm_objective(Ks, beta, H)
        history.append(obj)
        if abs(prev - obj) < tol:
            break
        prev = obj
    labels = discretize(H, mu, seed)
    if return_history:
        return labels, beta, history
    return labels, beta
