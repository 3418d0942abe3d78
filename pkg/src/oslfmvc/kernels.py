"""Base kernels and base partitions.

Each view yields a Gram matrix ``K_i`` (n x n) and from it a row-orthonormal
partition ``H_i`` (k x n) made of the k leading eigenvectors.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist

__all__ = [
    "KernelSpec",
    "KernelSet",
    "PartitionSet",
    "build_kernel",
    "center_kernel",
    "psd_clamp",
    "extract_partition",
    "feature_partition",
    "median_gamma",
    "build_kernels",
    "build_partitions",
]

PSD_RTOL = 1e-8
SYM_ATOL = 1e-10


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family and its parameters.

    ``kind`` is one of ``linear``, ``gaussian``, ``poly`` or ``auto``; ``auto``
    becomes a gaussian with the median-heuristic bandwidth.
    """

    kind: str = "auto"
    gamma: Optional[float] = None
    degree: int = 2
    c: float = 1.0

    def __post_init__(self):
        if self.kind not in ("linear", "gaussian", "poly", "auto"):
            raise ValueError("unknown kernel kind %r" % self.kind)
        if self.kind == "gaussian" and (self.gamma is None or self.gamma <= 0):
            raise ValueError("gaussian kernel needs gamma > 0")
        if self.kind == "poly" and (self.degree < 1 or self.c < 0):
            raise ValueError("poly kernel needs degree >= 1 and c >= 0")

    def as_dict(self) -> dict:
        return {"kind": self.kind, "gamma": self.gamma, "degree": self.degree, "c": self.c}


@dataclass
class KernelSet:
    kernels: list

    def __post_init__(self):
        self.kernels = [np.asarray(K, dtype=np.float64) for K in self.kernels]
        n = {K.shape for K in self.kernels}
        if len(n) != 1:
            raise ValueError("kernels differ in size: %s" % sorted(n))
        for K in self.kernels:
            if K.shape[0] != K.shape[1]:
                raise ValueError("kernel is not square")
            if np.max(np.abs(K - K.T), initial=0.0) > SYM_ATOL:
                raise ValueError("kernel is not symmetric")

    @property
    def p(self) -> int:
        return len(self.kernels)

    @property
    def n(self) -> int:
        return self.kernels[0].shape[0]

    def average(self) -> np.ndarray:
        return sum(self.kernels) / self.p


@dataclass
class PartitionSet:
    """Stack of p base partitions, shape (p, k, n)."""

    partitions: np.ndarray

    def __post_init__(self):
        H = np.asarray(self.partitions, dtype=np.float64)
        if H.ndim == 2:
            H = H[None]
        if H.ndim != 3:
            raise ValueError("partitions must be (p, k, n)")
        self.partitions = H

    @property
    def p(self) -> int:
        return self.partitions.shape[0]

    @property
    def k(self) -> int:
        return self.partitions.shape[1]

    @property
    def n(self) -> int:
        return self.partitions.shape[2]

    def __getitem__(self, i):
        return self.partitions[i]

    def __iter__(self):
        return iter(self.partitions)

    def orthonormality_error(self) -> float:
        eye = np.eye(self.k)
        return max(np.max(np.abs(H @ H.T - eye)) for H in self.partitions)


def median_gamma(X, seed: int = 0, max_pairs: int = 2000) -> float:
    """gamma = 1 / (2 * median^2) of pairwise distances on at most max_pairs pairs."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n < 2:
        return 1.0
    total = n * (n - 1) // 2
    if total <= max_pairs:
        i, j = np.triu_indices(n, 1)
    else:
        rng = np.random.default_rng(seed)
        i = rng.integers(0, n, size=max_pairs)
        j = rng.integers(0, n - 1, size=max_pairs)
        j = j + (j >= i)  # j != i, uniform over the rest
    d = np.linalg.norm(X[i] - X[j], axis=1)
    med = float(np.median(d))
    if med <= 0.0:
        return 1.0
    return 1.0 / (2.0 * med * med)


def psd_clamp(K, rtol: float = PSD_RTOL) -> np.ndarray:
    """Zero out round-off negative eigenvalues of a symmetric matrix.

    Raises ``ValueError`` if an eigenvalue is below ``-rtol * ||K||_2``.
    """
    K = 0.5 * (K + K.T)
    w, V = np.linalg.eigh(K)
    scale = max(abs(w[0]), abs(w[-1]))
    if w[0] >= 0.0:
        return K
    if w[0] < -rtol * scale:
        raise ValueError("matrix is not positive semidefinite (min eigenvalue %.3e)" % w[0])
    neg = w < 0.0
    Vn = V[:, neg]
    K = K - (Vn * w[neg]) @ Vn.T
    return 0.5 * (K + K.T)


def build_kernel(view, spec: KernelSpec | str = "linear", *, gamma=None, degree=2, c=1.0,
                 seed: int = 0, clamp: bool = True) -> np.ndarray:
    """Gram matrix of one view.

    Parameters
    ----------
    view : (n, d) array_like
    spec : KernelSpec or str
        Kernel family; a string is combined with ``gamma``, ``degree`` and ``c``.
    seed : int
        Only used by ``auto`` to subsample pairs for the median heuristic.
    clamp : bool
        Remove negative round-off eigenvalues (costs one dense eigensolve).

    Returns
    -------
    K : (n, n) ndarray
        Symmetric positive semidefinite kernel matrix.
    """
    if isinstance(spec, str):
        spec = KernelSpec(spec, gamma=gamma, degree=degree, c=c)
    X = np.asarray(view, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("view must be a 2-D matrix")
    if not np.all(np.isfinite(X)):
        raise ValueError("view has non-finite entries")
    if spec.kind == "linear":
        K = X @ X.T
    elif spec.kind == "poly":
        K = (X @ X.T + spec.c) ** spec.degree
    else:
        g = spec.gamma if spec.kind == "gaussian" else median_gamma(X, seed=seed)
        K = np.exp(-g * cdist(X, X, "sqeuclidean"))
    K = 0.5 * (K + K.T)
    if clamp:
        K = psd_clamp(K)
    if spec.kind in ("gaussian", "auto"):
        # keep entries in (0, 1] after the clamp's round-off
        np.minimum(K, 1.0, out=K)
        np.fill_diagonal(K, 1.0)
    return K


def center_kernel(K) -> np.ndarray:
    """Double-center: J K J with J = I - 11^T / n."""
    K = np.asarray(K, dtype=np.float64)
    row = K.mean(axis=0)
    col = K.mean(axis=1)
    Kc = K - row[None, :] - col[:, None] + K.mean()
    return 0.5 * (Kc + Kc.T)


def _canonical_rows(w, V, k):
    """Top-k eigenvectors as rows, ordered by eigenvalue, with fixed signs."""
    order = np.argsort(-w, kind="stable")
    w = w[order]
    V = V[:, order].copy()
    # largest-magnitude entry nonnegative (first one on magnitude ties)
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    V *= signs
    # equal eigenvalues: order vectors lexicographically (descending)
    tol = 1e-12 * max(1.0, float(np.max(np.abs(w), initial=0.0)))
    start = 0
    cols = list(range(V.shape[1]))
    while start < len(cols):
        stop = start + 1
        while stop < len(cols) and abs(w[stop] - w[start]) <= tol:
            stop += 1
        if stop - start > 1:
            block = cols[start:stop]
            block.sort(key=lambda j: tuple(-V[:, j]))
            cols[start:stop] = block
        start = stop
    return V[:, cols[:k]].T


def extract_partition(K, k: int) -> np.ndarray:
    """The k leading unit eigenvectors of K as rows of a (k, n) matrix.

    Maximizes tr(H K H^T) over row-orthonormal H. Signs are fixed so each
    row's largest-magnitude entry is nonnegative.
    """
    K = np.asarray(K, dtype=np.float64)
    n = K.shape[0]
    if k > n:
        raise ValueError("k=%d exceeds n=%d" % (k, n))
    if k < 1:
        raise ValueError("k must be positive")
    w, V = np.linalg.eigh(0.5 * (K + K.T))
    return _canonical_rows(w, V, k)


def feature_partition(view, k: int, center: bool = True) -> np.ndarray:
    """Partition of the linear kernel X X^T, computed from X in O(n d^2).

    Same subspace and sign convention as ``extract_partition`` on the
    (centered) linear kernel, without ever forming the n x n matrix.
    """
    X = np.asarray(view, dtype=np.float64)
    n, d = X.shape
    if k > min(n, d):
        raise ValueError("feature_partition needs k <= min(n, d)")
    if center:
        X = X - X.mean(axis=0)
    U, s, _ = np.linalg.svd(X, full_matrices=False)
    return _canonical_rows(s ** 2, U, k)


def build_kernels(views: Sequence, spec: KernelSpec | Sequence[KernelSpec], seed: int = 0,
                  clamp: bool = True) -> KernelSet:
    if isinstance(spec, KernelSpec):
        spec = [spec] * len(views)
    return KernelSet([build_kernel(X, s, seed=seed, clamp=clamp) for X, s in zip(views, spec)])


def build_partitions(kernels: KernelSet | Sequence, k: int, center: bool = True) -> PartitionSet:
    Ks = kernels.kernels if isinstance(kernels, KernelSet) else list(kernels)
    return PartitionSet(np.stack([extract_partition(center_kernel(K) if center else K, k)
                                  for K in Ks]))
