import numpy as np
import pytest
from scipy.stats import ortho_group

from oslfmvc.data_io import gen_synthetic
from oslfmvc.kernels import KernelSpec, PartitionSet, build_kernels, build_partitions
from oslfmvc.optimizer import FusionState, consensus, one_hot

ACCEPTANCE_REPORT = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_REPORT:
        terminalreporter.write_line("%s %s: %s" % ("PASS" if ok else "FAIL", name, detail))


def row_orthonormal(rng, k, n):
    Q, _ = np.linalg.qr(rng.standard_normal((n, k)))
    return Q.T


def random_partitions(rng, p, k, n):
    return PartitionSet(np.stack([row_orthonormal(rng, k, n) for _ in range(p)]))


def random_state(rng, partitions, m, mu):
    """A feasible FusionState with every variable drawn at random."""
    p, k, n = partitions.partitions.shape
    W = np.stack([ortho_group.rvs(k, random_state=rng) for _ in range(p)])
    beta = rng.dirichlet(np.ones(p))
    P, _ = np.linalg.qr(rng.standard_normal((n, m)))
    S = rng.standard_normal((m, n))
    S /= np.linalg.norm(S, axis=0)
    C, _ = np.linalg.qr(rng.standard_normal((k, mu)))
    Y = one_hot(rng.integers(0, mu, size=n), mu)
    return FusionState(W=W, beta=beta, P=P, S=S, C=C, Y=Y,
                       H=consensus(W, beta, partitions.partitions))


def blob_partitions(n, mu, p, separation, seed, k):
    views = gen_synthetic(n, mu, p, separation, seed)
    kernels = build_kernels(views.views, KernelSpec("auto"), seed=seed)
    return views, kernels, build_partitions(kernels, k)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def blobs300():
    """n=300, mu=3, p=3, separation=8, seed=7; partitions with k=6."""
    return blob_partitions(300, 3, 3, 8.0, 7, 6)
