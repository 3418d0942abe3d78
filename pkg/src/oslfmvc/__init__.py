"""One-step late-fusion multi-view clustering with a compressed subspace."""
from .baselines import avg_kkm, kernel_kmeans, mkkm, sb_kkm
from .data_io import ClusteringResult, ViewSet, gen_synthetic, load_result, load_views, save_result
from .kernels import KernelSet, KernelSpec, PartitionSet, build_kernel, center_kernel, extract_partition
from .metrics import accuracy, nmi, purity
from .nnqp import QpProblem, solve_qp
from .optimizer import FusionState, Hyperparams, init_state, objective, run

__version__ = "0.1.0"

__all__ = [
    "ClusteringResult", "FusionState", "Hyperparams", "KernelSet", "KernelSpec", "PartitionSet",
    "QpProblem", "ViewSet", "accuracy", "avg_kkm", "build_kernel", "center_kernel",
    "extract_partition", "gen_synthetic", "init_state", "kernel_kmeans", "load_result",
    "load_views", "mkkm", "nmi", "objective", "purity", "run", "sb_kkm", "save_result",
    "solve_qp",
]
