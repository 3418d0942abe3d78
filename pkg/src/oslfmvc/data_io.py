"""Reading and writing views, kernels, partitions, labels and run results.

File formats
------------
manifest (JSON)
    ``{"views": [paths], "labels": path | null, "n": int, "mu": int, "seed": int | null}``.
    Relative paths are resolved against the manifest's directory.
feature CSV
    No header, one sample per row, comma separated, 17 significant digits.
labels CSV
    One 0-based integer per line.
kernel binary
    8-byte magic ``OSLFKRN1``, u64 ``n``, then ``n*n`` little-endian f64, row-major.
partition binary
    8-byte magic ``OSLFPRT1``, u64 ``k``, u64 ``n``, then ``k*n`` little-endian f64, row-major.
result JSON + trace CSV
    See :func:`save_result`.
"""
from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.stats import ortho_group

__all__ = [
    "ViewSet",
    "DatasetManifest",
    "ClusteringResult",
    "DataFormatError",
    "load_views",
    "save_views",
    "gen_synthetic",
    "read_manifest",
    "write_features_csv",
    "read_features_csv",
    "write_labels_csv",
    "read_labels_csv",
    "write_kernel",
    "read_kernel",
    "write_partition",
    "read_partition",
    "save_result",
    "load_result",
    "trace_path_for",
]

KERNEL_MAGIC = b"OSLFKRN1"
PARTITION_MAGIC = b"OSLFPRT1"


class DataFormatError(ValueError):
    """Raised when an input file or manifest does not satisfy its format."""


@dataclass
class ViewSet:
    """Per-view feature matrices sharing one sample axis."""

    views: list
    labels: Optional[np.ndarray] = None
    mu: Optional[int] = None

    def __post_init__(self):
        self.views = [np.asarray(v, dtype=np.float64) for v in self.views]
        if not self.views:
            raise DataFormatError("a ViewSet needs at least one view")
        for v in self.views:
            if v.ndim != 2:
                raise DataFormatError("each view must be a 2-D matrix")
            if v.shape[1] == 0:
                raise DataFormatError("view with zero features")
        counts = {v.shape[0] for v in self.views}
        if len(counts) != 1:
            raise DataFormatError("sample count mismatch across views: %s" % sorted(counts))
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.n,):
                raise DataFormatError("sample count mismatch between views and labels")
            if self.mu is None:
                self.mu = int(self.labels.max()) + 1 if self.labels.size else 0
            if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.mu):
                raise DataFormatError("label out of range [0, %d)" % self.mu)
            missing = np.setdiff1d(np.arange(self.mu), self.labels)
            if missing.size:
                raise DataFormatError("labels never use cluster(s) %s" % missing.tolist())

    @property
    def n(self) -> int:
        return self.views[0].shape[0]

    @property
    def p(self) -> int:
        return len(self.views)


@dataclass
class DatasetManifest:
    views: list
    labels: Optional[str]
    n: int
    mu: int
    seed: Optional[int] = None
    root: Path = field(default_factory=Path)

    @property
    def p(self) -> int:
        return len(self.views)

    def resolve(self, path: str) -> Path:
        path = Path(path)
        return path if path.is_absolute() else self.root / path

    def to_json(self) -> dict:
        return {"views": list(self.views), "labels": self.labels,
                "n": self.n, "mu": self.mu, "seed": self.seed}


@dataclass
class ClusteringResult:
    """Outcome of one clustering run."""

    labels: np.ndarray
    objective_trace: list
    iterations: int
    seconds: float
    seed: int
    hyperparams: dict = field(default_factory=dict)
    converged: bool = False
    beta: Optional[np.ndarray] = None
    w_step_violations: int = 0
    acc: Optional[float] = None
    nmi: Optional[float] = None
    purity: Optional[float] = None
    iteration_times: list = field(default_factory=list, repr=False)
    state: object = field(default=None, repr=False)

    @property
    def nonempty_clusters(self) -> int:
        return int(np.unique(self.labels).size)


# -- CSV ----------------------------------------------------------------------

def write_features_csv(path, X) -> None:
    X = np.asarray(X, dtype=np.float64)
    np.savetxt(path, X, delimiter=",", fmt="%.17g")


def read_features_csv(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError("missing file: %s" % path)
    rows = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                row = [float(tok) for tok in line.split(",")]
            except ValueError:
                raise DataFormatError("%s:%d: non-numeric value" % (path, lineno)) from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DataFormatError("%s:%d: ragged CSV (%d fields, expected %d)"
                                      % (path, lineno, len(row), width))
            rows.append(row)
    if not rows:
        raise DataFormatError("%s: empty feature file" % path)
    return np.array(rows, dtype=np.float64)


def write_labels_csv(path, labels) -> None:
    labels = np.asarray(labels, dtype=np.int64)
    with open(path, "w") as fh:
        fh.writelines("%d\n" % v for v in labels)


def read_labels_csv(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError("missing file: %s" % path)
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(int(line))
            except ValueError:
                raise DataFormatError("%s:%d: label is not an integer" % (path, lineno)) from None
    return np.array(out, dtype=np.int64)


# -- manifests ------------------------------------------------------------------

def read_manifest(manifest_path) -> DatasetManifest:
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise FileNotFoundError("missing file: %s" % manifest_path)
    try:
        raw = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise DataFormatError("manifest is not valid JSON: %s" % exc) from None
    for key in ("views", "n", "mu"):
        if key not in raw:
            raise DataFormatError("manifest lacks %r" % key)
    if not isinstance(raw["views"], list) or not raw["views"]:
        raise DataFormatError("manifest 'views' must be a non-empty list")
    return DatasetManifest(views=list(raw["views"]), labels=raw.get("labels"),
                           n=int(raw["n"]), mu=int(raw["mu"]), seed=raw.get("seed"),
                           root=manifest_path.parent)


def load_views(manifest_path) -> ViewSet:
    """Load every view (and labels, if declared) listed in a manifest."""
    man = read_manifest(manifest_path)
    views = [read_features_csv(man.resolve(v)) for v in man.views]
    rows = [v.shape[0] for v in views]
    if len(set(rows)) != 1:
        raise DataFormatError("sample count mismatch across views: %s" % rows)
    if rows[0] != man.n:
        raise DataFormatError("sample count mismatch: manifest says n=%d, files have %d"
                              % (man.n, rows[0]))
    labels = None
    if man.labels is not None:
        labels = read_labels_csv(man.resolve(man.labels))
        if labels.size != man.n:
            raise DataFormatError("sample count mismatch: %d labels for n=%d" % (labels.size, man.n))
        if labels.size and (labels.min() < 0 or labels.max() >= man.mu):
            raise DataFormatError("label out of range [0, %d)" % man.mu)
    return ViewSet(views, labels=labels, mu=man.mu)


def save_views(viewset: ViewSet, directory, seed: Optional[int] = None) -> Path:
    """Write views as CSV plus a manifest; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = []
    for i, X in enumerate(viewset.views):
        name = "view_%d.csv" % i
        write_features_csv(directory / name, X)
        names.append(name)
    labels = None
    if viewset.labels is not None:
        labels = "labels.csv"
        write_labels_csv(directory / labels, viewset.labels)
    man = DatasetManifest(views=names, labels=labels, n=viewset.n,
                          mu=int(viewset.mu) if viewset.mu is not None else 0, seed=seed)
    path = directory / "manifest.json"
    path.write_text(json.dumps(man.to_json(), indent=2) + "\n")
    return path


# -- synthetic data -----------------------------------------------------------

def _simplex_centers(mu: int, dim: int) -> np.ndarray:
    """mu points in R^dim with all pairwise distances equal to 1."""
    vertices = np.eye(mu) - 1.0 / mu
    # orthonormal basis of the sum-zero subspace, dimension mu - 1
    basis = np.linalg.svd(vertices, full_matrices=False)[2][: max(mu - 1, 1)]
    pts = vertices @ basis.T / np.sqrt(2.0)
    out = np.zeros((mu, dim))
    out[:, : pts.shape[1]] = pts
    return out


def gen_synthetic(n: int, mu: int, p: int, separation: float, seed: int) -> ViewSet:
    """Gaussian-blob multi-view data.

    View ``v`` (0-based) has ``max(10 + v, mu - 1)`` features: ``mu`` unit-variance
    isotropic blobs whose centers are pairwise ``separation * sqrt(d_v)`` apart,
    followed by an independent random rotation. Labels are balanced to within
    one sample and shuffled. The output depends only on the arguments.
    """
    if mu < 2 or n < mu:
        raise ValueError("need n >= mu >= 2 (got n=%d, mu=%d)" % (n, mu))
    if p < 1:
        raise ValueError("need at least one view")
    if separation < 0:
        raise ValueError("separation must be nonnegative")
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(n) % mu)
    views = []
    for v in range(p):
        d = max(10 + v, mu - 1)
        centers = _simplex_centers(mu, d) * separation * np.sqrt(d)
        X = centers[labels] + rng.standard_normal((n, d))
        R = ortho_group.rvs(d, random_state=rng) if d > 1 else np.ones((1, 1))
        views.append(X @ R)
    return ViewSet(views, labels=labels, mu=mu)


# -- binary matrices ------------------------------------------------------------

def write_kernel(path, K) -> None:
    K = np.ascontiguousarray(K, dtype="<f8")
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError("kernel must be square")
    with open(path, "wb") as fh:
        fh.write(KERNEL_MAGIC)
        fh.write(struct.pack("<Q", K.shape[0]))
        fh.write(K.tobytes(order="C"))


def read_kernel(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != KERNEL_MAGIC:
            raise DataFormatError("%s: bad kernel magic %r" % (path, magic))
        (n,) = struct.unpack("<Q", fh.read(8))
        data = fh.read()
    if len(data) != 8 * n * n:
        raise DataFormatError("%s: truncated kernel (expected %d values)" % (path, n * n))
    return np.frombuffer(data, dtype="<f8").astype(np.float64).reshape(n, n)


def write_partition(path, H) -> None:
    H = np.ascontiguousarray(H, dtype="<f8")
    if H.ndim != 2:
        raise ValueError("partition must be a matrix")
    with open(path, "wb") as fh:
        fh.write(PARTITION_MAGIC)
        fh.write(struct.pack("<QQ", *H.shape))
        fh.write(H.tobytes(order="C"))


def read_partition(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != PARTITION_MAGIC:
            raise DataFormatError("%s: bad partition magic %r" % (path, magic))
        k, n = struct.unpack("<QQ", fh.read(16))
        data = fh.read()
    if len(data) != 8 * k * n:
        raise DataFormatError("%s: truncated partition" % path)
    return np.frombuffer(data, dtype="<f8").astype(np.float64).reshape(k, n)


# -- results ------------------------------------------------------------------

def trace_path_for(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".trace.csv")


def _opt_float(x):
    return None if x is None else float(x)


def save_result(result: ClusteringResult, path) -> None:
    """Write ``path`` (JSON) and its sibling ``<stem>.trace.csv``.

    The JSON keeps the whole objective trace, initial value included. The CSV
    has header ``iter,objective`` and one row per completed iteration
    (``iter`` = 1..iterations).
    """
    if result.iterations < 1 or len(result.objective_trace) < 2:
        raise ValueError("empty run")
    path = Path(path)
    payload = {
        "labels": [int(v) for v in result.labels],
        "objective_trace": [float(v) for v in result.objective_trace],
        "iterations": int(result.iterations),
        "seconds": float(result.seconds),
        "acc": _opt_float(result.acc),
        "nmi": _opt_float(result.nmi),
        "purity": _opt_float(result.purity),
        "seed": int(result.seed),
        "hyperparams": result.hyperparams,
        "converged": bool(result.converged),
        "nonempty_clusters": result.nonempty_clusters,
        "w_step_violations": int(result.w_step_violations),
        "beta": None if result.beta is None else [float(b) for b in result.beta],
    }
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2) + "\n")
    os.replace(tmp, path)
    with open(trace_path_for(path), "w") as fh:
        fh.write("iter,objective\n")
        for t, val in enumerate(result.objective_trace[1:], 1):
            fh.write("%d,%.17g\n" % (t, val))


def load_result(path) -> ClusteringResult:
    raw = json.loads(Path(path).read_text())
    return ClusteringResult(
        labels=np.asarray(raw["labels"], dtype=np.int64),
        objective_trace=list(raw["objective_trace"]),
        iterations=int(raw["iterations"]),
        seconds=float(raw["seconds"]),
        seed=int(raw["seed"]),
        hyperparams=raw.get("hyperparams", {}),
        converged=bool(raw.get("converged", False)),
        beta=None if raw.get("beta") is None else np.asarray(raw["beta"]),
        w_step_violations=int(raw.get("w_step_violations", 0)),
        acc=raw.get("acc"), nmi=raw.get("nmi"), purity=raw.get("purity"),
    )


def labels_from_any(path) -> np.ndarray:
    """Labels from either a labels CSV or a result JSON."""
    path = Path(path)
    if path.suffix == ".json":
        return load_result(path).labels
    return read_labels_csv(path)


def stack_partitions(partitions: Sequence[np.ndarray]) -> np.ndarray:
    return np.stack([np.asarray(H, dtype=np.float64) for H in partitions])
