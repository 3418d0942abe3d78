"""Command-line driver: synth -> kernels -> partitions -> cluster/baseline -> eval, plus bench.

Every stage writes its artifact into ``--out`` and later stages reuse those
caches when the content hash recorded in the sidecar JSON still matches.
Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import baselines
from .data_io import (
    DataFormatError,
    gen_synthetic,
    labels_from_any,
    load_views,
    read_kernel,
    read_manifest,
    read_partition,
    save_result,
    save_views,
    write_kernel,
    write_partition,
)
from .kernels import KernelSpec, PartitionSet, build_kernel, center_kernel, extract_partition, feature_partition
from .metrics import evaluate
from .optimizer import Hyperparams, run

logger = logging.getLogger("oslfmvc")

SCALING_SIZES = (2500, 5000, 10000, 20000)
GRID_FACTORS = (1, 2, 4)


class UsageError(Exception):
    """Precondition failure reported with exit status 2."""


# -- helpers ------------------------------------------------------------------

def _sha256(*chunks) -> str:
    h = hashlib.sha256()
    for c in chunks:
        h.update(c if isinstance(c, bytes) else json.dumps(c, sort_keys=True).encode())
    return h.hexdigest()


def _manifest_hash(manifest_path) -> str:
    man = read_manifest(manifest_path)
    parts = [Path(manifest_path).read_bytes()]
    for v in man.views:
        parts.append(man.resolve(v).read_bytes())
    if man.labels is not None:
        parts.append(man.resolve(man.labels).read_bytes())
    return _sha256(*parts)


def _kernel_specs(args, p):
    kinds = args.kernel.split(",")
    if len(kinds) == 1:
        kinds = kinds * p
    if len(kinds) != p:
        raise UsageError("--kernel lists %d kinds for %d views" % (len(kinds), p))
    try:
        return [KernelSpec(kind, gamma=args.gamma, degree=args.degree, c=args.c) for kind in kinds]
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _sidecar_ok(sidecar: Path, digest: str) -> bool:
    if not sidecar.exists():
        return False
    meta = json.loads(sidecar.read_text())
    return meta.get("hash") == digest and all(
        (sidecar.parent / f).exists() for f in meta.get("files", []))


def _write_sidecar(sidecar: Path, digest: str, files, **extra) -> None:
    sidecar.write_text(json.dumps({"hash": digest, "files": files, **extra}, indent=2) + "\n")


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _mu(args, manifest_path) -> int:
    return args.mu if args.mu is not None else read_manifest(manifest_path).mu


def _require_manifest(args):
    if not args.manifest:
        raise UsageError("--manifest is required")
    return args.manifest


# -- cached stages ------------------------------------------------------------

def ensure_kernels(args):
    """Kernel matrices for every view, from cache when the inputs are unchanged."""
    manifest = _require_manifest(args)
    views = load_views(manifest)
    specs = _kernel_specs(args, views.p)
    kdir = _out(args) / "kernels"
    kdir.mkdir(exist_ok=True)
    digest = _sha256(_manifest_hash(manifest).encode(), [s.as_dict() for s in specs], args.seed)
    sidecar = kdir / "kernels.json"
    files = ["kernel_%d.bin" % i for i in range(views.p)]
    if _sidecar_ok(sidecar, digest):
        logger.info("reusing cached kernels in %s", kdir)
        return [read_kernel(kdir / f) for f in files], views, digest
    Ks = []
    for X, spec, f in zip(views.views, specs, files):
        K = build_kernel(X, spec, seed=args.seed)
        write_kernel(kdir / f, K)
        Ks.append(K)
    _write_sidecar(sidecar, digest, files, recipes=[s.as_dict() for s in specs], seed=args.seed)
    return Ks, views, digest


def ensure_partitions(args, k: int):
    Ks, views, kdigest = ensure_kernels(args)
    if k > views.n:
        raise UsageError("k=%d exceeds n=%d" % (k, views.n))
    pdir = _out(args) / "partitions"
    pdir.mkdir(exist_ok=True)
    center = not args.no_center
    digest = _sha256(kdigest.encode(), {"k": k, "center": center})
    sidecar = pdir / ("partitions_k%d.json" % k)
    files = ["partition_k%d_%d.bin" % (k, i) for i in range(len(Ks))]
    if _sidecar_ok(sidecar, digest):
        logger.info("reusing cached partitions in %s", pdir)
        return PartitionSet(np.stack([read_partition(pdir / f) for f in files])), views
    Hs = []
    for K, f in zip(Ks, files):
        H = extract_partition(center_kernel(K) if center else K, k)
        write_partition(pdir / f, H)
        Hs.append(H)
    _write_sidecar(sidecar, digest, files, k=k, center=center)
    return PartitionSet(np.stack(Hs)), views


def _hyperparams(args, mu: int, seed: int, k=None, m=None) -> Hyperparams:
    hp = Hyperparams(k=k or args.k or 2 * mu, m=m or args.m or 2 * mu, mu=mu,
                     max_iters=args.max_iters, tol=args.tol, seed=seed,
                     simplex=not args.beta_no_simplex, strict_s=args.strict_s)
    try:
        hp.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return hp


def _effective_config(args, hp: Hyperparams, method: str) -> dict:
    cfg = hp.as_dict()
    cfg.update({
        "method": method,
        "manifest": str(args.manifest) if getattr(args, "manifest", None) else None,
        "kernel": args.kernel,
        "gamma": args.gamma,
        "degree": args.degree,
        "c": args.c,
        "center": not args.no_center,
        "kernel_seed": args.seed,
        "repeats": args.repeats,
    })
    return cfg


# -- commands -----------------------------------------------------------------

def cmd_synth(args) -> int:
    try:
        views = gen_synthetic(args.n, args.mu or 3, args.p, args.separation, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    path = save_views(views, _out(args), seed=args.seed)
    print(path)
    return 0


def cmd_kernels(args) -> int:
    ensure_kernels(args)
    print(_out(args) / "kernels" / "kernels.json")
    return 0


def cmd_partitions(args) -> int:
    mu = _mu(args, _require_manifest(args))
    k = args.k or 2 * mu
    ensure_partitions(args, k)
    print(_out(args) / "partitions" / ("partitions_k%d.json" % k))
    return 0


def _write_repeats(path: Path, rows) -> None:
    with open(path, "w") as fh:
        fh.write("seed,acc,nmi,purity\n")
        for seed, scores in rows:
            vals = ["" if scores.get(key) is None else "%.6f" % scores[key]
                    for key in ("acc", "nmi", "purity")]
            fh.write("%d,%s\n" % (seed, ",".join(vals)))


def _cluster_oslfmvc(args) -> int:
    manifest = _require_manifest(args)
    mu = _mu(args, manifest)
    hp0 = _hyperparams(args, mu, args.seed)
    parts, views = ensure_partitions(args, hp0.k)
    if hp0.m > views.n:
        raise UsageError("m=%d exceeds n=%d" % (hp0.m, views.n))
    out = _out(args)
    rows = []
    for r in range(args.repeats):
        hp = _hyperparams(args, mu, args.seed + r)
        res = run(parts, hp, truth=views.labels)
        res.hyperparams = _effective_config(args, hp, "oslfmvc")
        name = "result.json" if r == 0 else "result_seed%d.json" % hp.seed
        save_result(res, out / name)
        rows.append((hp.seed, {"acc": res.acc, "nmi": res.nmi, "purity": res.purity}))
        if res.w_step_violations:
            logger.warning("seed %d: W sweep lowered the objective in %d iterations",
                           hp.seed, res.w_step_violations)
    if args.repeats > 1:
        _write_repeats(out / "repeats.csv", rows)
    print(out / "result.json")
    return 0


def _cluster_baseline(args, method: str) -> int:
    manifest = _require_manifest(args)
    mu = _mu(args, manifest)
    Ks, views, _ = ensure_kernels(args)
    if not args.no_center:
        Ks = [center_kernel(K) for K in Ks]
    if method == "sb" and views.labels is None:
        raise UsageError("sb baseline needs ground-truth labels in the manifest")
    out = _out(args)
    rows = []
    first = None
    for r in range(args.repeats):
        seed = args.seed + r
        t0 = time.perf_counter()
        extra = {}
        if method == "avg":
            labels = baselines.avg_kkm(Ks, mu, seed)
        elif method == "sb":
            labels, extra["view"] = baselines.sb_kkm(Ks, mu, views.labels, seed)
        else:
            labels, beta = baselines.mkkm(Ks, mu, seed)
            extra["beta"] = [float(b) for b in beta]
        scores = evaluate(labels, views.labels) if views.labels is not None else {}
        payload = {
            "method": method,
            "labels": [int(v) for v in labels],
            "seconds": time.perf_counter() - t0,
            "seed": seed,
            "acc": scores.get("acc"), "nmi": scores.get("nmi"), "purity": scores.get("purity"),
            **extra,
        }
        rows.append((seed, scores))
        if first is None:
            first = payload
    path = out / ("baseline_%s.json" % method)
    first["repeats"] = args.repeats
    path.write_text(json.dumps(first, indent=2) + "\n")
    if args.repeats > 1:
        _write_repeats(out / ("baseline_%s_repeats.csv" % method), rows)
    print(path)
    return 0


def cmd_cluster(args) -> int:
    if args.method == "oslfmvc":
        return _cluster_oslfmvc(args)
    return _cluster_baseline(args, args.method)


def cmd_baseline(args) -> int:
    return cmd_cluster(args)


def cmd_eval(args) -> int:
    pred = labels_from_any(args.pred)
    truth = labels_from_any(args.truth)
    if pred.size != truth.size:
        raise UsageError("length mismatch: %d predicted vs %d true labels" % (pred.size, truth.size))
    s = evaluate(pred, truth)
    print("%.6f,%.6f,%.6f" % (s["acc"], s["nmi"], s["purity"]))
    return 0


def _bench_views(args):
    if args.manifest:
        return load_views(args.manifest)
    return gen_synthetic(args.n, args.mu or 3, args.p, args.separation, args.seed)


def _emit_csv(path: Path, header: str, rows) -> None:
    lines = [header] + [",".join(str(v) for v in row) for row in rows]
    text = "\n".join(lines) + "\n"
    path.write_text(text)
    sys.stdout.write(text)


def cmd_bench(args) -> int:
    out = _out(args)
    if args.scaling:
        mu = args.mu or 5
        rows = []
        sizes = [int(s) for s in args.sizes.split(",")] if args.sizes else list(SCALING_SIZES)
        for n in sorted(sizes):
            views = gen_synthetic(n, mu, args.p, args.separation, args.seed)
            hp = _hyperparams(args, mu, args.seed)
            parts = PartitionSet(np.stack([feature_partition(X, hp.k) for X in views.views]))
            # fixed iteration count so every size does the same work
            hp.tol = 1e-300
            res = run(parts, hp)
            rows.append((n, "%.6g" % float(np.mean(res.iteration_times))))
        _emit_csv(out / "scaling.csv", "n,mean_iter_seconds", rows)
        return 0

    views = _bench_views(args)
    mu = args.mu or views.mu
    if args.grid:
        kmax = max(GRID_FACTORS) * mu
        if kmax > views.n:
            raise UsageError("grid needs n >= 4*mu")
        specs = _kernel_specs(args, views.p)
        Ks = [build_kernel(X, s, seed=args.seed) for X, s in zip(views.views, specs)]
        full = [extract_partition(center_kernel(K) if not args.no_center else K, kmax) for K in Ks]
        rows = []
        for fk in GRID_FACTORS:
            for fm in GRID_FACTORS:
                hp = _hyperparams(args, mu, args.seed, k=fk * mu, m=fm * mu)
                parts = PartitionSet(np.stack([H[: hp.k] for H in full]))
                res = run(parts, hp, truth=views.labels)
                rows.append((hp.k, hp.m, "%.6f" % (res.acc or 0.0), "%.6f" % (res.nmi or 0.0),
                             "%.6f" % (res.purity or 0.0)))
        _emit_csv(out / "grid.csv", "k,m,acc,nmi,purity", rows)
        return 0

    specs = _kernel_specs(args, views.p)
    hp = _hyperparams(args, mu, args.seed)
    Ks = [build_kernel(X, s, seed=args.seed) for X, s in zip(views.views, specs)]
    parts = PartitionSet(np.stack([
        extract_partition(center_kernel(K) if not args.no_center else K, hp.k) for K in Ks]))
    res = run(parts, hp, truth=views.labels)
    _emit_csv(out / "convergence.csv", "iter,objective",
              [(t, "%.17g" % v) for t, v in enumerate(res.objective_trace)])
    return 0


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--manifest")
    common.add_argument("--out", default="out")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--mu", type=int)
    common.add_argument("--k", type=int)
    common.add_argument("--m", type=int)
    common.add_argument("--tol", type=float, default=1e-3)
    common.add_argument("--max-iters", type=int, default=200)
    common.add_argument("--kernel", default="auto",
                        help="linear|gaussian|poly|auto, or a comma list with one kind per view")
    common.add_argument("--gamma", type=float)
    common.add_argument("--degree", type=int, default=2)
    common.add_argument("--c", type=float, default=1.0)
    common.add_argument("--no-center", action="store_true")
    common.add_argument("--beta-no-simplex", action="store_true")
    common.add_argument("--strict-s", action="store_true")
    common.add_argument("--repeats", type=int, default=20)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="oslfmvc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic blob dataset")
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--p", type=int, default=3)
    p.add_argument("--separation", type=float, default=8.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("kernels", parents=[common], help="build and cache base kernels")
    p.set_defaults(func=cmd_kernels)

    p = sub.add_parser("partitions", parents=[common], help="extract and cache base partitions")
    p.set_defaults(func=cmd_partitions)

    p = sub.add_parser("cluster", parents=[common], help="run the one-step late-fusion method")
    p.add_argument("--method", choices=["oslfmvc", "avg", "sb", "mkkm"], default="oslfmvc")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("baseline", parents=[common], help="run a kernel k-means baseline")
    p.add_argument("--method", choices=["oslfmvc", "avg", "sb", "mkkm"], default="avg")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("eval", help="score predicted labels against the truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", parents=[common],
                       help="convergence trace (default), --scaling timings or --grid sensitivity")
    p.add_argument("--scaling", action="store_true")
    p.add_argument("--sizes", help="comma-separated n values for --scaling")
    p.add_argument("--grid", action="store_true")
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--p", type=int, default=3)
    p.add_argument("--separation", type=float, default=8.0)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if getattr(args, "repeats", 1) < 1:
            raise UsageError("--repeats must be positive")
        return args.func(args)
    except (UsageError, DataFormatError, FileNotFoundError, ValueError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - one-line report, nonzero exit
        print("error: %s: %s" % (type(exc).__name__, exc), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
