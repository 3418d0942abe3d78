# coding: utf-8

# # Convergence, sensitivity and per-iteration cost
#
# The same experiments the `oslfmvc bench` subcommand writes to CSV, run
# inline so the numbers can be poked at.

# %%

import numpy as np

from oslfmvc import Hyperparams, gen_synthetic, run
from oslfmvc.kernels import KernelSpec, PartitionSet, build_kernels, build_partitions, feature_partition

views = gen_synthetic(n=500, mu=5, p=3, separation=6.0, seed=2)
kernels = build_kernels(views.views, KernelSpec("auto"), seed=2)

# %%
# Objective trace. Every block update except the W sweep is an exact
# maximizer of its subproblem, so the trace should rise and then flatten.

parts = build_partitions(kernels, k=10)
res = run(parts, Hyperparams(k=10, m=10, mu=5, seed=2), truth=views.labels)
for t, v in enumerate(res.objective_trace):
    print("%3d  %.6f" % (t, v))
print("W sweeps that lowered the objective:", res.w_step_violations)

# %%
# Sensitivity to the partition size k and the compressed size m.

full = build_partitions(kernels, k=20)
print("  k   m   ACC")
for k in (5, 10, 20):
    for m in (5, 10, 20):
        p_k = PartitionSet(full.partitions[:, :k])
        acc = run(p_k, Hyperparams(k=k, m=m, mu=5, seed=2), truth=views.labels).acc
        print("%3d %3d  %.3f" % (k, m, acc))

# %%
# Per-iteration cost against n. Linear kernels let us build partitions from
# the features directly, which keeps the large sizes cheap to set up.

for n in (2500, 5000, 10000, 20000):
    big = gen_synthetic(n, 5, 3, 8.0, seed=0)
    ps = PartitionSet(np.stack([feature_partition(X, 10) for X in big.views]))
    r = run(ps, Hyperparams(k=10, m=10, mu=5, seed=0, max_iters=10, tol=1e-300))
    print("n=%6d  %.2f ms/iteration" % (n, 1e3 * np.mean(r.iteration_times)))
