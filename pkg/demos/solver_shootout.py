"""The three solver families on one noisy fusion problem.

Alternating exact search (monotone by construction), the proximal
alternation with growing penalties, and the joint primal-dual iteration
are run on the same Laplace-noised bundle. The joint iteration has no
convergence guarantee on this biconvex problem; its verdict is printed
rather than assumed.

Run:  python demos/solver_shootout.py
"""

from pathlib import Path
import time

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from tgvfuse import (
    ModelParams,
    NoiseSpec,
    SolverConfig,
    acs,
    ama,
    evaluate,
    identity_bundle,
    make_boxes_scene,
    pdhg_biconvex,
)

out_dir = Path(__file__).parent / "output"
out_dir.mkdir(exist_ok=True)

gt = make_boxes_scene(64, 64, (8, 16, 32), (4.5, 2.0, 4.0), 3.0)
bundle = identity_bundle(gt, 11, NoiseSpec("laplace", 0.6, seed=7))
params = ModelParams(alpha1=0.5, alpha0=1.0, b=1.0, w=0.5)

runs = {}
t0 = time.perf_counter()
primal, lam, trace = acs(bundle, params,
                         SolverConfig(iters=60, inner_iters=50))
runs["acs"] = (primal.x, trace, time.perf_counter() - t0)

t0 = time.perf_counter()
primal, lam, trace = ama(bundle, params,
                         SolverConfig(iters=60, inner_iters=50))
runs["ama"] = (primal.x, trace, time.perf_counter() - t0)

t0 = time.perf_counter()
primal, lam, dual, trace = pdhg_biconvex(
    bundle, params,
    SolverConfig(iters=3000, tau=0.05, tau_lambda=0.0025,
                 record_energy=True),
)
runs["pdhg (joint)"] = (primal.x, trace, time.perf_counter() - t0)

print(f"{'solver':<14} RMSE    seconds  verdict")
for name, (x, trace, dt) in runs.items():
    rep = evaluate(x, gt)
    print(f"{name:<14} {rep.rmse:.4f}  {dt:6.1f}   {trace.verdict}")

fig, ax = plt.subplots(figsize=(5.5, 3.5))
for name, (x, trace, _) in runs.items():
    energy = np.asarray(trace.energy, dtype=float)
    ok = np.isfinite(energy)
    ax.semilogx(np.arange(1, len(energy) + 1)[ok], energy[ok], label=name)
ax.set_xlabel("iteration")
ax.set_ylabel("energy")
ax.legend()
fig.tight_layout()
fig.savefig(out_dir / "solver_energies.png", dpi=120)
print(f"wrote {out_dir / 'solver_energies.png'}")
