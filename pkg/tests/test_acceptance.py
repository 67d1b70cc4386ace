"""Acceptance suite: one test per criterion, each printing a PASS/FAIL
line and enforcing its stated tolerance and runtime budget.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines as they complete.
"""

import time

import numpy as np
import pytest

import tgvfuse.solvers as solvers_mod
from tgvfuse.energy import (
    ModelParams,
    ObservationBundle,
    eval_energy,
    lambda_acs_update,
    lambda_ama_update,
    lambda_pdhg_resolvent,
)
from tgvfuse.geometry import (
    CameraIntrinsics,
    Pose,
    geometric_confidence,
    hyperparams_from_priors,
    reproject,
)
from tgvfuse.grids import (
    grad,
    div,
    sym_grad,
    sym_div,
    tgv_apply,
    tgv_adjoint,
    scalar_inner,
    vector_inner,
    tensor_inner,
)
from tgvfuse.metrics import baseline_fuse, evaluate
from tgvfuse.solvers import (
    CONVERGED,
    SolverConfig,
    acs,
    ama,
    compute_steps,
    pdhg_biconvex,
    pdhg_fixed,
)
from tgvfuse.synth import (
    NoiseSpec,
    camera_path,
    identity_bundle,
    make_boxes_scene,
    reproject_bundle,
    warped_views,
)


class Budget:
    def __init__(self, seconds):
        self.limit = seconds
        self.t0 = time.perf_counter()

    @property
    def elapsed(self):
        return time.perf_counter() - self.t0


def _report(num, name, ok, budget, detail=""):
    status = "PASS" if ok else "FAIL"
    extra = f" [{detail}]" if detail else ""
    print(f"[acceptance] {num:02d} {name}: {status} "
          f"({budget.elapsed:.1f}s / {budget.limit:.0f}s){extra}")
    assert ok, f"criterion {num} ({name}) failed{extra}"
    assert budget.elapsed < budget.limit, (
        f"criterion {num} exceeded its runtime budget: "
        f"{budget.elapsed:.1f}s >= {budget.limit}s"
    )


# ---------------------------------------------------------------- fixtures

@pytest.fixture(scope="module")
def boxes_bundle():
    """64x64 boxes scene, K=11 observations under Laplace noise of
    scale 0.6; exact data association (identity poses)."""
    gt = make_boxes_scene(64, 64, (8, 16, 32), (4.5, 2.0, 4.0), 3.0)
    bundle = identity_bundle(gt, 11, NoiseSpec("laplace", 0.6, seed=7))
    return gt, bundle


@pytest.fixture(scope="module")
def acs_500(boxes_bundle):
    """The shared 500-outer-iteration ACS run, with every confidence
    iterate recorded."""
    gt, bundle = boxes_bundle
    params = ModelParams(alpha1=0.5, alpha0=1.0, b=1.0, w=0.5)
    lam_maxima = []
    real_update = solvers_mod.lambda_acs_update

    def recording(x, bundle_, params_):
        lam = real_update(x, bundle_, params_)
        lam_maxima.append(float(lam.max()))
        return lam

    solvers_mod.lambda_acs_update = recording
    try:
        primal, lam, trace = acs(
            bundle, params, SolverConfig(iters=500, inner_iters=50)
        )
    finally:
        solvers_mod.lambda_acs_update = real_update
    return params, primal, lam, trace, lam_maxima


# ---------------------------------------------------------------- criteria

def test_01_adjointness():
    budget = Budget(5.0)
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        x = rng.standard_normal((16, 16))
        v = rng.standard_normal((16, 16, 2))
        p = rng.standard_normal((16, 16, 2))
        t = rng.standard_normal((16, 16, 3))
        q1 = rng.standard_normal((16, 16, 2))
        q2 = rng.standard_normal((16, 16, 3))

        lhs = vector_inner(grad(x), p)
        rhs = -scalar_inner(x, div(p))
        worst = max(worst, abs(lhs - rhs)
                    / (np.linalg.norm(x) * np.linalg.norm(p)))

        lhs = tensor_inner(sym_grad(v), t)
        rhs = -vector_inner(v, sym_div(t))
        worst = max(worst, abs(lhs - rhs)
                    / (np.linalg.norm(v) * np.linalg.norm(t)))

        m1, m2 = tgv_apply(x, v)
        ax, av = tgv_adjoint(q1, q2)
        lhs = vector_inner(m1, q1) + tensor_inner(m2, q2)
        rhs = scalar_inner(x, ax) + vector_inner(v, av)
        nz = np.sqrt(np.sum(x**2) + np.sum(v**2))
        nw = np.sqrt(np.sum(q1**2) + np.sum(q2**2))
        worst = max(worst, abs(lhs - rhs) / (nz * nw))
    _report(1, "operator-adjointness", worst <= 1e-10, budget,
            f"worst rel err {worst:.2e}")


def test_02_closed_form_confidence_oracles():
    budget = Budget(30.0)
    rng = np.random.default_rng(1)
    n_draws, n_grid = 1000, 10_000
    res = rng.uniform(0.0, 10.0, n_draws)
    w = rng.uniform(0.1, 5.0, n_draws)
    b = rng.uniform(0.1, 5.0, n_draws)
    nu = rng.uniform(0.01, 100.0, n_draws)
    tau = rng.uniform(0.01, 100.0, n_draws)
    lam_prev = rng.uniform(1e-3, 10.0, n_draws)
    lam_tilde = rng.uniform(1e-3, 10.0, n_draws)

    params = [ModelParams(b=bi, w=wi) for bi, wi in zip(b, w)]
    one = np.ones((1, 1))

    def bundle_for(r):
        return ObservationBundle(np.full((1, 1, 1), r))

    cf_acs = np.array([
        float(lambda_acs_update(np.zeros((1, 1)), bundle_for(r), p)[0, 0])
        for r, p in zip(res, params)
    ])
    cf_ama = np.array([
        float(lambda_ama_update(l * one, np.zeros((1, 1)), bundle_for(r),
                                p, n)[0, 0])
        for r, p, l, n in zip(res, params, lam_prev, nu)
    ])
    cf_res = np.array([
        float(lambda_pdhg_resolvent(l * one, t, p)[0, 0])
        for l, p, t in zip(lam_tilde, params, tau)
    ])

    def obj_acs(lam, i):
        return lam * res[i] + lam / (2 * w[i]) - b[i] * np.log(lam)

    def obj_ama(lam, i):
        return obj_acs(lam, i) + (lam - lam_prev[i]) ** 2 / (2 * nu[i])

    def obj_res(lam, i):
        return ((lam - lam_tilde[i]) ** 2 / (2 * tau[i])
                + lam / (2 * w[i]) - b[i] * np.log(lam))

    worst = -np.inf
    for cf, obj, hi_extra in (
        (cf_acs, obj_acs, np.zeros(n_draws)),
        (cf_ama, obj_ama, lam_prev),
        (cf_res, obj_res, lam_tilde),
    ):
        for i in range(n_draws):
            hi = max(2 * b[i] * w[i], cf[i], hi_extra[i]) * 2.0 + 1.0
            grid = np.linspace(1e-6, hi, n_grid)
            gap = obj(cf[i], i) - obj(grid, i).min()
            worst = max(worst, gap)
    _report(2, "confidence-updates-beat-grid-search", worst <= 1e-9, budget,
            f"worst objective gap {worst:.2e}")


def test_03_nonconvexity_witness():
    budget = Budget(1.0)
    n_side, n = 4, 16
    bundle = ObservationBundle(np.zeros((1, n_side, n_side)))
    params = ModelParams(alpha1=1.0, alpha0=2.0,
                         b=(np.e - 1) / (np.e + 2), w=0.5)
    v = np.zeros((n_side, n_side, 2))
    e0 = eval_energy(np.zeros((n_side, n_side)), v,
                     np.ones((n_side, n_side)), bundle, params).total
    e1 = eval_energy(np.full((n_side, n_side), 2.0), v,
                     np.full((n_side, n_side), 1 / np.e), bundle,
                     params).total
    mid = eval_energy(np.ones((n_side, n_side)), v,
                      np.full((n_side, n_side), (1 + 1 / np.e) / 2),
                      bundle, params).total
    margin = mid - 0.5 * (e0 + e1)
    ok = (e0 == float(n)) and margin > 0.0
    _report(3, "nonconvexity-witness", ok, budget,
            f"E(z0)={e0}, midpoint margin {margin:.4f}N" if n else "")


def test_04_boundedness_and_confidence_bound(acs_500, boxes_bundle):
    budget = Budget(120.0)
    params, primal, lam, trace, lam_maxima = acs_500
    cap = 2.0 * params.b * float(np.max(params.w_field((64, 64))))
    lower = float(np.sum(params.b * (
        1.0 - np.log(2.0 * params.b * params.w_field((64, 64))))))
    energies = np.array(trace.energy)
    ok = (
        len(trace) == 500
        and len(lam_maxima) == 500
        and np.all(energies >= lower)
        and max(lam_maxima) <= cap + 1e-12
        and float(lam.max()) <= cap + 1e-12
    )
    _report(4, "boundedness-and-confidence-bound", ok, budget,
            f"min E - bound = {energies.min() - lower:.3e}, "
            f"max lam = {max(lam_maxima):.6f} vs cap {cap}")


def test_05_acs_energy_monotone(acs_500):
    budget = Budget(120.0)
    _, _, _, trace, _ = acs_500
    diffs = np.diff(trace.energy)
    ok = bool(np.all(diffs <= 1e-8))
    _report(5, "acs-energy-monotonicity", ok, budget,
            f"max increase {diffs.max():.3e}")


def test_06_acs_ama_equivalence(boxes_bundle):
    # both algorithms run the same budget; 100 outer iterations keeps the
    # chaotic round-off amplification of the inner primal-dual loop well
    # below the tolerance, so the comparison isolates the algorithmic
    # large-penalty equivalence itself
    budget = Budget(240.0)
    gt, bundle = boxes_bundle
    params = ModelParams(alpha1=0.5, alpha0=1.0, b=1.0, w=0.5)
    primal_acs, _, _ = acs(bundle, params,
                           SolverConfig(iters=100, inner_iters=50))
    primal_ama, _, _ = ama(
        bundle, params,
        SolverConfig(iters=100, inner_iters=50, mu=1e8, nu=1e8, growth=1.0),
    )
    rms = float(np.sqrt(np.mean((primal_acs.x - primal_ama.x) ** 2)))
    _report(6, "acs-ama-equivalence-at-large-penalties", rms < 1e-4, budget,
            f"RMS diff {rms:.2e}")


def test_07_weighted_median_oracle():
    budget = Budget(30.0)
    rng = np.random.default_rng(42)
    k, n = 5, 32
    depths = rng.uniform(1.0, 5.0, (k, n, n))
    weights = rng.uniform(0.2, 2.0, (k, n, n))
    bundle = ObservationBundle(depths)
    params = ModelParams(alpha1=0.0, alpha0=0.0)
    primal, _, _ = pdhg_fixed(
        bundle, weights, params,
        SolverConfig(iters=8000, tau=0.05, record_energy=False),
    )
    worst = 0.0
    for i in range(n):
        for j in range(n):
            vals, wts = depths[:, i, j], weights[:, i, j]
            order = np.argsort(vals)
            v, wt = vals[order], wts[order]
            c = np.cumsum(wt)
            lo_idx = int(np.searchsorted(c, c[-1] / 2.0))
            lo = v[lo_idx]
            hi = (v[lo_idx + 1]
                  if abs(c[lo_idx] - c[-1] / 2.0) < 1e-12
                  and lo_idx + 1 < k else lo)
            x = primal.x[i, j]
            worst = max(worst, lo - x, x - hi)
    _report(7, "pure-fidelity-weighted-median", worst <= 1e-3, budget,
            f"worst distance to median interval {worst:.2e}")


def test_08_scale_space_ordering():
    budget = Budget(120.0)
    gt = make_boxes_scene()  # default four-box 128x128 layout
    bundle = identity_bundle(gt, 1)
    params = ModelParams(alpha1=1.0, alpha0=2.0)
    background = 3.0

    boxes = {8: (4.0, None), 32: (4.5, None)}
    locations = {}
    for size, (depth, _) in boxes.items():
        mask = gt == depth
        assert mask.sum() == size * size
        locations[size] = mask

    def vanished(size, c):
        cfg = SolverConfig(iters=1500, regularizer="tv", tau=0.05,
                           record_energy=False)
        primal, _, _ = pdhg_fixed(bundle, np.full((128, 128), c), params,
                                  cfg)
        step = abs(boxes[size][0] - background)
        dev = np.abs(primal.x[locations[size]] - background).max()
        return dev < 0.1 * step

    def threshold(size):
        lo, hi = 0.02, 2.0
        assert vanished(size, lo) and not vanished(size, hi)
        for _ in range(7):
            mid = 0.5 * (lo + hi)
            if vanished(size, mid):
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    t8 = threshold(8)
    t32 = threshold(32)
    _report(8, "scale-space-disappearance-ordering", t8 > t32, budget,
            f"threshold(8px)={t8:.3f} > threshold(32px)={t32:.3f}")


def test_09_fusion_quality_ordering(boxes_bundle):
    budget = Budget(300.0)
    gt, bundle = boxes_bundle
    intr = CameraIntrinsics(57.6, 32.0, 32.0)
    med, med_valid = baseline_fuse(bundle, "median")
    med_filled = np.where(med_valid, med, np.nan)

    prior = geometric_confidence(np.where(med_valid, med, np.nan), intr)
    w, b = hyperparams_from_priors([prior], b0=1.0)
    params = ModelParams(alpha1=0.5, alpha0=1.0, b=b, w=w)
    primal, _, _ = acs(bundle, params,
                       SolverConfig(iters=60, inner_iters=50))

    rmse_fused = evaluate(primal.x, gt).rmse
    rmse_median = evaluate(med_filled, gt).rmse
    rmse_reference = evaluate(bundle.depths[bundle.k // 2], gt).rmse
    ok = rmse_fused < rmse_median < rmse_reference
    _report(9, "fusion-quality-ordering", ok, budget,
            f"adapt-hprior {rmse_fused:.4f} < median {rmse_median:.4f} "
            f"< reference {rmse_reference:.4f}")


def test_10_step_size_validity():
    budget = Budget(1.0)
    rng = np.random.default_rng(3)
    ok = True
    for _ in range(1000):
        k = int(rng.integers(1, 30))
        norm_m = rng.uniform(1e-3, 20.0)
        norm_lam = rng.uniform(1e-3, 20.0)
        balance = rng.uniform(1e-3, 10.0)
        s = compute_steps(k, norm_m, norm_lam, balance)
        bound = 1.0 / (k + 1)
        ok &= s.sigma_q * s.tau * norm_m**2 <= bound + 1e-12
        ok &= s.sigma_p * s.tau * norm_lam**2 <= bound + 1e-12
    _report(10, "step-size-bounds", bool(ok), budget)


def test_11_reprojection_oracles():
    budget = Budget(10.0)
    intr = CameraIntrinsics(100.0, 16.0, 16.0)
    rng = np.random.default_rng(4)

    d = rng.uniform(2.0, 6.0, (33, 33))
    out, valid = reproject(d, Pose.identity(), intr)
    ok = valid.all() and np.array_equal(out, d)

    plane = np.full((33, 33), 5.0)
    out, valid = reproject(plane, Pose(np.eye(3), [0, 0, -1.0]), intr)
    ok = ok and valid[16, 16] and abs(out[16, 16] - 4.0) < 1e-6
    ok = ok and np.all(np.abs(out[valid] - 4.0) < 1e-6)

    fwd = Pose(np.eye(3), [0.37, -0.21, 0.0])
    out1, v1 = reproject(plane, fwd.inverse(), intr)
    out2, v2 = reproject(np.where(v1, out1, np.nan), fwd, intr, v1)
    both = v2
    round_trip = float(np.max(np.abs(out2[both] - plane[both])))
    ok = ok and both.sum() > 100 and round_trip < 1e-6
    _report(11, "reprojection-oracles", ok, budget,
            f"round-trip err {round_trip:.2e}")


def test_12_semiconvexity_spot_check():
    budget = Budget(10.0)
    rng = np.random.default_rng(5)
    n = 64
    omega = np.sqrt(n)
    d = rng.standard_normal((8, 8))

    def aug(x, lam):
        return (np.sum(lam * np.abs(x - d))
                + 0.5 * omega * (np.sum(x**2) + np.sum(lam**2)))

    worst = -np.inf
    for _ in range(1000):
        gamma = rng.uniform()
        x1, x2 = rng.standard_normal((2, 8, 8)) * 2
        lam1, lam2 = rng.uniform(0.01, 3.0, (2, 8, 8))
        lhs = aug(gamma * x1 + (1 - gamma) * x2,
                  gamma * lam1 + (1 - gamma) * lam2)
        rhs = gamma * aug(x1, lam1) + (1 - gamma) * aug(x2, lam2)
        worst = max(worst, lhs - rhs)
    _report(12, "sqrt-n-semiconvexity", worst <= 1e-9, budget,
            f"worst convexity violation {worst:.2e}")


def test_13_biconvex_pdhg_reporting():
    budget = Budget(180.0)
    intr = CameraIntrinsics(57.6, 32.0, 32.0)
    gt = make_boxes_scene(64, 64, (10, 20), (27.0, 24.0), 30.0)
    poses = camera_path("translation", 11, spacing=0.8)
    views = warped_views(gt, poses, intr, 5, NoiseSpec("laplace", 0.6,
                                                       seed=3))
    bundle = reproject_bundle(views, poses, intr, 5)
    params = ModelParams(alpha1=0.5, alpha0=1.0, b=1.0, w=0.5)
    primal, lam, dual, trace = pdhg_biconvex(
        bundle, params,
        SolverConfig(iters=3000, tau=0.05, tau_lambda=0.0025,
                     record_energy=False),
    )
    finite = (
        np.all(np.isfinite(primal.x)) and np.all(np.isfinite(lam))
        and np.all(np.isfinite(trace.dx))
        and np.all(np.isfinite(trace.dlambda))
    )
    if trace.verdict == CONVERGED:
        dx0 = next(d for d in trace.dx if d > 0)
        dl0 = next(d for d in trace.dlambda if d > 0)
        x_floor = 1e-12 * max(float(np.sqrt(np.sum(primal.x**2))), 1.0)
        l_floor = 1e-12 * max(float(np.sqrt(np.sum(lam**2))), 1.0)
        small = (trace.dx[-1] <= max(1e-6 * dx0, x_floor)
                 and trace.dlambda[-1] <= max(1e-6 * dl0, l_floor))
        ok = finite and small
    else:
        ok = finite and trace.verdict in ("budget-exhausted", "diverged")
    _report(13, "biconvex-pdhg-honest-reporting", ok, budget,
            f"verdict={trace.verdict}, all finite={finite}")
