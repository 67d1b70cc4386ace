"""Confidence-adaptive TGV fusion of depth images.

A fused depth field and a per-pixel confidence field are estimated
jointly by minimizing a biconvex energy: a second-order total
generalized variation regularizer, a confidence-weighted L1 fidelity to
multiple (reprojected) depth observations, and a log-barrier prior
keeping the confidences positive and bounded. Three solver families are
provided (alternating exact search, proximal alternation, and a joint
primal-dual iteration), plus the multi-view reprojection geometry,
heuristic confidence priors, synthetic scene generators, metrics, and
file I/O behind the `tgvfuse` command-line tool.
"""

from .energy import (
    EnergyReport,
    ModelParams,
    ObservationBundle,
    eval_energy,
    lambda_acs_update,
    lambda_ama_update,
    lambda_pdhg_resolvent,
    prox_l1_dual,
    prox_tgv_dual,
)
from .geometry import (
    CameraIntrinsics,
    Pose,
    backproject,
    edge_confidence,
    geometric_confidence,
    hyperparams_from_priors,
    normal_map,
    reproject,
)
from .grids import (
    div,
    grad,
    operator_norm,
    sym_div,
    sym_grad,
    tgv_adjoint,
    tgv_apply,
)
from .metrics import MetricsReport, aggregate, baseline_fuse, evaluate
from .solvers import (
    BUDGET_EXHAUSTED,
    CONVERGED,
    DIVERGED,
    DualState,
    PrimalState,
    SolverConfig,
    SolverTrace,
    StepSizes,
    acs,
    ama,
    compute_steps,
    pdhg_biconvex,
    pdhg_fixed,
)
from .synth import (
    NoiseSpec,
    add_noise,
    camera_path,
    depth_to_disparity,
    identity_bundle,
    make_boxes_scene,
    reproject_bundle,
    warped_views,
)

__version__ = "0.1.0"

__all__ = [
    "EnergyReport", "ModelParams", "ObservationBundle", "eval_energy",
    "lambda_acs_update", "lambda_ama_update", "lambda_pdhg_resolvent",
    "prox_l1_dual", "prox_tgv_dual",
    "CameraIntrinsics", "Pose", "backproject", "edge_confidence",
    "geometric_confidence", "hyperparams_from_priors", "normal_map",
    "reproject",
    "div", "grad", "operator_norm", "sym_div", "sym_grad", "tgv_adjoint",
    "tgv_apply",
    "MetricsReport", "aggregate", "baseline_fuse", "evaluate",
    "BUDGET_EXHAUSTED", "CONVERGED", "DIVERGED", "DualState", "PrimalState",
    "SolverConfig", "SolverTrace", "StepSizes", "acs", "ama",
    "compute_steps", "pdhg_biconvex", "pdhg_fixed",
    "NoiseSpec", "add_noise", "camera_path", "depth_to_disparity",
    "identity_bundle", "make_boxes_scene", "reproject_bundle",
    "warped_views",
    "__version__",
]
