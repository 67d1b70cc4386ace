"""Discrete differential operators on regular pixel grids.

Field conventions used throughout the package:

- scalar field: ``(H, W)`` float array, row-major, row index = v (image
  row), column index = u (image column).
- vector field: ``(H, W, 2)`` array; channel 0 is the u-component
  (differences along columns), channel 1 the v-component (along rows).
- symmetric tensor field: ``(H, W, 3)`` array storing the channels
  ``xx``, ``yy``, ``xy`` of a symmetric 2x2 tensor per pixel; the
  off-diagonal entry is stored once and counted twice in inner products.

All derivative operators use forward differences with unit pixel spacing
and Neumann boundaries (the difference is zero at the last column/row),
and every pair (operator, adjoint) defined here is exact with respect to
these inner products: plain sums for scalar and vector fields, and the
xy-doubled sum for tensor fields.
"""

import numpy as np

__all__ = [
    "grad",
    "div",
    "sym_grad",
    "sym_div",
    "tgv_apply",
    "tgv_adjoint",
    "scalar_inner",
    "vector_inner",
    "tensor_inner",
    "operator_norm",
]


def grad(x):
    """Forward-difference gradient of a scalar field.

    Returns an (H, W, 2) vector field. The u-channel is zero in the last
    column and the v-channel is zero in the last row.
    """
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros(x.shape + (2,))
    g[:, :-1, 0] = x[:, 1:] - x[:, :-1]
    g[:-1, :, 1] = x[1:, :] - x[:-1, :]
    return g


def div(p):
    """Discrete divergence of a vector field, the negative adjoint of grad.

    Satisfies <grad x, p> = -<x, div p> exactly for all fields on the
    same grid.
    """
    p = np.asarray(p, dtype=np.float64)
    h, w = p.shape[:2]
    d = np.zeros((h, w))
    # backward differences transposing the forward stencil; a 1-pixel
    # extent contributes nothing (grad is the zero map there)
    if w > 1:
        d[:, 0] += p[:, 0, 0]
        d[:, 1:-1] += p[:, 1:-1, 0] - p[:, :-2, 0]
        d[:, -1] += -p[:, -2, 0]
    if h > 1:
        d[0, :] += p[0, :, 1]
        d[1:-1, :] += p[1:-1, :, 1] - p[:-2, :, 1]
        d[-1, :] += -p[-2, :, 1]
    return d


def sym_grad(v):
    """Symmetrized gradient of a vector field, (Dv + Dv^T)/2 per pixel.

    Returns an (H, W, 3) tensor field with channels (xx, yy, xy), built
    from the same forward-difference stencil as :func:`grad`.
    """
    v = np.asarray(v, dtype=np.float64)
    gu = grad(v[:, :, 0])
    gv = grad(v[:, :, 1])
    t = np.empty(v.shape[:2] + (3,))
    t[:, :, 0] = gu[:, :, 0]
    t[:, :, 1] = gv[:, :, 1]
    t[:, :, 2] = 0.5 * (gu[:, :, 1] + gv[:, :, 0])
    return t


def sym_div(t):
    """Negative adjoint of sym_grad under the xy-doubled inner product.

    Satisfies <sym_grad v, t> = -<v, sym_div t> with
    <s, t> = sum(s_xx t_xx + s_yy t_yy + 2 s_xy t_xy).
    """
    t = np.asarray(t, dtype=np.float64)
    out = np.empty(t.shape[:2] + (2,))
    out[:, :, 0] = div(t[:, :, (0, 2)])
    out[:, :, 1] = div(t[:, :, (2, 1)])
    return out


def tgv_apply(x, v):
    """Second-order TGV analysis operator: (grad x - v, sym_grad v)."""
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if v.shape != x.shape + (2,):
        raise ValueError(
            f"grid mismatch: x has shape {x.shape}, v has shape {v.shape}"
        )
    return grad(x) - v, sym_grad(v)


def tgv_adjoint(q1, q2):
    """Exact adjoint of tgv_apply: (-div q1, -q1 - sym_div q2)."""
    q1 = np.asarray(q1, dtype=np.float64)
    q2 = np.asarray(q2, dtype=np.float64)
    if q2.shape != q1.shape[:2] + (3,):
        raise ValueError(
            f"grid mismatch: q1 has shape {q1.shape}, q2 has shape {q2.shape}"
        )
    return -div(q1), -q1 - sym_div(q2)


def scalar_inner(a, b):
    return float(np.sum(a * b))


def vector_inner(a, b):
    return float(np.sum(a * b))


def tensor_inner(a, b):
    """Inner product of tensor fields; the xy channel counts twice."""
    return float(
        np.sum(a[..., 0] * b[..., 0])
        + np.sum(a[..., 1] * b[..., 1])
        + 2.0 * np.sum(a[..., 2] * b[..., 2])
    )


def _as_tuple(z):
    return z if isinstance(z, tuple) else (z,)


def _norm(z):
    return float(np.sqrt(sum(np.sum(np.square(a)) for a in _as_tuple(z))))


def operator_norm(apply_op, adjoint_op, shape, iters=100, seed=0):
    """Power-iteration estimate of the operator norm ||A||.

    ``apply_op`` maps the primal space to the dual space and
    ``adjoint_op`` must be its exact adjoint; the iteration runs on the
    self-adjoint composition A^T A. ``shape`` describes the primal space:
    either a single array shape or a sequence of shapes for operators on
    tuples of fields (e.g. ((H, W), (H, W, 2)) for the TGV operator).
    Deterministic for a fixed seed.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    rng = np.random.default_rng(seed)
    if isinstance(shape[0], (tuple, list)):
        z = tuple(rng.standard_normal(s) for s in shape)
        single = False
    else:
        z = rng.standard_normal(shape)
        single = True

    nrm = _norm(z)
    if nrm == 0.0:
        raise ValueError("degenerate start vector")
    z = tuple(a / nrm for a in _as_tuple(z))
    est = 0.0
    for _ in range(iters):
        w = apply_op(*z) if not single else apply_op(z[0])
        zn = adjoint_op(*_as_tuple(w)) if not single else adjoint_op(w)
        zn = _as_tuple(zn)
        est = _norm(zn)  # Rayleigh quotient of A^T A since ||z|| = 1
        if est == 0.0:
            return 0.0
        z = tuple(a / est for a in zn)
    return float(np.sqrt(est))
