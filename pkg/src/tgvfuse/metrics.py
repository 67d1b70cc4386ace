"""Evaluation metrics and the per-pixel fusion baselines."""

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["MetricsReport", "evaluate", "baseline_fuse", "aggregate"]


@dataclass
class MetricsReport:
    """Depth- and disparity-domain error metrics for one fused result.

    Disparity metrics (``out_n``, ``d_avg``) and the normal-angle error
    are present only when the corresponding inputs were supplied.
    ``z_avg`` is reported as the geometric mean of (rmse, zmae,
    nmae_degrees); this interpretation is labeled in the CSV output.
    """

    rmse: float
    zmae: float
    nmae_degrees: float = None
    z_avg: float = None
    out_n: dict = field(default_factory=dict)
    d_avg: float = None
    density: float = 100.0

    def as_row(self, thresholds=()):
        row = {
            "rmse": self.rmse,
            "zmae": self.zmae,
            "nmae_deg": self.nmae_degrees,
            "zavg_geomean": self.z_avg,
            "d_avg_px": self.d_avg,
            "density_pct": self.density,
        }
        for n in thresholds or sorted(self.out_n):
            row[f"out_{n}_pct"] = self.out_n.get(n)
        return row


def evaluate(x, gt, normals_x=None, normals_gt=None, disparity_pair=None,
             thresholds=(3,), valid=None):
    """Compare a fused depth field against ground truth.

    ``normals_x``/``normals_gt`` are (H, W, 3) unit-normal maps with
    NaN rows marking invalid pixels. ``disparity_pair`` is a tuple of
    (estimated, ground-truth) disparity fields for the out-n and
    average disparity-error metrics. ``valid`` restricts the comparison;
    ``density`` is the percentage of compared pixels.
    """
    x = np.asarray(x, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if x.shape != gt.shape:
        raise ValueError(f"grid mismatch: {x.shape} vs {gt.shape}")
    if valid is None:
        valid = np.isfinite(x) & np.isfinite(gt)
    else:
        valid = np.asarray(valid, dtype=bool) & np.isfinite(x) & np.isfinite(gt)
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise ValueError("no valid pixels to evaluate")

    err = x[valid] - gt[valid]
    rmse = float(np.sqrt(np.mean(err ** 2)))
    zmae = float(np.mean(np.abs(err)))

    nmae = None
    if normals_x is not None and normals_gt is not None:
        ok = (
            valid
            & np.all(np.isfinite(normals_x), axis=-1)
            & np.all(np.isfinite(normals_gt), axis=-1)
        )
        if ok.any():
            dots = np.clip(
                np.sum(normals_x[ok] * normals_gt[ok], axis=-1), -1.0, 1.0
            )
            nmae = float(np.degrees(np.mean(np.arccos(dots))))

    z_avg = None
    if nmae is not None and rmse > 0 and zmae > 0 and nmae > 0:
        z_avg = float((rmse * zmae * nmae) ** (1.0 / 3.0))

    out_n = {}
    d_avg = None
    if disparity_pair is not None:
        disp = np.asarray(disparity_pair[0], dtype=np.float64)
        disp_gt = np.asarray(disparity_pair[1], dtype=np.float64)
        dv = valid & np.isfinite(disp) & np.isfinite(disp_gt)
        if dv.any():
            derr = np.abs(disp[dv] - disp_gt[dv])
            d_avg = float(np.mean(derr))
            for n in thresholds:
                out_n[n] = float(100.0 * np.mean(derr > n))

    density = float(100.0 * n_valid / valid.size)
    return MetricsReport(rmse, zmae, nmae, z_avg, out_n, d_avg, density)


def baseline_fuse(bundle, kind):
    """Per-pixel mean or lower-median fusion of the valid observations.

    Returns (field, valid) where all-invalid pixels carry NaN and a
    False mask. The lower median takes the element at index (m-1)//2 of
    the sorted valid values, so perturbing one observation by delta
    moves the output by at most delta.
    """
    counts = bundle.valid.sum(axis=0)
    any_valid = counts > 0
    if kind == "mean":
        total = np.sum(bundle.depths * bundle.valid, axis=0)
        out = np.where(any_valid, total / np.maximum(counts, 1), np.nan)
    elif kind == "median":
        stacked = np.where(bundle.valid, bundle.depths, np.inf)
        stacked = np.sort(stacked, axis=0)
        idx = np.maximum(counts - 1, 0) // 2
        out = np.take_along_axis(stacked, idx[None], axis=0)[0]
        out = np.where(any_valid, out, np.nan)
    else:
        raise ValueError(f"unknown baseline kind: {kind!r}")
    return out, any_valid


def aggregate(reports, how="geometric"):
    """Aggregate metric reports across scenes.

    ``how`` selects geometric or arithmetic averaging; outputs are
    labeled accordingly by the callers writing tables.
    """
    if not reports:
        raise ValueError("nothing to aggregate")

    def combine(values):
        vals = [v for v in values if v is not None]
        if not vals:
            return None
        if how == "geometric":
            if any(v <= 0 for v in vals):
                return None
            return float(math.exp(np.mean(np.log(vals))))
        if how == "arithmetic":
            return float(np.mean(vals))
        raise ValueError(f"unknown aggregation: {how!r}")

    thresholds = sorted({n for r in reports for n in r.out_n})
    return MetricsReport(
        rmse=combine([r.rmse for r in reports]),
        zmae=combine([r.zmae for r in reports]),
        nmae_degrees=combine([r.nmae_degrees for r in reports]),
        z_avg=combine([r.z_avg for r in reports]),
        out_n={
            n: combine([r.out_n.get(n) for r in reports]) for n in thresholds
        },
        d_avg=combine([r.d_avg for r in reports]),
        density=combine([r.density for r in reports]),
    )
