"""Instantaneous 3-DOF ego-velocity from a single scan's Doppler channel.

A static scatterer at unit bearing b measures doppler -(b . v), so the
stacked bearings give a linear system for the body velocity v.  Returns
from moving objects and multipath violate the model and are rejected by
RANSAC before the weighted refit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from rio4d.ingest import RadarScan


class InsufficientPoints(ValueError):
    """Fewer than three usable Doppler returns."""


class DegenerateGeometry(ValueError):
    """Inlier bearings are rank-deficient: one velocity axis unobservable."""


@dataclass
class EgoVelocityParams:
    ransac_iters: int = 120
    inlier_thresh: float = 0.25     # m/s Doppler residual gate
    sigma_doppler: float = 0.1      # m/s, used when the input has no uncertainty
    min_inliers: int = 3
    cond_thresh: float = 1e-6       # smallest/largest singular value of bearings


@dataclass
class EgoVelocity:
    timestamp: float
    v: np.ndarray                   # (3,) m/s, body frame
    covariance: np.ndarray          # (3, 3)
    inlier_mask: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))


def _solve_lls(bearings, dopplers):
    # model: bearings @ v = -dopplers
    v, *_ = np.linalg.lstsq(bearings, -dopplers, rcond=None)
    return v


def estimate_ego_velocity(
    scan: RadarScan, params: EgoVelocityParams | None = None, rng=None
) -> EgoVelocity:
    """RANSAC-seeded weighted least squares on the Doppler forward model.

    rng: numpy Generator for the RANSAC draws; pass a seeded generator for
    reproducible results (the pipeline derives one per scan).
    """
    params = params or EgoVelocityParams()
    rng = rng if rng is not None else np.random.default_rng(0)
    n = len(scan)
    if n < 3:
        raise InsufficientPoints(f"ego velocity needs >= 3 points, got {n}")
    B = scan.bearings()
    d = scan.dopplers

    s_all = np.linalg.svd(B, compute_uv=False)
    if s_all[-1] < params.cond_thresh * s_all[0]:
        raise DegenerateGeometry(
            "bearings are coplanar through the origin; "
            "velocity unobservable along the plane normal"
        )

    best_mask = None
    best_count = -1
    for _ in range(params.ransac_iters):
        pick = rng.choice(n, size=3, replace=False)
        A = B[pick]
        if abs(np.linalg.det(A)) < 1e-9:
            continue
        v = np.linalg.solve(A, -d[pick])
        resid = np.abs(B @ v + d)
        mask = resid <= params.inlier_thresh
        count = int(mask.sum())
        if count > best_count:
            best_count = count
            best_mask = mask
    if best_mask is None or best_count < params.min_inliers:
        raise InsufficientPoints(
            f"RANSAC consensus has {max(best_count, 0)} inliers, need {params.min_inliers}"
        )

    v = _solve_lls(B[best_mask], d[best_mask])
    inlier_mask = np.abs(B @ v + d) <= params.inlier_thresh
    if inlier_mask.sum() < params.min_inliers:
        inlier_mask = best_mask  # final gate emptied the set: keep consensus

    A = B[inlier_mask]
    s = np.linalg.svd(A, compute_uv=False)
    if s[-1] < params.cond_thresh * s[0]:
        raise DegenerateGeometry(
            "inlier bearings are coplanar through the origin; "
            "velocity unobservable along the plane normal"
        )
    v = _solve_lls(A, d[inlier_mask])
    cov = params.sigma_doppler**2 * np.linalg.inv(A.T @ A)
    return EgoVelocity(scan.timestamp, v, cov, inlier_mask)
