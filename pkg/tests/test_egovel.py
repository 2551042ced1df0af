import numpy as np
import pytest

from rio4d.egovel import (
    DegenerateGeometry,
    EgoVelocityParams,
    InsufficientPoints,
    estimate_ego_velocity,
)
from rio4d.geometry import so3_exp
from rio4d.ground import point_covariances
from rio4d.ingest import RadarScan


def make_scan(positions, dopplers, t=0.0):
    positions = np.asarray(positions, dtype=float)
    covs = point_covariances(positions, 0.05, 0.005, 0.005)
    return RadarScan(t, positions, dopplers, np.full(len(positions), 10.0), covs)


def doppler_scan(v, n=50, seed=0, t=0.0):
    rng = np.random.default_rng(seed)
    positions = rng.uniform(-20, 20, (n, 3)) + np.array([5.0, 0.0, 0.0])
    positions = positions[np.linalg.norm(positions, axis=1) > 1.0]
    b = positions / np.linalg.norm(positions, axis=1)[:, None]
    return make_scan(positions, -(b @ np.asarray(v, dtype=float)), t)


def test_stationary_scan_gives_zero_velocity():
    scan = doppler_scan([0.0, 0.0, 0.0])
    est = estimate_ego_velocity(scan, rng=np.random.default_rng(0))
    np.testing.assert_allclose(est.v, 0.0, atol=1e-12)
    assert est.inlier_mask.all()


def test_noise_free_recovery_to_1e9():
    scan = doppler_scan([1.0, 0.5, -0.2], n=50, seed=1)
    est = estimate_ego_velocity(scan, rng=np.random.default_rng(0))
    np.testing.assert_allclose(est.v, [1.0, 0.5, -0.2], atol=1e-9)


def test_dynamic_outliers_rejected():
    v = np.array([1.0, 0.5, -0.2])
    scan = doppler_scan(v, n=60, seed=2)
    dop = scan.dopplers.copy()
    dyn = np.arange(10)
    dop[dyn] += 3.0  # receding bias, as from a moving object
    corrupted = RadarScan(0.0, scan.positions, dop, scan.powers, scan.covariances)
    est = estimate_ego_velocity(corrupted, rng=np.random.default_rng(3))
    assert np.sum(~est.inlier_mask[dyn]) >= 9
    np.testing.assert_allclose(est.v, v, atol=1e-3)


def test_rotation_equivariance():
    v = np.array([0.8, -0.3, 0.1])
    scan = doppler_scan(v, n=40, seed=4)
    R = so3_exp(np.array([0.3, -0.2, 0.9]))
    rotated = RadarScan(
        0.0,
        scan.positions @ R.T,
        scan.dopplers,
        scan.powers,
        np.einsum("ij,njk,lk->nil", R, scan.covariances, R),
    )
    est0 = estimate_ego_velocity(scan, rng=np.random.default_rng(5))
    est1 = estimate_ego_velocity(rotated, rng=np.random.default_rng(5))
    np.testing.assert_allclose(est1.v, R @ est0.v, atol=1e-9)


def test_adding_zero_residual_points_keeps_estimate():
    v = np.array([1.2, 0.1, 0.05])
    scan = doppler_scan(v, n=30, seed=6)
    est0 = estimate_ego_velocity(scan, rng=np.random.default_rng(7))
    extra = doppler_scan(v, n=20, seed=8)
    merged = RadarScan(
        0.0,
        np.vstack([scan.positions, extra.positions]),
        np.concatenate([scan.dopplers, extra.dopplers]),
        np.concatenate([scan.powers, extra.powers]),
        np.concatenate([scan.covariances, extra.covariances]),
    )
    est1 = estimate_ego_velocity(merged, rng=np.random.default_rng(7))
    np.testing.assert_allclose(est1.v, est0.v, atol=1e-9)


def test_covariance_trace_non_increasing_with_inliers():
    v = np.array([1.0, 0.0, 0.3])
    traces = []
    base = doppler_scan(v, n=120, seed=9)
    for n in (20, 50, 110):
        sub = base.select(np.arange(n))
        est = estimate_ego_velocity(sub, rng=np.random.default_rng(10))
        traces.append(np.trace(est.covariance))
    assert traces[0] >= traces[1] >= traces[2]


def test_degenerate_geometry_raises():
    # all bearings in the z = 0 plane: v_z unobservable
    rng = np.random.default_rng(11)
    xy = rng.uniform(-20, 20, (30, 2))
    positions = np.column_stack([xy, np.zeros(30)])
    positions = positions[np.linalg.norm(positions, axis=1) > 2.0]
    b = positions / np.linalg.norm(positions, axis=1)[:, None]
    scan = make_scan(positions, -(b @ np.array([1.0, 0.0, 0.0])))
    with pytest.raises(DegenerateGeometry):
        estimate_ego_velocity(scan, rng=np.random.default_rng(12))


def test_insufficient_points_raises():
    scan = make_scan([[5.0, 0, 0], [0, 5.0, 0]], [0.0, 0.0])
    with pytest.raises(InsufficientPoints):
        estimate_ego_velocity(scan, rng=np.random.default_rng(13))


def test_noisy_scan_covariance_sane():
    rng = np.random.default_rng(14)
    v = np.array([2.0, -1.0, 0.1])
    scan = doppler_scan(v, n=80, seed=15)
    noisy = RadarScan(
        0.0,
        scan.positions,
        scan.dopplers + rng.normal(0, 0.05, len(scan)),
        scan.powers,
        scan.covariances,
    )
    est = estimate_ego_velocity(
        noisy, EgoVelocityParams(sigma_doppler=0.05), np.random.default_rng(16)
    )
    np.testing.assert_allclose(est.v, v, atol=0.1)
    sd = np.sqrt(np.diag(est.covariance))
    assert np.all(sd > 0) and np.all(sd < 0.2)
