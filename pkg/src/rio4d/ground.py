"""Zone-based, uncertainty-aware ground segmentation and noise rejection.

The scan is partitioned into concentric-zone cells (rings x sectors, ring
widths growing with range).  Each cell with enough points gets its own
plane, fitted by minimizing Mahalanobis point-to-plane distances under the
per-point covariances; points below the fitted plane are rejected as
multipath noise.  Ground-point heights can afterwards be refined from the
Doppler channel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from rio4d.ingest import RadarScan


class DegenerateFit(ValueError):
    """Plane fit attempted on collinear or insufficient points."""


def point_covariance(p, sigma_r, sigma_az, sigma_el):
    """3x3 position covariance of a radar return at sensor-frame point p.

    Built in the orthonormal (radial, azimuth-tangential,
    elevation-tangential) frame: variance sigma_r^2 along the ray and
    (r*sigma_az)^2 / (r*sigma_el)^2 across it, so angular noise grows
    linearly with range.
    """
    p = np.asarray(p, dtype=float)
    r = np.linalg.norm(p)
    if r <= 0.0:
        raise ValueError("point at sensor origin has no covariance")
    e_r = p / r
    rho = np.hypot(p[0], p[1])
    if rho > 1e-12 * r:
        e_az = np.array([-p[1], p[0], 0.0]) / rho
    else:
        e_az = np.array([1.0, 0.0, 0.0])  # point on the z-axis: any tangent works
    e_el = np.cross(e_az, e_r)
    return (
        sigma_r**2 * np.outer(e_r, e_r)
        + (r * sigma_az) ** 2 * np.outer(e_az, e_az)
        + (r * sigma_el) ** 2 * np.outer(e_el, e_el)
    )


def point_covariances(positions, sigma_r, sigma_az, sigma_el):
    """Vectorized point_covariance over an (N, 3) position array."""
    P = np.atleast_2d(np.asarray(positions, dtype=float))
    r = np.linalg.norm(P, axis=1)
    if np.any(r <= 0.0):
        raise ValueError("point at sensor origin has no covariance")
    e_r = P / r[:, None]
    rho = np.hypot(P[:, 0], P[:, 1])
    e_az = np.zeros_like(P)
    ok = rho > 1e-12 * r
    e_az[ok, 0] = -P[ok, 1] / rho[ok]
    e_az[ok, 1] = P[ok, 0] / rho[ok]
    e_az[~ok, 0] = 1.0
    e_el = np.cross(e_az, e_r)
    out = (
        sigma_r**2 * np.einsum("ni,nj->nij", e_r, e_r)
        + (r * sigma_az)[:, None, None] ** 2 * np.einsum("ni,nj->nij", e_az, e_az)
        + (r * sigma_el)[:, None, None] ** 2 * np.einsum("ni,nj->nij", e_el, e_el)
    )
    return out


def radius_filter(scan: RadarScan, min_r, max_r) -> RadarScan:
    """Keep points with min_r <= range <= max_r."""
    if not min_r < max_r:
        raise ValueError("radius filter needs min_r < max_r")
    r = scan.ranges()
    return scan.select((r >= min_r) & (r <= max_r))


@dataclass
class PlaneModel:
    """Plane {p : n.p + d = 0} with an upward unit normal.

    kappa = n^T C n is the point-set variance along the normal (flatness);
    C is the sample covariance of the member points.
    """

    n: np.ndarray
    d: float
    kappa: float
    C: np.ndarray

    def signed_distance(self, points):
        return np.atleast_2d(points) @ self.n + self.d

    def mahalanobis_distance(self, points, covariances):
        num = self.signed_distance(points)
        den = np.sqrt(np.einsum("i,nij,j->n", self.n, np.asarray(covariances).reshape(-1, 3, 3), self.n))
        return np.abs(num) / np.maximum(den, 1e-300)


def _sample_covariance(points):
    q = points - points.mean(axis=0)
    return (q.T @ q) / len(points)


def _tangent_basis(n):
    a = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    b1 = np.cross(n, a)
    b1 /= np.linalg.norm(b1)
    b2 = np.cross(n, b1)
    return np.column_stack([b1, b2])


def fit_plane_mahalanobis(points, covariances, max_iters=50, tol=1e-8) -> PlaneModel:
    """Minimize the summed squared Mahalanobis point-to-plane distances.

    The residual for point i is (n.p_i + d) / sqrt(n^T S_i n) with S_i the
    point covariance.  Gauss-Newton over (n, d); the unit normal is updated
    in its two-dimensional tangent plane, which enforces |n| = 1 without
    constraints.  Seeded from the PCA plane.
    """
    P = np.atleast_2d(np.asarray(points, dtype=float))
    S = np.asarray(covariances, dtype=float).reshape(-1, 3, 3)
    if len(P) < 3:
        raise DegenerateFit(f"plane fit needs >= 3 points, got {len(P)}")
    C = _sample_covariance(P)
    evals, evecs = np.linalg.eigh(C)
    if evals[1] <= 1e-12 * max(evals[-1], 1e-30):
        raise DegenerateFit("points are collinear")
    n = evecs[:, 0]
    if n[2] < 0:
        n = -n
    d = -float(n @ P.mean(axis=0))

    def residuals(n, d):
        u = P @ n + d
        s = np.sqrt(np.einsum("i,nij,j->n", n, S, n))
        s = np.maximum(s, 1e-300)
        return u / s, s

    for _ in range(max_iters):
        r, s = residuals(n, d)
        Sn = np.einsum("nij,j->ni", S, n)
        # d r_i / d n = p_i / s_i - r_i * S_i n / s_i^2
        dr_dn = P / s[:, None] - (r / s**2)[:, None] * Sn
        B = _tangent_basis(n)
        J = np.column_stack([dr_dn @ B, 1.0 / s])
        g = J.T @ r
        H = J.T @ J
        try:
            delta = np.linalg.solve(H + 1e-14 * np.trace(H) * np.eye(3), -g)
        except np.linalg.LinAlgError:
            break
        n_new = n + B @ delta[:2]
        n_new /= np.linalg.norm(n_new)
        d_new = d + float(delta[2])
        if n_new[2] < 0:
            n_new, d_new = -n_new, -d_new
        n, d = n_new, d_new
        if np.linalg.norm(delta) < tol:
            break
    kappa = float(n @ C @ n)
    return PlaneModel(n=n, d=float(d), kappa=kappa, C=C)


@dataclass
class CzmConfig:
    """Concentric-zone model layout plus segmentation thresholds.

    zone_boundaries are the radial limits of the zones; rings of one zone
    are equal width and widths must strictly increase from zone to zone.
    """

    zone_boundaries: tuple = (2.0, 8.0, 22.0, 48.0, 80.0)
    rings: tuple = (2, 4, 4, 4)
    sectors: tuple = (16, 32, 54, 32)
    sensor_height: float = 1.0
    eps_d: float = 2.0          # Mahalanobis merge threshold (unitless)
    eps_f: float = 0.05         # flatness convergence threshold (m^2)
    max_iters: int = 5
    min_zone_points: int = 20
    seed_depth_factor: float = 2.0  # seeds live in (-factor*h_s, -h_s/2)

    def validate(self):
        b = np.asarray(self.zone_boundaries, dtype=float)
        if len(b) != len(self.rings) + 1 or len(self.rings) != len(self.sectors):
            raise ValueError("zone_boundaries must have len(rings) + 1 entries")
        if np.any(np.diff(b) <= 0):
            raise ValueError("zone boundaries must increase")
        widths = [
            (b[i + 1] - b[i]) / self.rings[i] for i in range(len(self.rings))
        ]
        if np.any(np.diff(widths) <= 0):
            raise ValueError("ring widths must strictly increase with distance")
        if self.eps_d <= 0 or self.eps_f <= 0 or self.max_iters <= 0:
            raise ValueError("thresholds must be positive")
        if self.seed_depth_factor <= 0.5:
            raise ValueError("seed_depth_factor must exceed 0.5")
        return self

    @property
    def max_range(self):
        return self.zone_boundaries[-1]

    @property
    def min_range(self):
        return self.zone_boundaries[0]


@dataclass
class CellReport:
    """Diagnostics for one concentric-zone cell."""

    cell_id: tuple              # (zone, ring, sector)
    plane: PlaneModel | None
    iterations: int
    ground_counts: list         # ground-set size after each refinement pass
    converged: bool             # flatness below eps_f at termination


@dataclass
class GroundSegmentation:
    """Partition of a radius-filtered scan into ground / static / noise."""

    ground_idx: np.ndarray
    static_idx: np.ndarray
    noise_idx: np.ndarray
    cells: list = field(default_factory=list)

    def counts(self):
        return len(self.ground_idx), len(self.static_idx), len(self.noise_idx)


def _cell_indices(positions, cfg: CzmConfig):
    """Map each point to its (zone, ring, sector) cell."""
    b = np.asarray(cfg.zone_boundaries, dtype=float)
    r = np.linalg.norm(positions, axis=1)
    az = np.mod(np.arctan2(positions[:, 1], positions[:, 0]), 2.0 * np.pi)
    out = {}
    for i in range(len(positions)):
        zi = int(np.searchsorted(b, r[i], side="right") - 1)
        if zi < 0 or zi >= len(cfg.rings):
            continue  # outside the zone model: caller radius-filters first
        width = (b[zi + 1] - b[zi]) / cfg.rings[zi]
        ring = min(int((r[i] - b[zi]) / width), cfg.rings[zi] - 1)
        sector = min(int(az[i] / (2.0 * np.pi / cfg.sectors[zi])), cfg.sectors[zi] - 1)
        out.setdefault((zi, ring, sector), []).append(i)
    return out


def segment_ground(scan: RadarScan, ego=None, cfg: CzmConfig | None = None) -> GroundSegmentation:
    """Per-cell iterative ground extraction with below-plane noise removal.

    Each cell with more than min_zone_points points is seeded with returns
    in the depth window (-seed_depth_factor*h_s, -h_s/2); the window's
    lower edge keeps deep multipath ghosts out of the fitting set.  The
    cell then alternates plane fitting and Mahalanobis merging until the
    flatness drops below eps_f or the iteration cap is hit.

    Final membership is re-gated against the converged plane: points
    within eps_d Mahalanobis units are ground, points more than one sigma
    below the plane are noise, the rest stay static.  Cells failing the
    size guard (or with an unfittable seed) pass all points to static.

    The ego argument is unused here; height refinement against the ego
    velocity is a separate step (refine_ground_heights).
    """
    cfg = (cfg or CzmConfig()).validate()
    n = len(scan)
    ground, noise = [], []
    cells = []
    claimed = np.zeros(n, dtype=bool)

    cell_map = _cell_indices(scan.positions, cfg)
    for cell_id in sorted(cell_map):
        idx = np.asarray(cell_map[cell_id], dtype=int)
        if len(idx) <= cfg.min_zone_points:
            continue
        P = scan.positions[idx]
        S = scan.covariances[idx]
        h_s = cfg.sensor_height
        seed = (P[:, 2] < -h_s / 2.0) & (P[:, 2] > -cfg.seed_depth_factor * h_s)
        if seed.sum() < 3:
            continue
        g_mask = seed.copy()
        plane = None
        counts = [int(g_mask.sum())]
        iters = 0
        converged = False
        for iters in range(1, cfg.max_iters + 1):
            try:
                plane = fit_plane_mahalanobis(P[g_mask], S[g_mask])
            except DegenerateFit:
                break
            q_mask = ~g_mask
            if q_mask.any():
                dm = plane.mahalanobis_distance(P[q_mask], S[q_mask])
                merge = np.zeros_like(g_mask)
                merge[np.flatnonzero(q_mask)[dm < cfg.eps_d]] = True
                g_mask |= merge
            counts.append(int(g_mask.sum()))
            C = _sample_covariance(P[g_mask])
            kappa = float(plane.n @ C @ plane.n)
            plane = PlaneModel(plane.n, plane.d, kappa, C)
            if kappa < cfg.eps_f:
                converged = True
                break
        cells.append(CellReport(cell_id, plane, iters, counts, converged))
        if plane is None:
            continue
        # Final gate: ground within eps_d of the cell plane, noise more
        # than one sigma below it, anything else static.
        dm = plane.mahalanobis_distance(P, S)
        sd = plane.signed_distance(P)
        margin = np.sqrt(np.einsum("i,nij,j->n", plane.n, S, plane.n))
        is_ground = dm <= cfg.eps_d
        is_noise = ~is_ground & (sd < -margin)
        ground.extend(idx[is_ground])
        noise.extend(idx[is_noise])
        claimed[idx[is_ground | is_noise]] = True

    ground = np.asarray(sorted(ground), dtype=int)
    noise = np.asarray(sorted(noise), dtype=int)
    static = np.flatnonzero(~claimed)
    return GroundSegmentation(ground, static, noise, cells)


def refine_height(position, doppler, velocity):
    """Solve the static-point Doppler equation for the point's height.

    For a ground point (x, y, z) and ego velocity v, the noise-free
    doppler satisfies v_d * r = -(v_x x + v_y y + v_z z); eliminating r
    gives a quadratic in z whose below-sensor root is returned.

    Returns (z, flag); flag is one of "ok", "singular_denominator",
    "negative_discriminant", "plus_root_closer".  On the two failure flags
    the measured z is returned unchanged.
    """
    x, y, z = np.asarray(position, dtype=float)
    vx, vy, vz = np.asarray(velocity, dtype=float)
    vd = float(doppler)
    vxy = vx * x + vy * y
    den = vd * vd - vz * vz
    if abs(den) < 1e-12:
        return z, "singular_denominator"
    disc = vxy * vxy * vd * vd - den * (x * x + y * y) * vd * vd
    if disc < 0.0:
        return z, "negative_discriminant"
    root = np.sqrt(disc)
    z_minus = (vxy * vz - root) / den
    z_plus = (vxy * vz + root) / den
    if abs(z_plus - z) < abs(z_minus - z):
        return z_minus, "plus_root_closer"
    return z_minus, "ok"


def refine_ground_heights(scan: RadarScan, seg: GroundSegmentation, ego) -> RadarScan:
    """Return a copy of the scan with ground-point heights refined."""
    positions = scan.positions.copy()
    for i in seg.ground_idx:
        z, _ = refine_height(positions[i], scan.dopplers[i], ego.v)
        positions[i, 2] = z
    return RadarScan(scan.timestamp, positions, scan.dopplers, scan.powers, scan.covariances)
