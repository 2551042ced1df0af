"""Synthetic radar + IMU sequence generator with exact ground truth.

The world is a smooth terrain height field plus persistent scatterer
structures; the vehicle follows a smooth planar curve, terrain-following
in height, pitch and roll.  Radar scans (positions, Doppler, power,
per-point covariance, per-point labels) and gyro samples are produced on
mutually asynchronous, optionally jittered clocks.

All randomness flows through a single numpy PCG64 generator seeded
explicitly, so identical (config, seed) pairs give bit-identical output.

Doppler convention: positive = receding, so a static scatterer at unit
bearing b measures -(b . v_body) before noise.  Multipath ghosts are
reflections of true above-ground points through the local ground plane
and always land below it.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import CubicSpline

from rio4d.geometry import Pose, so3_log
from rio4d.ground import point_covariances
from rio4d.ingest import ImuSample, RadarScan

LABEL_GROUND = "ground"
LABEL_STATIC = "static"
LABEL_NOISE = "noise"
LABEL_DYNAMIC = "dynamic"

_FD_T = 1e-5   # time step for pose derivatives
_FD_XY = 1e-4  # spatial step for terrain gradients


@dataclass
class SyntheticWorldConfig:
    # trajectory
    trajectory: str = "figure8"            # figure8 | line | arc | waypoints
    path_scale: float = 30.0               # m, curve size
    speed: float = 4.0                     # m/s nominal
    duration: float = 30.0                 # s
    waypoints: tuple = ()                  # ((x, y), ...) for trajectory="waypoints"
    # terrain
    ground_profile: str = "flat"           # flat | slope | hill
    slope_angle: float = np.deg2rad(5.0)   # rad
    slope_start: float = 10.0              # m along +x
    slope_smoothing: float = 2.0           # m, softplus blend length
    hill_amplitude: float = 1.0            # m
    hill_wavelength: float = 40.0          # m
    sensor_height: float = 1.0             # m above local ground
    # clocks
    radar_rate: float = 10.0               # Hz
    imu_rate: float = 100.0                # Hz
    timestamp_jitter: float = 0.0          # s, uniform +-
    # measurement noise (true noise injected into the data)
    sigma_range: float = 0.0               # m
    sigma_azimuth: float = 0.0             # rad
    sigma_elevation: float = 0.0           # rad
    sigma_doppler: float = 0.0             # m/s
    sigma_gyro: float = 0.0                # rad/s
    # clutter
    multipath_fraction: float = 0.0        # ghost spawn probability per true point
    dynamic_objects: int = 0
    dynamic_speed: float = 3.0             # m/s
    dynamic_points: int = 6                # scatterers per moving object
    # scene content
    ground_points: int = 150               # ground returns per scan
    ground_range: float = 35.0             # m, horizontal reach of ground returns
    n_structures: int = 12
    structure_points: int = 18
    structure_sigma: float = 0.8           # m, scatter inside a structure
    structure_height: tuple = (0.8, 4.0)   # m above local ground
    structure_offset: tuple = (6.0, 20.0)  # m lateral offset from the path
    fov_azimuth: float = np.pi             # rad half-width; pi = all-around
    min_range: float = 2.5
    max_range: float = 60.0
    # covariances attached to generated points assume at least this noise
    cov_floor: tuple = (0.05, 0.005, 0.005)

    def validate(self):
        if self.radar_rate <= 0 or self.imu_rate <= 0:
            raise ValueError("sensor rates must be positive")
        if not 0.0 <= self.multipath_fraction <= 1.0:
            raise ValueError("multipath_fraction must be in [0, 1]")
        if self.timestamp_jitter < 0:
            raise ValueError("timestamp jitter must be >= 0")
        max_jitter = 0.4 / max(self.radar_rate, self.imu_rate)
        if self.timestamp_jitter >= max_jitter:
            raise ValueError(
                f"jitter {self.timestamp_jitter} would break timestamp order; "
                f"needs < {max_jitter:g}"
            )
        if self.duration <= 0 or self.speed < 0:
            raise ValueError("duration must be positive and speed non-negative")
        if self.trajectory == "waypoints" and len(self.waypoints) < 2:
            raise ValueError("waypoint trajectory needs >= 2 waypoints")
        return self


class SyntheticWorld:
    """Callable ground truth: poses, velocities and terrain at any time."""

    def __init__(self, cfg: SyntheticWorldConfig, seed: int):
        self.cfg = cfg.validate()
        self.seed = int(seed)
        self._xy = self._build_path()

    # --- terrain -------------------------------------------------------

    def ground_height(self, x, y):
        cfg = self.cfg
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if cfg.ground_profile == "flat":
            return np.zeros_like(x)
        if cfg.ground_profile == "slope":
            s = cfg.slope_smoothing
            u = (x - cfg.slope_start) / s
            return np.tan(cfg.slope_angle) * s * np.logaddexp(0.0, u)
        if cfg.ground_profile == "hill":
            w = 2.0 * np.pi / cfg.hill_wavelength
            return cfg.hill_amplitude * np.sin(w * x) * np.sin(w * y)
        raise ValueError(f"unknown ground profile: {self.cfg.ground_profile!r}")

    def _ground_gradient(self, x, y):
        h = _FD_XY
        gx = (self.ground_height(x + h, y) - self.ground_height(x - h, y)) / (2 * h)
        gy = (self.ground_height(x, y + h) - self.ground_height(x, y - h)) / (2 * h)
        return gx, gy

    # --- path ----------------------------------------------------------

    def _build_path(self):
        cfg = self.cfg
        if cfg.trajectory == "figure8":
            grid = np.linspace(0.0, 2.0 * np.pi, 2001)
            dx = cfg.path_scale * np.cos(grid)
            dy = cfg.path_scale * np.cos(2.0 * grid)
            mean_speed_u = float(np.mean(np.hypot(dx, dy)))
            rate = cfg.speed / mean_speed_u

            def xy(t):
                u = rate * np.asarray(t, dtype=float)
                return np.stack(
                    [cfg.path_scale * np.sin(u), 0.5 * cfg.path_scale * np.sin(2.0 * u)],
                    axis=-1,
                )

            return xy
        if cfg.trajectory == "line":
            def xy(t):
                t = np.asarray(t, dtype=float)
                return np.stack([cfg.speed * t, np.zeros_like(t)], axis=-1)

            return xy
        if cfg.trajectory == "arc":
            R = cfg.path_scale

            def xy(t):
                u = cfg.speed * np.asarray(t, dtype=float) / R
                return np.stack([R * np.sin(u), R * (1.0 - np.cos(u))], axis=-1)

            return xy
        if cfg.trajectory == "waypoints":
            pts = np.asarray(cfg.waypoints, dtype=float)
            seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
            knots = np.concatenate([[0.0], np.cumsum(seg)]) / max(cfg.speed, 1e-9)
            spline = CubicSpline(knots, pts, axis=0, bc_type="natural")
            t_max = knots[-1]

            def xy(t):
                return spline(np.clip(np.asarray(t, dtype=float), 0.0, t_max))

            return xy
        raise ValueError(f"unknown trajectory: {cfg.trajectory!r}")

    # --- pose and derivatives -------------------------------------------

    def position(self, t):
        xy = self._xy(t)
        z = self.ground_height(xy[..., 0], xy[..., 1]) + self.cfg.sensor_height
        return np.concatenate([xy, np.expand_dims(z, -1)], axis=-1)

    def _yaw(self, t):
        h = _FD_T
        d = (self._xy(t + h) - self._xy(t - h)) / (2 * h)
        return np.arctan2(d[..., 1], d[..., 0])

    def rotation(self, t):
        """World-from-body rotation: x forward, y left, z up, terrain-following."""
        yaw = float(self._yaw(t))
        xy = self._xy(t)
        gx, gy = self._ground_gradient(float(xy[..., 0]), float(xy[..., 1]))
        heading = np.array([np.cos(yaw), np.sin(yaw)])
        left = np.array([-np.sin(yaw), np.cos(yaw)])
        pitch = -np.arctan(gx * heading[0] + gy * heading[1])
        roll = np.arctan(gx * left[0] + gy * left[1])
        cy, sy = np.cos(yaw), np.sin(yaw)
        cp, sp = np.cos(pitch), np.sin(pitch)
        cr, sr = np.cos(roll), np.sin(roll)
        Rz = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
        Ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
        Rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
        return Rz @ Ry @ Rx

    def pose(self, t) -> Pose:
        return Pose.from_rt(self.rotation(t), self.position(float(t)))

    def world_velocity(self, t):
        h = _FD_T
        return (self.position(t + h) - self.position(t - h)) / (2 * h)

    def body_velocity(self, t):
        return self.rotation(t).T @ self.world_velocity(float(t))

    def angular_velocity(self, t):
        """Body angular velocity, dR/dt = R [w]x."""
        h = _FD_T
        return so3_log(self.rotation(t - h).T @ self.rotation(t + h)) / (2 * h)

    # --- sequence generation ---------------------------------------------

    def generate(self):
        cfg = self.cfg
        rng = np.random.default_rng(self.seed)

        radar_phase = rng.uniform(0.0, 1.0 / cfg.radar_rate)
        imu_phase = rng.uniform(0.0, 1.0 / cfg.imu_rate)
        structures = self._build_structures(rng)
        dynamics = self._build_dynamics(rng)

        radar_times = self._clock(rng, radar_phase, cfg.radar_rate)
        imu_times = self._clock(rng, imu_phase, cfg.imu_rate)

        scans, labels, truth = [], [], []
        for t in radar_times:
            scan, lab = self._make_scan(float(t), rng, structures, dynamics)
            scans.append(scan)
            labels.append(lab)
            truth.append((float(t), self.pose(float(t))))

        imu = []
        for t in imu_times:
            w = self.angular_velocity(float(t))
            if cfg.sigma_gyro > 0:
                w = w + rng.normal(0.0, cfg.sigma_gyro, 3)
            accel = self.rotation(float(t)).T @ np.array([0.0, 0.0, 9.81])
            imu.append(ImuSample(float(t), w, accel))
        return scans, imu, truth, labels

    def _clock(self, rng, phase, rate):
        n = int(np.floor((self.cfg.duration - phase) * rate)) + 1
        times = phase + np.arange(n) / rate
        if self.cfg.timestamp_jitter > 0:
            times = times + rng.uniform(
                -self.cfg.timestamp_jitter, self.cfg.timestamp_jitter, n
            )
        return times

    def _build_structures(self, rng):
        cfg = self.cfg
        pts = []
        ids = []
        for k in range(cfg.n_structures):
            t_anchor = rng.uniform(0.0, cfg.duration)
            xy = self._xy(t_anchor)
            yaw = float(self._yaw(t_anchor))
            left = np.array([-np.sin(yaw), np.cos(yaw)])
            along = np.array([np.cos(yaw), np.sin(yaw)])
            side = rng.choice([-1.0, 1.0])
            base = (
                np.asarray(xy)
                + side * rng.uniform(*cfg.structure_offset) * left
                + rng.uniform(-8.0, 8.0) * along
            )
            z0 = float(self.ground_height(base[0], base[1])) + rng.uniform(*cfg.structure_height)
            center = np.array([base[0], base[1], z0])
            members = center + rng.normal(0.0, cfg.structure_sigma, (cfg.structure_points, 3))
            pts.append(members)
            ids.extend([k] * cfg.structure_points)
        if not pts:
            return np.zeros((0, 3)), np.zeros(0, dtype=int)
        return np.vstack(pts), np.asarray(ids, dtype=int)

    def _build_dynamics(self, rng):
        cfg = self.cfg
        objs = []
        for _ in range(cfg.dynamic_objects):
            t_anchor = rng.uniform(0.0, cfg.duration)
            xy = self._xy(t_anchor)
            base = np.asarray(xy) + rng.uniform(-15.0, 15.0, 2)
            z0 = float(self.ground_height(base[0], base[1])) + 1.0
            center = np.array([base[0], base[1], z0])
            heading = rng.uniform(0.0, 2.0 * np.pi)
            vel = cfg.dynamic_speed * np.array([np.cos(heading), np.sin(heading), 0.0])
            members = center + rng.normal(0.0, 0.5, (cfg.dynamic_points, 3))
            objs.append((members, vel))
        return objs

    def _make_scan(self, t, rng, structures, dynamics):
        cfg = self.cfg
        R = self.rotation(t)
        p_s = self.position(t)
        v_b = self.body_velocity(t)
        yaw = float(self._yaw(t))

        world_pts, world_vels, labels = [], [], []

        # ground returns, sampled by horizontal reach around the sensor
        az = rng.uniform(-cfg.fov_azimuth, cfg.fov_azimuth, cfg.ground_points)
        reach = rng.uniform(cfg.min_range, cfg.ground_range, cfg.ground_points)
        gx = p_s[0] + reach * np.cos(yaw + az)
        gy = p_s[1] + reach * np.sin(yaw + az)
        gz = self.ground_height(gx, gy)
        for i in range(cfg.ground_points):
            world_pts.append(np.array([gx[i], gy[i], gz[i]]))
            world_vels.append(None)
            labels.append(LABEL_GROUND)

        struct_pts, _ = structures
        for p in struct_pts:
            world_pts.append(p)
            world_vels.append(None)
            labels.append(LABEL_STATIC)

        for members, vel in dynamics:
            for p in members:
                world_pts.append(p + vel * t)
                world_vels.append(vel)
                labels.append(LABEL_DYNAMIC)

        positions, dopplers, out_labels = [], [], []
        elevated = [
            p for p, lab in zip(world_pts, labels)
            if lab != LABEL_GROUND and p[2] - float(self.ground_height(p[0], p[1])) > 0.3
        ]
        ghosts = []
        for p_w, u, lab in zip(world_pts, world_vels, labels):
            x_s = R.T @ (p_w - p_s)
            r = np.linalg.norm(x_s)
            if not (cfg.min_range <= r <= cfg.max_range):
                continue
            if abs(np.arctan2(x_s[1], x_s[0])) > cfg.fov_azimuth:
                continue
            bearing = x_s / r
            vd = -bearing @ v_b
            if u is not None:
                vd = vd + bearing @ (R.T @ u)
            positions.append(x_s)
            dopplers.append(vd)
            out_labels.append(lab)
            if cfg.multipath_fraction > 0 and rng.uniform() < cfg.multipath_fraction:
                depth = p_w[2] - float(self.ground_height(p_w[0], p_w[1]))
                if depth > 0.3:
                    src = p_w
                elif elevated:
                    src = elevated[rng.integers(len(elevated))]
                else:
                    continue
                g_src = float(self.ground_height(src[0], src[1]))
                ghosts.append(np.array([src[0], src[1], 2.0 * g_src - src[2]]))

        for g_w in ghosts:
            x_s = R.T @ (g_w - p_s)
            r = np.linalg.norm(x_s)
            if not (cfg.min_range <= r <= cfg.max_range):
                continue
            if abs(np.arctan2(x_s[1], x_s[0])) > cfg.fov_azimuth:
                continue
            positions.append(x_s)
            dopplers.append(-(x_s / r) @ v_b)  # ghost of a static scatterer
            out_labels.append(LABEL_NOISE)

        positions = np.asarray(positions, dtype=float).reshape(-1, 3)
        dopplers = np.asarray(dopplers, dtype=float)
        n = len(positions)

        # measurement noise in spherical coordinates
        if n and (cfg.sigma_range > 0 or cfg.sigma_azimuth > 0 or cfg.sigma_elevation > 0):
            r = np.linalg.norm(positions, axis=1)
            azm = np.arctan2(positions[:, 1], positions[:, 0])
            el = np.arcsin(np.clip(positions[:, 2] / r, -1.0, 1.0))
            r = r + rng.normal(0.0, max(cfg.sigma_range, 1e-12), n)
            azm = azm + rng.normal(0.0, max(cfg.sigma_azimuth, 1e-12), n)
            el = el + rng.normal(0.0, max(cfg.sigma_elevation, 1e-12), n)
            positions = np.stack(
                [r * np.cos(el) * np.cos(azm), r * np.cos(el) * np.sin(azm), r * np.sin(el)],
                axis=-1,
            )
        if n and cfg.sigma_doppler > 0:
            dopplers = dopplers + rng.normal(0.0, cfg.sigma_doppler, n)
        powers = rng.uniform(5.0, 30.0, n)

        floors = cfg.cov_floor
        covs = point_covariances(
            positions,
            max(cfg.sigma_range, floors[0]),
            max(cfg.sigma_azimuth, floors[1]),
            max(cfg.sigma_elevation, floors[2]),
        ) if n else np.zeros((0, 3, 3))
        scan = RadarScan(t, positions, dopplers, powers, covs)
        return scan, np.asarray(out_labels, dtype=object)


def generate_synthetic(cfg: SyntheticWorldConfig, seed: int):
    """Build a full synthetic sequence.

    Returns (scans, imu_samples, ground_truth, labels) with ground_truth a
    list of (timestamp, Pose) at the radar scan times and labels one string
    array per scan drawn from {ground, static, noise, dynamic}.
    """
    return SyntheticWorld(cfg, seed).generate()


# --- standalone smooth motion profiles (window-scale ground truth) ----------


@dataclass
class MotionProfile:
    """Band-limited body rates: omega(t) and v_body(t), vectorized in t."""

    omega_coeffs: np.ndarray    # (3, K, 3) -> amplitude, freq, phase per axis
    vel_coeffs: np.ndarray
    vel_offset: np.ndarray

    def omega(self, t):
        return _eval_bank(self.omega_coeffs, t)

    def v_body(self, t):
        return _eval_bank(self.vel_coeffs, t) + self.vel_offset


def _eval_bank(coeffs, t):
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape + (3,))
    for axis in range(3):
        for a, f, ph in coeffs[axis]:
            out[..., axis] += a * np.sin(2.0 * np.pi * f * t + ph)
    return out


def random_smooth_motion(
    seed,
    omega_amplitude=1.0,
    vel_amplitude=1.5,
    vel_offset=3.0,
    n_harmonics=3,
    max_frequency=2.0,
) -> MotionProfile:
    """Seeded band-limited angular-rate and body-velocity profile."""
    rng = np.random.default_rng(seed)

    def bank(amplitude):
        coeffs = np.zeros((3, n_harmonics, 3))
        for axis in range(3):
            a = rng.uniform(0.3, 1.0, n_harmonics)
            a *= amplitude / a.sum()
            f = rng.uniform(0.3, max_frequency, n_harmonics)
            ph = rng.uniform(0.0, 2.0 * np.pi, n_harmonics)
            coeffs[axis] = np.stack([a, f, ph], axis=-1)
        return coeffs

    w = bank(omega_amplitude)
    v = bank(vel_amplitude)
    offset = np.array([vel_offset, 0.0, 0.0]) + rng.uniform(-0.3, 0.3, 3)
    return MotionProfile(w, v, offset)


def sample_imu(profile: MotionProfile, times, sigma_gyro=0.0, seed=0):
    """Gyro samples of a motion profile at given times."""
    rng = np.random.default_rng(seed)
    out = []
    for t in np.asarray(times, dtype=float):
        w = profile.omega(t)
        if sigma_gyro > 0:
            w = w + rng.normal(0.0, sigma_gyro, 3)
        out.append(ImuSample(float(t), w))
    return out


def jittered_times(t0, t1, rate, jitter, seed):
    """Asynchronous clock: phase + jitter, strictly increasing in [t0, t1]."""
    rng = np.random.default_rng(seed)
    phase = rng.uniform(0.0, 1.0 / rate)
    times = np.arange(t0 + phase, t1, 1.0 / rate)
    if jitter > 0:
        times = times + rng.uniform(-jitter, jitter, len(times))
        times = np.sort(times)
    return times
