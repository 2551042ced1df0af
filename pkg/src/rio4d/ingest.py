"""Sensor data types and file loaders.

File formats:

* Radar manifest: text file, one ``timestamp filepath`` pair per line;
  filepaths are resolved relative to the manifest's directory.
* Scan file: whitespace-separated text, one point per line
  ``x y z doppler power`` (extra trailing columns are ignored).
* Single-file radar log: ``t x y z doppler power`` per line, points
  grouped by identical timestamp, groups in ascending time order.
* IMU log: ``t wx wy wz ax ay az`` per line.
* Ground truth: TUM format ``t tx ty tz qx qy qz qw``.

Doppler sign convention: positive = target receding from the sensor, so a
static scatterer at unit bearing b seen from a platform moving with body
velocity v measures doppler = -(b . v).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from rio4d.geometry import Pose, check_covariance


class DataFormatError(ValueError):
    """Malformed record; message carries file, line and field."""


class SequenceOrderError(ValueError):
    """Timestamps are not strictly increasing."""


@dataclass
class RadarPoint:
    position: np.ndarray          # (3,) m, sensor frame
    doppler: float                # m/s, positive = receding
    power: float                  # dB
    covariance: np.ndarray        # (3, 3) m^2

    def validate(self):
        if np.linalg.norm(self.position) <= 0.0:
            raise ValueError("radar point at sensor origin")
        check_covariance(self.covariance, "radar point covariance")


@dataclass
class RadarScan:
    """One radar frame stored as arrays over points."""

    timestamp: float
    positions: np.ndarray         # (N, 3)
    dopplers: np.ndarray          # (N,)
    powers: np.ndarray            # (N,)
    covariances: np.ndarray       # (N, 3, 3)

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        self.dopplers = np.asarray(self.dopplers, dtype=float).reshape(-1)
        self.powers = np.asarray(self.powers, dtype=float).reshape(-1)
        self.covariances = np.asarray(self.covariances, dtype=float).reshape(-1, 3, 3)

    def __len__(self):
        return self.positions.shape[0]

    def point(self, i) -> RadarPoint:
        return RadarPoint(
            self.positions[i], float(self.dopplers[i]), float(self.powers[i]), self.covariances[i]
        )

    def ranges(self):
        return np.linalg.norm(self.positions, axis=1)

    def bearings(self):
        r = self.ranges()
        return self.positions / r[:, None]

    def select(self, mask) -> "RadarScan":
        return RadarScan(
            self.timestamp,
            self.positions[mask],
            self.dopplers[mask],
            self.powers[mask],
            self.covariances[mask],
        )

    @classmethod
    def from_points(cls, timestamp, points):
        return cls(
            timestamp,
            np.array([p.position for p in points], dtype=float).reshape(-1, 3),
            np.array([p.doppler for p in points], dtype=float),
            np.array([p.power for p in points], dtype=float),
            np.array([p.covariance for p in points], dtype=float).reshape(-1, 3, 3),
        )


@dataclass
class ImuSample:
    timestamp: float
    angular_velocity: np.ndarray             # (3,) rad/s
    linear_acceleration: np.ndarray = field(  # (3,) m/s^2, stored but unused
        default_factory=lambda: np.zeros(3)
    )

    def __post_init__(self):
        self.angular_velocity = np.asarray(self.angular_velocity, dtype=float).reshape(3)
        self.linear_acceleration = np.asarray(self.linear_acceleration, dtype=float).reshape(3)


_RADAR_FIELDS = ("x", "y", "z", "doppler", "power")
_IMU_FIELDS = ("t", "wx", "wy", "wz", "ax", "ay", "az")


def _parse_floats(tokens, fields, path, lineno):
    if len(tokens) < len(fields):
        missing = fields[len(tokens)]
        raise DataFormatError(f"{path}:{lineno}: missing field '{missing}'")
    out = []
    for name, tok in zip(fields, tokens):
        try:
            out.append(float(tok))
        except ValueError:
            raise DataFormatError(
                f"{path}:{lineno}: field '{name}' is not numeric: {tok!r}"
            ) from None
    return out


def _data_lines(path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            yield lineno, line


def _default_point_covariances(positions, sensor_noise):
    from rio4d.ground import point_covariance  # deferred: ground imports this module

    sigma_r, sigma_az, sigma_el = sensor_noise
    return np.stack([point_covariance(p, sigma_r, sigma_az, sigma_el) for p in positions])


def _apply_extrinsic(scan: RadarScan, extrinsic: Pose) -> RadarScan:
    R = extrinsic.R
    return RadarScan(
        scan.timestamp,
        scan.positions @ R.T + extrinsic.t,
        scan.dopplers,
        scan.powers,
        np.einsum("ij,njk,lk->nil", R, scan.covariances, R),
    )


def load_scan_file(path, timestamp, sensor_noise=(0.1, 0.01, 0.01)):
    """Read one ``x y z doppler power`` point file into a RadarScan."""
    rows = [_parse_floats(line.split(), _RADAR_FIELDS, path, lineno) for lineno, line in _data_lines(path)]
    if not rows:
        raise DataFormatError(f"{path}: scan file holds no points")
    arr = np.asarray(rows, dtype=float)
    positions = arr[:, :3]
    if np.any(np.linalg.norm(positions, axis=1) <= 0.0):
        raise DataFormatError(f"{path}: point with zero range")
    covs = _default_point_covariances(positions, sensor_noise)
    return RadarScan(float(timestamp), positions, arr[:, 3], arr[:, 4], covs)


def load_radar_sequence(path, format_spec=None, sensor_noise=(0.1, 0.01, 0.01), extrinsic=None):
    """Load radar scans from a manifest directory or a single log file.

    format_spec: "manifest", "single-file", or None to pick by path type.
    sensor_noise: (sigma_range m, sigma_azimuth rad, sigma_elevation rad)
    used to build per-point covariances, which these formats do not carry.
    extrinsic: optional radar-to-body Pose applied to every point.
    """
    if format_spec is None:
        format_spec = "manifest" if os.path.isdir(path) else "single-file"
    if format_spec == "manifest":
        scans = _load_manifest_dir(path, sensor_noise)
    elif format_spec == "single-file":
        scans = _load_single_log(path, sensor_noise)
    else:
        raise ValueError(f"unknown radar format: {format_spec!r}")
    if extrinsic is not None:
        scans = [_apply_extrinsic(s, extrinsic) for s in scans]
    return scans


def _load_manifest_dir(path, sensor_noise):
    manifest = os.path.join(path, "manifest.txt") if os.path.isdir(path) else path
    base = os.path.dirname(manifest)
    entries = []
    for lineno, line in _data_lines(manifest):
        tokens = line.split()
        if len(tokens) < 2:
            raise DataFormatError(f"{manifest}:{lineno}: expected 'timestamp filepath'")
        try:
            t = float(tokens[0])
        except ValueError:
            raise DataFormatError(
                f"{manifest}:{lineno}: field 'timestamp' is not numeric: {tokens[0]!r}"
            ) from None
        entries.append((t, os.path.join(base, tokens[1]), lineno))
    if not entries:
        raise DataFormatError(f"{manifest}: empty manifest")
    for (t0, _, l0), (t1, _, l1) in zip(entries, entries[1:]):
        if t1 <= t0:
            raise SequenceOrderError(
                f"{manifest}:{l1}: timestamp {t1!r} not after previous {t0!r}"
            )
    return [load_scan_file(p, t, sensor_noise) for t, p, _ in entries]


def _load_single_log(path, sensor_noise):
    groups = []  # (t, list_of_rows)
    for lineno, line in _data_lines(path):
        vals = _parse_floats(line.split(), ("t",) + _RADAR_FIELDS, path, lineno)
        t, row = vals[0], vals[1:]
        if groups and t == groups[-1][0]:
            groups[-1][1].append(row)
        else:
            if groups and t < groups[-1][0]:
                raise SequenceOrderError(
                    f"{path}:{lineno}: timestamp {t!r} before previous {groups[-1][0]!r}"
                )
            groups.append((t, [row]))
    if not groups:
        raise DataFormatError(f"{path}: empty radar log")
    scans = []
    for t, rows in groups:
        arr = np.asarray(rows, dtype=float)
        covs = _default_point_covariances(arr[:, :3], sensor_noise)
        scans.append(RadarScan(t, arr[:, :3], arr[:, 3], arr[:, 4], covs))
    return scans


def load_imu_sequence(path):
    """Load an IMU log (``t wx wy wz ax ay az`` per line)."""
    samples = []
    for lineno, line in _data_lines(path):
        vals = _parse_floats(line.split(), _IMU_FIELDS, path, lineno)
        if samples and vals[0] <= samples[-1].timestamp:
            raise SequenceOrderError(
                f"{path}:{lineno}: timestamp {vals[0]!r} not after previous "
                f"{samples[-1].timestamp!r}"
            )
        samples.append(ImuSample(vals[0], np.array(vals[1:4]), np.array(vals[4:7])))
    if not samples:
        raise DataFormatError(f"{path}: empty IMU log")
    return samples


def load_ground_truth(path):
    """Load a TUM-format trajectory as a list of (timestamp, Pose)."""
    from rio4d.evaluate import read_tum

    traj = read_tum(path)
    return [(t, p) for t, p in zip(traj.times, traj.poses())]
