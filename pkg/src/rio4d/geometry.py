"""SO(3)/SE(3) primitives shared by every stage of the odometry pipeline.

Conventions used throughout the package:

* Rotations are stored as unit quaternions in ``[x, y, z, w]`` order
  (scalar last, matching TUM trajectory files); matrices are built on
  demand.
* A ``Pose`` maps points from its child frame into its parent frame:
  ``p_parent = R @ p_child + t``.
* SE(3) tangent vectors are ordered ``[rho, theta]`` (translation block
  first, rotation block second).  6x6 covariances follow the same order.
* Angular velocity follows the body convention ``dR/dt = R [w]x``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_EPS_ANGLE = 1e-6  # below this, switch to Taylor expansions


def skew(v):
    """3x3 skew-symmetric matrix [v]x such that [v]x @ u = v x u."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def unskew(m):
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def so3_exp(theta):
    """Rodrigues formula; Taylor series below the small-angle threshold."""
    theta = np.asarray(theta, dtype=float)
    angle = np.linalg.norm(theta)
    K = skew(theta)
    if angle < _EPS_ANGLE:
        return np.eye(3) + K + 0.5 * (K @ K)
    s = np.sin(angle) / angle
    c = (1.0 - np.cos(angle)) / (angle * angle)
    return np.eye(3) + s * K + c * (K @ K)


def so3_log(R):
    """Rotation vector of R, branch with norm <= pi."""
    R = np.asarray(R, dtype=float)
    cos_angle = np.clip(0.5 * (np.trace(R) - 1.0), -1.0, 1.0)
    angle = np.arccos(cos_angle)
    w = 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if angle < _EPS_ANGLE:
        # log(R) ~ vee(R - R^T)/2 * (1 + angle^2/6)
        return w * (1.0 + angle * angle / 6.0)
    if np.pi - angle < 1e-6:
        # Near pi the off-diagonal difference vanishes; recover the axis
        # from the dominant diagonal entry of R + I.
        A = R + np.eye(3)
        k = int(np.argmax(np.diag(A)))
        axis = A[:, k] / np.sqrt(max(A[k, k] * 2.0, 1e-300))
        axis = axis / np.linalg.norm(axis)
        # Fix the sign so that it agrees with vee(R - R^T).
        if np.dot(axis, w) < 0.0:
            axis = -axis
        return axis * angle
    return w * (angle / np.sin(angle))


def right_jacobian(theta):
    """Right Jacobian J_r of SO(3): exp(theta + d) ~ exp(theta) exp(J_r d).

    Relates rotation-vector rates to body angular velocity,
    w = J_r(theta) dtheta/dt.
    """
    theta = np.asarray(theta, dtype=float)
    angle = np.linalg.norm(theta)
    K = skew(theta)
    if angle < _EPS_ANGLE:
        return np.eye(3) - 0.5 * K + (1.0 / 6.0) * (K @ K)
    a2 = angle * angle
    c1 = (1.0 - np.cos(angle)) / a2
    c2 = (angle - np.sin(angle)) / (a2 * angle)
    return np.eye(3) - c1 * K + c2 * (K @ K)


def right_jacobian_inv(theta):
    theta = np.asarray(theta, dtype=float)
    angle = np.linalg.norm(theta)
    K = skew(theta)
    if angle < _EPS_ANGLE:
        return np.eye(3) + 0.5 * K + (1.0 / 12.0) * (K @ K)
    a2 = angle * angle
    c = 1.0 / a2 - (1.0 + np.cos(angle)) / (2.0 * angle * np.sin(angle))
    return np.eye(3) + 0.5 * K + c * (K @ K)


def so3_left_jacobian(theta):
    """Left Jacobian of SO(3); also the V matrix of the SE(3) exponential."""
    theta = np.asarray(theta, dtype=float)
    angle = np.linalg.norm(theta)
    K = skew(theta)
    if angle < _EPS_ANGLE:
        return np.eye(3) + 0.5 * K + (1.0 / 6.0) * (K @ K)
    a2 = angle * angle
    c1 = (1.0 - np.cos(angle)) / a2
    c2 = (angle - np.sin(angle)) / (a2 * angle)
    return np.eye(3) + c1 * K + c2 * (K @ K)


def so3_left_jacobian_inv(theta):
    theta = np.asarray(theta, dtype=float)
    angle = np.linalg.norm(theta)
    K = skew(theta)
    if angle < _EPS_ANGLE:
        return np.eye(3) - 0.5 * K + (1.0 / 12.0) * (K @ K)
    a2 = angle * angle
    c = 1.0 / a2 - (1.0 + np.cos(angle)) / (2.0 * angle * np.sin(angle))
    return np.eye(3) - 0.5 * K + c * (K @ K)


# --- quaternion helpers (x, y, z, w order) ---------------------------------


def quat_normalize(q):
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n == 0.0:
        raise ValueError("zero quaternion")
    q = q / n
    # Canonical sign: scalar part non-negative, so equal rotations compare equal.
    if q[3] < 0.0:
        q = -q
    return q


def quat_mul(q1, q2):
    x1, y1, z1, w1 = q1
    x2, y2, z2, w2 = q2
    return np.array(
        [
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        ]
    )


def quat_conj(q):
    return np.array([-q[0], -q[1], -q[2], q[3]])


def quat_to_mat(q):
    x, y, z, w = q
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    return np.array(
        [
            [1 - 2 * (yy + zz), 2 * (xy - wz), 2 * (xz + wy)],
            [2 * (xy + wz), 1 - 2 * (xx + zz), 2 * (yz - wx)],
            [2 * (xz - wy), 2 * (yz + wx), 1 - 2 * (xx + yy)],
        ]
    )


def mat_to_quat(R):
    """Shepperd's method: pick the largest of the four candidates."""
    R = np.asarray(R, dtype=float)
    t = np.trace(R)
    if t > 0.0:
        s = np.sqrt(t + 1.0) * 2.0
        q = np.array(
            [(R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s, 0.25 * s]
        )
    else:
        i = int(np.argmax(np.diag(R)))
        if i == 0:
            s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
            q = np.array(
                [0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s, (R[2, 1] - R[1, 2]) / s]
            )
        elif i == 1:
            s = np.sqrt(1.0 - R[0, 0] + R[1, 1] - R[2, 2]) * 2.0
            q = np.array(
                [(R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s, (R[0, 2] - R[2, 0]) / s]
            )
        else:
            s = np.sqrt(1.0 - R[0, 0] - R[1, 1] + R[2, 2]) * 2.0
            q = np.array(
                [(R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s, (R[1, 0] - R[0, 1]) / s]
            )
    return quat_normalize(q)


# --- SE(3) ------------------------------------------------------------------


@dataclass
class Pose:
    """Rigid transform: p_parent = R @ p_child + t.

    q is a unit quaternion [x, y, z, w]; t is a 3-vector in meters.
    """

    q: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 0.0, 1.0]))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.q = quat_normalize(np.asarray(self.q, dtype=float))
        self.t = np.asarray(self.t, dtype=float).reshape(3).copy()

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_rt(cls, R, t):
        return cls(mat_to_quat(R), t)

    @classmethod
    def from_matrix(cls, T):
        T = np.asarray(T, dtype=float)
        return cls(mat_to_quat(T[:3, :3]), T[:3, 3])

    @property
    def R(self):
        return quat_to_mat(self.q)

    def matrix(self):
        T = np.eye(4)
        T[:3, :3] = self.R
        T[:3, 3] = self.t
        return T

    def compose(self, other: "Pose") -> "Pose":
        return Pose(quat_mul(self.q, other.q), self.R @ other.t + self.t)

    def inverse(self) -> "Pose":
        qi = quat_conj(self.q)
        return Pose(qi, -(quat_to_mat(qi) @ self.t))

    def apply(self, points):
        """Transform one point (3,) or a stack of points (N, 3)."""
        p = np.asarray(points, dtype=float)
        if p.ndim == 1:
            return self.R @ p + self.t
        return p @ self.R.T + self.t

    def rotation_vector(self):
        return so3_log(self.R)

    def log(self):
        """SE(3) logarithm, tangent ordered [rho, theta]."""
        theta = so3_log(self.R)
        rho = so3_left_jacobian_inv(theta) @ self.t
        return np.concatenate([rho, theta])

    @classmethod
    def exp(cls, xi):
        xi = np.asarray(xi, dtype=float)
        rho, theta = xi[:3], xi[3:]
        R = so3_exp(theta)
        t = so3_left_jacobian(theta) @ rho
        return cls.from_rt(R, t)

    def __repr__(self):
        return f"Pose(q={np.round(self.q, 6)}, t={np.round(self.t, 6)})"


def se3_compose(a: Pose, b: Pose) -> Pose:
    return a.compose(b)


def se3_inverse(a: Pose) -> Pose:
    return a.inverse()


def se3_adjoint(pose: Pose):
    """6x6 adjoint for [rho, theta] tangents: T exp(xi) T^-1 = exp(Ad_T xi)."""
    R = pose.R
    A = np.zeros((6, 6))
    A[:3, :3] = R
    A[:3, 3:] = skew(pose.t) @ R
    A[3:, 3:] = R
    return A


def _se3_Q(rho, theta):
    """Coupling block of the SE(3) left Jacobian (translation-rotation)."""
    angle = np.linalg.norm(theta)
    P = skew(rho)
    K = skew(theta)
    KP = K @ P
    PK = P @ K
    KPK = KP @ K
    if angle < 1e-4:
        c1 = 1.0 / 6.0
        c2 = 1.0 / 24.0
        c3 = 1.0 / 120.0
    else:
        a2 = angle * angle
        a4 = a2 * a2
        c1 = (angle - np.sin(angle)) / (a2 * angle)
        c2 = (a2 + 2.0 * np.cos(angle) - 2.0) / (2.0 * a4)
        c3 = (2.0 * angle - 3.0 * np.sin(angle) + angle * np.cos(angle)) / (2.0 * a4 * angle)
    return (
        0.5 * P
        + c1 * (KP + PK + KPK)
        + c2 * (K @ KP + PK @ K - 3.0 * KPK)
        + c3 * (KPK @ K + K @ KPK)
    )


def se3_left_jacobian(xi):
    xi = np.asarray(xi, dtype=float)
    rho, theta = xi[:3], xi[3:]
    J = so3_left_jacobian(theta)
    Q = _se3_Q(rho, theta)
    out = np.zeros((6, 6))
    out[:3, :3] = J
    out[:3, 3:] = Q
    out[3:, 3:] = J
    return out


def se3_right_jacobian_inv(xi):
    """Inverse right Jacobian of SE(3): log(exp(xi) exp(d)) ~ xi + Jr^-1 d."""
    xi = np.asarray(xi, dtype=float)
    # J_r(xi) = J_l(-xi)
    rho, theta = -xi[:3], -xi[3:]
    Jinv = so3_left_jacobian_inv(theta)
    Q = _se3_Q(rho, theta)
    out = np.zeros((6, 6))
    out[:3, :3] = Jinv
    out[:3, 3:] = -Jinv @ Q @ Jinv
    out[3:, 3:] = Jinv
    return out


# --- covariance hygiene ------------------------------------------------------


def check_covariance(S, name="covariance", sym_tol=1e-12, eig_floor=-1e-10):
    """Validate symmetry and positive semi-definiteness of a covariance."""
    S = np.asarray(S, dtype=float)
    scale = max(1.0, float(np.max(np.abs(S))))
    if np.max(np.abs(S - S.T)) > sym_tol * scale:
        raise ValueError(f"{name} is not symmetric")
    w = np.linalg.eigvalsh(0.5 * (S + S.T))
    if w.min() < eig_floor * scale:
        raise ValueError(f"{name} has negative eigenvalue {w.min():g}")
    return S


def symmetrize(S):
    return 0.5 * (np.asarray(S, dtype=float) + np.asarray(S, dtype=float).T)
