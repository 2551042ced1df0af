"""Independent reference implementations used only by the test suite.

Everything here is deliberately written against the math, not against the
package internals: fine-step motion integration, brute-force geometry
checks, a naive global plane baseline, and finite-difference Jacobians.
"""

import numpy as np

from rio4d.geometry import so3_exp


def integrate_profile(omega_fn, v_body_fn, t0, t1, dt=1e-4):
    """Fine-step integration of body rates into a relative pose.

    Midpoint stepping on the rotation (dR/dt = R [w]x) and midpoint
    quadrature on the translation (dp/dt = R v_body).  Returns (R, p) of
    the frame at t1 expressed in the frame at t0.
    """
    n = max(1, int(np.ceil((t1 - t0) / dt)))
    h = (t1 - t0) / n
    t_mid = t0 + (np.arange(n) + 0.5) * h
    w_mid = np.atleast_2d(omega_fn(t_mid))
    v_mid = np.atleast_2d(v_body_fn(t_mid))
    R = np.eye(3)
    p = np.zeros(3)
    for k in range(n):
        R_half = R @ so3_exp(0.5 * h * w_mid[k])
        p = p + h * (R_half @ v_mid[k])
        R = R @ so3_exp(h * w_mid[k])
    return R, p


def zero_order_hold_pose(imu_samples, ego_velocities, t0, t1):
    """Discrete dead reckoning holding the latest gyro / velocity sample.

    Reference implementation of the piecewise-constant propagation used as
    the comparison scheme; independent of the package's own fallback path.
    """
    events = sorted(
        [(s.timestamp, "w", np.asarray(s.angular_velocity, dtype=float)) for s in imu_samples]
        + [(v.timestamp, "v", np.asarray(v.v, dtype=float)) for v in ego_velocities]
    )
    R = np.eye(3)
    p = np.zeros(3)
    w = None
    v = None
    # prime with the latest sample at or before t0
    for t, kind, val in events:
        if t <= t0:
            if kind == "w":
                w = val
            else:
                v = val
    t_prev = t0
    for t, kind, val in events:
        if t <= t0:
            continue
        if t > t1:
            break
        dt = t - t_prev
        if dt > 0 and w is not None:
            if v is not None:
                p = p + R @ v * dt
            R = R @ so3_exp(w * dt)
        elif dt > 0 and v is not None:
            p = p + R @ v * dt
        if kind == "w":
            w = val
        else:
            v = val
        t_prev = t
    dt = t1 - t_prev
    if dt > 0:
        if v is not None:
            p = p + R @ v * dt
        if w is not None:
            R = R @ so3_exp(w * dt)
    return R, p


def brute_force_density_clusters(points, eps, min_pts):
    """O(n^2) DBSCAN by literal density reachability.

    Returns labels: -1 for noise, otherwise cluster ids ordered by the
    lowest point index in the cluster.
    """
    P = np.asarray(points, dtype=float)
    n = len(P)
    d2 = np.sum((P[:, None, :] - P[None, :, :]) ** 2, axis=-1)
    neighbors = [np.flatnonzero(d2[i] <= eps * eps) for i in range(n)]
    core = np.array([len(nb) >= min_pts for nb in neighbors])
    labels = np.full(n, -1, dtype=int)
    cluster = 0
    for i in range(n):
        if labels[i] != -1 or not core[i]:
            continue
        stack = [i]
        labels[i] = cluster
        while stack:
            j = stack.pop()
            if not core[j]:
                continue
            for k in neighbors[j]:
                if labels[k] == -1:
                    labels[k] = cluster
                    stack.append(k)
        cluster += 1
    return labels


def global_ransac_plane(points, covariances, eps_d, iters=300, seed=0):
    """Single global plane by RANSAC; membership by the same Mahalanobis
    threshold the zone-based method uses.  Test-only baseline."""
    P = np.asarray(points, dtype=float)
    S = np.asarray(covariances, dtype=float).reshape(-1, 3, 3)
    rng = np.random.default_rng(seed)
    n = len(P)
    best_mask = np.zeros(n, dtype=bool)
    best = -1
    for _ in range(iters):
        idx = rng.choice(n, 3, replace=False)
        a, b, c = P[idx]
        nrm = np.cross(b - a, c - a)
        norm = np.linalg.norm(nrm)
        if norm < 1e-9:
            continue
        nrm = nrm / norm
        if nrm[2] < 0:
            nrm = -nrm
        d = -nrm @ a
        sd = np.abs(P @ nrm + d)
        sig = np.sqrt(np.einsum("i,nij,j->n", nrm, S, nrm))
        mask = sd / np.maximum(sig, 1e-300) < eps_d
        if mask.sum() > best:
            best = int(mask.sum())
            best_mask = mask
            best_plane = (nrm, d)
    return best_mask, best_plane


def fd_jacobian(fun, x, h=1e-6):
    """Central-difference Jacobian of fun: R^n -> R^m."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(fun(x))
    J = np.zeros((f0.size, x.size))
    for k in range(x.size):
        d = np.zeros_like(x)
        d[k] = h
        J[:, k] = (np.asarray(fun(x + d)) - np.asarray(fun(x - d))) / (2 * h)
    return J


def pose_errors(T_est, T_true):
    """(translation error norm, rotation angle error) between two poses."""
    E = T_true.inverse().compose(T_est)
    ang = np.linalg.norm(E.rotation_vector())
    return float(np.linalg.norm(E.t)), float(ang)
