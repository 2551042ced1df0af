"""4D radar-inertial odometry: ground-aware noise filtering, continuous
velocity preintegration, cluster-weighted scan matching, and pose-graph
fusion, plus a synthetic world generator and an evaluation harness."""

from rio4d.geometry import Pose, se3_compose, se3_inverse, so3_exp, so3_log, right_jacobian

__all__ = [
    "Pose",
    "se3_compose",
    "se3_inverse",
    "so3_exp",
    "so3_log",
    "right_jacobian",
]

__version__ = "0.1.0"
