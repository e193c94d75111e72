"""Online robot-to-volume registration from the estimated yaw.

The robot base Z axis is anti-parallel to the volume's optical-depth axis and
the needle is rigidly mounted, so a single yaw angle fixes the whole axes map:

    v_z = -k_hat
    v_y = (sin(theta_z), cos(theta_z), 0)
    v_x = v_y x v_z

Stacking the columns gives C; volume translations map to robot commands via
T_r = C^-1 T_v, and since C is orthonormal the inverse is the transpose.
The yaw is re-estimated and C rebuilt at every acquisition; nothing is cached
across scans.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class RegistrationMatrix:
    """Yaw-only axes map between the robot and volume frames."""

    matrix: np.ndarray
    theta_z: float

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (3, 3):
            raise ValueError("registration matrix must be 3x3")
        if np.max(np.abs(m.T @ m - np.eye(3))) > _ORTHO_TOL:
            raise ValueError("registration columns must be orthonormal")
        object.__setattr__(self, "matrix", m)

    @property
    def v_x(self) -> np.ndarray:
        return self.matrix[:, 0]

    @property
    def v_y(self) -> np.ndarray:
        return self.matrix[:, 1]

    @property
    def v_z(self) -> np.ndarray:
        return self.matrix[:, 2]


def build_registration(theta_z: float) -> RegistrationMatrix:
    """Assemble C for the given yaw."""
    if not np.isfinite(theta_z):
        raise ValueError("theta_z must be finite")
    v_z = np.array([0.0, 0.0, -1.0])
    v_y = np.array([np.sin(theta_z), np.cos(theta_z), 0.0])
    v_x = np.cross(v_y, v_z)
    return RegistrationMatrix(matrix=np.column_stack([v_x, v_y, v_z]), theta_z=float(theta_z))


def volume_to_robot(reg: RegistrationMatrix, t_volume_um) -> np.ndarray:
    """Map a volume-frame translation to a robot command (transpose, not inverse)."""
    t = np.asarray(t_volume_um, dtype=np.float64)
    return reg.matrix.T @ t


def robot_to_volume(reg: RegistrationMatrix, t_robot_um) -> np.ndarray:
    t = np.asarray(t_robot_um, dtype=np.float64)
    return reg.matrix @ t
