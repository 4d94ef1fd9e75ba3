"""Quaternion helpers and a gradient-descent orientation filter (IMU only, no magnetometer).

Quaternions are ``(w, x, y, z)`` and rotate sensor-frame vectors into the world
frame, whose z axis points up.
"""

from __future__ import annotations

import math

import numpy as np

DEG = math.pi / 180.0


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrices for an ``(..., 4)`` array of unit quaternions."""
    q = np.asarray(q, dtype=float)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    r = np.empty(q.shape[:-1] + (3, 3))
    r[..., 0, 0] = 1 - 2 * (y * y + z * z)
    r[..., 0, 1] = 2 * (x * y - w * z)
    r[..., 0, 2] = 2 * (x * z + w * y)
    r[..., 1, 0] = 2 * (x * y + w * z)
    r[..., 1, 1] = 1 - 2 * (x * x + z * z)
    r[..., 1, 2] = 2 * (y * z - w * x)
    r[..., 2, 0] = 2 * (x * z - w * y)
    r[..., 2, 1] = 2 * (y * z + w * x)
    r[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return r


def rotate_to_world(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("nij,nj->ni", quat_to_matrix(q), v)


def axis_angle_quat(axis: np.ndarray, angle: np.ndarray) -> np.ndarray:
    """Quaternions for rotations of ``angle`` (rad, array) about a fixed unit ``axis``."""
    angle = np.asarray(angle, dtype=float)
    half = 0.5 * angle
    s = np.sin(half)
    return np.stack([np.cos(half), axis[0] * s, axis[1] * s, axis[2] * s], axis=-1)


def quat_from_gravity(accel: tuple[float, float, float]) -> tuple[float, float, float, float]:
    """Shortest-arc quaternion mapping the measured specific force onto world +z."""
    ax, ay, az = accel
    n = math.sqrt(ax * ax + ay * ay + az * az)
    if n == 0.0:
        return (1.0, 0.0, 0.0, 0.0)
    ax, ay, az = ax / n, ay / n, az / n
    # cross(a, z) and dot(a, z)
    cx, cy, cz = ay, -ax, 0.0
    d = az
    if d < -1.0 + 1e-12:
        return (0.0, 1.0, 0.0, 0.0)
    w = 1.0 + d
    norm = math.sqrt(w * w + cx * cx + cy * cy + cz * cz)
    return (w / norm, cx / norm, cy / norm, cz / norm)


class OrientationFilter:
    """Gradient-descent complementary filter with gain ``beta`` (rad/s).

    Gyro propagation is corrected by a normalized gradient step that pulls the
    predicted gravity direction toward the accelerometer reading.
    """

    def __init__(self, beta: float = 0.1, q0: tuple[float, float, float, float] | None = None):
        self.beta = beta
        self.q = q0

    def update(self, accel, gyro_dps, dt: float) -> tuple[float, float, float, float]:
        if self.q is None:
            self.q = quat_from_gravity(accel)
            return self.q
        w, x, y, z = self.q
        gx, gy, gz = (g * DEG for g in gyro_dps)
        # q_dot = 0.5 * q (x) (0, omega)
        dw = 0.5 * (-x * gx - y * gy - z * gz)
        dx = 0.5 * (w * gx + y * gz - z * gy)
        dy = 0.5 * (w * gy - x * gz + z * gx)
        dz = 0.5 * (w * gz + x * gy - y * gx)

        ax, ay, az = accel
        an = math.sqrt(ax * ax + ay * ay + az * az)
        if an > 0.0:
            ax, ay, az = ax / an, ay / an, az / an
            f1 = 2 * (x * z - w * y) - ax
            f2 = 2 * (y * z + w * x) - ay
            f3 = 1 - 2 * (x * x + y * y) - az
            sw = -2 * y * f1 + 2 * x * f2
            sx = 2 * z * f1 + 2 * w * f2 - 4 * x * f3
            sy = -2 * w * f1 + 2 * z * f2 - 4 * y * f3
            sz = 2 * x * f1 + 2 * y * f2
            sn = math.sqrt(sw * sw + sx * sx + sy * sy + sz * sz)
            if sn > 0.0:
                dw -= self.beta * sw / sn
                dx -= self.beta * sx / sn
                dy -= self.beta * sy / sn
                dz -= self.beta * sz / sn

        w, x, y, z = w + dw * dt, x + dx * dt, y + dy * dt, z + dz * dt
        n = math.sqrt(w * w + x * x + y * y + z * z)
        self.q = (w / n, x / n, y / n, z / n)
        return self.q
