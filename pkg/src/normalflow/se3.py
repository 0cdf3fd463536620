"""Rigid-transform algebra used by the registration solver and tracker.

Conventions:
  * translations in millimeters, angles in radians,
  * a transform maps reference-frame coordinates into target-frame
    coordinates via x' = R x + t,
  * the parameter vector is (x, y, z, theta_x, theta_y, theta_z) with the
    rotation matrix assembled as R_y(theta_y) @ R_x(theta_x) @ R_z(theta_z);
    angles are reported in this z-x-y format throughout the package.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GimbalLockError

_GIMBAL_MARGIN = 1e-9


@dataclass(frozen=True)
class PoseParams:
    """Six-vector pose: millimeters for x/y/z, radians for the angles."""

    x: float
    y: float
    z: float
    theta_x: float
    theta_y: float
    theta_z: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.x, self.y, self.z, self.theta_x, self.theta_y, self.theta_z],
            dtype=float,
        )

    @classmethod
    def from_array(cls, values) -> "PoseParams":
        v = np.asarray(values, dtype=float)
        if v.shape != (6,):
            raise ValueError(f"pose parameters must be a 6-vector, got {v.shape}")
        return cls(*v.tolist())


@dataclass(frozen=True)
class RigidTransform:
    """SE(3) element: 3x3 rotation and 3-vector translation (mm)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float).reshape(3, 3).copy()
        t = np.asarray(self.translation, dtype=float).reshape(3).copy()
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    def matrix(self) -> np.ndarray:
        """4x4 homogeneous form."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform points of shape (..., 3)."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation.T + self.translation


def identity() -> RigidTransform:
    return RigidTransform(np.eye(3), np.zeros(3))


def _rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def params_to_transform(params: PoseParams) -> RigidTransform:
    """Assemble the transform for a parameter vector.

    The rotation applies the z angle first, then x, then y:
    R = R_y(theta_y) @ R_x(theta_x) @ R_z(theta_z).
    """
    arr = params.as_array()
    if not np.all(np.isfinite(arr)):
        raise ValueError("pose parameters must be finite")
    r = _rot_y(params.theta_y) @ _rot_x(params.theta_x) @ _rot_z(params.theta_z)
    return RigidTransform(r, arr[:3])


def transform_to_params(transform: RigidTransform) -> PoseParams:
    """Extract the z-x-y parameter vector from a transform.

    Raises GimbalLockError when the pitch entry |R[1,2]| reaches 1, where
    the z and y angles become indistinguishable.
    """
    r = transform.rotation
    sx = -r[1, 2]
    if abs(sx) >= 1.0 - _GIMBAL_MARGIN:
        raise GimbalLockError(f"theta_x at +/-90 degrees (sin = {sx:.12f})")
    theta_x = float(np.arcsin(sx))
    theta_z = float(np.arctan2(r[1, 0], r[1, 1]))
    theta_y = float(np.arctan2(r[0, 2], r[2, 2]))
    t = transform.translation
    return PoseParams(t[0], t[1], t[2], theta_x, theta_y, theta_z)


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Composition a . b: apply b first, then a."""
    return RigidTransform(
        a.rotation @ b.rotation, a.rotation @ b.translation + a.translation
    )


def invert(transform: RigidTransform) -> RigidTransform:
    rt = transform.rotation.T
    return RigidTransform(rt, -rt @ transform.translation)


def transform_distance(a: RigidTransform, b: RigidTransform) -> tuple[float, float]:
    """(geodesic rotation angle in radians, translation norm in mm)."""
    rel = a.rotation.T @ b.rotation
    cos_angle = np.clip((np.trace(rel) - 1.0) / 2.0, -1.0, 1.0)
    angle = float(np.arccos(cos_angle))
    trans = float(np.linalg.norm(a.translation - b.translation))
    return angle, trans


def rotation_generators() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Skew generators (J_x, J_y, J_z) of infinitesimal rotations."""
    jx = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])
    jy = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])
    jz = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    return jx, jy, jz


def _skew(w: np.ndarray) -> np.ndarray:
    x, y, z = w
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rotation_exp(w) -> np.ndarray:
    """Rodrigues formula: rotation matrix of an axis-angle 3-vector."""
    w = np.asarray(w, dtype=float)
    angle = float(np.linalg.norm(w))
    k = _skew(w)
    if angle < 1e-10:
        return np.eye(3) + k + 0.5 * (k @ k)
    k2 = k @ k
    return (
        np.eye(3)
        + (np.sin(angle) / angle) * k
        + ((1.0 - np.cos(angle)) / angle**2) * k2
    )


def rotation_log(r: np.ndarray) -> np.ndarray:
    """Axis-angle 3-vector of a rotation matrix (angle in [0, pi])."""
    cos_angle = np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0)
    angle = float(np.arccos(cos_angle))
    vee = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    if angle < 1e-10:
        return 0.5 * vee
    if np.pi - angle < 1e-6:
        # Near pi the vee part vanishes; recover the axis from R + I.
        m = 0.5 * (r + np.eye(3))
        axis = np.sqrt(np.clip(np.diag(m), 0.0, None))
        idx = int(np.argmax(axis))
        axis = m[:, idx] / max(axis[idx], 1e-12)
        axis = axis / np.linalg.norm(axis)
        # Fix sign using the largest off-diagonal antisymmetric entry.
        if np.dot(axis, vee) < 0:
            axis = -axis
        return angle * axis
    return (angle / (2.0 * np.sin(angle))) * vee


def _so3_v_matrix(w: np.ndarray) -> np.ndarray:
    angle = float(np.linalg.norm(w))
    k = _skew(w)
    k2 = k @ k
    if angle < 1e-10:
        return np.eye(3) + 0.5 * k + k2 / 6.0
    a2 = angle * angle
    return (
        np.eye(3)
        + ((1.0 - np.cos(angle)) / a2) * k
        + ((angle - np.sin(angle)) / (a2 * angle)) * k2
    )


def _so3_v_inverse(w: np.ndarray) -> np.ndarray:
    angle = float(np.linalg.norm(w))
    k = _skew(w)
    k2 = k @ k
    if angle < 1e-10:
        return np.eye(3) - 0.5 * k + k2 / 12.0
    a2 = angle * angle
    coeff = (1.0 - (angle * np.sin(angle)) / (2.0 * (1.0 - np.cos(angle)))) / a2
    return np.eye(3) - 0.5 * k + coeff * k2


def se3_exp(xi) -> RigidTransform:
    """Exponential map of a twist (rho, w): 6-vector -> transform."""
    xi = np.asarray(xi, dtype=float)
    rho, w = xi[:3], xi[3:]
    return RigidTransform(rotation_exp(w), _so3_v_matrix(w) @ rho)


def se3_log(transform: RigidTransform) -> np.ndarray:
    """Logarithm map: transform -> twist 6-vector (rho, w)."""
    w = rotation_log(transform.rotation)
    rho = _so3_v_inverse(w) @ transform.translation
    return np.concatenate([rho, w])


def is_valid_transform(transform: RigidTransform, tol: float = 1e-9) -> bool:
    """Check orthonormality and unit determinant of the rotation part."""
    r = transform.rotation
    if not np.all(np.isfinite(r)) or not np.all(np.isfinite(transform.translation)):
        return False
    if np.max(np.abs(r.T @ r - np.eye(3))) > tol:
        return False
    return abs(np.linalg.det(r) - 1.0) <= tol
