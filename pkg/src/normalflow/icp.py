"""Point-to-plane ICP over tactile-derived point clouds.

The comparison baseline: clouds come from integrated height maps, so
they inherit whatever distortion the integration accumulated, while the
per-point normals stay relatively accurate. Correspondences are nearest
neighbors in the destination cloud gated by distance, and each iteration
minimizes the projection of point residuals onto destination normals
with the usual small-angle linearization.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateSystemError, EmptyCloudError
from .maps import TactileFrame
from .se3 import RigidTransform, compose, rotation_exp, transform_to_params
from .solver import RegistrationResult


class TactilePointCloud:
    """Contact-pixel points (mm) with unit normals, both (N, 3)."""

    def __init__(self, points: np.ndarray, normals: np.ndarray):
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        normals = np.asarray(normals, dtype=float).reshape(-1, 3)
        if len(points) != len(normals):
            raise ValueError("points and normals must have equal length")
        self.points = points
        self.normals = normals

    def __len__(self) -> int:
        return len(self.points)


def frame_to_cloud(frame: TactileFrame) -> TactilePointCloud:
    """One point (u, v, z) per contact pixel with its normal."""
    ii, jj = np.nonzero(frame.mask)
    if ii.size == 0:
        raise EmptyCloudError("contact mask is empty")
    pitch = frame.geometry.pixel_pitch
    points = np.stack([jj * pitch, ii * pitch, frame.heights[ii, jj]], axis=-1)
    return TactilePointCloud(points, frame.normals[ii, jj])


def subsample_cloud(cloud: TactilePointCloud, n: int, seed: int) -> TactilePointCloud:
    """Seeded point budget matching the registration solver's sampler."""
    if len(cloud) <= n:
        return cloud
    rng = np.random.default_rng(seed)
    pick = np.sort(rng.choice(len(cloud), size=n, replace=False))
    return TactilePointCloud(cloud.points[pick], cloud.normals[pick])


def icp_point_to_plane(
    src: TactilePointCloud,
    dst: TactilePointCloud,
    init: RigidTransform | None = None,
    max_iterations: int = 50,
    tolerance: float = 1e-6,
    max_correspondence: float = 1.0,
    condition_limit: float = 1e12,
) -> RegistrationResult:
    """Estimate the transform moving src onto dst.

    Raises EmptyCloudError for empty inputs and DegenerateSystemError
    when the 6x6 normal equations are singular or the correspondence set
    cannot constrain them (the coplanar / low-texture failure mode).
    """
    if len(src) == 0 or len(dst) == 0:
        raise EmptyCloudError("ICP requires non-empty clouds")
    transform = init if init is not None else RigidTransform(np.eye(3), np.zeros(3))
    tree = cKDTree(dst.points)

    iterations = 0
    converged = False
    cond = float("nan")
    cost = float("nan")
    pairs = 0
    for _ in range(max_iterations):
        moved = src.points @ transform.rotation.T + transform.translation
        dist, idx = tree.query(moved)
        keep = dist < max_correspondence
        pairs = int(keep.sum())
        if pairs < 6:
            raise DegenerateSystemError(
                f"only {pairs} gated correspondences"
            )
        p = moved[keep]
        qn = dst.normals[idx[keep]]
        qp = dst.points[idx[keep]]
        residual = np.sum((p - qp) * qn, axis=1)
        cost = float(np.mean(residual**2))
        rows = np.concatenate([qn, np.cross(p, qn)], axis=1)  # [n | p x n]
        hess = rows.T @ rows
        cond = float(np.linalg.cond(hess))
        if not np.isfinite(cond) or cond > condition_limit:
            raise DegenerateSystemError(
                f"normal equations condition {cond:.3e} exceeds {condition_limit:.1e}"
            )
        delta = np.linalg.solve(hess, -rows.T @ residual)
        increment = RigidTransform(rotation_exp(delta[3:]), delta[:3])
        transform = compose(increment, transform)
        iterations += 1
        if np.linalg.norm(delta) < tolerance:
            converged = True
            break

    return RegistrationResult(
        transform=transform,
        params=transform_to_params(transform),
        iterations=iterations,
        final_cost=cost,
        shared_pixels=pairs,
        hessian_condition=cond,
        converged=converged,
    )
