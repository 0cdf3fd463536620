"""Normal-map registration: Gauss-Newton alignment of two tactile frames.

The estimated transform T = (R, t) maps reference-frame surface points
q = (u, v, z(u, v)) into the target frame. Alignment minimizes, over the
shared contact region, the squared difference between target normals
sampled at the warped coordinates and reference normals rotated by R.

Two solvers are provided:

  * register: inverse-compositional Gauss-Newton. The Jacobian of a
    small increment applied on the reference side is independent of the
    current estimate, so the per-pixel Jacobian rows are built once and
    reused every iteration; the increment is composed in by
    T <- T . inc^-1.
  * register_forward_additive: textbook forward formulation that
    relinearizes at every iteration and updates parameters additively.
    Slower; kept as an independent cross-check of the fast path.

The image-plane warp projects away z-translation, leaving a 6x6 normal
system with an identically zero z row/column. Both solvers therefore
solve the reduced 5x5 system and recover z-translation afterwards as the
mean height residual over the shared contact region.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateHessianError, InsufficientOverlapError, ShapeMismatchError
from .maps import (
    GridGeometry,
    TactileFrame,
    sample_bilinear_many,
    sample_normals_with_derivatives,
)
from .se3 import (
    PoseParams,
    RigidTransform,
    compose,
    invert,
    params_to_transform,
    rotation_exp,
    transform_to_params,
    _rot_x,
    _rot_y,
    _rot_z,
)

_Z_INDEX = 2  # position of the unobservable z-translation in the 6-vector


@dataclass(frozen=True)
class SolverConfig:
    """Gauss-Newton settings.

    step_tolerance is a mixed norm over the increment 6-vector with
    radians and millimeters weighted equally (at this sensor scale a
    milliradian and a micrometer move pixels by comparable amounts).
    """

    max_iterations: int = 50
    step_tolerance: float = 1e-6
    subsample_n: int = 5000
    rng_seed: int = 0
    zero_height_mode: bool = False
    min_shared_pixels: int = 100
    condition_limit: float = 1e8

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.subsample_n < self.min_shared_pixels:
            raise ValueError("subsample_n must be >= min_shared_pixels")


@dataclass(frozen=True)
class RegistrationResult:
    """Estimated transform plus convergence diagnostics."""

    transform: RigidTransform
    params: PoseParams
    iterations: int
    final_cost: float
    shared_pixels: int
    hessian_condition: float
    converged: bool
    cost_trace: tuple = ()

    def to_dict(self) -> dict:
        p = self.params
        return {
            "params": {
                "x_mm": p.x,
                "y_mm": p.y,
                "z_mm": p.z,
                "theta_x_rad": p.theta_x,
                "theta_y_rad": p.theta_y,
                "theta_z_rad": p.theta_z,
            },
            "matrix": self.transform.matrix().tolist(),
            "iterations": self.iterations,
            "final_cost": self.final_cost,
            "shared_pixels": self.shared_pixels,
            "hessian_condition": self.hessian_condition,
            "converged": self.converged,
        }


def warp(u, v, heights, geometry: GridGeometry, transform: RigidTransform):
    """Map reference pixel coordinates into the target frame.

    Lifts (u, v) to q = (u, v, z(u, v)) using the reference height map
    (z = 0 when heights is None), applies the transform and drops the z
    row of the result.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if heights is None:
        z = np.zeros_like(u)
    else:
        z, _ = sample_bilinear_many(heights, geometry, u, v)
    r, t = transform.rotation, transform.translation
    u2 = r[0, 0] * u + r[0, 1] * v + r[0, 2] * z + t[0]
    v2 = r[1, 0] * u + r[1, 1] * v + r[1, 2] * z + t[1]
    return u2, v2


def _subsample_mask(mask: np.ndarray, n: int, seed: int):
    """Deterministic pixel draw from a contact mask; returns (ii, jj)."""
    ii, jj = np.nonzero(mask)
    count = ii.size
    if count > n:
        rng = np.random.default_rng(seed)
        pick = np.sort(rng.choice(count, size=n, replace=False))
        ii, jj = ii[pick], jj[pick]
    return ii, jj


def _pixel_geometry(frame: TactileFrame, ii, jj, zero_height: bool):
    """Surface points q and stored normals at integer pixels."""
    pitch = frame.geometry.pixel_pitch
    u = jj * pitch
    v = ii * pitch
    z = np.zeros_like(u, dtype=float) if zero_height else frame.heights[ii, jj]
    q = np.stack([u, v, z], axis=-1)
    normals = frame.normals[ii, jj]
    return q, normals


def _warp_points(q: np.ndarray, transform: RigidTransform):
    warped = q @ transform.rotation.T + transform.translation
    return warped[:, 0], warped[:, 1]


def _valid_targets(frame: TactileFrame, u, v):
    """In-bounds flags ANDed with conservative mask interpolation."""
    hit, in_bounds = sample_bilinear_many(frame.mask, frame.geometry, u, v)
    return in_bounds & hit


def normal_gradient_field(frame: TactileFrame):
    """Spatial derivative of the normal map in physical units.

    Central differences where both neighbors are inside the contact
    mask, one-sided at the mask boundary. The raw difference is then
    projected onto the tangent plane of the local normal: the derivative
    of a unit field has no radial component, and the projection makes
    the rows consistent with derivatives of the renormalized bilinear
    interpolation used when sampling normal maps.

    Returns (d_normals/du, d_normals/dv), each of shape (H, W, 3).
    """
    normals = frame.normals
    mask = frame.mask
    pitch = frame.geometry.pixel_pitch

    def axis_gradient(axis: int) -> np.ndarray:
        fwd_ok = np.zeros_like(mask)
        bwd_ok = np.zeros_like(mask)
        fwd = np.zeros_like(normals)
        bwd = np.zeros_like(normals)
        if axis == 1:
            fwd_ok[:, :-1] = mask[:, 1:]
            bwd_ok[:, 1:] = mask[:, :-1]
            fwd[:, :-1] = normals[:, 1:] - normals[:, :-1]
            bwd[:, 1:] = normals[:, 1:] - normals[:, :-1]
        else:
            fwd_ok[:-1, :] = mask[1:, :]
            bwd_ok[1:, :] = mask[:-1, :]
            fwd[:-1, :] = normals[1:, :] - normals[:-1, :]
            bwd[1:, :] = normals[1:, :] - normals[:-1, :]
        both = fwd_ok & bwd_ok
        grad = np.zeros_like(normals)
        grad[both] = (fwd[both] + bwd[both]) / (2.0 * pitch)
        only_f = fwd_ok & ~bwd_ok
        grad[only_f] = fwd[only_f] / pitch
        only_b = bwd_ok & ~fwd_ok
        grad[only_b] = bwd[only_b] / pitch
        return grad

    grad_u = axis_gradient(1)
    grad_v = axis_gradient(0)
    radial_u = np.sum(grad_u * normals, axis=-1, keepdims=True)
    radial_v = np.sum(grad_v * normals, axis=-1, keepdims=True)
    return grad_u - radial_u * normals, grad_v - radial_v * normals


def build_jacobian(frame: TactileFrame, pixels, config: SolverConfig):
    """Per-pixel increment Jacobian rows and their summed normal matrix.

    pixels is an (ii, jj) index pair into the reference frame. Returns
    (J, H) with J of shape (P, 3, 6) and H = sum_p J_p^T J_p. Column 2
    (z-translation) is identically zero: the image-plane projection
    removes it from the warp and a z-shift does not rotate normals.
    """
    ii, jj = pixels
    q, normals = _pixel_geometry(frame, ii, jj, config.zero_height_mode)
    grad_u, grad_v = normal_gradient_field(frame)
    gu = grad_u[ii, jj]
    gv = grad_v[ii, jj]
    p_count = q.shape[0]

    # Image-plane motion of the warped pixel per parameter: 2 x 6 rows
    # [I | J_x q | J_y q | J_z q] with the z row projected away.
    wjac = np.zeros((p_count, 2, 6))
    wjac[:, 0, 0] = 1.0
    wjac[:, 1, 1] = 1.0
    wjac[:, 1, 3] = -q[:, 2]  # (J_x q)_y
    wjac[:, 0, 4] = q[:, 2]  # (J_y q)_x
    wjac[:, 0, 5] = -q[:, 1]  # (J_z q)_x
    wjac[:, 1, 5] = q[:, 0]  # (J_z q)_y

    jac = np.einsum("pic,pcd->pid", np.stack([gu, gv], axis=-1), wjac)

    # Rotation of the stored normal: subtract [0 | J_x n | J_y n | J_z n].
    jac[:, 1, 3] -= -normals[:, 2]
    jac[:, 2, 3] -= normals[:, 1]
    jac[:, 0, 4] -= normals[:, 2]
    jac[:, 2, 4] -= -normals[:, 0]
    jac[:, 0, 5] -= -normals[:, 1]
    jac[:, 1, 5] -= normals[:, 0]

    hess = np.einsum("pij,pik->jk", jac, jac)
    return jac, hess


def shared_contact(
    ref: TactileFrame,
    tgt: TactileFrame,
    transform: RigidTransform,
    config: SolverConfig,
):
    """Subsampled reference contact pixels whose warp lands in the target
    contact region. Returns (ii, jj); raises InsufficientOverlapError
    when fewer than config.min_shared_pixels survive."""
    _check_geometry(ref, tgt)
    ii, jj = _subsample_mask(ref.mask, config.subsample_n, config.rng_seed)
    q, _ = _pixel_geometry(ref, ii, jj, config.zero_height_mode)
    u2, v2 = _warp_points(q, transform)
    valid = _valid_targets(tgt, u2, v2)
    if int(valid.sum()) < config.min_shared_pixels:
        raise InsufficientOverlapError(
            f"shared contact {int(valid.sum())} < {config.min_shared_pixels}"
        )
    return ii[valid], jj[valid]


def estimate_z_translation(
    ref: TactileFrame,
    tgt: TactileFrame,
    transform: RigidTransform,
    pixels,
) -> float:
    """Mean z residual between warped target heights and transformed
    reference surface points over the given contact pixels."""
    ii, jj = pixels
    if len(ii) < 1:
        raise InsufficientOverlapError("no pixels for z-translation estimate")
    q, _ = _pixel_geometry(ref, ii, jj, zero_height=False)
    warped = q @ transform.rotation.T + transform.translation
    z_target, in_bounds = sample_bilinear_many(
        tgt.heights, tgt.geometry, warped[:, 0], warped[:, 1]
    )
    if not in_bounds.any():
        raise InsufficientOverlapError("all warped samples left the sensor")
    return float(np.mean(z_target[in_bounds] - warped[in_bounds, 2]))


def _check_geometry(ref: TactileFrame, tgt: TactileFrame) -> None:
    if ref.geometry != tgt.geometry:
        raise ShapeMismatchError(
            f"frame geometries differ: {ref.geometry} vs {tgt.geometry}"
        )


def _solve_reduced(hess: np.ndarray, rhs: np.ndarray, config: SolverConfig):
    """Solve the 5x5 system with the z row/column deleted.

    Returns (delta6, condition); delta6 has a zero z component.
    """
    keep = [0, 1, 3, 4, 5]
    h5 = hess[np.ix_(keep, keep)]
    cond = float(np.linalg.cond(h5))
    if not np.isfinite(cond) or cond > config.condition_limit:
        raise DegenerateHessianError(
            f"reduced system condition {cond:.3e} exceeds {config.condition_limit:.1e}"
        )
    d5 = np.linalg.solve(h5, rhs[keep])
    delta = np.zeros(6)
    delta[keep] = d5
    return delta, cond


def _increment_transform(delta: np.ndarray) -> RigidTransform:
    """Small transform for an increment 6-vector (z component ignored)."""
    return RigidTransform(
        rotation_exp(delta[3:]), np.array([delta[0], delta[1], 0.0])
    )


def _finish(
    ref, tgt, transform, pixels, iterations, cost, shared, cond, converged, trace
) -> RegistrationResult:
    delta_z = estimate_z_translation(ref, tgt, transform, pixels)
    t = transform.translation.copy()
    t[2] += delta_z
    final = RigidTransform(transform.rotation, t)
    return RegistrationResult(
        transform=final,
        params=transform_to_params(final),
        iterations=iterations,
        final_cost=cost,
        shared_pixels=shared,
        hessian_condition=cond,
        converged=converged,
        cost_trace=tuple(trace),
    )


def register(
    ref: TactileFrame,
    tgt: TactileFrame,
    init: RigidTransform | None = None,
    config: SolverConfig = SolverConfig(),
) -> RegistrationResult:
    """Inverse-compositional registration of tgt against ref.

    Raises InsufficientOverlapError when the shared contact region drops
    below config.min_shared_pixels and DegenerateHessianError when the
    reduced system is ill conditioned (textureless or symmetric
    contact). A run that exhausts max_iterations returns with
    converged=False rather than raising.
    """
    _check_geometry(ref, tgt)
    if init is None:
        init = RigidTransform(np.eye(3), np.zeros(3))

    ii, jj = _subsample_mask(ref.mask, config.subsample_n, config.rng_seed)
    if ii.size < config.min_shared_pixels:
        raise InsufficientOverlapError(
            f"reference contact has only {ii.size} pixels"
        )
    q, n_ref = _pixel_geometry(ref, ii, jj, config.zero_height_mode)
    jac, hess_all = build_jacobian(ref, (ii, jj), config)
    jac_flat = jac.reshape(-1, 6)

    tgt_mask = tgt.mask
    tgt_normals = tgt.normals
    geometry = tgt.geometry

    def evaluate(transform):
        u2, v2 = _warp_points(q, transform)
        hit, in_bounds = sample_bilinear_many(tgt_mask, geometry, u2, v2)
        valid = in_bounds & hit
        count = int(valid.sum())
        if count < config.min_shared_pixels:
            raise InsufficientOverlapError(
                f"shared contact {count} < {config.min_shared_pixels}"
            )
        sampled, _ = sample_bilinear_many(
            tgt_normals, geometry, u2[valid], v2[valid]
        )
        residual = sampled @ transform.rotation - n_ref[valid]
        cost = float(np.mean(np.sum(residual * residual, axis=1)))
        return valid, residual, cost, count

    transform = init
    trace = []
    iterations = 0
    converged = False
    cond = float("nan")
    full = np.ones(ii.size, dtype=bool)
    residual_full = np.zeros((ii.size, 3))
    for _ in range(config.max_iterations):
        valid, residual, cost, count = evaluate(transform)
        trace.append(cost)
        # The precomputed normal matrix covers every subsampled pixel;
        # drop the few rows whose warp left the shared contact region.
        if count == ii.size:
            hess = hess_all
        else:
            dropped = jac[~valid].reshape(-1, 6)
            hess = hess_all - dropped.T @ dropped
        residual_full[:] = 0.0
        residual_full[valid] = residual
        rhs = jac_flat.T @ residual_full.reshape(-1)
        delta, cond = _solve_reduced(hess, rhs, config)
        transform = compose(transform, invert(_increment_transform(delta)))
        iterations += 1
        if np.linalg.norm(delta) < config.step_tolerance:
            converged = True
            break
    del full

    valid, _, cost, count = evaluate(transform)
    trace.append(cost)
    return _finish(
        ref,
        tgt,
        transform,
        (ii[valid], jj[valid]),
        iterations,
        cost,
        count,
        cond,
        converged,
        trace,
    )


def _euler_rotation_derivatives(params: PoseParams):
    """R and dR/dtheta for the z-x-y assembly R_y R_x R_z."""
    rx, ry, rz = _rot_x(params.theta_x), _rot_y(params.theta_y), _rot_z(params.theta_z)
    cx, sx = np.cos(params.theta_x), np.sin(params.theta_x)
    cy, sy = np.cos(params.theta_y), np.sin(params.theta_y)
    cz, sz = np.cos(params.theta_z), np.sin(params.theta_z)
    drx = np.array([[0.0, 0.0, 0.0], [0.0, -sx, -cx], [0.0, cx, -sx]])
    dry = np.array([[-sy, 0.0, cy], [0.0, 0.0, 0.0], [-cy, 0.0, -sy]])
    drz = np.array([[-sz, -cz, 0.0], [cz, -sz, 0.0], [0.0, 0.0, 0.0]])
    r = ry @ rx @ rz
    return r, ry @ drx @ rz, dry @ rx @ rz, ry @ rx @ drz


def register_forward_additive(
    ref: TactileFrame,
    tgt: TactileFrame,
    init: RigidTransform | None = None,
    config: SolverConfig = SolverConfig(),
) -> RegistrationResult:
    """Forward-additive reference solver; same contract as register."""
    _check_geometry(ref, tgt)
    if init is None:
        init = RigidTransform(np.eye(3), np.zeros(3))

    ii, jj = _subsample_mask(ref.mask, config.subsample_n, config.rng_seed)
    if ii.size < config.min_shared_pixels:
        raise InsufficientOverlapError(f"reference contact has only {ii.size} pixels")
    q, n_ref = _pixel_geometry(ref, ii, jj, config.zero_height_mode)
    geometry = tgt.geometry

    params = transform_to_params(init).as_array()
    trace = []
    iterations = 0
    converged = False
    cond = float("nan")
    cost = float("nan")
    count = 0
    valid = None
    for _ in range(config.max_iterations):
        pose = PoseParams.from_array(params)
        r, drx, dry, drz = _euler_rotation_derivatives(pose)
        transform = RigidTransform(r, params[:3])
        u2, v2 = _warp_points(q, transform)
        hit, in_bounds = sample_bilinear_many(tgt.mask, geometry, u2, v2)
        valid = in_bounds & hit
        count = int(valid.sum())
        if count < config.min_shared_pixels:
            raise InsufficientOverlapError(
                f"shared contact {count} < {config.min_shared_pixels}"
            )
        uv_u, uv_v = u2[valid], v2[valid]
        sampled, gu, gv, _ = sample_normals_with_derivatives(
            tgt.normals, geometry, uv_u, uv_v
        )
        rotated_ref = n_ref[valid] @ r.T
        residual = sampled - rotated_ref
        cost = float(np.mean(np.sum(residual * residual, axis=1)))
        trace.append(cost)

        qv = q[valid]
        dq = np.stack([qv @ drx.T, qv @ dry.T, qv @ drz.T], axis=-1)  # (P,3,3)
        rows = np.zeros((count, 3, 6))
        rows[:, :, 0] = gu
        rows[:, :, 1] = gv
        # d(warp)/dtheta_k has image components (dq_x, dq_y).
        rows[:, :, 3:] += gu[:, :, None] * dq[:, None, 0, :]
        rows[:, :, 3:] += gv[:, :, None] * dq[:, None, 1, :]
        dn = np.stack(
            [n_ref[valid] @ drx.T, n_ref[valid] @ dry.T, n_ref[valid] @ drz.T],
            axis=-1,
        )
        rows[:, :, 3:] -= dn

        flat = rows.reshape(-1, 6)
        hess = flat.T @ flat
        rhs = flat.T @ (-residual).reshape(-1)
        delta, cond = _solve_reduced(hess, rhs, config)
        params = params + delta
        iterations += 1
        if np.linalg.norm(delta) < config.step_tolerance:
            converged = True
            break

    transform = params_to_transform(PoseParams.from_array(params))
    u2, v2 = _warp_points(q, transform)
    hit, in_bounds = sample_bilinear_many(tgt.mask, geometry, u2, v2)
    valid = in_bounds & hit
    count = int(valid.sum())
    if count < config.min_shared_pixels:
        raise InsufficientOverlapError(f"shared contact {count} < {config.min_shared_pixels}")
    sampled, _ = sample_bilinear_many(tgt.normals, geometry, u2[valid], v2[valid])
    residual = sampled - n_ref[valid] @ transform.rotation.T
    cost = float(np.mean(np.sum(residual * residual, axis=1)))
    trace.append(cost)
    return _finish(
        ref,
        tgt,
        transform,
        (ii[valid], jj[valid]),
        iterations,
        cost,
        count,
        cond,
        converged,
        trace,
    )
