"""Synthetic tactile rendering with exact analytic ground truth.

Scenes are height-field surfaces in an object frame whose origin sits at
the sensor grid center; the apex touches height 0. A sensor pose maps
object coordinates into sensor coordinates (x_sensor = R x_obj + t), so
the true relative transform between two rendered frames A and B is
pose_B . pose_A^-1 in the sensor pixel coordinate system, which is
exactly what the registration solver estimates.

The gel is orthographic: the surface height above the gel plane (z = 0)
is the indentation depth, there is no gel mechanics. Per-pixel heights
come from Newton root-finding on the posed implicit surface and the
gradients from the implicit function theorem, so the rendered maps are
exact up to the root tolerance (1e-12 mm).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NoContactError
from .maps import GridGeometry, TactileFrame, gradients_to_normals, poisson_integrate
from .se3 import RigidTransform, compose, identity, invert, rotation_exp

_NEWTON_ITERS = 60
_NEWTON_TOL = 1e-12


@dataclass(frozen=True)
class SceneSpec:
    """Analytic object surface pressed into the gel.

    kind selects the surface family; only the matching parameters are
    used. indentation is how deep the apex sits below the gel plane at
    the identity pose, in millimeters.
    """

    kind: str
    indentation: float = 0.7
    radius: float = 6.0
    texture_amplitude: float = 0.05
    texture_frequency: float = 0.45
    ridge_width: float = 4.0
    ridge_height: float = 2.0
    edge_radius: float = 1.0
    bump_amplitude: float = 0.3
    bump_spacing: float = 3.0

    def __post_init__(self):
        if self.kind not in ("textured_sphere", "ridge", "bumpy_plane", "flat_plane"):
            raise ValueError(f"unknown scene kind {self.kind!r}")
        if not self.indentation > 0:
            raise ValueError("indentation must be positive")
        if self.kind == "textured_sphere" and not self.radius > 0:
            raise ValueError("radius must be positive")
        if self.texture_amplitude < 0 or self.bump_amplitude < 0:
            raise ValueError("amplitudes must be non-negative")


def textured_sphere(
    radius: float = 6.0,
    texture_amplitude: float = 0.05,
    texture_frequency: float = 0.45,
    indentation: float = 0.7,
) -> SceneSpec:
    return SceneSpec(
        kind="textured_sphere",
        radius=radius,
        texture_amplitude=texture_amplitude,
        texture_frequency=texture_frequency,
        indentation=indentation,
    )


def ridge(
    width: float = 4.0,
    height: float = 2.0,
    edge_radius: float = 1.0,
    indentation: float = 0.5,
) -> SceneSpec:
    return SceneSpec(
        kind="ridge",
        ridge_width=width,
        ridge_height=height,
        edge_radius=edge_radius,
        indentation=indentation,
    )


def bumpy_plane(
    bump_amplitude: float = 0.3,
    bump_spacing: float = 3.0,
    indentation: float = 0.5,
) -> SceneSpec:
    return SceneSpec(
        kind="bumpy_plane",
        bump_amplitude=bump_amplitude,
        bump_spacing=bump_spacing,
        indentation=indentation,
    )


def flat_plane(indentation: float = 0.5) -> SceneSpec:
    return SceneSpec(kind="flat_plane", indentation=indentation)


@dataclass(frozen=True)
class NoiseSpec:
    """Gradient noise model reproducing the accurate-normal / distorted-
    height asymmetry of integrated tactile geometry."""

    gradient_sigma: float = 0.0
    heights_from_noisy_poisson: bool = False
    rng_seed: int = 0

    def __post_init__(self):
        if self.gradient_sigma < 0:
            raise ValueError("gradient_sigma must be non-negative")


@dataclass(frozen=True)
class TrajectorySpec:
    """Ordered sensor poses with strictly increasing timestamps."""

    poses: tuple
    timestamps: tuple

    def __post_init__(self):
        if len(self.poses) < 1:
            raise ValueError("trajectory needs at least one pose")
        if len(self.poses) != len(self.timestamps):
            raise ValueError("poses and timestamps must have equal length")
        ts = np.asarray(self.timestamps, dtype=float)
        if len(ts) > 1 and not np.all(np.diff(ts) > 0):
            raise ValueError("timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.poses)


def rigid_about(center, rotation: np.ndarray, translation=None) -> RigidTransform:
    """Rotation about a pivot point plus an optional extra translation."""
    c = np.asarray(center, dtype=float)
    t = np.zeros(3) if translation is None else np.asarray(translation, dtype=float)
    return RigidTransform(rotation, c - rotation @ c + t)


def _axis_vector(axis) -> np.ndarray:
    if isinstance(axis, str):
        try:
            return {"x": np.array([1.0, 0, 0]),
                    "y": np.array([0, 1.0, 0]),
                    "z": np.array([0, 0, 1.0])}[axis]
        except KeyError:
            raise ValueError(f"unknown axis {axis!r}") from None
    v = np.asarray(axis, dtype=float)
    return v / np.linalg.norm(v)


def roll(
    axis,
    total_angle: float,
    frames: int,
    center,
    frame_rate: float = 25.0,
) -> TrajectorySpec:
    """Rotate about an axis through `center`, total_angle radians spread
    over `frames` frames (frame i at angle total_angle * i / frames)."""
    axis_v = _axis_vector(axis)
    poses, times = [], []
    for i in range(frames):
        angle = total_angle * i / frames
        poses.append(rigid_about(center, rotation_exp(axis_v * angle)))
        times.append(i / frame_rate)
    return TrajectorySpec(tuple(poses), tuple(times))


def twist(
    total_angle: float, frames: int, center, frame_rate: float = 25.0
) -> TrajectorySpec:
    """z-axis rotation about the contact center."""
    return roll("z", total_angle, frames, center, frame_rate)


def slide(vector, frames: int, frame_rate: float = 25.0) -> TrajectorySpec:
    """Linear translation ramp reaching `vector` at the final frame."""
    v = np.asarray(vector, dtype=float)
    poses, times = [], []
    denom = max(frames - 1, 1)
    for i in range(frames):
        poses.append(RigidTransform(np.eye(3), v * (i / denom)))
        times.append(i / frame_rate)
    return TrajectorySpec(tuple(poses), tuple(times))


def composite(segments) -> TrajectorySpec:
    """Chain trajectory segments; each continues from the previous end."""
    poses, times = [], []
    base = identity()
    t_offset = 0.0
    for seg in segments:
        seg_times = np.asarray(seg.timestamps, dtype=float)
        dt = seg_times[1] - seg_times[0] if len(seg_times) > 1 else 1.0 / 25.0
        for pose, ts in zip(seg.poses, seg_times):
            if times and t_offset + ts <= times[-1]:
                continue
            poses.append(compose(pose, base))
            times.append(t_offset + ts)
        base = poses[-1]
        t_offset = times[-1] + dt
    return TrajectorySpec(tuple(poses), tuple(times))


class _Surface:
    """Height field s(a, b) over object coordinates with its partials."""

    def __init__(self, scene: SceneSpec):
        self.scene = scene

    def eval(self, a: np.ndarray, b: np.ndarray):
        """Return (s, ds/da, ds/db); apex value is 0 at the origin."""
        sc = self.scene
        if sc.kind == "flat_plane":
            zero = np.zeros_like(a)
            return zero, zero, zero.copy()
        if sc.kind == "bumpy_plane":
            k = 2.0 * np.pi / sc.bump_spacing
            amp = sc.bump_amplitude
            s = amp * (np.cos(k * a) * np.cos(k * b) - 1.0)
            sa = -amp * k * np.sin(k * a) * np.cos(k * b)
            sb = -amp * k * np.cos(k * a) * np.sin(k * b)
            return s, sa, sb
        if sc.kind == "ridge":
            return self._ridge(a, b)
        return self._sphere(a, b)

    def _sphere(self, a, b):
        sc = self.scene
        rho = sc.radius
        r2 = a * a + b * b
        r_cut = 0.9 * rho
        r = np.sqrt(r2)
        inside = r <= r_cut
        root = np.sqrt(np.maximum(rho * rho - np.minimum(r2, r_cut * r_cut), 0.0))
        s = np.where(inside, root - rho, 0.0)
        # d(sqrt(rho^2 - r^2))/da = -a / root
        sa = np.where(inside, -a / root, 0.0)
        sb = np.where(inside, -b / root, 0.0)
        # Linear continuation beyond the cut keeps the field C1.
        root_cut = np.sqrt(rho * rho - r_cut * r_cut)
        slope = r_cut / root_cut
        r_safe = np.maximum(r, 1e-12)
        outside = ~inside
        s = np.where(outside, root_cut - rho - slope * (r - r_cut), s)
        sa = np.where(outside, -slope * a / r_safe, sa)
        sb = np.where(outside, -slope * b / r_safe, sb)
        if sc.texture_amplitude > 0:
            k = 2.0 * np.pi * sc.texture_frequency
            amp = sc.texture_amplitude
            s = s + amp * np.sin(k * a) * np.sin(k * b)
            sa = sa + amp * k * np.cos(k * a) * np.sin(k * b)
            sb = sb + amp * k * np.sin(k * a) * np.cos(k * b)
        return s, sa, sb

    def _ridge(self, a, b):
        sc = self.scene
        half = sc.ridge_width / 2.0
        re = sc.edge_radius
        x = np.abs(a)
        sign = np.sign(a)
        shoulder_end = half + re / np.sqrt(2.0)
        s = np.zeros_like(a)
        sa = np.zeros_like(a)
        # Circular shoulder, then a 45-degree flank down to the base plane.
        in_shoulder = (x > half) & (x <= shoulder_end)
        d = np.where(in_shoulder, x - half, 0.0)
        root = np.sqrt(np.maximum(re * re - d * d, re * re / 2.0))
        s = np.where(in_shoulder, root - re, s)
        sa = np.where(in_shoulder, -sign * d / root, sa)
        flank = x > shoulder_end
        s_end = re / np.sqrt(2.0) - re
        s = np.where(flank, s_end - (x - shoulder_end), s)
        sa = np.where(flank, -sign, sa)
        below = s < -sc.ridge_height
        s = np.where(below, -sc.ridge_height, s)
        sa = np.where(below, 0.0, sa)
        return s, sa, np.zeros_like(a)


def _solve_heights(surface: _Surface, pose: RigidTransform, geometry: GridGeometry):
    """Newton-solve the posed surface height h(u, v) over the pixel grid.

    Returns (h, grad_u, grad_v) where grads are exact implicit-function
    derivatives of h, valid at every pixel of the grid.
    """
    uu, vv = geometry.pixel_coords()
    cx, cy = geometry.center
    inv_pose = invert(pose)
    rb = inv_pose.rotation
    tb = inv_pose.translation
    indent = surface.scene.indentation

    # Object coords of a sensor point (u, v, h): p0 + h * r3, shifted so
    # the object sits over the grid center.
    p0x = rb[0, 0] * uu + rb[0, 1] * vv + tb[0] - cx
    p0y = rb[1, 0] * uu + rb[1, 1] * vv + tb[1] - cy
    p0z = rb[2, 0] * uu + rb[2, 1] * vv + tb[2]
    r3 = rb[:, 2]

    h = np.zeros_like(uu)
    for _ in range(_NEWTON_ITERS):
        ax = p0x + h * r3[0]
        by = p0y + h * r3[1]
        s, s_a, s_b = surface.eval(ax, by)
        f = p0z + h * r3[2] - s - indent
        df = r3[2] - s_a * r3[0] - s_b * r3[1]
        step = f / df
        h = h - step
        if np.max(np.abs(step)) < _NEWTON_TOL:
            break

    # Implicit surface F(x) = F_obj(pose^-1 x); grad rotates with the pose.
    ax = p0x + h * r3[0]
    by = p0y + h * r3[1]
    _, s_a, s_b = surface.eval(ax, by)
    grad_obj = np.stack([-s_a, -s_b, np.ones_like(s_a)], axis=-1)
    grad_sensor = grad_obj @ inv_pose.rotation  # rows times R_pose
    gu = -grad_sensor[..., 0] / grad_sensor[..., 2]
    gv = -grad_sensor[..., 1] / grad_sensor[..., 2]
    return h, gu, gv


def render_frame(
    scene: SceneSpec,
    pose: RigidTransform,
    geometry: GridGeometry,
    noise: NoiseSpec | None = None,
    timestamp: float = 0.0,
    noise_index: int = 0,
) -> TactileFrame:
    """Render one tactile frame of `scene` seen from `pose`.

    Raises NoContactError when no pixel penetrates the gel plane.
    """
    surface = _Surface(scene)
    h, gu, gv = _solve_heights(surface, pose, geometry)
    mask = h > 0.0
    if not mask.any():
        raise NoContactError("pose produces no gel contact")
    heights = np.maximum(h, 0.0)
    gradients = np.zeros(geometry.shape + (2,))
    gradients[..., 0] = np.where(mask, gu, 0.0)
    gradients[..., 1] = np.where(mask, gv, 0.0)

    if noise is not None and (
        noise.gradient_sigma > 0 or noise.heights_from_noisy_poisson
    ):
        rng = np.random.default_rng([noise.rng_seed, noise_index])
        if noise.gradient_sigma > 0:
            gradients = gradients + rng.normal(
                0.0, noise.gradient_sigma, size=gradients.shape
            )
        if noise.heights_from_noisy_poisson:
            heights = poisson_integrate(gradients, geometry)

    return TactileFrame(
        geometry=geometry,
        gradients=gradients,
        normals=gradients_to_normals(gradients),
        heights=heights,
        mask=mask,
        timestamp=timestamp,
    )


def render_sequence(
    scene: SceneSpec,
    trajectory: TrajectorySpec,
    geometry: GridGeometry,
    noise: NoiseSpec | None = None,
):
    """Render a trajectory; returns (frames, ground_truth_transforms).

    Ground truth transform i maps first-frame coordinates into frame-i
    coordinates: pose_i . pose_0^-1.
    """
    frames = []
    truths = []
    inv_first = invert(trajectory.poses[0])
    for i, (pose, ts) in enumerate(zip(trajectory.poses, trajectory.timestamps)):
        try:
            frames.append(
                render_frame(scene, pose, geometry, noise, timestamp=ts, noise_index=i)
            )
        except NoContactError as exc:
            raise NoContactError(f"frame {i}: {exc}") from exc
        truths.append(compose(pose, inv_first))
    return frames, truths


def scene_center(scene: SceneSpec, geometry: GridGeometry) -> np.ndarray:
    """Natural rotation pivot of a scene in sensor coordinates.

    For spheres this is the ball center (rolling about it keeps contact
    indefinitely); other scenes pivot about the contact point on the gel
    plane.
    """
    cx, cy = geometry.center
    if scene.kind == "textured_sphere":
        return np.array([cx, cy, scene.indentation - scene.radius])
    return np.array([cx, cy, 0.0])


def contact_point(geometry: GridGeometry) -> np.ndarray:
    """Center of the contact on the gel plane, in sensor coordinates.

    Rotations about this point are the rolling-on-the-surface motions a
    sensor physically performs; they keep the contact texture nearly in
    place, unlike rotations about the sensor corner origin.
    """
    cx, cy = geometry.center
    return np.array([cx, cy, 0.0])
