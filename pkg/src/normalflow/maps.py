"""Tactile grid data and geometry pipeline.

A tactile observation is a set of row-major grids sharing one shape:

  * gradients  (H, W, 2) float  surface slope (g_u, g_v), dimensionless
  * normals    (H, W, 3) float  unit vectors (g_u, g_v, -1)/norm, n_z < 0
  * heights    (H, W)    float  indentation depth in millimeters
  * mask       (H, W)    bool   contact pixels

Physical pixel coordinates: pixel (i, j) sits at (u, v) = (j * pitch,
i * pitch) millimeters, so u runs along columns and v along rows.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.fft
import scipy.ndimage

from .errors import OutOfBoundsError, ShapeMismatchError

DEFAULT_HEIGHT_PX = 240
DEFAULT_WIDTH_PX = 320
DEFAULT_PIXEL_PITCH = 0.0625  # 20 mm x 15 mm sensing area at 320 x 240


@dataclass(frozen=True)
class GridGeometry:
    """Sensor grid: pixel counts and isotropic pitch in mm/pixel."""

    height_px: int
    width_px: int
    pixel_pitch: float

    def __post_init__(self):
        if self.height_px < 8 or self.width_px < 8:
            raise ValueError("grid must be at least 8x8 pixels")
        if not self.pixel_pitch > 0:
            raise ValueError("pixel_pitch must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height_px, self.width_px)

    @property
    def extent_u(self) -> float:
        """Largest valid u coordinate in millimeters."""
        return (self.width_px - 1) * self.pixel_pitch

    @property
    def extent_v(self) -> float:
        return (self.height_px - 1) * self.pixel_pitch

    @property
    def center(self) -> tuple[float, float]:
        """Physical center of the grid (u, v)."""
        return (self.extent_u / 2.0, self.extent_v / 2.0)

    def pixel_coords(self) -> tuple[np.ndarray, np.ndarray]:
        """(u, v) coordinate grids of shape (H, W)."""
        u = np.arange(self.width_px) * self.pixel_pitch
        v = np.arange(self.height_px) * self.pixel_pitch
        return np.meshgrid(u, v)


def default_geometry() -> GridGeometry:
    return GridGeometry(DEFAULT_HEIGHT_PX, DEFAULT_WIDTH_PX, DEFAULT_PIXEL_PITCH)


@dataclass(frozen=True)
class TactileFrame:
    """One tactile observation; arrays are frozen after construction."""

    geometry: GridGeometry
    gradients: np.ndarray
    normals: np.ndarray
    heights: np.ndarray
    mask: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        shape = self.geometry.shape
        grads = np.ascontiguousarray(self.gradients, dtype=float)
        normals = np.ascontiguousarray(self.normals, dtype=float)
        heights = np.ascontiguousarray(self.heights, dtype=float)
        mask = np.ascontiguousarray(self.mask, dtype=bool)
        if grads.shape != shape + (2,):
            raise ShapeMismatchError(f"gradients shape {grads.shape} != {shape}+(2,)")
        if normals.shape != shape + (3,):
            raise ShapeMismatchError(f"normals shape {normals.shape} != {shape}+(3,)")
        if heights.shape != shape:
            raise ShapeMismatchError(f"heights shape {heights.shape} != {shape}")
        if mask.shape != shape:
            raise ShapeMismatchError(f"mask shape {mask.shape} != {shape}")
        for arr in (grads, normals, heights, mask):
            arr.setflags(write=False)
        object.__setattr__(self, "gradients", grads)
        object.__setattr__(self, "normals", normals)
        object.__setattr__(self, "heights", heights)
        object.__setattr__(self, "mask", mask)


def make_frame(
    geometry: GridGeometry,
    gradients: np.ndarray,
    heights: np.ndarray,
    mask: np.ndarray,
    timestamp: float = 0.0,
) -> TactileFrame:
    """Bundle grids into a frame, deriving normals from the gradients."""
    return TactileFrame(
        geometry=geometry,
        gradients=gradients,
        normals=gradients_to_normals(gradients),
        heights=heights,
        mask=mask,
        timestamp=timestamp,
    )


def gradients_to_normals(gradients: np.ndarray) -> np.ndarray:
    """Per-pixel unit normals (g_u, g_v, -1)/norm, pointing at the sensor."""
    g = np.asarray(gradients, dtype=float)
    n = np.concatenate([g, -np.ones(g.shape[:-1] + (1,))], axis=-1)
    return n / np.linalg.norm(n, axis=-1, keepdims=True)


def poisson_integrate(gradients: np.ndarray, geometry: GridGeometry) -> np.ndarray:
    """Integrate a gradient field into a height map.

    Returns the exact minimizer of the forward-difference least-squares
    objective sum((grad z - g)^2) with z clamped to zero on the grid
    border, solved through a sine-transform diagonalization of the
    resulting five-point Poisson system. Deterministic and linear in g.
    """
    g = np.asarray(gradients, dtype=float)
    h, w = geometry.shape
    if g.shape != (h, w, 2):
        raise ShapeMismatchError(f"gradshape {g.shape} != {(h, w, 2)}")
    pitch = geometry.pixel_pitch
    gu, gv = g[..., 0], g[..., 1]

    # Central-difference divergence on interior nodes.
    div = (gu[1:-1, 2:] - gu[1:-1, :-2] + gv[2:, 1:-1] - gv[:-2, 1:-1]) / (2.0 * pitch)

    m, n = h - 2, w - 2
    f_hat = scipy.fft.dstn(div, type=1)
    lam_v = (2.0 * np.cos(np.pi * np.arange(1, m + 1) / (m + 1)) - 2.0) / pitch**2
    lam_u = (2.0 * np.cos(np.pi * np.arange(1, n + 1) / (n + 1)) - 2.0) / pitch**2
    z_hat = f_hat / (lam_v[:, None] + lam_u[None, :])
    z = np.zeros((h, w))
    z[1:-1, 1:-1] = scipy.fft.idstn(z_hat, type=1)
    return z


def contact_mask_from_height(heights: np.ndarray, threshold: float) -> np.ndarray:
    """Threshold the height map and strip the unreliable 1-pixel rim."""
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    raw = np.asarray(heights, dtype=float) > threshold
    return scipy.ndimage.binary_erosion(raw, structure=np.ones((3, 3), dtype=bool))


def _bilinear_setup(geometry: GridGeometry, u, v):
    """Cell indices, fractions and in-bounds flags for physical coords."""
    pitch = geometry.pixel_pitch
    h, w = geometry.shape
    x = np.asarray(u, dtype=float) / pitch
    y = np.asarray(v, dtype=float) / pitch
    valid = (x >= 0.0) & (x <= w - 1) & (y >= 0.0) & (y <= h - 1)
    x0 = np.clip(np.floor(x).astype(np.intp), 0, w - 2)
    y0 = np.clip(np.floor(y).astype(np.intp), 0, h - 2)
    fx = np.clip(x - x0, 0.0, 1.0)
    fy = np.clip(y - y0, 0.0, 1.0)
    return y0, x0, fy, fx, valid


def sample_bilinear_many(values: np.ndarray, geometry: GridGeometry, u, v):
    """Vectorized bilinear sampling in physical coordinates.

    Returns (samples, valid). Out-of-range coordinates yield valid=False
    and an unspecified sample value. Normal maps (trailing dim 3) are
    renormalized to unit length; boolean masks are sampled conservatively
    (True only when all four cell corners are True).
    """
    vals = np.asarray(values)
    y0, x0, fy, fx, valid = _bilinear_setup(geometry, u, v)
    v00 = vals[y0, x0]
    v01 = vals[y0, x0 + 1]
    v10 = vals[y0 + 1, x0]
    v11 = vals[y0 + 1, x0 + 1]
    if vals.dtype == bool:
        return v00 & v01 & v10 & v11, valid
    if vals.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    out = (
        v00 * (1 - fx) * (1 - fy)
        + v01 * fx * (1 - fy)
        + v10 * (1 - fx) * fy
        + v11 * fx * fy
    )
    if vals.ndim == 3 and vals.shape[-1] == 3:
        out = out / np.linalg.norm(out, axis=-1, keepdims=True)
    return out, valid


def sample_bilinear(values: np.ndarray, geometry: GridGeometry, u: float, v: float):
    """Sample one physical coordinate; raises OutOfBoundsError off-grid."""
    out, valid = sample_bilinear_many(values, geometry, u, v)
    if not bool(valid):
        raise OutOfBoundsError(f"({u}, {v}) outside sensor area")
    return out


def sample_normals_with_derivatives(
    normals: np.ndarray, geometry: GridGeometry, u, v
):
    """Renormalized bilinear normal samples with their exact spatial
    derivatives.

    Returns (n, dn_du, dn_dv, valid). The derivatives differentiate the
    renormalized interpolant itself (cell finite differences projected
    onto the tangent plane of the sampled normal and scaled by the
    pre-normalization magnitude), so Gauss-Newton models built from them
    are consistent with the sampled residual.
    """
    vals = np.asarray(normals)
    pitch = geometry.pixel_pitch
    y0, x0, fy, fx, valid = _bilinear_setup(geometry, u, v)
    v00 = vals[y0, x0]
    v01 = vals[y0, x0 + 1]
    v10 = vals[y0 + 1, x0]
    v11 = vals[y0 + 1, x0 + 1]
    fxc = fx[..., None]
    fyc = fy[..., None]
    raw = (
        v00 * (1 - fxc) * (1 - fyc)
        + v01 * fxc * (1 - fyc)
        + v10 * (1 - fxc) * fyc
        + v11 * fxc * fyc
    )
    du = ((v01 - v00) * (1 - fyc) + (v11 - v10) * fyc) / pitch
    dv = ((v10 - v00) * (1 - fxc) + (v11 - v01) * fxc) / pitch
    mag = np.linalg.norm(raw, axis=-1, keepdims=True)
    n = raw / mag
    du = (du - np.sum(du * n, axis=-1, keepdims=True) * n) / mag
    dv = (dv - np.sum(dv * n, axis=-1, keepdims=True) * n) / mag
    return n, du, dv, valid


def _pool2(arr: np.ndarray) -> np.ndarray:
    h, w = arr.shape[:2]
    blocked = arr.reshape((h // 2, 2, w // 2, 2) + arr.shape[2:])
    return blocked.mean(axis=(1, 3))


def _pool2_mask(mask: np.ndarray) -> np.ndarray:
    h, w = mask.shape
    blocked = mask.reshape(h // 2, 2, w // 2, 2)
    return blocked.all(axis=(1, 3))


def downsample_frame(frame: TactileFrame, factor: int) -> TactileFrame:
    """Reduce resolution by an even factor (2, 4 or 8).

    Gradients and heights are average-pooled, masks pooled by the
    all-true rule, normals recomputed from the pooled gradients, pitch
    scaled up by the factor. Larger factors run as repeated halvings so
    downsampling by 2 twice is bit-identical to downsampling by 4.
    """
    if factor not in (2, 4, 8):
        raise ValueError("factor must be one of 2, 4, 8")
    geom = frame.geometry
    if geom.height_px % factor or geom.width_px % factor:
        raise ShapeMismatchError(
            f"factor {factor} does not divide grid {geom.shape}"
        )
    grads, heights, mask = frame.gradients, frame.heights, frame.mask
    pitch = geom.pixel_pitch
    steps = {2: 1, 4: 2, 8: 3}[factor]
    for _ in range(steps):
        grads = _pool2(grads)
        heights = _pool2(heights)
        mask = _pool2_mask(mask)
        pitch *= 2.0
    new_geom = GridGeometry(grads.shape[0], grads.shape[1], pitch)
    return make_frame(new_geom, grads, heights, mask, timestamp=frame.timestamp)


def validate_frame(frame: TactileFrame, tol: float = 1e-6) -> None:
    """Check the cross-grid invariants; raises ValueError on violation."""
    norms = np.linalg.norm(frame.normals, axis=-1)
    if np.max(np.abs(norms - 1.0)) > tol:
        raise ValueError("normals are not unit length")
    if not np.all(frame.normals[..., 2] < 0):
        raise ValueError("normals must face the sensor (n_z < 0)")
    derived = gradients_to_normals(frame.gradients)
    if np.max(np.abs(derived - frame.normals)) > tol:
        raise ValueError("normals inconsistent with gradients")
    if not np.all(np.isfinite(frame.gradients)):
        raise ValueError("gradients contain non-finite values")
    if not np.all(np.isfinite(frame.heights)):
        raise ValueError("heights contain non-finite values")


def frames_compatible(a: TactileFrame, b: TactileFrame) -> bool:
    return a.geometry == b.geometry
