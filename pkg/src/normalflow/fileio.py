"""On-disk formats: NFLW frame containers and pose CSV trajectories.

NFLW container layout (little endian throughout):

    magic   4 bytes  b"NFLW"
    version u16      currently 1
    H       u32
    W       u32
    pitch   f64      millimeters per pixel
    time    f64      seconds
    then row-major float32 arrays: gradients (2, H, W), heights (H, W),
    and the contact mask (H, W) as bytes 0/1.

Normals are derived from gradients on load, never stored.

Pose CSV rows: frame_index, x_mm, y_mm, z_mm, theta_x_deg, theta_y_deg,
theta_z_deg with angles in degrees, z-x-y Euler.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .errors import DataError
from .maps import GridGeometry, TactileFrame, make_frame
from .se3 import PoseParams, RigidTransform, params_to_transform, transform_to_params

MAGIC = b"NFLW"
VERSION = 1
_HEADER = struct.Struct("<4sHIIdd")

POSE_CSV_HEADER = [
    "frame_index",
    "x_mm",
    "y_mm",
    "z_mm",
    "theta_x_deg",
    "theta_y_deg",
    "theta_z_deg",
]


def save_frame(path, frame: TactileFrame) -> None:
    geom = frame.geometry
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        geom.height_px,
        geom.width_px,
        geom.pixel_pitch,
        frame.timestamp,
    )
    grads = np.moveaxis(frame.gradients, -1, 0).astype("<f4")  # (2, H, W)
    heights = frame.heights.astype("<f4")
    mask = frame.mask.astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(grads.tobytes())
        fh.write(heights.tobytes())
        fh.write(mask.tobytes())


def load_frame(path) -> TactileFrame:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: truncated header")
    magic, version, h, w, pitch, timestamp = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise DataError(f"{path}: unsupported version {version}")
    n = h * w
    expected = _HEADER.size + 4 * (2 * n + n) + n
    if len(raw) != expected:
        raise DataError(f"{path}: size {len(raw)} != expected {expected}")
    offset = _HEADER.size
    grads = np.frombuffer(raw, dtype="<f4", count=2 * n, offset=offset)
    offset += 4 * 2 * n
    heights = np.frombuffer(raw, dtype="<f4", count=n, offset=offset)
    offset += 4 * n
    mask = np.frombuffer(raw, dtype=np.uint8, count=n, offset=offset)
    geom = GridGeometry(h, w, pitch)
    gradients = np.moveaxis(grads.reshape(2, h, w), 0, -1).astype(float)
    return make_frame(
        geom,
        gradients,
        heights.reshape(h, w).astype(float),
        mask.reshape(h, w).astype(bool),
        timestamp=timestamp,
    )


def transform_to_csv_row(index: int, transform: RigidTransform) -> list:
    p = transform_to_params(transform)
    return [
        index,
        p.x,
        p.y,
        p.z,
        float(np.degrees(p.theta_x)),
        float(np.degrees(p.theta_y)),
        float(np.degrees(p.theta_z)),
    ]


def save_pose_csv(path, transforms) -> None:
    """Write transforms (iterable of RigidTransform) as a pose CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(POSE_CSV_HEADER)
        for i, t in enumerate(transforms):
            row = transform_to_csv_row(i, t)
            writer.writerow([row[0]] + [f"{v:.17g}" for v in row[1:]])


def load_pose_csv(path) -> list[RigidTransform]:
    rows = load_pose_rows(path)
    out = []
    for row in rows:
        params = PoseParams(
            row[1],
            row[2],
            row[3],
            float(np.radians(row[4])),
            float(np.radians(row[5])),
            float(np.radians(row[6])),
        )
        out.append(params_to_transform(params))
    return out


def load_pose_rows(path) -> list[list[float]]:
    """Raw numeric rows [index, x, y, z, tx_deg, ty_deg, tz_deg]."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader):
            if not row:
                continue
            if lineno == 0 and row[0].strip() == POSE_CSV_HEADER[0]:
                continue
            if len(row) != 7:
                raise DataError(f"{path}:{lineno + 1}: expected 7 columns")
            try:
                out.append([float(x) for x in row])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno + 1}: {exc}") from exc
    return out


def frame_paths(dataset_dir) -> list[Path]:
    """Frame files of a dataset directory, ordered by name."""
    root = Path(dataset_dir)
    paths = sorted(root.glob("frame_*.nflw"))
    if not paths:
        raise DataError(f"{root}: no frame_*.nflw files")
    return paths
