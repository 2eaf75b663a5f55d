"""Core geometric types, preprocessing transforms, grid indexing and error metrics.

Conventions used throughout the package:

- World frame is right-handed with +z up. Yaw is measured about +z from the
  +x axis (atan2 convention), pitch is elevation above the horizontal plane.
  Angles on public interfaces are degrees; radians stay internal.
- Camera frame is the usual CV one: +x right, +y down, +z forward (optical
  axis). ``Pose`` stores camera-to-world transforms.
- In-plane (roll) rotation about the optical axis is intentionally not
  representable in ``ViewGrid``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

__all__ = [
    "Quat",
    "Pose",
    "Landmark",
    "Waypoint",
    "ViewGrid",
    "GridCell",
    "CameraIntrinsics",
    "OccluderBox",
    "wrap_deg",
    "yaw_pitch_to_quat",
    "exp_so3",
    "log_so3",
    "cell_to_angles",
    "angles_to_cell",
    "egocentric_transform",
    "filter_uncertain",
    "crop_box",
    "grid_distance",
    "pose_error",
    "DEFAULT_MIN_TRACK",
    "DEFAULT_MAX_REPROJ",
    "DEFAULT_CROP_HALF_EXTENT",
]

# Landmark uncertainty filter and crop-box defaults; configurable everywhere
# they are used.
DEFAULT_MIN_TRACK = 2
DEFAULT_MAX_REPROJ = 2.0
DEFAULT_CROP_HALF_EXTENT = 5.0

_UNIT_TOL = 1e-9


def wrap_deg(angle: float) -> float:
    """Wrap an angle in degrees to [-180, 180)."""
    a = math.fmod(angle + 180.0, 360.0)
    if a < 0.0:
        a += 360.0
    return a - 180.0


def _as_vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64).reshape(3)
    return a.copy()


@dataclass(frozen=True)
class Quat:
    """Unit quaternion with canonical sign (w >= 0); q and -q are identified."""

    w: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        n = math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)
        if not math.isfinite(n) or n < 1e-12:
            raise ValueError("quaternion norm must be finite and nonzero")
        w, x, y, z = self.w / n, self.x / n, self.y / n, self.z / n
        if w < 0.0:
            w, x, y, z = -w, -x, -y, -z
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)

    @property
    def wxyz(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z], dtype=np.float64)

    @staticmethod
    def identity() -> "Quat":
        return Quat(1.0, 0.0, 0.0, 0.0)

    @staticmethod
    def from_matrix(r: np.ndarray) -> "Quat":
        """Quaternion of a rotation matrix (Shepperd's method)."""
        r = np.asarray(r, dtype=np.float64)
        t = np.trace(r)
        if t > 0.0:
            s = math.sqrt(t + 1.0) * 2.0
            w = 0.25 * s
            x = (r[2, 1] - r[1, 2]) / s
            y = (r[0, 2] - r[2, 0]) / s
            z = (r[1, 0] - r[0, 1]) / s
        elif r[0, 0] >= r[1, 1] and r[0, 0] >= r[2, 2]:
            s = math.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2.0
            w = (r[2, 1] - r[1, 2]) / s
            x = 0.25 * s
            y = (r[0, 1] + r[1, 0]) / s
            z = (r[0, 2] + r[2, 0]) / s
        elif r[1, 1] >= r[2, 2]:
            s = math.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2.0
            w = (r[0, 2] - r[2, 0]) / s
            x = (r[0, 1] + r[1, 0]) / s
            y = 0.25 * s
            z = (r[1, 2] + r[2, 1]) / s
        else:
            s = math.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2.0
            w = (r[1, 0] - r[0, 1]) / s
            x = (r[0, 2] + r[2, 0]) / s
            y = (r[1, 2] + r[2, 1]) / s
            z = 0.25 * s
        return Quat(w, x, y, z)

    def to_matrix(self) -> np.ndarray:
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ],
            dtype=np.float64,
        )

    def __mul__(self, other: "Quat") -> "Quat":
        w1, x1, y1, z1 = self.w, self.x, self.y, self.z
        w2, x2, y2, z2 = other.w, other.x, other.y, other.z
        return Quat(
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        )

    def conjugate(self) -> "Quat":
        return Quat(self.w, -self.x, -self.y, -self.z)

    def rotate(self, v) -> np.ndarray:
        return self.to_matrix() @ _as_vec3(v)

    def angle_to(self, other: "Quat") -> float:
        """Relative rotation angle in degrees, in [0, 180]; sign-flip invariant."""
        rel = self.conjugate() * other
        vec = math.sqrt(rel.x**2 + rel.y**2 + rel.z**2)
        return math.degrees(2.0 * math.atan2(vec, abs(rel.w)))


@dataclass(frozen=True)
class Pose:
    """Camera-to-world pose: ``x_world = R(orientation) @ x_cam + position``."""

    position: np.ndarray
    orientation: Quat

    def __post_init__(self):
        object.__setattr__(self, "position", _as_vec3(self.position))

    def rotation(self) -> np.ndarray:
        return self.orientation.to_matrix()


@dataclass(frozen=True)
class Landmark:
    """3D map point with color and track metadata.

    ``track`` lists the ids of the mapping poses that observed the point;
    ``track_len`` is always its length.
    """

    position: np.ndarray
    color: np.ndarray
    reproj_err: float = 0.0
    track: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "position", _as_vec3(self.position))
        color = _as_vec3(self.color)
        if np.any(color < 0.0) or np.any(color > 1.0):
            raise ValueError("color components must lie in [0, 1]")
        object.__setattr__(self, "color", color)
        if self.reproj_err < 0.0:
            raise ValueError("reproj_err must be non-negative")
        object.__setattr__(self, "track", tuple(int(i) for i in self.track))

    @property
    def track_len(self) -> int:
        return len(self.track)


@dataclass(frozen=True)
class Waypoint:
    """A 3D position with the reference yaw the view grid is anchored to."""

    position: np.ndarray
    default_yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", _as_vec3(self.position))
        if not -180.0 <= self.default_yaw < 180.0:
            raise ValueError("default_yaw must lie in [-180, 180)")


@dataclass(frozen=True)
class ViewGrid:
    """Sampled viewing directions: rows are pitch angles, columns are yaw angles.

    Cells are sampled directions, not bin centers. Yaw columns cover the full
    circle; pitch rows cover a band that must stay below +90 degrees.
    """

    n_pitch: int = 6
    n_yaw: int = 18
    pitch_min: float = -60.0
    pitch_step: float = 20.0
    yaw_min: float = -180.0
    yaw_step: float = 20.0

    def __post_init__(self):
        if self.n_pitch < 1 or self.n_yaw < 1:
            raise ValueError("grid must have at least one row and one column")
        if self.pitch_step <= 0.0 or self.yaw_step <= 0.0:
            raise ValueError("grid steps must be positive")
        if self.pitch_min + self.n_pitch * self.pitch_step > 90.0 + 1e-9:
            raise ValueError("pitch band must not extend past +90 degrees")
        if abs(self.n_yaw * self.yaw_step - 360.0) > 1e-9:
            raise ValueError("yaw columns must cover exactly 360 degrees")

    @property
    def shape(self) -> tuple:
        return (self.n_pitch, self.n_yaw)

    def pitch_values(self) -> np.ndarray:
        return self.pitch_min + self.pitch_step * np.arange(self.n_pitch)

    def yaw_values(self) -> np.ndarray:
        return np.array(
            [wrap_deg(self.yaw_min + self.yaw_step * j) for j in range(self.n_yaw)]
        )

    def cells(self):
        for i in range(self.n_pitch):
            for j in range(self.n_yaw):
                yield GridCell(i, j)


class GridCell(NamedTuple):
    i: int  # pitch row
    j: int  # yaw column


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics; one shared camera per scene."""

    width: int = 640
    height: int = 480
    fx: float = 320.0
    fy: float = 320.0
    cx: float = 320.0
    cy: float = 240.0

    def __post_init__(self):
        if min(self.width, self.height) <= 0 or min(self.fx, self.fy) <= 0:
            raise ValueError("intrinsics must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")


@dataclass(frozen=True)
class OccluderBox:
    """Axis-aligned box blocking line of sight."""

    min_corner: np.ndarray
    max_corner: np.ndarray

    def __post_init__(self):
        lo = _as_vec3(self.min_corner)
        hi = _as_vec3(self.max_corner)
        if np.any(lo >= hi):
            raise ValueError("min_corner must be componentwise below max_corner")
        object.__setattr__(self, "min_corner", lo)
        object.__setattr__(self, "max_corner", hi)

    def contains(self, p) -> bool:
        p = _as_vec3(p)
        return bool(np.all(p >= self.min_corner) and np.all(p <= self.max_corner))


def yaw_pitch_to_quat(yaw_deg: float, pitch_deg: float) -> Quat:
    """Roll-free camera orientation looking along (yaw, pitch).

    The optical axis points at
    ``(cos(pitch)cos(yaw), cos(pitch)sin(yaw), sin(pitch))`` and the image
    x-axis stays horizontal. Valid for |pitch| < 90.
    """
    psi = math.radians(yaw_deg)
    theta = math.radians(pitch_deg)
    cy, sy = math.cos(psi), math.sin(psi)
    cp, sp = math.cos(theta), math.sin(theta)
    forward = np.array([cy * cp, sy * cp, sp])
    right = np.array([sy, -cy, 0.0])
    down = np.cross(forward, right)
    r = np.column_stack([right, down, forward])
    return Quat.from_matrix(r)


def exp_so3(w: np.ndarray) -> np.ndarray:
    """Rotation matrix of a rotation vector (Rodrigues)."""
    w = np.asarray(w, dtype=np.float64).reshape(3)
    theta = float(np.linalg.norm(w))
    k = np.array(
        [[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]]
    )
    if theta < 1e-12:
        return np.eye(3) + k
    a = math.sin(theta) / theta
    b = (1.0 - math.cos(theta)) / (theta * theta)
    return np.eye(3) + a * k + b * (k @ k)


def log_so3(r: np.ndarray) -> np.ndarray:
    """Rotation vector of a rotation matrix; inverse of :func:`exp_so3`."""
    r = np.asarray(r, dtype=np.float64)
    cos_theta = max(-1.0, min(1.0, (np.trace(r) - 1.0) / 2.0))
    theta = math.acos(cos_theta)
    if theta < 1e-12:
        return np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]]) / 2.0
    if theta > math.pi - 1e-6:
        # Near 180 degrees the antisymmetric part degenerates; recover the
        # axis from the symmetric part.
        a = (r + np.eye(3)) / 2.0
        axis = np.sqrt(np.maximum(np.diag(a), 0.0))
        k = int(np.argmax(axis))
        v = a[:, k] / max(axis[k], 1e-12)
        v = v / np.linalg.norm(v)
        return v * theta
    vec = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    return vec * theta / (2.0 * math.sin(theta))


def cell_to_angles(grid: ViewGrid, cell: GridCell) -> tuple:
    """Pitch and yaw (degrees) sampled by a grid cell; yaw wrapped to [-180, 180)."""
    i, j = cell
    if not (0 <= i < grid.n_pitch and 0 <= j < grid.n_yaw):
        raise IndexError(f"cell {cell} outside {grid.n_pitch}x{grid.n_yaw} grid")
    pitch = grid.pitch_min + i * grid.pitch_step
    yaw = wrap_deg(grid.yaw_min + j * grid.yaw_step)
    return pitch, yaw


def angles_to_cell(grid: ViewGrid, pitch: float, yaw: float) -> GridCell:
    """Nearest grid cell to (pitch, yaw); yaw wraps, half-ties round to the lower index."""
    band = grid.n_pitch * grid.pitch_step
    if not (grid.pitch_min <= pitch < grid.pitch_min + band):
        raise ValueError(
            f"pitch {pitch} outside covered band "
            f"[{grid.pitch_min}, {grid.pitch_min + band})"
        )
    fi = (pitch - grid.pitch_min) / grid.pitch_step
    i = int(min(max(math.ceil(fi - 0.5), 0), grid.n_pitch - 1))
    fj = ((yaw - grid.yaw_min) % 360.0) / grid.yaw_step
    j = int(math.ceil(fj - 0.5)) % grid.n_yaw
    return GridCell(i, j)


def egocentric_transform(
    poses: Sequence[Pose], landmarks: Sequence[Landmark], wp: Waypoint
) -> tuple:
    """Shift poses and landmarks into the waypoint's local frame.

    Only origins move; orientations, colors and track metadata are preserved.
    """
    origin = wp.position
    new_poses = [Pose(p.position - origin, p.orientation) for p in poses]
    new_landmarks = [
        Landmark(l.position - origin, l.color, l.reproj_err, l.track)
        for l in landmarks
    ]
    return new_poses, new_landmarks


def filter_uncertain(
    landmarks: Sequence[Landmark],
    min_track: int = DEFAULT_MIN_TRACK,
    max_reproj: float = DEFAULT_MAX_REPROJ,
) -> list:
    """Drop landmarks with short tracks or large reprojection error."""
    if min_track < 0:
        raise ValueError("min_track must be non-negative")
    if max_reproj <= 0.0:
        raise ValueError("max_reproj must be positive")
    return [
        l for l in landmarks if l.track_len >= min_track and l.reproj_err <= max_reproj
    ]


def crop_box(landmarks: Sequence[Landmark], half_extent: float = DEFAULT_CROP_HALF_EXTENT) -> list:
    """Keep egocentric landmarks inside the closed cube |x|,|y|,|z| <= half_extent."""
    if half_extent <= 0.0:
        raise ValueError("half_extent must be positive")
    return [l for l in landmarks if np.all(np.abs(l.position) <= half_extent)]


def grid_distance(
    grid: ViewGrid,
    a: GridCell,
    b: GridCell,
    sigma_pitch: float,
    sigma_yaw: float,
) -> float:
    """Sigma-normalized angular distance between two cells; yaw wraps circularly."""
    if sigma_pitch <= 0.0 or sigma_yaw <= 0.0:
        raise ValueError("sigmas must be positive")
    pa, ya = cell_to_angles(grid, a)
    pb, yb = cell_to_angles(grid, b)
    dp = pa - pb
    dy = abs(ya - yb) % 360.0
    dy = min(dy, 360.0 - dy)
    return math.sqrt((dp / sigma_pitch) ** 2 + (dy / sigma_yaw) ** 2)


def pose_error(est: Pose, gt: Pose) -> tuple:
    """Translation error (meters) and rotation error (degrees, in [0, 180])."""
    t_err = float(np.linalg.norm(est.position - gt.position))
    r_err = est.orientation.angle_to(gt.orientation)
    return t_err, r_err
