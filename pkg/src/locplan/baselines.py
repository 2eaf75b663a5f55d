"""Non-learned viewpoint scorers: bearing-vector Fisher information and forward-facing.

The information matrix treats each visible landmark as a bearing measurement
with 1/d^2 weighting, so it depends only on the set of visible landmarks and
the camera center, never on camera roll.
"""

from __future__ import annotations

import enum
import math

import numpy as np

from . import kernels
from .geom import (
    CameraIntrinsics,
    GridCell,
    Pose,
    ViewGrid,
    Waypoint,
    cell_to_angles,
    wrap_deg,
    yaw_pitch_to_quat,
)
from .locmap import LocMap
from .sfm_io import SceneModel

__all__ = [
    "FifMetric",
    "bearing_info_matrix",
    "fif_info_matrix",
    "fif_metric_value",
    "fif_locmap",
    "forward_facing",
]


class FifMetric(enum.Enum):
    MIN_EIGENVALUE = "mineig"
    DETERMINANT = "det"
    TRACE = "trace"


def bearing_info_matrix(positions: np.ndarray, center) -> np.ndarray:
    """sum over points of (I - b b^T) / d^2 with b the unit bearing from center."""
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    center = np.asarray(center, dtype=np.float64).reshape(3)
    info = np.zeros((3, 3))
    if positions.shape[0] == 0:
        return info
    rel = positions - center
    d2 = np.sum(rel * rel, axis=1)
    ok = d2 > 1e-24
    rel = rel[ok]
    d2 = d2[ok]
    b = rel / np.sqrt(d2)[:, None]
    info = np.eye(3) * np.sum(1.0 / d2) - (b / d2[:, None]).T @ b
    return info


def _cell_pose(wp: Waypoint, grid: ViewGrid, cell: GridCell) -> Pose:
    pitch, yaw = cell_to_angles(grid, cell)
    return Pose(wp.position, yaw_pitch_to_quat(wrap_deg(yaw + wp.default_yaw), pitch))


def fif_info_matrix(
    scene: SceneModel,
    wp: Waypoint,
    cell: GridCell,
    grid: ViewGrid = ViewGrid(),
    intrinsics: CameraIntrinsics | None = None,
) -> np.ndarray:
    """Information matrix of the landmarks visible from (waypoint, cell)."""
    intr = intrinsics or scene.intrinsics
    pose = _cell_pose(wp, grid, cell)
    mask, _, _ = kernels.visibility(
        scene.landmark_positions(),
        pose.rotation(),
        pose.position,
        intr.fx,
        intr.fy,
        intr.cx,
        intr.cy,
        intr.width,
        intr.height,
        scene.occluder_bounds(),
    )
    return bearing_info_matrix(scene.landmark_positions()[mask], wp.position)


def fif_metric_value(info: np.ndarray, metric: FifMetric) -> float:
    if metric is FifMetric.MIN_EIGENVALUE:
        return float(np.linalg.eigvalsh(info)[0])
    if metric is FifMetric.DETERMINANT:
        return float(np.linalg.det(info))
    return float(np.trace(info))


def fif_locmap(
    scene: SceneModel,
    wp: Waypoint,
    grid: ViewGrid = ViewGrid(),
    metric: FifMetric = FifMetric.MIN_EIGENVALUE,
    intrinsics: CameraIntrinsics | None = None,
) -> LocMap:
    """Raw (not probability) information scores for every grid cell.

    Shares one visibility pass per cell with the info matrix; scores are the
    chosen metric of the per-cell matrices.
    """
    intr = intrinsics or scene.intrinsics
    positions = scene.landmark_positions()
    boxes = scene.occluder_bounds()
    values = np.zeros(grid.shape)
    for cell in grid.cells():
        pose = _cell_pose(wp, grid, cell)
        mask, _, _ = kernels.visibility(
            positions,
            pose.rotation(),
            pose.position,
            intr.fx,
            intr.fy,
            intr.cx,
            intr.cy,
            intr.width,
            intr.height,
            boxes,
        )
        info = bearing_info_matrix(positions[mask], wp.position)
        values[cell.i, cell.j] = fif_metric_value(info, metric)
    return LocMap(grid, values)


def forward_facing(prev_heading_yaw: float, grid: ViewGrid = ViewGrid()) -> GridCell:
    """Grid cell nearest to pitch 0 and the direction of travel."""
    fi = (0.0 - grid.pitch_min) / grid.pitch_step
    i = int(min(max(math.ceil(fi - 0.5), 0), grid.n_pitch - 1))
    fj = ((prev_heading_yaw - grid.yaw_min) % 360.0) / grid.yaw_step
    j = int(math.ceil(fj - 0.5)) % grid.n_yaw
    return GridCell(i, j)
