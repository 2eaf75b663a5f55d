"""Synthetic room scenes with box occluders and pinhole visibility.

A scene is a room spanning ``[0, extent]`` on each axis. Landmarks live on
the four vertical walls (per-wall feature richness weights) and on occluder
faces; occluders are axis-aligned boxes in the interior that block line of
sight. Visibility uses an exact pinhole frustum test plus an open-segment
slab test against the boxes, so localization difficulty varies with viewing
direction by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from . import kernels
from .errors import ConfigError
from .geom import (
    CameraIntrinsics,
    Landmark,
    OccluderBox,
    Pose,
    Waypoint,
    yaw_pitch_to_quat,
)
from .sfm_io import SceneModel

__all__ = [
    "CameraIntrinsics",
    "OccluderBox",
    "SceneSpec",
    "generate_scene",
    "visible_landmarks",
    "build_mapping_sweep",
    "sample_free_position",
]

_WALL_MARGIN = 0.2  # occluders and anchors keep this distance from walls
_MAX_REJECTS = 200


@dataclass(frozen=True)
class SceneSpec:
    """Parameters of a generated room scene."""

    room_extent: Tuple[float, float, float] = (8.0, 6.0, 3.0)
    n_landmarks: int = 600
    n_occluders: int = 2
    # Density weights of the walls x=0, x=ex, y=0, y=ey.
    feature_richness_field: Tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    seed: int = 0

    def __post_init__(self):
        if min(self.room_extent) <= 0.0:
            raise ValueError("room_extent must be positive")
        if self.n_landmarks < 0 or self.n_occluders < 0:
            raise ValueError("counts must be non-negative")
        if any(not 0.0 <= w <= 1.0 for w in self.feature_richness_field):
            raise ValueError("richness weights must lie in [0, 1]")


def _wall_surfaces(extent, weights):
    """(normal_axis, plane_coord, u_axis, v_axis, area, weight) per wall."""
    ex, ey, ez = extent
    return [
        (0, 0.0, 1, 2, ey * ez, weights[0]),
        (0, ex, 1, 2, ey * ez, weights[1]),
        (1, 0.0, 0, 2, ex * ez, weights[2]),
        (1, ey, 0, 2, ex * ez, weights[3]),
    ]


def _box_surfaces(box: OccluderBox):
    size = box.max_corner - box.min_corner
    out = []
    for axis in range(3):
        u, v = [a for a in range(3) if a != axis]
        area = size[u] * size[v]
        out.append((axis, float(box.min_corner[axis]), u, v, area, 1.0, box))
        out.append((axis, float(box.max_corner[axis]), u, v, area, 1.0, box))
    return out


def generate_scene(spec: SceneSpec) -> SceneModel:
    """Generate a seeded scene; mapping poses start empty.

    Landmark density per surface is proportional to weight times area; colors
    are random 8-bit values scaled to [0, 1]; synthetic reprojection errors
    let the uncertainty filter bite on a small tail.
    """
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    extent = np.asarray(spec.room_extent, dtype=np.float64)

    occluders: List[OccluderBox] = []
    for _ in range(spec.n_occluders):
        half = rng.uniform(0.15, 0.75, size=3)
        lo_lim = _WALL_MARGIN + half
        hi_lim = extent - _WALL_MARGIN - half
        center = np.where(hi_lim > lo_lim, rng.uniform(lo_lim, hi_lim), extent / 2.0)
        occluders.append(OccluderBox(center - half, center + half))

    surfaces = []
    for axis, coord, u, v, area, w in _wall_surfaces(extent, spec.feature_richness_field):
        surfaces.append((axis, coord, u, v, area, w, None))
    for box in occluders:
        surfaces.extend(_box_surfaces(box))

    weights = np.array([s[4] * s[5] for s in surfaces], dtype=np.float64)
    landmarks: List[Landmark] = []
    if spec.n_landmarks > 0:
        if weights.sum() <= 0.0:
            raise ConfigError("all surface densities are zero")
        probs = weights / weights.sum()
        choices = rng.choice(len(surfaces), size=spec.n_landmarks, p=probs)
        colors = rng.integers(0, 256, size=(spec.n_landmarks, 3)) / 255.0
        reproj = np.clip(np.abs(rng.normal(0.8, 0.5, size=spec.n_landmarks)), 0.0, 3.0)
        for k in range(spec.n_landmarks):
            axis, coord, u, v, area, w, box = surfaces[choices[k]]
            pos = np.zeros(3)
            pos[axis] = coord
            if box is None:
                lo_u, hi_u = 0.0, extent[u]
                lo_v, hi_v = 0.0, extent[v]
            else:
                lo_u, hi_u = box.min_corner[u], box.max_corner[u]
                lo_v, hi_v = box.min_corner[v], box.max_corner[v]
            pos[u] = rng.uniform(lo_u, hi_u)
            pos[v] = rng.uniform(lo_v, hi_v)
            landmarks.append(Landmark(pos, colors[k], reproj_err=float(reproj[k])))

    return SceneModel(
        intrinsics=CameraIntrinsics(),
        poses=[],
        pose_ids=[],
        landmarks=landmarks,
        occluders=occluders,
    )


def visible_landmarks(
    scene: SceneModel, pose: Pose, intrinsics: CameraIntrinsics | None = None
):
    """Landmarks visible from a pose as (index, pixel, depth) tuples.

    Visible means positive camera depth, projected pixel inside the image,
    and no occluder box crossing the open segment camera-center -> landmark.
    """
    intr = intrinsics or scene.intrinsics
    mask, pix, depth = kernels.visibility(
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
    idx = np.nonzero(mask)[0]
    return [(int(i), pix[i].copy(), float(depth[i])) for i in idx]


def point_in_any_box(p, boxes: Sequence[OccluderBox]) -> bool:
    return any(b.contains(p) for b in boxes)


def sample_free_position(rng, extent, boxes, z_range, margin=_WALL_MARGIN):
    """Uniform free-space point with z in z_range, outside all occluders."""
    for _ in range(_MAX_REJECTS):
        p = np.array(
            [
                rng.uniform(margin, extent[0] - margin),
                rng.uniform(margin, extent[1] - margin),
                rng.uniform(*z_range),
            ]
        )
        if not point_in_any_box(p, boxes):
            return p
    raise ConfigError("could not sample a free-space position; occluders too dense")


def build_mapping_sweep(
    scene: SceneModel,
    height_range: Tuple[float, float] = (1.5, 2.0),
    grid_spacing: float = 2.0,
    azimuth_step: float = 36.0,
    elevation_range: Tuple[int, int] = (-15, 15),
    seed: int = 0,
) -> List[Pose]:
    """Run the mapping sweep and register landmark tracks in place.

    Anchors sit on a jittered grid in free space at sampled heights. Each
    anchor contributes ceil(360 / azimuth_step) poses; every pose draws an
    integer elevation uniform in ``elevation_range`` (half-open). Visible
    landmarks have the pose id appended to their track; landmarks never
    observed by any sweep pose are dropped from the scene.
    """
    if grid_spacing <= 0.0 or azimuth_step <= 0.0:
        raise ValueError("spacing and azimuth_step must be positive")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EE9]))
    extent = _scene_extent(scene)
    n_per_anchor = math.ceil(360.0 / azimuth_step)

    anchors = []
    xs = np.arange(_WALL_MARGIN + grid_spacing / 2.0, extent[0] - _WALL_MARGIN, grid_spacing)
    ys = np.arange(_WALL_MARGIN + grid_spacing / 2.0, extent[1] - _WALL_MARGIN, grid_spacing)
    for x0 in xs:
        for y0 in ys:
            placed = False
            for _ in range(_MAX_REJECTS):
                jitter = rng.uniform(-0.25, 0.25, size=2) * grid_spacing
                z = rng.uniform(height_range[0], min(height_range[1], extent[2]))
                p = np.array([x0 + jitter[0], y0 + jitter[1], z])
                p[0] = min(max(p[0], _WALL_MARGIN), extent[0] - _WALL_MARGIN)
                p[1] = min(max(p[1], _WALL_MARGIN), extent[1] - _WALL_MARGIN)
                if not point_in_any_box(p, scene.occluders):
                    anchors.append(p)
                    placed = True
                    break
            if not placed:
                raise ConfigError(
                    "could not place a sweep anchor; occluders too dense"
                )

    next_id = max(scene.pose_ids, default=0) + 1
    new_poses: List[Pose] = []
    tracks = [list(lm.track) for lm in scene.landmarks]
    positions = scene.landmark_positions()
    boxes = scene.occluder_bounds()
    intr = scene.intrinsics
    for anchor in anchors:
        for k in range(n_per_anchor):
            yaw = (k * azimuth_step) % 360.0
            yaw = yaw - 360.0 if yaw >= 180.0 else yaw
            elev = int(rng.integers(elevation_range[0], elevation_range[1]))
            pose = Pose(anchor, yaw_pitch_to_quat(yaw, float(elev)))
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
            pid = next_id
            next_id += 1
            for li in np.nonzero(mask)[0]:
                tracks[li].append(pid)
            new_poses.append(pose)
            scene.poses.append(pose)
            scene.pose_ids.append(pid)

    kept = []
    for lm, track in zip(scene.landmarks, tracks):
        if track:
            kept.append(Landmark(lm.position, lm.color, lm.reproj_err, tuple(track)))
    scene.landmarks = kept
    return new_poses


def _scene_extent(scene: SceneModel) -> np.ndarray:
    """Room extent recovered from wall landmarks and occluders."""
    hi = np.zeros(3)
    if scene.landmarks:
        hi = np.maximum(hi, scene.landmark_positions().max(axis=0))
    for b in scene.occluders:
        hi = np.maximum(hi, b.max_corner)
    if np.all(hi <= 0.0):
        raise ConfigError("empty scene has no measurable extent")
    return hi


def make_waypoint(rng, scene: SceneModel, height_range=(0.4, 2.0)) -> Waypoint:
    """Seeded uniform free-space waypoint at a height in ``height_range``."""
    extent = _scene_extent(scene)
    p = sample_free_position(rng, extent, scene.occluders, height_range)
    return Waypoint(p, default_yaw=0.0)
