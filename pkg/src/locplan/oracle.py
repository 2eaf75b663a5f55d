"""Ground-truth localization oracle and training-data generation.

For a waypoint and viewing direction the oracle simulates a noisy feature
observation of the scene, solves the 6-dof camera pose by Huber-robustified
Gauss-Newton on reprojection error, and labels the direction by whether the
recovered pose lands within an error threshold of the truth. Sweeping all
grid directions at a waypoint yields its label grid plus per-cell errors.

Every (waypoint, cell) unit draws from its own derived RNG stream, so label
generation is reproducible and independent of scheduling.
"""

from __future__ import annotations

import json
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import kernels
from .errors import ConfigError, ParseError
from .geom import (
    DEFAULT_CROP_HALF_EXTENT,
    DEFAULT_MAX_REPROJ,
    DEFAULT_MIN_TRACK,
    CameraIntrinsics,
    Landmark,
    Pose,
    Quat,
    ViewGrid,
    Waypoint,
    cell_to_angles,
    crop_box,
    egocentric_transform,
    exp_so3,
    filter_uncertain,
    pose_error,
    wrap_deg,
    yaw_pitch_to_quat,
)
from .sfm_io import SceneModel
from .simworld import make_waypoint, visible_landmarks

__all__ = [
    "BENCHMARK_THRESHOLDS",
    "DEFAULT_LABEL_THRESHOLD_INDEX",
    "NoiseSpec",
    "Observation",
    "SolveOptions",
    "LocalizationResult",
    "TrainingSample",
    "PreprocessSpec",
    "simulate_observation",
    "perturb_pose",
    "solve_pose",
    "label_waypoint",
    "quality_levels",
    "generate_dataset",
    "save_dataset",
    "load_dataset",
]

# (translation m, rotation deg) success thresholds, tightest first.
BENCHMARK_THRESHOLDS = ((0.1, 1.0), (0.25, 2.0), (0.5, 5.0), (5.0, 10.0))
DEFAULT_LABEL_THRESHOLD_INDEX = 2  # 0.5 m / 5 deg

# Solver initialization offset from the true pose (stand-in for a coarse
# retrieval stage); the solver must converge from at least this far.
INIT_T_OFFSET = 0.3
INIT_R_OFFSET_DEG = 10.0


@dataclass(frozen=True)
class NoiseSpec:
    """Observation noise model; ``seed`` roots all derived streams."""

    pixel_sigma: float = 1.0
    outlier_rate: float = 0.1
    drop_rate: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.pixel_sigma < 0.0:
            raise ValueError("pixel_sigma must be non-negative")
        for r in (self.outlier_rate, self.drop_rate):
            if not 0.0 <= r <= 1.0:
                raise ValueError("rates must lie in [0, 1]")


@dataclass(frozen=True)
class Observation:
    """2D-3D correspondences: (landmark index, measured pixel) pairs."""

    correspondences: tuple

    def __len__(self):
        return len(self.correspondences)


@dataclass(frozen=True)
class SolveOptions:
    max_iters: int = 50
    huber_delta: float = 2.0
    convergence_eps: float = 1e-8
    min_points: int = 6


@dataclass(frozen=True)
class LocalizationResult:
    success: bool
    est_pose: Optional[Pose]
    t_err: float
    r_err: float
    n_inliers: int
    iterations: int


@dataclass(frozen=True)
class PreprocessSpec:
    """Input preprocessing knobs, applied as filter -> egocentric -> crop."""

    min_track: int = DEFAULT_MIN_TRACK
    max_reproj: float = DEFAULT_MAX_REPROJ
    crop_half_extent: float = DEFAULT_CROP_HALF_EXTENT


@dataclass
class TrainingSample:
    """Preprocessed waypoint inputs with oracle labels and per-cell errors."""

    scene_id: str
    waypoint: Waypoint
    grid: ViewGrid
    poses: List[Pose]  # egocentric mapping poses
    landmarks: List[Landmark]  # filtered, egocentric, cropped
    labels: np.ndarray  # (H, W) ints
    t_err: np.ndarray  # (H, W), +inf where localization failed
    r_err: np.ndarray

    def __post_init__(self):
        if self.labels.shape != self.grid.shape:
            raise ValueError("labels shape must match the grid")


def _waypoint_stream_key(wp: Waypoint) -> int:
    buf = np.asarray(wp.position, dtype=np.float64).tobytes()
    buf += np.float64(wp.default_yaw).tobytes()
    return zlib.crc32(buf)


def _random_unit(rng) -> np.ndarray:
    while True:
        v = rng.normal(size=3)
        n = np.linalg.norm(v)
        if n > 1e-12:
            return v / n


def perturb_pose(pose: Pose, t_mag: float, r_mag_deg: float, rng) -> Pose:
    """Offset a pose by exactly t_mag meters and r_mag_deg degrees (seeded direction)."""
    dp = _random_unit(rng) * t_mag
    axis = _random_unit(rng) * math.radians(r_mag_deg)
    r = pose.rotation() @ exp_so3(axis)
    return Pose(pose.position + dp, Quat.from_matrix(r))


def simulate_observation(
    scene: SceneModel,
    true_pose: Pose,
    intrinsics: CameraIntrinsics | None = None,
    noise: NoiseSpec = NoiseSpec(),
    rng=None,
) -> Observation:
    """Noisy observation of the visible landmarks from ``true_pose``.

    Each visible landmark is independently dropped with ``drop_rate``;
    survivors get Gaussian pixel noise and are replaced by a uniform
    in-bounds pixel with ``outlier_rate``. All random draws happen for the
    full visible set in a fixed order, so the stream layout does not depend
    on intermediate outcomes. Measured pixels are clipped into the image.
    """
    intr = intrinsics or scene.intrinsics
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence([noise.seed]))
    vis = visible_landmarks(scene, true_pose, intr)
    n = len(vis)
    if n == 0:
        return Observation(())
    drop = rng.random(n) < noise.drop_rate
    gauss = rng.normal(size=(n, 2)) * noise.pixel_sigma
    outlier = rng.random(n) < noise.outlier_rate
    uniform = rng.uniform(size=(n, 2)) * np.array([intr.width, intr.height])

    corr = []
    for k, (idx, pix, _depth) in enumerate(vis):
        if drop[k]:
            continue
        measured = uniform[k] if outlier[k] else pix + gauss[k]
        measured = np.clip(
            measured, 0.0, [intr.width - 1e-9, intr.height - 1e-9]
        )
        corr.append((idx, measured))
    return Observation(tuple(corr))


def _huber_cost(rnorms: np.ndarray, delta: float) -> float:
    small = rnorms <= delta
    cost = 0.5 * np.sum(rnorms[small] ** 2)
    cost += np.sum(delta * (rnorms[~small] - 0.5 * delta))
    return float(cost)


def solve_pose(
    obs: Observation,
    scene: SceneModel,
    intrinsics: CameraIntrinsics | None,
    init: Pose,
    true_pose: Pose,
    opts: SolveOptions = SolveOptions(),
) -> LocalizationResult:
    """Gauss-Newton pose solve; errors are reported against ``true_pose``.

    The local parameterization is 3 translation plus 3 rotation-vector
    increments applied on the right; a step-halving line search keeps the
    robust cost non-increasing. Failure (too few points, singular normal
    equations, or no convergence) yields infinite errors, not an exception.
    """
    intr = intrinsics or scene.intrinsics
    failure = LocalizationResult(False, None, math.inf, math.inf, 0, 0)
    if len(obs) < opts.min_points:
        return failure

    indices = [c[0] for c in obs.correspondences]
    points = scene.landmark_positions()[indices]
    meas = np.array([c[1] for c in obs.correspondences], dtype=np.float64)

    rot = init.rotation()
    center = init.position.copy()
    delta = opts.huber_delta
    h, g, rnorms = kernels.gn_accumulate(
        points, meas, rot, center, intr.fx, intr.fy, intr.cx, intr.cy, delta
    )
    cost = _huber_cost(rnorms, delta)
    converged = False
    iterations = 0

    for _ in range(opts.max_iters):
        if not (np.all(np.isfinite(h)) and np.all(np.isfinite(g))):
            return failure
        try:
            step = -np.linalg.solve(h, g)
        except np.linalg.LinAlgError:
            return failure
        if not np.all(np.isfinite(step)):
            return failure
        iterations += 1
        if np.linalg.norm(step) < opts.convergence_eps:
            converged = True
            break

        alpha = 1.0
        accepted = False
        for _ in range(25):
            cand_center = center + alpha * step[0:3]
            cand_rot = rot @ exp_so3(alpha * step[3:6])
            cand_rnorms = kernels.residual_norms(
                points, meas, cand_rot, cand_center, intr.fx, intr.fy, intr.cx, intr.cy
            )
            cand_cost = _huber_cost(cand_rnorms, delta)
            if cand_cost < cost:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        center, rot, cost = cand_center, cand_rot, cand_cost
        h, g, rnorms = kernels.gn_accumulate(
            points, meas, rot, center, intr.fx, intr.fy, intr.cx, intr.cy, delta
        )
        if np.linalg.norm(alpha * step) < opts.convergence_eps:
            converged = True
            break

    n_inliers = int(np.sum(rnorms < 3.0 * delta))
    success = converged and n_inliers >= opts.min_points
    if not success:
        return LocalizationResult(False, None, math.inf, math.inf, n_inliers, iterations)
    est = Pose(center, Quat.from_matrix(rot))
    t_err, r_err = pose_error(est, true_pose)
    return LocalizationResult(True, est, t_err, r_err, n_inliers, iterations)


def label_waypoint(
    scene: SceneModel,
    wp: Waypoint,
    grid: ViewGrid = ViewGrid(),
    noise: NoiseSpec = NoiseSpec(),
    thresholds: Sequence[Tuple[float, float]] = BENCHMARK_THRESHOLDS,
    label_threshold_index: int = DEFAULT_LABEL_THRESHOLD_INDEX,
    opts: SolveOptions = SolveOptions(),
    stream_key: Optional[Sequence[int]] = None,
    intrinsics: CameraIntrinsics | None = None,
):
    """Oracle labels for every grid cell at a waypoint.

    Per cell: build the true pose at the cell's direction (offset by the
    waypoint's default yaw), simulate an observation, solve from a perturbed
    init, and label 1 iff the recovered pose meets the selected threshold.

    Returns:
        (labels (H, W) int8, t_err (H, W), r_err (H, W)); errors are +inf
        where localization failed.
    """
    tau_t, tau_r = thresholds[label_threshold_index]
    key = list(stream_key) if stream_key is not None else [_waypoint_stream_key(wp)]
    labels = np.zeros(grid.shape, dtype=np.int8)
    t_err = np.full(grid.shape, np.inf)
    r_err = np.full(grid.shape, np.inf)
    intr = intrinsics or scene.intrinsics

    for i in range(grid.n_pitch):
        for j in range(grid.n_yaw):
            pitch, yaw = cell_to_angles(grid, (i, j))
            world_yaw = wrap_deg(yaw + wp.default_yaw)
            true_pose = Pose(wp.position, yaw_pitch_to_quat(world_yaw, pitch))
            rng = np.random.default_rng(
                np.random.SeedSequence([noise.seed, *key, i, j])
            )
            obs = simulate_observation(scene, true_pose, intr, noise, rng=rng)
            init = perturb_pose(true_pose, INIT_T_OFFSET, INIT_R_OFFSET_DEG, rng)
            res = solve_pose(obs, scene, intr, init, true_pose, opts)
            t_err[i, j] = res.t_err
            r_err[i, j] = res.r_err
            if res.success and res.t_err <= tau_t and res.r_err <= tau_r:
                labels[i, j] = 1
    return labels, t_err, r_err


def quality_levels(t_err: np.ndarray) -> np.ndarray:
    """Map per-cell translation errors to 4 quality levels.

    Successful cells are binned by the quartiles of their errors (3 = best
    quartile, 1 = worst); failed cells share the worst level 0.
    """
    finite = np.isfinite(t_err)
    levels = np.zeros(t_err.shape, dtype=np.int8)
    vals = t_err[finite]
    if vals.size == 0:
        return levels
    qs = np.quantile(vals, [0.25, 0.5, 0.75])
    cls = 3 - np.searchsorted(qs, vals, side="left")
    levels[finite] = cls.astype(np.int8)
    return levels


def _preprocess_inputs(scene: SceneModel, wp: Waypoint, pre: PreprocessSpec):
    filtered = filter_uncertain(scene.landmarks, pre.min_track, pre.max_reproj)
    ego_poses, ego_lms = egocentric_transform(scene.poses, filtered, wp)
    return ego_poses, crop_box(ego_lms, pre.crop_half_extent)


def _label_one(args):
    (scene, scene_id, wp, grid, noise, thresholds, label_idx, opts, pre, key, n_classes) = args
    labels, t_err, r_err = label_waypoint(
        scene, wp, grid, noise, thresholds, label_idx, opts, stream_key=key
    )
    if n_classes == 4:
        labels = quality_levels(t_err)
    poses, landmarks = _preprocess_inputs(scene, wp, pre)
    return TrainingSample(
        scene_id, wp, grid, poses, landmarks, labels, t_err, r_err
    )


def generate_dataset(
    scenes: Sequence[SceneModel],
    n_waypoints_per_scene: int,
    height_range: Tuple[float, float] = (0.4, 2.0),
    grid: ViewGrid = ViewGrid(),
    noise: NoiseSpec = NoiseSpec(),
    seed: int = 0,
    thresholds: Sequence[Tuple[float, float]] = BENCHMARK_THRESHOLDS,
    label_threshold_index: int = DEFAULT_LABEL_THRESHOLD_INDEX,
    n_classes: int = 2,
    opts: SolveOptions = SolveOptions(),
    preprocess: PreprocessSpec = PreprocessSpec(),
    scene_ids: Optional[Sequence[str]] = None,
    jobs: int = 1,
) -> List[TrainingSample]:
    """Sample waypoints per scene and label them with the oracle.

    Waypoints are uniform in free space at heights in ``height_range``.
    Inputs are preprocessed in the fixed order filter -> egocentric -> crop.
    Output order is scene-major then waypoint index and is independent of
    ``jobs``; every waypoint derives its RNG streams from (seed, scene index,
    waypoint index, cell), so results do not depend on scheduling either.
    """
    if n_classes not in (2, 4):
        raise ConfigError("n_classes must be 2 or 4")
    if n_waypoints_per_scene < 1:
        raise ConfigError("need at least one waypoint per scene")
    tasks = []
    for k, scene in enumerate(scenes):
        if scene.n_poses == 0:
            raise ConfigError(f"scene {k} has no mapping poses; run the sweep first")
        sid = scene_ids[k] if scene_ids is not None else str(k)
        wp_rng = np.random.default_rng(np.random.SeedSequence([seed, k, 1]))
        for i in range(n_waypoints_per_scene):
            wp = make_waypoint(wp_rng, scene, height_range)
            tasks.append(
                (
                    scene,
                    sid,
                    wp,
                    grid,
                    noise,
                    tuple(thresholds),
                    label_threshold_index,
                    opts,
                    preprocess,
                    [seed, k, i],
                    n_classes,
                )
            )
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            samples = list(pool.map(_label_one, tasks))
    else:
        samples = [_label_one(t) for t in tasks]
    return samples


def _err_to_json(grid_vals: np.ndarray):
    return [[None if math.isinf(v) else v for v in row] for row in grid_vals.tolist()]


def _err_from_json(rows):
    return np.array(
        [[math.inf if v is None else float(v) for v in row] for row in rows]
    )


def save_dataset(samples: Sequence[TrainingSample], path) -> None:
    """Write samples as JSON lines; infinities are stored as nulls."""
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            rec = {
                "scene_id": s.scene_id,
                "waypoint": {
                    "position": [float(v) for v in s.waypoint.position],
                    "default_yaw": float(s.waypoint.default_yaw),
                },
                "grid": {
                    "n_pitch": s.grid.n_pitch,
                    "n_yaw": s.grid.n_yaw,
                    "pitch_min": s.grid.pitch_min,
                    "pitch_step": s.grid.pitch_step,
                    "yaw_min": s.grid.yaw_min,
                    "yaw_step": s.grid.yaw_step,
                },
                "poses": [
                    {
                        "position": [float(v) for v in p.position],
                        "quat_wxyz": [float(v) for v in p.orientation.wxyz],
                    }
                    for p in s.poses
                ],
                "landmarks": [
                    {
                        "position": [float(v) for v in lm.position],
                        "color": [float(v) for v in lm.color],
                        "reproj_err": float(lm.reproj_err),
                        "track": list(lm.track),
                    }
                    for lm in s.landmarks
                ],
                "labels": s.labels.tolist(),
                "t_err": _err_to_json(s.t_err),
                "r_err": _err_to_json(s.r_err),
            }
            fh.write(json.dumps(rec, separators=(",", ":"), sort_keys=True))
            fh.write("\n")


def load_dataset(path) -> List[TrainingSample]:
    samples = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                grid = ViewGrid(**rec["grid"])
                wp = Waypoint(
                    np.array(rec["waypoint"]["position"]),
                    rec["waypoint"]["default_yaw"],
                )
                poses = [
                    Pose(np.array(p["position"]), Quat(*p["quat_wxyz"]))
                    for p in rec["poses"]
                ]
                landmarks = [
                    Landmark(
                        np.array(l["position"]),
                        np.array(l["color"]),
                        reproj_err=l["reproj_err"],
                        track=tuple(l["track"]),
                    )
                    for l in rec["landmarks"]
                ]
                samples.append(
                    TrainingSample(
                        rec["scene_id"],
                        wp,
                        grid,
                        poses,
                        landmarks,
                        np.array(rec["labels"], dtype=np.int8),
                        _err_from_json(rec["t_err"]),
                        _err_from_json(rec["r_err"]),
                    )
                )
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise ParseError(f"bad dataset record: {exc}", path=str(path), line=lineno)
    return samples
