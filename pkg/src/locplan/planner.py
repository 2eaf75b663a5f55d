"""Greedy localization-aware viewpoint selection along waypoint sequences.

At each waypoint a scorer produces a quality map C over the view grid; the
per-cell planning cost is ``(1 - C) + lambda * D`` where D is the
sigma-normalized angular distance to the previously selected viewpoint. The
first step has no predecessor and uses lambda = 0. Grid cells are always
interpreted as world directions (waypoints are scored with their grid
anchored at yaw 0); a waypoint's ``default_yaw`` carries its travel heading,
which only the forward-facing scorer consumes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .baselines import FifMetric, fif_locmap, forward_facing
from .errors import ConfigError, LocplanError
from .geom import GridCell, ViewGrid, Waypoint, cell_to_angles, grid_distance, wrap_deg
from .locmap import LocMap
from .oracle import NoiseSpec, label_waypoint
from .sfm_io import SceneModel

__all__ = [
    "PlanConfig",
    "Trajectory",
    "interpolate_waypoints",
    "mixed_cost",
    "plan_viewpoints",
    "make_scorer",
    "trajectory_to_csv",
]

SCORERS = ("model", "fif", "oracle", "forward")


@dataclass(frozen=True)
class PlanConfig:
    lam: float = 0.1
    sigma_pitch: float = 20.0
    sigma_yaw: float = 20.0
    spacing: float = 0.2
    scorer: str = "model"
    keep_cost_maps: bool = False

    def __post_init__(self):
        if self.lam < 0.0:
            raise ConfigError("lambda must be non-negative")
        if self.spacing <= 0.0:
            raise ConfigError("spacing must be positive")
        if self.scorer not in SCORERS:
            raise ConfigError(f"scorer must be one of {SCORERS}")


@dataclass
class Trajectory:
    waypoints: List[Waypoint]
    selected: List[GridCell]
    costs: List[float]
    cost_maps: Optional[List[np.ndarray]] = None

    def __post_init__(self):
        if len(self.waypoints) != len(self.selected):
            raise ValueError("waypoints and selected cells must align")


def interpolate_waypoints(keypoints: Sequence, spacing: float = 0.2) -> List[Waypoint]:
    """Piecewise-linear densification of a polyline of 3D keypoints.

    Every segment contributes both endpoints, consecutive gaps never exceed
    ``spacing``, and each waypoint's ``default_yaw`` is the heading of the
    segment it starts (the final point inherits the last segment's heading).
    """
    pts = [np.asarray(p, dtype=np.float64).reshape(3) for p in keypoints]
    if len(pts) < 1:
        raise ConfigError("need at least one keypoint")
    if spacing <= 0.0:
        raise ConfigError("spacing must be positive")
    if len(pts) == 1:
        return [Waypoint(pts[0], 0.0)]

    out: List[Waypoint] = []
    heading = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        seg = b - a
        length = float(np.linalg.norm(seg))
        if length < 1e-12:
            continue
        heading = wrap_deg(math.degrees(math.atan2(seg[1], seg[0])))
        n = max(1, math.ceil(length / spacing))
        start = 0 if not out else 1  # joints appear once
        for k in range(start, n + 1):
            out.append(Waypoint(a + seg * (k / n), heading))
    if not out:  # all segments degenerate
        return [Waypoint(pts[0], 0.0)]
    return out


def mixed_cost(
    c: LocMap,
    prev: GridCell,
    lam: float,
    sigma_pitch: float,
    sigma_yaw: float,
) -> np.ndarray:
    """Per-cell planning cost ``(1 - C) + lambda * distance_to_prev``."""
    values = c.values
    if values.min() < -1e-12 or values.max() > 1.0 + 1e-12:
        raise ValueError("quality values must lie in [0, 1]")
    cost = 1.0 - values
    if lam != 0.0:
        for cell in c.grid.cells():
            cost[cell.i, cell.j] += lam * grid_distance(
                c.grid, cell, prev, sigma_pitch, sigma_yaw
            )
    return cost


def _argmin_cell(cost: np.ndarray) -> GridCell:
    flat = int(np.argmin(cost))  # first occurrence in row-major order
    return GridCell(flat // cost.shape[1], flat % cost.shape[1])


def plan_viewpoints(
    scene: SceneModel,
    keypoints: Sequence,
    config: PlanConfig,
    scorer: Callable[[SceneModel, Waypoint], LocMap],
) -> Trajectory:
    """Greedy minimum-cost viewpoint per waypoint along the interpolated path."""
    waypoints = interpolate_waypoints(keypoints, config.spacing)
    selected: List[GridCell] = []
    costs: List[float] = []
    maps: List[np.ndarray] = []
    prev: Optional[GridCell] = None
    for step, wp in enumerate(waypoints):
        try:
            locmap = scorer(scene, wp)
        except LocplanError as exc:
            raise LocplanError(f"scorer failed at waypoint {step}: {exc}") from exc
        lam = 0.0 if prev is None else config.lam
        cost = mixed_cost(
            locmap,
            prev if prev is not None else GridCell(0, 0),
            lam,
            config.sigma_pitch,
            config.sigma_yaw,
        )
        cell = _argmin_cell(cost)
        selected.append(cell)
        costs.append(float(cost[cell.i, cell.j]))
        if config.keep_cost_maps:
            maps.append(cost)
        prev = cell
    return Trajectory(waypoints, selected, costs, maps if config.keep_cost_maps else None)


def _normalize_unit(values: np.ndarray) -> np.ndarray:
    lo = values.min()
    hi = values.max()
    if hi - lo < 1e-30:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def make_scorer(
    name: str,
    model_params: dict | None = None,
    model_config=None,
    metric: FifMetric = FifMetric.MIN_EIGENVALUE,
    noise: NoiseSpec = NoiseSpec(),
    grid: ViewGrid | None = None,
) -> Callable[[SceneModel, Waypoint], LocMap]:
    """Build a scorer callable producing quality maps with values in [0, 1].

    - ``model``: network probabilities (needs params + config).
    - ``fif``: information scores min-max normalized per waypoint.
    - ``oracle``: ground-truth labels from the localization oracle.
    - ``forward``: 1.0 at the cell facing the waypoint's travel heading.
    """
    if name == "model":
        if model_params is None or model_config is None:
            raise ConfigError("model scorer needs a checkpoint")
        from .model import predict_locmap

        def score_model(scene, wp):
            return predict_locmap(model_params, scene, wp, model_config)

        return score_model

    g = grid or (model_config.grid if model_config is not None else ViewGrid())
    if name == "fif":
        # Cells are world directions: score with the grid anchored at yaw 0.
        def score_fif(scene, wp):
            raw = fif_locmap(scene, Waypoint(wp.position, 0.0), g, metric)
            return LocMap(g, _normalize_unit(raw.values))

        return score_fif
    if name == "oracle":

        def score_oracle(scene, wp):
            labels, _, _ = label_waypoint(scene, Waypoint(wp.position, 0.0), g, noise)
            return LocMap(g, labels.astype(np.float64))

        return score_oracle
    if name == "forward":

        def score_forward(scene, wp):
            values = np.zeros(g.shape)
            cell = forward_facing(wp.default_yaw, g)
            values[cell.i, cell.j] = 1.0
            return LocMap(g, values)

        return score_forward
    raise ConfigError(f"unknown scorer {name!r}")


def trajectory_to_csv(traj: Trajectory, grid: ViewGrid, path) -> None:
    """CSV with columns step, x, y, z, pitch_deg, yaw_deg, cost."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,x,y,z,pitch_deg,yaw_deg,cost\n")
        for k, (wp, cell, cost) in enumerate(zip(traj.waypoints, traj.selected, traj.costs)):
            pitch, yaw = cell_to_angles(grid, cell)
            fh.write(
                f"{k},{wp.position[0]:.12g},{wp.position[1]:.12g},"
                f"{wp.position[2]:.12g},{pitch:.12g},{yaw:.12g},{cost:.12g}\n"
            )
