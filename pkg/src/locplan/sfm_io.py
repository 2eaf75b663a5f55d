"""SfM reconstruction container and its two serialization formats.

Supported formats:

- COLMAP-compatible text directory (cameras.txt / images.txt / points3D.txt);
  images.txt stores world-to-camera quaternion+translation, converted to the
  package's camera-to-world ``Pose`` on parse.
- Internal single-file JSON scene (schema_version 1) that additionally keeps
  occluder boxes; floats round-trip bit-exactly.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .errors import IntegrityError, ParseError, SchemaVersionError
from .geom import CameraIntrinsics, Landmark, OccluderBox, Pose, Quat

SCHEMA_VERSION = 1

__all__ = [
    "SceneModel",
    "parse_colmap_text",
    "write_colmap_text",
    "load_scene",
    "save_scene",
    "sparsify",
    "SCHEMA_VERSION",
]


@dataclass
class SceneModel:
    """3D landmarks plus the mapping camera poses that observed them."""

    intrinsics: CameraIntrinsics = field(default_factory=CameraIntrinsics)
    poses: List[Pose] = field(default_factory=list)
    pose_ids: List[int] = field(default_factory=list)
    landmarks: List[Landmark] = field(default_factory=list)
    occluders: List[OccluderBox] = field(default_factory=list)

    @property
    def n_poses(self) -> int:
        return len(self.poses)

    @property
    def n_landmarks(self) -> int:
        return len(self.landmarks)

    def validate(self) -> None:
        if len(self.poses) != len(self.pose_ids):
            raise IntegrityError("poses and pose_ids lengths differ")
        if len(set(self.pose_ids)) != len(self.pose_ids):
            raise IntegrityError("pose ids must be unique")
        ids = set(self.pose_ids)
        for n, lm in enumerate(self.landmarks):
            for ref in lm.track:
                if ref not in ids:
                    raise IntegrityError(
                        f"landmark {n} track references unknown pose id {ref}"
                    )

    def landmark_positions(self) -> np.ndarray:
        if not self.landmarks:
            return np.zeros((0, 3), dtype=np.float64)
        return np.array([lm.position for lm in self.landmarks], dtype=np.float64)

    def landmark_colors(self) -> np.ndarray:
        if not self.landmarks:
            return np.zeros((0, 3), dtype=np.float64)
        return np.array([lm.color for lm in self.landmarks], dtype=np.float64)

    def occluder_bounds(self) -> np.ndarray:
        """Occluders as (K, 6) rows (minx, miny, minz, maxx, maxy, maxz)."""
        if not self.occluders:
            return np.zeros((0, 6), dtype=np.float64)
        return np.array(
            [np.concatenate([b.min_corner, b.max_corner]) for b in self.occluders]
        )


def _fmt(x: float) -> str:
    return f"{float(x):.12g}"


def _parse_floats(fields, count, path, lineno):
    if len(fields) != count:
        raise ParseError(
            f"expected {count} fields, got {len(fields)}", path=path, line=lineno
        )
    try:
        return [float(f) for f in fields]
    except ValueError as exc:
        raise ParseError(f"bad numeric field: {exc}", path=path, line=lineno)


def _data_lines(path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            yield lineno, line


def parse_colmap_text(dir_path) -> SceneModel:
    """Parse a COLMAP text model directory into a :class:`SceneModel`."""
    cameras_path = os.path.join(dir_path, "cameras.txt")
    images_path = os.path.join(dir_path, "images.txt")
    points_path = os.path.join(dir_path, "points3D.txt")
    for p in (cameras_path, images_path, points_path):
        if not os.path.isfile(p):
            raise FileNotFoundError(p)

    intrinsics = None
    for lineno, line in _data_lines(cameras_path):
        if intrinsics is not None:
            raise ParseError(
                "expected a single camera", path=cameras_path, line=lineno
            )
        fields = line.split()
        if len(fields) != 8:
            raise ParseError(
                f"expected 8 fields for a PINHOLE camera, got {len(fields)}",
                path=cameras_path,
                line=lineno,
            )
        if fields[1] != "PINHOLE":
            raise ParseError(
                f"unsupported camera model {fields[1]!r}",
                path=cameras_path,
                line=lineno,
            )
        try:
            width, height = int(fields[2]), int(fields[3])
            fx, fy, cx, cy = (float(f) for f in fields[4:8])
        except ValueError as exc:
            raise ParseError(f"bad camera field: {exc}", path=cameras_path, line=lineno)
        intrinsics = CameraIntrinsics(width, height, fx, fy, cx, cy)
    if intrinsics is None:
        raise ParseError("no camera defined", path=cameras_path)

    poses: List[Pose] = []
    pose_ids: List[int] = []
    expect_points2d = False
    for lineno, line in _data_lines(images_path):
        if expect_points2d:
            # POINTS2D line of the previous image; keypoints are not stored.
            expect_points2d = False
            continue
        fields = line.split()
        if len(fields) != 10:
            raise ParseError(
                f"expected 10 fields for an image, got {len(fields)}",
                path=images_path,
                line=lineno,
            )
        try:
            image_id = int(fields[0])
            qw, qx, qy, qz, tx, ty, tz = (float(f) for f in fields[1:8])
            int(fields[8])  # camera id, single shared camera
        except ValueError as exc:
            raise ParseError(f"bad image field: {exc}", path=images_path, line=lineno)
        q_wc = Quat(qw, qx, qy, qz)  # world-to-camera
        r_wc = q_wc.to_matrix()
        center = -r_wc.T @ np.array([tx, ty, tz])
        poses.append(Pose(center, Quat.from_matrix(r_wc.T)))
        pose_ids.append(image_id)
        expect_points2d = True

    landmarks: List[Landmark] = []
    for lineno, line in _data_lines(points_path):
        fields = line.split()
        if len(fields) < 8 or (len(fields) - 8) % 2 != 0:
            raise ParseError(
                f"expected 8 + 2k fields for a point, got {len(fields)}",
                path=points_path,
                line=lineno,
            )
        try:
            x, y, z = (float(f) for f in fields[1:4])
            rgb = [int(f) for f in fields[4:7]]
            err = float(fields[7])
            track = [int(f) for f in fields[8::2]]
        except ValueError as exc:
            raise ParseError(f"bad point field: {exc}", path=points_path, line=lineno)
        if any(c < 0 or c > 255 for c in rgb):
            raise ParseError("RGB out of [0, 255]", path=points_path, line=lineno)
        landmarks.append(
            Landmark(
                np.array([x, y, z]),
                np.array(rgb, dtype=np.float64) / 255.0,
                reproj_err=err,
                track=tuple(track),
            )
        )

    model = SceneModel(intrinsics, poses, pose_ids, landmarks, occluders=[])
    model.validate()
    return model


def write_colmap_text(model: SceneModel, dir_path) -> None:
    """Write the model as a COLMAP text directory readable by :func:`parse_colmap_text`."""
    model.validate()
    os.makedirs(dir_path, exist_ok=True)
    intr = model.intrinsics

    with open(os.path.join(dir_path, "cameras.txt"), "w", encoding="utf-8") as fh:
        fh.write("# Camera list with one line of data per camera:\n")
        fh.write("#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n")
        fh.write(
            f"1 PINHOLE {intr.width} {intr.height} "
            f"{_fmt(intr.fx)} {_fmt(intr.fy)} {_fmt(intr.cx)} {_fmt(intr.cy)}\n"
        )

    with open(os.path.join(dir_path, "images.txt"), "w", encoding="utf-8") as fh:
        fh.write("# Image list with two lines of data per image:\n")
        fh.write("#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n")
        fh.write("#   POINTS2D[] as (X, Y, POINT3D_ID)\n")
        for pose, pid in zip(model.poses, model.pose_ids):
            r_wc = pose.rotation().T
            q = Quat.from_matrix(r_wc)
            t = -r_wc @ pose.position
            fh.write(
                f"{pid} {_fmt(q.w)} {_fmt(q.x)} {_fmt(q.y)} {_fmt(q.z)} "
                f"{_fmt(t[0])} {_fmt(t[1])} {_fmt(t[2])} 1 image{pid:05d}.png\n"
            )
            fh.write("\n")

    with open(os.path.join(dir_path, "points3D.txt"), "w", encoding="utf-8") as fh:
        fh.write("# 3D point list with one line of data per point:\n")
        fh.write(
            "#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)\n"
        )
        for n, lm in enumerate(model.landmarks, start=1):
            rgb = np.rint(np.asarray(lm.color) * 255.0).astype(int)
            track = " ".join(f"{pid} {k}" for k, pid in enumerate(lm.track))
            line = (
                f"{n} {_fmt(lm.position[0])} {_fmt(lm.position[1])} "
                f"{_fmt(lm.position[2])} {rgb[0]} {rgb[1]} {rgb[2]} "
                f"{_fmt(lm.reproj_err)}"
            )
            fh.write(line + (f" {track}" if track else "") + "\n")


def _pose_to_json(pose: Pose, pid: int) -> dict:
    return {
        "id": pid,
        "position": [float(v) for v in pose.position],
        "quat_wxyz": [float(v) for v in pose.orientation.wxyz],
    }


def save_scene(model: SceneModel, path) -> None:
    """Write the internal JSON scene format (bit-exact float round trip)."""
    model.validate()
    intr = model.intrinsics
    doc = {
        "schema_version": SCHEMA_VERSION,
        "intrinsics": {
            "width": intr.width,
            "height": intr.height,
            "fx": intr.fx,
            "fy": intr.fy,
            "cx": intr.cx,
            "cy": intr.cy,
        },
        "poses": [
            _pose_to_json(p, pid) for p, pid in zip(model.poses, model.pose_ids)
        ],
        "landmarks": [
            {
                "position": [float(v) for v in lm.position],
                "color": [float(v) for v in lm.color],
                "reproj_err": float(lm.reproj_err),
                "track": list(lm.track),
            }
            for lm in model.landmarks
        ],
        "occluders": [
            {
                "min": [float(v) for v in b.min_corner],
                "max": [float(v) for v in b.max_corner],
            }
            for b in model.occluders
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, separators=(",", ":"), sort_keys=True)
        fh.write("\n")


def load_scene(path) -> SceneModel:
    """Load a scene saved by :func:`save_scene`."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}", path=str(path))
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(version, SCHEMA_VERSION, path=str(path))
    try:
        ji = doc["intrinsics"]
        intr = CameraIntrinsics(
            ji["width"], ji["height"], ji["fx"], ji["fy"], ji["cx"], ji["cy"]
        )
        poses = [
            Pose(np.array(jp["position"]), Quat(*jp["quat_wxyz"]))
            for jp in doc["poses"]
        ]
        pose_ids = [int(jp["id"]) for jp in doc["poses"]]
        landmarks = [
            Landmark(
                np.array(jl["position"]),
                np.array(jl["color"]),
                reproj_err=jl["reproj_err"],
                track=tuple(jl["track"]),
            )
            for jl in doc["landmarks"]
        ]
        occluders = [
            OccluderBox(np.array(jb["min"]), np.array(jb["max"]))
            for jb in doc["occluders"]
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed scene document: {exc}", path=str(path))
    model = SceneModel(intr, poses, pose_ids, landmarks, occluders)
    model.validate()
    return model


def sparsify(model: SceneModel, fraction: float, seed: int) -> SceneModel:
    """Remove floor(fraction * M) poses uniformly at random and orphaned landmarks.

    Selection uses a single seeded permutation with a moving cut, so the
    surviving pose set at a higher fraction is a subset of the set at any
    lower fraction under the same seed. Landmarks whose track empties out are
    dropped.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    m = model.n_poses
    n_remove = math.floor(fraction * m)
    order = np.random.default_rng(seed).permutation(m)
    removed = set(order[:n_remove].tolist())
    keep_idx = [i for i in range(m) if i not in removed]
    kept_ids = set(model.pose_ids[i] for i in keep_idx)

    landmarks = []
    for lm in model.landmarks:
        track = tuple(pid for pid in lm.track if pid in kept_ids)
        if track:
            landmarks.append(Landmark(lm.position, lm.color, lm.reproj_err, track))
    return SceneModel(
        intrinsics=model.intrinsics,
        poses=[model.poses[i] for i in keep_idx],
        pose_ids=[model.pose_ids[i] for i in keep_idx],
        landmarks=landmarks,
        occluders=list(model.occluders),
    )
