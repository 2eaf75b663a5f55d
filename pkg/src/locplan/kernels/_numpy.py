"""Vectorized NumPy implementations of the hot kernels.

This is the fallback backend; ``locplan.kernels`` picks the compiled
extension when it is available. Both backends implement the same contracts:

- ``visibility``: pinhole projection plus open-segment ray/AABB occlusion.
  Outputs are zero-filled where the mask is False.
- ``gn_accumulate``: Huber-weighted Gauss-Newton normal equations for a
  6-dof camera-to-world pose (3 translation + 3 right-applied rotation-vector
  increments). Points at or behind the camera plane contribute nothing to the
  normal equations and get the sentinel residual norm ``BEHIND_RNORM``.
- ``residual_norms``: per-point reprojection residual norms only.
"""

import numpy as np

BEHIND_RNORM = 1e8
_Z_MIN = 1e-6


def visibility(points, rot, center, fx, fy, cx, cy, width, height, boxes):
    """Visibility of world points from a camera.

    Args:
        points: (N, 3) world positions.
        rot: (3, 3) camera-to-world rotation.
        center: (3,) camera center in world frame.
        fx, fy, cx, cy: pinhole intrinsics.
        width, height: image size in pixels.
        boxes: (K, 6) occluder rows ``(minx, miny, minz, maxx, maxy, maxz)``.

    Returns:
        (mask (N,) bool, pixels (N, 2), depths (N,)); pixels/depths are zero
        where the mask is False. A point is visible when its camera depth is
        positive, its pixel lands in [0, width) x [0, height), and the open
        segment camera->point misses every box (slab test).
    """
    points = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    n = points.shape[0]
    pix = np.zeros((n, 2), dtype=np.float64)
    depth = np.zeros(n, dtype=np.float64)
    if n == 0:
        return np.zeros(0, dtype=bool), pix, depth

    rel = points - np.asarray(center, dtype=np.float64)
    cam = rel @ np.asarray(rot, dtype=np.float64)  # == rot.T applied to rows
    z = cam[:, 2]
    mask = z > _Z_MIN
    u = np.zeros(n)
    v = np.zeros(n)
    np.divide(cam[:, 0], z, out=u, where=mask)
    np.divide(cam[:, 1], z, out=v, where=mask)
    u = fx * u + cx
    v = fy * v + cy
    mask &= (u >= 0.0) & (u < width) & (v >= 0.0) & (v < height)

    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 6)
    if boxes.shape[0] > 0 and np.any(mask):
        occluded = _segments_hit_boxes(np.asarray(center, dtype=np.float64), rel, boxes)
        mask &= ~occluded

    pix[mask, 0] = u[mask]
    pix[mask, 1] = v[mask]
    depth[mask] = z[mask]
    return mask, pix, depth


def _segments_hit_boxes(origin, dirs, boxes):
    """True per segment if the open segment origin + t*dir, t in (0,1), hits any box."""
    n = dirs.shape[0]
    k = boxes.shape[0]
    lo = boxes[:, 0:3]  # (K, 3)
    hi = boxes[:, 3:6]
    d = dirs[:, None, :]  # (N, 1, 3)
    o = origin[None, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo[None, :, :] - o) / d  # (N, K, 3)
        t2 = (hi[None, :, :] - o) / d
    tmin_axis = np.minimum(t1, t2)
    tmax_axis = np.maximum(t1, t2)
    parallel = d == 0.0  # broadcast (N, K, 3) against (N, 1, 3)
    inside = (o >= lo[None, :, :]) & (o <= hi[None, :, :])
    # A parallel axis constrains nothing when the origin lies inside the slab
    # and rules the box out entirely otherwise.
    tmin_axis = np.where(parallel & inside, -np.inf, tmin_axis)
    tmax_axis = np.where(parallel & inside, np.inf, tmax_axis)
    tmin_axis = np.where(parallel & ~inside, np.inf, tmin_axis)
    tmax_axis = np.where(parallel & ~inside, -np.inf, tmax_axis)
    tmin = tmin_axis.max(axis=2)  # (N, K)
    tmax = tmax_axis.min(axis=2)
    hit = (tmin <= tmax) & (tmax > 0.0) & (tmin < 1.0)
    return hit.any(axis=1)


def _project(points, rot, center, fx, fy, cx, cy):
    rel = np.asarray(points, dtype=np.float64).reshape(-1, 3) - np.asarray(
        center, dtype=np.float64
    )
    cam = rel @ np.asarray(rot, dtype=np.float64)
    return cam


def residual_norms(points, meas, rot, center, fx, fy, cx, cy):
    """Reprojection residual norms; BEHIND_RNORM sentinel for z <= 0 points."""
    cam = _project(points, rot, center, fx, fy, cx, cy)
    meas = np.asarray(meas, dtype=np.float64).reshape(-1, 2)
    n = cam.shape[0]
    rnorms = np.full(n, BEHIND_RNORM, dtype=np.float64)
    ok = cam[:, 2] > _Z_MIN
    if np.any(ok):
        z = cam[ok, 2]
        u = fx * cam[ok, 0] / z + cx
        v = fy * cam[ok, 1] / z + cy
        ex = u - meas[ok, 0]
        ey = v - meas[ok, 1]
        rnorms[ok] = np.sqrt(ex * ex + ey * ey)
    return rnorms


def gn_accumulate(points, meas, rot, center, fx, fy, cx, cy, huber_delta):
    """Huber-weighted normal equations for one Gauss-Newton iteration.

    Minimizes sum_i huber(||proj_i - meas_i||) over the pose increment
    (dt, dw) with retraction ``center += dt``, ``R = R @ exp(dw)``.

    Returns:
        (H (6, 6), g (6,), rnorms (N,)) with ``H = sum w J^T J`` and
        ``g = sum w J^T e``; the GN step is ``-solve(H, g)``.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    meas = np.asarray(meas, dtype=np.float64).reshape(-1, 2)
    rot = np.asarray(rot, dtype=np.float64)
    cam = _project(points, rot, center, fx, fy, cx, cy)
    n = cam.shape[0]
    rnorms = np.full(n, BEHIND_RNORM, dtype=np.float64)
    h = np.zeros((6, 6), dtype=np.float64)
    g = np.zeros(6, dtype=np.float64)
    ok = cam[:, 2] > _Z_MIN
    if not np.any(ok):
        return h, g, rnorms

    pc = cam[ok]
    z = pc[:, 2]
    inv_z = 1.0 / z
    u = fx * pc[:, 0] * inv_z + cx
    v = fy * pc[:, 1] * inv_z + cy
    e = np.stack([u - meas[ok, 0], v - meas[ok, 1]], axis=1)  # (M, 2)
    rn = np.linalg.norm(e, axis=1)
    rnorms[ok] = rn

    w = np.ones_like(rn)
    big = rn > huber_delta
    w[big] = huber_delta / rn[big]

    m = pc.shape[0]
    # d(pixel)/d(cam point)
    dproj = np.zeros((m, 2, 3))
    dproj[:, 0, 0] = fx * inv_z
    dproj[:, 0, 2] = -fx * pc[:, 0] * inv_z * inv_z
    dproj[:, 1, 1] = fy * inv_z
    dproj[:, 1, 2] = -fy * pc[:, 1] * inv_z * inv_z
    # d(cam point)/d(dt) = -R^T; d(cam point)/d(dw) = [pc]_x
    dcam = np.zeros((m, 3, 6))
    dcam[:, :, 0:3] = -rot.T[None, :, :]
    dcam[:, 0, 4] = -pc[:, 2]
    dcam[:, 0, 5] = pc[:, 1]
    dcam[:, 1, 3] = pc[:, 2]
    dcam[:, 1, 5] = -pc[:, 0]
    dcam[:, 2, 3] = -pc[:, 1]
    dcam[:, 2, 4] = pc[:, 0]
    jac = dproj @ dcam  # (M, 2, 6)

    jw = jac * w[:, None, None]
    h = np.einsum("mij,mik->jk", jw, jac)
    g = np.einsum("mij,mi->j", jw, e)
    return h, g, rnorms
