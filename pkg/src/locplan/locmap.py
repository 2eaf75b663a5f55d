"""LocMap container, bilinear upsampling, and export formats (CSV, PGM)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geom import ViewGrid

__all__ = ["LocMap", "upsample_locmap", "locmap_to_csv", "locmap_to_pgm"]


@dataclass(frozen=True)
class LocMap:
    """H x W values over pitch (rows) x yaw (columns) directions."""

    grid: ViewGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != self.grid.shape:
            raise ValueError(
                f"values shape {v.shape} does not match grid {self.grid.shape}"
            )
        object.__setattr__(self, "values", v)


def upsample_locmap(locmap: LocMap, factor: int) -> LocMap:
    """Bilinear upsampling by 2 or 4.

    Yaw interpolates circularly across the +-180 seam; pitch clamps at the
    band borders. Directions shared with the input grid keep their values
    exactly.
    """
    if factor not in (2, 4):
        raise ValueError("factor must be 2 or 4")
    g = locmap.grid
    h, w = g.shape
    new_grid = ViewGrid(
        n_pitch=h * factor,
        n_yaw=w * factor,
        pitch_min=g.pitch_min,
        pitch_step=g.pitch_step / factor,
        yaw_min=g.yaw_min,
        yaw_step=g.yaw_step / factor,
    )
    fi = np.minimum(np.arange(h * factor) / factor, h - 1.0)  # clamp pitch
    fj = (np.arange(w * factor) / factor) % w  # wrap yaw
    i0 = np.floor(fi).astype(int)
    i1 = np.minimum(i0 + 1, h - 1)
    ti = fi - i0
    j0 = np.floor(fj).astype(int)
    j1 = (j0 + 1) % w
    tj = fj - j0

    v = locmap.values
    top = v[i0][:, j0] * (1.0 - tj)[None, :] + v[i0][:, j1] * tj[None, :]
    bot = v[i1][:, j0] * (1.0 - tj)[None, :] + v[i1][:, j1] * tj[None, :]
    out = top * (1.0 - ti)[:, None] + bot * ti[:, None]
    return LocMap(new_grid, out)


def locmap_to_csv(locmap: LocMap, path) -> None:
    """H rows x W columns of values; NaN cells serialize as empty fields."""
    with open(path, "w", encoding="utf-8") as fh:
        for row in locmap.values:
            fh.write(
                ",".join("" if np.isnan(x) else f"{x:.12g}" for x in row) + "\n"
            )


def locmap_to_pgm(locmap: LocMap, path) -> None:
    """8-bit grayscale PGM (P2); values are clipped to [0, 1] then scaled."""
    v = np.nan_to_num(locmap.values, nan=0.0)
    pix = np.rint(np.clip(v, 0.0, 1.0) * 255.0).astype(int)
    h, w = pix.shape
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"P2\n{w} {h}\n255\n")
        for row in pix:
            fh.write(" ".join(str(x) for x in row) + "\n")
