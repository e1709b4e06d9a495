"""Coarse warp grids from per-part nearest-neighbour search in UV space.

For every driving-frame pixel we look up the source pixel of the same
body part whose (u, v) surface coordinates are closest (Euclidean
distance; ties resolve to the source pixel with the smallest (y, x)).
Driving pixels whose part is absent from the source, and background
pixels, keep the identity coordinate and are flagged unmatched.

Source pixels are indexed per part in row-major (y, x) order — that
order doubles as the tie rank — with a KD-tree over the UV keys. The
numba backend answers queries by tree traversal; the numpy backend runs
an exact chunked linear scan with identical semantics.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .iuv_io.types import IuvMap
from .warp import WarpGrid, identity_grid, nearest_cells, to_relative


@dataclass
class PartPoints:
    u: np.ndarray      # (n,) float64 keys
    v: np.ndarray
    x: np.ndarray      # (n,) int32 source pixel coords
    y: np.ndarray
    tree: kernels.KDTreeArrays


@dataclass
class PartIndexUV:
    """Per-part UV lookup structure over one source IUV map."""

    height: int
    width: int
    n_parts: int
    parts: dict        # part id -> PartPoints, only for non-empty parts

    def points(self, part_id: int) -> PartPoints | None:
        return self.parts.get(part_id)


@dataclass
class CorrespondenceResult:
    grid: WarpGrid                # absolute source coords per driving pixel
    matched: np.ndarray           # (H, W) bool
    match_distance: np.ndarray    # (H, W) float32, +inf where unmatched


def build_part_index(source_iuv: IuvMap) -> PartIndexUV:
    """Index all foreground source pixels by part, tree over UV keys."""
    part = source_iuv.part
    parts = {}
    for p in np.unique(part):
        p = int(p)
        if p <= 0:
            continue
        ys, xs = np.nonzero(part == p)   # row-major = (y, x) tie order
        pu = source_iuv.u[ys, xs].astype(np.float64)
        pv = source_iuv.v[ys, xs].astype(np.float64)
        parts[p] = PartPoints(u=pu, v=pv,
                              x=xs.astype(np.int32), y=ys.astype(np.int32),
                              tree=kernels.build_kdtree(pu, pv))
    return PartIndexUV(height=source_iuv.height, width=source_iuv.width,
                       n_parts=source_iuv.n_parts, parts=parts)


def coarse_warp(index: PartIndexUV, driving_iuv: IuvMap) -> CorrespondenceResult:
    """Nearest-neighbour warp grid from the indexed source to the driving pose."""
    if driving_iuv.n_parts != index.n_parts:
        raise ValueError(f"part count mismatch: index has {index.n_parts}, "
                         f"driving map has {driving_iuv.n_parts}")
    if int(driving_iuv.part.max(initial=0)) > index.n_parts:
        raise ValueError("driving map contains part ids above the part count; "
                         "validate it first")
    H, W = driving_iuv.shape
    grid = identity_grid(H, W, np.float32)
    matched = np.zeros((H, W), bool)
    distance = np.full((H, W), np.inf, np.float32)

    sw, sh = index.width, index.height
    for p in np.unique(driving_iuv.part):
        p = int(p)
        if p <= 0:
            continue
        pts = index.points(p)
        if pts is None:
            continue  # part missing in source: stays unmatched
        mask = driving_iuv.part == p
        qu = driving_iuv.u[mask].astype(np.float64)
        qv = driving_iuv.v[mask].astype(np.float64)
        idx = kernels.nn_query_batch(qu, qv, pts.u, pts.v, pts.tree)
        sx = pts.x[idx].astype(np.float64)
        sy = pts.y[idx].astype(np.float64)
        grid.coords[0][mask] = ((2.0 * sx + 1.0) / sw - 1.0).astype(np.float32)
        grid.coords[1][mask] = ((2.0 * sy + 1.0) / sh - 1.0).astype(np.float32)
        du = qu - pts.u[idx]
        dv = qv - pts.v[idx]
        distance[mask] = np.sqrt(du * du + dv * dv).astype(np.float32)
        matched[mask] = True
    return CorrespondenceResult(grid=grid, matched=matched,
                                match_distance=distance)


def downsample_grid(result: CorrespondenceResult, th: int,
                    tw: int) -> CorrespondenceResult:
    """Nearest-cell subsampling of grid, flags and distances.

    Coordinates are re-anchored on the target identity so identity and
    constant-shift grids keep their normalized meaning exactly.
    """
    if th < 1 or tw < 1:
        raise ValueError(f"target size must be positive, got {th}x{tw}")
    grid = result.grid
    if th > grid.height or tw > grid.width:
        raise ValueError(f"cannot downsample {grid.shape} to {(th, tw)}")
    rows = nearest_cells(grid.height, th)
    cols = nearest_cells(grid.width, tw)
    rel = to_relative(grid).coords[:, rows][:, :, cols]
    coords = rel + identity_grid(th, tw, grid.coords.dtype).coords
    return CorrespondenceResult(
        grid=WarpGrid(coords),
        matched=result.matched[rows][:, cols],
        match_distance=result.match_distance[rows][:, cols],
    )
