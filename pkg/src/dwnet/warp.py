"""Warp grids and differentiable bilinear sampling.

A warp grid assigns every output cell a source coordinate in normalized
units: the image spans [-1, 1] on each axis and the centre of pixel
``j`` of ``W`` sits at ``(2j + 1) / W - 1`` (half-pixel convention, so
normalized positions are resolution independent). Coordinates may leave
[-1, 1]; sampling clamps to the border pixel.

Pixel conversion snaps coordinates that land within 1e-4 px of the
integer lattice onto it, which keeps identity-grid sampling bit-exact
for float32 grids at any practical resolution (guaranteed up to ~2048 px;
float32 rounding of normalized coordinates is ~1e-5 px there).
"""

from dataclasses import dataclass

import numpy as np

from . import kernels

_SNAP = 1e-4


@dataclass
class WarpGrid:
    """Per-cell source coordinates; ``coords[0]`` is x, ``coords[1]`` is y."""

    coords: np.ndarray  # (2, H, W)

    def __post_init__(self):
        if self.coords.ndim != 3 or self.coords.shape[0] != 2:
            raise ValueError(f"warp grid coords must be (2,H,W), "
                             f"got {self.coords.shape}")

    @property
    def height(self) -> int:
        return self.coords.shape[1]

    @property
    def width(self) -> int:
        return self.coords.shape[2]

    @property
    def shape(self):
        return self.coords.shape[1:]

    def copy(self) -> "WarpGrid":
        return WarpGrid(self.coords.copy())


def axis_coords(n: int, dtype=np.float32) -> np.ndarray:
    """Normalized centre coordinates of n pixels along one axis."""
    return (((np.arange(n, dtype=np.float64) + 0.5) * (2.0 / n)) - 1.0).astype(dtype)


def identity_grid(h: int, w: int, dtype=np.float32) -> WarpGrid:
    """The grid mapping every cell to its own pixel centre."""
    if h < 1 or w < 1:
        raise ValueError(f"identity grid needs positive dims, got {h}x{w}")
    xs = axis_coords(w, dtype)
    ys = axis_coords(h, dtype)
    coords = np.empty((2, h, w), dtype)
    coords[0] = xs[None, :]
    coords[1] = ys[:, None]
    return WarpGrid(coords)


def to_relative(grid: WarpGrid) -> WarpGrid:
    """Offsets from the identity grid (the translation-equivariant form)."""
    ident = identity_grid(grid.height, grid.width, grid.coords.dtype)
    return WarpGrid(grid.coords - ident.coords)


def from_relative(rel: WarpGrid) -> WarpGrid:
    ident = identity_grid(rel.height, rel.width, rel.coords.dtype)
    return WarpGrid(rel.coords + ident.coords)


def _to_pixel(coords: np.ndarray, H: int, W: int):
    """Normalized -> fractional pixel coords, with lattice snapping."""
    px = (coords[0].astype(np.float64) + 1.0) * (W / 2.0) - 0.5
    py = (coords[1].astype(np.float64) + 1.0) * (H / 2.0) - 0.5
    rx = np.rint(px)
    ry = np.rint(py)
    px = np.where(np.abs(px - rx) < _SNAP, rx, px)
    py = np.where(np.abs(py - ry) < _SNAP, ry, py)
    return px, py


def bilinear_sample(input: np.ndarray, grid: WarpGrid) -> np.ndarray:
    """Sample input (C,H,W) at the grid's coordinates; border clamped.

    Output spatial shape equals the grid's. Differentiable in both
    arguments through :func:`bilinear_sample_backward` with the cache
    ``(input, grid)``.
    """
    if input.ndim != 3 or input.shape[1] < 1 or input.shape[2] < 1:
        raise ValueError(f"expected input (C,H,W) with H,W >= 1, "
                         f"got {input.shape}")
    C, H, W = input.shape
    px, py = _to_pixel(grid.coords, H, W)
    return kernels.bilinear_forward(input, px, py)


def bilinear_sample_backward(cache, upstream: np.ndarray):
    """Adjoint of bilinear_sample; cache is the forward's (input, grid).

    Returns ``(input_grad, grid_grad)`` where grid_grad is a (2,Gh,Gw)
    array in normalized-coordinate units.
    """
    if cache is None:
        raise ValueError("bilinear_sample_backward needs the forward cache "
                         "(input, grid)")
    input, grid = cache
    C, H, W = input.shape
    if upstream.shape != (C, grid.height, grid.width):
        raise ValueError(f"upstream shape {upstream.shape} does not match "
                         f"sampled output {(C, grid.height, grid.width)}")
    px, py = _to_pixel(grid.coords, H, W)
    dimg, dpx, dpy = kernels.bilinear_backward(
        input, px, py, np.ascontiguousarray(upstream))
    grid_grad = np.empty((2, grid.height, grid.width), input.dtype)
    grid_grad[0] = dpx * input.dtype.type(W / 2.0)
    grid_grad[1] = dpy * input.dtype.type(H / 2.0)
    return dimg, grid_grad


def compose(outer: WarpGrid, inner: WarpGrid) -> WarpGrid:
    """Chain two grids: look up inner's coordinate field at outer's cells.

    Sampling an image with the result matches sampling twice (interior
    coordinates; borders are subject to the clamp rule).
    """
    coords = bilinear_sample(inner.coords, outer)
    return WarpGrid(coords)


def subsample_grid(grid: WarpGrid, th: int, tw: int) -> WarpGrid:
    """Nearest-cell downsampling, re-anchored on the target identity.

    Offsets from the identity are subsampled and added back onto the
    identity grid of the target size, so identity maps stay exactly
    identity and constant normalized shifts are preserved.
    """
    if th < 1 or tw < 1:
        raise ValueError(f"target grid dims must be positive, got {th}x{tw}")
    if th > grid.height or tw > grid.width:
        raise ValueError(f"cannot downsample {grid.shape} grid to larger "
                         f"{(th, tw)}")
    rows = nearest_cells(grid.height, th)
    cols = nearest_cells(grid.width, tw)
    rel = to_relative(grid).coords[:, rows][:, :, cols]
    ident = identity_grid(th, tw, grid.coords.dtype)
    return WarpGrid(rel + ident.coords)


def nearest_cells(src: int, dst: int) -> np.ndarray:
    """Source cell index nearest to each target cell centre."""
    return ((2 * np.arange(dst, dtype=np.int64) + 1) * src) // (2 * dst)
