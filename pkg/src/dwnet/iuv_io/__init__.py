"""Serialization of maps, images, grids and synthetic sequences.

Directory layout for one sequence::

    <dir>/manifest.txt            key=value: source_frame, n_frames, n_parts
    <dir>/frames/0000.img.dwt     (3,H,W) float32 image in [-1, 1]
    <dir>/frames/0000.iuv.dwt     (3,H,W) float32 planes: part, u, v
    <dir>/frames/0000.kp.dwt      optional (K,3) float32 keypoints: x, y, vis
    <dir>/grids/0001.grid.dwt     optional (2,H,W) ground-truth grid
    <dir>/grids/0001.mask.dwt     optional (1,H,W) u8 foreground mask

Frame 0 is the source; grids exist for driving frames only.
"""

import os

import numpy as np

from ..warp import WarpGrid
from .container import (MAGIC, BadMagicError, DwtError, SchemaError,
                        TruncatedPayloadError, read_manifest, read_tensor,
                        write_manifest, write_tensor)
from .synthetic import (EllipsePart, MotionSpec, RigidMotion, SyntheticScene,
                        SyntheticSequence, generate_synthetic_sequence,
                        ground_truth_grid, make_scene, render_frame)
from .types import (DEFAULT_NUM_PARTS, Frame, IuvMap, IuvReport, VideoSample,
                    validate_iuv)

__all__ = [
    "MAGIC", "DwtError", "BadMagicError", "TruncatedPayloadError",
    "SchemaError", "read_tensor", "write_tensor", "read_manifest",
    "write_manifest", "DEFAULT_NUM_PARTS", "IuvMap", "Frame", "VideoSample",
    "IuvReport", "validate_iuv", "EllipsePart", "RigidMotion", "MotionSpec",
    "SyntheticScene", "SyntheticSequence", "make_scene", "render_frame",
    "ground_truth_grid", "generate_synthetic_sequence", "save_sequence",
    "load_sequence", "load_iuv", "save_grid", "load_grid",
]


def _frame_paths(root, k):
    base = os.path.join(root, "frames", f"{k:04d}")
    return base + ".img.dwt", base + ".iuv.dwt", base + ".kp.dwt"


def save_sequence(root: str, sample: VideoSample,
                  grids: list | None = None,
                  masks: list | None = None) -> None:
    os.makedirs(os.path.join(root, "frames"), exist_ok=True)
    frames = sample.all_frames()
    for k, f in enumerate(frames):
        img_p, iuv_p, kp_p = _frame_paths(root, k)
        write_tensor(img_p, f.image.astype(np.float32))
        write_tensor(iuv_p, f.iuv.to_planes())
        if f.keypoints is not None:
            write_tensor(kp_p, f.keypoints.astype(np.float32))
    manifest = {
        "source_frame": 0,
        "n_frames": len(frames),
        "n_parts": frames[0].iuv.n_parts,
    }
    if grids is not None:
        os.makedirs(os.path.join(root, "grids"), exist_ok=True)
        for k, grid in enumerate(grids):
            save_grid(os.path.join(root, "grids", f"{k + 1:04d}"),
                      grid, None if masks is None else masks[k])
        manifest["has_grids"] = 1
    write_manifest(os.path.join(root, "manifest.txt"), manifest)


def load_iuv(path: str, n_parts: int = DEFAULT_NUM_PARTS) -> IuvMap:
    return IuvMap.from_planes(read_tensor(path, expect_dtype=np.float32),
                              n_parts=n_parts)


def load_sequence(root: str, with_grids: bool = False):
    """Returns VideoSample, or (VideoSample, grids, masks) with grids."""
    manifest = read_manifest(os.path.join(root, "manifest.txt"))
    n = int(manifest["n_frames"])
    n_parts = int(manifest.get("n_parts", DEFAULT_NUM_PARTS))
    src = int(manifest.get("source_frame", 0))
    if n < 2:
        raise DwtError(f"{root}: sequence needs >= 2 frames, manifest says {n}")
    frames = []
    for k in range(n):
        img_p, iuv_p, kp_p = _frame_paths(root, k)
        img = read_tensor(img_p, expect_dtype=np.float32)
        iuv = load_iuv(iuv_p, n_parts)
        kp = read_tensor(kp_p) if os.path.exists(kp_p) else None
        frames.append(Frame(image=img, iuv=iuv, keypoints=kp))
    sample = VideoSample(source=frames[src],
                         driving=[f for k, f in enumerate(frames) if k != src])
    if not with_grids:
        return sample
    grids, masks = [], []
    if int(manifest.get("has_grids", 0)):
        for k in range(1, n):
            g, m = load_grid(os.path.join(root, "grids", f"{k:04d}"))
            grids.append(g)
            masks.append(m)
    return sample, grids, masks


def save_grid(prefix: str, grid: WarpGrid, mask: np.ndarray | None = None):
    write_tensor(prefix + ".grid.dwt", grid.coords.astype(np.float32))
    if mask is not None:
        write_tensor(prefix + ".mask.dwt",
                     mask.astype(np.uint8).reshape(1, *mask.shape[-2:]))


def load_grid(prefix: str):
    coords = read_tensor(prefix + ".grid.dwt", expect_dtype=np.float32)
    grid = WarpGrid(coords)
    mask_path = prefix + ".mask.dwt"
    mask = None
    if os.path.exists(mask_path):
        mask = read_tensor(mask_path).reshape(coords.shape[1:]).astype(bool)
    return grid, mask
