"""Learned residual correction on top of coarse warp grids.

The refinement net sees, at grid resolution, the source image deformed
by the coarse grid, the driving pose planes, and the coarse grid as
offsets from the identity; it predicts an additive coordinate
correction. The output projection is zero-initialized, so an untrained
refiner reproduces the coarse grid exactly, and the trunk uses no
normalization layers, keeping the prediction translation-equivariant up
to padding effects at the borders.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from . import tensor_nn as nn
from .correspondence import CorrespondenceResult, downsample_grid
from .iuv_io.types import IuvMap
from .warp import (WarpGrid, bilinear_sample, bilinear_sample_backward,
                   nearest_cells, subsample_grid, to_relative)


class RefinerNet(nn.Module):
    """Two convs, two residual blocks, zero-init projection to 2 channels."""

    IN_CHANNELS = 8  # 3 deformed image + 3 pose planes + 2 relative coords

    def __init__(self, grid_size: int, base_ch: int = 16,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.grid_size = grid_size
        self.base_ch = base_ch
        self.dtype = dtype
        F = base_ch
        self.net = nn.Sequential(
            nn.Conv2d(self.IN_CHANNELS, F, 3, 1, 1, rng=rng, dtype=dtype),
            nn.ReLU(),
            nn.Conv2d(F, F, 3, 1, 1, rng=rng, dtype=dtype),
            nn.ReLU(),
            nn.ResBlock(F, norm=False, rng=rng, dtype=dtype),
            nn.ResBlock(F, norm=False, rng=rng, dtype=dtype),
            nn.Conv2d(F, 2, 3, 1, 1, init="zero", dtype=dtype),
            names=["conv1", "relu1", "conv2", "relu2", "block1", "block2",
                   "project"],
        )

    def params(self):
        return self.net.params()

    def named_params(self, prefix=""):
        return self.net.named_params(prefix)

    def forward(self, x):
        if x.shape != (self.IN_CHANNELS, self.grid_size, self.grid_size):
            raise ValueError(
                f"refiner expects ({self.IN_CHANNELS},{self.grid_size},"
                f"{self.grid_size}) input, got {x.shape}")
        return self.net.forward(x)

    def backward(self, cache, dy):
        return self.net.backward(cache, dy)


def pose_planes_at(iuv: IuvMap, size: int) -> np.ndarray:
    """Network pose planes (part/P, u, v) nearest-subsampled to size."""
    planes = iuv.encoder_planes()
    if iuv.height == size and iuv.width == size:
        return planes
    rows = nearest_cells(iuv.height, size)
    cols = nearest_cells(iuv.width, size)
    return np.ascontiguousarray(planes[:, rows][:, :, cols])


def _coarse_at_grid_res(coarse, size: int) -> WarpGrid:
    if isinstance(coarse, CorrespondenceResult):
        coarse = coarse if coarse.grid.shape == (size, size) else \
            downsample_grid(coarse, size, size)
        return coarse.grid
    if isinstance(coarse, WarpGrid):
        if coarse.shape == (size, size):
            return coarse
        if coarse.height < size or coarse.width < size:
            raise ValueError(f"coarse grid {coarse.shape} is below the "
                             f"refiner resolution {size}")
        return subsample_grid(coarse, size, size)
    raise TypeError(f"coarse must be a WarpGrid or CorrespondenceResult, "
                    f"got {type(coarse).__name__}")


@dataclass
class RefineCache:
    net_cache: object
    sample_cache: tuple      # (source_img, coarse grid) for the deformed input
    coarse: WarpGrid


def refine_with_cache(net: RefinerNet, source_img: np.ndarray, coarse,
                      driving_pose: IuvMap):
    """Refined grid plus the cache needed to backpropagate through it."""
    g = net.grid_size
    coarse_g = _coarse_at_grid_res(coarse, g)
    deformed = bilinear_sample(source_img, coarse_g)
    planes = pose_planes_at(driving_pose, g).astype(net.dtype)
    rel = to_relative(coarse_g).coords.astype(net.dtype)
    inp = np.concatenate([deformed.astype(net.dtype), planes, rel])
    residual, net_cache = net.forward(inp)
    refined = WarpGrid(coarse_g.coords + residual.astype(coarse_g.coords.dtype))
    return refined, RefineCache(net_cache=net_cache,
                                sample_cache=(source_img, coarse_g),
                                coarse=coarse_g)


def refine_backward(net: RefinerNet, cache: RefineCache,
                    d_refined: np.ndarray) -> np.ndarray:
    """Accumulate net gradients; return the source-image gradient.

    The coarse grid and the pose are analytic inputs without gradients;
    the source image receives gradient through the deformed-image input.
    """
    d_inp = net.backward(cache.net_cache, d_refined.astype(net.dtype))
    d_deformed = d_inp[:3]
    src_img = cache.sample_cache[0]
    d_src, _ = bilinear_sample_backward(cache.sample_cache,
                                        d_deformed.astype(src_img.dtype))
    return d_src


def refine(net: RefinerNet, source_img: np.ndarray, coarse,
           driving_pose: IuvMap) -> WarpGrid:
    """Coarse grid plus the predicted residual correction."""
    refined, _ = refine_with_cache(net, source_img, coarse, driving_pose)
    return refined


# ------------------------------------------------------ standalone fit ----

@dataclass
class RefinerTrainConfig:
    epochs: int = 30
    lr: float = 1e-3
    noise_sigma_px: float = 2.0
    noise_cells: int = 4        # resolution of the smooth corruption field
    holdout_frac: float = 0.25
    base_ch: int = 16
    grid_size: int = 48
    betas: tuple = (0.9, 0.999)  # plain regression, not adversarial


@dataclass
class _Sample:
    inp_img: np.ndarray      # full-res source image
    corrupted: WarpGrid      # coarse grid with smooth noise, grid res
    gt: WarpGrid             # ground-truth grid, grid res
    pose: IuvMap
    mask: np.ndarray         # foreground at grid res


def smooth_noise_field(rng: np.random.Generator, size: int, cells: int,
                       sigma_norm: float) -> np.ndarray:
    """Low-frequency (2,size,size) field with per-component std sigma."""
    coarse = rng.normal(0.0, sigma_norm, (2, cells, cells))
    pos = (np.arange(size) + 0.5) * cells / size - 0.5
    px, py = np.meshgrid(pos, pos)
    return kernels.bilinear_forward(coarse, px, py).astype(np.float32)


def endpoint_error_px(pred: WarpGrid, gt: WarpGrid, mask: np.ndarray,
                      ref_w: int, ref_h: int) -> float:
    """Mean Euclidean coordinate error over masked cells, in pixels."""
    if not mask.any():
        return 0.0
    d = pred.coords.astype(np.float64) - gt.coords.astype(np.float64)
    dx = d[0][mask] * (ref_w / 2.0)
    dy = d[1][mask] * (ref_h / 2.0)
    return float(np.mean(np.sqrt(dx * dx + dy * dy)))


def _build_samples(sequences, cfg: RefinerTrainConfig,
                   rng: np.random.Generator):
    """Per-sequence split: the trailing frames of each video are held out."""
    train_set, hold_set = [], []
    for seq in sequences:
        src_img = seq.sample.source.image
        H, W = seq.scene.height, seq.scene.width
        sigma_norm = cfg.noise_sigma_px * 2.0 / W
        n_drive = len(seq.sample.driving)
        n_hold = max(1, int(round(cfg.holdout_frac * n_drive)))
        for k, frame in enumerate(seq.sample.driving):
            gt = subsample_grid(seq.grids[k], cfg.grid_size, cfg.grid_size)
            rows = nearest_cells(H, cfg.grid_size)
            cols = nearest_cells(W, cfg.grid_size)
            mask = seq.masks[k][rows][:, cols]
            noise = smooth_noise_field(rng, cfg.grid_size, cfg.noise_cells,
                                       sigma_norm)
            corrupted = WarpGrid(gt.coords + noise.astype(gt.coords.dtype))
            sample = _Sample(inp_img=src_img, corrupted=corrupted,
                             gt=gt, pose=frame.iuv, mask=mask)
            (hold_set if k >= n_drive - n_hold else train_set).append(sample)
    return train_set, hold_set


def _epoch_error(net, samples, cfg, ref_w, ref_h, train=False,
                 opt: nn.Optimizer | None = None, order=None):
    total = 0.0
    idx = order if order is not None else range(len(samples))
    for i in idx:
        s = samples[i]
        refined, cache = refine_with_cache(net, s.inp_img, s.corrupted, s.pose)
        total += endpoint_error_px(refined, s.gt, s.mask, ref_w, ref_h)
        if train:
            diff = (refined.coords - s.gt.coords).astype(np.float64)
            diff *= s.mask[None, :, :]
            n = max(int(s.mask.sum()), 1)
            loss = float((diff * diff).sum() / n)
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite refiner loss {loss}")
            d_refined = (2.0 / n) * diff
            opt.zero_grad()
            refine_backward(net, cache, d_refined.astype(net.dtype))
            opt.step()
    return total / max(len(samples), 1)


def train_refiner_standalone(sequences: list, epochs: int | None = None,
                             seed: int = 0,
                             cfg: RefinerTrainConfig | None = None):
    """Fit a refiner on corrupted coarse grids against ground truth.

    Supervision is the masked squared coordinate error between the
    refined grid and the exact grid of each synthetic driving frame.
    Returns ``(net, history)`` where history rows carry the mean
    endpoint error (pixels) on training and held-out frames; row 0 is
    the untrained (zero-residual) baseline.
    """
    cfg = cfg or RefinerTrainConfig()
    if epochs is not None:
        cfg.epochs = epochs
    rng = np.random.default_rng(seed)
    net = RefinerNet(cfg.grid_size, cfg.base_ch, rng=rng)
    opt = nn.Optimizer(net.params(), lr=cfg.lr, mode="adam", betas=cfg.betas)

    train_set, hold_set = _build_samples(sequences, cfg, rng)
    if not train_set:
        raise ValueError("not enough samples to split off a holdout set")
    ref_w = sequences[0].scene.width
    ref_h = sequences[0].scene.height

    history = [{
        "epoch": 0,
        "train_epe": _epoch_error(net, train_set, cfg, ref_w, ref_h),
        "holdout_epe": _epoch_error(net, hold_set, cfg, ref_w, ref_h),
    }]
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(train_set))
        _epoch_error(net, train_set, cfg, ref_w, ref_h, train=True,
                     opt=opt, order=order)
        history.append({
            "epoch": epoch,
            "train_epe": _epoch_error(net, train_set, cfg, ref_w, ref_h),
            "holdout_epe": _epoch_error(net, hold_set, cfg, ref_w, ref_h),
        })
    return net, history
