"""Frame generator: pose encoder, dual warp paths, decoder, and training.

One frame is produced from (source image, source pose, previous image,
previous pose, next driving pose): the driving pose is encoded, the
source and previous images are encoded by a shared appearance encoder
and each warped by its refined grid towards the driving pose, and the
decoder turns the concatenation into the next frame. Video generation
is strictly chained: after the first frame (where the source stands in
for the previous frame) only generated frames ever enter the
previous-frame slot — real driving images are never available there.

Training samples four frames of one video (a free source plus three
consecutive targets), generates the targets sequentially, and
backpropagates through the chain; the previous-frame path is kept live
across frames unless explicitly detached.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor_nn as nn
from .correspondence import build_part_index, coarse_warp, downsample_grid
from .iuv_io.types import Frame, IuvMap
from .losses import (lsgan_d_loss_grads, lsgan_g_loss_grads,
                     reconstruction_loss_grads)
from .refiner import RefinerNet, refine_backward, refine_with_cache
from .warp import bilinear_sample, bilinear_sample_backward


@dataclass
class GenConfig:
    image_size: int = 64
    grid_size: int = 16
    base_ch: int = 8
    n_res_blocks: int = 9
    n_parts: int = 24
    use_warp: bool = True
    use_refiner: bool = True
    markovian: bool = True

    def __post_init__(self):
        if self.image_size != 4 * self.grid_size:
            raise ValueError(
                f"image size {self.image_size} must be 4x the grid size "
                f"{self.grid_size} (two stride-2 encoder stages)")


def desk_config(**overrides) -> GenConfig:
    return GenConfig(**overrides)


def paper_config(**overrides) -> GenConfig:
    merged = dict(image_size=256, grid_size=64, base_ch=64)
    merged.update(overrides)
    return GenConfig(**merged)


def _enc_stack(in_ch, F, rng, dtype):
    return nn.Sequential(
        nn.Conv2d(in_ch, F, 3, 2, 1, rng=rng, dtype=dtype),
        nn.InstanceNorm2d(F, dtype=dtype),
        nn.ReLU(),
        nn.Conv2d(F, 2 * F, 3, 2, 1, rng=rng, dtype=dtype),
        nn.InstanceNorm2d(2 * F, dtype=dtype),
        nn.ReLU(),
        names=["conv1", "norm1", "relu1", "conv2", "norm2", "relu2"],
    )


class GeneratorNet(nn.Module):
    """Pose encoder + shared appearance encoder + refiner + decoder."""

    def __init__(self, config: GenConfig | None = None,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        self.config = config or GenConfig()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.dtype = dtype
        F = self.config.base_ch
        self.pose_enc = _enc_stack(3, F, rng, dtype)
        self.app_enc = _enc_stack(3, F, rng, dtype)
        self.refiner = RefinerNet(self.config.grid_size, base_ch=F,
                                  rng=rng, dtype=dtype)
        dec = [nn.ResBlock(6 * F, rng=rng, dtype=dtype)
               for _ in range(self.config.n_res_blocks)]
        dec_names = [f"block{i}" for i in range(self.config.n_res_blocks)]
        dec += [
            nn.UpsampleConv(6 * F, 2 * F, rng=rng, dtype=dtype),
            nn.InstanceNorm2d(2 * F, dtype=dtype),
            nn.ReLU(),
            nn.UpsampleConv(2 * F, F, rng=rng, dtype=dtype),
            nn.InstanceNorm2d(F, dtype=dtype),
            nn.ReLU(),
            nn.Conv2d(F, 3, 3, 1, 1, rng=rng, dtype=dtype),
            nn.Tanh(),
        ]
        dec_names += ["up1", "upnorm1", "uprelu1", "up2", "upnorm2",
                      "uprelu2", "out", "tanh"]
        self.decoder = nn.Sequential(*dec, names=dec_names)

    def params(self):
        return (self.pose_enc.params() + self.app_enc.params()
                + self.refiner.params() + self.decoder.params())

    def named_params(self, prefix=""):
        return (self.pose_enc.named_params(prefix + "pose_enc.")
                + self.app_enc.named_params(prefix + "app_enc.")
                + self.refiner.named_params(prefix + "refiner.")
                + self.decoder.named_params(prefix + "decoder."))


@dataclass
class _WarpPathCache:
    app_cache: object
    features: np.ndarray | None = None   # appearance features pre-warp
    refined: object = None               # grid used for sampling
    refine_cache: object = None


@dataclass
class FrameCache:
    pose_cache: object
    path_source: _WarpPathCache
    path_prev: _WarpPathCache


def _check_frame_inputs(net, imgs, iuvs):
    size = net.config.image_size
    for img in imgs:
        if img.shape != (3, size, size):
            raise ValueError(f"expected (3,{size},{size}) images, "
                             f"got {img.shape}")
    for iuv in iuvs:
        if iuv.shape != (size, size):
            raise ValueError(f"expected {size}x{size} pose maps, "
                             f"got {iuv.shape}")


def _warp_path_forward(net, img, index, drive_iuv):
    a, c_a = net.app_enc.forward(img)
    cache = _WarpPathCache(app_cache=c_a)
    if not net.config.use_warp:
        return a, cache
    corr = coarse_warp(index, drive_iuv)
    if net.config.use_refiner:
        refined, c_r = refine_with_cache(net.refiner, img, corr, drive_iuv)
        cache.refine_cache = c_r
    else:
        g = net.config.grid_size
        refined = downsample_grid(corr, g, g).grid
    warped = bilinear_sample(a, refined)
    cache.features = a
    cache.refined = refined
    return warped, cache


def _warp_path_backward(net, cache: _WarpPathCache, d_warped):
    if not net.config.use_warp:
        return net.app_enc.backward(cache.app_cache, d_warped)
    d_a, d_grid = bilinear_sample_backward((cache.features, cache.refined),
                                           d_warped)
    d_img = net.app_enc.backward(cache.app_cache, d_a)
    if net.config.use_refiner:
        d_img = d_img + refine_backward(net.refiner, cache.refine_cache,
                                        d_grid)
    return d_img


def generate_frame(net: GeneratorNet, source: Frame, prev: Frame,
                   driving_pose: IuvMap, source_index=None, prev_index=None,
                   with_cache: bool = False):
    """One decoded frame; returns (image, cache) with ``with_cache``.

    ``source_index``/``prev_index`` are optional prebuilt part indexes
    over the respective poses (rollouts reuse the source one).
    """
    _check_frame_inputs(net, [source.image, prev.image],
                        [source.iuv, prev.iuv, driving_pose])
    if source_index is None:
        source_index = build_part_index(source.iuv)
    if prev_index is None:
        prev_index = build_part_index(prev.iuv)
    pose_in = driving_pose.encoder_planes().astype(net.dtype)
    e, c_e = net.pose_enc.forward(pose_in)
    ws, cs = _warp_path_forward(net, source.image, source_index, driving_pose)
    wp, cp = _warp_path_forward(net, prev.image, prev_index, driving_pose)
    dec_in = np.concatenate([e, ws, wp])
    out, c_d = net.decoder.forward(dec_in)
    if not with_cache:
        return out, None
    return out, (FrameCache(pose_cache=c_e, path_source=cs, path_prev=cp),
                 c_d, e.shape[0])


def frame_backward(net: GeneratorNet, cache, d_out):
    """Backprop one generated frame; returns (d_source_img, d_prev_img)."""
    if cache is None:
        raise ValueError("generate_frame must be called with with_cache=True "
                         "to backpropagate")
    fc, c_d, ne = cache
    d_dec_in = net.decoder.backward(c_d, d_out)
    d_e = d_dec_in[:ne]
    nw = (d_dec_in.shape[0] - ne) // 2
    d_ws = d_dec_in[ne:ne + nw]
    d_wp = d_dec_in[ne + nw:]
    net.pose_enc.backward(fc.pose_cache, d_e)
    d_src = _warp_path_backward(net, fc.path_source, d_ws)
    d_prev = _warp_path_backward(net, fc.path_prev, d_wp)
    return d_src, d_prev


def warp_source_only(source: Frame, driving_pose: IuvMap, source_index=None,
                     refiner: RefinerNet | None = None) -> np.ndarray:
    """Diagnostic bypass: the source image warped by its (optionally
    refined) full-resolution coarse grid, skipping encoders and decoder."""
    if source_index is None:
        source_index = build_part_index(source.iuv)
    corr = coarse_warp(source_index, driving_pose)
    grid = corr.grid
    if refiner is not None:
        grid, _ = refine_with_cache(refiner, source.image, corr, driving_pose)
    return bilinear_sample(source.image, grid)


# -------------------------------------------------------------- rollout ---

def iter_rollout(net: GeneratorNet, source: Frame, driving_poses):
    """Generate frames one by one, retaining only the previous frame.

    The previous-frame slot can only ever hold the source image or the
    frame generated in the preceding step (asserted each iteration).
    """
    source_index = build_part_index(source.iuv)
    prev = source
    prev_index = source_index
    last_out = None
    for pose in driving_poses:
        assert prev.image is source.image or prev.image is last_out, \
            "previous-frame path fed something that was not generated"
        out, _ = generate_frame(net, source, prev, pose,
                                source_index=source_index,
                                prev_index=prev_index)
        yield out
        if net.config.markovian:
            last_out = out
            prev = Frame(image=out, iuv=pose)
            prev_index = build_part_index(pose)


def rollout(net: GeneratorNet, source: Frame, driving_poses) -> list:
    """All frames of :func:`iter_rollout` as a list."""
    if len(driving_poses) < 1:
        raise ValueError("rollout needs at least one driving pose")
    return list(iter_rollout(net, source, driving_poses))


# ------------------------------------------------------------- training ---

@dataclass
class TrainingQuadruple:
    """Indices into one video: a free source and three consecutive targets."""

    source: int
    targets: tuple

    def __post_init__(self):
        a, b, c = self.targets
        if not (b == a + 1 and c == a + 2):
            raise ValueError(f"targets must be consecutive, got {self.targets}")


def sample_quadruple(video_len: int, rng: np.random.Generator
                     ) -> TrainingQuadruple:
    """Uniform source index plus a uniform consecutive target triple.

    Indices are 0-based; the source may coincide with a target.
    """
    if video_len < 3:
        raise ValueError(f"need at least 3 frames to sample targets, "
                         f"video has {video_len}")
    i = int(rng.integers(0, video_len))
    j = int(rng.integers(0, video_len - 2))
    return TrainingQuadruple(source=i, targets=(j, j + 1, j + 2))


@dataclass
class TrainConfig:
    lam: float = 10.0
    adv_weight: float = 1.0
    detach_prev: bool = False
    lr: float = 2e-4
    betas: tuple = (0.5, 0.999)


@dataclass
class StepLosses:
    d_loss: float
    g_loss: float
    rec_loss: float
    total: float


def train_step(net: GeneratorNet, critic, video: list, quad: TrainingQuadruple,
               opt_g: nn.Optimizer, opt_d, extractors: list,
               cfg: TrainConfig) -> StepLosses:
    """One optimization step on a sampled quadruple of ``video`` frames.

    The critic updates on all three generated frames (held constant),
    then the generator updates on the adversarial plus lam-weighted
    reconstruction objective, with gradients flowing backwards through
    the generated-frame chain.
    """
    source = video[quad.source]
    targets = [video[j] for j in quad.targets]
    src_index = build_part_index(source.iuv)

    outs, caches = [], []
    prev, prev_index = source, src_index
    for tgt in targets:
        out, cache = generate_frame(net, source, prev, tgt.iuv,
                                    source_index=src_index,
                                    prev_index=prev_index, with_cache=True)
        outs.append(out)
        caches.append(cache)
        if net.config.markovian:
            prev = Frame(image=out, iuv=tgt.iuv)
            prev_index = build_part_index(tgt.iuv)

    d_total = 0.0
    if cfg.adv_weight > 0 and critic is not None:
        opt_d.zero_grad()
        for out, tgt in zip(outs, targets):
            d_total += lsgan_d_loss_grads(critic, tgt.image, out)
        opt_d.step()

    opt_g.zero_grad()
    g_terms, rec_terms, d_outs = [], [], []
    for out, tgt in zip(outs, targets):
        d_out = np.zeros_like(out)
        g_term = 0.0
        if cfg.adv_weight > 0 and critic is not None:
            g_term, d_adv = lsgan_g_loss_grads(critic, out)
            d_out += np.float32(cfg.adv_weight) * d_adv
        rec, d_rec = reconstruction_loss_grads(extractors, tgt.image, out)
        d_out += np.float32(cfg.lam) * d_rec
        g_terms.append(g_term)
        rec_terms.append(rec)
        d_outs.append(d_out)

    upstream_prev = None
    for k in range(len(outs) - 1, -1, -1):
        d = d_outs[k] if upstream_prev is None else d_outs[k] + upstream_prev
        _d_src, d_prev = frame_backward(net, caches[k], d)
        chained = (k > 0 and net.config.markovian and not cfg.detach_prev)
        upstream_prev = d_prev if chained else None
    opt_g.step()

    g_loss = float(sum(cfg.adv_weight * g for g in g_terms))
    rec_loss = float(sum(rec_terms))
    total = float(g_loss + cfg.lam * rec_loss)
    if not np.isfinite(total) or not np.isfinite(d_total):
        raise FloatingPointError(
            f"non-finite training loss (d={d_total}, total={total})")
    return StepLosses(d_loss=d_total, g_loss=g_loss, rec_loss=rec_loss,
                      total=total)


def train_videos(net: GeneratorNet, critic, videos: list, steps: int,
                 seed: int, cfg: TrainConfig, extractors: list,
                 decay_lr: bool = True, callback=None) -> list:
    """Steps over randomly chosen videos/quadruples; returns the loss log.

    ``videos`` holds frame lists (source first). Learning rates ramp
    linearly to zero over the run unless ``decay_lr`` is off.
    """
    rng = np.random.default_rng(seed)
    opt_g = nn.Optimizer(net.params(), lr=cfg.lr, betas=cfg.betas)
    opt_d = None
    if critic is not None and cfg.adv_weight > 0:
        opt_d = nn.Optimizer(critic.params(), lr=cfg.lr, betas=cfg.betas)
    history = []
    for step in range(steps):
        if decay_lr:
            lr = nn.linear_decay_lr(cfg.lr, step, steps)
            opt_g.lr = lr
            if opt_d is not None:
                opt_d.lr = lr
        video = videos[int(rng.integers(0, len(videos)))]
        quad = sample_quadruple(len(video), rng)
        losses = train_step(net, critic, video, quad, opt_g, opt_d,
                            extractors, cfg)
        history.append(losses)
        if callback is not None:
            callback(step, losses)
    return history
