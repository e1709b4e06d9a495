"""Batch command-line surface.

Subcommands: ``synth`` (synthetic dataset generation), ``warp`` (coarse
and optionally refined warping of one image), ``train``, ``generate``
(rollout from a source frame along driving poses) and ``evaluate``.

Every command is deterministic under a fixed ``--seed``. Exit codes:
0 success, 2 missing/unreadable/unwritable files, 3 pose-map validation
failure, 4 configuration or checkpoint mismatch. ``DWNET_BACKEND``
selects the kernel backend and ``DWNET_THREADS`` caps numba threads.
"""

import argparse
import csv
import glob
import json
import os
import sys

import numpy as np

from . import checkpoint, generator, iuv_io, metrics
from .config import ConfigError, build_config
from .correspondence import build_part_index, coarse_warp, downsample_grid
from .generator import GenConfig, GeneratorNet, TrainConfig, train_videos
from .iuv_io import (DwtError, load_iuv, load_sequence, read_tensor,
                     save_sequence, validate_iuv, write_tensor)
from .losses import (CriticFeatureExtractor, PatchCritic,
                     RandomFeatureExtractor)
from .refiner import refine_with_cache
from .warp import WarpGrid, bilinear_sample, identity_grid


class IuvValidationError(Exception):
    def __init__(self, path, report):
        super().__init__(f"{path}: {report.summary()}")
        self.report = report


def _require_file(path):
    if not os.path.isfile(path):
        raise FileNotFoundError(f"missing input file: {path}")
    return path


def _load_valid_iuv(path, n_parts):
    iuv = load_iuv(_require_file(path), n_parts)
    report = validate_iuv(iuv)
    if not report.ok:
        raise IuvValidationError(path, report)
    return iuv


def _write_png(path, image):
    try:
        from PIL import Image
    except ImportError:
        print(f"Pillow not installed; skipping PNG export {path}",
              file=sys.stderr)
        return
    arr = np.clip((image + 1.0) * 127.5, 0, 255).astype(np.uint8)
    Image.fromarray(arr.transpose(1, 2, 0)).save(path)


# ------------------------------------------------------------ commands ----

def cmd_synth(args):
    cfg = build_config(vars(args), args.config)
    if cfg.frames < 2:
        raise ConfigError(
            f"--frames {cfg.frames}: training videos need at least 2 driving "
            f"frames (3 total) for target sampling")
    os.makedirs(args.out, exist_ok=True)
    for s in range(cfg.scenes):
        scene = iuv_io.make_scene(seed=cfg.seed + 1000 * s, height=cfg.dims,
                                  width=cfg.dims, n_ellipses=cfg.parts,
                                  uv_noise=cfg.uv_noise)
        seq = iuv_io.generate_synthetic_sequence(scene, cfg.frames + 1,
                                                 seed=cfg.seed + 1000 * s + 1)
        save_sequence(os.path.join(args.out, f"scene_{s:02d}"), seq.sample,
                      grids=seq.grids, masks=seq.masks)
    print(f"wrote {cfg.scenes} scenes x {cfg.frames} driving frames "
          f"({cfg.dims}x{cfg.dims}) to {args.out}")


def cmd_warp(args):
    src_iuv = _load_valid_iuv(args.source_iuv, args.parts)
    drv_iuv = _load_valid_iuv(args.driving_iuv, args.parts)
    src_img = read_tensor(_require_file(args.source_img),
                          expect_dtype=np.float32)
    index = build_part_index(src_iuv)
    corr = coarse_warp(index, drv_iuv)
    grid = corr.grid
    if args.refiner:
        net = checkpoint.load_refiner(args.refiner)
        refined_small, _ = refine_with_cache(net, src_img, corr, drv_iuv)
        g = net.grid_size
        # residual at grid resolution, spread back to full resolution
        coarse_small = downsample_grid(corr, g, g).grid
        residual = refined_small.coords - coarse_small.coords
        H, W = grid.shape
        up = bilinear_sample(residual, identity_grid(H, W, np.float32))
        grid = WarpGrid(grid.coords + up)
    warped = bilinear_sample(src_img, grid)
    os.makedirs(os.path.dirname(os.path.abspath(args.out)) or ".",
                exist_ok=True)
    write_tensor(args.out + ".grid.dwt", grid.coords.astype(np.float32))
    write_tensor(args.out + ".mask.dwt",
                 corr.matched.astype(np.uint8)[None])
    write_tensor(args.out + ".warped.dwt", warped.astype(np.float32))
    if args.png:
        _write_png(args.out + ".warped.png", warped)
    n_missed = int((~corr.matched).sum())
    print(f"warped {args.source_img} -> {args.out}.warped.dwt "
          f"({n_missed} unmatched pixels)")


def _load_dataset(root):
    seq_dirs = sorted(
        d for d in glob.glob(os.path.join(root, "*"))
        if os.path.isfile(os.path.join(d, "manifest.txt")))
    if not seq_dirs:
        raise FileNotFoundError(f"no sequence directories under {root}")
    videos = []
    for d in seq_dirs:
        sample = load_sequence(d)
        videos.append(sample.all_frames())
    return videos


def cmd_train(args):
    cfg = build_config(vars(args), args.config)
    videos = _load_dataset(args.data)
    size = videos[0][0].image.shape[-1]
    if size != cfg.dims:
        raise ConfigError(f"dataset frames are {size}px but config wants "
                          f"{cfg.dims}px; pass --dims {size}")
    rng = np.random.default_rng(cfg.seed)
    gen_cfg = GenConfig(image_size=cfg.dims, grid_size=cfg.grid,
                        base_ch=cfg.base_ch, n_res_blocks=cfg.res_blocks,
                        markovian=cfg.markovian, use_refiner=cfg.use_refiner,
                        use_warp=cfg.use_warp)
    net = GeneratorNet(gen_cfg, rng=rng)
    critic = PatchCritic(base_ch=cfg.base_ch, rng=rng) \
        if cfg.adv_weight > 0 else None
    extractors = [RandomFeatureExtractor(seed=0)]
    if critic is not None:
        extractors.append(CriticFeatureExtractor(critic))
    tcfg = TrainConfig(lam=cfg.lam, adv_weight=cfg.adv_weight, lr=cfg.lr)

    os.makedirs(args.out, exist_ok=True)
    rows = []
    history = train_videos(net, critic, videos, cfg.steps, cfg.seed, tcfg,
                           extractors,
                           callback=lambda s, l: rows.append(
                               (s, l.d_loss, l.g_loss, l.rec_loss, l.total)))
    with open(os.path.join(args.out, "losses.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "d_loss", "g_loss", "rec_loss", "total"])
        writer.writerows(rows)
    checkpoint.save_generator(os.path.join(args.out, "generator"), net)
    if critic is not None:
        checkpoint.save_critic(os.path.join(args.out, "critic"), critic,
                               cfg.base_ch)
    final = history[-1].total if history else float("nan")
    print(f"trained {cfg.steps} steps; final total loss "
          f"{final:.4f}; checkpoint in {args.out}")


def cmd_generate(args):
    net = checkpoint.load_generator(os.path.join(args.ckpt, "generator"))
    sample = load_sequence(args.data)
    poses = [f.iuv for f in sample.driving]
    if args.frames is not None:
        if args.frames < 1:
            raise ConfigError("--frames must be >= 1 for generation")
        poses = poses[:args.frames]
    if net.config.image_size != sample.source.image.shape[-1]:
        raise checkpoint.CheckpointMismatchError(
            f"checkpoint generates {net.config.image_size}px frames, "
            f"sequence is {sample.source.image.shape[-1]}px")
    os.makedirs(args.out, exist_ok=True)
    for k, frame in enumerate(generator.iter_rollout(net, sample.source,
                                                     poses)):
        write_tensor(os.path.join(args.out, f"gen_{k + 1:04d}.img.dwt"),
                     frame.astype(np.float32))
        if args.png:
            _write_png(os.path.join(args.out, f"gen_{k + 1:04d}.png"), frame)
        if sample.driving[k].keypoints is not None:
            write_tensor(os.path.join(args.out, f"gen_{k + 1:04d}.kp.dwt"),
                         sample.driving[k].keypoints)
    print(f"generated {len(poses)} frames into {args.out}")


def _frame_files(root):
    files = sorted(glob.glob(os.path.join(root, "**", "*.img.dwt"),
                             recursive=True))
    if not files:
        raise FileNotFoundError(f"no .img.dwt frames under {root}")
    return files


def cmd_evaluate(args):
    gen_files = _frame_files(args.gen)
    ref_files = _frame_files(args.ref)
    if len(gen_files) != len(ref_files):
        raise ConfigError(f"frame counts differ: {len(gen_files)} generated "
                          f"vs {len(ref_files)} reference")
    gen_imgs = [read_tensor(f, expect_dtype=np.float32) for f in gen_files]
    ref_imgs = [read_tensor(f, expect_dtype=np.float32) for f in ref_files]
    extractor = metrics.default_extractor()
    perceptual = float(np.mean([
        metrics.perceptual_distance(extractor, r, g)
        for r, g in zip(ref_imgs, gen_imgs)]))

    if args.gen_emb and args.ref_emb:
        emb_g = read_tensor(_require_file(args.gen_emb))
        emb_r = read_tensor(_require_file(args.ref_emb))
    else:
        emb_g = metrics.embed_images(gen_imgs, extractor)
        emb_r = metrics.embed_images(ref_imgs, extractor)
    fid = metrics.frechet_distance(emb_r, emb_g)

    akd_val = None
    gen_kp = [f.replace(".img.dwt", ".kp.dwt") for f in gen_files]
    ref_kp = [f.replace(".img.dwt", ".kp.dwt") for f in ref_files]
    if all(os.path.exists(f) for f in gen_kp + ref_kp):
        pred = np.stack([read_tensor(f) for f in gen_kp])
        gt = np.stack([read_tensor(f) for f in ref_kp])
        akd_val = metrics.akd(pred, gt)

    report = {"perceptual": perceptual, "fid": fid, "akd": akd_val}
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)


# -------------------------------------------------------------- parser ----

def _add_common(p):
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None,
                   help="key=value config file (defaults < file < flags)")
    p.add_argument("--profile", choices=["desk", "paper"], default=None)


def build_parser():
    ap = argparse.ArgumentParser(
        prog="dwnet",
        description="Pose-guided video synthesis via dense UV warping")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic scene sequences")
    p.add_argument("--out", required=True)
    p.add_argument("--scenes", type=int, default=None)
    p.add_argument("--frames", type=int, default=None,
                   help="driving frames per scene")
    p.add_argument("--dims", type=int, default=None)
    p.add_argument("--parts", type=int, default=None)
    p.add_argument("--uv-noise", dest="uv_noise", type=float, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("warp", help="warp a source image to a driving pose")
    p.add_argument("--source-iuv", required=True)
    p.add_argument("--driving-iuv", required=True)
    p.add_argument("--source-img", required=True)
    p.add_argument("--out", required=True, help="output prefix")
    p.add_argument("--refiner", default=None,
                   help="refiner checkpoint prefix to apply")
    p.add_argument("--parts", type=int, default=iuv_io.DEFAULT_NUM_PARTS)
    p.add_argument("--png", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_warp)

    p = sub.add_parser("train", help="train generator and critic")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--dims", type=int, default=None)
    p.add_argument("--adv-weight", dest="adv_weight", type=float,
                   default=None)
    p.add_argument("--base-ch", dest="base_ch", type=int, default=None)
    p.add_argument("--res-blocks", dest="res_blocks", type=int, default=None)
    p.add_argument("--no-markovian", dest="markovian", action="store_false",
                   default=None)
    p.add_argument("--no-refiner", dest="use_refiner", action="store_false",
                   default=None)
    p.add_argument("--no-warp", dest="use_warp", action="store_false",
                   default=None)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="roll out frames along driving poses")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True, help="sequence directory")
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, default=None)
    p.add_argument("--png", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="perceptual / FID / AKD report")
    p.add_argument("--gen", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--gen-emb", dest="gen_emb", default=None)
    p.add_argument("--ref-emb", dest="ref_emb", default=None)
    p.add_argument("--out", default=None, help="write the JSON report here")
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except IuvValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, checkpoint.CheckpointMismatchError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (OSError, DwtError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
