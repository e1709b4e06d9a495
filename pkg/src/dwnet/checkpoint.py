"""Parameter checkpoints: one flat tensor plus a layer-shape manifest.

A checkpoint prefix ``<p>`` owns two files: ``<p>.params.dwt`` holding
every parameter concatenated flat (float32, in named_params order) and
``<p>.manifest.txt`` recording the module kind, its architecture fields
and one ``param.<name>=<d0>x<d1>...`` line per tensor. Loading rebuilds
the module from the recorded architecture and refuses shape mismatches.
"""

import numpy as np

from .generator import GenConfig, GeneratorNet
from .iuv_io.container import read_manifest, read_tensor, write_manifest, \
    write_tensor
from .losses import PatchCritic
from .refiner import RefinerNet


class CheckpointMismatchError(Exception):
    """Stored parameters do not fit the declared architecture."""


def _shape_str(shape):
    return "x".join(str(d) for d in shape) if shape else "scalar"


def _parse_shape(text):
    return () if text == "scalar" else tuple(int(d) for d in text.split("x"))


def save_module(prefix: str, module, kind: str, arch: dict) -> None:
    named = module.named_params()
    manifest = {"kind": kind}
    manifest.update(arch)
    flats = []
    for name, p in named:
        manifest[f"param.{name}"] = _shape_str(p.value.shape)
        flats.append(p.value.astype(np.float32).ravel())
    write_tensor(prefix + ".params.dwt",
                 np.concatenate(flats) if flats else np.zeros(0, np.float32))
    write_manifest(prefix + ".manifest.txt", manifest)


def _fill_module(prefix: str, module, manifest: dict) -> None:
    flat = read_tensor(prefix + ".params.dwt", expect_dtype=np.float32)
    named = module.named_params()
    recorded = [(k[len("param."):], _parse_shape(v))
                for k, v in manifest.items() if k.startswith("param.")]
    if len(recorded) != len(named):
        raise CheckpointMismatchError(
            f"{prefix}: checkpoint lists {len(recorded)} tensors, "
            f"architecture has {len(named)}")
    off = 0
    for (rec_name, rec_shape), (name, p) in zip(recorded, named):
        if rec_name != name or rec_shape != p.value.shape:
            raise CheckpointMismatchError(
                f"{prefix}: tensor {rec_name} {rec_shape} does not match "
                f"architecture tensor {name} {p.value.shape}")
        n = int(np.prod(rec_shape, dtype=np.int64)) if rec_shape else 1
        if off + n > flat.size:
            raise CheckpointMismatchError(
                f"{prefix}: flat parameter tensor too short at {name}")
        p.value[...] = flat[off:off + n].reshape(p.value.shape)
        off += n
    if off != flat.size:
        raise CheckpointMismatchError(
            f"{prefix}: {flat.size - off} unused values in parameter tensor")


def _read_kind(prefix: str, expect_kind: str) -> dict:
    manifest = read_manifest(prefix + ".manifest.txt")
    kind = manifest.get("kind")
    if kind != expect_kind:
        raise CheckpointMismatchError(
            f"{prefix}: checkpoint kind {kind!r}, expected {expect_kind!r}")
    return manifest


def save_generator(prefix: str, net: GeneratorNet) -> None:
    c = net.config
    save_module(prefix, net, "generator", {
        "image_size": c.image_size, "grid_size": c.grid_size,
        "base_ch": c.base_ch, "n_res_blocks": c.n_res_blocks,
        "n_parts": c.n_parts, "use_warp": int(c.use_warp),
        "use_refiner": int(c.use_refiner), "markovian": int(c.markovian),
    })


def load_generator(prefix: str) -> GeneratorNet:
    m = _read_kind(prefix, "generator")
    try:
        cfg = GenConfig(
            image_size=int(m["image_size"]), grid_size=int(m["grid_size"]),
            base_ch=int(m["base_ch"]), n_res_blocks=int(m["n_res_blocks"]),
            n_parts=int(m["n_parts"]), use_warp=bool(int(m["use_warp"])),
            use_refiner=bool(int(m["use_refiner"])),
            markovian=bool(int(m["markovian"])))
    except (KeyError, ValueError) as exc:
        raise CheckpointMismatchError(
            f"{prefix}: incomplete architecture record ({exc})") from exc
    net = GeneratorNet(cfg, rng=np.random.default_rng(0))
    _fill_module(prefix, net, m)
    return net


def save_critic(prefix: str, critic: PatchCritic, base_ch: int) -> None:
    save_module(prefix, critic, "critic", {
        "base_ch": base_ch, "conditional": int(critic.conditional)})


def load_critic(prefix: str) -> PatchCritic:
    m = _read_kind(prefix, "critic")
    critic = PatchCritic(base_ch=int(m["base_ch"]),
                         conditional=bool(int(m.get("conditional", 0))),
                         rng=np.random.default_rng(0))
    _fill_module(prefix, critic, m)
    return critic


def save_refiner(prefix: str, net: RefinerNet) -> None:
    save_module(prefix, net, "refiner", {
        "grid_size": net.grid_size, "base_ch": net.base_ch})


def load_refiner(prefix: str) -> RefinerNet:
    m = _read_kind(prefix, "refiner")
    net = RefinerNet(int(m["grid_size"]), int(m["base_ch"]),
                     rng=np.random.default_rng(0))
    _fill_module(prefix, net, m)
    return net
