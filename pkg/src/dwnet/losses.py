"""Adversarial, feature-matching and perceptual objectives.

The critic is a small strided patch network producing a spatial realism
map (mean-reduced into scalar losses). Reconstruction compares images
through pluggable feature extractors: the critic's own activations play
the feature-matching role, and a frozen randomly-initialized conv
pyramid plays the perceptual role so no pretrained weights are needed;
any extractor with the same two-method surface can be slotted in.

Each loss comes in two flavours: the plain function returns the scalar
value; the ``*_grads`` variant also backpropagates, accumulating
parameter gradients and returning image gradients where they exist.
"""

import numpy as np

from . import tensor_nn as nn
from .tensor_nn import conv2d, conv2d_backward


class PatchCritic(nn.Module):
    """Three stride-2 convs and a score projection over patches.

    Optionally conditioned on pose planes concatenated to the image.
    """

    def __init__(self, in_ch: int = 3, base_ch: int = 16,
                 conditional: bool = False,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.conditional = conditional
        self.dtype = dtype
        F = base_ch
        cin = in_ch + (3 if conditional else 0)
        self.stages = [
            nn.Sequential(nn.Conv2d(cin, F, 3, 2, 1, rng=rng, dtype=dtype),
                          nn.LeakyReLU(0.2), names=["conv", "act"]),
            nn.Sequential(nn.Conv2d(F, 2 * F, 3, 2, 1, rng=rng, dtype=dtype),
                          nn.InstanceNorm2d(2 * F, dtype=dtype),
                          nn.LeakyReLU(0.2), names=["conv", "norm", "act"]),
            nn.Sequential(nn.Conv2d(2 * F, 4 * F, 3, 2, 1, rng=rng, dtype=dtype),
                          nn.InstanceNorm2d(4 * F, dtype=dtype),
                          nn.LeakyReLU(0.2), names=["conv", "norm", "act"]),
        ]
        self.head = nn.Conv2d(4 * F, 1, 3, 1, 1, rng=rng, dtype=dtype)

    def params(self):
        out = []
        for s in self.stages:
            out.extend(s.params())
        return out + self.head.params()

    def named_params(self, prefix=""):
        out = []
        for i, s in enumerate(self.stages):
            out.extend(s.named_params(f"{prefix}stage{i}."))
        return out + self.head.named_params(prefix + "head.")

    def forward(self, x, pose_planes: np.ndarray | None = None):
        """Score map (1,h,w) plus cache; also exposes per-stage taps."""
        if self.conditional:
            if pose_planes is None:
                raise ValueError("conditional critic needs pose planes")
            x = np.concatenate([x, pose_planes.astype(x.dtype)])
        taps, caches = [], []
        for s in self.stages:
            x, c = s.forward(x)
            taps.append(x)
            caches.append(c)
        score, ch = self.head.forward(x)
        return score, (caches, ch, taps)

    def backward(self, cache, dscore, dtaps=None):
        caches, ch, _taps = cache
        dx = self.head.backward(ch, dscore)
        for i in range(len(self.stages) - 1, -1, -1):
            if dtaps is not None and dtaps[i] is not None:
                dx = dx + dtaps[i]
            dx = self.stages[i].backward(caches[i], dx)
        if self.conditional:
            dx = dx[:-3]
        return dx

    def taps(self, cache):
        return cache[2]


class IdentityExtractor:
    """Single tap: the raw image itself."""

    def extract(self, img):
        return [img], None

    def extract_backward(self, cache, dfeats):
        return dfeats[0]


class RandomFeatureExtractor:
    """Frozen random conv pyramid; three ReLU taps at decreasing scale.

    Weights are seed-determined and never trained, but gradients flow
    through to the image, so the induced distance is usable as a loss.
    """

    def __init__(self, seed: int = 0, in_ch: int = 3, base_ch: int = 8,
                 dtype=np.float32):
        rng = np.random.default_rng(seed)
        chans = [in_ch, base_ch, 2 * base_ch, 4 * base_ch]
        self.weights = []
        for cin, cout in zip(chans[:-1], chans[1:]):
            std = np.sqrt(2.0 / (cin * 9))
            self.weights.append(
                (rng.standard_normal((cout, cin, 3, 3)) * std).astype(dtype))

    def extract(self, img):
        feats, caches = [], []
        x = img
        for w in self.weights:
            y, c = conv2d(x, w.astype(img.dtype), 2, 1)
            mask = y > 0
            x = y * mask
            feats.append(x)
            caches.append((c, mask))
        return feats, caches

    def extract_backward(self, caches, dfeats):
        dx = None
        for (c, mask), df in zip(reversed(caches), reversed(dfeats)):
            dy = df if dx is None else df + dx
            dy = dy * mask
            dx, _ = conv2d_backward(c, dy)
        return dx


class CriticFeatureExtractor:
    """Feature-matching taps borrowed from a patch critic."""

    def __init__(self, critic: PatchCritic):
        self.critic = critic

    def extract(self, img):
        _score, cache = self.critic.forward(img)
        return self.critic.taps(cache), cache

    def extract_backward(self, cache, dfeats):
        # feature matching ignores the score head: zero upstream there
        _caches, _ch, taps = cache
        h, w = taps[-1].shape[1:]
        dscore = np.zeros((1, h, w), taps[-1].dtype)
        return self.critic.backward(cache, dscore, dtaps=dfeats)


# ------------------------------------------------------------- losses ----

def _critic_score(critic, img, pose=None):
    score, _ = critic.forward(img, pose) if critic.conditional else \
        critic.forward(img)
    return score


def lsgan_d_loss(critic: PatchCritic, real: np.ndarray, fake: np.ndarray,
                 pose: np.ndarray | None = None) -> float:
    """Least-squares critic objective: real scores to 1, fake to 0.

    The fake image is treated as a constant here; nothing propagates
    back towards whatever produced it.
    """
    sr = _critic_score(critic, real, pose)
    sf = _critic_score(critic, fake, pose)
    return float(np.mean((sr - 1.0) ** 2) + np.mean(sf ** 2))


def lsgan_d_loss_grads(critic: PatchCritic, real: np.ndarray,
                       fake: np.ndarray,
                       pose: np.ndarray | None = None) -> float:
    """Same value as lsgan_d_loss, accumulating critic parameter grads."""
    args = (pose,) if critic.conditional else ()
    sr, cr = critic.forward(real, *args)
    sf, cf = critic.forward(fake, *args)
    loss = float(np.mean((sr - 1.0) ** 2) + np.mean(sf ** 2))
    critic.backward(cr, (2.0 / sr.size) * (sr - 1.0))
    critic.backward(cf, (2.0 / sf.size) * sf)
    return loss


def lsgan_g_loss(critic: PatchCritic, fake: np.ndarray,
                 pose: np.ndarray | None = None) -> float:
    """Least-squares generator objective: fake scores driven to 1."""
    sf = _critic_score(critic, fake, pose)
    return float(np.mean((sf - 1.0) ** 2))


def lsgan_g_loss_grads(critic: PatchCritic, fake: np.ndarray,
                       pose: np.ndarray | None = None):
    """Returns (loss, d_fake); critic grads are also touched, so zero
    them before the critic's own update phase."""
    args = (pose,) if critic.conditional else ()
    sf, cf = critic.forward(fake, *args)
    loss = float(np.mean((sf - 1.0) ** 2))
    d_fake = critic.backward(cf, (2.0 / sf.size) * (sf - 1.0))
    return loss, d_fake


def reconstruction_loss(extractors: list, target: np.ndarray,
                        generated: np.ndarray) -> float:
    """Sum over extractors and taps of mean absolute feature difference."""
    if target.shape != generated.shape:
        raise ValueError(f"image shapes differ: {target.shape} vs "
                         f"{generated.shape}")
    total = 0.0
    for ex in extractors:
        ft, _ = ex.extract(target)
        fg, _ = ex.extract(generated)
        for a, b in zip(ft, fg):
            total += float(np.mean(np.abs(b - a)))
    return total


def reconstruction_loss_grads(extractors: list, target: np.ndarray,
                              generated: np.ndarray):
    """Returns (loss, d_generated); the target side gets no gradient."""
    if target.shape != generated.shape:
        raise ValueError(f"image shapes differ: {target.shape} vs "
                         f"{generated.shape}")
    total = 0.0
    d_gen = np.zeros_like(generated)
    for ex in extractors:
        ft, _ = ex.extract(target)
        fg, cache = ex.extract(generated)
        dfeats = []
        for a, b in zip(ft, fg):
            diff = b - a
            total += float(np.mean(np.abs(diff)))
            dfeats.append(np.sign(diff) / diff.size)
        d_gen += ex.extract_backward(cache, dfeats).astype(d_gen.dtype)
    return total, d_gen


def total_loss(g_losses, rec_losses, lam: float = 10.0) -> float:
    """Per-frame adversarial terms plus lam-weighted reconstruction."""
    g_losses = list(g_losses)
    rec_losses = list(rec_losses)
    if len(g_losses) != len(rec_losses):
        raise ValueError("per-frame loss lists must align")
    return float(sum(g + lam * r for g, r in zip(g_losses, rec_losses)))
