"""Dense-array neural building blocks with hand-derived exact gradients.

Feature maps are plain ``(channels, height, width)`` numpy arrays with no
batch axis. Every layer follows the same protocol: ``forward(x)`` returns
``(y, cache)`` and ``backward(cache, dy)`` accumulates parameter gradients
in place and returns the input gradient. Caches are explicit values, so
the same layer instance can run several forward passes (e.g. once per
generated frame) and be backpropagated through each of them independently.

There is deliberately no general autodiff graph; the network topologies
used here are fixed and their reverse passes are written out by hand.
"""

import numpy as np

from . import kernels


class Param:
    """A learnable array plus its gradient accumulator."""

    __slots__ = ("value", "grad", "name")

    def __init__(self, value: np.ndarray, name: str = ""):
        self.value = value
        self.grad = np.zeros_like(value)
        self.name = name

    def zero_grad(self) -> None:
        self.grad[...] = 0

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self) -> str:
        return f"Param({self.name or 'unnamed'}, shape={self.value.shape})"


class Module:
    """Base class: ordered parameters plus an explicit-cache fwd/bwd pair."""

    def params(self) -> list:
        return []

    def named_params(self, prefix: str = "") -> list:
        return [(f"{prefix}{i}", p) for i, p in enumerate(self.params())]

    def zero_grad(self) -> None:
        for p in self.params():
            p.zero_grad()

    def forward(self, x):
        raise NotImplementedError

    def backward(self, cache, dy):
        raise NotImplementedError

    def __call__(self, x):
        return self.forward(x)


# ---------------------------------------------------------------- conv ----

def conv2d(x: np.ndarray, w: np.ndarray, stride: int = 1, padding: int = 0):
    """2-d cross-correlation of x (C,H,W) with w (O,C,k,k).

    Returns (output, cache); pass the cache to :func:`conv2d_backward`.
    """
    if x.ndim != 3 or w.ndim != 4:
        raise ValueError(f"conv2d expects x (C,H,W) and w (O,C,kh,kw), "
                         f"got {x.shape} and {w.shape}")
    if x.shape[0] != w.shape[1]:
        raise ValueError(f"conv2d channel mismatch: input has {x.shape[0]} "
                         f"channels, weights expect {w.shape[1]}")
    if stride < 1 or padding < 0:
        raise ValueError(f"conv2d needs stride >= 1 and padding >= 0, "
                         f"got stride={stride} padding={padding}")
    y = kernels.conv2d_forward(x, w, stride, padding)
    return y, (x, w, stride, padding)


def conv2d_backward(cache, dy: np.ndarray):
    """Gradients of conv2d w.r.t. input and weights; returns (dx, dw)."""
    if cache is None:
        raise ValueError("conv2d_backward called without a forward cache")
    x, w, stride, padding = cache
    expect = kernel_output_shape(x.shape, w.shape, stride, padding)
    if dy.shape != expect:
        raise ValueError(f"upstream gradient shape {dy.shape} does not match "
                         f"forward output {expect}")
    dy = np.ascontiguousarray(dy)
    dx = kernels.conv2d_backward_input(w, dy, stride, padding,
                                       x.shape[1], x.shape[2])
    dw = kernels.conv2d_backward_weight(x, dy, stride, padding,
                                        w.shape[2], w.shape[3])
    return dx, dw


def kernel_output_shape(x_shape, w_shape, stride, padding):
    _, H, W = x_shape
    O, _, kh, kw = w_shape
    return (O, (H + 2 * padding - kh) // stride + 1,
            (W + 2 * padding - kw) // stride + 1)


def upsample2x(x: np.ndarray) -> np.ndarray:
    """Nearest-neighbour duplication: each value becomes a 2x2 block."""
    return np.ascontiguousarray(np.repeat(np.repeat(x, 2, axis=1), 2, axis=2))


def upsample2x_backward(dy: np.ndarray) -> np.ndarray:
    C, H2, W2 = dy.shape
    return dy.reshape(C, H2 // 2, 2, W2 // 2, 2).sum(axis=(2, 4))


class Conv2d(Module):
    def __init__(self, in_ch: int, out_ch: int, k: int = 3, stride: int = 1,
                 padding: int = 1, bias: bool = True, init: str = "he",
                 rng: np.random.Generator | None = None,
                 dtype=np.float32):
        self.stride = stride
        self.padding = padding
        if init == "zero":
            w = np.zeros((out_ch, in_ch, k, k), dtype)
        else:
            if rng is None:
                raise ValueError("random init requires an rng")
            std = np.sqrt(2.0 / (in_ch * k * k))
            w = (rng.standard_normal((out_ch, in_ch, k, k)) * std).astype(dtype)
        self.weight = Param(w, "weight")
        self.bias = Param(np.zeros(out_ch, dtype), "bias") if bias else None

    def params(self):
        return [self.weight] + ([self.bias] if self.bias else [])

    def named_params(self, prefix=""):
        out = [(prefix + "weight", self.weight)]
        if self.bias:
            out.append((prefix + "bias", self.bias))
        return out

    def forward(self, x):
        y, cache = conv2d(x, self.weight.value, self.stride, self.padding)
        if self.bias is not None:
            y = y + self.bias.value[:, None, None]
        return y, cache

    def backward(self, cache, dy):
        dx, dw = conv2d_backward(cache, dy)
        self.weight.grad += dw
        if self.bias is not None:
            self.bias.grad += dy.sum(axis=(1, 2))
        return dx


class InstanceNorm2d(Module):
    """Per-channel normalization over the spatial extent, affine scale/shift."""

    def __init__(self, ch: int, eps: float = 1e-5, dtype=np.float32):
        self.eps = eps
        self.gamma = Param(np.ones(ch, dtype), "gamma")
        self.beta = Param(np.zeros(ch, dtype), "beta")

    def params(self):
        return [self.gamma, self.beta]

    def named_params(self, prefix=""):
        return [(prefix + "gamma", self.gamma), (prefix + "beta", self.beta)]

    def forward(self, x):
        mu = x.mean(axis=(1, 2), keepdims=True)
        var = x.var(axis=(1, 2), keepdims=True)
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mu) * inv
        y = self.gamma.value[:, None, None] * xhat + self.beta.value[:, None, None]
        return y.astype(x.dtype), (xhat, inv)

    def backward(self, cache, dy):
        xhat, inv = cache
        self.gamma.grad += (dy * xhat).sum(axis=(1, 2))
        self.beta.grad += dy.sum(axis=(1, 2))
        g = self.gamma.value[:, None, None]
        dxhat = dy * g
        m1 = dxhat.mean(axis=(1, 2), keepdims=True)
        m2 = (dxhat * xhat).mean(axis=(1, 2), keepdims=True)
        return ((dxhat - m1 - xhat * m2) * inv).astype(dy.dtype)


class ReLU(Module):
    def forward(self, x):
        mask = x > 0
        return x * mask, mask

    def backward(self, cache, dy):
        return dy * cache


class LeakyReLU(Module):
    def __init__(self, slope: float = 0.2):
        self.slope = slope

    def forward(self, x):
        mask = x > 0
        return np.where(mask, x, x * x.dtype.type(self.slope)), mask

    def backward(self, cache, dy):
        return np.where(cache, dy, dy * dy.dtype.type(self.slope))


class Tanh(Module):
    def forward(self, x):
        y = np.tanh(x)
        return y, y

    def backward(self, cache, dy):
        return dy * (1.0 - cache * cache)


class Sequential(Module):
    def __init__(self, *modules, names: list | None = None):
        self.modules = list(modules)
        self.names = names or [str(i) for i in range(len(self.modules))]

    def params(self):
        return [p for m in self.modules for p in m.params()]

    def named_params(self, prefix=""):
        out = []
        for name, m in zip(self.names, self.modules):
            out.extend(m.named_params(f"{prefix}{name}."))
        return out

    def forward(self, x):
        caches = []
        for m in self.modules:
            x, c = m.forward(x)
            caches.append(c)
        return x, caches

    def backward(self, caches, dy):
        for m, c in zip(reversed(self.modules), reversed(caches)):
            dy = m.backward(c, dy)
        return dy


class ResBlock(Module):
    """Channel-preserving residual block: conv(+norm)+relu+conv(+norm)."""

    def __init__(self, ch: int, norm: bool = True,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        layers, names = [], []
        layers.append(Conv2d(ch, ch, 3, 1, 1, rng=rng, dtype=dtype))
        names.append("conv1")
        if norm:
            layers.append(InstanceNorm2d(ch, dtype=dtype))
            names.append("norm1")
        layers.append(ReLU())
        names.append("relu")
        layers.append(Conv2d(ch, ch, 3, 1, 1, rng=rng, dtype=dtype))
        names.append("conv2")
        if norm:
            layers.append(InstanceNorm2d(ch, dtype=dtype))
            names.append("norm2")
        self.branch = Sequential(*layers, names=names)
        self.ch = ch

    def params(self):
        return self.branch.params()

    def named_params(self, prefix=""):
        return self.branch.named_params(prefix)

    def forward(self, x):
        if x.shape[0] != self.ch:
            raise ValueError(f"residual block built for {self.ch} channels, "
                             f"input has {x.shape[0]}")
        r, cache = self.branch.forward(x)
        return x + r, cache

    def backward(self, cache, dy):
        return dy + self.branch.backward(cache, dy)


class DownsampleConv(Module):
    """Stride-2 conv halving the spatial extent."""

    def __init__(self, in_ch, out_ch, rng, dtype=np.float32):
        self.conv = Conv2d(in_ch, out_ch, 3, 2, 1, rng=rng, dtype=dtype)

    def params(self):
        return self.conv.params()

    def named_params(self, prefix=""):
        return self.conv.named_params(prefix)

    def forward(self, x):
        return self.conv.forward(x)

    def backward(self, cache, dy):
        return self.conv.backward(cache, dy)


class UpsampleConv(Module):
    """Nearest-neighbour 2x duplication followed by a 3x3 conv."""

    def __init__(self, in_ch, out_ch, rng, dtype=np.float32):
        self.conv = Conv2d(in_ch, out_ch, 3, 1, 1, rng=rng, dtype=dtype)

    def params(self):
        return self.conv.params()

    def named_params(self, prefix=""):
        return self.conv.named_params(prefix)

    def forward(self, x):
        up = upsample2x(x)
        y, c = self.conv.forward(up)
        return y, c

    def backward(self, cache, dy):
        dup = self.conv.backward(cache, dy)
        return upsample2x_backward(dup)


# ----------------------------------------------------------- optimizer ----

class Optimizer:
    """Adam (default) or plain gradient descent over a parameter list.

    ``step`` refuses to touch anything if any gradient is non-finite, and
    never clears gradients; call ``zero_grad`` explicitly.
    """

    def __init__(self, params: list, lr: float, mode: str = "adam",
                 betas=(0.5, 0.999), eps: float = 1e-8):
        if mode not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer mode {mode!r}")
        self.params = list(params)
        self.lr = lr
        self.mode = mode
        self.betas = betas
        self.eps = eps
        self.t = 0
        if mode == "adam":
            self._m = [np.zeros_like(p.value) for p in self.params]
            self._v = [np.zeros_like(p.value) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        for p in self.params:
            if not np.all(np.isfinite(p.grad)):
                raise FloatingPointError(
                    f"non-finite gradient in {p.name or 'parameter'} "
                    f"with shape {p.value.shape}; step aborted")
        self.t += 1
        if self.mode == "sgd":
            for p in self.params:
                p.value -= p.value.dtype.type(self.lr) * p.grad
            return
        b1, b2 = self.betas
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            mhat = m / bc1
            vhat = v / bc2
            p.value -= (self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(
                p.value.dtype)


def linear_decay_lr(base_lr: float, step: int, total_steps: int) -> float:
    """Learning rate ramped linearly from base_lr down to zero."""
    if total_steps <= 0:
        return base_lr
    frac = min(max(step, 0), total_steps) / total_steps
    return base_lr * (1.0 - frac)
