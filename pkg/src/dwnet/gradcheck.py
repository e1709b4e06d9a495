"""Finite-difference gradient checking.

The numeric side only ever calls forward passes, so it stays independent
of any hand-written backward it is used to verify. Checks are expected to
run on float64 module instances; central differences with the default
step are meaningless in float32.
"""

import numpy as np

EPS = 1e-4
RTOL = 1e-3
ATOL = 1e-6


def fd_grad(loss_fn, arr: np.ndarray, entries, eps: float = EPS):
    """Central-difference derivative of loss_fn w.r.t. selected entries.

    ``arr`` is mutated in place and restored; ``loss_fn`` takes no
    arguments and must read ``arr`` (by reference) on every call.
    """
    flat = arr.reshape(-1)
    out = np.empty(len(entries), np.float64)
    for n, i in enumerate(entries):
        keep = flat[i]
        flat[i] = keep + eps
        lp = loss_fn()
        flat[i] = keep - eps
        lm = loss_fn()
        flat[i] = keep
        out[n] = (lp - lm) / (2.0 * eps)
    return out


def pick_entries(rng: np.random.Generator, size: int, n: int):
    if size <= n:
        return np.arange(size)
    return rng.choice(size, size=n, replace=False)


def assert_close(analytic, numeric, rtol: float = RTOL, atol: float = ATOL,
                 context: str = ""):
    analytic = np.asarray(analytic, np.float64)
    numeric = np.asarray(numeric, np.float64)
    err = np.abs(analytic - numeric)
    bound = atol + rtol * np.maximum(np.abs(analytic), np.abs(numeric))
    bad = err > bound
    if np.any(bad):
        k = int(np.argmax(err - bound))
        raise AssertionError(
            f"gradient mismatch{' in ' + context if context else ''}: "
            f"analytic={analytic[k]:.6e} numeric={numeric[k]:.6e} "
            f"abs err={err[k]:.3e} ({int(bad.sum())}/{bad.size} entries over "
            f"tolerance)")


def check_module(module, x: np.ndarray, rng: np.random.Generator,
                 n_entries: int = 24, eps: float = EPS, rtol: float = RTOL,
                 atol: float = ATOL, check_input: bool = True):
    """Verify module.backward against central differences.

    Uses the scalar probe loss sum(R * forward(x)) with a fixed random R.
    Checks a random subset of entries of the input and of every parameter.
    """
    assert x.dtype == np.float64, "gradient checks must run in float64"
    y0, _ = module.forward(x)
    R = rng.standard_normal(y0.shape)

    def loss():
        y, _ = module.forward(x)
        return float((R * y).sum())

    module.zero_grad()
    y, cache = module.forward(x)
    dx = module.backward(cache, R.astype(x.dtype))

    if check_input:
        idx = pick_entries(rng, x.size, n_entries)
        assert_close(dx.reshape(-1)[idx], fd_grad(loss, x, idx, eps),
                     rtol, atol, context="input")
    for name, p in module.named_params():
        idx = pick_entries(rng, p.value.size, n_entries)
        assert_close(p.grad.reshape(-1)[idx], fd_grad(loss, p.value, idx, eps),
                     rtol, atol, context=name)
