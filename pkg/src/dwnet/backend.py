"""Kernel backend selection.

Hot inner loops (convolution, bilinear sampling, nearest-neighbour queries)
exist twice: as plain loops compiled with numba, and as vectorized numpy.
``DWNET_BACKEND`` picks one:

    auto    numba if importable, else numpy (default)
    numba   require numba, fail loudly if missing
    numpy   pure numpy, no JIT

``DWNET_THREADS`` caps numba's thread pool. The shipped kernels are
single-threaded, so this only matters if numba decides to parallelize
library calls; results are deterministic either way.
"""

import os

_VALID = ("auto", "numba", "numpy")
_selected: str | None = None


def backend_name() -> str:
    """Resolve the active backend once and cache it."""
    global _selected
    if _selected is not None:
        return _selected
    choice = os.environ.get("DWNET_BACKEND", "auto").strip().lower()
    if choice not in _VALID:
        raise ValueError(
            f"DWNET_BACKEND={choice!r} not understood; expected one of {_VALID}"
        )
    if choice == "numpy":
        _selected = "numpy"
        return _selected
    try:
        import numba  # noqa: F401
    except ImportError:
        if choice == "numba":
            raise
        _selected = "numpy"
        return _selected
    _apply_thread_cap()
    _selected = "numba"
    return _selected


def using_numba() -> bool:
    return backend_name() == "numba"


def _apply_thread_cap() -> None:
    cap = os.environ.get("DWNET_THREADS")
    if not cap:
        return
    import numba

    n = max(1, int(cap))
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
