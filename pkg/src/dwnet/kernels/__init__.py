"""Backend-dispatched kernels.

``conv2d_forward``, ``conv2d_backward_input``, ``conv2d_backward_weight``,
``bilinear_forward`` and ``bilinear_backward`` resolve to numba-compiled
loops or to the vectorized numpy fallbacks depending on
:func:`dwnet.backend.backend_name`. ``nn_query_batch`` runs the KD-tree
traversal under numba and an exact linear scan under numpy; both honour
the same distance/tie semantics, so results are interchangeable.
"""

from .. import backend
from . import loops, vectorized
from .kdtree import KDTreeArrays, build_kdtree

USING_NUMBA = backend.using_numba()

if USING_NUMBA:
    from numba import njit

    _jit = njit(cache=True)
    conv2d_forward = _jit(loops.conv2d_forward)
    conv2d_backward_input = _jit(loops.conv2d_backward_input)
    conv2d_backward_weight = _jit(loops.conv2d_backward_weight)
    bilinear_forward = _jit(loops.bilinear_forward)
    bilinear_backward = _jit(loops.bilinear_backward)
    kdtree_query_batch = _jit(loops.kdtree_query_batch)
    nn_bruteforce_batch = vectorized.nn_bruteforce_batch
else:
    conv2d_forward = vectorized.conv2d_forward
    conv2d_backward_input = vectorized.conv2d_backward_input
    conv2d_backward_weight = vectorized.conv2d_backward_weight
    bilinear_forward = vectorized.bilinear_forward
    bilinear_backward = vectorized.bilinear_backward
    kdtree_query_batch = loops.kdtree_query_batch  # uncompiled, test/CLI use
    nn_bruteforce_batch = vectorized.nn_bruteforce_batch


def nn_query_batch(qu, qv, pu, pv, tree: KDTreeArrays):
    """Nearest point index for each query, smallest index on ties."""
    if USING_NUMBA:
        return kdtree_query_batch(qu, qv, pu, pv, tree.point, tree.axis,
                                  tree.left, tree.right, tree.root)
    return nn_bruteforce_batch(qu, qv, pu, pv)


__all__ = [
    "USING_NUMBA", "KDTreeArrays", "build_kdtree", "nn_query_batch",
    "conv2d_forward", "conv2d_backward_input", "conv2d_backward_weight",
    "bilinear_forward", "bilinear_backward", "kdtree_query_batch",
    "nn_bruteforce_batch",
]
