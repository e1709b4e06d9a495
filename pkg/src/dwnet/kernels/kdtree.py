"""Array-backed 2-d KD-tree over (u, v) keys.

One node per point, median split with alternating axis. Points must be
passed in their canonical tie-break order (ascending index wins ties),
and the build keeps equal keys deterministic by sorting on
(coordinate, index) pairs.
"""

from typing import NamedTuple

import numpy as np


class KDTreeArrays(NamedTuple):
    point: np.ndarray   # int32, node -> point index
    axis: np.ndarray    # int8, 0 = u, 1 = v
    left: np.ndarray    # int32, node id or -1
    right: np.ndarray   # int32, node id or -1
    root: int


def build_kdtree(pu: np.ndarray, pv: np.ndarray) -> KDTreeArrays:
    n = pu.shape[0]
    point = np.full(n, -1, np.int32)
    axis = np.zeros(n, np.int8)
    left = np.full(n, -1, np.int32)
    right = np.full(n, -1, np.int32)
    if n == 0:
        return KDTreeArrays(point, axis, left, right, -1)

    coords = (np.asarray(pu, np.float64), np.asarray(pv, np.float64))
    next_id = 0
    # (ids, depth, parent node, is-left-child)
    stack = [(np.arange(n, dtype=np.int64), 0, -1, False)]
    root = -1
    while stack:
        ids, depth, parent, is_left = stack.pop()
        ax = depth % 2
        order = ids[np.lexsort((ids, coords[ax][ids]))]
        mid = order.shape[0] // 2
        node = next_id
        next_id += 1
        point[node] = order[mid]
        axis[node] = ax
        if parent >= 0:
            if is_left:
                left[parent] = node
            else:
                right[parent] = node
        else:
            root = node
        if mid > 0:
            stack.append((order[:mid], depth + 1, node, True))
        if mid + 1 < order.shape[0]:
            stack.append((order[mid + 1:], depth + 1, node, False))
    return KDTreeArrays(point, axis, left, right, root)
