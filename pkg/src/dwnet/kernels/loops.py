"""Loop-form kernels, written to compile under numba's nopython mode.

Every function here is also valid plain Python; the package wraps them
with ``numba.njit`` when the numba backend is active and keeps the
uncompiled originals importable for tests and the numpy fallback of the
KD-tree query. Accumulation happens in float64 and is cast back to the
input dtype on store, so results are deterministic for a fixed backend.

Coordinate arguments of the bilinear kernels are in pixel units
(column/row indices, possibly fractional); conversion from normalized
grid coordinates happens in :mod:`dwnet.warp`.
"""

import numpy as np


def conv2d_forward(x, w, stride, pad):
    """Cross-correlate x (C,H,W) with w (O,C,k,k); zero padding."""
    C, H, W = x.shape
    O, _, kh, kw = w.shape
    Ho = (H + 2 * pad - kh) // stride + 1
    Wo = (W + 2 * pad - kw) // stride + 1
    y = np.zeros((O, Ho, Wo), x.dtype)
    for o in range(O):
        for oy in range(Ho):
            for ox in range(Wo):
                acc = 0.0
                for c in range(C):
                    for ki in range(kh):
                        iy = oy * stride - pad + ki
                        if iy < 0 or iy >= H:
                            continue
                        for kj in range(kw):
                            ix = ox * stride - pad + kj
                            if ix < 0 or ix >= W:
                                continue
                            acc += x[c, iy, ix] * w[o, c, ki, kj]
                y[o, oy, ox] = acc
    return y


def conv2d_backward_input(w, dy, stride, pad, H, W):
    """Gradient of conv2d_forward w.r.t. its input; returns (C,H,W)."""
    O, C, kh, kw = w.shape
    _, Ho, Wo = dy.shape
    dx = np.zeros((C, H, W), dy.dtype)
    for o in range(O):
        for oy in range(Ho):
            for ox in range(Wo):
                g = dy[o, oy, ox]
                if g == 0.0:
                    continue
                for c in range(C):
                    for ki in range(kh):
                        iy = oy * stride - pad + ki
                        if iy < 0 or iy >= H:
                            continue
                        for kj in range(kw):
                            ix = ox * stride - pad + kj
                            if ix < 0 or ix >= W:
                                continue
                            dx[c, iy, ix] += g * w[o, c, ki, kj]
    return dx


def conv2d_backward_weight(x, dy, stride, pad, kh, kw):
    """Gradient of conv2d_forward w.r.t. the weights; returns (O,C,kh,kw)."""
    C, H, W = x.shape
    O, Ho, Wo = dy.shape
    dw = np.zeros((O, C, kh, kw), x.dtype)
    for o in range(O):
        for c in range(C):
            for ki in range(kh):
                for kj in range(kw):
                    acc = 0.0
                    for oy in range(Ho):
                        iy = oy * stride - pad + ki
                        if iy < 0 or iy >= H:
                            continue
                        for ox in range(Wo):
                            ix = ox * stride - pad + kj
                            if ix < 0 or ix >= W:
                                continue
                            acc += dy[o, oy, ox] * x[c, iy, ix]
                    dw[o, c, ki, kj] = acc
    return dw


def bilinear_forward(img, px, py):
    """Sample img (C,H,W) at fractional pixel coords px/py (Gh,Gw).

    Out-of-range coordinates clamp to the nearest border pixel.
    """
    C, H, W = img.shape
    Gh, Gw = px.shape
    out = np.zeros((C, Gh, Gw), img.dtype)
    for i in range(Gh):
        for j in range(Gw):
            fx = px[i, j]
            fy = py[i, j]
            x0 = int(np.floor(fx))
            y0 = int(np.floor(fy))
            wx = fx - x0
            wy = fy - y0
            x0c = min(max(x0, 0), W - 1)
            x1c = min(max(x0 + 1, 0), W - 1)
            y0c = min(max(y0, 0), H - 1)
            y1c = min(max(y0 + 1, 0), H - 1)
            for c in range(C):
                top = (1.0 - wx) * img[c, y0c, x0c] + wx * img[c, y0c, x1c]
                bot = (1.0 - wx) * img[c, y1c, x0c] + wx * img[c, y1c, x1c]
                out[c, i, j] = (1.0 - wy) * top + wy * bot
    return out


def bilinear_backward(img, px, py, dout):
    """Adjoint of bilinear_forward.

    Returns (dimg, dpx, dpy); the coordinate gradients are summed over
    channels and expressed in pixel units. Clamped lattice cells yield
    zero coordinate gradient, matching the piecewise forward exactly.
    """
    C, H, W = img.shape
    Gh, Gw = px.shape
    dimg = np.zeros((C, H, W), img.dtype)
    dpx = np.zeros((Gh, Gw), img.dtype)
    dpy = np.zeros((Gh, Gw), img.dtype)
    for i in range(Gh):
        for j in range(Gw):
            fx = px[i, j]
            fy = py[i, j]
            x0 = int(np.floor(fx))
            y0 = int(np.floor(fy))
            wx = fx - x0
            wy = fy - y0
            x0c = min(max(x0, 0), W - 1)
            x1c = min(max(x0 + 1, 0), W - 1)
            y0c = min(max(y0, 0), H - 1)
            y1c = min(max(y0 + 1, 0), H - 1)
            gx = 0.0
            gy = 0.0
            for c in range(C):
                g = dout[c, i, j]
                v00 = img[c, y0c, x0c]
                v01 = img[c, y0c, x1c]
                v10 = img[c, y1c, x0c]
                v11 = img[c, y1c, x1c]
                dimg[c, y0c, x0c] += g * (1.0 - wx) * (1.0 - wy)
                dimg[c, y0c, x1c] += g * wx * (1.0 - wy)
                dimg[c, y1c, x0c] += g * (1.0 - wx) * wy
                dimg[c, y1c, x1c] += g * wx * wy
                gx += g * ((1.0 - wy) * (v01 - v00) + wy * (v11 - v10))
                gy += g * ((1.0 - wx) * (v10 - v00) + wx * (v11 - v01))
            dpx[i, j] = gx
            dpy[i, j] = gy
    return dimg, dpx, dpy


def kdtree_query_batch(qu, qv, pu, pv, node_pt, node_axis, node_left,
                       node_right, root):
    """Exact 2-d nearest neighbour for each query against a built tree.

    Ties on squared distance resolve to the smallest point index, which
    is the build-time (y, x) order. Distances accumulate in float64 so
    the result is bit-identical to a linear scan with the same rule.
    """
    nq = qu.shape[0]
    out = np.empty(nq, np.int64)
    stack_node = np.empty(64, np.int32)
    stack_dd = np.empty(64, np.float64)
    for q in range(nq):
        quq = qu[q]
        qvq = qv[q]
        best_d2 = np.inf
        best_idx = -1
        node = root
        sp = 0
        while True:
            while node != -1:
                p = node_pt[node]
                du = quq - pu[p]
                dv = qvq - pv[p]
                d2 = du * du + dv * dv
                if d2 < best_d2 or (d2 == best_d2 and p < best_idx):
                    best_d2 = d2
                    best_idx = p
                if node_axis[node] == 0:
                    delta = quq - pu[p]
                else:
                    delta = qvq - pv[p]
                if delta < 0.0:
                    near = node_left[node]
                    far = node_right[node]
                else:
                    near = node_right[node]
                    far = node_left[node]
                if far != -1:
                    stack_node[sp] = far
                    stack_dd[sp] = delta * delta
                    sp += 1
                node = near
            if sp == 0:
                break
            sp -= 1
            # prune unless the splitting plane could hide an equal or
            # closer point (equal distance matters for tie-breaking)
            if stack_dd[sp] > best_d2:
                node = -1
            else:
                node = stack_node[sp]
        out[q] = best_idx
    return out


def nn_bruteforce_batch(qu, qv, pu, pv):
    """Linear-scan nearest neighbour with the same tie rule as the tree."""
    nq = qu.shape[0]
    n = pu.shape[0]
    out = np.empty(nq, np.int64)
    for q in range(nq):
        best_d2 = np.inf
        best_idx = -1
        for p in range(n):
            du = qu[q] - pu[p]
            dv = qv[q] - pv[p]
            d2 = du * du + dv * dv
            if d2 < best_d2:
                best_d2 = d2
                best_idx = p
        out[q] = best_idx
    return out
