"""Pure-numpy implementations of the hot kernels.

Convolutions run as im2col GEMMs and bilinear sampling as fancy-indexed
gathers. Arithmetic is promoted to float64 and cast back to the input
dtype on return, mirroring the float64 accumulators of the loop kernels.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv2d_forward(x, w, stride, pad):
    C, H, W = x.shape
    O, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad))) if pad else x
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    Ho, Wo = win.shape[1], win.shape[2]
    cols = win.transpose(1, 2, 0, 3, 4).reshape(Ho * Wo, C * kh * kw)
    y = cols.astype(np.float64) @ w.reshape(O, -1).astype(np.float64).T
    return np.ascontiguousarray(y.T.reshape(O, Ho, Wo)).astype(x.dtype)


def conv2d_backward_input(w, dy, stride, pad, H, W):
    O, C, kh, kw = w.shape
    _, Ho, Wo = dy.shape
    dcols = (dy.reshape(O, -1).T.astype(np.float64)
             @ w.reshape(O, -1).astype(np.float64))  # (Ho*Wo, C*kh*kw)
    dcols = dcols.reshape(Ho, Wo, C, kh, kw)
    dxp = np.zeros((C, H + 2 * pad, W + 2 * pad), np.float64)
    oy = np.arange(Ho) * stride
    ox = np.arange(Wo) * stride
    for ki in range(kh):
        for kj in range(kw):
            dxp[:, ki + oy[:, None], kj + ox[None, :]] += (
                dcols[:, :, :, ki, kj].transpose(2, 0, 1))
    if pad:
        dxp = dxp[:, pad:pad + H, pad:pad + W]
    return dxp.astype(dy.dtype)


def conv2d_backward_weight(x, dy, stride, pad, kh, kw):
    C, H, W = x.shape
    O, Ho, Wo = dy.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad))) if pad else x
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    cols = win.transpose(1, 2, 0, 3, 4).reshape(Ho * Wo, C * kh * kw)
    dw = dy.reshape(O, -1).astype(np.float64) @ cols.astype(np.float64)
    return dw.reshape(O, C, kh, kw).astype(x.dtype)


def _corner_indices(px, py, H, W):
    fx = px.astype(np.float64)
    fy = py.astype(np.float64)
    x0 = np.floor(fx)
    y0 = np.floor(fy)
    wx = fx - x0
    wy = fy - y0
    x0i = x0.astype(np.int64)
    y0i = y0.astype(np.int64)
    x0c = np.clip(x0i, 0, W - 1)
    x1c = np.clip(x0i + 1, 0, W - 1)
    y0c = np.clip(y0i, 0, H - 1)
    y1c = np.clip(y0i + 1, 0, H - 1)
    return wx, wy, x0c, x1c, y0c, y1c


def bilinear_forward(img, px, py):
    C, H, W = img.shape
    wx, wy, x0c, x1c, y0c, y1c = _corner_indices(px, py, H, W)
    v = img.astype(np.float64)
    v00 = v[:, y0c, x0c]
    v01 = v[:, y0c, x1c]
    v10 = v[:, y1c, x0c]
    v11 = v[:, y1c, x1c]
    top = (1.0 - wx) * v00 + wx * v01
    bot = (1.0 - wx) * v10 + wx * v11
    return ((1.0 - wy) * top + wy * bot).astype(img.dtype)


def bilinear_backward(img, px, py, dout):
    C, H, W = img.shape
    wx, wy, x0c, x1c, y0c, y1c = _corner_indices(px, py, H, W)
    v = img.astype(np.float64)
    g = dout.astype(np.float64)
    v00 = v[:, y0c, x0c]
    v01 = v[:, y0c, x1c]
    v10 = v[:, y1c, x0c]
    v11 = v[:, y1c, x1c]
    dpx = (g * ((1.0 - wy) * (v01 - v00) + wy * (v11 - v10))).sum(axis=0)
    dpy = (g * ((1.0 - wx) * (v10 - v00) + wx * (v11 - v01))).sum(axis=0)

    dimg = np.zeros((C, H, W), np.float64)
    flat = dimg.reshape(C, H * W)
    i00 = (y0c * W + x0c).ravel()
    i01 = (y0c * W + x1c).ravel()
    i10 = (y1c * W + x0c).ravel()
    i11 = (y1c * W + x1c).ravel()
    w00 = ((1.0 - wx) * (1.0 - wy)).ravel()
    w01 = (wx * (1.0 - wy)).ravel()
    w10 = ((1.0 - wx) * wy).ravel()
    w11 = (wx * wy).ravel()
    gf = g.reshape(C, -1)
    for c in range(C):
        np.add.at(flat[c], i00, gf[c] * w00)
        np.add.at(flat[c], i01, gf[c] * w01)
        np.add.at(flat[c], i10, gf[c] * w10)
        np.add.at(flat[c], i11, gf[c] * w11)
    return (dimg.astype(img.dtype), dpx.astype(img.dtype),
            dpy.astype(img.dtype))


def nn_bruteforce_batch(qu, qv, pu, pv, chunk=512):
    """Exact linear-scan NN; argmin keeps the smallest index on ties."""
    nq = qu.shape[0]
    out = np.empty(nq, np.int64)
    pu64 = pu.astype(np.float64)
    pv64 = pv.astype(np.float64)
    qu64 = qu.astype(np.float64)
    qv64 = qv.astype(np.float64)
    for s in range(0, nq, chunk):
        e = min(s + chunk, nq)
        du = qu64[s:e, None] - pu64[None, :]
        dv = qv64[s:e, None] - pv64[None, :]
        out[s:e] = np.argmin(du * du + dv * dv, axis=1)
    return out
