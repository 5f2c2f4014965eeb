"""Convolution, pooling, and sampling primitives with custom backward passes.

Convolutions run as gather(im2col) + BLAS matmul; input gradients scatter
back through the same index tables via bincount.  Index tables are cached per
shape signature since training loops reuse a handful of layer geometries.
"""

import numpy as np

from auto4d.nn.tensor import Tensor, _acc

_IDX_CACHE = {}


def _im2col_idx(c, h, w, kh, kw, stride, dilation):
    """Gather indices (C*kh*kw, L) into flattened (C*H*W), plus output dims."""
    key = (c, h, w, kh, kw, stride, dilation)
    hit = _IDX_CACHE.get(key)
    if hit is not None:
        return hit
    eff_h = (kh - 1) * dilation + 1
    eff_w = (kw - 1) * dilation + 1
    ho = (h - eff_h) // stride + 1
    wo = (w - eff_w) // stride + 1
    if ho < 1 or wo < 1:
        raise ValueError("kernel larger than padded input")
    a = np.arange(kh) * dilation
    b = np.arange(kw) * dilation
    off = (a[:, None] * w + b[None, :]).reshape(-1)
    base = (np.arange(ho)[:, None] * stride * w + np.arange(wo)[None, :] * stride).reshape(-1)
    spatial = off[:, None] + base[None, :]
    idx = (np.arange(c)[:, None, None] * (h * w) + spatial[None]).reshape(c * kh * kw, -1)
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    out = (idx, idx.ravel(), ho, wo)
    _IDX_CACHE[key] = out
    return out


def _col2im(dcols, idx_flat, n, flat_len):
    out = np.empty((n, flat_len), dtype=np.float64)
    for i in range(n):
        out[i] = np.bincount(idx_flat, weights=dcols[i].ravel(), minlength=flat_len)
    return out


def conv2d(x, w, b=None, stride=1, padding=0, dilation=1):
    """Cross-correlation of (N,C,H,W) or (C,H,W) input with (Cout,Cin,kh,kw) kernels."""
    squeeze = x.ndim == 3
    xd = x.data[None] if squeeze else x.data
    n, c, h, wd = xd.shape
    cout, cin, kh, kw = w.shape
    if cin != c:
        raise ValueError(f"kernel expects {cin} input channels, got {c}")
    if padding:
        xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = np.ascontiguousarray(xd)
    hp, wp = xp.shape[2], xp.shape[3]
    idx, idx_flat, ho, wo = _im2col_idx(c, hp, wp, kh, kw, stride, dilation)
    cols = xp.reshape(n, -1)[:, idx]
    wm = w.data.reshape(cout, -1)
    out = np.matmul(wm, cols)
    if b is not None:
        out = out + b.data[:, None]
    out = out.reshape(n, cout, ho, wo)
    if squeeze:
        out = out[0]
    parents = (x, w) if b is None else (x, w, b)

    def bw(g, grads):
        gm = (g[None] if squeeze else g).reshape(n, cout, -1)
        if w.requires_grad:
            cols_l = xp.reshape(n, -1)[:, idx]
            dwm = np.matmul(gm, cols_l.transpose(0, 2, 1)).sum(axis=0)
            _acc(grads, w, dwm.reshape(w.shape))
        if b is not None and b.requires_grad:
            _acc(grads, b, gm.sum(axis=(0, 2)))
        if x.requires_grad:
            dcols = np.matmul(wm.T, gm)
            dxp = _col2im(dcols, idx_flat, n, c * hp * wp).reshape(n, c, hp, wp)
            if padding:
                dxp = dxp[:, :, padding:hp - padding, padding:wp - padding]
            _acc(grads, x, dxp[0] if squeeze else dxp)

    return Tensor._node(out, parents, bw)


def conv1d(x, w, b=None, stride=1, padding=0, dilation=1):
    """Cross-correlation of (N,C,L) or (C,L) input with (Cout,Cin,k) kernels."""
    squeeze = x.ndim == 2
    xd = x.data[None] if squeeze else x.data
    n, c, ln = xd.shape
    cout, cin, k = w.shape
    if cin != c:
        raise ValueError(f"kernel expects {cin} input channels, got {c}")
    if padding:
        xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding)))
    else:
        xp = np.ascontiguousarray(xd)
    lp = xp.shape[2]
    idx, idx_flat, _, lo = _im2col_idx(c, 1, lp, 1, k, stride, dilation)
    cols = xp.reshape(n, -1)[:, idx]
    wm = w.data.reshape(cout, -1)
    out = np.matmul(wm, cols)
    if b is not None:
        out = out + b.data[:, None]
    if squeeze:
        out = out[0]
    parents = (x, w) if b is None else (x, w, b)

    def bw(g, grads):
        gm = (g[None] if squeeze else g).reshape(n, cout, -1)
        if w.requires_grad:
            cols_l = xp.reshape(n, -1)[:, idx]
            dwm = np.matmul(gm, cols_l.transpose(0, 2, 1)).sum(axis=0)
            _acc(grads, w, dwm.reshape(w.shape))
        if b is not None and b.requires_grad:
            _acc(grads, b, gm.sum(axis=(0, 2)))
        if x.requires_grad:
            dcols = np.matmul(wm.T, gm)
            dxp = _col2im(dcols, idx_flat, n, c * lp).reshape(n, c, lp)
            if padding:
                dxp = dxp[:, :, padding:lp - padding]
            _acc(grads, x, dxp[0] if squeeze else dxp)

    return Tensor._node(out, parents, bw)


def conv_transpose1d(x, w, b=None, stride=2, padding=1):
    """Transposed conv over time; (N,Cin,L) input, (Cin,Cout,k) kernels.

    Output length (L-1)*stride - 2*padding + k; adjoint of conv1d with the
    same stride/padding, which is exactly what upsampling in a UNet needs.
    """
    squeeze = x.ndim == 2
    xd = x.data[None] if squeeze else x.data
    n, c, ln = xd.shape
    cin, cout, k = w.shape
    if cin != c:
        raise ValueError(f"kernel expects {cin} input channels, got {c}")
    lout = (ln - 1) * stride - 2 * padding + k
    if lout < 1:
        raise ValueError("transposed conv output would be empty")
    lp = lout + 2 * padding
    idx, idx_flat, _, lo = _im2col_idx(cout, 1, lp, 1, k, stride, 1)
    if lo != ln:
        raise ValueError("stride/padding inconsistent with input length")
    wm = w.data.reshape(cin, -1)
    cols = np.matmul(wm.T, xd)
    full = _col2im(cols, idx_flat, n, cout * lp).reshape(n, cout, lp)
    out = full[:, :, padding:lp - padding] if padding else full
    if b is not None:
        out = out + b.data[:, None]
    if squeeze:
        out = out[0]
    parents = (x, w) if b is None else (x, w, b)

    def bw(g, grads):
        gm = g[None] if squeeze else g
        if padding:
            gp = np.pad(gm, ((0, 0), (0, 0), (padding, padding)))
        else:
            gp = np.ascontiguousarray(gm)
        cols_g = gp.reshape(n, -1)[:, idx]
        if w.requires_grad:
            dwmt = np.matmul(cols_g, xd.transpose(0, 2, 1)).sum(axis=0)
            _acc(grads, w, dwmt.T.reshape(w.shape))
        if b is not None and b.requires_grad:
            _acc(grads, b, gm.sum(axis=(0, 2)))
        if x.requires_grad:
            dx = np.matmul(wm, cols_g)
            _acc(grads, x, dx[0] if squeeze else dx)

    return Tensor._node(out, parents, bw)


def avg_pool2d(x, k=2):
    """Non-overlapping k x k average pooling; spatial dims must divide by k."""
    squeeze = x.ndim == 3
    xd = x.data[None] if squeeze else x.data
    n, c, h, w = xd.shape
    if h % k or w % k:
        raise ValueError("spatial dims must be divisible by the pool size")
    out = xd.reshape(n, c, h // k, k, w // k, k).mean(axis=(3, 5))
    if squeeze:
        out = out[0]

    def bw(g, grads):
        gm = g[None] if squeeze else g
        dx = np.repeat(np.repeat(gm, k, axis=2), k, axis=3) / (k * k)
        _acc(grads, x, dx[0] if squeeze else dx)

    return Tensor._node(out, (x,), bw)


def bilinear_query(f, coords):
    """Sample a (C,H,W) feature map at continuous (x, y) grid coordinates.

    `coords` is (2,) or (M,2) with x in [0, W-1], y in [0, H-1]; returns (C,)
    or (M,C).  Differentiable in both the map and the coordinates.
    """
    if not isinstance(coords, Tensor):
        coords = Tensor(coords)
    c, h, w = f.shape
    single = coords.ndim == 1
    cd = coords.data[None] if single else coords.data
    cx, cy = cd[:, 0], cd[:, 1]
    if np.any(cx < 0.0) or np.any(cx > w - 1.0) or np.any(cy < 0.0) or np.any(cy > h - 1.0):
        raise ValueError("query coordinates outside the feature map")
    x0 = np.clip(np.floor(cx).astype(np.int64), 0, max(w - 2, 0))
    y0 = np.clip(np.floor(cy).astype(np.int64), 0, max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = cx - x0
    fy = cy - y0
    fd = f.data
    v00 = fd[:, y0, x0]
    v01 = fd[:, y0, x1]
    v10 = fd[:, y1, x0]
    v11 = fd[:, y1, x1]
    w00 = (1.0 - fy) * (1.0 - fx)
    w01 = (1.0 - fy) * fx
    w10 = fy * (1.0 - fx)
    w11 = fy * fx
    vals = w00 * v00 + w01 * v01 + w10 * v10 + w11 * v11
    out = vals.T[0] if single else vals.T.copy()

    def bw(g, grads):
        gt = (g[None] if single else g).T
        if f.requires_grad:
            df = np.zeros_like(fd)
            ci = np.arange(c)[:, None]
            np.add.at(df, (ci, y0[None], x0[None]), w00 * gt)
            np.add.at(df, (ci, y0[None], x1[None]), w01 * gt)
            np.add.at(df, (ci, y1[None], x0[None]), w10 * gt)
            np.add.at(df, (ci, y1[None], x1[None]), w11 * gt)
            _acc(grads, f, df)
        if coords.requires_grad:
            ddx = (1.0 - fy) * (v01 - v00) + fy * (v11 - v10)
            ddy = (1.0 - fx) * (v10 - v00) + fx * (v11 - v01)
            gx = (ddx * gt).sum(axis=0)
            gy = (ddy * gt).sum(axis=0)
            dc = np.stack([gx, gy], axis=1)
            _acc(grads, coords, dc[0] if single else dc)

    return Tensor._node(out, (f, coords), bw)


def smooth_l1(x, beta=1.0):
    """Elementwise smooth-l1 (quadratic below beta, linear above)."""
    d = x.data
    ad = np.abs(d)
    inner = ad < beta
    out = np.where(inner, 0.5 * d * d / beta, ad - 0.5 * beta)

    def bw(g, grads):
        _acc(grads, x, g * np.where(inner, d / beta, np.sign(d)))

    return Tensor._node(out, (x,), bw)
