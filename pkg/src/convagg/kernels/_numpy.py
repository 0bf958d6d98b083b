"""Pure-numpy implementations of the hot kernels.

Fallback backend, selected by CONVAGG_BACKEND=numpy or when numba is not
importable. Semantics are identical to the numba backend: float32 storage,
float64 accumulation in every reduction.
"""

import numpy as np


def conv2d(x, w, b, stride, pad, groups, relu):
    """Grouped cross-correlation via per-group im2col + one BLAS matmul.

    x: (R, C, Kin) float32, w: (Kout, n, n, Kin//groups) float32,
    b: (Kout,) float32. Returns (Ro, Co, Kout) float32.
    """
    rows, cols, cin = x.shape
    cout, n = w.shape[0], w.shape[1]
    cpg = w.shape[3]
    opg = cout // groups
    ro = (rows + 2 * pad - n) // stride + 1
    co = (cols + 2 * pad - n) // stride + 1

    if pad > 0:
        xp = np.zeros((rows + 2 * pad, cols + 2 * pad, cin), dtype=np.float64)
        xp[pad:pad + rows, pad:pad + cols, :] = x
    else:
        xp = x.astype(np.float64)

    out = np.empty((ro, co, cout), dtype=np.float32)
    for g in range(groups):
        xg = xp[:, :, g * cpg:(g + 1) * cpg]
        patches = np.empty((ro, co, n, n, cpg), dtype=np.float64)
        for u in range(n):
            for v in range(n):
                patches[:, :, u, v, :] = xg[
                    u:u + (ro - 1) * stride + 1:stride,
                    v:v + (co - 1) * stride + 1:stride,
                    :,
                ]
        wg = w[g * opg:(g + 1) * opg].reshape(opg, n * n * cpg).astype(np.float64)
        yg = patches.reshape(ro * co, n * n * cpg) @ wg.T
        yg += b[g * opg:(g + 1) * opg].astype(np.float64)
        out[:, :, g * opg:(g + 1) * opg] = yg.reshape(ro, co, opg).astype(np.float32)

    if relu:
        np.maximum(out, np.float32(0.0), out=out)
    return out


def lrn(x, window, k, alpha, beta):
    """Channel-window response normalization, window clipped at fiber ends."""
    xx = x.astype(np.float64)
    sq = xx * xx
    nch = x.shape[2]
    half = window // 2
    csum = np.zeros((x.shape[0], x.shape[1], nch + 1), dtype=np.float64)
    np.cumsum(sq, axis=2, out=csum[:, :, 1:])
    idx = np.arange(nch)
    hi = np.minimum(idx + half, nch - 1) + 1
    lo = np.maximum(idx - half, 0)
    wsum = csum[:, :, hi] - csum[:, :, lo]
    return (xx / (k + alpha * wsum) ** beta).astype(np.float32)


def maxpool(x, size, stride):
    rows, cols, ch = x.shape
    ro = (rows - size) // stride + 1
    co = (cols - size) // stride + 1
    out = np.full((ro, co, ch), -np.inf, dtype=np.float32)
    for u in range(size):
        for v in range(size):
            np.maximum(
                out,
                x[u:u + (ro - 1) * stride + 1:stride,
                  v:v + (co - 1) * stride + 1:stride, :],
                out=out,
            )
    return out


def dense(flat, w, b, relu):
    y = w.astype(np.float64) @ flat.astype(np.float64)
    y += b.astype(np.float64)
    if relu:
        np.maximum(y, 0.0, out=y)
    return y.astype(np.float32)


def dcd_epoch(x, y, alpha, w, c, order, qii):
    """One dual-coordinate-descent epoch for the L2-regularized L1-hinge SVM.

    x: (n, d) float64 rows (bias already augmented), y in {-1, +1}.
    alpha and w are updated in place; returns the max projected gradient
    magnitude seen this epoch.
    """
    max_pg = 0.0
    for i in order:
        xi = x[i]
        g = y[i] * float(w @ xi) - 1.0
        a = alpha[i]
        if a <= 0.0:
            pg = g if g < 0.0 else 0.0
        elif a >= c:
            pg = g if g > 0.0 else 0.0
        else:
            pg = g
        apg = -pg if pg < 0.0 else pg
        if apg > max_pg:
            max_pg = apg
        if apg > 1e-14:
            na = a - g / qii[i]
            if na < 0.0:
                na = 0.0
            elif na > c:
                na = c
            if na != a:
                w += (na - a) * y[i] * xi
                alpha[i] = na
    return max_pg
