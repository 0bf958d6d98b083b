"""numba JIT implementations of the hot kernels (default backend).

Explicit loops, float64 accumulators, float32 storage. cache=True keeps
compiled code across processes, which matters for the CLI worker pool.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def conv2d(x, w, b, stride, pad, groups, relu):
    # im2col built with tight loops, one BLAS dgemm per group
    rows, cols, _ = x.shape
    cout = w.shape[0]
    n = w.shape[1]
    cpg = w.shape[3]
    opg = cout // groups
    ro = (rows + 2 * pad - n) // stride + 1
    co = (cols + 2 * pad - n) // stride + 1
    out = np.empty((ro, co, cout), dtype=np.float32)
    patches = np.empty((ro * co, n * n * cpg), dtype=np.float64)
    wg = np.empty((n * n * cpg, opg), dtype=np.float64)
    for g in range(groups):
        cbase = g * cpg
        for i in range(ro):
            r0 = i * stride - pad
            for j in range(co):
                c0 = j * stride - pad
                row = i * co + j
                idx = 0
                for u in range(n):
                    r = r0 + u
                    in_rows = (r >= 0) and (r < rows)
                    for v in range(n):
                        c = c0 + v
                        if in_rows and (c >= 0) and (c < cols):
                            if cpg >= 32:  # wide fibers: bulk cast-copy
                                patches[row, idx:idx + cpg] = x[r, c, cbase:cbase + cpg]
                            else:
                                for ci in range(cpg):
                                    patches[row, idx + ci] = x[r, c, cbase + ci]
                        else:
                            for ci in range(cpg):
                                patches[row, idx + ci] = 0.0
                        idx += cpg
        for oc in range(opg):
            idx = 0
            for u in range(n):
                for v in range(n):
                    for ci in range(cpg):
                        wg[idx, oc] = w[g * opg + oc, u, v, ci]
                        idx += 1
        y = np.dot(patches, wg)
        for i in range(ro):
            for j in range(co):
                row = i * co + j
                for oc in range(opg):
                    val = y[row, oc] + b[g * opg + oc]
                    if relu and val < 0.0:
                        val = 0.0
                    out[i, j, g * opg + oc] = val
    return out


@njit(cache=True)
def lrn(x, window, k, alpha, beta):
    # running window sum per fiber: O(1) per entry
    rows, cols, nch = x.shape
    half = window // 2
    out = np.empty((rows, cols, nch), dtype=np.float32)
    for i in range(rows):
        for j in range(cols):
            s = 0.0
            hi = half if half < nch - 1 else nch - 1
            for c in range(hi + 1):
                v = x[i, j, c]
                s += v * v
            for m in range(nch):
                out[i, j, m] = x[i, j, m] / (k + alpha * s) ** beta
                add = m + half + 1
                if add < nch:
                    v = x[i, j, add]
                    s += v * v
                drop = m - half
                if drop >= 0:
                    v = x[i, j, drop]
                    s -= v * v
    return out


@njit(cache=True)
def maxpool(x, size, stride):
    rows, cols, ch = x.shape
    ro = (rows - size) // stride + 1
    co = (cols - size) // stride + 1
    out = np.empty((ro, co, ch), dtype=np.float32)
    for i in range(ro):
        r0 = i * stride
        for j in range(co):
            c0 = j * stride
            for c in range(ch):
                m = x[r0, c0, c]
                for u in range(size):
                    for v in range(size):
                        val = x[r0 + u, c0 + v, c]
                        if val > m:
                            m = val
                out[i, j, c] = m
    return out


@njit(cache=True)
def dense(flat, w, b, relu):
    nout, nin = w.shape
    out = np.empty(nout, dtype=np.float32)
    for o in range(nout):
        acc = 0.0
        for i in range(nin):
            acc += w[o, i] * flat[i]
        val = acc + b[o]
        if relu and val < 0.0:
            val = 0.0
        out[o] = val
    return out


@njit(cache=True, nogil=True)
def dcd_epoch(x, y, alpha, w, c, order, qii):
    d = x.shape[1]
    max_pg = 0.0
    for oi in range(order.shape[0]):
        i = order[oi]
        g = 0.0
        for t in range(d):
            g += w[t] * x[i, t]
        g = y[i] * g - 1.0
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
                step = (na - a) * y[i]
                for t in range(d):
                    w[t] += step * x[i, t]
                alpha[i] = na
    return max_pg
