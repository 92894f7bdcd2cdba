"""Naive nested-loop reference implementations.

These stay deliberately independent of the vectorized kernels they check:
plain Python loops, float64 accumulation, no shared helpers.
"""
import math

import numpy as np


def conv2d_naive(x, weights, bias, stride, padding):
    b, c, h, w = x.shape
    oc, ic, kh, kw = weights.shape
    assert c == ic
    xp = np.zeros((b, c, h + 2 * padding, w + 2 * padding), dtype=np.float64)
    xp[:, :, padding : padding + h, padding : padding + w] = x
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    out = np.zeros((b, oc, oh, ow), dtype=np.float64)
    for bi in range(b):
        for oci in range(oc):
            for oy in range(oh):
                for ox in range(ow):
                    acc = 0.0
                    for ci in range(c):
                        for ky in range(kh):
                            for kx in range(kw):
                                acc += float(weights[oci, ci, ky, kx]) * float(
                                    xp[bi, ci, oy * stride + ky, ox * stride + kx]
                                )
                    out[bi, oci, oy, ox] = acc + float(bias[oci])
    return out


def avg_pool2_naive(x):
    b, c, h, w = x.shape
    if h % 2:
        x = np.concatenate([x, x[:, :, -1:, :]], axis=2)
        h += 1
    if w % 2:
        x = np.concatenate([x, x[:, :, :, -1:]], axis=3)
        w += 1
    out = np.zeros((b, c, h // 2, w // 2), dtype=np.float64)
    for bi in range(b):
        for ci in range(c):
            for oy in range(h // 2):
                for ox in range(w // 2):
                    s = 0.0
                    for dy in range(2):
                        for dx in range(2):
                            s += float(x[bi, ci, 2 * oy + dy, 2 * ox + dx])
                    out[bi, ci, oy, ox] = s / 4.0
    return out


def global_avg_pool_naive(x):
    _, c, h, w = x.shape
    out = np.zeros(c, dtype=np.float64)
    for ci in range(c):
        s = 0.0
        for y in range(h):
            for xx in range(w):
                s += float(x[0, ci, y, xx])
        out[ci] = s / (h * w)
    return out


def psnr_naive(a, b, peak):
    diff = [float(u) - float(v) for u, v in zip(np.ravel(a), np.ravel(b))]
    mse = sum(d * d for d in diff) / len(diff)
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def topk_naive(matrix, ids, query, k):
    """Full-scan cosine ranking: sort by (distance, id)."""
    q = np.asarray(query, dtype=np.float64)
    q = q / np.linalg.norm(q)
    scored = []
    for row, rid in zip(matrix, ids):
        r = np.asarray(row, dtype=np.float64)
        sim = float(np.dot(r, q) / np.linalg.norm(r))
        scored.append((1.0 - max(-1.0, min(1.0, sim)), int(rid)))
    scored.sort(key=lambda t: (t[0], t[1]))
    return [(rid, d) for d, rid in scored[:k]]
