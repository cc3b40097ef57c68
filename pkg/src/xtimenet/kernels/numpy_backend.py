"""Pure-numpy kernel backend (im2col views + einsum contractions).

Signatures mirror the compiled backend in ``_convext.pyx``; inputs arrive
pre-padded and C-contiguous from the wrappers in ``kernels/__init__.py``.
"""

import numpy as np
from numpy.lib.stride_tricks import as_strided


def _cols(xp, kernel):
    # sliding view [B, C, L, K] over the padded signal; no copy
    b, c, lp = xp.shape
    length = lp - kernel + 1
    s0, s1, s2 = xp.strides
    return as_strided(xp, (b, c, length, kernel), (s0, s1, s2, s2))


def conv_same(xp, w, groups):
    """y[b,o,t] = sum_{c,k} w[o,c,k] * xp[b, base(o)+c, t+k].

    xp: [B, C_in, L+K-1] pre-padded, w: [C_out, C_in/groups, K].
    groups == 1 routes through a single im2col GEMM; depthwise and
    grouped cases use einsum contractions.
    """
    c_out, c_g, kernel = w.shape
    if groups == 1:
        if kernel == 1:
            # pointwise: batched GEMM, no im2col needed
            return np.matmul(w[None, :, :, 0], xp)
        cols = _cols(xp, kernel)
        # [B, L, C*K] @ [C*K, C_out] -> one GEMM
        b, c_in, length, _ = cols.shape
        mat = cols.transpose(0, 2, 1, 3).reshape(b * length, c_in * kernel)
        y = mat @ w.reshape(c_out, c_in * kernel).T
        return np.ascontiguousarray(
            y.reshape(b, length, c_out).transpose(0, 2, 1))
    cols = _cols(xp, kernel)
    if groups == xp.shape[1] and c_out == groups:
        # depthwise: one filter per channel
        return np.einsum("bclk,ck->bcl", cols, w[:, 0, :], optimize=True)
    b, c_in, length, _ = cols.shape
    cols_g = cols.reshape(b, groups, c_g, length, kernel)
    w_g = w.reshape(groups, c_out // groups, c_g, kernel)
    y = np.einsum("bgclk,gock->bgol", cols_g, w_g, optimize=True)
    return np.ascontiguousarray(y.reshape(b, c_out, length))


def conv_wgrad(xp, gy, groups, kernel):
    """gw[o,c,k] = sum_{b,t} gy[b,o,t] * xp[b, base(o)+c, t+k]."""
    c_out = gy.shape[1]
    if groups == 1:
        if kernel == 1:
            # [C_out, B*L] @ [B*L, C_in]
            b, c_in, length = xp.shape
            gw = gy.transpose(1, 0, 2).reshape(c_out, -1) @ \
                xp.transpose(0, 2, 1).reshape(-1, c_in)
            return np.ascontiguousarray(gw[:, :, None])
        cols = _cols(xp, kernel)
        b, c_in, length, _ = cols.shape
        mat = cols.transpose(0, 2, 1, 3).reshape(b * length, c_in * kernel)
        gw = gy.transpose(1, 0, 2).reshape(c_out, b * length) @ mat
        return np.ascontiguousarray(gw.reshape(c_out, c_in, kernel))
    cols = _cols(xp, kernel)
    b, c_in, length, _ = cols.shape
    c_g = c_in // groups
    cols_g = cols.reshape(b, groups, c_g, length, kernel)
    gy_g = gy.reshape(b, groups, c_out // groups, length)
    gw = np.einsum("bgclk,bgol->gock", cols_g, gy_g, optimize=True)
    return np.ascontiguousarray(gw.reshape(c_out, c_g, kernel))


def maxpool_same(xp, kernel, pad_left):
    """Sliding max over a window of `kernel`, stride 1.

    xp is pre-padded with -inf. Returns (values, source-index) where the
    index refers to the unpadded signal and ties resolve to the smallest
    source position.
    """
    cols = _cols(xp, kernel)
    k_idx = np.argmax(cols, axis=3)  # first occurrence wins
    y = np.take_along_axis(cols, k_idx[..., None], axis=3)[..., 0]
    length = cols.shape[2]
    src = k_idx + (np.arange(length, dtype=np.int64) - pad_left)
    return np.ascontiguousarray(y), src


def maxpool_scatter(src, gy):
    """Route gy back to the argmax positions recorded by maxpool_same."""
    b, c, length = gy.shape
    gx = np.zeros_like(gy)
    rows = np.repeat(np.arange(b * c), length)
    np.add.at(gx.reshape(b * c, length), (rows, src.reshape(-1)),
              gy.reshape(-1))
    return gx
