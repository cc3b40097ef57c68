"""Hot convolution/pooling kernels: compiled core with a numpy fallback.

The Cython extension (``_convext``) is used when it was built; otherwise
the numpy backend takes over transparently. Selection happens at import
and can be forced with the environment variable ``XTIMENET_KERNELS``
(``cython`` or ``numpy``) or switched at runtime with :func:`set_backend`
(used by the backend parity tests and the benchmark).

Routing is by algorithm, not blanket backend preference: an ungrouped
convolution is a matrix multiplication, so groups == 1 always goes
through the im2col/GEMM path (BLAS via numpy) where hand-rolled loops
lose badly; the selected backend supplies the kernels BLAS cannot
express: grouped/depthwise convolutions and max pooling. Each backend is
nevertheless a complete implementation of every kernel, so the parity
tests and the benchmark compare them across the board.

Both backends implement the same contract on C-contiguous float64 arrays
and differ only in floating-point summation order (~1e-15 relative).
"""

import os

import numpy as np

from . import numpy_backend

try:
    from . import _convext as _cython_backend
except ImportError:
    _cython_backend = None

_BACKENDS = {"numpy": numpy_backend}
if _cython_backend is not None:
    _BACKENDS["cython"] = _cython_backend


def _initial_backend():
    forced = os.environ.get("XTIMENET_KERNELS", "").strip().lower()
    if forced:
        if forced not in _BACKENDS:
            raise ImportError(
                f"XTIMENET_KERNELS={forced!r} requested but that backend is "
                f"not available (have: {', '.join(sorted(_BACKENDS))})")
        return forced
    return "cython" if "cython" in _BACKENDS else "numpy"


_active = _initial_backend()


def available_backends():
    return tuple(sorted(_BACKENDS))


def has_cython():
    return "cython" in _BACKENDS


def get_backend():
    return _active


def set_backend(name):
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown kernel backend {name!r} "
                         f"(have: {', '.join(sorted(_BACKENDS))})")
    _active = name


def _impl(groups):
    # ungrouped convolutions are GEMMs: always take the BLAS path
    if groups == 1:
        return numpy_backend
    return _BACKENDS[_active]


def _as_c64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def conv1d_forward(x, w, bias, groups):
    """Stride-1, zero-padded 'same' grouped convolution.

    x: [B, C_in, L], w: [C_out, C_in/groups, K] with K odd,
    bias: [C_out] or None. Returns [B, C_out, L].
    """
    kernel = w.shape[2]
    pad = (kernel - 1) // 2
    xp = np.pad(_as_c64(x), ((0, 0), (0, 0), (pad, pad)))
    y = _impl(groups).conv_same(xp, _as_c64(w), groups)
    if bias is not None:
        y += bias[None, :, None]
    return y


def conv1d_backward(x, w, groups, gy, need_input_grad=True):
    """Gradients of conv1d_forward. Returns (gx or None, gw, gb)."""
    c_out, c_g, kernel = w.shape
    pad = (kernel - 1) // 2
    gy = _as_c64(gy)
    xp = np.pad(_as_c64(x), ((0, 0), (0, 0), (pad, pad)))
    gw = _impl(groups).conv_wgrad(xp, gy, groups, kernel)
    gb = gy.sum(axis=(0, 2))
    gx = None
    if need_input_grad:
        # gx is a 'same' convolution of gy with the per-group transposed,
        # kernel-flipped weights.
        o_g = c_out // groups
        w4 = w.reshape(groups, o_g, c_g, kernel)
        w_t = _as_c64(w4.transpose(0, 2, 1, 3)[..., ::-1]
                      .reshape(c_g * groups, o_g, kernel))
        gyp = np.pad(gy, ((0, 0), (0, 0), (pad, pad)))
        gx = _impl(groups).conv_same(gyp, w_t, groups)
    return gx, gw, gb


def max_pool1d_forward(x, kernel):
    """Length-preserving sliding max (stride 1, -inf edge padding).

    Returns (values, source index into the unpadded signal); ties resolve
    to the smallest source index.
    """
    pad_left = (kernel - 1) // 2
    pad_right = kernel - 1 - pad_left
    xp = np.pad(_as_c64(x), ((0, 0), (0, 0), (pad_left, pad_right)),
                constant_values=-np.inf)
    return _BACKENDS[_active].maxpool_same(xp, kernel, pad_left)


def max_pool1d_backward(src, gy):
    return _BACKENDS[_active].maxpool_scatter(
        np.ascontiguousarray(src, dtype=np.int64), _as_c64(gy))
