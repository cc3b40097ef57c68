"""Neural building blocks: 1-D convolutions (standard / depthwise /
pointwise / depthwise-separable), batch norm, ReLU, max pooling, adaptive
average pooling and cross-entropy.

All convolutions are stride 1 with zero-valued 'same' padding and odd
kernels, so every layer here maps length L to length L. Max pooling pads
with -inf so edge zeros cannot beat negative signals.
"""

import numpy as np

from . import kernels
from .autodiff import Tensor, record_op


def he_uniform(rng, shape, fan_in):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


# ---------------------------------------------------------------------------
# functional ops


def conv1d(x, weight, bias=None, groups=1):
    """out[b,o,t] = bias[o] + sum_{c,k} weight[o,c,k] * x_pad[b,base+c,t+k]."""
    if x.ndim != 3:
        raise ValueError(f"conv1d: input must be [B, C, L], got "
                         f"{tuple(x.shape)}")
    c_out, c_g, kernel = weight.shape
    c_in = x.shape[1]
    if kernel % 2 == 0:
        raise ValueError(f"conv1d: kernel must be odd, got {kernel}")
    if c_in % groups or c_out % groups:
        raise ValueError(f"conv1d: groups={groups} must divide C_in={c_in} "
                         f"and C_out={c_out}")
    if c_g != c_in // groups:
        raise ValueError(f"conv1d: weight expects C_in={c_g * groups} "
                         f"(groups={groups}), input has C_in={c_in}")

    y = kernels.conv1d_forward(x.data, weight.data,
                               bias.data if bias is not None else None,
                               groups)

    def bwd(gy):
        gx, gw, gb = kernels.conv1d_backward(
            x.data, weight.data, groups, gy,
            need_input_grad=x.requires_grad)
        if x.requires_grad:
            x.accumulate_grad(gx)
        if weight.requires_grad:
            weight.accumulate_grad(gw)
        if bias is not None and bias.requires_grad:
            bias.accumulate_grad(gb)

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return record_op("conv1d", inputs, y, bwd)


def relu(x):
    def bwd(gy):
        if x.requires_grad:
            x.accumulate_grad(gy * (x.data > 0.0))

    return record_op("relu", (x,), np.maximum(x.data, 0.0), bwd)


def max_pool1d(x, kernel=3):
    """Length-preserving sliding max; gradient goes to the (first) argmax."""
    y, src = kernels.max_pool1d_forward(x.data, kernel)

    def bwd(gy):
        if x.requires_grad:
            x.accumulate_grad(kernels.max_pool1d_backward(src, gy))

    return record_op("max_pool1d", (x,), y, bwd)


_POOL_MATRICES = {}


def _pool_matrix(l_in, l_out):
    """Row i averages x[floor(i*L_in/L_out) : ceil((i+1)*L_in/L_out))."""
    key = (l_in, l_out)
    m = _POOL_MATRICES.get(key)
    if m is None:
        m = np.zeros((l_out, l_in))
        for i in range(l_out):
            start = (i * l_in) // l_out
            end = -((-(i + 1) * l_in) // l_out)  # ceil division
            m[i, start:end] = 1.0 / (end - start)
        _POOL_MATRICES[key] = m
    return m


def adaptive_avg_pool1d(x, l_out):
    if l_out < 1:
        raise ValueError(f"adaptive_avg_pool1d: L_out must be >= 1, "
                         f"got {l_out}")
    m = _pool_matrix(x.shape[2], l_out)
    y = np.einsum("bcl,ol->bco", x.data, m, optimize=True)

    def bwd(gy):
        if x.requires_grad:
            x.accumulate_grad(np.einsum("bco,ol->bcl", gy, m, optimize=True))

    return record_op("adaptive_avg_pool1d", (x,), y, bwd)


def cross_entropy(logits, labels):
    """Mean of -log softmax(logits)[label], max-subtraction stabilized."""
    labels = np.asarray(labels, dtype=np.int64)
    b, k = logits.shape
    if labels.shape != (b,):
        raise ValueError(f"cross_entropy: expected {b} labels, got "
                         f"{labels.shape}")
    if labels.min() < 0 or labels.max() >= k:
        bad = labels[(labels < 0) | (labels >= k)][0]
        raise ValueError(f"cross_entropy: label {bad} outside [0, {k})")

    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    loss = -logp[np.arange(b), labels].mean()

    def bwd(gy):
        if logits.requires_grad:
            g = np.exp(logp)
            g[np.arange(b), labels] -= 1.0
            logits.accumulate_grad(g * (np.asarray(gy).item() / b))

    return record_op("cross_entropy", (logits,), np.asarray(loss), bwd)


# ---------------------------------------------------------------------------
# parameterized layers


class Conv1d:
    """Stride-1 same-padded 1-D convolution (groups=C_in gives depthwise)."""

    def __init__(self, c_in, c_out, kernel, groups=1, bias=True, rng=None):
        if c_in < 1 or c_out < 1:
            raise ValueError("Conv1d: channel counts must be positive")
        if kernel % 2 == 0:
            raise ValueError(f"Conv1d: kernel must be odd, got {kernel}")
        if c_in % groups or c_out % groups:
            raise ValueError(f"Conv1d: groups={groups} must divide "
                             f"C_in={c_in} and C_out={c_out}")
        rng = rng or np.random.default_rng(0)
        c_g = c_in // groups
        fan_in = c_g * kernel
        self.c_in, self.c_out, self.kernel, self.groups = (c_in, c_out,
                                                           kernel, groups)
        self.weight = Tensor(he_uniform(rng, (c_out, c_g, kernel), fan_in),
                             requires_grad=True)
        self.bias = Tensor(np.zeros(c_out), requires_grad=True) if bias \
            else None

    def __call__(self, x):
        return conv1d(x, self.weight, self.bias, self.groups)

    def parameters(self):
        out = [("weight", self.weight)]
        if self.bias is not None:
            out.append(("bias", self.bias))
        return out


class DepthwiseSeparableConv1d:
    """Per-channel temporal conv followed by a 1x1 channel-mixing conv.

    Parameter count: C*l (+C bias) from the depthwise stage plus C*f (+f
    bias) from the pointwise stage, versus C*f*l for a standard conv.
    """

    def __init__(self, c_in, f, kernel, bias=True, rng=None):
        self.depthwise = Conv1d(c_in, c_in, kernel, groups=c_in, bias=bias,
                                rng=rng)
        self.pointwise = Conv1d(c_in, f, 1, bias=bias, rng=rng)

    def __call__(self, x):
        return self.pointwise(self.depthwise(x))

    def parameters(self):
        return ([("depthwise." + n, p) for n, p in
                 self.depthwise.parameters()] +
                [("pointwise." + n, p) for n, p in
                 self.pointwise.parameters()])


class BatchNorm1d:
    """Per-channel batch normalization over the (batch, length) axes.

    Train mode normalizes with batch statistics (biased variance) and
    updates running statistics with momentum; eval mode is a fixed affine
    map from the running statistics.
    """

    def __init__(self, channels, momentum=0.1, eps=1e-5):
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.gamma = Tensor(np.ones(channels), requires_grad=True)
        self.beta = Tensor(np.zeros(channels), requires_grad=True)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.training = True

    def __call__(self, x):
        if x.ndim != 3 or x.shape[1] != self.channels:
            raise ValueError(f"BatchNorm1d({self.channels}): bad input shape "
                             f"{tuple(x.shape)}")
        if self.training:
            return self._forward_train(x)
        return self._forward_eval(x)

    def _forward_train(self, x):
        b, c, length = x.shape
        n = b * length
        if n < 2:
            raise ValueError("BatchNorm1d: train mode needs B*L >= 2")
        mean = x.data.mean(axis=(0, 2))
        var = x.data.var(axis=(0, 2))
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x.data - mean[None, :, None]) * inv_std[None, :, None]
        y = self.gamma.data[None, :, None] * xhat + \
            self.beta.data[None, :, None]
        self.running_mean += self.momentum * (mean - self.running_mean)
        self.running_var += self.momentum * (var - self.running_var)
        gamma, beta = self.gamma, self.beta

        def bwd(gy):
            if beta.requires_grad:
                beta.accumulate_grad(gy.sum(axis=(0, 2)))
            if gamma.requires_grad:
                gamma.accumulate_grad((gy * xhat).sum(axis=(0, 2)))
            if x.requires_grad:
                gy_mean = gy.mean(axis=(0, 2))
                gyx_mean = (gy * xhat).mean(axis=(0, 2))
                gx = (gamma.data * inv_std)[None, :, None] * (
                    gy - gy_mean[None, :, None]
                    - xhat * gyx_mean[None, :, None])
                x.accumulate_grad(gx)

        return record_op("batch_norm1d", (x, gamma, beta), y, bwd)

    def _forward_eval(self, x):
        inv_std = 1.0 / np.sqrt(self.running_var + self.eps)
        xhat = (x.data - self.running_mean[None, :, None]) * \
            inv_std[None, :, None]
        y = self.gamma.data[None, :, None] * xhat + \
            self.beta.data[None, :, None]
        gamma, beta = self.gamma, self.beta

        def bwd(gy):
            if beta.requires_grad:
                beta.accumulate_grad(gy.sum(axis=(0, 2)))
            if gamma.requires_grad:
                gamma.accumulate_grad((gy * xhat).sum(axis=(0, 2)))
            if x.requires_grad:
                x.accumulate_grad(gy * (gamma.data * inv_std)[None, :, None])

        return record_op("batch_norm1d", (x, gamma, beta), y, bwd)

    def parameters(self):
        return [("gamma", self.gamma), ("beta", self.beta)]

    def state_arrays(self):
        return [("running_mean", self.running_mean),
                ("running_var", self.running_var)]
