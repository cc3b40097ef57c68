"""Gradient verification harness: layer-by-layer and whole-network checks
against central finite differences.

The layer checks exercise each op at small shapes with every coordinate
perturbed; the network check samples coordinates per parameter tensor on
the full architecture. Both report the max relative error
|analytic - numeric| / max(1e-8, |analytic| + |numeric|).
"""

import numpy as np

from .autodiff import (Tensor, Tape, backward, grad_check, add, mul,
                       concat_channels, tensor_sum)
from .layers import (Conv1d, DepthwiseSeparableConv1d, BatchNorm1d, relu,
                     max_pool1d, adaptive_avg_pool1d, cross_entropy)
from .model import build_xtime_network

TOLERANCE = 1e-4


def _head(rng, shape):
    """Scalar head with fixed non-uniform weights so checks are
    non-trivial; the same weights must be used by every evaluation."""
    w = Tensor(rng.standard_normal(shape))
    return lambda t: tensor_sum(mul(t, w))


def _check_wrt(f, tensors, eps=1e-5, sample=None, rng=None):
    worst = 0.0
    for t in tensors:
        worst = max(worst, grad_check(f, t, eps=eps, sample=sample, rng=rng))
    return worst


def layer_checks(seed=0):
    """Return {check name: max relative error} for every layer type."""
    rng = np.random.default_rng(seed)
    out = {}

    x = Tensor(rng.standard_normal((2, 3, 4)))
    y = Tensor(rng.standard_normal((2, 3, 4)))
    h = _head(rng, (2, 3, 4))
    out["add"] = _check_wrt(lambda t: h(add(t, y)), [x])

    a = Tensor(rng.standard_normal((2, 2, 5)))
    b = Tensor(rng.standard_normal((2, 3, 5)))
    h = _head(rng, (2, 5, 5))
    out["concat_channels"] = max(
        _check_wrt(lambda t: h(concat_channels([t, b])), [a]),
        _check_wrt(lambda t: h(concat_channels([a, t])), [b]))

    conv = Conv1d(3, 4, 11, rng=rng)
    xc = Tensor(rng.standard_normal((2, 3, 8)))
    h = _head(rng, (2, 4, 8))
    f = lambda _: h(conv(xc))
    out["conv1d_standard"] = _check_wrt(f, [xc, conv.weight, conv.bias])

    dw = Conv1d(4, 4, 21, groups=4, rng=rng)
    xd = Tensor(rng.standard_normal((2, 4, 9)))
    h = _head(rng, (2, 4, 9))
    f = lambda _: h(dw(xd))
    out["conv1d_depthwise"] = _check_wrt(f, [xd, dw.weight, dw.bias])

    pw = Conv1d(5, 3, 1, rng=rng)
    xpw = Tensor(rng.standard_normal((2, 5, 6)))
    h = _head(rng, (2, 3, 6))
    f = lambda _: h(pw(xpw))
    out["conv1d_pointwise"] = _check_wrt(f, [xpw, pw.weight, pw.bias])

    dsc = DepthwiseSeparableConv1d(4, 3, 11, rng=rng)
    xs = Tensor(rng.standard_normal((2, 4, 7)))
    h = _head(rng, (2, 3, 7))
    f = lambda _: h(dsc(xs))
    out["depthwise_separable"] = _check_wrt(
        f, [xs, dsc.depthwise.weight, dsc.pointwise.weight])

    bn = BatchNorm1d(4)
    xb = Tensor(rng.standard_normal((3, 4, 6)))
    h = _head(rng, (3, 4, 6))
    f = lambda _: h(bn(xb))
    out["batch_norm_train"] = _check_wrt(f, [xb, bn.gamma, bn.beta])

    # keep inputs away from the 0 kink / pooled ties
    xr = Tensor(np.where(np.abs(z := rng.standard_normal((2, 3, 8))) < 0.05,
                         0.5, z))
    h = _head(rng, (2, 3, 8))
    out["relu"] = _check_wrt(lambda t: h(relu(t)), [xr])

    xm = Tensor(rng.permutation(np.arange(48, dtype=np.float64) * 0.17 - 4)
                .reshape(2, 3, 8))
    out["max_pool1d"] = _check_wrt(lambda t: h(max_pool1d(t, 3)), [xm])

    xa = Tensor(rng.standard_normal((2, 3, 7)))
    h3 = _head(rng, (2, 3, 3))
    h11 = _head(rng, (2, 3, 11))
    out["adaptive_avg_pool_down"] = _check_wrt(
        lambda t: h3(adaptive_avg_pool1d(t, 3)), [xa])
    out["adaptive_avg_pool_up"] = _check_wrt(
        lambda t: h11(adaptive_avg_pool1d(t, 11)), [xa])

    logits = Tensor(rng.standard_normal((4, 6)))
    labels = rng.integers(0, 6, size=4)
    out["cross_entropy"] = _check_wrt(
        lambda t: cross_entropy(t, labels), [logits])
    return out


ZERO_FLOOR = 1e-8   # magnitudes below this count as zero (the formula's
                    # own denominator floor)
RETRY_EPS = 1e-3    # cancellation noise scales as 1/eps; a real backward
                    # bug keeps an O(1) error at every eps
BASE_POINTS = 3     # extra jittered inputs for coordinates that straddle
                    # a ReLU/max-pool kink at the first base point


def network_check(seed=0, coords_per_tensor=50, input_shape=(2, 10, 20),
                  include_input=True, network=None, eps=1e-5):
    """Finite-difference check of the full network loss.

    Samples `coords_per_tensor` coordinates from every parameter tensor
    (and optionally the input). Returns (max error, {tensor path: error}).

    The loss is only piecewise smooth (ReLU, max pool), and conv biases
    that feed a batch norm have structurally zero train-mode gradients,
    so a raw central difference can disagree with a perfectly correct
    backward pass. Three measurement guards handle this; a genuinely
    wrong backward rule fails all of them:

    * analytic and numeric magnitudes both below the formula's 1e-8
      floor count as agreement (the gradient is zero at the resolution a
      central difference can measure);
    * a failing coordinate is re-measured with a coarser step, where
      float64 cancellation noise (|loss|*u / eps) is negligible;
    * a coordinate still failing is re-measured at jittered base points:
      kink locations move with the input, a backward bug does not.
    """
    rng = np.random.default_rng(seed)
    net = network or build_xtime_network(rng=np.random.default_rng(seed + 1))
    net.train()
    x = Tensor(rng.standard_normal(input_shape), requires_grad=include_input)
    labels = rng.integers(0, net.num_classes, size=input_shape[0])

    def forward_loss():
        return cross_entropy(net.forward(x), labels)

    targets = list(net.named_parameters())
    if include_input:
        targets.append(("input", x))

    def analytic_grads():
        tape = Tape()
        with tape:
            loss = forward_loss()
        backward(loss, tape)
        grads = {name: t.grad.reshape(-1).copy() for name, t in targets}
        net.zero_grad()
        x.zero_grad()
        return grads

    def coord_error(flat, i, a, step):
        orig = flat[i]
        flat[i] = orig + step
        fp = forward_loss().item()
        flat[i] = orig - step
        fm = forward_loss().item()
        flat[i] = orig
        numeric = (fp - fm) / (2.0 * step)
        if abs(a) < ZERO_FLOOR and abs(numeric) < ZERO_FLOOR:
            return 0.0
        return abs(a - numeric) / max(ZERO_FLOOR, abs(a) + abs(numeric))

    def measure(flat, i, a):
        err = coord_error(flat, i, a, eps)
        if err >= TOLERANCE:
            err = min(err, coord_error(flat, i, a, RETRY_EPS))
        return err

    analytic = analytic_grads()
    errors = {}
    pending = []  # (name, tensor, coord, error so far)
    for name, t in targets:
        flat = t.data.reshape(-1)
        count = min(coords_per_tensor, flat.size)
        idxs = rng.choice(flat.size, size=count, replace=False)
        worst = 0.0
        for i in idxs:
            err = measure(flat, i, analytic[name][i])
            if err >= TOLERANCE:
                pending.append((name, t, int(i), err))
            else:
                worst = max(worst, err)
        errors[name] = worst

    for _ in range(BASE_POINTS):
        if not pending:
            break
        x.data += rng.uniform(-0.05, 0.05, size=x.shape)
        analytic = analytic_grads()
        still = []
        for name, t, i, old_err in pending:
            err = measure(t.data.reshape(-1), i, analytic[name][i])
            if err >= TOLERANCE:
                still.append((name, t, i, min(err, old_err)))
            else:
                errors[name] = max(errors[name], err)
        pending = still
    for name, _, _, err in pending:
        errors[name] = max(errors[name], err)
    return max(errors.values()), errors
