"""Tape-based reverse-mode automatic differentiation over dense arrays.

Everything is 64-bit floats. A :class:`Tape` records operations executed
inside its ``with`` block; :func:`backward` replays the records in reverse
and accumulates gradients into every participating tensor. There is no
graph structure beyond the tape and no broadcasting beyond what the
network needs (scalar * tensor, per-channel affine inside batch norm).

Tensors are treated as immutable once created by a forward op; only
``grad`` is mutated afterwards. ``grad_check`` deliberately perturbs leaf
``data`` in place to form central differences.
"""

import os
import threading

import numpy as np

_DEBUG_FINITE = bool(os.environ.get("XTIMENET_DEBUG_FINITE"))


def set_debug_checks(enabled):
    """Toggle NaN/Inf validation of every op output (off by default)."""
    global _DEBUG_FINITE
    _DEBUG_FINITE = bool(enabled)


def debug_checks_enabled():
    return _DEBUG_FINITE


class Tensor:
    """Dense float64 array with an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad=False):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def ndim(self):
        return self.data.ndim

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def item(self):
        return float(self.data.reshape(-1)[0])

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, other)

    __rmul__ = __mul__

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={tuple(self.shape)}{flag})"


# per-thread stack, so independent tapes on separate threads never
# interleave (forward passes without a tape are always thread-safe)
_TAPES = threading.local()


def _stack():
    if not hasattr(_TAPES, "stack"):
        _TAPES.stack = []
    return _TAPES.stack


class Tape:
    """Ordered record of the ops of one forward pass.

    Replaying backward visits each record exactly once, newest first. A
    tape is single-use: backward() consumes it.
    """

    def __init__(self):
        self._records = []  # list of (output tensor, fn(gy) -> None)
        self.consumed = False

    def __enter__(self):
        _stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _stack().pop()
        assert popped is self
        return False

    def __len__(self):
        return len(self._records)


def active_tape():
    stack = _stack()
    return stack[-1] if stack else None


def record_op(name, inputs, out_data, backward_fn):
    """Wrap an op result in a Tensor and register its backward rule.

    backward_fn(gy) must accumulate into the inputs' grads. The record is
    only kept when a tape is active and some input requires grad.
    """
    if _DEBUG_FINITE and not np.isfinite(out_data).all():
        raise FloatingPointError(f"{name}: non-finite values in output")
    requires = any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=requires)
    tape = active_tape()
    if tape is not None and requires:
        tape._records.append((out, backward_fn))
    return out


def backward(loss, tape):
    """Populate grads of everything that produced the scalar `loss`."""
    if tape.consumed:
        raise RuntimeError("tape already consumed by a previous backward()")
    if loss.size != 1 or loss.ndim > 1:
        raise ValueError(f"backward() needs a scalar loss, got shape "
                         f"{tuple(loss.shape)}")
    loss.grad = np.ones_like(loss.data)
    for out, fn in reversed(tape._records):
        if out.grad is not None:
            fn(out.grad)
    tape.consumed = True
    tape._records.clear()


# ---------------------------------------------------------------------------
# primitive ops


def add(a, b):
    if a.shape != b.shape:
        raise ValueError(f"add: shape mismatch {tuple(a.shape)} vs "
                         f"{tuple(b.shape)}")

    def bwd(gy):
        if a.requires_grad:
            a.accumulate_grad(gy)
        if b.requires_grad:
            b.accumulate_grad(gy)

    return record_op("add", (a, b), a.data + b.data, bwd)


def mul(a, b):
    if a.shape != b.shape:
        raise ValueError(f"mul: shape mismatch {tuple(a.shape)} vs "
                         f"{tuple(b.shape)}")

    def bwd(gy):
        if a.requires_grad:
            a.accumulate_grad(gy * b.data)
        if b.requires_grad:
            b.accumulate_grad(gy * a.data)

    return record_op("mul", (a, b), a.data * b.data, bwd)


def scale(a, s):
    s = float(s)

    def bwd(gy):
        if a.requires_grad:
            a.accumulate_grad(gy * s)

    return record_op("scale", (a,), a.data * s, bwd)


def tensor_sum(a):
    def bwd(gy):
        if a.requires_grad:
            a.accumulate_grad(np.full_like(a.data, np.asarray(gy).item()))

    return record_op("sum", (a,), np.asarray(a.data.sum()), bwd)


def reshape(a, shape):
    shape = tuple(shape)

    def bwd(gy):
        if a.requires_grad:
            a.accumulate_grad(gy.reshape(a.shape))

    return record_op("reshape", (a,), a.data.reshape(shape).copy(), bwd)


def concat_channels(parts):
    """Concatenate [B, C_i, L] tensors along the channel axis."""
    if not parts:
        raise ValueError("concat_channels: empty input list")
    first = parts[0]
    for p in parts[1:]:
        if p.ndim != 3 or first.ndim != 3:
            raise ValueError("concat_channels: tensors must be [B, C, L]")
        if p.shape[0] != first.shape[0] or p.shape[2] != first.shape[2]:
            raise ValueError(
                f"concat_channels: batch/length mismatch "
                f"{tuple(first.shape)} vs {tuple(p.shape)}")
    offsets = np.cumsum([0] + [p.shape[1] for p in parts])

    def bwd(gy):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                p.accumulate_grad(gy[:, lo:hi, :])

    out = np.concatenate([p.data for p in parts], axis=1)
    return record_op("concat_channels", tuple(parts), out, bwd)


def grad_check(f, x, eps=1e-5, sample=None, rng=None):
    """Max relative error between tape gradients and central differences.

    f must map Tensor -> scalar Tensor. `sample` limits the number of
    coordinates checked (chosen without replacement via `rng`). Error per
    coordinate is |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
    """
    x.requires_grad = True
    x.zero_grad()
    tape = Tape()
    with tape:
        y = f(x)
    if y.size != 1:
        raise ValueError("grad_check: f must return a scalar")
    backward(y, tape)
    analytic = x.grad.reshape(-1).copy()
    x.zero_grad()

    if sample is not None and sample < x.size:
        rng = rng or np.random.default_rng(0)
        idxs = rng.choice(x.size, size=sample, replace=False)
    else:
        idxs = np.arange(x.size)

    flat = x.data.reshape(-1)
    worst = 0.0
    for i in idxs:
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(x).item()
        flat[i] = orig - eps
        fm = f(x).item()
        flat[i] = orig
        numeric = (fp - fm) / (2.0 * eps)
        err = abs(analytic[i] - numeric) / max(1e-8,
                                               abs(analytic[i]) + abs(numeric))
        worst = max(worst, err)
    return worst
