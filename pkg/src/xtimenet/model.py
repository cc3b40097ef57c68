"""The XceptionTime module/network builders, parameter counting and
checkpointing.

One module (4 parallel paths):

    x -> bottleneck Conv1x1(f) -> { DSC k=11, DSC k=21, DSC k=41 }
    x -> MaxPool(3) -> Conv1x1(f)
    concat channels (4f) -> BatchNorm -> ReLU

The network stacks four modules with filter counts 16/32/64/128 and two
projection residuals (Conv1x1 + BN): network input -> module-2 output, and
that sum (post-ReLU) -> module-4 output. The head is adaptive average
pooling to length 50, three [Conv1x1 + BN + ReLU] stages mapping
512 -> 256 -> 128 -> num_classes, and a final adaptive average pool to
length 1. No layer's parameter shapes depend on the input length, so one
built network accepts any window size.

The V2 variant swaps each depthwise-separable convolution for a standard
convolution of the same kernel size (the bottleneck is kept).
"""

from dataclasses import dataclass, asdict

import numpy as np

from . import serial
from .autodiff import reshape, add, concat_channels
from .layers import (Conv1d, DepthwiseSeparableConv1d, BatchNorm1d,
                     relu, max_pool1d, adaptive_avg_pool1d)

VARIANTS = ("base", "v2")


@dataclass
class XTimeModuleSpec:
    c_in: int
    f: int
    kernels: tuple = (11, 21, 41)
    pool_kernel: int = 3
    variant: str = "base"


@dataclass
class XTimeNetworkSpec:
    input_channels: int = 10
    module_filters: tuple = (16, 32, 64, 128)
    num_classes: int = 52
    head_mid_length: int = 50
    head_channels: tuple = (256, 128)
    variant: str = "base"

    def __post_init__(self):
        self.module_filters = tuple(self.module_filters)
        self.head_channels = tuple(self.head_channels)
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got "
                             f"{self.variant!r}")
        if self.num_classes < 2 or self.input_channels < 1:
            raise ValueError("num_classes >= 2 and input_channels >= 1 "
                             "required")


class XTimeModule:
    def __init__(self, spec, rng):
        if spec.c_in < 1 or spec.f < 1:
            raise ValueError(f"module dims must be positive, got "
                             f"c_in={spec.c_in} f={spec.f}")
        self.spec = spec
        self.bottleneck = Conv1d(spec.c_in, spec.f, 1, rng=rng)
        if spec.variant == "v2":
            self.branches = [Conv1d(spec.f, spec.f, k, rng=rng)
                             for k in spec.kernels]
        else:
            self.branches = [DepthwiseSeparableConv1d(spec.f, spec.f, k,
                                                      rng=rng)
                             for k in spec.kernels]
        self.pool_conv = Conv1d(spec.c_in, spec.f, 1, rng=rng)
        self.bn = BatchNorm1d(4 * spec.f)
        self.c_out = 4 * spec.f

    def __call__(self, x):
        b = self.bottleneck(x)
        parts = [branch(b) for branch in self.branches]
        parts.append(self.pool_conv(max_pool1d(x, self.spec.pool_kernel)))
        return relu(self.bn(concat_channels(parts)))

    def named_parameters(self):
        out = [("bottleneck." + n, p) for n, p in
               self.bottleneck.parameters()]
        for branch, k in zip(self.branches, self.spec.kernels):
            out += [(f"branch_k{k}." + n, p) for n, p in branch.parameters()]
        out += [("pool_conv." + n, p) for n, p in self.pool_conv.parameters()]
        out += [("bn." + n, p) for n, p in self.bn.parameters()]
        return out

    def batch_norms(self):
        return [("bn", self.bn)]


class _HeadStage:
    def __init__(self, c_in, c_out, rng):
        self.conv = Conv1d(c_in, c_out, 1, rng=rng)
        self.bn = BatchNorm1d(c_out)

    def __call__(self, x):
        return relu(self.bn(self.conv(x)))


class XTimeNetwork:
    def __init__(self, spec, rng):
        self.spec = spec
        filters = spec.module_filters
        widths = [4 * f for f in filters]  # module output channels

        c = spec.input_channels
        self.modules_ = []
        for f in filters:
            self.modules_.append(
                XTimeModule(XTimeModuleSpec(c_in=c, f=f,
                                            variant=spec.variant), rng))
            c = 4 * f

        self.res1_conv = Conv1d(spec.input_channels, widths[1], 1, rng=rng)
        self.res1_bn = BatchNorm1d(widths[1])
        self.res2_conv = Conv1d(widths[1], widths[3], 1, rng=rng)
        self.res2_bn = BatchNorm1d(widths[3])

        chans = (widths[3],) + spec.head_channels + (spec.num_classes,)
        self.head = [_HeadStage(a, b, rng) for a, b in zip(chans, chans[1:])]
        self.training = True

    @property
    def num_classes(self):
        return self.spec.num_classes

    def forward(self, x):
        if x.ndim != 3 or x.shape[1] != self.spec.input_channels:
            raise ValueError(
                f"network expects [B, {self.spec.input_channels}, L] input, "
                f"got {tuple(x.shape)}")
        m2 = self.modules_[1](self.modules_[0](x))
        r1 = self.res1_bn(self.res1_conv(x))
        a1 = relu(add(m2, r1))
        m4 = self.modules_[3](self.modules_[2](a1))
        r2 = self.res2_bn(self.res2_conv(a1))
        a2 = relu(add(m4, r2))
        h = adaptive_avg_pool1d(a2, self.spec.head_mid_length)
        for stage in self.head:
            h = stage(h)
        h = adaptive_avg_pool1d(h, 1)
        return reshape(h, (x.shape[0], self.spec.num_classes))

    __call__ = forward

    def train(self):
        self.training = True
        for _, bn in self._batch_norms():
            bn.training = True

    def eval(self):
        self.training = False
        for _, bn in self._batch_norms():
            bn.training = False

    def _batch_norms(self):
        out = []
        for i, mod in enumerate(self.modules_):
            out += [(f"module{i + 1}.{n}", bn) for n, bn in
                    mod.batch_norms()]
        out += [("residual1.bn", self.res1_bn),
                ("residual2.bn", self.res2_bn)]
        out += [(f"head{j + 1}.bn", stage.bn) for j, stage in
                enumerate(self.head)]
        return out

    def named_parameters(self):
        out = []
        for i, mod in enumerate(self.modules_):
            out += [(f"module{i + 1}." + n, p) for n, p in
                    mod.named_parameters()]
        for name, conv, bn in (("residual1", self.res1_conv, self.res1_bn),
                               ("residual2", self.res2_conv, self.res2_bn)):
            out += [(f"{name}.conv." + n, p) for n, p in conv.parameters()]
            out += [(f"{name}.bn." + n, p) for n, p in bn.parameters()]
        for j, stage in enumerate(self.head):
            out += [(f"head{j + 1}.conv." + n, p) for n, p in
                    stage.conv.parameters()]
            out += [(f"head{j + 1}.bn." + n, p) for n, p in
                    stage.bn.parameters()]
        return out

    def zero_grad(self):
        for _, p in self.named_parameters():
            p.zero_grad()

    def state_arrays(self):
        """All persistent arrays: trainable params + BN running stats."""
        out = [(name, p.data) for name, p in self.named_parameters()]
        for prefix, bn in self._batch_norms():
            out += [(f"{prefix}.{n}", a) for n, a in bn.state_arrays()]
        return out


def build_xtime_module(spec, rng=None):
    return XTimeModule(spec, rng or np.random.default_rng(0))


def build_xtime_network(spec=None, rng=None, seed=0):
    spec = spec or XTimeNetworkSpec()
    rng = rng or np.random.default_rng(seed)
    return XTimeNetwork(spec, rng)


def build_v2_network(spec=None, rng=None, seed=0):
    spec = spec or XTimeNetworkSpec(variant="v2")
    if spec.variant != "v2":
        raise ValueError("build_v2_network requires spec.variant == 'v2'")
    return build_xtime_network(spec, rng=rng, seed=seed)


def count_parameters(network):
    """Exact number of trainable scalars (running stats excluded)."""
    return sum(p.size for _, p in network.named_parameters())


def parameter_breakdown(network):
    """[(path, count)] per parameter tensor, in construction order."""
    return [(name, p.size) for name, p in network.named_parameters()]


# ---------------------------------------------------------------------------
# checkpointing

CHECKPOINT_KIND = "checkpoint"


def save_checkpoint(network, path, extra_meta=None):
    """Bit-exact snapshot: spec + every parameter and running statistic."""
    meta = {"spec": asdict(network.spec)}
    if extra_meta:
        meta.update(extra_meta)
    arrays = {name: arr for name, arr in network.state_arrays()}
    serial.write_container(path, CHECKPOINT_KIND, meta, arrays)


def load_checkpoint(path):
    """Rebuild the network from a checkpoint. Returns (network, meta)."""
    meta, arrays = serial.read_container(path, expect_kind=CHECKPOINT_KIND)
    spec_dict = dict(meta["spec"])
    spec_dict["module_filters"] = tuple(spec_dict["module_filters"])
    spec_dict["head_channels"] = tuple(spec_dict["head_channels"])
    net = build_xtime_network(XTimeNetworkSpec(**spec_dict))
    expected = dict(net.state_arrays())
    missing = set(expected) - set(arrays)
    surplus = set(arrays) - set(expected)
    if missing or surplus:
        raise ValueError(f"checkpoint {path} does not match the spec: "
                         f"missing={sorted(missing)} "
                         f"unexpected={sorted(surplus)}")
    for name, p in net.named_parameters():
        if arrays[name].shape != p.data.shape:
            raise ValueError(f"checkpoint {path}: {name} has shape "
                             f"{arrays[name].shape}, expected "
                             f"{p.data.shape}")
        p.data[...] = arrays[name]
    for prefix, bn in net._batch_norms():
        bn.running_mean[...] = arrays[f"{prefix}.running_mean"]
        bn.running_var[...] = arrays[f"{prefix}.running_var"]
    return net, meta
