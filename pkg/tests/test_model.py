"""Architecture contracts: channel bookkeeping, exact parameter counts,
window-size independence, checkpoint round trips, determinism."""

import math

import numpy as np
import pytest

from xtimenet.autodiff import Tensor
from xtimenet.layers import cross_entropy
from xtimenet.model import (XTimeModuleSpec, build_v2_network,
                            build_xtime_module, build_xtime_network,
                            count_parameters, load_checkpoint,
                            parameter_breakdown, save_checkpoint)


def closed_form_module_count(c_in, f, kernels=(11, 21, 41), v2=False):
    """Independent oracle: sum each component's parameter formula."""
    bottleneck = c_in * f + f
    pool_conv = c_in * f + f
    bn = 2 * (4 * f)
    if v2:
        branches = sum(f * f * k + f for k in kernels)
    else:
        depthwise = sum(f * k + f for k in kernels)
        pointwise = len(kernels) * (f * f + f)
        branches = depthwise + pointwise
    return bottleneck + branches + pool_conv + bn


def closed_form_network_count(v2=False, num_classes=52, c_in=10):
    filters = [16, 32, 64, 128]
    widths = [4 * f for f in filters]
    total, c = 0, c_in
    for f in filters:
        total += closed_form_module_count(c, f, v2=v2)
        c = 4 * f
    total += c_in * widths[1] + widths[1] + 2 * widths[1]        # residual 1
    total += widths[1] * widths[3] + widths[3] + 2 * widths[3]   # residual 2
    chans = [widths[3], 256, 128, num_classes]
    for a, b in zip(chans, chans[1:]):
        total += a * b + b + 2 * b                               # head stage
    return total


class TestModule:
    def test_output_channels_four_f(self, rng):
        mod = build_xtime_module(XTimeModuleSpec(c_in=10, f=16), rng)
        out = mod(Tensor(rng.standard_normal((2, 10, 20))))
        assert out.shape == (2, 64, 20)

    @pytest.mark.parametrize("length", [5, 10, 15, 20])
    def test_length_preserved(self, length, rng):
        mod = build_xtime_module(XTimeModuleSpec(c_in=64, f=32), rng)
        out = mod(Tensor(rng.standard_normal((2, 64, length))))
        assert out.shape == (2, 128, length)

    def test_module_parameter_count_closed_form(self, rng):
        mod = build_xtime_module(XTimeModuleSpec(c_in=10, f=16), rng)
        count = sum(p.size for _, p in mod.named_parameters())
        assert count == closed_form_module_count(10, 16) == 2512

    def test_invalid_dims_rejected(self, rng):
        with pytest.raises(ValueError, match="positive"):
            build_xtime_module(XTimeModuleSpec(c_in=0, f=4), rng)


class TestParameterCounts:
    def test_base_count_matches_published_target(self):
        net = build_xtime_network()
        assert count_parameters(net) == 413516
        assert closed_form_network_count() == 413516

    def test_v2_count_matches_published_target(self):
        net = build_v2_network()
        assert count_parameters(net) == 1918476
        assert closed_form_network_count(v2=True) == 1918476

    def test_v2_over_base_ratio(self):
        assert count_parameters(build_v2_network()) / \
            count_parameters(build_xtime_network()) > 4

    def test_single_pointwise_conv_count(self):
        from xtimenet.layers import Conv1d
        conv = Conv1d(10, 16, 1)
        assert sum(p.size for _, p in conv.parameters()) == 176

    def test_breakdown_sums_to_total(self):
        net = build_xtime_network()
        assert sum(c for _, c in parameter_breakdown(net)) == \
            count_parameters(net)

    def test_running_stats_not_counted(self):
        net = build_xtime_network()
        names = [n for n, _ in net.named_parameters()]
        assert not any("running" in n for n in names)


class TestNetworkForward:
    def test_logit_shape(self, rng):
        net = build_xtime_network(rng=rng)
        out = net.forward(Tensor(rng.standard_normal((4, 10, 20))))
        assert out.shape == (4, 52)

    def test_same_network_many_lengths_no_rebuild(self, rng):
        net = build_xtime_network(rng=rng)
        net.eval()
        for length in (1, 5, 10, 15, 20, 50, 100):
            out = net.forward(Tensor(rng.standard_normal((3, 10, length))))
            assert out.shape == (3, 52), f"L={length}"

    def test_v2_same_topology(self, rng):
        net = build_v2_network(rng=rng)
        out = net.forward(Tensor(rng.standard_normal((2, 10, 20))))
        assert out.shape == (2, 52)

    def test_module_channel_bookkeeping(self, rng):
        net = build_xtime_network(rng=rng)
        assert [m.c_out for m in net.modules_] == [64, 128, 256, 512]

    def test_zeroed_final_bn_gives_uniform_loss(self, rng):
        net = build_xtime_network(rng=rng)
        net.head[-1].bn.gamma.data[:] = 0.0
        net.head[-1].bn.beta.data[:] = 0.0
        x = Tensor(rng.standard_normal((3, 10, 20)))
        logits = net.forward(x)
        assert np.allclose(logits.data, logits.data[0, 0])
        loss = cross_entropy(logits, [0, 1, 2])
        assert np.isclose(loss.item(), math.log(52.0), atol=1e-9)

    def test_wrong_channel_count_rejected(self, rng):
        net = build_xtime_network(rng=rng)
        with pytest.raises(ValueError, match="expects"):
            net.forward(Tensor(rng.standard_normal((2, 9, 20))))

    def test_determinism_same_seed(self, rng):
        a = build_xtime_network(seed=11)
        b = build_xtime_network(seed=11)
        for (n1, p1), (n2, p2) in zip(a.named_parameters(),
                                      b.named_parameters()):
            assert n1 == n2 and np.array_equal(p1.data, p2.data)
        x = rng.standard_normal((2, 10, 20))
        a.eval(), b.eval()
        assert np.array_equal(a.forward(Tensor(x)).data,
                              b.forward(Tensor(x)).data)

    def test_different_seeds_differ(self):
        a = build_xtime_network(seed=1)
        b = build_xtime_network(seed=2)
        assert not np.array_equal(a.named_parameters()[0][1].data,
                                  b.named_parameters()[0][1].data)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path, rng):
        net = build_xtime_network(seed=5)
        net.train()
        # move running stats off their defaults before saving
        net.forward(Tensor(rng.standard_normal((4, 10, 20))))
        path = tmp_path / "model.ckpt"
        save_checkpoint(net, path, extra_meta={"note": "test"})
        loaded, meta = load_checkpoint(path)
        assert meta["note"] == "test"
        for (n1, p1), (n2, p2) in zip(net.named_parameters(),
                                      loaded.named_parameters()):
            assert n1 == n2
            assert np.array_equal(p1.data, p2.data)
        for (n1, b1), (n2, b2) in zip(net._batch_norms(),
                                      loaded._batch_norms()):
            assert np.array_equal(b1.running_mean, b2.running_mean)
            assert np.array_equal(b1.running_var, b2.running_var)
        net.eval(), loaded.eval()
        x = Tensor(rng.standard_normal((2, 10, 20)))
        assert np.array_equal(net.forward(x).data, loaded.forward(x).data)

    def test_v2_round_trip_keeps_variant(self, tmp_path):
        net = build_v2_network(seed=3)
        save_checkpoint(net, tmp_path / "v2.ckpt")
        loaded, _ = load_checkpoint(tmp_path / "v2.ckpt")
        assert loaded.spec.variant == "v2"
        assert count_parameters(loaded) == 1918476

    def test_truncated_file_rejected(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"XTNETC01" + b"\x00" * 4)
        with pytest.raises(Exception):
            load_checkpoint(path)

    def test_wrong_magic_rejected(self, tmp_path):
        path = tmp_path / "not.ckpt"
        path.write_bytes(b"GARBAGE!" * 4)
        with pytest.raises(ValueError, match="magic"):
            load_checkpoint(path)


class TestNetworkGradients:
    def test_sampled_network_gradcheck(self):
        """Quick variant (acceptance runs the full 50-coordinate check)."""
        from xtimenet.verify import network_check, TOLERANCE
        worst, _ = network_check(seed=0, coords_per_tensor=2)
        assert worst < TOLERANCE
