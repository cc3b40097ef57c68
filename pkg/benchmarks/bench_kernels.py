"""Benchmark the compiled kernel core against the numpy fallback.

Two sections:
  * raw kernels on the layer shapes the network actually runs (batch 32),
    timing forward + full backward per call;
  * one whole training step (forward, loss, backward, Adam) per backend.

Usage: python benchmarks/bench_kernels.py [--repeat-seconds S]

Note the wrapper routes ungrouped convolutions through the GEMM path for
either selection, so the backend choice affects the depthwise/grouped
convolutions and max pooling; the raw-kernel table below times each
backend's own implementation of every shape.
"""

import argparse
import time

import numpy as np

from xtimenet import kernels
from xtimenet.autodiff import Tensor, Tape, backward
from xtimenet.data import WindowedDataset
from xtimenet.layers import cross_entropy
from xtimenet.model import XTimeNetworkSpec, build_xtime_network
from xtimenet.training import Adam, TrainConfig

SHAPES = [
    # name, B, C_in, C_out, K, groups, L  (from the built network, batch 32)
    ("module1 bottleneck 10->16 k1", 32, 10, 16, 1, 1, 20),
    ("module4 bottleneck 256->128 k1", 32, 256, 128, 1, 1, 20),
    ("module1 depthwise k41 (16ch)", 32, 16, 16, 41, 16, 20),
    ("module4 depthwise k11 (128ch)", 32, 128, 128, 11, 128, 20),
    ("module4 depthwise k41 (128ch)", 32, 128, 128, 41, 128, 20),
    ("module4 pointwise 128->128", 32, 128, 128, 1, 1, 20),
    ("residual2 conv 128->512 k1", 32, 128, 512, 1, 1, 20),
    ("head conv 512->256 k1 (L=50)", 32, 512, 256, 1, 1, 50),
    ("v2 standard conv 128->128 k41", 32, 128, 128, 41, 1, 20),
]


def time_call(fn, min_seconds):
    fn()  # warm-up
    t0 = time.perf_counter()
    n = 0
    while time.perf_counter() - t0 < min_seconds:
        fn()
        n += 1
    return (time.perf_counter() - t0) / n


def bench_raw_kernels(min_seconds):
    from xtimenet.kernels import numpy_backend
    backends = {"numpy": numpy_backend}
    if kernels.has_cython():
        from xtimenet.kernels import _convext
        backends["cython"] = _convext

    rng = np.random.default_rng(0)
    print(f"{'kernel shape':34s} " +
          " ".join(f"{n:>14s}" for n in backends) + "   speedup")
    for name, b, ci, co, k, g, length in SHAPES:
        pad = (k - 1) // 2
        xp = np.ascontiguousarray(np.pad(
            rng.standard_normal((b, ci, length)),
            ((0, 0), (0, 0), (pad, pad))))
        w = rng.standard_normal((co, ci // g, k))
        gy = rng.standard_normal((b, co, length))
        flops = 2 * b * length * co * (ci // g) * k * 2  # fwd + wgrad
        times = {}
        for bname, mod in backends.items():
            times[bname] = time_call(
                lambda m=mod: (m.conv_same(xp, w, g),
                               m.conv_wgrad(xp, gy, g, k)),
                min_seconds)
        cells = " ".join(f"{times[n]*1e3:8.2f} ms "
                         f"({flops/times[n]/1e9:4.1f}G)" for n in backends)
        if len(times) == 2:
            cells += f"   {times['numpy'] / times['cython']:.2f}x"
        print(f"{name:34s} {cells}")


def bench_training_step(min_seconds):
    rng = np.random.default_rng(0)
    ds = WindowedDataset(windows=rng.standard_normal((32, 10, 20)),
                         labels=rng.integers(0, 8, 32),
                         repetitions=np.ones(32, dtype=np.int64),
                         subjects=np.ones(32, dtype=np.int64),
                         window_ms=200, step_ms=100, fs=100.0, num_classes=8)
    print(f"\nwhole training step (batch 32, 10ch, L=20, base variant):")
    for bname in kernels.available_backends():
        kernels.set_backend(bname)
        net = build_xtime_network(
            XTimeNetworkSpec(input_channels=10, num_classes=8),
            rng=np.random.default_rng(0))
        net.train()
        opt = Adam(net.named_parameters(), TrainConfig(epochs=1))
        x = Tensor(ds.windows)

        def step():
            tape = Tape()
            with tape:
                loss = cross_entropy(net.forward(x), ds.labels)
            backward(loss, tape)
            opt.step(1e-3)
            net.zero_grad()

        dt = time_call(step, min_seconds * 2)
        print(f"  {bname:7s} {dt*1e3:8.1f} ms/step")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat-seconds", type=float, default=0.5,
                    help="minimum wall time per measurement")
    args = ap.parse_args()
    print(f"kernel backends available: {kernels.available_backends()} "
          f"(active: {kernels.get_backend()})\n")
    bench_raw_kernels(args.repeat_seconds)
    bench_training_step(args.repeat_seconds)


if __name__ == "__main__":
    main()
