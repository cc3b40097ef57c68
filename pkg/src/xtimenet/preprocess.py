"""Signal preprocessing: 1st-order low-pass Butterworth filtering, mu-law
and minmax normalization, and sliding-window segmentation.

Pipeline order is filter -> prescale -> normalize -> segment. Note the
chain is not idempotent (mu-law applied twice keeps compressing), so the
CLI never re-normalizes an already-preprocessed file.

Normalization statistics (the global prescale maximum, the per-channel
minmax range) are fitted on training repetitions only and persisted, so
the held-out repetitions never leak into the fit.
"""

import math
import warnings

import numpy as np

from .errors import DataError

LATENCY_BOUND_MS = 300


class FilterCoeffs:
    """First-order IIR y[t] = b0*x[t] + b1*x[t-1] - a1*y[t-1]."""

    __slots__ = ("b0", "b1", "a1")

    def __init__(self, b0, b1, a1):
        self.b0, self.b1, self.a1 = float(b0), float(b1), float(a1)

    @property
    def b(self):
        return [self.b0, self.b1]

    @property
    def a(self):
        return [1.0, self.a1]

    def dc_gain(self):
        return (self.b0 + self.b1) / (1.0 + self.a1)

    def __repr__(self):
        return (f"FilterCoeffs(b0={self.b0!r}, b1={self.b1!r}, "
                f"a1={self.a1!r})")


def butterworth_lowpass(fc, fs):
    """First-order low-pass coefficients via the prewarped bilinear
    transform of H(s) = wc / (s + wc):

        wc = 2*fs*tan(pi*fc/fs)
        b0 = b1 = wc / (2*fs + wc),  a1 = (wc - 2*fs) / (2*fs + wc)

    DC gain is exactly 1 and |a1| < 1 for any 0 < fc < fs/2.
    """
    if not 0.0 < fc < fs / 2.0:
        raise ValueError(f"cutoff must satisfy 0 < fc < fs/2, got fc={fc}, "
                         f"fs={fs}")
    wc = 2.0 * fs * math.tan(math.pi * fc / fs)
    denom = 2.0 * fs + wc
    return FilterCoeffs(wc / denom, wc / denom, (wc - 2.0 * fs) / denom)


def filter_apply(signal, coeffs, two_pass=False):
    """Causal direct-form filtering with zero initial state, applied
    independently to each row of a [C, T] array (or to a 1-D signal).

    two_pass=True runs the filter forward then backward for zero phase
    (an experimentation flag; the default matches real-time use).
    """
    x = np.asarray(signal, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    y = np.empty_like(x)
    b0, b1, a1 = coeffs.b0, coeffs.b1, coeffs.a1
    for ch in range(x.shape[0]):
        row = x[ch]
        out = y[ch]
        prev_x = 0.0
        prev_y = 0.0
        for t in range(row.shape[0]):
            xt = row[t]
            yt = b0 * xt + b1 * prev_x - a1 * prev_y
            out[t] = yt
            prev_x = xt
            prev_y = yt
    if two_pass:
        y = filter_apply(y[:, ::-1], coeffs)[:, ::-1]
    return y[0] if squeeze else y


def mu_law_normalize(x, mu=256.0):
    """F(x) = sign(x) * ln(1 + mu*|x|) / ln(1 + mu), elementwise.

    Requires |x| <= 1 (the pipeline guarantees this by prescaling with the
    training-split global maximum and clipping).
    """
    if mu <= 0:
        raise ValueError(f"mu must be positive, got {mu}")
    x = np.asarray(x, dtype=np.float64)
    absx = np.abs(x)
    if absx.size and absx.max() > 1.0 + 1e-12:
        idx = tuple(int(v) for v in
                    np.unravel_index(int(np.argmax(absx)), x.shape))
        raise ValueError(f"mu-law input out of range at index {idx}: "
                         f"|{float(x[idx])}| > 1")
    return np.sign(x) * np.log1p(mu * absx) / math.log1p(mu)


def fit_prescale(x, fit_mask=None):
    """Global (all channels) max-abs over the fitted samples."""
    x = np.asarray(x, dtype=np.float64)
    sel = x if fit_mask is None else x[:, fit_mask]
    gmax = float(np.abs(sel).max()) if sel.size else 0.0
    if gmax == 0.0:
        warnings.warn("prescale fit saw an all-zero signal; using 1.0")
        gmax = 1.0
    return gmax


def apply_prescale(x, gmax, clip=True):
    """Divide by the fitted global max; clip the (held-out) overshoot so
    the mu-law domain |x| <= 1 holds on every split."""
    y = np.asarray(x, dtype=np.float64) / gmax
    if clip:
        np.clip(y, -1.0, 1.0, out=y)
    return y


def fit_minmax(x, fit_mask=None):
    """Per-channel (min, max) over the fitted samples of a [C, T] array."""
    x = np.asarray(x, dtype=np.float64)
    sel = x if fit_mask is None else x[:, fit_mask]
    return sel.min(axis=1), sel.max(axis=1)


def minmax_normalize(x, mn=None, mx=None):
    """Map each channel's fitted [min, max] linearly onto [-1, 1].

    Constant channels map to zero (with a warning). When mn/mx are not
    supplied they are fitted on x itself.
    """
    x = np.asarray(x, dtype=np.float64)
    if mn is None or mx is None:
        mn, mx = fit_minmax(x)
    mn = np.asarray(mn, dtype=np.float64)
    mx = np.asarray(mx, dtype=np.float64)
    span = mx - mn
    degenerate = span <= 0
    if degenerate.any():
        warnings.warn(f"minmax: constant channel(s) "
                      f"{np.nonzero(degenerate)[0].tolist()} mapped to 0")
    safe = np.where(degenerate, 1.0, span)
    y = 2.0 * (x - mn[:, None]) / safe[:, None] - 1.0
    y[degenerate, :] = 0.0
    return y


def segment_windows(record, window_ms, step_ms, fs=None):
    """Cut [channels, W] windows at a fixed stride, keeping only windows
    whose samples all carry one gesture (and one repetition): windows
    touching a label transition or the rest class are discarded. Gesture
    labels 1..K remap to classes 0..K-1.

    Returns a WindowedDataset.
    """
    from .data import WindowedDataset

    fs = record.fs if fs is None else fs
    if window_ms > LATENCY_BOUND_MS:
        warnings.warn(f"window of {window_ms} ms exceeds the "
                      f"{LATENCY_BOUND_MS} ms real-time latency bound")
    w_samples = _ms_to_samples(window_ms, fs, "window_ms")
    step = _ms_to_samples(step_ms, fs, "step_ms")

    emg = np.asarray(record.emg, dtype=np.float64).T  # [C, T]
    stim = np.asarray(record.stimulus, dtype=np.int64)
    rep = np.asarray(record.repetition, dtype=np.int64)
    n = stim.shape[0]

    starts = range(0, n - w_samples + 1, step)
    windows, labels, reps = [], [], []
    for s in starts:
        sl = slice(s, s + w_samples)
        w_stim = stim[sl]
        first = w_stim[0]
        if first == 0 or (w_stim != first).any():
            continue
        w_rep = rep[sl]
        if w_rep[0] == 0 or (w_rep != w_rep[0]).any():
            continue
        windows.append(emg[:, sl])
        labels.append(first - 1)
        reps.append(w_rep[0])

    if not windows:
        raise DataError(f"segmentation produced no pure-gesture windows "
                        f"(window {window_ms} ms, step {step_ms} ms)")
    labels = np.asarray(labels, dtype=np.int64)
    return WindowedDataset(
        windows=np.stack(windows),
        labels=labels,
        repetitions=np.asarray(reps, dtype=np.int64),
        subjects=np.full(len(labels), record.subject_id, dtype=np.int64),
        window_ms=int(window_ms),
        step_ms=int(step_ms),
        fs=float(fs),
        num_classes=int(stim.max()),
    )


def _ms_to_samples(ms, fs, what):
    samples = ms * fs / 1000.0
    rounded = round(samples)
    if abs(samples - rounded) > 1e-9 or rounded < 1:
        raise ValueError(f"{what}={ms} ms is not a whole number of samples "
                         f"at fs={fs} Hz")
    return int(rounded)


def preprocess_record(record, window_ms=200, step_ms=10, norm="mu-law",
                      mu=256.0, fc=1.0, two_pass=False,
                      test_repetitions=(2, 5, 7), num_classes=None):
    """Full chain on one recording: filter -> prescale -> normalize ->
    segment. Statistics are fitted on samples whose repetition is not in
    `test_repetitions`. Returns (WindowedDataset, stats dict).
    """
    if norm not in ("mu-law", "minmax", "none"):
        raise ValueError(f"unknown normalization {norm!r}")
    coeffs = butterworth_lowpass(fc, record.fs)
    filtered = filter_apply(np.asarray(record.emg, dtype=np.float64).T,
                            coeffs, two_pass=two_pass)
    rep = np.asarray(record.repetition, dtype=np.int64)
    fit_mask = ~np.isin(rep, list(test_repetitions))
    if not fit_mask.any():
        raise DataError("no training-split samples to fit normalization "
                        "statistics on")

    stats = {"norm": norm, "fc": fc, "two_pass": bool(two_pass)}
    if norm == "mu-law":
        gmax = fit_prescale(filtered, fit_mask)
        normalized = mu_law_normalize(apply_prescale(filtered, gmax), mu)
        stats.update(mu=float(mu), prescale_max=gmax)
    elif norm == "minmax":
        mn, mx = fit_minmax(filtered, fit_mask)
        normalized = minmax_normalize(filtered, mn, mx)
        stats.update(channel_min=mn.tolist(), channel_max=mx.tolist())
    else:
        normalized = filtered

    prepped = type(record)(emg=normalized.T, stimulus=record.stimulus,
                           repetition=record.repetition,
                           subject_id=record.subject_id, fs=record.fs)
    ds = segment_windows(prepped, window_ms, step_ms)
    if num_classes is not None:
        if ds.labels.max() >= num_classes:
            raise DataError(f"observed class {ds.labels.max()} exceeds "
                            f"--num-classes {num_classes}")
        ds.num_classes = int(num_classes)
    ds.test_repetitions = tuple(sorted(test_repetitions))
    ds.stats = stats
    return ds, stats
