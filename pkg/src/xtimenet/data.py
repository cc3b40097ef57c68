"""Recording ingestion (DB1-style CSV), repetition-based splits, the
windowed-dataset container, and a synthetic generator for desk-scale
training tests.

CSV schema: a header row naming columns ``emg0..emg{C-1}, stimulus,
repetition`` (an optional ``subject`` column is honored), one row per
sample at the recording rate. ``stimulus`` is the per-sample gesture label
(0 = rest, 1..52 = gestures); ``repetition`` is the movement repetition id
(0 = rest). Floats are written with round-tripping repr, so
load(save(record)) is bit-exact.
"""

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import serial
from .errors import DataError

MAX_GESTURE_LABEL = 52
MAX_REPETITION = 10


@dataclass
class SignalRecord:
    """One subject's continuous multichannel recording."""

    emg: np.ndarray        # [T, C] raw sensor units
    stimulus: np.ndarray   # [T] gesture label, 0 = rest
    repetition: np.ndarray  # [T] repetition id, 0 = rest
    subject_id: int = 0
    fs: float = 100.0

    def __post_init__(self):
        self.emg = np.asarray(self.emg, dtype=np.float64)
        self.stimulus = np.asarray(self.stimulus, dtype=np.int64)
        self.repetition = np.asarray(self.repetition, dtype=np.int64)
        t = self.emg.shape[0]
        if self.stimulus.shape != (t,) or self.repetition.shape != (t,):
            raise DataError(
                f"emg/stimulus/repetition lengths differ: "
                f"{t}/{self.stimulus.shape[0]}/{self.repetition.shape[0]}")

    @property
    def num_samples(self):
        return self.emg.shape[0]

    @property
    def num_channels(self):
        return self.emg.shape[1]


@dataclass
class SplitSpec:
    """Repetition-based train/test partition (DB1 default: test 2, 5, 7)."""

    test_repetitions: frozenset = frozenset({2, 5, 7})
    all_repetitions: frozenset = frozenset(range(1, MAX_REPETITION + 1))

    def __post_init__(self):
        self.test_repetitions = frozenset(self.test_repetitions)
        self.all_repetitions = frozenset(self.all_repetitions)
        if not self.test_repetitions:
            raise ValueError("test repetition set must be nonempty")
        if not self.test_repetitions <= self.all_repetitions:
            raise ValueError(f"test repetitions {sorted(self.test_repetitions)} "
                             f"outside {sorted(self.all_repetitions)}")
        if not self.train_repetitions:
            raise ValueError("train repetition set must be nonempty")

    @property
    def train_repetitions(self):
        return self.all_repetitions - self.test_repetitions


@dataclass
class WindowedDataset:
    """Segmented (window, label) examples ready for batching."""

    windows: np.ndarray      # [N, C, W]
    labels: np.ndarray       # [N] classes 0..num_classes-1
    repetitions: np.ndarray  # [N]
    subjects: np.ndarray     # [N]
    window_ms: int
    step_ms: int
    fs: float
    num_classes: int
    test_repetitions: tuple = (2, 5, 7)
    stats: dict = field(default_factory=dict)

    def __len__(self):
        return self.windows.shape[0]

    @property
    def num_channels(self):
        return self.windows.shape[1]

    @property
    def window_samples(self):
        return self.windows.shape[2]

    def subset(self, mask):
        return WindowedDataset(
            windows=self.windows[mask], labels=self.labels[mask],
            repetitions=self.repetitions[mask], subjects=self.subjects[mask],
            window_ms=self.window_ms, step_ms=self.step_ms, fs=self.fs,
            num_classes=self.num_classes,
            test_repetitions=self.test_repetitions, stats=self.stats)

    def save(self, path):
        meta = {"window_ms": self.window_ms, "step_ms": self.step_ms,
                "fs": self.fs, "num_classes": self.num_classes,
                "test_repetitions": list(self.test_repetitions),
                "stats": self.stats}
        serial.write_container(path, "windows", meta, {
            "windows": self.windows.astype("<f4"),
            "labels": self.labels.astype("<i4"),
            "repetitions": self.repetitions.astype("<i4"),
            "subjects": self.subjects.astype("<i4"),
        })

    @classmethod
    def load(cls, path):
        meta, arrays = serial.read_container(path, expect_kind="windows")
        return cls(windows=arrays["windows"].astype(np.float64),
                   labels=arrays["labels"].astype(np.int64),
                   repetitions=arrays["repetitions"].astype(np.int64),
                   subjects=arrays["subjects"].astype(np.int64),
                   window_ms=int(meta["window_ms"]),
                   step_ms=int(meta["step_ms"]), fs=float(meta["fs"]),
                   num_classes=int(meta["num_classes"]),
                   test_repetitions=tuple(meta["test_repetitions"]),
                   stats=meta["stats"])


def split_by_repetition(ds, spec=None):
    """Disjoint exhaustive partition of windows by repetition membership."""
    spec = spec or SplitSpec()
    in_test = np.isin(ds.repetitions, sorted(spec.test_repetitions))
    train, test = ds.subset(~in_test), ds.subset(in_test)
    if len(train) == 0:
        warnings.warn("train split is empty for this repetition spec")
    if len(test) == 0:
        warnings.warn("test split is empty for this repetition spec")
    return train, test


# ---------------------------------------------------------------------------
# CSV ingestion


def _fail(path, line, msg):
    raise DataError(f"{path}:{line}: {msg}")


def load_record(path, fs=100.0):
    """Parse a DB1-schema CSV into a SignalRecord, validating as it goes."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        channels = sum(1 for h in header if h.startswith("emg"))
        if channels == 0:
            _fail(path, 1, "no emg* columns in header")
        col = {}
        for name in [f"emg{i}" for i in range(channels)] + \
                ["stimulus", "repetition"]:
            if name not in header:
                _fail(path, 1, f"missing column {name}")
            col[name] = header.index(name)
        subject_idx = header.index("subject") if "subject" in header else None

        emg_rows, stim, rep = [], [], []
        subject = 0
        width = len(header)
        for line_no, row in enumerate(reader, start=2):
            if len(row) != width:
                _fail(path, line_no,
                      f"expected {width} cells, found {len(row)}")
            try:
                emg_rows.append([float(row[col[f"emg{i}"]])
                                 for i in range(channels)])
            except ValueError as exc:
                _fail(path, line_no, f"non-numeric emg value ({exc})")
            try:
                s = int(row[col["stimulus"]])
                r = int(row[col["repetition"]])
            except ValueError as exc:
                _fail(path, line_no, f"non-numeric label ({exc})")
            if not 0 <= s <= MAX_GESTURE_LABEL:
                _fail(path, line_no,
                      f"stimulus {s} outside 0..{MAX_GESTURE_LABEL}")
            if not 0 <= r <= MAX_REPETITION:
                _fail(path, line_no,
                      f"repetition {r} outside 0..{MAX_REPETITION}")
            stim.append(s)
            rep.append(r)
            if subject_idx is not None and line_no == 2:
                try:
                    subject = int(row[subject_idx])
                except ValueError as exc:
                    _fail(path, line_no, f"non-numeric subject ({exc})")

    if not emg_rows:
        raise DataError(f"{path}: no data rows")
    return SignalRecord(emg=np.asarray(emg_rows), stimulus=stim,
                        repetition=rep, subject_id=subject, fs=fs)


def save_record(record, path):
    """Write the canonical CSV (floats via repr, so the round trip is
    bit-exact)."""
    channels = record.num_channels
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"emg{i}" for i in range(channels)] +
                        ["stimulus", "repetition", "subject"])
        for t in range(record.num_samples):
            writer.writerow([repr(float(v)) for v in record.emg[t]] +
                            [int(record.stimulus[t]),
                             int(record.repetition[t]),
                             int(record.subject_id)])


# ---------------------------------------------------------------------------
# synthetic data


def generate_synthetic(num_classes, channels=10, reps=10, seed=0, fs=100.0,
                       gesture_s=5.0, rest_s=3.0, snr_db=10.0,
                       amplitude_spread=40.0, spike_rate=0.4):
    """DB1-like synthetic recording for desk-scale experiments.

    Each class activates a class-specific subset of channels with
    band-limited sinusoid mixtures (distinct carrier/envelope frequencies
    per class and channel) under bursty envelopes, plus Gaussian noise at
    `snr_db`. Channel base amplitudes span `amplitude_spread` (weakest to
    strongest), and rare high-amplitude transient spikes emulate motion
    artifacts. Gestures run ~`gesture_s` seconds separated by rest.

    Layout matches DB1: class-major, `reps` repetitions per class, rest
    (stimulus 0, repetition 0) between gestures.
    """
    if num_classes < 2:
        raise ValueError(f"need at least 2 classes, got {num_classes}")
    if num_classes > MAX_GESTURE_LABEL:
        raise ValueError(f"at most {MAX_GESTURE_LABEL} classes supported")
    if not 1 <= reps <= MAX_REPETITION:
        raise ValueError(f"reps must be in 1..{MAX_REPETITION}, got {reps}")
    rng = np.random.default_rng(seed)
    g_len = int(round(gesture_s * fs))
    r_len = int(round(rest_s * fs))
    t = np.arange(g_len) / fs

    if channels > 1:
        base_amp = amplitude_spread ** (np.arange(channels) / (channels - 1))
    else:
        base_amp = np.ones(1)
    # class-specific channel activation pattern: 3 strong channels per class
    strong = np.full((num_classes, channels), 0.12)
    for k in range(num_classes):
        for j in range(3):
            strong[k, (3 * k + j) % channels] = 1.0
    rest_noise = 0.02 * base_amp

    emg_parts, stim_parts, rep_parts = [], [], []

    def add_rest():
        emg_parts.append(rng.normal(0.0, rest_noise[:, None],
                                    (channels, r_len)))
        stim_parts.append(np.zeros(r_len, dtype=np.int64))
        rep_parts.append(np.zeros(r_len, dtype=np.int64))

    add_rest()
    for k in range(num_classes):
        f_env = 0.4 + 0.12 * k
        f_car = 2.0 + 0.9 * k
        for rp in range(1, reps + 1):
            seg = np.zeros((channels, g_len))
            for c in range(channels):
                phase_e = rng.uniform(0.0, 2.0 * np.pi)
                phase_c = rng.uniform(0.0, 2.0 * np.pi)
                env = 0.35 + 0.65 * np.abs(
                    np.sin(2.0 * np.pi * (f_env + 0.03 * (c % 4)) * t
                           + phase_e)) ** 3
                carrier = np.sin(2.0 * np.pi * (f_car + 0.2 * (c % 3)) * t
                                 + phase_c)
                clean = base_amp[c] * strong[k, c] * env * carrier
                rms = np.sqrt((clean ** 2).mean())
                sigma = rms / np.sqrt(10.0 ** (snr_db / 10.0))
                seg[c] = clean + rng.normal(0.0, sigma, g_len)
            n_spikes = rng.poisson(spike_rate * gesture_s)
            for _ in range(n_spikes):
                c = int(rng.integers(channels))
                pos = int(rng.integers(g_len))
                width = int(rng.integers(1, 4))
                sign = 1.0 if rng.random() < 0.5 else -1.0
                seg[c, pos:pos + width] += sign * 5.0 * base_amp[c]
            emg_parts.append(seg)
            stim_parts.append(np.full(g_len, k + 1, dtype=np.int64))
            rep_parts.append(np.full(g_len, rp, dtype=np.int64))
            add_rest()

    return SignalRecord(emg=np.concatenate(emg_parts, axis=1).T,
                        stimulus=np.concatenate(stim_parts),
                        repetition=np.concatenate(rep_parts),
                        subject_id=1, fs=fs)
