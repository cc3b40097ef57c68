"""Adam optimization, the cyclic learning-rate schedule, the epoch loop
(including mixed window-length training) and evaluation metrics.

The LR schedule is a cosine descent from peak to peak/10 inside each
20-epoch block; the peak halves from block to block (peak_k = lr0 / 2^k).

Mixed-window training draws every mini-batch from a single window length
(so batches stay rectangular) while one epoch still visits every window of
every dataset exactly once, in seeded shuffled order.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, Tape, backward
from .layers import cross_entropy
from .errors import DataError, NumericsError


@dataclass
class TrainConfig:
    lr0: float = 1e-3
    cycle_epochs: int = 20
    batch_size: int = 32
    epochs: int = 100
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr0 <= 0 or self.batch_size < 1 or self.cycle_epochs < 1:
            raise ValueError("lr0 > 0, batch_size >= 1 and cycle_epochs >= 1 "
                             "required")


def lr_at(epoch, cfg):
    """Learning rate for an epoch index (0-based)."""
    block, i = divmod(epoch, cfg.cycle_epochs)
    peak = cfg.lr0 / (2.0 ** block)
    if cfg.cycle_epochs == 1:
        return peak
    frac = i / (cfg.cycle_epochs - 1)
    return peak * (0.55 + 0.45 * math.cos(math.pi * frac))


def adam_step(theta, grad, m, v, t, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One in-place Adam update with bias correction; returns nothing.

    m <- b1*m + (1-b1)*g ;  v <- b2*v + (1-b2)*g^2
    theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)
    """
    m += (1.0 - beta1) * (grad - m)
    v += (1.0 - beta2) * (grad * grad - v)
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    theta -= lr * m_hat / (np.sqrt(v_hat) + eps)


class Adam:
    """Adam over a network's named parameters."""

    def __init__(self, named_params, cfg):
        self.named_params = list(named_params)
        self.cfg = cfg
        self.m = {n: np.zeros_like(p.data) for n, p in self.named_params}
        self.v = {n: np.zeros_like(p.data) for n, p in self.named_params}
        self.t = 0

    def step(self, lr):
        self.t += 1
        cfg = self.cfg
        for name, p in self.named_params:
            if p.grad is None:
                continue
            if not np.isfinite(p.grad).all():
                raise NumericsError(f"NaN/Inf gradient in parameter {name}")
            adam_step(p.data, p.grad, self.m[name], self.v[name], self.t,
                      lr, cfg.beta1, cfg.beta2, cfg.eps)


@dataclass
class EpochMetrics:
    epoch: int
    split: str
    loss: float
    accuracy: float
    lr: float


def _validate_datasets(datasets):
    if not datasets:
        raise DataError("no training datasets given")
    first = datasets[0]
    for ds in datasets[1:]:
        if ds.num_channels != first.num_channels:
            raise DataError(f"incompatible channel counts across datasets: "
                            f"{ds.num_channels} vs {first.num_channels}")
        if ds.num_classes != first.num_classes:
            raise DataError(f"incompatible class counts across datasets: "
                            f"{ds.num_classes} vs {first.num_classes}")


def _epoch_batches(datasets, batch_size, rng):
    """Seeded shuffled batches; each batch comes from exactly one dataset
    (one window length), so batch tensors are always rectangular."""
    batches = []
    for di, ds in enumerate(datasets):
        order = rng.permutation(len(ds))
        for lo in range(0, len(order), batch_size):
            batches.append((di, order[lo:lo + batch_size]))
    rng.shuffle(batches)
    return batches


def train(network, datasets, cfg, metrics_path=None, eval_dataset=None,
          on_epoch=None):
    """Run the training loop; returns the list of EpochMetrics.

    `datasets` is one WindowedDataset or a list of them (several window
    lengths activate mixed-window training). BN runs in train mode. The
    loop aborts with NumericsError if the loss goes non-finite.
    """
    if not isinstance(datasets, (list, tuple)):
        datasets = [datasets]
    _validate_datasets(datasets)
    if sum(len(ds) for ds in datasets) == 0:
        raise DataError("training data is empty")
    rng = np.random.default_rng(cfg.seed)
    network.train()
    opt = Adam(network.named_parameters(), cfg)
    log = []
    for epoch in range(cfg.epochs):
        lr = lr_at(epoch, cfg)
        total, correct, loss_sum = 0, 0, 0.0
        for di, idx in _epoch_batches(datasets, cfg.batch_size, rng):
            ds = datasets[di]
            x = Tensor(ds.windows[idx])
            labels = ds.labels[idx]
            tape = Tape()
            with tape:
                logits = network.forward(x)
                loss = cross_entropy(logits, labels)
            loss_val = loss.item()
            if not math.isfinite(loss_val):
                raise NumericsError(f"loss became non-finite at epoch "
                                    f"{epoch}, batch of dataset {di}")
            backward(loss, tape)
            opt.step(lr)
            network.zero_grad()
            n = len(idx)
            total += n
            loss_sum += loss_val * n
            correct += int((np.argmax(logits.data, axis=1) == labels).sum())
        row = EpochMetrics(epoch, "train", loss_sum / total, correct / total,
                           lr)
        log.append(row)
        if eval_dataset is not None:
            res = evaluate(network, eval_dataset)
            log.append(EpochMetrics(epoch, "test", float("nan"),
                                    res.accuracy, lr))
        if on_epoch is not None:
            on_epoch(row)
    if metrics_path is not None:
        write_metrics(log, metrics_path, cfg)
    return log


METRICS_HEADER = "# xtimenet metrics log v1"


def write_metrics(log, path, cfg=None):
    """Plain-text tabular metrics; content is a pure function of the run
    (no timestamps), so identical seeded runs produce identical bytes."""
    with open(path, "w") as fh:
        fh.write(METRICS_HEADER + "\n")
        if cfg is not None:
            fh.write(f"# config: lr0={cfg.lr0!r} cycle_epochs={cfg.cycle_epochs} "
                     f"batch_size={cfg.batch_size} epochs={cfg.epochs} "
                     f"seed={cfg.seed}\n")
        fh.write("# columns: epoch\tsplit\tloss\taccuracy\tlr\n")
        for row in log:
            fh.write(f"{row.epoch}\t{row.split}\t{row.loss!r}\t"
                     f"{row.accuracy!r}\t{row.lr!r}\n")


@dataclass
class EvalResult:
    accuracy: float
    per_class_accuracy: np.ndarray  # [K]
    confusion: np.ndarray           # [K, K] rows = true, cols = predicted
    predictions: np.ndarray = field(repr=False, default=None)


def evaluate(network, ds, batch_size=256):
    """Window-level accuracy, per-class accuracy and confusion matrix.

    Runs with BN in eval mode (running statistics) and restores the
    network's previous mode; repeated calls return identical results.
    """
    if len(ds) == 0:
        raise DataError("evaluation dataset is empty")
    was_training = network.training
    network.eval()
    k = network.num_classes
    preds = np.empty(len(ds), dtype=np.int64)
    for lo in range(0, len(ds), batch_size):
        x = Tensor(ds.windows[lo:lo + batch_size])
        logits = network.forward(x)
        preds[lo:lo + x.shape[0]] = np.argmax(logits.data, axis=1)
    if was_training:
        network.train()
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (ds.labels, preds), 1)
    support = confusion.sum(axis=1)
    per_class = np.where(support > 0, np.diag(confusion) /
                         np.maximum(support, 1), 0.0)
    accuracy = float(np.trace(confusion)) / len(ds)
    return EvalResult(accuracy, per_class, confusion, preds)


def majority_vote_accuracy(ds, predictions):
    """Per-segment accuracy: windows grouped by (subject, label,
    repetition), each group voting with its most common prediction (ties
    to the lowest class index). Provided for analysis; window-level
    accuracy remains the reported metric.
    """
    keys = list(zip(ds.subjects.tolist(), ds.labels.tolist(),
                    ds.repetitions.tolist()))
    groups = {}
    for i, key in enumerate(keys):
        groups.setdefault(key, []).append(i)
    correct = 0
    for (subj, label, rep), idxs in groups.items():
        votes = np.bincount(predictions[idxs],
                            minlength=int(ds.labels.max()) + 1)
        if votes.argmax() == label:
            correct += 1
    return correct / len(groups)
