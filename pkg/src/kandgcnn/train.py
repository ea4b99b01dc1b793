"""Softmax cross-entropy, OA/MCA metrics and the SGD-momentum training loop."""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .checkpoint import save_checkpoint
from .data import DatasetCache, augment
from .errors import ConfigError, ContractError, NonFiniteError
from .model import Model
from .numerics import sgd_step

LR_SCHEDULES = ("constant", "cosine")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    epochs: int = 250
    lr: float = 0.001
    momentum: float = 0.9
    k: int = 5
    points: int = 1024
    seed: int = 0
    lr_schedule: str = "constant"
    augment: bool = True

    def __post_init__(self):
        for name in ("batch_size", "epochs", "k", "points"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.lr < 0:
            raise ConfigError(f"lr must be non-negative, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.lr_schedule not in LR_SCHEDULES:
            raise ConfigError(f"lr_schedule must be one of {LR_SCHEDULES}")

    def lr_at(self, epoch: int) -> float:
        """Learning rate for 0-based ``epoch``."""
        if self.lr_schedule == "constant":
            return self.lr
        return self.lr * 0.5 * (1.0 + math.cos(math.pi * epoch / self.epochs))


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    train_oa: float
    train_mca: float
    test_loss: float
    test_oa: float
    test_mca: float
    wall_seconds: float

    def to_line(self) -> str:
        fields = []
        for key, value in asdict(self).items():
            fields.append(f"{key}={value!r}" if isinstance(value, float) else f"{key}={value}")
        return " ".join(fields)

    @classmethod
    def from_line(cls, line: str) -> "EpochRecord":
        pairs = dict(item.split("=", 1) for item in line.split())
        return cls(epoch=int(pairs.pop("epoch")), **{k: float(v) for k, v in pairs.items()})


def cross_entropy(logits, labels):
    """Mean softmax cross-entropy and its gradient ``(softmax - onehot) / B``."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ContractError(f"logits {logits.shape} and labels {labels.shape} do not match")
    nb, nc = logits.shape
    if labels.size and (labels.min() < 0 or labels.max() >= nc):
        raise ContractError(f"labels must lie in [0, {nc})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    log_p = shifted - log_z[:, None]
    rows = np.arange(nb)
    loss = float(-log_p[rows, labels].mean())
    grad = np.exp(log_p)
    grad[rows, labels] -= 1.0
    grad /= nb
    return loss, grad


def metrics(preds, truth, num_classes=None):
    """Overall accuracy and mean per-class accuracy over the classes present in ``truth``."""
    preds = np.asarray(preds)
    truth = np.asarray(truth)
    if preds.shape != truth.shape:
        raise ContractError("predictions and labels differ in length")
    if truth.size == 0:
        raise ContractError("cannot compute metrics of an empty set")
    correct = preds == truth
    oa = float(correct.mean())
    present = np.unique(truth)
    if num_classes is not None and present.max() >= num_classes:
        raise ContractError(f"label {present.max()} outside {num_classes} classes")
    per_class = [correct[truth == c].mean() for c in present]
    return oa, float(np.mean(per_class))


def evaluate(model: Model, clouds, labels, batch_size=16):
    """Loss, OA and MCA without augmentation; the last partial batch is kept."""
    total_loss = 0.0
    preds = np.empty(len(labels), dtype=np.int64)
    for start in range(0, len(labels), batch_size):
        sl = slice(start, start + batch_size)
        logits = model.forward(clouds[sl])
        loss, _ = cross_entropy(logits, labels[sl])
        total_loss += loss * len(labels[sl])
        preds[sl] = logits.argmax(axis=1)
    oa, mca = metrics(preds, labels, model.config.num_classes)
    return total_loss / len(labels), oa, mca


def batches(num_items, batch_size, rng=None, drop_last=False):
    order = np.arange(num_items) if rng is None else rng.permutation(num_items)
    stop = num_items - num_items % batch_size if drop_last else num_items
    for start in range(0, stop, batch_size):
        yield order[start:start + batch_size]


def prepare_batch(clouds, idx, rng=None, train=False):
    """Gather clouds at ``idx``; random scale+shift is applied only when ``train`` is set."""
    x = clouds[idx]
    if train:
        x = np.stack([augment(c, rng) for c in x])
    return x


def train_loop(
    model: Model,
    train_data: DatasetCache,
    test_data: DatasetCache,
    cfg: TrainConfig,
    out_dir=None,
    log_path=None,
    progress=None,
) -> list:
    """Train with SGD momentum, evaluating on ``test_data`` after every epoch.

    When ``out_dir`` is given, ``best.kdk`` (highest test OA) and ``final.kdk``
    are written there. Each epoch's record is appended to ``log_path``.
    """
    if model.config.k != cfg.k:
        raise ConfigError(f"model k={model.config.k} differs from training k={cfg.k}")
    train_x = train_data.stacked(cfg.points)
    train_y = train_data.labels
    test_x = test_data.stacked(cfg.points)
    test_y = test_data.labels
    if len(train_y) < cfg.batch_size:
        raise ConfigError(f"train split has {len(train_y)} clouds, fewer than one batch")
    rng = np.random.default_rng([int(cfg.seed), 1])
    params = model.parameters()
    out_dir = Path(out_dir) if out_dir is not None else None
    log = open(log_path, "w") if log_path is not None else None
    records = []
    best_oa = -1.0
    try:
        for epoch in range(cfg.epochs):
            started = time.perf_counter()
            lr = cfg.lr_at(epoch)
            loss_sum, seen = 0.0, 0
            preds, truth = [], []
            for step, idx in enumerate(batches(len(train_y), cfg.batch_size, rng, drop_last=True)):
                x = prepare_batch(train_x, idx, rng, train=cfg.augment)
                y = train_y[idx]
                logits = model.forward(x)
                loss, grad = cross_entropy(logits, y)
                if not math.isfinite(loss):
                    raise NonFiniteError(f"non-finite loss at epoch {epoch + 1}, batch {step}")
                model.backward(grad)
                sgd_step(params, lr, cfg.momentum)
                loss_sum += loss * len(y)
                seen += len(y)
                preds.append(logits.argmax(axis=1))
                truth.append(y)
            train_oa, train_mca = metrics(np.concatenate(preds), np.concatenate(truth))
            test_loss, test_oa, test_mca = evaluate(model, test_x, test_y, cfg.batch_size)
            rec = EpochRecord(
                epoch=epoch + 1,
                lr=lr,
                train_loss=loss_sum / seen,
                train_oa=train_oa,
                train_mca=train_mca,
                test_loss=test_loss,
                test_oa=test_oa,
                test_mca=test_mca,
                wall_seconds=time.perf_counter() - started,
            )
            records.append(rec)
            if log is not None:
                log.write(rec.to_line() + "\n")
                log.flush()
            if out_dir is not None and test_oa > best_oa:
                best_oa = test_oa
                meta = {"epoch": epoch + 1, "seed": cfg.seed, "points": cfg.points}
                save_checkpoint(out_dir / "best.kdk", model, meta)
            if progress is not None:
                progress(rec)
    finally:
        if log is not None:
            log.close()
    if out_dir is not None:
        meta = {"epoch": cfg.epochs, "seed": cfg.seed, "points": cfg.points}
        save_checkpoint(out_dir / "final.kdk", model, meta)
    return records
