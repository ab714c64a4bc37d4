"""Record-level splits, the training loop and batch prediction."""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DataError, NumericError
from .models import FusionFC, IdentifiedStream, Module, TemporalStream, fuse_average, stacked_features
from .nn.ops import softmax, softmax_cross_entropy
from .nn.optim import Adam, LrSchedule
from .rng import make_rng

log = logging.getLogger(__name__)

SPLIT_RATIOS = (0.7, 0.2, 0.1)  # train : test : valid
HISTORY_FIELDS = ("epoch", "lr", "train_loss", "train_acc", "valid_loss", "valid_acc")
IDENTIFIED_BATCH = 1000
TEMPORAL_BATCH = 600


@dataclass
class TrainConfig:
    epochs: int = 60
    batch_size: int = IDENTIFIED_BATCH
    schedule: LrSchedule = field(default_factory=LrSchedule)
    seed: int = 0
    split: tuple[float, float, float] = SPLIT_RATIOS
    task: str = "rhythm"

    def __post_init__(self):
        if abs(sum(self.split) - 1.0) > 1e-9 or min(self.split) < 0:
            raise ValueError(f"split ratios must be non-negative and sum to 1, got {self.split}")
        if self.task not in ("rhythm", "identity"):
            raise ValueError(f"task must be 'rhythm' or 'identity', got {self.task!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")


def split_records(names: Sequence[str], labels: Sequence | None = None,
                  ratios=SPLIT_RATIOS, seed: int = 0) -> dict[str, list[str]]:
    """Shuffle record names with a seeded RNG and cut them train:test:valid.

    With ``labels`` the cut is made per label, so every class keeps the same
    proportions in each part.  Records never straddle parts.
    """
    names = list(names)
    if len(set(names)) != len(names):
        raise DataError("record names must be unique")
    groups: dict = {}
    for i, n in enumerate(names):
        groups.setdefault(labels[i] if labels is not None else None, []).append(n)
    out = {"train": [], "test": [], "valid": []}
    rng = make_rng(seed, 10)
    for key in sorted(groups, key=str):
        members = sorted(groups[key])
        perm = [members[i] for i in rng.permutation(len(members))]
        n_train, n_test, _ = apportion(len(perm), ratios)
        out["train"] += perm[:n_train]
        out["test"] += perm[n_train : n_train + n_test]
        out["valid"] += perm[n_train + n_test :]
    return out


def apportion(n: int, ratios) -> list[int]:
    """Largest-remainder split of ``n`` items; ties go to the earlier part."""
    quotas = [r * n for r in ratios]
    counts = [int(math.floor(q + 1e-9)) for q in quotas]
    order = sorted(range(len(quotas)), key=lambda i: (-round(quotas[i] - counts[i], 9), i))
    for i in order[: n - sum(counts)]:
        counts[i] += 1
    return counts


def _epoch_rows(n: int, batch: int, rng) -> list[np.ndarray]:
    order = rng.permutation(n)
    return [order[i : i + batch] for i in range(0, n, batch)]


def evaluate(model: Module, x, y, batch_size: int = 1000) -> tuple[float, float]:
    """Eval-mode (mean loss, accuracy)."""
    y = np.asarray(y)
    total, correct = 0.0, 0
    for i in range(0, len(y), batch_size):
        logits, _ = model.logits(x[i : i + batch_size])
        loss, probs = softmax_cross_entropy(logits, y[i : i + batch_size])
        total += loss.item() * len(probs)
        correct += int(np.sum(np.argmax(probs, axis=-1) == y[i : i + batch_size]))
    return total / len(y), correct / len(y)


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    history: list[dict]
    best_epoch: int
    best_valid_loss: float
    checkpoint_updates: list[tuple[int, float]]

    def history_csv(self) -> str:
        return history_to_csv(self.history)


def history_to_csv(history: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HISTORY_FIELDS)
    for row in history:
        w.writerow([row["epoch"]] + [repr(float(row[k])) for k in HISTORY_FIELDS[1:]])
    return buf.getvalue()


def train(model: Module, train_data, valid_data, config: TrainConfig) -> TrainResult:
    """Adam + step schedule; keeps the parameters with the best validation loss.

    ``train_data`` and ``valid_data`` are ``(inputs, integer labels)`` with
    examples along the first axis of ``inputs``.  On return the model holds
    the best-validation parameters.
    """
    x_tr, y_tr = train_data
    x_va, y_va = valid_data
    y_tr = np.asarray(y_tr, dtype=np.int64)
    y_va = np.asarray(y_va, dtype=np.int64)
    if len(y_tr) == 0:
        raise DataError("training split is empty")
    if len(y_va) == 0:
        raise DataError("validation split is empty")
    rng = make_rng(config.seed, 20)
    opt = Adam(model.parameters())
    history = []
    best = (math.inf, -1, model.state_dict())
    updates: list[tuple[int, float]] = []
    for epoch in range(config.epochs):
        lr = config.schedule.lr_at(epoch)
        loss_sum, correct = 0.0, 0
        for b, rows in enumerate(_epoch_rows(len(y_tr), config.batch_size, rng)):
            opt.zero_grad()
            logits, _ = model.logits(x_tr[rows], train=True, rng=rng)
            loss, probs = softmax_cross_entropy(logits, y_tr[rows])
            if not np.isfinite(loss.item()):
                raise NumericError(f"non-finite loss at epoch {epoch} batch {b}", epoch=epoch, batch=b)
            loss.backward()
            opt.step(lr)
            loss_sum += loss.item() * len(rows)
            correct += int(np.sum(np.argmax(probs, axis=-1) == y_tr[rows]))
        v_loss, v_acc = evaluate(model, x_va, y_va)
        if not np.isfinite(v_loss):
            raise NumericError(f"non-finite validation loss at epoch {epoch}", epoch=epoch)
        row = {
            "epoch": epoch, "lr": lr,
            "train_loss": loss_sum / len(y_tr), "train_acc": correct / len(y_tr),
            "valid_loss": v_loss, "valid_acc": v_acc,
        }
        history.append(row)
        log.info("epoch %d lr %.4g train %.4f/%.3f valid %.4f/%.3f", epoch, lr,
                 row["train_loss"], row["train_acc"], v_loss, v_acc)
        if v_loss < best[0]:
            best = (v_loss, epoch, model.state_dict())
            updates.append((epoch, v_loss))
    model.load_state_dict(best[2])
    return TrainResult(best[2], history, best[1], best[0], updates)


def predict(model: Module, x, batch_size: int = 1000) -> tuple[np.ndarray, np.ndarray]:
    """Class indices (argmax, lowest index on ties) and probabilities for a batch."""
    probs = np.concatenate(
        [softmax(model.logits(x[i : i + batch_size])[0].data) for i in range(0, len(x), batch_size)]
    )
    return np.argmax(probs, axis=-1), probs


def predict_one(model: Module, x) -> tuple[int, np.ndarray]:
    probs = softmax(model.logits(x)[0].data)
    return int(np.argmax(probs)), probs


def train_fusion(identified: IdentifiedStream, temporal: TemporalStream, train_data, valid_data,
                 config: TrainConfig, fusion: FusionFC | None = None) -> tuple[FusionFC, TrainResult]:
    """Freeze both pre-trained streams and fit the fusion layer on their
    stacked penultimate features.

    ``train_data``/``valid_data`` are ``(first_frames, sequences, labels)``.
    """
    identified.freeze()
    temporal.freeze()
    fusion = fusion or FusionFC(identified.n_classes, seed=config.seed)
    f_tr = stacked_features(identified, temporal, train_data[0], train_data[1])
    f_va = stacked_features(identified, temporal, valid_data[0], valid_data[1])
    result = train(fusion, (f_tr, train_data[2]), (f_va, valid_data[2]), config)
    return fusion, result


def fused_probs(kind: str, identified: IdentifiedStream, temporal: TemporalStream,
                first_frames, sequences, fusion: FusionFC | None = None,
                batch_size: int = 1000) -> np.ndarray:
    """Class probabilities of either fusion rule for a batch."""
    out = []
    for i in range(0, len(first_frames), batch_size):
        ff, sq = first_frames[i : i + batch_size], sequences[i : i + batch_size]
        if kind == "fusion_avg":
            out.append(fuse_average(identified.probs(ff), temporal.probs(sq)))
        elif kind == "fusion_fc":
            if fusion is None:
                raise ValueError("fusion_fc needs a trained fusion layer")
            out.append(fusion.probs(stacked_features(identified, temporal, ff, sq)))
        else:
            raise ValueError(f"not a fusion model: {kind!r}")
    return np.concatenate(out)
