"""Masked MAE loss, Adam, gradient clipping, the training loop and per-horizon evaluation."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .data import invert_zscore
from .seq2seq import eps_at

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 16
    learning_rate: float = 1e-3
    clip_norm: float = 5.0
    tau: float = 2000.0
    seed: int = 0
    variant: str = "full"
    patience: int = 15
    eval_batch_size: int = 256


@dataclass
class MetricReport:
    mae: np.ndarray
    rmse: np.ndarray
    counts: np.ndarray
    mae_all: float
    rmse_all: float
    wall_clock: float = 0.0
    epoch_curve: list = field(default_factory=list)

    @property
    def horizons(self):
        return len(self.mae)


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch, state, history):
        super().__init__(f"loss became non-finite in epoch {epoch}; kept last finite checkpoint")
        self.epoch = epoch
        self.state = state
        self.history = history


def mae_loss(pred, target, mask=None):
    """Mean |pred - target| over entries with mask == 1."""
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise T.ShapeError(f"mae_loss: prediction {pred.shape} vs target {target.shape}")
    if mask is None:
        mask = np.ones_like(target)
    mask = np.asarray(mask, dtype=np.float64)
    n = mask.sum()
    if n == 0:
        raise ValueError("mae_loss: mask selects no entries")
    return T.mul(T.tsum(T.mul(T.tabs(T.sub(pred, target)), mask)), 1.0 / n)


def metrics(pred, target, mask, stats):
    """De-normalize, then per-horizon and aggregate MAE / RMSE over observed entries.

    Arrays are (windows, T, N).
    """
    pred = invert_zscore(pred, stats)
    target = invert_zscore(target, stats)
    mask = np.ones_like(target) if mask is None else np.asarray(mask, dtype=np.float64)
    err = (pred - target) * mask
    counts = mask.sum(axis=(0, 2))
    safe = np.maximum(counts, 1)
    mae = np.abs(err).sum(axis=(0, 2)) / safe
    rmse = np.sqrt((err ** 2).sum(axis=(0, 2)) / safe)
    total = max(counts.sum(), 1)
    return MetricReport(mae, rmse, counts, float(np.abs(err).sum() / total),
                        float(math.sqrt((err ** 2).sum() / total)))


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data = p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def clip_grad_norm(params, max_norm):
    """Scale all gradients so their global L2 norm is at most ``max_norm``. Returns the pre-clip norm."""
    norm = math.sqrt(sum(float((p.grad ** 2).sum()) for p in params))
    if norm > max_norm:
        scale = max_norm / norm
        for p in params:
            p.grad = p.grad * scale
    return norm


def predict(model, data, anchors, batch_size=256):
    """Autoregressive (eps = 0) forecasts on the normalized scale: (len(anchors), T, N)."""
    out = []
    with T.no_grad():
        for i in range(0, len(anchors), batch_size):
            xc, xd, xw, _, _ = data.batch(anchors[i:i + batch_size])
            out.append(model(xc, xd, xw).data)
    if not out:
        return np.zeros((0, data.cfg.T, data.n_nodes))
    return np.concatenate(out)


def evaluate(model, data, split="test", stats=None, batch_size=256):
    """Per-horizon metrics of autoregressive forecasts over every window of ``split``.

    Returns (MetricReport, normalized predictions).
    """
    stats = data.stats if stats is None else stats
    anchors = data.splits[split] if isinstance(split, str) else np.asarray(split)
    started = time.perf_counter()
    pred = predict(model, data, anchors, batch_size)
    _, _, _, y, mask = data.batch(anchors)
    report = metrics(pred, y, mask, stats)
    report.wall_clock = time.perf_counter() - started
    return report, pred


def train(model, data, cfg, on_epoch=None):
    """Fit ``model`` on ``data.splits['train']`` and keep the best-on-validation parameters.

    Returns (model, history) where history is a list of per-epoch dicts.
    """
    params = model.parameters()
    history = []
    if cfg.epochs <= 0:
        return model, history
    opt = Adam(params, cfg.learning_rate)
    rng = np.random.default_rng(cfg.seed)
    train_anchors = data.splits["train"]
    val_anchors = data.splits["val"]
    best_state, best_score, stale, it = model.state(), math.inf, 0, 0
    for epoch in range(1, cfg.epochs + 1):
        started = time.perf_counter()
        order = train_anchors[rng.permutation(len(train_anchors))]
        losses = []
        for b in range(0, len(order), cfg.batch_size):
            xc, xd, xw, y, mask = data.batch(order[b:b + cfg.batch_size])
            eps = eps_at(cfg.tau, it)
            loss = mae_loss(model(xc, xd, xw, y, eps, int(rng.integers(2 ** 31))), y, mask)
            if not math.isfinite(loss.item()):
                model.load_state(best_state)
                raise TrainingDiverged(epoch, best_state, history)
            T.zero_grad(params)
            T.backward(loss)
            clip_grad_norm(params, cfg.clip_norm)
            opt.step()
            losses.append(loss.item())
            it += 1
        row = {"epoch": epoch, "train_loss": float(np.mean(losses)), "eps": eps_at(cfg.tau, it)}
        if len(val_anchors):
            report, _ = evaluate(model, data, val_anchors, batch_size=cfg.eval_batch_size)
            row["val_mae"], row["val_rmse"] = report.mae_all, report.rmse_all
            score = report.mae_all
        else:
            row["val_mae"] = row["val_rmse"] = float("nan")
            score = row["train_loss"]
        if not math.isfinite(score):
            model.load_state(best_state)
            raise TrainingDiverged(epoch, best_state, history)
        history.append(row)
        if on_epoch is not None:
            on_epoch(row, time.perf_counter() - started)
        if score < best_score:
            best_score, best_state, stale = score, model.state(), 0
        else:
            stale += 1
            if stale >= cfg.patience:
                log.info("early stop at epoch %d (no validation gain for %d epochs)", epoch, stale)
                break
    model.load_state(best_state)
    return model, history


# ------------------------------------------------------------------ CSV output

HISTORY_FIELDS = ("epoch", "train_loss", "val_mae", "val_rmse", "eps")


def write_history(history, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_FIELDS)
        for row in history:
            w.writerow([row["epoch"]] + [repr(float(row[k])) for k in HISTORY_FIELDS[1:]])


def read_history(path):
    with open(path, newline="") as fh:
        return [{k: (int(v) if k == "epoch" else float(v)) for k, v in row.items()}
                for row in csv.DictReader(fh)]


def write_metrics(report, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("horizon", "mae", "rmse"))
        for h in range(report.horizons):
            w.writerow((h + 1, repr(float(report.mae[h])), repr(float(report.rmse[h]))))


def read_metrics(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [c.strip() for c in header] != ["horizon", "mae", "rmse"]:
            raise ValueError(f"{path}: expected header horizon,mae,rmse, got {header}")
        rows = [(int(r[0]), float(r[1]), float(r[2])) for r in reader if r]
    return rows


def summary_line(report, **extra):
    fields = " ".join(f"{k}={v}" for k, v in extra.items())
    return f"{fields} mae={report.mae_all!r} rmse={report.rmse_all!r} horizons={report.horizons}".strip()
