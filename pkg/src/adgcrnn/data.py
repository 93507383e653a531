"""Flow-series ingestion, Z-score normalization and three-resolution windowing."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import dataclass

import numpy as np

from .graph import StaticGraph, load_graph, normalize_adjacency

log = logging.getLogger(__name__)


class IngestionError(ValueError):
    pass


class DataParseError(ValueError):
    def __init__(self, path, row, message):
        super().__init__(f"{path}: row {row}: {message}")
        self.path = path
        self.row = row


@dataclass
class RawSeries:
    values: np.ndarray          # L x N, vehicles per bin
    missing_mask: np.ndarray    # L x N, 1 = observed
    step_minutes: int = 5

    @property
    def n_steps(self):
        return self.values.shape[0]

    @property
    def n_nodes(self):
        return self.values.shape[1]


@dataclass(frozen=True)
class NormStats:
    mean: float
    std: float


@dataclass(frozen=True)
class ResolutionConfig:
    p: int = 288
    S: int = 12
    T: int = 12

    def __post_init__(self):
        if min(self.p, self.S, self.T) <= 0:
            raise ValueError(f"resolution config must be positive: {self}")
        if self.S > self.p:
            # the day block ends at t + S - p, which must not pass the anchor
            raise ValueError(f"history S={self.S} exceeds steps per day p={self.p}")

    @property
    def week_stride(self):
        return 7 * self.p

    @property
    def min_length(self):
        return self.week_stride + self.T


@dataclass(frozen=True)
class WindowSample:
    x_current: np.ndarray
    x_day: np.ndarray
    x_week: np.ndarray
    y: np.ndarray
    t_anchor: int


def interpolate_missing(raw):
    """Linear interpolation per node; leading/trailing gaps take the nearest observation."""
    values = np.array(raw.values, dtype=np.float64)
    mask = np.asarray(raw.missing_mask, dtype=np.float64)
    idx = np.arange(raw.n_steps)
    for j in range(raw.n_nodes):
        obs = mask[:, j] > 0
        if not obs.any():
            raise IngestionError(f"node {j} has no observed values")
        if obs.all():
            continue
        values[~obs, j] = np.interp(idx[~obs], idx[obs], values[obs, j])
    return RawSeries(values, mask.copy(), raw.step_minutes)


def fit_zscore(train_values, mask=None):
    """Global mean / population std over observed training entries."""
    x = np.asarray(train_values, dtype=np.float64)
    if mask is not None:
        x = x[np.asarray(mask) > 0]
    x = x.ravel()
    if x.size == 0:
        raise ValueError("cannot fit Z-score statistics on an empty array")
    std = float(x.std())
    if not std > 0:
        raise ValueError("cannot Z-score a constant series (std = 0)")
    return NormStats(float(x.mean()), std)


def apply_zscore(x, stats):
    return (np.asarray(x, dtype=np.float64) - stats.mean) / stats.std


def invert_zscore(x, stats):
    return np.asarray(x, dtype=np.float64) * stats.std + stats.mean


def window_anchors(n_steps, cfg):
    """Valid anchor times t: full week lag behind, full horizon ahead."""
    lo, hi = cfg.week_stride - 1, n_steps - cfg.T - 1
    if hi < lo:
        return np.zeros(0, dtype=np.int64)
    return np.arange(lo, hi + 1, dtype=np.int64)


def gather_windows(values, anchors, cfg):
    """Vectorized window assembly: returns (x_current, x_day, x_week, y), each (B, S|T, N)."""
    values = np.asarray(values)
    t = np.asarray(anchors, dtype=np.int64)[:, None]
    s = np.arange(cfg.S)[None, :]
    tau = np.arange(cfg.T)[None, :]
    x_current = values[t - cfg.S + 1 + s]
    x_day = values[t + 1 + s - cfg.p]
    x_week = values[t + 1 + s - cfg.week_stride]
    y = values[t + 1 + tau]
    return x_current, x_day, x_week, y


def build_windows(raw, cfg):
    values = raw.values if isinstance(raw, RawSeries) else np.asarray(raw)
    anchors = window_anchors(values.shape[0], cfg)
    if anchors.size == 0:
        log.warning("series of length %d is shorter than the %d steps a window needs; no windows",
                    values.shape[0], cfg.min_length)
        return []
    xc, xd, xw, y = gather_windows(values, anchors, cfg)
    return [WindowSample(xc[i], xd[i], xw[i], y[i], int(t)) for i, t in enumerate(anchors)]


def split_sizes(n):
    if n < 5:
        raise ValueError(f"need at least 5 samples to split 6:2:2, got {n}")
    n_train, n_val = math.floor(0.6 * n), math.floor(0.2 * n)
    return n_train, n_val, n - n_train - n_val


def split_622(samples):
    """Contiguous chronological split; flooring remainder goes to test."""
    n_train, n_val, _ = split_sizes(len(samples))
    return samples[:n_train], samples[n_train:n_train + n_val], samples[n_train + n_val:]


def second_graph(graph):
    """The fixed alternate coupling graph used by regime-switching synthesis."""
    perm = np.random.default_rng(0).permutation(graph.n_nodes)
    A = graph.adjacency[np.ix_(perm, perm)]
    return normalize_adjacency(A)


def synth_generate(graph, L, seed, regime_switch=False, p=288, alpha=0.5, noise=0.05,
                   level=10.0, amplitude=3.0):
    """Seasonal flow with graph-diffusion coupling.

    X[t+1] = alpha * G(t) X[t] + (1 - alpha) * seasonal(t+1) + noise, where G(t)
    is the normalized adjacency, or with ``regime_switch`` alternates every p/2
    steps between it and a fixed relabelled copy.
    """
    rng = np.random.default_rng(seed)
    N = graph.n_nodes
    offset = level * (1.0 + 0.5 * rng.random(N))
    amp = amplitude * (0.5 + rng.random(N))
    phase = 2.0 * np.pi * rng.random(N)
    eps = rng.standard_normal((L, N)) * noise

    def seasonal(t):
        return offset + amp * np.sin(2.0 * np.pi * (t % p) / p + phase)

    graphs = (graph.normalized, second_graph(graph) if regime_switch else graph.normalized)
    half = max(p // 2, 1)
    X = np.empty((L, N))
    X[0] = seasonal(0)
    for t in range(L - 1):
        G = graphs[(t // half) % 2]
        X[t + 1] = alpha * (G @ X[t]) + (1.0 - alpha) * seasonal(t + 1) + eps[t + 1]
    return RawSeries(X, np.ones((L, N)))


def _is_number(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


def _read_csv_matrix(path):
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                vals = [float(c) if c.strip() else math.nan for c in row]
            except ValueError:
                if lineno == 1 and not rows:
                    continue  # header
                bad = next(i for i, c in enumerate(row) if c.strip() and not _is_number(c))
                raise DataParseError(path, lineno, f"non-numeric value {row[bad]!r} in column {bad + 1}") from None
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise DataParseError(path, lineno, f"expected {width} columns, got {len(vals)}")
            rows.append(vals)
    if not rows:
        raise DataParseError(path, 0, "no data rows")
    return np.array(rows)


def load_pems(values_path, cfg=None):
    """Read an L x N flow matrix: CSV, ``.npy``, or ``.npz`` with key ``data`` (L x N [x C]; channel 0 = flow)."""
    ext = os.path.splitext(values_path)[1].lower()
    if ext == ".npz":
        with np.load(values_path) as z:
            arr = np.asarray(z["data"], dtype=np.float64)
    elif ext == ".npy":
        arr = np.load(values_path).astype(np.float64)
    else:
        arr = _read_csv_matrix(values_path)
    if arr.ndim == 3:
        arr = arr[:, :, 0]
    if arr.ndim != 2:
        raise DataParseError(values_path, 0, f"expected a 2-D matrix, got shape {arr.shape}")
    mask = np.isfinite(arr).astype(np.float64)
    return RawSeries(np.where(mask > 0, arr, np.nan), mask)


# ------------------------------------------------------------------ bundles

@dataclass
class PreparedData:
    """A normalized series plus the anchor split and train-only statistics."""

    values: np.ndarray      # normalized, L x N
    mask: np.ndarray
    stats: NormStats
    cfg: ResolutionConfig
    graph: StaticGraph
    splits: dict            # name -> anchor array
    meta: dict

    @property
    def n_nodes(self):
        return self.values.shape[1]

    def batch(self, anchors):
        xc, xd, xw, y = gather_windows(self.values, anchors, self.cfg)
        t = np.asarray(anchors, dtype=np.int64)[:, None] + 1 + np.arange(self.cfg.T)[None, :]
        return xc, xd, xw, y, self.mask[t]


def split_anchors(n_steps, cfg):
    anchors = window_anchors(n_steps, cfg)
    if anchors.size < 5:
        return {"train": anchors, "val": anchors[:0], "test": anchors[:0]}
    tr, va, te = split_622(anchors)
    return {"train": tr, "val": va, "test": te}


def train_stats(raw, cfg, splits):
    """Fit on every time step any training window touches (and nothing later)."""
    tr = splits["train"]
    end = int(tr[-1]) + cfg.T + 1 if tr.size else raw.n_steps
    return fit_zscore(raw.values[:end], raw.missing_mask[:end])


def prepare(raw, graph, cfg, stats=None, meta=None):
    splits = split_anchors(raw.n_steps, cfg)
    if stats is None:
        stats = train_stats(raw, cfg, splits)
    return PreparedData(apply_zscore(raw.values, stats), np.asarray(raw.missing_mask, dtype=np.float64),
                        stats, cfg, graph, splits, dict(meta or {}))


def _dump_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_bundle(out_dir, raw, graph, cfg, meta=None):
    """Write a cleaned series + graph + train-only stats + split manifest. Returns the stats."""
    os.makedirs(out_dir, exist_ok=True)
    splits = split_anchors(raw.n_steps, cfg)
    n_windows = sum(int(v.size) for v in splits.values())
    stats = train_stats(raw, cfg, splits) if n_windows else fit_zscore(raw.values, raw.missing_mask)
    np.save(os.path.join(out_dir, "series.npy"), np.ascontiguousarray(raw.values, dtype="<f8"))
    np.save(os.path.join(out_dir, "mask.npy"), np.ascontiguousarray(raw.missing_mask, dtype="<f8"))
    np.save(os.path.join(out_dir, "adjacency.npy"), np.ascontiguousarray(graph.adjacency, dtype="<f8"))
    _dump_json({"mean": stats.mean, "std": stats.std}, os.path.join(out_dir, "stats.json"))
    manifest = {
        "n_nodes": raw.n_nodes,
        "n_steps": raw.n_steps,
        "step_minutes": raw.step_minutes,
        "steps_per_day": cfg.p,
        "history": cfg.S,
        "horizon": cfg.T,
        "n_windows": n_windows,
        "splits": {k: ([int(v[0]), int(v[-1]) + 1] if v.size else []) for k, v in splits.items()},
        "split_sizes": {k: int(v.size) for k, v in splits.items()},
    }
    manifest.update(meta or {})
    _dump_json(manifest, os.path.join(out_dir, "manifest.json"))
    return stats


def load_bundle(bundle_dir, cfg=None):
    with open(os.path.join(bundle_dir, "manifest.json")) as fh:
        manifest = json.load(fh)
    with open(os.path.join(bundle_dir, "stats.json")) as fh:
        s = json.load(fh)
    if cfg is None:
        cfg = ResolutionConfig(manifest["steps_per_day"], manifest["history"], manifest["horizon"])
    values = np.load(os.path.join(bundle_dir, "series.npy"))
    mask = np.load(os.path.join(bundle_dir, "mask.npy"))
    graph = StaticGraph.from_adjacency(np.load(os.path.join(bundle_dir, "adjacency.npy")))
    return prepare(RawSeries(values, mask), graph, cfg, NormStats(s["mean"], s["std"]), manifest)


def ingest(values_path, graph_path, cfg):
    raw = load_pems(values_path, cfg)
    graph = load_graph(graph_path, raw.n_nodes)
    return interpolate_missing(raw), graph
