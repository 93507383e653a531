"""Command-line entry point: ingest | synth | train | eval | predict | report.

Exit codes: 0 success, 1 compute failure, 2 input or validation failure.
Environment: ADGCRNN_OUT_DIR overrides the output directory, ADGCRNN_THREADS
caps BLAS threads.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import shutil
import sys

import numpy as np

from . import data as D
from . import plotting
from .config import ConfigError, RunConfig
from .graph import (GraphParseError, GraphValidationError, load_graph, path_graph, ring_graph,
                    write_edge_list)
from .seq2seq import ADGCRNN, CheckpointError, load_checkpoint, read_checkpoint, save_checkpoint
from .tensor import ShapeError, no_grad
from .training import (TrainingDiverged, evaluate, read_metrics, summary_line, train,
                       write_history, write_metrics)

log = logging.getLogger("adgcrnn")

CHECKPOINT = "checkpoint.adgc"
VARIANT_ORDER = {"s": 0, "sm": 1, "smd": 2, "full": 3}


class InputError(Exception):
    pass


INPUT_ERRORS = (InputError, ConfigError, D.DataParseError, D.IngestionError, GraphParseError,
                GraphValidationError, CheckpointError, FileNotFoundError, ShapeError)


def _config(args):
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig.defaults()
    return cfg.override(seed=getattr(args, "seed", None), variant=getattr(args, "variant", None))


def _out_dir(args, cfg=None):
    out = getattr(args, "out", None) or os.environ.get("ADGCRNN_OUT_DIR") or (cfg.out_dir if cfg else "runs")
    os.makedirs(out, exist_ok=True)
    return out


def _write_text(path, text):
    with open(path, "w") as fh:
        fh.write(text)


# ------------------------------------------------------------------ commands

def cmd_ingest(args):
    cfg = _config(args)
    res = cfg.resolution()
    raw, graph = D.ingest(args.values, args.graph, res)
    out = _out_dir(args, cfg)
    D.write_bundle(out, raw, graph, res, {"source": os.path.basename(args.values),
                                          "dynamic_structure": False})
    shutil.copyfile(args.graph, os.path.join(out, "edges.csv"))
    missing = int((raw.missing_mask == 0).sum())
    print(f"{raw.n_nodes} nodes, {raw.n_steps} steps, {missing} missing values interpolated -> {out}")
    return 0


def _synth_graph(cfg):
    if cfg.graph == "path":
        return path_graph(cfg.n_nodes)
    if cfg.graph == "ring":
        return ring_graph(cfg.n_nodes)
    return load_graph(cfg.graph, cfg.n_nodes)


def cmd_synth(args):
    cfg = _config(args)
    res = cfg.resolution()
    graph = _synth_graph(cfg)
    length = cfg.length or 6 * res.week_stride
    if length < res.min_length:
        log.warning("length %d is below the %d steps one window needs; the window manifest will be empty",
                    length, res.min_length)
    raw = D.synth_generate(graph, length, cfg.seed, cfg.regime_switch, res.p, cfg.alpha, cfg.noise,
                           cfg.level, cfg.amplitude)
    out = _out_dir(args, cfg)
    D.write_bundle(out, raw, graph, res, {"source": "synthetic", "seed": cfg.seed,
                                          "dynamic_structure": bool(cfg.regime_switch)})
    write_edge_list(graph, os.path.join(out, "edges.csv"))
    print(f"{graph.n_nodes} nodes, {length} steps, regime_switch={cfg.regime_switch} -> {out}")
    return 0


def _bundle_dir(args, cfg=None):
    bundle = getattr(args, "bundle", None) or (cfg.bundle if cfg else "")
    if not bundle:
        raise InputError("no dataset bundle given (set bundle = ... in the config or pass --bundle)")
    if not os.path.isfile(os.path.join(bundle, "manifest.json")):
        raise InputError(f"{bundle}: not a dataset bundle (manifest.json missing)")
    return bundle


def cmd_train(args):
    cfg = _config(args)
    bundle = _bundle_dir(args, cfg)
    data = D.load_bundle(bundle, cfg.resolution())
    if data.meta["steps_per_day"] != cfg.steps_per_day:
        raise InputError(f"steps_per_day: config has {cfg.steps_per_day}, bundle has {data.meta['steps_per_day']}")
    if len(data.splits["train"]) == 0:
        raise InputError(f"{bundle}: no training windows")
    out = _out_dir(args, cfg)
    model = ADGCRNN(cfg.model(data.n_nodes), data.graph.normalized, seed=cfg.seed)
    print(f"variant={cfg.variant} nodes={data.n_nodes} train_windows={len(data.splits['train'])}")

    def report(row, seconds):
        print(f"epoch {row['epoch']:4d} loss={row['train_loss']:.5f} val_mae={row['val_mae']:.5f} "
              f"eps={row['eps']:.4f} ({seconds:.1f}s)", flush=True)

    status = 0
    try:
        model, history = train(model, data, cfg.train(), report)
    except TrainingDiverged as exc:
        log.error("%s", exc)
        history, status = exc.history, 1
    meta = {
        "variant": cfg.variant,
        "bundle": os.path.abspath(bundle),
        "resolution": {"steps_per_day": cfg.steps_per_day, "history": cfg.history, "horizon": cfg.horizon},
        "stats": {"mean": data.stats.mean, "std": data.stats.std},
        "seed": cfg.seed,
        "epochs_run": len(history),
        "best_val_mae": min((r["val_mae"] for r in history), default=None),
    }
    save_checkpoint(os.path.join(out, CHECKPOINT), model, meta)
    write_history(history, os.path.join(out, "history.csv"))
    _write_text(os.path.join(out, "config.txt"), cfg.dump())
    if history:
        plotting.training_curve(history, os.path.join(out, "history.png"))
    print(f"variant={cfg.variant} epochs={len(history)} best_val_mae={meta['best_val_mae']} -> {out}")
    return status


def _load_for_inference(args):
    meta, _ = read_checkpoint(args.checkpoint)
    bundle = getattr(args, "bundle", None) or meta.get("bundle")
    bundle = _bundle_dir(argparse.Namespace(bundle=bundle))
    data = D.load_bundle(bundle)
    res = meta.get("resolution", {})
    checks = [("n_nodes", meta["model"]["n_nodes"], data.n_nodes),
              ("steps_per_day", res.get("steps_per_day"), data.meta["steps_per_day"]),
              ("history", meta["model"]["S"], data.cfg.S),
              ("horizon", meta["model"]["T"], data.cfg.T)]
    if "stats" in meta:
        checks += [("stats.mean", meta["stats"]["mean"], data.stats.mean),
                   ("stats.std", meta["stats"]["std"], data.stats.std)]
    for name, want, got in checks:
        if want is not None and want != got:
            raise InputError(f"checkpoint/bundle mismatch in {name}: checkpoint {want}, bundle {got}")
    model, meta = load_checkpoint(args.checkpoint, data.graph.normalized)
    return model, meta, data


def cmd_eval(args):
    model, meta, data = _load_for_inference(args)
    split = args.split
    anchors = data.splits[split]
    if len(anchors) == 0:
        raise InputError(f"split {split!r} has no windows")
    report, pred = evaluate(model, data, split)
    out = _out_dir(args)
    variant = meta.get("variant", model.cfg.variant)
    base = os.path.join(out, f"eval_{split}")
    write_metrics(report, base + ".csv")
    line = summary_line(report, variant=variant, split=split, windows=len(anchors))
    _write_text(base + "_summary.txt", line + "\n")
    np.save(base + "_predictions.npy", np.ascontiguousarray(D.invert_zscore(pred, data.stats), dtype="<f8"))
    np.save(base + "_anchors.npy", np.asarray(anchors, dtype="<i8"))
    plotting.horizon_curves({variant: (report.mae, report.rmse)}, base + ".png")
    print(line)
    return 0


def cmd_predict(args):
    model, _, data = _load_for_inference(args)
    cfg = data.cfg
    t = args.anchor
    earliest = cfg.week_stride - 1
    if t < earliest:
        raise InputError(f"anchor {t} lacks history: needs t >= 7*p - 1 = {earliest}")
    if t >= data.values.shape[0]:
        raise InputError(f"anchor {t} is beyond the series end ({data.values.shape[0] - 1})")
    s = np.arange(cfg.S)
    v = data.values
    with no_grad():
        pred = model(v[t - cfg.S + 1 + s][None], v[t + 1 + s - cfg.p][None],
                     v[t + 1 + s - cfg.week_stride][None]).data[0]
    forecast = D.invert_zscore(pred, data.stats)
    out = _out_dir(args)
    path = os.path.join(out, f"forecast_t{t}.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"node_{j}" for j in range(forecast.shape[1])])
        for row in forecast:
            w.writerow([repr(float(x)) for x in row])
    print(f"forecast for t+1..t+{cfg.T} at t={t} -> {path}")
    return 0


def _summary_fields(csv_path):
    path = csv_path[:-4] + "_summary.txt" if csv_path.endswith(".csv") else csv_path + "_summary.txt"
    if not os.path.isfile(path):
        return {}
    with open(path) as fh:
        return dict(tok.split("=", 1) for tok in fh.read().split() if "=" in tok)


def cmd_report(args):
    runs = []
    for path in args.metrics:
        rows = read_metrics(path)
        fields = _summary_fields(path)
        label = fields.get("variant") or os.path.splitext(os.path.basename(path))[0]
        runs.append((label, path, rows))
    horizons = {len(r[2]) for r in runs}
    if len(horizons) != 1:
        raise InputError(f"incompatible horizons across inputs: {sorted(horizons)}")
    runs.sort(key=lambda r: (VARIANT_ORDER.get(r[0], len(VARIANT_ORDER)), r[0], r[1]))
    out = _out_dir(args)
    table = []
    for label, path, rows in runs:
        mae = float(np.mean([r[1] for r in rows]))
        rmse = math.sqrt(float(np.mean([r[2] ** 2 for r in rows])))
        table.append((label, mae, rmse, path))
    with open(os.path.join(out, "comparison.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("variant", "mae", "rmse"))
        for label, mae, rmse, _ in table:
            w.writerow((label, repr(mae), repr(rmse)))
    curves = {}
    for label, path, rows in runs:
        key = label if label not in curves else f"{label} ({os.path.basename(os.path.dirname(path)) or path})"
        curves[key] = ([r[1] for r in rows], [r[2] for r in rows])
    plotting.horizon_curves(curves, os.path.join(out, "comparison.png"))
    for label, mae, rmse, _ in table:
        print(f"{label:>6s}  MAE {mae:.4f}  RMSE {rmse:.4f}")
    return 0


# ------------------------------------------------------------------ argparse

def build_parser():
    p = argparse.ArgumentParser(prog="adgcrnn", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", help="key = value run configuration file")
        sp.add_argument("--out", help="output directory")

    sp = sub.add_parser("ingest", help="clean a flow matrix + edge list into a dataset bundle")
    sp.add_argument("values", help="L x N flow matrix (.csv, .npy, or .npz with key 'data')")
    sp.add_argument("graph", help="edge list with header from,to,cost")
    common(sp)
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("synth", help="generate a synthetic dataset bundle")
    common(sp)
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("train", help="train a model on a bundle")
    common(sp)
    sp.add_argument("--bundle")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--variant", choices=sorted(VARIANT_ORDER, key=VARIANT_ORDER.get))
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="per-horizon metrics of a checkpoint on one split")
    sp.add_argument("checkpoint")
    sp.add_argument("--split", default="test", choices=("train", "val", "test"))
    sp.add_argument("--bundle", help="override the bundle recorded in the checkpoint")
    common(sp, config=False)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("predict", help="forecast T steps after one anchor time")
    sp.add_argument("checkpoint")
    sp.add_argument("--anchor", type=int, required=True)
    sp.add_argument("--bundle", help="override the bundle recorded in the checkpoint")
    common(sp, config=False)
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("report", help="compare eval CSVs across runs / variants")
    sp.add_argument("metrics", nargs="+", help="eval_<split>.csv files")
    common(sp, config=False)
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    threads = os.environ.get("ADGCRNN_THREADS")
    try:
        if threads:
            from threadpoolctl import threadpool_limits
            with threadpool_limits(int(threads)):
                return args.func(args)
        return args.func(args)
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
