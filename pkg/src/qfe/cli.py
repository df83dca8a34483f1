"""Command-line entry point: ``qfe generate|label|train|predict|evaluate|report``.

Config files are JSON objects whose keys are the long flag names with
dashes replaced by underscores. A flag given on the command line overrides
the same key from ``--config``, which in turn overrides the built-in default.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import zipfile

import numpy as np

from qfe.baseline import GateCountRegressor, fit_gate_count_regressor
from qfe.dataset import (
    DatasetConfig,
    build_dataset,
    label_dataset,
    read_dataset,
    split_dataset,
    write_dataset,
)
from qfe.errors import ConfigError, QfeError
from qfe.lattice import gate_count_features
from qfe.nn import Network, SgdConfig, build_network, train_sgd
from qfe.noise import StochasticModel, noise_digest, noise_from_dict
from qfe.pipeline import ReportConfig, evaluate_predictions, run_report

log = logging.getLogger("qfe")


def _grid(text: str) -> tuple[int, int]:
    try:
        r, c = text.lower().split("x")
        return int(r), int(c)
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like 3x3, got {text!r}") from None


def _floats(text: str) -> list[float]:
    """``a:b:step`` range or comma-separated list."""
    try:
        if ":" in text:
            a, b, step = (float(v) for v in text.split(":"))
            return [round(v, 10) for v in np.arange(a, b + step / 2, step)]
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad threshold list {text!r}") from None


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return data


def _merge(args, keys, base: dict) -> dict:
    out = dict(base)
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            out[k] = v
    return out


def _noise_arg(text: str | None, model: int | None) -> dict | None:
    """``sim``, ``stochastic`` (with ``--model``), or a path to a JSON noise config."""
    if text is None:
        return None
    if text == "sim":
        return {"kind": "sim"}
    if text == "stochastic":
        return {"kind": "stochastic", "model": model or 1}
    cfg = _load_config(text)
    noise_from_dict(cfg)
    return cfg


# generate ------------------------------------------------------------------

GEN_KEYS = ("family", "depth", "count", "palette", "two_qubit_fraction", "pair_rate", "tiled", "master_seed",
            "workers")


def cmd_generate(args) -> int:
    base = _load_config(args.config)
    merged = _merge(args, GEN_KEYS, base)
    if args.grid is not None:
        merged["rows"], merged["cols"] = args.grid
    if args.seed is not None:
        merged["master_seed"] = args.seed
    noise = _noise_arg(args.noise, args.model)
    if noise is not None:
        merged["noise"] = noise
    if args.labeler is not None:
        merged["labeler"] = args.labeler
    cfg = DatasetConfig.from_dict(merged)
    ds = build_dataset(cfg)
    write_dataset(ds, args.out)
    log.info("wrote %d records to %s (config %s)", len(ds.records), args.out, cfg.digest())
    return 0


# label ---------------------------------------------------------------------

def _default_labeler(noise: dict, tiled: bool) -> str:
    if isinstance(noise_from_dict(noise), StochasticModel):
        return "product-model"
    return "tiled-product" if tiled else "exact-density"


def cmd_label(args) -> int:
    ds = read_dataset(args.inp)
    noise = _noise_arg(args.noise, args.model) or ds.config.noise
    if noise is None:
        raise ConfigError("no noise model: pass --noise or use a dataset whose config carries one")
    labeler = args.labeler or _default_labeler(noise, ds.config.tiled)
    cfg = DatasetConfig.from_dict({**ds.config.to_dict(), "noise": noise, "labeler": labeler,
                                   **({"shots": args.shots} if args.shots else {})})
    out = label_dataset(ds, labeler, noise, cfg.shots, args.workers)
    write_dataset(out, args.out)
    log.info("labeled %d records with %s (noise %s)", len(out.records), labeler,
             noise_digest(noise_from_dict(noise)))
    return 0


# train ---------------------------------------------------------------------

TRAIN_KEYS = ("model", "epochs", "lr", "momentum", "batch_size", "seed", "val_count", "dtype")


def cmd_train(args) -> int:
    opts = _merge(args, TRAIN_KEYS, _load_config(args.config))
    model = opts.get("model", "lc2d-3x3")
    ds = read_dataset(args.data)
    val_count = int(opts.get("val_count", 0))
    train, val = split_dataset(ds, val_count, seed=int(opts.get("seed", 0))) if val_count else (ds, None)
    log_path = args.out + ".log.json"
    if model == "gate-count":
        reg = fit_gate_count_regressor([gate_count_features(r.circuit) for r in train.records], train.labels())
        reg.save(args.out)
        report = {"model": model, "dataset_config_digest": ds.config.digest(), "ridge": reg.ridge}
    else:
        dtype = np.dtype(opts.get("dtype", "float64"))
        shape = (ds.config.depth, ds.config.rows, ds.config.cols, ds.config.encoding_palette().n_channels)
        kwargs = {}
        if model == "cnn3d":
            kwargs["input_shape"] = shape
        elif model == "lc2d-3x3":
            if shape[0] != 1:
                raise ConfigError(f"lc2d-3x3 reads single-moment circuits, the dataset has depth {shape[0]}")
            kwargs.update(rows=shape[1], cols=shape[2], channels=shape[3])
        net = build_network(model, seed=int(opts.get("seed", 0)), dtype=dtype, **kwargs)
        sgd = SgdConfig(
            lr=float(opts.get("lr", 0.01)),
            momentum=float(opts.get("momentum", 0.9)),
            nesterov=True,
            batch_size=int(opts.get("batch_size", 32)),
            epochs=int(opts.get("epochs", 100)),
            seed=int(opts.get("seed", 0)),
        )
        xv = val.tensors(dtype) if val is not None else None
        yv = val.labels() if val is not None else None
        x_train, y_train = train.tensors(dtype), train.labels()
        scale, shift = net.calibrate_output(x_train, y_train)
        history = train_sgd(net, x_train, y_train, sgd, xv, yv)
        net.save(args.out)
        report = {"model": model, "dataset_config_digest": ds.config.digest(), "sgd": sgd.to_dict(),
                  "param_count": net.param_count(), "head_scale": scale, "bias_shift": shift, "train_mse": history.train_mse, "val_mse": history.val_mse}
    with open(log_path, "w") as fh:
        json.dump(report, fh, sort_keys=True, indent=1)
    log.info("wrote %s", args.out)
    return 0


# predict -------------------------------------------------------------------

def load_model(path):
    try:
        if path.endswith(".json"):
            return GateCountRegressor.load(path)
        return Network.load(path)
    except (KeyError, ValueError, zipfile.BadZipFile) as exc:
        raise ConfigError(f"cannot load checkpoint {path}: {exc}") from None


def cmd_predict(args) -> int:
    model = load_model(args.checkpoint)
    ds = read_dataset(args.data)
    if isinstance(model, GateCountRegressor):
        preds = model.predict([gate_count_features(r.circuit) for r in ds.records])
    else:
        preds = model.predict(ds.tensors(model.dtype))
    with open(args.out, "w") as fh:
        fh.write(f"# config_digest: {ds.config.digest()}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "prediction", "label"])
        for r, p in zip(ds.records, preds):
            w.writerow([r.index, repr(float(p)), "" if r.label is None else repr(r.label)])
    return 0


# evaluate ------------------------------------------------------------------

def read_predictions(path) -> tuple[np.ndarray, np.ndarray]:
    try:
        with open(path) as fh:
            rows = [line for line in fh if not line.startswith("#")]
    except OSError as exc:
        raise ConfigError(f"cannot read predictions {path}: {exc}") from None
    reader = csv.DictReader(rows)
    preds, labels = [], []
    for lineno, row in enumerate(reader, start=2):
        try:
            preds.append(float(row["prediction"]))
            labels.append(float(row["label"]))
        except (KeyError, TypeError, ValueError):
            raise ConfigError(f"{path}: row {lineno} needs numeric 'prediction' and 'label' columns") from None
    return np.array(preds), np.array(labels)


def cmd_evaluate(args) -> int:
    preds, labels = read_predictions(args.predictions)
    os.makedirs(args.out_dir, exist_ok=True)
    result = evaluate_predictions(preds, labels, args.thresholds, args.bins, os.path.join(args.out_dir, "eval"))
    with open(os.path.join(args.out_dir, "eval.json"), "w") as fh:
        json.dump(result, fh, sort_keys=True, indent=1)
    print(f"kendall_tau {result['kendall_tau']:.6f}  mse {result['mse']:.3e}")
    return 0


# report --------------------------------------------------------------------

REPORT_KEYS = ("n_train", "n_test", "depth", "epochs", "lr", "momentum", "batch_size", "filters", "hidden", "narrow",
               "master_seed", "workers", "dtype", "bins")


def cmd_report(args) -> int:
    merged = _merge(args, REPORT_KEYS, _load_config(args.config))
    if args.grid is not None:
        merged["rows"], merged["cols"] = args.grid
    if args.seed is not None:
        merged["master_seed"] = args.seed
    if args.thresholds is not None:
        merged["thresholds"] = args.thresholds
    cfg = ReportConfig.from_dict(merged)
    summary = run_report(cfg, args.out_dir)
    for name, entry in summary["regimes"].items():
        print(f"{name:<26} nn_tau {entry['nn']['kendall_tau']:.4f}  baseline_tau {entry['baseline']['kendall_tau']:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qfe", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate circuits (optionally labeled)")
    g.add_argument("--config")
    g.add_argument("--grid", type=_grid)
    g.add_argument("--depth", type=int)
    g.add_argument("--family", choices=("random", "clifford-reducible"))
    g.add_argument("--count", type=int)
    g.add_argument("--palette", choices=("clifford", "full", "clifford-reducible"))
    g.add_argument("--two-qubit-fraction", type=float)
    g.add_argument("--pair-rate", type=float)
    g.add_argument("--tiled", action="store_true", default=None)
    g.add_argument("--seed", type=int)
    g.add_argument("--noise")
    g.add_argument("--model", type=int, help="stochastic model number 1-4")
    g.add_argument("--labeler", choices=("product-model", "exact-density", "trajectory", "tiled-product"))
    g.add_argument("--workers", type=int)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    lb = sub.add_parser("label", help="attach fidelity labels to a dataset")
    lb.add_argument("--in", dest="inp", required=True)
    lb.add_argument("--out", required=True)
    lb.add_argument("--noise", help="sim, stochastic, or a JSON noise config path")
    lb.add_argument("--model", type=int)
    lb.add_argument("--labeler", choices=("product-model", "exact-density", "trajectory", "tiled-product"))
    lb.add_argument("--shots", type=int)
    lb.add_argument("--workers", type=int, default=1)
    lb.set_defaults(func=cmd_label)

    t = sub.add_parser("train", help="fit a network preset or the gate-count baseline")
    t.add_argument("--config")
    t.add_argument("--data", required=True)
    t.add_argument("--model", choices=("lc2d-3x3", "cnn3d", "gate-count"))
    t.add_argument("--epochs", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--momentum", type=float)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--val-count", type=int)
    t.add_argument("--dtype", choices=("float32", "float64"))
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    pr = sub.add_parser("predict", help="predict fidelities for a dataset")
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--data", required=True)
    pr.add_argument("--out", required=True)
    pr.set_defaults(func=cmd_predict)

    ev = sub.add_parser("evaluate", help="tau, score curve and heatmap from a predictions file")
    ev.add_argument("--predictions", required=True)
    ev.add_argument("--thresholds", type=_floats)
    ev.add_argument("--bins", type=int, default=20)
    ev.add_argument("--out-dir", required=True)
    ev.set_defaults(func=cmd_evaluate)

    rp = sub.add_parser("report", help="three-regime generalization comparison")
    rp.add_argument("--config")
    rp.add_argument("--grid", type=_grid)
    rp.add_argument("--depth", type=int)
    rp.add_argument("--n-train", type=int)
    rp.add_argument("--n-test", type=int)
    rp.add_argument("--epochs", type=int)
    rp.add_argument("--lr", type=float)
    rp.add_argument("--momentum", type=float)
    rp.add_argument("--batch-size", type=int)
    rp.add_argument("--filters", type=int)
    rp.add_argument("--hidden", type=int)
    rp.add_argument("--narrow", type=int)
    rp.add_argument("--dtype", choices=("float32", "float64"))
    rp.add_argument("--thresholds", type=_floats)
    rp.add_argument("--bins", type=int)
    rp.add_argument("--seed", type=int)
    rp.add_argument("--workers", type=int)
    rp.add_argument("--out-dir", required=True)
    rp.set_defaults(func=cmd_report)
    return p


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (QfeError, OSError) as exc:
        print(f"qfe {args.command}: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
