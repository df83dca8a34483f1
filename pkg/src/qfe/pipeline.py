"""Three-regime generalization report.

A fidelity regressor is trained on tiled Clifford-reducible circuits and
tested on (a) more tiled Clifford-reducible circuits, (b) tiled circuits
drawn from the full palette (unpaired T/TD), and (c) non-tiled full-palette
circuits. The gate-counting baseline is fitted on the same training set.
Every output is derived from ``master_seed`` and contains no timestamps, so
two runs of one config write byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, fields

import numpy as np

from qfe.baseline import fit_gate_count_regressor
from qfe.dataset import DatasetConfig, build_dataset, splitmix64, write_dataset
from qfe.errors import ConfigError
from qfe.evaluation import export_heatmap, kendall_tau, threshold_score_curve, write_score_csv
from qfe.lattice import gate_count_features
from qfe.nn import SgdConfig, build_network, train_sgd

log = logging.getLogger(__name__)

REGIMES = ("tiled-clifford-reducible", "tiled-full", "untiled-full")


@dataclass
class ReportConfig:
    rows: int = 3
    cols: int = 3
    depth: int = 12
    n_train: int = 2000
    n_test: int = 500
    two_qubit_fraction: float = 0.3
    pair_rate: float = 0.15
    noise: dict | None = None
    preset: str = "cnn3d"
    filters: int = 50
    hidden: int = 500
    narrow: int = 50
    init: str = "glorot"
    activation: str = "linear"
    lr: float = 0.01
    momentum: float = 0.9
    batch_size: int = 32
    epochs: int = 100
    dtype: str = "float32"
    thresholds: list | None = None
    bins: int = 20
    master_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.noise is None:
            self.noise = {"kind": "sim"}
        if self.n_train < 2 or self.n_test < 2:
            raise ConfigError("n_train and n_test must be at least 2")
        if self.preset != "cnn3d":
            raise ConfigError("the report trains the cnn3d preset")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")
        SgdConfig(self.lr, self.momentum, True, self.batch_size, self.epochs, 0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("workers")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ReportConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown report config keys: {sorted(unknown)}")
        return cls(**d)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def sub_seed(self, k: int) -> int:
        return splitmix64((self.master_seed * 8 + k) & ((1 << 64) - 1))

    def dataset_configs(self) -> dict[str, DatasetConfig]:
        common = dict(rows=self.rows, cols=self.cols, depth=self.depth, two_qubit_fraction=self.two_qubit_fraction,
                      pair_rate=self.pair_rate, noise=dict(self.noise), workers=self.workers)
        cr = dict(common, family="clifford-reducible", palette="clifford", tiled=True, labeler="tiled-product")
        return {
            "train": DatasetConfig(count=self.n_train, master_seed=self.sub_seed(0), **cr),
            REGIMES[0]: DatasetConfig(count=self.n_test, master_seed=self.sub_seed(1), **cr),
            REGIMES[1]: DatasetConfig(count=self.n_test, master_seed=self.sub_seed(2), family="random",
                                      palette="full", tiled=True, labeler="tiled-product", **common),
            REGIMES[2]: DatasetConfig(count=self.n_test, master_seed=self.sub_seed(3), family="random",
                                      palette="full", tiled=False, labeler="exact-density", **common),
        }

    def network_spec_kwargs(self) -> dict:
        return dict(input_shape=(self.depth, self.rows, self.cols, 15), filters=self.filters, hidden=self.hidden,
                    narrow=self.narrow)


def _with_digest(path, digest: str) -> None:
    """Prefix a written text file with a ``# config_digest`` comment line."""
    with open(path) as fh:
        body = fh.read()
    with open(path, "w") as fh:
        fh.write(f"# config_digest: {digest}\n{body}")


def default_thresholds(labels) -> np.ndarray:
    lo = float(np.floor(np.min(labels) * 100) / 100)
    return np.round(np.arange(lo, 1.0 + 1e-9, 0.01), 10)


def evaluate_predictions(preds, trues, thresholds=None, bins: int = 20, out_prefix=None, digest=None) -> dict:
    """Kendall tau plus score-curve and heatmap CSVs (when ``out_prefix`` is given)."""
    preds = np.asarray(preds, dtype=float)
    trues = np.asarray(trues, dtype=float)
    thresholds = default_thresholds(trues) if thresholds is None else np.asarray(thresholds, dtype=float)
    points = threshold_score_curve(preds, trues, thresholds)
    result = {
        "n": int(preds.size),
        "kendall_tau": kendall_tau(preds, trues),
        "mse": float(np.mean((preds - trues) ** 2)),
        "mean_score": float(np.mean([p.score for p in points if p.defined])) if any(p.defined for p in points) else None,
    }
    if out_prefix is not None:
        write_score_csv(points, f"{out_prefix}_scores.csv")
        export_heatmap(preds, trues, bins=bins, path=f"{out_prefix}_heatmap.csv")
        if digest:
            _with_digest(f"{out_prefix}_scores.csv", digest)
            _with_digest(f"{out_prefix}_heatmap.csv", digest)
    return result


def run_report(cfg: ReportConfig, out_dir, save_datasets: bool = True) -> dict:
    """Build the four datasets, train both regressors, and write the report files."""
    os.makedirs(out_dir, exist_ok=True)
    digest = cfg.digest()
    datasets = {}
    for name, dcfg in cfg.dataset_configs().items():
        log.info("building %s (%d records)", name, dcfg.count)
        datasets[name] = build_dataset(dcfg)
        if save_datasets:
            write_dataset(datasets[name], os.path.join(out_dir, f"data_{name}.jsonl"))

    dtype = np.dtype(cfg.dtype)
    train = datasets["train"]
    x_train, y_train = train.tensors(dtype), train.labels()
    net = build_network(
        "cnn3d", seed=cfg.sub_seed(4), dtype=dtype, init=cfg.init,
        conv_activation=cfg.activation, dense_activation=cfg.activation,
        **cfg.network_spec_kwargs(),
    )
    sgd = SgdConfig(cfg.lr, cfg.momentum, True, cfg.batch_size, cfg.epochs, cfg.sub_seed(5))
    net.calibrate_output(x_train, y_train)
    first = datasets[REGIMES[0]]
    history = train_sgd(net, x_train, y_train, sgd, first.tensors(dtype), first.labels())
    net.save(os.path.join(out_dir, "cnn3d.npz"))

    baseline = fit_gate_count_regressor([gate_count_features(r.circuit) for r in train.records], y_train)
    baseline.save(os.path.join(out_dir, "baseline.json"))

    summary = {"config": cfg.to_dict(), "config_digest": digest, "param_count": net.param_count(),
               "train_mse": history.train_mse, "val_mse": history.val_mse, "regimes": {}}
    rows = []
    for name in REGIMES:
        ds = datasets[name]
        y = ds.labels()
        nn_pred = net.predict(ds.tensors(dtype)).astype(float)
        bl_pred = baseline.predict([gate_count_features(r.circuit) for r in ds.records])
        thresholds = cfg.thresholds
        entry = {
            "nn": evaluate_predictions(nn_pred, y, thresholds, cfg.bins, os.path.join(out_dir, f"{name}_nn"), digest),
            "baseline": evaluate_predictions(bl_pred, y, thresholds, cfg.bins,
                                             os.path.join(out_dir, f"{name}_baseline"), digest),
        }
        summary["regimes"][name] = entry
        rows.append((name, entry["nn"]["kendall_tau"], entry["baseline"]["kendall_tau"]))
        _write_predictions(os.path.join(out_dir, f"{name}_predictions.csv"), ds, nn_pred, bl_pred, digest)

    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=1)
    with open(os.path.join(out_dir, "summary.txt"), "w") as fh:
        fh.write(f"# config_digest: {digest}\n")
        fh.write(f"{'regime':<26}{'nn_tau':>10}{'baseline_tau':>14}\n")
        for name, a, b in rows:
            fh.write(f"{name:<26}{a:>10.4f}{b:>14.4f}\n")
    return summary


def _write_predictions(path, ds, nn_pred, bl_pred, digest) -> None:
    with open(path, "w") as fh:
        fh.write(f"# config_digest: {digest}\nindex,label,nn,baseline\n")
        for r, a, b in zip(ds.records, nn_pred, bl_pred):
            fh.write(f"{r.index},{r.label!r},{float(a)!r},{float(b)!r}\n")
