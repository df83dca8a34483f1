"""Gate-counting baseline: a log-linear fit on per-site and per-coupler gate counts."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from qfe.errors import ParameterError

LABEL_FLOOR = 1e-12
RIDGE_LAMBDA = 1e-8


class RankDeficientWarning(UserWarning):
    """The design matrix was singular; the ridge fallback was used."""


@dataclass
class GateCountRegressor:
    """``log F ~ intercept + coef . features``; predictions clamped to (0, 1]."""

    coef: np.ndarray
    intercept: float
    ridge: bool = False

    @property
    def n_features(self) -> int:
        return self.coef.size

    def predict_log(self, features) -> np.ndarray:
        f = np.atleast_2d(np.asarray(features, dtype=float))
        if f.shape[1] != self.coef.size:
            raise ParameterError(f"expected {self.coef.size} features, got {f.shape[1]}")
        return f @ self.coef + self.intercept

    def predict(self, features) -> np.ndarray:
        out = np.exp(self.predict_log(features))
        return np.clip(out, np.finfo(float).tiny, 1.0)

    def to_dict(self) -> dict:
        return {"kind": "gate-count", "coef": self.coef.tolist(), "intercept": self.intercept, "ridge": self.ridge}

    @classmethod
    def from_dict(cls, d: dict) -> "GateCountRegressor":
        return cls(np.asarray(d["coef"], dtype=float), float(d["intercept"]), bool(d.get("ridge", False)))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)

    @classmethod
    def load(cls, path) -> "GateCountRegressor":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def fit_gate_count_regressor(features, labels) -> GateCountRegressor:
    """Least squares of ``log(max(label, 1e-12))`` on the features plus an intercept.

    When the design matrix (with intercept column) is rank deficient, a ridge
    solve with ``lambda = 1e-8`` on the feature coefficients is used instead
    and a :class:`RankDeficientWarning` is emitted.
    """
    f = np.atleast_2d(np.asarray(features, dtype=float))
    y = np.asarray(labels, dtype=float).ravel()
    if f.shape[0] != y.size:
        raise ParameterError(f"{f.shape[0]} feature rows but {y.size} labels")
    if y.size == 0:
        raise ParameterError("cannot fit on an empty dataset")
    if np.any((y < 0) | (y > 1)) or not np.all(np.isfinite(y)):
        raise ParameterError("labels must be fidelities in [0, 1]")
    target = np.log(np.maximum(y, LABEL_FLOOR))
    a = np.hstack([np.ones((f.shape[0], 1)), f])
    beta, _, rank, _ = np.linalg.lstsq(a, target, rcond=None)
    ridge = bool(rank < a.shape[1])
    if ridge:
        warnings.warn(
            f"design matrix has rank {rank} < {a.shape[1]}; using ridge fallback (lambda={RIDGE_LAMBDA})",
            RankDeficientWarning,
            stacklevel=2,
        )
        penalty = RIDGE_LAMBDA * np.eye(a.shape[1])
        penalty[0, 0] = 0.0
        beta = np.linalg.solve(a.T @ a + penalty, a.T @ target)
    return GateCountRegressor(beta[1:].copy(), float(beta[0]), ridge)


def predict_gate_count(regressor: GateCountRegressor, features) -> np.ndarray:
    return regressor.predict(features)
