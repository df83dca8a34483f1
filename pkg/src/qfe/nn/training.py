"""Mini-batch SGD with Nesterov momentum, and finite-difference gradient checks."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from qfe.errors import ParameterError, TrainingError
from qfe.nn.network import Network

log = logging.getLogger(__name__)


@dataclass
class SgdConfig:
    lr: float = 0.01
    momentum: float = 0.9
    nesterov: bool = True
    batch_size: int = 32
    epochs: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.lr < 0:
            raise ParameterError("learning rate must be non-negative")
        if not 0.0 <= self.momentum < 1.0:
            raise ParameterError("momentum must lie in [0, 1)")
        if self.batch_size < 1 or self.epochs < 0:
            raise ParameterError("batch_size must be >= 1 and epochs >= 0")

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainingReport:
    train_mse: list = field(default_factory=list)
    val_mse: list = field(default_factory=list)


class NesterovSGD:
    """v <- mu v - lr grad(theta + mu v);  theta <- theta + v.

    The network's live parameters hold the look-ahead point ``theta + mu v``
    during each gradient evaluation; ``theta`` itself is kept separately and
    written back by :meth:`finish`. With ``nesterov=False`` the gradient is
    taken at ``theta`` (classical momentum).
    """

    def __init__(self, network: Network, cfg: SgdConfig):
        self.net = network
        self.cfg = cfg
        self.theta = [p.copy() for p in network.params]
        self.velocity = [np.zeros_like(p) for p in network.params]

    def prepare(self):
        mu = self.cfg.momentum if self.cfg.nesterov else 0.0
        for p, th, v in zip(self.net.params, self.theta, self.velocity):
            p[...] = th + mu * v

    def step(self):
        mu, lr = self.cfg.momentum, self.cfg.lr
        for g, th, v in zip(self.net.grads, self.theta, self.velocity):
            v *= mu
            v -= lr * g
            th += v

    def finish(self):
        for p, th in zip(self.net.params, self.theta):
            p[...] = th


def train_sgd(network: Network, x, y, cfg: SgdConfig, x_val=None, y_val=None) -> TrainingReport:
    """Minimize mean squared error; shuffling is drawn from ``cfg.seed``.

    ``train_mse`` records the mean batch loss of each epoch, ``val_mse`` the
    full validation loss after it.
    """
    x = np.asarray(x, dtype=network.dtype)
    y = np.asarray(y, dtype=network.dtype)
    if len(x) == 0 or len(x) != len(y):
        raise ParameterError("training set must be non-empty with matching labels")
    rng = np.random.default_rng(cfg.seed)
    opt = NesterovSGD(network, cfg)
    report = TrainingReport()
    n = len(x)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            opt.prepare()
            loss = network.loss_and_grad(x[idx], y[idx])
            if not math.isfinite(loss):
                opt.finish()
                raise TrainingError(f"non-finite loss {loss} at epoch {epoch}, batch starting {start}")
            opt.step()
            total += loss * len(idx)
        opt.finish()
        report.train_mse.append(total / n)
        if x_val is not None:
            report.val_mse.append(float(np.mean((network.predict(x_val) - np.asarray(y_val)) ** 2)))
        if epoch % 10 == 0 or epoch == cfg.epochs - 1:
            log.info("epoch %d train %.3e val %s", epoch, report.train_mse[-1],
                     f"{report.val_mse[-1]:.3e}" if report.val_mse else "-")
    return report


def gradient_check(network: Network, x, y, h: float = 1e-5, n_coords: int = 200, seed: int = 0,
                   floor: float = 1e-6) -> float:
    """Worst relative error between backprop and central differences.

    Coordinates are spread over every parameter array (at least 4 each,
    ``n_coords`` in total at minimum). The relative error is
    ``|a - n| / max(|a|, |n|, floor)``.
    """
    if network.dtype != np.float64:
        raise ParameterError("gradient checks need float64 parameters")
    if not 1e-7 <= h <= 1e-3:
        raise ParameterError("h must lie in [1e-7, 1e-3]")
    x = np.asarray(x, dtype=np.float64)
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    rng = np.random.default_rng(seed)
    network.loss_and_grad(x, y)
    analytic = [g.copy() for g in network.grads]
    params = network.params
    per = max(4, math.ceil(n_coords / len(params)))
    worst = 0.0
    for p, g in zip(params, analytic):
        flat_p = p.reshape(-1)
        picks = rng.choice(flat_p.size, size=min(per, flat_p.size), replace=False)
        for i in picks:
            old = flat_p[i]
            flat_p[i] = old + h
            lp = network.loss(x, y)
            flat_p[i] = old - h
            lm = network.loss(x, y)
            flat_p[i] = old
            num = (lp - lm) / (2 * h)
            a = g.reshape(-1)[i]
            worst = max(worst, abs(a - num) / max(abs(a), abs(num), floor))
    return worst
