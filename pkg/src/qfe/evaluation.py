"""Rank correlation, threshold scores with Wilson intervals, and heatmaps."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from qfe.errors import ParameterError


def _merge_count(a: list) -> int:
    """Inversion count of ``a`` by bottom-up merge sort (``a`` is consumed)."""
    n = len(a)
    buf = [None] * n
    swaps = 0
    width = 1
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if a[j] < a[i]:
                    buf[k] = a[j]
                    swaps += mid - i
                    j += 1
                else:
                    buf[k] = a[i]
                    i += 1
                k += 1
            buf[k:k + mid - i] = a[i:mid]
            k += mid - i
            buf[k:k + hi - j] = a[j:hi]
        a, buf = buf, a
        width *= 2
    return swaps


def _tied_pairs(sorted_vals) -> int:
    total = 0
    run = 1
    for k in range(1, len(sorted_vals)):
        if sorted_vals[k] == sorted_vals[k - 1]:
            run += 1
        else:
            total += run * (run - 1) // 2
            run = 1
    return total + run * (run - 1) // 2


def kendall_tau(preds, trues, variant: str = "b") -> float:
    """Kendall tau (tie-corrected ``b`` by default, or ``a``) in O(n log n).

    Knight's method: sort by (pred, true), count ties, then count the
    inversions of the true column with a merge sort.
    """
    x = np.asarray(preds, dtype=float).ravel()
    y = np.asarray(trues, dtype=float).ravel()
    if x.size != y.size:
        raise ParameterError(f"length mismatch: {x.size} vs {y.size}")
    n = x.size
    if n < 2:
        raise ParameterError("kendall tau needs at least two points")
    if variant not in ("a", "b"):
        raise ParameterError(f"unknown tau variant {variant!r}")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise ParameterError("kendall tau is undefined for constant input")
    order = np.lexsort((y, x))
    xs, ys = x[order].tolist(), y[order].tolist()
    n0 = n * (n - 1) // 2
    n1 = _tied_pairs(xs)
    n3 = 0
    run = 1
    for k in range(1, n):
        if xs[k] == xs[k - 1] and ys[k] == ys[k - 1]:
            run += 1
        else:
            n3 += run * (run - 1) // 2
            run = 1
    n3 += run * (run - 1) // 2
    n2 = _tied_pairs(sorted(ys))
    swaps = _merge_count(ys)
    s = n0 - n1 - n2 + n3 - 2 * swaps
    if variant == "a":
        return s / n0
    return s / math.sqrt((n0 - n1) * (n0 - n2))


def kendall_tau_bruteforce(preds, trues, variant: str = "b") -> float:
    """O(n^2) pair counting; reference for :func:`kendall_tau`."""
    x = list(map(float, preds))
    y = list(map(float, trues))
    n = len(x)
    conc = disc = tx = ty = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = (x[i] > x[j]) - (x[i] < x[j])
            dy = (y[i] > y[j]) - (y[i] < y[j])
            if dx == 0 and dy == 0:
                continue
            if dx == 0:
                tx += 1
            elif dy == 0:
                ty += 1
            elif dx == dy:
                conc += 1
            else:
                disc += 1
    if variant == "a":
        return (conc - disc) / (n * (n - 1) / 2)
    return (conc - disc) / math.sqrt((conc + disc + tx) * (conc + disc + ty))


def wilson_interval(successes: int, n: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n < 1 or not 0 <= successes <= n or z <= 0:
        raise ParameterError(f"invalid Wilson arguments successes={successes}, n={n}, z={z}")
    p = successes / n
    z2 = z * z
    denom = 1 + z2 / n
    center = (p + z2 / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


@dataclass(frozen=True)
class ScorePoint:
    """One threshold of the (TPR + TNR) / 2 curve.

    A rate is ``None`` when its conditioning class is empty; ``score`` is then
    ``None`` too.
    """

    threshold: float
    n_pos: int
    n_neg: int
    tpr: float | None
    tnr: float | None
    tpr_ci: tuple[float, float] | None
    tnr_ci: tuple[float, float] | None

    @property
    def defined(self) -> bool:
        return self.tpr is not None and self.tnr is not None

    @property
    def score(self) -> float | None:
        return (self.tpr + self.tnr) / 2 if self.defined else None


def threshold_score_curve(preds, trues, thresholds, z: float = 1.96) -> list[ScorePoint]:
    """TPR(t) = P(pred >= t | true >= t), TNR(t) = P(pred < t | true < t)."""
    p = np.asarray(preds, dtype=float).ravel()
    t = np.asarray(trues, dtype=float).ravel()
    if p.size == 0:
        raise ParameterError("empty inputs")
    if p.size != t.size:
        raise ParameterError(f"length mismatch: {p.size} vs {t.size}")
    thresholds = np.asarray(thresholds, dtype=float)
    if np.any(np.diff(thresholds) < 0):
        raise ParameterError("thresholds must be sorted")
    out = []
    for th in thresholds:
        pos = t >= th
        n_pos = int(pos.sum())
        n_neg = p.size - n_pos
        tpr = tnr = tpr_ci = tnr_ci = None
        if n_pos:
            k = int((p[pos] >= th).sum())
            tpr, tpr_ci = k / n_pos, wilson_interval(k, n_pos, z)
        if n_neg:
            k = int((p[~pos] < th).sum())
            tnr, tnr_ci = k / n_neg, wilson_interval(k, n_neg, z)
        out.append(ScorePoint(float(th), n_pos, n_neg, tpr, tnr, tpr_ci, tnr_ci))
    return out


SCORE_COLUMNS = ("threshold", "tpr", "tpr_lo", "tpr_hi", "tnr", "tnr_lo", "tnr_hi", "score")


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def write_score_csv(points: list[ScorePoint], path) -> None:
    """Undefined rates are written as empty fields."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCORE_COLUMNS)
        for pt in points:
            tlo, thi = pt.tpr_ci or (None, None)
            nlo, nhi = pt.tnr_ci or (None, None)
            w.writerow([_fmt(pt.threshold), _fmt(pt.tpr), _fmt(tlo), _fmt(thi),
                        _fmt(pt.tnr), _fmt(nlo), _fmt(nhi), _fmt(pt.score)])


@dataclass(frozen=True)
class HeatmapGrid:
    """``mass[i, j]``: fraction of points with pred in bin i and true in bin j."""

    pred_edges: np.ndarray
    true_edges: np.ndarray
    mass: np.ndarray
    empty: bool = False


def export_heatmap(preds, trues, bins: int = 20, value_range=None, path=None) -> HeatmapGrid:
    """Normalized 2D histogram of (pred, true) on shared bin edges.

    ``value_range`` defaults to the joint min/max of both arrays. With
    ``path`` the grid is also written as CSV: a ``pred_edges`` row, a
    ``true_edges`` row, then one row of masses per prediction bin.
    """
    if bins < 1:
        raise ParameterError("bins must be >= 1")
    p = np.asarray(preds, dtype=float).ravel()
    t = np.asarray(trues, dtype=float).ravel()
    if p.size != t.size:
        raise ParameterError(f"length mismatch: {p.size} vs {t.size}")
    if p.size == 0:
        lo, hi = value_range if value_range is not None else (0.0, 1.0)
        edges = np.linspace(lo, hi, bins + 1)
        grid = HeatmapGrid(edges, edges.copy(), np.zeros((bins, bins)), empty=True)
    else:
        if value_range is None:
            lo, hi = float(min(p.min(), t.min())), float(max(p.max(), t.max()))
            if lo == hi:
                lo, hi = lo - 0.5, hi + 0.5
        else:
            lo, hi = value_range
        edges = np.linspace(lo, hi, bins + 1)
        counts, _, _ = np.histogram2d(p, t, bins=[edges, edges])
        total = counts.sum()
        grid = HeatmapGrid(edges, edges.copy(), counts / total if total else counts, empty=not total)
    if path is not None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["pred_edges"] + [repr(float(e)) for e in grid.pred_edges])
            w.writerow(["true_edges"] + [repr(float(e)) for e in grid.true_edges])
            for i, row in enumerate(grid.mass):
                w.writerow([f"pred_bin_{i}"] + [repr(float(v)) for v in row])
    return grid
