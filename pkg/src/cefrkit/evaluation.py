"""Evaluation metrics and the multi-run protocol.

Predictions are scored against gold label *sets* (one or two adjacent levels):
a prediction matching either gold label counts as correct.  `resolve_gold`
turns each (prediction, gold set) pair into the single effective gold level
that makes the confusion matrix consistent with that rule.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np
from scipy import stats

from .core import NUM_LEVELS, Level

__all__ = [
    "EvalReport",
    "MultiRunSummary",
    "resolve_gold",
    "confusion_and_f1",
    "quadratic_weighted_kappa",
    "multi_run_summary",
    "pearson",
    "format_report",
]


def resolve_gold(pred: int, gold: Iterable[int]) -> int:
    """Effective gold level for one prediction.

    Returns the prediction itself when it is in the gold set, otherwise the
    gold level nearest to the prediction (ties toward the lower level).
    """
    golds = sorted(int(g) for g in gold)
    if not golds:
        raise ValueError("empty gold set")
    p = int(pred)
    if p in golds:
        return p
    return min(golds, key=lambda g: (abs(g - p), g))


@dataclass
class EvalReport:
    """Confusion matrix (rows: resolved gold, columns: predicted) and metrics."""

    confusion: np.ndarray
    per_level_f1: np.ndarray
    macro_f1: float
    weighted_kappa: float
    n: int

    def to_json(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "confusion": self.confusion.astype(int).tolist(),
            "per_level_f1": [float(x) for x in self.per_level_f1],
            "macro_f1": float(self.macro_f1),
            "weighted_kappa": float(self.weighted_kappa),
        }


def _resolved_confusion(
    preds: Sequence[int], golds: Sequence[Iterable[int]], num_levels: int
) -> np.ndarray:
    if len(preds) != len(golds):
        raise ValueError(f"length mismatch: {len(preds)} preds vs {len(golds)} golds")
    if len(preds) == 0:
        raise ValueError("need at least one prediction")
    confusion = np.zeros((num_levels, num_levels), dtype=np.int64)
    for pred, gold in zip(preds, golds):
        confusion[resolve_gold(pred, gold), int(pred)] += 1
    return confusion


def _f1_from_confusion(confusion: np.ndarray) -> np.ndarray:
    tp = np.diag(confusion).astype(np.float64)
    pred_totals = confusion.sum(axis=0).astype(np.float64)
    gold_totals = confusion.sum(axis=1).astype(np.float64)
    # precision/recall/F1 are 0 whenever their denominator is 0
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(pred_totals > 0, tp / pred_totals, 0.0)
        recall = np.where(gold_totals > 0, tp / gold_totals, 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2.0 * precision * recall / denom, 0.0)
    return f1


def confusion_and_f1(
    preds: Sequence[int],
    golds: Sequence[Iterable[int]],
    num_levels: int = NUM_LEVELS,
) -> EvalReport:
    """Resolved-gold confusion matrix, per-level F1, macro-F1 and kappa."""
    confusion = _resolved_confusion(preds, golds, num_levels)
    f1 = _f1_from_confusion(confusion)
    kappa = _kappa_from_confusion(confusion)
    return EvalReport(
        confusion=confusion,
        per_level_f1=f1,
        macro_f1=float(f1.mean()),
        weighted_kappa=kappa,
        n=int(confusion.sum()),
    )


def _kappa_from_confusion(confusion: np.ndarray) -> float:
    num_levels = confusion.shape[0]
    if num_levels < 2:
        raise ValueError("weighted kappa needs at least two levels")
    observed = confusion / confusion.sum()
    idx = np.arange(num_levels)
    weights = (idx[:, None] - idx[None, :]) ** 2 / (num_levels - 1) ** 2
    expected = np.outer(observed.sum(axis=1), observed.sum(axis=0))
    denom = float((weights * expected).sum())
    if denom == 0.0:
        # both marginals are a point mass on the same level
        if np.allclose(observed, expected):
            return 1.0
        raise ValueError("degenerate weighted-kappa denominator")
    return float(1.0 - (weights * observed).sum() / denom)


def quadratic_weighted_kappa(
    preds: Sequence[int],
    golds: Sequence[Iterable[int]],
    num_levels: int = NUM_LEVELS,
) -> float:
    """Quadratic weighted kappa over the resolved-gold confusion matrix."""
    return _kappa_from_confusion(_resolved_confusion(preds, golds, num_levels))


@dataclass
class MultiRunSummary:
    """Trimmed mean and 95% CI over repeated runs (best and worst dropped)."""

    raw_scores: list[float]
    retained: list[float]
    mean: float
    ci95: float

    def to_json(self) -> dict[str, Any]:
        return {
            "raw_scores": self.raw_scores,
            "retained": self.retained,
            "mean": self.mean,
            "ci95": self.ci95,
        }


def multi_run_summary(scores: Sequence[float]) -> MultiRunSummary:
    """Drop exactly one maximal and one minimal score, then mean +- t-based CI.

    With a single retained score the CI is NaN (no variance estimate).
    """
    raw = [float(s) for s in scores]
    if len(raw) < 3:
        raise ValueError(f"need at least 3 scores, got {len(raw)}")
    retained = sorted(raw)[1:-1]
    m = len(retained)
    mean = float(np.mean(retained))
    if m < 2:
        ci95 = float("nan")
    else:
        sd = float(np.std(retained, ddof=1))
        ci95 = float(stats.t.ppf(0.975, m - 1) * sd / np.sqrt(m))
    return MultiRunSummary(raw_scores=raw, retained=retained, mean=mean, ci95=ci95)


def pearson(a: Sequence[float], b: Sequence[float]) -> float:
    """Sample Pearson correlation; inputs must be non-constant, length >= 2."""
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("inputs must be equal-length 1-D sequences")
    if x.size < 2:
        raise ValueError("need at least two points")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = float(np.sqrt(np.dot(xc, xc)))
    sy = float(np.sqrt(np.dot(yc, yc)))
    if sx == 0.0 or sy == 0.0:
        raise ValueError("correlation undefined for constant input")
    return float(np.dot(xc, yc) / (sx * sy))


def format_report(report: EvalReport, kappa_ci: float | None = None) -> str:
    """Plain-text result table: per-level F1 (%), average, weighted kappa."""
    num_levels = report.confusion.shape[0]
    if num_levels == NUM_LEVELS:
        names = [lvl.name for lvl in Level]
    else:
        names = [f"L{i}" for i in range(num_levels)]
    header = "  ".join(f"{n:>6}" for n in names) + f"  {'Avg':>6}  {'Kappa':>13}"
    f1_cells = "  ".join(f"{100.0 * f:6.1f}" for f in report.per_level_f1)
    if kappa_ci is None:
        kappa_cell = f"{report.weighted_kappa:13.3f}"
    else:
        kappa_cell = f"{report.weighted_kappa:.3f} +- {kappa_ci:.3f}"
    return f"{header}\n{f1_cells}  {100.0 * report.macro_f1:6.1f}  {kappa_cell}"
