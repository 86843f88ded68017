"""Per-cell ranking metrics and their aggregation over test cells.

Conventions:

* the predicted ranking is score-descending with ties broken by drug index;
* AP@K is normalized by ``min(K, #positives)``, so AP@1 is a hit indicator;
* in CI, pairs with tied AUCs are not comparable and tied scores count 1/2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .ranker import descending_order

DEFAULT_KS = (1, 3, 5, 10, 20, 40, 60)


def hits_at_k(ranked_labels, k: int) -> int:
    """Number of sensitive drugs among the top ``k`` positions."""
    if k < 1:
        raise DomainError("K must be >= 1")
    return int(np.sum(np.asarray(ranked_labels)[:k]))


def ap_at_k(ranked_labels, k: int) -> float:
    """Average precision at ``k``; NaN when the list has no positives."""
    if k < 1:
        raise DomainError("K must be >= 1")
    rel = np.asarray(ranked_labels, dtype=np.float64)
    n_pos = rel.sum()
    if n_pos == 0:
        return math.nan
    top = rel[:k]
    prec = np.cumsum(top) / np.arange(1, top.size + 1)
    return float(np.sum(prec * top) / min(k, n_pos))


def _concordance(aucs, scores, mask=None) -> float:
    a = np.asarray(aucs, dtype=np.float64)
    s = np.asarray(scores, dtype=np.float64)
    if mask is not None:
        a, s = a[mask], s[mask]
    comparable = a[:, None] < a[None, :]  # i more sensitive than j
    n = comparable.sum()
    if n == 0:
        return math.nan
    ds = s[:, None] - s[None, :]
    good = np.sum(comparable & (ds > 0)) + 0.5 * np.sum(comparable & (ds == 0))
    return float(good / n)


def concordance_index(aucs, scores) -> float:
    """Fraction of strictly ordered AUC pairs whose scores agree (NaN if none)."""
    return _concordance(aucs, scores)


def sensitive_ci(aucs, scores, labels) -> float:
    """Concordance restricted to pairs of sensitive drugs."""
    return _concordance(aucs, scores, np.asarray(labels).astype(bool))


def metric_names(ks=DEFAULT_KS) -> list[str]:
    return [f"AP@{k}" for k in ks] + [f"AH@{k}" for k in ks] + ["CI", "sCI"]


def cell_metrics(scores, aucs, labels, drug_idx=None, ks=DEFAULT_KS) -> dict[str, float]:
    """All metrics for one cell line; undefined values are NaN."""
    order = descending_order(scores, drug_idx)
    ranked = np.asarray(labels)[order]
    out: dict[str, float] = {}
    for k in ks:
        out[f"AP@{k}"] = ap_at_k(ranked, k)
    for k in ks:
        out[f"AH@{k}"] = float(hits_at_k(ranked, k))
    out["CI"] = concordance_index(aucs, scores)
    out["sCI"] = sensitive_ci(aucs, scores, labels)
    return out


@dataclass
class MetricReport:
    """Means over non-skipped cells plus how many cells were skipped."""

    means: dict[str, float]
    skipped: dict[str, int]
    n_cells: int
    fold: int | None = None
    rows: list[dict] = field(default_factory=list, repr=False)

    def to_json(self) -> dict:
        return {
            "fold": self.fold,
            "n_cells": self.n_cells,
            "means": {k: _clean(v) for k, v in self.means.items()},
            "skipped": dict(self.skipped),
        }


def _clean(v):
    return None if v is None or (isinstance(v, float) and math.isnan(v)) else v


def aggregate(per_cell: list[dict[str, float]], fold: int | None = None, names=None) -> MetricReport:
    """Arithmetic mean of each metric over the cells where it is defined."""
    if names is None:
        names = list(per_cell[0]) if per_cell else metric_names()
    means, skipped = {}, {}
    for name in names:
        vals = [r[name] for r in per_cell if not math.isnan(r[name])]
        skipped[name] = len(per_cell) - len(vals)
        means[name] = math.fsum(vals) / len(vals) if vals else math.nan
    return MetricReport(means, skipped, len(per_cell), fold, list(per_cell))
