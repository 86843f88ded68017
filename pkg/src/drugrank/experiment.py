"""Leave-cell-lines-out harness: per-fold pretraining, ranking, evaluation.

Every fold-level step sees only that fold's training cells; test cells are
touched only by :func:`evaluate_fold`.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .data import Corpus, FoldAssignment, Standardizer
from .errors import ConfigError
from .metrics import DEFAULT_KS, MetricReport, aggregate, cell_metrics
from .pretrain import PretrainConfig, pretrain
from .ranker import RankerConfig, RankModel, cell_targets, fit

log = logging.getLogger(__name__)


def fold_seed(seed: int, fold: int, stream: int = 0) -> int:
    """Independent, reproducible seed per (run seed, fold, purpose)."""
    return int(np.random.SeedSequence([seed, fold, stream]).generate_state(1)[0])


def split_indices(corpus: Corpus, folds: FoldAssignment, fold: int):
    train = corpus.cell_index(folds.train_cells(fold))
    test = corpus.cell_index(folds.test_cells(fold))
    return np.sort(train), np.sort(test)


@dataclass
class PretrainedEncoder:
    layers: list[dict]
    standardizer: Standardizer
    losses: list[float]

    def to_blob(self) -> dict:
        return {
            "layers": self.layers,
            "gene_mean": self.standardizer.mean.tolist(),
            "gene_std": self.standardizer.std.tolist(),
        }

    @classmethod
    def from_blob(cls, blob: dict) -> "PretrainedEncoder":
        st = Standardizer(np.asarray(blob["gene_mean"]), np.asarray(blob["gene_std"]))
        return cls(blob["layers"], st, [])


def pretrain_fold(corpus: Corpus, train_idx, cfg: PretrainConfig) -> PretrainedEncoder:
    st = Standardizer.fit(corpus.expression[train_idx])
    model, losses = pretrain(st.transform(corpus.expression[train_idx]), cfg)
    return PretrainedEncoder(model.export_encoder(), st, losses)


@dataclass
class TrainedModel:
    model: RankModel
    standardizer: Standardizer
    losses: list[float]
    fold: int

    def to_blob(self) -> dict:
        blob = self.model.export()
        blob["gene_mean"] = self.standardizer.mean.tolist()
        blob["gene_std"] = self.standardizer.std.tolist()
        return blob

    @classmethod
    def from_blob(cls, blob: dict, fold: int) -> "TrainedModel":
        st = Standardizer(np.asarray(blob["gene_mean"]), np.asarray(blob["gene_std"]))
        return cls(RankModel.from_export(blob), st, [], fold)


def training_lists(corpus: Corpus, cell_rows, kind: str):
    lab = corpus.labeled
    lists = []
    for c in cell_rows:
        drugs, aucs = corpus.table.cell_list(int(c))
        if drugs.size == 0:
            continue
        lists.append((int(c), drugs, cell_targets(kind, aucs, lab.cell_labels(int(c)))))
    return lists


def train_fold(corpus: Corpus, train_idx, encoder: PretrainedEncoder | None, cfg: RankerConfig, fold: int = 0) -> TrainedModel:
    """Train one fold; the cell encoder starts from ``encoder`` when given."""
    rng = np.random.default_rng(fold_seed(cfg.seed, fold, 1))
    model = RankModel.from_config(corpus.expression.shape[1], corpus.fingerprints.shape[1], cfg).init(rng, cfg.w_init)
    if encoder is not None:
        st = encoder.standardizer
        model.cell_encoder.load(encoder.layers)
    else:
        st = Standardizer.fit(corpus.expression[train_idx])
    X = st.transform(corpus.expression)
    lists = training_lists(corpus, train_idx, cfg.loss)
    losses = fit(model, X, corpus.fingerprints, lists, cfg, rng)
    return TrainedModel(model, st, losses, fold)


def evaluate_cells(corpus: Corpus, scores: np.ndarray, cell_rows, ks=DEFAULT_KS) -> list[dict]:
    """Metric rows for the given cells from a cells x drugs score matrix."""
    rows = []
    for c in cell_rows:
        drugs, aucs = corpus.table.cell_list(int(c))
        if drugs.size == 0:
            continue
        labels = corpus.labeled.cell_labels(int(c))
        m = cell_metrics(scores[c, drugs], aucs, labels, drugs, ks)
        rows.append({"cell_id": corpus.table.cells[c], **m})
    return rows


def evaluate_fold(corpus: Corpus, trained: TrainedModel, test_idx, ks=DEFAULT_KS):
    """Returns ``(report, rows)``; rows carry ``cell_id`` and ``fold``."""
    test_idx = np.asarray(test_idx, dtype=np.int64)
    X = trained.standardizer.transform(corpus.expression[test_idx])
    scores = np.full((corpus.expression.shape[0], corpus.fingerprints.shape[0]), np.nan)
    if test_idx.size:
        scores[test_idx] = trained.model.score_matrix(X, corpus.fingerprints)
    rows = evaluate_cells(corpus, scores, test_idx, ks)
    report = aggregate([_metrics_only(r) for r in rows], trained.fold, _names(ks))
    for r in rows:
        r["fold"] = trained.fold
    return report, rows


def _names(ks):
    return [f"AP@{k}" for k in ks] + [f"AH@{k}" for k in ks] + ["CI", "sCI"]


def _metrics_only(row):
    return {k: v for k, v in row.items() if k not in ("cell_id", "fold")}


def oracle_report(corpus: Corpus, true_scores: np.ndarray, test_idx, fold: int, ks=DEFAULT_KS) -> MetricReport:
    """Metrics obtained by ranking with known true scores."""
    rows = evaluate_cells(corpus, true_scores, test_idx, ks)
    return aggregate([_metrics_only(r) for r in rows], fold, _names(ks))


@dataclass
class FoldResult:
    fold: int
    report: MetricReport
    trained: TrainedModel
    encoder: PretrainedEncoder | None
    rows: list[dict]


def run_fold(corpus: Corpus, folds: FoldAssignment, fold: int, pre_cfg: PretrainConfig | None, rank_cfg: RankerConfig, ks=DEFAULT_KS) -> FoldResult:
    train_idx, test_idx = split_indices(corpus, folds, fold)
    if len(train_idx) == 0:
        raise ConfigError(f"fold {fold} has no training cells")
    encoder = None
    if pre_cfg is not None:
        encoder = pretrain_fold(corpus, train_idx, replace(pre_cfg, seed=fold_seed(pre_cfg.seed, fold, 0)))
    trained = train_fold(corpus, train_idx, encoder, rank_cfg, fold)
    report, rows = evaluate_fold(corpus, trained, test_idx, ks)
    return FoldResult(fold, report, trained, encoder, rows)
