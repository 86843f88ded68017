"""Planted-model benchmark: trained rankers against the true-score oracle.

Runs the leave-cell-lines-out harness on :func:`make_planted` data for one or
more loss kinds and reports per-fold held-out means next to the metrics an
oracle ranking by the planted scores would achieve on the same test cells.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, replace

from .config import RunConfig
from .data import assemble, make_lco_folds
from .experiment import oracle_report, run_fold, split_indices
from .synthetic import PlantedData, make_planted


@dataclass
class FoldComparison:
    fold: int
    loss_kind: str
    model: dict[str, float]
    oracle: dict[str, float]
    seconds: float


def desk_config(**overrides) -> RunConfig:
    """Small widths that train in seconds per fold."""
    base = RunConfig(gene_hidden=[64, 32], latent_dim=16, drug_hidden=32, drug_dim=16)
    return replace(base, **overrides)


def run_planted(
    cfg: RunConfig,
    loss_kinds=("list_all", "list_one"),
    data: PlantedData | None = None,
    n_cells: int = 100,
    n_drugs: int = 60,
    n_types: int = 4,
) -> list[FoldComparison]:
    """Per-fold model and oracle means for each loss kind, in that order."""
    if data is None:
        data = make_planted(n_cells=n_cells, n_drugs=n_drugs, n_types=n_types, seed=cfg.seed)
    corpus = assemble(data.responses, data.cells, data.drugs, cfg.percentile)
    folds = make_lco_folds(data.cells, cfg.n_folds, cfg.seed)
    pre = cfg.pretrain_config() if cfg.use_pretrained else None
    out = []
    for kind in loss_kinds:
        rank_cfg = replace(cfg.ranker_config(), loss=kind)
        for k in range(cfg.n_folds):
            t0 = time.perf_counter()
            res = run_fold(corpus, folds, k, pre, rank_cfg, tuple(cfg.ks))
            secs = time.perf_counter() - t0
            _, test_idx = split_indices(corpus, folds, k)
            orc = oracle_report(corpus, data.true_scores, test_idx, k, tuple(cfg.ks))
            out.append(FoldComparison(k, kind, res.report.means, orc.means, secs))
    return out
