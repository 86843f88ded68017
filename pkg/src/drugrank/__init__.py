"""Listwise learning-to-rank for prioritizing drugs per cancer cell line.

A pretrained expression encoder and a fingerprint encoder map cells and
drugs into latent spaces; a bilinear form scores each (cell, drug) pair and
is trained with a list-level cross-entropy (``list_one`` or ``list_all``).
"""
from .config import RunConfig, parse_config
from .data import Corpus, assemble, label_sensitivity, make_lco_folds
from .losses import listall_loss, listone_loss
from .metrics import ap_at_k, cell_metrics, concordance_index, hits_at_k, sensitive_ci
from .pretrain import GeneAE, PretrainConfig, pretrain
from .ranker import RankerConfig, RankModel, fit, score

__all__ = [
    "Corpus", "GeneAE", "PretrainConfig", "RankModel", "RankerConfig", "RunConfig",
    "ap_at_k", "assemble", "cell_metrics", "concordance_index", "fit", "hits_at_k",
    "label_sensitivity", "listall_loss", "listone_loss", "make_lco_folds", "parse_config",
    "pretrain", "score", "sensitive_ci",
]
