"""Run configuration: JSON file + command-line overrides, validated."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .losses import LOSS_KINDS
from .metrics import DEFAULT_KS
from .pretrain import PretrainConfig
from .ranker import W_INITS, RankerConfig


@dataclass
class RunConfig:
    responses: str | None = None
    expression: str | None = None
    fingerprints: str | None = None
    checkpoint: str | None = None  # defaults to <output_dir>/encoder.json
    output_dir: str = "runs/default"
    synthetic: list[int] | None = None  # [n_cells, n_drugs, n_types]
    loss_kind: str = "list_all"
    percentile: float = 5.0
    n_folds: int = 5
    pretrain_epochs: int = 100
    rank_epochs: int = 300
    batch_size: int = 32
    lr: float = 0.001
    tau: float = 0.5
    gene_hidden: list[int] = field(default_factory=lambda: [4096, 1024])
    latent_dim: int = 128
    drug_hidden: int = 128
    drug_dim: int = 100
    w_init: str = "zero"
    use_pretrained: bool = True
    seed: int = 0
    ks: list[int] = field(default_factory=lambda: list(DEFAULT_KS))
    jobs: int = 1
    analysis_fold: int = 0
    cell_clusters: int = 20
    drug_clusters: int = 10

    @property
    def encoder_path(self) -> Path:
        return Path(self.checkpoint) if self.checkpoint else Path(self.output_dir) / "encoder.json"

    def pretrain_config(self) -> PretrainConfig:
        return PretrainConfig(
            epochs=self.pretrain_epochs,
            batch_size=self.batch_size,
            lr=self.lr,
            seed=self.seed,
            hidden=tuple(self.gene_hidden),
            latent_dim=self.latent_dim,
        )

    def ranker_config(self) -> RankerConfig:
        return RankerConfig(
            loss=self.loss_kind,
            epochs=self.rank_epochs,
            lr=self.lr,
            tau=self.tau,
            gene_hidden=tuple(self.gene_hidden),
            latent_dim=self.latent_dim,
            drug_hidden=self.drug_hidden,
            drug_dim=self.drug_dim,
            seed=self.seed,
            w_init=self.w_init,
        )

    def to_json(self) -> dict:
        return asdict(self)


_POSITIVE_INT = ("n_folds", "batch_size", "latent_dim", "drug_hidden", "drug_dim", "jobs", "cell_clusters", "drug_clusters")
_NONNEG_INT = ("pretrain_epochs", "rank_epochs", "analysis_fold")


def validate(cfg: RunConfig) -> RunConfig:
    if not 0 < cfg.percentile < 100:
        raise ConfigError("percentile must be in (0,100)")
    if cfg.loss_kind not in LOSS_KINDS:
        raise ConfigError(f"loss_kind must be one of {', '.join(LOSS_KINDS)}")
    if not cfg.tau > 0:
        raise ConfigError("tau must be > 0")
    if not cfg.lr >= 0:
        raise ConfigError("lr must be >= 0")
    for name in _POSITIVE_INT:
        v = getattr(cfg, name)
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            raise ConfigError(f"{name} must be a positive integer")
    for name in _NONNEG_INT:
        v = getattr(cfg, name)
        if not isinstance(v, int) or isinstance(v, bool) or v < 0:
            raise ConfigError(f"{name} must be a non-negative integer")
    if cfg.n_folds < 2:
        raise ConfigError("n_folds must be >= 2")
    if cfg.analysis_fold >= cfg.n_folds:
        raise ConfigError("analysis_fold must be < n_folds")
    if not cfg.ks or any(not isinstance(k, int) or k < 1 for k in cfg.ks):
        raise ConfigError("ks must be a non-empty list of positive integers")
    if not cfg.gene_hidden or any(not isinstance(h, int) or h < 1 for h in cfg.gene_hidden):
        raise ConfigError("gene_hidden must be a non-empty list of positive integers")
    if not isinstance(cfg.seed, int):
        raise ConfigError("seed must be an integer")
    if cfg.w_init not in W_INITS:
        raise ConfigError(f"w_init must be one of {', '.join(W_INITS)}")
    if cfg.synthetic is not None:
        syn = cfg.synthetic
        if len(syn) != 3 or any(not isinstance(v, int) or v < 1 for v in syn):
            raise ConfigError("synthetic must be three positive integers: n_cells n_drugs n_types")
        if syn[2] > syn[0]:
            raise ConfigError("synthetic n_types must not exceed n_cells")
    return cfg


_FLOATS = ("percentile", "lr", "tau")


def parse_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the JSON file at ``path``, then non-None ``overrides``."""
    values: dict = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        text = p.read_text(encoding="utf-8").strip()
        if text:
            try:
                loaded = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file {p} is not valid JSON: {exc}") from None
            if not isinstance(loaded, dict):
                raise ConfigError("config file must hold a JSON object")
            values.update(loaded)
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = v
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    for name in _FLOATS:
        if name in values and isinstance(values[name], int) and not isinstance(values[name], bool):
            values[name] = float(values[name])
    return validate(RunConfig(**values))
