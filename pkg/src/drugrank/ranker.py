"""Bilinear drug-ranking model: cell encoder, drug encoder, ``u^T W v`` scorer.

One optimizer step consumes one cell line's full observed drug list, so the
objective is exactly the per-cell listwise loss summed over cells.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericError, ShapeError, TrainingDivergence
from .losses import LOSS_KINDS, list_loss, top_one_target
from .nn import MLP, AdamState, ParamStore, adam_update_, fan_limit
from .pretrain import encoder_activations

log = logging.getLogger(__name__)


W_INITS = ("zero", "uniform")


@dataclass
class RankerConfig:
    loss: str = "list_all"
    epochs: int = 300
    lr: float = 1e-3
    tau: float = 0.5
    gene_hidden: tuple[int, ...] = (4096, 1024)
    latent_dim: int = 128
    drug_hidden: int = 128
    drug_dim: int = 100
    seed: int = 0
    w_init: str = "zero"  # zero | uniform

    def __post_init__(self):
        if self.loss not in LOSS_KINDS:
            raise DomainError(f"unknown loss kind {self.loss!r}")
        if self.w_init not in W_INITS:
            raise DomainError(f"unknown W init {self.w_init!r}")


def score(u, v, W) -> float:
    """Bilinear score ``u^T W v``."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2 or u.shape != (W.shape[0],) or v.shape != (W.shape[1],):
        raise ShapeError(f"score needs u[{W.shape[0]}], v[{W.shape[1]}] for W{W.shape}; got {u.shape}, {v.shape}")
    return float(u @ W @ v)


def descending_order(scores, drug_idx=None) -> np.ndarray:
    """Positions sorted by score descending, ties by ascending drug index."""
    scores = np.asarray(scores, dtype=np.float64)
    keys = np.arange(scores.size) if drug_idx is None else np.asarray(drug_idx)
    return np.lexsort((keys, -scores))


@dataclass
class ScoreVector:
    drug_idx: np.ndarray
    scores: np.ndarray
    order: np.ndarray = field(init=False)

    def __post_init__(self):
        self.order = descending_order(self.scores, self.drug_idx)

    @property
    def ranked_drugs(self) -> np.ndarray:
        return self.drug_idx[self.order]


class RankModel:
    """All learnable parameters in one flat store: ``enc.*``, ``drug.*``, ``W``.

    The ``enc`` prefix matches :class:`GeneAE`, so a pretrained encoder
    export loads straight into the cell encoder.
    """

    def __init__(self, n_genes: int, n_bits: int, gene_hidden=(4096, 1024), latent_dim=128, drug_hidden=128, drug_dim=100):
        if drug_dim < 1:
            raise DomainError("drug embedding dimension must be >= 1")
        gene_hidden = tuple(int(h) for h in gene_hidden)
        self.cell_dims = [n_genes, *gene_hidden, latent_dim]
        self.drug_dims = [n_bits, drug_hidden, drug_dim]
        shapes = (
            MLP.param_shapes("enc", self.cell_dims)
            + MLP.param_shapes("drug", self.drug_dims)
            + [("W", (latent_dim, drug_dim))]
        )
        self.store = ParamStore(shapes)
        self.cell_encoder = MLP(self.store, "enc", encoder_activations(len(gene_hidden)))
        self.drug_encoder = MLP(self.store, "drug", ["relu", "identity"])
        self.W = self.store.views["W"]

    @classmethod
    def from_config(cls, n_genes, n_bits, cfg: RankerConfig) -> "RankModel":
        return cls(n_genes, n_bits, cfg.gene_hidden, cfg.latent_dim, cfg.drug_hidden, cfg.drug_dim)

    def init(self, rng: np.random.Generator, w_init: str = "zero"):
        """Glorot-uniform encoders. ``W`` starts at zero by default, so every
        initial list is scored uniformly; ``"uniform"`` uses the fan limit."""
        self.cell_encoder.init_uniform(rng)
        self.drug_encoder.init_uniform(rng)
        if w_init == "uniform":
            lim = fan_limit(*self.W.shape)
            self.W[...] = rng.uniform(-lim, lim, size=self.W.shape)
        elif w_init == "zero":
            self.W[...] = 0.0
        else:
            raise DomainError(f"unknown W init {w_init!r}")
        return self

    def encode_cell(self, x) -> np.ndarray:
        return self.cell_encoder.forward(x)[0]

    def encode_drug(self, fingerprint) -> np.ndarray:
        return self.drug_encoder.forward(fingerprint)[0]

    def score_list(self, x, fingerprints, drug_idx) -> ScoreVector:
        """Scores for exactly the given drugs of one cell, with their ranking."""
        u = self.encode_cell(x)
        V = self.encode_drug(np.atleast_2d(fingerprints))
        return ScoreVector(np.asarray(drug_idx), V @ (self.W.T @ u))

    def score_matrix(self, X, F) -> np.ndarray:
        """cells x drugs score matrix for batches of profiles."""
        return self.encode_cell(np.atleast_2d(X)) @ self.W @ self.encode_drug(np.atleast_2d(F)).T

    def loss_and_grad(self, x, fingerprints, target, kind: str, tau: float = 0.5) -> float:
        """Per-cell listwise loss; its gradient is left in ``store.grad``."""
        u, cell_cache = self.cell_encoder.forward(x)
        V, drug_cache = self.drug_encoder.forward(fingerprints)
        wu = self.W.T @ u
        scores = V @ wu
        if not np.all(np.isfinite(scores)):
            raise NumericError("non-finite scores")
        loss, g = list_loss(kind, scores, target, tau)
        gwu = V.T @ g
        self.store.zero_grad()
        np.outer(u, gwu, out=self.store.grads["W"])
        self.drug_encoder.backward(drug_cache, np.outer(g, wu))
        self.cell_encoder.backward(cell_cache, self.W @ gwu)
        return loss

    def loss(self, x, fingerprints, target, kind: str, tau: float = 0.5) -> float:
        u = self.encode_cell(x)
        V = self.encode_drug(fingerprints)
        scores = V @ (self.W.T @ u)
        if not np.all(np.isfinite(scores)):
            raise NumericError("non-finite scores")
        return list_loss(kind, scores, target, tau)[0]

    def export(self) -> dict:
        return {
            "cell_encoder": self.cell_encoder.export(),
            "drug_encoder": self.drug_encoder.export(),
            "W": {"shape": list(self.W.shape), "values": self.W.ravel().tolist()},
        }

    @classmethod
    def from_export(cls, blob: dict) -> "RankModel":
        ce, de = blob["cell_encoder"], blob["drug_encoder"]
        n_genes = ce[0]["in"]
        hidden = [layer["out"] for layer in ce[:-1]]
        model = cls(n_genes, de[0]["in"], hidden, ce[-1]["out"], de[0]["out"], de[-1]["out"])
        model.cell_encoder.load(ce)
        model.drug_encoder.load(de)
        shape = tuple(blob["W"]["shape"])
        if shape != model.W.shape:
            raise ShapeError(f"checkpoint W{shape} does not match {model.W.shape}")
        model.W[...] = np.asarray(blob["W"]["values"], dtype=np.float64).reshape(shape)
        return model


def cell_targets(kind: str, aucs, labels) -> np.ndarray:
    if kind == "list_one":
        return top_one_target(aucs)
    return np.asarray(labels, dtype=np.float64)


def fit(model: RankModel, X, F, lists, cfg: RankerConfig, rng: np.random.Generator):
    """Optimize ``model`` in place.

    ``X`` holds standardized expression rows, ``F`` fingerprint rows, and
    ``lists`` is a sequence of ``(cell_row, drug_idx, target)`` for the
    training cells. Returns per-epoch mean per-cell losses; entry 0 is the
    loss at initialization, later entries average the losses seen while
    stepping through that epoch.
    """
    if not lists:
        raise DomainError("no training cells")
    state = AdamState.like(model.store.data, lr=cfg.lr)
    Fsub = [F[d] for _, d, _ in lists]
    try:
        init = np.mean([model.loss(X[c], f, t, cfg.loss, cfg.tau) for (c, _, t), f in zip(lists, Fsub)])
    except NumericError:
        raise TrainingDivergence(0) from None
    losses = [float(init)]
    for epoch in range(1, cfg.epochs + 1):
        total = 0.0
        for j in rng.permutation(len(lists)):
            c, _, t = lists[j]
            try:
                total += model.loss_and_grad(X[c], Fsub[j], t, cfg.loss, cfg.tau)
            except NumericError:
                raise TrainingDivergence(epoch) from None
            adam_update_(model.store.data, model.store.grad, state)
        mean = total / len(lists)
        if not np.isfinite(mean):
            raise TrainingDivergence(epoch)
        losses.append(mean)
        if epoch % 50 == 0:
            log.debug("epoch %d loss %.6g", epoch, mean)
    return losses
