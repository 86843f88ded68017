"""Stacked autoencoder over gene expression (GeneE encoder + GeneD decoder).

The encoder half is exported and later finetuned inside the ranking model.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, TrainingDivergence
from .nn import MLP, AdamState, ParamStore, adam_update_

log = logging.getLogger(__name__)


@dataclass
class PretrainConfig:
    epochs: int = 100
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0
    hidden: tuple[int, ...] = (4096, 1024)
    latent_dim: int = 128


def encoder_activations(n_hidden: int) -> list[str]:
    return ["relu"] * n_hidden + ["identity"]


class GeneAE:
    """Encoder ``G -> hidden... -> latent`` mirrored by the decoder."""

    def __init__(self, n_genes: int, hidden=(4096, 1024), latent_dim: int = 128):
        hidden = tuple(int(h) for h in hidden)
        self.enc_dims = [n_genes, *hidden, latent_dim]
        self.dec_dims = self.enc_dims[::-1]
        self.store = ParamStore(MLP.param_shapes("enc", self.enc_dims) + MLP.param_shapes("dec", self.dec_dims))
        acts = encoder_activations(len(hidden))
        self.encoder = MLP(self.store, "enc", acts)
        self.decoder = MLP(self.store, "dec", acts)

    @property
    def n_genes(self) -> int:
        return self.enc_dims[0]

    def init(self, rng: np.random.Generator):
        self.encoder.init_uniform(rng)
        self.decoder.init_uniform(rng)
        return self

    def autoencode(self, x):
        """Returns ``(embedding, reconstruction)`` for one profile or a batch."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.n_genes:
            raise ShapeError(f"expression has {x.shape[-1]} genes, autoencoder expects {self.n_genes}")
        u, _ = self.encoder.forward(x)
        xr, _ = self.decoder.forward(u)
        return u, xr

    def reconstruction_loss(self, X) -> float:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        _, xr = self.autoencode(X)
        return reconstruction_error(X, xr)

    def loss_and_grad(self, X) -> float:
        """Loss on a batch; gradient w.r.t. all parameters left in ``store.grad``."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        u, enc_cache = self.encoder.forward(X)
        xr, dec_cache = self.decoder.forward(u)
        diff = xr - X
        loss = float(np.sum(diff * diff) / X.shape[0])
        self.store.zero_grad()
        du = self.decoder.backward(dec_cache, 2.0 * diff / X.shape[0])
        self.encoder.backward(enc_cache, du)
        return loss

    def export_encoder(self) -> list[dict]:
        return self.encoder.export()


def reconstruction_error(X, Xr) -> float:
    """Mean over cells of the squared Euclidean reconstruction error."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Xr = np.atleast_2d(np.asarray(Xr, dtype=np.float64))
    if X.shape != Xr.shape:
        raise ShapeError(f"inputs {X.shape} and reconstructions {Xr.shape} differ")
    if X.shape[0] == 0:
        raise ShapeError("empty batch")
    return float(np.sum((X - Xr) ** 2) / X.shape[0])


def pretrain(X_train, config: PretrainConfig, model: GeneAE | None = None):
    """Fit a GeneAE by minibatch Adam on the given (already standardized) profiles.

    Returns ``(model, losses)`` where ``losses[e]`` is the full-batch
    reconstruction loss after ``e`` epochs (``losses[0]`` is at init).
    """
    X = np.atleast_2d(np.asarray(X_train, dtype=np.float64))
    if X.shape[0] < 1:
        raise ShapeError("pretraining needs at least one cell")
    rng = np.random.default_rng(config.seed)
    if model is None:
        model = GeneAE(X.shape[1], config.hidden, config.latent_dim).init(rng)
    state = AdamState.like(model.store.data, lr=config.lr)
    batch = max(1, min(config.batch_size, X.shape[0]))
    losses = [model.reconstruction_loss(X)]
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(X.shape[0])
        for start in range(0, X.shape[0], batch):
            loss = model.loss_and_grad(X[order[start : start + batch]])
            if not np.isfinite(loss):
                raise TrainingDivergence(epoch, "pretraining")
            adam_update_(model.store.data, model.store.grad, state)
        full = model.reconstruction_loss(X)
        if not np.isfinite(full):
            raise TrainingDivergence(epoch, "pretraining")
        losses.append(full)
        log.debug("pretrain epoch %d loss %.6g", epoch, full)
    return model, losses
