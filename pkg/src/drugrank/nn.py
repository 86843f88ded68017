"""Dense layers with hand-written backward passes, softmax/cross-entropy, Adam.

Everything runs in float64. Parameters of a model live in one flat buffer
(:class:`ParamStore`) and each layer holds views into it, so an optimizer step
is a handful of vectorized operations regardless of how many tensors exist.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, NumericError, ShapeError

PROB_FLOOR = 1e-300
ACTIVATIONS = ("relu", "identity")


@dataclass
class DenseLayerParams:
    weights: np.ndarray  # [out, in]
    bias: np.ndarray  # [out]

    def __post_init__(self):
        if self.weights.ndim != 2 or self.bias.ndim != 1:
            raise ShapeError("weights must be 2-D and bias 1-D")
        if self.weights.shape[0] != self.bias.shape[0]:
            raise ShapeError(
                f"weights have {self.weights.shape[0]} rows but bias has {self.bias.shape[0]}"
            )
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise DomainError("layer parameters must be finite")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


def fan_limit(in_dim: int, out_dim: int) -> float:
    return float(np.sqrt(6.0 / (in_dim + out_dim)))


def _activate(z, activation):
    if activation == "relu":
        return np.maximum(z, 0.0)
    if activation == "identity":
        return z
    raise DomainError(f"unknown activation {activation!r}")


def dense_forward(x, params: DenseLayerParams, activation: str = "identity") -> np.ndarray:
    """``activation(W x + b)`` for a vector, or row-wise for a 2-D batch."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.in_dim:
        raise ShapeError(f"input has {x.shape[-1]} features, layer expects {params.in_dim}")
    return _activate(x @ params.weights.T + params.bias, activation)


def dense_backward(x, z, params: DenseLayerParams, activation: str, grad_out):
    """Backward pass of one layer over a batch.

    ``x`` is the batch input ``[n, in]``, ``z`` the pre-activation ``[n, out]``.
    Returns ``(dW, db, dx)``.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x, z, grad_out = np.atleast_2d(x), np.atleast_2d(z), np.atleast_2d(grad_out)
    if activation == "relu":
        dz = grad_out * (z > 0.0)
    else:
        dz = grad_out
    dx = dz @ params.weights
    return dz.T @ x, dz.sum(axis=0), dx[0] if single else dx


class ParamStore:
    """Named float64 tensors packed into one contiguous vector.

    ``data`` and ``grad`` are flat arrays; ``views[name]`` / ``grads[name]``
    are reshaped views into them.
    """

    def __init__(self, shapes: Sequence[tuple[str, tuple[int, ...]]]):
        self.shapes = list(shapes)
        sizes = [int(np.prod(s)) for _, s in self.shapes]
        total = int(sum(sizes))
        self.data = np.zeros(total)
        self.grad = np.zeros(total)
        self.views: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        offset = 0
        for (name, shape), size in zip(self.shapes, sizes):
            if name in self.views:
                raise ValueError(f"duplicate parameter name {name!r}")
            self.views[name] = self.data[offset : offset + size].reshape(shape)
            self.grads[name] = self.grad[offset : offset + size].reshape(shape)
            offset += size

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self):
        self.grad[...] = 0.0


class MLP:
    """A chain of dense layers whose parameters are views into a ParamStore."""

    def __init__(self, store: ParamStore, prefix: str, activations: Sequence[str]):
        self.store = store
        self.prefix = prefix
        self.activations = list(activations)
        self.layers = [
            DenseLayerParams(store.views[f"{prefix}.{i}.weights"], store.views[f"{prefix}.{i}.bias"])
            for i in range(len(self.activations))
        ]

    @staticmethod
    def param_shapes(prefix: str, dims: Sequence[int]):
        shapes = []
        for i, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
            shapes.append((f"{prefix}.{i}.weights", (d_out, d_in)))
            shapes.append((f"{prefix}.{i}.bias", (d_out,)))
        return shapes

    @property
    def dims(self) -> list[int]:
        return [self.layers[0].in_dim] + [layer.out_dim for layer in self.layers]

    def init_uniform(self, rng: np.random.Generator):
        for layer in self.layers:
            lim = fan_limit(layer.in_dim, layer.out_dim)
            layer.weights[...] = rng.uniform(-lim, lim, size=layer.weights.shape)
            layer.bias[...] = 0.0

    def forward(self, x):
        """Returns the output and a cache of (input, pre-activation) per layer."""
        h = np.asarray(x, dtype=np.float64)
        if h.shape[-1] != self.layers[0].in_dim:
            raise ShapeError(f"input has {h.shape[-1]} features, encoder expects {self.layers[0].in_dim}")
        cache = []
        for layer, act in zip(self.layers, self.activations):
            z = h @ layer.weights.T + layer.bias
            cache.append((h, z))
            h = _activate(z, act)
        return h, cache

    def backward(self, cache, grad_out, accumulate=True):
        """Writes parameter gradients into the store; returns grad w.r.t. input.

        Accepts 1-D (single example) or 2-D batches, matching the forward call.
        """
        g = np.asarray(grad_out, dtype=np.float64)
        single = g.ndim == 1
        for i in range(len(self.layers) - 1, -1, -1):
            h, z = cache[i]
            if single:
                h, z, g = h[None, :], z[None, :], g[None, :]
            dW, db, dh = dense_backward(h, z, self.layers[i], self.activations[i], g)
            gw = self.store.grads[f"{self.prefix}.{i}.weights"]
            gb = self.store.grads[f"{self.prefix}.{i}.bias"]
            if accumulate:
                gw += dW
                gb += db
            else:
                gw[...] = dW
                gb[...] = db
            g = dh[0] if single else dh
        return g

    def export(self) -> list[dict]:
        return [
            {
                "in": layer.in_dim,
                "out": layer.out_dim,
                "activation": act,
                "weights": layer.weights.ravel().tolist(),
                "bias": layer.bias.tolist(),
            }
            for layer, act in zip(self.layers, self.activations)
        ]

    def load(self, layers: Sequence[dict]):
        if len(layers) != len(self.layers):
            raise ShapeError(f"checkpoint has {len(layers)} layers, encoder has {len(self.layers)}")
        for layer, act, blob in zip(self.layers, self.activations, layers):
            if (blob["out"], blob["in"]) != layer.weights.shape or blob["activation"] != act:
                raise ShapeError(
                    f"checkpoint layer {blob['out']}x{blob['in']} ({blob['activation']}) does not "
                    f"match {layer.out_dim}x{layer.in_dim} ({act})"
                )
            layer.weights[...] = np.asarray(blob["weights"], dtype=np.float64).reshape(layer.weights.shape)
            layer.bias[...] = np.asarray(blob["bias"], dtype=np.float64)


def softmax(scores, tau: float = 1.0) -> np.ndarray:
    """Temperature softmax with max-subtraction.

    Entries that would underflow are raised to ``PROB_FLOOR`` so every
    probability is strictly positive.
    """
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1 or s.size == 0:
        raise DomainError("softmax needs a non-empty 1-D score vector")
    if not np.all(np.isfinite(s)):
        raise DomainError("softmax got a non-finite score")
    if not tau > 0:
        raise DomainError(f"temperature must be positive, got {tau}")
    z = s / tau
    e = np.exp(z - z.max())
    p = e / e.sum()
    np.maximum(p, PROB_FLOOR, out=p)
    return p


def cross_entropy(targets, probs) -> float:
    """``-sum(t * log p)``; terms with zero target contribute nothing."""
    t = np.asarray(targets, dtype=np.float64)
    p = np.asarray(probs, dtype=np.float64)
    if t.shape != p.shape:
        raise ShapeError(f"targets {t.shape} and probs {p.shape} differ")
    if np.any(t < 0):
        raise DomainError("cross-entropy targets must be non-negative")
    mask = t > 0
    return float(-np.sum(t[mask] * np.log(np.maximum(p[mask], PROB_FLOOR))))


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def like(cls, params, lr=1e-3, **kw) -> "AdamState":
        p = np.asarray(params, dtype=np.float64)
        return cls(np.zeros_like(p), np.zeros_like(p), 0, lr, **kw)


def adam_update_(params: np.ndarray, grads: np.ndarray, state: AdamState) -> None:
    """In-place Adam step on ``params`` and ``state`` (bias-corrected moments)."""
    if params.shape != grads.shape or params.shape != state.first_moment.shape:
        raise ShapeError(
            f"params {params.shape}, grads {grads.shape}, moments {state.first_moment.shape} disagree"
        )
    state.step_count += 1
    t = state.step_count
    m, v = state.first_moment, state.second_moment
    tmp = np.empty_like(params)
    m *= state.beta1
    np.multiply(grads, 1.0 - state.beta1, out=tmp)
    m += tmp
    v *= state.beta2
    np.multiply(grads, grads, out=tmp)
    tmp *= 1.0 - state.beta2
    v += tmp
    # sqrt(v_hat) + eps, then m_hat / that
    np.sqrt(v, out=tmp)
    tmp *= 1.0 / np.sqrt(1.0 - state.beta2**t)
    tmp += state.epsilon
    np.divide(m, tmp, out=tmp)
    tmp *= state.lr / (1.0 - state.beta1**t)
    params -= tmp


def adam_step(params, grads, state: AdamState):
    """Functional Adam step: returns new ``(params, state)``, inputs untouched."""
    p = np.array(params, dtype=np.float64, copy=True)
    g = np.asarray(grads, dtype=np.float64)
    new_state = AdamState(
        state.first_moment.copy(),
        state.second_moment.copy(),
        state.step_count,
        state.lr,
        state.beta1,
        state.beta2,
        state.epsilon,
    )
    adam_update_(p, g, new_state)
    return p, new_state


def finite_diff_grad(f: Callable[[np.ndarray], float], x, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    if not h > 0:
        raise DomainError("step h must be positive")
    x = np.array(x, dtype=np.float64, copy=True)
    flat = x.reshape(-1)
    grad = np.empty(flat.size)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError(f"non-finite function value perturbing coordinate {i}")
        grad[i] = (fp - fm) / (2.0 * h)
    return grad.reshape(x.shape)


def relative_error(a, b) -> float:
    """Norm-wise relative error, ``|a-b| / max(|a|, |b|)`` (0 when both vanish)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(b))
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b) / denom)
