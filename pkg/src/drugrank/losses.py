"""Listwise objectives over one cell line's drug list.

Both return ``(loss, grad)`` where ``grad`` is the derivative of the loss with
respect to the raw scores.
"""
import numpy as np

from .errors import DomainError, ShapeError
from .nn import cross_entropy, softmax

LOSS_KINDS = ("list_one", "list_all")


def top_one_target(aucs) -> np.ndarray:
    """Ground-truth top-one distribution: softmax of negated AUCs.

    Lower AUC means more sensitive, so it gets more mass.
    """
    return softmax(-np.asarray(aucs, dtype=np.float64), 1.0)


def _check_lengths(scores, other, what):
    s = np.asarray(scores, dtype=np.float64)
    o = np.asarray(other, dtype=np.float64)
    if s.shape != o.shape or s.ndim != 1:
        raise ShapeError(f"scores {s.shape} and {what} {o.shape} must be equal-length vectors")
    return s, o


def listone_loss(scores, target):
    """ListNet top-one cross-entropy. ``target`` must sum to one."""
    s, q = _check_lengths(scores, target, "target")
    p = softmax(s, 1.0)
    return cross_entropy(q, p), p - q


def listall_loss(scores, labels, tau: float = 0.5):
    """Cross-entropy between raw binary labels and a temperature softmax.

    Labels are deliberately not normalized, so a cell with more sensitive
    drugs contributes proportionally more loss. The gradient is
    ``(L * s - labels) / tau`` with ``L = sum(labels)``.
    """
    s, lab = _check_lengths(scores, labels, "labels")
    if np.any((lab != 0.0) & (lab != 1.0)):
        raise DomainError("labels must be binary")
    n_pos = lab.sum()
    if n_pos == 0:
        raise DomainError("list_all loss needs at least one sensitive drug")
    p = softmax(s, tau)
    return cross_entropy(lab, p), (n_pos * p - lab) / tau


def list_loss(kind: str, scores, target, tau: float = 0.5):
    if kind == "list_one":
        return listone_loss(scores, target)
    if kind == "list_all":
        return listall_loss(scores, target, tau)
    raise DomainError(f"unknown loss kind {kind!r}; expected one of {LOSS_KINDS}")
