"""Embedding-quality analyses: similarity matrices, correlations, kNN, clustering.

Undefined entries (too few shared drugs, no sensitive cells, zero variance)
are NaN and counted as skipped by callers; nothing is imputed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import DomainError, ShapeError


@dataclass
class SimilarityMatrix:
    values: np.ndarray
    kind: str  # rbf_latent | spearman_response | jaccard_sensitivity | cluster_overlap
    labels: list[str] | None = None


@dataclass
class Clustering:
    assignment: np.ndarray
    k: int
    seed: int
    inertia_trace: list[float]

    @property
    def inertia(self) -> float:
        return self.inertia_trace[-1] if self.inertia_trace else math.nan


def _sq_dists(E) -> np.ndarray:
    E = np.asarray(E, dtype=np.float64)
    sq = np.sum(E * E, axis=1)
    D = sq[:, None] + sq[None, :] - 2.0 * E @ E.T
    np.maximum(D, 0.0, out=D)
    np.fill_diagonal(D, 0.0)
    return (D + D.T) / 2.0


def rbf_similarity(embeddings, gamma: float | None = None, labels=None) -> SimilarityMatrix:
    """``exp(-gamma * ||e_i - e_j||^2)``; gamma defaults to 1 / median squared distance."""
    D = _sq_dists(np.atleast_2d(embeddings))
    if gamma is None:
        iu = np.triu_indices(D.shape[0], 1)
        med = float(np.median(D[iu])) if iu[0].size else 0.0
        gamma = 1.0 / med if med > 0 else 1.0
    if gamma < 0:
        raise DomainError("gamma must be non-negative")
    S = np.exp(-gamma * D)
    np.fill_diagonal(S, 1.0)
    return SimilarityMatrix(S, "rbf_latent", labels)


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ShapeError("pearson needs two equal-length vectors")
    if x.size < 3:
        raise DomainError("pearson needs at least 3 points")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx, syy = np.dot(dx, dx), np.dot(dy, dy)
    if sxx == 0 or syy == 0:
        raise DomainError("pearson undefined for a constant vector")
    r = float(np.dot(dx, dy) / math.sqrt(sxx * syy))
    return max(-1.0, min(1.0, r))


def spearman(x, y) -> float:
    """Pearson correlation of average ranks."""
    return pearson(rankdata(x), rankdata(y))


def spearman_shared(auc_matrix, p: int, q: int, min_shared: int = 3) -> float:
    """Spearman rho of two cells' AUCs over drugs observed in both (NaN if undefined)."""
    a, b = auc_matrix[p], auc_matrix[q]
    shared = ~np.isnan(a) & ~np.isnan(b)
    if shared.sum() < min_shared:
        return math.nan
    try:
        return spearman(a[shared], b[shared])
    except DomainError:
        return math.nan


def spearman_matrix(auc_matrix, labels=None) -> SimilarityMatrix:
    n = auc_matrix.shape[0]
    S = np.full((n, n), math.nan)
    for p in range(n):
        S[p, p] = 1.0
        for q in range(p + 1, n):
            S[p, q] = S[q, p] = spearman_shared(auc_matrix, p, q)
    return SimilarityMatrix(S, "spearman_response", labels)


def jaccard_sensitivity(label_matrix, a: int, b: int) -> float:
    """Jaccard of two drugs' sensitivity profiles over cells observed for both.

    ``label_matrix`` is cells x drugs with NaN for unobserved pairs.
    """
    x, y = label_matrix[:, a], label_matrix[:, b]
    shared = ~np.isnan(x) & ~np.isnan(y)
    x, y = x[shared] > 0.5, y[shared] > 0.5
    union = np.sum(x | y)
    if union == 0:
        return math.nan
    return float(np.sum(x & y) / union)


def jaccard_matrix(label_matrix, labels=None) -> SimilarityMatrix:
    n = label_matrix.shape[1]
    S = np.full((n, n), math.nan)
    for a in range(n):
        S[a, a] = 1.0 if np.nansum(label_matrix[:, a]) > 0 else math.nan
        for b in range(a + 1, n):
            S[a, b] = S[b, a] = jaccard_sensitivity(label_matrix, a, b)
    return SimilarityMatrix(S, "jaccard_sensitivity", labels)


def upper_pairs_correlation(S1: SimilarityMatrix, S2: SimilarityMatrix):
    """Pearson over off-diagonal pairs defined in both matrices.

    Returns ``(r, n_pairs_used, n_pairs_skipped)``.
    """
    iu = np.triu_indices(S1.values.shape[0], 1)
    a, b = S1.values[iu], S2.values[iu]
    ok = ~np.isnan(a) & ~np.isnan(b)
    try:
        r = pearson(a[ok], b[ok])
    except DomainError:
        r = math.nan
    return r, int(ok.sum()), int((~ok).sum())


def knn_accuracy(embeddings, types, k: int, query=None):
    """Fraction of each query cell's ``k`` nearest neighbours sharing its type.

    Neighbours exclude the query itself; distance ties go to the lower index.
    Returns ``(per_query_accuracy, mean)``.
    """
    E = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    n = E.shape[0]
    types = np.asarray(types)
    if not 1 <= k < n:
        raise DomainError(f"k must satisfy 1 <= k < n_cells ({n})")
    query = np.arange(n) if query is None else np.asarray(query, dtype=np.int64)
    D = _sq_dists(E)
    acc = np.empty(query.size)
    for i, c in enumerate(query):
        d = D[c].copy()
        d[c] = np.inf
        nn = np.lexsort((np.arange(n), d))[:k]
        acc[i] = np.mean(types[nn] == types[c])
    return acc, float(acc.mean()) if acc.size else math.nan


def _kmeanspp(E, k, rng):
    n = E.shape[0]
    centers = [int(rng.integers(n))]
    d2 = np.sum((E - E[centers[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            # every point coincides with a center: take the lowest unused index
            unused = np.setdiff1d(np.arange(n), centers)
            nxt = int(unused[0])
        else:
            nxt = int(rng.choice(n, p=d2 / total))
        centers.append(nxt)
        d2 = np.minimum(d2, np.sum((E - E[nxt]) ** 2, axis=1))
    return E[centers].copy()


def kmeans_cluster(embeddings, k: int, seed: int = 0, max_iter: int = 300, tol: float = 1e-8) -> Clustering:
    """Lloyd's algorithm with k-means++ seeding; deterministic for a given seed.

    ``inertia_trace`` holds the within-cluster sum of squares after each
    assignment step.
    """
    E = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    n = E.shape[0]
    if not 1 <= k <= n:
        raise DomainError(f"k must be in [1, {n}]")
    rng = np.random.default_rng(seed)
    C = _kmeanspp(E, k, rng)
    trace = []
    assign = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        D = np.sum((E[:, None, :] - C[None, :, :]) ** 2, axis=2)
        assign = np.argmin(D, axis=1)
        trace.append(float(D[np.arange(n), assign].sum()))
        newC = C.copy()
        for j in range(k):
            members = E[assign == j]
            if members.size:
                newC[j] = members.mean(axis=0)
        shift = float(np.max(np.sum((newC - C) ** 2, axis=1)))
        C = newC
        if shift < tol:
            break
    D = np.sum((E[:, None, :] - C[None, :, :]) ** 2, axis=2)
    final = np.argmin(D, axis=1)
    if not np.array_equal(final, assign):
        assign = final
        trace.append(float(D[np.arange(n), assign].sum()))
    return Clustering(assign, k, seed, trace)


def _pair_means(S, members):
    if members.size < 2:
        return math.nan
    sub = S[np.ix_(members, members)]
    iu = np.triu_indices(members.size, 1)
    vals = sub[iu]
    vals = vals[~np.isnan(vals)]
    return float(vals.mean()) if vals.size else math.nan


def intra_cluster_summary(clustering: Clustering, sim_latent, sim_reference) -> list[dict]:
    """Per cluster with >= 2 members: mean latent and reference similarity over
    unordered within-cluster pairs. Singletons are skipped."""
    A = sim_latent.values if isinstance(sim_latent, SimilarityMatrix) else np.asarray(sim_latent)
    B = sim_reference.values if isinstance(sim_reference, SimilarityMatrix) else np.asarray(sim_reference)
    out = []
    for j in range(clustering.k):
        members = np.flatnonzero(clustering.assignment == j)
        if members.size < 2:
            continue
        out.append({
            "cluster": j,
            "size": int(members.size),
            "latent": _pair_means(A, members),
            "reference": _pair_means(B, members),
        })
    return out


def compact_clusters(summary: list[dict], top: int = 10) -> list[int]:
    """Cluster ids ranked by descending mean latent similarity, first ``top``."""
    ranked = sorted(summary, key=lambda r: (-r["latent"], r["cluster"]))
    return [r["cluster"] for r in ranked[:top]]


def generalized_jaccard(p, q) -> float:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    den = np.maximum(p, q).sum()
    if den == 0:
        return math.nan
    return float(np.minimum(p, q).sum() / den)


def cluster_overlap_similarity(assignment, categories, clusters) -> SimilarityMatrix:
    """Similarity between categories from their distribution over ``clusters``.

    For each category, count its items in each selected cluster and
    normalize to a distribution; compare categories by generalized Jaccard
    (sum of minima over sum of maxima).
    """
    assignment = np.asarray(assignment)
    categories = np.asarray(categories)
    names = sorted(set(categories.tolist()))
    clusters = list(clusters)
    dist = np.zeros((len(names), len(clusters)))
    for i, name in enumerate(names):
        members = assignment[categories == name]
        for j, c in enumerate(clusters):
            dist[i, j] = np.sum(members == c)
        tot = dist[i].sum()
        if tot > 0:
            dist[i] /= tot
    n = len(names)
    S = np.full((n, n), math.nan)
    for i in range(n):
        for j in range(i, n):
            S[i, j] = S[j, i] = generalized_jaccard(dist[i], dist[j])
    return SimilarityMatrix(S, "cluster_overlap", names)


def category_mean_similarity(S: SimilarityMatrix, categories) -> SimilarityMatrix:
    """Average pairwise similarity between members of each pair of categories."""
    categories = np.asarray(categories)
    names = sorted(set(categories.tolist()))
    idx = [np.flatnonzero(categories == n) for n in names]
    out = np.full((len(names), len(names)), math.nan)
    for i in range(len(names)):
        for j in range(i, len(names)):
            block = S.values[np.ix_(idx[i], idx[j])]
            if i == j:
                iu = np.triu_indices(idx[i].size, 1)
                block = block[iu]
            vals = block[~np.isnan(block)]
            if vals.size:
                out[i, j] = out[j, i] = float(vals.mean())
    return SimilarityMatrix(out, S.kind, names)
