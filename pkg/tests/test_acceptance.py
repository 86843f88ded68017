"""Acceptance criteria, each checked at its stated tolerance.

Every test records one PASS/FAIL line (printed, and repeated in the pytest
terminal summary) before asserting.
"""
import json
import math
import time
from collections import Counter
from pathlib import Path

import numpy as np
import pytest

import oracles
from acceptance_log import record
from drugrank.analysis import (
    jaccard_matrix,
    jaccard_sensitivity,
    kmeans_cluster,
    knn_accuracy,
    pearson,
    rbf_similarity,
    spearman,
    spearman_matrix,
)
from drugrank.benchmark import desk_config, run_planted
from drugrank.cli import main
from drugrank.data import CellProfile, ResponseTable, label_sensitivity, make_lco_folds
from drugrank.losses import listall_loss, listone_loss, top_one_target
from drugrank.metrics import DEFAULT_KS, cell_metrics
from drugrank.pretrain import GeneAE
from drugrank.ranker import RankModel, cell_targets

DESK = Path(__file__).resolve().parents[1] / "configs" / "desk.json"


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12))


def check_grad(f, grad, x):
    return rel_err(grad, oracles.central_diff(f, x))


# ---------------------------------------------------------------- gradients

def test_gradient_correctness():
    t0 = time.perf_counter()
    worst = {}
    for seed in range(10):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(3, 17))
        s = rng.normal(size=n)
        target = top_one_target(rng.random(n))
        labels = (rng.random(n) < 0.3).astype(float)
        labels[rng.integers(n)] = 1.0
        errs = {
            "listone": check_grad(lambda v: listone_loss(v, target)[0], listone_loss(s, target)[1], s),
            "listall": check_grad(lambda v: listall_loss(v, labels, 0.5)[0], listall_loss(s, labels, 0.5)[1], s),
        }

        ae = GeneAE(8, (6, 4), 3).init(rng)
        # zero init biases can put a relu exactly at its kink (a cell whose
        # hidden units are all off encodes to 0); move off it
        ae.store.data += 0.05 * rng.normal(size=ae.store.size)
        X = rng.normal(size=(5, 8))
        ae.loss_and_grad(X)
        g = ae.store.grad.copy()
        theta = ae.store.data.copy()

        def recon(v, ae=ae, X=X, theta=theta):
            ae.store.data[:] = v
            out = ae.reconstruction_loss(X)
            ae.store.data[:] = theta
            return out

        errs["reconstruction"] = check_grad(recon, g, theta)

        for kind in ("list_one", "list_all"):
            m = RankModel(8, 10, gene_hidden=(6,), latent_dim=4, drug_hidden=5, drug_dim=3).init(rng, "uniform")
            m.store.data += 0.05 * rng.normal(size=m.store.size)
            x = rng.normal(size=8)
            F = rng.integers(0, 4, size=(7, 10)).astype(float)
            aucs = rng.random(7)
            tgt = cell_targets(kind, aucs, (aucs <= np.sort(aucs)[1]).astype(float))
            m.loss_and_grad(x, F, tgt, kind)
            g = m.store.grad.copy()
            theta = m.store.data.copy()

            def pipe(v, m=m, x=x, F=F, tgt=tgt, kind=kind, theta=theta):
                m.store.data[:] = v
                out = m.loss(x, F, tgt, kind)
                m.store.data[:] = theta
                return out

            errs[f"pipeline_{kind}"] = check_grad(pipe, g, theta)
        for k, v in errs.items():
            worst[k] = max(worst.get(k, 0.0), v)
    secs = time.perf_counter() - t0
    ok = all(v < 1e-6 for v in worst.values()) and secs < 10
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    record("gradient correctness", ok, f"max rel err {detail} (< 1e-6), {secs:.1f}s (< 10s)")
    assert ok


# ---------------------------------------------------------------- closed forms

def test_loss_closed_forms():
    worst = 0.0
    rng = np.random.default_rng(7)
    for _ in range(200):
        n = int(rng.integers(2, 30))
        s = rng.uniform(-5, 5, size=n)
        q = oracles.softmax(rng.normal(size=n).tolist())
        labels = (rng.random(n) < 0.3).astype(float)
        labels[0] = 1.0
        p1 = oracles.softmax(s.tolist())
        ref_one = [a - b for a, b in zip(p1, q)]
        tau = 0.5
        pt = oracles.softmax(s.tolist(), tau)
        L = sum(labels)
        ref_all = [(L * a - b) / tau for a, b in zip(pt, labels)]
        worst = max(
            worst,
            float(np.max(np.abs(listone_loss(s, np.array(q))[1] - ref_one))),
            float(np.max(np.abs(listall_loss(s, labels, tau)[1] - ref_all))),
        )
    ok = worst <= 1e-12
    record("loss closed forms", ok, f"max abs deviation {worst:.1e} (<= 1e-12)")
    assert ok


# ---------------------------------------------------------------- metrics

def test_metric_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(99)
    mismatches = 0
    for _ in range(1000):
        n = int(rng.integers(1, 21))
        scores = rng.integers(0, 5, size=n).astype(float)
        aucs = rng.integers(0, 6, size=n) / 6.0
        labels = (rng.random(n) < 0.3).astype(int)
        idx = rng.permutation(50)[:n]
        got = cell_metrics(scores, aucs, labels, idx)
        order = oracles.ranked(scores.tolist(), idx.tolist())
        rl = [int(labels[i]) for i in order]
        ref = {}
        for k in DEFAULT_KS:
            ref[f"AH@{k}"] = float(oracles.hits(rl, k))
            ref[f"AP@{k}"] = oracles.average_precision(rl, k)
        ref["CI"] = oracles.concordance(aucs.tolist(), scores.tolist())
        ref["sCI"] = oracles.concordance(aucs.tolist(), scores.tolist(), labels.tolist())
        for key, r in ref.items():
            same = (math.isnan(r) and math.isnan(got[key])) or abs(got[key] - r) <= 1e-12
            mismatches += not same
    secs = time.perf_counter() - t0
    ok = mismatches == 0 and secs < 10
    record("metric oracle equivalence", ok, f"{mismatches} mismatches over 1000 lists, {secs:.1f}s (< 10s)")
    assert ok


# ---------------------------------------------------------------- planted benchmark

@pytest.fixture(scope="session")
def planted():
    t0 = time.perf_counter()
    rows = run_planted(desk_config(), loss_kinds=("list_all",))
    t_all = time.perf_counter() - t0
    rows += run_planted(desk_config(), loss_kinds=("list_one",))
    return rows, t_all


def test_planted_recoverability(planted):
    rows, t_all = planted
    la = [r for r in rows if r.loss_kind == "list_all"]
    lo = [r for r in rows if r.loss_kind == "list_one"]
    ah5 = [r.model["AH@5"] / r.oracle["AH@5"] for r in la]
    ci = [r.model["CI"] for r in la]
    ap1 = [r.model["AP@1"] / r.oracle["AP@1"] for r in lo]
    checks = {
        "List-All AH@5 >= 0.9 x oracle": min(ah5) >= 0.9,
        "List-All CI >= 0.85": min(ci) >= 0.85,
        "List-One AP@1 >= 0.9 x oracle": min(ap1) >= 0.9,
        "List-All time < 300s": t_all < 300,
    }
    detail = (
        f"AH@5/oracle per fold {[round(v, 3) for v in ah5]}; "
        f"CI per fold {[round(v, 3) for v in ci]}; "
        f"List-One AP@1/oracle per fold {[round(v, 3) for v in ap1]}; "
        f"List-All {t_all:.0f}s; failing: {[k for k, v in checks.items() if not v] or 'none'}"
    )
    ok = all(checks.values())
    record("planted-model recoverability", ok, detail)
    assert ok


def test_separation_direction(planted):
    rows, _ = planted
    la = {r.fold: r.model["AH@20"] for r in rows if r.loss_kind == "list_all"}
    lo = {r.fold: r.model["AH@20"] for r in rows if r.loss_kind == "list_one"}
    wins = sum(la[k] >= lo[k] - 0.1 for k in la)
    ok = wins >= 4
    pairs = [(round(la[k], 2), round(lo[k], 2)) for k in sorted(la)]
    record("List-All vs List-One separation", ok, f"AH@20 (List-All, List-One) per fold {pairs}; {wins}/5 folds within rule (>= 4)")
    assert ok


# ---------------------------------------------------------------- labeling and folds

def test_labeling_and_folds():
    rng = np.random.default_rng(5)
    cell_idx, drug_idx, aucs = [], [], []
    per_cell = []
    for c in range(500):
        n = int(rng.integers(1, 61))
        drugs = rng.permutation(60)[:n]
        vals = rng.integers(0, 40, size=n) / 40.0
        cell_idx += [c] * n
        drug_idx += drugs.tolist()
        aucs += vals.tolist()
        per_cell.append(vals.tolist())
    table = ResponseTable([f"c{c}" for c in range(500)], [f"d{j}" for j in range(60)],
                          np.array(cell_idx), np.array(drug_idx), np.array(aucs))
    labels = label_sensitivity(table, 5.0).labels
    expected = [v for vals in per_cell for v in oracles.percentile_labels(vals, 5.0)]
    label_bad = int(np.sum(np.asarray(labels) != np.asarray(expected)))

    fold_bad = 0
    for trial in range(100):
        n = int(rng.integers(1, 120))
        n_types = int(rng.integers(1, 8))
        types = rng.integers(0, n_types, size=n)
        cells = [CellProfile(f"c{i}", f"t{t}", np.zeros(1)) for i, t in enumerate(types)]
        n_folds = int(rng.integers(2, 8))
        f = make_lco_folds(cells, n_folds, trial)
        if set(f.folds) != {c.cell_id for c in cells}:
            fold_bad += 1
            continue
        for t in set(types.tolist()):
            counts = Counter(f.folds[c.cell_id] for c in cells if c.cancer_type == f"t{t}")
            sizes = [counts.get(k, 0) for k in range(n_folds)]
            fold_bad += max(sizes) - min(sizes) > 1
    ok = label_bad == 0 and fold_bad == 0
    record("labeling and folds", ok, f"{label_bad} label mismatches over 500 cells; {fold_bad} unbalanced folds over 100 distributions")
    assert ok


# ---------------------------------------------------------------- analysis

def test_analysis_battery():
    problems = []
    rng = np.random.default_rng(11)
    centers = np.array([[0, 0, 0], [40, 0, 0], [0, 40, 0], [0, 0, 40]], dtype=float)
    types = np.repeat(np.arange(4), 12)
    E = centers[types] + rng.normal(size=(48, 3))
    for k in (1, 3, 5):
        if knn_accuracy(E, types, k)[1] != 1.0:
            problems.append(f"knn k={k}")

    blobs = np.vstack([rng.normal(size=(20, 2)), rng.normal(size=(20, 2)) + 30])
    truth = np.repeat([0, 1], 20)
    a = kmeans_cluster(blobs, 2, seed=1).assignment
    if not (np.array_equal(a, truth) or np.array_equal(a, 1 - truth)):
        problems.append("kmeans blobs")

    for trial in range(20):
        R = rng.normal(size=(12, 5))
        S = rbf_similarity(R).values
        A = np.where(rng.random((12, 9)) < 0.2, np.nan, rng.random((12, 9)))
        Sp = spearman_matrix(A).values
        L = np.where(rng.random((15, 6)) < 0.1, np.nan, (rng.random((15, 6)) < 0.4).astype(float))
        Sj = jaccard_matrix(L).values
        for name, M, lo_, hi_ in (("rbf", S, 0, 1), ("spearman", Sp, -1, 1), ("jaccard", Sj, 0, 1)):
            ok_ = ~np.isnan(M)
            if np.any(ok_ != ok_.T) or np.max(np.abs(np.where(ok_, M - M.T, 0))) > 1e-12:
                problems.append(f"{name} symmetry")
            if np.any((M[ok_] < lo_) | (M[ok_] > hi_)):
                problems.append(f"{name} range")
        if not np.all(np.diag(S) == 1.0) or not np.all(np.diag(Sp) == 1.0):
            problems.append("diagonal")
        for j in range(6):
            if np.nansum(L[:, j]) > 0 and Sj[j, j] != 1.0:
                problems.append("jaccard diagonal")

    worst = 0.0
    for trial in range(200):
        n = int(rng.integers(3, 30))
        x = rng.permutation(1000)[:n].astype(float)
        y = rng.permutation(1000)[:n].astype(float)
        worst = max(worst, abs(pearson(x, y) - oracles.pearson(x.tolist(), y.tolist())))
        worst = max(worst, abs(spearman(x, y) - oracles.spearman_rank_difference(x.tolist(), y.tolist())))
        Lb = (rng.random((n, 2)) < 0.5).astype(float)
        ref = oracles.jaccard(Lb[:, 0].tolist(), Lb[:, 1].tolist())
        got = jaccard_sensitivity(Lb, 0, 1)
        if not (math.isnan(ref) and math.isnan(got)):
            worst = max(worst, abs(got - ref))
    if worst > 1e-12:
        problems.append(f"oracle deviation {worst:.1e}")
    ok = not problems
    record("analysis battery", ok, f"knn k in 1,3,5; kmeans blobs; matrix invariants x20; oracle max dev {worst:.1e}; problems: {problems or 'none'}")
    assert ok


# ---------------------------------------------------------------- determinism

def test_determinism(tmp_path):
    outs = []
    for name, jobs in (("a", "1"), ("b", "2")):
        rc = main(["run", "--synthetic", "100", "60", "4", "--config", str(DESK),
                   "--output-dir", str(tmp_path / name), "--jobs", jobs])
        assert rc == 0
        outs.append((tmp_path / name / "metrics.json").read_bytes())
    same = outs[0] == outs[1]
    summary = json.loads(outs[0])["overall"]["means"]
    record("determinism", same, f"metrics.json byte-identical across two runs (jobs 1 vs 2): {same}; overall AH@5 {summary['AH@5']:.3f}")
    assert same
