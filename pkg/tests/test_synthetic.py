import numpy as np

from drugrank.benchmark import desk_config, run_planted
from drugrank.data import assemble, load_expression, load_fingerprints, load_responses
from drugrank.synthetic import make_planted, write_csvs


def test_planted_shapes_and_missing():
    d = make_planted(seed=1)
    assert len(d.cells) == 100 and len(d.drugs) == 60
    assert sorted({c.cancer_type for c in d.cells}) == ["T0", "T1", "T2", "T3"]
    frac = d.responses.n_obs / (100 * 60)
    assert 0.8 < frac < 0.9
    assert np.all(np.bincount(d.responses.cell_idx, minlength=100) >= 1)
    assert d.true_scores.shape == (100, 60)


def test_lower_auc_means_higher_true_score():
    d = make_planted(auc_noise=0.0, seed=2)
    t = d.responses
    s = d.true_scores[t.cell_idx, t.drug_idx]
    order = np.argsort(s)
    assert np.all(np.diff(t.auc[order]) <= 0)


def test_same_seed_same_data():
    a, b = make_planted(seed=4), make_planted(seed=4)
    np.testing.assert_array_equal(a.responses.auc, b.responses.auc)
    np.testing.assert_array_equal(a.true_scores, b.true_scores)


def test_csv_roundtrip(tmp_path):
    d = make_planted(n_cells=12, n_drugs=8, n_types=3, seed=0)
    paths = write_csvs(d, tmp_path)
    t = load_responses(paths["responses"])
    np.testing.assert_array_equal(t.auc, d.responses.auc)
    cells = load_expression(paths["expression"])
    np.testing.assert_array_equal(cells[3].expression, d.cells[3].expression)
    assemble(t, cells, load_fingerprints(paths["fingerprints"]))


def test_benchmark_rows():
    cfg = desk_config(n_folds=2, pretrain_epochs=1, rank_epochs=2)
    rows = run_planted(cfg, data=make_planted(n_cells=20, n_drugs=10, n_types=2, seed=0))
    assert [(r.loss_kind, r.fold) for r in rows] == [("list_all", 0), ("list_all", 1), ("list_one", 0), ("list_one", 1)]
    assert all(r.oracle["AP@1"] >= 0 for r in rows)
