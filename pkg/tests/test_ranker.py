import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from drugrank.errors import DomainError, ShapeError, TrainingDivergence
from drugrank.losses import top_one_target
from drugrank.nn import finite_diff_grad, relative_error
from drugrank.ranker import RankerConfig, RankModel, ScoreVector, cell_targets, descending_order, fit, score

vec3 = arrays(np.float64, 3, elements=st.floats(-10, 10, allow_nan=False))


def tiny_model(seed=0, w_init="uniform"):
    return RankModel(5, 6, gene_hidden=(4,), latent_dim=3, drug_hidden=4, drug_dim=2).init(np.random.default_rng(seed), w_init)


def toy_2_2_1(model, prefix):
    v = model.store.views
    v[f"{prefix}.0.weights"][...] = [[1.0, -1.0], [2.0, 0.5]]
    v[f"{prefix}.0.bias"][...] = [0.0, -1.0]
    v[f"{prefix}.1.weights"][...] = [[3.0, -2.0]]
    v[f"{prefix}.1.bias"][...] = [0.5]


# -- scoring ------------------------------------------------------------

def test_score_dot_product():
    assert score([1.0, 2.0], [1.0, 2.0], np.eye(2)) == 5.0


def test_score_zero_cell():
    assert score([0.0, 0.0], [4.0, -1.0], [[2.0, 3.0], [1.0, 1.0]]) == 0.0


def test_score_index_picking():
    assert score([1.0, 0.0], [0.0, 1.0], [[0.0, 3.0], [7.0, 0.0]]) == 3.0


def test_score_shape_mismatch():
    with pytest.raises(ShapeError):
        score([1.0, 2.0, 3.0], [1.0], np.eye(2))


@settings(max_examples=200, deadline=None)
@given(vec3, vec3, vec3, st.floats(-5, 5))
def test_bilinearity(u1, u2, v, alpha):
    W = np.arange(9.0).reshape(3, 3) / 7 - 0.5
    assert score(alpha * u1, v, W) == pytest.approx(alpha * score(u1, v, W), abs=1e-9)
    assert score(u1 + u2, v, W) == pytest.approx(score(u1, v, W) + score(u2, v, W), abs=1e-9)


def test_descending_order_ties_by_index():
    order = descending_order(np.array([1.0, 2.0, 2.0, 0.5]), np.array([7, 5, 3, 1]))
    # the two 2.0 scores: drug 3 before drug 5
    assert list(order) == [2, 1, 0, 3]


def test_score_vector_singleton():
    sv = ScoreVector(np.array([4]), np.array([0.3]))
    assert list(sv.ranked_drugs) == [4]


# -- encoders -----------------------------------------------------------

def test_zero_params_encode_to_zero():
    m = RankModel(5, 6, (4,), 3, 4, 2)
    np.testing.assert_array_equal(m.encode_cell(np.ones(5)), np.zeros(3))


def test_encode_cell_hand_network():
    m = RankModel(2, 2, gene_hidden=(2,), latent_dim=1, drug_hidden=2, drug_dim=1)
    toy_2_2_1(m, "enc")
    # h = relu([1-2, 2*1+0.5*2-1]) = [0, 2]; u = 3*0 - 2*2 + 0.5
    np.testing.assert_allclose(m.encode_cell(np.array([1.0, 2.0])), [-3.5])


def test_encode_drug_hand_network():
    m = RankModel(2, 2, gene_hidden=(2,), latent_dim=1, drug_hidden=2, drug_dim=1)
    toy_2_2_1(m, "drug")
    # h = relu([3-1, 6+0.5-1]) = [2, 5.5]; v = 6 - 11 + 0.5
    np.testing.assert_allclose(m.encode_drug(np.array([3.0, 1.0])), [-4.5])


def test_encode_drug_zero_fingerprint():
    m = tiny_model()
    np.testing.assert_array_equal(m.encode_drug(np.zeros(6)), np.zeros(2))


def test_identical_fingerprints_identical_embeddings():
    m = tiny_model(3)
    f = np.array([0, 1, 2, 0, 0, 3.0])
    np.testing.assert_array_equal(m.encode_drug(f), m.encode_drug(f.copy()))


def test_score_list_hand_order():
    m = RankModel(1, 3, gene_hidden=(1,), latent_dim=1, drug_hidden=3, drug_dim=1)
    v = m.store.views
    v["enc.0.weights"][...] = 1.0
    v["enc.1.weights"][...] = 1.0
    v["drug.0.weights"][...] = np.eye(3)
    v["drug.1.weights"][...] = [[1.0, 2.0, 3.0]]
    m.W[...] = 1.0
    # u = 1; drug scores are 1*f0 + 2*f1 + 3*f2
    F = np.array([[1.0, 0, 0], [0, 0, 1.0], [0, 1.0, 0]])
    sv = m.score_list(np.array([1.0]), F, np.array([10, 11, 12]))
    np.testing.assert_allclose(sv.scores, [1.0, 3.0, 2.0])
    assert list(sv.ranked_drugs) == [11, 12, 10]


def test_zero_w_scores_uniformly():
    m = tiny_model(0, "zero")
    s = m.score_matrix(np.ones((2, 5)), np.ones((4, 6)))
    np.testing.assert_array_equal(s, np.zeros((2, 4)))


def test_score_matrix_matches_score():
    m = tiny_model(5)
    rng = np.random.default_rng(5)
    X, F = rng.normal(size=(3, 5)), rng.integers(0, 3, size=(4, 6)).astype(float)
    S = m.score_matrix(X, F)
    for i in range(3):
        for j in range(4):
            assert S[i, j] == pytest.approx(score(m.encode_cell(X[i]), m.encode_drug(F[j]), m.W), abs=1e-12)


# -- end-to-end gradients ----------------------------------------------

@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("kind", ["list_one", "list_all"])
def test_loss_gradient_through_scorer(seed, kind):
    rng = np.random.default_rng(seed)
    m = tiny_model(seed)
    m.store.data += 0.1 * rng.normal(size=m.store.size)
    x = rng.normal(size=5)
    F = rng.integers(0, 4, size=(7, 6)).astype(float)
    aucs = rng.random(7)
    labels = (aucs <= np.sort(aucs)[1]).astype(float)
    target = cell_targets(kind, aucs, labels)

    def f(theta):
        saved = m.store.data.copy()
        m.store.data[:] = theta
        val = m.loss(x, F, target, kind)
        m.store.data[:] = saved
        return val

    m.loss_and_grad(x, F, target, kind)
    assert relative_error(m.store.grad.copy(), finite_diff_grad(f, m.store.data.copy())) < 1e-6


@settings(max_examples=50, deadline=None)
@given(st.randoms(use_true_random=False))
def test_loss_invariant_to_drug_order(rnd):
    rng = np.random.default_rng(rnd.randint(0, 1000))
    m = tiny_model(1)
    x = rng.normal(size=5)
    F = rng.integers(0, 4, size=(6, 6)).astype(float)
    target = top_one_target(rng.random(6))
    perm = list(range(6))
    rnd.shuffle(perm)
    assert m.loss(x, F[perm], target[perm], "list_one") == pytest.approx(m.loss(x, F, target, "list_one"), rel=1e-12)


# -- training loop -------------------------------------------------------

def toy_problem(seed=0, n_cells=12, n_drugs=8):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n_cells, 5))
    F = rng.integers(0, 3, size=(n_drugs, 6)).astype(float)
    true = X[:, :2] @ rng.normal(size=(2, 2)) @ (F[:, :2] @ rng.normal(size=(2, 2))).T
    lists = []
    for c in range(n_cells):
        drugs = np.arange(n_drugs)
        aucs = -true[c]
        labels = (aucs <= np.sort(aucs)[0]).astype(float)
        lists.append((c, drugs, labels))
    return X, F, lists


def test_zero_lr_keeps_init():
    X, F, lists = toy_problem()
    m = tiny_model(2)
    before = m.store.data.copy()
    fit(m, X, F, lists, RankerConfig(epochs=1, lr=0.0), np.random.default_rng(0))
    np.testing.assert_array_equal(m.store.data, before)


@pytest.mark.parametrize("kind", ["list_one", "list_all"])
def test_training_reduces_loss(kind):
    X, F, lists = toy_problem(1)
    if kind == "list_one":
        lists = [(c, d, top_one_target(-np.arange(len(d)) / len(d))) for c, d, _ in lists]
    m = tiny_model(3, "zero")
    losses = fit(m, X, F, lists, RankerConfig(loss=kind, epochs=30, lr=1e-2), np.random.default_rng(0))
    assert len(losses) == 31
    assert losses[-1] <= losses[0]


def test_fit_deterministic():
    X, F, lists = toy_problem(2)
    a, b = tiny_model(0), tiny_model(0)
    la = fit(a, X, F, lists, RankerConfig(epochs=5), np.random.default_rng(9))
    lb = fit(b, X, F, lists, RankerConfig(epochs=5), np.random.default_rng(9))
    np.testing.assert_array_equal(a.store.data, b.store.data)
    assert la == lb


def test_fit_divergence_reports_epoch():
    X, F, lists = toy_problem(3)
    m = tiny_model(0)
    m.store.data *= 1e120
    with pytest.raises(TrainingDivergence, match=r"epoch \d"), np.errstate(all="ignore"):
        fit(m, X, F, lists, RankerConfig(epochs=2), np.random.default_rng(0))


def test_export_roundtrip():
    m = tiny_model(7)
    back = RankModel.from_export(m.export())
    np.testing.assert_array_equal(back.store.data, m.store.data)


def test_config_rejects_unknown_loss():
    with pytest.raises(DomainError):
        RankerConfig(loss="pairwise")
