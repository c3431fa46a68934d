import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dwmr import losses as L
from dwmr import ndcore as nd

import gradcases
import oracles

batches = st.integers(2, 12).flatmap(
    lambda n: st.integers(1, 6).flatmap(
        lambda k: arrays(np.float64, (n, k), elements=st.floats(0.0, 1.0))))


def val(t) -> float:
    return float(t.data)


@pytest.mark.parametrize("name", sorted(gradcases.LOSS_TERMS))
def test_loss_gradients_match_finite_differences(name):
    assert gradcases.worst_case(name, seeds=range(5)) < gradcases.RTOL


# -------------------------------------------------------------- weights
def test_weights_and_window_validation():
    assert L.LossWeights().pred == 1.0
    with pytest.raises(ValueError):
        L.LossWeights(var=-1.0)
    w = L.LocalityWindow(1, 6)
    assert w.center(64) == pytest.approx(7 / 128) and w.half_width(64) == pytest.approx(5 / 128)
    with pytest.raises(ValueError):
        L.LocalityWindow(3, 2).check(64)
    with pytest.raises(ValueError):
        L.LocalityWindow(1, 70).check(64)


# --------------------------------------------------------- normalization
def test_normalize_batch_examples():
    p = np.column_stack([np.full(6, 0.3), np.tile([0.0, 1.0], 3), np.linspace(0, 1, 6)])
    z = L.normalize_batch(p).data
    np.testing.assert_array_equal(z[:, 0], 0.0)
    np.testing.assert_allclose(np.abs(z[:, 1]), 1.0, atol=1e-5)
    np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-9)
    with pytest.raises(ValueError):
        L.normalize_batch(np.ones((1, 3)))


# ------------------------------------------------------------------ pred
def test_pred_loss_examples():
    b = np.random.default_rng(0).integers(0, 2, (5, 4)).astype(float)
    assert val(L.pred_loss(b, b)) < 1e-6
    assert val(L.pred_loss(np.full((5, 4), 0.5), b)) == pytest.approx(np.log(2))
    target = nd.Tensor(b, requires_grad=True)
    p = nd.Tensor(np.full((5, 4), 0.3), requires_grad=True)
    nd.backward(L.pred_loss(p, target))
    assert target.grad is None and p.grad is not None


# ------------------------------------------------------------------- var
def test_var_loss_examples():
    same = np.tile(np.random.default_rng(0).random(5), (8, 1))
    assert val(L.var_loss(same, 0.45)) == pytest.approx(0.449, abs=1e-12)
    balanced = np.tile([[0.0], [1.0]], (4, 5))
    assert val(L.var_loss(balanced, 0.45)) == 0.0
    assert val(L.var_loss(np.random.default_rng(1).random((8, 5)), 0.0)) == 0.0


# ------------------------------------------------------------------- cor
def test_cor_loss_examples():
    col = np.tile([0.0, 1.0], 1000)
    two = np.column_stack([col, col])
    # population std inside, N - 1 outside: exactly N / (N - 1) up to eps
    assert val(L.cor_loss(two)) == pytest.approx(2000 / 1999, abs=1e-5)
    assert val(L.cor_loss(two)) == pytest.approx(1.0, abs=1e-3)
    assert val(L.cor_loss(np.column_stack([col, 1 - col]))) == pytest.approx(val(L.cor_loss(two)), abs=1e-12)
    rng = np.random.default_rng(0)
    indep = rng.integers(0, 2, (10_000, 4)).astype(float)
    assert val(L.cor_loss(indep)) < 0.05
    assert val(L.cor_loss(rng.random((5, 1)))) == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_cor_loss_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    p = rng.random((int(rng.integers(4, 40)), int(rng.integers(2, 17))))
    assert abs(val(L.cor_loss(p)) - oracles.brute_cor(p)) < 1e-10


# ------------------------------------------------------------------- cos
def xor_batch():
    a = np.array([0, 0, 1, 1], float)
    b = np.array([0, 1, 0, 1], float)
    return np.column_stack([a, b, np.logical_xor(a, b).astype(float)])


def test_cos_loss_xor_construction():
    p = xor_batch()
    # population standardization maps every row to +-1, so each |M| is 1 up to eps
    assert val(L.cos_loss(p)) == pytest.approx(1.0, abs=1e-5)
    assert oracles.brute_cos(p) == pytest.approx(1.0, abs=1e-5)
    corr = L.correlation_matrix(p).data
    off = corr[~np.eye(3, dtype=bool)]
    assert np.max(np.abs(off)) <= 0.35
    assert np.max(np.abs(off)) < 1e-12


def test_cos_loss_small_and_independent():
    assert val(L.cos_loss(np.random.default_rng(0).random((6, 2)))) == 0.0
    indep = np.random.default_rng(1).integers(0, 2, (10_000, 6)).astype(float)
    assert val(L.cos_loss(indep)) < 0.05


@pytest.mark.parametrize("seed", range(5))
def test_cos_loss_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    p = rng.random((int(rng.integers(3, 65)), int(rng.integers(3, 9))))
    assert abs(val(L.cos_loss(p)) - oracles.brute_cos(p)) < 1e-10


def test_sampled_cos_is_unbiased():
    rng = np.random.default_rng(0)
    p = rng.random((32, 7))
    p[:, 2] = 0.5 * p[:, 0] + 0.5 * p[:, 1] ** 2
    full = val(L.cos_loss(p))
    draws = np.array([val(L.cos_loss(p, sample_triplets=20, rng=np.random.default_rng(s))) for s in range(100)])
    se = draws.std(ddof=1) / np.sqrt(len(draws))
    assert abs(draws.mean() - full) < 2 * se


def test_sampled_triplets_are_distinct():
    i, j, k = L.sample_distinct_triplets(5, 500, np.random.default_rng(0))
    assert np.all((i != j) & (j != k) & (i != k))


@given(batches, st.randoms(use_true_random=False))
@settings(max_examples=60, deadline=None)
def test_moment_losses_permutation_and_complement_invariant(p, rnd):
    n, k = p.shape
    perm = list(range(k))
    rnd.shuffle(perm)
    flip = p.copy()
    col = rnd.randrange(k)
    flip[:, col] = 1.0 - flip[:, col]
    for fn in (L.cor_loss, L.cos_loss):
        base = val(fn(p))
        assert val(fn(p[:, perm])) == pytest.approx(base, abs=1e-9)
        assert val(fn(flip)) == pytest.approx(base, abs=1e-9)
    rows = list(range(n))
    rnd.shuffle(rows)
    base = val(L.var_loss(p, 0.45))
    assert val(L.var_loss(flip, 0.45)) == pytest.approx(base, abs=1e-12)
    assert val(L.var_loss(p[rows], 0.45)) == pytest.approx(base, abs=1e-12)


@given(batches)
@settings(max_examples=60, deadline=None)
def test_every_term_non_negative(p):
    b = (p > 0.3).astype(float)
    for term in (L.var_loss(p), L.cor_loss(p), L.cos_loss(p), L.loc_loss(p, b), L.kl_loss(p), L.pred_loss(p, b)):
        assert val(term) >= 0.0


# ------------------------------------------------------------------- loc
def test_locality_fixtures():
    k = 64
    window = L.LocalityWindow(1, 6)
    rng = np.random.default_rng(0)
    b = rng.integers(0, 2, (1, k)).astype(float)
    assert val(L.loc_loss(b, b, window)) == pytest.approx((1 / 64) ** 2, abs=1e-9)
    assert (1 / 64) ** 2 == pytest.approx(2.441e-4, abs=1e-7)
    three = b.copy()
    three[0, :3] = 1.0 - three[0, :3]
    assert L.flip_distance(three, b).data[0] == pytest.approx(3 / 48)
    assert val(L.loc_loss(three, b, window)) == 0.0
    half = np.abs(b - 0.5)
    assert L.flip_distance(half, b).data[0] == 0.0


def test_loc_gate_blocks_gradient_on_inactive_terms():
    b = np.array([[0.0, 1.0, 0.0, 1.0]])
    p = nd.Tensor(np.array([[0.2, 0.1, 0.9, 0.7]]), requires_grad=True)
    nd.backward(L.loc_loss(p, b, L.LocalityWindow(1, 1)))
    # only bits with |p - b| > 0.5 (indices 1 and 2) carry gradient
    assert p.grad[0, 0] == 0.0 and p.grad[0, 3] == 0.0
    assert p.grad[0, 1] != 0.0 and p.grad[0, 2] != 0.0


# ------------------------------------------------------------------ total
def test_total_dwmr_is_additive_and_degenerates_to_pred():
    rng = np.random.default_rng(0)
    p, p_hat = rng.random((8, 6)), rng.random((8, 6))
    b = rng.integers(0, 2, (8, 6)).astype(float)
    zero = L.LossWeights(var=0, cor=0, cos=0, loc=0)
    total, _ = L.total_dwmr(p, p_hat, b, zero)
    assert val(total) == val(L.pred_loss(p_hat, b))
    w = L.LossWeights(var=3, cor=2, cos=1.5, loc=0.7)
    total, terms = L.total_dwmr(p, p_hat, b, w, gamma=0.45, window=L.LocalityWindow(1, 3))
    parts = terms["pred"] + 3 * terms["var"] + 2 * terms["cor"] + 1.5 * terms["cos"] + 0.7 * terms["loc"]
    assert abs(val(total) - parts) < 1e-12
    assert val(total) >= terms["pred"]


# --------------------------------------------------------- rec, kl, bvae
def test_rec_loss():
    x = np.random.default_rng(0).random((2, 3, 4, 4))
    assert val(L.rec_loss(nd.Tensor(x), x)) == 0.0
    assert val(L.rec_loss(nd.Tensor(x + 0.1), x)) == pytest.approx(0.01)
    assert val(L.rec_loss(nd.Tensor(x - 0.1), x)) == pytest.approx(0.01)
    with pytest.raises(nd.ShapeError):
        L.rec_loss(nd.Tensor(x[:1]), x)


def test_kl_loss():
    assert val(L.kl_loss(np.full((3, 4), 0.5))) == pytest.approx(0.0, abs=1e-15)
    assert val(L.kl_loss(np.ones((3, 4)))) == pytest.approx(np.log(2), abs=1e-5)
    p = np.random.default_rng(0).random((5, 4))
    assert val(L.kl_loss(p)) == pytest.approx(val(L.kl_loss(1 - p)), abs=1e-12)


def test_binary_concrete():
    z = nd.Tensor(np.array([[-1.0, 0.0, 2.0]]))
    out = L.binary_concrete_sample(z, temperature=2.0, u=np.full((1, 3), 0.5))
    np.testing.assert_allclose(out.data, 1 / (1 + np.exp(-z.data / 2.0)))
    draws = L.binary_concrete_sample(nd.Tensor(np.zeros((100_000, 1))), np.random.default_rng(0))
    assert abs((draws.data >= 0.5).mean() - 0.5) < 0.01


# ------------------------------------------------------------- deepcubeai
def test_deepcubeai_loss_contract():
    rng = np.random.default_rng(0)
    bits = rng.integers(0, 2, (4, 6)).astype(float)
    total, terms = L.deepcubeai_loss(bits, bits, bits.copy())
    assert val(total) == 0.0 and terms == {"pred": 0.0}

    p_next = nd.Tensor(rng.random((4, 6)), requires_grad=True)
    p_hat = nd.Tensor(rng.random((4, 6)), requires_grad=True)
    total, _ = L.deepcubeai_loss(None, p_next, p_hat)
    nd.backward(total)
    r_next, r_hat = (p_next.data >= 0.5) * 1.0, (p_hat.data >= 0.5) * 1.0
    n = p_next.size
    # 1/2 MSE(r(p'), sg(r(p_hat))): straight-through into p'
    np.testing.assert_allclose(p_next.grad, 0.5 * 2 * (r_next - r_hat) / n)
    # 1/2 MSE(p_hat, sg(r(p'))): plain gradient into p_hat, none through r(p_hat)
    np.testing.assert_allclose(p_hat.grad, 0.5 * 2 * (p_hat.data - r_next) / n)


def test_deepcubeai_reconstruction_term():
    rng = np.random.default_rng(1)
    p, p_next = rng.random((2, 3)), rng.random((2, 3))
    x, x_next = rng.random((2, 3)), rng.random((2, 3))
    decode = lambda t: nd.as_tensor(t) * 1.0
    total, terms = L.deepcubeai_loss(p, p_next, p_next, x, x_next, decode, lambda_rec=2.0)
    rec = 0.5 * np.mean((p - x) ** 2) + 0.5 * np.mean((p_next - x_next) ** 2)
    assert terms["rec"] == pytest.approx(rec)
    assert val(total) == pytest.approx(terms["pred"] + 2.0 * rec)
    no_rec, terms0 = L.deepcubeai_loss(p, p_next, p_next, x, x_next, decode, lambda_rec=0.0)
    assert "rec" not in terms0 and val(no_rec) == pytest.approx(terms["pred"])
