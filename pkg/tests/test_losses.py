import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradcheck import numeric_grad, rel_error
from ovaner.losses import HeadDualState, auc_margin_loss, bce_loss, ce_loss, clamp_prior, dual_optima
from ovaner.optimizer import OptimizerConfig, step_dual


def random_batch(rng, n=12, p_pos=0.3):
    labels = np.where(rng.random(n) < p_pos, 1, -1)
    labels[0], labels[1] = 1, -1
    return rng.uniform(0.02, 0.98, n), labels


class TestAUCMarginLoss:
    def test_worked_example(self):
        dual = HeadDualState(a=0.8, b=0.2, alpha=0.4, margin=1.0, prior=0.5)
        res = auc_margin_loss(np.array([0.8, 0.2]), np.array([1, -1]), dual)
        # variance terms vanish: 2*0.4*(0.25 + (0.5*0.2 - 0.5*0.8)/2) - 0.25*0.16
        assert res.loss == pytest.approx(0.04, abs=1e-15)

    def test_all_negative_batch(self):
        dual = HeadDualState(a=0.3, b=0.1, alpha=0.2, prior=0.1)
        res = auc_margin_loss(np.array([0.2, 0.4, 0.6]), np.array([-1, -1, -1]), dual)
        assert res.d_a == 0.0
        expected = (0.1 * ((0.1) ** 2 + 0.3 ** 2 + 0.5 ** 2)) / 3 + 2 * 0.2 * (0.09 + 0.1 * 1.2 / 3) - 0.09 * 0.04
        assert res.loss == pytest.approx(expected, rel=1e-14)

    def test_alpha_stationary_at_optimum(self):
        h = np.array([0.9, 0.7, 0.3, 0.1])
        z = np.array([1, 1, -1, -1])
        a, b, alpha = dual_optima(0.8, 0.2, 1.0)
        res = auc_margin_loss(h, z, HeadDualState(a=a, b=b, alpha=alpha, prior=0.5))
        assert res.d_alpha == pytest.approx(0.0, abs=1e-15)
        assert res.d_a == pytest.approx(0.0, abs=1e-15) and res.d_b == pytest.approx(0.0, abs=1e-15)

    def test_empty_batch(self):
        with pytest.raises(ValueError):
            auc_margin_loss(np.array([]), np.array([]), HeadDualState())

    @pytest.mark.parametrize("seed", range(20))
    def test_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        h, z = random_batch(rng)
        dual = HeadDualState(a=rng.uniform(0, 1), b=rng.uniform(0, 1), alpha=rng.uniform(0.1, 1),
                             margin=rng.uniform(0.5, 1.5), prior=rng.uniform(0.05, 0.95))
        res = auc_margin_loss(h, z, dual)
        assert rel_error(res.d_scores, numeric_grad(lambda: auc_margin_loss(h, z, dual).loss, h)) <= 1e-6
        for name, analytic in (("a", res.d_a), ("b", res.d_b), ("alpha", res.d_alpha)):
            box = np.array([getattr(dual, name)])

            def f():
                setattr(dual, name, float(box[0]))
                return auc_margin_loss(h, z, dual).loss

            numeric = numeric_grad(f, box)
            setattr(dual, name, float(box[0]))
            assert rel_error(np.array([analytic]), numeric) <= 1e-6, name

    @given(seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_permutation_invariant(self, seed):
        rng = np.random.default_rng(seed)
        h, z = random_batch(rng)
        dual = HeadDualState(a=0.4, b=0.3, alpha=0.5, prior=0.2)
        perm = rng.permutation(len(h))
        a, b = auc_margin_loss(h, z, dual), auc_margin_loss(h[perm], z[perm], dual)
        assert a.loss == pytest.approx(b.loss, rel=1e-13)
        np.testing.assert_allclose(a.d_scores[perm], b.d_scores, rtol=1e-13)

    @given(seed=st.integers(0, 2**32 - 1), n_pos=st.integers(1, 8), n_neg=st.integers(1, 8),
           margin=st.floats(0.2, 2.0))
    @settings(max_examples=60, deadline=None)
    def test_matches_pairwise_square_loss(self, seed, n_pos, n_neg, margin):
        # at the dual optimum, with the prior equal to the batch frequency,
        # L = p(1-p) * mean over (pos, neg) pairs of (m - h + h')^2 whenever m - a + b >= 0
        rng = np.random.default_rng(seed)
        pos = rng.uniform(0, 1, n_pos)
        neg = rng.uniform(0, 1, n_neg)
        p = n_pos / (n_pos + n_neg)
        a, b, alpha = dual_optima(pos.mean(), neg.mean(), margin)
        if margin - a + b < 0:
            return
        h = np.concatenate([pos, neg])
        z = np.r_[np.ones(n_pos), -np.ones(n_neg)]
        loss = auc_margin_loss(h, z, HeadDualState(a=a, b=b, alpha=alpha, margin=margin, prior=p)).loss
        pairs = sum((margin - hp + hn) ** 2 for hp in pos for hn in neg) / (n_pos * n_neg)
        assert loss == pytest.approx(p * (1 - p) * pairs, abs=1e-10)

    def test_alpha_ascent_converges(self):
        rng = np.random.default_rng(5)
        h, z = random_batch(rng, n=40, p_pos=0.5)
        dual = HeadDualState(a=0.6, b=0.35, alpha=0.0, margin=1.0, prior=float((z == 1).mean()))
        for _ in range(20000):
            g = auc_margin_loss(h, z, dual).d_alpha
            dual.alpha = max(0.0, dual.alpha + 0.5 * g)
        # with a, b frozen the alpha-maximiser is the inner term over p(1-p)
        p = dual.prior
        target = max(0.0, 1.0 + (p * h[z == -1].sum() - (1 - p) * h[z == 1].sum()) / (len(h) * p * (1 - p)))
        assert dual.alpha == pytest.approx(target, abs=1e-6)

    @pytest.mark.parametrize("margin", [1.0, 0.3])
    def test_alpha_ascent_reaches_projected_optimum(self, margin):
        # batch means equal (a, b) and the prior matches the class frequency
        h = np.array([0.9, 0.7, 0.3, 0.1])
        z = np.array([1, 1, -1, -1])
        dual = HeadDualState(a=0.8, b=0.2, alpha=3.0, margin=margin, prior=0.5)
        cfg = OptimizerConfig(lr_dual=1.0)
        for _ in range(500):
            res = auc_margin_loss(h, z, dual)
            dual = step_dual(dual, 0.0, 0.0, res.d_alpha, cfg)
        assert dual.alpha == pytest.approx(max(0.0, margin - 0.8 + 0.2), abs=1e-6)


class TestDualOptima:
    def test_basic(self):
        assert dual_optima(0.7, 0.2, 1.0) == pytest.approx((0.7, 0.2, 0.5))

    def test_separated(self):
        assert dual_optima(1.0, 0.0, 1.0)[2] == 0.0

    @given(c=st.floats(-5, 5), m=st.floats(0.01, 5))
    def test_symmetric(self, c, m):
        assert dual_optima(c, c, m)[2] == m


class TestBCE:
    def test_half(self):
        loss, _ = bce_loss(np.full(5, 0.5), np.array([1, -1, 1, -1, -1]))
        assert loss == pytest.approx(math.log(2))

    def test_confident_limit(self):
        loss, _ = bce_loss(np.array([1 - 1e-12, 1e-12]), np.array([1, -1]))
        assert loss < 1e-11

    def test_positive_gradient_sign(self):
        _, g = bce_loss(np.array([0.3, 0.6]), np.array([1, -1]))
        assert g[0] < 0 < g[1]

    def test_empty(self):
        with pytest.raises(ValueError):
            bce_loss(np.array([]), np.array([]))

    @pytest.mark.parametrize("seed", range(20))
    def test_finite_differences(self, seed):
        h, z = random_batch(np.random.default_rng(seed))
        _, g = bce_loss(h, z)
        assert rel_error(g, numeric_grad(lambda: bce_loss(h, z)[0], h)) <= 1e-6


class TestCE:
    def test_uniform(self):
        loss, _ = ce_loss(np.zeros((4, 9)), np.array([0, 3, 8, 2]))
        assert loss == pytest.approx(math.log(9))

    def test_confident_limit(self):
        logits = np.zeros((2, 3))
        logits[0, 1] = logits[1, 2] = 1e3
        assert ce_loss(logits, np.array([1, 2]))[0] == pytest.approx(0.0, abs=1e-12)

    def test_rows_sum_zero(self):
        rng = np.random.default_rng(0)
        _, g = ce_loss(rng.normal(size=(6, 5)), rng.integers(0, 5, 6))
        np.testing.assert_allclose(g.sum(axis=1), 0.0, atol=1e-15)

    def test_index_out_of_range(self):
        with pytest.raises(IndexError):
            ce_loss(np.zeros((2, 3)), np.array([0, 3]))

    @pytest.mark.parametrize("seed", range(20))
    def test_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        logits = rng.normal(size=(7, 4))
        y = rng.integers(0, 4, 7)
        _, g = ce_loss(logits, y)
        assert rel_error(g, numeric_grad(lambda: ce_loss(logits, y)[0], logits)) <= 1e-6


def test_prior_clamp():
    assert clamp_prior(0.0) == 1e-6 and clamp_prior(1.0) == 1 - 1e-6 and clamp_prior(0.3) == 0.3
