"""Loss-function tests: frozen analytic values, invariance properties, and
finite-difference gradients for every objective."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bicross import losses as L
from bicross.autodiff import Tensor
from bicross.errors import DegenerateInputError, InvalidInputError, SkipSample
from bicross.gradsuite import GRAD_TOL, run_gradient_suite
from bicross.network import Discriminator


def unit_rows(x):
    return x / np.linalg.norm(x, axis=1, keepdims=True)


class TestSigLoss:
    def test_zero_when_equal(self):
        gt = np.full((4, 4), 2.5)
        assert L.sig_loss(gt.copy(), gt).item() == pytest.approx(0.0, abs=1e-15)

    def test_scale_invariance_at_lambda_one(self):
        rng = np.random.default_rng(0)
        gt = rng.uniform(1.0, 5.0, size=(5, 5))
        pred = 3.7 * gt  # constant log-ratio: variance of logs is zero
        assert L.sig_loss(pred, gt, lam=1.0).item() == pytest.approx(0.0, abs=1e-12)

    def test_two_pixel_frozen_value(self):
        # L = [ln 2, 0], lambda = 0.5: (1/2)(ln2)^2 - (0.5/4)(ln2)^2 = (3/8)(ln2)^2
        pred = np.array([[2.0, 1.0]])
        gt = np.array([[1.0, 1.0]])
        expected = (3.0 / 8.0) * math.log(2.0) ** 2
        assert L.sig_loss(pred, gt, lam=0.5).item() == pytest.approx(expected, abs=1e-12)

    def test_joint_scaling_invariance(self):
        rng = np.random.default_rng(1)
        pred = rng.uniform(0.5, 4.0, size=(6, 6))
        gt = rng.uniform(0.5, 4.0, size=(6, 6))
        for lam in (0.0, 0.3, 1.0):
            base = L.sig_loss(pred, gt, lam=lam).item()
            scaled = L.sig_loss(7.3 * pred, 7.3 * gt, lam=lam).item()
            assert scaled == pytest.approx(base, abs=1e-9)

    def test_constant_prediction_argmin_is_gt(self):
        # lambda < 1 and constant gt: loss minimized (0) at pred == gt
        gt = np.full((3, 3), 4.0)
        best = L.sig_loss(gt.copy(), gt, lam=0.5).item()
        for c in (3.0, 3.9, 4.1, 5.0):
            assert L.sig_loss(np.full((3, 3), c), gt, lam=0.5).item() > best

    def test_valid_mask_restricts_average(self):
        pred = np.array([[2.0, 100.0]])
        gt = np.array([[1.0, 1.0]])
        mask = np.array([[True, False]])
        got = L.sig_loss(pred, gt, mask, lam=0.5).item()
        expected = (1.0 - 0.5) * math.log(2.0) ** 2  # single pixel: (1 - lam) L^2
        assert got == pytest.approx(expected, abs=1e-12)

    def test_empty_mask_rejected(self):
        with pytest.raises(DegenerateInputError):
            L.sig_loss(np.ones((2, 2)), np.ones((2, 2)), np.zeros((2, 2), dtype=bool))

    def test_nonpositive_depth_rejected(self):
        with pytest.raises(InvalidInputError):
            L.sig_loss(np.array([[-1.0]]), np.array([[1.0]]))


class TestCkd:
    def test_single_candidate_prob_one(self):
        f = unit_rows(np.random.default_rng(0).normal(size=(1, 8)))
        h = L.ckd_pair_prob(f, f, tau=0.5)
        assert h.data.shape == (1, 1)
        assert h.data[0, 0] == pytest.approx(1.0, abs=1e-12)
        assert L.ckd_loss(h).item() == pytest.approx(0.0, abs=1e-9)

    def test_equal_similarities_give_uniform_rows(self):
        # two identical spike vectors: every similarity equal, h = 0.5
        rng = np.random.default_rng(3)
        v = unit_rows(rng.normal(size=(1, 6)))
        f_rgb = np.vstack([v, v])
        f_spk = np.vstack([v, v])
        h = L.ckd_pair_prob(f_rgb, f_spk, tau=0.5)
        np.testing.assert_allclose(h.data, 0.5, atol=1e-12)

    def test_two_term_softmax_frozen_value(self):
        # S diagonal 1, off-diagonal 0, tau = 0.5: h_ii = e^2 / (e^2 + 1)
        e = np.eye(4)[:2]  # orthonormal pair
        h = L.ckd_pair_prob(e, e, tau=0.5)
        expected = math.exp(2.0) / (math.exp(2.0) + 1.0)
        assert expected == pytest.approx(0.88080, abs=5e-6)
        np.testing.assert_allclose(np.diag(h.data), expected, atol=1e-12)

    def test_uniform_loss_is_log_b(self):
        rng = np.random.default_rng(5)
        v = unit_rows(rng.normal(size=(1, 8)))
        f = np.repeat(v, 4, axis=0)
        h = L.ckd_pair_prob(f, f, tau=0.5)
        assert L.ckd_loss(h).item() == pytest.approx(math.log(4.0), abs=1e-9)

    def test_loss_decreases_as_diagonal_grows(self):
        def loss_for(p):
            off = (1.0 - p) / 3.0
            h = np.full((4, 4), off)
            np.fill_diagonal(h, p)
            return L.ckd_loss(h).item()

        values = [loss_for(p) for p in (0.25, 0.4, 0.6, 0.9)]
        assert all(a > b for a, b in zip(values, values[1:]))

    @given(st.integers(1, 8), st.integers(0, 2**31))
    @settings(max_examples=40, deadline=None)
    def test_rows_stochastic(self, b, seed):
        rng = np.random.default_rng(seed)
        f_rgb = unit_rows(rng.normal(size=(b, 6)))
        f_spk = unit_rows(rng.normal(size=(b, 6)))
        h = L.ckd_pair_prob(f_rgb, f_spk, tau=0.5)
        np.testing.assert_allclose(h.data.sum(axis=1), 1.0, atol=1e-9)

    def test_non_unit_vectors_rejected(self):
        bad = np.full((2, 4), 0.9)
        with pytest.raises(InvalidInputError):
            L.ckd_pair_prob(bad, bad)

    def test_empty_batch_rejected(self):
        empty = np.zeros((0, 4))
        with pytest.raises(DegenerateInputError):
            L.ckd_pair_prob(empty, empty)


class TestFkd:
    def test_zero_when_equal(self):
        rng = np.random.default_rng(0)
        feats = [rng.normal(size=(3, 4, 4)), rng.normal(size=(6, 2, 2))]
        assert L.fkd_loss(feats, [f.copy() for f in feats]).item() == 0.0

    def test_single_position_frozen_value(self):
        # one level, one position, channel difference (3, 4): ||.||^2 = 25
        teacher = np.zeros((2, 1, 1))
        student = np.array([3.0, 4.0]).reshape(2, 1, 1)
        assert L.fkd_loss([teacher], [student]).item() == pytest.approx(25.0, abs=1e-12)

    def test_quadratic_homogeneity(self):
        rng = np.random.default_rng(2)
        t = [rng.normal(size=(3, 4, 4))]
        s = [t[0] + rng.normal(size=(3, 4, 4))]
        base = L.fkd_loss(t, s).item()
        doubled = L.fkd_loss(t, [t[0] + 2.0 * (s[0] - t[0])]).item()
        assert doubled == pytest.approx(4.0 * base, rel=1e-12)

    def test_spatial_mean_level_sum(self):
        # value = sum_l mean_positions ||diff||^2
        t = [np.zeros((1, 2, 2)), np.zeros((1, 1, 1))]
        s = [np.full((1, 2, 2), 2.0), np.full((1, 1, 1), 3.0)]
        assert L.fkd_loss(t, s).item() == pytest.approx(4.0 + 9.0, abs=1e-12)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(InvalidInputError):
            L.fkd_loss([np.zeros((2, 2, 2))], [np.zeros((2, 3, 3))])


class TestUncertainty:
    def test_target_zero_when_equal(self):
        ref = np.full((3, 3), 2.0)
        assert np.all(L.uncertainty_target(ref.copy(), ref).data == 0.0)

    def test_target_ratio_one_when_double(self):
        ref = np.full((3, 3), 2.0)
        np.testing.assert_allclose(L.uncertainty_target(2.0 * ref, ref).data, 1.0)

    def test_target_scalar_case(self):
        got = L.uncertainty_target(np.array([[3.0]]), np.array([[2.0]])).data
        assert got[0, 0] == pytest.approx(0.5)

    def test_loss_zero_at_match(self):
        e = np.random.default_rng(0).uniform(0, 1, size=(4, 4))
        assert L.uncertainty_loss(e.copy(), e).item() == 0.0

    def test_quadratic_branch(self):
        # residual 0.5, beta 1: 0.5 * 0.25 = 0.125
        assert L.uncertainty_loss(np.array([[0.5]]), np.array([[0.0]]), beta=1.0).item() == pytest.approx(0.125)

    def test_linear_branch(self):
        # residual 2, beta 1: 2 - 0.5 = 1.5
        assert L.uncertainty_loss(np.array([[2.0]]), np.array([[0.0]]), beta=1.0).item() == pytest.approx(1.5)


class TestBuildMask:
    def test_two_pixel_variance_oracle(self):
        # e = [0, 1]: population variance 0.25, mask keeps only the 0
        m = L.build_mask(np.array([0.0, 1.0]))
        assert m.e_thresh == pytest.approx(0.25)
        assert m.mask.astype(int).tolist() == [1, 0]
        assert m.selected_fraction == pytest.approx(0.5)

    def test_zero_uncertainty_always_selected(self):
        rng = np.random.default_rng(0)
        e = rng.uniform(0.0, 1.0, size=(5, 5))
        e[2, 2] = 0.0
        assert L.build_mask(e).mask[2, 2]

    def test_constant_positive_map_selects_nothing(self):
        m = L.build_mask(np.full((4, 4), 0.3))
        assert m.n_selected == 0
        assert m.e_thresh == pytest.approx(0.0)

    @given(st.integers(0, 2**31))
    @settings(max_examples=100, deadline=None)
    def test_indicator_semantics(self, seed):
        rng = np.random.default_rng(seed)
        e = rng.uniform(0.0, 1.0, size=(8, 8))
        m = L.build_mask(e)
        var = np.mean((e - e.mean()) ** 2)
        np.testing.assert_array_equal(m.mask, e <= var)
        assert m.selected_fraction == pytest.approx(m.mask.mean())


class TestUgts:
    def _mask(self, shape, keep):
        mask = np.zeros(shape, dtype=bool)
        mask[keep] = True
        return L.UncertaintyMask(mask=mask, e_thresh=0.1, selected_fraction=float(mask.mean()))

    def test_zero_on_selected_match(self):
        d = np.random.default_rng(0).uniform(1, 5, size=(4, 4))
        mask = self._mask((4, 4), (slice(0, 2), slice(0, 2)))
        assert L.ugts_loss(d.copy(), d, mask).item() == 0.0

    def test_empty_mask_signals_skip(self):
        d = np.ones((3, 3))
        with pytest.raises(SkipSample):
            L.ugts_loss(d, d, self._mask((3, 3), np.zeros((3, 3), dtype=bool)))

    def test_two_pixel_frozen_average(self):
        # residuals [0.5, 2.0], beta 1: (0.125 + 1.5) / 2 = 0.8125
        d_soft = np.zeros((1, 2))
        student = np.array([[0.5, 2.0]])
        mask = self._mask((1, 2), (slice(None), slice(None)))
        assert L.ugts_loss(student, d_soft, mask, beta=1.0).item() == pytest.approx(0.8125)

    def test_unselected_pixels_do_not_contribute(self):
        d_soft = np.zeros((1, 2))
        student = np.array([[0.5, 1000.0]])
        mask = self._mask((1, 2), (0, 0))
        assert L.ugts_loss(student, d_soft, mask, beta=1.0).item() == pytest.approx(0.125)


class TestGlfa:
    def _const_disc(self, value: float) -> Discriminator:
        # zero weights and a bias giving sigmoid(b) = value
        disc = Discriminator(in_width=4, hidden=3, seed=0)
        for name in ("fc1.w", "fc1.b", "fc2.w"):
            disc.params[name].data[...] = 0.0
        disc.params["fc2.b"].data[...] = math.log(value / (1.0 - value))
        return disc

    def test_half_output_frozen_value(self):
        disc = self._const_disc(0.5)
        rng = np.random.default_rng(0)
        loss = L.glfa_loss(disc, rng.normal(size=(3, 4)), rng.normal(size=(3, 4)))
        assert loss.item() == pytest.approx(2.0 * math.log(2.0), abs=1e-9)

    def test_perfect_discriminator_loss_near_zero(self):
        # d(src) -> 1 and d(tgt) -> 0 drives the loss to 0
        disc = Discriminator(in_width=1, hidden=1, seed=0)
        disc.params["fc1.w"].data[...] = 1.0
        disc.params["fc1.b"].data[...] = 0.0
        disc.params["fc2.w"].data[...] = 2.0
        disc.params["fc2.b"].data[...] = -20.0
        src = np.full((2, 1), 20.0)  # score ~ sigmoid(20)  ~ 1
        tgt = np.full((2, 1), -20.0)  # score ~ sigmoid(-20) ~ 0
        loss = L.glfa_loss(disc, src, tgt)
        assert loss.item() == pytest.approx(0.0, abs=1e-5)

    def test_reversal_scales_token_gradient(self):
        rng = np.random.default_rng(1)
        disc = Discriminator(in_width=4, hidden=3, seed=1)
        src = Tensor(rng.normal(size=(2, 4)), requires_grad=True)
        tgt = Tensor(rng.normal(size=(2, 4)), requires_grad=True)

        L.glfa_loss(disc, src, tgt, mu=1.0).backward()
        g1 = src.grad.copy()
        src.grad = tgt.grad = None
        for p in disc.params.values():
            p.grad = None
        L.glfa_loss(disc, src, tgt, mu=2.5).backward()
        np.testing.assert_allclose(src.grad, 2.5 * g1, rtol=1e-12)

    def test_encoder_step_does_not_help_frozen_discriminator(self):
        # adversarial direction: a reversed-gradient step on the tokens must
        # not decrease the discriminator's loss at its old parameters
        rng = np.random.default_rng(7)
        disc = Discriminator(in_width=6, hidden=5, seed=3)
        src = Tensor(rng.normal(size=(4, 6)), requires_grad=True)
        tgt = Tensor(rng.normal(size=(4, 6)), requires_grad=True)
        for p in disc.params.values():
            p.requires_grad = False
        loss0 = L.glfa_loss(disc, src, tgt, mu=1.0)
        loss0.backward()
        step = 1e-4
        src.data -= step * src.grad  # gradient-descent step using the reversed gradients
        tgt.data -= step * tgt.grad
        loss1 = L.glfa_loss(disc, src, tgt, mu=1.0)
        assert loss1.item() >= loss0.item()


class TestComposites:
    def test_all_zero(self):
        assert L.mod_loss(0.0, 0.0, 0.0, 0.0, 0.0).item() == 0.0
        assert L.dom_loss(0.0, 0.0, 0.0).item() == 0.0

    def test_mod_weighted_sum(self):
        got = L.mod_loss(1.0, 1.0, 1.0, 1.0, 1.0, w_distill=0.1).item()
        assert got == pytest.approx(3.2, abs=1e-12)

    def test_dom_weighted_sum(self):
        got = L.dom_loss(0.5, 1.0, 0.0, w_glfa=0.1).item()
        assert got == pytest.approx(0.6, abs=1e-12)

    def test_non_finite_component_aborts(self):
        with pytest.raises(L.NonFiniteLoss):
            L.mod_loss(float("nan"), 0.0, 0.0, 0.0, 0.0)
        with pytest.raises(L.NonFiniteLoss):
            L.dom_loss(0.0, float("inf"))


class TestGradientSuite:
    def test_every_loss_under_tolerance(self):
        results = run_gradient_suite(seed=0)
        for name, err in results.items():
            assert err < GRAD_TOL, f"{name}: max rel err {err:.3e}"
