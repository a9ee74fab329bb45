import math

import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from tacforce.errors import ConfigError
from tacforce.losses import (LossWeights, combine_losses, eq_loss, kl_loss,
                             perceptual_surrogate, recon_loss, sobel_response,
                             total_loss)
from tacforce.model import Posterior

from .conftest import random_obs


def make_post(mu, log_var):
    return Posterior(mu=torch.as_tensor(mu, dtype=torch.float64),
                     log_var=torch.as_tensor(log_var, dtype=torch.float64))


class TestReconLoss:
    def test_identity_is_zero(self):
        img = torch.rand(2, 1, 32, 32)
        assert float(recon_loss(img, img.clone())) == 0.0

    def test_mean_l1_worked_example(self):
        zeros = torch.zeros(1, 1, 16, 16)
        ones = torch.ones(1, 1, 16, 16)
        assert float(recon_loss(zeros, ones, lambda_lpips=0.0)) == 1.0

    def test_surrogate_zero_on_identical(self):
        img = torch.rand(1, 1, 32, 32)
        assert float(perceptual_surrogate(img, img.clone())) == 0.0
        # zero at every scale, not just in aggregate
        for scale in (1, 2, 4):
            pooled = torch.nn.functional.avg_pool2d(img, scale) if scale > 1 else img
            diff = sobel_response(pooled) - sobel_response(pooled.clone())
            assert float(diff.abs().max()) == 0.0

    def test_surrogate_positive_on_shifted_pattern(self):
        a = torch.zeros(1, 1, 32, 32)
        a[0, 0, 8:12, 8:12] = 1.0
        b = torch.roll(a, shifts=3, dims=-1)
        assert float(perceptual_surrogate(a, b)) > 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            recon_loss(torch.zeros(1, 1, 8, 8), torch.zeros(1, 1, 16, 16))

    def test_external_perceptual_hook(self):
        img = torch.rand(1, 1, 16, 16)
        called = {}

        def scorer(p, t):
            called["yes"] = True
            return torch.tensor(0.25)

        out = recon_loss(img, img.clone(), lambda_lpips=2.0, perceptual=scorer)
        assert called and float(out) == pytest.approx(0.5)


class TestKlLoss:
    def test_prior_match_is_zero(self):
        assert float(kl_loss(make_post([[0.0]], [[0.0]]))) == 0.0

    def test_unit_mean_entry(self):
        assert float(kl_loss(make_post([[1.0]], [[0.0]]))) == 0.5

    def test_unit_log_var_entry(self):
        value = float(kl_loss(make_post([[0.0]], [[1.0]])))
        assert value == pytest.approx(0.5 * (math.e - 2.0), abs=1e-15)
        assert round(value, 5) == 0.35914

    def test_mean_over_entries(self):
        post = make_post([[1.0, 0.0]], [[0.0, 0.0]])
        assert float(kl_loss(post)) == 0.25

    @given(st.lists(st.tuples(st.floats(-3, 3), st.floats(-3, 3)),
                    min_size=1, max_size=8))
    @settings(max_examples=30, deadline=None)
    def test_non_negative(self, entries):
        mu = [[m for m, _ in entries]]
        lv = [[v for _, v in entries]]
        assert float(kl_loss(make_post(mu, lv))) >= 0.0

    def test_monte_carlo_estimator_agreement(self):
        g = torch.Generator().manual_seed(0)
        for trial in range(3):
            mu = torch.randn(4, 6, generator=g, dtype=torch.float64)
            lv = torch.randn(4, 6, generator=g, dtype=torch.float64).clamp(-2, 2)
            post = Posterior(mu=mu, log_var=lv)
            closed = float(kl_loss(post))
            eps = torch.randn(100_000, 4, 6, generator=g, dtype=torch.float64)
            z = mu + torch.exp(0.5 * lv) * eps
            log_q = -0.5 * (math.log(2 * math.pi) + lv + eps.square())
            log_p = -0.5 * (math.log(2 * math.pi) + z.square())
            sampled = float((log_q - log_p).mean())
            assert sampled == pytest.approx(closed, rel=0.02)


class TestEqLoss:
    def test_identity_zero(self):
        z = torch.randn(4, 6, dtype=torch.float64)
        assert float(eq_loss(z, z.clone())) == 0.0

    def test_all_ones_worked_example(self):
        z_l = torch.ones(4, 6, dtype=torch.float64)
        z_r = torch.zeros(4, 6, dtype=torch.float64)
        assert float(eq_loss(z_l, z_r)) == 6.0

    def test_single_entry_difference(self):
        z_l = torch.zeros(8, 6, dtype=torch.float64)
        z_r = torch.zeros(8, 6, dtype=torch.float64)
        z_r[3, 2] = 0.75
        assert float(eq_loss(z_l, z_r)) == pytest.approx(0.75**2 / 8, abs=1e-15)

    def test_symmetric(self):
        a = torch.randn(4, 6)
        b = torch.randn(4, 6)
        assert float(eq_loss(a, b)) == float(eq_loss(b, a))

    def test_batched_mean(self):
        z_l = torch.zeros(2, 4, 6)
        z_r = torch.zeros(2, 4, 6)
        z_r[0] = 1.0  # one sample at 6.0, one at 0
        assert float(eq_loss(z_l, z_r)) == pytest.approx(3.0)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            eq_loss(torch.zeros(4, 6), torch.zeros(5, 6))

    @given(st.integers(0, 10_000))
    @settings(max_examples=25, deadline=None)
    def test_non_negative(self, seed):
        g = torch.Generator().manual_seed(seed)
        a = torch.randn(3, 6, generator=g)
        b = torch.randn(3, 6, generator=g)
        assert float(eq_loss(a, b)) >= 0.0


class TestLossWeights:
    def test_defaults(self):
        w = LossWeights()
        assert w.lambda_kl == 1e-3 and w.lambda_eq == 1.0 and w.lambda_lpips == 1.0

    @pytest.mark.parametrize("bad", [-1.0, float("nan"), float("inf")])
    def test_rejects_bad_values(self, bad):
        with pytest.raises(ConfigError):
            LossWeights(lambda_eq=bad)


class TestTotalLoss:
    def test_weighted_sum_arithmetic(self):
        total = combine_losses(1.0, 2.0, 0.5,
                               LossWeights(lambda_kl=1e-3, lambda_eq=1.0))
        assert total == pytest.approx(1.502, abs=1e-12)

    def test_degenerate_pair_drops_eq(self, tiny_model):
        x = random_obs(1, seed=4)
        pair = tiny_model.forward_pair(x, x.clone(), mode="eval")
        weights = LossWeights(lambda_eq=5.0)
        _, breakdown = total_loss(pair, x, x.clone(), weights)
        assert breakdown["eq"] == 0.0
        assert breakdown["total"] == pytest.approx(
            breakdown["recon"] + weights.lambda_kl * breakdown["kl"], rel=1e-6)

    def test_counts_four_branches(self, tiny_model):
        x_l, x_r = random_obs(1, seed=1), random_obs(1, seed=2)
        pair = tiny_model.forward_pair(x_l, x_r, mode="eval")
        assert len(pair.recons) == 4
        del pair.recons[("L", "R")]
        with pytest.raises(ValueError, match="branches"):
            total_loss(pair, x_l, x_r, LossWeights())

    def test_swap_symmetry(self, tiny_model):
        x_l, x_r = random_obs(1, seed=6), random_obs(1, seed=7)
        fwd = tiny_model.forward_pair(x_l, x_r, mode="eval")
        rev = tiny_model.forward_pair(x_r, x_l, mode="eval")
        _, b1 = total_loss(fwd, x_l, x_r, LossWeights())
        _, b2 = total_loss(rev, x_r, x_l, LossWeights())
        assert b1["total"] == pytest.approx(b2["total"], rel=1e-6)

    def test_breakdown_keys(self, tiny_model):
        x_l, x_r = random_obs(1, seed=1), random_obs(1, seed=2)
        pair = tiny_model.forward_pair(x_l, x_r, mode="eval")
        _, breakdown = total_loss(pair, x_l, x_r, LossWeights())
        assert set(breakdown) == {"recon", "kl", "eq", "total"}
