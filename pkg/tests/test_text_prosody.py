"""Text-side tests: encoder, prosody/duration predictors, prior expansion."""

import math

import numpy as np
import pytest
import torch

from emovc.distributions import GaussianSequence
from emovc.errors import BadInputError
from emovc.text_prosody import (DurationPredictor, PriorProjector,
                                ProsodyPredictor, TextEncoder, decode_durations,
                                expand_prior)

import oracles

V = 17
D = 32


def seeded_randomize(module, seed):
    """Fill every parameter with seeded normal noise (generic random weights)."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in module.parameters():
            p.copy_(0.2 * torch.randn(p.shape, generator=gen, dtype=p.dtype))
    return module


class TestTextEncoder:
    def test_output_length_matches_input(self):
        torch.manual_seed(0)
        enc = TextEncoder(V, D)
        h = enc(torch.tensor([1, 2, 3, 4, 5, 6, 7]))
        assert h.shape == (D, 7)
        assert torch.isfinite(h).all()

    def test_deterministic(self):
        torch.manual_seed(0)
        enc = TextEncoder(V, D)
        ids = torch.tensor([3, 1, 4, 1, 5])
        torch.testing.assert_close(enc(ids), enc(ids), rtol=0, atol=0)

    def test_position_sensitivity(self):
        enc = seeded_randomize(TextEncoder(V, D), 1)
        a = enc(torch.tensor([2, 9, 5]))
        b = enc(torch.tensor([9, 2, 5]))
        assert (a - b).abs().max() > 0.0

    def test_out_of_vocab_rejected(self):
        enc = TextEncoder(V, D)
        with pytest.raises(BadInputError, match="vocabulary"):
            enc(torch.tensor([1, V]))
        with pytest.raises(BadInputError):
            enc(torch.tensor([], dtype=torch.long))


class TestProsodyPredictor:
    def test_emotion_changes_output(self):
        pp = seeded_randomize(ProsodyPredictor(D), 2)
        h = 0.3 * torch.randn(D, 6, generator=torch.Generator().manual_seed(3))
        out_a = pp(h, 0)
        out_b = pp(h, 1)
        assert (out_a - out_b).abs().max() > 0.0

    def test_single_position(self):
        torch.manual_seed(0)
        pp = ProsodyPredictor(D)
        assert pp(torch.zeros(D, 1), 0).shape == (D, 1)

    def test_zero_hidden_neutral_finite(self):
        torch.manual_seed(0)
        pp = ProsodyPredictor(D)
        assert torch.isfinite(pp(torch.zeros(D, 4), 0)).all()

    def test_unknown_emotion_rejected(self):
        pp = ProsodyPredictor(D)
        with pytest.raises(BadInputError):
            pp(torch.zeros(D, 2), 5)


class TestPriorProjector:
    def test_sigma_positive(self):
        proj = seeded_randomize(PriorProjector(D, D), 4)
        g = proj(torch.randn(D, 5), torch.randn(D, 5))
        assert g.level == "phoneme"
        assert (g.sigma > 0).all()

    def test_zero_parameters_standard_normal(self):
        proj = PriorProjector(D, D)
        with torch.no_grad():
            for p in proj.parameters():
                p.zero_()
        g = proj(torch.randn(D, 3), torch.randn(D, 3))
        torch.testing.assert_close(g.mu, torch.zeros(D, 3))
        torch.testing.assert_close(g.sigma, torch.ones(D, 3))

    def test_prior_tracks_prosody(self):
        proj = seeded_randomize(PriorProjector(D, D), 5)
        h = torch.randn(D, 4, generator=torch.Generator().manual_seed(6))
        pr_a = torch.zeros(D, 4)
        pr_b = torch.ones(D, 4)
        assert (proj(h, pr_a).mu - proj(h, pr_b).mu).abs().max() > 0.0


class TestDurations:
    def test_decode_zero_gives_one_frame(self):
        assert decode_durations(torch.zeros(3)).tolist() == [1, 1, 1]

    def test_decode_ln3_gives_three(self):
        assert decode_durations(torch.full((2,), math.log(3.0))).tolist() == [3, 3]

    def test_decode_clamps_at_one(self):
        assert decode_durations(torch.tensor([-9.0, -1.0, 0.4])).min() >= 1

    def test_predictor_shape(self):
        torch.manual_seed(0)
        dp = DurationPredictor(D)
        out = dp(torch.randn(D, 5), torch.randn(D, 5))
        assert out.shape == (5,)
        assert torch.isfinite(out).all()


class TestExpandPrior:
    def _phoneme_prior(self, n=3):
        gen = torch.Generator().manual_seed(7)
        mu = torch.randn(4, n, generator=gen)
        sigma = torch.rand(4, n, generator=gen) + 0.5
        return GaussianSequence(mu, sigma, "phoneme")

    def test_repetition_semantics(self):
        g = self._phoneme_prior()
        out = expand_prior(g, durations=[2, 1, 3])
        assert out.level == "frame" and out.length == 6
        torch.testing.assert_close(out.mu[:, 0], g.mu[:, 0])
        torch.testing.assert_close(out.mu[:, 1], g.mu[:, 0])
        torch.testing.assert_close(out.mu[:, 2], g.mu[:, 1])
        torch.testing.assert_close(out.sigma[:, 5], g.sigma[:, 2])

    def test_unit_durations_identity(self):
        g = self._phoneme_prior()
        out = expand_prior(g, durations=[1, 1, 1])
        torch.testing.assert_close(out.mu, g.mu)
        torch.testing.assert_close(out.sigma, g.sigma)

    def test_alignment_equals_durations(self):
        g = self._phoneme_prior()
        durs = [2, 3, 1]
        a = np.zeros((3, 6), dtype=np.int8)
        start = 0
        for i, d in enumerate(durs):
            a[i, start : start + d] = 1
            start += d
        via_durs = expand_prior(g, durations=durs)
        via_align = expand_prior(g, alignment=a)
        torch.testing.assert_close(via_durs.mu, via_align.mu)
        torch.testing.assert_close(via_durs.sigma, via_align.sigma)

    def test_zero_length_rejected(self):
        g = self._phoneme_prior(1)
        with pytest.raises(BadInputError):
            expand_prior(g, durations=[0])

    def test_needs_exactly_one_source(self):
        g = self._phoneme_prior()
        with pytest.raises(BadInputError):
            expand_prior(g)


class TestGradients:
    def test_prior_mu_gradient_matches_finite_difference(self):
        """Analytic grad of sum(mu) w.r.t. a projection weight slice."""
        torch.manual_seed(0)
        proj = PriorProjector(16, 16).double()
        seeded_randomize(proj, 8)
        gen = torch.Generator().manual_seed(9)
        h = torch.randn(16, 4, generator=gen, dtype=torch.float64)
        pr = torch.randn(16, 4, generator=gen, dtype=torch.float64)

        weight = proj.proj.weight
        slice_idx = [(0, 3, 0), (5, 11, 0), (12, 30, 0)]

        def loss_at(values):
            with torch.no_grad():
                for (i, j, k), v in zip(slice_idx, values):
                    weight[i, j, k] = v
            return float(proj(h, pr).mu.sum())

        base = np.array([weight.detach()[i, j, k].item() for i, j, k in slice_idx])
        for (i, j, k), v in zip(slice_idx, base):
            weight.data[i, j, k] = v
        proj.zero_grad()
        out = proj(h, pr).mu.sum()
        out.backward()
        analytic = np.array([weight.grad[i, j, k].item() for i, j, k in slice_idx])
        numeric = oracles.finite_diff_scalar_grad(loss_at, base, step=1e-4)
        loss_at(base)  # restore
        rel = np.abs(analytic - numeric) / np.maximum(np.abs(numeric), 1e-8)
        assert rel.max() <= 1e-3
