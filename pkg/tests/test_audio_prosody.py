"""Audio-side tests: emotion descriptor, speaker encoder, posterior."""

import numpy as np
import pytest
import torch

from emovc import dsp
from emovc.audio_prosody import (ConcatFusionEncoder, EmotionDescriptor,
                                 ProsodyIntegrator, SpeakerEncoder, StubVadBackend,
                                 VAD_TABLE, VadTriple, sample_posterior)
from emovc.errors import BadInputError
from emovc.labels import EMOTIONS

import oracles
from test_text_prosody import seeded_randomize

BINS = 513
D = 32


def random_spec(frames, seed=0):
    gen = torch.Generator().manual_seed(seed)
    return torch.rand(BINS, frames, generator=gen) * 3.0


class TestEmotionDescriptor:
    def test_deterministic(self):
        torch.manual_seed(0)
        desc = EmotionDescriptor(D)
        vad1, emb1 = desc.describe("happy")
        vad2, emb2 = desc.describe("happy")
        assert vad1 == vad2
        torch.testing.assert_close(emb1, emb2, rtol=0, atol=0)

    def test_five_labels_distinct_vad(self):
        torch.manual_seed(0)
        desc = EmotionDescriptor(D)
        triples = [desc.describe(e)[0].as_tuple() for e in EMOTIONS]
        assert len(set(triples)) == 5

    def test_vad_within_unit_cube(self):
        for label in EMOTIONS:
            v = VadTriple(*VAD_TABLE[label])
            assert all(0.0 <= c <= 1.0 for c in v.as_tuple())

    def test_stub_requires_label(self):
        torch.manual_seed(0)
        desc = EmotionDescriptor(D)
        w = dsp.Waveform(np.zeros(100) + 0.1)
        with pytest.raises(BadInputError, match="label"):
            desc.describe(waveform=w)

    def test_unknown_label_rejected(self):
        torch.manual_seed(0)
        desc = EmotionDescriptor(D)
        with pytest.raises(BadInputError, match="unknown emotion"):
            desc.describe("bored")

    def test_external_backend_pluggable(self):
        class EnergyBackend:
            def vad(self, label, waveform):
                if waveform is None:
                    raise BadInputError("this backend needs audio")
                a = min(1.0, float(np.mean(np.abs(waveform.samples))) * 10.0)
                return VadTriple(0.5, a, 0.5)

        torch.manual_seed(0)
        desc = EmotionDescriptor(D, backend=EnergyBackend())
        w = dsp.Waveform(np.full(500, 0.05))
        vad, emb = desc.describe("happy", w)
        assert vad.arousal == pytest.approx(0.5)
        assert emb.shape == (D,)
        vad2, emb2 = desc.describe("happy", w)
        torch.testing.assert_close(emb, emb2, rtol=0, atol=0)


class TestSpeakerEncoder:
    def test_f0_head_length(self):
        torch.manual_seed(0)
        enc = SpeakerEncoder(BINS, D)
        spk = enc(random_spec(12))
        assert spk.predicted_f0.shape == (12,)
        assert spk.vector.shape == (D,)
        assert (spk.predicted_f0 > 0).all()

    def test_doubling_keeps_identity_vector(self):
        enc = seeded_randomize(SpeakerEncoder(BINS, D), 1).double()
        spec = random_spec(9, seed=2).double()
        once = enc(spec).vector
        twice = enc(torch.cat([spec, spec], dim=1)).vector
        torch.testing.assert_close(once, twice, rtol=0, atol=1e-6)

    def test_zero_spectrogram_finite(self):
        torch.manual_seed(0)
        enc = SpeakerEncoder(BINS, D)
        spk = enc(torch.zeros(BINS, 5))
        assert torch.isfinite(spk.vector).all()
        assert torch.isfinite(spk.predicted_f0).all()

    def test_empty_rejected(self):
        torch.manual_seed(0)
        enc = SpeakerEncoder(BINS, D)
        with pytest.raises(BadInputError):
            enc(torch.zeros(BINS, 0))


class TestPosterior:
    def _setup(self, seed=3, frames=7, simple=False):
        cls = ConcatFusionEncoder if simple else ProsodyIntegrator
        integ = seeded_randomize(cls(BINS, D, D), seed)
        gen = torch.Generator().manual_seed(seed + 50)
        emo = torch.randn(D, generator=gen)
        spk = torch.randn(D, generator=gen)
        return integ, random_spec(frames, seed + 1), emo, spk

    def test_fixed_noise_bit_identical(self):
        integ, spec, emo, spk = self._setup()
        eps = torch.randn(D, 7, generator=torch.Generator().manual_seed(9))
        s1 = sample_posterior(integ(spec, emo, spk), noise=eps)
        s2 = sample_posterior(integ(spec, emo, spk), noise=eps)
        torch.testing.assert_close(s1.z2, s2.z2, rtol=0, atol=0)

    def test_zero_noise_returns_mean(self):
        integ, spec, emo, spk = self._setup()
        stats = integ(spec, emo, spk)
        s = sample_posterior(stats, noise=torch.zeros(D, 7))
        torch.testing.assert_close(s.z2, stats.mu, rtol=0, atol=0)

    def test_reparameterization_identity(self):
        integ, spec, emo, spk = self._setup()
        s = sample_posterior(integ(spec, emo, spk),
                             generator=torch.Generator().manual_seed(4))
        torch.testing.assert_close(s.z2, s.stats.mu + s.stats.sigma * s.noise,
                                   rtol=0, atol=0)

    @pytest.mark.parametrize("simple", [False, True])
    def test_emotion_conditioning_changes_stats(self, simple):
        integ, spec, _, spk = self._setup(simple=simple)
        gen = torch.Generator().manual_seed(60)
        emo_a = torch.randn(D, generator=gen)
        emo_b = torch.randn(D, generator=gen)
        sa = integ(spec, emo_a, spk)
        sb = integ(spec, emo_b, spk)
        assert (sa.mu - sb.mu).abs().max() > 0.0

    @pytest.mark.parametrize("simple", [False, True])
    def test_sigma_positive_and_finite(self, simple):
        integ, spec, emo, spk = self._setup(simple=simple)
        stats = integ(spec, emo, spk)
        assert stats.length == 7
        assert (stats.sigma > 0).all()
        assert torch.isfinite(stats.mu).all()

    def test_stats_projection_zero_init_gives_standard_normal(self):
        torch.manual_seed(0)
        integ = ProsodyIntegrator(BINS, D, D)
        stats = integ(random_spec(4), torch.randn(D), torch.randn(D))
        torch.testing.assert_close(stats.mu, torch.zeros(D, 4))
        torch.testing.assert_close(stats.sigma, torch.ones(D, 4))

    def test_mu_gradient_matches_finite_difference(self):
        integ, spec, emo, spk = self._setup()
        integ = integ.double()
        spec, emo, spk = spec.double(), emo.double(), spk.double()
        weight = integ.blocks[0].conv.weight
        slice_idx = [(0, 1, 2), (3, 5, 0), (10, 7, 4)]

        def loss_at(values):
            with torch.no_grad():
                for (i, j, k), v in zip(slice_idx, values):
                    weight[i, j, k] = v
            return float(integ(spec, emo, spk).mu.sum())

        base = np.array([weight.detach()[i, j, k].item() for i, j, k in slice_idx])
        integ.zero_grad()
        integ(spec, emo, spk).mu.sum().backward()
        analytic = np.array([weight.grad[i, j, k].item() for i, j, k in slice_idx])
        numeric = oracles.finite_diff_scalar_grad(loss_at, base, step=1e-4)
        loss_at(base)
        rel = np.abs(analytic - numeric) / np.maximum(np.abs(numeric), 1e-8)
        assert rel.max() <= 1e-3
