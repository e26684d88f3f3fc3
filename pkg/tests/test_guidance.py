import math

import numpy as np
import pytest

from prosodiff import engine, rng as rng_mod
from prosodiff.corpus import CorpusConfig, generate_corpus
from prosodiff.denoiser import DenoiserConfig, predict_noise
from prosodiff.guidance import (
    GuidanceParams,
    cfg_combine,
    diffusion_loss,
    draw_terminal,
    rescale,
    reverse_step,
    sample,
    sample_single_model,
)
from prosodiff.schedule import cosine_schedule, forward_diffuse
from prosodiff.style import StyleConfig
from prosodiff.training import TrainConfig, build_models, train_step, LengthBucketSampler


def tiny_bundle(seed=0, style_condition=True):
    corpus = generate_corpus(
        CorpusConfig(style_count=2, utterances_per_style=8, length_range=(5, 7), vocab_size=12),
        seed=seed,
    )
    bundle = build_models(
        DenoiserConfig(
            residual_layers=2,
            dilation_cycle=(1, 2),
            hidden_channels=6,
            time_embedding_dim=8,
            condition_dim=6,
        ),
        StyleConfig(token_count=3, token_dim=8, attention_heads=2, condition_dim=6, ref_channels=4),
        schedule_steps=12,
        vocab_size=12,
        stats=corpus.stats,
        seed=seed,
        style_condition=style_condition,
    )
    return corpus, bundle


class TestDiffusionLoss:
    def test_zero_when_prediction_equals_noise(self):
        # bypass the network: feed the loss identical prediction and target
        a = np.random.default_rng(0).standard_normal((2, 3, 4))
        assert engine.mse(engine.Tensor(a), engine.Tensor(a.copy())).item() == 0.0

    def test_unit_noise_against_zero_prediction(self):
        eps = np.ones((2, 3, 4))
        loss = engine.mse(engine.Tensor(eps), engine.Tensor(np.zeros_like(eps)))
        assert loss.item() == pytest.approx(1.0)

    def test_matches_scalar_loop_oracle(self):
        _, bundle = tiny_bundle()
        rng = np.random.default_rng(1)
        x0 = rng.standard_normal((1, 3, 5))
        eps = rng.standard_normal((1, 3, 5))
        y = rng.standard_normal((5, 6))
        loss = diffusion_loss(bundle.theta2, bundle.schedule, x0, 4, eps, y).item()
        x_t = forward_diffuse(x0, 4, eps, bundle.schedule)
        with engine.no_grad():
            pred = predict_noise(bundle.theta2, x_t, 4, y).data
        acc = 0.0
        for b in range(1):
            for ch in range(3):
                for pos in range(5):
                    acc += (eps[b, ch, pos] - pred[b, ch, pos]) ** 2
        np.testing.assert_allclose(loss, acc / 15.0, atol=1e-12)

    def test_differentiable(self):
        _, bundle = tiny_bundle()
        rng = np.random.default_rng(2)
        loss = diffusion_loss(
            bundle.theta2,
            bundle.schedule,
            rng.standard_normal((1, 3, 5)),
            2,
            rng.standard_normal((1, 3, 5)),
            rng.standard_normal((5, 6)),
        )
        loss.backward()
        assert bundle.theta2.params["output_proj.weight"].grad is not None


class TestCfgCombine:
    def test_eta_one_returns_conditional_exactly(self):
        rng = np.random.default_rng(3)
        eps_c, eps_nc = rng.standard_normal((2, 3, 4)), rng.standard_normal((2, 3, 4))
        assert np.array_equal(cfg_combine(eps_c, eps_nc, 1.0), eps_c)

    def test_eta_zero_returns_unconditional_exactly(self):
        rng = np.random.default_rng(4)
        eps_c, eps_nc = rng.standard_normal((2, 3, 4)), rng.standard_normal((2, 3, 4))
        assert np.array_equal(cfg_combine(eps_c, eps_nc, 0.0), eps_nc)

    def test_extrapolation_arithmetic(self):
        out = cfg_combine(np.ones((1, 3, 2)), np.zeros((1, 3, 2)), 2.0)
        assert np.all(out == 2.0)

    def test_collinear_fixed_point(self):
        e = np.random.default_rng(5).standard_normal((1, 3, 4))
        for eta in (0.0, 0.3, 1.0, 2.5, 7.0):
            np.testing.assert_array_equal(cfg_combine(e, e.copy(), eta), e)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            cfg_combine(np.zeros((1, 3, 4)), np.zeros((1, 3, 5)), 1.0)


class TestRescale:
    def test_gamma_zero_is_identity(self):
        rng = np.random.default_rng(6)
        combined, eps_c = rng.standard_normal((2, 3, 8)), rng.standard_normal((2, 3, 8))
        final, diag = rescale(combined, eps_c, 0.0)
        assert np.array_equal(final, combined)
        np.testing.assert_array_equal(diag.applied_ratio, 1.0)

    def test_gamma_one_matches_conditional_std(self):
        rng = np.random.default_rng(7)
        combined, eps_c = 3.0 * rng.standard_normal((2, 3, 16)), rng.standard_normal((2, 3, 16))
        final, diag = rescale(combined, eps_c, 1.0)
        np.testing.assert_allclose(final.std(axis=(1, 2)), diag.sigma_cond, rtol=1e-9)

    def test_hand_computed_half_ratio(self):
        # combined = 2 * eps_c raises std by exactly 2; gamma=1 must undo it
        eps_c = np.random.default_rng(8).standard_normal((1, 3, 10))
        final, diag = rescale(2.0 * eps_c, eps_c, 1.0)
        np.testing.assert_allclose(diag.sigma_cfg, 2.0 * diag.sigma_cond, rtol=1e-12)
        np.testing.assert_allclose(final, eps_c, rtol=1e-12)

    def test_intermediate_gamma_lies_strictly_between(self):
        rng = np.random.default_rng(9)
        eps_c = rng.standard_normal((1, 3, 12))
        combined = cfg_combine(eps_c, rng.standard_normal((1, 3, 12)), 4.0)
        lo = rescale(combined, eps_c, 1.0)[0].std()
        hi = rescale(combined, eps_c, 0.0)[0].std()
        mid = rescale(combined, eps_c, 0.5)[0].std()
        assert min(lo, hi) < mid < max(lo, hi)

    def test_identity_when_combined_equals_conditional(self):
        eps_c = np.random.default_rng(10).standard_normal((2, 3, 6))
        for gamma in (0.0, 0.3, 0.7, 1.0):
            final, diag = rescale(eps_c.copy(), eps_c, gamma)
            assert np.array_equal(final, eps_c)
            np.testing.assert_array_equal(diag.applied_ratio, 1.0)

    def test_degenerate_std_guard(self):
        combined = np.zeros((1, 3, 4))  # zero std
        eps_c = np.random.default_rng(11).standard_normal((1, 3, 4))
        final, diag = rescale(combined, eps_c, 1.0)
        assert np.array_equal(final, combined)
        np.testing.assert_array_equal(diag.applied_ratio, 1.0)

    def test_scale_equivariance_in_conditional(self):
        rng = np.random.default_rng(12)
        eps_c = rng.standard_normal((1, 3, 9))
        combined = rng.standard_normal((1, 3, 9))
        base, _ = rescale(combined, eps_c, 1.0)
        doubled, _ = rescale(combined, 2.0 * eps_c, 1.0)
        np.testing.assert_allclose(doubled, 2.0 * base, rtol=1e-12)

    def test_gamma_out_of_range(self):
        z = np.zeros((1, 3, 4))
        with pytest.raises(ValueError):
            rescale(z, z, 1.5)


class TestReverseStep:
    def test_final_step_deterministic(self):
        sch = cosine_schedule(10)
        rng = np.random.default_rng(13)
        x1 = rng.standard_normal((1, 3, 5))
        eps_hat = rng.standard_normal((1, 3, 5))
        out1 = reverse_step(x1, 1, eps_hat, sch, np.random.default_rng(0))
        out2 = reverse_step(x1, 1, eps_hat, sch, np.random.default_rng(999))
        assert np.array_equal(out1, out2)  # rng unused at t=1
        mean = (x1 - sch.beta(1) / math.sqrt(1 - sch.alpha_bar(1)) * eps_hat) / math.sqrt(sch.alpha(1))
        np.testing.assert_allclose(out1, mean, rtol=1e-12)

    def test_inverts_forward_at_t1(self):
        sch = cosine_schedule(50)
        rng = np.random.default_rng(14)
        x0 = rng.standard_normal((2, 3, 6))
        eps = rng.standard_normal((2, 3, 6))
        x1 = forward_diffuse(x0, 1, eps, sch)
        recovered = reverse_step(x1, 1, eps, sch, np.random.default_rng(0))
        np.testing.assert_allclose(recovered, x0, atol=1e-9)

    def test_reproducible_under_seed(self):
        sch = cosine_schedule(10)
        rng = np.random.default_rng(15)
        x = rng.standard_normal((1, 3, 4))
        eps_hat = rng.standard_normal((1, 3, 4))
        a = reverse_step(x, 5, eps_hat, sch, np.random.default_rng(77))
        b = reverse_step(x, 5, eps_hat, sch, np.random.default_rng(77))
        assert np.array_equal(a, b)

    def test_step_out_of_range(self):
        sch = cosine_schedule(10)
        with pytest.raises(ValueError):
            reverse_step(np.zeros((1, 3, 4)), 11, np.zeros((1, 3, 4)), sch, np.random.default_rng(0))


class TestSampler:
    def test_eta_one_matches_conditional_only_bitwise(self):
        _, bundle = tiny_bundle()
        rng = np.random.default_rng(16)
        y = rng.standard_normal((1, 6, 6))
        c = rng.standard_normal((1, 6))
        params = GuidanceParams(eta=1.0, gamma=0.7, tau=1.0, steps=12)
        guided = sample(bundle.theta1, bundle.theta2, y, c, params, bundle.schedule, np.random.default_rng(5))
        solo = sample_single_model(bundle.theta1, y, c, params, bundle.schedule, np.random.default_rng(5))
        assert np.array_equal(guided, solo)

    def test_eta_zero_matches_unconditional_only_bitwise(self):
        _, bundle = tiny_bundle()
        rng = np.random.default_rng(17)
        y = rng.standard_normal((1, 6, 6))
        c = rng.standard_normal((1, 6))
        params = GuidanceParams(eta=0.0, gamma=0.7, tau=1.0, steps=12)
        guided = sample(bundle.theta1, bundle.theta2, y, c, params, bundle.schedule, np.random.default_rng(5))
        solo = sample_single_model(bundle.theta2, y, None, params, bundle.schedule, np.random.default_rng(5))
        assert np.array_equal(guided, solo)

    def test_absent_style_uses_unconditional_path(self):
        _, bundle = tiny_bundle()
        y = np.random.default_rng(18).standard_normal((2, 5, 6))
        params = GuidanceParams(eta=2.0, gamma=0.5, tau=1.0, steps=12)
        a = sample(bundle.theta1, bundle.theta2, y, None, params, bundle.schedule, np.random.default_rng(9))
        b = sample_single_model(bundle.theta2, y, None, params, bundle.schedule, np.random.default_rng(9))
        assert np.array_equal(a, b)

    def test_terminal_temperature_scales_std(self):
        rng1 = np.random.default_rng(20)
        rng4 = np.random.default_rng(20)
        draws1 = draw_terminal((10_000, 1, 1), 1.0, rng1)
        draws4 = draw_terminal((10_000, 1, 1), 4.0, rng4)
        ratio = draws4.std() / draws1.std()
        assert abs(ratio - 0.5) < 0.5 * 0.03

    def test_sampler_finite_across_guidance_range(self):
        _, bundle = tiny_bundle()
        rng = np.random.default_rng(21)
        y = rng.standard_normal((1, 5, 6))
        c = rng.standard_normal((1, 6))
        for eta in (0.0, 1.0, 4.0, 10.0):
            params = GuidanceParams(eta=eta, gamma=0.7, tau=1.0, steps=12)
            out = sample(bundle.theta1, bundle.theta2, y, c, params, bundle.schedule, np.random.default_rng(3))
            assert np.all(np.isfinite(out))

    def test_steps_must_match_schedule(self):
        _, bundle = tiny_bundle()
        y = np.zeros((1, 4, 6))
        with pytest.raises(ValueError, match="steps"):
            sample(
                bundle.theta1,
                bundle.theta2,
                y,
                None,
                GuidanceParams(steps=5),
                bundle.schedule,
                np.random.default_rng(0),
            )

    def test_diagnostics_recorded_per_step(self):
        _, bundle = tiny_bundle()
        rng = np.random.default_rng(22)
        y = rng.standard_normal((1, 4, 6))
        c = rng.standard_normal((1, 6))
        diags: list = []
        params = GuidanceParams(eta=2.0, gamma=0.7, tau=1.0, steps=12)
        sample(bundle.theta1, bundle.theta2, y, c, params, bundle.schedule, np.random.default_rng(1), diags)
        assert len(diags) == 12
        assert diags[0][0] == 12 and diags[-1][0] == 1
        for _, d in diags:
            assert np.all(d.sigma_cond >= 0) and np.all(np.isfinite(d.applied_ratio))


class TestGuidanceParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            GuidanceParams(eta=-0.1)
        with pytest.raises(ValueError):
            GuidanceParams(gamma=1.2)
        with pytest.raises(ValueError):
            GuidanceParams(tau=0.0)
        with pytest.raises(ValueError):
            GuidanceParams(steps=1)


class TestTrainStep:
    def test_reproducible_under_seed(self):
        def run():
            corpus, bundle = tiny_bundle(seed=4)
            cfg = TrainConfig(steps=2, batch_size=4)
            sampler = LengthBucketSampler(corpus.split("train"), bundle.stats, bundle.embedder, 4)
            losses = []
            for step in (1, 2):
                gen = rng_mod.substream(4, rng_mod.TRAIN_STREAM, step)
                losses.append(train_step(bundle, sampler.next_batch(gen), cfg, gen))
            return losses

        assert run() == run()

    def test_losses_positive_and_finite(self):
        corpus, bundle = tiny_bundle(seed=5)
        cfg = TrainConfig(steps=1, batch_size=4)
        sampler = LengthBucketSampler(corpus.split("train"), bundle.stats, bundle.embedder, 4)
        gen = rng_mod.substream(5, rng_mod.TRAIN_STREAM, 1)
        loss_c, loss_nc = train_step(bundle, sampler.next_batch(gen), cfg, gen)
        assert 0 < loss_c < 100 and 0 < loss_nc < 100

    def test_unconditional_loss_untouched_by_conditional_updates(self):
        # freeze theta2 by observing loss_nc on a fixed batch while theta1 trains
        corpus, bundle = tiny_bundle(seed=6)
        cfg = TrainConfig(steps=1, batch_size=4)
        sampler = LengthBucketSampler(corpus.split("train"), bundle.stats, bundle.embedder, 4)
        gen = rng_mod.substream(6, rng_mod.TRAIN_STREAM, 1)
        batch = sampler.next_batch(gen)
        eps = np.random.default_rng(0).standard_normal(batch.x0.shape)

        def probe_nc() -> float:
            return diffusion_loss(bundle.theta2, bundle.schedule, batch.x0, 3, eps, batch.y).item()

        before = probe_nc()
        from prosodiff.optim import optimizer_step
        from prosodiff.style import encode_style

        c, _ = encode_style(bundle.bank, batch.x0)
        loss_c = diffusion_loss(bundle.theta1, bundle.schedule, batch.x0, 3, eps, batch.y, c)
        loss_c.backward()
        optimizer_step(
            bundle.theta1.trainable_parameters() + bundle.bank.trainable_parameters(), 1e-2
        )
        assert probe_nc() == before

    def test_empty_batch_rejected(self):
        corpus, bundle = tiny_bundle(seed=7)
        cfg = TrainConfig(steps=1, batch_size=1)
        from prosodiff.training import Batch

        empty = Batch(x0=np.zeros((0, 3, 4)), phoneme_ids=np.zeros((0, 4), dtype=int), y=np.zeros((0, 4, 6)))
        with pytest.raises(ValueError, match="empty"):
            train_step(bundle, empty, cfg, np.random.default_rng(0))
