#!/usr/bin/env python3
"""
Tests for the convolutional discriminators and spectral normalization
"""

import logging
import sys

import numpy as np
import pytest

from discriminator import (DiscriminatorSpec, SpectralNormState, discriminate, discriminator_param_count,
                           discriminator_preset, effective_weights, init_discriminator, power_iterate,
                           refresh_spectral_norms, resblock, spectral_normalize)
from errors import ConfigError, DimensionError
from tensor_engine import Tensor, gradient_check


def matrix_with_singular_values(rng, values, rows, cols):
    u, _ = np.linalg.qr(rng.standard_normal((rows, rows)))
    v, _ = np.linalg.qr(rng.standard_normal((cols, cols)))
    s = np.zeros((rows, cols))
    s[np.arange(len(values)), np.arange(len(values))] = values
    return u @ s @ v.T


class TestPresets:
    @pytest.mark.parametrize('variant,scale,resolution,expected', [
        ('sngan', 'full', 32, 9_305_089),
        ('sngan_no_sn', 'full', 32, 9_305_089),
        ('sngan', 'toy', 8, 65_793),
        ('dcgan', 'full', 32, 662_977),
        ('dcgan', 'toy', 8, 2_797),
    ])
    def test_param_counts(self, variant, scale, resolution, expected):
        assert discriminator_param_count(discriminator_preset(variant, resolution, scale)) == expected

    def test_sngan_much_larger_than_dcgan(self):
        ratio = (discriminator_param_count(discriminator_preset('sngan'))
                 / discriminator_param_count(discriminator_preset('dcgan')))
        assert ratio > 10

    def test_no_sn_variant(self):
        spec = discriminator_preset('sngan_no_sn')
        assert spec.variant == 'sngan' and not spec.use_sn
        assert init_discriminator(discriminator_preset('sngan_no_sn', 8, 'toy'), seed=0).sn_states == {}

    def test_dcgan_rejects_sn(self):
        spec = discriminator_preset('dcgan')
        spec.use_sn = True
        with pytest.raises(ConfigError, match='use_sn'):
            spec.validate()

    def test_unknown_variant(self):
        with pytest.raises(ConfigError):
            discriminator_preset('wgan')

    def test_resolution_must_survive_downsampling(self):
        with pytest.raises(ConfigError, match='disc.resolution'):
            DiscriminatorSpec(resolution=6).validate()


class TestForward:
    @pytest.mark.parametrize('variant', ['sngan', 'sngan_no_sn', 'dcgan'])
    def test_scores_shape(self, variant, rng):
        params = init_discriminator(discriminator_preset(variant, 8, 'toy'), seed=0)
        images = rng.uniform(-1, 1, size=(5, 3, 8, 8)).astype(np.float32)
        scores = discriminate(params, images)
        assert scores.shape == (5,)
        assert np.all(np.isfinite(scores.data))

    def test_wrong_image_shape(self, rng):
        params = init_discriminator(discriminator_preset('sngan', 8, 'toy'), seed=0)
        with pytest.raises(DimensionError):
            discriminate(params, rng.uniform(-1, 1, size=(2, 3, 16, 16)))

    def test_resblock_odd_extent(self, rng):
        params = init_discriminator(discriminator_preset('sngan', 8, 'toy'), seed=0)
        with pytest.raises(DimensionError):
            resblock(Tensor(rng.standard_normal((1, 3, 5, 5)).astype(np.float32)), params, 'block0', True)

    def test_resblock_halves_grid(self, rng):
        params = init_discriminator(discriminator_preset('sngan', 8, 'toy'), seed=0)
        x = Tensor(rng.uniform(-1, 1, size=(2, 3, 8, 8)).astype(np.float32))
        assert resblock(x, params, 'block0', downsample=True).shape == (2, 32, 4, 4)

    def test_resblock_identity_when_learned_path_is_zero(self, rng):
        params = init_discriminator(discriminator_preset('sngan_no_sn', 8, 'toy'), seed=0, dtype=np.float64)
        for name in ('block1.conv2.weight', 'block2.conv2.weight'):
            params[name].data[:] = 0.0
        x = rng.standard_normal((2, 32, 4, 4))
        assert np.array_equal(resblock(Tensor(x), params, 'block2', downsample=False).data, x)
        pooled = x.reshape(2, 32, 2, 2, 2, 2).mean(axis=(3, 5))
        np.testing.assert_allclose(resblock(Tensor(x), params, 'block1', downsample=True).data, pooled,
                                   rtol=1e-12, atol=1e-12)

    def test_without_sn_weights_are_unconstrained(self, rng):
        params = init_discriminator(discriminator_preset('sngan_no_sn', 8, 'toy'), seed=0, dtype=np.float64)
        for tensor in params.parameters():
            tensor.data *= 10.0
        discriminate(params, rng.uniform(-1, 1, size=(2, 3, 8, 8)), training=True)
        effective = effective_weights(params)
        assert all(np.array_equal(w, params[name].data) for name, w in effective.items())
        tops = [np.linalg.svd(w.reshape(w.shape[0], -1), compute_uv=False)[0] for w in effective.values()]
        assert max(tops) > 1.0

    def test_eval_mode_leaves_state_alone(self, rng):
        params = init_discriminator(discriminator_preset('sngan', 8, 'toy'), seed=0)
        before = {name: state.u.copy() for name, state in params.sn_states.items()}
        discriminate(params, rng.uniform(-1, 1, size=(2, 3, 8, 8)))
        assert all(np.array_equal(before[n], s.u) for n, s in params.sn_states.items())
        discriminate(params, rng.uniform(-1, 1, size=(2, 3, 8, 8)), training=True)
        assert any(not np.array_equal(before[n], s.u) for n, s in params.sn_states.items())

    @pytest.mark.parametrize('variant', ['sngan', 'dcgan'])
    def test_gradients(self, variant, rng):
        flags = (True, False) if variant == 'sngan' else (True, True)
        spec = DiscriminatorSpec(in_channels=1, base_width=2, n_blocks=2, downsample_flags=flags,
                                 use_sn=variant == 'sngan', variant=variant, resolution=4)
        params = init_discriminator(spec, seed=2, dtype=np.float64)
        images = Tensor(rng.uniform(-1, 1, size=(3, 1, 4, 4)), requires_grad=True)
        weights = Tensor(rng.standard_normal(3))
        first = 'block0.conv1.weight' if variant == 'sngan' else 'conv0.weight'
        last = 'head.weight' if variant == 'sngan' else 'out.weight'
        error = gradient_check(lambda: (discriminate(params, images) * weights).sum(),
                               [params[first], params[last], images])
        assert error < 1e-4


class TestSpectralNorm:
    def test_power_iteration_converges(self, rng):
        w = matrix_with_singular_values(rng, [5.0, 2.0, 1.0, 0.5], 6, 4)
        u, v = power_iterate(w, rng.standard_normal(6), 1000)
        assert abs(u @ w @ v - 5.0) < 1e-6

    def test_power_iteration_needs_a_round(self, rng):
        with pytest.raises(ConfigError, match='n_iters'):
            power_iterate(rng.standard_normal((3, 2)), np.ones(3) / np.sqrt(3), 0)

    def test_fifty_iterations_match_svd(self, rng):
        for _ in range(100):
            rows, cols = (int(v) for v in rng.integers(2, [33, 49]))
            rank = min(rows, cols)
            top = rng.uniform(1.0, 5.0)
            values = np.sort(rng.uniform(0.0, 0.5 * top, size=rank - 1))[::-1]
            w = matrix_with_singular_values(rng, np.r_[top, values], rows, cols)
            state = SpectralNormState(u=rng.standard_normal(rows), n_power_iters=50)
            normalized, state = spectral_normalize(Tensor(w), state)
            u, v = state.u, w.T @ state.u / np.linalg.norm(w.T @ state.u)
            assert abs(u @ w @ v - top) < 1e-4
            assert abs(np.linalg.svd(normalized.data, compute_uv=False)[0] - 1.0) < 1e-3

    def test_normalized_weight_has_unit_norm(self, rng):
        w = matrix_with_singular_values(rng, [3.0, 1.5, 0.2], 3, 5)
        state = SpectralNormState(u=rng.standard_normal(3), n_power_iters=1000)
        normalized, _ = spectral_normalize(Tensor(w), state)
        assert abs(np.linalg.svd(normalized.data, compute_uv=False)[0] - 1.0) < 1e-6

    def test_single_iteration_advances_estimate(self, rng):
        w = matrix_with_singular_values(rng, [4.0, 1.0], 2, 3)
        state = SpectralNormState(u=np.array([1.0, 1.0]) / np.sqrt(2))
        estimates = []
        for _ in range(20):
            normalized, state = spectral_normalize(Tensor(w), state)
            estimates.append(float(np.linalg.norm(w) / np.linalg.norm(normalized.data)))
        assert abs(estimates[-1] - 4.0) < 1e-6
        assert estimates[-1] >= estimates[0] - 1e-12

    def test_zero_weight_is_degenerate(self, caplog):
        state = SpectralNormState(u=np.array([1.0, 0.0]))
        weight = Tensor(np.zeros((2, 3)))
        with caplog.at_level(logging.WARNING):
            out, state = spectral_normalize(weight, state)
        assert out is weight
        assert state.degenerate
        assert 'zero' in caplog.text

    def test_gradient_through_estimate(self, rng):
        weight = Tensor(rng.standard_normal((3, 2, 2, 2)), requires_grad=True)
        state = SpectralNormState(u=rng.standard_normal(3) / 2)
        projection = Tensor(rng.standard_normal((3, 2, 2, 2)))
        loss = lambda: (spectral_normalize(weight, state, update=False)[0] * projection).sum()
        assert gradient_check(loss, [weight]) < 1e-4

    def test_vector_shape_mismatch(self, rng):
        with pytest.raises(DimensionError):
            spectral_normalize(Tensor(rng.standard_normal((3, 4))), SpectralNormState(u=np.ones(4)))

    def test_effective_weights_after_refresh(self):
        params = init_discriminator(discriminator_preset('sngan', 8, 'toy'), seed=0, dtype=np.float64)
        refresh_spectral_norms(params, 1000)
        for name, weight in effective_weights(params).items():
            top = np.linalg.svd(weight.reshape(weight.shape[0], -1), compute_uv=False)[0]
            assert abs(top - 1.0) < 1e-4, name

    def test_unit_init_vectors(self):
        params = init_discriminator(discriminator_preset('sngan', 8, 'toy'), seed=0)
        for state in params.sn_states.values():
            assert abs(np.linalg.norm(state.u) - 1.0) < 1e-5

    def test_vector_stays_unit_after_every_update(self, rng):
        w = rng.standard_normal((5, 7))
        state = SpectralNormState(u=rng.standard_normal(5) / 3)
        for _ in range(10):
            _, state = spectral_normalize(Tensor(w), state)
            assert abs(np.linalg.norm(state.u) - 1.0) < 1e-12

    def test_training_pass_keeps_vectors_unit(self, rng):
        params = init_discriminator(discriminator_preset('sngan', 8, 'toy'), seed=0)
        for _ in range(3):
            discriminate(params, rng.uniform(-1, 1, size=(2, 3, 8, 8)), training=True)
            for state in params.sn_states.values():
                assert abs(np.linalg.norm(state.u) - 1.0) < 1e-5


if __name__ == '__main__':
    sys.exit(pytest.main([__file__, '-v']))
