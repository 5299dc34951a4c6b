import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from distillab.data import FeatureLayout
from distillab.rng import Rng
from distillab.sampling import (
    AugmentConfigError,
    AugmentPolicy,
    augment,
    interpolate,
    noise_batch,
    sample_region_batch,
)
from distillab.tensor import DomainError, ShapeError

finite_arrays = st.lists(
    st.floats(min_value=-1e6, max_value=1e6), min_size=4, max_size=4
)


class StubRng:
    """Forces specific draws; mirrors the Rng surface the samplers touch."""

    def __init__(self, integer_value=0, random_value=0.0, normal_value=0.0):
        self._int = integer_value
        self._rand = random_value
        self._norm = normal_value

    def integers(self, low, high, size=None):
        return np.full(size, self._int, dtype=np.int64) if size else self._int

    def random(self, size=None):
        return np.full(size, self._rand) if size is not None else self._rand

    def normal(self, loc=0.0, scale=1.0, size=None):
        return np.full(size, self._norm)


class TestInterpolate:
    def test_endpoints_are_exact(self):
        x = np.array([[1.1, 2.2], [3.3, 4.4]])
        y = np.array([[5.0, 6.0], [7.0, 8.0]])
        assert np.array_equal(interpolate(x, y, 0.0), x)
        assert np.array_equal(interpolate(x, y, 1.0), y)

    def test_quarter_point(self):
        out = interpolate(np.array([[0.0, 0.0]]), np.array([[2.0, 4.0]]), 0.25)
        assert out.tolist() == [[0.5, 1.0]]

    def test_midpoint_matches_average(self, rng):
        x = rng.normal(size=(6, 3))
        y = rng.normal(size=(6, 3))
        assert np.abs(interpolate(x, y, 0.5) - (x + y) / 2).max() < 1e-15

    def test_out_of_range_coefficient(self):
        x = np.zeros((1, 2))
        with pytest.raises(DomainError):
            interpolate(x, x, -0.01)
        with pytest.raises(DomainError):
            interpolate(x, x, 1.01)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            interpolate(np.zeros((2, 3)), np.zeros((2, 4)), 0.5)

    @settings(max_examples=200, deadline=None)
    @given(finite_arrays, finite_arrays, st.floats(min_value=0.0, max_value=1.0))
    def test_stays_in_bounding_box(self, a, b, lam):
        x = np.array([a])
        y = np.array([b])
        out = interpolate(x, y, lam)
        assert np.all(out >= np.minimum(x, y))
        assert np.all(out <= np.maximum(x, y))

    @settings(max_examples=100, deadline=None)
    @given(finite_arrays, st.floats(min_value=0.0, max_value=1.0))
    def test_degenerate_segment_is_fixed_point(self, a, lam):
        x = np.array([a])
        assert np.array_equal(interpolate(x, x, lam), x)


class TestAugment:
    def test_identity_policy_is_bit_equal(self, rng):
        batch = rng.normal(size=(5, 7))
        out = augment(batch, AugmentPolicy("identity"), FeatureLayout.flat(), StubRng())
        assert np.array_equal(out, batch)
        assert out is not batch

    def test_center_crop_recovers_original(self, rng):
        # pad 4 then crop at offset (4, 4) undoes the padding exactly
        batch = rng.random(size=(3, 28 * 28))
        policy = AugmentPolicy("image_pad_crop_flip", pad=4, flip_prob=0.0)
        layout = FeatureLayout.image(28, 1)
        out = augment(batch, policy, layout, StubRng(integer_value=4))
        assert np.array_equal(out, batch)

    def test_flip_reverses_columns(self, rng):
        batch = rng.random(size=(2, 16))
        policy = AugmentPolicy("image_pad_crop_flip", pad=0, flip_prob=1.0)
        out = augment(batch, policy, FeatureLayout.image(4, 1), StubRng(random_value=0.0))
        assert np.array_equal(out.reshape(2, 1, 4, 4), batch.reshape(2, 1, 4, 4)[:, :, :, ::-1])

    def test_image_policy_requires_square_layout(self):
        policy = AugmentPolicy("image_pad_crop_flip", pad=2)
        with pytest.raises(AugmentConfigError):
            augment(np.zeros((2, 10)), policy, FeatureLayout.flat(), StubRng())
        with pytest.raises(AugmentConfigError):
            augment(np.zeros((2, 10)), policy, FeatureLayout.image(4, 1), StubRng())

    def test_deterministic_under_fresh_stream(self, rng):
        batch = rng.random(size=(4, 64))
        policy = AugmentPolicy("image_pad_crop_flip", pad=2, flip_prob=0.5)
        layout = FeatureLayout.image(8, 1)
        out1 = augment(batch, policy, layout, Rng(11))
        out2 = augment(batch, policy, layout, Rng(11))
        assert np.array_equal(out1, out2)

    def test_state_restore_reproduces_draws(self, rng):
        batch = rng.random(size=(4, 64))
        policy = AugmentPolicy("image_pad_crop_flip", pad=2, flip_prob=0.5)
        layout = FeatureLayout.image(8, 1)
        stream = Rng(11)
        saved = stream.state
        out1 = augment(batch, policy, layout, stream)
        stream.state = saved
        out2 = augment(batch, policy, layout, stream)
        assert np.array_equal(out1, out2)

    def test_vector_jitter_scale(self):
        batch = np.zeros((2, 3))
        policy = AugmentPolicy("vector_jitter", jitter_sigma=0.5)
        out = augment(batch, policy, FeatureLayout.flat(), StubRng(normal_value=1.0))
        assert np.array_equal(out, np.full((2, 3), 0.5))

    def test_policy_validation(self):
        with pytest.raises(ValueError):
            AugmentPolicy("mixup")
        with pytest.raises(ValueError):
            AugmentPolicy("image_pad_crop_flip", pad=-1)
        with pytest.raises(ValueError):
            AugmentPolicy("identity", flip_prob=1.5)


class TestRegionBatch:
    def test_stubbed_endpoints(self, rng):
        x = rng.normal(size=(4, 2))
        y = rng.normal(size=(4, 2))
        out, lam = sample_region_batch(x, y, StubRng(random_value=0.0))
        assert lam == 0.0
        assert np.array_equal(out, x)
        out, lam = sample_region_batch(x, y, StubRng(random_value=0.5))
        assert lam == 0.5
        assert np.abs(out - (x + y) / 2).max() < 1e-15

    def test_single_coefficient_reconstructable_from_outputs(self, rng):
        x = rng.normal(size=(8, 5))
        y = rng.normal(size=(8, 5))
        out, lam = sample_region_batch(x, y, Rng(3))
        implied = (out - x) / (y - x)
        assert np.abs(implied - lam).max() < 1e-9

    def test_per_sample_variant_returns_one_per_row(self, rng):
        x = rng.normal(size=(8, 5))
        y = rng.normal(size=(8, 5))
        out, lams = sample_region_batch(x, y, Rng(3), per_sample=True)
        assert lams.shape == (8,)
        implied = (out - x) / (y - x)
        assert np.abs(implied - lams[:, None]).max() < 1e-9
        assert len(np.unique(lams)) > 1

    def test_coefficient_uniformity(self):
        stream = Rng(0)
        x = np.zeros((1, 1))
        draws = np.array([sample_region_batch(x, x, stream)[1] for _ in range(100_000)])
        assert abs(draws.mean() - 0.5) < 0.01
        assert draws.min() < 0.01
        assert draws.max() > 0.99

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            sample_region_batch(np.zeros((2, 3)), np.zeros((3, 3)), Rng(0))


class TestNoiseBatch:
    def test_zero_sigma_is_identity(self, rng):
        batch = rng.normal(size=(4, 6))
        out = noise_batch(batch, 0.0, Rng(5))
        assert np.array_equal(out, batch)

    def test_reproducible_under_seed(self, rng):
        batch = rng.normal(size=(4, 6))
        assert np.array_equal(noise_batch(batch, 0.05, Rng(5)), noise_batch(batch, 0.05, Rng(5)))

    def test_negative_sigma_rejected(self):
        with pytest.raises(DomainError):
            noise_batch(np.zeros((1, 1)), -0.1, Rng(0))

    def test_sample_standard_deviation(self):
        out = noise_batch(np.zeros((1000, 1000)), 0.1, Rng(7))
        assert abs(out.std() - 0.1) / 0.1 < 0.01
