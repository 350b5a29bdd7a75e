import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from uniformgan.numerics import ParameterSet, Rng, finite_diff_check
from uniformgan.regularizers import (
    FeatureBatch,
    RegularizerConfig,
    batch_entropy,
    batch_entropy_metric,
    entropy_surrogate,
    gaussian_potential,
    pairwise_potential_metric,
    row_entropy,
    uniformity_loss,
)


def enumerate_uniformity(x, gamma, normalize=True):
    """Oracle: explicit loop over unordered pairs."""
    x = np.asarray(x, dtype=float)
    if normalize:
        x = x / np.linalg.norm(x, axis=1, keepdims=True)
    pots = [math.exp(-gamma * float(((x[i] - x[j]) ** 2).sum())) for i, j in itertools.combinations(range(len(x)), 2)]
    return math.log(sum(pots) / len(pots))


def population_variance(row):
    row = np.asarray(row, dtype=float)
    mu = sum(row) / len(row)
    return sum((v - mu) ** 2 for v in row) / len(row)


class TestGaussianPotential:
    def test_identical_points(self):
        assert gaussian_potential([0.3, -1.2], [0.3, -1.2], 2.0) == 1.0

    def test_antipodal(self):
        assert gaussian_potential([1, 0], [-1, 0], 2.0) == pytest.approx(math.exp(-8), rel=1e-15)
        assert math.exp(-8) == pytest.approx(3.3546e-4, rel=1e-4)

    def test_unit_vector_identity(self):
        rng = Rng(0)
        for _ in range(20):
            x, y = rng.sphere(2, 5)
            gamma = 0.5 + 3 * rng.uniform(1, 1)[0, 0]
            assert gaussian_potential(x, y, gamma) == pytest.approx(math.exp(2 * gamma * x @ y - 2 * gamma), rel=1e-12)

    def test_errors(self):
        with pytest.raises(ValueError):
            gaussian_potential([1, 2], [1, 2, 3], 1.0)
        with pytest.raises(ValueError):
            gaussian_potential([1, 2], [1, 2], 0.0)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-5, 5), min_size=3, max_size=3), st.lists(st.floats(-5, 5), min_size=3, max_size=3), st.floats(0.01, 10))
    def test_symmetry_exact(self, x, y, gamma):
        assert gaussian_potential(x, y, gamma) == gaussian_potential(y, x, gamma)


class TestUniformityLoss:
    def test_two_identical_rows(self):
        assert uniformity_loss(np.array([[0.2, 0.4], [0.2, 0.4]]), 2.0).item() == 0.0

    def test_antipodal_pair(self):
        assert uniformity_loss(np.array([[1.0, 0.0], [-1.0, 0.0]]), 2.0).item() == pytest.approx(-8.0, abs=1e-12)

    def test_three_rows_against_enumeration(self):
        x = np.array([[1.0, 0.2, -0.3], [0.1, 0.9, 0.4], [-0.5, 0.5, 1.0]])
        assert uniformity_loss(x, 2.0).item() == pytest.approx(enumerate_uniformity(x, 2.0), abs=1e-12)

    @pytest.mark.parametrize("normalize", [True, False])
    def test_random_batches_against_enumeration(self, normalize):
        rng = Rng(1)
        for _ in range(10):
            x = rng.normal(7, 4)
            assert uniformity_loss(x, 2.0, normalize).item() == pytest.approx(enumerate_uniformity(x, 2.0, normalize), abs=1e-10)

    def test_raw_features_far_apart_stay_finite(self):
        x = np.array([[0.0, 0.0], [30.0, 0.0], [0.0, 30.0]])
        assert uniformity_loss(x, 2.0, normalize=False).item() == pytest.approx(enumerate_uniformity_logsafe(x, 2.0), abs=1e-9)

    def test_requires_pairs(self):
        with pytest.raises(ValueError):
            uniformity_loss(np.ones((1, 3)), 2.0)

    def test_permutation_and_rotation_invariance(self):
        rng = Rng(2)
        x = rng.normal(9, 4)
        base = uniformity_loss(x, 2.0).item()
        perm = rng.permutation(9)
        q, _ = np.linalg.qr(rng.normal(4, 4))
        assert uniformity_loss(x[perm], 2.0).item() == pytest.approx(base, abs=1e-10)
        assert uniformity_loss(x @ q, 2.0).item() == pytest.approx(base, abs=1e-10)

    def test_gradient_matches_finite_differences(self):
        rng = Rng(4)
        ps = ParameterSet({"f": rng.normal(8, 4)})
        assert finite_diff_check(lambda: uniformity_loss(ps["f"], 2.0), ps) < 1e-4


def enumerate_uniformity_logsafe(x, gamma):
    d = [float(((x[i] - x[j]) ** 2).sum()) for i, j in itertools.combinations(range(len(x)), 2)]
    lo = min(d)
    return -gamma * lo + math.log(sum(math.exp(-gamma * (v - lo)) for v in d) / len(d))


class TestEntropySurrogate:
    def test_two_element_compensation(self):
        assert entropy_surrogate([-1.0, 1.0]).item() == pytest.approx(0.0, abs=1e-15)

    def test_constant_row_clamps(self):
        floor = 1e-12
        c = 0.7
        out = entropy_surrogate([c] * 6, floor).item()
        phi = math.sqrt(6) * c
        assert math.isfinite(out)
        assert out == pytest.approx(0.5 * math.log(floor) + math.log(phi), abs=1e-9)

    def test_random_row_matches_half_log_variance(self):
        rng = Rng(5)
        row = rng.normal(1, 16)[0]
        assert entropy_surrogate(row).item() == pytest.approx(0.5 * math.log(population_variance(row)), abs=1e-10)

    def test_needs_two_elements(self):
        with pytest.raises(ValueError):
            entropy_surrogate([1.0])

    def test_gradient_matches_finite_differences(self):
        ps = ParameterSet({"f": Rng(6).normal(1, 16)})
        assert finite_diff_check(lambda: entropy_surrogate(ps["f"]), ps) < 1e-4

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32), st.floats(0.05, 20.0), st.sampled_from([-1.0, 1.0]))
    def test_scaling_law(self, seed, a, sign):
        row = Rng(seed).normal(1, 12)[0]
        lhs = entropy_surrogate(sign * a * row).item()
        assert lhs == pytest.approx(entropy_surrogate(row).item() + math.log(a), abs=1e-9)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32), st.floats(1e-3, 1e3))
    def test_invariant_to_rescaling_constant(self, seed, phi):
        row = Rng(seed).normal(1, 16)[0]
        assert entropy_surrogate(row, phi=phi).item() == pytest.approx(entropy_surrogate(row).item(), abs=1e-9)

    def test_rescaling_constant_must_be_positive(self):
        with pytest.raises(ValueError):
            entropy_surrogate([1.0, 2.0], phi=0.0)

    def test_shape_free_at_fixed_variance(self):
        rng = Rng(7)
        v = 0.37
        rows = [rng.normal(1, 20)[0], rng.uniform(1, 20)[0], np.r_[np.zeros(19), 1.0], rng.normal(1, 20)[0] ** 3]
        for row in rows:
            row = (row - row.mean()) / math.sqrt(population_variance(row)) * math.sqrt(v) + 3.0
            assert entropy_surrogate(row).item() == pytest.approx(0.5 * math.log(v), abs=1e-9)


class TestBatchEntropy:
    def test_single_row(self):
        row = Rng(8).normal(1, 10)
        assert batch_entropy(row).item() == entropy_surrogate(row[0]).item()

    def test_identical_rows(self):
        row = Rng(9).normal(1, 10)
        assert batch_entropy(np.repeat(row, 5, axis=0)).item() == pytest.approx(entropy_surrogate(row[0]).item(), abs=1e-14)

    def test_random_batch_is_mean_of_rows(self):
        x = Rng(10).normal(8, 16)
        oracle = sum(0.5 * math.log(population_variance(r)) for r in x) / 8
        assert batch_entropy(x).item() == pytest.approx(oracle, abs=1e-10)
        assert batch_entropy_metric(x) == pytest.approx(oracle, abs=1e-10)

    def test_row_entropy_shape(self):
        assert row_entropy(np.ones((4, 3)) * np.arange(3.0)).shape == (4, 1)

    def test_gradient_matches_finite_differences(self):
        ps = ParameterSet({"f": Rng(11).normal(8, 16)})
        assert finite_diff_check(lambda: batch_entropy(ps["f"]), ps) < 1e-4


class TestPairwisePotentialMetric:
    def test_antipodal(self):
        assert pairwise_potential_metric(np.array([[0.0, 1.0], [0.0, -1.0]])) == pytest.approx(math.exp(-8), rel=1e-12)

    def test_identical_rows(self):
        assert pairwise_potential_metric(np.tile([[0.3, 0.1, 2.0]], (10, 1))) == 1.0

    def test_uniform_circle_matches_quadrature(self):
        # E exp(-4 + 4 cos(theta)), theta uniform on [0, 2 pi)
        quad, _ = integrate.quad(lambda t: math.exp(-4 + 4 * math.cos(t)) / (2 * math.pi), 0, 2 * math.pi)
        assert quad == pytest.approx(0.2070, abs=1e-4)
        values = [pairwise_potential_metric(Rng(s).sphere(100, 2)) for s in range(5)]
        for v in values:
            assert abs(v - quad) <= 0.03

    def test_needs_two_rows(self):
        with pytest.raises(ValueError):
            pairwise_potential_metric(np.ones((1, 2)))


class TestConfigAndBatch:
    def test_defaults(self):
        cfg = RegularizerConfig()
        assert (cfg.gamma, cfg.lambda_g, cfg.lambda_d, cfg.delta_g, cfg.delta_d) == (2.0, 0.5, 0.5, 0.1, 0.1)
        assert cfg.normalize_features

    @pytest.mark.parametrize("kwargs", [{"gamma": 0.0}, {"variance_floor": 0.0}, {"lambda_g": -1.0}])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            RegularizerConfig(**kwargs)

    def test_normalized_flag_is_checked(self):
        FeatureBatch(Rng(0).sphere(4, 3), normalized=True)
        with pytest.raises(ValueError):
            FeatureBatch(np.ones((4, 3)), normalized=True)
