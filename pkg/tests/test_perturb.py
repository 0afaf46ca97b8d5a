from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chunkdrift.errors import ConfigError, DomainError, Unsupported
from chunkdrift.perturb import (
    CONSTANT,
    SMOOTHERSTEP_QUINTIC,
    SMOOTHSTEP_CUBIC,
    AttackWindow,
    PerturbationProfile,
    clamped_smootherstep,
    expected_window_drift,
    perturbation_at,
    perturbation_series,
    shape,
    shape_sum,
    smootherstep,
    smootherstep_d1,
    smootherstep_d2,
    smoothstep,
    smoothstep_d2,
)


def exact_quintic(t: Fraction) -> Fraction:
    return 6 * t**5 - 15 * t**4 + 10 * t**3


def exact_cubic(t: Fraction) -> Fraction:
    return 3 * t**2 - 2 * t**3


@pytest.mark.parametrize("tau", ["0", "1/8", "1/4", "1/2", "3/4", "1"])
def test_smootherstep_matches_rational_oracle(tau):
    t = Fraction(tau)
    assert smootherstep(float(t)) == float(exact_quintic(t))


def test_smootherstep_frozen_values():
    assert smootherstep(0.25) == 0.103515625
    assert smootherstep_d1(0.5) == 1.875
    assert smootherstep_d2(0.25) == 5.625


def test_smootherstep_symmetry():
    t = np.linspace(0, 1, 101)
    np.testing.assert_allclose(smootherstep(t) + smootherstep(1 - t), 1.0, atol=1e-15)


def test_domain_errors():
    with pytest.raises(DomainError):
        smootherstep(1.2)
    with pytest.raises(DomainError):
        smootherstep_d1(-0.1)
    with pytest.raises(DomainError):
        smootherstep(np.nan)


def test_clamped_smootherstep():
    assert clamped_smootherstep(-3.0) == 0.0
    assert clamped_smootherstep(7.0) == 1.0
    assert clamped_smootherstep(0.25) == 0.103515625
    np.testing.assert_array_equal(clamped_smootherstep(np.array([-1.0, 2.0])), [0.0, 1.0])


@pytest.mark.parametrize("tau", np.linspace(0.05, 0.95, 7))
def test_derivatives_match_central_differences(tau):
    h = 1e-5
    d1 = (smootherstep(tau + h) - smootherstep(tau - h)) / (2 * h)
    d2 = (smootherstep_d1(tau + h) - smootherstep_d1(tau - h)) / (2 * h)
    assert d1 == pytest.approx(smootherstep_d1(tau), abs=1e-6)
    assert d2 == pytest.approx(smootherstep_d2(tau), abs=1e-6)


def test_cubic_second_derivative_at_onset():
    assert smoothstep_d2(0.0) == 6.0
    assert smoothstep(0.5) == 0.5
    h = Fraction(1, 10**6)
    fd = (exact_cubic(2 * h) - 2 * exact_cubic(h) + exact_cubic(Fraction(0))) / h**2
    assert float(fd) == pytest.approx(6.0, abs=1e-4)


def test_shape_dispatch():
    assert shape(CONSTANT, 0.3) == 1.0
    assert shape(SMOOTHSTEP_CUBIC, 0.5) == 0.5
    assert shape(SMOOTHERSTEP_QUINTIC, 2.0) == 1.0
    with pytest.raises(Unsupported):
        shape("gaussian_noise", 0.5)
    with pytest.raises(ConfigError):
        shape("sawtooth", 0.5)


@pytest.mark.parametrize("T", [1, 2, 7, 16, 50])
def test_discrete_window_sum_against_rational_brute_force(T):
    oracle_q = sum(exact_quintic(Fraction(t, T)) for t in range(T))
    oracle_c = sum(exact_cubic(Fraction(t, T)) for t in range(T))
    assert shape_sum(SMOOTHERSTEP_QUINTIC, T) == pytest.approx(float(oracle_q), abs=1e-12)
    assert shape_sum(SMOOTHSTEP_CUBIC, T) == pytest.approx(float(oracle_c), abs=1e-12)
    assert shape_sum(CONSTANT, T) == T


def test_direction_is_normalized():
    p = PerturbationProfile(SMOOTHERSTEP_QUINTIC, 0.01, [3.0, 4.0, 0.0])
    np.testing.assert_allclose(p.direction, [0.6, 0.8, 0.0])
    with pytest.raises(ConfigError):
        PerturbationProfile(SMOOTHERSTEP_QUINTIC, 0.01, [0.0, 0.0, 0.0])
    with pytest.raises(ConfigError):
        PerturbationProfile(SMOOTHERSTEP_QUINTIC, -0.01, [1.0, 0.0, 0.0])


def test_closed_form_calibration():
    p = PerturbationProfile.from_total_deviation(SMOOTHERSTEP_QUINTIC, 0.3, (0, 1, 0), 16)
    assert p.alpha == pytest.approx(2 * 0.3 / 16)
    c = PerturbationProfile.from_total_deviation(CONSTANT, 0.3, (0, 1, 0), 16)
    assert c.alpha == pytest.approx(0.3 / 16)


@pytest.mark.parametrize("kind", [CONSTANT, SMOOTHSTEP_CUBIC, SMOOTHERSTEP_QUINTIC])
def test_exact_calibration_gives_requested_drift(kind):
    T = 16
    p = PerturbationProfile.from_total_deviation(kind, 0.3, (0, 1, 0), T, exact=True)
    series = perturbation_series(p, AttackWindow(3, T), 3 + T + 5)
    assert np.linalg.norm(series.sum(axis=0)) == pytest.approx(0.3, abs=1e-12)


def test_perturbation_support_is_half_open():
    p = PerturbationProfile(CONSTANT, 0.01, (1, 0, 0))
    w = AttackWindow(5, 10)
    assert np.all(perturbation_at(p, w, 4) == 0)
    assert perturbation_at(p, w, 5)[0] == 0.01
    assert perturbation_at(p, w, 14)[0] == 0.01
    assert np.all(perturbation_at(p, w, 15) == 0)


def test_quintic_starts_at_zero():
    p = PerturbationProfile(SMOOTHERSTEP_QUINTIC, 0.01, (1, 0, 0))
    np.testing.assert_array_equal(perturbation_at(p, AttackWindow(2, 10), 2), np.zeros(3))


def test_gaussian_noise_is_reproducible_per_step():
    p = PerturbationProfile("gaussian_noise", 0.0, (1, 0, 0), noise_sigma=0.01)
    w = AttackWindow(0, 100)
    a = perturbation_at(p, w, 7, rng_seed=3)
    np.testing.assert_array_equal(a, perturbation_at(p, w, 7, rng_seed=3))
    assert not np.array_equal(a, perturbation_at(p, w, 8, rng_seed=3))
    with pytest.raises(Unsupported):
        expected_window_drift(p, w)


def test_expected_window_drift_only_for_quintic():
    w = AttackWindow(0, 20)
    assert expected_window_drift(PerturbationProfile(SMOOTHERSTEP_QUINTIC, 0.01, (0, 0, 2)), w) == pytest.approx(0.1)
    with pytest.raises(Unsupported):
        expected_window_drift(PerturbationProfile(CONSTANT, 0.01, (1, 0, 0)), w)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_smootherstep_monotone(a, b):
    lo, hi = min(a, b), max(a, b)
    assert smootherstep(lo) <= smootherstep(hi)
    assert 0.0 <= smootherstep(lo) <= 1.0


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 400))
def test_quintic_window_sum_is_half_of_window_minus_one(T):
    assert shape_sum(SMOOTHERSTEP_QUINTIC, T) == pytest.approx((T - 1) / 2, abs=1e-9)
