import math

import numpy as np
import pytest

from utils.estimator_utils import (
    SliceEstimator,
    SliceMethod,
    confidence_interval,
    default_subsample_stride,
    estimate,
    estimate_avar,
    estimate_derivative,
    estimate_derivative_subsampled,
    estimate_slices,
    estimate_trawl,
    estimate_trawl_bc,
    horizon_index,
    lag_index,
    quarticity,
    sample_acf,
    subsample,
)
from utils.series_utils import TimeSeries
from utils.utils import DegenerateEstimateError, InsufficientDataError, TrawlDomainError


def brute_acf(x):
    n = len(x)
    m = sum(x) / n
    return [sum((x[k + j] - m) * (x[k] - m) for k in range(n - j)) / n for j in range(n)]


def brute_trawl(x, delta):
    n = len(x)
    g = brute_acf(x)
    dx = [x[k + 1] - x[k] for k in range(n - 1)]
    out = [sum(d * d for d in dx) / (2 * delta * n)]
    out += [-(g[l + 1] - g[l]) / delta for l in range(1, n - 1)]
    return out


def brute_derivative(x, delta):
    n = len(x)
    dx = [x[k + 1] - x[k] for k in range(n - 1)]
    return [sum(dx[k] * dx[k - l - 1] for k in range(l + 1, n - 1)) / (n * delta ** 2) for l in range(n - 2)]


def test_toy_series_values(toy_series):
    acf = sample_acf(toy_series)
    assert acf.mean == 1.0
    np.testing.assert_allclose(acf.gamma_hat, [0.5, -0.25, 0.0, 0.0], atol=1e-15)
    assert acf.at(10) == 0.0
    a_hat = estimate_trawl(toy_series)
    assert a_hat[0] == pytest.approx(0.75)
    assert a_hat[1] == pytest.approx(-0.25)
    assert estimate_derivative(toy_series)[0] == pytest.approx(-1.0)
    assert quarticity(toy_series) == pytest.approx(2.25)


def brute_quarticity(x, delta):
    n = len(x)
    return sum((x[k + 1] - x[k]) ** 4 for k in range(n - 1)) / (2 * delta * n)


def test_grids_match_brute_force():
    rng = np.random.default_rng(1000)
    for trial in range(1000):
        n = int(rng.integers(3, 51))
        x = rng.poisson(2.0, n).astype(float) if trial % 2 else rng.normal(0.3, 1.0, n)
        delta = float(rng.choice([0.01, 0.25, 1.0]))
        series = TimeSeries(delta, x)
        xs = list(x)
        np.testing.assert_allclose(sample_acf(series).gamma_hat, brute_acf(xs), rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(estimate_trawl(series), brute_trawl(xs, delta), rtol=1e-12, atol=1e-9)
        np.testing.assert_allclose(estimate_derivative(series), brute_derivative(xs, delta),
                                   rtol=1e-12, atol=1e-7)
        assert quarticity(series) == pytest.approx(brute_quarticity(xs, delta), rel=1e-12)


def test_fft_path_agrees_with_brute_force():
    rng = np.random.default_rng(8)
    x = rng.normal(size=5000)
    series = TimeSeries(0.1, x)
    g = sample_acf(series).gamma_hat
    dev = x - x.mean()
    for j in (0, 1, 17, 4999):
        assert g[j] == pytest.approx(np.dot(dev[j:], dev[:dev.size - j]) / x.size, abs=1e-10)


def test_grid_lengths_and_lag_limits(toy_series):
    assert estimate_trawl(toy_series, 1).size == 2
    with pytest.raises(InsufficientDataError):
        estimate_trawl(toy_series, 3)
    with pytest.raises(InsufficientDataError):
        estimate_derivative(toy_series, 2)
    with pytest.raises(InsufficientDataError, match="insufficient data"):
        estimate_trawl(TimeSeries(1.0, [1.0, 2.0]))


def test_lag_and_horizon_index():
    assert lag_index(0.3, 0.1) == 3
    assert lag_index(0.35, 0.1) == 3
    assert horizon_index(0.3, 0.1) == 3
    assert horizon_index(0.31, 0.1) == 4
    with pytest.raises(TrawlDomainError):
        lag_index(-0.1, 0.1)


def test_bias_correction(toy_series):
    bc = estimate_trawl_bc(estimate_trawl(toy_series), estimate_derivative(toy_series), 1.0)
    assert bc.size == 2
    assert bc[0] == pytest.approx(0.75 + 0.5)


def test_subsampled_derivative():
    series = TimeSeries(1.0, [1, 2, 0, 1, 3, 1])
    sub = subsample(series, 2)
    np.testing.assert_array_equal(sub.values, [1.0, 0.0, 3.0])
    assert sub.delta == 2.0
    # dX = (-1, 3) on a grid of width 2 with M + 1 = 3
    assert estimate_derivative_subsampled(series, 2, 0.0) == pytest.approx(-0.25)
    assert estimate_derivative_subsampled(series, 1, 0.0) == pytest.approx(estimate_derivative(series)[0])
    with pytest.raises(InsufficientDataError):
        subsample(series, 3)
    assert default_subsample_stride(1000) == 10
    assert default_subsample_stride(1001) == 11


def test_confidence_interval():
    lo, hi = confidence_interval(0.5, 2.0, 5000, 0.1, 0.05)
    assert (round(lo, 4), round(hi, 4)) == (0.376, 0.624)
    with pytest.raises(TrawlDomainError):
        confidence_interval(0.5, 2.0, 5000, 0.1, 1.0)
    with pytest.raises(DegenerateEstimateError):
        confidence_interval(0.5, 0.0, 5000, 0.1, 0.05)


@pytest.mark.parametrize("t", [0.1, 0.5, 1.0, 2.0])
def test_avar_on_the_exact_exponential_grid(t):
    delta = 0.001
    N = 100_000
    a_grid = np.exp(-np.arange(N + 1) * delta)
    av = estimate_avar(a_grid, 2.875, delta, N_n=N, t=t)
    target = 2.875 * math.exp(-t) + 1.0 + (2.0 * t - 1.0) * math.exp(-2.0 * t)
    assert av.sigma2 == pytest.approx(target, abs=0.01)
    assert not av.degenerate
    assert av.v1 + av.v2 + av.v3 + av.v4 == pytest.approx(av.sigma2)


@pytest.mark.parametrize("t", [0.1, 1.0])
def test_avar_ignores_a_longer_square_sum_once_the_trawl_is_negligible(t):
    delta = 0.001
    N = 20_000
    a_grid = np.exp(-np.arange(2 * N + 1) * delta)
    assert a_grid[N] < 1e-4
    short = estimate_avar(a_grid, 2.875, delta, N_n=N, t=t)
    long = estimate_avar(a_grid, 2.875, delta, N_n=2 * N, t=t)
    assert abs(long.sigma2 - short.sigma2) < 1e-4


def test_trawl_sums_telescope_to_autocovariances(white_noise):
    acf = sample_acf(white_noise)
    a_hat = estimate_trawl(white_noise)
    delta = white_noise.delta
    for L in (1, 5, 40, a_hat.size - 1):
        assert np.sum(a_hat[1:L + 1]) * delta == pytest.approx(
            acf.gamma_hat[1] - acf.gamma_hat[L + 1], abs=1e-10)


@pytest.mark.parametrize("scale,shift", [(2.0, 0.0), (-0.5, 3.0), (10.0, -7.0)])
def test_estimates_scale_with_the_series(white_noise, scale, shift):
    moved = TimeSeries(white_noise.delta, scale * white_noise.values + shift)
    c2, c4 = scale ** 2, scale ** 4
    np.testing.assert_allclose(sample_acf(moved).gamma_hat, c2 * sample_acf(white_noise).gamma_hat,
                               rtol=1e-9, atol=1e-10 * c2)
    np.testing.assert_allclose(estimate_trawl(moved), c2 * estimate_trawl(white_noise), rtol=1e-9, atol=1e-8 * c2)
    np.testing.assert_allclose(estimate_derivative(moved), c2 * estimate_derivative(white_noise),
                               rtol=1e-9, atol=1e-6 * c2)
    assert quarticity(moved) == pytest.approx(c4 * quarticity(white_noise), rel=1e-10)


def test_avar_clamps_and_rejects():
    a_grid = np.array([1.0, -5.0, 0.0])
    av = estimate_avar(a_grid, 100.0, 1.0, index=1, eps=1e-6)
    assert av.degenerate and av.sigma2 == 1e-6
    with pytest.raises(DegenerateEstimateError):
        estimate_avar(np.array([0.0, 0.1]), 1.0, 1.0, index=1)
    with pytest.raises(InsufficientDataError):
        estimate_avar(np.array([1.0, 0.5]), 1.0, 1.0, index=2)
    with pytest.raises(TrawlDomainError):
        estimate_avar(np.array([1.0, 0.5]), 1.0, 1.0)


def test_full_estimate_and_table(white_noise):
    est = estimate(white_noise, max_lag=20)
    assert est.a_hat.size == est.a_hat_prime.size == est.a_hat_bc.size == est.sigma2_hat.size == 21
    assert est.sigma2_hat[0] == pytest.approx(est.q_n)
    assert est.k_n == default_subsample_stride(600)
    assert est.a_tilde_prime0 is not None
    frame = est.table(0.05)
    assert list(frame.columns) == ['t', 'a_hat', 'a_hat_bc', 'a_prime', 'sigma2', 'ci_lo', 'ci_hi', 'flag']
    assert len(frame) == 21
    np.testing.assert_allclose(frame['t'], np.arange(21) * 0.1)
    ok = frame['flag'] == ''
    assert (frame.loc[ok, 'ci_lo'] < frame.loc[ok, 'a_hat']).all()
    with pytest.raises(InsufficientDataError):
        estimate(white_noise, max_lag=white_noise.n - 2)


def test_full_estimate_needs_four_points():
    with pytest.raises(InsufficientDataError, match="n >= 4"):
        estimate(TimeSeries(1.0, [1.0, 2.0, 3.0]))


def test_full_estimate_of_a_constant_series():
    with pytest.raises(DegenerateEstimateError):
        estimate(TimeSeries(1.0, [2.0] * 10))
    est = estimate(TimeSeries(1.0, [2.0] * 10), with_avar=False)
    assert est.sigma2_hat is None
    assert np.isnan(est.table()['sigma2']).all()


def test_slices_on_the_toy_series(toy_series):
    s = estimate_slices(toy_series, 1.0, "acf")
    assert s.method is SliceMethod.EMPIRICAL_ACF
    assert s.leb_A == pytest.approx(0.5)
    # Gamma_hat_1 < 0 is clamped to an empty intersection
    assert s.leb_cap == 0.0 and s.clamped
    assert s.ratio_minus == pytest.approx(1.0)

    t = estimate_slices(toy_series, 0.0, "trawl_sum")
    # 0.75 - 0.25 + 0
    assert t.leb_A == pytest.approx(0.5)
    assert t.ratio_cap == pytest.approx(1.0)
    with pytest.raises(TrawlDomainError):
        SliceMethod.parse("kernel")


def test_slice_invariants_hold_across_methods(white_noise):
    est = SliceEstimator(white_noise.shifted(-3.0))
    for method in SliceMethod:
        for h in (0.0, 0.05, 0.1, 1.0, 100.0):
            try:
                s = est.estimate(h, method)
            except DegenerateEstimateError:
                continue
            assert 0.0 <= s.leb_cap <= s.leb_A
            assert s.leb_cap + s.leb_minus == pytest.approx(s.leb_A)
            assert 0.0 <= s.ratio_cap <= 1.0
            assert s.ratio_cap + s.ratio_minus == pytest.approx(1.0)


def test_slices_beyond_the_sample_are_empty(toy_series):
    s = estimate_slices(toy_series, 50.0, "empirical_acf")
    assert s.leb_cap == 0.0
    t = estimate_slices(toy_series, 50.0, "trawl_sum")
    assert t.leb_cap == 0.0
