"""
estimator_utils.py
Description: Nonparametric estimators for trawl processes observed on an equidistant
grid: sample autocovariance, trawl function and its derivative, quarticity,
asymptotic variance, confidence intervals and trawl-set slice measures.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
import pandas as pd
from scipy import signal, stats

import model_config as settings
from utils.series_utils import TimeSeries
from utils.utils import DegenerateEstimateError, InsufficientDataError, TrawlDomainError

logger = logging.getLogger(__name__)

# Below this length scipy's direct correlation is used, so small inputs are summed in a fixed order
DIRECT_MAX = 4096
GRID_GUARD = 1e-9


def _correlate(x, y=None):
    """Non-centred lagged sums c_j = sum_k x_{k+j} y_k for j = 0..len-1."""
    y = x if y is None else y
    method = 'direct' if x.size <= DIRECT_MAX else 'fft'
    full = signal.correlate(x, y, mode='full', method=method)
    return full[x.size - 1:]


def lag_index(t, delta):
    """l = floor(t/delta) with exact grid multiples mapped to themselves."""
    if t < 0 or math.isnan(t):
        raise TrawlDomainError(f"time must be >= 0, got {t}")
    return int(math.floor(t / delta + GRID_GUARD))


def horizon_index(h, delta):
    """Smallest l with l*delta >= h."""
    if h < 0 or math.isnan(h):
        raise TrawlDomainError(f"horizon must be >= 0, got {h}")
    return max(0, int(math.ceil(h / delta - GRID_GUARD)))


def default_subsample_stride(n):
    """K_n = ceil(n^(1/3))."""
    return max(1, int(math.ceil(n ** settings.DEFAULT_SUBSAMPLE_EXPONENT - 1e-12)))


@dataclass(frozen=True)
class AcfTable:
    delta: float
    gamma_hat: np.ndarray
    mean: float

    @property
    def n(self):
        return int(self.gamma_hat.size)

    def at(self, lag):
        """Gamma_hat at an integer lag; zero beyond the sample."""
        return float(self.gamma_hat[lag]) if lag < self.gamma_hat.size else 0.0


@dataclass(frozen=True)
class AvarEstimate:
    sigma2: float
    degenerate: bool
    v1: float
    v2: float
    v3: float
    v4: float


@dataclass(frozen=True)
class TrawlEstimate:
    """Estimated grids on l = 0..L, all of length L+1."""

    delta: float
    n: int
    a_hat: np.ndarray
    a_hat_prime: np.ndarray
    a_hat_bc: np.ndarray
    q_n: float
    sigma2_hat: Optional[np.ndarray] = None
    degenerate: Optional[np.ndarray] = None
    k_n: int = 1
    n_n: int = 0
    a_tilde_prime0: Optional[float] = None

    @property
    def max_lag(self):
        return int(self.a_hat.size) - 1

    @property
    def times(self):
        return np.arange(self.a_hat.size) * self.delta

    def table(self, beta=0.05):
        """Rows t, a_hat, a_hat_bc, a_prime, sigma2, ci_lo, ci_hi, flag with (1-beta) intervals."""
        rows = []
        for l, t in enumerate(self.times):
            sigma2 = float('nan') if self.sigma2_hat is None else float(self.sigma2_hat[l])
            if sigma2 > 0:
                lo, hi = confidence_interval(self.a_hat[l], sigma2, self.n, self.delta, beta)
            else:
                lo = hi = float('nan')
            flagged = self.degenerate is not None and bool(self.degenerate[l])
            rows.append({'t': t, 'a_hat': self.a_hat[l], 'a_hat_bc': self.a_hat_bc[l],
                         'a_prime': self.a_hat_prime[l], 'sigma2': sigma2, 'ci_lo': lo, 'ci_hi': hi,
                         'flag': 'clamped' if flagged else ''})
        return pd.DataFrame(rows, columns=['t', 'a_hat', 'a_hat_bc', 'a_prime', 'sigma2', 'ci_lo', 'ci_hi', 'flag'])


class SliceMethod(str, Enum):
    TRAWL_SUM = 'trawl_sum'
    TRAWL_SUM_BC = 'trawl_sum_bc'
    EMPIRICAL_ACF = 'empirical_acf'

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace('-', '_')
        aliases = {'trawlsum': 'trawl_sum', 'trawl': 'trawl_sum', 'trawlsumbc': 'trawl_sum_bc',
                   'trawl_bc': 'trawl_sum_bc', 'empiricalacf': 'empirical_acf', 'acf': 'empirical_acf'}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise TrawlDomainError(f"Unknown slice method {value!r}; choose from {[m.value for m in cls]}")


@dataclass(frozen=True)
class SliceEstimate:
    method: SliceMethod
    h: float
    leb_A: float
    leb_cap: float
    leb_minus: float
    ratio_cap: float
    ratio_minus: float
    clamped: bool = False


def _require(series, minimum, what):
    if series.n < minimum:
        raise InsufficientDataError(f"insufficient data: {what} needs n >= {minimum}, got n={series.n}")


def increments(series):
    return np.diff(series.values)


def sample_acf(series):
    """
    Sample autocovariance with divisor n.
    Args:
        series (TimeSeries): Observations.
    Returns:
        AcfTable: Gamma_hat_0..Gamma_hat_{n-1} and the sample mean.
    """
    mean = float(np.mean(series.values))
    dev = series.values - mean
    gamma = _correlate(dev) / series.n
    return AcfTable(delta=series.delta, gamma_hat=gamma, mean=mean)


def estimate_trawl(series, L=None, acf=None):
    """
    a_hat(l*delta) for l = 0..L: the averaged realised variance at l = 0 and
    -(Gamma_hat_{l+1} - Gamma_hat_l)/delta otherwise.
    """
    _require(series, 3, "the trawl estimator")
    n = series.n
    L = n - 2 if L is None else int(L)
    if L < 0 or L > n - 2:
        raise InsufficientDataError(f"insufficient data: max lag {L} requires 0 <= L <= n-2 = {n - 2}")
    acf = acf or sample_acf(series)
    g = acf.gamma_hat
    delta = series.delta
    a_hat = np.empty(L + 1)
    dx = increments(series)
    a_hat[0] = np.sum(dx * dx) / (2.0 * delta * n)
    a_hat[1:] = -(g[2:L + 2] - g[1:L + 1]) / delta
    return a_hat


def estimate_derivative(series, L=None):
    """a_hat'(l*delta) = (1/(n delta^2)) sum_{k=l+1}^{n-2} dX_k dX_{k-l-1}, l = 0..L."""
    _require(series, 3, "the derivative estimator")
    n = series.n
    L = n - 3 if L is None else int(L)
    if L < 0 or L > n - 3:
        raise InsufficientDataError(f"insufficient data: derivative lag {L} requires 0 <= L <= n-3 = {n - 3}")
    dx = increments(series)
    cross = _correlate(dx)
    return cross[1:L + 2] / (n * series.delta ** 2)


def estimate_trawl_bc(a_hat, a_hat_prime, delta):
    """Bias-corrected grid a_hat - delta/2 * a_hat'."""
    size = min(a_hat.size, a_hat_prime.size)
    return a_hat[:size] - 0.5 * delta * a_hat_prime[:size]


def subsample(series, K_n):
    """(X_{i K delta}), i = 0..M with M = floor((n-1)/K)."""
    if K_n < 1:
        raise TrawlDomainError(f"subsample stride must be >= 1, got {K_n}")
    M = (series.n - 1) // K_n
    if M + 1 < 3:
        raise InsufficientDataError(
            f"insufficient data: stride K_n={K_n} leaves {M + 1} < 3 subsampled points (n={series.n})"
        )
    return TimeSeries(series.delta * K_n, series.values[:M * K_n + 1:K_n])


def estimate_derivative_subsampled(series, K_n=None, t=0.0):
    """
    a_tilde'(t): the derivative estimator applied to the series sampled every K_n points.
    The normaliser is the subseries length M+1, so K_n = 1 reproduces estimate_derivative.
    """
    K_n = default_subsample_stride(series.n) if K_n is None else int(K_n)
    sub = subsample(series, K_n)
    l = lag_index(t, sub.delta)
    if l > sub.n - 3:
        raise InsufficientDataError(
            f"insufficient data: t={t} maps to subsampled lag {l} > {sub.n - 3}"
        )
    return float(estimate_derivative(sub, l)[l])


def quarticity(series):
    """Q_n = (1/(2 delta n)) sum (dX_k)^4."""
    dx = increments(series)
    return float(np.sum(dx ** 4) / (2.0 * series.delta * series.n))


def estimate_avar(a_hat, q_n, delta, N_n=None, t=None, index=None, eps=None):
    """
    Asymptotic variance estimate at t = i*delta from an a_hat grid.
    Args:
        a_hat (np.ndarray): a_hat(l*delta), l = 0..L.
        q_n (float): Quarticity.
        delta (float): Grid width.
        N_n (int | None): Truncation of the square-sum terms; defaults to L.
        t (float | None): Time, mapped to i = floor(t/delta).
        index (int | None): Grid index i, used instead of t.
        eps (float | None): Clamp value for a non-positive sum.
    Returns:
        AvarEstimate: sigma2 = v1 + v2 + v3 + v4 with the degenerate flag set when clamped.
    """
    a_hat = np.asarray(a_hat, dtype=float)
    L = a_hat.size - 1
    if index is None:
        if t is None:
            raise TrawlDomainError("estimate_avar needs t or index")
        index = lag_index(t, delta)
    i = int(index)
    if i < 0 or i > L:
        raise InsufficientDataError(f"insufficient data: index {i} outside the a_hat grid 0..{L}")
    N = L if N_n is None else int(N_n)
    if N < 0 or N > L:
        raise TrawlDomainError(f"N_n={N} must lie in 0..{L}")
    a0 = a_hat[0]
    if not a0 > 0:
        raise DegenerateEstimateError(f"a_hat(0) = {a0:.6g} <= 0; the asymptotic variance is undefined")

    v1 = q_n / a0 * a_hat[i]
    v2 = 2.0 * delta * float(np.dot(a_hat[:N + 1], a_hat[:N + 1]))
    k = min(i, L - i)
    v3 = 2.0 * delta * float(np.dot(a_hat[i - k:i + 1][::-1], a_hat[i:i + k + 1]))
    if N - i >= i:
        v4 = -2.0 * delta * float(np.dot(a_hat[:N - 2 * i + 1], a_hat[2 * i:N + 1]))
    else:
        v4 = 0.0
    total = v1 + v2 + v3 + v4
    degenerate = not total > 0
    if degenerate:
        clamp = settings.DEFAULT_CLAMP_EPS if eps is None else eps
        logger.debug(f"sigma2 estimate {total:.3g} at index {i} clamped to {clamp}")
        total = clamp
    return AvarEstimate(sigma2=float(total), degenerate=degenerate,
                        v1=float(v1), v2=v2, v3=v3, v4=v4)


def confidence_interval(a_hat_t, sigma2_t, n, delta, beta):
    """Two-sided (1-beta) interval a_hat(t) -/+ z_{1-beta/2} sqrt(sigma2/(n delta))."""
    if not 0 < beta < 1:
        raise TrawlDomainError(f"level beta must lie in (0, 1), got {beta}")
    if not sigma2_t > 0:
        raise DegenerateEstimateError(f"variance {sigma2_t} must be > 0 for a confidence interval")
    z = stats.norm.ppf(1.0 - beta / 2.0)
    half = z * math.sqrt(sigma2_t / (n * delta))
    return a_hat_t - half, a_hat_t + half


def estimate(series, max_lag=None, N_n=None, K_n=None, with_avar=True):
    """
    All grids for l = 0..max_lag in one pass.
    Args:
        series (TimeSeries): Observations.
        max_lag (int | None): Largest lag index; defaults to and may not exceed n-3.
        N_n (int | None): AVAR truncation; defaults to the full a_hat grid (n-2).
        K_n (int | None): Subsample stride for a_tilde'(0); defaults to ceil(n^(1/3)).
        with_avar (bool): Compute the sigma2 grid (index 0 holds Q_n).
    Returns:
        TrawlEstimate
    """
    _require(series, 4, "a full trawl estimate")
    n = series.n
    L = n - 3 if max_lag is None else int(max_lag)
    if L < 0 or L > n - 3:
        raise InsufficientDataError(f"insufficient data: max lag {L} requires 0 <= L <= n-3 = {n - 3}")
    acf = sample_acf(series)
    a_full = estimate_trawl(series, n - 2, acf=acf)
    a_prime = estimate_derivative(series, L)
    a_hat = a_full[:L + 1].copy()
    a_bc = estimate_trawl_bc(a_hat, a_prime, series.delta)
    q_n = quarticity(series)
    K = default_subsample_stride(n) if K_n is None else int(K_n)
    try:
        a_tilde0 = estimate_derivative_subsampled(series, K, 0.0)
    except InsufficientDataError:
        a_tilde0 = None
    N = a_full.size - 1 if N_n is None else int(N_n)

    sigma2 = None
    flags = None
    if with_avar:
        sigma2 = np.empty(L + 1)
        flags = np.zeros(L + 1, dtype=bool)
        if not a_full[0] > 0:
            raise DegenerateEstimateError(f"a_hat(0) = {a_full[0]:.6g} <= 0; the asymptotic variance is undefined")
        sigma2[0] = q_n if q_n > 0 else settings.DEFAULT_CLAMP_EPS
        flags[0] = not q_n > 0
        for l in range(1, L + 1):
            av = estimate_avar(a_full, q_n, series.delta, N_n=N, index=l)
            sigma2[l] = av.sigma2
            flags[l] = av.degenerate
        if flags.any():
            logger.warning(f"{int(flags.sum())} of {L + 1} variance estimates were clamped")
    return TrawlEstimate(delta=series.delta, n=n, a_hat=a_hat, a_hat_prime=a_prime, a_hat_bc=a_bc,
                         q_n=q_n, sigma2_hat=sigma2, degenerate=flags, k_n=K, n_n=N,
                         a_tilde_prime0=a_tilde0)


def _clamped_slice(method, h, leb_a, cap):
    if not leb_a > 0:
        raise DegenerateEstimateError(f"estimated Leb(A) = {leb_a:.6g} <= 0 ({method.value}, h={h})")
    capped = min(max(cap, 0.0), leb_a)
    minus = leb_a - capped
    return SliceEstimate(method=method, h=float(h), leb_A=float(leb_a), leb_cap=float(capped),
                         leb_minus=float(minus), ratio_cap=capped / leb_a, ratio_minus=minus / leb_a,
                         clamped=capped != cap)


class SliceEstimator:
    """Slice estimates for many horizons from one set of grids."""

    def __init__(self, series, acf=None):
        self.series = series
        self.delta = series.delta
        self.acf = acf or sample_acf(series)
        self._tails = {}

    def _tail_sums(self, method):
        if method not in self._tails:
            if method is SliceMethod.TRAWL_SUM:
                grid = estimate_trawl(self.series, acf=self.acf)
            else:
                grid = estimate_trawl_bc(estimate_trawl(self.series, acf=self.acf),
                                         estimate_derivative(self.series), self.delta)
            # tails[k] = sum_{l >= k} grid_l * delta
            self._tails[method] = np.append(np.cumsum((grid * self.delta)[::-1])[::-1], 0.0)
        return self._tails[method]

    def estimate(self, h, method):
        method = SliceMethod.parse(method)
        if method is SliceMethod.EMPIRICAL_ACF:
            leb_a = self.acf.at(0)
            cap = self.acf.at(lag_index(h, self.delta))
        else:
            tails = self._tail_sums(method)
            leb_a = float(tails[0])
            cap = float(tails[min(horizon_index(h, self.delta), tails.size - 1)])
        return _clamped_slice(method, h, leb_a, cap)


def estimate_slices(series, h, method):
    """
    Leb(A), Leb(A ∩ A_h), Leb(A \\ A_h) and their ratios from the data.
    Args:
        series (TimeSeries): Observations.
        h (float): Horizon (time units) >= 0.
        method (SliceMethod | str): trawl_sum, trawl_sum_bc or empirical_acf.
    Returns:
        SliceEstimate: The cap is clamped to [0, Leb(A)].
    """
    return SliceEstimator(series).estimate(h, method)
