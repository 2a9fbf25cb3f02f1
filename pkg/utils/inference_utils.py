"""
inference_utils.py
Description: Central-limit statistics for the trawl estimator (infeasible, feasible,
bias-corrected and the t = 0 variants) and their Monte Carlo coverage.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import stats

from utils.estimator_utils import (
    default_subsample_stride,
    estimate_avar,
    estimate_derivative,
    estimate_derivative_subsampled,
    estimate_trawl,
    lag_index,
    quarticity,
    sample_acf,
)
from utils.trawl_utils import closed_form_sigma2, eval_trawl, seed_moments
from utils.utils import DegenerateEstimateError, InsufficientDataError, TrawlDomainError

logger = logging.getLogger(__name__)

SQRT3 = math.sqrt(3.0)
DEFAULT_LEVELS = (0.75, 0.80, 0.85, 0.90, 0.95, 0.99)

__all__ = [
    'StatisticKind', 'CltStatistic', 'CoverageSummary', 'EstimationContext',
    'statistic', 'statistics_for_series', 'closed_form_sigma2', 'coverage',
]


class StatisticKind(str, Enum):
    INFEASIBLE = 'infeasible'
    FEASIBLE = 'feasible'
    FEASIBLE_BC = 'feasible_bc'
    FEASIBLE_T0 = 'feasible_t0'
    FEASIBLE_T0_GAUSSIAN = 'feasible_t0_gaussian'

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace('-', '_')
        aliases = {'feasiblebiascorrected': 'feasible_bc', 'feasible_bias_corrected': 'feasible_bc',
                   'feasiblet0': 'feasible_t0', 'feasiblet0gaussian': 'feasible_t0_gaussian'}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise TrawlDomainError(f"Unknown statistic kind {value!r}; choose from {[k.value for k in cls]}")


@dataclass(frozen=True)
class CltStatistic:
    kind: StatisticKind
    t: float
    value: float
    degenerate: bool = False
    gaussian_t0: bool = False
    sqrt3_scaled: bool = False

    def __post_init__(self):
        if self.sqrt3_scaled and not self.gaussian_t0:
            raise ValueError(f"sqrt(3) scaling is reserved for a Gaussian seed at t=0 ({self.kind.value}, t={self.t})")
        if self.kind is StatisticKind.FEASIBLE_T0_GAUSSIAN and not (self.sqrt3_scaled or self.degenerate):
            raise ValueError("feasible_t0_gaussian statistics must carry the sqrt(3) scaling")
        if not self.degenerate and not math.isfinite(self.value):
            raise ValueError(f"non-finite statistic {self.value} without the degenerate flag")


class EstimationContext:
    """
    Grids shared by every statistic computed on one series: sample ACF, the full
    a_hat grid, Q_n, and lazily the derivative grid and a_tilde'(0).
    """

    def __init__(self, series, N_n=None, K_n=None):
        self.series = series
        self.n = series.n
        self.delta = series.delta
        self.acf = sample_acf(series)
        self.a_hat = estimate_trawl(series, acf=self.acf)
        self.q_n = quarticity(series)
        self.N_n = N_n
        self.K_n = default_subsample_stride(series.n) if K_n is None else int(K_n)
        self._a_prime = None
        self._a_tilde0 = None
        self._avar = {}

    @property
    def a_prime(self):
        if self._a_prime is None:
            self._a_prime = estimate_derivative(self.series)
        return self._a_prime

    @property
    def a_tilde_prime0(self):
        if self._a_tilde0 is None:
            self._a_tilde0 = estimate_derivative_subsampled(self.series, self.K_n, 0.0)
        return self._a_tilde0

    def index(self, t):
        i = lag_index(t, self.delta)
        if i > self.a_prime.size - 1:
            raise InsufficientDataError(f"insufficient data: t={t} is beyond the estimable grid (n={self.n})")
        return i

    def avar(self, i):
        if i not in self._avar:
            self._avar[i] = estimate_avar(self.a_hat, self.q_n, self.delta, N_n=self.N_n, index=i)
        return self._avar[i]


def _scaled(value, variance):
    return value / math.sqrt(variance)


def statistic_from_context(ctx, t, kind, true_trawl=None, seed=None, sigma2_override=None,
                           grid_centering=False):
    """
    One CLT statistic from precomputed grids.
    Args:
        ctx (EstimationContext): Grids of the series.
        t (float): Time >= 0.
        kind (StatisticKind | str): Statistic to build.
        true_trawl (TrawlSpec | None): Closed-form trawl used for centring.
        seed (SeedSpec | None): Seed law; its c4 feeds the infeasible variance and a
            Gaussian seed selects the t = 0 Gaussian scaling.
        sigma2_override (float | None): Variance used instead of the feasible estimate.
        grid_centering (bool): Centre at a(floor(t/delta) delta) instead of a(t).
    Returns:
        CltStatistic
    """
    kind = StatisticKind.parse(kind)
    if true_trawl is None:
        raise TrawlDomainError(f"{kind.value} statistic needs the true trawl function for centring")
    i = ctx.index(t)
    gaussian = seed is not None and seed.kind == 'gaussian'
    at_zero = t == 0
    if kind in (StatisticKind.FEASIBLE_T0, StatisticKind.FEASIBLE_T0_GAUSSIAN) and t != 0:
        raise TrawlDomainError(f"{kind.value} is defined at t=0 only, got t={t}")
    if kind is StatisticKind.FEASIBLE_T0_GAUSSIAN:
        gaussian = True
    gaussian_t0 = gaussian and at_zero and kind is not StatisticKind.FEASIBLE_T0

    centre_time = i * ctx.delta if grid_centering else t
    truth = eval_trawl(true_trawl, centre_time)
    root = math.sqrt(ctx.n * ctx.delta)
    a_t = ctx.a_hat[i]

    if kind is StatisticKind.INFEASIBLE:
        if seed is None:
            raise TrawlDomainError("the infeasible statistic needs the seed law for c4")
        if gaussian_t0:
            value = math.sqrt(ctx.n) * (a_t - truth) / math.sqrt(2.0 * eval_trawl(true_trawl, 0.0) ** 2)
            return CltStatistic(kind, t, value, gaussian_t0=True)
        variance = sigma2_override if sigma2_override is not None else closed_form_sigma2(
            true_trawl, seed_moments(seed)[2], t)
        if not variance > 0:
            return CltStatistic(kind, t, float('nan'), degenerate=True, gaussian_t0=gaussian_t0)
        return CltStatistic(kind, t, root * _scaled(a_t - truth, variance), gaussian_t0=gaussian_t0)

    if at_zero:
        if kind is StatisticKind.FEASIBLE:
            numerator = a_t - truth
        elif gaussian_t0:
            numerator = a_t - truth - 0.5 * ctx.delta * ctx.a_tilde_prime0
        else:
            numerator = a_t - truth - 0.5 * ctx.delta * ctx.a_prime[0]
        variance = sigma2_override if sigma2_override is not None else ctx.q_n
        if not variance > 0:
            return CltStatistic(kind, t, float('nan'), degenerate=True, gaussian_t0=gaussian_t0)
        value = root * _scaled(numerator, variance)
        if gaussian_t0:
            return CltStatistic(kind, t, SQRT3 * value, gaussian_t0=True, sqrt3_scaled=True)
        return CltStatistic(kind, t, value)

    if kind not in (StatisticKind.FEASIBLE, StatisticKind.FEASIBLE_BC):
        raise TrawlDomainError(f"{kind.value} is defined at t=0 only, got t={t}")
    numerator = a_t - truth
    if kind is StatisticKind.FEASIBLE_BC:
        numerator -= 0.5 * ctx.delta * ctx.a_prime[i]
    if sigma2_override is not None:
        variance, degenerate = sigma2_override, not sigma2_override > 0
    else:
        av = ctx.avar(i)
        variance, degenerate = av.sigma2, av.degenerate
    if not variance > 0:
        return CltStatistic(kind, t, float('nan'), degenerate=True)
    return CltStatistic(kind, t, root * _scaled(numerator, variance), degenerate=degenerate)


def statistic(series, t, mode, true_a=None, seed=None, sigma2_override=None, grid_centering=False,
              N_n=None, K_n=None):
    """
    CLT statistic for a single series; see statistic_from_context.
    Degenerate a_hat(0) yields a flagged statistic rather than an exception.
    """
    ctx = EstimationContext(series, N_n=N_n, K_n=K_n)
    try:
        return statistic_from_context(ctx, t, mode, true_trawl=true_a, seed=seed,
                                      sigma2_override=sigma2_override, grid_centering=grid_centering)
    except DegenerateEstimateError as e:
        logger.debug(f"Degenerate statistic at t={t}: {e}")
        return CltStatistic(StatisticKind.parse(mode), t, float('nan'), degenerate=True)


def statistics_for_series(series, times, kinds, true_trawl, seed=None, grid_centering=False,
                          N_n=None, K_n=None):
    """All (kind, t) statistics of one series from a shared context; kinds undefined at t are skipped."""
    ctx = EstimationContext(series, N_n=N_n, K_n=K_n)
    results = []
    for t in times:
        for kind in kinds:
            kind = StatisticKind.parse(kind)
            if kind in (StatisticKind.FEASIBLE_T0, StatisticKind.FEASIBLE_T0_GAUSSIAN) and t != 0:
                continue
            if kind is StatisticKind.FEASIBLE_T0_GAUSSIAN and (seed is None or seed.kind != 'gaussian'):
                continue
            try:
                results.append(statistic_from_context(ctx, t, kind, true_trawl=true_trawl, seed=seed,
                                                      grid_centering=grid_centering))
            except DegenerateEstimateError as e:
                logger.debug(f"Degenerate {kind.value} at t={t}: {e}")
                results.append(CltStatistic(kind, t, float('nan'), degenerate=True))
    return results


@dataclass(frozen=True)
class CoverageSummary:
    levels: tuple
    coverage: tuple
    mean: float
    sd: float
    used: int
    degenerate: int

    def as_dict(self):
        row = {'mean': self.mean, 'sd': self.sd}
        for level, value in zip(self.levels, self.coverage):
            row[f"{int(round(level * 100))}%"] = value
        return row


def coverage(stats_list, levels=DEFAULT_LEVELS, include_degenerate=False):
    """
    Empirical coverage of two-sided normal intervals plus mean and SD of the statistics.
    Args:
        stats_list (Iterable[CltStatistic]): Statistics from independent runs.
        levels (Iterable[float]): Nominal levels q; coverage is the share with |T| <= z_{(1+q)/2}.
        include_degenerate (bool): Keep flagged runs whose value is finite (clamped variance).
    Returns:
        CoverageSummary
    """
    items = list(stats_list)
    if not items:
        raise InsufficientDataError("coverage needs at least one statistic, got none")
    degenerate = sum(1 for s in items if s.degenerate)
    values = np.array([s.value for s in items
                       if (include_degenerate or not s.degenerate) and math.isfinite(s.value)], dtype=float)
    if values.size < 2:
        raise InsufficientDataError(
            f"coverage needs >= 2 usable statistics, got {values.size} ({degenerate} degenerate)"
        )
    levels = tuple(float(q) for q in levels)
    for q in levels:
        if not 0 < q < 1:
            raise TrawlDomainError(f"coverage level must lie in (0, 1), got {q}")
    abs_values = np.abs(values)
    shares = tuple(float(np.mean(abs_values <= stats.norm.ppf(0.5 + q / 2.0))) for q in levels)
    return CoverageSummary(levels=levels, coverage=shares, mean=float(np.mean(values)),
                           sd=float(np.std(values, ddof=1)), used=int(values.size), degenerate=degenerate)
