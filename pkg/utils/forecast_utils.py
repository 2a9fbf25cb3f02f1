"""
forecast_utils.py
Description: Slice-based point predictors for trawl processes, rolling-window
multi-horizon evaluation, and Diebold-Mariano comparisons of forecast losses.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Annotated, Literal, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, ValidationError
from scipy import stats
from tqdm import tqdm

import model_config as settings
from utils.estimator_utils import estimate_trawl, sample_acf
from utils.series_utils import TimeSeries
from utils.trawl_utils import SupGammaTrawl, leb_A, leb_intersection
from utils.utils import (
    ConfigurationError,
    DegenerateEstimateError,
    InsufficientDataError,
    TrawlDomainError,
    resolve_jobs,
)

logger = logging.getLogger(__name__)

# Long-run variances below this share of the mean squared differential count as zero
DM_VARIANCE_FLOOR = 1e-20


class TrawlSumPredictor(BaseModel):
    """Slice ratio from the summed trawl estimate."""

    model_config = ConfigDict(frozen=True)
    kind: Literal["trawl"] = "trawl"


class EmpiricalAcfPredictor(BaseModel):
    """Slice ratio from the sample autocovariance."""

    model_config = ConfigDict(frozen=True)
    kind: Literal["acf"] = "acf"


class NaivePredictor(BaseModel):
    model_config = ConfigDict(frozen=True)
    kind: Literal["naive"] = "naive"


class ParametricSupGammaNB(BaseModel):
    """Conditional mean of a negative-binomial supGamma trawl with a(0) = c."""

    model_config = ConfigDict(frozen=True)
    kind: Literal["parametric"] = "parametric"
    alpha: float = Field(gt=0)
    H: float = Field(gt=1)
    c: float = Field(default=1.0, gt=0)
    theta: float = Field(gt=0, lt=1)


Predictor = Annotated[
    Union[TrawlSumPredictor, EmpiricalAcfPredictor, NaivePredictor, ParametricSupGammaNB],
    Field(discriminator="kind"),
]
_PREDICTOR_ADAPTER = TypeAdapter(Predictor)
_PREDICTOR_ALIASES = {'trawl': 'trawl', 'trawlsum': 'trawl', 'trawl_sum': 'trawl',
                      'acf': 'acf', 'empiricalacf': 'acf', 'empirical_acf': 'acf',
                      'naive': 'naive', 'parametric': 'parametric'}


def parse_predictor(obj):
    """Predictor from a name ('trawl', 'acf', 'naive') or its JSON form."""
    if isinstance(obj, (TrawlSumPredictor, EmpiricalAcfPredictor, NaivePredictor, ParametricSupGammaNB)):
        return obj
    if isinstance(obj, str):
        key = _PREDICTOR_ALIASES.get(obj.strip().lower().replace('-', '_'))
        if key is None:
            raise ConfigurationError(f"Unknown predictor {obj!r}; choose from trawl, acf, naive, parametric")
        obj = {'kind': key}
    try:
        return _PREDICTOR_ADAPTER.validate_python(obj)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid predictor {obj!r}: {e}") from e


def predictor_name(predictor):
    return predictor.kind


def slice_forecast(last, mean, leb_cap, leb_a):
    """
    w * X_t + (1 - w) * mean with w = Leb(A ∩ A_h) / Leb(A) clamped to [0, 1].
    Raises DegenerateEstimateError when Leb(A) <= 0.
    """
    if not leb_a > 0:
        raise DegenerateEstimateError(f"estimated Leb(A) = {leb_a:.6g} <= 0")
    w = min(max(leb_cap / leb_a, 0.0), 1.0)
    return w * last + (1.0 - w) * mean


@dataclass
class FittedPredictor:
    """A predictor fitted on one window; forecast(h) is cheap."""

    predictor: object
    delta: float
    last: float
    mean: float
    caps: np.ndarray = None
    fallback: bool = False
    fallback_reason: str = ''

    def ratio(self, h_steps):
        if self.caps is None:
            return None
        cap = self.caps[min(h_steps, self.caps.size - 1)]
        return min(max(cap / self.caps[0], 0.0), 1.0)

    def forecast(self, h_steps):
        if h_steps < 1:
            raise TrawlDomainError(f"forecast horizon must be >= 1 step, got {h_steps}")
        kind = self.predictor.kind
        if kind == 'naive' or self.fallback:
            return self.last
        if kind == 'parametric':
            p = self.predictor
            spec = SupGammaTrawl(alpha=p.alpha, H=p.H)
            h = h_steps * self.delta
            w = min(max(leb_intersection(spec, h) / leb_A(spec), 0.0), 1.0)
            minus = p.c * (leb_A(spec) - leb_intersection(spec, h))
            return w * self.last + minus * (1.0 - p.theta)
        return slice_forecast(self.last, self.mean, self.caps[min(h_steps, self.caps.size - 1)], self.caps[0])

    def with_last(self, last):
        """Same fit, new forecast origin value."""
        return FittedPredictor(self.predictor, self.delta, float(last), self.mean, self.caps,
                               self.fallback, self.fallback_reason)


def fit_predictor(window, predictor):
    """
    Fit a predictor on a trailing window.
    Args:
        window (TimeSeries): Observations ending at the forecast origin.
        predictor (Predictor | str): Predictor specification.
    Returns:
        FittedPredictor: Falls back to the naive forecast (flagged) when Leb(A) is estimated <= 0.
    """
    predictor = parse_predictor(predictor)
    if window.n < 3:
        raise InsufficientDataError(f"insufficient data: a forecast window needs >= 3 points, got {window.n}")
    last = float(window.values[-1])
    fitted = FittedPredictor(predictor, window.delta, last, float(np.mean(window.values)))
    if predictor.kind in ('naive', 'parametric'):
        return fitted
    acf = sample_acf(window)
    if predictor.kind == 'acf':
        caps = np.append(acf.gamma_hat, 0.0)
    else:
        grid = estimate_trawl(window, acf=acf) * window.delta
        caps = np.append(np.cumsum(grid[::-1])[::-1], 0.0)
    if not caps[0] > 0:
        fitted.fallback = True
        fitted.fallback_reason = f"estimated Leb(A) = {caps[0]:.6g} <= 0"
        logger.debug(f"{predictor.kind} predictor falls back to naive: {fitted.fallback_reason}")
        return fitted
    fitted.caps = caps
    return fitted


def predict(window, predictor, h_steps):
    """Point forecast of X_{t+h} from the window ending at t."""
    return float(fit_predictor(window, predictor).forecast(h_steps))


@dataclass(frozen=True)
class DmResult:
    statistic: float
    p_value: float
    dominance: bool = False


def dm_stars(p):
    """*** p<=0.001, ** <=0.01, * <=0.05, + <=0.1."""
    if p is None or not math.isfinite(p):
        return ''
    if p <= 0.001:
        return '***'
    if p <= 0.01:
        return '**'
    if p <= 0.05:
        return '*'
    if p <= 0.1:
        return '+'
    return ''


def dm_test(loss_a, loss_b, h=1, power=None):
    """
    Diebold-Mariano test of equal accuracy against "a beats b".
    Args:
        loss_a, loss_b (array-like): Losses already raised to the chosen power.
        h (int): Forecast horizon in steps; the long-run variance uses h-1 lags.
        power (int | None): Loss power, checked to be 1 or 2 when given.
    Returns:
        DmResult: DM = mean(d) / sqrt(var_d / T) and one-sided p = Phi(DM).
    """
    a = np.asarray(loss_a, dtype=float)
    b = np.asarray(loss_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise TrawlDomainError(f"loss series must be 1-d with equal lengths, got {a.shape} and {b.shape}")
    if power is not None and power not in (1, 2):
        raise TrawlDomainError(f"loss power must be 1 or 2, got {power}")
    if h < 1:
        raise TrawlDomainError(f"horizon must be >= 1, got {h}")
    T = a.size
    if T < 10:
        raise InsufficientDataError(f"insufficient data: the DM test needs T >= 10 losses, got {T}")
    d = a - b
    if not np.any(d):
        return DmResult(0.0, 0.5)
    mean = float(np.mean(d))
    dev = d - mean
    lags = min(h - 1, T - 1)
    gamma = [float(np.dot(dev[k:], dev[:T - k])) / T for k in range(lags + 1)]
    var = max(gamma[0] + 2.0 * sum(gamma[1:]), 0.0)
    if var <= DM_VARIANCE_FLOOR * float(np.mean(d * d)):
        if float(np.ptp(d)) <= 1e-12 * max(abs(mean), 1.0):
            statistic = -math.inf if mean < 0 else math.inf
            return DmResult(statistic, 0.0 if mean < 0 else 1.0, dominance=True)
        raise DegenerateEstimateError(f"zero long-run variance of the loss differential (h={h}, T={T})")
    statistic = mean / math.sqrt(var / T)
    return DmResult(float(statistic), float(stats.norm.cdf(statistic)))


@dataclass
class ForecastReport:
    horizons: np.ndarray
    predictors: list
    reference: str
    window_n: int
    forecast_count: int
    mse: dict
    mae: dict
    dm: dict = field(default_factory=dict)
    dm_powers: tuple = (1, 2)
    fallback_counts: dict = field(default_factory=dict)
    stride: int = 1

    def ratio_vs_naive(self, name, metric='mse'):
        table = self.mse if metric == 'mse' else self.mae
        with np.errstate(divide='ignore', invalid='ignore'):
            return table[name] / table['naive']

    def to_frame(self):
        rows = []
        for j, h in enumerate(self.horizons):
            for name in self.predictors:
                for power in self.dm_powers:
                    stat, p = self.dm.get((name, power), (None, None)) if name != self.reference else (None, None)
                    rows.append({
                        'h': int(h),
                        'predictor': name,
                        'mse': self.mse[name][j],
                        'mae': self.mae[name][j],
                        'ratio_vs_naive_mse': self.ratio_vs_naive(name, 'mse')[j],
                        'ratio_vs_naive_mae': self.ratio_vs_naive(name, 'mae')[j],
                        'dm_stat': float('nan') if stat is None else stat[j],
                        'dm_p': float('nan') if p is None else p[j],
                        'dm_stars': '' if p is None else dm_stars(p[j]),
                        'benchmark': self.reference,
                        'dm_power': power,
                    })
        return pd.DataFrame(rows, columns=['h', 'predictor', 'mse', 'mae', 'ratio_vs_naive_mse',
                                           'ratio_vs_naive_mae', 'dm_stat', 'dm_p', 'dm_stars',
                                           'benchmark', 'dm_power'])


def _forecast_block(values, delta, origins, window_n, h_max, predictors, stride, first_origin):
    """Forecast errors for a contiguous block of origins: array [predictor, origin, h-1]."""
    errors = np.empty((len(predictors), len(origins), h_max))
    fallbacks = np.zeros(len(predictors), dtype=int)
    steps = np.arange(1, h_max + 1)
    fitted = [None] * len(predictors)
    for o, t in enumerate(origins):
        refit = (t - first_origin) % stride == 0 or fitted[0] is None
        window = TimeSeries(delta, values[t - window_n + 1:t + 1]) if refit else None
        actual = values[t + steps]
        for p, predictor in enumerate(predictors):
            if refit:
                fitted[p] = fit_predictor(window, predictor)
                fallbacks[p] += int(fitted[p].fallback)
            else:
                fitted[p] = fitted[p].with_last(values[t])
            forecasts = np.array([fitted[p].forecast(h) for h in steps])
            errors[p, o] = actual - forecasts
    return errors, fallbacks


def rolling_forecast(series, window_n, h_max, predictors=('trawl', 'acf', 'naive'), dm_powers=(1, 2),
                     stride=1, jobs=None, show_progress=None):
    """
    Rolling-window evaluation over origins t = window_n-1, ..., n-2-h_max.
    Args:
        series (TimeSeries): Full series.
        window_n (int): Trailing window length used for each fit.
        h_max (int): Largest horizon in steps.
        predictors (Iterable): Predictor names or specs; the first one is the DM benchmark.
        dm_powers (Iterable[int]): Loss powers for the DM comparisons.
        stride (int): Refit every `stride` origins.
        jobs (int | None): Worker threads.
        show_progress (bool | None): tqdm progress bar.
    Returns:
        ForecastReport: Forecast count n - window_n - h_max.
    """
    predictors = [parse_predictor(p) for p in predictors]
    if not predictors:
        raise ConfigurationError("at least one predictor is required")
    names = [predictor_name(p) for p in predictors]
    if len(set(names)) != len(names):
        raise ConfigurationError(f"predictor names must be unique, got {names}")
    if window_n < 3 or h_max < 1 or stride < 1:
        raise TrawlDomainError(f"need window >= 3, h_max >= 1 and stride >= 1, got {window_n}, {h_max}, {stride}")
    n = series.n
    required = window_n + h_max + 1
    if n < required:
        raise InsufficientDataError(
            f"insufficient data: rolling forecasts with window {window_n} and h_max {h_max} "
            f"need at least {required} observations, got {n}"
        )
    evaluated = list(predictors)
    if 'naive' not in names:
        evaluated.append(NaivePredictor())
    eval_names = [predictor_name(p) for p in evaluated]

    first = window_n - 1
    origins = np.arange(first, n - 1 - h_max)
    jobs = resolve_jobs(jobs)
    show_progress = settings.SHOW_PROGRESS if show_progress is None else show_progress
    per_block = max(stride, int(math.ceil(origins.size / (4 * jobs))))
    per_block = int(math.ceil(per_block / stride) * stride)
    blocks = [origins[i:i + per_block] for i in range(0, origins.size, per_block)]
    logger.info(f"Rolling forecasts: {origins.size} origins, window {window_n}, h_max {h_max}, "
                f"{len(blocks)} blocks on {jobs} threads")

    values = series.values
    args = (values, series.delta)
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_forecast_block, *args, block, window_n, h_max, evaluated, stride, first)
                   for block in blocks]
        results = [f.result() for f in tqdm(futures, desc='forecast', disable=not show_progress)]
    errors = np.concatenate([r[0] for r in results], axis=1)
    fallbacks = np.sum([r[1] for r in results], axis=0)

    mse = {name: np.mean(errors[p] ** 2, axis=0) for p, name in enumerate(eval_names)}
    mae = {name: np.mean(np.abs(errors[p]), axis=0) for p, name in enumerate(eval_names)}
    reference = names[0]
    ref = eval_names.index(reference)
    horizons = np.arange(1, h_max + 1)
    dm = {}
    for p, name in enumerate(eval_names):
        if p == ref or name not in names:
            continue
        for power in dm_powers:
            stat = np.full(h_max, np.nan)
            pval = np.full(h_max, np.nan)
            for j, h in enumerate(horizons):
                loss_a = np.abs(errors[ref, :, j]) ** power
                loss_b = np.abs(errors[p, :, j]) ** power
                try:
                    result = dm_test(loss_a, loss_b, h=int(h), power=power)
                    stat[j], pval[j] = result.statistic, result.p_value
                except DegenerateEstimateError as e:
                    logger.warning(f"DM {reference} vs {name} at h={h}, power {power}: {e}")
            dm[(name, power)] = (stat, pval)

    fallback_counts = {name: int(fallbacks[p]) for p, name in enumerate(eval_names)}
    if any(fallback_counts.values()):
        logger.warning(f"Naive fallbacks per predictor: {fallback_counts}")
    return ForecastReport(horizons=horizons, predictors=names, reference=reference, window_n=window_n,
                          forecast_count=int(origins.size), mse=mse, mae=mae, dm=dm,
                          dm_powers=tuple(dm_powers), fallback_counts=fallback_counts, stride=stride)
