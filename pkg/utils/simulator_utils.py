"""
simulator_utils.py
Description: Exact slice-grid simulation of trawl processes on an observation grid.

Births are grouped into columns of width delta. Within a column, the trawl mass is
split into slices by the grid time at which it dies; every slice gets one
independent draw of the Levy basis, and an observation sums the slices of all
columns still alive at its time. Columns older than J steps are replaced by a
single remainder draw shared by every observation.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

import model_config as settings
from utils.estimator_utils import estimate_trawl, quarticity, sample_acf
from utils.series_utils import TimeSeries
from utils.trawl_utils import (
    SeedSpec,
    TrawlSpec,
    leb_A,
    seed_moments,
    strip_integral,
    tail_time,
    theoretical_acf,
)
from utils.utils import ConfigurationError, TrawlDomainError

logger = logging.getLogger(__name__)


class SimConfig(BaseModel):
    """One simulated path: trawl, seed law, grid and RNG stream."""

    model_config = ConfigDict(frozen=True)

    trawl: TrawlSpec
    seed: SeedSpec
    delta: float = Field(gt=0)
    n: int = Field(ge=2)
    tail_cutoff: Optional[float] = Field(default=None, gt=0)
    rng_seed: int = Field(default_factory=lambda: settings.MASTER_SEED, ge=0, lt=2 ** 64)
    run_index: int = Field(default=0, ge=0)
    tail_tol: float = Field(default_factory=lambda: settings.TAIL_TOL, gt=0, lt=1)

    @field_validator('n', mode='before')
    @classmethod
    def _integral_n(cls, v):
        if isinstance(v, float) and v.is_integer():
            return int(v)
        return v

    def for_run(self, run_index):
        return self.model_copy(update={'run_index': int(run_index)})


def load_sim_config(obj):
    """SimConfig from a dict (JSON form); `marginal` is accepted for `seed` and `seed` for `rng_seed` when numeric."""
    if isinstance(obj, SimConfig):
        return obj
    data = dict(obj)
    if 'marginal' in data:
        if 'seed' in data and not isinstance(data['seed'], dict):
            data['rng_seed'] = data.pop('seed')
        data['seed'] = data.pop('marginal')
    try:
        return SimConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid simulation config: {e}") from e


@dataclass(frozen=True)
class SliceGrid:
    """
    Slice areas of the truncated grid partition.
    strip_areas[m] = integral of a over [m delta, (m+1) delta];
    death_areas[d] = strip_areas[d] - strip_areas[d+1], the last one carrying strip_areas[J-1];
    tail_area = integral of a over [J delta, inf).
    """

    delta: float
    strip_areas: np.ndarray
    death_areas: np.ndarray
    tail_area: float

    @property
    def columns(self):
        return int(self.strip_areas.size)

    def matrix(self):
        """P[m, d] = death_areas[d] for d >= m: slices alive at lag m, by death index."""
        J = self.columns
        return np.triu(np.broadcast_to(self.death_areas, (J, J)))

    def total(self):
        return float(np.sum(self.strip_areas))


def slice_areas(trawl, delta, J):
    """
    Areas of the slice partition of the trawl set on a grid of width delta, truncated at J columns.
    Args:
        trawl (TrawlSpec): Trawl function.
        delta (float): Grid width > 0.
        J (int): Number of lag bands kept >= 1.
    Returns:
        SliceGrid: Row sums of matrix() reproduce the strip integrals.
    """
    if not delta > 0:
        raise TrawlDomainError(f"delta must be > 0, got {delta}")
    if J < 1:
        raise TrawlDomainError(f"J must be >= 1, got {J}")
    edges = np.arange(J + 1, dtype=float) * delta
    strips = np.asarray(strip_integral(trawl, edges[:-1], edges[1:]), dtype=float).reshape(-1)
    deaths = np.empty(J)
    deaths[:-1] = strips[:-1] - strips[1:]
    deaths[-1] = strips[-1]
    np.maximum(deaths, 0.0, out=deaths)
    tail = float(strip_integral(trawl, J * delta, np.inf))
    return SliceGrid(delta=float(delta), strip_areas=strips, death_areas=deaths, tail_area=tail)


def truncation_columns(cfg):
    """J: ceil(tail_cutoff/delta) when given, else the tolerance horizon capped at n."""
    if cfg.tail_cutoff is not None:
        return max(1, int(math.ceil(cfg.tail_cutoff / cfg.delta - 1e-9)))
    horizon = tail_time(cfg.trawl, cfg.tail_tol) / cfg.delta
    if not math.isfinite(horizon) or horizon >= cfg.n:
        return cfg.n
    return max(1, min(int(math.ceil(horizon)), cfg.n))


def make_rng(rng_seed, run_index=0):
    """Counter-based stream keyed by (rng_seed, run_index)."""
    seq = np.random.SeedSequence(int(rng_seed), spawn_key=(int(run_index),))
    return np.random.Generator(np.random.Philox(seq))


def sample_basis(seed, areas, rng):
    """
    Independent draws of the Levy basis over sets with the given areas.
    NegBin uses the Gamma-Poisson mixture so tiny shapes m*area stay exact.
    """
    areas = np.asarray(areas, dtype=float)
    if seed.kind == 'negbin':
        intensity = rng.gamma(seed.m * areas, seed.theta / (1.0 - seed.theta))
        return rng.poisson(intensity).astype(float)
    if seed.kind == 'gamma':
        return rng.gamma(seed.shape * areas, seed.scale)
    if seed.kind == 'gaussian':
        return rng.normal(seed.mu * areas, np.sqrt(seed.sigma2 * areas))
    raise TrawlDomainError(f"Unsupported seed kind {seed.kind!r}")


def simulate(cfg, chunk_cells=None, max_slices=None):
    """
    Simulate X_{i delta}, i = 0..n-1.
    Args:
        cfg (SimConfig): Path configuration.
        chunk_cells (int | None): Slice draws per block; defaults to TRAWLKIT_CHUNK_CELLS.
        max_slices (int | None): Budget of slice draws per path; defaults to TRAWLKIT_MAX_SLICES.
    Returns:
        TimeSeries
    """
    chunk_cells = settings.CHUNK_CELLS if chunk_cells is None else int(chunk_cells)
    max_slices = settings.MAX_SLICES if max_slices is None else int(max_slices)
    n = cfg.n
    J = truncation_columns(cfg)
    n_columns = n + J - 1
    total = n_columns * J
    if total > max_slices:
        raise ConfigurationError(
            f"Simulation needs {total:,} slice draws (n={n}, J={J}) which exceeds the budget of "
            f"{max_slices:,}; raise TRAWLKIT_MAX_SLICES or set a shorter tail_cutoff"
        )
    grid = slice_areas(cfg.trawl, cfg.delta, J)
    rng = make_rng(cfg.rng_seed, cfg.run_index)
    logger.debug(f"Simulating n={n} with J={J} columns, tail area {grid.tail_area:.3g}")

    values = np.zeros(n)
    lags = np.arange(J)
    block = max(1, chunk_cells // J)
    for start in range(-(J - 1), n, block):
        cols = np.arange(start, min(start + block, n))
        draws = sample_basis(cfg.seed, np.broadcast_to(grid.death_areas, (cols.size, J)), rng)
        # alive[c, m] = mass of column c still alive m steps after its birth
        alive = np.cumsum(draws[:, ::-1], axis=1)[:, ::-1]
        idx = cols[:, None] + lags[None, :]
        keep = (idx >= 0) & (idx < n)
        values += np.bincount(idx[keep], weights=alive[keep], minlength=n)
    # births older than J columns: one tail-area draw common to the whole path
    if grid.tail_area > 0:
        values += sample_basis(cfg.seed, np.array([grid.tail_area]), rng)[0]
    return TimeSeries(cfg.delta, values)


@dataclass(frozen=True)
class MomentReport:
    mean: tuple
    variance: tuple
    lags: np.ndarray
    acf_empirical: np.ndarray
    acf_theoretical: np.ndarray
    quarticity: float
    quarticity_ratio: float
    c4_implied: float
    c4_seed: float

    def acf_ratio(self, lag):
        """(empirical, theoretical) autocorrelation at an integer lag."""
        return (float(self.acf_empirical[lag] / self.acf_empirical[0]),
                float(self.acf_theoretical[lag] / self.acf_theoretical[0]))


def moment_check(series, trawl, seed, max_lag):
    """
    Empirical against theoretical mean, variance and autocovariance at lags 0..max_lag,
    plus the quarticity-based fourth-cumulant check.
    """
    if max_lag < 0 or max_lag > series.n - 1:
        raise TrawlDomainError(f"max_lag must lie in 0..{series.n - 1}, got {max_lag}")
    if series.n < 50 * max(max_lag, 1):
        logger.warning(f"Series of {series.n} points is short for a moment check up to lag {max_lag}")
    mean_l, var_l, c4 = seed_moments(seed)
    acf = sample_acf(series)
    lags = np.arange(max_lag + 1)
    theo = np.asarray(theoretical_acf(trawl, lags * series.delta), dtype=float) * var_l
    q_n = quarticity(series)
    a0 = estimate_trawl(series, 0, acf=acf)[0] if series.n >= 3 else float('nan')
    return MomentReport(
        mean=(acf.mean, leb_A(trawl) * mean_l),
        variance=(acf.at(0), leb_A(trawl) * var_l),
        lags=lags,
        acf_empirical=acf.gamma_hat[:max_lag + 1].copy(),
        acf_theoretical=theo,
        quarticity=q_n,
        quarticity_ratio=q_n / series.delta,
        c4_implied=q_n / a0 if a0 > 0 else float('nan'),
        c4_seed=c4,
    )
