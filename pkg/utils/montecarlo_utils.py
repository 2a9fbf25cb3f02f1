"""
montecarlo_utils.py
Description: Simulation-estimation study cells. A cell fixes the trawl, the seed
law, the grid and the report points; every run simulates one path on its own
RNG stream, and the runs are reduced in run-index order into consistency,
coverage and slice tables.
"""

import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from tqdm import tqdm

import model_config as settings
from utils.estimator_utils import (
    SliceEstimator,
    SliceMethod,
    estimate_derivative,
    estimate_trawl,
    estimate_trawl_bc,
    lag_index,
    sample_acf,
)
from utils.inference_utils import DEFAULT_LEVELS, StatisticKind, coverage, statistics_for_series
from utils.profiler_utils import StudyProfiler
from utils.simulator_utils import SimConfig, simulate
from utils.trawl_utils import SeedSpec, TrawlSpec, eval_trawl, leb_A, leb_intersection, leb_setminus
from utils.utils import (
    CellRunError,
    ConfigurationError,
    DegenerateEstimateError,
    InsufficientDataError,
    resolve_jobs,
)

logger = logging.getLogger(__name__)


class Target(str, Enum):
    CONSISTENCY = 'consistency'
    COVERAGE = 'coverage'
    SLICES = 'slices'


class ReportMode(BaseModel):
    """Exactly one of fixed_t (times) or fixed_i (grid indices)."""

    model_config = ConfigDict(frozen=True)

    fixed_t: Optional[List[float]] = None
    fixed_i: Optional[List[int]] = None

    @model_validator(mode='after')
    def _one_mode(self):
        if (self.fixed_t is None) == (self.fixed_i is None):
            raise ValueError("report needs exactly one of 'fixed_t' or 'fixed_i'")
        if self.fixed_t is not None and any(not (t >= 0 and math.isfinite(t)) for t in self.fixed_t):
            raise ValueError(f"report times must be finite and >= 0, got {self.fixed_t}")
        if self.fixed_i is not None and any(i < 0 for i in self.fixed_i):
            raise ValueError(f"report indices must be >= 0, got {self.fixed_i}")
        return self

    @property
    def mode(self):
        return 'fixed_t' if self.fixed_t is not None else 'fixed_i'


def _default_report():
    return ReportMode(fixed_t=settings.study_config.get('fixed_t', [0.0]))


class StudyCell(BaseModel):
    """One row block of a study table."""

    model_config = ConfigDict(frozen=True)

    marginal: SeedSpec
    trawl: TrawlSpec
    delta: float = Field(gt=0)
    n: int = Field(ge=4)
    runs: int = Field(default_factory=lambda: int(settings.study_config.get('runs', 200)), ge=2)
    report: ReportMode = Field(default_factory=_default_report)
    targets: List[Target] = Field(default_factory=lambda: [Target.CONSISTENCY], min_length=1)
    seed: int = Field(default_factory=lambda: settings.MASTER_SEED, ge=0, lt=2 ** 64)
    tail_cutoff: Optional[float] = Field(default=None, gt=0)
    subset_of: Optional[int] = None
    slice_horizons: List[float] = Field(
        default_factory=lambda: list(settings.study_config.get('slice_horizons', [0.1, 1.0])))
    slice_methods: List[SliceMethod] = Field(default_factory=lambda: [SliceMethod.EMPIRICAL_ACF])
    levels: List[float] = Field(default_factory=lambda: list(settings.study_config.get('levels', DEFAULT_LEVELS)))
    statistics: List[StatisticKind] = Field(
        default_factory=lambda: [StatisticKind.INFEASIBLE, StatisticKind.FEASIBLE, StatisticKind.FEASIBLE_BC])
    k_n: Optional[int] = Field(default=None, ge=1)
    n_n: Optional[int] = Field(default=None, ge=0)
    grid_centering: bool = False

    @field_validator('slice_methods', mode='before')
    @classmethod
    def _parse_methods(cls, v):
        return [SliceMethod.parse(m) for m in v]

    @field_validator('statistics', mode='before')
    @classmethod
    def _parse_statistics(cls, v):
        return [StatisticKind.parse(k) for k in v]

    @model_validator(mode='after')
    def _within_grid(self):
        last = self.n - 3
        for _, i in self.report_points():
            if i > last:
                raise ValueError(f"report point at grid index {i} is beyond the estimable grid 0..{last} (n={self.n})")
        if self.subset_of is not None and self.subset_of < self.n:
            raise ValueError(f"subset_of={self.subset_of} must be >= n={self.n}")
        if any(not 0 < q < 1 for q in self.levels):
            raise ValueError(f"coverage levels must lie in (0, 1), got {self.levels}")
        if any(not h >= 0 for h in self.slice_horizons):
            raise ValueError(f"slice horizons must be >= 0, got {self.slice_horizons}")
        return self

    def report_points(self):
        """(t, i) pairs; in fixed-i mode t = i*delta."""
        if self.report.fixed_t is not None:
            return [(float(t), lag_index(t, self.delta)) for t in self.report.fixed_t]
        return [(i * self.delta, int(i)) for i in self.report.fixed_i]

    def sim_config(self, run_index):
        return SimConfig(trawl=self.trawl, seed=self.marginal, delta=self.delta,
                         n=self.subset_of or self.n, tail_cutoff=self.tail_cutoff,
                         rng_seed=self.seed, run_index=run_index)

    def truth(self, t):
        return float(eval_trawl(self.trawl, t))

    @property
    def label(self):
        return f"{self.marginal.kind}-{self.trawl.kind} delta={self.delta:g} n={self.n}"


def load_study_cell(obj, **overrides):
    """StudyCell from its JSON form; keyword overrides (e.g. runs, seed) win over the file."""
    if isinstance(obj, StudyCell):
        data = obj.model_dump(by_alias=True)
    else:
        data = dict(obj)
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return StudyCell.model_validate(data)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid study cell: {e}") from e


@dataclass
class RunOutcome:
    run_index: int
    a_hat: np.ndarray = None
    a_hat_bc: np.ndarray = None
    statistics: list = field(default_factory=list)
    slices: dict = field(default_factory=dict)


def run_once(cell, run_index):
    """Simulate and analyse one path; degenerate estimates are recorded, other errors propagate."""
    series = simulate(cell.sim_config(run_index))
    if cell.subset_of:
        series = series.head(cell.n)
    points = cell.report_points()
    outcome = RunOutcome(run_index=run_index)
    acf = sample_acf(series)

    if Target.CONSISTENCY in cell.targets:
        idx = np.array([i for _, i in points], dtype=int)
        a_hat = estimate_trawl(series, acf=acf)
        a_bc = estimate_trawl_bc(a_hat, estimate_derivative(series), series.delta)
        outcome.a_hat = a_hat[idx]
        outcome.a_hat_bc = a_bc[idx]

    if Target.COVERAGE in cell.targets:
        times = [t for t, _ in points]
        outcome.statistics = statistics_for_series(
            series, times, cell.statistics, cell.trawl, seed=cell.marginal,
            grid_centering=cell.grid_centering,
            N_n=cell.n_n, K_n=cell.k_n,
        )

    if Target.SLICES in cell.targets:
        estimator = SliceEstimator(series, acf=acf)
        for h in cell.slice_horizons:
            for method in cell.slice_methods:
                try:
                    outcome.slices[(h, method.value)] = estimator.estimate(h, method)
                except DegenerateEstimateError as e:
                    logger.debug(f"Run {run_index}: degenerate slice {method.value} at h={h}: {e}")
                    outcome.slices[(h, method.value)] = None
    return outcome


def _mean_bias_sd(values, truth):
    values = np.asarray(values, dtype=float)
    values = values[np.isfinite(values)]
    if values.size == 0:
        return float('nan'), float('nan'), float('nan')
    mean = float(np.mean(values))
    sd = float(np.std(values, ddof=1)) if values.size > 1 else float('nan')
    return mean, mean - truth, sd


def _pct(level):
    return str(int(round(level * 100)))


@dataclass
class CellResult:
    """Run outcomes of a cell in run-index order, with the table reductions."""

    cell: StudyCell
    outcomes: list
    wall_time: float = 0.0
    profile: str = ''

    @property
    def runs(self):
        return len(self.outcomes)

    def consistency_columns(self):
        return ['t', 'n', 'mean', 'bias', 'sd', 'mean_bc', 'bias_bc', 'sd_bc']

    def coverage_columns(self):
        columns = ['t', 'n', 'subset', 'degenerate']
        for kind in self.cell.statistics:
            columns += [f"{kind.value}_mean", f"{kind.value}_sd"]
            columns += [f"{kind.value}_{_pct(q)}" for q in self.cell.levels]
        return columns

    def slice_columns(self):
        columns = ['h', 'method', 'degenerate']
        for name in ('leb_a', 'leb_cap', 'leb_minus', 'ratio_cap', 'ratio_minus'):
            columns += [f"{name}_mean", f"{name}_bias", f"{name}_sd"]
        return columns

    def consistency_rows(self):
        rows = []
        if not self.outcomes:
            return rows
        a_hat = np.vstack([o.a_hat for o in self.outcomes])
        a_bc = np.vstack([o.a_hat_bc for o in self.outcomes])
        for p, (t, i) in enumerate(self.cell.report_points()):
            truth = self.cell.truth(t)
            mean, bias, sd = _mean_bias_sd(a_hat[:, p], truth)
            mean_bc, bias_bc, sd_bc = _mean_bias_sd(a_bc[:, p], truth)
            rows.append({'t': t, 'n': self.cell.n, 'mean': mean, 'bias': bias, 'sd': sd,
                         'mean_bc': mean_bc, 'bias_bc': bias_bc, 'sd_bc': sd_bc})
        return rows

    def coverage_rows(self):
        rows = []
        if not self.outcomes:
            return rows
        for t, _ in self.cell.report_points():
            by_kind = {kind: [s for o in self.outcomes for s in o.statistics if s.kind is kind and s.t == t]
                       for kind in self.cell.statistics}
            degenerate_runs = sum(
                1 for o in self.outcomes if any(s.degenerate for s in o.statistics if s.t == t))
            for subset, include in (('all', True), ('non_degenerate', False)):
                row = {'t': t, 'n': self.cell.n, 'subset': subset, 'degenerate': degenerate_runs}
                for kind, items in by_kind.items():
                    try:
                        summary = coverage(items, levels=self.cell.levels, include_degenerate=include)
                        values = [summary.mean, summary.sd, *summary.coverage]
                    except InsufficientDataError:
                        values = [float('nan')] * (2 + len(self.cell.levels))
                    names = [f"{kind.value}_mean", f"{kind.value}_sd"] + [
                        f"{kind.value}_{_pct(q)}" for q in self.cell.levels]
                    row.update(zip(names, values))
                rows.append(row)
        return rows

    def slice_rows(self):
        rows = []
        if not self.outcomes:
            return rows
        trawl = self.cell.trawl
        for h in self.cell.slice_horizons:
            leb = leb_A(trawl)
            truths = {'leb_a': leb, 'leb_cap': leb_intersection(trawl, h), 'leb_minus': leb_setminus(trawl, h)}
            truths['ratio_cap'] = truths['leb_cap'] / leb
            truths['ratio_minus'] = truths['leb_minus'] / leb
            for method in self.cell.slice_methods:
                estimates = [o.slices.get((h, method.value)) for o in self.outcomes]
                row = {'h': h, 'method': method.value, 'degenerate': sum(1 for e in estimates if e is None)}
                fields = {'leb_a': 'leb_A', 'leb_cap': 'leb_cap', 'leb_minus': 'leb_minus',
                          'ratio_cap': 'ratio_cap', 'ratio_minus': 'ratio_minus'}
                for name, attr in fields.items():
                    values = [getattr(e, attr) if e is not None else float('nan') for e in estimates]
                    mean, bias, sd = _mean_bias_sd(values, truths[name])
                    row.update({f"{name}_mean": mean, f"{name}_bias": bias, f"{name}_sd": sd})
                rows.append(row)
        return rows

    def table(self, layout):
        layout = Target(layout)
        if layout not in self.cell.targets:
            raise ConfigurationError(
                f"layout {layout.value!r} was not computed for this cell (targets: "
                f"{[t.value for t in self.cell.targets]})"
            )
        if layout is Target.CONSISTENCY:
            return pd.DataFrame(self.consistency_rows(), columns=self.consistency_columns())
        if layout is Target.COVERAGE:
            return pd.DataFrame(self.coverage_rows(), columns=self.coverage_columns())
        return pd.DataFrame(self.slice_rows(), columns=self.slice_columns())


def emit_table(result, layout, precision=None):
    """
    CSV text of one table layout.
    Args:
        result (CellResult): Reduced cell.
        layout (str): consistency, coverage or slices; must be one of the cell's targets.
        precision (int | None): Significant digits; defaults to TRAWLKIT_PRECISION.
    Returns:
        str: Header-only when the result holds no runs.
    """
    try:
        layout = Target(layout)
    except ValueError:
        raise ConfigurationError(f"Unknown table layout {layout!r}; choose from {[t.value for t in Target]}")
    precision = settings.PRECISION if precision is None else int(precision)
    buf = io.StringIO()
    result.table(layout).to_csv(buf, index=False, float_format=f"%.{precision}g", lineterminator='\n')
    return buf.getvalue()


def run_cell(cell, jobs=None, show_progress=None):
    """
    Run every Monte Carlo path of a cell.
    Args:
        cell (StudyCell): Cell definition.
        jobs (int | None): Worker processes; 1 runs inline.
        show_progress (bool | None): tqdm progress bar.
    Returns:
        CellResult: Outcomes ordered by run index, independent of the worker count.
    """
    jobs = resolve_jobs(jobs)
    show_progress = settings.SHOW_PROGRESS if show_progress is None else show_progress
    profiler = StudyProfiler(cell.label)
    logger.info(f"Running cell {cell.label}: {cell.runs} runs on {jobs} workers")

    outcomes = [None] * cell.runs
    profiler.start_step('simulate_estimate', f"{cell.runs} runs")
    if jobs == 1:
        for r in tqdm(range(cell.runs), desc='mc', disable=not show_progress):
            try:
                outcomes[r] = run_once(cell, r)
            except Exception as e:
                logger.error(f"Run {r} of {cell.label} failed: {e}", exc_info=True)
                raise CellRunError(r, e) from e
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {pool.submit(run_once, cell, r): r for r in range(cell.runs)}
            for future in tqdm(as_completed(futures), total=len(futures), desc='mc', disable=not show_progress):
                r = futures[future]
                try:
                    outcomes[r] = future.result()
                except Exception as e:
                    for pending in futures:
                        pending.cancel()
                    logger.error(f"Run {r} of {cell.label} failed: {e}", exc_info=True)
                    raise CellRunError(r, e) from e
    profiler.start_step('aggregate')
    profiler.record_runs(cell.runs, sum(
        1 for o in outcomes if any(s.degenerate for s in o.statistics) or any(v is None for v in o.slices.values())))
    result = CellResult(cell=cell, outcomes=outcomes)
    profiler.end_step()
    result.wall_time = profiler.elapsed
    result.profile = profiler.get_summary()
    logger.debug(result.profile)
    return result
