"""
utils.py
Description: Shared helpers for trawlkit: logger setup, the exception hierarchy
used across the estimation stack, and worker-count resolution.
"""

# Standard library imports
import os
import logging

LOG_FORMAT = '[%(asctime)s] %(levelname)s %(name)s: %(message)s'

# Configure the package logger; every utils.* module logger propagates to it
package_logger = logging.getLogger("utils")
package_logger.setLevel(logging.INFO)
if not package_logger.hasHandlers():
    handler = logging.StreamHandler()
    formatter = logging.Formatter(LOG_FORMAT)
    handler.setFormatter(formatter)
    package_logger.addHandler(handler)

logger = logging.getLogger(__name__)


class TrawlkitError(Exception):
    """Root of every error raised on purpose by trawlkit."""


class TrawlDomainError(TrawlkitError, ValueError):
    """A time, lag, level or model parameter outside its domain."""


class ConfigurationError(TrawlkitError, ValueError):
    """Invalid simulation/study configuration, including memory budget overflow."""


class InsufficientDataError(TrawlkitError, ValueError):
    """The series is too short for the requested estimator."""


class SeriesFormatError(TrawlkitError, ValueError):
    """A series file violates the equidistant `time,value` format."""


class DegenerateEstimateError(TrawlkitError, ArithmeticError):
    """An estimate needed as a divisor or variance is not strictly positive."""


class CellRunError(TrawlkitError, RuntimeError):
    """A Monte Carlo run failed; the cell is aborted."""

    def __init__(self, run_index, cause):
        self.run_index = run_index
        self.cause = cause
        super().__init__(f"Run {run_index} failed: {cause}")

    def __reduce__(self):
        return (self.__class__, (self.run_index, self.cause))


def set_logging(enabled: bool, verbose: bool = False):
    """
    Enable or disable logger output at runtime for every trawlkit module.
    Args:
        enabled (bool): If True, log at INFO (DEBUG when verbose). If False, silence logger.
        verbose (bool): Lower the level to DEBUG.
    """
    if not enabled:
        level = logging.CRITICAL
    else:
        level = logging.DEBUG if verbose else logging.INFO
    package_logger.setLevel(level)
    for name, existing in logging.root.manager.loggerDict.items():
        if isinstance(existing, logging.Logger) and name.startswith("utils."):
            existing.setLevel(logging.NOTSET)


def resolve_jobs(jobs=None):
    """
    Worker count for the Monte Carlo and forecast pools.
    Args:
        jobs (int | None): Explicit count; None or 0 falls back to TRAWLKIT_JOBS, then CPU count.
    Returns:
        int: A count >= 1.
    """
    if jobs is None or jobs == 0:
        env_jobs = os.environ.get('TRAWLKIT_JOBS')
        if env_jobs:
            try:
                jobs = int(env_jobs)
            except ValueError:
                raise ConfigurationError(f"TRAWLKIT_JOBS must be an integer, got {env_jobs!r}")
    if jobs is None or jobs <= 0:
        jobs = os.cpu_count() or 1
    return int(jobs)
