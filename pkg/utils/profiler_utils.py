# Wall-time profiling for Monte Carlo study cells
import time
import logging
from collections import defaultdict

logger = logging.getLogger(__name__)


class StudyProfiler:
    """
    Step timing for a Monte Carlo cell. Wall time is reported in the
    profile text and never written into result tables.
    """

    def __init__(self, label):
        self.label = label
        self.start_time = time.perf_counter()
        self.step_times = defaultdict(float)
        self.step_counts = defaultdict(int)
        self.current_step = None
        self.step_start_time = None
        self.runs_completed = 0
        self.runs_degenerate = 0

    def start_step(self, step_name, details=""):
        if self.current_step:
            self.end_step()
        self.current_step = step_name
        self.step_start_time = time.perf_counter()
        self.step_counts[step_name] += 1
        logger.debug(f"PROFILER [{self.label}]: Starting {step_name} - {details}")

    def end_step(self, additional_info=""):
        if not self.current_step:
            return
        spent = time.perf_counter() - self.step_start_time
        self.step_times[self.current_step] += spent
        logger.debug(f"PROFILER [{self.label}]: Completed {self.current_step} in {spent:.3f}s {additional_info}")
        self.current_step = None
        self.step_start_time = None

    def record_runs(self, completed, degenerate=0):
        self.runs_completed += completed
        self.runs_degenerate += degenerate

    @property
    def elapsed(self):
        return time.perf_counter() - self.start_time

    def get_summary(self):
        """Profile of the cell as text: totals, throughput and per-step shares."""
        if self.current_step:
            self.end_step("(closed by summary)")
        total = self.elapsed
        lines = [
            "=" * 60,
            f"STUDY PROFILE - {self.label}",
            "=" * 60,
            f"Total Execution Time: {total:.3f} seconds",
            f"Runs Completed: {self.runs_completed} ({self.runs_degenerate} degenerate)",
        ]
        if self.runs_completed and total > 0:
            lines.append(f"Throughput: {self.runs_completed / total:.2f} runs/second")
        lines.extend(["", "STEP BREAKDOWN:", "-" * 60])
        for name, spent in sorted(self.step_times.items(), key=lambda x: x[1], reverse=True):
            count = self.step_counts[name]
            share = 100.0 * spent / total if total > 0 else 0.0
            lines.append(f"  {name:.<30} {spent:>8.3f}s ({share:>5.1f}%) [{count}x, avg: {spent / count:.3f}s]")
        lines.append("=" * 60)
        return "\n".join(lines)
