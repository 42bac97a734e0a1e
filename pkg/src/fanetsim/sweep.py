"""Multi-seed sweeps, optionally across worker processes.

Runs are independent engines; results are merged back in grid order so the
CSV output never depends on worker scheduling.
"""

from __future__ import annotations

import os
import tempfile
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .engine import Simulator
from .metrics import SweepSummary, aggregate, runs_csv, summary_csv

ENV_OUT_DIR = "FANETSIM_OUT_DIR"
ENV_JOBS = "FANETSIM_JOBS"

SUMMARY_NAME = "summary.csv"
RUNS_NAME = "runs.csv"


def default_jobs() -> int:
    env = os.environ.get(ENV_JOBS)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def default_out_dir(fallback="fanetsim-out") -> Path:
    return Path(os.environ.get(ENV_OUT_DIR) or fallback)


def ensure_writable(out_dir) -> Path:
    """Create ``out_dir`` if needed and prove a file can be written there.

    Raises ``OSError`` otherwise; called before any simulation starts.
    """
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    with tempfile.NamedTemporaryFile(dir=path, prefix=".probe-"):
        pass
    return path


@dataclass
class RunOutcome:
    value: object
    seed: int
    report: object = None
    error: str = ""


@dataclass
class SweepResult:
    summary: SweepSummary
    outcomes: list
    files: list = field(default_factory=list)

    @property
    def errors(self):
        return [o for o in self.outcomes if o.error]

    @property
    def ok(self):
        return not self.errors


def _run_one(job):
    value, seed, scenario = job
    try:
        return RunOutcome(value, seed, Simulator(scenario).run())
    except Exception:  # a failed run is reported, the sweep carries on
        return RunOutcome(value, seed, error=traceback.format_exc(limit=3))


def run_sweep(config, sweep, out_dir=None, jobs=None, per_run=False) -> SweepResult:
    """Run every ``(grid value, seed)`` pair and aggregate per grid value.

    With ``out_dir`` the summary CSV (and with ``per_run`` the per-run CSV)
    is written there; the directory is checked before anything runs.
    """
    if out_dir is not None:
        out_dir = ensure_writable(out_dir)
    work = list(sweep.scenarios(config))
    jobs = default_jobs() if jobs is None else max(1, int(jobs))
    if jobs == 1 or len(work) == 1:
        outcomes = [_run_one(w) for w in work]
    else:
        chunk = max(1, len(work) // (4 * jobs))
        with ProcessPoolExecutor(max_workers=min(jobs, len(work))) as pool:
            # map keeps submission order, whatever order the workers finish in
            outcomes = list(pool.map(_run_one, work, chunksize=chunk))

    summary = SweepSummary(sweep.parameter.value, list(sweep.grid), sweep.seed_base)
    by_value = {}
    for o in outcomes:
        if not o.error:
            by_value.setdefault(o.value, []).append(o.report)
    for value in sweep.grid:
        reports = by_value.get(value)
        summary.points.append(aggregate(reports) if reports else None)

    result = SweepResult(summary, outcomes)
    if out_dir is not None:
        if all(p is not None for p in summary.points):
            path = out_dir / SUMMARY_NAME
            path.write_text(summary_csv(summary))
            result.files.append(path)
        if per_run:
            rows = [(o.value, o.seed, o.report) for o in outcomes if not o.error]
            path = out_dir / RUNS_NAME
            path.write_text(runs_csv(summary.parameter, rows))
            result.files.append(path)
    return result
