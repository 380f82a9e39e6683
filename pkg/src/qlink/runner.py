"""Batch execution of presets and single configurations."""
from __future__ import annotations

from typing import Optional, Sequence

from .config import PresetPoint, ResultRow, preset_points
from .tomography import aggregate
from .trial import run_trials


def run_point(preset: str, point: PresetPoint, trials=None, seed_base=None, jobs=1):
    """Run all trials of one sweep point; returns (row, per-trial results)."""
    results = run_trials(point.config, trials=trials, seed_base=seed_base, jobs=jobs)
    for r in results:
        if not r.audit_balanced():
            raise AssertionError(
                f"resource conservation audit failed for {preset}/{point.series}"
                f"@{point.sweep_value} seed {r.seed}"
            )
    return ResultRow.from_aggregate(preset, point, aggregate(results)), results


def run_preset(
    name: str,
    trials: Optional[int] = None,
    seed_base: Optional[int] = None,
    jobs: int = 1,
    series: Optional[Sequence[str]] = None,
    sweep_values: Optional[Sequence[float]] = None,
    collect_trials: bool = False,
):
    """Execute a preset sweep; rows come back in declaration order.

    `series` and `sweep_values` narrow the sweep to a subset of points.
    """
    rows, per_trial = [], {}
    for point in preset_points(name):
        if series is not None and point.series not in series:
            continue
        if sweep_values is not None and point.sweep_value not in sweep_values:
            continue
        row, results = run_point(name, point, trials=trials, seed_base=seed_base, jobs=jobs)
        rows.append(row)
        if collect_trials:
            per_trial[(point.series, point.sweep_value)] = results
    return (rows, per_trial) if collect_trials else rows
