"""Epsilon sweeps: rerun a configuration for a decreasing sequence of
regularization parameters and compare the runs.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .config import Config
from .diagnostics import ACCUMULATOR_KEYS
from .errors import ChemoflowError, SweepRunError
from .grid import Grid, integrate
from .model import select_interpolation_exponents
from .stepper import TrajectorySample, run

__all__ = [
    "SweepReport",
    "RunSummary",
    "epsilon_sweep",
    "select_interpolation_exponents",
    "trajectory_distance",
    "boundedness_verdict",
    "cauchy_verdict",
    "write_sweep_csv",
]

FIELDS = ("n", "c", "u")

# eps * int int n^2 carries an explicit eps factor and tends to zero with eps;
# its bound is one-sided and checked per run by the sink budget
SPREAD_EXCLUDED = ("st_epsn2",)


@dataclass
class RunSummary:
    eps: float
    sup_y: float
    sup_acc: Dict[str, Optional[float]]
    trajectory: List[TrajectorySample]
    steps: int
    bounds_held: bool


@dataclass
class SweepReport:
    eps_list: tuple
    sup_y: List[float]
    sup_acc: Dict[str, List[Optional[float]]]
    distances: Dict[str, List[float]]
    ratios: Dict[str, float]
    bounded: bool
    cauchy: Dict[str, bool]
    bound_factor: float
    runs: List[RunSummary] = field(default_factory=list, repr=False)

    @property
    def cauchy_all(self) -> bool:
        return all(self.cauchy.values())

    @property
    def passed(self) -> bool:
        return self.bounded and self.cauchy_all

    def verdict_line(self) -> str:
        parts = [f"bounded={'pass' if self.bounded else 'fail'}"]
        parts += [f"cauchy_{k}={'pass' if v else 'fail'}" for k, v in self.cauchy.items()]
        worst = max(self.ratios.values()) if self.ratios else 1.0
        parts.append(f"max_ratio={worst:.4g}")
        return "# verdict " + " ".join(parts)


def _field_l1(a: TrajectorySample, b: TrajectorySample, name: str, grid: Grid) -> float:
    if name == "u":
        diff = np.sqrt(sum((x - y) ** 2 for x, y in zip(a.u, b.u)))
    else:
        diff = np.abs(getattr(a, name) - getattr(b, name))
    return integrate(diff, grid)


def trajectory_distance(
    traj_a: Sequence[TrajectorySample], traj_b: Sequence[TrajectorySample], grid: Grid, name: str = "n"
) -> float:
    """L1 distance over space and time, trapezoidal in time over the output
    times shared by both trajectories. For ``u`` the pointwise distance is the
    Euclidean norm of the difference of the cell-averaged velocities."""
    if name not in FIELDS:
        raise ValueError(f"unknown field {name!r}")
    times_b = {s.t: s for s in traj_b}
    pairs = [(s, times_b[s.t]) for s in traj_a if s.t in times_b]
    if len(pairs) < 2:
        return 0.0
    t = np.array([p[0].t for p in pairs])
    vals = np.array([_field_l1(a, b, name, grid) for a, b in pairs])
    return float(np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(t)))


def _spread(values: Sequence[float]) -> float:
    """max |v| / min |v| over a sweep; 1 for all-zero, inf if some vanish."""
    mags = np.abs(np.asarray(values, dtype=float))
    if np.all(mags == 0):
        return 1.0
    if np.any(mags == 0) or not np.all(np.isfinite(mags)):
        return float("inf")
    return float(mags.max() / mags.min())


def boundedness_verdict(sup_y, sup_acc, bound_factor: float = 3.0):
    """Spread ratios per quantity and whether all stay below ``bound_factor``."""
    ratios = {"sup_y": _spread(sup_y)}
    for k, vals in sup_acc.items():
        if k in SPREAD_EXCLUDED or any(v is None for v in vals):
            continue
        ratios[k] = _spread(vals)
    return ratios, all(r < bound_factor for r in ratios.values())


def cauchy_verdict(distances: Sequence[float], tolerance: float = 0.05) -> bool:
    """Distances nonincreasing, allowing a single increase of at most
    ``tolerance`` relative to the preceding distance."""
    inversions = 0
    for prev, cur in zip(distances, distances[1:]):
        if cur <= prev:
            continue
        if prev > 0 and cur <= prev * (1 + tolerance):
            inversions += 1
        else:
            return False
    return inversions <= 1


def _run_one(config: Config, eps: float) -> RunSummary:
    cfg = config.replace("params", eps=eps)
    try:
        res = run(cfg, store_trajectory=True)
    except ChemoflowError as exc:
        raise SweepRunError(f"run with eps={eps!r} failed: {exc}", eps=eps) from exc
    sup_acc = {k: res.rows[-1][k] for k in ACCUMULATOR_KEYS}
    return RunSummary(
        eps=eps,
        sup_y=max(r["y"] for r in res.rows),
        sup_acc=sup_acc,
        trajectory=res.trajectory,
        steps=res.steps,
        bounds_held=res.bounds.all_held,
    )


def _thread_count() -> int:
    raw = os.environ.get("CHEMOFLOW_THREADS", "0").strip() or "0"
    try:
        return max(0, int(raw))
    except ValueError:
        raise ValueError(f"CHEMOFLOW_THREADS must be an integer, got {raw!r}") from None


def epsilon_sweep(config: Config, eps_list: Optional[Sequence[float]] = None, workers: Optional[int] = None) -> SweepReport:
    """Run ``config`` once per epsilon and compare consecutive runs.

    Runs are independent; with ``workers`` (default from CHEMOFLOW_THREADS)
    above zero they execute in a process pool, otherwise sequentially.
    """
    eps_list = tuple(float(e) for e in (eps_list if eps_list is not None else config.sweep.eps_list))
    if not eps_list:
        raise ValueError("eps_list is empty")
    if any(not 0 < e <= 1 for e in eps_list):
        raise ValueError("every eps must lie in (0, 1]")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    workers = _thread_count() if workers is None else workers
    if workers > 0 and len(eps_list) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(eps_list))) as pool:
            runs = list(pool.map(_run_one, [config] * len(eps_list), eps_list))
    else:
        runs = [_run_one(config, e) for e in eps_list]

    grid = config.build_grid()
    distances = {
        name: [trajectory_distance(a.trajectory, b.trajectory, grid, name) for a, b in zip(runs, runs[1:])]
        for name in FIELDS
    }
    sup_y = [r.sup_y for r in runs]
    sup_acc = {k: [r.sup_acc[k] for r in runs] for k in ACCUMULATOR_KEYS}
    ratios, bounded = boundedness_verdict(sup_y, sup_acc, config.sweep.bound_factor)
    cauchy = {name: cauchy_verdict(d, config.sweep.cauchy_tolerance) for name, d in distances.items()}
    return SweepReport(
        eps_list=eps_list,
        sup_y=sup_y,
        sup_acc=sup_acc,
        distances=distances,
        ratios=ratios,
        bounded=bounded,
        cauchy=cauchy,
        bound_factor=config.sweep.bound_factor,
        runs=runs,
    )


def write_sweep_csv(path, report: SweepReport) -> Path:
    """One row per epsilon; ``dist_*`` on row j compares runs j and j+1."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = ["eps", "sup_y"] + [f"sup_{k}" for k in ACCUMULATOR_KEYS] + [f"dist_{f}" for f in FIELDS]

    def fmt(v):
        return "" if v is None else repr(float(v))

    lines = [",".join(header)]
    for j, eps in enumerate(report.eps_list):
        row = [fmt(eps), fmt(report.sup_y[j])]
        row += [fmt(report.sup_acc[k][j]) for k in ACCUMULATOR_KEYS]
        row += [fmt(report.distances[f][j]) if j < len(report.distances[f]) else "" for f in FIELDS]
        lines.append(",".join(row))
    lines.append(report.verdict_line())
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
