"""
Evaluation metrics and the experiment report.

Reports keep deterministic columns (costs, success, seeds, digests) apart from the
wall-time columns, so that reruns with the same seed produce identical cost CSVs.
"""
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Protocol, Sequence, Union

import numpy as np
import pandas as pd
from scipy.spatial.distance import pdist

from ..control import RolloutLog
from ..dynamics import FloatArray

logger = logging.getLogger(__name__)


class SequenceSampler(Protocol):
    """Anything that draws `count` control sequences (count, H, n_u) for a state."""

    def draw(self, state: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
        ...


# =============================================================================
# Multimodality
# =============================================================================

def has_separated_pair(samples: np.ndarray, threshold: float) -> bool:
    """True when any two samples are farther apart than `threshold` (L2 over the sequence)."""
    flat = np.asarray(samples, dtype=float).reshape(len(samples), -1)
    if len(flat) < 2:
        return False
    return bool(np.max(pdist(flat)) > threshold)


def multimodality_percentage(
    sampler: SequenceSampler,
    probes: np.ndarray,
    samples: int,
    threshold: float,
    rng: np.random.Generator,
) -> FloatArray:
    """
    Percentage of probe states whose samples contain a pair farther apart than `threshold`.

    Args:
        sampler: Diffusion model or multistart solver wrapper
        probes: Probe states (T, P, n_x): P trajectories observed for T steps
        samples: Samples drawn per probe state
        threshold: Separation threshold in sequence L2 units
        rng: Random stream; probes are visited in (t, p) order

    Returns:
        Percentage per time step, shape (T,)
    """
    probes = np.asarray(probes, dtype=float)
    if probes.ndim != 3:
        raise ValueError("probes must have shape (T, P, n_x)")
    steps, count = probes.shape[:2]
    percentages = np.zeros(steps)
    for t in range(steps):
        hits = sum(has_separated_pair(sampler.draw(probes[t, p], samples, rng), threshold)
                   for p in range(count))
        percentages[t] = 100.0 * hits / count
    return percentages


# =============================================================================
# Cost and timing summaries
# =============================================================================

def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of log(y) against log(x)."""
    x_arr, y_arr = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if len(x_arr) < 2 or np.any(x_arr <= 0) or np.any(y_arr <= 0):
        raise ValueError("loglog_slope needs >= 2 strictly positive points")
    slope, _ = np.polyfit(np.log(x_arr), np.log(y_arr), 1)
    return float(slope)


def normalize_costs(medians: Dict[str, float]) -> Dict[str, float]:
    """Divide every median by the largest finite median of the group."""
    finite = [v for v in medians.values() if np.isfinite(v)]
    scale = max(finite) if finite else 0.0
    if scale <= 0.0:
        return {name: float("nan") for name in medians}
    return {name: value / scale for name, value in medians.items()}


@dataclass
class ReportRow:
    """Aggregate over the episodes of one controller (at one ablation point)."""
    system: str
    controller: str
    parameter: str
    value: float
    episodes: int
    seed: int
    digest: str
    cost_median: float
    cost_q25: float
    cost_q75: float
    cost_normalized: float
    success_rate: float
    aborted: int
    time_mean: float
    time_max: float


TIMING_COLUMNS = ("time_mean", "time_max")


def summarize_logs(
    logs: List[RolloutLog],
    successes: List[bool],
    system: str,
    controller: str,
    seed: int,
    digest: str,
    parameter: str = "",
    value: float = float("nan"),
) -> ReportRow:
    if not logs:
        raise ValueError("Cannot summarize zero episodes")
    costs = np.array([log.total_cost for log in logs])
    times = np.concatenate([log.wall_times for log in logs if len(log.wall_times)] or [np.zeros(1)])
    q25, q50, q75 = np.quantile(costs, [0.25, 0.5, 0.75])
    return ReportRow(
        system=system,
        controller=controller,
        parameter=parameter,
        value=value,
        episodes=len(logs),
        seed=seed,
        digest=digest,
        cost_median=float(q50),
        cost_q25=float(q25),
        cost_q75=float(q75),
        cost_normalized=float("nan"),
        success_rate=float(np.mean(successes)),
        aborted=int(sum(log.aborted for log in logs)),
        time_mean=float(np.mean(times)),
        time_max=float(np.max(times)),
    )


@dataclass
class ExperimentReport:
    """
    Rows of one comparison or ablation, plus per-episode costs.

    Rows are kept sorted by (system, parameter value, controller).
    """
    rows: List[ReportRow] = field(default_factory=list)
    episode_costs: Dict[str, List[float]] = field(default_factory=dict)

    def add(self, row: ReportRow, costs: Optional[List[float]] = None) -> None:
        self.rows.append(row)
        if costs is not None:
            self.episode_costs[f"{row.controller}@{row.value:g}" if row.parameter else row.controller] = costs

    def finalize(self) -> "ExperimentReport":
        """Sort rows and fill normalized medians per (system, ablation point)."""
        if not self.rows:
            raise ValueError("An experiment report needs at least one row")
        self.rows.sort(key=lambda r: (r.system, r.parameter, r.value if np.isfinite(r.value) else 0.0,
                                      r.controller))
        groups: Dict[tuple, Dict[str, float]] = {}
        for row in self.rows:
            groups.setdefault((row.system, row.parameter, row.value), {})[row.controller] = row.cost_median
        normalized = {key: normalize_costs(medians) for key, medians in groups.items()}
        for row in self.rows:
            row.cost_normalized = normalized[(row.system, row.parameter, row.value)][row.controller]
        return self

    def to_frame(self, include_timing: bool = False) -> pd.DataFrame:
        frame = pd.DataFrame([asdict(row) for row in self.rows])
        if not include_timing:
            frame = frame.drop(columns=list(TIMING_COLUMNS))
        return frame

    def timing_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame([asdict(row) for row in self.rows])
        return frame[["system", "controller", "parameter", "value", *TIMING_COLUMNS]]

    def row(self, controller: str, value: Optional[float] = None) -> ReportRow:
        for row in self.rows:
            if row.controller == controller and (value is None or row.value == value):
                return row
        raise KeyError(f"No report row for {controller} at {value}")

    def write(self, path: Union[str, Path], timing_path: Optional[Union[str, Path]] = None) -> None:
        write_csv(self.to_frame(), path)
        if timing_path is not None:
            write_csv(self.timing_frame(), timing_path)


# =============================================================================
# Files
# =============================================================================

def write_csv(frame: pd.DataFrame, path: Union[str, Path]) -> None:
    """Comma-separated, header row, '.' decimal, full float precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def write_plot_data(path: Union[str, Path], curves: Dict[str, tuple]) -> None:
    """
    Whitespace-separated plot data: one block per curve, "# name" header, x y rows.

    Args:
        path: Output file
        curves: name -> (x values, y values)
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines: List[str] = []
    for name in sorted(curves):
        xs, ys = curves[name]
        lines.append(f"# {name}")
        lines.extend(f"{float(x):.17g} {float(y):.17g}" for x, y in zip(xs, ys))
        lines.append("")
    path.write_text("\n".join(lines), encoding="utf-8")
