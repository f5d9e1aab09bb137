"""Hand-engineered scanpath descriptors.

All functions expect a normalized ScanPath (coordinates in the unit square,
durations and onsets in milliseconds).
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from gazefuse.errors import ConfigError, InsufficientDataError, InvalidDistributionError
from gazefuse.gaze.types import ScanPath

LAYOUT_VERSION = 1
SCALAR_FEATURES = (
    "mean_fixation_duration",
    "std_fixation_duration",
    "mean_saccade_amplitude",
    "max_saccade_amplitude",
    "dispersion",
    "gaze_entropy",
    "recurrence_rate",
    "mean_saccadic_speed",
    "fixation_entropy",
)
# dropped together in the "without temporal features" ablation arm
TEMPORAL_FEATURES = ("fixation_entropy", "mean_saccadic_speed")
POLICIES = ("uniform", "zero")


@dataclass(frozen=True)
class RegionGrid:
    rows: int = 4
    cols: int = 4

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ConfigError("region grid needs at least one row and column")

    @property
    def n_regions(self) -> int:
        return self.rows * self.cols

    def region_of(self, x: float, y: float) -> int:
        col = min(int(x * self.cols), self.cols - 1)
        row = min(int(y * self.rows), self.rows - 1)
        return row * self.cols + col

    def regions(self, path: ScanPath) -> np.ndarray:
        return np.array([self.region_of(f.x, f.y) for f in path.fixations], dtype=np.int64)


@dataclass(frozen=True)
class TransitionMatrix:
    counts: np.ndarray
    probabilities: np.ndarray
    unvisited: np.ndarray  # True where the row had no outgoing transitions


class SpatialStats(NamedTuple):
    mean_fixation_duration: float
    std_fixation_duration: float
    mean_saccade_amplitude: float
    max_saccade_amplitude: float
    dispersion: float


@dataclass(frozen=True)
class FeatureVector:
    names: tuple[str, ...]
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.values)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, map(float, self.values)))


def _require(path: ScanPath, n: int = 2) -> None:
    if len(path) < n:
        raise InsufficientDataError(f"{path.subject_id}/{path.stimulus_id}: need at least {n} fixations, got {len(path)}")


def transition_counts(regions: Iterable[int], n_regions: int) -> np.ndarray:
    seq = list(regions)
    counts = np.zeros((n_regions, n_regions), dtype=np.int64)
    for a, b in zip(seq, seq[1:]):
        counts[a, b] += 1
    return counts


def transition_matrix(path: ScanPath, grid: RegionGrid, policy: str = "uniform") -> TransitionMatrix:
    """Row-normalized region-to-region transition counts, self-transitions included.

    Rows with no outgoing transitions are filled with ``1/R`` under the
    ``uniform`` policy, or left at zero and flagged under ``zero``.
    """
    if policy not in POLICIES:
        raise ConfigError(f"unvisited-row policy must be one of {POLICIES}, got {policy!r}")
    _require(path)
    return _normalize_counts(transition_counts(grid.regions(path), grid.n_regions), policy)


def _normalize_counts(counts: np.ndarray, policy: str) -> TransitionMatrix:
    r = counts.shape[0]
    totals = counts.sum(axis=1)
    unvisited = totals == 0
    probs = np.zeros((r, r), dtype=np.float64)
    visited = ~unvisited
    probs[visited] = counts[visited] / totals[visited, None]
    if policy == "uniform":
        probs[unvisited] = 1.0 / r
    return TransitionMatrix(counts, probs, unvisited)


def spatial_stats(path: ScanPath) -> SpatialStats:
    _require(path)
    pos = path.positions()
    dur = path.durations()
    amps = np.linalg.norm(np.diff(pos, axis=0), axis=1)
    centroid = pos.mean(axis=0)
    dispersion = float(np.sqrt(np.mean(np.sum((pos - centroid) ** 2, axis=1))))
    return SpatialStats(float(dur.mean()), float(dur.std()), float(amps.mean()), float(amps.max()), dispersion)


def dwell_times(path: ScanPath, grid: RegionGrid) -> np.ndarray:
    """Fraction of total fixation time spent in each region."""
    dur = path.durations()
    total = dur.sum()
    if total <= 0:
        raise InsufficientDataError("scanpath has zero total fixation duration")
    out = np.zeros(grid.n_regions)
    np.add.at(out, grid.regions(path), dur)
    return out / total


def entropy(dist, tolerance: float = 1e-6) -> float:
    """Shannon entropy in bits with 0 log 0 = 0."""
    p = np.asarray(dist, dtype=np.float64)
    if p.size == 0 or np.any(p < 0) or not np.all(np.isfinite(p)):
        raise InvalidDistributionError("distribution entries must be finite and nonnegative")
    total = p.sum()
    if abs(total - 1.0) > tolerance:
        raise InvalidDistributionError(f"distribution sums to {total}, not 1")
    p = p / total
    nz = p[p > 0]
    return float(max(-(nz * np.log2(nz)).sum(), 0.0))


def fixation_entropy(path: ScanPath, grid: RegionGrid) -> float:
    counts = np.bincount(grid.regions(path), minlength=grid.n_regions).astype(np.float64)
    if counts.sum() == 0:
        raise InsufficientDataError("scanpath has no fixations")
    return entropy(counts / counts.sum())


def rqa_recurrence(path: ScanPath, epsilon: float) -> float:
    """Recurrence rate: share of fixation pairs closer than ``epsilon``."""
    if epsilon <= 0:
        raise ConfigError("recurrence radius must be positive")
    _require(path)
    pos = path.positions()
    n = len(pos)
    d = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    close = np.triu(d < epsilon, k=1).sum()
    return float(close / (n * (n - 1) / 2))


def saccadic_speed(path: ScanPath) -> tuple[float, float]:
    """Mean and max saccade speed in normalized units per second.

    Each saccade spans from the end of one fixation to the onset of the next;
    intervals that are not strictly positive are skipped.
    """
    _require(path)
    pos = path.positions()
    onset, dur = path.onsets(), path.durations()
    interval = (onset[1:] - (onset[:-1] + dur[:-1])) / 1000.0
    amps = np.linalg.norm(np.diff(pos, axis=0), axis=1)
    ok = interval > 0
    if not np.any(ok):
        raise InsufficientDataError(f"{path.subject_id}/{path.stimulus_id}: no saccade with a positive interval")
    speeds = amps[ok] / interval[ok]
    return float(speeds.mean()), float(speeds.max())


def feature_names(grid: RegionGrid) -> tuple[str, ...]:
    r = grid.n_regions
    dwell = tuple(f"dwell_{i}" for i in range(r))
    trans = tuple(f"transition_{i}_{j}" for i in range(r) for j in range(r))
    return SCALAR_FEATURES + dwell + trans


def assemble_features(path: ScanPath, grid: RegionGrid, epsilon: float = 0.1, policy: str = "uniform") -> FeatureVector:
    """Concatenate every descriptor in the fixed layout of :func:`feature_names`."""
    stats = spatial_stats(path)
    dwell = dwell_times(path, grid)
    tm = transition_matrix(path, grid, policy)
    scalars = [
        *stats,
        entropy(dwell),
        rqa_recurrence(path, epsilon),
        saccadic_speed(path)[0],
        fixation_entropy(path, grid),
    ]
    values = np.concatenate([np.array(scalars), dwell, tm.probabilities.reshape(-1)])
    return FeatureVector(feature_names(grid), values)


def layout(grid: RegionGrid, epsilon: float, policy: str) -> dict:
    return {
        "layout_version": LAYOUT_VERSION,
        "grid": {"rows": grid.rows, "cols": grid.cols},
        "epsilon": epsilon,
        "policy": policy,
        "length": len(feature_names(grid)),
        "names": list(feature_names(grid)),
    }


def format_feature_csv(rows: Iterable[tuple[ScanPath, FeatureVector]], grid: RegionGrid) -> str:
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["subject_id", "stimulus_id", "label", *feature_names(grid)])
    for sp, fv in rows:
        writer.writerow([sp.subject_id, sp.stimulus_id, sp.label, *(repr(float(v)) for v in fv.values)])
    return buf.getvalue()


def write_feature_export(directory: str | Path, rows, grid: RegionGrid, epsilon: float, policy: str) -> tuple[Path, Path]:
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    csv_path, meta_path = root / "features.csv", root / "features.json"
    csv_path.write_bytes(format_feature_csv(rows, grid).encode("utf-8"))
    meta_path.write_bytes((json.dumps(layout(grid, epsilon, policy), indent=2, sort_keys=True) + "\n").encode())
    return csv_path, meta_path
