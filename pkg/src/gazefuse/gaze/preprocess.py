"""Noise filtering, fixation detection, normalization and augmentation."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from gazefuse.errors import ConfigError, InsufficientDataError
from gazefuse.gaze.types import Fixation, RawGazeSample, SaliencyMap, ScanPath

DEFAULT_BLINK_GAP_MS = 75.0
DEFAULT_DISPERSION = 0.04
DEFAULT_MIN_DURATION_MS = 80.0


def filter_noise(samples: Sequence[RawGazeSample], blink_gap_ms: float = DEFAULT_BLINK_GAP_MS) -> list[list[RawGazeSample]]:
    """Drop invalid samples, bridging short gaps by linear interpolation.

    A run of invalid samples whose surrounding valid samples are less than
    ``blink_gap_ms`` apart is replaced by positions interpolated in time.
    Longer runs are removed and split the recording; each returned list is
    one contiguous segment.
    """
    segments: list[list[RawGazeSample]] = []
    current: list[RawGazeSample] = []
    n = len(samples)
    i = 0
    while i < n:
        s = samples[i]
        if s.valid:
            current.append(s)
            i += 1
            continue
        j = i
        while j < n and not samples[j].valid:
            j += 1
        before = current[-1] if current else None
        after = samples[j] if j < n else None
        if before is not None and after is not None and after.t - before.t < blink_gap_ms:
            span = after.t - before.t
            for k in range(i, j):
                w = (samples[k].t - before.t) / span if span > 0 else 0.5
                current.append(
                    RawGazeSample(samples[k].t, before.x + w * (after.x - before.x), before.y + w * (after.y - before.y), True)
                )
        elif current:
            segments.append(current)
            current = []
        i = j
    if current:
        segments.append(current)
    return segments


def cluster_fixations(
    samples: Sequence[RawGazeSample],
    dispersion_threshold: float = DEFAULT_DISPERSION,
    min_duration_ms: float = DEFAULT_MIN_DURATION_MS,
    scale: tuple[float, float] = (1.0, 1.0),
) -> list[Fixation]:
    """Dispersion-threshold (I-DT) fixation identification.

    Dispersion of a window is ``(max x - min x)/sx + (max y - min y)/sy``;
    ``scale`` lets a normalized threshold apply to pixel samples. A fixation
    is reported at the window centroid with duration equal to the time span
    of its samples.
    """
    if not samples:
        return []
    t = np.array([s.t for s in samples], dtype=np.float64)
    x = np.array([s.x for s in samples], dtype=np.float64) / scale[0]
    y = np.array([s.y for s in samples], dtype=np.float64) / scale[1]
    n = len(t)
    fixations: list[Fixation] = []
    i = 0
    while i < n:
        j = int(np.searchsorted(t, t[i] + min_duration_ms, side="left"))
        if j >= n:
            break
        xmin, xmax = x[i : j + 1].min(), x[i : j + 1].max()
        ymin, ymax = y[i : j + 1].min(), y[i : j + 1].max()
        if (xmax - xmin) + (ymax - ymin) > dispersion_threshold:
            i += 1
            continue
        while j + 1 < n:
            nx0, nx1 = min(xmin, x[j + 1]), max(xmax, x[j + 1])
            ny0, ny1 = min(ymin, y[j + 1]), max(ymax, y[j + 1])
            if (nx1 - nx0) + (ny1 - ny0) > dispersion_threshold:
                break
            xmin, xmax, ymin, ymax = nx0, nx1, ny0, ny1
            j += 1
        cx = float(x[i : j + 1].mean() * scale[0])
        cy = float(y[i : j + 1].mean() * scale[1])
        fixations.append(Fixation(cx, cy, float(t[j] - t[i]), float(t[i])))
        i = j + 1
    return fixations


def normalize(path: ScanPath, screen_w: float, screen_h: float) -> ScanPath:
    """Map pixel coordinates into the unit square, clamping stragglers."""
    if screen_w <= 0 or screen_h <= 0:
        raise ConfigError(f"screen dimensions must be positive, got {screen_w}x{screen_h}")
    return path.with_fixations(
        Fixation(min(max(f.x / screen_w, 0.0), 1.0), min(max(f.y / screen_h, 0.0), 1.0), f.duration, f.onset)
        for f in path.fixations
    )


def fixations_from_samples(
    samples: Sequence[RawGazeSample],
    screen_w: float,
    screen_h: float,
    blink_gap_ms: float = DEFAULT_BLINK_GAP_MS,
    dispersion_threshold: float = DEFAULT_DISPERSION,
    min_duration_ms: float = DEFAULT_MIN_DURATION_MS,
) -> list[Fixation]:
    """Raw pixel samples to pixel fixations: filter, then I-DT per segment.

    Normalization comes afterwards via :func:`normalize` on the ScanPath.
    """
    out: list[Fixation] = []
    for segment in filter_noise(samples, blink_gap_ms):
        out.extend(cluster_fixations(segment, dispersion_threshold, min_duration_ms, (screen_w, screen_h)))
    return out


def jitter_augment(path: ScanPath, sigma: float, rng: np.random.Generator) -> ScanPath:
    """Add isotropic Gaussian noise to every fixation position and re-clamp."""
    if sigma < 0:
        raise ConfigError("jitter sigma must be nonnegative")
    if sigma == 0 or not path.fixations:
        return path
    noise = rng.normal(0.0, sigma, size=(len(path), 2))
    return path.with_fixations(
        Fixation(float(np.clip(f.x + dx, 0.0, 1.0)), float(np.clip(f.y + dy, 0.0, 1.0)), f.duration, f.onset)
        for f, (dx, dy) in zip(path.fixations, noise)
    )


def synth_heatmap(path: ScanPath, grid_h: int, grid_w: int, bandwidth: float) -> SaliencyMap:
    """Duration-weighted Gaussian density of fixations at cell centers."""
    if grid_h < 1 or grid_w < 1:
        raise ConfigError("heatmap grid dimensions must be at least 1")
    if bandwidth <= 0:
        raise ConfigError("heatmap bandwidth must be positive")
    if not path.fixations:
        raise InsufficientDataError("cannot build a heatmap from an empty scanpath")
    pos = path.positions()
    cy = (np.arange(grid_h) + 0.5) / grid_h
    cx = (np.arange(grid_w) + 0.5) / grid_w
    d2 = (cy[:, None, None] - pos[None, None, :, 1]) ** 2 + (cx[None, :, None] - pos[None, None, :, 0]) ** 2
    logw = np.log(path.durations())[None, None, :] - d2 / (2.0 * bandwidth**2)
    dens = np.exp(logw - logw.max()).sum(axis=2)
    return SaliencyMap(dens / dens.sum())
