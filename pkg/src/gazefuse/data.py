"""Model-ready arrays built from a cohort, and subject-level splitting."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from gazefuse import rng as rngmod
from gazefuse.errors import ConfigError, GazeFuseError
from gazefuse.features import RegionGrid, TEMPORAL_FEATURES, assemble_features, feature_names
from gazefuse.gaze import Cohort, ScanPath, normalize

SEQUENCE_COLUMNS = ("x", "y", "duration_s", "onset_delta_s")


def scanpath_sequence(path: ScanPath, seq_len: int) -> tuple[np.ndarray, np.ndarray]:
    """Rows of (x, y, duration in s, onset delta in s), truncated/zero-padded to ``seq_len``."""
    seq = np.zeros((seq_len, len(SEQUENCE_COLUMNS)))
    mask = np.zeros(seq_len)
    n = min(len(path), seq_len)
    if n:
        onsets = path.onsets()[:n]
        seq[:n, 0] = path.positions()[:n, 0]
        seq[:n, 1] = path.positions()[:n, 1]
        seq[:n, 2] = path.durations()[:n] / 1000.0
        seq[1:n, 3] = np.diff(onsets) / 1000.0
        mask[:n] = 1.0
    return seq, mask


@dataclass
class Dataset:
    sequences: np.ndarray
    masks: np.ndarray
    features: np.ndarray
    speech: np.ndarray
    visual: np.ndarray
    labels: np.ndarray
    subject_ids: list[str]
    stimulus_ids: list[str]
    feature_names: tuple[str, ...]
    skipped: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            self.sequences[idx], self.masks[idx], self.features[idx], self.speech[idx], self.visual[idx],
            self.labels[idx], [self.subject_ids[i] for i in idx], [self.stimulus_ids[i] for i in idx],
            self.feature_names,
        )

    def for_subjects(self, subjects: Sequence[str]) -> "Dataset":
        wanted = set(subjects)
        return self.subset([i for i, s in enumerate(self.subject_ids) if s in wanted])

    def select_features(self, names: Sequence[str]) -> "Dataset":
        cols = [self.feature_names.index(n) for n in names]
        out = self.subset(np.arange(len(self)))
        out.features = self.features[:, cols]
        out.feature_names = tuple(names)
        return out

    def without_temporal_features(self) -> "Dataset":
        return self.select_features([n for n in self.feature_names if n not in TEMPORAL_FEATURES])

    def with_labels(self, labels: np.ndarray) -> "Dataset":
        out = self.subset(np.arange(len(self)))
        out.labels = np.asarray(labels, dtype=np.float64)
        return out

    def batches(self, batch_size: int, rng: np.random.Generator | None = None):
        order = np.arange(len(self)) if rng is None else rng.permutation(len(self))
        for start in range(0, len(self), batch_size):
            yield self.subset(order[start : start + batch_size])


def build_dataset(cohort: Cohort, grid: RegionGrid | None = None, epsilon: float = 0.1, policy: str = "uniform",
                  seq_len: int = 32) -> Dataset:
    """Normalize every scanpath, extract features and attach the subject's stand-in vectors.

    Scanpaths whose features cannot be computed are skipped and listed in
    ``Dataset.skipped``.
    """
    grid = grid or RegionGrid()
    w, h = cohort.config.screen_w, cohort.config.screen_h
    rows = {k: [] for k in ("seq", "mask", "feat", "speech", "visual", "label", "sid", "stim")}
    skipped = []
    for sp in cohort.scanpaths:
        norm = normalize(sp, w, h)
        try:
            fv = assemble_features(norm, grid, epsilon, policy)
        except GazeFuseError as exc:
            skipped.append(f"{sp.subject_id}/{sp.stimulus_id}: {exc}")
            continue
        seq, mask = scanpath_sequence(norm, seq_len)
        mods = cohort.modalities[sp.subject_id]
        for key, value in (("seq", seq), ("mask", mask), ("feat", fv.values), ("speech", mods["speech"]),
                           ("visual", mods["visual"]), ("label", float(sp.label)), ("sid", sp.subject_id),
                           ("stim", sp.stimulus_id)):
            rows[key].append(value)
    n_feat = len(feature_names(grid))
    return Dataset(
        np.array(rows["seq"]).reshape(-1, seq_len, len(SEQUENCE_COLUMNS)),
        np.array(rows["mask"]).reshape(-1, seq_len),
        np.array(rows["feat"]).reshape(-1, n_feat),
        np.array(rows["speech"]).reshape(len(rows["label"]), -1),
        np.array(rows["visual"]).reshape(len(rows["label"]), -1),
        np.array(rows["label"], dtype=np.float64),
        rows["sid"],
        rows["stim"],
        feature_names(grid),
        skipped,
    )


@dataclass
class SplitConfig:
    train: float = 0.70
    val: float = 0.15
    test: float = 0.15
    stratified: bool = True
    seed: int = 0

    def validate(self) -> None:
        ratios = (self.train, self.val, self.test)
        if any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
            raise ConfigError(f"split ratios must be positive and sum to 1, got {ratios}")


def _largest_remainder(total: int, ratios: Sequence[float]) -> list[int]:
    quotas = [total * r for r in ratios]
    sizes = [int(np.floor(q)) for q in quotas]
    order = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - sizes[i]), i))
    for i in order[: total - sum(sizes)]:
        sizes[i] += 1
    return sizes


def split_dataset(subjects: Sequence[tuple[str, int]], config: SplitConfig) -> dict[str, list[str]]:
    """Assign whole subjects to train/val/test.

    Split sizes come from largest-remainder rounding of the ratios. With
    stratification, subjects are shuffled within each class and interleaved
    by their relative rank, so every contiguous cut of the ordering has
    nearly the cohort's class balance; the ordering is then cut at the split
    sizes.
    """
    config.validate()
    rng = rngmod.stream(config.seed, "split")
    ids = sorted(subjects)
    if len({s for s, _ in ids}) != len(ids):
        raise ConfigError("duplicate subject ids")
    labels = sorted({lab for _, lab in ids})
    if config.stratified:
        keyed = []
        for lab in labels:
            members = [s for s, l in ids if l == lab]
            perm = rng.permutation(len(members))
            for rank, j in enumerate(perm):
                keyed.append(((rank + 0.5) / len(members), lab, members[j]))
        ordering = [s for _, _, s in sorted(keyed)]
    else:
        ordering = [ids[i][0] for i in rng.permutation(len(ids))]
    sizes = _largest_remainder(len(ordering), (config.train, config.val, config.test))
    out = {}
    start = 0
    for name, size in zip(("train", "val", "test"), sizes):
        out[name] = sorted(ordering[start : start + size])
        start += size
    label_of = dict(ids)
    if config.stratified:
        for name, members in out.items():
            present = {label_of[s] for s in members}
            if present != set(labels):
                raise ConfigError(f"too few subjects: the {name} split has no subject of some class")
    return out


def split_hash(split: dict[str, list[str]]) -> str:
    blob = json.dumps({k: split[k] for k in sorted(split)}, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
