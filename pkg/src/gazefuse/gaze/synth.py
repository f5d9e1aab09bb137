"""Seeded synthetic cohort shaped like a two-class free-viewing eye-tracking study.

Each subject views several stimuli drawn from seven categories. Every stimulus
has one "social" region (a face or the salient figure). The two classes differ,
in proportion to ``class_gap``, in:

* how often a fixation targets the social region (dwell fraction),
* how widely the remaining fixations spread around the image center,
* how short the inter-fixation intervals are (saccadic speed).

Each subject also gets stand-in speech and visual vectors drawn from unit
Gaussians whose means are shifted for the positive class. With
``class_gap = 0`` the two classes come from identical distributions.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from gazefuse import rng as rngmod
from gazefuse.errors import ConfigError, ParseError
from gazefuse.gaze.io import parse_scanpaths, write_scanpaths
from gazefuse.gaze.types import CATEGORIES, Fixation, ScanPath, StimulusCategory

MANIFEST_VERSION = 1


@dataclass
class CohortConfig:
    n_per_class: int = 32
    stimuli_per_subject: int = 3
    stimuli_per_category: int = 6
    category_mix: dict[str, float] | None = None
    screen_w: float = 1920.0
    screen_h: float = 1080.0
    fixations_min: int = 14
    fixations_max: int = 24
    class_gap: float = 1.0
    social_radius: float = 0.12
    social_dwell: float = 0.55
    social_dwell_gap: float = 0.30
    spread: float = 0.12
    spread_gap: float = 0.08
    saccade_interval_ms: float = 45.0
    saccade_interval_gap_ms: float = 15.0
    duration_median_ms: float = 260.0
    duration_log_sd: float = 0.35
    speech_dim: int = 8
    visual_dim: int = 12
    modality_shift: float = 1.2

    def validate(self) -> None:
        if self.n_per_class < 1:
            raise ConfigError("cohort needs at least one subject per class")
        if self.stimuli_per_subject < 1 or self.stimuli_per_category < 1:
            raise ConfigError("stimuli counts must be positive")
        if not 2 <= self.fixations_min <= self.fixations_max:
            raise ConfigError("need 2 <= fixations_min <= fixations_max")
        if self.class_gap < 0:
            raise ConfigError("class_gap must be nonnegative")
        low = self.social_dwell - self.class_gap * self.social_dwell_gap
        if not (0.0 <= low <= 1.0 and 0.0 <= self.social_dwell <= 1.0):
            raise ConfigError("social dwell probabilities must stay in [0, 1] for both classes")
        if self.saccade_interval_ms - self.class_gap * self.saccade_interval_gap_ms <= 0:
            raise ConfigError("saccade interval must stay positive for both classes")
        mix = self.mix()
        if any(v < 0 for v in mix.values()) or abs(sum(mix.values()) - 1.0) > 1e-9:
            raise ConfigError("category mix must be nonnegative and sum to 1")
        available = self.stimuli_per_category * sum(1 for v in mix.values() if v > 0)
        if available < self.stimuli_per_subject:
            raise ConfigError(f"only {available} stimuli available for {self.stimuli_per_subject} per subject")

    def mix(self) -> dict[str, float]:
        if self.category_mix is None:
            return {c.value: 1.0 / len(CATEGORIES) for c in CATEGORIES}
        for key in self.category_mix:
            StimulusCategory.parse(key)
        return {c.value: float(self.category_mix.get(c.value, 0.0)) for c in CATEGORIES}


@dataclass(frozen=True)
class Stimulus:
    stimulus_id: str
    category: StimulusCategory
    social_center: tuple[float, float]
    social_radius: float

    def in_social_region(self, x: float, y: float) -> bool:
        cx, cy = self.social_center
        return (x - cx) ** 2 + (y - cy) ** 2 <= self.social_radius**2


@dataclass
class Cohort:
    """Scanpaths in screen pixels plus per-subject stand-in modality vectors."""

    config: CohortConfig
    seed: int
    subjects: list[tuple[str, int]]
    stimuli: dict[str, Stimulus]
    scanpaths: list[ScanPath]
    modalities: dict[str, dict[str, np.ndarray]] = field(repr=False)

    def labels(self) -> dict[str, int]:
        return dict(self.subjects)


def _stimulus_pool(config: CohortConfig, seed: int) -> dict[str, Stimulus]:
    pool = {}
    for category in CATEGORIES:
        for k in range(config.stimuli_per_category):
            rng = rngmod.stream(seed, "stimulus", category.value, k)
            center = tuple(float(v) for v in np.round(rng.uniform(0.3, 0.7, size=2), 4))
            sid = f"{category.value}_{k:02d}"
            pool[sid] = Stimulus(sid, category, center, config.social_radius)
    return pool


def _class_params(config: CohortConfig, label: int) -> tuple[float, float, float]:
    g = config.class_gap * label
    return (
        config.social_dwell - g * config.social_dwell_gap,
        config.spread + g * config.spread_gap,
        config.saccade_interval_ms - g * config.saccade_interval_gap_ms,
    )


def _draw_position(rng: np.random.Generator, stim: Stimulus, social: bool, spread: float) -> tuple[float, float]:
    cx, cy = stim.social_center
    if social:
        r = stim.social_radius * math.sqrt(rng.uniform())
        theta = rng.uniform(0.0, 2.0 * math.pi)
        return min(max(cx + r * math.cos(theta), 0.0), 1.0), min(max(cy + r * math.sin(theta), 0.0), 1.0)
    for _ in range(64):
        x, y = np.clip(rng.normal(0.5, spread, size=2), 0.01, 0.99)
        if not stim.in_social_region(x, y):
            return float(x), float(y)
    # region covers most of the plausible area; take the reflected point
    return float(np.clip(2 * cx - x, 0.01, 0.99)), float(np.clip(2 * cy - y, 0.01, 0.99))


def _scanpath(config: CohortConfig, rng: np.random.Generator, subject: str, label: int, stim: Stimulus) -> ScanPath:
    p_social, spread, interval = _class_params(config, label)
    n = int(rng.integers(config.fixations_min, config.fixations_max + 1))
    onset = float(round(rng.uniform(0.0, 150.0)))
    fixations = []
    for _ in range(n):
        x, y = _draw_position(rng, stim, rng.uniform() < p_social, spread)
        duration = float(max(80, round(config.duration_median_ms * math.exp(rng.normal(0.0, config.duration_log_sd)))))
        fixations.append(
            Fixation(round(x * config.screen_w, 2), round(y * config.screen_h, 2), duration, onset)
        )
        gap = max(5.0, float(round(interval * rng.uniform(0.7, 1.3))))
        onset = onset + duration + gap
    return ScanPath(subject, stim.stimulus_id, stim.category, tuple(fixations), label)


def generate_cohort(config: CohortConfig, seed: int) -> Cohort:
    config.validate()
    pool = _stimulus_pool(config, seed)
    mix = config.mix()
    categories = [c for c in CATEGORIES]
    probs = np.array([mix[c.value] for c in categories])
    dir_rng = rngmod.stream(seed, "modality-direction")
    directions = {}
    for name, dim in (("speech", config.speech_dim), ("visual", config.visual_dim)):
        u = dir_rng.normal(size=dim)
        directions[name] = u / np.linalg.norm(u)

    subjects: list[tuple[str, int]] = []
    scanpaths: list[ScanPath] = []
    modalities: dict[str, dict[str, np.ndarray]] = {}
    for i in range(2 * config.n_per_class):
        sid, label = f"S{i:03d}", i % 2
        rng = rngmod.stream(seed, "subject", i)
        subjects.append((sid, label))
        chosen: list[str] = []
        while len(chosen) < config.stimuli_per_subject:
            cat = categories[int(rng.choice(len(categories), p=probs))]
            stim_id = f"{cat.value}_{int(rng.integers(config.stimuli_per_category)):02d}"
            if stim_id not in chosen:
                chosen.append(stim_id)
        for stim_id in chosen:
            scanpaths.append(_scanpath(config, rng, sid, label, pool[stim_id]))
        shift = config.class_gap * config.modality_shift * label
        modalities[sid] = {
            name: rng.normal(size=len(u)) + shift * u for name, u in directions.items()
        }
    used = {sp.stimulus_id for sp in scanpaths}
    return Cohort(config, seed, subjects, {k: v for k, v in pool.items() if k in used}, scanpaths, modalities)


# ---------------------------------------------------------------------------
# on-disk layout: manifest.json, scanpaths/<subject>.csv, modalities/<subject>.json


def write_cohort(directory: str | Path, cohort: Cohort) -> Path:
    root = Path(directory)
    (root / "scanpaths").mkdir(parents=True, exist_ok=True)
    (root / "modalities").mkdir(parents=True, exist_ok=True)
    by_subject: dict[str, list[ScanPath]] = {}
    for sp in cohort.scanpaths:
        by_subject.setdefault(sp.subject_id, []).append(sp)
    entries = []
    for sid, label in cohort.subjects:
        scan_file = f"scanpaths/{sid}.csv"
        mod_file = f"modalities/{sid}.json"
        write_scanpaths(root / scan_file, by_subject.get(sid, []), cohort.config.screen_w, cohort.config.screen_h)
        vectors = {k: [float(v) for v in arr] for k, arr in sorted(cohort.modalities[sid].items())}
        (root / mod_file).write_bytes((json.dumps(vectors, sort_keys=True) + "\n").encode())
        entries.append(
            {"subject_id": sid, "label": label, "scanpath_file": scan_file, "modality_file": mod_file,
             "stimuli": [sp.stimulus_id for sp in by_subject.get(sid, [])]}
        )
    manifest = {
        "manifest_version": MANIFEST_VERSION,
        "seed": cohort.seed,
        "generator": asdict(cohort.config),
        "screen": {"width": cohort.config.screen_w, "height": cohort.config.screen_h},
        "subjects": entries,
        "stimuli": {
            k: {"category": s.category.value, "social_center": list(s.social_center), "social_radius": s.social_radius}
            for k, s in sorted(cohort.stimuli.items())
        },
        "modalities": {"speech": cohort.config.speech_dim, "visual": cohort.config.visual_dim},
    }
    path = root / "manifest.json"
    path.write_bytes((json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode())
    return path


def load_cohort(directory: str | Path) -> tuple[Cohort, list[str]]:
    """Read a cohort directory back. Returns the cohort and parse warnings."""
    root = Path(directory)
    manifest_path = root / "manifest.json" if root.is_dir() else root
    root = manifest_path.parent
    if not manifest_path.exists():
        raise FileNotFoundError(f"no cohort manifest at {manifest_path}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("manifest_version") != MANIFEST_VERSION:
        raise ParseError(f"unsupported manifest version {manifest.get('manifest_version')}")
    config = CohortConfig(**manifest["generator"])
    width, height = manifest["screen"]["width"], manifest["screen"]["height"]
    subjects, scanpaths, modalities, warnings = [], [], {}, []
    for entry in manifest["subjects"]:
        sid, label = entry["subject_id"], int(entry["label"])
        subjects.append((sid, label))
        parsed = parse_scanpaths(root / entry["scanpath_file"], width, height)
        warnings.extend(f"{entry['scanpath_file']}: {w}" for w in parsed.warnings)
        for sp in parsed.scanpaths:
            if sp.subject_id != sid or sp.label != label:
                raise ParseError(f"{entry['scanpath_file']}: rows for {sp.subject_id} do not match manifest subject {sid}")
        scanpaths.extend(parsed.scanpaths)
        vectors = json.loads((root / entry["modality_file"]).read_text(encoding="utf-8"))
        modalities[sid] = {k: np.array(v, dtype=np.float64) for k, v in vectors.items()}
    stimuli = {
        k: Stimulus(k, StimulusCategory.parse(v["category"]), tuple(v["social_center"]), v["social_radius"])
        for k, v in manifest["stimuli"].items()
    }
    return Cohort(config, int(manifest["seed"]), subjects, stimuli, scanpaths, modalities), warnings
