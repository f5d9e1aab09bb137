from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from gazefuse.errors import ConfigError


class StimulusCategory(str, Enum):
    ANIMALS = "animals"
    BUILDINGS_OBJECTS = "buildings_objects"
    NATURE = "nature"
    PEOPLE_GROUP = "people_group"
    PEOPLE_WITH_OBJECTS = "people_with_objects"
    SINGLE_PERSON = "single_person"
    SINGLE_PERSON_MULTI_OBJECT = "single_person_multi_object"

    @classmethod
    def parse(cls, value: str) -> "StimulusCategory":
        try:
            return cls(value)
        except ValueError:
            raise ConfigError(f"unknown stimulus category {value!r}") from None


CATEGORIES = tuple(StimulusCategory)


@dataclass(frozen=True)
class RawGazeSample:
    t: float
    x: float
    y: float
    valid: bool = True


@dataclass(frozen=True)
class Fixation:
    """A fixation centroid.

    Coordinates are screen pixels straight out of a file and unit-square
    values after :func:`gazefuse.gaze.preprocess.normalize`.
    """

    x: float
    y: float
    duration: float
    onset: float


@dataclass(frozen=True)
class ScanPath:
    subject_id: str
    stimulus_id: str
    category: StimulusCategory
    fixations: tuple[Fixation, ...]
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ConfigError(f"label must be 0 or 1, got {self.label}")
        onsets = [f.onset for f in self.fixations]
        if any(b <= a for a, b in zip(onsets, onsets[1:])):
            raise ConfigError(f"{self.subject_id}/{self.stimulus_id}: fixation onsets must be strictly increasing")

    def __len__(self) -> int:
        return len(self.fixations)

    def positions(self) -> np.ndarray:
        return np.array([[f.x, f.y] for f in self.fixations], dtype=np.float64).reshape(-1, 2)

    def durations(self) -> np.ndarray:
        return np.array([f.duration for f in self.fixations], dtype=np.float64)

    def onsets(self) -> np.ndarray:
        return np.array([f.onset for f in self.fixations], dtype=np.float64)

    def with_fixations(self, fixations) -> "ScanPath":
        return replace(self, fixations=tuple(fixations))


@dataclass(frozen=True)
class SaliencyMap:
    grid: np.ndarray = field(repr=False)

    def __post_init__(self):
        if np.any(self.grid < 0) or abs(float(self.grid.sum()) - 1.0) > 1e-9:
            raise ValueError("saliency map must be nonnegative and sum to 1")
