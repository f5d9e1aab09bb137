"""Glue between a cohort, its split, and a model built from a run configuration."""

from __future__ import annotations

from dataclasses import dataclass, replace

from gazefuse.data import Dataset, build_dataset, split_dataset, split_hash
from gazefuse.gaze import Cohort
from gazefuse.model import HybridModel, ModelConfig


@dataclass
class Prepared:
    dataset: Dataset
    split: dict[str, list[str]]
    split_hash: str

    def part(self, name: str) -> Dataset:
        return self.dataset.for_subjects(self.split[name])


def prepare(cohort: Cohort, cfg) -> Prepared:
    """Dataset for every scanpath plus the subject-level split, both fixed by ``cfg``."""
    ds = build_dataset(cohort, cfg.features.grid(), cfg.features.epsilon, cfg.features.policy, cfg.features.seq_len)
    split = split_dataset(cohort.subjects, cfg.split)
    return Prepared(ds, split, split_hash(split))


def build_model(model_cfg: ModelConfig, data: Dataset, seed: int) -> HybridModel:
    return HybridModel(replace(model_cfg, feature_names=list(data.feature_names),
                               modality_dims=dict(model_cfg.modality_dims)), seed)
