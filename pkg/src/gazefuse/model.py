"""The full hybrid model: patch attention encoder, state-space blocks, fusion head."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from gazefuse import rng as rngmod
from gazefuse.data import SEQUENCE_COLUMNS, Dataset
from gazefuse.errors import ConfigError, ShapeError
from gazefuse.fusion import STRATEGIES, FusionHead
from gazefuse.ssm import KERNELS, TemporalEncoder, pool
from gazefuse.tensor import Module, Tensor, checkpoint, concat
from gazefuse.vit import ViTConfig, ViTEncoder, patch_mask

PROBABILITY_PREFIXES = ("dwell_", "transition_")


@dataclass
class ModelConfig:
    seq_len: int = 32
    window: int = 4
    d_model: int = 32
    heads: int = 4
    vit_layers: int = 2
    mlp_ratio: int = 2
    d_state: int = 8
    ssm_blocks: int = 2
    scan: str = "sequential"
    d_fusion: int = 32
    d_attn: int = 16
    dropout: float = 0.1
    fusion: str = "hybrid"
    activation: str = "gelu"
    feature_names: list[str] = field(default_factory=list)
    modality_dims: dict[str, int] = field(default_factory=lambda: {"speech": 8, "visual": 12})

    def validate(self) -> None:
        if self.fusion not in STRATEGIES:
            raise ConfigError(f"fusion must be one of {STRATEGIES}, got {self.fusion!r}")
        if self.scan not in KERNELS:
            raise ConfigError(f"scan must be one of {tuple(KERNELS)}, got {self.scan!r}")
        if min(self.seq_len, self.window, self.d_model, self.d_state, self.ssm_blocks, self.d_fusion, self.d_attn) < 1:
            raise ConfigError("model sizes must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        self.vit().validate()

    def vit(self) -> ViTConfig:
        return ViTConfig(window=self.window, input_dim=len(SEQUENCE_COLUMNS), d_model=self.d_model, heads=self.heads,
                         layers=self.vit_layers, mlp_ratio=self.mlp_ratio, dropout=self.dropout,
                         max_patches=-(-self.seq_len // self.window), activation=self.activation)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown model settings: {unknown}")
        return cls(**raw)


class HybridModel(Module):
    """Eye-movement sequence -> attention encoder -> state-space blocks -> masked mean.

    The pooled sequence summary is concatenated with the standardized
    engineered features to form the eye modality, which is fused with the
    other modality vectors and classified.
    """

    def __init__(self, config: ModelConfig, seed: int = 0):
        config.validate()
        self.config = config
        init = rngmod.stream(seed, "init")
        self.vit = ViTEncoder(config.vit(), init)
        self.ssm = TemporalEncoder(config.d_model, config.d_state, config.ssm_blocks, init, config.dropout, config.scan)
        dims = {"eye": config.d_model + len(config.feature_names), **config.modality_dims}
        self.head = FusionHead(dims, config.d_fusion, config.d_attn, config.fusion, init, config.dropout)
        n_feat = len(config.feature_names)
        self._feature_mean = np.zeros(n_feat)
        self._feature_std = np.ones(n_feat)

    def named_buffers(self):
        return {"feature_mean": self._feature_mean, "feature_std": self._feature_std}

    def load_buffers(self, buffers):
        self._feature_mean = np.array(buffers["feature_mean"], dtype=np.float64)
        self._feature_std = np.array(buffers["feature_std"], dtype=np.float64)

    def fit_normalizer(self, features: np.ndarray) -> None:
        """Standardize the unbounded scalar features with training-set statistics.

        Dwell fractions and transition probabilities already share a [0, 1]
        scale; rescaling their many near-constant columns to unit variance
        would amplify noise, so they pass through unchanged.
        """
        std = features.std(axis=0)
        scalar = np.array([not n.startswith(PROBABILITY_PREFIXES) for n in self.config.feature_names], dtype=bool)
        self._feature_mean = np.where(scalar, features.mean(axis=0), 0.0)
        self._feature_std = np.where(scalar & (std > 1e-12), std, 1.0)

    def standardize(self, features: np.ndarray) -> np.ndarray:
        return (features - self._feature_mean) / self._feature_std

    def check_dataset(self, data: Dataset) -> None:
        if list(data.feature_names) != list(self.config.feature_names):
            raise ConfigError("dataset feature columns do not match the model's")
        if data.sequences.shape[1] != self.config.seq_len:
            raise ShapeError(f"sequence length {data.sequences.shape[1]} != model seq_len {self.config.seq_len}")

    def __call__(self, data: Dataset, rng: np.random.Generator | None = None, features: Tensor | None = None) -> dict:
        """Forward pass on a batch. ``features`` overrides the standardized feature tensor (saliency)."""
        tokens = self.vit(data.sequences, data.masks, rng)
        tokens = self.ssm(tokens, rng)
        summary = pool(tokens, patch_mask(data.masks, self.config.window))
        if features is None:
            features = Tensor(self.standardize(data.features))
        eye = concat([summary, features], axis=-1)
        return self.head({"eye": eye, "speech": data.speech, "visual": data.visual}, rng)

    def save(self, path, seed: int) -> bytes:
        blob = checkpoint.dumps(self.state_dict(), seed=seed, hyperparameters=self.config.to_dict())
        with open(path, "wb") as fh:
            fh.write(blob)
        return blob

    @classmethod
    def load(cls, path) -> "HybridModel":
        state, header = checkpoint.load(path)
        model = cls(ModelConfig.from_dict(header["hyperparameters"]), header["seed"])
        model.load_state_dict(state)
        return model
