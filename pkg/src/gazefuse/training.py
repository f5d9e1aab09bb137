"""Training loop, evaluation and per-example explanations."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields

import numpy as np

from gazefuse import rng as rngmod
from gazefuse.data import Dataset
from gazefuse.errors import ConfigError, NumericalError, TrainingDivergedError, UsageError
from gazefuse.fusion import bce_loss
from gazefuse.metrics import EvalReport, evaluate_scores
from gazefuse.model import HybridModel
from gazefuse.tensor import Tensor, backward, log, make_optimizer, no_grad

log_ = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    momentum: float = 0.9
    weight_decay: float = 1e-4
    epochs: int = 200
    batch_size: int = 16
    dropout: float = 0.1
    patience: int = 20
    seed: int = 0

    def validate(self) -> None:
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"optimizer must be adam or sgd, got {self.optimizer!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be at least 1")
        if self.patience < 1:
            raise ConfigError("patience must be at least 1")
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ConfigError("learning_rate and weight_decay must be nonnegative")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        unknown = sorted(set(raw) - {f.name for f in fields(cls)})
        if unknown:
            raise ConfigError(f"unknown training settings: {unknown}")
        return cls(**raw)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


HISTORY_COLUMNS = ("epoch", "train_loss", "val_loss", "val_acc", "train_acc")


def format_history(history: list[EpochRecord]) -> str:
    lines = [",".join(HISTORY_COLUMNS)]
    for rec in history:
        lines.append(",".join(repr(getattr(rec, c)) for c in HISTORY_COLUMNS))
    return "\n".join(lines) + "\n"


@dataclass
class TrainResult:
    model: HybridModel
    history: list[EpochRecord]
    best_epoch: int
    stopped_early: bool


def predict(model: HybridModel, data: Dataset, batch_size: int = 256) -> np.ndarray:
    """Eval-mode probabilities for every example."""
    model.eval()
    out = []
    with no_grad():
        for batch in data.batches(batch_size):
            out.append(model(batch)["prob"].data.reshape(-1))
    return np.concatenate(out) if out else np.zeros(0)


def _loss_and_acc(model: HybridModel, data: Dataset) -> tuple[float, float]:
    probs = predict(model, data)
    with no_grad():
        loss = bce_loss(Tensor(probs), data.labels).item()
    return loss, float(np.mean((probs >= 0.5) == (data.labels == 1)))


def _param_norms(model: HybridModel) -> dict[str, float]:
    return {name: float(np.linalg.norm(p.data)) if np.all(np.isfinite(p.data)) else float("inf")
            for name, p in model.named_parameters()}


def train(model: HybridModel, train_data: Dataset, val_data: Dataset, config: TrainConfig) -> TrainResult:
    """Mini-batch training on the mean cross-entropy with early stopping on validation loss.

    Each epoch draws its batch order and dropout masks from streams named
    after the epoch, so a run is fully determined by ``config.seed``. The
    parameters with the lowest validation loss are restored at the end.
    """
    config.validate()
    if len(train_data) == 0 or len(val_data) == 0:
        raise UsageError("training needs non-empty train and validation sets")
    model.check_dataset(train_data)
    model.check_dataset(val_data)
    model.fit_normalizer(train_data.features)
    opt = make_optimizer(model.parameters(), config.optimizer, config.learning_rate, config.weight_decay,
                         **({"momentum": config.momentum} if config.optimizer == "sgd" else {}))
    history: list[EpochRecord] = []
    best_loss, best_epoch, best_state = np.inf, 0, model.state_dict()
    stopped_early = False
    for epoch in range(1, config.epochs + 1):
        b = -1
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                model.train()
                order_rng = rngmod.stream(config.seed, "shuffle", epoch)
                drop_rng = rngmod.stream(config.seed, "dropout", epoch)
                for b, batch in enumerate(train_data.batches(config.batch_size, order_rng)):
                    loss = bce_loss(model(batch, drop_rng)["prob"], batch.labels)
                    opt.zero_grad()
                    backward(loss)
                    opt.step()
                    if not all(np.all(np.isfinite(p.data)) for p in model.parameters()):
                        raise NumericalError("parameters became non-finite")
                train_loss, train_acc = _loss_and_acc(model, train_data)
                val_loss, val_acc = _loss_and_acc(model, val_data)
        except NumericalError as exc:
            raise TrainingDivergedError(epoch, b, _param_norms(model)) from exc
        history.append(EpochRecord(epoch, train_loss, train_acc, val_loss, val_acc))
        log_.info("epoch %d train_loss %.4f train_acc %.3f val_loss %.4f val_acc %.3f",
                  epoch, train_loss, train_acc, val_loss, val_acc)
        if val_loss < best_loss:
            best_loss, best_epoch, best_state = val_loss, epoch, model.state_dict()
        elif epoch - best_epoch >= config.patience:
            stopped_early = True
            break
    model.load_state_dict(best_state)
    model.eval()
    return TrainResult(model, history, best_epoch, stopped_early)


def evaluate(model: HybridModel, data: Dataset, threshold: float = 0.5) -> tuple[EvalReport, np.ndarray]:
    """Metrics at ``threshold`` plus ROC; returns the report and the probabilities."""
    model.check_dataset(data)
    probs = predict(model, data)
    return evaluate_scores(probs, data.labels, threshold), probs


def explain(model: HybridModel, data: Dataset, top_k: int = 10) -> list[dict]:
    """Per-example attention weights over modalities and feature saliency.

    Saliency is the gradient of the example's logit with respect to its
    standardized engineered features; the ``top_k`` largest in magnitude are
    reported. Late fusion has no single logit, so the log-odds of its
    averaged probability is used.
    """
    model.check_dataset(data)
    model.eval()
    feats = Tensor(model.standardize(data.features), requires_grad=True)
    out = model(data, features=feats)
    logit = out["logit"] if out["logit"] is not None else log(out["prob"]) - log(1.0 - out["prob"])
    backward(logit.sum())
    model.zero_grad()
    grads = feats.grad
    names = model.head.modality_names
    records = []
    for i in range(len(data)):
        order = sorted(range(grads.shape[1]), key=lambda j: (-abs(grads[i, j]), j))[:top_k]
        rec = {
            "subject_id": data.subject_ids[i],
            "stimulus_id": data.stimulus_ids[i],
            "label": int(data.labels[i]),
            "probability": float(out["prob"].data[i]),
            "modalities": list(names),
            "alpha": None if out["alpha"] is None else [float(a) for a in out["alpha"][i]],
            "feature_saliency": [[data.feature_names[j], float(grads[i, j])] for j in order],
        }
        records.append(rec)
    return records
