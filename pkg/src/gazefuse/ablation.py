"""Fusion-strategy by feature-set ablation sweep."""

from __future__ import annotations

import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

from gazefuse.data import Dataset
from gazefuse.errors import ConfigError
from gazefuse.fusion import STRATEGIES
from gazefuse.model import ModelConfig
from gazefuse.pipeline import Prepared, build_model
from gazefuse.training import TrainConfig, evaluate, train

FEATURE_SETS = ("full", "no_temporal")
METRIC_COLUMNS = ("accuracy", "precision", "sensitivity", "specificity", "f1", "auc")
COLUMNS = ("arm", "fusion", "features", "split_hash", "n_features", "epochs_run", "best_epoch", *METRIC_COLUMNS, "status")


def arm_id(fusion: str, feature_set: str) -> str:
    return fusion if feature_set == "full" else f"{fusion}-{feature_set}"


ARMS = tuple(arm_id(f, s) for s in FEATURE_SETS for f in STRATEGIES)


@dataclass(frozen=True)
class ArmResult:
    arm: str
    fusion: str
    features: str
    split_hash: str
    n_features: int
    epochs_run: int | None = None
    best_epoch: int | None = None
    accuracy: float | None = None
    precision: float | None = None
    sensitivity: float | None = None
    specificity: float | None = None
    f1: float | None = None
    auc: float | None = None
    status: str = "ok"

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def _parse_arm(arm: str) -> tuple[str, str]:
    fusion, _, feature_set = arm.partition("-")
    return fusion, feature_set or "full"


def select_arms(arms) -> list[str]:
    if arms is None:
        return list(ARMS)
    if isinstance(arms, str):
        arms = [a for a in arms.split(",") if a]
    unknown = [a for a in arms if a not in ARMS]
    if unknown or not arms:
        raise ConfigError(f"unknown ablation arms {unknown}; choose from {', '.join(ARMS)}")
    return [a for a in ARMS if a in arms]


def run_arm(arm: str, prepared: Prepared, model_cfg: ModelConfig, train_cfg: TrainConfig, seed: int) -> ArmResult:
    """Train and evaluate one arm; failures are captured in ``status``."""
    fusion, feature_set = _parse_arm(arm)

    def variant(ds: Dataset) -> Dataset:
        return ds.without_temporal_features() if feature_set == "no_temporal" else ds

    parts = {k: variant(prepared.part(k)) for k in ("train", "val", "test")}
    base = ArmResult(arm, fusion, feature_set, prepared.split_hash, len(parts["train"].feature_names))
    try:
        model = build_model(replace(model_cfg, fusion=fusion), parts["train"], seed)
        result = train(model, parts["train"], parts["val"], train_cfg)
        report, _ = evaluate(result.model, parts["test"])
    except Exception as exc:  # noqa: BLE001 - one arm failing must not stop the sweep
        detail = traceback.format_exception_only(type(exc), exc)[-1].strip()
        return replace(base, status=f"error: {detail}")
    return replace(base, epochs_run=len(result.history), best_epoch=result.best_epoch,
                   **{m: getattr(report, m) for m in METRIC_COLUMNS})


def _run_arm_args(args):
    return run_arm(*args)


def ablate(prepared: Prepared, model_cfg: ModelConfig, train_cfg: TrainConfig, seed: int,
           arms=None, jobs: int = 1) -> list[ArmResult]:
    """Run the selected arms on one fixed split with identical seeds.

    With ``jobs > 1`` arms run in worker processes; each arm owns its model
    and random streams, so the rows do not depend on ``jobs``.
    """
    chosen = select_arms(arms)
    tasks = [(arm, prepared, model_cfg, train_cfg, seed) for arm in chosen]
    if jobs <= 1 or len(tasks) <= 1:
        return [run_arm(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        return list(pool.map(_run_arm_args, tasks))


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_csv(rows: list[ArmResult]) -> str:
    lines = [",".join(COLUMNS)]
    for row in rows:
        cells = [_cell(getattr(row, c)) for c in COLUMNS]
        cells[-1] = '"' + cells[-1].replace('"', '""') + '"' if ("," in cells[-1] or '"' in cells[-1]) else cells[-1]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def format_table(rows: list[ArmResult]) -> str:
    """Aligned plain-text table with metrics rounded to four places."""
    header = ["arm", "n_feat", "epochs", *METRIC_COLUMNS, "status"]
    body = []
    for row in rows:
        metrics = ["-" if getattr(row, m) is None else f"{getattr(row, m):.4f}" for m in METRIC_COLUMNS]
        body.append([row.arm, str(row.n_features), "-" if row.epochs_run is None else str(row.epochs_run), *metrics, row.status])
    widths = [max(len(r[i]) for r in [header, *body]) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in [header, *body]]
    split = rows[0].split_hash if rows else ""
    return f"split {split}\n" + "\n".join(lines) + "\n"
