"""Command-line entry point: ``gazefuse {synth,features,train,eval,ablate}``.

Exit codes: 0 success, 2 usage or input error, 3 numerical or runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from gazefuse import __version__
from gazefuse.ablation import ablate, format_csv, format_table, select_arms
from gazefuse.config import RunConfig, load_config, set_value
from gazefuse.errors import ConfigError, GazeFuseError, NumericalError, ParseError, ShapeError, UsageError
from gazefuse.features import assemble_features, write_feature_export
from gazefuse.gaze import generate_cohort, load_cohort, normalize, write_cohort
from gazefuse.metrics import roc_curve
from gazefuse.model import HybridModel
from gazefuse.pipeline import prepare, build_model
from gazefuse.training import evaluate, explain, format_history, train

log = logging.getLogger("gazefuse")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3
CHECKPOINT = "model.ckpt"
CONFIG_FILE = "config.json"


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _write(path: Path, text: str) -> None:
    path.write_bytes(text.encode("utf-8"))


def _out_dir(cfg: RunConfig, command: str) -> Path:
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        _write(out / CONFIG_FILE, cfg.to_json(command))
    except OSError as exc:
        raise CliError(f"cannot write to {out}: {exc.strerror or exc}") from None
    return out


def _cohort(cfg: RunConfig):
    if not cfg.cohort_dir:
        raise CliError("no cohort given; pass --cohort <dir> (a directory written by `gazefuse synth`)")
    try:
        cohort, warnings = load_cohort(cfg.cohort_dir)
    except FileNotFoundError as exc:
        raise CliError(str(exc)) from None
    for w in warnings:
        log.warning("%s", w)
    return cohort


def cmd_synth(cfg: RunConfig) -> int:
    cohort = generate_cohort(cfg.cohort, cfg.seed)
    out = _out_dir(cfg, "synth")
    write_cohort(out, cohort)
    n_pos = sum(label for _, label in cohort.subjects)
    print(f"wrote {len(cohort.subjects)} subjects ({n_pos} positive), {len(cohort.scanpaths)} scanpaths to {out}")
    return EXIT_OK


def cmd_features(cfg: RunConfig) -> int:
    cohort = _cohort(cfg)
    out = _out_dir(cfg, "features")
    w, h = cohort.config.screen_w, cohort.config.screen_h
    grid, rows, skipped = cfg.features.grid(), [], []
    for sp in cohort.scanpaths:
        try:
            rows.append((sp, assemble_features(normalize(sp, w, h), grid, cfg.features.epsilon, cfg.features.policy)))
        except GazeFuseError as exc:
            skipped.append(f"{sp.subject_id}/{sp.stimulus_id}: {exc}")
    write_feature_export(out, rows, grid, cfg.features.epsilon, cfg.features.policy)
    print(f"wrote {len(rows)} feature rows to {out / 'features.csv'}")
    if skipped:
        print(f"warning: skipped {len(skipped)} scanpath(s):", file=sys.stderr)
        for line in skipped:
            print(f"  {line}", file=sys.stderr)
    return EXIT_OK


def cmd_train(cfg: RunConfig) -> int:
    prepared = prepare(_cohort(cfg), cfg)
    out = _out_dir(cfg, "train")
    parts = {k: prepared.part(k) for k in ("train", "val", "test")}
    model = build_model(cfg.model, parts["train"], cfg.seed)
    result = train(model, parts["train"], parts["val"], cfg.train)
    result.model.save(out / CHECKPOINT, seed=cfg.seed)
    _write(out / "history.csv", format_history(result.history))
    _write(out / "split.json", json.dumps({"hash": prepared.split_hash, **prepared.split}, indent=2, sort_keys=True) + "\n")
    last = result.history[-1]
    summary = {
        "best_epoch": result.best_epoch,
        "epochs_run": len(result.history),
        "stopped_early": result.stopped_early,
        "final_train_acc": last.train_acc,
        "max_train_acc": max(r.train_acc for r in result.history),
        "best_val_loss": min(r.val_loss for r in result.history),
        "skipped_scanpaths": prepared.dataset.skipped,
    }
    _write(out / "train_summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"trained {len(result.history)} epochs (best {result.best_epoch}); checkpoint {out / CHECKPOINT}")
    return EXIT_OK


def cmd_eval(cfg: RunConfig) -> int:
    if not cfg.run_dir:
        raise CliError("no run given; pass --run <dir> (a directory written by `gazefuse train`)")
    ckpt = Path(cfg.run_dir) / CHECKPOINT
    if not ckpt.exists():
        raise CliError(f"no checkpoint at {ckpt}")
    model = HybridModel.load(ckpt)
    prepared = prepare(_cohort(cfg), cfg)
    split_file = Path(cfg.run_dir) / "split.json"
    if split_file.exists() and json.loads(split_file.read_text())["hash"] != prepared.split_hash:
        raise CliError("the cohort/seed/split settings do not reproduce the split the model was trained on")
    data = prepared.part(cfg.eval.split)
    if model.config.feature_names != list(data.feature_names):
        data = data.select_features(model.config.feature_names)
    out = _out_dir(cfg, "eval")
    report, probs = evaluate(model, data, cfg.eval.threshold)
    _write(out / "report.json", json.dumps({"split": cfg.eval.split, **report.to_dict()}, indent=2, sort_keys=True) + "\n")
    roc_lines = ["threshold,fpr,tpr"]
    if report.auc is not None:
        roc = roc_curve(probs, data.labels)
        roc_lines += [f"{t!r},{f!r},{p!r}" for t, (f, p) in zip(roc.thresholds, roc.points)]
    _write(out / "roc.csv", "\n".join(roc_lines) + "\n")
    records = explain(model, data, cfg.eval.top_k)
    _write(out / "explanations.json", json.dumps(records, indent=2) + "\n")
    auc = "n/a" if report.auc is None else f"{report.auc:.4f}"
    print(f"{cfg.eval.split}: accuracy {report.accuracy:.4f} f1 {report.f1:.4f} sensitivity {report.sensitivity:.4f} "
          f"specificity {report.specificity:.4f} auc {auc}")
    return EXIT_OK


def cmd_ablate(cfg: RunConfig) -> int:
    arms = select_arms(cfg.ablate.arms)
    prepared = prepare(_cohort(cfg), cfg)
    out = _out_dir(cfg, "ablate")
    rows = ablate(prepared, cfg.model, cfg.train, cfg.seed, arms, cfg.ablate.jobs)
    _write(out / "ablation.csv", format_csv(rows))
    table = format_table(rows)
    _write(out / "ablation.txt", table)
    print(table, end="")
    if not any(r.ok for r in rows):
        print("error: every ablation arm failed", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "features": cmd_features, "train": cmd_train, "eval": cmd_eval, "ablate": cmd_ablate}


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="YAML run configuration")
    parser.add_argument("--seed", type=int, default=default, help="top-level seed (unsigned 64-bit)")
    parser.add_argument("--out", default=default, help="output directory")
    parser.add_argument("--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False)
    parser.add_argument("--set", action="append", default=argparse.SUPPRESS if suppress else [], metavar="KEY=VALUE",
                        help="override any setting, e.g. --set train.epochs=50 (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gazefuse", description="Gaze-based hybrid classifier toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic cohort")
    p.add_argument("--subjects", type=int, help="total subjects (even; half per class)")
    p.add_argument("--class-gap", type=float, help="0 makes the classes indistinguishable")

    p = sub.add_parser("features", help="export engineered features for a cohort")
    p.add_argument("--cohort", help="cohort directory")

    p = sub.add_parser("train", help="train the hybrid model")
    p.add_argument("--cohort", help="cohort directory")
    p.add_argument("--optimizer", choices=("adam", "sgd"))
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--fusion", choices=("hybrid", "early", "late"))

    p = sub.add_parser("eval", help="evaluate a trained model")
    p.add_argument("--run", help="training output directory")
    p.add_argument("--cohort", help="cohort directory (defaults to the one used for training)")
    p.add_argument("--split", choices=("train", "val", "test"))
    p.add_argument("--threshold", type=float)

    p = sub.add_parser("ablate", help="fusion x feature-set ablation sweep")
    p.add_argument("--cohort", help="cohort directory")
    p.add_argument("--arms", help="comma-separated arm ids")
    p.add_argument("--jobs", type=int, help="worker processes")
    p.add_argument("--epochs", type=int)

    for action in sub.choices.values():
        _global_flags(action, suppress=True)
    return parser


def _training_config_of(run_dir: str) -> dict:
    path = Path(run_dir) / CONFIG_FILE
    if not path.exists():
        return {}
    return json.loads(path.read_text(encoding="utf-8"))


def resolve(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config)
    if args.command == "eval" and getattr(args, "run", None):
        # start from the training run's settings so the split and features match
        trained = _training_config_of(args.run)
        for section in ("cohort_dir", "features", "split", "model", "train"):
            if section in trained:
                set_value(cfg, f"{section}={json.dumps(trained[section])}")
        if "seed" in trained:
            cfg.seed = trained["seed"]
    for item in args.set:
        set_value(cfg, item)
    flag_map = {
        "seed": "seed", "out": "out", "cohort": "cohort_dir", "run": "run_dir", "class_gap": "cohort.class_gap",
        "optimizer": "train.optimizer", "epochs": "train.epochs", "lr": "train.learning_rate",
        "fusion": "model.fusion", "split": "eval.split", "threshold": "eval.threshold", "jobs": "ablate.jobs",
    }
    for flag, key in flag_map.items():
        value = getattr(args, flag, None)
        if value is not None:
            set_value(cfg, f"{key}={json.dumps(value)}")
    if getattr(args, "arms", None) is not None:
        cfg.ablate.arms = [a for a in args.arms.split(",") if a]
    subjects = getattr(args, "subjects", None)
    if subjects is not None:
        if subjects < 2 or subjects % 2:
            raise ConfigError(f"--subjects must be an even number >= 2, got {subjects}")
        cfg.cohort.n_per_class = subjects // 2
    return cfg.resolve()


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args)
        return COMMANDS[args.command](cfg)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, ParseError, UsageError, ShapeError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, GazeFuseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
