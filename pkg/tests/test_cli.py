import hashlib
import json
from pathlib import Path

import pytest

from gazefuse.cli import main
from gazefuse.config import load_config
from gazefuse.errors import ConfigError

FAST = ["--set", "train.epochs=3", "--set", "model.d_model=16", "--set", "model.heads=2"]


def digest(directory: Path) -> dict[str, str]:
    return {str(p.relative_to(directory)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(directory.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def cohort(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "cohort"
    assert main(["synth", "--subjects", "20", "--seed", "7", "--out", str(out)]) == 0
    return out


class TestSynth:
    def test_repeatable(self, cohort, tmp_path):
        again = tmp_path / "again"
        assert main(["synth", "--subjects", "20", "--seed", "7", "--out", str(again)]) == 0
        assert digest(cohort) == digest(again)

    def test_manifest_count(self, cohort):
        manifest = json.loads((cohort / "manifest.json").read_text())
        assert len(manifest["subjects"]) == 20

    def test_zero_subjects(self, tmp_path, capsys):
        out = tmp_path / "none"
        assert main(["synth", "--subjects", "0", "--out", str(out)]) == 2
        assert not out.exists()
        assert "subjects" in capsys.readouterr().err

    def test_unwritable(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        assert main(["synth", "--subjects", "4", "--out", str(blocker / "sub")]) == 2

    def test_resolved_config_written(self, cohort):
        cfg = json.loads((cohort / "config.json").read_text())
        assert cfg["command"] == "synth" and cfg["seed"] == 7 and cfg["cohort"]["n_per_class"] == 10


class TestFeatures:
    def test_rows_and_rerun(self, cohort, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["features", "--cohort", str(cohort), "--out", str(a)]) == 0
        assert main(["features", "--cohort", str(cohort), "--out", str(b)]) == 0
        assert (a / "features.csv").read_bytes() == (b / "features.csv").read_bytes()
        lines = (a / "features.csv").read_text().splitlines()
        assert len(lines) == 1 + 60
        assert json.loads((a / "features.json").read_text())["length"] == 281

    def test_skips_short_path(self, cohort, tmp_path, capsys):
        broken = tmp_path / "broken"
        assert main(["synth", "--subjects", "20", "--seed", "7", "--out", str(broken)]) == 0
        sp_file = broken / "scanpaths" / "S000.csv"
        lines = sp_file.read_text().splitlines()
        header = [i for i, line in enumerate(lines) if not line.startswith("#")][0]
        first_stim = lines[header + 1].split(",")[1]
        body = [line for line in lines[header + 1 :] if line.split(",")[1] != first_stim]
        keep = [line for line in lines[header + 1 :] if line.split(",")[1] == first_stim][:1]
        sp_file.write_text("\n".join(lines[: header + 1] + keep + body) + "\n")
        out = tmp_path / "f"
        assert main(["features", "--cohort", str(broken), "--out", str(out)]) == 0
        assert len((out / "features.csv").read_text().splitlines()) == 1 + 59
        assert "skipped 1 scanpath" in capsys.readouterr().err

    def test_missing_manifest(self, tmp_path):
        assert main(["features", "--cohort", str(tmp_path / "nope"), "--out", str(tmp_path / "o")]) == 2


@pytest.fixture(scope="module")
def trained(cohort, tmp_path_factory):
    run = tmp_path_factory.mktemp("run") / "run"
    assert main(["train", "--cohort", str(cohort), "--out", str(run), "--optimizer", "sgd", *FAST]) == 0
    return run


class TestTrainEval:
    def test_outputs(self, trained):
        assert {"model.ckpt", "history.csv", "config.json", "split.json", "train_summary.json"} <= set(digest(trained))
        cfg = json.loads((trained / "config.json").read_text())
        assert cfg["train"]["optimizer"] == "sgd"
        assert (trained / "history.csv").read_text().splitlines()[0].startswith("epoch,train_loss,val_loss,val_acc")

    def test_same_seed_same_checkpoint(self, cohort, trained, tmp_path):
        again = tmp_path / "again"
        assert main(["train", "--cohort", str(cohort), "--out", str(again), "--optimizer", "sgd", *FAST]) == 0
        assert digest(trained) == digest(again)

    def test_eval(self, trained, tmp_path):
        out = tmp_path / "eval"
        assert main(["eval", "--run", str(trained), "--out", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        assert {"accuracy", "f1", "sensitivity", "specificity", "auc"} <= set(report)
        for rec in json.loads((out / "explanations.json").read_text()):
            assert abs(sum(rec["alpha"]) - 1) <= 1e-9
        assert (out / "roc.csv").read_text().startswith("threshold,fpr,tpr\n")
        assert (out / "config.json").exists()

    def test_missing_checkpoint(self, tmp_path):
        assert main(["eval", "--run", str(tmp_path), "--out", str(tmp_path / "e")]) == 2

    def test_divergence_exit_code(self, cohort, tmp_path, capsys):
        code = main(["train", "--cohort", str(cohort), "--out", str(tmp_path / "d"), "--optimizer", "sgd",
                     "--lr", "1e300", *FAST])
        assert code == 3
        assert "non-finite loss at epoch" in capsys.readouterr().err


class TestAblate:
    def test_filter_and_rerun(self, cohort, tmp_path):
        args = ["ablate", "--cohort", str(cohort), "--arms", "hybrid,early", *FAST]
        assert main([*args, "--out", str(tmp_path / "a")]) == 0
        assert main([*args, "--out", str(tmp_path / "b")]) == 0
        table = (tmp_path / "a" / "ablation.csv").read_text().splitlines()
        assert len(table) == 3 and [r.split(",")[0] for r in table[1:]] == ["hybrid", "early"]
        assert (tmp_path / "a" / "ablation.csv").read_bytes() == (tmp_path / "b" / "ablation.csv").read_bytes()
        assert (tmp_path / "a" / "ablation.txt").read_bytes() == (tmp_path / "b" / "ablation.txt").read_bytes()

    def test_unknown_arm(self, cohort, tmp_path):
        assert main(["ablate", "--cohort", str(cohort), "--arms", "mid", "--out", str(tmp_path)]) == 2


class TestConfig:
    def test_precedence(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("seed: 3\ntrain:\n  epochs: 50\n  optimizer: sgd\n")
        cfg = load_config(path, ["train.epochs=7"])
        assert (cfg.seed, cfg.train.epochs, cfg.train.optimizer) == (3, 7, "sgd")

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("train:\n  epoch: 5\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_flag_beats_file(self, tmp_path, cohort):
        path = tmp_path / "run.yaml"
        path.write_text("seed: 3\n")
        out = tmp_path / "o"
        assert main(["synth", "--config", str(path), "--seed", "9", "--subjects", "4", "--out", str(out)]) == 0
        assert json.loads((out / "config.json").read_text())["seed"] == 9

    def test_bad_flag(self):
        assert main(["train", "--optimizer", "rmsprop"]) == 2
