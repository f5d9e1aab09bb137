import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gazefuse.data import SplitConfig, build_dataset, scanpath_sequence, split_dataset, split_hash
from gazefuse.errors import ConfigError, InsufficientDataError, TrainingDivergedError, UsageError
from gazefuse.gaze import CohortConfig, Fixation, ScanPath, StimulusCategory, generate_cohort
from gazefuse.metrics import ConfusionMatrix, evaluate_scores, metrics_from_confusion, roc_curve
from gazefuse.model import HybridModel, ModelConfig
from gazefuse.training import TrainConfig, evaluate, explain, format_history, train


def pair_auc(scores, labels):
    """Mann-Whitney statistic by enumerating every positive/negative pair."""
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    credit = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return credit / (len(pos) * len(neg))


class TestMetrics:
    def test_reference_counts(self):
        r = metrics_from_confusion(ConfusionMatrix(tp=145, fn=5, tn=143, fp=7))
        assert r.accuracy == 0.96
        assert r.sensitivity == pytest.approx(145 / 150, abs=1e-12)
        assert r.specificity == pytest.approx(143 / 150, abs=1e-12)
        assert r.f1 == pytest.approx(2 * 145 / (2 * 145 + 7 + 5), abs=1e-12)

    def test_perfect(self):
        r = evaluate_scores([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0])
        assert (r.accuracy, r.f1, r.sensitivity, r.specificity, r.auc) == (1.0, 1.0, 1.0, 1.0, 1.0)

    def test_all_positive(self):
        r = evaluate_scores([0.9] * 4, [1, 1, 0, 0])
        assert r.sensitivity == 1.0 and r.specificity == 0.0 and r.accuracy == 0.5

    def test_zero_denominator_flagged(self):
        r = metrics_from_confusion(ConfusionMatrix(tp=0, fn=3, tn=5, fp=0))
        assert r.precision == 0.0 and r.f1 == 0.0
        assert "precision_undefined" in r.flags

    def test_single_class(self):
        r = evaluate_scores([0.2, 0.7], [1, 1])
        assert r.auc is None and "auc_undefined_single_class" in r.flags and r.accuracy == 0.5

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
    def test_identities(self, tp, fn, tn, fp):
        cm = ConfusionMatrix(tp, fn, tn, fp)
        r = metrics_from_confusion(cm)
        if cm.total:
            assert r.accuracy * cm.total == pytest.approx(tp + tn, abs=1e-9)
        if tp:
            prec, sens = tp / (tp + fp), tp / (tp + fn)
            assert abs(r.f1 - 2 * prec * sens / (prec + sens)) <= 1e-12


class TestRoc:
    def test_pair_example(self):
        assert roc_curve([0.9, 0.8, 0.3], [1, 0, 1]).auc == 0.5

    def test_separated(self):
        assert roc_curve([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]).auc == 1.0

    def test_ties_half_credit(self):
        assert roc_curve([0.5, 0.5], [1, 0]).auc == 0.5

    def test_points_monotone(self):
        pts = roc_curve([0.3, 0.7, 0.7, 0.1, 0.9], [0, 1, 0, 0, 1]).points
        assert pts[0] == (0.0, 0.0) and pts[-1] == (1.0, 1.0)
        assert all(a[0] <= b[0] and a[1] <= b[1] for a, b in zip(pts, pts[1:]))

    def test_single_class(self):
        with pytest.raises(InsufficientDataError):
            roc_curve([0.1, 0.2], [0, 0])

    def test_null(self):
        rng = np.random.default_rng(0)
        assert abs(roc_curve(rng.random(10_000), rng.integers(0, 2, 10_000)).auc - 0.5) <= 0.02

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 8), st.booleans()), min_size=2, max_size=200))
    def test_matches_pair_count(self, rows):
        scores = [s / 8 for s, _ in rows]
        labels = [y for _, y in rows]
        if len(set(labels)) < 2:
            return
        assert abs(roc_curve(scores, labels).auc - pair_auc(scores, labels)) <= 1e-12


class TestSplit:
    def subjects(self, n_per_class):
        return [(f"S{i:03d}", i % 2) for i in range(2 * n_per_class)]

    def test_hundred(self):
        subj = self.subjects(50)
        out = split_dataset(subj, SplitConfig())
        label = dict(subj)
        assert [len(out[k]) for k in ("train", "val", "test")] == [70, 15, 15]
        assert sum(label[s] for s in out["train"]) == 35

    def test_sixty_four(self):
        out = split_dataset(self.subjects(32), SplitConfig())
        assert [len(out[k]) for k in ("train", "val", "test")] == [45, 10, 9]

    def test_deterministic_and_disjoint(self):
        a = split_dataset(self.subjects(20), SplitConfig(seed=5))
        b = split_dataset(self.subjects(20), SplitConfig(seed=5))
        assert a == b and split_hash(a) == split_hash(b)
        seen = a["train"] + a["val"] + a["test"]
        assert len(seen) == len(set(seen)) == 40

    def test_seed_changes_assignment(self):
        assert split_dataset(self.subjects(20), SplitConfig(seed=1)) != split_dataset(self.subjects(20), SplitConfig(seed=2))

    def test_too_few(self):
        with pytest.raises(ConfigError):
            split_dataset(self.subjects(2), SplitConfig())

    def test_bad_ratios(self):
        with pytest.raises(ConfigError):
            split_dataset(self.subjects(10), SplitConfig(0.7, 0.2, 0.2))

    def test_scanpaths_follow_subject(self):
        cohort = generate_cohort(CohortConfig(n_per_class=10, stimuli_per_subject=10, stimuli_per_category=10), 3)
        ds = build_dataset(cohort)
        out = split_dataset(cohort.subjects, SplitConfig())
        sid = cohort.subjects[0][0]
        homes = [k for k in out if len(ds.for_subjects(out[k]).subject_ids) and sid in out[k]]
        assert len(homes) == 1
        assert ds.for_subjects(out[homes[0]]).subject_ids.count(sid) == 10


class TestSequence:
    def test_rows_and_padding(self):
        fx = (Fixation(0.1, 0.2, 200, 0), Fixation(0.3, 0.4, 100, 250))
        sp = ScanPath("S", "m", StimulusCategory.ANIMALS, fx, 0)
        seq, mask = scanpath_sequence(sp, 4)
        np.testing.assert_array_equal(seq[:2], [[0.1, 0.2, 0.2, 0.0], [0.3, 0.4, 0.1, 0.25]])
        assert not seq[2:].any() and mask.tolist() == [1, 1, 0, 0]


@pytest.fixture(scope="module")
def small_run():
    cohort = generate_cohort(CohortConfig(n_per_class=8, stimuli_per_subject=2, stimuli_per_category=3), 0)
    ds = build_dataset(cohort)
    sp = split_dataset(cohort.subjects, SplitConfig(0.5, 0.25, 0.25))
    parts = {k: ds.for_subjects(v) for k, v in sp.items()}
    cfg = ModelConfig(d_model=16, heads=2, d_fusion=16, d_attn=8, feature_names=list(ds.feature_names))
    return cfg, parts


class TestTrain:
    def test_zero_learning_rate(self, small_run):
        cfg, parts = small_run
        model = HybridModel(cfg, 1)
        before = {k: v.copy() for k, v in model.state_dict().items() if not k.startswith("buffers.")}
        train(model, parts["train"], parts["val"], TrainConfig(learning_rate=0.0, epochs=3))
        after = model.state_dict()
        assert all(np.array_equal(before[k], after[k]) for k in before)

    def test_deterministic(self, small_run):
        cfg, parts = small_run
        runs = [train(HybridModel(cfg, 2), parts["train"], parts["val"], TrainConfig(epochs=4, seed=2)) for _ in range(2)]
        assert format_history(runs[0].history) == format_history(runs[1].history)
        s0, s1 = runs[0].model.state_dict(), runs[1].model.state_dict()
        assert all(s0[k].tobytes() == s1[k].tobytes() for k in s0)

    def test_history_and_best(self, small_run):
        cfg, parts = small_run
        res = train(HybridModel(cfg, 3), parts["train"], parts["val"], TrainConfig(epochs=6, patience=2))
        epochs = [h.epoch for h in res.history]
        assert epochs == list(range(1, len(epochs) + 1))
        best = min(res.history, key=lambda h: h.val_loss)
        assert res.best_epoch == best.epoch
        report, _ = evaluate(res.model, parts["val"])
        assert report.confusion.total == len(parts["val"])

    def test_divergence(self, small_run):
        cfg, parts = small_run
        with pytest.raises(TrainingDivergedError) as info:
            train(HybridModel(cfg, 4), parts["train"], parts["val"], TrainConfig(optimizer="sgd", learning_rate=1e300, epochs=2))
        assert info.value.epoch == 1 and info.value.param_norms

    def test_empty_validation(self, small_run):
        cfg, parts = small_run
        with pytest.raises(UsageError):
            train(HybridModel(cfg, 0), parts["train"], parts["val"].subset([]), TrainConfig(epochs=1))

    def test_checkpoint_round_trip(self, small_run, tmp_path):
        cfg, parts = small_run
        res = train(HybridModel(cfg, 5), parts["train"], parts["val"], TrainConfig(epochs=2))
        blob = res.model.save(tmp_path / "m.ckpt", seed=5)
        again = HybridModel.load(tmp_path / "m.ckpt")
        np.testing.assert_array_equal(evaluate(again, parts["test"])[1], evaluate(res.model, parts["test"])[1])
        assert again.save(tmp_path / "m2.ckpt", seed=5) == blob

    def test_explanations(self, small_run):
        cfg, parts = small_run
        model = HybridModel(cfg, 6)
        model.fit_normalizer(parts["train"].features)
        recs = explain(model, parts["test"], top_k=5)
        assert len(recs) == len(parts["test"])
        for rec in recs:
            assert abs(sum(rec["alpha"]) - 1) <= 1e-9 and len(rec["feature_saliency"]) == 5

    def test_saliency_matches_finite_difference(self, small_run):
        cfg, parts = small_run
        model = HybridModel(cfg, 7)
        model.fit_normalizer(parts["train"].features)
        one = parts["test"].subset([0])
        name, grad = explain(model, one, top_k=1)[0]["feature_saliency"][0]
        j = one.feature_names.index(name)
        h = 1e-5
        logits = []
        for delta in (h, -h):
            shifted = one.subset([0])
            shifted.features = one.features.copy()
            # a raw shift of delta * std moves the standardized value by delta
            shifted.features[0, j] += delta * model.named_buffers()["feature_std"][j]
            logits.append(model(shifted)["logit"].item())
        assert grad == pytest.approx((logits[0] - logits[1]) / (2 * h), rel=1e-5)
