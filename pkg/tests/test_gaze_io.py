import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gazefuse import rng as rngmod
from gazefuse.errors import ConfigError, InsufficientDataError, ParseError
from gazefuse.features import RegionGrid, dwell_times
from gazefuse.gaze import (
    CohortConfig,
    Fixation,
    RawGazeSample,
    ScanPath,
    StimulusCategory,
    cluster_fixations,
    filter_noise,
    format_scanpaths,
    generate_cohort,
    jitter_augment,
    load_cohort,
    normalize,
    parse_text,
    synth_heatmap,
    write_cohort,
)
from gazefuse.gaze.synth import _stimulus_pool

HEADER = "subject_id,stimulus_id,category,label,idx,x,y,duration_ms,onset_ms\n"


def path_of(points, durations=None, onsets=None, label=0):
    n = len(points)
    durations = durations or [200.0] * n
    onsets = onsets or [i * 300.0 for i in range(n)]
    fx = tuple(Fixation(x, y, d, o) for (x, y), d, o in zip(points, durations, onsets))
    return ScanPath("S", "stim", StimulusCategory.ANIMALS, fx, label)


class TestParse:
    def test_two_rows_single_scanpath(self):
        text = HEADER + "S1,animals_00,animals,1,0,10,20,200,0\nS1,animals_00,animals,1,1,30,40,150,260\n"
        parsed = parse_text(text)
        assert len(parsed.scanpaths) == 1
        sp = parsed.scanpaths[0]
        assert len(sp) == 2 and sp.label == 1 and sp.category is StimulusCategory.ANIMALS
        assert sp.fixations[1] == Fixation(30.0, 40.0, 150.0, 260.0)

    def test_empty_file(self):
        assert parse_text("").scanpaths == []

    def test_out_of_bounds_row_dropped_with_warning(self):
        rows = [f"S1,nature_01,nature,0,{i},{100 * (i + 1)},100,200,{i * 300}" for i in range(5)]
        rows[2] = "S1,nature_01,nature,0,2,2500,100,200,600"
        parsed = parse_text(HEADER + "\n".join(rows) + "\n", 1920, 1080)
        assert len(parsed.scanpaths[0]) == 4
        assert len(parsed.warnings) == 1 and "line 4" in parsed.warnings[0]

    def test_malformed_row_reports_line(self):
        text = HEADER + "S1,animals_00,animals,1,0,10,20,200,0\nS1,animals_00,animals,1,1,abc,40,150,260\n"
        with pytest.raises(ParseError, match="line 3"):
            parse_text(text)

    def test_wrong_field_count(self):
        with pytest.raises(ParseError, match="line 2"):
            parse_text(HEADER + "S1,animals_00,animals,1,0,10\n")

    def test_eight_column_layout_gets_back_to_back_onsets(self):
        text = "subject_id,stimulus_id,category,label,idx,x,y,duration_ms\nA,n,nature,0,1,5,5,100\nA,n,nature,0,0,1,1,200\n"
        sp = parse_text(text).scanpaths[0]
        assert [f.onset for f in sp.fixations] == [0.0, 200.0]
        assert [f.x for f in sp.fixations] == [1.0, 5.0]

    def test_round_trip_identity(self):
        cohort = generate_cohort(CohortConfig(n_per_class=3), seed=1)
        text = format_scanpaths(cohort.scanpaths)
        first = parse_text(text).scanpaths
        assert first == cohort.scanpaths
        assert parse_text(format_scanpaths(first)).scanpaths == first


class TestFilterNoise:
    def test_all_valid_identity(self):
        samples = [RawGazeSample(t, t, 2 * t) for t in range(0, 50, 5)]
        assert filter_noise(samples) == [samples]

    def test_short_gap_interpolated(self):
        samples = [RawGazeSample(0, 10, 20), RawGazeSample(5, 0, 0, False), RawGazeSample(10, 30, 60)]
        (segment,) = filter_noise(samples, blink_gap_ms=75)
        assert segment[1] == RawGazeSample(5, 20.0, 40.0, True)

    def test_long_gap_splits(self):
        valid_a = [RawGazeSample(t, 1, 1) for t in range(0, 100, 10)]
        blink = [RawGazeSample(t, 0, 0, False) for t in range(100, 600, 10)]
        valid_b = [RawGazeSample(t, 2, 2) for t in range(600, 700, 10)]
        segments = filter_noise(valid_a + blink + valid_b, blink_gap_ms=75)
        assert segments == [valid_a, valid_b]


class TestClusterFixations:
    def test_stationary_block(self):
        samples = [RawGazeSample(t, 0.3, 0.6) for t in range(0, 201, 10)]
        (fx,) = cluster_fixations(samples, 0.04, 100)
        assert (fx.x, fx.y, fx.duration, fx.onset) == pytest.approx((0.3, 0.6, 200.0, 0.0))

    def test_two_clusters_separated_by_sweep(self):
        a = [RawGazeSample(t, 0.2, 0.2) for t in range(0, 200, 10)]
        sweep = [RawGazeSample(200 + 10 * k, 0.2 + 0.1 * (k + 1), 0.2 + 0.1 * (k + 1)) for k in range(5)]
        b = [RawGazeSample(t, 0.8, 0.8) for t in range(250, 450, 10)]
        fixations = cluster_fixations(a + sweep + b, 0.04, 80)
        assert len(fixations) == 2
        assert fixations[0].x == pytest.approx(0.2) and fixations[1].x == pytest.approx(0.8)

    def test_fast_motion_gives_nothing(self):
        samples = [RawGazeSample(10 * k, 0.05 * k % 1.0, 0.5) for k in range(40)]
        assert cluster_fixations(samples, 0.01, 80) == []

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=80), st.integers(1, 20))
    def test_durations_bounded_by_span(self, points, dt):
        samples = [RawGazeSample(i * dt, x, y) for i, (x, y) in enumerate(points)]
        fixations = cluster_fixations(samples, 0.1, 30)
        assert sum(f.duration for f in fixations) <= samples[-1].t - samples[0].t


class TestNormalize:
    def test_center(self):
        sp = normalize(path_of([(960, 540), (0, 0)]), 1920, 1080)
        assert (sp.fixations[0].x, sp.fixations[0].y) == (0.5, 0.5)
        assert (sp.fixations[1].x, sp.fixations[1].y) == (0.0, 0.0)

    def test_clamp(self):
        f = normalize(path_of([(1930, 500), (1, 1)]), 1920, 1080).fixations[0]
        assert f.x == 1.0 and f.y == pytest.approx(0.4630, abs=1e-4)

    def test_bad_screen(self):
        with pytest.raises(ConfigError):
            normalize(path_of([(1, 1), (2, 2)]), 0, 1080)

    def test_idempotent(self):
        once = normalize(path_of([(0.3, 0.9), (1.0, 0.0)]), 1, 1)
        assert normalize(once, 1, 1) == once


class TestJitter:
    def test_zero_sigma(self):
        sp = path_of([(0.1, 0.2), (0.3, 0.4)])
        assert jitter_augment(sp, 0.0, np.random.default_rng(0)) == sp

    def test_noise_scale(self):
        n = 10_000
        sp = path_of([(0.5, 0.5)] * n, onsets=[float(i) for i in range(n)], durations=[0.5] * n)
        out = jitter_augment(sp, 0.01, rngmod.stream(3, "jitter")).positions()
        std = out.std(axis=0)
        assert np.all(np.abs(std - 0.01) <= 0.001)

    def test_clamped_at_edge(self):
        sp = path_of([(0.999, 0.5), (0.5, 0.5)])

        class BigDraw:
            def normal(self, loc, scale, size):
                return np.full(size, 5.0 * scale)

        out = jitter_augment(sp, 0.01, BigDraw())
        assert out.fixations[0].x == 1.0
        assert out.fixations[0].duration == sp.fixations[0].duration and out.label == sp.label


class TestHeatmap:
    def test_concentrated(self):
        sp = path_of([(0.375, 0.625)])
        m = synth_heatmap(sp, 4, 4, bandwidth=0.01).grid
        assert m[2, 1] > 0.99

    def test_normalized(self):
        cohort = generate_cohort(CohortConfig(n_per_class=2), seed=3)
        for sp in cohort.scanpaths:
            grid = synth_heatmap(normalize(sp, 1920, 1080), 9, 16, 0.05).grid
            assert abs(grid.sum() - 1.0) <= 1e-9 and np.all(grid >= 0)

    def test_reflection_symmetry(self):
        sp = path_of([(0.2, 0.4), (0.8, 0.4)])
        grid = synth_heatmap(sp, 6, 10, 0.1).grid
        np.testing.assert_allclose(grid, grid[:, ::-1], atol=1e-9)

    def test_empty_path(self):
        empty = ScanPath("S", "x", StimulusCategory.NATURE, (), 0)
        with pytest.raises(InsufficientDataError):
            synth_heatmap(empty, 4, 4, 0.1)


class TestGenerator:
    def test_deterministic_bytes(self, tmp_path):
        for d in ("a", "b"):
            write_cohort(tmp_path / d, generate_cohort(CohortConfig(n_per_class=4), seed=7))
        files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
        assert files
        for f in files:
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_label_balance(self):
        cohort = generate_cohort(CohortConfig(n_per_class=11), seed=2)
        labels = [lab for _, lab in cohort.subjects]
        assert labels.count(0) == 11 and labels.count(1) == 11

    def test_social_dwell_gap(self):
        config = CohortConfig(n_per_class=50)
        cohort = generate_cohort(config, seed=5)
        pool = _stimulus_pool(config, 5)
        per_class = {0: [], 1: []}
        for sp in cohort.scanpaths:
            stim = pool[sp.stimulus_id]
            norm = normalize(sp, config.screen_w, config.screen_h)
            inside = np.array([stim.in_social_region(f.x, f.y) for f in norm.fixations])
            per_class[sp.label].append(float(norm.durations()[inside].sum() / norm.durations().sum()))
        a, b = np.array(per_class[0]), np.array(per_class[1])
        se = np.sqrt(a.var() / len(a) + b.var() / len(b))
        gap = a.mean() - b.mean()
        # pixel rounding can push an edge fixation just outside the disk
        assert abs(gap - config.social_dwell_gap) < 4 * se + 0.01

    def test_invalid_configs(self):
        with pytest.raises(ConfigError):
            generate_cohort(CohortConfig(n_per_class=0), seed=1)
        with pytest.raises(ConfigError):
            generate_cohort(CohortConfig(category_mix={"animals": 0.5, "nature": 0.4}), seed=1)

    def test_disk_round_trip(self, tmp_path):
        cohort = generate_cohort(CohortConfig(n_per_class=3), seed=4)
        write_cohort(tmp_path, cohort)
        loaded, warnings = load_cohort(tmp_path)
        assert warnings == []
        assert loaded.scanpaths == cohort.scanpaths
        assert loaded.subjects == cohort.subjects
        for sid in cohort.modalities:
            for k, v in cohort.modalities[sid].items():
                assert loaded.modalities[sid][k].tobytes() == v.tobytes()

    def test_dwell_features_sum_to_one(self):
        cohort = generate_cohort(CohortConfig(n_per_class=2), seed=9)
        for sp in cohort.scanpaths:
            assert abs(dwell_times(normalize(sp, 1920, 1080), RegionGrid()).sum() - 1.0) <= 1e-9
