import math

import numpy as np
import pytest

from reference import (
    diagonal_line_counts,
    reference_features,
    vertical_line_counts,
)
from rqamon.errors import ValidationError
from rqamon.recurrence import recurrence_matrix
from rqamon.rqa import (
    FEATURE_NAMES,
    LineLengthDistribution,
    RqaParams,
    concat_feature_series,
    diagonal_lines,
    line_entropy_bits,
    read_features_csv,
    rqa_features,
    sliding_rqa,
    vertical_lines,
    write_features_csv,
)


def random_window(rng, size=None):
    """Windows with plenty of ties so line structures actually appear."""
    if size is None:
        size = int(rng.integers(2, 31))
    kind = rng.integers(3)
    if kind == 0:
        return rng.choice([0.0, 1.0, 2.0, 5.0, 8.0], size=size)
    if kind == 1:
        return np.round(rng.uniform(0, 10, size=size), 1)
    return rng.uniform(0, 10, size=size)


class TestLineDistributions:
    def test_full_matrix_diagonals(self):
        rm = recurrence_matrix(np.zeros(4), epsilon=1.0)
        dist = diagonal_lines(rm, lmin=2)
        assert dist.counts == {3: 1, 2: 1}

    def test_full_matrix_verticals(self):
        rm = recurrence_matrix(np.zeros(4), epsilon=1.0)
        dist = vertical_lines(rm, lmin=2)
        assert dist.counts == {3: 2, 2: 2}

    def test_isolated_points_have_no_lines(self):
        # Pairwise distances all exceed epsilon except the diagonal, which
        # never counts: both distributions come out empty.
        rm = recurrence_matrix(np.arange(5.0) * 10, epsilon=1.0)
        assert diagonal_lines(rm, lmin=2).counts == {}
        assert vertical_lines(rm, lmin=2).counts == {}

    def test_checkerboard_has_only_short_runs(self):
        # Recurrences exist (the two ends match) but every run has length 1.
        rm = recurrence_matrix(np.array([0.0, 3.0, 0.0]), epsilon=1.0)
        assert diagonal_lines(rm, lmin=2).counts == {}
        assert vertical_lines(rm, lmin=2).counts == {}

    def test_against_reference_counts(self):
        rng = np.random.default_rng(42)
        for _ in range(40):
            window = random_window(rng)
            epsilon = float(rng.choice([0.0, 0.5, 1.0, 2.0]))
            rm = recurrence_matrix(window, epsilon=epsilon)
            cells = [[bool(v) for v in row] for row in rm.entries]
            assert diagonal_lines(rm, lmin=2).counts == diagonal_line_counts(cells, 2)
            assert vertical_lines(rm, lmin=2).counts == vertical_line_counts(cells, 2)

    def test_distribution_totals(self):
        dist = LineLengthDistribution(counts={2: 3, 5: 1}, lmin=2)
        assert dist.total_lines == 4
        assert dist.total_points == 11
        assert dist.mean_length() == 11 / 4

    def test_distribution_rejects_short_lines(self):
        with pytest.raises(ValidationError):
            LineLengthDistribution(counts={1: 4}, lmin=2)


class TestEntropy:
    def test_single_length_is_zero(self):
        dist = LineLengthDistribution(counts={4: 17}, lmin=2)
        assert line_entropy_bits(dist) == 0.0

    def test_equal_frequencies_give_log2_k(self):
        for k in (1, 2, 4, 8):
            counts = {length: 5 for length in range(2, 2 + k)}
            dist = LineLengthDistribution(counts=counts, lmin=2)
            assert abs(line_entropy_bits(dist) - math.log2(k)) < 1e-12

    def test_empty_distribution_is_zero(self):
        dist = LineLengthDistribution(counts={}, lmin=2)
        assert line_entropy_bits(dist) == 0.0

    def test_skewed_distribution(self):
        dist = LineLengthDistribution(counts={2: 3, 3: 1}, lmin=2)
        expected = -(0.75 * math.log2(0.75) + 0.25 * math.log2(0.25))
        assert abs(line_entropy_bits(dist) - expected) < 1e-15


class TestWindowFeatures:
    def test_constant_window(self):
        feats = rqa_features(np.full(10, 5.0), epsilon=6.0)
        assert feats.rec == 100.0
        assert feats.det == 100.0
        assert feats.ent == 0.0
        assert feats.lam == 100.0
        assert feats.tt == 5.5

    def test_distinct_values_at_zero_epsilon(self):
        feats = rqa_features(np.arange(10.0) * 10, epsilon=0.0)
        assert (feats.rec, feats.det, feats.ent, feats.lam, feats.tt) == (
            0.0,
            0.0,
            0.0,
            0.0,
            0.0,
        )

    def test_recurrence_rate_small_case(self):
        # [0, 3, 0] at eps 1: the only off-diagonal recurrences are the
        # (0, 2) pair, so 2 points out of 6 possible.
        feats = rqa_features(np.array([0.0, 3.0, 0.0]), epsilon=1.0)
        assert abs(feats.rec - 100.0 * 2 / 6) < 1e-12

    def test_offset_invariance_exact_for_integer_grids(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            window = rng.integers(0, 10, size=24).astype(float)
            base = rqa_features(window, epsilon=2.0)
            moved = rqa_features(window + 1000.0, epsilon=2.0)
            assert base == moved

    def test_matches_reference_on_random_windows(self):
        rng = np.random.default_rng(2024)
        for _ in range(60):
            window = random_window(rng)
            epsilon = float(rng.choice([0.0, 0.5, 1.0, 2.0, 6.0]))
            got = rqa_features(window, epsilon=epsilon)
            want = reference_features([float(v) for v in window], epsilon)
            assert abs(got.rec - want[0]) < 1e-12
            assert abs(got.det - want[1]) < 1e-12
            assert abs(got.ent - want[2]) < 1e-12
            assert abs(got.lam - want[3]) < 1e-12
            assert abs(got.tt - want[4]) < 1e-12

    def test_as_array_order(self):
        feats = rqa_features(np.full(10, 5.0), epsilon=6.0)
        assert FEATURE_NAMES == ("rec", "det", "ent", "lam", "tt")
        assert feats.as_array().tolist() == [100.0, 100.0, 0.0, 100.0, 5.5]

    def test_too_short_window(self):
        with pytest.raises(ValidationError):
            rqa_features(np.array([1.0]), epsilon=1.0)


class TestParams:
    def test_defaults(self):
        p = RqaParams()
        assert (p.epsilon, p.window, p.lmin, p.step, p.on_threshold) == (
            6.0,
            80,
            2,
            1,
            0.5,
        )

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"epsilon": -1.0},
            {"window": 1},
            {"lmin": 0},
            {"step": 0},
            {"on_threshold": -0.1},
        ],
    )
    def test_validation(self, kwargs):
        with pytest.raises(ValidationError):
            RqaParams(**kwargs)

    def test_dict_round_trip(self):
        p = RqaParams(epsilon=3.0, window=40, lmin=3, step=5, on_threshold=0.2)
        assert RqaParams.from_dict(p.to_dict()) == p


def day(values, label="dev"):
    from datetime import datetime

    from rqamon.timeseries import TimeSeries

    return TimeSeries(datetime(2018, 1, 1), 1, np.asarray(values, float), label)


class TestSlidingRqa:
    def test_row_count_and_window_ends(self):
        rng = np.random.default_rng(1)
        values = rng.uniform(0, 10, size=200)
        for window, step in [(80, 1), (40, 7), (20, 20), (200, 1)]:
            params = RqaParams(window=window, step=step)
            fs = sliding_rqa(day(values), params)
            expected = (len(values) - window) // step + 1
            assert fs.features.shape == (expected, 5)
            assert list(fs.window_end) == [
                window + k * step for k in range(expected)
            ]

    def test_rows_match_single_window_features(self):
        rng = np.random.default_rng(8)
        values = np.round(rng.uniform(0, 8, size=150), 1)
        params = RqaParams(epsilon=1.0, window=30, step=13)
        fs = sliding_rqa(day(values), params)
        for k, end in enumerate(fs.window_end):
            window = values[end - 30 : end]
            feats = rqa_features(window, epsilon=1.0, lmin=2)
            assert np.allclose(fs.features[k], feats.as_array(), atol=1e-12)

    def test_on_flag_uses_strict_mean_threshold(self):
        params = RqaParams(window=10, step=10, on_threshold=0.5)
        fs = sliding_rqa(day(np.full(20, 0.5)), params)
        assert not fs.is_on.any()
        fs = sliding_rqa(day(np.full(20, 0.51)), params)
        assert fs.is_on.all()

    def test_on_features_filters(self):
        values = np.concatenate([np.zeros(40), np.full(40, 3.0)])
        params = RqaParams(window=40, step=40)
        fs = sliding_rqa(day(values), params)
        assert fs.is_on.tolist() == [False, True]
        assert fs.on_features().shape == (1, 5)

    def test_label_comes_from_series(self):
        fs = sliding_rqa(day(np.ones(30), label="iron"), RqaParams(window=30))
        assert fs.label == "iron"

    def test_too_short_input(self):
        with pytest.raises(ValidationError):
            sliding_rqa(day(np.ones(10)), RqaParams(window=20))


class TestSeriesIo:
    def build(self, seed=0, n=120, label="dev", params=None):
        rng = np.random.default_rng(seed)
        values = rng.uniform(0, 10, size=n)
        return sliding_rqa(day(values, label), params or RqaParams(window=40, step=10))

    def test_csv_round_trip_exact(self, tmp_path):
        a = self.build(seed=1, label="iron")
        b = self.build(seed=2, label="dryer")
        path = tmp_path / "f.csv"
        write_features_csv([a, b], path)
        back = read_features_csv(path)
        assert sorted(back) == ["dryer", "iron"]
        for fs in (a, b):
            cols = back[fs.label]
            assert cols["window_end"] == list(fs.window_end)
            assert np.array_equal(np.array(cols["features"]), fs.features)
            assert cols["is_on"] == list(fs.is_on)

    def test_concat_renumbers(self):
        a = self.build(seed=1)
        b = self.build(seed=2)
        merged = concat_feature_series([a, b])
        assert merged.features.shape[0] == len(a.window_end) + len(b.window_end)
        assert np.all(np.diff(merged.window_end) > 0)
        assert np.array_equal(merged.features[: len(a.window_end)], a.features)
        assert np.array_equal(merged.features[len(a.window_end) :], b.features)

    def test_concat_rejects_mixed_labels(self):
        with pytest.raises(ValidationError):
            concat_feature_series([self.build(label="a"), self.build(label="b")])

    def test_concat_rejects_mixed_params(self):
        a = self.build()
        b = self.build(params=RqaParams(window=20, step=10))
        with pytest.raises(ValidationError):
            concat_feature_series([a, b])

    def test_rows_iterator(self):
        fs = self.build()
        rows = list(fs.rows())
        assert len(rows) == len(fs.window_end)
        end, feats, is_on = rows[0]
        assert end == fs.window_end[0]
        assert feats.rec == fs.features[0, 0]
