import numpy as np
import pytest

from rqamon.errors import ValidationError
from rqamon.recurrence import (
    distance_matrix,
    recurrence_matrix,
    write_recurrence_csv,
)


class TestDistanceMatrix:
    def test_known_values(self):
        dm = distance_matrix(np.array([0.0, 3.0, 0.0]))
        expected = [[0, 3, 0], [3, 0, 3], [0, 3, 0]]
        assert dm.entries.tolist() == expected

    def test_symmetric_zero_diagonal(self):
        rng = np.random.default_rng(5)
        window = rng.uniform(0, 10, size=40)
        dm = distance_matrix(window)
        assert np.array_equal(dm.entries, dm.entries.T)
        assert np.all(np.diag(dm.entries) == 0.0)

    def test_readonly(self):
        dm = distance_matrix(np.array([1.0, 2.0]))
        with pytest.raises(ValueError):
            dm.entries[0, 0] = 5.0

    def test_too_short(self):
        with pytest.raises(ValidationError):
            distance_matrix(np.array([1.0]))


class TestRecurrenceMatrix:
    def test_known_values(self):
        rm = recurrence_matrix(np.array([0.0, 3.0, 0.0]), epsilon=1.0)
        expected = [[True, False, True], [False, True, False], [True, False, True]]
        assert rm.entries.tolist() == expected

    def test_distance_equal_to_epsilon_is_recurrent(self):
        rm = recurrence_matrix(np.array([0.0, 6.0]), epsilon=6.0)
        assert rm.entries[0, 1]
        assert rm.entries[1, 0]

    def test_grows_with_epsilon(self):
        rng = np.random.default_rng(17)
        for _ in range(10):
            window = rng.uniform(0, 10, size=25)
            lo = recurrence_matrix(window, epsilon=1.5)
            hi = recurrence_matrix(window, epsilon=4.0)
            assert np.all(hi.entries[lo.entries])

    def test_rejects_bad_epsilon(self):
        window = np.array([1.0, 2.0])
        with pytest.raises(ValidationError):
            recurrence_matrix(window, epsilon=-1.0)
        with pytest.raises(ValidationError):
            recurrence_matrix(window, epsilon=float("nan"))

    def test_size(self):
        rm = recurrence_matrix(np.arange(8.0), epsilon=2.0)
        assert rm.size == 8


def test_csv_export(tmp_path):
    rm = recurrence_matrix(np.array([0.0, 3.0, 0.0]), epsilon=1.0)
    path = tmp_path / "rm.csv"
    write_recurrence_csv(rm, path)
    assert path.read_text().splitlines() == ["1,0,1", "0,1,0", "1,0,1"]
