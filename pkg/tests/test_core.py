import numpy as np
import pytest

from glybench.core import (
    FoldDays, GridRangeError, Horizon, PatientRecord, SampleSet, SplitPlan,
    TimeGrid, day_index, slot_of,
)


class TestTimeGrid:
    def test_slot_of_identity(self):
        grid = TimeGrid(start=0, step=300, length=10)
        assert slot_of(grid, 0) == 0

    def test_slot_of_floors(self):
        grid = TimeGrid(start=0, step=300, length=10)
        assert slot_of(grid, 299) == 0
        assert slot_of(grid, 600) == 2

    def test_slot_of_range_checked(self):
        grid = TimeGrid(start=0, step=300, length=10)
        with pytest.raises(GridRangeError):
            slot_of(grid, -1)
        with pytest.raises(GridRangeError):
            slot_of(grid, 3000)

    def test_day_index(self):
        grid = TimeGrid(start=0, step=300, length=4 * 288)
        assert day_index(grid, 0) == 0
        assert day_index(grid, grid.slot_of(23 * 3600 + 55 * 60)) == 0
        assert day_index(grid, grid.slot_of(3 * 86400)) == 3

    def test_day_index_respects_offset(self):
        # 23:00 UTC start; in a UTC-1 timezone the local day rolls over one
        # hour later than the UTC day does
        grid = TimeGrid(start=23 * 3600, step=300, length=288)
        slot_midnight_utc = grid.slot_of(24 * 3600)
        assert grid.day_index(slot_midnight_utc) == 1
        assert grid.day_index(slot_midnight_utc, utc_offset=-3600) == 0
        assert grid.day_index(grid.slot_of(25 * 3600), utc_offset=-3600) == 1

    def test_invalid_grid(self):
        with pytest.raises(ValueError):
            TimeGrid(start=0, step=0, length=1)
        with pytest.raises(ValueError):
            TimeGrid(start=0, step=300, length=0)


class TestPatientRecord:
    def _make(self, **kw):
        grid = TimeGrid(start=0, step=300, length=3)
        defaults = dict(
            patient_id="p0", source="csv", grid=grid,
            glucose=np.array([100.0, np.nan, 120.0]),
            cho=np.zeros(3), insulin=np.zeros(3),
        )
        defaults.update(kw)
        return PatientRecord(**defaults)

    def test_valid(self):
        rec = self._make()
        assert rec.last_glucose_slot() == 2
        assert rec.n_days == 1

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            self._make(glucose=np.array([100.0, 110.0]))

    def test_negative_channels_rejected(self):
        with pytest.raises(ValueError):
            self._make(cho=np.array([0.0, -1.0, 0.0]))
        with pytest.raises(ValueError):
            self._make(glucose=np.array([100.0, -5.0, 120.0]))

    def test_unknown_source(self):
        with pytest.raises(ValueError):
            self._make(source="sqlite")

    def test_immutable(self):
        rec = self._make()
        with pytest.raises(ValueError):
            rec.glucose[0] = 1.0


class TestHorizon:
    def test_steps(self):
        assert Horizon(30).ph_steps == 6
        assert Horizon(120).ph_steps == 24
        assert Horizon(30, step_seconds=1800).ph_steps == 1

    def test_rejects_unknown_horizon(self):
        with pytest.raises(ValueError):
            Horizon(45)

    def test_rejects_indivisible_step(self):
        with pytest.raises(ValueError):
            Horizon(30, step_seconds=7 * 60)


class TestSampleSet:
    def test_target_time_invariant(self):
        with pytest.raises(ValueError):
            SampleSet(
                issue_times=np.array([0], dtype=np.int64),
                history=np.zeros((1, 3, 4)),
                target=np.array([1.0]),
                target_times=np.array([60], dtype=np.int64),  # should be 1800
                imputed=np.zeros((1, 3, 4), dtype=bool),
                horizon=Horizon(30),
            )

    def test_features_layout(self):
        h = np.arange(12, dtype=np.float64).reshape(1, 3, 4)
        ss = SampleSet(
            issue_times=np.array([0], dtype=np.int64),
            history=h,
            target=np.array([1.0]),
            target_times=np.array([1800], dtype=np.int64),
            imputed=np.zeros((1, 3, 4), dtype=bool),
            horizon=Horizon(30),
        )
        assert ss.features().shape == (1, 12)
        # glucose block first, then cho, then insulin
        np.testing.assert_array_equal(ss.features()[0, :4], [0, 1, 2, 3])
        np.testing.assert_array_equal(ss.features()[0, 4:8], [4, 5, 6, 7])


class TestSplitPlan:
    def test_partition_enforced(self):
        days = frozenset(range(10))
        good = tuple(
            FoldDays(train_days=days - frozenset({2 * i, 2 * i + 1}),
                     valid_days=frozenset({2 * i, 2 * i + 1}))
            for i in range(5)
        )
        plan = SplitPlan(test_days=frozenset({10, 11}), folds=good)
        assert plan.non_test_days == days

        bad = good[:4] + (FoldDays(train_days=days - frozenset({0, 1}),
                                   valid_days=frozenset({0, 1})),)
        with pytest.raises(ValueError):
            SplitPlan(test_days=frozenset({10, 11}), folds=bad)

    def test_overlap_rejected(self):
        with pytest.raises(ValueError):
            FoldDays(train_days=frozenset({0, 1}), valid_days=frozenset({1}))
