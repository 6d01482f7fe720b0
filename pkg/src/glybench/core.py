"""Shared data model: time grids, patient records, supervised samples,
day-based splits, and prediction timelines.

All timestamps are integer seconds since epoch and all alignment is slot
arithmetic, never floating-point time, so every downstream artifact is
bit-exact reproducible. Core types are immutable after construction and
safe to share across parallel workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

DAY_SECONDS = 86_400

# Fixed row order of the per-sample history matrix.
GLUCOSE, CHO, INSULIN = 0, 1, 2
SIGNAL_NAMES = ("glucose", "cho", "insulin")

SOURCES = ("synthetic", "ohio-xml", "csv")

HORIZON_MINUTES = (30, 60, 120)


class GridRangeError(ValueError):
    """Timestamp falls outside the grid span."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TimeGrid:
    """Uniform slot grid: slot i maps to timestamp ``start + i * step``.

    start: seconds since epoch; step: slot width in seconds; length: slot count.
    """

    start: int
    step: int
    length: int

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError(f"grid step must be positive, got {self.step}")
        if self.length < 1:
            raise ValueError(f"grid length must be >= 1, got {self.length}")

    @property
    def end(self) -> int:
        """Exclusive end timestamp of the covered span."""
        return self.start + self.length * self.step

    def time_of(self, slot):
        return self.start + slot * self.step

    def times(self) -> np.ndarray:
        return self.start + self.step * np.arange(self.length, dtype=np.int64)

    def slot_of(self, t: int) -> int:
        """Slot index containing timestamp ``t`` (floor)."""
        if t < self.start or t >= self.end:
            raise GridRangeError(f"timestamp {t} outside grid [{self.start}, {self.end})")
        return (t - self.start) // self.step

    def day_index(self, slot, utc_offset: int = 0):
        """Ordinal of the calendar day containing the slot, relative to the
        record's first day.

        Day edges are local midnights of the declared timezone (``utc_offset``
        seconds east of UTC, default UTC).
        """
        t = self.start + np.asarray(slot, dtype=np.int64) * self.step
        day0 = (self.start + utc_offset) // DAY_SECONDS
        out = (t + utc_offset) // DAY_SECONDS - day0
        return int(out) if out.ndim == 0 else out


def slot_of(grid: TimeGrid, t: int) -> int:
    return grid.slot_of(t)


def day_index(grid: TimeGrid, slot: int, utc_offset: int = 0) -> int:
    return grid.day_index(slot, utc_offset)


@dataclass(frozen=True)
class PatientRecord:
    """One patient's glucose/CHO/insulin signals aligned on a shared grid.

    glucose is mg/dL with NaN marking missing readings; cho (g) and insulin
    (dataset-dependent dose units) are per-slot totals and have no missing
    concept — absence of an event is a true zero.
    """

    patient_id: str
    source: str
    grid: TimeGrid
    glucose: np.ndarray
    cho: np.ndarray
    insulin: np.ndarray
    utc_offset: int = 0

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}, expected one of {SOURCES}")
        for name in ("glucose", "cho", "insulin"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (self.grid.length,):
                raise ValueError(
                    f"{name} has length {arr.shape}, grid expects ({self.grid.length},)")
            object.__setattr__(self, name, _frozen(arr))
        present = np.isfinite(self.glucose)
        if np.any(self.glucose[present] <= 0):
            raise ValueError("glucose readings must be positive where present")
        if np.any(~np.isfinite(self.cho)) or np.any(self.cho < 0):
            raise ValueError("cho must be finite and non-negative")
        if np.any(~np.isfinite(self.insulin)) or np.any(self.insulin < 0):
            raise ValueError("insulin must be finite and non-negative")

    @property
    def n_days(self) -> int:
        return int(self.grid.day_index(self.grid.length - 1, self.utc_offset)) + 1

    def last_glucose_slot(self) -> int | None:
        present = np.flatnonzero(np.isfinite(self.glucose))
        return int(present[-1]) if present.size else None


@dataclass(frozen=True)
class Horizon:
    """Prediction horizon in minutes, one of 30 / 60 / 120."""

    ph_minutes: int
    step_seconds: int = 300

    def __post_init__(self):
        if self.ph_minutes not in HORIZON_MINUTES:
            raise ValueError(f"horizon must be one of {HORIZON_MINUTES} minutes")
        if (self.ph_minutes * 60) % self.step_seconds != 0:
            raise ValueError("horizon must be divisible by the grid step")

    @property
    def ph_steps(self) -> int:
        return (self.ph_minutes * 60) // self.step_seconds


@dataclass(frozen=True)
class Sample:
    """One supervised instance: a history window and the glucose value at
    the prediction horizon. ``history`` rows follow SIGNAL_NAMES order."""

    t: int
    history: np.ndarray          # [3, H]
    target: float                # NaN when unknown
    target_time: int
    imputed_flags: np.ndarray    # [3, H] bool


@dataclass(frozen=True)
class SampleSet:
    """Batch of samples stored column-wise for vectorized work.

    history is [n, 3, H] with row order (glucose, cho, insulin); target is
    NaN where the ground truth is unknown; imputed marks history cells that
    were filled by the missing-data recovery step.
    """

    issue_times: np.ndarray      # [n] int64
    history: np.ndarray          # [n, 3, H] float64
    target: np.ndarray           # [n] float64
    target_times: np.ndarray     # [n] int64
    imputed: np.ndarray          # [n, 3, H] bool
    horizon: Horizon
    utc_offset: int = 0

    def __post_init__(self):
        n = self.issue_times.shape[0]
        if self.history.shape[:2] != (n, 3) or self.history.ndim != 3:
            raise ValueError(f"history shape {self.history.shape} does not match n={n}")
        if self.target.shape != (n,) or self.target_times.shape != (n,):
            raise ValueError("target arrays must have one entry per sample")
        if self.imputed.shape != self.history.shape:
            raise ValueError("imputed flags must mirror the history shape")
        expected = self.issue_times + self.horizon.ph_minutes * 60
        if n and not np.array_equal(self.target_times, expected):
            raise ValueError("target_time must equal issue time + horizon")
        for name in ("issue_times", "history", "target", "target_times", "imputed"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    def __len__(self) -> int:
        return self.issue_times.shape[0]

    @property
    def n(self) -> int:
        return len(self)

    @property
    def window(self) -> int:
        return self.history.shape[2]

    def features(self) -> np.ndarray:
        """Flattened [n, 3*H] view: glucose cells, then cho, then insulin."""
        return self.history.reshape(len(self), -1)

    def take(self, index: np.ndarray) -> "SampleSet":
        return SampleSet(
            issue_times=self.issue_times[index],
            history=self.history[index],
            target=self.target[index],
            target_times=self.target_times[index],
            imputed=self.imputed[index],
            horizon=self.horizon,
            utc_offset=self.utc_offset,
        )

    def sample(self, i: int) -> Sample:
        return Sample(
            t=int(self.issue_times[i]),
            history=self.history[i],
            target=float(self.target[i]),
            target_time=int(self.target_times[i]),
            imputed_flags=self.imputed[i],
        )

    @staticmethod
    def empty(horizon: Horizon, window: int, utc_offset: int = 0) -> "SampleSet":
        return SampleSet(
            issue_times=np.empty(0, dtype=np.int64),
            history=np.empty((0, 3, window)),
            target=np.empty(0),
            target_times=np.empty(0, dtype=np.int64),
            imputed=np.zeros((0, 3, window), dtype=bool),
            horizon=horizon,
            utc_offset=utc_offset,
        )


@dataclass(frozen=True)
class FoldDays:
    train_days: frozenset
    valid_days: frozenset

    def __post_init__(self):
        if self.train_days & self.valid_days:
            raise ValueError("train and validation days overlap")


@dataclass(frozen=True)
class SplitPlan:
    """Day-level assignment: test days plus five train/validation folds.

    The five validation blocks partition the non-test days, so the folds
    realize cross-validation by permutation of one 80/20 split.
    """

    test_days: frozenset
    folds: tuple = ()

    def __post_init__(self):
        if len(self.folds) != 5:
            raise ValueError(f"expected 5 folds, got {len(self.folds)}")
        non_test = self.folds[0].train_days | self.folds[0].valid_days
        seen = []
        for fold in self.folds:
            if fold.train_days | fold.valid_days != non_test:
                raise ValueError("every fold must cover the same non-test days")
            if fold.train_days & self.test_days or fold.valid_days & self.test_days:
                raise ValueError("fold days must not intersect test days")
            seen.extend(fold.valid_days)
        if sorted(seen) != sorted(non_test):
            raise ValueError("validation blocks must partition the non-test days")

    @property
    def non_test_days(self) -> frozenset:
        return self.folds[0].train_days | self.folds[0].valid_days


@dataclass(frozen=True)
class PredictionSeries:
    """Time-aligned (truth, prediction) pairs on a 5-minute grid, in
    physical mg/dL units. Gaps are explicit NaN entries, never bridged."""

    grid: TimeGrid
    y_true: np.ndarray
    y_pred: np.ndarray
    horizon: Horizon

    def __post_init__(self):
        for name in ("y_true", "y_pred"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (self.grid.length,):
                raise ValueError(f"{name} must have one entry per grid slot")
            object.__setattr__(self, name, _frozen(arr))

    def complete(self) -> np.ndarray:
        """Mask of slots where both truth and prediction are present."""
        return np.isfinite(self.y_true) & np.isfinite(self.y_pred)

    @property
    def n_complete(self) -> int:
        return int(self.complete().sum())


def replace_record(record: PatientRecord, **changes) -> PatientRecord:
    """Functional update helper (records are frozen)."""
    return replace(record, **changes)
