"""Preprocessing pipeline: resampling to the 5-minute grid, sample-window
creation, day-based splitting with 5-fold cross-validation, missing-data
recovery, and per-fold standardization.

Pipeline order is split -> recover -> scale; the scaler is fitted per fold on
that fold's training portion only. History windows end at the issue time, so
nothing here can read past a sample's issue time except the supervised
target itself.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass

import numpy as np

from .core import (
    CHO, GLUCOSE, INSULIN,
    FoldDays, Horizon, PatientRecord, SampleSet, SplitPlan, TimeGrid,
)

TARGET_STEP = 300
DEFAULT_WINDOW = 36            # 3-hour history at 5-minute sampling
N_FOLDS = 5
DEFAULT_TEST_DAYS = 10


class SplitError(ValueError):
    pass


class ScalerError(ValueError):
    pass


def resample(record: PatientRecord) -> PatientRecord:
    """Aggregate a fine-grained record into 5-minute bins: mean of the
    glucose readings present in the bin (missing if none), sum of cho and
    insulin. Total cho/insulin are conserved exactly."""
    step = record.grid.step
    if TARGET_STEP % step != 0:
        raise ValueError(f"record step {step} does not divide {TARGET_STEP}")
    if step == TARGET_STEP:
        return record
    per_bin = TARGET_STEP // step
    n_bins = -(-record.grid.length // per_bin)
    pad = n_bins * per_bin - record.grid.length

    def binned(values, fill):
        return np.concatenate([values, np.full(pad, fill)]).reshape(n_bins, per_bin)

    g = binned(record.glucose, np.nan)
    counts = np.isfinite(g).sum(axis=1)
    sums = np.nansum(g, axis=1)
    glucose = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)

    return PatientRecord(
        patient_id=record.patient_id,
        source=record.source,
        grid=TimeGrid(start=record.grid.start, step=TARGET_STEP, length=n_bins),
        glucose=glucose,
        cho=binned(record.cho, 0.0).sum(axis=1),
        insulin=binned(record.insulin, 0.0).sum(axis=1),
        utc_offset=record.utc_offset,
    )


def make_samples(record: PatientRecord, horizon: Horizon,
                 window: int = DEFAULT_WINDOW) -> SampleSet:
    """One sample per slot that has a full history window and a target slot
    inside the record. Targets may still be missing at this stage."""
    if record.grid.step != TARGET_STEP:
        raise ValueError("samples are built on the 5-minute grid; resample first")
    ph = horizon.ph_steps
    length = record.grid.length
    n = length - ph - window + 1
    if n <= 0:
        warnings.warn(
            f"record too short for window={window} and horizon={horizon.ph_minutes}min; "
            "returning empty sample set", stacklevel=2)
        return SampleSet.empty(horizon, window, record.utc_offset)

    slots = np.arange(window - 1, length - ph)
    history = np.stack([
        np.lib.stride_tricks.sliding_window_view(sig, window)[:n]
        for sig in (record.glucose, record.cho, record.insulin)
    ], axis=1)
    issue_times = record.grid.start + slots.astype(np.int64) * TARGET_STEP
    return SampleSet(
        issue_times=issue_times,
        history=history.copy(),
        target=record.glucose[slots + ph].copy(),
        target_times=issue_times + ph * TARGET_STEP,
        imputed=np.zeros((n, 3, window), dtype=bool),
        horizon=horizon,
        utc_offset=record.utc_offset,
    )


def split(record: PatientRecord, samples: SampleSet,
          test_days: int = DEFAULT_TEST_DAYS,
          anchor: str = "last-glucose"):
    """Assign samples (by the day of their issue time) to the test period —
    the last ``test_days`` calendar days — and to 5 cross-validation folds
    built from contiguous blocks of the remaining days.

    ``anchor`` selects whether the test period counts back from the day of
    the last glucose reading or from the last grid timestamp.

    Returns (SplitPlan, [(train, valid)] * 5, test) as SampleSets.
    """
    grid, off = record.grid, record.utc_offset
    if anchor == "last-glucose":
        last = record.last_glucose_slot()
        if last is None:
            raise SplitError("record has no glucose readings")
    elif anchor == "last-timestamp":
        last = grid.length - 1
    else:
        raise SplitError(f"unknown anchor {anchor!r}")
    anchor_day = grid.day_index(last, off)
    first_test_day = anchor_day - test_days + 1
    if first_test_day < N_FOLDS:
        raise SplitError(
            f"record spans {anchor_day + 1} days up to the anchor; need more than "
            f"{test_days + N_FOLDS - 1} to carve {test_days} test days and {N_FOLDS} folds")

    non_test = np.arange(first_test_day)
    blocks = np.array_split(non_test, N_FOLDS)
    all_days = frozenset(range(grid.day_index(grid.length - 1, off) + 1))
    test_set = frozenset(d for d in all_days if d >= first_test_day)
    folds = tuple(
        FoldDays(train_days=frozenset(non_test) - frozenset(block),
                 valid_days=frozenset(block))
        for block in blocks
    )
    plan = SplitPlan(test_days=test_set, folds=folds)

    sample_days = grid.day_index((samples.issue_times - grid.start) // TARGET_STEP, off)
    test_samples = samples.take(np.flatnonzero(sample_days >= first_test_day))
    fold_sets = []
    for fold in folds:
        valid_mask = np.isin(sample_days, sorted(fold.valid_days))
        train_mask = np.isin(sample_days, sorted(fold.train_days))
        fold_sets.append((samples.take(np.flatnonzero(train_mask)),
                          samples.take(np.flatnonzero(valid_mask))))
    return plan, fold_sets, test_samples


@dataclass(frozen=True)
class RecoveryStats:
    dropped_missing_target: int
    dropped_sparse_history: int
    imputed_cells: int


def recover_missing(samples: SampleSet) -> tuple[SampleSet, RecoveryStats]:
    """Fill glucose-history gaps and drop samples without ground truth.

    Interior gaps are linearly interpolated between the bracketing readings;
    gaps at the recent edge are linearly extrapolated from the last two known
    readings; leading-edge gaps extend the earliest reading backward.
    Samples with a missing target, or with fewer than two known glucose
    readings, are dropped. Idempotent; only the sample's own history is read.
    """
    n, _, window = samples.history.shape
    history = samples.history.copy()
    imputed = samples.imputed.copy()
    keep = np.ones(n, dtype=bool)
    dropped_target = dropped_sparse = filled = 0

    target_missing = ~np.isfinite(samples.target)
    positions = np.arange(window)
    for i in range(n):
        if target_missing[i]:
            keep[i] = False
            dropped_target += 1
            continue
        g = history[i, GLUCOSE]
        known = np.isfinite(g)
        if known.all():
            continue
        if known.sum() < 2:
            keep[i] = False
            dropped_sparse += 1
            continue
        idx = np.flatnonzero(known)
        gaps = ~known
        filled += int(gaps.sum())
        # np.interp holds edge values flat, which is the leading-edge rule;
        # the recent edge is then overwritten with the two-point extrapolation
        g[gaps] = np.interp(positions[gaps], idx, g[idx])
        last = idx[-1]
        if last < window - 1:
            slope = (g[last] - g[idx[-2]]) / (last - idx[-2])
            g[last + 1:] = g[last] + slope * np.arange(1, window - last)
        imputed[i, GLUCOSE] |= gaps

    out = SampleSet(
        issue_times=samples.issue_times[keep],
        history=history[keep],
        target=samples.target[keep],
        target_times=samples.target_times[keep],
        imputed=imputed[keep],
        horizon=samples.horizon,
        utc_offset=samples.utc_offset,
    )
    return out, RecoveryStats(dropped_target, dropped_sparse, filled)


@dataclass(frozen=True)
class Scaler:
    """Per-feature standardization statistics fitted on a training set.

    Degenerate features (zero spread) keep std 1 so they map to 0, and are
    flagged.
    """

    history_mean: np.ndarray    # [3, H]
    history_std: np.ndarray     # [3, H]
    target_mean: float
    target_std: float
    degenerate: np.ndarray      # [3, H] bool
    target_degenerate: bool

    def apply(self, samples: SampleSet) -> SampleSet:
        history = (samples.history - self.history_mean) / self.history_std
        target = (samples.target - self.target_mean) / self.target_std
        return SampleSet(
            issue_times=samples.issue_times, history=history, target=target,
            target_times=samples.target_times, imputed=samples.imputed,
            horizon=samples.horizon, utc_offset=samples.utc_offset,
        )

    def invert_target(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values) * self.target_std + self.target_mean


def fit_scaler(train: SampleSet, eps: float = 1e-12) -> Scaler:
    if len(train) == 0:
        raise ScalerError("cannot fit a scaler on an empty training set")
    mean = train.history.mean(axis=0)
    std = train.history.std(axis=0)
    degenerate = std <= eps
    if degenerate.any():
        warnings.warn(f"{int(degenerate.sum())} degenerate history feature(s); "
                      "their std is treated as 1", stacklevel=2)
    std = np.where(degenerate, 1.0, std)
    t_std = float(train.target.std())
    t_degenerate = t_std <= eps
    if t_degenerate:
        warnings.warn("degenerate target feature; std treated as 1", stacklevel=2)
        t_std = 1.0
    return Scaler(
        history_mean=mean, history_std=std,
        target_mean=float(train.target.mean()), target_std=t_std,
        degenerate=degenerate, target_degenerate=t_degenerate,
    )


@dataclass(frozen=True)
class FoldData:
    """One cross-validation fold, already standardized with its own scaler."""

    train: SampleSet
    valid: SampleSet
    scaler: Scaler


def build_folds(record: PatientRecord, horizon: Horizon,
                window: int = DEFAULT_WINDOW,
                test_days: int = DEFAULT_TEST_DAYS,
                anchor: str = "last-glucose"):
    """Run the full preprocessing chain for one (patient, horizon) cell.

    Returns (SplitPlan, [FoldData] * 5, test SampleSet). The test set is
    recovered (imputed histories, no missing targets) but unscaled; each
    fold scales it with its own scaler at prediction time.
    """
    record = resample(record)
    samples = make_samples(record, horizon, window)
    plan, fold_sets, test_raw = split(record, samples, test_days, anchor)
    folds = []
    for train_raw, valid_raw in fold_sets:
        train, _ = recover_missing(train_raw)
        valid, _ = recover_missing(valid_raw)
        scaler = fit_scaler(train)
        folds.append(FoldData(train=scaler.apply(train),
                              valid=scaler.apply(valid), scaler=scaler))
    test, _ = recover_missing(test_raw)
    return plan, folds, test


def write_samples_csv(samples: SampleSet) -> bytes:
    """Fold artifact layout: one row per sample — issue time, the 108
    history cells (glucose, cho, insulin blocks), and the target."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    window = samples.window
    header = ["t"]
    for name in ("g", "c", "i"):
        header += [f"{name}{k:02d}" for k in range(window)]
    writer.writerow(header + ["target"])
    flat = samples.features()
    for i in range(len(samples)):
        row = [int(samples.issue_times[i])]
        row += [repr(float(v)) for v in flat[i]]
        row.append(repr(float(samples.target[i])))
        writer.writerow(row)
    return out.getvalue().encode()


def read_samples_csv(data: bytes, horizon: Horizon, utc_offset: int = 0) -> SampleSet:
    reader = csv.reader(io.StringIO(data.decode()))
    header = next(reader)
    window = (len(header) - 2) // 3
    times, rows, targets = [], [], []
    for row in reader:
        times.append(int(row[0]))
        rows.append([float(v) for v in row[1:-1]])
        targets.append(float(row[-1]))
    n = len(times)
    issue_times = np.asarray(times, dtype=np.int64)
    return SampleSet(
        issue_times=issue_times,
        history=np.asarray(rows).reshape(n, 3, window),
        target=np.asarray(targets),
        target_times=issue_times + horizon.ph_minutes * 60,
        imputed=np.zeros((n, 3, window), dtype=bool),
        horizon=horizon,
        utc_offset=utc_offset,
    )
