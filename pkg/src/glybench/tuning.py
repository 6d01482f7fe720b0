"""Coarse-to-fine hyperparameter search under 5-fold cross-validation.

A shallow full grid over each axis's coarse points is scored by mean
validation MSE, then the winner is refined one axis at a time with midpoint
candidates toward its coarse-grid neighbors (geometric midpoints on log
axes). Failed trials score +inf instead of aborting the search, so wide
log-ranges may legitimately diverge without losing the run.
"""

from __future__ import annotations

import itertools
import json
import time
from dataclasses import dataclass

import numpy as np

from .core import PredictionSeries, SampleSet, TimeGrid
from .models import ModelError, create
from .models.base import HyperparamSpace
from .preprocess import FoldData

N_FOLDS = 5


class SearchError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrialResult:
    hp: dict
    fold_mses: tuple
    mean_mse: float
    wall_time: float
    seed: int

    def to_json(self) -> str:
        return json.dumps({
            "hp": self.hp, "fold_mses": list(self.fold_mses),
            "mean_mse": self.mean_mse, "wall_time": self.wall_time,
            "seed": self.seed,
        }, sort_keys=True)


def cv_evaluate(kind: str, hp: dict, folds: list[FoldData], seed: int) -> TrialResult:
    """Train one model per fold (fold seed = seed + fold index) and record
    each fold's validation MSE in scaled space. A diverging fold marks the
    whole trial failed (+inf) rather than aborting."""
    started = time.perf_counter()
    mses = []
    for index, fold in enumerate(folds):
        try:
            model = create(kind, hp, seed + index).fit(fold.train, fold.valid)
            preds = model.predict(fold.valid)
            mse = float(np.mean((preds - fold.valid.target) ** 2))
            if not np.isfinite(mse):
                mse = np.inf
        except (ModelError, np.linalg.LinAlgError, FloatingPointError):
            mse = np.inf
        mses.append(mse)
    mean = float(np.mean(mses)) if all(np.isfinite(m) for m in mses) else np.inf
    return TrialResult(hp=dict(hp), fold_mses=tuple(mses), mean_mse=mean,
                       wall_time=time.perf_counter() - started, seed=seed)


def coarse_search(space: HyperparamSpace, evaluator) -> tuple[dict, list[TrialResult]]:
    """Full Cartesian grid over the coarse points of every axis.

    ``evaluator(hp) -> TrialResult``. Returns the argmin assignment; ties go
    to the lexicographically smallest hp vector (the grid is walked in
    ascending order, so first-strictly-best wins).
    """
    names = [a.name for a in space.axes]
    grids = [a.coarse_points() for a in space.axes]
    trials = []
    best_hp, best_mse = None, np.inf
    for values in itertools.product(*grids):
        hp = dict(zip(names, values))
        trial = evaluator(hp)
        trials.append(trial)
        if trial.mean_mse < best_mse:
            best_hp, best_mse = hp, trial.mean_mse
    if best_hp is None:
        failures = "; ".join(t.to_json() for t in trials)
        raise SearchError(f"all {len(trials)} coarse trials failed: {failures}")
    return best_hp, trials


def refine(space: HyperparamSpace, coarse_best: dict, coarse_best_mse: float,
           evaluator) -> tuple[dict, list[TrialResult]]:
    """Single-pass coordinate descent around the coarse winner.

    Per non-frozen axis, in declaration order: score the midpoints toward the
    coarse-grid neighbors (only the inward one at a boundary) and adopt the
    axis argmin before moving on. The result is never worse than the coarse
    best, since the incumbent is among the candidates.
    """
    current = dict(coarse_best)
    current_mse = coarse_best_mse
    trials = []
    for axis in space.axes:
        if axis.frozen:
            continue
        best_value, best_mse = current[axis.name], current_mse
        for value in axis.refinement_candidates(current[axis.name]):
            if value == current[axis.name]:
                continue
            hp = dict(current)
            hp[axis.name] = value
            trial = evaluator(hp)
            trials.append(trial)
            better = trial.mean_mse < best_mse
            tied_smaller = trial.mean_mse == best_mse and value < best_value
            if better or tied_smaller:
                best_value, best_mse = value, trial.mean_mse
        current[axis.name] = best_value
        current_mse = best_mse
    return current, trials


def search(kind: str, space: HyperparamSpace, folds: list[FoldData],
           seed: int) -> tuple[dict, list[TrialResult]]:
    """coarse_search + refine with a cv_evaluate-backed evaluator. Returns
    (final hp, full trial trace in evaluation order)."""
    evaluator = lambda hp: cv_evaluate(kind, hp, folds, seed)
    coarse_hp, trials = coarse_search(space, evaluator)
    coarse_mse = min(t.mean_mse for t in trials)
    final_hp, refine_trials = refine(space, coarse_hp, coarse_mse, evaluator)
    return final_hp, trials + refine_trials


def final_fit_and_test(kind: str, hp: dict, folds: list[FoldData],
                       test: SampleSet, seed: int) -> list[PredictionSeries]:
    """Fit the final hyperparameters on each fold and predict the common
    test set, unscaling each fold's predictions with that fold's scaler.
    Returns one PredictionSeries per fold."""
    if len(test) == 0:
        raise SearchError("empty test set")
    series = []
    for index, fold in enumerate(folds):
        model = create(kind, hp, seed + index).fit(fold.train, fold.valid)
        scaled = model.predict(fold.scaler.apply(test))
        y_pred = fold.scaler.invert_target(scaled)
        series.append(assemble_series(test, y_pred))
    return series


def assemble_series(test: SampleSet, y_pred: np.ndarray) -> PredictionSeries:
    """Reconstruct the 5-minute prediction timeline over the test period;
    slots without a sample stay as explicit gaps."""
    step = 300
    times = test.target_times
    start = int(times.min())
    length = int((times.max() - start) // step) + 1
    grid = TimeGrid(start=start, step=step, length=length)
    slots = ((times - start) // step).astype(np.int64)
    y_true_line = np.full(length, np.nan)
    y_pred_line = np.full(length, np.nan)
    y_true_line[slots] = test.target
    y_pred_line[slots] = y_pred
    return PredictionSeries(grid=grid, y_true=y_true_line, y_pred=y_pred_line,
                            horizon=test.horizon)
