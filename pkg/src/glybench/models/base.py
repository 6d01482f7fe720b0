"""Predictor abstraction shared by the nine models.

Models operate entirely in scaled feature space; unscaling happens in
post-processing. A fitted model is deterministic for fixed (data, hp, seed)
and serializable to a self-describing .npz blob.
"""

from __future__ import annotations

import json
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from ..core import SampleSet


class ModelError(RuntimeError):
    pass


class FitError(ModelError):
    pass


class DivergenceError(FitError):
    """Non-finite loss or state during training."""


class PredictionError(ModelError):
    pass


@dataclass(frozen=True)
class Axis:
    """One hyperparameter search axis.

    Either an explicit coarse point list (``points``) or bounds with a point
    count; ``scale`` decides linear vs log10 spacing and how refinement
    midpoints are taken. Frozen axes carry a single fixed value.
    """

    name: str
    scale: str = "log10"            # "linear" | "log10"
    lo: float | None = None
    hi: float | None = None
    count: int = 3
    points: tuple | None = None
    frozen_value: float | None = None
    integer: bool = False

    def __post_init__(self):
        if self.scale not in ("linear", "log10"):
            raise ValueError(f"unknown scale {self.scale!r}")
        if self.frozen_value is None and self.points is None:
            if self.lo is None or self.hi is None or not self.lo < self.hi:
                raise ValueError(f"axis {self.name}: need lo < hi")

    @property
    def frozen(self) -> bool:
        return self.frozen_value is not None

    def _snap(self, value: float) -> float:
        return float(round(value)) if self.integer else float(value)

    def coarse_points(self) -> tuple:
        if self.frozen:
            return (self.frozen_value,)
        if self.points is not None:
            raw = [self._snap(p) for p in self.points]
        elif self.scale == "log10":
            raw = [self._snap(v) for v in
                   np.logspace(np.log10(self.lo), np.log10(self.hi), self.count)]
        else:
            raw = [self._snap(v) for v in np.linspace(self.lo, self.hi, self.count)]
        out = []
        for v in raw:                     # integer snapping can collide
            if v not in out:
                out.append(v)
        return tuple(out)

    def midpoint(self, a: float, b: float) -> float:
        if self.scale == "log10":
            return self._snap(10 ** ((np.log10(a) + np.log10(b)) / 2.0))
        return self._snap((a + b) / 2.0)

    def refinement_candidates(self, best: float) -> tuple:
        """Midpoints toward the coarse-grid neighbors of ``best`` (inward
        only at grid boundaries), plus ``best`` itself."""
        grid = self.coarse_points()
        i = grid.index(best)
        cand = [best]
        if i > 0:
            cand.append(self.midpoint(grid[i - 1], best))
        if i < len(grid) - 1:
            cand.append(self.midpoint(best, grid[i + 1]))
        out = []
        for v in sorted(cand):
            if v not in out:
                out.append(v)
        return tuple(out)


@dataclass(frozen=True)
class HyperparamSpace:
    axes: tuple

    def __post_init__(self):
        names = [a.name for a in self.axes]
        if len(set(names)) != len(names):
            raise ValueError("duplicate axis names")

    def axis(self, name: str) -> Axis:
        for a in self.axes:
            if a.name == name:
                return a
        raise KeyError(name)

    @property
    def n_free(self) -> int:
        return sum(not a.frozen for a in self.axes)


class Predictor(ABC):
    """fit/predict interface. ``kind`` is the registry name."""

    kind: str = ""

    def __init__(self, hp: dict | None = None, seed: int = 0):
        self.hp = dict(hp or {})
        self.seed = int(seed)
        self.val_curve_: list[float] = []

    @classmethod
    def space(cls, profile: str = "full") -> HyperparamSpace:
        return HyperparamSpace(axes=())

    @classmethod
    def default_hp(cls, profile: str = "full") -> dict:
        hp = {}
        for axis in cls.space(profile).axes:
            pts = axis.coarse_points()
            hp[axis.name] = pts[len(pts) // 2]
        return hp

    @abstractmethod
    def fit(self, train: SampleSet, valid: SampleSet) -> "Predictor":
        ...

    @abstractmethod
    def predict(self, samples: SampleSet) -> np.ndarray:
        ...

    # ---- serialization -------------------------------------------------

    def _state(self) -> dict:
        """Arrays/scalars that define the fitted model."""
        return {}

    def _load_state(self, state: dict) -> None:
        for key, value in state.items():
            setattr(self, key, value)

    def save(self, path) -> None:
        meta = json.dumps({"kind": self.kind, "hp": self.hp, "seed": self.seed})
        arrays = {}
        for key, value in self._state().items():
            arrays[key] = np.asarray(value)
        np.savez(path, __meta__=np.frombuffer(meta.encode(), dtype=np.uint8), **arrays)

    def _check_train(self, train: SampleSet) -> None:
        if len(train) == 0:
            raise FitError(f"{self.kind}: empty training set")

    def _finite_or_raise(self, preds: np.ndarray, samples: SampleSet) -> np.ndarray:
        preds = np.asarray(preds, dtype=np.float64).reshape(-1)
        bad = np.flatnonzero(~np.isfinite(preds))
        if bad.size:
            t = int(samples.issue_times[bad[0]])
            raise PredictionError(
                f"{self.kind}: non-finite prediction for sample issued at t={t}")
        return preds


def load_model(path) -> Predictor:
    """Inverse of :meth:`Predictor.save`."""
    from . import create  # late import: registry lives in the package root

    with np.load(path) as blob:
        meta = json.loads(bytes(blob["__meta__"]).decode())
        state = {k: blob[k] for k in blob.files if k != "__meta__"}
    model = create(meta["kind"], meta["hp"], meta["seed"])
    unpacked = {}
    for key, value in state.items():
        unpacked[key] = value[()] if value.ndim == 0 else value
    model._load_state(unpacked)
    return model
