"""Persistence baseline and the ordinary-least-squares family: polynomial
time-of-day regression and (recursive) autoregression with optional
exogenous inputs."""

from __future__ import annotations

import numpy as np

from ..core import CHO, DAY_SECONDS, GLUCOSE, INSULIN, SampleSet
from .base import Axis, FitError, HyperparamSpace, Predictor


class BaseModel(Predictor):
    """Predicts the glucose value at the time the prediction is issued.
    No training, no hyperparameters."""

    kind = "base"

    def fit(self, train, valid):
        return self

    def predict(self, samples: SampleSet) -> np.ndarray:
        return self._finite_or_raise(samples.history[:, GLUCOSE, -1], samples)


def _time_of_day(times: np.ndarray, utc_offset: int) -> np.ndarray:
    """Minutes since local midnight mapped to [-1, 1]."""
    minutes = ((times + utc_offset) % DAY_SECONDS) / 60.0
    return minutes / 720.0 - 1.0


class PolyModel(Predictor):
    """Least-squares polynomial in the time of day being predicted for.

    Fitted in a Chebyshev basis: plain monomials are numerically unusable at
    the upper end of the degree range.
    """

    kind = "poly"

    @classmethod
    def space(cls, profile="full"):
        return HyperparamSpace(axes=(
            Axis("degree", scale="log10", lo=1, hi=100, count=5, integer=True),
        ))

    def fit(self, train: SampleSet, valid: SampleSet):
        self._check_train(train)
        degree = int(self.hp["degree"])
        x = _time_of_day(train.target_times, train.utc_offset)
        design = np.polynomial.chebyshev.chebvander(x, degree)
        coef, *_ = np.linalg.lstsq(design, train.target, rcond=None)
        self.coef_ = coef
        return self

    def predict(self, samples: SampleSet) -> np.ndarray:
        x = _time_of_day(samples.target_times, samples.utc_offset)
        design = np.polynomial.chebyshev.chebvander(x, len(self.coef_) - 1)
        return self._finite_or_raise(design @ self.coef_, samples)

    def _state(self):
        return {"coef_": self.coef_}


class ArModel(Predictor):
    """One-step autoregression fitted by OLS, rolled forward recursively to
    the horizon, feeding each prediction back as input.

    coef_ is ordered most-recent-lag first; intercept_ is constant (the
    differencing and moving-average orders are frozen to zero).
    """

    kind = "ar"
    exogenous = False

    @classmethod
    def space(cls, profile="full"):
        return HyperparamSpace(axes=(
            Axis("p", scale="linear", lo=1, hi=12, count=5, integer=True),
        ))

    def _design(self, history: np.ndarray, p: int):
        """One-step pairs from each sample's window: predict the newest
        history value from the p values before it."""
        cols = [history[:, GLUCOSE, -1 - p:-1][:, ::-1]]          # recent first
        if self.exogenous:
            cols.append(history[:, CHO, -1 - p:-1][:, ::-1])
            cols.append(history[:, INSULIN, -1 - p:-1][:, ::-1])
        return np.hstack(cols), history[:, GLUCOSE, -1]

    def fit(self, train: SampleSet, valid: SampleSet):
        self._check_train(train)
        p = int(self.hp["p"])
        if not 1 <= p <= 12:
            raise FitError(f"{self.kind}: order p={p} outside [1, 12]")
        if p >= train.window:
            raise FitError(f"{self.kind}: order p={p} needs window > p")
        x, y = self._design(train.history, p)
        design = np.hstack([x, np.ones((len(x), 1))])
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        if not np.all(np.isfinite(coef)):
            raise FitError(f"{self.kind}: singular one-step regression")
        self.p_ = p
        self.coef_ = coef[:-1]
        self.intercept_ = float(coef[-1])
        return self

    def predict(self, samples: SampleSet) -> np.ndarray:
        p, steps = self.p_, samples.horizon.ph_steps
        window = samples.window
        n = len(samples)
        # extend each channel with the unknown future: predictions fill the
        # glucose extension; exogenous inputs beyond the issue time stay 0
        ext = np.concatenate(
            [samples.history, np.zeros((n, 3, steps))], axis=2)
        alpha = self.coef_[:p]
        for k in range(steps):
            pos = window + k
            recent = ext[:, GLUCOSE, pos - p:pos][:, ::-1]
            pred = recent @ alpha + self.intercept_
            if self.exogenous:
                pred = pred + ext[:, CHO, pos - p:pos][:, ::-1] @ self.coef_[p:2 * p]
                pred = pred + ext[:, INSULIN, pos - p:pos][:, ::-1] @ self.coef_[2 * p:]
            ext[:, GLUCOSE, pos] = pred
        return self._finite_or_raise(ext[:, GLUCOSE, -1], samples)

    def _state(self):
        return {"coef_": self.coef_, "intercept_": self.intercept_, "p_": self.p_}

    def _load_state(self, state):
        self.coef_ = state["coef_"]
        self.intercept_ = float(state["intercept_"])
        self.p_ = int(state["p_"])


class ArxModel(ArModel):
    """Autoregression with p lags of cho and insulin as exogenous inputs."""

    kind = "arx"
    exogenous = True
