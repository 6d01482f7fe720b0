"""Kernel regressors: epsilon-insensitive support vector regression solved
by SMO-style dual ascent, and exact Gaussian-process regression with a
dot-product kernel."""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from ..core import SampleSet
from .base import Axis, FitError, HyperparamSpace, Predictor

KKT_TOL = 1e-3
MAX_PASSES = 10_000


def rbf_kernel(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    """exp(-gamma * ||a - b||^2), rows of a against rows of b."""
    sq = (a * a).sum(axis=1)[:, None] + (b * b).sum(axis=1)[None, :] - 2.0 * (a @ b.T)
    return np.exp(-gamma * np.maximum(sq, 0.0))


def dot_kernel(a: np.ndarray, b: np.ndarray, sigma0_sq: float = 1.0) -> np.ndarray:
    return a @ b.T + sigma0_sq


class SvrModel(Predictor):
    """Direct horizon-ahead regression with the RBF kernel.

    The dual is optimized by maximal-violating-pair SMO over the stacked
    (alpha, alpha*) box, to KKT gap ``KKT_TOL`` or ``MAX_PASSES`` pair
    updates, whichever comes first.
    """

    kind = "svr"

    @classmethod
    def space(cls, profile="full"):
        return HyperparamSpace(axes=(
            Axis("gamma", scale="log10", lo=1e-4, hi=1e-2),
            Axis("C", scale="log10", lo=1e0, hi=1e3),
            Axis("epsilon", scale="log10", lo=1e-3, hi=1e0),
        ))

    def fit(self, train: SampleSet, valid: SampleSet):
        self._check_train(train)
        x = train.features()
        y = train.target
        gamma, c, eps = (float(self.hp[k]) for k in ("gamma", "C", "epsilon"))
        kmat = rbf_kernel(x, x, gamma)
        beta, bias, gap, iters = _smo_svr(kmat, y, c, eps, KKT_TOL, MAX_PASSES)
        sv = np.flatnonzero(beta != 0.0)
        self.x_sv_ = x[sv]
        self.beta_sv_ = beta[sv]
        self.bias_ = bias
        self.gamma_ = gamma
        self.kkt_gap_ = gap
        self.n_iter_ = iters
        return self

    def predict(self, samples: SampleSet) -> np.ndarray:
        if len(self.beta_sv_) == 0:
            preds = np.full(len(samples), self.bias_)
        else:
            k = rbf_kernel(samples.features(), self.x_sv_, self.gamma_)
            preds = k @ self.beta_sv_ + self.bias_
        return self._finite_or_raise(preds, samples)

    def _state(self):
        return {"x_sv_": self.x_sv_, "beta_sv_": self.beta_sv_,
                "bias_": self.bias_, "gamma_": self.gamma_}

    def _load_state(self, state):
        self.x_sv_ = np.atleast_2d(state["x_sv_"])
        self.beta_sv_ = np.atleast_1d(state["beta_sv_"])
        self.bias_ = float(state["bias_"])
        self.gamma_ = float(state["gamma_"])


def svr_dual_objective(kmat: np.ndarray, y: np.ndarray, eps: float,
                       alpha: np.ndarray, alpha_star: np.ndarray) -> float:
    """Dual objective (minimization form) at a feasible point."""
    beta = alpha - alpha_star
    return float(0.5 * beta @ kmat @ beta - y @ beta + eps * (alpha + alpha_star).sum())


def _smo_svr(kmat, y, c, eps, tol, max_passes):
    """Minimize the stacked SVR dual.

    Variables z = [alpha; alpha*] in [0, C]^(2n) with sum(alpha - alpha*) = 0.
    Each pass picks the maximal violating pair and takes the exact
    two-variable step. Returns (beta, bias, kkt_gap, n_iterations).
    """
    n = len(y)
    alpha = np.zeros(n)
    alpha_star = np.zeros(n)
    f = np.zeros(n)               # K @ beta, maintained incrementally
    # v = -sigma * gradient; optimality means max(v[up]) <= min(v[low]) + tol
    gap = np.inf
    it = 0
    while it < max_passes:
        resid = y - f
        v = np.concatenate([resid - eps, resid + eps])
        up = np.concatenate([alpha < c, alpha_star > 0.0])
        low = np.concatenate([alpha > 0.0, alpha_star < c])
        i = int(np.argmax(np.where(up, v, -np.inf)))
        j = int(np.argmin(np.where(low, v, np.inf)))
        gap = v[i] - v[j]
        if gap <= tol:
            break
        ii, jj = i % n, j % n
        eta = kmat[ii, ii] + kmat[jj, jj] - 2.0 * kmat[ii, jj]
        step = gap / eta if eta > 1e-12 else np.inf
        # box limits along the feasible direction
        step = min(step,
                   c - alpha[i] if i < n else alpha_star[i - n],
                   alpha[j] if j < n else c - alpha_star[j - n])
        if step <= 0.0:
            break
        # the feasible direction raises beta at ii and lowers it at jj,
        # whichever block the stacked indices fall in
        if i < n:
            alpha[i] += step
        else:
            alpha_star[i - n] -= step
        if j < n:
            alpha[j] -= step
        else:
            alpha_star[j - n] += step
        f += step * (kmat[:, ii] - kmat[:, jj])
        it += 1

    beta = alpha - alpha_star
    resid = y - f
    v = np.concatenate([resid - eps, resid + eps])
    z = np.concatenate([alpha, alpha_star])
    free = (z > 0.0) & (z < c)
    if free.any():
        bias = float(v[free].mean())
    else:
        up = np.concatenate([alpha < c, alpha_star > 0.0])
        low = np.concatenate([alpha > 0.0, alpha_star < c])
        bias = float((np.max(v[up]) + np.min(v[low])) / 2.0)
    return beta, bias, float(gap), it


class GpModel(Predictor):
    """Exact GP posterior mean, dot-product kernel with unit inhomogeneity,
    observation noise ``alpha`` on the diagonal."""

    kind = "gp"
    sigma0_sq = 1.0

    @classmethod
    def space(cls, profile="full"):
        return HyperparamSpace(axes=(
            Axis("alpha", scale="log10", lo=1e-3, hi=1e2, count=5),
        ))

    def fit(self, train: SampleSet, valid: SampleSet):
        self._check_train(train)
        x = train.features()
        noise = float(self.hp["alpha"])
        kmat = dot_kernel(x, x, self.sigma0_sq)
        kmat[np.diag_indices_from(kmat)] += noise
        try:
            factor = cho_factor(kmat, lower=True)
        except np.linalg.LinAlgError as exc:
            raise FitError(f"gp: kernel matrix not positive definite: {exc}") from exc
        self.x_train_ = x
        self.weights_ = cho_solve(factor, train.target)
        return self

    def predict(self, samples: SampleSet) -> np.ndarray:
        k_star = dot_kernel(samples.features(), self.x_train_, self.sigma0_sq)
        return self._finite_or_raise(k_star @ self.weights_, samples)

    def _state(self):
        return {"x_train_": self.x_train_, "weights_": self.weights_}
