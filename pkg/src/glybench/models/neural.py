"""Neural predictors written directly in numpy: extreme learning machine,
SELU feed-forward network, and a two-layer LSTM. Gradients are hand-derived
and checked against finite differences in the test suite; no autodiff
framework is involved.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve
from scipy.special import expit

from ..core import SampleSet
from .base import Axis, DivergenceError, HyperparamSpace, Predictor

SELU_LAMBDA = 1.0507009873554804934193349852946
SELU_ALPHA = 1.6732632423543772848170429916717


class ElmModel(Predictor):
    """Single random hidden layer (logistic units), ridge-regressed output
    weights. Input weights and biases are drawn once from the seeded
    uniform(-1, 1) and never trained."""

    kind = "elm"

    WIDTHS = {"full": (2000, 5000, 10000, 20000), "desk": (200, 500, 1000, 2000)}

    @classmethod
    def space(cls, profile="full"):
        return HyperparamSpace(axes=(
            Axis("width", scale="log10", points=cls.WIDTHS[profile], integer=True),
            Axis("l2", scale="log10", lo=1e0, hi=1e3),
        ))

    def fit(self, train: SampleSet, valid: SampleSet):
        self._check_train(train)
        width = int(self.hp["width"])
        lam = float(self.hp["l2"])
        rng = np.random.default_rng(self.seed)
        x = train.features()
        d = x.shape[1]
        self.w_in_ = rng.uniform(-1.0, 1.0, size=(d, width))
        self.b_in_ = rng.uniform(-1.0, 1.0, size=width)
        h = expit(x @ self.w_in_ + self.b_in_)
        y = train.target
        if width <= len(train):
            gram = h.T @ h
            gram[np.diag_indices_from(gram)] += lam
            self.w_out_ = solve(gram, h.T @ y, assume_a="pos")
        else:
            # wide layer: dual ridge keeps the solve at n x n
            gram = h @ h.T
            gram[np.diag_indices_from(gram)] += lam
            self.w_out_ = h.T @ solve(gram, y, assume_a="pos")
        return self

    def predict(self, samples: SampleSet) -> np.ndarray:
        h = expit(samples.features() @ self.w_in_ + self.b_in_)
        return self._finite_or_raise(h @ self.w_out_, samples)

    def _state(self):
        return {"w_in_": self.w_in_, "b_in_": self.b_in_, "w_out_": self.w_out_}


def selu(z: np.ndarray) -> np.ndarray:
    return SELU_LAMBDA * np.where(z > 0, z, SELU_ALPHA * np.expm1(z))


def selu_grad(z: np.ndarray) -> np.ndarray:
    return SELU_LAMBDA * np.where(z > 0, 1.0, SELU_ALPHA * np.exp(z))


class Adam:
    """Adam with bias correction; state follows the fixed parameter order."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: list[np.ndarray] | None = None
        self.v: list[np.ndarray] | None = None

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        correct1 = 1.0 - self.beta1 ** self.t
        correct2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / correct1) / (np.sqrt(v / correct2) + self.eps)


class _EarlyStopper:
    """Tracks the best validation MSE and its parameter snapshot."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = np.inf
        self.since = 0
        self.snapshot = None

    def update(self, value: float, params: list[np.ndarray]) -> bool:
        """Record an epoch result; returns True when training should stop."""
        if value < self.best:
            self.best = value
            self.snapshot = [p.copy() for p in params]
            self.since = 0
        else:
            self.since += 1
        return self.since >= self.patience


def _mse(pred: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean((pred - y) ** 2))


class FfnnModel(Predictor):
    """Dense 108 -> 128 -> 64 -> 32 -> 16 -> 1 network, SELU hidden
    activations, MSE loss, Adam in mini-batches of 1500, early stopping on
    the validation MSE (snapshot with the minimum is kept)."""

    kind = "ffnn"
    hidden = (128, 64, 32, 16)

    @classmethod
    def space(cls, profile="full"):
        return HyperparamSpace(axes=(
            Axis("lr", scale="log10", lo=1e-4, hi=1e-2),
            Axis("batch", frozen_value=1500),
            Axis("patience", frozen_value=100),
            Axis("max_epochs", frozen_value=500 if profile == "full" else 100),
            Axis("l2", frozen_value=0.0),
        ))

    def _init_params(self, d_in: int, rng) -> list[np.ndarray]:
        # LeCun normal, as the self-normalizing property requires
        params = []
        for d_out in (*self.hidden, 1):
            params.append(rng.normal(0.0, np.sqrt(1.0 / d_in), size=(d_in, d_out)))
            params.append(np.zeros(d_out))
            d_in = d_out
        return params

    @staticmethod
    def _forward(params, x):
        caches = []
        a = x
        n_layers = len(params) // 2
        for layer in range(n_layers):
            w, b = params[2 * layer], params[2 * layer + 1]
            z = a @ w + b
            caches.append((a, z))
            a = selu(z) if layer < n_layers - 1 else z
        return a[:, 0], caches

    @staticmethod
    def _backward(params, caches, dpred, l2):
        grads = [None] * len(params)
        n_layers = len(params) // 2
        d = dpred[:, None]
        for layer in reversed(range(n_layers)):
            a, z = caches[layer]
            dz = d if layer == n_layers - 1 else d * selu_grad(z)
            w = params[2 * layer]
            grads[2 * layer] = a.T @ dz + l2 * w
            grads[2 * layer + 1] = dz.sum(axis=0)
            d = dz @ w.T
        return grads

    def loss_and_grads(self, params, x, y, l2=0.0):
        pred, caches = self._forward(params, x)
        loss = _mse(pred, y)
        dpred = 2.0 * (pred - y) / len(y)
        return loss, self._backward(params, caches, dpred, l2)

    def fit(self, train: SampleSet, valid: SampleSet):
        self._check_train(train)
        rng = np.random.default_rng(self.seed)
        x, y = train.features(), train.target
        xv = valid.features() if len(valid) else None
        params = self._init_params(x.shape[1], rng)
        optimizer = Adam(float(self.hp["lr"]))
        stopper = _EarlyStopper(int(self.hp["patience"]))
        batch = int(self.hp["batch"])
        l2 = float(self.hp["l2"])
        self.val_curve_ = []
        for _ in range(int(self.hp["max_epochs"])):
            order = rng.permutation(len(y))
            for lo in range(0, len(y), batch):
                idx = order[lo:lo + batch]
                loss, grads = self.loss_and_grads(params, x[idx], y[idx], l2)
                if not np.isfinite(loss):
                    raise DivergenceError(f"ffnn: non-finite training loss (lr={self.hp['lr']})")
                optimizer.step(params, grads)
            if xv is None:
                continue
            val = _mse(self._forward(params, xv)[0], valid.target)
            self.val_curve_.append(val)
            if stopper.update(val, params):
                break
        self.params_ = stopper.snapshot if stopper.snapshot is not None else params
        return self

    def predict(self, samples: SampleSet) -> np.ndarray:
        pred, _ = self._forward(self.params_, samples.features())
        return self._finite_or_raise(pred, samples)

    def _state(self):
        return {f"param_{i}": p for i, p in enumerate(self.params_)}

    def _load_state(self, state):
        self.params_ = [state[f"param_{i}"] for i in range(len(state))]


def _lstm_layer_forward(params, x_seq):
    """x_seq [n, T, d] -> (h_seq [n, T, h], caches). Gate order i, f, g, o."""
    wx, wh, b = params
    n, steps, _ = x_seq.shape
    h_units = wh.shape[0]
    h = np.zeros((n, h_units))
    c = np.zeros((n, h_units))
    h_seq = np.empty((n, steps, h_units))
    caches = []
    for t in range(steps):
        xt = x_seq[:, t, :]
        z = xt @ wx + h @ wh + b
        i = expit(z[:, :h_units])
        f = expit(z[:, h_units:2 * h_units])
        g = np.tanh(z[:, 2 * h_units:3 * h_units])
        o = expit(z[:, 3 * h_units:])
        c_prev = c
        c = f * c_prev + i * g
        tanh_c = np.tanh(c)
        h_prev = h
        h = o * tanh_c
        h_seq[:, t, :] = h
        caches.append((xt, h_prev, c_prev, i, f, g, o, tanh_c))
    return h_seq, caches


def _lstm_layer_backward(params, caches, dh_seq):
    """Backprop through time for one layer. dh_seq holds the gradient flowing
    into each step's hidden output; returns (grads, dx_seq)."""
    wx, wh, b = params
    h_units = wh.shape[0]
    n, steps = dh_seq.shape[0], dh_seq.shape[1]
    d_wx = np.zeros_like(wx)
    d_wh = np.zeros_like(wh)
    d_b = np.zeros_like(b)
    dx_seq = np.empty((n, steps, wx.shape[0]))
    dh_next = np.zeros((n, h_units))
    dc_next = np.zeros((n, h_units))
    for t in reversed(range(steps)):
        xt, h_prev, c_prev, i, f, g, o, tanh_c = caches[t]
        dh = dh_seq[:, t, :] + dh_next
        do = dh * tanh_c
        dc = dc_next + dh * o * (1.0 - tanh_c ** 2)
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        dc_next = dc * f
        dz = np.concatenate([
            di * i * (1.0 - i),
            df * f * (1.0 - f),
            dg * (1.0 - g ** 2),
            do * o * (1.0 - o),
        ], axis=1)
        d_wx += xt.T @ dz
        d_wh += h_prev.T @ dz
        d_b += dz.sum(axis=0)
        dx_seq[:, t, :] = dz @ wx.T
        dh_next = dz @ wh.T
    return [d_wx, d_wh, d_b], dx_seq


class LstmModel(Predictor):
    """Two stacked LSTM layers over the 36x3 history sequence, linear head
    on the final step. Adam with small batches, L2 penalty on the weight
    matrices (not biases), early stopping."""

    kind = "lstm"

    HIDDEN = {"full": 256, "desk": 32}

    @classmethod
    def space(cls, profile="full"):
        return HyperparamSpace(axes=(
            Axis("lr", scale="log10", lo=1e-4, hi=1e-3),
            Axis("hidden", frozen_value=cls.HIDDEN[profile]),
            Axis("batch", frozen_value=50),
            Axis("patience", frozen_value=50),
            Axis("max_epochs", frozen_value=500 if profile == "full" else 100),
            Axis("l2", frozen_value=1e-4),
        ))

    @staticmethod
    def _sequence(samples: SampleSet) -> np.ndarray:
        # [n, 3, T] history -> time-major [n, T, 3]
        return np.ascontiguousarray(samples.history.transpose(0, 2, 1))

    def _init_params(self, d_in: int, h_units: int, rng) -> list[np.ndarray]:
        params = []
        for d in (d_in, h_units):
            k = 1.0 / np.sqrt(h_units)
            wx = rng.uniform(-k, k, size=(d, 4 * h_units))
            wh = rng.uniform(-k, k, size=(h_units, 4 * h_units))
            b = np.zeros(4 * h_units)
            b[h_units:2 * h_units] = 1.0          # forget gate opens by default
            params += [wx, wh, b]
        k = 1.0 / np.sqrt(h_units)
        params.append(rng.uniform(-k, k, size=(h_units, 1)))
        params.append(np.zeros(1))
        return params

    @staticmethod
    def _forward(params, x_seq):
        h1, caches1 = _lstm_layer_forward(params[0:3], x_seq)
        h2, caches2 = _lstm_layer_forward(params[3:6], h1)
        pred = (h2[:, -1, :] @ params[6] + params[7])[:, 0]
        return pred, (caches1, caches2, h2)

    def loss_and_grads(self, params, x_seq, y, l2=0.0):
        pred, (caches1, caches2, h2) = self._forward(params, x_seq)
        loss = _mse(pred, y)
        dpred = (2.0 * (pred - y) / len(y))[:, None]
        d_wo = h2[:, -1, :].T @ dpred
        d_bo = dpred.sum(axis=0)
        dh2 = np.zeros_like(h2)
        dh2[:, -1, :] = dpred @ params[6].T
        g2, dh1 = _lstm_layer_backward(params[3:6], caches2, dh2)
        g1, _ = _lstm_layer_backward(params[0:3], caches1, dh1)
        grads = g1 + g2 + [d_wo, d_bo]
        if l2:
            for k in (0, 1, 3, 4, 6):             # weight matrices only
                grads[k] = grads[k] + l2 * params[k]
        return loss, grads

    def fit(self, train: SampleSet, valid: SampleSet):
        self._check_train(train)
        rng = np.random.default_rng(self.seed)
        x, y = self._sequence(train), train.target
        xv = self._sequence(valid) if len(valid) else None
        params = self._init_params(x.shape[2], int(self.hp["hidden"]), rng)
        optimizer = Adam(float(self.hp["lr"]))
        stopper = _EarlyStopper(int(self.hp["patience"]))
        batch = int(self.hp["batch"])
        l2 = float(self.hp["l2"])
        self.val_curve_ = []
        for _ in range(int(self.hp["max_epochs"])):
            order = rng.permutation(len(y))
            for lo in range(0, len(y), batch):
                idx = order[lo:lo + batch]
                loss, grads = self.loss_and_grads(params, x[idx], y[idx], l2)
                if not np.isfinite(loss):
                    raise DivergenceError(f"lstm: non-finite training loss (lr={self.hp['lr']})")
                optimizer.step(params, grads)
            if xv is None:
                continue
            val = _mse(self._forward(params, xv)[0], valid.target)
            self.val_curve_.append(val)
            if stopper.update(val, params):
                break
        self.params_ = stopper.snapshot if stopper.snapshot is not None else params
        return self

    def predict(self, samples: SampleSet) -> np.ndarray:
        pred, _ = self._forward(self.params_, self._sequence(samples))
        return self._finite_or_raise(pred, samples)

    def _state(self):
        return {f"param_{i}": p for i, p in enumerate(self.params_)}

    def _load_state(self, state):
        self.params_ = [state[f"param_{i}"] for i in range(len(state))]
