import numpy as np
import pytest

from glybench.core import Horizon, SampleSet


def windowed_sampleset(glucose, cho=None, insulin=None, horizon=None,
                       window=36, start=0, utc_offset=0):
    """Build a SampleSet by sliding a window over explicit signal arrays.

    Test-local construction, independent of the preprocessing pipeline, so
    model oracles do not lean on make_samples.
    """
    horizon = horizon or Horizon(30)
    glucose = np.asarray(glucose, dtype=float)
    n_slots = len(glucose)
    cho = np.zeros(n_slots) if cho is None else np.asarray(cho, dtype=float)
    insulin = np.zeros(n_slots) if insulin is None else np.asarray(insulin, dtype=float)
    step = horizon.step_seconds
    ph = horizon.ph_steps
    n = n_slots - window - ph + 1
    assert n >= 1, "series too short for the requested window/horizon"
    history = np.empty((n, 3, window))
    target = np.empty(n)
    for i in range(n):
        sl = slice(i, i + window)
        history[i, 0] = glucose[sl]
        history[i, 1] = cho[sl]
        history[i, 2] = insulin[sl]
        target[i] = glucose[i + window - 1 + ph]
    issue_times = start + (np.arange(n, dtype=np.int64) + window - 1) * step
    return SampleSet(
        issue_times=issue_times,
        history=history,
        target=target,
        target_times=issue_times + horizon.ph_minutes * 60,
        imputed=np.zeros((n, 3, window), dtype=bool),
        horizon=horizon,
        utc_offset=utc_offset,
    )


@pytest.fixture
def ar1_series():
    """Noiseless AR(1): g_t = 0.9 g_{t-1} + 5, decaying from 300 toward its
    fixed point at 50. The early transient provides the excitation OLS needs."""
    g = np.empty(120)
    g[0] = 300.0
    for t in range(1, 120):
        g[t] = 0.9 * g[t - 1] + 5.0
    return g


def central_difference_grads(loss_fn, params, h=1e-6):
    """Finite-difference oracle: perturb every parameter element."""
    grads = [np.zeros_like(p) for p in params]
    for pi, p in enumerate(params):
        flat = p.reshape(-1)
        for k in range(flat.size):
            keep = flat[k]
            flat[k] = keep + h
            up = loss_fn(params)
            flat[k] = keep - h
            down = loss_fn(params)
            flat[k] = keep
            grads[pi].reshape(-1)[k] = (up - down) / (2.0 * h)
    return grads


def relative_error(a, b, floor=1e-8):
    a, b = np.asarray(a), np.asarray(b)
    return np.max(np.abs(a - b) / np.maximum(floor, np.abs(a) + np.abs(b)))
