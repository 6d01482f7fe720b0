"""Reproducible synthetic T1DM patient data.

Daily scenarios follow the randomized three-meal protocol (Gaussian meal
times around 7h/13h/20h with 0.5 h^2 variance, Gaussian carb quantities
around 40/85/60 g with variance 0.5x the mean, and a bolus at each meal
start drawn uniformly in 0.7..1.3 times the carb-ratio-optimal dose).

Glucose dynamics come from a minimal-model ODE with a two-compartment gut,
integrated with fixed-step RK4 at 60 s. This is a stand-in for licensed
full-scale metabolic simulators: its absolute numbers are not reference
values, only its scenario statistics and qualitative responses (equilibrium,
meal rise, bolus dip) are pinned by tests.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .core import DAY_SECONDS, PatientRecord, TimeGrid

MEAL_HOUR_MEANS = (7.0, 13.0, 20.0)
MEAL_CARB_MEANS = (40.0, 85.0, 60.0)
MEAL_TIME_VARIANCE_H2 = 0.5
MEAL_DURATION_S = 15 * 60
MIN_CARBS_G = 5.0
BOLUS_JITTER = (0.7, 1.3)
CGM_NOISE_SIGMA = 2.0          # mg/dL, per 1-minute sample
GLUCOSE_RANGE = (20.0, 600.0)  # recorded channel clamp, mg/dL

#: salt mixed with the patient index when deriving per-patient parameters
_PATIENT_SALT = 0x67C0


class SimulationDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class Meal:
    start: int        # seconds since epoch
    carbs: float      # grams
    duration_s: int = MEAL_DURATION_S


@dataclass(frozen=True)
class Bolus:
    time: int
    dose: float       # insulin units


@dataclass(frozen=True)
class Scenario:
    days: int
    start: int                 # midnight of day 0
    meals: tuple               # 3 per day
    boluses: tuple             # one per meal
    basal_rate: float          # units/hour, constant

    def __post_init__(self):
        if len(self.meals) != 3 * self.days or len(self.boluses) != len(self.meals):
            raise ValueError("scenario must carry 3 meals and 3 boluses per day")
        if any(m.carbs <= 0 for m in self.meals):
            raise ValueError("meal carbs must be positive")
        if any(b.dose < 0 for b in self.boluses):
            raise ValueError("bolus doses must be non-negative")

    def to_json(self) -> str:
        return json.dumps({
            "days": self.days,
            "start": self.start,
            "basal_rate": self.basal_rate,
            "meals": [{"start": m.start, "carbs": m.carbs, "duration_s": m.duration_s}
                      for m in self.meals],
            "boluses": [{"time": b.time, "dose": b.dose} for b in self.boluses],
        }, indent=2)

    @staticmethod
    def from_json(text: str) -> "Scenario":
        raw = json.loads(text)
        return Scenario(
            days=raw["days"], start=raw["start"], basal_rate=raw["basal_rate"],
            meals=tuple(Meal(m["start"], m["carbs"], m["duration_s"]) for m in raw["meals"]),
            boluses=tuple(Bolus(b["time"], b["dose"]) for b in raw["boluses"]),
        )


@dataclass(frozen=True)
class VirtualPatientParams:
    """Minimal-model parameters. Rate constants are per minute; v_g and v_i
    are distribution volumes (dL and mL); g_b/i_b the basal glucose (mg/dL)
    and insulin (uU/mL) levels."""

    carb_ratio: float = 10.0     # g per insulin unit
    basal_rate: float = 1.0      # units/hour
    p1: float = 0.0337
    p2: float = 0.0209
    p3: float = 7.5e-6
    n: float = 0.23
    k_abs: float = 0.035
    f: float = 0.9
    v_g: float = 1.6 * 70.0      # dL (1.6 dL/kg x 70 kg)
    v_i: float = 12_000.0        # mL
    g_b: float = 110.0
    i_b: float = 15.0
    g_init: float = 110.0

    def __post_init__(self):
        for name in ("carb_ratio", "basal_rate", "p1", "p2", "p3", "n",
                     "k_abs", "f", "v_g", "v_i", "g_b", "i_b", "g_init"):
            if getattr(self, name) <= 0:
                raise ValueError(f"parameter {name} must be strictly positive")
        if not 80.0 <= self.g_b <= 140.0:
            raise ValueError(f"basal glucose {self.g_b} outside [80, 140] mg/dL")


DEFAULT_PARAMS = VirtualPatientParams()


def params_for_patient(index: int, base: VirtualPatientParams = DEFAULT_PARAMS,
                       jitter: float = 0.2) -> VirtualPatientParams:
    """Per-patient parameter set: the defaults jittered by +-20%, seeded from
    the patient index alone so cohorts are stable across runs."""
    rng = np.random.default_rng(np.random.SeedSequence([_PATIENT_SALT, index]))
    def j(value, lo=None, hi=None):
        v = value * rng.uniform(1.0 - jitter, 1.0 + jitter)
        if lo is not None:
            v = max(v, lo)
        if hi is not None:
            v = min(v, hi)
        return v
    g_b = j(base.g_b, 80.0, 140.0)
    return replace(
        base,
        carb_ratio=j(base.carb_ratio),
        basal_rate=j(base.basal_rate),
        p1=j(base.p1), p2=j(base.p2), p3=j(base.p3), n=j(base.n),
        k_abs=j(base.k_abs), f=j(base.f, None, 1.0),
        v_g=j(base.v_g), v_i=j(base.v_i),
        g_b=g_b, g_init=g_b,
    )


def generate_scenario(days: int, params: VirtualPatientParams, seed,
                      start: int = 0) -> Scenario:
    """Randomized daily meal/bolus schedule. Deterministic for a fixed seed;
    the draw order is (time, carbs, bolus factor) per meal, meals in
    breakfast/lunch/dinner order, day by day."""
    if days < 1:
        raise ValueError(f"days must be >= 1, got {days}")
    if start % DAY_SECONDS != 0:
        raise ValueError("scenario start must be a midnight")
    rng = np.random.default_rng(seed)
    sigma_h = np.sqrt(MEAL_TIME_VARIANCE_H2)
    meals, boluses = [], []
    for day in range(days):
        midnight = start + day * DAY_SECONDS
        for hour_mean, carb_mean in zip(MEAL_HOUR_MEANS, MEAL_CARB_MEANS):
            minute = round(rng.normal(hour_mean, sigma_h) * 60.0)
            minute = min(max(minute, 0), 24 * 60 - 15)
            carbs = max(rng.normal(carb_mean, np.sqrt(0.5 * carb_mean)), MIN_CARBS_G)
            factor = rng.uniform(*BOLUS_JITTER)
            meal = Meal(start=midnight + minute * 60, carbs=float(carbs))
            meals.append(meal)
            boluses.append(Bolus(time=meal.start, dose=float(factor * carbs / params.carb_ratio)))
    return Scenario(days=days, start=start, meals=tuple(meals),
                    boluses=tuple(boluses), basal_rate=params.basal_rate)


def deriv(state, u_meal, u_ins, p: VirtualPatientParams):
    """Right-hand side of the metabolic ODE (time unit: minutes).

    state = (G, X, I, q1, q2): plasma glucose mg/dL, remote insulin action
    1/min, plasma insulin uU/mL, gut compartments mg. u_meal in mg/min,
    u_ins in uU/min above basal.
    """
    g, x, i, q1, q2 = state
    ra = p.f * p.k_abs * q2
    return (
        -p.p1 * (g - p.g_b) - x * g + ra / p.v_g,
        -p.p2 * x + p.p3 * (i - p.i_b),
        -p.n * (i - p.i_b) + u_ins / p.v_i,
        -p.k_abs * q1 + u_meal,
        p.k_abs * (q1 - q2),
    )


def _rk4_step(state, u_meal, u_ins, p, h):
    # inputs are zero-order held across the step, so the RHS is smooth within it
    k1 = deriv(state, u_meal, u_ins, p)
    s2 = tuple(s + 0.5 * h * k for s, k in zip(state, k1))
    k2 = deriv(s2, u_meal, u_ins, p)
    s3 = tuple(s + 0.5 * h * k for s, k in zip(state, k2))
    k3 = deriv(s3, u_meal, u_ins, p)
    s4 = tuple(s + h * k for s, k in zip(state, k3))
    k4 = deriv(s4, u_meal, u_ins, p)
    return tuple(
        s + (h / 6.0) * (a + 2.0 * b + 2.0 * c + d)
        for s, a, b, c, d in zip(state, k1, k2, k3, k4)
    )


def input_profiles(scenario: Scenario) -> tuple[np.ndarray, np.ndarray]:
    """Per-minute input rates: meal glucose mg/min and bolus insulin units/min.

    Meals deliver carbs uniformly over their duration; each bolus is delivered
    over the single minute containing it. All edges land on whole minutes.
    """
    minutes = scenario.days * 24 * 60
    u_meal = np.zeros(minutes)
    u_ins = np.zeros(minutes)
    for meal in scenario.meals:
        m0 = (meal.start - scenario.start) // 60
        span = meal.duration_s // 60
        u_meal[m0:m0 + span] += meal.carbs * 1000.0 / span
    for bolus in scenario.boluses:
        u_ins[(bolus.time - scenario.start) // 60] += bolus.dose
    return u_meal, u_ins


def integrate(u_meal: np.ndarray, u_ins: np.ndarray,
              params: VirtualPatientParams) -> np.ndarray:
    """Noise-free plasma glucose sampled each minute, from per-minute input
    rates (meal mg/min, bolus units/min). Slot k holds the state at the start
    of minute k."""
    minutes = len(u_meal)
    state = (params.g_init, 0.0, params.i_b, 0.0, 0.0)
    glucose = np.empty(minutes)
    with np.errstate(over="ignore", invalid="ignore"):   # divergence is raised below
        for k in range(minutes):
            glucose[k] = state[0]
            state = _rk4_step(state, u_meal[k], u_ins[k] * 1e6, params, 1.0)
            if not all(np.isfinite(state)):
                raise SimulationDivergedError(
                    f"non-finite state at minute {k + 1} with parameters {params}")
    return glucose


def simulate(scenario: Scenario, params: VirtualPatientParams, seed,
             noise_sigma: float = CGM_NOISE_SIGMA) -> PatientRecord:
    """Integrate the scenario into a gap-free per-minute PatientRecord.

    The glucose channel is the plasma state sampled each minute, plus
    additive Gaussian CGM noise, clamped to the sensor range. The cho and
    insulin channels are per-slot totals (boluses plus integrated basal).
    """
    minutes = scenario.days * 24 * 60
    u_meal, u_ins = input_profiles(scenario)
    glucose_clean = integrate(u_meal, u_ins, params)

    rng = np.random.default_rng(seed)
    glucose = glucose_clean.copy()
    if noise_sigma > 0:
        glucose += rng.normal(0.0, noise_sigma, size=minutes)
    glucose = np.clip(glucose, *GLUCOSE_RANGE)

    cho = u_meal / 1000.0                                   # g per minute slot
    insulin = u_ins + scenario.basal_rate / 60.0            # units per minute slot

    grid = TimeGrid(start=scenario.start, step=60, length=minutes)
    return PatientRecord(
        patient_id="synthetic", source="synthetic", grid=grid,
        glucose=glucose, cho=cho, insulin=insulin,
    )
