"""Accuracy metrics (RMSE, MAPE, time gain) and continuous glucose
error-grid analysis (CG-EGA): point grid, rate grid, and the region-wise
AP/BE/EP classification.

The error-grid zone predicates and the region lookup are loaded from a
versioned JSON data file shipped with the package, so corrected tables can
be swapped in without code changes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .core import Horizon, PredictionSeries

TABLES_RESOURCE = "data/cg_ega_tables_v1.json"

RATE_STEP_MINUTES = 5.0
RATE_CLAMP = 4.0          # mg/dL/min, applied before rate-grid classification
REGIONS = ("hypo", "eu", "hyper")
CLASSES = ("AP", "BE", "EP")

HYPO_LIMIT = 70.0
HYPER_LIMIT = 180.0


class MetricUndefinedError(ValueError):
    pass


def rmse(series: PredictionSeries) -> float:
    mask = series.complete()
    if not mask.any():
        raise MetricUndefinedError("rmse: no complete (truth, prediction) pairs")
    diff = series.y_pred[mask] - series.y_true[mask]
    return float(np.sqrt(np.mean(diff ** 2)))


def mape(series: PredictionSeries) -> float:
    mask = series.complete()
    if not mask.any():
        raise MetricUndefinedError("mape: no complete (truth, prediction) pairs")
    truth = series.y_true[mask]
    if np.any(truth <= 0):
        raise MetricUndefinedError("mape: non-positive glucose reference")
    return float(100.0 * np.mean(np.abs((truth - series.y_pred[mask]) / truth)))


def time_gain(series: PredictionSeries, horizon: Horizon | None = None) -> float:
    """Minutes gained through anticipation: the horizon minus the time shift
    maximizing the correlation between truth and shifted predictions.

    Shifts run over whole grid steps from 0 to the horizon; correlation is
    population Pearson over the overlapping complete pairs. Ties go to the
    smallest shift; shifts with fewer than 3 pairs or zero variance are
    skipped.
    """
    horizon = horizon or series.horizon
    step_min = series.grid.step / 60.0
    max_shift = int(horizon.ph_minutes / step_min)
    y_true, y_pred = series.y_true, series.y_pred
    n = len(y_true)
    best_shift, best_corr = None, -np.inf
    for shift in range(max_shift + 1):
        a = y_true[:n - shift] if shift else y_true
        b = y_pred[shift:]
        mask = np.isfinite(a) & np.isfinite(b)
        if mask.sum() < 3:
            continue
        a, b = a[mask], b[mask]
        sa, sb = a.std(), b.std()
        if sa == 0.0 or sb == 0.0:
            continue
        corr = float(np.mean((a - a.mean()) * (b - b.mean())) / (sa * sb))
        if corr > best_corr:
            best_shift, best_corr = shift, corr
    if best_shift is None:
        raise MetricUndefinedError("time_gain: no usable shift")
    return horizon.ph_minutes - step_min * best_shift


# ---------------------------------------------------------------------------
# CG-EGA

@dataclass(frozen=True)
class RatePoint:
    """One timeline point with defined backward-difference rates."""

    t: int
    y_true: float
    y_pred: float
    true_rate: float
    pred_rate: float

    @property
    def region(self) -> str:
        if self.y_true < HYPO_LIMIT:
            return "hypo"
        return "eu" if self.y_true <= HYPER_LIMIT else "hyper"


class CgEgaTables:
    """Zone predicates and AP/BE/EP lookup, parsed from the versioned JSON.

    Format: each zone is a list of condition groups (OR of ANDs); each
    condition compares one variable against ``const + sum(coef * var)``,
    optionally widened by the rate-dependent expansion amounts. Zones are
    tried in their declared priority order, first match wins.
    """

    def __init__(self, raw: dict):
        self.version = raw["version"]
        self._expansion = raw["rate_expansion"]
        self._p = raw["p_ega"]
        self._r = raw["r_ega"]
        self._lookup = {
            region: {
                cls: {(p, r) for block in blocks for p in block[0] for r in block[1]}
                for cls, blocks in raw["lookup"][region].items()
                if cls != "comment"
            }
            for region in REGIONS
        }
        for grid in (self._p, self._r):
            missing = set(grid["order"]) - set(grid["zones"])
            if missing:
                raise ValueError(f"zones listed in order but undefined: {missing}")

    @classmethod
    def load(cls, path=None) -> "CgEgaTables":
        if path is None:
            text = resources.files("glybench").joinpath(TABLES_RESOURCE).read_text()
        else:
            with open(path) as handle:
                text = handle.read()
        return cls(json.loads(text))

    @property
    def p_zones(self) -> tuple:
        return tuple(self._p["order"])

    @property
    def r_zones(self) -> tuple:
        return tuple(self._r["order"])

    def _expansion_amount(self, side: str, rate: float) -> float:
        for bin_ in self._expansion[side]:
            if not isinstance(bin_, dict) or "amount" not in bin_:
                continue
            lo, hi = bin_.get("lo"), bin_.get("hi")
            if lo is not None:
                if bin_.get("lo_exclusive") and not rate > lo:
                    continue
                if not bin_.get("lo_exclusive") and not rate >= lo:
                    continue
            if hi is not None:
                if bin_.get("hi_exclusive") and not rate < hi:
                    continue
                if not bin_.get("hi_exclusive") and not rate <= hi:
                    continue
            return float(bin_["amount"])
        return 0.0

    @staticmethod
    def _holds(cond: dict, values: dict, du: float, dl: float) -> bool:
        rhs_spec = cond["rhs"]
        rhs = rhs_spec.get("const", 0.0)
        for var, value in values.items():
            if var in rhs_spec:
                rhs += rhs_spec[var] * value
        expand = rhs_spec.get("expand")
        if expand == "upper":
            rhs += du
        elif expand == "lower":
            rhs -= dl
        left = values[cond["var"]]
        op = cond["op"]
        if op == "<=":
            return left <= rhs
        if op == "<":
            return left < rhs
        if op == ">=":
            return left >= rhs
        if op == ">":
            return left > rhs
        raise ValueError(f"unknown operator {op!r}")

    def _classify(self, grid: dict, values: dict, du: float = 0.0,
                  dl: float = 0.0) -> str:
        for zone in grid["order"]:
            for group in grid["zones"][zone]:
                if all(self._holds(cond, values, du, dl) for cond in group):
                    return zone
        raise ValueError(f"no zone matched {values} (tables not exhaustive)")

    def p_zone(self, g: float, pred: float, true_rate: float) -> str:
        du = self._expansion_amount("upper", true_rate)
        dl = self._expansion_amount("lower", true_rate)
        return self._classify(self._p, {"g": g, "pred": pred}, du, dl)

    def r_zone(self, true_rate: float, pred_rate: float) -> str:
        x = float(np.clip(true_rate, -RATE_CLAMP, RATE_CLAMP))
        y = float(np.clip(pred_rate, -RATE_CLAMP, RATE_CLAMP))
        return self._classify(self._r, {"x": x, "y": y})

    def grade(self, region: str, p: str, r: str) -> str:
        table = self._lookup[region]
        if (p, r) in table["AP"]:
            return "AP"
        if (p, r) in table["BE"]:
            return "BE"
        return "EP"


_default_tables: CgEgaTables | None = None


def default_tables() -> CgEgaTables:
    global _default_tables
    if _default_tables is None:
        _default_tables = CgEgaTables.load()
    return _default_tables


def p_ega(point: RatePoint, tables: CgEgaTables | None = None) -> str:
    return (tables or default_tables()).p_zone(point.y_true, point.y_pred,
                                               point.true_rate)


def r_ega(point: RatePoint, tables: CgEgaTables | None = None) -> str:
    return (tables or default_tables()).r_zone(point.true_rate, point.pred_rate)


def rate_points(series: PredictionSeries) -> tuple[list[RatePoint], int]:
    """Backward-difference rate points over one grid step.

    A point contributes only when it and its immediate predecessor are both
    complete; other complete points are excluded (second return value).
    """
    mask = series.complete()
    step_min = series.grid.step / 60.0
    points = []
    excluded = 0
    for k in np.flatnonzero(mask):
        if k == 0 or not mask[k - 1]:
            excluded += 1
            continue
        points.append(RatePoint(
            t=int(series.grid.time_of(int(k))),
            y_true=float(series.y_true[k]),
            y_pred=float(series.y_pred[k]),
            true_rate=float((series.y_true[k] - series.y_true[k - 1]) / step_min),
            pred_rate=float((series.y_pred[k] - series.y_pred[k - 1]) / step_min),
        ))
    return points, excluded


@dataclass(frozen=True)
class CgEgaReport:
    """Region-wise AP/BE/EP counts and rates plus per-grid zone histograms.

    Rates are fractions of the region's classified points (NaN for empty
    regions) and sum to 1 within 1e-12 wherever the region is populated.
    """

    counts: dict          # region -> class -> int
    rates: dict           # region -> class -> float (NaN when region empty)
    p_histogram: dict     # P zone -> int
    r_histogram: dict     # R zone -> int
    classified: int
    excluded: int

    def region_total(self, region: str) -> int:
        return sum(self.counts[region].values())


def cg_ega(series: PredictionSeries, tables: CgEgaTables | None = None) -> CgEgaReport:
    """Classify every rate-defined point of the series into AP/BE/EP by its
    true glycemia region."""
    tables = tables or default_tables()
    points, excluded = rate_points(series)
    if not points:
        raise MetricUndefinedError("cg_ega: no rate-defined points")
    counts = {region: {cls: 0 for cls in CLASSES} for region in REGIONS}
    p_hist = {zone: 0 for zone in tables.p_zones}
    r_hist = {zone: 0 for zone in tables.r_zones}
    for point in points:
        p = tables.p_zone(point.y_true, point.y_pred, point.true_rate)
        r = tables.r_zone(point.true_rate, point.pred_rate)
        p_hist[p] += 1
        r_hist[r] += 1
        counts[point.region][tables.grade(point.region, p, r)] += 1
    rates = {}
    for region in REGIONS:
        total = sum(counts[region].values())
        rates[region] = {
            cls: (counts[region][cls] / total if total else float("nan"))
            for cls in CLASSES
        }
    return CgEgaReport(counts=counts, rates=rates, p_histogram=p_hist,
                       r_histogram=r_hist, classified=len(points),
                       excluded=excluded)


# ---------------------------------------------------------------------------
# Population aggregation

def aggregate(rows: list[dict]) -> dict:
    """Fold results -> population tables.

    ``rows`` carry patient/model/ph/fold plus metric values ('rmse', 'mape',
    'tg' and nested 'cg_ega' region->class rates). Values are averaged over
    folds within a patient, then mean and population standard deviation are
    taken over patients. Cells with no defined value anywhere are None.
    """
    groups: dict = {}
    for row in rows:
        groups.setdefault((row["model"], row["ph"]), {}).setdefault(
            row["patient"], []).append(row)

    def fold_then_patient(per_patient, getter):
        patient_means = []
        for folds in per_patient.values():
            values = np.asarray([getter(r) for r in folds], dtype=np.float64)
            patient_means.append(np.nan if np.isnan(values).all()
                                 else np.nanmean(values))
        arr = np.asarray(patient_means)
        if np.isnan(arr).all():
            return None
        return float(np.nanmean(arr)), float(np.nanstd(arr))

    tables = {}
    for (model, ph), per_patient in sorted(groups.items()):
        cell = {"n_patients": len(per_patient)}
        for metric in ("rmse", "mape", "tg"):
            cell[metric] = fold_then_patient(
                per_patient, lambda r, m=metric: _nan_if_none(r.get(m)))
        cell["cg_ega"] = {
            region: {
                cls: fold_then_patient(
                    per_patient,
                    lambda r, rg=region, c=cls: _nan_if_none(
                        (r.get("cg_ega") or {}).get(rg, {}).get(c)))
                for cls in CLASSES
            }
            for region in REGIONS
        }
        tables[(model, ph)] = cell
    return tables


def _nan_if_none(value):
    return np.nan if value is None else value
