"""Dataset ingestion: clinical-trial style XML (one patient per file) and
canonical CSV, both parsed into :class:`~glybench.core.PatientRecord`.

The XML path expects a patient root with an ``id`` attribute and event lists
for glucose readings, boluses, and meals; events carry a timestamp attribute
and a value attribute. Glucose events snap to their nearest 5-minute slot
(ties to the earlier slot, collisions keep the latest event); bolus doses and
meal carbs are summed into their containing slot; basal rates, when present,
are integrated into per-slot amounts.
"""

from __future__ import annotations

import csv
import io
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .core import PatientRecord, TimeGrid

OHIO_STEP = 300
OHIO_TIMESTAMP_FORMAT = "%d-%m-%Y %H:%M:%S"
CANONICAL_HEADER = ("timestamp", "glucose", "cho", "insulin")
CANONICAL_TIMESTAMP_FORMAT = "%Y-%m-%d %H:%M:%S"


class IngestError(ValueError):
    pass


class XmlParseError(IngestError):
    """Malformed XML; message carries line/column when known."""


class TimestampFormatError(IngestError):
    pass


class EmptyRecordError(IngestError):
    pass


class CsvSchemaError(IngestError):
    pass


class CsvCellError(IngestError):
    """Bad cell value; message carries the 1-based row number."""


@dataclass(frozen=True)
class CsvSchema:
    """Column naming and grid layout of a delimited patient file."""

    timestamp_col: str = "timestamp"
    glucose_col: str = "glucose"
    cho_col: str = "cho"
    insulin_col: str = "insulin"
    timestamp_format: str = CANONICAL_TIMESTAMP_FORMAT
    step: int = 60

    def __post_init__(self):
        if 3600 % self.step != 0:
            raise ValueError(f"grid step {self.step} must divide 3600")

    @property
    def columns(self):
        return (self.timestamp_col, self.glucose_col, self.cho_col, self.insulin_col)


#: Schema written by the synthetic generator (60 s grid).
CANONICAL_SCHEMA = CsvSchema()


def _parse_timestamp(text: str, fmt: str) -> int:
    try:
        dt = datetime.strptime(text.strip(), fmt)
    except ValueError as exc:
        raise TimestampFormatError(f"timestamp {text!r} does not match {fmt!r}") from exc
    return int(dt.replace(tzinfo=timezone.utc).timestamp())


def _nearest_slot(t: int, start: int, step: int, length: int) -> int:
    # ties (exact midpoints) go to the earlier slot
    offset = t - start
    slot = offset // step
    if offset % step > step // 2:
        slot += 1
    return min(max(slot, 0), length - 1)


def _events(root: ET.Element, tag: str):
    parent = root.find(tag)
    return [] if parent is None else parent.findall("event")


def _event_value(event: ET.Element, *names: str) -> float:
    for name in names:
        if name in event.attrib:
            return float(event.attrib[name])
    raise XmlParseError(f"event missing value attribute (tried {names})")


def _event_time(event: ET.Element, fmt: str) -> int:
    for name in ("ts", "ts_begin", "timestamp"):
        if name in event.attrib:
            return _parse_timestamp(event.attrib[name], fmt)
    raise XmlParseError("event missing timestamp attribute")


def parse_ohio_xml(
    data: bytes,
    timestamp_format: str = OHIO_TIMESTAMP_FORMAT,
    include_basal: bool = True,
) -> PatientRecord:
    """Parse one patient XML file onto a 300 s grid spanning first to last event.

    ``include_basal=False`` restricts the insulin channel to boluses only.
    """
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        line, col = exc.position
        raise XmlParseError(f"malformed XML at line {line}, column {col}: {exc}") from exc

    patient_id = root.attrib.get("id")
    if not patient_id:
        raise XmlParseError("patient root element has no id attribute")

    glucose_events = [
        (_event_time(e, timestamp_format), _event_value(e, "value"))
        for e in _events(root, "glucose_level")
    ]
    if not glucose_events:
        raise EmptyRecordError(f"patient {patient_id} has no glucose events")
    meal_events = [
        (_event_time(e, timestamp_format), _event_value(e, "carbs", "value"))
        for e in _events(root, "meal")
    ]
    bolus_events = [
        (_event_time(e, timestamp_format), _event_value(e, "dose", "value"))
        for e in _events(root, "bolus")
    ]
    basal_events = [
        (_event_time(e, timestamp_format), _event_value(e, "value"))
        for e in _events(root, "basal")
    ]

    stamps = [t for t, _ in glucose_events + meal_events + bolus_events + basal_events]
    start = min(stamps)
    length = (max(stamps) - start) // OHIO_STEP + 1
    grid = TimeGrid(start=start, step=OHIO_STEP, length=length)

    glucose = np.full(length, np.nan)
    # stable sort keeps document order among same-timestamp events, so the
    # last written value is the latest event
    for t, value in sorted(glucose_events, key=lambda ev: ev[0]):
        glucose[_nearest_slot(t, start, OHIO_STEP, length)] = value

    cho = np.zeros(length)
    for t, carbs in meal_events:
        cho[min((t - start) // OHIO_STEP, length - 1)] += carbs

    insulin = np.zeros(length)
    for t, dose in bolus_events:
        insulin[min((t - start) // OHIO_STEP, length - 1)] += dose
    if include_basal and basal_events:
        insulin += _integrate_basal(basal_events, grid)

    return PatientRecord(
        patient_id=patient_id, source="ohio-xml", grid=grid,
        glucose=glucose, cho=cho, insulin=insulin,
    )


def _integrate_basal(events, grid: TimeGrid) -> np.ndarray:
    """Turn piecewise-constant basal rates (units/hour) into per-slot amounts.

    Each rate holds from its event time until the next basal event, clipped to
    the grid span.
    """
    events = sorted(events, key=lambda ev: ev[0])
    amounts = np.zeros(grid.length)
    bounds = [t for t, _ in events] + [grid.end]
    for (t0, rate), t1 in zip(events, bounds[1:]):
        lo, hi = max(t0, grid.start), min(t1, grid.end)
        if hi <= lo or rate == 0:
            continue
        first, last = (lo - grid.start) // grid.step, (hi - 1 - grid.start) // grid.step
        for slot in range(first, last + 1):
            slot_lo = grid.start + slot * grid.step
            overlap = min(hi, slot_lo + grid.step) - max(lo, slot_lo)
            amounts[slot] += rate * overlap / 3600.0
    return amounts


def parse_csv(data: bytes, schema: CsvSchema, patient_id: str = "csv") -> PatientRecord:
    """Parse a delimited file onto the schema's grid.

    Empty glucose cells become missing readings; empty cho/insulin cells are
    zero. Rows absent from the file leave their slot missing/zero.
    """
    reader = csv.reader(io.StringIO(data.decode("utf-8")))
    try:
        header = next(reader)
    except StopIteration:
        raise CsvSchemaError("file is empty") from None
    try:
        cols = {name: header.index(name) for name in schema.columns}
    except ValueError as exc:
        raise CsvSchemaError(f"missing column in header {header}: {exc}") from None

    rows = []
    for number, row in enumerate(reader, start=2):
        if not row:
            continue
        t = _parse_timestamp(row[cols[schema.timestamp_col]], schema.timestamp_format)
        values = {}
        for name in schema.columns[1:]:
            cell = row[cols[name]].strip()
            if cell == "":
                values[name] = None
                continue
            try:
                values[name] = float(cell)
            except ValueError:
                raise CsvCellError(
                    f"row {number}: column {name!r} has non-numeric value {cell!r}"
                ) from None
        rows.append((t, values))

    if not rows:
        raise EmptyRecordError("no data rows")

    start = min(t for t, _ in rows)
    length = (max(t for t, _ in rows) - start) // schema.step + 1
    grid = TimeGrid(start=start, step=schema.step, length=length)

    glucose = np.full(length, np.nan)
    cho = np.zeros(length)
    insulin = np.zeros(length)
    for t, values in sorted(rows, key=lambda r: r[0]):
        g = values[schema.glucose_col]
        if g is not None:
            glucose[_nearest_slot(t, start, schema.step, length)] = g
        slot = min((t - start) // schema.step, length - 1)
        cho[slot] += values[schema.cho_col] or 0.0
        insulin[slot] += values[schema.insulin_col] or 0.0

    return PatientRecord(
        patient_id=patient_id, source="csv", grid=grid,
        glucose=glucose, cho=cho, insulin=insulin,
    )


def write_csv(record: PatientRecord, schema: CsvSchema | None = None) -> bytes:
    """Serialize a record to the canonical delimited layout (one row per slot).

    Floats are written with shortest round-trip repr so parse_csv(write_csv(r))
    reproduces the record exactly and re-serializes byte-for-byte.
    """
    schema = schema or CsvSchema(step=record.grid.step)
    if schema.step != record.grid.step:
        raise ValueError("schema step does not match the record grid")
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(schema.columns)
    for slot in range(record.grid.length):
        t = datetime.fromtimestamp(record.grid.time_of(slot), tz=timezone.utc)
        g = record.glucose[slot]
        writer.writerow([
            t.strftime(schema.timestamp_format),
            "" if np.isnan(g) else repr(float(g)),
            repr(float(record.cho[slot])),
            repr(float(record.insulin[slot])),
        ])
    return out.getvalue().encode("utf-8")
