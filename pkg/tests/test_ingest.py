import numpy as np
import pytest

from glybench.ingest import (
    CANONICAL_SCHEMA, CsvCellError, CsvSchema, CsvSchemaError,
    EmptyRecordError, TimestampFormatError, XmlParseError,
    parse_csv, parse_ohio_xml, write_csv,
)

T0 = "01-06-2021 08:00:00"


def ohio_xml(glucose=(), meals=(), boluses=(), basal=(), patient="559"):
    """Hand-built fixture. Events are (ts, value) with Ohio-style timestamps."""
    def block(tag, events, attr):
        rows = "".join(f'<event ts="{ts}" {attr}="{v}"/>' for ts, v in events)
        return f"<{tag}>{rows}</{tag}>"
    body = (
        block("glucose_level", glucose, "value")
        + block("meal", meals, "carbs")
        + block("bolus", boluses, "dose")
        + block("basal", basal, "value")
    )
    return f'<patient id="{patient}">{body}</patient>'.encode()


def ts(minutes):
    h, m = divmod(8 * 60 + minutes, 60)
    return f"01-06-2021 {h:02d}:{m:02d}:00"


class TestOhioXml:
    def test_two_glucose_events(self):
        rec = parse_ohio_xml(ohio_xml(glucose=[(ts(0), 110), (ts(5), 120)]))
        assert rec.grid.length == 2
        np.testing.assert_array_equal(rec.glucose, [110.0, 120.0])
        assert rec.patient_id == "559"
        assert rec.source == "ohio-xml"

    def test_meal_in_slot(self):
        rec = parse_ohio_xml(ohio_xml(
            glucose=[(ts(0), 110), (ts(25), 120)],
            meals=[(ts(16), 45)],
        ))
        expected = np.zeros(6)
        expected[3] = 45.0
        np.testing.assert_array_equal(rec.cho, expected)

    def test_boluses_sum_within_slot(self):
        rec = parse_ohio_xml(ohio_xml(
            glucose=[(ts(0), 110), (ts(10), 120)],
            boluses=[(ts(6), 2.0), (ts(9), 1.5)],
        ))
        np.testing.assert_array_equal(rec.insulin, [0.0, 3.5, 0.0])

    def test_glucose_snaps_to_nearest_slot(self):
        # 08:07 is nearer to the 08:05 slot than to 08:10
        rec = parse_ohio_xml(ohio_xml(
            glucose=[(ts(0), 100), ("01-06-2021 08:07:00", 133)]))
        np.testing.assert_array_equal(rec.glucose, [100.0, 133.0])

    def test_glucose_midpoint_ties_to_earlier_slot(self):
        rec = parse_ohio_xml(ohio_xml(
            glucose=[(ts(0), 100), ("01-06-2021 08:02:30", 133)]))
        np.testing.assert_array_equal(rec.glucose, [133.0])

    def test_glucose_collision_keeps_latest(self):
        rec = parse_ohio_xml(ohio_xml(
            glucose=[(ts(0), 100), (ts(5), 111), ("01-06-2021 08:06:00", 122)]))
        assert rec.glucose[1] == 122.0

    def test_order_insensitive(self):
        events = dict(
            glucose=[(ts(0), 110), (ts(5), 115), (ts(10), 120)],
            meals=[(ts(3), 30)],
            boluses=[(ts(3), 2.5)],
        )
        shuffled = dict(
            glucose=list(reversed(events["glucose"])),
            meals=events["meals"],
            boluses=events["boluses"],
        )
        a = parse_ohio_xml(ohio_xml(**events))
        b = parse_ohio_xml(ohio_xml(**shuffled))
        np.testing.assert_array_equal(a.glucose, b.glucose)
        np.testing.assert_array_equal(a.cho, b.cho)
        np.testing.assert_array_equal(a.insulin, b.insulin)

    def test_basal_integration(self):
        # 1.2 units/hour across the whole one-hour record = 0.1 per 5-min slot
        rec = parse_ohio_xml(ohio_xml(
            glucose=[(ts(0), 110), (ts(55), 120)],
            basal=[(ts(0), 1.2)],
        ))
        np.testing.assert_allclose(rec.insulin, np.full(12, 0.1))
        rec2 = parse_ohio_xml(ohio_xml(
            glucose=[(ts(0), 110), (ts(55), 120)],
            basal=[(ts(0), 1.2)],
        ), include_basal=False)
        np.testing.assert_array_equal(rec2.insulin, np.zeros(12))

    def test_malformed_xml(self):
        with pytest.raises(XmlParseError, match="line"):
            parse_ohio_xml(b"<patient id='x'><glucose_level>")

    def test_unknown_timestamp_format(self):
        data = ohio_xml(glucose=[("2021/06/01 08:00", 110)])
        with pytest.raises(TimestampFormatError):
            parse_ohio_xml(data)

    def test_empty_glucose(self):
        with pytest.raises(EmptyRecordError):
            parse_ohio_xml(ohio_xml(meals=[(ts(0), 40)]))


class TestCsv:
    def test_empty_glucose_cells(self):
        data = (b"timestamp,glucose,cho,insulin\n"
                b"2021-06-01 08:00:00,100,40,0.0\n"
                b"2021-06-01 08:01:00,,0,0.0\n"
                b"2021-06-01 08:02:00,120,0,0.0\n")
        rec = parse_csv(data, CANONICAL_SCHEMA, patient_id="p1")
        np.testing.assert_array_equal(rec.glucose, [100.0, np.nan, 120.0])
        assert rec.cho[0] == 40.0

    def test_round_trip_bytes(self):
        data = (b"timestamp,glucose,cho,insulin\n"
                b"2021-06-01 08:00:00,101.2399999999999,40.0,0.5\n"
                b"2021-06-01 08:01:00,,0.0,0.016666666666666666\n"
                b"2021-06-01 08:02:00,119.9,0.0,0.0\n")
        rec = parse_csv(data, CANONICAL_SCHEMA)
        assert write_csv(rec, CANONICAL_SCHEMA) == data

    def test_missing_column(self):
        with pytest.raises(CsvSchemaError):
            parse_csv(b"timestamp,glucose,cho\n", CANONICAL_SCHEMA)

    def test_non_numeric_cell_reports_row(self):
        data = (b"timestamp,glucose,cho,insulin\n"
                b"2021-06-01 08:00:00,100,0,0\n"
                b"2021-06-01 08:01:00,oops,0,0\n")
        with pytest.raises(CsvCellError, match="row 3"):
            parse_csv(data, CANONICAL_SCHEMA)

    def test_gap_rows_become_missing(self):
        data = (b"timestamp,glucose,cho,insulin\n"
                b"2021-06-01 08:00:00,100,0,0\n"
                b"2021-06-01 08:03:00,130,0,0\n")
        rec = parse_csv(data, CANONICAL_SCHEMA)
        np.testing.assert_array_equal(rec.glucose, [100, np.nan, np.nan, 130])

    def test_step_must_divide_hour(self):
        with pytest.raises(ValueError):
            CsvSchema(step=7 * 60)
