import csv
import json
import math

import numpy as np

from triplesym.measure import MeasuredConstant
from triplesym.reports import (CONSTANT_HEADER, constants_rows, dumps, fmt, jsonable, write_csv, write_json,
                               write_verdicts)


def test_fmt_round_trips_17_digits():
    x = 0.1 + 0.2
    assert float(fmt(x)) == x
    assert fmt(True) == "true" and fmt(None) == ""
    assert complex(fmt(1.5 - 2j)) == 1.5 - 2j


def test_jsonable_non_finite():
    d = jsonable({"a": np.float64("nan"), "b": [np.inf, 1 + 2j], "c": np.arange(2)})
    assert d == {"a": "nan", "b": ["inf", [1.0, 2.0]], "c": [0, 1]}


def test_dumps_sorted_and_stable():
    assert dumps({"b": 1, "a": 2}) == dumps({"a": 2, "b": 1})
    assert dumps({"b": 1, "a": 2}).index('"a"') < dumps({"b": 1, "a": 2}).index('"b"')


def test_write_csv_and_json(tmp_path):
    m = MeasuredConstant("c", 0.25, {}, 1.0, value_fine=0.25, total=10, witness=(0.1, 0.0))
    p = write_csv(tmp_path / "c.csv", CONSTANT_HEADER, constants_rows([m]))
    rows = list(csv.reader(open(p)))
    assert rows[0] == CONSTANT_HEADER and float(rows[1][1]) == 0.25
    q = write_json(tmp_path / "c.json", {"x": math.pi})
    assert json.loads(q.read_text())["x"] == math.pi


def test_write_verdicts_flat_columns(tmp_path):
    from triplesym.energy_t import SubintervalVerdict
    v = SubintervalVerdict("Omega", "vanishing-data", (0.0, 0.5), 8, 1.2, 15.0, 1.0, 0.5, 0.0, True)
    rows = list(csv.reader(open(write_verdicts(tmp_path / "v.csv", [v]))))
    assert "span" not in rows[0] and rows[1][rows[0].index("passed")] == "true"
