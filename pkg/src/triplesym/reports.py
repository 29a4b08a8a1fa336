"""Deterministic CSV / JSON writers for certification and solver output."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, is_dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

FLOAT_FMT = "{:.17g}"


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT.format(float(v))
    if isinstance(v, (complex, np.complexfloating)):
        return f"{FLOAT_FMT.format(v.real)}{'+' if v.imag >= 0 else '-'}{FLOAT_FMT.format(abs(v.imag))}j"
    if v is None:
        return ""
    return str(v)


def jsonable(obj):
    """Plain-python version of obj; non-finite floats become strings so the JSON stays valid."""
    if is_dataclass(obj) and not isinstance(obj, type):
        obj = obj.to_dict() if hasattr(obj, "to_dict") else asdict(obj)
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, (complex, np.complexfloating)):
        return [jsonable(obj.real), jsonable(obj.imag)]
    if obj is None or isinstance(obj, str):
        return obj
    if callable(obj):
        return getattr(obj, "__name__", "callable")
    return str(obj)


def dumps(obj) -> str:
    return json.dumps(jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps(obj), encoding="utf-8")
    return path


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def constants_rows(measured) -> list:
    """Rows for a list of MeasuredConstant-like objects."""
    rows = []
    for m in measured:
        rows.append([m.name, m.value, m.value_fine, m.refinement_ratio, m.skipped, m.total,
                     m.confirmed, None if m.witness is None else m.witness[0],
                     None if m.witness is None else m.witness[1]])
    return rows


CONSTANT_HEADER = ["name", "value", "value_fine", "refinement_ratio", "skipped", "total",
                   "confirmed", "witness_t", "witness_y"]


def write_energy_trace(path, trace) -> Path:
    """One row per time node: t, per-region weighted energy, log energy, lambda_k |V_k|^2."""
    names = list(trace.region_names)
    header = ["t"] + [f"E[{n}]" for n in names] + [f"logE[{n}]" for n in names] + ["c1", "c2", "c3"]
    rows = (
        [t, *E, *lE, *c]
        for t, E, lE, c in zip(trace.times, trace.E, trace.log_E, trace.components)
    )
    return write_csv(path, header, rows)


def write_verdicts(path, verdicts) -> Path:
    ds = [jsonable(v) for v in verdicts]
    if not ds:
        return write_csv(path, ["empty"], [])
    keys = [k for k in ds[0] if not isinstance(ds[0][k], (dict, list))]
    return write_csv(path, keys, ([d[k] for k in keys] for d in ds))
