"""CSV tables and weight files.

Numbers are written with 17 significant digits, which round-trips every
IEEE double exactly. Missing optional columns are written as empty fields
and read back as ``None``.

Weight files are line oriented ``key value`` text::

    honu-weights 1
    role model
    architecture dqnu
    n_y 3
    n_u 5
    dt 0.001
    weights 45
    <one weight per line>
"""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .controller import ClosedLoopResult, ControllerState
from .core import RegressorLayout, make_unit
from .errors import ConfigurationError
from .identification import IdentifiedModel
from .series import TimeSeries

__all__ = [
    "TIMESERIES_COLUMNS",
    "REPORT_COLUMNS",
    "CLOSED_LOOP_COLUMNS",
    "fmt",
    "write_table",
    "read_table",
    "write_timeseries",
    "read_timeseries",
    "write_report",
    "read_report",
    "write_closed_loop",
    "read_closed_loop",
    "write_model",
    "read_model",
    "write_controller",
    "read_controller",
]

SCHEMA_VERSION = 1
MAGIC = "honu-weights"

TIMESERIES_COLUMNS = ("k", "t", "u", "y_real", "y_model", "e")
REPORT_COLUMNS = ("epoch", "sse", "per_step_seconds")
CLOSED_LOOP_COLUMNS = ("k", "t", "d", "q", "y", "e_reg")
PLANT_EXTRA_COLUMNS = ("y_model", "e_model")


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def write_table(path, columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_table(path, columns: Sequence[str]) -> Dict[str, Optional[np.ndarray]]:
    """Read a CSV written by :func:`write_table` into float columns.

    A column whose fields are all empty comes back as ``None``.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigurationError(f"{path}: empty file") from None
        missing = [c for c in columns if c not in header]
        if missing:
            raise ConfigurationError(f"{path}: missing columns {missing}")
        idx = [header.index(c) for c in columns]
        raw: List[List[str]] = [[] for _ in columns]
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ConfigurationError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            for slot, i in enumerate(idx):
                raw[slot].append(row[i])
    out: Dict[str, Optional[np.ndarray]] = {}
    for name, vals in zip(columns, raw):
        if vals and all(v == "" for v in vals):
            out[name] = None
            continue
        try:
            out[name] = np.array([float(v) if v != "" else np.nan for v in vals])
        except ValueError as exc:
            raise ConfigurationError(f"{path}: bad number in column {name!r}: {exc}") from None
    return out


def write_timeseries(path, series: TimeSeries) -> None:
    n = len(series)
    ym = series.y_model if series.y_model is not None else [None] * n
    e = series.e if series.e is not None else [None] * n
    t = series.t
    write_table(path, TIMESERIES_COLUMNS,
                ((k, t[k], series.u[k], series.y_real[k], ym[k], e[k]) for k in range(n)))


def read_timeseries(path) -> TimeSeries:
    c = read_table(path, TIMESERIES_COLUMNS)
    t = c["t"]
    if t is None or t.size < 2:
        raise ConfigurationError(f"{path}: need at least two samples")
    dt = float(t[1] - t[0])
    return TimeSeries(dt, c["u"], c["y_real"], c["y_model"], c["e"])


def write_report(path, sse: Sequence[float], per_step_seconds: Optional[float] = None) -> None:
    """Per-epoch SSE table; the timing column is left empty when not given."""
    write_table(path, REPORT_COLUMNS,
                ((i + 1, s, per_step_seconds) for i, s in enumerate(sse)))


def read_report(path):
    c = read_table(path, REPORT_COLUMNS)
    return c["sse"] if c["sse"] is not None else np.zeros(0), c["per_step_seconds"]


def write_closed_loop(path, result: ClosedLoopResult) -> None:
    t, e = result.t, result.e_reg
    if result.y_model is None:
        rows = ((k, t[k], result.d[k], result.q[k], result.y[k], e[k]) for k in range(len(result)))
        write_table(path, CLOSED_LOOP_COLUMNS, rows)
    else:
        em = result.e_model
        rows = ((k, t[k], result.d[k], result.q[k], result.y[k], e[k], result.y_model[k], em[k])
                for k in range(len(result)))
        write_table(path, CLOSED_LOOP_COLUMNS + PLANT_EXTRA_COLUMNS, rows)


def read_closed_loop(path) -> Dict[str, np.ndarray]:
    return read_table(path, CLOSED_LOOP_COLUMNS)


# --- weight files ---------------------------------------------------------------

def _write_weights(path, header: Dict[str, object], weights) -> None:
    lines = [f"{MAGIC} {SCHEMA_VERSION}"]
    lines += [f"{k} {fmt(v) if not isinstance(v, str) else v}" for k, v in header.items()]
    w = np.asarray(weights, dtype=float)
    lines.append(f"weights {w.size}")
    lines += [fmt(x) for x in w]
    Path(path).write_text("\n".join(lines) + "\n")


def _read_weights(path, role: str):
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].split()[:1] != [MAGIC]:
        raise ConfigurationError(f"{path}:1: not a weight file")
    try:
        version = int(lines[0].split()[1])
    except (IndexError, ValueError):
        raise ConfigurationError(f"{path}:1: missing schema version") from None
    if version != SCHEMA_VERSION:
        raise ConfigurationError(f"{path}:1: unsupported schema version {version}")
    header: Dict[str, str] = {}
    i = 1
    while i < len(lines):
        parts = lines[i].split()
        if len(parts) != 2:
            raise ConfigurationError(f"{path}:{i + 1}: expected 'key value'")
        key, value = parts
        i += 1
        if key == "weights":
            n = int(value)
            body = lines[i:i + n]
            if len(body) != n:
                raise ConfigurationError(f"{path}: expected {n} weights, found {len(body)}")
            try:
                w = np.array([float(x) for x in body])
            except ValueError as exc:
                raise ConfigurationError(f"{path}: bad weight: {exc}") from None
            break
        header[key] = value
    else:
        raise ConfigurationError(f"{path}: no weights section")
    if header.get("role") != role:
        raise ConfigurationError(f"{path}: expected role {role!r}, found {header.get('role')!r}")
    return header, w


def write_model(path, model: IdentifiedModel) -> None:
    _write_weights(path, {"role": "model", "architecture": model.architecture,
                          "n_y": model.layout.n_y, "n_u": model.layout.n_u, "dt": model.dt},
                   model.unit.weights)


def read_model(path) -> IdentifiedModel:
    h, w = _read_weights(path, "model")
    try:
        arch = h["architecture"]
        layout = RegressorLayout(int(h["n_y"]), int(h["n_u"]))
        dt = float(h["dt"])
    except KeyError as exc:
        raise ConfigurationError(f"{path}: missing field {exc}") from None
    if arch not in ("dlnu", "dqnu"):
        raise ConfigurationError(f"{path}: unknown architecture {arch!r}")
    unit = make_unit(arch, layout.size).with_weights(w)
    return IdentifiedModel(unit, layout, dt)


def write_controller(path, state: ControllerState) -> None:
    _write_weights(path, {"role": "controller", "architecture": state.unit.kind,
                          "n_qy": state.n_qy, "n_qe": state.n_qe,
                          "resample_stride": state.resample_stride,
                          "q_limit": "none" if state.q_limit is None else state.q_limit},
                   state.unit.weights)


def read_controller(path) -> ControllerState:
    h, w = _read_weights(path, "controller")
    try:
        kind = h["architecture"]
        n_qy, n_qe = int(h["n_qy"]), int(h["n_qe"])
        stride = int(h["resample_stride"])
        q_limit = None if h["q_limit"] == "none" else float(h["q_limit"])
    except KeyError as exc:
        raise ConfigurationError(f"{path}: missing field {exc}") from None
    if kind not in ("lnu", "qnu"):
        raise ConfigurationError(f"{path}: unknown architecture {kind!r}")
    unit = make_unit(kind, 1 + n_qy + n_qe).with_weights(w)
    return ControllerState(unit, n_qy, n_qe, stride, q_limit)
