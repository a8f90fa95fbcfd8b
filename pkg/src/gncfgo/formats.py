"""CSV, report and config file formats.

All files are UTF-8, LF-terminated, comma separated with a mandatory header.
Floats are written with ``repr`` so they round-trip exactly.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import fields

import numpy as np

from .errors import GnssError
from .obs_model import EpochState, SatelliteObservation

OBS_HEADER = ["t", "sat_id", "sys", "px", "py", "pz", "vx", "vy", "vz",
              "pseudorange", "doppler", "wavelength", "cn0", "label"]
TRUTH_HEADER = ["t", "px", "py", "pz", "vx", "vy", "vz", "clk_bias", "clk_drift"]
SOLUTION_HEADER = ["t", "px", "py", "pz", "vx", "vy", "vz", "clk_bias", "method"]
WEIGHTS_HEADER = ["t", "sat_id", "weight", "residual_m", "round"]
RESIDUALS_HEADER = ["t", "sat_id", "residual_m", "weighted_residual", "label"]
TRACE_HEADER = ["round", "theta", "objective_start", "objective_solved", "objective_final"]


class InputError(GnssError, ValueError):
    pass


def fmt(v) -> str:
    return repr(float(v))


def atomic_write(path, text: str):
    """Write ``text`` to ``path`` via a temporary file and rename."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def to_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def read_rows(path, header):
    """Yield ``(line_number, row)`` after checking the header exactly."""
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first != header:
            raise InputError(f"{path}:1: expected header {','.join(header)!r}, got {first!r}")
        for row in reader:
            if len(row) != len(header):
                raise InputError(f"{path}:{reader.line_num}: expected {len(header)} fields, "
                                 f"got {len(row)}")
            yield reader.line_num, row


def _parse(path, line, kind, value):
    try:
        return kind(value)
    except ValueError as exc:
        raise InputError(f"{path}:{line}: cannot parse {value!r} as {kind.__name__}") from exc


def group_by_epoch(observations) -> list[list]:
    epochs, current, t = [], [], None
    for o in observations:
        if t is not None and o.t != t:
            epochs.append(current)
            current = []
        current.append(o)
        t = o.t
    if current:
        epochs.append(current)
    return epochs


def write_observations(path, epochs):
    rows = [[fmt(o.t), o.sat_id, o.system, *map(fmt, o.sat_pos), *map(fmt, o.sat_vel),
             fmt(o.pseudorange), fmt(o.doppler), fmt(o.wavelength), fmt(o.cn0), o.label]
            for ep in epochs for o in ep]
    atomic_write(path, to_csv(OBS_HEADER, rows))


def read_observations(path) -> list[list]:
    obs = []
    last_t = -np.inf
    for line, row in read_rows(path, OBS_HEADER):
        f = [_parse(path, line, float, v) for v in row[3:13]]
        t = _parse(path, line, float, row[0])
        if t < last_t:
            raise InputError(f"{path}:{line}: timestamps must be non-decreasing")
        last_t = t
        try:
            obs.append(SatelliteObservation(t, _parse(path, line, int, row[1]), row[2],
                                            f[0:3], f[3:6], f[6], f[7], f[8], f[9], row[13]))
        except ValueError as exc:
            raise InputError(f"{path}:{line}: {exc}") from exc
    if not obs:
        raise InputError(f"{path}: no observations")
    return group_by_epoch(obs)


def write_truth(path, states):
    rows = [[fmt(s.t), *map(fmt, s.pos), *map(fmt, s.vel), fmt(s.clk_bias), fmt(s.clk_drift)]
            for s in states]
    atomic_write(path, to_csv(TRUTH_HEADER, rows))


def read_truth(path) -> list:
    out = []
    for line, row in read_rows(path, TRUTH_HEADER):
        v = [_parse(path, line, float, x) for x in row]
        out.append(EpochState(v[0], v[1:4], v[4:7], v[7], v[8]))
    if not out:
        raise InputError(f"{path}: no rows")
    return out


def solution_csv(states, method) -> str:
    rows = [[fmt(s.t), *map(fmt, s.pos), *map(fmt, s.vel), fmt(s.clk_bias), method]
            for s in states]
    return to_csv(SOLUTION_HEADER, rows)


def read_solution(path) -> tuple[list, str]:
    out, method = [], None
    for line, row in read_rows(path, SOLUTION_HEADER):
        v = [_parse(path, line, float, x) for x in row[:8]]
        out.append(EpochState(v[0], v[1:4], v[4:7], v[7]))
        method = row[8]
    if not out:
        raise InputError(f"{path}: no rows")
    return out, method


def weights_csv(rounds) -> str:
    """``rounds`` is a sequence of ``(round_index, keys, weights, residuals_m)``."""
    rows = [[fmt(t), sid, fmt(w), fmt(r), idx]
            for idx, keys, ws, rs in rounds
            for (t, sid), w, r in zip(keys, ws, rs)]
    return to_csv(WEIGHTS_HEADER, rows)


def read_weights(path) -> dict:
    """Map round index to ``(keys, weights, residuals_m)``."""
    rounds = {}
    for line, row in read_rows(path, WEIGHTS_HEADER):
        t = _parse(path, line, float, row[0])
        sid = _parse(path, line, int, row[1])
        w = _parse(path, line, float, row[2])
        if not 0.0 <= w <= 1.0:
            raise InputError(f"{path}:{line}: weight {w} outside [0, 1]")
        r = _parse(path, line, float, row[3])
        k = _parse(path, line, int, row[4])
        keys, ws, rs = rounds.setdefault(k, ([], [], []))
        keys.append((t, sid))
        ws.append(w)
        rs.append(r)
    if not rounds:
        raise InputError(f"{path}: no rows")
    return {k: (keys, np.array(ws), np.array(rs)) for k, (keys, ws, rs) in sorted(rounds.items())}


def residuals_csv(keys, residuals_m, weighted, labels) -> str:
    rows = [[fmt(t), sid, fmt(r), fmt(e), lab]
            for (t, sid), r, e, lab in zip(keys, residuals_m, weighted, labels)]
    return to_csv(RESIDUALS_HEADER, rows)


def read_residuals(path) -> tuple[np.ndarray, np.ndarray]:
    metric, white = [], []
    for line, row in read_rows(path, RESIDUALS_HEADER):
        metric.append(_parse(path, line, float, row[2]))
        white.append(_parse(path, line, float, row[3]))
    if not metric:
        raise InputError(f"{path}: no rows")
    return np.array(metric), np.array(white)


def trace_csv(trace) -> str:
    rows = [[i, fmt(r.theta), fmt(r.objective_start), fmt(r.objective_solved),
             fmt(r.objective_final)] for i, r in enumerate(trace.rounds, start=1)]
    return to_csv(TRACE_HEADER, rows)


def read_trace(path) -> list[list[float]]:
    out = []
    for line, row in read_rows(path, TRACE_HEADER):
        out.append([_parse(path, line, int, row[0])]
                   + [_parse(path, line, float, x) for x in row[1:]])
    if not out:
        raise InputError(f"{path}: no rows")
    return out


def report_text(items: dict) -> str:
    lines = []
    for k, v in items.items():
        lines.append(f"{k}={fmt(v) if isinstance(v, (float, np.floating)) else v}")
    return "\n".join(lines) + "\n"


def read_report(path) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if "=" not in line:
                raise InputError(f"{path}:{n}: expected key=value")
            k, v = line.split("=", 1)
            out[k] = v
    return out


def _to_bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_CONVERTERS = {"float": float, "int": int, "str": str, "bool": _to_bool}


def parse_config(path_or_text, cls, *, is_text=False, **overrides):
    """Strict flat ``key=value`` parser into the dataclass ``cls``.

    Unknown keys, repeated keys and unparsable values are errors reported
    with line numbers. Blank lines and ``#`` comments are ignored.
    """
    if is_text:
        text, name = path_or_text, "<config>"
    else:
        name = str(path_or_text)
        try:
            with open(path_or_text, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise InputError(f"{name}: {exc.strerror}") from exc
    types = {f.name: str(f.type).split("|")[0].strip() for f in fields(cls)}
    values = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{name}:{n}: expected key=value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise InputError(f"{name}:{n}: unknown key {key!r}")
        if key in values:
            raise InputError(f"{name}:{n}: duplicate key {key!r}")
        try:
            values[key] = _CONVERTERS[types[key]](val)
        except ValueError as exc:
            raise InputError(f"{name}:{n}: bad value for {key}: {exc}") from exc
    values.update(overrides)
    try:
        return cls(**values)
    except ValueError as exc:
        raise InputError(f"{name}: {exc}") from exc


def config_text(obj) -> str:
    lines = []
    for f in fields(obj):
        v = getattr(obj, f.name)
        lines.append(f"{f.name} = {fmt(v) if isinstance(v, float) else v}")
    return "\n".join(lines) + "\n"
