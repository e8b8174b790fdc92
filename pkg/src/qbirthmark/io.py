"""Artifact emission: CSV, JSON, 16-bit PGM images and raw grid dumps.

Everything written here is byte-deterministic for identical inputs: floats
are printed with ``repr`` (shortest round-trip form), JSON keys are sorted,
and no timestamps are embedded.
"""

import csv
import json
import math
import os
import struct
from pathlib import Path

import numpy as np

from .dynamics import TimeSeries
from .errors import OutputError, ValidationError

PGM_MAXVAL = 65535
_GRID_MAGIC = b"QBG1"


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _open(path, mode, **kw):
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        return open(path, mode, **kw)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}", path) from exc


def write_csv(path, header, rows) -> Path:
    """RFC 4180 CSV (CRLF line ends, minimal quoting) with a header row."""
    path = Path(path)
    header = list(header)
    with _open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            row = list(row)
            if len(row) != len(header):
                raise ValidationError(f"{path}: row has {len(row)} fields, header has {len(header)}")
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path):
    """``(header, rows)`` with every field left as a string."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_timeseries(path, *series: TimeSeries) -> Path:
    """One ``time`` column plus one column per series (all on the same times)."""
    if not series:
        raise ValidationError("no series to write")
    t = series[0].times
    for s in series[1:]:
        if not np.array_equal(s.times, t):
            raise ValidationError(f"series '{s.name}' is on a different time grid")
    cols = [s.values for s in series]
    return write_csv(path, ["time"] + [s.name for s in series],
                     ([ti] + [c[i] for c in cols] for i, ti in enumerate(t)))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        # JSON has no inf/nan; keep them readable and round-trippable as strings
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    with _open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_json(obj))
    return path


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


# ------------------------------------------------------------------- PGM

def pgm_bytes(values: np.ndarray):
    """Encode a 2-D array as binary 16-bit PGM; returns ``(bytes, scaling)``.

    Values are mapped linearly from ``[min, max]`` onto ``[0, 65535]``. The
    array is indexed ``[iy, ix]`` with y increasing; image rows run from the
    largest y down so the picture is upright.
    """
    v = np.asarray(values, dtype=float)
    if v.ndim != 2:
        raise ValidationError(f"PGM needs a 2-D array, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValidationError("PGM input contains non-finite values")
    ny, nx = v.shape
    lo, hi = float(v.min()), float(v.max())
    if hi > lo:
        q = np.rint((v - lo) / (hi - lo) * PGM_MAXVAL)
    else:
        q = np.zeros_like(v)
    q = q[::-1].astype(">u2")
    header = f"P5\n{nx} {ny}\n{PGM_MAXVAL}\n".encode("ascii")
    scaling = {"min": lo, "max": hi, "maxval": PGM_MAXVAL, "mapping": "linear",
               "width": nx, "height": ny, "row_order": "y_descending"}
    return header + q.tobytes(), scaling


def write_pgm(path, values, extra=None) -> Path:
    """Write ``path`` and a ``path + '.json'`` sidecar with the scaling."""
    path = Path(path)
    data, scaling = pgm_bytes(values)
    if extra:
        scaling.update(extra)
    with _open(path, "wb") as fh:
        fh.write(data)
    write_json(str(path) + ".json", scaling)
    return path


def read_pgm(path):
    """Decode a file written by :func:`write_pgm` back to ``[iy, ix]`` integer levels."""
    with open(path, "rb") as fh:
        raw = fh.read()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValidationError(f"{path}: not a binary PGM")
    nx, ny = map(int, parts[1].split())
    maxval = int(parts[2])
    data = np.frombuffer(parts[3], dtype=">u2" if maxval > 255 else "u1")
    return data.reshape(ny, nx)[::-1].astype(np.int64)


# ------------------------------------------------------------ grid dumps

def dump_grid(path, values) -> Path:
    """``QBG1`` header (magic, u32 nx, u32 ny, u32 reserved) + LE float64, rows of length nx."""
    v = np.ascontiguousarray(values, dtype="<f8")
    if v.ndim != 2:
        raise ValidationError(f"grid dump needs a 2-D array, got shape {v.shape}")
    ny, nx = v.shape
    path = Path(path)
    with _open(path, "wb") as fh:
        fh.write(_GRID_MAGIC + struct.pack("<III", nx, ny, 0))
        fh.write(v.tobytes())
    return path


def load_grid(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != _GRID_MAGIC:
        raise ValidationError(f"{path}: not a QBG1 file")
    nx, ny, _ = struct.unpack("<III", raw[4:16])
    data = np.frombuffer(raw[16:], dtype="<f8")
    if data.size != nx * ny:
        raise ValidationError(f"{path}: expected {nx * ny} values, found {data.size}")
    return data.reshape(ny, nx).copy()


def ensure_dir(path) -> Path:
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create {path}: {exc.strerror or exc}", path) from exc
    if not os.access(path, os.W_OK):
        raise OutputError(f"{path} is not writable", path)
    return path
