"""CSV and binary storage for grid paths and rough paths."""
from __future__ import annotations

import csv
import struct

import numpy as np

from .errors import ConfigError, DomainError
from .rough_core import GridPath, RoughPathGrid

MAGIC = b"RSTB"
VERSION = 1
_HEADER = struct.Struct("<4sHBxQI")  # magic, version, kind, pad, n, dim
KIND_PATH, KIND_ROUGH = 0, 1


def path_header(dim, area=False, prefix="x"):
    cols = ["t"] + [f"{prefix}_{a + 1}" for a in range(dim)]
    if area:
        cols += [f"A_{a + 1}{b + 1}" for a in range(dim) for b in range(dim)]
    return cols


def write_csv(obj, dest, prefix="x"):
    """Write a GridPath or RoughPathGrid; floats use 17 significant digits so reading back is exact.

    prefix names the value columns: x for drivers, y for trajectories.
    """
    rough = isinstance(obj, RoughPathGrid)
    base = obj.base if rough else obj
    cols = [base.times[:, None], base.values]
    if rough:
        cols.append(obj.area0.reshape(base.n, -1))
    data = np.hstack(cols)
    with open(dest, "w", newline="") as fh:
        fh.write(",".join(path_header(base.dim, rough, prefix)) + "\n")
        for row in data:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_csv(src):
    """Read a path CSV; a header with A_ab columns yields a RoughPathGrid."""
    with open(src, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigError(f"{src}: line 1: empty file")
    head = [h.strip() for h in rows[0]]
    if not head or head[0] != "t":
        raise ConfigError(f"{src}: line 1: header must start with 't'")
    prefix = head[1][:1] if len(head) > 1 and head[1][:1] in ("x", "y") else "x"
    m = sum(1 for h in head[1:] if h.startswith(prefix + "_"))
    area = len(head) == 1 + m + m * m and m > 0 and head[1 + m:] == path_header(m, True)[1 + m:]
    if m == 0 or head != path_header(m, area, prefix):
        raise ConfigError(f"{src}: line 1: expected columns {','.join(path_header(max(m, 1)))}[,A_ab...]")
    data = []
    for k, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(head):
            raise ConfigError(f"{src}: line {k}: expected {len(head)} fields, got {len(row)}")
        try:
            vals = [float(c) for c in row]
        except ValueError:
            raise ConfigError(f"{src}: line {k}: non-numeric field") from None
        if not np.all(np.isfinite(vals)):
            raise ConfigError(f"{src}: line {k}: non-finite value")
        data.append(vals)
    if len(data) < 2:
        raise ConfigError(f"{src}: need at least two data rows")
    data = np.array(data)
    try:
        base = GridPath(data[:, 0], data[:, 1:1 + m])
        if area:
            return RoughPathGrid(base, data[:, 1 + m:].reshape(-1, m, m))
        return base
    except DomainError as exc:
        raise ConfigError(f"{src}: {exc}") from None


def write_binary(obj, dest):
    """Little-endian header followed by raw float64 times, values and (for rough paths) areas."""
    rough = isinstance(obj, RoughPathGrid)
    base = obj.base if rough else obj
    with open(dest, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, KIND_ROUGH if rough else KIND_PATH, base.n, base.dim))
        fh.write(np.ascontiguousarray(base.times, "<f8").tobytes())
        fh.write(np.ascontiguousarray(base.values, "<f8").tobytes())
        if rough:
            fh.write(np.ascontiguousarray(obj.area0, "<f8").tobytes())


def read_binary(src):
    with open(src, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ConfigError(f"{src}: truncated header")
    magic, version, kind, n, m = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ConfigError(f"{src}: not an rstab binary file")
    if version != VERSION:
        raise ConfigError(f"{src}: unsupported format version {version}")
    if kind not in (KIND_PATH, KIND_ROUGH):
        raise ConfigError(f"{src}: unknown record kind {kind}")
    count = n + n * m + (n * m * m if kind == KIND_ROUGH else 0)
    if len(raw) != _HEADER.size + 8 * count:
        raise ConfigError(f"{src}: payload size does not match header")
    arr = np.frombuffer(raw, "<f8", count, _HEADER.size).astype(float)
    base = GridPath(arr[:n], arr[n:n + n * m].reshape(n, m))
    if kind == KIND_ROUGH:
        return RoughPathGrid(base, arr[n + n * m:].reshape(n, m, m))
    return base


def load(src):
    return read_binary(src) if str(src).endswith(".bin") else read_csv(src)


def save(obj, dest, prefix="x"):
    if str(dest).endswith(".bin"):
        write_binary(obj, dest)
    else:
        write_csv(obj, dest, prefix)
