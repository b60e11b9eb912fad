"""Versioned CSV tables and a small binary container for fields and measures."""
from __future__ import annotations

import csv
import io as _io
import json
import struct
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

TABLE_VERSION = 1
CONTAINER_VERSION = 1
MAGIC = b"SFSRDE\x00\x01"


def fmt(v) -> str:
    """Deterministic text for a table cell (shortest round-trip float repr)."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if v != v:
            return "nan"
        return repr(v)
    return str(v)


def csv_body(columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def write_table(path: str | Path, kind: str, columns: Sequence[str], rows: Iterable[Sequence],
                meta: dict | None = None) -> Path:
    """CSV with a ``# slowfast-srde table`` header line; metadata goes to a JSON sidecar."""
    path = Path(path)
    header = f"# slowfast-srde table v{TABLE_VERSION} kind={kind}\n"
    path.write_text(header + csv_body(columns, rows))
    if meta is not None:
        Path(str(path) + ".meta.json").write_text(dumps(meta) + "\n")
    return path


def read_table(path: str | Path) -> tuple[str, list[str], list[list[str]]]:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# slowfast-srde table"):
        raise ValueError(f"{path}: not a slowfast-srde table")
    kind = lines[0].split("kind=", 1)[1].strip()
    rows = list(csv.reader(lines[1:]))
    return kind, rows[0], rows[1:]


def table_body(path: str | Path) -> str:
    """Everything after the header line; this is what reruns must reproduce."""
    return Path(path).read_text().split("\n", 1)[1]


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _strict(o):
    """Replace non-finite floats by the strings "inf", "-inf", "nan" (strict JSON)."""
    if isinstance(o, dict):
        return {k: _strict(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_strict(v) for v in o]
    if isinstance(o, np.ndarray):
        return _strict(o.tolist())
    if isinstance(o, (float, np.floating)) and not np.isfinite(o):
        return fmt(float(o))
    return o


def dumps(obj: Any) -> str:
    return json.dumps(_strict(obj), indent=2, sort_keys=True, default=_json_default,
                      allow_nan=False)


# --------------------------------------------------------------------------
# binary container: magic, u32 header length, JSON header, raw little-endian arrays


def write_container(path: str | Path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> Path:
    entries = []
    blobs = []
    offset = 0
    for name, a in arrays.items():
        a = np.ascontiguousarray(a)
        dt = a.dtype.newbyteorder("<") if a.dtype.byteorder not in ("|",) else a.dtype
        b = a.astype(dt, copy=False).tobytes()
        entries.append({"name": name, "dtype": dt.str, "shape": list(a.shape),
                        "offset": offset, "nbytes": len(b)})
        blobs.append(b)
        offset += len(b)
    header = json.dumps({"version": CONTAINER_VERSION, "arrays": entries, "meta": meta or {}},
                        sort_keys=True, default=_json_default).encode()
    path = Path(path)
    with path.open("wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        for b in blobs:
            f.write(b)
    return path


def read_container(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise ValueError(f"{path}: not a slowfast-srde container")
    n = struct.unpack_from("<I", data, len(MAGIC))[0]
    start = len(MAGIC) + 4
    head = json.loads(data[start : start + n])
    if head.get("version") != CONTAINER_VERSION:
        raise ValueError(f"{path}: unsupported container version {head.get('version')}")
    base = start + n
    out = {}
    for e in head["arrays"]:
        buf = data[base + e["offset"] : base + e["offset"] + e["nbytes"]]
        out[e["name"]] = np.frombuffer(buf, dtype=np.dtype(e["dtype"])).reshape(e["shape"]).copy()
    return out, head["meta"]
