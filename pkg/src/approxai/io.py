"""File formats: CSV vectors/matrices/signals, PGM heatmaps, JSON config and reports."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from pathlib import Path

import numpy as np

from .apxfft import ComplexSignal, is_pow2
from .apxnum import EnergyTable
from .errors import ParseError, SchemaVersionError

SCHEMA_VERSION = 1
CONFIG_ENV = "APPROXAI_CONFIG"


def _rows(path) -> list:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror or exc}") from None
    rows = []
    for lineno, row in enumerate(csv.reader(text.splitlines()), start=1):
        cells = [c.strip() for c in row]
        if not cells or all(c == "" for c in cells) or cells[0].startswith("#"):
            continue
        try:
            vals = [float(c) for c in cells]
        except ValueError:
            raise ParseError(f"{path}:{lineno}: non-numeric value in {row!r}") from None
        if not all(math.isfinite(v) for v in vals):
            raise ParseError(f"{path}:{lineno}: non-finite value")
        rows.append(vals)
    if not rows:
        raise ParseError(f"{path}: no data")
    return rows


def read_matrix(path) -> np.ndarray:
    rows = _rows(path)
    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise ParseError(f"{path}: row {i + 1} has {len(r)} columns, expected {width}")
    return np.array(rows, dtype=np.float64)


def read_vector(path) -> np.ndarray:
    """A vector may be written as one row or one column."""
    return read_matrix(path).reshape(-1)


def read_signal(path) -> ComplexSignal:
    """One sample per line: ``re`` or ``re,im``."""
    rows = _rows(path)
    if any(len(r) not in (1, 2) for r in rows):
        raise ParseError(f"{path}: signal rows must be 're' or 're,im'")
    re = np.array([r[0] for r in rows])
    im = np.array([r[1] if len(r) == 2 else 0.0 for r in rows])
    if not is_pow2(len(rows)):
        raise ParseError(f"{path}: signal length {len(rows)} is not a power of two")
    return ComplexSignal.from_complex(re + 1j * im)


def _fmt(v: float) -> str:
    return repr(float(v))


def format_csv(a) -> str:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim <= 1:
        a = a.reshape(-1, 1)
    elif a.ndim > 2:
        a = a.reshape(a.shape[0], -1)
    return "".join(",".join(_fmt(v) for v in row) + "\n" for row in a)


def format_signal_csv(sig: ComplexSignal) -> str:
    return "".join(f"{_fmt(r)},{_fmt(i)}\n" for r, i in zip(sig.re.reshape(-1), sig.im.reshape(-1)))


def format_pgm(a) -> str:
    """ASCII P2 greymap, values min-max scaled to 0..255 (constant maps are all 0)."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    lo, hi = float(a.min()), float(a.max())
    if hi > lo:
        g = np.rint((a - lo) / (hi - lo) * 255).astype(int)
    else:
        g = np.zeros(a.shape, dtype=int)
    lines = ["P2", f"{a.shape[1]} {a.shape[0]}", "255"]
    lines += [" ".join(str(v) for v in row) for row in g]
    return "\n".join(lines) + "\n"


def read_pgm(path) -> np.ndarray:
    tokens = [t for line in Path(path).read_text().splitlines()
              if not line.startswith("#") for t in line.split()]
    if not tokens or tokens[0] != "P2":
        raise ParseError(f"{path}: not an ASCII PGM")
    w, h, maxval = (int(t) for t in tokens[1:4])
    data = np.array([int(t) for t in tokens[4:]])
    if data.size != w * h or data.max(initial=0) > maxval:
        raise ParseError(f"{path}: pixel count or range mismatch")
    return data.reshape(h, w)


def load_json(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror or exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None


def config_path(explicit=None):
    """Explicit path, else ``$APPROXAI_CONFIG``, else ``None``."""
    if explicit:
        return Path(explicit)
    env = os.environ.get(CONFIG_ENV)
    return Path(env) if env else None


def load_config(path=None) -> dict:
    """Read a JSON run config; an absent config is an empty dict.

    Recognized keys: ``schema_version``, ``energy_table`` (12 costs),
    ``workers``, ``seed``, ``level``, ``schedule``, ``psnr_db``, ``prob``.
    """
    path = config_path(path)
    if path is None:
        return {}
    cfg = load_json(path)
    if not isinstance(cfg, dict):
        raise ParseError(f"{path}: config must be a JSON object")
    version = cfg.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(f"{path}: unsupported schema_version {version!r}")
    return cfg


def energy_table(cfg: dict) -> EnergyTable:
    return EnergyTable.from_config(cfg) if "energy_table" in cfg else EnergyTable()


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def format_report(report: dict) -> str:
    body = {"schema_version": SCHEMA_VERSION, **_jsonable(report)}
    return json.dumps(body, indent=2, sort_keys=True) + "\n"


def write_outputs(out_dir, files: dict) -> list:
    """Write ``{name: text}`` under ``out_dir``; everything is formatted before the first write."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in files.items():
        p = out_dir / name
        p.write_text(text)
        written.append(p)
    return written
