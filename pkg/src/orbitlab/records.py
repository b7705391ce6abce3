"""Result records: canonical JSON, payload hashes and per-series CSV files."""

from __future__ import annotations

import hashlib
import json
import math
import os
from pathlib import Path

import numpy as np

from . import __version__


def _clean(obj):
    """Convert numpy scalars/arrays and non-finite floats into canonical JSON values."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def canonical_json(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, separators=(",", ":"))


def payload_hash(payload: dict) -> str:
    return hashlib.sha256(canonical_json(payload).encode()).hexdigest()


def make_record(config: dict, payload: dict, timing: dict, counts: dict, valid: bool = True,
                certificates: dict | None = None) -> dict:
    payload = _clean(payload)
    return {
        "code_version": __version__,
        "config": config,
        "valid": valid,
        "certificates": _clean(certificates or {}),
        "payload": payload,
        "payload_hash": payload_hash(payload),
        "element_counts": _clean(counts),
        "timing": _clean(timing),
    }


def write_record(out_dir, record: dict, series: dict | None = None) -> Path:
    """Write record.json plus one CSV per entry of ``series`` (name -> object with write_csv)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "record.json"
    tmp = out / "record.json.tmp"
    tmp.write_text(json.dumps(_clean(record), sort_keys=True, indent=2) + "\n")
    os.replace(tmp, path)
    for name, obj in (series or {}).items():
        obj.write_csv(out / f"{name}.csv")
    return path


def read_record(path) -> dict:
    p = Path(path)
    if p.is_dir():
        p = p / "record.json"
    return json.loads(p.read_text())


def summarize(record: dict) -> list:
    """Human-readable lines for the ``report`` subcommand."""
    cfg = record["config"]
    lines = [f"kind: {cfg['kind']}  seed: {cfg['seed']}  valid: {record['valid']}",
             f"payload hash: {record['payload_hash']}",
             f"code version: {record['code_version']}"]
    for k, v in sorted(record.get("element_counts", {}).items()):
        lines.append(f"elements[{k}]: {v}")
    for k, v in sorted(record.get("payload", {}).get("summary", {}).items()):
        lines.append(f"{k}: {v}")
    for k, v in sorted(record.get("timing", {}).items()):
        lines.append(f"time[{k}]: {v:.2f}s" if isinstance(v, float) else f"time[{k}]: {v}")
    return lines
