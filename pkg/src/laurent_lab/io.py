"""CSV tables and JSON run manifests."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import platform
from importlib import metadata
from pathlib import Path

import numpy as np

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1


def format_cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, complex):
        raise TypeError("split complex values into real and imaginary columns")
    return str(v)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        r = list(r)
        if len(r) != len(header):
            raise ValueError(f"row of length {len(r)} under a header of length {len(header)}")
        w.writerow([format_cell(v) for v in r])
    return buf.getvalue()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def _version(dist: str) -> str:
    try:
        return metadata.version(dist)
    except metadata.PackageNotFoundError:
        return "unknown"


def versions() -> dict:
    import scipy

    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "laurent_lab": _version("artifact"),
    }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def build_manifest(config: dict, tables: dict[str, str], summary: dict, wall_time: float,
                   threads: int) -> dict:
    return {
        "manifest_version": MANIFEST_VERSION,
        "config": config,
        "seed": config.get("seed"),
        "threads": threads,
        "versions": versions(),
        "wall_time_s": wall_time,
        "summary": summary,
        "outputs": {name: {"sha256": sha256_text(text), "rows": text.count("\n") - 1}
                    for name, text in sorted(tables.items())},
    }


def write_outputs(out_dir: Path, tables: dict[str, str], manifest: dict) -> list[Path]:
    """Write every table and then the manifest; nothing is computed here."""
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name in sorted(tables):
        p = out_dir / name
        p.write_text(tables[name])
        paths.append(p)
    mp = out_dir / MANIFEST_NAME
    mp.write_text(dumps(manifest))
    paths.append(mp)
    return paths


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]
