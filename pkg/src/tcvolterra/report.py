"""Run artifacts: CSV writing with a fixed byte format, and the run manifest."""

from __future__ import annotations

import csv
import hashlib
import json
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np


def fmt(v) -> str:
    """Shortest round-trip text for numbers, ``'.'`` decimals, no locale."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return path


def columns_csv(path, **cols) -> Path:
    """Write equal-length columns; the keyword order is the column order."""
    names = list(cols)
    arrays = [np.asarray(cols[k]) for k in names]
    return write_csv(path, names, zip(*arrays))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def versions() -> dict:
    from . import __version__

    out = {"tcvolterra": __version__, "python": platform.python_version(), "numpy": np.__version__}
    for mod in ("yaml", "pydantic", "matplotlib"):
        m = sys.modules.get(mod)
        if m is not None:
            out[mod] = getattr(m, "__version__", getattr(m, "VERSION", "unknown"))
    return out


def write_manifest(out_dir, command: str, cfg, outputs, summary: dict, status: int) -> Path:
    """Manifest with everything needed to reproduce the run; only ``created`` varies between reruns."""
    out_dir = Path(out_dir)
    files = {}
    for p in sorted(outputs, key=lambda q: Path(q).name):
        p = Path(p)
        files[p.name] = sha256_file(p)
    doc = {
        "command": command,
        "config_hash": cfg.digest(),
        "config": cfg.model_dump(mode="json"),
        "seed": cfg.ensemble.seed,
        "n_paths": cfg.ensemble.n_paths,
        "versions": versions(),
        "outputs": files,
        "summary": summary,
        "exit_status": status,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    path = out_dir / "manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")
    return path


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    return str(v)
