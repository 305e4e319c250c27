"""CSV and run-manifest writers shared by the CLI and figure reproduction."""
from __future__ import annotations

import csv
import io
import json
import math
import subprocess
import sys
from datetime import datetime, timezone
from pathlib import Path


def fmt(v) -> str:
    """Shortest round-trip text for floats; plain ``str`` otherwise."""
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if hasattr(v, "item"):  # numpy scalars
        return fmt(v.item())
    return str(v)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        vals = [r.get(h) for h in header] if isinstance(r, dict) else r
        w.writerow([fmt(v) for v in vals])
    return buf.getvalue()


def write_csv(target, header, rows) -> None:
    """Write ``rows`` (dicts keyed by header, or sequences) to a path or stream."""
    text = csv_text(header, rows)
    if target is None or target == "-":
        sys.stdout.write(text)
        return
    if hasattr(target, "write"):
        target.write(text)
        return
    Path(target).write_text(text, newline="\n")


def version_string() -> str:
    """``git describe`` of the source tree when available, else the package version."""
    from . import __version__

    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=here, capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def manifest(command, config: dict, seed) -> dict:
    return {
        "command": command,
        "config": config,
        "seed": seed,
        "version": version_string(),
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def write_manifest(path, command, config: dict, seed) -> dict:
    m = manifest(command, config, seed)
    Path(path).write_text(json.dumps(m, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return m


def _jsonable(v):
    if hasattr(v, "item"):
        return v.item()
    if hasattr(v, "tolist"):
        return v.tolist()
    if isinstance(v, (set, frozenset, tuple)):
        return list(v)
    return str(v)
