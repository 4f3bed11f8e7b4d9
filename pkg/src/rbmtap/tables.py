"""Minimal CSV/JSON writers shared by the modules and the CLI."""

import csv
import json
from pathlib import Path

import numpy as np


def _fmt(v):
    # numpy scalars print as np.float64(...) under repr; shortest round-trip digits otherwise
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def write_csv(path, header, rows, comments=None):
    """Write a CSV table; ``comments`` become leading ``# key=value`` lines."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for key, value in (comments or {}).items():
            fh.write(f"# {key}={value}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def read_csv(path):
    """Return ``(comments, header, rows)`` with rows as lists of strings."""
    comments, lines = {}, []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            comments[key] = value
        elif line:
            lines.append(line)
    rows = list(csv.reader(lines))
    return comments, rows[0], rows[1:]


def write_json(path, payload):
    path = Path(path)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n",
                    encoding="utf-8")
    return path


def _json_default(obj):
    if hasattr(obj, "tolist"):
        return obj.tolist()
    if hasattr(obj, "item"):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)}")
