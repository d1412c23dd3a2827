"""Shared output plumbing: stable config hashes and commented CSV files.

Reports carry a fingerprint of every parameter that influenced them so a
re-run can be checked for determinism by comparing a single string.  No
timestamps anywhere: identical inputs must produce identical bytes.
"""

from __future__ import annotations

import hashlib
import json
from typing import Iterable, Mapping, Sequence

import numpy as np


def _plain(obj):
    """Coerce to JSON-stable primitives; unknown objects go through str."""
    if isinstance(obj, Mapping):
        return {str(k): _plain(v) for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        # repr round-trips doubles exactly, so 0.1 and 0.1000... differ
        # from 0.1 + 1e-17 only if the doubles differ
        return repr(float(obj))
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def canonical_json(cfg) -> str:
    return json.dumps(_plain(cfg), sort_keys=True, separators=(",", ":"))


def config_fingerprint(cfg) -> str:
    """12-hex digest identifying a parameter set."""
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()[:12]


def fmt_number(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.12g" % float(x)
    return str(x)


def write_csv(
    path,
    columns: Sequence[str],
    rows: Iterable[Sequence],
    comments: Iterable[str] = (),
) -> None:
    """Write a delimited table with '# key: value' comment lines on top."""
    lines = [f"# {c}" for c in comments]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(fmt_number(v) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def file_digest(path) -> str:
    """sha256 of a file's bytes, 12 hex chars, for determinism checks."""
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()[:12]
