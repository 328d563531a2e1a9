"""CSV and JSON readers and writers with full double precision."""

import csv
import json
import math

import numpy as np

from .errors import ConfigError
from .forward import BinningScheme
from .simulate import BinnedCounts

__all__ = ["fmt", "write_table", "read_table", "write_histogram", "read_histogram", "write_json", "read_json"]


def fmt(x):
    """Shortest text that round-trips ``x`` (17 significant digits at most)."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


def write_table(path, header, columns):
    """Write equal-length columns under ``header``; ``None`` columns are skipped."""
    pairs = [(h, c) for h, c in zip(header, columns) if c is not None]
    n = len(pairs[0][1])
    if any(len(c) != n for _, c in pairs):
        raise ValueError("columns have different lengths")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([h for h, _ in pairs])
        for i in range(n):
            w.writerow([fmt(c[i]) for _, c in pairs])


def read_table(path):
    """Read a CSV with a header row into a dict of float arrays."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError:
        raise ConfigError(f"no such file: {path}") from None
    if not rows:
        raise ConfigError(f"{path} is empty")
    header, body = rows[0], rows[1:]
    try:
        data = np.array([[float(v) for v in r] for r in body if r], dtype=float).reshape(-1, len(header))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return {h: data[:, k] for k, h in enumerate(header)}


def write_histogram(path, counts):
    b = counts.binning
    write_table(path, ["bin_lower", "bin_upper", "count"], [b.lower, b.upper, counts.y])


def read_histogram(path):
    """Read ``bin_lower, bin_upper, count`` rows; bins must be contiguous and counts integral."""
    t = read_table(path)
    missing = {"bin_lower", "bin_upper", "count"} - set(t)
    if missing:
        raise ConfigError(f"{path}: missing columns {sorted(missing)}")
    lo, hi, y = t["bin_lower"], t["bin_upper"], t["count"]
    if lo.size == 0:
        raise ConfigError(f"{path}: no bins")
    if not np.array_equal(lo[1:], hi[:-1]):
        raise ConfigError(f"{path}: bins are not contiguous")
    return BinnedCounts(y, BinningScheme(np.append(lo, hi[-1])))


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
