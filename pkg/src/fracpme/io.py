"""On-disk formats and initial data.

A snapshot file is a text header of ``key: value`` lines (format_version, n,
s, L, N, time, mode), a blank line, then the N^n cell values in row-major
order with 17 significant digits, so write-then-read reproduces a Field bit
for bit.  Diagnostics go to CSV with the fixed column set from the
diagnostics module, formatted deterministically: identical runs produce
byte-identical files.

Datum constructors build nonnegative Fields on a caller-supplied grid.  The
box uses exact cell-average overlap fractions, which makes its mass exactly
width^n * height regardless of the grid; the parabola cap and the truncated
gaussian sample cell centers.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .diagnostics import CSV_COLUMNS, DiagnosticsSeries
from .grid import Field, Grid

SNAPSHOT_VERSION = 1
HEADER_KEYS = ("format_version", "n", "s", "L", "N", "time", "mode")
GAUSSIAN_CUTOFF = 1e-14  # relative truncation of the sampled tail
_VALUES_PER_LINE = 8


def write_snapshot(path, v: Field, s: float, time: float, mode: str) -> None:
    """Write one field with enough header context to rebuild it."""
    grid = v.grid
    lines = [
        f"format_version: {SNAPSHOT_VERSION}",
        f"n: {grid.dim}",
        f"s: {s:.17g}",
        f"L: {grid.half_width:.17g}",
        f"N: {grid.points_per_axis}",
        f"time: {time:.17g}",
        f"mode: {mode}",
        "",
    ]
    flat = v.values.ravel()
    for start in range(0, flat.size, _VALUES_PER_LINE):
        chunk = flat[start:start + _VALUES_PER_LINE]
        lines.append(" ".join(f"{x:.16e}" for x in chunk))
    Path(path).write_text("\n".join(lines) + "\n")


def read_snapshot(path) -> tuple:
    """Inverse of write_snapshot: (Field, header dict).

    The header must carry exactly the documented keys; the value count must
    match N^n."""
    text = Path(path).read_text()
    try:
        head, body = text.split("\n\n", 1)
    except ValueError:
        raise ValueError(f"{path}: missing blank line after the header") from None
    header = {}
    for line in head.splitlines():
        key, sep, value = line.partition(":")
        if not sep:
            raise ValueError(f"{path}: malformed header line {line!r}")
        header[key.strip()] = value.strip()
    missing = [k for k in HEADER_KEYS if k not in header]
    if missing:
        raise ValueError(f"{path}: header lacks {missing}")
    unknown = sorted(set(header) - set(HEADER_KEYS))
    if unknown:
        raise ValueError(f"{path}: unknown header keys {unknown}")
    if int(header["format_version"]) != SNAPSHOT_VERSION:
        raise ValueError(
            f"{path}: format version {header['format_version']} unsupported"
        )
    dim = int(header["n"])
    npts = int(header["N"])
    grid = Grid(dim, float(header["L"]), npts)
    values = np.array(body.split(), dtype=float)
    if values.size != npts**dim:
        raise ValueError(
            f"{path}: expected {npts**dim} values, found {values.size}"
        )
    parsed = {
        "format_version": SNAPSHOT_VERSION,
        "n": dim,
        "s": float(header["s"]),
        "L": float(header["L"]),
        "N": npts,
        "time": float(header["time"]),
        "mode": header["mode"],
    }
    return Field(grid, values.reshape(grid.shape), kind="generic"), parsed


def write_diagnostics(path, series: DiagnosticsSeries) -> None:
    lines = [",".join(CSV_COLUMNS)]
    for rec in series.records:
        lines.append(",".join(f"{x:.17g}" for x in rec.row()))
    Path(path).write_text("\n".join(lines) + "\n")


def read_diagnostics(path) -> dict:
    """Columns of a diagnostics CSV as float arrays, keyed by column name."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != ",".join(CSV_COLUMNS):
        raise ValueError(f"{path}: bad or missing diagnostics header")
    rows = [np.array(line.split(","), dtype=float) for line in lines[1:]]
    if any(r.size != len(CSV_COLUMNS) for r in rows):
        raise ValueError(f"{path}: ragged diagnostics row")
    table = np.array(rows) if rows else np.empty((0, len(CSV_COLUMNS)))
    return {name: table[:, j] for j, name in enumerate(CSV_COLUMNS)}


def datum_box(grid: Grid, center: float, width: float, height: float) -> Field:
    """Axis-aligned box of the given amplitude, exact cell averages."""
    if width <= 0.0 or height <= 0.0:
        raise ValueError(f"box needs positive width and height, got {width}, {height}")
    axis = grid.axis()
    edges = np.concatenate(([axis[0] - grid.spacing / 2], axis + grid.spacing / 2))
    lo, hi = center - width / 2.0, center + width / 2.0
    frac = np.clip(np.minimum(edges[1:], hi) - np.maximum(edges[:-1], lo),
                   0.0, None) / grid.spacing
    vals = frac if grid.dim == 1 else np.multiply.outer(frac, frac)
    return Field(grid, height * vals, kind="density")


def datum_parabola_cap(grid: Grid, a: float, b: float) -> Field:
    """a ((b - |x|)_+)^2, sampled at cell centers."""
    if a <= 0.0 or b <= 0.0:
        raise ValueError(f"parabola cap needs positive a and b, got {a}, {b}")
    r = np.sqrt(grid.radius2())
    return Field(grid, a * np.clip(b - r, 0.0, None) ** 2, kind="density")


def datum_gaussian(grid: Grid, sigma: float) -> Field:
    """exp(-|x|^2 / 2 sigma^2) with the tail below GAUSSIAN_CUTOFF zeroed,
    so the datum is compactly supported like everything else we evolve."""
    if sigma <= 0.0:
        raise ValueError(f"gaussian needs positive sigma, got {sigma}")
    vals = np.exp(-grid.radius2() / (2.0 * sigma * sigma))
    vals[vals < GAUSSIAN_CUTOFF] = 0.0
    return Field(grid, vals, kind="density")


def parse_datum(text: str) -> tuple:
    """Parse a datum spec like box(0,2,1) into (name, args).

    Shapes: box(center,width,height), parabola_cap(a,b),
    gaussian_truncated(sigma), from_file(path).  Numeric arity is checked
    here; value constraints surface when the datum is built."""
    text = text.strip()
    if "(" not in text or not text.endswith(")"):
        raise ValueError(f"datum spec {text!r} is not name(args)")
    name, _, inner = text[:-1].partition("(")
    name = name.strip()
    parts = [p.strip() for p in inner.split(",")] if inner.strip() else []
    arity = {"box": 3, "parabola_cap": 2, "gaussian_truncated": 1, "from_file": 1}
    if name not in arity:
        raise ValueError(f"unknown datum shape {name!r}")
    if len(parts) != arity[name]:
        raise ValueError(
            f"datum {name} takes {arity[name]} argument(s), got {len(parts)}"
        )
    if name == "from_file":
        return name, (parts[0],)
    try:
        args = tuple(float(p) for p in parts)
    except ValueError:
        raise ValueError(f"datum {name}: non-numeric argument in {parts}") from None
    return name, args


def build_datum(name: str, args: tuple, grid: Grid) -> Field:
    """Construct the named datum on the grid; from_file must match the grid."""
    if name == "box":
        return datum_box(grid, *args)
    if name == "parabola_cap":
        return datum_parabola_cap(grid, *args)
    if name == "gaussian_truncated":
        return datum_gaussian(grid, *args)
    if name == "from_file":
        loaded, _ = read_snapshot(args[0])
        if not loaded.grid.compatible(grid):
            raise ValueError(
                f"{args[0]}: snapshot grid (n={loaded.grid.dim}, "
                f"L={loaded.grid.half_width}, N={loaded.grid.points_per_axis}) "
                f"does not match the configured grid"
            )
        return Field(grid, loaded.values, kind="density")
    raise ValueError(f"unknown datum shape {name!r}")
