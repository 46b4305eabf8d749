"""CSV persistence of radial states and summary tables."""

from __future__ import annotations

import csv

import numpy as np

from .errors import InputError
from .functionals import write_rows
from .grid import RadialState, make_grid


def save_state(state, path):
    g = state.grid
    rows = [{"r": r, "u": u, "v": v} for r, u, v in zip(g.radii, state.u, state.v)]
    return write_rows(path, rows, ["r", "u", "v"])


def read_table(path):
    """Columns of a numeric CSV as float arrays."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    if len(rows) < 2:
        raise InputError(f"{path} has no data rows")
    head = [h.strip() for h in rows[0]]
    try:
        data = np.array([[float(x) if x != "" else np.nan for x in r] for r in rows[1:]])
    except ValueError as exc:
        raise InputError(f"{path}: non-numeric entry ({exc})") from None
    return {h: data[:, i] for i, h in enumerate(head)}


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def load_state(path, grid=None, d=3):
    """Read ``r, u[, v]`` columns; resample by linear interpolation onto ``grid`` if given."""
    cols = read_table(path)
    if "r" not in cols or "u" not in cols:
        raise InputError(f"{path} needs 'r' and 'u' columns")
    r, u = cols["r"], cols["u"]
    v = cols.get("v", np.zeros_like(u))
    if np.any(np.diff(r) <= 0):
        raise InputError(f"{path}: radii must increase")
    if grid is None:
        h = np.diff(r)
        if not np.allclose(h, h[0], rtol=1e-9, atol=1e-12) or abs(r[0]) > 1e-12:
            raise InputError(f"{path}: radii are not a uniform node grid from 0; pass a grid")
        grid = make_grid(d, r.size, float(r[-1]))
        return RadialState(grid, u, v)
    x = grid.radii
    # zero extension beyond the stored range
    uu = np.interp(x, r, u, right=0.0)
    vv = np.interp(x, r, v, right=0.0)
    return RadialState(grid, uu, vv)
