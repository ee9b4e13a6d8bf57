"""Uniform periodic lattices on the flat torus (dimension 1 or 2).

Axis coordinates are j*h for j = 0..n-1 with spacing h = 1/n, and every
index operation wraps around, so difference quotients never meet a
boundary.  Discrete fields are immutable once built; all operators return
fresh arrays.  One-sided differences satisfy the exact shift identity
``roll(D+u, 1, axis) == D-u`` bit for bit, which downstream monotonicity
tests rely on.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "Grid",
    "GridFunction",
    "sample",
    "one_sided_diffs",
    "diff_arrays",
    "sup_norm",
    "osc",
    "linf_distance",
    "interp_periodic",
    "save_csv",
    "load_csv",
    "save_binary",
    "load_binary",
]

# 2D guard: a 512^2 grid is the largest the explicit solvers handle in
# reasonable time; refuse anything bigger up front.
_MAX_N_2D = 512


@dataclass(frozen=True)
class Grid:
    """Uniform tensor lattice with wrap-around indexing."""

    dim: int
    n: int

    def __post_init__(self) -> None:
        if self.dim not in (1, 2):
            raise ValueError(f"grid dimension must be 1 or 2, got {self.dim}")
        if self.n < 8:
            raise ValueError(f"need at least 8 points per axis, got {self.n}")
        if self.dim == 2 and self.n > _MAX_N_2D:
            raise ValueError(
                f"2D grids are capped at {_MAX_N_2D} points per axis, got {self.n}"
            )

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def num_nodes(self) -> int:
        return self.n**self.dim

    def axis_coords(self) -> np.ndarray:
        return np.arange(self.n) / self.n

    def mesh(self) -> np.ndarray:
        """Node coordinates, shape ``grid.shape + (dim,)``."""
        c = self.axis_coords()
        if self.dim == 1:
            return c[:, None]
        xx, yy = np.meshgrid(c, c, indexing="ij")
        return np.stack([xx, yy], axis=-1)

    def nodes(self) -> np.ndarray:
        """Flat list of node coordinates, shape (num_nodes, dim)."""
        return self.mesh().reshape(-1, self.dim)

    def node_index(self, x) -> tuple[int, ...]:
        """Multi-index of the lattice node nearest to the torus point x."""
        xa = np.atleast_1d(np.asarray(x, dtype=float))
        if xa.shape != (self.dim,):
            raise ValueError(f"point must have {self.dim} coordinates, got {xa.shape}")
        idx = np.rint(xa * self.n).astype(int) % self.n
        return tuple(int(i) for i in idx)


@dataclass(frozen=True)
class GridFunction:
    """Real-valued field on a Grid.  Values are locked after construction."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=float)  # private copy
        if v.shape != self.grid.shape:
            raise ValueError(
                f"values shape {v.shape} does not match grid shape {self.grid.shape}"
            )
        if not np.all(np.isfinite(v)):
            bad = int(np.flatnonzero(~np.isfinite(v))[0])
            raise ValueError(f"non-finite value at flat node {bad}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


def sample(fn: Callable, grid: Grid) -> GridFunction:
    """Evaluate ``fn`` at every node.  ``fn`` takes points shaped (..., dim)."""
    vals = np.asarray(fn(grid.mesh()), dtype=float)
    if vals.shape != grid.shape:
        vals = np.broadcast_to(vals, grid.shape).copy()
    return GridFunction(grid, vals)


def diff_arrays(values: np.ndarray, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Backward/forward difference quotients of a raw value array.

    Returns ``(dminus, dplus)``, each shaped ``grid.shape + (dim,)`` with the
    axis index in the trailing slot, matching the (x, p) convention of the
    Hamiltonian evaluators.
    """
    h = grid.h
    dminus = np.empty(values.shape + (grid.dim,))
    dplus = np.empty_like(dminus)
    for k in range(grid.dim):
        dminus[..., k] = (values - np.roll(values, 1, axis=k)) / h
        dplus[..., k] = (np.roll(values, -1, axis=k) - values) / h
    return dminus, dplus


def one_sided_diffs(u: GridFunction) -> tuple[np.ndarray, np.ndarray]:
    """Periodic one-sided difference quotients of a GridFunction."""
    return diff_arrays(u.values, u.grid)


def sup_norm(u: GridFunction | np.ndarray) -> float:
    v = u.values if isinstance(u, GridFunction) else np.asarray(u)
    return float(np.max(np.abs(v)))


def osc(u: GridFunction | np.ndarray) -> float:
    v = u.values if isinstance(u, GridFunction) else np.asarray(u)
    return float(np.max(v) - np.min(v))


def linf_distance(u: GridFunction, w: GridFunction) -> float:
    if u.grid != w.grid:
        raise ValueError("grid mismatch")
    return float(np.max(np.abs(u.values - w.values)))


def interp_periodic(values: np.ndarray, grid: Grid, points: np.ndarray) -> np.ndarray:
    """Multilinear periodic interpolation of node values at arbitrary points.

    ``points`` has shape (k, dim); returns shape (k,).
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.shape[-1] != grid.dim:
        raise ValueError(f"points must have {grid.dim} coordinates")
    n = grid.n
    s = pts * n
    i0 = np.floor(s).astype(int)
    w = s - i0
    i0 %= n
    i1 = (i0 + 1) % n
    if grid.dim == 1:
        a, b = i0[:, 0], i1[:, 0]
        return (1 - w[:, 0]) * values[a] + w[:, 0] * values[b]
    ax, bx, ay, by = i0[:, 0], i1[:, 0], i0[:, 1], i1[:, 1]
    wx, wy = w[:, 0], w[:, 1]
    return (
        (1 - wx) * (1 - wy) * values[ax, ay]
        + wx * (1 - wy) * values[bx, ay]
        + (1 - wx) * wy * values[ax, by]
        + wx * wy * values[bx, by]
    )


# -- serialization ----------------------------------------------------------
#
# CSV: one row per node, "index,x[,y],value", floats via repr (round-trip).
# Binary: int32 little-endian header (dim, n), then row-major float64
# little-endian values.


def save_csv(u: GridFunction, path) -> None:
    pts = u.grid.nodes()
    flat = u.values.reshape(-1)
    cols = "index," + ",".join("xy"[k] for k in range(u.grid.dim)) + ",value"
    lines = [cols]
    for i in range(flat.size):
        coords = ",".join(repr(float(c)) for c in pts[i])
        lines.append(f"{i},{coords},{float(flat[i])!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_csv(path) -> GridFunction:
    with open(path) as fh:
        rows = [ln.strip() for ln in fh if ln.strip()]
    header = rows[0].split(",")
    dim = len(header) - 2
    flat = np.array([float(r.split(",")[-1]) for r in rows[1:]])
    n = round(flat.size ** (1.0 / dim))
    grid = Grid(dim, n)
    return GridFunction(grid, flat.reshape(grid.shape))


def save_binary(u: GridFunction, path) -> None:
    with open(path, "wb") as fh:
        fh.write(np.array([u.grid.dim, u.grid.n], dtype="<i4").tobytes())
        fh.write(np.ascontiguousarray(u.values, dtype="<f8").tobytes())


def load_binary(path) -> GridFunction:
    with open(path, "rb") as fh:
        raw = fh.read()
    dim, n = (int(v) for v in np.frombuffer(raw[:8], dtype="<i4"))
    grid = Grid(dim, n)
    vals = np.frombuffer(raw[8:], dtype="<f8").reshape(grid.shape)
    return GridFunction(grid, vals)
