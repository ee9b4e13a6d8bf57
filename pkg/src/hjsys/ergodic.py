"""Large-time constants via the discounted approximation and via drift rates.

For each discount lambda the stationary system

    lambda v_i + H_i(x, Dv_i) + sum_j d_ij(x) v_j = 0

is solved by marching its evolution counterpart to steady state with the
same monotone flux used everywhere else.  Plain marching relaxes the
quasi-constant mode only at rate lambda, which is hopeless for the smallest
discounts, so the march is accelerated with an exact extrapolation of that
mode: adding a constant beta to every component changes the residual
r = -(lambda v + H + Dv) by exactly -lambda beta (constants are in the
coupling kernel and drop out of the differences), so once the residual is
nearly flat the jump beta = mean(r)/lambda lands the constant mode on the
fixed point.  Convergence is still declared only by the unaccelerated
criterion: sup-norm residual (time increment per unit time) below tolerance.

The schedule halves lambda from 0.1 down to ~1.6e-3.  Each solve warm
starts from the previous one with only its quasi-constant mode rescaled
(v^lambda ~ const/lambda + profile + O(lambda), so the profile part carries
over unchanged), and the first solve on a fine grid bootstraps from a 4x
coarser one.  Estimates c_i = -lambda v_i(anchor) are refined by two-point
linear extrapolation in lambda (error O(lambda) -> O(lambda^2); flagged in
the result).  The normalized correctors subtract the single scalar
v_1(anchor) from every component, so inter-component gaps are preserved.

``long_time_constant`` is the independent cross-check: the least-squares
drift of -u_i(anchor, t) over the trailing window of an undiscounted solve.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .coupling import is_irreducible, validate_monotone
from .errors import ConfigError, ConvergenceError, DivergenceError, StructureError
from .evolution import HJSystem, _flux_stack, _check_cfl_budget
from .grid import Grid, GridFunction, diff_arrays, interp_periodic, save_binary

__all__ = [
    "DiscountSchedule",
    "DiscountInfo",
    "ErgodicResult",
    "solve_discounted",
    "estimate_ergodic_constant",
    "long_time_constant",
]


@dataclass(frozen=True)
class DiscountSchedule:
    """Geometric discount schedule plus solver knobs.

    ``cfl`` here is the fraction of the combined explicit budget: the march
    step is dt = cfl / (N max_alpha / h + max d_ii + lambda), which keeps
    the full update (flux dissipation plus diagonal damping) monotone for
    cfl <= 1.
    """

    lambdas: tuple = tuple(0.1 * 2.0**-k for k in range(7))
    steady_state_tol: float = 1e-8
    anchor: tuple = (0.0,)
    cfl: float = 0.9
    flux_mode: str = "local"
    max_steps_per_lambda: int = 2_000_000
    coarse_init_below: int = 96  # grids at least this fine start from a coarse solve

    def __post_init__(self) -> None:
        lams = tuple(float(l) for l in self.lambdas)
        if not lams:
            raise ConfigError("schedule needs at least one lambda")
        if any(not (0 < l < 1) for l in lams):
            raise ConfigError(f"discounts must lie in (0, 1): {lams}")
        if any(b >= a for a, b in zip(lams, lams[1:])):
            raise ConfigError("discounts must be strictly decreasing")
        if self.steady_state_tol <= 0:
            raise ConfigError("steady_state_tol must be positive")
        if not (0 < self.cfl <= 1):
            raise ConfigError(f"cfl must lie in (0, 1], got {self.cfl}")
        object.__setattr__(self, "lambdas", lams)
        object.__setattr__(self, "anchor", tuple(float(a) for a in self.anchor))


@dataclass
class DiscountInfo:
    lam: float
    steps: int
    jumps: int
    final_residual: float
    residual_history: list
    min_value: float
    scaled_sup: float  # lambda * sup v


def _coupling_apply(system: HJSystem, nodes_D: np.ndarray | None, values: np.ndarray):
    if nodes_D is None:
        return np.tensordot(system.coupling.entries, values, axes=(1, 0))
    m = values.shape[0]
    flat = values.reshape(m, -1)
    out = np.einsum("kij,jk->ik", nodes_D, flat)
    return out.reshape(values.shape)


def _prepare_field_coupling(system: HJSystem) -> np.ndarray | None:
    if system.coupling.variant == "constant":
        return None
    nodes = system.grid.nodes()
    D = system.coupling.sample_at(nodes)
    step_ = max(1, len(nodes) // 64)
    for k in range(0, len(nodes), step_):
        ok, violations = validate_monotone(D[k])
        if not ok:
            raise StructureError(
                f"field coupling not monotone at x = {nodes[k].tolist()}: {violations[:2]}"
            )
        if not is_irreducible(D[k]):
            raise StructureError(
                f"field coupling reducible at x = {nodes[k].tolist()}"
            )
    return D


def _coarse_start(
    system: HJSystem, lam: float, schedule: DiscountSchedule
) -> np.ndarray:
    """Initial guess from a solve on a 4x coarser grid, interpolated up."""
    grid = system.grid
    coarse = HJSystem(
        hams=system.hams,
        coupling=system.coupling,
        grid=Grid(grid.dim, max(32, grid.n // 4)),
    )
    vc, _ = solve_discounted(coarse, lam, schedule)
    fine_nodes = grid.nodes()
    out = np.empty((system.m,) + grid.shape)
    for i in range(system.m):
        out[i] = interp_periodic(vc[i], coarse.grid, fine_nodes).reshape(grid.shape)
    return out


def solve_discounted(
    system: HJSystem,
    lam: float,
    schedule: DiscountSchedule = DiscountSchedule(),
    v0: np.ndarray | None = None,
) -> tuple[np.ndarray, DiscountInfo]:
    """March the discounted system to steady state; see module docstring.

    Returns the stationary values (m,) + grid.shape and solve metadata.
    The nonnegativity expected of the discounted solutions (for sources
    with H(x, 0) <= 0) is reported, not enforced: ``info.min_value``.
    Fine grids bootstrap from a 4x coarser solve unless a start value is
    supplied.
    """
    if not (0 < lam < 1):
        raise ConfigError(f"discount must lie in (0, 1), got {lam}")
    for i, h in enumerate(system.hams):
        if "coercive" not in h.class_tags:
            raise StructureError(f"Hamiltonian {i} is not tagged coercive")
    grid = system.grid
    if v0 is None and grid.n >= schedule.coarse_init_below:
        v0 = _coarse_start(system, lam, schedule)
    X = grid.mesh()
    nodes_D = _prepare_field_coupling(system)
    h = grid.h
    amax = max(hm.lf_alpha for hm in system.hams)
    if nodes_D is None:
        dmax = float(np.max(np.diag(system.coupling.entries)))
    else:
        dmax = float(np.max(np.diagonal(nodes_D, axis1=-2, axis2=-1)))
    dt = schedule.cfl / (grid.dim * amax / h + dmax + lam)

    v = np.zeros((system.m,) + grid.shape) if v0 is None else np.array(v0, dtype=float)
    tol = schedule.steady_state_tol
    jumps = 0
    since_jump = 10**9
    history: list[float] = []
    checked_cfl = False
    for n in range(schedule.max_steps_per_lambda):
        flux, alpha_sums = _flux_stack(system, v, X, schedule.flux_mode)
        if not checked_cfl:
            _check_cfl_budget(system, alpha_sums, dt, lam=lam)
            checked_cfl = True
        r = -(lam * v + flux + _coupling_apply(system, nodes_D, v))
        rmax = float(np.max(np.abs(r)))
        if not np.isfinite(rmax):
            raise DivergenceError(
                f"discounted march diverged at step {n} (lambda = {lam})"
            )
        if n % 200 == 0:
            history.append(rmax)
        if rmax < tol and since_jump >= 5:
            info = DiscountInfo(
                lam=lam,
                steps=n,
                jumps=jumps,
                final_residual=rmax,
                residual_history=history[-50:],
                min_value=float(np.min(v)),
                scaled_sup=lam * float(np.max(v)),
            )
            return v, info
        rbar = float(np.mean(r))
        rosc = float(np.max(r) - np.min(r))
        if since_jump >= 10 and abs(rbar) > 0.25 * tol and rosc < 0.3 * abs(rbar):
            # constant-mode extrapolation: adding beta to every component
            # changes the residual by exactly -lambda beta, so this lands
            # the flat part of the residual on zero in one move
            v = v + rbar / lam
            jumps += 1
            since_jump = 0
            continue
        v = v + dt * r
        since_jump += 1
    raise ConvergenceError(
        f"no steady state for lambda = {lam} within {schedule.max_steps_per_lambda} "
        f"steps; residual history tail: {history[-10:]}"
    )


@dataclass
class ErgodicResult:
    c: np.ndarray
    c_raw: np.ndarray
    correctors: list  # GridFunctions, anchored
    residual: float
    per_lambda: list = field(default_factory=list)
    cross_component_spread: float = 0.0
    anchor: tuple = (0.0,)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "c": self.c.tolist(),
            "c_raw": self.c_raw.tolist(),
            "residual": self.residual,
            "per_lambda": self.per_lambda,
            "cross_component_spread": self.cross_component_spread,
            "anchor": list(self.anchor),
            "notes": list(self.notes),
        }

    def save(self, directory) -> None:
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, "ergodic.json"), "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        for i, v in enumerate(self.correctors):
            save_binary(v, os.path.join(directory, f"corrector{i}.bin"))
        rows = ["lambda,component,estimate,sup,lip"]
        for row in self.per_lambda:
            for i, est in enumerate(row["estimates"]):
                rows.append(
                    f"{row['lambda']!r},{i},{est!r},{row['sup']!r},{row['lip']!r}"
                )
        with open(os.path.join(directory, "per_lambda.csv"), "w") as fh:
            fh.write("\n".join(rows) + "\n")


def estimate_ergodic_constant(
    system: HJSystem, schedule: DiscountSchedule = DiscountSchedule()
) -> ErgodicResult:
    """Run the discount schedule and assemble constants plus correctors."""
    grid = system.grid
    anchor = schedule.anchor
    if len(anchor) != grid.dim:
        raise ConfigError(
            f"anchor has {len(anchor)} coordinates, grid dim is {grid.dim}"
        )
    idx = grid.node_index(np.asarray(anchor))
    per_lambda = []
    v = None
    prev_lam = None
    ests = {}
    X = grid.mesh()
    nodes_D = _prepare_field_coupling(system)
    for lam in schedule.lambdas:
        if v is None:
            v0 = None
        else:
            # shift only the quasi-constant mode; the converged profile
            # carries over unchanged (v^lam ~ const/lam + profile + O(lam))
            const = prev_lam * float(np.mean(v))
            v0 = v + const * (1.0 / lam - 1.0 / prev_lam)
        v, info = solve_discounted(system, lam, schedule, v0=v0)
        est = np.array([-lam * v[i][idx] for i in range(system.m)])
        lip = max(
            float(np.max(np.abs(diff_arrays(v[i], grid)[0]))) for i in range(system.m)
        )
        per_lambda.append(
            {
                "lambda": lam,
                "estimates": est.tolist(),
                "sup": float(np.max(v)),
                "min": info.min_value,
                "lip": lip,
                "steps": info.steps,
                "jumps": info.jumps,
                "residual": info.final_residual,
            }
        )
        ests[lam] = est
        prev_lam = lam
    lams = list(schedule.lambdas)
    c_raw = ests[lams[-1]]
    notes = []
    if len(lams) >= 2:
        l1, l2 = lams[-1], lams[-2]
        c = (ests[l1] * l2 - ests[l2] * l1) / (l2 - l1)
        notes.append(
            "two-point linear extrapolation in lambda from "
            f"({l2!r}, {l1!r}); raw O(lambda) estimates kept in c_raw"
        )
    else:
        c = c_raw.copy()
        notes.append("single discount only; estimate is O(lambda) accurate")

    anchor_val = v[0][idx]
    w = v - anchor_val  # same scalar off every component
    flux, _ = _flux_stack(system, w, X, schedule.flux_mode)
    stat = flux + _coupling_apply(system, nodes_D, w)
    shape = (system.m,) + (1,) * grid.dim
    residual = float(np.max(np.abs(stat - c.reshape(shape))))
    correctors = [GridFunction(grid, w[i]) for i in range(system.m)]
    spread = float(np.max(np.abs(c - c[0])))
    return ErgodicResult(
        c=c,
        c_raw=c_raw,
        correctors=correctors,
        residual=residual,
        per_lambda=per_lambda,
        cross_component_spread=spread,
        anchor=anchor,
        notes=notes,
    )


def long_time_constant(
    traj,
    anchor: tuple | None = None,
    window_fraction: float = 0.5,
    min_window: float = 10.0,
) -> np.ndarray:
    """Drift rate of -u_i at the anchor over the trailing snapshot window.

    Requires the window to span at least ``min_window`` time units so the
    transient is excluded; returns one constant per component.
    """
    times = np.asarray(traj.times, dtype=float)
    if anchor is None:
        anchor = (0.0,) * traj.grid.dim
    idx = traj.grid.node_index(np.asarray(anchor))
    t0 = times[-1] - window_fraction * (times[-1] - times[0])
    sel = times >= t0 - 1e-12
    if np.sum(sel) < 3 or times[-1] - times[sel][0] < min_window:
        raise ConfigError(
            f"trailing window spans {times[-1] - times[sel][0] if np.any(sel) else 0} "
            f"time units; need at least {min_window}"
        )
    ts = times[sel]
    out = np.empty(traj.m)
    for i in range(traj.m):
        ys = np.array([-traj.values[k][i][idx] for k in np.flatnonzero(sel)])
        out[i] = np.polyfit(ts, ys, 1)[0]
    return out
