"""Post-processing of trajectories: drift-compensated profiles, the backward
oscillation functional, the log transform, and component-gap decay.

Everything here consumes an immutable trajectory and a drift vector c (one
constant per component, cost-rate units) and works with the shifted field

    phi_i(x, t) = u_i(x, t) + c_i t,

which is the quantity expected to settle.  The oscillation functional

    P_eta[phi](t) = max over grid x and snapshot times s >= t of
                    [phi(x, t) - phi(x, s) - 2 eta (s - t)],  clamped at 0,

measures how far phi is from being nondecreasing in time up to slope 2 eta;
it vanishes identically once the profile has converged.  It is evaluated at
snapshot times only, so the snapshot cadence bounds its resolution and is
recorded in reports.

The log transform replaces phi by w = log(phi + kappa) with the single
constant kappa chosen to make min phi + kappa = 1 over the whole trajectory;
w is the canonical input for the oscillation functional in the nonconvex
setting (the transform preserves ordering and turns multiplicative structure
of the gradient terms into additive one).

Component gaps: Phi(t) = max_{i != j} sup_x |u_i - u_j| contracts at the
coupling's certified rate when the Hamiltonians are identical; the fitted
exponential rate is extracted by least squares on log Phi over the window
where Phi sits between 10x the numerical floor and half its initial value.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .coupling import delta_rate
from .errors import ConfigError, DivergenceError, StructureError
from .evolution import Trajectory
from .grid import GridFunction, interp_periodic

__all__ = [
    "shift_trajectory",
    "exp_transform",
    "undo_exp_transform",
    "p_eta",
    "p_eta_table",
    "component_gap_decay",
    "GapDecay",
    "monotone_tail",
    "profile_distances",
    "evaluate_on_set",
    "SetEvaluation",
    "ConvergenceReport",
    "build_report",
]


def _c_vector(traj: Trajectory, c) -> np.ndarray:
    cv = np.atleast_1d(np.asarray(c, dtype=float))
    if cv.size == 1:
        cv = np.full(traj.m, float(cv[0]))
    if cv.shape != (traj.m,):
        raise ConfigError(f"need one drift constant per component, got {cv.shape}")
    return cv


def _shifted(traj: Trajectory, cv: np.ndarray, k: int) -> np.ndarray:
    shape = (traj.m,) + (1,) * traj.grid.dim
    return traj.values[k] + cv.reshape(shape) * float(traj.times[k])


def shift_trajectory(traj: Trajectory, c) -> Trajectory:
    """New trajectory holding u_i + c_i t."""
    cv = _c_vector(traj, c)
    vals = [_shifted(traj, cv, k) for k in range(len(traj.times))]
    meta = dict(traj.meta)
    meta["drift_shift"] = cv.tolist()
    return Trajectory(grid=traj.grid, times=traj.times, values=vals, meta=meta)


def exp_transform(traj: Trajectory, c) -> Trajectory:
    """Log of the shifted field, raised by one constant so its min is 1.

    Returns w with exp(w) = u + c t + kappa; kappa and c are kept in
    ``meta`` so the transform can be undone exactly.
    """
    cv = _c_vector(traj, c)
    shifted = [_shifted(traj, cv, k) for k in range(len(traj.times))]
    lowest = min(float(np.min(s)) for s in shifted)
    kappa = 1.0 - lowest
    vals = [np.log(s + kappa) for s in shifted]
    if any(not np.all(np.isfinite(v)) for v in vals):
        raise DivergenceError("log transform produced non-finite values")
    meta = dict(traj.meta)
    meta["kappa"] = kappa
    meta["drift_shift"] = cv.tolist()
    return Trajectory(grid=traj.grid, times=traj.times, values=vals, meta=meta)


def undo_exp_transform(traj_w: Trajectory) -> Trajectory:
    """Inverse of :func:`exp_transform`, using the constants in meta."""
    if "kappa" not in traj_w.meta or "drift_shift" not in traj_w.meta:
        raise ConfigError("trajectory lacks kappa/drift_shift metadata")
    kappa = float(traj_w.meta["kappa"])
    cv = np.asarray(traj_w.meta["drift_shift"], dtype=float)
    shape = (traj_w.m,) + (1,) * traj_w.grid.dim
    vals = [
        np.exp(traj_w.values[k]) - kappa - cv.reshape(shape) * float(traj_w.times[k])
        for k in range(len(traj_w.times))
    ]
    meta = {k: v for k, v in traj_w.meta.items() if k not in ("kappa", "drift_shift")}
    return Trajectory(grid=traj_w.grid, times=traj_w.times, values=vals, meta=meta)


def _snapshot_at_or_after(times: np.ndarray, t: float) -> int:
    if t > times[-1] + 1e-9:
        raise ConfigError(
            f"t = {t} lies beyond the last snapshot at {float(times[-1])}"
        )
    return int(np.searchsorted(times, t - 1e-9))


def p_eta(traj: Trajectory, component: int, eta: float, t: float) -> float:
    """Backward oscillation of component i of an already-shifted trajectory.

    The input must be the field expected to settle (u + c t, or its log
    transform); no drift is applied here.
    """
    if eta < 0:
        raise ConfigError("eta must be nonnegative")
    times = np.asarray(traj.times, dtype=float)
    k0 = _snapshot_at_or_after(times, t)
    phi0 = traj.values[k0][component]
    best = 0.0
    for s in range(k0, len(times)):
        bracket = float(np.max(phi0 - traj.values[s][component])) - 2 * eta * float(
            times[s] - times[k0]
        )
        best = max(best, bracket)
    return best


def p_eta_table(
    traj: Trajectory, etas, ts=None, components=None
) -> list:
    """Rows (eta, t, max over components of P_eta).

    Shares the pairwise max-difference table across etas, so the cost is
    one (snapshots x snapshots x nodes) sweep per component.
    """
    times = np.asarray(traj.times, dtype=float)
    K = len(times)
    if components is None:
        components = range(traj.m)
    if ts is None:
        kidx = list(range(K))
    else:
        kidx = [_snapshot_at_or_after(times, float(t)) for t in ts]
    gap = np.full((len(components), K, K), -np.inf)
    for ci, i in enumerate(components):
        flat = np.stack([traj.values[k][i].ravel() for k in range(K)])
        for k in range(K):
            gap[ci, k, k:] = np.max(flat[k][None, :] - flat[k:], axis=1)
    rows = []
    for eta in etas:
        for k in kidx:
            lag = times[k:] - times[k]
            val = max(
                float(np.max(gap[ci, k, k:] - 2 * float(eta) * lag))
                for ci in range(len(components))
            )
            rows.append((float(eta), float(times[k]), max(0.0, val)))
    return rows


@dataclass
class GapDecay:
    gap_table: list  # (t, Phi(t))
    fitted_rate: float | None
    window: tuple | None
    floor: float
    coupling_rate: float | None = None
    notes: list = field(default_factory=list)


def component_gap_decay(
    traj: Trajectory, floor: float | None = None
) -> GapDecay:
    """Phi(t) per snapshot plus the fitted exponential decay rate.

    Only meaningful when every component has the same Hamiltonian; the
    trajectory must carry that flag.  The fit window keeps snapshots with
    Phi between 10x the floor (default: the terminal gap, where scheme
    error dominates) and Phi(0)/2.
    """
    if not traj.meta.get("identical_hamiltonians", False):
        raise StructureError(
            "gap decay requires a system with one shared Hamiltonian; "
            "this trajectory is not flagged as such"
        )
    if traj.m < 2:
        raise StructureError("gap decay needs at least two components")
    times = np.asarray(traj.times, dtype=float)
    phis = []
    for k in range(len(times)):
        v = traj.values[k]
        phi = max(
            float(np.max(np.abs(v[i] - v[j])))
            for i in range(traj.m)
            for j in range(i + 1, traj.m)
        )
        phis.append(phi)
    phis = np.asarray(phis)
    table = [(float(t), float(p)) for t, p in zip(times, phis)]
    notes = []
    rate = None
    window = None
    if phis[0] <= 0:
        notes.append("initial gap is zero; rate undefined")
    else:
        if floor is None:
            floor = max(float(phis[-1]), float(phis[0]) * 1e-12, 1e-300)
        sel = (phis >= 10 * floor) & (phis <= phis[0] / 2) & (phis > 0)
        if np.sum(sel) < 3:
            notes.append("fewer than 3 snapshots in the fit window; rate undefined")
        else:
            ts, ys = times[sel], np.log(phis[sel])
            rate = -float(np.polyfit(ts, ys, 1)[0])
            window = (float(ts[0]), float(ts[-1]))
    D = traj.meta.get("system", {}).get("coupling", {}).get("entries")
    coupling_rate = None
    if D is not None:
        try:
            coupling_rate = delta_rate(np.asarray(D, dtype=float))
        except Exception as exc:  # reducible or oversized: report, don't fail
            notes.append(f"coupling rate unavailable: {exc}")
    return GapDecay(
        gap_table=table,
        fitted_rate=rate,
        window=window,
        floor=float(floor) if floor is not None else 0.0,
        coupling_rate=coupling_rate,
        notes=notes,
    )


def monotone_tail(traj: Trajectory, c, tol: float | None = None) -> tuple[bool, float]:
    """Check u + c t is nondecreasing in t (within tol) on the last quarter.

    Returns (ok, worst increment), worst being the most negative nodewise
    increase between consecutive tail snapshots.
    """
    cv = _c_vector(traj, c)
    times = np.asarray(traj.times, dtype=float)
    if tol is None:
        dt = float(traj.meta.get("dt", 0.0))
        tol = 5 * (traj.grid.h + dt)
    k_start = max(0, int(np.ceil(0.75 * (len(times) - 1))))
    worst = 0.0
    for k in range(k_start, len(times) - 1):
        inc = float(np.min(_shifted(traj, cv, k + 1) - _shifted(traj, cv, k)))
        worst = min(worst, inc)
    return worst >= -tol, worst


def profile_distances(traj: Trajectory, c) -> list:
    """Rows (t, max_i sup |phi_i(t) - phi_i(T)|) with phi = u + c t; last is 0."""
    cv = _c_vector(traj, c)
    last = _shifted(traj, cv, len(traj.times) - 1)
    return [
        (float(traj.times[k]), float(np.max(np.abs(_shifted(traj, cv, k) - last))))
        for k in range(len(traj.times))
    ]


@dataclass
class SetEvaluation:
    kind: str
    points: list
    values: list  # values[i] = component i at each point
    empty: bool
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "points": self.points,
            "values": self.values,
            "empty": self.empty,
            "notes": list(self.notes),
        }


def evaluate_on_set(
    vs,
    kind: str,
    fs=None,
    points=None,
    tie_tol: float = 1e-9,
) -> SetEvaluation:
    """Evaluate component functions on a distinguished node set.

    kind "common_min" ("S"): nodes minimizing every source f_i at once.
    kind "flat_min" ("F"): those common minimizers where the f_i values also
    coincide; empty (with a note) when the minimum levels differ.
    kind "custom": an explicit point list, values by periodic interpolation.
    """
    vs = list(vs)
    if not vs:
        raise ConfigError("need at least one component function")
    grid = vs[0].grid
    key = {"S": "common_min", "F": "flat_min"}.get(kind, kind)
    notes: list[str] = []
    if key == "custom":
        if points is None:
            raise ConfigError("custom evaluation needs a point list")
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        vals = [
            [float(x) for x in interp_periodic(v.values, grid, pts)] for v in vs
        ]
        return SetEvaluation(
            kind=key,
            points=[list(map(float, p)) for p in pts],
            values=vals,
            empty=len(pts) == 0,
            notes=notes,
        )
    if key not in ("common_min", "flat_min"):
        raise ConfigError(f"unknown set kind {kind!r}")
    if fs is None:
        raise ConfigError("source functions are required to locate minimizers")
    fvals = [np.asarray(f.values if isinstance(f, GridFunction) else f) for f in fs]
    mask = np.ones(grid.shape, dtype=bool)
    for fv in fvals:
        mask &= fv <= np.min(fv) + tie_tol
    if key == "flat_min" and len(fvals) > 1:
        stack = np.stack(fvals)
        mask &= (np.max(stack, axis=0) - np.min(stack, axis=0)) <= tie_tol
        if not np.any(mask):
            notes.append("minimum levels differ; the flat set is empty")
    idx = np.argwhere(mask)
    pts = idx.astype(float) * grid.h
    vals = [[float(v.values[tuple(j)]) for j in idx] for v in vs]
    return SetEvaluation(
        kind=key,
        points=[list(map(float, p)) for p in pts],
        values=vals,
        empty=len(idx) == 0,
        notes=notes,
    )


@dataclass
class ConvergenceReport:
    c_used: list
    profile_distances: list
    p_eta_table: list
    gap_table: list | None = None
    fitted_gap_rate: float | None = None
    monotone_tail_ok: bool | None = None
    monotone_tail_worst: float | None = None
    snapshot_cadence: float | None = None
    set_evaluations: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "c_used": self.c_used,
            "profile_distances": self.profile_distances,
            "p_eta_table": self.p_eta_table,
            "gap_table": self.gap_table,
            "fitted_gap_rate": self.fitted_gap_rate,
            "monotone_tail_ok": self.monotone_tail_ok,
            "monotone_tail_worst": self.monotone_tail_worst,
            "snapshot_cadence": self.snapshot_cadence,
            "set_evaluations": [s.to_dict() for s in self.set_evaluations],
            "notes": list(self.notes),
        }

    def save(self, directory) -> None:
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, "convergence.json"), "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        tables = {
            "profile_distances.csv": ("t,distance", self.profile_distances),
            "p_eta.csv": ("eta,t,value", self.p_eta_table),
        }
        if self.gap_table is not None:
            tables["gap.csv"] = ("t,gap", self.gap_table)
        for fname, (header, rows) in tables.items():
            lines = [header] + [",".join(repr(float(x)) for x in r) for r in rows]
            with open(os.path.join(directory, fname), "w") as fh:
                fh.write("\n".join(lines) + "\n")


def build_report(
    traj: Trajectory,
    c,
    etas=(0.05, 0.1, 0.2),
    use_log_transform: bool = True,
    gap: bool = False,
    set_evaluations=(),
) -> ConvergenceReport:
    """Assemble the standard diagnostics for one trajectory."""
    cv = _c_vector(traj, c)
    dists = profile_distances(traj, cv)
    base = exp_transform(traj, cv) if use_log_transform else shift_trajectory(traj, cv)
    petas = [list(r) for r in p_eta_table(base, etas)]
    tail_ok, tail_worst = monotone_tail(traj, cv)
    gap_table = None
    rate = None
    notes = []
    if gap:
        gd = component_gap_decay(traj)
        gap_table, rate = gd.gap_table, gd.fitted_rate
        notes.extend(gd.notes)
    times = np.asarray(traj.times, dtype=float)
    cadence = float(np.min(np.diff(times))) if len(times) > 1 else None
    if use_log_transform:
        notes.append("oscillation functional evaluated on the log transform")
    return ConvergenceReport(
        c_used=cv.tolist(),
        profile_distances=[list(r) for r in dists],
        p_eta_table=petas,
        gap_table=gap_table,
        fitted_gap_rate=rate,
        monotone_tail_ok=tail_ok,
        monotone_tail_worst=tail_worst,
        snapshot_cadence=cadence,
        set_evaluations=list(set_evaluations),
        notes=notes,
    )
