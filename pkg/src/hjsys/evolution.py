"""Explicit monotone time marching for weakly coupled HJ systems.

The semi-discrete operator per component is the monotone numerical flux of
the Hamiltonian plus the zeroth-order coupling term, advanced with forward
Euler:

    u_i <- u_i - dt * ( flux_i(x, D-u_i, D+u_i) + sum_j d_ij u_j )

Under the CFL rule dt = min(cfl * h / (N * max_i lf_alpha_i), cfl / max_i d_ii)
with cfl <= 1/2 the fully discrete scheme is monotone, so ordered initial
data stay ordered up to roundoff; the comparison check quantifies this.
Snapshot times are hit exactly: each inter-snapshot segment is divided into
equal steps no longer than the CFL step.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .coupling import CouplingMatrix, validate_monotone
from .errors import ConfigError, DivergenceError, StructureError
from .grid import Grid, GridFunction, diff_arrays, load_binary, save_binary
from .hamiltonians import Hamiltonian, lax_friedrichs_flux

__all__ = [
    "HJSystem",
    "SystemState",
    "EvolutionConfig",
    "Trajectory",
    "cfl_dt",
    "step",
    "solve",
    "comparison_check",
    "lipschitz_check",
    "ComparisonReport",
    "LipschitzReport",
]


@dataclass(frozen=True)
class HJSystem:
    """Bundle of Hamiltonians, coupling, and grid.

    Field-variant couplings are carried through for the discounted solver
    but rejected by the evolution stepping, which requires the constant
    variant.
    """

    hams: tuple
    coupling: CouplingMatrix
    grid: Grid

    def __post_init__(self) -> None:
        hams = tuple(self.hams)
        object.__setattr__(self, "hams", hams)
        if len(hams) != self.coupling.m:
            raise StructureError(
                f"{len(hams)} Hamiltonians vs coupling size {self.coupling.m}"
            )
        for i, h in enumerate(hams):
            if h.dim != self.grid.dim:
                raise StructureError(f"Hamiltonian {i} has dim {h.dim}, grid {self.grid.dim}")
        if self.coupling.variant == "constant":
            ok, violations = validate_monotone(self.coupling.entries)
            if not ok:
                raise StructureError(f"coupling is not monotone: {violations[:3]}")

    @property
    def m(self) -> int:
        return self.coupling.m

    @property
    def identical_hamiltonians(self) -> bool:
        h0 = self.hams[0]
        return all(
            h is h0 or (h.name == h0.name and h.name != "custom" and h.params == h0.params)
            for h in self.hams
        )

    def describe(self) -> dict:
        return {
            "m": self.m,
            "grid": {"dim": self.grid.dim, "n": self.grid.n},
            "hamiltonians": [
                {"name": h.name, "lf_alpha": h.lf_alpha, "params": h.params}
                for h in self.hams
            ],
            "coupling": {
                "variant": self.coupling.variant,
                "entries": None
                if self.coupling.entries is None
                else self.coupling.entries.tolist(),
            },
            "identical_hamiltonians": self.identical_hamiltonians,
        }


@dataclass
class SystemState:
    """Time stamp plus the stacked component values, shape (m,) + grid.shape."""

    t: float
    values: np.ndarray
    grid: Grid

    @classmethod
    def from_functions(cls, fns: Sequence[GridFunction], t: float = 0.0) -> "SystemState":
        g = fns[0].grid
        for f in fns[1:]:
            if f.grid != g:
                raise StructureError("components live on different grids")
        return cls(t=t, values=np.stack([f.values for f in fns]), grid=g)

    def components(self) -> list[GridFunction]:
        return [GridFunction(self.grid, v) for v in self.values]


@dataclass(frozen=True)
class EvolutionConfig:
    t_final: float
    snapshot_every: float | None = None
    cfl: float = 0.5
    dt_override: float | None = None
    flux_mode: str = "local"

    def __post_init__(self) -> None:
        if not (0 < self.cfl <= 1):
            raise ConfigError(f"cfl must lie in (0, 1], got {self.cfl}")
        if self.t_final < 0:
            raise ConfigError("t_final must be nonnegative")
        if self.snapshot_every is not None and self.snapshot_every <= 0:
            raise ConfigError("snapshot_every must be positive")
        if self.dt_override is not None and self.dt_override <= 0:
            raise ConfigError("dt_override must be positive")
        if self.flux_mode not in ("local", "global"):
            raise ConfigError(f"unknown flux mode {self.flux_mode!r}")


def cfl_dt(system: HJSystem, config: EvolutionConfig, extra_damping: float = 0.0) -> float:
    """Stable explicit step: min(cfl*h/(N*max alpha), cfl/(max d_ii + damping))."""
    if config.dt_override is not None:
        return float(config.dt_override)
    amax = max(h.lf_alpha for h in system.hams)
    dt = config.cfl * system.grid.h / (system.grid.dim * amax)
    if system.coupling.entries is not None:
        dmax = float(np.max(np.diag(system.coupling.entries)))
    else:
        dmax = float(
            np.max(
                np.diagonal(system.coupling.sample_at(system.grid.nodes()), axis1=-2, axis2=-1)
            )
        )
    if dmax + extra_damping > 0:
        dt = min(dt, config.cfl / (dmax + extra_damping))
    return float(dt)


def _check_cfl_budget(system, alphas_used, dt, lam: float = 0.0) -> None:
    # alphas_used: per-component max of sum_k alpha_k at any node
    h = system.grid.h
    if system.coupling.entries is not None:
        dmax = float(np.max(np.diag(system.coupling.entries)))
    else:
        dmax = 0.0
    worst = dt * (max(alphas_used) / h)
    if worst > 1.0 + 1e-9 or dt * (dmax + lam) > 1.0 + 1e-9:
        raise DivergenceError(
            f"CFL budget exceeded: dt*sum(alpha)/h = {worst!r}; enlarge lf_alpha/p_box "
            "or shrink dt"
        )


def _flux_stack(system: HJSystem, values: np.ndarray, X: np.ndarray, mode: str):
    """Numerical flux of every component; returns (stack, per-comp alpha sums)."""
    out = np.empty_like(values)
    alpha_sums = []
    for i, ham in enumerate(system.hams):
        dminus, dplus = diff_arrays(values[i], system.grid)
        if mode == "local" and ham.axis_alpha is not None:
            pabs = np.maximum(np.abs(dminus), np.abs(dplus))
            alpha = np.asarray(ham.axis_alpha(X, pabs))
            mid = ham(X, 0.5 * (dminus + dplus))
            out[i] = mid - 0.5 * np.sum(alpha * (dplus - dminus), axis=-1)
            alpha_sums.append(float(np.max(np.sum(alpha, axis=-1))))
        else:
            out[i] = lax_friedrichs_flux(ham, X, dminus, dplus)
            alpha_sums.append(ham.lf_alpha * system.grid.dim)
    return out, alpha_sums


def _coupling_term(system: HJSystem, values: np.ndarray) -> np.ndarray:
    D = system.coupling.entries
    if D is None:
        raise StructureError(
            "evolution stepping requires the constant coupling variant; "
            "field couplings are only accepted by the discounted solver"
        )
    return np.tensordot(D, values, axes=(1, 0))


def _first_bad_node(values: np.ndarray, grid: Grid) -> str:
    bad = ~np.isfinite(values)
    comp, flat = divmod(int(np.flatnonzero(bad.reshape(values.shape[0], -1))[0]), grid.num_nodes)
    coords = grid.nodes()[flat]
    return f"component {comp}, node {flat} at x = {coords.tolist()}"


def step(
    state: SystemState,
    system: HJSystem,
    dt: float,
    flux_mode: str = "local",
    X: np.ndarray | None = None,
) -> SystemState:
    """One forward-Euler update of the full system."""
    if X is None:
        X = system.grid.mesh()
    flux, alpha_sums = _flux_stack(system, state.values, X, flux_mode)
    _check_cfl_budget(system, alpha_sums, dt)
    new = state.values - dt * (flux + _coupling_term(system, state.values))
    if not np.all(np.isfinite(new)):
        raise DivergenceError(
            f"non-finite value after step to t = {state.t + dt!r}: "
            + _first_bad_node(new, system.grid)
        )
    return SystemState(t=state.t + dt, values=new, grid=state.grid)


@dataclass
class Trajectory:
    """Snapshots of a solve; values[k] has shape (m,) + grid.shape."""

    grid: Grid
    times: np.ndarray
    values: list
    meta: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.values[0].shape[0]

    def component(self, i: int, k: int) -> GridFunction:
        return GridFunction(self.grid, self.values[k][i])

    def save(self, directory) -> None:
        os.makedirs(directory, exist_ok=True)
        files = {}
        for k in range(len(self.times)):
            for i in range(self.m):
                fname = f"comp{i}_snap{k:04d}.bin"
                save_binary(self.component(i, k), os.path.join(directory, fname))
                files[f"{i},{k}"] = fname
        manifest = {
            "format": 1,
            "grid": {"dim": self.grid.dim, "n": self.grid.n},
            "m": self.m,
            "times": [float(t) for t in self.times],
            "files": files,
            "meta": self.meta,
        }
        with open(os.path.join(directory, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, directory) -> "Trajectory":
        with open(os.path.join(directory, "manifest.json")) as fh:
            manifest = json.load(fh)
        grid = Grid(**manifest["grid"])
        times = np.asarray(manifest["times"], dtype=float)
        m = manifest["m"]
        values = []
        for k in range(len(times)):
            comps = [
                load_binary(os.path.join(directory, manifest["files"][f"{i},{k}"])).values
                for i in range(m)
            ]
            values.append(np.stack(comps))
        return cls(grid=grid, times=times, values=values, meta=manifest.get("meta", {}))


def _snapshot_times(config: EvolutionConfig) -> np.ndarray:
    T = config.t_final
    if T == 0 or config.snapshot_every is None:
        return np.array([0.0, T]) if T > 0 else np.array([0.0])
    k = int(np.floor(T / config.snapshot_every + 1e-12))
    times = np.arange(k + 1) * config.snapshot_every
    if T - times[-1] > 1e-12 * max(1.0, T):
        times = np.append(times, T)
    else:
        times[-1] = T
    return times


def solve(system: HJSystem, u0: Sequence[GridFunction] | SystemState,
          config: EvolutionConfig) -> Trajectory:
    """March to t_final, recording snapshots at exact multiples of the cadence."""
    state = u0 if isinstance(u0, SystemState) else SystemState.from_functions(u0)
    if state.values.shape[0] != system.m:
        raise StructureError("initial data component count mismatch")
    X = system.grid.mesh()
    dt = cfl_dt(system, config)
    times = _snapshot_times(config)
    values = [state.values.copy()]
    steps_at = [0]
    total = 0
    for k in range(1, len(times)):
        span = times[k] - times[k - 1]
        nsteps = max(1, int(np.ceil(span / dt - 1e-12)))
        sub = span / nsteps
        for _ in range(nsteps):
            state = step(state, system, sub, flux_mode=config.flux_mode, X=X)
            total += 1
        state = SystemState(t=float(times[k]), values=state.values, grid=state.grid)
        values.append(state.values.copy())
        steps_at.append(total)
    meta = {
        "system": system.describe(),
        "config": asdict(config),
        "dt": dt,
        "steps_total": total,
        "steps_at_snapshot": steps_at,
        "identical_hamiltonians": system.identical_hamiltonians,
    }
    return Trajectory(grid=system.grid, times=times, values=values, meta=meta)


@dataclass
class ComparisonReport:
    worst_violation: float
    per_snapshot: list
    steps_at_snapshot: list

    def slack_allowance(self, per_step: float = 1e-10) -> float:
        return per_step * max(1, self.steps_at_snapshot[-1])


def comparison_check(traj_u: Trajectory, traj_v: Trajectory) -> ComparisonReport:
    """Ordering slack of two solves started from ordered data.

    For each snapshot, measures
    max_i sup_x (u_i - v_i)(t)  -  max_i sup_x (u_i - v_i)(0)^+ ;
    a monotone scheme keeps this nonpositive up to roundoff (about 1e-10
    per step).
    """
    if len(traj_u.times) != len(traj_v.times) or not np.allclose(
        traj_u.times, traj_v.times
    ):
        raise ValueError("trajectories have different snapshot times")
    rhs = max(0.0, float(np.max(traj_u.values[0] - traj_v.values[0])))
    per = []
    for k in range(len(traj_u.times)):
        lhs = float(np.max(traj_u.values[k] - traj_v.values[k]))
        per.append(lhs - rhs)
    steps = traj_u.meta.get("steps_at_snapshot", list(range(len(traj_u.times))))
    return ComparisonReport(
        worst_violation=max(per), per_snapshot=per, steps_at_snapshot=steps
    )


@dataclass
class LipschitzReport:
    sup_shifted: float
    sup_space_lipschitz: float
    sup_time_ratio: float
    within_cap: bool


def lipschitz_check(traj: Trajectory, c, cap: float = np.inf) -> LipschitzReport:
    """Uniform bounds along a trajectory: |u + c t|, space and time increments."""
    cvec = np.broadcast_to(np.asarray(c, dtype=float), (traj.m,))
    sup_shift = 0.0
    sup_lip = 0.0
    sup_rate = 0.0
    for k, t in enumerate(traj.times):
        shifted = traj.values[k] + cvec[:, None] * float(t) if traj.grid.dim == 1 else (
            traj.values[k] + cvec[:, None, None] * float(t)
        )
        sup_shift = max(sup_shift, float(np.max(np.abs(shifted))))
        for i in range(traj.m):
            dminus, _ = diff_arrays(traj.values[k][i], traj.grid)
            sup_lip = max(sup_lip, float(np.max(np.abs(dminus))))
        if k:
            dtk = float(traj.times[k] - traj.times[k - 1])
            sup_rate = max(
                sup_rate,
                float(np.max(np.abs(traj.values[k] - traj.values[k - 1]))) / dtk,
            )
    finite = all(np.isfinite(v) for v in (sup_shift, sup_lip, sup_rate))
    if not finite:
        raise DivergenceError("non-finite norm along trajectory")
    return LipschitzReport(
        sup_shifted=sup_shift,
        sup_space_lipschitz=sup_lip,
        sup_time_ratio=sup_rate,
        within_cap=bool(max(sup_shift, sup_lip, sup_rate) <= cap),
    )
