"""Named end-to-end experiment suites with pass/fail checks.

Each suite builds its system from the catalog, runs the relevant solvers,
and grades the outcome against quantitative targets (formula values where
closed forms exist, discretization-scaled tolerances elsewhere).  The same
suites back the command line runner and the acceptance tests, so a suite is
the single source of truth for what its experiment must achieve.

Grading conventions: tolerances tied to resolution are expressed through
the grid spacing h and the time step dt of the run being graded; drift
constants used to shift profiles are measured from the trajectory itself
(trailing-window slope), so the grading does not assume the scheme's
constant matches the continuum one beyond the stated tolerance.
"""
from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import catalog
from .coupling import CouplingMatrix, analyze, delta_rate, ergodic_constant_formula
from .diagnostics import (
    component_gap_decay,
    evaluate_on_set,
    exp_transform,
    monotone_tail,
    p_eta_table,
    profile_distances,
)
from .ergodic import DiscountSchedule, estimate_ergodic_constant, long_time_constant
from .errors import ConfigError
from .evolution import EvolutionConfig, HJSystem, solve
from .grid import Grid, GridFunction, interp_periodic, sample
from .hamiltonians import check_assumption
from .switching import (
    ConstantPolicy,
    GreedyGradientPolicy,
    SwitchingProcessSpec,
    coupling_from_spec,
    estimate_value,
    hamiltonian_from_spec,
)

__all__ = ["CheckResult", "SuiteResult", "run_suite", "SUITE_RUNNERS"]


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    bound: float
    relation: str = "<="
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "value": self.value,
            "bound": self.bound,
            "relation": self.relation,
            "detail": self.detail,
        }


@dataclass
class SuiteResult:
    name: str
    checks: list
    artifacts: dict = field(default_factory=dict)
    elapsed_seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "elapsed_seconds": self.elapsed_seconds,
            "checks": [c.to_dict() for c in self.checks],
            "artifacts": self.artifacts,
        }

    def save(self, directory) -> None:
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, "suite.json"), "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def summary_lines(self) -> list:
        lines = []
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            lines.append(
                f"[{status}] {self.name}/{c.name}: value {c.value!r} "
                f"{c.relation} bound {c.bound!r}"
            )
        return lines


def _leq(name: str, value: float, bound: float, **detail) -> CheckResult:
    return CheckResult(
        name=name,
        passed=bool(value <= bound),
        value=float(value),
        bound=float(bound),
        relation="<=",
        detail=detail,
    )


def _geq(name: str, value: float, bound: float, **detail) -> CheckResult:
    return CheckResult(
        name=name,
        passed=bool(value >= bound),
        value=float(value),
        bound=float(bound),
        relation=">=",
        detail=detail,
    )


_F1 = {"const": 1.5, "terms": [{"k": [1], "cos": -1.0}]}  # 0.5 + 1 - cos(2 pi x)
_F2 = {"const": 2.0, "terms": [{"k": [1], "cos": -2.0}]}  # 2 (1 - cos(2 pi x))


def _eikonal_pair_system(n: int) -> tuple[HJSystem, list]:
    grid = Grid(1, n)
    hams = [
        catalog.build_hamiltonian("quadratic_eikonal", {"f": _F1}),
        catalog.build_hamiltonian("quadratic_eikonal", {"f": _F2}),
    ]
    D = CouplingMatrix.constant(catalog.builtin_coupling("symmetric_pair"))
    fs = [
        sample(catalog.fourier_function(_F1, 1), grid),
        sample(catalog.fourier_function(_F2, 1), grid),
    ]
    return HJSystem(hams=tuple(hams), coupling=D, grid=grid), fs


def _initial_data(system: HJSystem, which: str) -> list:
    """Initial data families for the convergence experiments.

    "pinned_waves" is nonnegative and vanishes at the origin.  Generic data
    converge to limits differing by an additive constant (constants shift
    the stationary family), so the paired runs use data agreeing on the
    pinning set; the limit they select is then the same one.
    """
    grid = system.grid
    if which == "zeros":
        return [GridFunction(grid, np.zeros(grid.shape)) for _ in range(system.m)]
    if which == "pinned_waves":
        funcs = [
            lambda x: 0.3 * (1 - np.cos(2 * np.pi * x[..., 0])),
            lambda x: 0.2 * (1 - np.cos(2 * np.pi * x[..., 0]))
            + 0.1 * (1 - np.cos(4 * np.pi * x[..., 0])),
        ]
        return [sample(funcs[i % 2], grid) for i in range(system.m)]
    raise ConfigError(f"unknown initial data kind {which!r}")


def _tail_distance(dists, t_from: float) -> float:
    vals = [d for t, d in dists if t >= t_from - 1e-9]
    if not vals:
        raise ConfigError(f"no snapshots at or after t = {t_from}")
    return max(vals)


def suite_largenew_eikonal(n: int = 256, t_final: float = 40.0) -> SuiteResult:
    """Eikonal pair with a shared minimizer: constants, bounds, convergence."""
    t0 = time.perf_counter()
    system, fs = _eikonal_pair_system(n)
    grid = system.grid
    checks = []
    artifacts = {}

    formula = ergodic_constant_formula(system.coupling, fs)
    schedule = DiscountSchedule()
    ergo_t0 = time.perf_counter()
    result = estimate_ergodic_constant(system, schedule)
    config = EvolutionConfig(t_final=t_final, snapshot_every=0.5)
    traj_a = solve(system, _initial_data(system, "zeros"), config)
    c_meas_a = long_time_constant(traj_a)
    ergo_elapsed = time.perf_counter() - ergo_t0

    checks.append(
        _leq(
            "constant_matches_formula",
            abs(result.c[0] - formula),
            0.02,
            estimate=float(result.c[0]),
            formula=formula,
        )
    )
    checks.append(
        _leq(
            "constant_in_coupling_kernel",
            result.cross_component_spread,
            5e-3,
            c=result.c.tolist(),
        )
    )
    checks.append(
        _leq(
            "drift_cross_check",
            float(np.max(np.abs(c_meas_a - formula))),
            0.02,
            measured=c_meas_a.tolist(),
            formula=formula,
        )
    )
    checks.append(
        _leq(
            "estimator_runtime_seconds",
            ergo_elapsed,
            60.0,
            note="discount schedule plus the drift cross-check run",
        )
    )

    # one M, fit at the largest discount, must cap lambda * sup v for the
    # whole schedule (5% headroom): sup v^lam <= M / lam uniformly
    ms = [row["lambda"] * row["sup"] for row in result.per_lambda]
    lips = [row["lip"] for row in result.per_lambda]
    m_fit = ms[0]
    checks.append(
        _leq(
            "uniform_bound_holds",
            max(ms) / max(m_fit, 1e-300),
            1.05,
            values=ms,
            fitted=m_fit,
        )
    )
    checks.append(
        _leq(
            "lipschitz_spread",
            (max(lips) - min(lips)) / max(min(lips), 1e-300),
            0.10,
            values=lips,
        )
    )
    checks.append(
        _geq(
            "discounted_nonnegative",
            min(row["min"] for row in result.per_lambda),
            -1e-6,
        )
    )

    traj_b = solve(system, _initial_data(system, "pinned_waves"), config)
    c_meas_b = long_time_constant(traj_b)
    dists_a = profile_distances(traj_a, c_meas_a)
    dists_b = profile_distances(traj_b, c_meas_b)
    checks.append(
        _leq("profile_settled_a", _tail_distance(dists_a, 30.0), 5 * grid.h)
    )
    checks.append(
        _leq("profile_settled_b", _tail_distance(dists_b, 30.0), 5 * grid.h)
    )
    terminal_gap = float(np.max(np.abs(traj_a.values[-1] - traj_b.values[-1])))
    checks.append(_leq("terminal_profiles_agree", terminal_gap, 10 * grid.h))

    # evidence that the two runs agree on the shared-minimizer set first
    sset = evaluate_on_set(
        [traj_a.component(i, -1) for i in range(system.m)], "common_min", fs=fs
    )
    k_mid = len(traj_a.times) // 2
    mid_gap_global = float(np.max(np.abs(traj_a.values[k_mid] - traj_b.values[k_mid])))
    mid_gap_set = (
        max(
            abs(
                float(traj_a.values[k_mid][i][grid.node_index(p)])
                - float(traj_b.values[k_mid][i][grid.node_index(p)])
            )
            for i in range(system.m)
            for p in sset.points
        )
        if sset.points
        else float("nan")
    )
    artifacts["shared_minimizer_set"] = sset.to_dict()
    artifacts["mid_run_gap"] = {
        "t": float(traj_a.times[k_mid]),
        "on_set": mid_gap_set,
        "global": mid_gap_global,
    }
    artifacts["ergodic"] = result.to_dict()
    artifacts["measured_drift"] = {
        "zeros": c_meas_a.tolist(),
        "pinned_waves": c_meas_b.tolist(),
    }
    return SuiteResult(
        name="largenew-eikonal",
        checks=checks,
        artifacts=artifacts,
        elapsed_seconds=time.perf_counter() - t0,
    )


def suite_mainresult_nonconvex(n: int = 128, t_final: float = 40.0) -> SuiteResult:
    """Nonconvex pair pinned at a common zero: flat drift, settled tail."""
    t0 = time.perf_counter()
    grid = Grid(1, n)
    h1 = catalog.build_hamiltonian(
        "nonconvex_bs00",
        {
            "f": {"const": 1.0, "terms": [{"k": [1], "cos": -1.0}]},
            "q": [{"terms": [{"k": [1], "sin": 0.3}]}],
            "F": {"const": 1.0, "angle": [{"j": 1, "cos": 0.3}]},
        },
    )
    h2 = catalog.build_hamiltonian(
        "nonconvex_bs00",
        {
            "f": {"const": 0.8, "terms": [{"k": [1], "cos": -0.8}]},
            "q": [{"terms": [{"k": [1], "sin": 0.2}]}],
            "F": {"const": 1.0, "angle": [{"j": 1, "cos": -0.25}]},
        },
    )
    D = CouplingMatrix.constant(catalog.builtin_coupling("symmetric_pair"))
    system = HJSystem(hams=(h1, h2), coupling=D, grid=grid)
    checks = []

    nodes = grid.nodes()
    k_sizes = [int(np.sum(h.compact_set_K(nodes))) for h in (h1, h2)]
    checks.append(
        _geq("pinning_set_nonempty", float(min(k_sizes)), 1.0, node_counts=k_sizes)
    )

    config = EvolutionConfig(t_final=t_final, snapshot_every=0.5)
    traj = solve(system, _initial_data(system, "zeros"), config)
    dt = float(traj.meta["dt"])
    c_meas = long_time_constant(traj)
    checks.append(
        _leq(
            "drift_near_zero",
            float(np.max(np.abs(c_meas))),
            5 * grid.h,
            measured=c_meas.tolist(),
        )
    )

    ok, worst = monotone_tail(traj, np.zeros(system.m))
    checks.append(
        _geq("monotone_tail", worst, -5 * (grid.h + dt), passed_flag=ok)
    )

    wtraj = exp_transform(traj, np.zeros(system.m))
    times = np.asarray(traj.times)
    tail_times = times[times >= 0.75 * times[-1] - 1e-9]
    rows = p_eta_table(wtraj, etas=(0.05, 0.1, 0.2), ts=tail_times)
    worst_p = max(r[2] for r in rows)
    checks.append(_leq("oscillation_tail", worst_p, 5 * (grid.h + dt)))

    return SuiteResult(
        name="mainresult-nonconvex",
        checks=checks,
        artifacts={
            "measured_drift": c_meas.tolist(),
            "oscillation_rows": [list(r) for r in rows],
        },
        elapsed_seconds=time.perf_counter() - t0,
    )


def suite_exist_smoo_strictconvex(n: int = 256, t_final: float = 40.0) -> SuiteResult:
    """Strictly convex pair with disjoint minimizers; profiles still settle."""
    t0 = time.perf_counter()
    grid = Grid(1, n)
    # Disjoint argmins: x = 0 for the first source, x = 1/2 for the second.
    f1 = {"const": 1.0, "terms": [{"k": [1], "cos": -1.0}]}
    f2 = {"const": 0.7, "terms": [{"k": [1], "cos": 0.5}]}
    hams = (
        catalog.build_hamiltonian("quadratic_eikonal", {"f": f1}),
        catalog.build_hamiltonian("quadratic_eikonal", {"f": f2}),
    )
    D = CouplingMatrix.constant(catalog.builtin_coupling("symmetric_pair"))
    system = HJSystem(hams=hams, coupling=D, grid=grid)
    fs = [
        sample(catalog.fourier_function(f1, 1), grid),
        sample(catalog.fourier_function(f2, 1), grid),
    ]
    checks = []

    rep = check_assumption(hams[0], "strictconvex")
    checks.append(
        _geq(
            "strict_convexity_sampled",
            1.0 if rep.passed else 0.0,
            1.0,
            violations=len(rep.violations),
        )
    )
    sset = evaluate_on_set(fs, "common_min", fs=fs)
    checks.append(
        _leq(
            "no_shared_minimizer",
            float(len(sset.points)),
            0.0,
            note="disjoint argmin sets by construction",
        )
    )

    config = EvolutionConfig(t_final=t_final, snapshot_every=0.5)
    traj_a = solve(system, _initial_data(system, "zeros"), config)
    c_a = long_time_constant(traj_a)

    # Without a common minimizer the additive constant of the limit depends
    # on the data, so a generic second datum settles onto a shifted copy.
    # Restarting from a drift-compensated intermediate state gives a second,
    # genuinely different Lipschitz datum that must select the same profile;
    # the pair then tests stationarity of the limit, not cross-data
    # uniqueness (which the experiment does not assert).
    t_restart = 4.0
    k_restart = int(np.searchsorted(traj_a.times, t_restart))
    drift = float(np.mean(c_a)) * float(traj_a.times[k_restart])
    u0_b = [
        GridFunction(grid, traj_a.values[k_restart][i] + drift)
        for i in range(system.m)
    ]
    traj_b = solve(system, u0_b, config)
    c_b = long_time_constant(traj_b)
    checks.append(
        _leq(
            "profile_settled_a",
            _tail_distance(profile_distances(traj_a, c_a), 30.0),
            5 * grid.h,
        )
    )
    checks.append(
        _leq(
            "profile_settled_b",
            _tail_distance(profile_distances(traj_b, c_b), 30.0),
            5 * grid.h,
        )
    )
    terminal_gap = float(np.max(np.abs(traj_a.values[-1] - traj_b.values[-1])))
    checks.append(_leq("terminal_profiles_agree", terminal_gap, 10 * grid.h))
    return SuiteResult(
        name="exist-smoo-strictconvex",
        checks=checks,
        artifacts={
            "measured_drift": {"zeros": c_a.tolist(), "restarted": c_b.tolist()},
            "restart_time": t_restart,
        },
        elapsed_seconds=time.perf_counter() - t0,
    )


def suite_identical_gap(n: int = 256, t_final: float = 8.0) -> SuiteResult:
    """One shared Hamiltonian, constant initial data: exact gap contraction."""
    t0 = time.perf_counter()
    grid = Grid(1, n)
    ham = catalog.build_hamiltonian(
        "quadratic_eikonal", {"f": {"const": 1.0, "terms": [{"k": [1], "cos": -1.0}]}}
    )
    D_entries = catalog.builtin_coupling("symmetric_pair")
    system = HJSystem(
        hams=(ham, ham), coupling=CouplingMatrix.constant(D_entries), grid=grid
    )
    checks = []
    delta = delta_rate(D_entries)
    checks.append(
        CheckResult(
            name="certified_rate_value",
            passed=abs(delta - 2.0) < 1e-12,
            value=delta,
            bound=2.0,
            relation="==",
        )
    )
    u0 = [
        GridFunction(grid, np.full(grid.shape, 1.0)),
        GridFunction(grid, np.zeros(grid.shape)),
    ]
    config = EvolutionConfig(t_final=t_final, snapshot_every=0.25)
    traj = solve(system, u0, config)
    dt = float(traj.meta["dt"])
    gd = component_gap_decay(traj)
    phis = np.array([p for _, p in gd.gap_table])
    times = np.array([t for t, _ in gd.gap_table])
    slack = 10 * (grid.h + dt)
    excess = float(np.max(phis - (phis[0] * np.exp(-delta * times) + slack)))
    checks.append(
        _leq("gap_bounded_by_certified_decay", excess, 0.0, slack=slack)
    )
    checks.append(
        _geq(
            "fitted_gap_rate",
            gd.fitted_rate if gd.fitted_rate is not None else -np.inf,
            1.9,
            window=gd.window,
            certified=delta,
        )
    )
    return SuiteResult(
        name="identical-gap",
        checks=checks,
        artifacts={"gap_table": gd.gap_table, "fitted_rate": gd.fitted_rate},
        elapsed_seconds=time.perf_counter() - t0,
    )


def _unit_ball_eikonal_spec(n_actions: int = 64) -> SwitchingProcessSpec:
    f1 = catalog.fourier_function(_F1, 1)
    f2 = catalog.fourier_function(_F2, 1)

    def b(x, a):
        return np.broadcast_to(np.asarray(a, dtype=float), np.shape(x))

    def ell1(x, a):
        return f1(np.atleast_2d(x))

    def ell2(x, a):
        return f2(np.atleast_2d(x))

    zero = lambda x: np.zeros(np.shape(x)[:-1])
    return SwitchingProcessSpec(
        m=2,
        dynamics=(b, b),
        costs=(ell1, ell2),
        rates=[[-1.0, 1.0], [1.0, -1.0]],
        control_set=np.linspace(-1.0, 1.0, n_actions)[:, None],
        terminal=(zero, zero),
        dim=1,
    )


def suite_appendix_mc(
    n: int = 256, horizon: float = 2.0, n_samples: int = 10_000, seed: int = 2026
) -> SuiteResult:
    """Monte Carlo value estimates against the PDE and a closed form."""
    t0 = time.perf_counter()
    spec = _unit_ball_eikonal_spec()
    grid = Grid(1, n)
    hams = tuple(hamiltonian_from_spec(spec, i) for i in range(spec.m))
    system = HJSystem(hams=hams, coupling=coupling_from_spec(spec), grid=grid)
    u0 = [GridFunction(grid, np.zeros(grid.shape)) for _ in range(spec.m)]
    config = EvolutionConfig(t_final=horizon, snapshot_every=0.125)
    traj = solve(system, u0, config)
    policy = GreedyGradientPolicy(spec, traj)
    checks = []
    probes = [(0.1, 0), (0.3, 1), (0.5, 0), (0.7, 1), (0.9, 0)]
    rows = []
    worst_rel = 0.0
    for k, (x, mode) in enumerate(probes):
        est = estimate_value(
            spec,
            policy,
            np.array([x]),
            mode,
            horizon,
            n_samples,
            seed + k,
            dt_sim=1.0 / 1024.0,
        )
        pde = float(
            interp_periodic(traj.values[-1][mode], grid, np.array([[x]]))[0]
        )
        rel = abs(est.mean - pde) / max(abs(pde), 1e-12)
        worst_rel = max(worst_rel, rel)
        rows.append(
            {
                "x": x,
                "mode": mode,
                "mc": est.mean,
                "std_error": est.std_error,
                "pde": pde,
                "relative_gap": rel,
            }
        )
    checks.append(
        _leq("mc_matches_pde_relative", worst_rel, 0.05, probes=rows)
    )

    # closed-form occupation time: idle dynamics, unit cost in mode 2 only
    zerov = lambda x, a: np.zeros(np.shape(x))
    czero = lambda x, a: np.zeros(np.shape(x)[:-1])
    cone = lambda x, a: np.ones(np.shape(x)[:-1])
    tzero = lambda x: np.zeros(np.shape(x)[:-1])
    idle = SwitchingProcessSpec(
        m=2,
        dynamics=(zerov, zerov),
        costs=(czero, cone),
        rates=[[-1.0, 1.0], [1.0, -1.0]],
        control_set=np.zeros((1, 1)),
        terminal=(tzero, tzero),
        dim=1,
    )
    exact = horizon / 2 - (1 - np.exp(-2 * horizon)) / 4
    est = estimate_value(
        idle,
        ConstantPolicy(0),
        np.array([0.25]),
        0,
        horizon,
        n_samples,
        seed + 99,
        dt_sim=horizon / 4,
    )
    checks.append(
        _leq(
            "occupation_time_within_3se",
            abs(est.mean - exact),
            3 * est.std_error,
            mc=est.mean,
            exact=float(exact),
            std_error=est.std_error,
        )
    )
    return SuiteResult(
        name="appendix-mc",
        checks=checks,
        artifacts={"probes": rows},
        elapsed_seconds=time.perf_counter() - t0,
    )


SUITE_RUNNERS = {
    "largenew-eikonal": suite_largenew_eikonal,
    "mainresult-nonconvex": suite_mainresult_nonconvex,
    "exist-smoo-strictconvex": suite_exist_smoo_strictconvex,
    "identical-gap": suite_identical_gap,
    "appendix-mc": suite_appendix_mc,
}


def run_suite(name: str, **kwargs) -> SuiteResult:
    if name not in SUITE_RUNNERS:
        raise ConfigError(
            f"unknown suite {name!r}; known: {', '.join(sorted(SUITE_RUNNERS))}"
        )
    return SUITE_RUNNERS[name](**kwargs)
