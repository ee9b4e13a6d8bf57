"""Batch command line runner.

One experiment per invocation: ``hjsys <kind> --config <path> [--out <dir>]
[--threads k]``.  Kinds: evolve, ergodic, diagnose, simulate,
validate-coupling, theorem-suite, and list (which needs no config).  The
config is a single JSON document; every tolerance and seed lives in it, and
artifacts are written deterministically (sorted keys, no timestamps), so
re-running a config byte-reproduces its outputs.

Exit codes: 0 success, 1 a requested assertion failed, 2 config error,
3 numerical divergence or non-convergence.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import catalog
from .coupling import CouplingMatrix, analyze
from .diagnostics import build_report, evaluate_on_set
from .ergodic import DiscountSchedule, estimate_ergodic_constant, long_time_constant
from .errors import ConfigError, ConvergenceError, DivergenceError
from .evolution import EvolutionConfig, HJSystem, Trajectory, solve
from .grid import Grid, GridFunction, sample
from .suites import run_suite
from .switching import (
    ConstantPolicy,
    GreedyGradientPolicy,
    SwitchingProcessSpec,
    coupling_from_spec,
    estimate_value,
    hamiltonian_from_spec,
    simulate_trajectory,
)

_MISSING = object()


def _get(cfg: dict, path: str, default=_MISSING, where: str = ""):
    node = cfg
    seen = []
    for part in path.split("."):
        seen.append(part)
        if not isinstance(node, dict) or part not in node:
            if default is not _MISSING:
                return default
            full = ".".join(([where] if where else []) + seen)
            raise ConfigError(f"config is missing required field {full!r}")
        node = node[part]
    return node


def _build_coupling(block) -> CouplingMatrix:
    if "name" in block:
        return CouplingMatrix.constant(catalog.builtin_coupling(block["name"]))
    if "entries" in block:
        return CouplingMatrix.constant(np.asarray(block["entries"], dtype=float))
    raise ConfigError("coupling block needs either 'name' or 'entries'")


def _build_system(block, where: str = "system") -> HJSystem:
    dim = int(_get(block, "grid.dim", 1))
    n = int(_get(block, "grid.n", where=where))
    grid = Grid(dim, n)
    coupling = _build_coupling(_get(block, "coupling", where=where))
    ham_blocks = _get(block, "hamiltonians", where=where)
    if not isinstance(ham_blocks, list) or not ham_blocks:
        raise ConfigError("system.hamiltonians must be a nonempty list")
    hams = tuple(
        catalog.build_hamiltonian(hb["id"], hb.get("params", {}), dim=dim)
        for hb in ham_blocks
    )
    return HJSystem(hams=hams, coupling=coupling, grid=grid)


def _build_u0(block, grid: Grid, m: int) -> list:
    kind = _get(block, "kind", "zeros")
    if kind == "zeros":
        return [GridFunction(grid, np.zeros(grid.shape)) for _ in range(m)]
    if kind == "constants":
        vals = _get(block, "values", where="u0")
        if len(vals) != m:
            raise ConfigError(f"u0.values must list {m} constants")
        return [GridFunction(grid, np.full(grid.shape, float(v))) for v in vals]
    if kind == "fourier":
        comps = _get(block, "components", where="u0")
        if len(comps) != m:
            raise ConfigError(f"u0.components must list {m} function specs")
        return [
            sample(catalog.fourier_function(c, grid.dim), grid) for c in comps
        ]
    raise ConfigError(f"unknown u0 kind {kind!r}")


def _evolution_config(block, where: str = "solver") -> EvolutionConfig:
    return EvolutionConfig(
        t_final=float(_get(block, "t_final", where=where)),
        snapshot_every=_get(block, "snapshot_every", None),
        cfl=float(_get(block, "cfl", 0.5)),
        dt_override=_get(block, "dt_override", None),
        flux_mode=_get(block, "flux_mode", "local"),
    )


def _discount_schedule(block) -> DiscountSchedule:
    kwargs = {}
    if "lambdas" in block:
        kwargs["lambdas"] = tuple(float(l) for l in block["lambdas"])
    if "steady_state_tol" in block:
        kwargs["steady_state_tol"] = float(block["steady_state_tol"])
    if "anchor" in block:
        kwargs["anchor"] = tuple(float(a) for a in block["anchor"])
    if "cfl" in block:
        kwargs["cfl"] = float(block["cfl"])
    if "flux_mode" in block:
        kwargs["flux_mode"] = str(block["flux_mode"])
    if "max_steps_per_lambda" in block:
        kwargs["max_steps_per_lambda"] = int(block["max_steps_per_lambda"])
    return DiscountSchedule(**kwargs)


def _write_json(obj, out_dir: str, fname: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, fname)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def cmd_evolve(cfg, out_dir: str, threads: int) -> int:
    system = _build_system(_get(cfg, "system"))
    config = _evolution_config(_get(cfg, "solver"))
    u0 = _build_u0(_get(cfg, "u0", {}), system.grid, system.m)
    traj = solve(system, u0, config)
    traj.save(os.path.join(out_dir, "trajectory"))
    print(f"wrote {os.path.join(out_dir, 'trajectory')}")
    return 0


def cmd_ergodic(cfg, out_dir: str, threads: int) -> int:
    system = _build_system(_get(cfg, "system"))
    schedule = _discount_schedule(_get(cfg, "schedule", {}))
    result = estimate_ergodic_constant(system, schedule)
    result.save(out_dir)
    print(f"c = {result.c.tolist()} (residual {result.residual!r})")
    print(f"wrote {out_dir}")
    return 0


def _source_functions(system: HJSystem) -> list:
    fs = []
    for i, h in enumerate(system.hams):
        if h.eikonal_parts is None:
            raise ConfigError(
                f"hamiltonian {i} has no separable source; "
                "minimizer sets need sources"
            )
        fs.append(sample(lambda x: np.asarray(h.eikonal_parts[1](x)), system.grid))
    return fs


def cmd_diagnose(cfg, out_dir: str, threads: int) -> int:
    if "trajectory_dir" in cfg:
        traj = Trajectory.load(cfg["trajectory_dir"])
        system = None
    else:
        system = _build_system(_get(cfg, "system"))
        config = _evolution_config(_get(cfg, "solver"))
        u0 = _build_u0(_get(cfg, "u0", {}), system.grid, system.m)
        traj = solve(system, u0, config)
    c_spec = _get(cfg, "c", "measured")
    if c_spec == "measured":
        c = long_time_constant(traj)
    else:
        c = np.asarray(c_spec, dtype=float)
    set_evals = []
    for sblock in _get(cfg, "sets", []):
        kind = _get(sblock, "kind")
        vs = [traj.component(i, len(traj.times) - 1) for i in range(traj.m)]
        if kind == "custom":
            set_evals.append(
                evaluate_on_set(vs, "custom", points=_get(sblock, "points"))
            )
        else:
            if system is None:
                raise ConfigError(
                    "minimizer-set evaluation needs an inline system block"
                )
            set_evals.append(evaluate_on_set(vs, kind, fs=_source_functions(system)))
    report = build_report(
        traj,
        c,
        etas=tuple(_get(cfg, "etas", (0.05, 0.1, 0.2))),
        use_log_transform=bool(_get(cfg, "use_log_transform", True)),
        gap=bool(_get(cfg, "gap", False)),
        set_evaluations=set_evals,
    )
    report.save(out_dir)
    print(f"wrote {out_dir}")
    return 0


def _build_process(block) -> SwitchingProcessSpec:
    kind = _get(block, "kind", where="process")
    rates = np.asarray(_get(block, "rates", where="process"), dtype=float)
    m = rates.shape[0]
    if kind == "unit_ball_eikonal":
        f_blocks = _get(block, "fs", where="process")
        if len(f_blocks) != m:
            raise ConfigError(f"process.fs must list {m} source functions")
        fns = [catalog.fourier_function(fb, 1) for fb in f_blocks]

        def b(x, a):
            return np.broadcast_to(np.asarray(a, dtype=float), np.shape(x))

        def make_cost(fn):
            return lambda x, a: fn(np.atleast_2d(x))

        zero = lambda x: np.zeros(np.shape(x)[:-1])
        n_actions = int(_get(block, "n_actions", 64))
        return SwitchingProcessSpec(
            m=m,
            dynamics=tuple(b for _ in range(m)),
            costs=tuple(make_cost(fn) for fn in fns),
            rates=rates,
            control_set=np.linspace(-1.0, 1.0, n_actions)[:, None],
            terminal=tuple(zero for _ in range(m)),
            dim=1,
        )
    if kind == "idle":
        cost_rates = [float(v) for v in _get(block, "cost_rates", where="process")]
        if len(cost_rates) != m:
            raise ConfigError(f"process.cost_rates must list {m} rates")

        def make_cost(v):
            return lambda x, a: np.full(np.shape(x)[:-1], v)

        zerov = lambda x, a: np.zeros(np.shape(x))
        zero = lambda x: np.zeros(np.shape(x)[:-1])
        return SwitchingProcessSpec(
            m=m,
            dynamics=tuple(zerov for _ in range(m)),
            costs=tuple(make_cost(v) for v in cost_rates),
            rates=rates,
            control_set=np.zeros((1, 1)),
            terminal=tuple(zero for _ in range(m)),
            dim=1,
        )
    raise ConfigError(f"unknown process kind {kind!r}")


def cmd_simulate(cfg, out_dir: str, threads: int) -> int:
    spec = _build_process(_get(cfg, "process"))
    pol_block = _get(cfg, "policy", {"kind": "constant", "index": 0})
    horizon = float(_get(cfg, "horizon"))
    if _get(pol_block, "kind") == "constant":
        policy = ConstantPolicy(int(_get(pol_block, "index", 0)))
    elif _get(pol_block, "kind") == "greedy":
        n = int(_get(pol_block, "grid_n", 256))
        grid = Grid(1, n)
        hams = tuple(hamiltonian_from_spec(spec, i) for i in range(spec.m))
        system = HJSystem(hams=hams, coupling=coupling_from_spec(spec), grid=grid)
        u0 = [GridFunction(grid, np.zeros(grid.shape)) for _ in range(spec.m)]
        pde_cfg = EvolutionConfig(
            t_final=horizon,
            snapshot_every=float(_get(pol_block, "snapshot_every", 0.125)),
        )
        policy = GreedyGradientPolicy(spec, solve(system, u0, pde_cfg))
    else:
        raise ConfigError(f"unknown policy kind {_get(pol_block, 'kind')!r}")
    est = estimate_value(
        spec,
        policy,
        np.asarray(_get(cfg, "x0"), dtype=float),
        int(_get(cfg, "mode0")),
        horizon,
        int(_get(cfg, "n_samples")),
        int(_get(cfg, "seed")),
        dt_sim=_get(cfg, "dt_sim", None),
        n_workers=threads,
    )
    payload = {
        "mean": est.mean,
        "std_error": est.std_error,
        "samples": est.samples,
        "policy_id": est.policy_id,
    }
    _write_json(payload, out_dir, "value.json")
    if _get(cfg, "dump_path", False):
        path = simulate_trajectory(
            spec,
            policy,
            np.asarray(_get(cfg, "x0"), dtype=float),
            int(_get(cfg, "mode0")),
            horizon,
            int(_get(cfg, "seed")),
        )
        rows = ["t,mode,action," + ",".join(f"x{k}" for k in range(spec.dim))]
        for k in range(len(path.times)):
            coords = ",".join(repr(float(v)) for v in path.positions[k])
            rows.append(
                f"{float(path.times[k])!r},{int(path.modes[k])},"
                f"{int(path.actions[min(k, len(path.actions) - 1)])},{coords}"
            )
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "path.csv"), "w") as fh:
            fh.write("\n".join(rows) + "\n")
    print(f"value = {est.mean!r} +- {est.std_error!r} ({est.samples} samples)")
    print(f"wrote {out_dir}")
    return 0


def cmd_validate_coupling(cfg, out_dir: str, threads: int) -> int:
    coupling = _build_coupling(_get(cfg, "coupling"))
    report = analyze(coupling.entries)
    payload = report.to_dict()
    print(json.dumps(payload, indent=2, sort_keys=True))
    if out_dir:
        _write_json(payload, out_dir, "coupling.json")
    return 0 if report.monotone else 1


def cmd_theorem_suite(cfg, out_dir: str, threads: int) -> int:
    name = _get(cfg, "name")
    overrides = _get(cfg, "overrides", {})
    result = run_suite(name, **overrides)
    for line in result.summary_lines():
        print(line)
    if out_dir:
        result.save(out_dir)
        print(f"wrote {out_dir}")
    return 0 if result.passed else 1


_COMMANDS = {
    "evolve": cmd_evolve,
    "ergodic": cmd_ergodic,
    "diagnose": cmd_diagnose,
    "simulate": cmd_simulate,
    "validate-coupling": cmd_validate_coupling,
    "theorem-suite": cmd_theorem_suite,
}


def _default_threads() -> int:
    env = os.environ.get("HJSYS_THREADS")
    if env is None:
        return 1
    try:
        k = int(env)
    except ValueError as exc:
        raise ConfigError(f"HJSYS_THREADS must be an integer, got {env!r}") from exc
    if k < 1:
        raise ConfigError(f"HJSYS_THREADS must be >= 1, got {k}")
    return k


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hjsys",
        description="weakly coupled Hamilton-Jacobi systems: experiments and checks",
    )
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in _COMMANDS:
        p = sub.add_parser(kind)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--out", default="", help="artifact directory")
        p.add_argument("--threads", type=int, default=None)
    p_list = sub.add_parser("list")
    p_list.add_argument("what", choices=["hamiltonians", "couplings", "suites"])
    args = parser.parse_args(argv)
    try:
        if args.kind == "list":
            for name in catalog.list_builtin(args.what):
                print(name)
            return 0
        threads = args.threads if args.threads is not None else _default_threads()
        if threads < 1:
            raise ConfigError(f"--threads must be >= 1, got {threads}")
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {args.config}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        out_dir = args.out or os.path.join(os.getcwd(), "hjsys-out")
        return _COMMANDS[args.kind](cfg, out_dir, threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DivergenceError, ConvergenceError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
