"""Cross-check four routes to the behavior of the coupled eikonal pair.

The same two sources drive
  1. the closed-form weighted-minimum constant,
  2. the vanishing-discount estimate,
  3. the measured drift of a long time-dependent solve, and
  4. Monte Carlo values of the switching process against the PDE state
     generated from the very same control problem.

Routes 1-3 use the quadratic Hamiltonians; route 4 uses the unit-ball
control form at a finite horizon, so only its per-probe agreement is
checked, not the constant.  Writes constants.csv, probes.csv, and
summary.json under --out and prints both tables.
"""

from __future__ import annotations

import argparse
import json
import os
import time

import numpy as np

from hjsys.catalog import fourier_function
from hjsys.coupling import CouplingMatrix, ergodic_constant_formula
from hjsys.ergodic import (
    DiscountSchedule,
    estimate_ergodic_constant,
    long_time_constant,
)
from hjsys.evolution import EvolutionConfig, HJSystem, solve
from hjsys.grid import Grid, GridFunction, interp_periodic, sample
from hjsys.hamiltonians import make_quadratic_eikonal
from hjsys.switching import (
    GreedyGradientPolicy,
    SwitchingProcessSpec,
    coupling_from_spec,
    estimate_value,
    hamiltonian_from_spec,
)

F1 = {"const": 1.5, "terms": [{"k": [1], "cos": -1.0}]}
F2 = {"const": 2.0, "terms": [{"k": [1], "cos": -2.0}]}
SYM = np.array([[1.0, -1.0], [-1.0, 1.0]])
PROBES = [(0.1, 0), (0.3, 1), (0.5, 0), (0.7, 1), (0.9, 0)]


def quadratic_pair(n: int) -> HJSystem:
    grid = Grid(dim=1, n=n)
    hams = tuple(
        make_quadratic_eikonal(fourier_function(f, 1), dim=1, params={"f": f})
        for f in (F1, F2)
    )
    return HJSystem(
        hams=hams, coupling=CouplingMatrix(2, entries=SYM), grid=grid
    )


def switching_spec(n_actions: int = 64) -> SwitchingProcessSpec:
    f1 = fourier_function(F1, 1)
    f2 = fourier_function(F2, 1)

    def b(x, a):
        return np.broadcast_to(np.asarray(a, dtype=float), np.shape(x))

    def ell1(x, a):
        return f1(np.atleast_2d(x))

    def ell2(x, a):
        return f2(np.atleast_2d(x))

    def zero(x):
        return np.zeros(np.shape(x)[:-1])

    return SwitchingProcessSpec(
        m=2,
        dynamics=(b, b),
        costs=(ell1, ell2),
        rates=[[-1.0, 1.0], [1.0, -1.0]],
        control_set=np.linspace(-1.0, 1.0, n_actions)[:, None],
        terminal=(zero, zero),
        dim=1,
    )


def constants_study(n: int, t_final: float) -> list:
    system = quadratic_pair(n)
    grid = system.grid
    fs = [sample(fourier_function(f, 1), grid) for f in (F1, F2)]
    formula = ergodic_constant_formula(system.coupling, fs)

    t0 = time.perf_counter()
    est = estimate_ergodic_constant(system, DiscountSchedule())
    disc_s = time.perf_counter() - t0

    t0 = time.perf_counter()
    u0 = [GridFunction(grid, np.zeros(grid.shape)) for _ in range(system.m)]
    traj = solve(system, u0, EvolutionConfig(t_final=t_final, snapshot_every=0.5))
    drift = long_time_constant(traj)
    drift_s = time.perf_counter() - t0

    rows = [("weighted-minimum formula", formula, formula, 0.0, 0.0)]
    for label, values, secs in (
        ("vanishing discount", est.c, disc_s),
        ("measured drift", drift, drift_s),
    ):
        for i, v in enumerate(np.asarray(values)):
            rows.append(
                (f"{label} [{i}]", float(v), formula, abs(float(v) - formula), secs)
            )
    return rows


def probes_study(horizon: float, n: int, n_samples: int, seed: int) -> list:
    spec = switching_spec()
    grid = Grid(1, n)
    hams = tuple(hamiltonian_from_spec(spec, i) for i in range(spec.m))
    system = HJSystem(hams=hams, coupling=coupling_from_spec(spec), grid=grid)
    u0 = [GridFunction(grid, np.zeros(grid.shape)) for _ in range(spec.m)]
    traj = solve(system, u0, EvolutionConfig(t_final=horizon, snapshot_every=0.125))
    policy = GreedyGradientPolicy(spec, traj)

    rows = []
    for k, (x, mode) in enumerate(PROBES):
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
        pde = float(interp_periodic(traj.values[-1][mode], grid, np.array([[x]]))[0])
        rel = abs(est.mean - pde) / max(abs(pde), 1e-12)
        rows.append((x, mode, est.mean, est.std_error, pde, rel))
    return rows


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="", help="artifact directory")
    parser.add_argument("--n", type=int, default=256, help="grid size")
    parser.add_argument("--t-final", type=float, default=40.0, help="drift horizon")
    parser.add_argument("--horizon", type=float, default=2.0, help="MC horizon")
    parser.add_argument("--n-samples", type=int, default=10_000)
    parser.add_argument("--seed", type=int, default=2026)
    args = parser.parse_args(argv)

    crows = constants_study(args.n, args.t_final)
    formula = crows[0][1]
    print(f"constant routes (reference {formula:+.6f}):")
    for label, value, _, gap, secs in crows:
        print(f"  {label:<26} {value:+.6f}  gap {gap:.2e}  ({secs:.1f} s)")

    prows = probes_study(args.horizon, args.n, args.n_samples, args.seed)
    print(f"switching-process probes at horizon {args.horizon}:")
    worst_rel = 0.0
    for x, mode, mc, se, pde, rel in prows:
        worst_rel = max(worst_rel, rel)
        print(
            f"  x={x:.2f} mode={mode}  mc {mc:.5f} (se {se:.1e})"
            f"  pde {pde:.5f}  rel gap {rel:.2e}"
        )
    print(f"worst relative probe gap: {worst_rel:.2e}")

    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "constants.csv"), "w") as fh:
            fh.write("route,value,reference,abs_gap,seconds\n")
            for label, value, ref, gap, secs in crows:
                fh.write(f"{label},{value!r},{ref!r},{gap!r},{secs:.3f}\n")
        with open(os.path.join(args.out, "probes.csv"), "w") as fh:
            fh.write("x,mode,mc,std_error,pde,relative_gap\n")
            for x, mode, mc, se, pde, rel in prows:
                fh.write(f"{x!r},{mode},{mc!r},{se!r},{pde!r},{rel!r}\n")
        summary = {
            "grid_n": args.n,
            "formula": formula,
            "worst_constant_gap": max(r[3] for r in crows),
            "worst_probe_relative_gap": worst_rel,
            "n_samples": args.n_samples,
            "seed": args.seed,
        }
        with open(os.path.join(args.out, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
