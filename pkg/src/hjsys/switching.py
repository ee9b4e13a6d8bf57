"""Controlled piecewise-deterministic dynamics with random mode switching.

A path holds a position on the torus and a discrete mode.  The position
follows dx/dt = b_mode(x, a) under a chosen action a; the mode jumps with
exact exponential clocks: in mode i the next switch arrives at rate
R_i = sum_{j != i} gamma_ij and lands on j with probability gamma_ij / R_i.
Clocks are sampled exactly (no per-step Bernoulli), so the switching law
carries no time-step bias; only the position integration is explicit Euler.

Path cost is the running integral of l_mode(x, a) plus a terminal payment,
matching the value functions solved by the PDE side with

    H_i(x, p) = max over actions a of [-<b_i(x, a), p> - l_i(x, a)],
    d_ii = sum_{j != i} gamma_ij,   d_ij = -gamma_ij.

``simulate_trajectory`` is the scalar reference implementation with a full
path record.  ``estimate_value`` runs batched paths vectorized over the
sample axis; every batch draws from an independent child stream of the
master seed and batches are aggregated in fixed order, so results are
reproducible regardless of worker count.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .coupling import CouplingMatrix
from .errors import ConfigError, StructureError
from .hamiltonians import Hamiltonian

__all__ = [
    "SwitchingProcessSpec",
    "Path",
    "ValueEstimate",
    "ConstantPolicy",
    "GreedyGradientPolicy",
    "simulate_trajectory",
    "estimate_value",
    "hamiltonian_from_spec",
    "coupling_from_spec",
]


@dataclass(frozen=True)
class SwitchingProcessSpec:
    """Modes, dynamics, running costs, switching rates, and the action list.

    ``rates[i, j]`` is the i -> j switching intensity for j != i; the
    diagonal is bookkeeping only and is stored as -1.  ``control_set`` rows
    are the admissible actions (the continuum action set discretized to a
    finite list).  Dynamics and costs take (x, action_row) with x shaped
    (..., dim) and broadcast over the leading axes.
    """

    m: int
    dynamics: tuple
    costs: tuple
    rates: np.ndarray
    control_set: np.ndarray
    terminal: tuple
    dim: int = 1
    dt_sim: float = 1.0 / 1024.0  # quarter of the default companion grid spacing

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ConfigError("need at least one mode")
        if len(self.dynamics) != self.m or len(self.costs) != self.m:
            raise ConfigError("need one dynamics and one cost callable per mode")
        if len(self.terminal) != self.m:
            raise ConfigError("need one terminal function per mode")
        g = np.array(self.rates, dtype=float)
        if g.shape != (self.m, self.m):
            raise ConfigError(f"rates must be {self.m}x{self.m}, got {g.shape}")
        off = g[~np.eye(self.m, dtype=bool)]
        if np.any(off < 0):
            raise StructureError("off-diagonal switching rates must be nonnegative")
        np.fill_diagonal(g, -1.0)
        g.setflags(write=False)
        object.__setattr__(self, "rates", g)
        A = np.atleast_2d(np.array(self.control_set, dtype=float))
        if A.shape[0] == 0:
            raise ConfigError("control set must not be empty")
        A.setflags(write=False)
        object.__setattr__(self, "control_set", A)
        if self.dt_sim <= 0:
            raise ConfigError("dt_sim must be positive")

    def total_rates(self) -> np.ndarray:
        out = self.rates.copy()
        np.fill_diagonal(out, 0.0)
        return out.sum(axis=1)

    def lipschitz_ratio_check(self, n_pairs: int = 200, seed: int = 5) -> float:
        """Worst |b(x,a) - b(y,a)| / dist(x,y) over random pairs and actions."""
        rng = np.random.default_rng(seed)
        xs = rng.random((n_pairs, self.dim))
        ys = xs + rng.normal(0, 0.05, xs.shape)
        ys = ys - np.floor(ys)
        d = np.abs(xs - ys)
        d = np.minimum(d, 1 - d)
        dist = np.sqrt(np.sum(d * d, axis=1))
        keep = dist > 1e-12
        worst = 0.0
        for i in range(self.m):
            for a in self.control_set[:: max(1, len(self.control_set) // 8)]:
                bx = np.broadcast_to(
                    np.asarray(self.dynamics[i](xs, a), dtype=float), xs.shape
                )
                by = np.broadcast_to(
                    np.asarray(self.dynamics[i](ys, a), dtype=float), ys.shape
                )
                num = np.sqrt(np.sum((bx - by) ** 2, axis=1))
                worst = max(worst, float(np.max(num[keep] / dist[keep])))
        return worst


@dataclass
class Path:
    times: np.ndarray
    positions: np.ndarray  # (len(times), dim)
    modes: np.ndarray
    actions: np.ndarray  # action index applied on [t_k, t_{k+1}); last repeats
    cost: float

    @property
    def n_switches(self) -> int:
        return int(np.sum(self.modes[1:] != self.modes[:-1]))


@dataclass(frozen=True)
class ValueEstimate:
    mean: float
    std_error: float
    samples: int
    policy_id: str


class ConstantPolicy:
    """Always plays one fixed row of the control set."""

    def __init__(self, action_index: int):
        self.action_index = int(action_index)
        self.policy_id = f"constant[{self.action_index}]"

    def action_indices(self, x, modes, time_to_go) -> np.ndarray:
        return np.full(np.shape(modes), self.action_index, dtype=int)


class GreedyGradientPolicy:
    """Plays the pointwise maximizer against a PDE gradient field.

    For each stored snapshot (read as a value function indexed by time to
    go) and each mode, the best action at every grid node is precomputed:
    argmax over a of [-<b(x, a), Du(x)> - l(x, a)] with Du by central
    differences.  At run time the nearest node and the nearest snapshot in
    time-to-go are looked up.
    """

    def __init__(self, spec: SwitchingProcessSpec, traj):
        self.spec = spec
        self.grid = traj.grid
        self.snapshot_ttg = np.asarray(traj.times, dtype=float)
        self.policy_id = "greedy-gradient"
        n, dim = self.grid.n, self.grid.dim
        nodes = self.grid.nodes()
        tables = np.empty((len(traj.times), spec.m, len(nodes)), dtype=np.int64)
        for k in range(len(traj.times)):
            for i in range(spec.m):
                u = traj.values[k][i]
                grad = np.stack(
                    [
                        (np.roll(u, -1, axis=ax) - np.roll(u, 1, axis=ax))
                        / (2 * self.grid.h)
                        for ax in range(dim)
                    ],
                    axis=-1,
                ).reshape(len(nodes), dim)
                scores = np.empty((len(nodes), len(spec.control_set)))
                for ai, a in enumerate(spec.control_set):
                    b = np.broadcast_to(
                        np.asarray(spec.dynamics[i](nodes, a), dtype=float),
                        nodes.shape,
                    )
                    ell = np.broadcast_to(
                        np.asarray(spec.costs[i](nodes, a), dtype=float),
                        (len(nodes),),
                    )
                    scores[:, ai] = -np.sum(b * grad, axis=1) - ell
                tables[k, i] = np.argmax(scores, axis=1)
        self._tables = tables

    def _node_index(self, x: np.ndarray) -> np.ndarray:
        n = self.grid.n
        idx = np.rint(np.atleast_2d(x) * n).astype(int) % n
        if self.grid.dim == 1:
            return idx[:, 0]
        return idx[:, 0] * n + idx[:, 1]

    def action_indices(self, x, modes, time_to_go) -> np.ndarray:
        snap = np.searchsorted(self.snapshot_ttg, np.asarray(time_to_go))
        snap = np.clip(snap, 0, len(self.snapshot_ttg) - 1)
        lower = np.clip(snap - 1, 0, None)
        pick_lower = np.abs(self.snapshot_ttg[lower] - time_to_go) <= np.abs(
            self.snapshot_ttg[snap] - time_to_go
        )
        snap = np.where(pick_lower & (snap > 0), lower, snap)
        nodes = self._node_index(x)
        return self._tables[snap, np.asarray(modes, dtype=int), nodes]


def _grouped_velocity_cost(spec, x, modes, a_idx):
    """Evaluate b and l by (mode, action) groups; x has shape (B, dim)."""
    v = np.empty_like(x)
    c = np.empty(len(x))
    codes = np.asarray(modes) * len(spec.control_set) + np.asarray(a_idx)
    for code in np.unique(codes):
        sel = codes == code
        i, ai = divmod(int(code), len(spec.control_set))
        a = spec.control_set[ai]
        v[sel] = np.broadcast_to(
            np.asarray(spec.dynamics[i](x[sel], a), dtype=float), x[sel].shape
        )
        c[sel] = np.broadcast_to(
            np.asarray(spec.costs[i](x[sel], a), dtype=float), (int(np.sum(sel)),)
        )
    return v, c


def _draw_destinations(spec, modes, u):
    """Destination modes for switching paths; u uniform in [0,1)."""
    out = np.empty(len(modes), dtype=int)
    R = spec.total_rates()
    for i in np.unique(modes):
        sel = modes == i
        row = spec.rates[i].copy()
        row[i] = 0.0
        cum = np.cumsum(row / R[i])
        out[sel] = np.searchsorted(cum, u[sel], side="right")
    return np.minimum(out, spec.m - 1)


def simulate_trajectory(
    spec: SwitchingProcessSpec,
    policy,
    x0,
    mode0: int,
    horizon: float,
    seed: int,
    dt_sim: float | None = None,
) -> Path:
    """One path with a full record; deterministic given the seed."""
    if not (0 <= mode0 < spec.m):
        raise ConfigError(f"mode0 must be in [0, {spec.m}), got {mode0}")
    if horizon <= 0:
        raise ConfigError("horizon must be positive")
    dt = spec.dt_sim if dt_sim is None else float(dt_sim)
    rng = np.random.default_rng(seed)
    R = spec.total_rates()
    x = np.atleast_1d(np.asarray(x0, dtype=float)) % 1.0
    mode = int(mode0)
    t = 0.0
    next_switch = t + rng.exponential(1.0 / R[mode]) if R[mode] > 0 else np.inf
    times, positions, modes, actions = [t], [x.copy()], [mode], []
    cost = 0.0
    while t < horizon - 1e-15:
        seg_end = min(t + dt, horizon, next_switch)
        a_idx = int(
            policy.action_indices(x[None, :], np.array([mode]), np.array([horizon - t]))[0]
        )
        a = spec.control_set[a_idx]
        b = np.broadcast_to(np.asarray(spec.dynamics[mode](x, a), dtype=float), x.shape)
        ell = float(np.asarray(spec.costs[mode](x, a), dtype=float))
        seg = seg_end - t
        cost += ell * seg
        x = (x + seg * b) % 1.0
        t = seg_end
        if t >= next_switch - 1e-15 and t < horizon - 1e-15:
            mode = _draw_destinations(spec, np.array([mode]), rng.random(1))[0]
            next_switch = t + (
                rng.exponential(1.0 / R[mode]) if R[mode] > 0 else np.inf
            )
        times.append(t)
        positions.append(x.copy())
        modes.append(mode)
        actions.append(a_idx)
    cost += float(np.asarray(spec.terminal[mode](x), dtype=float))
    actions.append(actions[-1] if actions else 0)
    return Path(
        times=np.asarray(times),
        positions=np.asarray(positions),
        modes=np.asarray(modes),
        actions=np.asarray(actions),
        cost=cost,
    )


def _run_batch(spec, policy, x0, mode0, horizon, dt, rng, size) -> np.ndarray:
    R = spec.total_rates()
    x = np.broadcast_to(
        np.atleast_1d(np.asarray(x0, dtype=float)) % 1.0, (size, spec.dim)
    ).copy()
    modes = np.full(size, int(mode0))
    cost = np.zeros(size)
    cur = np.zeros(size)
    draw = rng.exponential(size=size)
    with np.errstate(divide="ignore"):
        next_switch = np.where(R[modes] > 0, draw / R[modes], np.inf)
    n_steps = int(np.ceil(horizon / dt - 1e-12))
    for k in range(n_steps):
        t1 = min((k + 1) * dt, horizon)
        while True:
            seg = np.minimum(next_switch, t1) - cur
            seg = np.maximum(seg, 0.0)
            live = seg > 0
            if np.any(live):
                a_idx = policy.action_indices(x, modes, horizon - cur)
                v, c = _grouped_velocity_cost(spec, x, modes, a_idx)
                cost[live] += c[live] * seg[live]
                x[live] = (x[live] + seg[live, None] * v[live]) % 1.0
                cur += seg
            switching = (next_switch <= t1 - 1e-15) & (cur >= next_switch - 1e-15)
            if not np.any(switching):
                break
            u = rng.random(int(np.sum(switching)))
            modes[switching] = _draw_destinations(spec, modes[switching], u)
            draw = rng.exponential(size=int(np.sum(switching)))
            Rsel = R[modes[switching]]
            with np.errstate(divide="ignore"):
                next_switch[switching] = cur[switching] + np.where(
                    Rsel > 0, draw / Rsel, np.inf
                )
        cur[:] = t1
    for i in np.unique(modes):
        sel = modes == i
        cost[sel] += np.broadcast_to(
            np.asarray(spec.terminal[i](x[sel]), dtype=float), (int(np.sum(sel)),)
        )
    return cost


def estimate_value(
    spec: SwitchingProcessSpec,
    policy,
    x,
    mode: int,
    horizon: float,
    n_samples: int,
    seed: int,
    dt_sim: float | None = None,
    batch_size: int = 2048,
    n_workers: int = 1,
) -> ValueEstimate:
    """Monte Carlo path-cost mean with independent per-batch streams."""
    if n_samples < 100:
        raise ConfigError("need at least 100 samples")
    dt = spec.dt_sim if dt_sim is None else float(dt_sim)
    sizes = []
    left = n_samples
    while left > 0:
        sizes.append(min(batch_size, left))
        left -= sizes[-1]
    streams = np.random.SeedSequence(seed).spawn(len(sizes))
    def one(args):
        ss, size = args
        return _run_batch(
            spec, policy, x, mode, horizon, dt, np.random.default_rng(ss), size
        )
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            parts = list(pool.map(one, zip(streams, sizes)))
    else:
        parts = [one(a) for a in zip(streams, sizes)]
    costs = np.concatenate(parts)
    mean = float(np.mean(costs))
    std_error = float(np.std(costs, ddof=1) / np.sqrt(len(costs)))
    return ValueEstimate(
        mean=mean, std_error=std_error, samples=len(costs), policy_id=policy.policy_id
    )


def hamiltonian_from_spec(
    spec: SwitchingProcessSpec, mode: int, p_box: float = 2.5
) -> Hamiltonian:
    """Max-over-actions Hamiltonian of one mode."""
    if not (0 <= mode < spec.m):
        raise ConfigError(f"mode must be in [0, {spec.m}), got {mode}")
    b_i, ell_i = spec.dynamics[mode], spec.costs[mode]
    actions = spec.control_set

    def eval_fn(x, p):
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        best = None
        for a in actions:
            b = np.broadcast_to(np.asarray(b_i(x, a), dtype=float), p.shape)
            val = -np.sum(b * p, axis=-1) - np.asarray(ell_i(x, a), dtype=float)
            best = val if best is None else np.maximum(best, val)
        return best

    probes = np.linspace(0.0, 1.0, 17)[:-1]
    xs = (
        probes[:, None]
        if spec.dim == 1
        else np.stack(np.meshgrid(probes, probes, indexing="ij"), -1).reshape(-1, 2)
    )
    bmax_axis = np.zeros(spec.dim)
    for a in actions:
        b = np.broadcast_to(np.asarray(b_i(xs, a), dtype=float), xs.shape)
        bmax_axis = np.maximum(bmax_axis, np.max(np.abs(b), axis=0))

    def axis_alpha(x, pabs):
        return np.broadcast_to(bmax_axis, pabs.shape)

    # crude coercivity probe along the axes; gates the discounted solver
    tags = {"convex"}
    e = np.zeros((2 * spec.dim, spec.dim))
    for k in range(spec.dim):
        e[2 * k, k], e[2 * k + 1, k] = 1.0, -1.0
    x_mid = np.full((1, spec.dim), 0.5)
    grew = all(
        float(eval_fn(x_mid, p_box * d[None, :])[0])
        > float(eval_fn(x_mid, 0.5 * p_box * d[None, :])[0])
        for d in e
    )
    if grew:
        tags.add("coercive")
    return Hamiltonian(
        dim=spec.dim,
        eval_fn=eval_fn,
        lf_alpha=1.05 * float(np.max(bmax_axis)) if np.max(bmax_axis) > 0 else 1e-12,
        class_tags=frozenset(tags),
        axis_alpha=axis_alpha,
        name="switching_sup",
        params={"mode": mode, "actions": int(len(actions))},
    )


def coupling_from_spec(spec: SwitchingProcessSpec) -> CouplingMatrix:
    """d_ii = total leave rate, d_ij = -rate(i -> j); zero row sums."""
    D = -np.array(spec.rates, dtype=float)
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    return CouplingMatrix.constant(D)
