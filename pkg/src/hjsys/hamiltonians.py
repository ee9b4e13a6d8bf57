"""Hamiltonian evaluators, structural checks, and the monotone numerical flux.

Evaluators are vectorized: ``H(x, p)`` takes coordinate and gradient arrays
shaped (..., dim) and returns (...).  Built-in families:

* quadratic eikonal   H(x, p) = |p|^2 - f(x)
* linear eikonal      H(x, p) = |p|  - f(x)
* nonconvex profile   H(x, p) = (|p + q(x)|^2 - |q(x)|^2) F(x, p/|p|) - f(x)
  with F bounded between positive constants; H(x, 0) = -f(x) by continuity.
  The family satisfies H_p . p - H = |p|^2 F + f pointwise where smooth.

The numerical flux is of Lax-Friedrichs type,

    flux = H(x, (p- + p+)/2) - (alpha/2) * sum_k (p+_k - p-_k),

monotone as long as alpha dominates |H_p| on the gradients in play.  A
single global ``lf_alpha`` (sampled over a configured p-box at build time)
gives the textbook scheme; builders additionally provide per-axis local
bounds ``axis_alpha`` so the stepping code can use stencil-local dissipation,
which is what keeps the numerical large-time constants sharp on coarse grids.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from .errors import ConfigError

__all__ = [
    "Hamiltonian",
    "SamplerConfig",
    "AssumptionReport",
    "make_quadratic_eikonal",
    "make_linear_eikonal",
    "make_nonconvex_example",
    "lax_friedrichs_flux",
    "numerical_flux",
    "grad_p",
    "sampled_grad_sup",
    "check_assumption",
]

ASSUMPTION_IDS = ("H5", "H7", "H10", "strictconvex", "coercive")
_NUM_TOL = 1e-9


@dataclass(frozen=True)
class Hamiltonian:
    """First-order Hamiltonian on the torus with scheme metadata.

    ``eval_fn(x, p)``: vectorized evaluator as described in the module
    docstring.  ``lf_alpha``: global dissipation coefficient.
    ``axis_alpha(x, pabs)``: optional per-axis bound on |dH/dp_k| valid for
    all gradients with |p_k| <= pabs_k (arrays shaped (..., dim)).
    ``eikonal_parts``: optional pair (gradient_part(x, p), source(x)) with
    H = gradient_part - source.  ``compact_set_K``: optional predicate for
    the zero set that pins the large-time constant at zero.
    """

    dim: int
    eval_fn: Callable
    lf_alpha: float
    class_tags: frozenset = frozenset()
    eikonal_parts: tuple | None = None
    compact_set_K: Callable | None = None
    axis_alpha: Callable | None = None
    name: str = "custom"
    params: dict = dc_field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if not np.isfinite(self.lf_alpha) or self.lf_alpha <= 0:
            raise ConfigError(f"lf_alpha must be positive, got {self.lf_alpha!r}")

    def __call__(self, x, p) -> np.ndarray:
        return self.eval_fn(np.asarray(x, dtype=float), np.asarray(p, dtype=float))


def grad_p(H, x, p, step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of H in p; shapes follow the evaluator."""
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    out = np.empty_like(p)
    for k in range(p.shape[-1]):
        dp = np.zeros_like(p)
        dp[..., k] = step
        out[..., k] = (H(x, p + dp) - H(x, p - dp)) / (2 * step)
    return out


def sampled_grad_sup(
    eval_fn: Callable,
    dim: int,
    p_box: float,
    n_x: int = 32,
    n_p: int = 128,
    step: float = 1e-5,
    seed: int = 7,
) -> float:
    """Sampled sup over x and the p-box of max_k |dH/dp_k|."""
    rng = np.random.default_rng(seed)
    xs = rng.uniform(0.0, 1.0, size=(n_x, dim))
    ps = rng.uniform(-p_box, p_box, size=(n_p, dim))
    best = 0.0
    for k in range(dim):
        dp = np.zeros(dim)
        dp[k] = step
        for x in xs:
            xa = np.broadcast_to(x, (n_p, dim))
            g = (eval_fn(xa, ps + dp) - eval_fn(xa, ps - dp)) / (2 * step)
            best = max(best, float(np.max(np.abs(g))))
    return best


# -- built-in families -------------------------------------------------------


def make_quadratic_eikonal(
    f: Callable, dim: int = 1, p_box: float = 2.5, name: str = "quadratic_eikonal",
    params: dict | None = None,
) -> Hamiltonian:
    """H(x, p) = |p|^2 - f(x); strictly convex and coercive."""

    def ev(x, p):
        return np.sum(p * p, axis=-1) - f(x)

    def axis_alpha(x, pabs):
        # |dH/dp_k| = 2 |p_k|, exact on the one-sided hull
        return 2.0 * pabs

    alpha = 1.1 * sampled_grad_sup(ev, dim, p_box)
    return Hamiltonian(
        dim=dim,
        eval_fn=ev,
        lf_alpha=alpha,
        class_tags=frozenset({"convex", "strictly_convex", "coercive", "eikonal_split"}),
        eikonal_parts=(lambda x, p: np.sum(p * p, axis=-1), f),
        compact_set_K=lambda x: np.asarray(f(x)) <= 1e-9,
        axis_alpha=axis_alpha,
        name=name,
        params=dict(params or {}),
    )


def make_linear_eikonal(
    f: Callable, dim: int = 1, p_box: float = 2.5, name: str = "linear_eikonal",
    params: dict | None = None,
) -> Hamiltonian:
    """H(x, p) = |p| - f(x); convex and coercive, kink at p = 0."""

    def ev(x, p):
        return np.sqrt(np.sum(p * p, axis=-1)) - f(x)

    def axis_alpha(x, pabs):
        return np.ones_like(pabs)

    _ = p_box  # |dH/dp_k| <= 1 everywhere; nothing to sample
    return Hamiltonian(
        dim=dim,
        eval_fn=ev,
        lf_alpha=1.1,
        class_tags=frozenset({"convex", "coercive", "eikonal_split"}),
        eikonal_parts=(lambda x, p: np.sqrt(np.sum(p * p, axis=-1)), f),
        compact_set_K=lambda x: np.asarray(f(x)) <= 1e-9,
        axis_alpha=axis_alpha,
        name=name,
        params=dict(params or {}),
    )


def make_nonconvex_example(
    F: Callable,
    f: Callable,
    q: Callable,
    dim: int = 1,
    p_box: float = 2.5,
    name: str = "nonconvex_bs00",
    params: dict | None = None,
    f_bound: float | None = None,
    q_bound: float | None = None,
    F_bounds: tuple[float, float] | None = None,
    F_angle_slope: float = 0.0,
) -> Hamiltonian:
    """Direction-dependent nonconvex family; see module docstring.

    ``F(x, d)`` takes unit directions d; it must be bounded between positive
    constants.  ``q(x)`` returns (..., dim).  Optional analytic bounds feed
    the local dissipation estimate; when omitted they are sampled.
    """

    def ev(x, p):
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        qv = np.asarray(q(x), dtype=float)
        pn = np.sqrt(np.sum(p * p, axis=-1))
        psi = np.sum((p + qv) ** 2, axis=-1) - np.sum(qv * qv, axis=-1)
        safe = np.where(pn > 0, pn, 1.0)
        d = p / safe[..., None]
        fv = np.asarray(f(x))
        return np.where(pn > 0, psi * np.asarray(F(x, d)) - fv, -fv)

    # sampled positivity envelope for F and sup |q| to bound |H_p|
    probe = np.linspace(0.0, 1.0, 64, endpoint=False)
    xs = probe[:, None] if dim == 1 else np.stack(
        np.meshgrid(probe[::4], probe[::4], indexing="ij"), axis=-1
    ).reshape(-1, 2)
    if F_bounds is None:
        if dim == 1:
            dirs = np.array([[1.0], [-1.0]])
        else:
            th = np.linspace(0, 2 * np.pi, 64, endpoint=False)
            dirs = np.stack([np.cos(th), np.sin(th)], axis=-1)
        fvals = np.concatenate([np.asarray(F(xs, np.broadcast_to(d, xs.shape))).ravel()
                                for d in dirs])
        F_bounds = (float(np.min(fvals)), float(np.max(fvals)))
    if F_bounds[0] <= 0:
        raise ConfigError(f"direction profile must stay positive, sampled min {F_bounds[0]!r}")
    if q_bound is None:
        q_bound = float(np.max(np.abs(np.asarray(q(xs)))))

    fmax, fangle, qmax = F_bounds[1], F_angle_slope, q_bound

    def axis_alpha(x, pabs):
        # |H_p| <= 2(|p| + |q|) F_max + (|p| + 2|q|) sup|dF/dtheta|
        pn = np.sqrt(np.sum(pabs * pabs, axis=-1, keepdims=True))
        bound = 2.0 * (pn + qmax) * fmax + (pn + 2.0 * qmax) * fangle
        return np.broadcast_to(bound, pabs.shape)

    def compact_set(x):
        qv = np.asarray(q(x), dtype=float)
        return (np.asarray(f(x)) <= 1e-9) & (
            np.sqrt(np.sum(qv * qv, axis=-1)) <= 1e-9
        )

    alpha = 1.1 * max(
        sampled_grad_sup(ev, dim, p_box),
        2.0 * (p_box + qmax) * fmax,
    )
    tags = {"nonconvex_example", "coercive"}
    nodes = xs if dim == 2 else probe[:, None]
    if not np.any(compact_set(nodes)):
        tags.add("K_empty_warning")
    return Hamiltonian(
        dim=dim,
        eval_fn=ev,
        lf_alpha=alpha,
        class_tags=frozenset(tags),
        eikonal_parts=(lambda x, p: ev(x, p) + np.asarray(f(x)), f),
        compact_set_K=compact_set,
        axis_alpha=axis_alpha,
        name=name,
        params=dict(params or {}),
    )


# -- numerical flux ----------------------------------------------------------


def lax_friedrichs_flux(H: Hamiltonian, x, p_minus, p_plus) -> np.ndarray:
    """Global-coefficient monotone flux (see module docstring)."""
    if H.lf_alpha <= 0:
        raise ConfigError("lf_alpha must be positive")
    pm = np.asarray(p_minus, dtype=float)
    pp = np.asarray(p_plus, dtype=float)
    mid = H(x, 0.5 * (pm + pp))
    return mid - 0.5 * H.lf_alpha * np.sum(pp - pm, axis=-1)


def numerical_flux(
    H: Hamiltonian, x, p_minus, p_plus, mode: str = "local"
) -> np.ndarray:
    """Monotone flux with either global or stencil-local dissipation.

    ``mode='local'`` uses the Hamiltonian's per-axis derivative bound on the
    hull of the one-sided gradients; it coincides with the global flux when
    no bound is available.  Local dissipation vanishes with the gradients,
    which removes most of the O(alpha h) smearing at the minima that set the
    large-time constants.
    """
    if mode not in ("local", "global"):
        raise ConfigError(f"unknown flux mode {mode!r}")
    if mode == "global" or H.axis_alpha is None:
        return lax_friedrichs_flux(H, x, p_minus, p_plus)
    pm = np.asarray(p_minus, dtype=float)
    pp = np.asarray(p_plus, dtype=float)
    pabs = np.maximum(np.abs(pm), np.abs(pp))
    alpha = np.asarray(H.axis_alpha(np.asarray(x, dtype=float), pabs))
    mid = H(x, 0.5 * (pm + pp))
    return mid - 0.5 * np.sum(alpha * (pp - pm), axis=-1)


# -- assumption checking -----------------------------------------------------


@dataclass(frozen=True)
class SamplerConfig:
    """Sampling plan for assumption checks."""

    n_x: int = 64
    n_p: int = 96
    p_box: float = 2.5
    fd_step: float = 1e-5
    kink_radius: float = 1e-3
    etas: tuple = (0.02, 0.05, 0.1, 0.2, 0.5)
    lambdas: tuple = (0.25, 0.5, 0.75)
    margin: float = _NUM_TOL
    seed: int = 11


@dataclass
class AssumptionReport:
    assumption_id: str
    passed: bool
    sample_count: int
    violations: list = dc_field(default_factory=list)
    eta_psi_profile: list | None = None
    notes: list = dc_field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "assumption_id": self.assumption_id,
            "passed": self.passed,
            "sample_count": self.sample_count,
            "violations": [list(v) for v in self.violations[:20]],
            "eta_psi_profile": self.eta_psi_profile,
            "notes": list(self.notes),
        }


def _torus_dist(xs: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    """Periodic distance from each x to the nearest anchor; inf if none."""
    if anchors.size == 0:
        return np.full(xs.shape[0], np.inf)
    diff = np.abs(xs[:, None, :] - anchors[None, :, :])
    diff = np.minimum(diff, 1.0 - diff)
    return np.sqrt(np.sum(diff**2, axis=-1)).min(axis=1)


def check_assumption(
    H: Hamiltonian,
    assumption_id: str,
    config: SamplerConfig = SamplerConfig(),
    shift_c: float = 0.0,
) -> AssumptionReport:
    """Sampled verification of a structural assumption on H - shift_c.

    The optional ``shift_c`` subtracts a constant before testing, which is
    how the checks are rerun after normalizing by a computed large-time
    constant.  Kink neighborhoods |p| <= kink_radius are excluded from
    derivative-based sampling.
    """
    if assumption_id not in ASSUMPTION_IDS:
        raise ConfigError(
            f"unknown assumption {assumption_id!r}; valid: {ASSUMPTION_IDS}"
        )
    rng = np.random.default_rng(config.seed)
    dim = H.dim
    xs = rng.uniform(0.0, 1.0, size=(config.n_x, dim))
    ps = rng.uniform(-config.p_box, config.p_box, size=(config.n_p, dim))
    keep = np.sqrt(np.sum(ps * ps, axis=-1)) > config.kink_radius
    ps = ps[keep]

    def Hs(x, p):
        return H(x, p) - shift_c

    report = AssumptionReport(assumption_id=assumption_id, passed=True, sample_count=0)

    if assumption_id == "strictconvex":
        qs = rng.uniform(-config.p_box, config.p_box, size=(ps.shape[0], dim))
        # deliberate collinear probes: the classic failure witness for |p|
        qs[: max(1, len(qs) // 4)] = 2.0 * ps[: max(1, len(qs) // 4)]
        for x in xs[:: max(1, len(xs) // 16)]:
            xa = np.broadcast_to(x, ps.shape)
            hp = Hs(xa, ps)
            hq = Hs(xa, qs)
            for lam in config.lambdas:
                mixd = lam * ps + (1 - lam) * qs
                hm = Hs(xa, mixd)
                gap = lam * hp + (1 - lam) * hq - hm
                sep = np.sqrt(np.sum((ps - qs) ** 2, axis=-1))
                bad = (gap <= config.margin) & (sep > 1e-6)
                report.sample_count += len(gap)
                for idx in np.flatnonzero(bad)[:5]:
                    report.violations.append(
                        (x.tolist(), ps[idx].tolist(), qs[idx].tolist(), lam,
                         float(gap[idx]))
                    )
        report.passed = not report.violations
        return report

    if assumption_id == "coercive":
        radii = np.array([0.25, 0.5, 1.0]) * config.p_box
        if dim == 1:
            dirs = np.array([[1.0], [-1.0]])
        else:
            th = np.linspace(0, 2 * np.pi, 32, endpoint=False)
            dirs = np.stack([np.cos(th), np.sin(th)], axis=-1)
        mins = []
        for r in radii:
            worst = np.inf
            for d in dirs:
                pa = np.broadcast_to(r * d, xs.shape)
                worst = min(worst, float(np.min(Hs(xs, pa))))
            mins.append(worst)
            report.sample_count += len(xs) * len(dirs)
        if not (mins[0] < mins[1] < mins[2]):
            report.violations.append((radii.tolist(), mins, "min H not increasing in |p|"))
        report.notes.append(f"min H at radii {radii.tolist()}: {mins}")
        report.passed = not report.violations
        return report

    # H5 / H7 / H10 share the compact-set machinery
    if H.compact_set_K is None:
        anchors = np.empty((0, dim))
        report.notes.append("no compact set supplied; treated as empty (dist = inf)")
    else:
        lattice = np.linspace(0.0, 1.0, 256, endpoint=False)
        nodes = (
            lattice[:, None]
            if dim == 1
            else np.stack(
                np.meshgrid(lattice[::8], lattice[::8], indexing="ij"), axis=-1
            ).reshape(-1, 2)
        )
        mask = np.asarray(H.compact_set_K(nodes)).reshape(-1)
        anchors = nodes[mask]
        if anchors.size == 0:
            report.notes.append("compact set predicate is empty on the sample lattice")
    dist = _torus_dist(xs, anchors)

    def radial(x, p):
        # H_p . p - H, via central differences in p
        g = grad_p(Hs, x, p, step=config.fd_step)
        return np.sum(g * p, axis=-1) - Hs(x, p)

    if assumption_id == "H5":
        # Triple form: where H(x, p+q) >= eta, H(x, q) <= 0 and x is eta-far
        # from the zero set, the excess H_p(x, p+q).p - H(x, p+q) must be
        # positive, uniformly per eta.
        qs = rng.uniform(-config.p_box, config.p_box, size=(len(ps), dim))
        profile = []
        count = 0
        rows = []
        for a, x in enumerate(xs):
            xa = np.broadcast_to(x, ps.shape)
            tot = ps + qs
            h_tot = Hs(xa, tot)
            h_q = Hs(xa, qs)
            g = grad_p(Hs, xa, tot, step=config.fd_step)
            excess = np.sum(g * ps, axis=-1) - h_tot
            rows.append((h_tot, h_q, excess, dist[a]))
            count += len(ps)
        report.sample_count = count
        for eta in config.etas:
            vals = [
                float(np.min(exc[sel]))
                for (ht, hq, exc, dx) in rows
                if dx >= eta and np.any(sel := (ht >= eta) & (hq <= 0.0))
            ]
            val = min(vals) if vals else None
            profile.append((float(eta), val))
            if val is not None and val <= 0:
                report.violations.append((float(eta), val, "perturbation excess not positive"))
        report.eta_psi_profile = profile
        report.passed = not report.violations
        return report

    profile = []
    hvals = np.empty((len(xs), len(ps)))
    rvals = np.empty_like(hvals)
    for a, x in enumerate(xs):
        xa = np.broadcast_to(x, ps.shape)
        hvals[a] = Hs(xa, ps)
        rvals[a] = radial(xa, ps)
    report.sample_count = hvals.size

    if assumption_id == "H10":
        bad = rvals < -config.margin
        for a, b in zip(*np.nonzero(bad)):
            if len(report.violations) >= 10:
                break
            report.violations.append(
                (xs[a].tolist(), ps[b].tolist(), float(rvals[a, b]),
                 "H_p . p - H < 0")
            )
    if anchors.size:
        on_k = Hs(
            np.repeat(anchors, len(ps), axis=0), np.tile(ps, (len(anchors), 1))
        )
        report.sample_count += on_k.size
        if np.min(on_k) < -config.margin:
            report.violations.append(
                (float(np.min(on_k)), "H < 0 on the compact zero set")
            )
    for eta in config.etas:
        sel = (hvals >= eta) & (dist[:, None] >= eta)
        val = float(np.min(rvals[sel])) if np.any(sel) else None
        profile.append((float(eta), val))
        if val is not None and val <= 0:
            report.violations.append((float(eta), val, "radial excess not positive"))
    report.eta_psi_profile = profile
    report.passed = not report.violations
    return report
