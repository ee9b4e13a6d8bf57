"""Built-in Hamiltonians, couplings, and experiment suite names.

Sources and vector fields are described by truncated Fourier data so that
configuration documents stay plain JSON:

    {"const": c, "terms": [{"k": [1], "cos": a, "sin": b}, ...]}

evaluates to ``c + sum a cos(2 pi k.x) + b sin(2 pi k.x)``.  Direction
profiles for the nonconvex family use a Fourier series in the direction
angle: ``{"const": c, "angle": [{"j": 1, "cos": a, "sin": b}, ...]}`` with
theta = atan2(d_2, d_1) (theta in {0, pi} in one dimension).
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import ConfigError
from .hamiltonians import (
    Hamiltonian,
    make_linear_eikonal,
    make_nonconvex_example,
    make_quadratic_eikonal,
)

__all__ = [
    "fourier_function",
    "direction_profile",
    "vector_field",
    "build_hamiltonian",
    "builtin_coupling",
    "list_builtin",
    "BUILTIN_HAMILTONIAN_IDS",
    "BUILTIN_COUPLINGS",
    "SUITE_NAMES",
]

BUILTIN_HAMILTONIAN_IDS = ("quadratic_eikonal", "linear_eikonal", "nonconvex_bs00")

BUILTIN_COUPLINGS = {
    "symmetric_pair": [[1.0, -1.0], [-1.0, 1.0]],
    "asymmetric_pair": [[1.0, -1.0], [-2.0, 2.0]],
    "cyclic3": [[1.0, -1.0, 0.0], [0.0, 1.0, -1.0], [-1.0, 0.0, 1.0]],
}

SUITE_NAMES = (
    "mainresult-nonconvex",
    "exist-smoo-strictconvex",
    "largenew-eikonal",
    "identical-gap",
    "appendix-mc",
)


def fourier_function(params: dict, dim: int) -> Callable:
    """Compile a truncated Fourier description into a vectorized callable."""
    if not isinstance(params, dict):
        raise ConfigError(f"fourier spec must be a mapping, got {type(params).__name__}")
    const = float(params.get("const", 0.0))
    terms = []
    for t, term in enumerate(params.get("terms", [])):
        k = np.asarray(term.get("k", [1] * dim), dtype=float).reshape(-1)
        if k.size != dim:
            raise ConfigError(f"terms[{t}].k must have {dim} entries, got {k.size}")
        terms.append((k, float(term.get("cos", 0.0)), float(term.get("sin", 0.0))))

    def fn(x):
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape[:-1], const)
        for k, a, b in terms:
            phase = 2.0 * np.pi * np.sum(x * k, axis=-1)
            if a:
                out = out + a * np.cos(phase)
            if b:
                out = out + b * np.sin(phase)
        return out

    return fn


def direction_profile(params: dict, dim: int) -> tuple[Callable, float]:
    """Compile a direction profile F(x, d); returns (fn, angle_slope_bound)."""
    const = float(params.get("const", 1.0))
    angle = [
        (int(t.get("j", 1)), float(t.get("cos", 0.0)), float(t.get("sin", 0.0)))
        for t in params.get("angle", [])
    ]
    slope = sum(abs(j) * (abs(a) + abs(b)) for j, a, b in angle)

    def fn(x, d):
        d = np.asarray(d, dtype=float)
        if dim == 2:
            theta = np.arctan2(d[..., 1], d[..., 0])
        else:
            theta = np.where(d[..., 0] >= 0, 0.0, np.pi)
        out = np.full(theta.shape, const)
        for j, a, b in angle:
            if a:
                out = out + a * np.cos(j * theta)
            if b:
                out = out + b * np.sin(j * theta)
        return out

    return fn, slope


def vector_field(params: list, dim: int) -> Callable:
    """Stack per-component Fourier descriptions into a vector field."""
    if len(params) != dim:
        raise ConfigError(f"vector field needs {dim} component specs, got {len(params)}")
    comps = [fourier_function(p, dim) for p in params]

    def fn(x):
        return np.stack([c(x) for c in comps], axis=-1)

    return fn


_DEFAULT_F = {"const": 1.0, "terms": [{"k": [1], "cos": -1.0}]}  # 1 - cos(2 pi x)


def build_hamiltonian(ham_id: str, params: dict | None, dim: int = 1) -> Hamiltonian:
    """Instantiate a built-in Hamiltonian from its id and JSON parameters."""
    params = dict(params or {})
    if ham_id not in BUILTIN_HAMILTONIAN_IDS:
        raise ConfigError(
            f"unknown hamiltonian id {ham_id!r}; valid: {BUILTIN_HAMILTONIAN_IDS}"
        )
    p_box = float(params.get("p_box", 2.5))
    if ham_id == "quadratic_eikonal":
        f = fourier_function(params.get("f", _DEFAULT_F), dim)
        return make_quadratic_eikonal(f, dim=dim, p_box=p_box,
                                      params={"id": ham_id, **params})
    if ham_id == "linear_eikonal":
        f = fourier_function(params.get("f", _DEFAULT_F), dim)
        return make_linear_eikonal(f, dim=dim, p_box=p_box,
                                   params={"id": ham_id, **params})
    f = fourier_function(params.get("f", _DEFAULT_F), dim)
    default_q = [{"terms": [{"k": [1], "sin": 0.3}]}] * dim
    q = vector_field(params.get("q", default_q), dim)
    Ffn, slope = direction_profile(
        params.get("F", {"const": 1.0, "angle": [{"j": 1, "cos": 0.3}]}), dim
    )
    return make_nonconvex_example(
        Ffn, f, q, dim=dim, p_box=p_box, F_angle_slope=slope,
        params={"id": ham_id, **params},
    )


def builtin_coupling(name: str) -> np.ndarray:
    if name not in BUILTIN_COUPLINGS:
        raise ConfigError(
            f"unknown coupling {name!r}; valid: {sorted(BUILTIN_COUPLINGS)}"
        )
    return np.asarray(BUILTIN_COUPLINGS[name], dtype=float)


def list_builtin(kind: str) -> list[str]:
    """Catalog listing for the CLI; kinds: hamiltonians, couplings, suites."""
    if kind == "hamiltonians":
        return list(BUILTIN_HAMILTONIAN_IDS)
    if kind == "couplings":
        return sorted(BUILTIN_COUPLINGS)
    if kind == "suites":
        return list(SUITE_NAMES)
    raise ConfigError(f"unknown catalog kind {kind!r}; valid: hamiltonians, couplings, suites")
