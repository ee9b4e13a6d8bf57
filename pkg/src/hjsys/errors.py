"""Exception taxonomy shared across the package.

The CLI maps these onto process exit codes: configuration problems exit 2,
numerical divergence or a solver that never reaches its target exits 3,
failed experiment assertions exit 1.
"""
from __future__ import annotations


class HJSysError(Exception):
    """Base class for all package-specific errors."""


class StructureError(HJSysError):
    """A matrix, system, or grid object violates a structural precondition."""


class ConfigError(HJSysError):
    """A configuration document or CLI invocation is invalid."""


class DivergenceError(HJSysError):
    """A time march produced non-finite values or broke its CFL contract."""


class ConvergenceError(HJSysError):
    """An iterative solve exhausted its budget before reaching tolerance."""
