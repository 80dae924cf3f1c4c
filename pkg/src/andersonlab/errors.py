"""Exception hierarchy shared across the package.

Everything raised deliberately by this package derives from
:class:`AndersonLabError`, so callers can catch one type.  The finer
classes mirror the failure categories surfaced by the command line
driver: bad inputs, geometry/assembly mismatches, numerical breakdown,
and statistically unusable data.
"""
from __future__ import annotations


class AndersonLabError(Exception):
    """Base class for all package errors."""


class ParameterError(AndersonLabError, ValueError):
    """An argument value is outside its documented range."""


class DomainError(ParameterError):
    """An argument is of the right shape but in a forbidden region
    (e.g. an energy on the real axis where a complex one is required)."""


class GeometryError(ParameterError):
    """Inconsistent torus geometry (side, dimension, mode)."""


class MeshError(GeometryError):
    """Continuum mesh does not divide the unit cell or the box."""


class AssemblyError(AndersonLabError, ValueError):
    """Operator assembly inputs do not match the target geometry."""


class SizeError(AndersonLabError, RuntimeError):
    """A dense-path operation was requested beyond its size limit."""


class NumericError(AndersonLabError, RuntimeError):
    """A numerical kernel failed (non-finite pivot, unconverged solve)."""


class StateError(AndersonLabError, RuntimeError):
    """An object is missing prerequisite state (e.g. eigenvectors)."""


class InsufficientDataError(AndersonLabError, RuntimeError):
    """Not enough samples to run a statistical test honestly."""


class ConfigError(AndersonLabError, ValueError):
    """A run configuration file failed validation."""
