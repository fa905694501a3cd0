"""Input checks shared by the estimators and the command line."""

from __future__ import annotations

import numbers

import numpy as np

from .exceptions import ConfigError, DimensionError
from .pauli import BoundaryCondition, PauliSum
from .pauli import MAX_DENSE_SITES


def check_operator(h, num_sites: int | None = None) -> PauliSum:
    """Return ``h`` as a ``PauliSum``, accepting a ``{letters: coeff}`` dict."""
    if isinstance(h, dict):
        if not h:
            raise ConfigError("operator", "empty operator dictionary")
        n = len(next(iter(h)))
        h = PauliSum.from_dict(h, n)
    if not isinstance(h, PauliSum):
        raise TypeError(f"expected PauliSum, got {type(h).__name__}")
    if num_sites is not None and h.num_sites != num_sites:
        raise DimensionError(f"operator acts on {h.num_sites} sites, expected {num_sites}")
    if h.num_sites > MAX_DENSE_SITES:
        raise DimensionError(f"{h.num_sites} sites exceeds the dense limit {MAX_DENSE_SITES}")
    return h


def check_int(value, field: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ConfigError(field, f"expected an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(field, f"must be >= {minimum}, got {value}")
    return int(value)


def check_real(value, field: str, lo: float = -np.inf, hi: float = np.inf) -> float:
    if isinstance(value, bool) or not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ConfigError(field, f"expected a finite real, got {value!r}")
    if not lo <= value <= hi:
        raise ConfigError(field, f"must lie in [{lo}, {hi}], got {value}")
    return float(value)


def check_bc(value, field: str = "bc") -> BoundaryCondition:
    try:
        return BoundaryCondition(value)
    except ValueError:
        raise ConfigError(field, f"unknown boundary condition {value!r}") from None


def check_grid(values, field: str = "kappa") -> list[float]:
    """Non-empty list of finite reals; a scalar becomes a one-point grid."""
    if isinstance(values, numbers.Real):
        values = [values]
    values = list(values) if values is not None else []
    if not values:
        raise ConfigError(field, "grid is empty")
    return [check_real(v, field) for v in values]


def check_scale_factors(values, field: str = "scale_factors") -> tuple[float, ...]:
    vals = tuple(check_real(v, field, lo=0.0) for v in values)
    if not vals or vals[0] != 1.0:
        raise ConfigError(field, "scale factors must start at 1")
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise ConfigError(field, "scale factors must be strictly ascending")
    return vals
