"""Euler-equation user functions: directional flux and maximal wave speed.

These are the opaque per-volume callbacks the compute kernels wrap. A
conserved state is a flat sequence of N = d + 2 doubles:

    index 0       density  rho
    index 1 .. d  momentum rho*u_i
    index d + 1   total energy E

The ideal-gas closure with adiabatic exponent gamma (default 1.4) supplies
the pressure. All functions are pure and stateless; they are safe to call
from any number of workers concurrently.

Admissibility (rho > 0 and pressure > 0) is only checked when ``check=True``
is passed; the benchmark hot path runs unchecked so the branch cost does not
pollute timings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

__all__ = [
    "DEFAULT_GAMMA",
    "EulerParameters",
    "InvalidStateError",
    "pressure",
    "flux",
    "max_eigenvalue",
    "is_admissible",
]

DEFAULT_GAMMA = 1.4


class InvalidStateError(ValueError):
    """A conserved state violates admissibility (rho <= 0 or p <= 0)."""


@dataclass(frozen=True)
class EulerParameters:
    """Closure parameters for the compressible Euler equations."""

    gamma: float = DEFAULT_GAMMA

    def __post_init__(self) -> None:
        if not self.gamma > 1.0:
            raise ValueError(f"adiabatic exponent must exceed 1, got {self.gamma}")


def _dim_of(q: Sequence[float]) -> int:
    d = len(q) - 2
    if d not in (2, 3):
        raise ValueError(f"state has {len(q)} entries; expected d+2 with d in {{2,3}}")
    return d


def pressure(q: Sequence[float], params: EulerParameters, check: bool = False) -> float:
    """Ideal-gas pressure p = (gamma - 1) * (E - |rho u|^2 / (2 rho))."""
    d = _dim_of(q)
    rho = q[0]
    if check and not rho > 0.0:
        raise InvalidStateError(f"non-positive density {rho}")
    # Kinetic term accumulated in axis order; the vectorized kernels mirror
    # this association exactly so results stay bitwise comparable.
    ke = q[1] * q[1] + q[2] * q[2]
    if d == 3:
        ke = ke + q[3] * q[3]
    p = (params.gamma - 1.0) * (q[d + 1] - ke / (2.0 * rho))
    if check and not p > 0.0:
        raise InvalidStateError(f"non-positive pressure {p} for state {tuple(q)}")
    return p


def flux(
    q: Sequence[float], axis: int, params: EulerParameters, check: bool = False
) -> tuple[float, ...]:
    """Directional flux F_axis(q), returned as a fresh N-tuple.

    F = (rho*u_n, rho*u_i*u_n + p*delta_{i,n}, u_n*(E + p)) with u_n the
    velocity along ``axis``.
    """
    d = _dim_of(q)
    if not 0 <= axis < d:
        raise ValueError(f"axis {axis} out of range for d={d}")
    p = pressure(q, params, check)
    rho = q[0]
    energy = q[d + 1]
    un = q[1 + axis] / rho
    momentum = tuple(
        q[1 + i] * un + p if i == axis else q[1 + i] * un for i in range(d)
    )
    return (q[1 + axis], *momentum, un * (energy + p))


def max_eigenvalue(
    q: Sequence[float], axis: int, params: EulerParameters, check: bool = False
) -> float:
    """Largest wave speed |u_n| + c along ``axis``, c = sqrt(gamma p / rho)."""
    d = _dim_of(q)
    if not 0 <= axis < d:
        raise ValueError(f"axis {axis} out of range for d={d}")
    p = pressure(q, params, check)
    rho = q[0]
    return abs(q[1 + axis] / rho) + math.sqrt(params.gamma * p / rho)


def is_admissible(q: Sequence[float], params: EulerParameters) -> bool:
    """True iff the state has positive density and positive pressure."""
    try:
        pressure(q, params, check=True)
    except InvalidStateError:
        return False
    return True
