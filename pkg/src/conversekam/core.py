"""Geometric primitives shared by every module.

A :class:`State` is a point in one of two fixed 3D charts:

* ``"twowave"``: ``(q, p, t)`` with ``q`` and ``t`` periodic with period 1,
* ``"qflow"``:   ``(x, y, z)`` with ``z`` periodic with period ``2*pi``
  (used for display only, the flow itself lives on R^3).

Tangent vectors are plain length-3 numpy arrays in the same chart basis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Protocol, Sequence, Tuple

import numpy as np

CHART_PERIODS: dict[str, Tuple[Optional[float], Optional[float], Optional[float]]] = {
    "twowave": (1.0, None, 1.0),
    "qflow": (None, None, 2.0 * math.pi),
}


@dataclass(frozen=True)
class State:
    c0: float
    c1: float
    c2: float
    chart: str = "twowave"

    def __post_init__(self):
        if self.chart not in CHART_PERIODS:
            raise ValueError(f"unknown chart {self.chart!r}")

    @classmethod
    def from_array(cls, a: Sequence[float], chart: str = "twowave") -> "State":
        return cls(float(a[0]), float(a[1]), float(a[2]), chart)

    def as_array(self) -> np.ndarray:
        return np.array([self.c0, self.c1, self.c2], dtype=float)

    @property
    def periods(self):
        return CHART_PERIODS[self.chart]


def wrap(s: State) -> State:
    """Reduce the periodic coordinates of ``s`` into ``[0, period)``."""
    coords = s.as_array()
    if not np.all(np.isfinite(coords)):
        raise ValueError(f"cannot wrap non-finite state {coords}")
    out = []
    for c, period in zip(coords, s.periods):
        if period is None:
            out.append(float(c))
        else:
            r = math.fmod(c, period)
            if r < 0.0:
                r += period
            if r >= period:
                r = 0.0
            out.append(r)
    return State(out[0], out[1], out[2], s.chart)


def det3(a, b, c) -> float:
    """Determinant of the 3x3 matrix with rows a, b, c."""
    return float(
        a[0] * (b[1] * c[2] - b[2] * c[1])
        - a[1] * (b[0] * c[2] - b[2] * c[0])
        + a[2] * (b[0] * c[1] - b[1] * c[0])
    )


def dot3(a, b) -> float:
    return float(a[0] * b[0] + a[1] * b[1] + a[2] * b[2])


class FlowModel(Protocol):
    """Vector field with a Cartan-Arnol'd two-form and matching volume form."""

    chart: str

    def velocity(self, s: State) -> np.ndarray: ...

    def jacobian(self, s: State) -> np.ndarray: ...

    def two_form(self, s: State, a, b) -> float: ...

    def volume_form(self, a, b, c, s: State) -> float: ...


class FoliationDef(Protocol):
    """Scalar generator J whose gradient field spans the foliation leaves."""

    label: str
    singular_tol: float

    def value(self, s: State) -> float: ...

    def gradient(self, s: State) -> np.ndarray: ...

    def is_singular(self, s: State, tol: Optional[float] = None) -> bool: ...
