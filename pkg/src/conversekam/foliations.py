"""Foliation generators J, their gradients and singular sets.

Two-wave chart ``(q, p, t)``:

* ``r``  vertical lines, J = p^2/2 with the constant gradient (0, 1, 0)
* ``l``  rays from the elliptic point, J = (q~^2 + p^2)/2 with q~ in [-1/2, 1/2)
* ``p``  pendulum, J = p^2/2 - mu cos(2 pi q)
* ``s1`` first-order invariant from global removal of resonances
* ``s2`` second-order invariant (k = 1 only)

Q-flow chart ``(x, y, z)``:

* ``ql``   J = (x^2 + y^2)/2
* ``qpsi`` J = psi_q(x, y)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from . import _kernels as K
from .core import State
from .models import QFlowParams, TwoWaveParams

TWOWAVE_LABELS = ("r", "l", "p", "s1", "s2")
QFLOW_LABELS = ("ql", "qpsi")
LABELS = TWOWAVE_LABELS + QFLOW_LABELS

_KERNEL_IDS = {
    "r": K.FOL_R,
    "l": K.FOL_L,
    "p": K.FOL_P,
    "s1": K.FOL_S1,
    "s2": K.FOL_S2,
    "ql": K.FOL_QL,
    "qpsi": K.FOL_QPSI,
}

DEFAULT_SINGULAR_TOL = 1e-6


@dataclass(frozen=True)
class Foliation:
    """A foliation kind bound to the owning model's parameters.

    ``orientation`` multiplies J (and hence its gradient); it exists so the
    flip invariance J -> -J of the detector can be exercised.
    """

    label: str
    params: Union[TwoWaveParams, QFlowParams]
    singular_tol: float = DEFAULT_SINGULAR_TOL
    orientation: float = 1.0

    def __post_init__(self):
        if self.label not in _KERNEL_IDS:
            raise ValueError(f"unknown foliation {self.label!r}; expected one of {LABELS}")
        if self.label in TWOWAVE_LABELS and not isinstance(self.params, TwoWaveParams):
            raise ValueError(f"foliation {self.label!r} belongs to the two-wave model")
        if self.label in QFLOW_LABELS and not isinstance(self.params, QFlowParams):
            raise ValueError(f"foliation {self.label!r} belongs to the Q-flow model")
        if self.label == "s2" and self.params.k != 1:
            raise ValueError("the s2 invariant is only available for k = 1")
        if self.singular_tol <= 0:
            raise ValueError("singular_tol must be positive")
        if self.orientation not in (1.0, -1.0):
            raise ValueError("orientation must be +1 or -1")

    @property
    def kernel_id(self) -> int:
        return _KERNEL_IDS[self.label]

    @property
    def kernel_params(self) -> np.ndarray:
        return self.params.as_array()

    def value(self, s) -> float:
        return self.orientation * K.fol_value(self.kernel_id, self.kernel_params, _arr(s))

    def gradient(self, s) -> np.ndarray:
        out = np.empty(3)
        K.fol_grad(self.kernel_id, self.kernel_params, _arr(s), out)
        return self.orientation * out

    def is_singular(self, s, tol: Optional[float] = None) -> bool:
        tol = self.singular_tol if tol is None else tol
        if tol <= 0:
            raise ValueError("tol must be positive")
        return bool(np.linalg.norm(self.gradient(s)) < tol)

    def flipped(self) -> "Foliation":
        return Foliation(self.label, self.params, self.singular_tol, -self.orientation)


def _arr(s) -> np.ndarray:
    if isinstance(s, State):
        return s.as_array()
    return np.asarray(s, dtype=float)


def foliation_value(kind: Foliation, s) -> float:
    return kind.value(s)


def foliation_gradient(kind: Foliation, s) -> np.ndarray:
    return kind.gradient(s)


def is_singular(kind: Foliation, s, tol: float = DEFAULT_SINGULAR_TOL) -> bool:
    return kind.is_singular(s, tol)


def fd_gradient(f, s, h: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of a scalar function of 3 coordinates."""
    x = _arr(s)
    g = np.empty(3)
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


# --------------------------------------------------------------------------
# Poisson-bracket residuals of the adiabatic invariants

def _twowave_hq(x, P: TwoWaveParams) -> float:
    q, _, t = x
    return (2 * np.pi * P.mu * np.sin(2 * np.pi * q)
            + 2 * np.pi * P.mu * P.nu * P.k * np.sin(2 * np.pi * P.k * (q - t)))


def singular_s1_gradient(s, P: TwoWaveParams) -> np.ndarray:
    """Gradient of the first-order invariant built with J0' = 1.

    With this choice the homological equation forces 1/p and 1/(p - 1)
    denominators, so the invariant blows up at the resonances.
    """
    q, p, t = _arr(s)
    a = 2 * np.pi * q
    b = 2 * np.pi * P.k * (q - t)
    # J = p - mu [cos(a)/p + nu cos(b)/(p - 1)]
    jq = P.mu * 2 * np.pi * (np.sin(a) / p + P.k * P.nu * np.sin(b) / (p - 1))
    jp = 1.0 + P.mu * (np.cos(a) / p ** 2 + P.nu * np.cos(b) / (p - 1) ** 2)
    jt = -P.mu * P.nu * 2 * np.pi * P.k * np.sin(b) / (p - 1)
    return np.array([jq, jp, jt])


def poisson_residual(kind: Foliation, s, singular_j0: bool = False) -> float:
    """Extended-phase-space bracket {H + e, J} = H_p J_q - H_q J_p + J_t.

    This is the rate of change of J along the two-wave flow.
    """
    if kind.label not in ("s1", "s2"):
        raise ValueError("residuals are defined for the s1 and s2 invariants")
    x = _arr(s)
    P = kind.params
    if singular_j0:
        if kind.label != "s1":
            raise ValueError("singular_j0 applies to s1 only")
        g = singular_s1_gradient(x, P)
    else:
        g = kind.gradient(x)
    return float(x[1] * g[0] - _twowave_hq(x, P) * g[1] + g[2])


@dataclass
class ResidualScalingReport:
    label: str
    expected: float
    exponents: List[float]
    samples: List[Tuple[float, float, float]]
    tol: float = 0.4
    median: float = field(init=False)
    worst_index: int = field(init=False)

    def __post_init__(self):
        ex = np.asarray(self.exponents)
        self.median = float(np.median(ex))
        self.worst_index = int(np.argmax(np.abs(ex - self.expected)))

    @property
    def passed(self) -> bool:
        return abs(self.median - self.expected) <= self.tol

    @property
    def worst_sample(self):
        return self.samples[self.worst_index], self.exponents[self.worst_index]


def residual_scaling_test(label: str, s_samples: Sequence, mu_pairs: Sequence[Tuple[float, float]],
                          nu: float = 1.0, k: int = 1,
                          margin: float = 0.1) -> ResidualScalingReport:
    """Observed order of the residual {H, J} in mu for the s1/s2 invariants.

    For every sample and every (mu_a, mu_b) pair the exponent
    log|r(mu_a)/r(mu_b)| / log(mu_a/mu_b) is recorded.  A first-order invariant
    should give 2, a second-order one 3.
    """
    expected = {"s1": 2.0, "s2": 3.0}.get(label)
    if expected is None:
        raise ValueError("residual scaling is defined for s1 and s2 only")
    exponents = []
    samples = []
    for s in s_samples:
        x = _arr(s)
        if min(abs(x[1]), abs(x[1] - 1.0)) < margin:
            raise ValueError(f"sample {tuple(x)} is within {margin} of a resonance p in {{0, 1}}")
        for mu_a, mu_b in mu_pairs:
            ra = poisson_residual(Foliation(label, TwoWaveParams(mu_a, nu, k)), x)
            rb = poisson_residual(Foliation(label, TwoWaveParams(mu_b, nu, k)), x)
            exponents.append(float(np.log(abs(ra / rb)) / np.log(mu_a / mu_b)))
            samples.append(tuple(float(c) for c in x))
    return ResidualScalingReport(label, expected, exponents, samples)


def random_twowave_samples(n: int, rng: np.random.Generator, margin: float = 0.1) -> np.ndarray:
    """Points with q, t uniform on [0, 1) and p uniform on [margin, 1 - margin]."""
    return np.column_stack([rng.random(n), rng.uniform(margin, 1 - margin, n), rng.random(n)])


def make_foliation(label: str, params, singular_tol: float = DEFAULT_SINGULAR_TOL) -> Foliation:
    return Foliation(label, params, singular_tol)
