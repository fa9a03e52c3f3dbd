"""Adaptive Tsitouras 5(4) integration of a flow together with one tangent vector.

The joint system is ``x' = v(x)``, ``xi' = Dv(x) xi``.  This module is the
reference implementation working with any object that has ``velocity`` and
``jacobian`` methods; the detector and sweeps use an equivalent compiled
loop for the built-in models.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Tuple

import numpy as np

from . import _kernels as K
from .core import State

log = logging.getLogger(__name__)

# Butcher tableau, taken from the compiled kernels so both paths agree.
TSIT5_C = np.array([0.0, K.C2, K.C3, K.C4, K.C5, 1.0, 1.0])
TSIT5_A = np.array([
    [0, 0, 0, 0, 0, 0],
    [K.A21, 0, 0, 0, 0, 0],
    [K.A31, K.A32, 0, 0, 0, 0],
    [K.A41, K.A42, K.A43, 0, 0, 0],
    [K.A51, K.A52, K.A53, K.A54, 0, 0],
    [K.A61, K.A62, K.A63, K.A64, K.A65, 0],
    [K.A71, K.A72, K.A73, K.A74, K.A75, K.A76],
], dtype=float)
TSIT5_B = np.array([K.A71, K.A72, K.A73, K.A74, K.A75, K.A76, 0.0])
TSIT5_E = np.array([K.E1, K.E2, K.E3, K.E4, K.E5, K.E6, K.E7])
TSIT5_BHAT = TSIT5_B - TSIT5_E

RENORM_BAND = (1e-6, 1e6)


class StiffnessError(RuntimeError):
    """Step size fell below ``h_min``."""


@dataclass(frozen=True)
class StepControl:
    rtol: float = 1e-8
    atol: float = 1e-10
    h_init: float = 1e-3
    h_max: float = 0.1
    h_min: float = 1e-12
    t_max: float = 150.0

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("tolerances must be positive")
        if not (0 < self.h_min <= self.h_init <= self.h_max):
            raise ValueError("need 0 < h_min <= h_init <= h_max")
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")

    def with_t_max(self, t_max: float) -> "StepControl":
        return replace(self, t_max=t_max)


@dataclass
class CombinedState:
    s: State
    xi: np.ndarray
    t: float = 0.0
    log_scale: float = 0.0

    def vector(self) -> np.ndarray:
        return np.concatenate([self.s.as_array(), np.asarray(self.xi, dtype=float)])


def joint_rhs(model, y: np.ndarray) -> np.ndarray:
    x = y[:3]
    out = np.empty(6)
    out[:3] = model.velocity(x)
    out[3:] = model.jacobian(x) @ y[3:]
    return out


def error_norm(y: np.ndarray, y_new: np.ndarray, e: np.ndarray, rtol: float, atol: float) -> float:
    """Weighted RMS of the embedded error estimate.

    State components use the usual ``atol + rtol*|y|`` scale.  Tangent
    components use ``atol*|xi| + rtol*|xi_i|`` so the measure is homogeneous
    of degree zero in xi.
    """
    sc = atol + rtol * np.maximum(np.abs(y[:3]), np.abs(y_new[:3]))
    terms = list((e[:3] / sc) ** 2)
    nx = max(np.linalg.norm(y[3:]), np.linalg.norm(y_new[3:]))
    if nx > 0:
        sc_t = atol * nx + rtol * np.maximum(np.abs(y[3:]), np.abs(y_new[3:]))
        terms.extend((e[3:] / sc_t) ** 2)
    err = math.sqrt(sum(terms) / len(terms))
    return err if math.isfinite(err) else math.inf


def _tsit5(model, y: np.ndarray, h: float, k1: np.ndarray, rtol: float, atol: float):
    ks = np.empty((7, 6))
    ks[0] = k1
    for i in range(1, 7):
        ks[i] = joint_rhs(model, y + h * (TSIT5_A[i, :i] @ ks[:i]))
    y_new = y + h * (TSIT5_B @ ks)
    if not np.all(np.isfinite(ks)):
        log.warning("non-finite derivative near state %s with h=%g; rejecting step", y[:3], h)
        return y_new, math.inf, ks[6]
    # weights sum to zero: differencing against k1 avoids their rounding floor
    e = h * (TSIT5_E[1:] @ (ks[1:] - ks[0]))
    return y_new, error_norm(y, y_new, e, rtol, atol), ks[6]


def rk_step(model, cs: CombinedState, h: float,
            ctrl: StepControl = StepControl()) -> Tuple[CombinedState, float]:
    """Advance ``(s, xi)`` by one Tsit5 step of size h.

    Returns the new combined state and the weighted RMS error estimate (the
    step is acceptable when it is <= 1).
    """
    y = cs.vector()
    y_new, err, _ = _tsit5(model, y, h, joint_rhs(model, y), ctrl.rtol, ctrl.atol)
    new = CombinedState(State.from_array(y_new[:3], cs.s.chart), y_new[3:].copy(),
                        cs.t + h, cs.log_scale)
    return new, err


def step_factor(err: float) -> float:
    if err == 0.0:
        return K.FAC_MAX
    return min(K.FAC_MAX, max(K.FAC_MIN, K.SAFETY * err ** -0.2))


Hook = Callable[[CombinedState, CombinedState], Optional[bool]]


def advance_with_hook(model, cs: CombinedState, ctrl: StepControl = StepControl(),
                      hook: Optional[Hook] = None,
                      renorm: Tuple[float, float] = RENORM_BAND) -> CombinedState:
    """Integrate from ``cs`` until ``ctrl.t_max`` or until the hook asks to stop.

    ``hook(prev, new)`` is called after every accepted step; a truthy return
    value terminates the integration and ``new`` is returned.  Whenever the
    tangent norm leaves the ``renorm`` band it is rescaled to unit length and
    the log of the removed factor is added to ``log_scale``.
    """
    y = cs.vector()
    t = cs.t
    log_scale = cs.log_scale
    chart = cs.s.chart
    k1 = joint_rhs(model, y)
    h = min(max(ctrl.h_init, ctrl.h_min), ctrl.h_max)
    prev = cs
    while t < ctrl.t_max:
        last = t + h >= ctrl.t_max
        if last:
            h = ctrl.t_max - t
        y_new, err, k7 = _tsit5(model, y, h, k1, ctrl.rtol, ctrl.atol)
        if err > 1.0:
            h *= step_factor(err)
            if h < ctrl.h_min:
                raise StiffnessError(f"step size {h:g} below h_min at t={t:g}")
            continue
        t = ctrl.t_max if last else t + h
        h = min(h * step_factor(err), ctrl.h_max)
        y, k1 = y_new, k7.copy()
        nxi = np.linalg.norm(y[3:])
        if nxi > 0 and (nxi > renorm[1] or nxi < renorm[0]):
            log_scale += math.log(nxi)
            y[3:] /= nxi
            k1[3:] /= nxi
        new = CombinedState(State.from_array(y[:3], chart), y[3:].copy(), t, log_scale)
        if hook is not None and hook(prev, new):
            return new
        prev = new
    return prev
