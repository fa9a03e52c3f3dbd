"""Orbit diagnostics: Poincare sections, finite-time Lyapunov exponents and
post-processing of detection times."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from . import _kernels as K
from .core import State
from .detector import DetectionResult, Status
from .integrator import RENORM_BAND, StepControl, StiffnessError


@dataclass(frozen=True)
class SectionPoint:
    q: float
    p: float
    crossing_index: int


@dataclass(frozen=True)
class FtleResult:
    lam: float
    T: float
    v0: Tuple[float, float, float]
    n_steps: int = 0


def _state_array(s0, chart: str) -> np.ndarray:
    if isinstance(s0, State):
        return s0.as_array()
    return State.from_array(s0, chart).as_array()


def _advance(model, y, t0, t1, tangent, ctrl, renorm=RENORM_BAND):
    status, y_new, log_scale, n = K.advance_loop(
        model.kernel_id, model.kernel_params, y, t0, t1, tangent,
        ctrl.rtol, ctrl.atol, ctrl.h_init, ctrl.h_max, ctrl.h_min, renorm[0], renorm[1])
    if status == K.STATUS_STIFF:
        raise StiffnessError(f"step size below h_min between t={t0:g} and t={t1:g}")
    return y_new, log_scale, n


def poincare_section(model, s0, n_crossings: int, t_section: float = 0.0,
                     ctrl: StepControl = StepControl()) -> List[SectionPoint]:
    """Stroboscopic section of a two-wave orbit at t = t_section (mod 1).

    The orbit is integrated one period at a time, so every recorded point
    sits exactly at a crossing time.  A starting point already on the section
    is crossing 0.
    """
    if model.chart != "twowave":
        raise ValueError("sections are only defined for the two-wave chart")
    if n_crossings < 1:
        raise ValueError("n_crossings must be >= 1")
    if not 0.0 <= t_section < 1.0:
        raise ValueError("t_section must lie in [0, 1)")
    x = _state_array(s0, "twowave")
    t0 = float(x[2])
    t_next = t0 + ((t_section - t0) % 1.0)
    y = np.concatenate([x, np.zeros(3)])
    t = t0
    out = []
    for n in range(n_crossings):
        if t_next > t:
            y, _, _ = _advance(model, y, t, t_next, False, ctrl)
            t = t_next
        out.append(SectionPoint(float(y[0] % 1.0), float(y[1]), n))
        t_next = t + 1.0
    return out


def orbit_samples(model, s0, T: float, dt: float,
                  ctrl: StepControl = StepControl()) -> np.ndarray:
    """States at t0, t0 + dt, ... up to t0 + T as an (n, 4) array of (t, c0, c1, c2)."""
    if not (T > 0 and dt > 0):
        raise ValueError("T and dt must be positive")
    x = _state_array(s0, model.chart)
    n = int(math.floor(T / dt + 1e-9))
    y = np.concatenate([x, np.zeros(3)])
    rows = [(0.0, *x)]
    t = 0.0
    for i in range(1, n + 1):
        t1 = i * dt
        y, _, _ = _advance(model, y, t, t1, False, ctrl)
        t = t1
        rows.append((t, *y[:3]))
    return np.array(rows)


def ftle(model, s0, T: float, v0=(0.0, 1.0, 0.0),
         ctrl: StepControl = StepControl()) -> FtleResult:
    """Finite-time maximal Lyapunov exponent along the orbit of ``s0``.

    The tangent vector is renormalised after every accepted step and the
    logarithms of the growth factors are summed.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    v = np.asarray(v0, dtype=float)
    nv = float(np.linalg.norm(v))
    if not nv > 0:
        raise ValueError("v0 must be nonzero")
    x = _state_array(s0, model.chart)
    y = np.concatenate([x, v])
    y_end, log_scale, n = _advance(model, y, 0.0, T, True, ctrl, renorm=(1.0, 1.0))
    lam = (log_scale + math.log(np.linalg.norm(y_end[3:]) / nv)) / T
    return FtleResult(lam, T, (float(v[0]), float(v[1]), float(v[2])), n)


def histogram_tc(results: Iterable[DetectionResult], bin_width: float) -> List[Tuple[float, int]]:
    """Counts of detection times in bins [k w, (k+1) w), from 0 to the last occupied bin."""
    if not bin_width > 0:
        raise ValueError("bin_width must be positive")
    idx = [int(math.floor(r.t_c / bin_width)) for r in results if r.status is Status.DETECTED]
    if not idx:
        return []
    counts = np.bincount(np.asarray(idx), minlength=max(idx) + 1)
    return [(i * bin_width, int(c)) for i, c in enumerate(counts)]


def inverse_tc_profile(row: Sequence[DetectionResult]) -> List[float]:
    """1/t_c for detected points and 0 otherwise."""
    return [1.0 / r.t_c if r.status is Status.DETECTED else 0.0 for r in row]
