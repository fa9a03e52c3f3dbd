"""Converse KAM decision for a single initial condition.

Along the orbit of ``s0`` we transport ``xi`` with the linearised flow,
starting from ``xi_0 = eta_0 = grad J(s0)``, and watch the area function

    K(t) = dalpha(xi_t, eta_t),    eta_t = grad J(x_t).

If K changes sign between two accepted steps while the guard
``<eta_t, xi_t>`` is negative at both ends, the point cannot lie on an
invariant 2-torus transverse to the foliation of J; the crossing time t_c is
located by linear interpolation.

Only the direction of xi_0 matters: K and the guard are both homogeneous of
degree one in xi.  Both engines therefore start from the unit vector
eta_0/|eta_0|, so ``DetectorOptions.xi_scale`` has no effect on the result.
Trace samples report K and the guard for the (periodically renormalised)
tangent vector actually integrated.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np

from . import _kernels as K
from .core import State, dot3
from .integrator import (RENORM_BAND, CombinedState, StepControl, StiffnessError,
                         advance_with_hook)


class Status(str, Enum):
    DETECTED = "detected"
    NONE = "none"
    EXCLUDED = "excluded"
    ERROR = "error"


@dataclass(frozen=True)
class TraceSample:
    t: float
    K: float
    guard_dot: float
    state: State
    xi: np.ndarray = field(compare=False, repr=False)


@dataclass(frozen=True)
class DetectionResult:
    status: Status
    t_c: Optional[float] = None
    n_steps: int = field(default=0, compare=False)
    exclusion_time: Optional[float] = field(default=None, compare=False)
    reason: str = field(default="", compare=False)
    t_end: float = field(default=0.0, compare=False)
    trace: Tuple[TraceSample, ...] = field(default=(), compare=False, repr=False)

    @property
    def detected(self) -> bool:
        return self.status is Status.DETECTED


@dataclass(frozen=True)
class DetectorOptions:
    t_max: float = 150.0
    singular_tol: float = 1e-6
    record_trace: bool = False
    control: StepControl = StepControl()
    xi_scale: float = 1.0
    engine: str = "auto"
    renorm_band: Tuple[float, float] = RENORM_BAND

    def __post_init__(self):
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")
        if not self.singular_tol > 0:
            raise ValueError("singular_tol must be positive")
        if not self.xi_scale > 0:
            raise ValueError("xi_scale must be positive")
        lo, hi = self.renorm_band
        if not 0 <= lo <= 1 <= hi:
            raise ValueError("renorm_band must satisfy 0 <= lo <= 1 <= hi")
        if self.engine not in ("auto", "compiled", "python"):
            raise ValueError(f"unknown engine {self.engine!r}")


def interpolate_crossing(t1: float, K1: float, t2: float, K2: float) -> float:
    """Root of the line through (t1, K1) and (t2, K2)."""
    if not (K1 * K2 < 0 and t1 < t2):
        raise ValueError("need K1*K2 < 0 and t1 < t2")
    return t1 + (t2 - t1) * K1 / (K1 - K2)


def _as_state(s0, chart: str) -> State:
    if isinstance(s0, State):
        return s0
    return State.from_array(s0, chart)


def detect(model, foliation, s0, opts: DetectorOptions = DetectorOptions()) -> DetectionResult:
    """Run the guarded sign-change test on the orbit of ``s0``."""
    s0 = _as_state(s0, model.chart)
    compiled = hasattr(model, "kernel_id") and hasattr(foliation, "kernel_id")
    if opts.engine == "compiled" and not compiled:
        raise ValueError("compiled engine needs built-in model and foliation")
    if opts.engine == "python" or not compiled:
        return _detect_python(model, foliation, s0, opts)
    return _detect_compiled(model, foliation, s0, opts)


def _detect_compiled(model, foliation, s0: State, opts: DetectorOptions) -> DetectionResult:
    c = opts.control
    status, t_c, t_end, n_steps, tr_t, tr_k, tr_g, tr_y = K.detect_loop(
        model.kernel_id, model.kernel_params, foliation.kernel_id, foliation.kernel_params,
        float(getattr(foliation, "orientation", 1.0)), s0.as_array(),
        opts.t_max, c.rtol, c.atol, c.h_init, c.h_max, c.h_min,
        opts.renorm_band[0], opts.renorm_band[1], opts.singular_tol, opts.record_trace)
    trace: Tuple[TraceSample, ...] = ()
    if opts.record_trace:
        trace = tuple(
            TraceSample(float(t), float(k), float(g), State.from_array(y[:3], s0.chart), y[3:].copy())
            for t, k, g, y in zip(tr_t, tr_k, tr_g, tr_y))
    if status == K.STATUS_DETECTED:
        return DetectionResult(Status.DETECTED, float(t_c), n_steps, t_end=t_end, trace=trace)
    if status == K.STATUS_EXCLUDED:
        return DetectionResult(Status.EXCLUDED, None, n_steps, exclusion_time=t_end,
                               reason="singular leaf", t_end=t_end, trace=trace)
    if status == K.STATUS_STIFF:
        return DetectionResult(Status.ERROR, None, n_steps, reason="stiff: step below h_min",
                               t_end=t_end, trace=trace)
    return DetectionResult(Status.NONE, None, n_steps, t_end=t_end, trace=trace)


def _detect_python(model, foliation, s0: State, opts: DetectorOptions) -> DetectionResult:
    tol = opts.singular_tol
    eta0 = np.asarray(foliation.gradient(s0.as_array()), dtype=float)
    if np.linalg.norm(eta0) < tol:
        return DetectionResult(Status.EXCLUDED, None, 0, exclusion_time=0.0,
                               reason="singular leaf")
    xi0 = eta0 / np.linalg.norm(eta0)
    trace: List[TraceSample] = []
    if opts.record_trace:
        trace.append(TraceSample(0.0, model.two_form(s0.as_array(), xi0, eta0),
                                 dot3(eta0, xi0), s0, xi0.copy()))
    st = {"k_prev": 0.0, "t_kprev": 0.0, "g_prev": dot3(eta0, xi0), "n": 0, "result": None}

    def hook(prev: CombinedState, new: CombinedState):
        st["n"] += 1
        if new.log_scale != prev.log_scale:
            r = math.exp(prev.log_scale - new.log_scale)
            st["k_prev"] *= r
            st["g_prev"] *= r
        x = new.s.as_array()
        eta = np.asarray(foliation.gradient(x), dtype=float)
        if np.linalg.norm(eta) < tol:
            st["result"] = DetectionResult(Status.EXCLUDED, None, st["n"], exclusion_time=new.t,
                                           reason="singular leaf", t_end=new.t)
            return True
        k = model.two_form(x, new.xi, eta)
        g = dot3(eta, new.xi)
        if opts.record_trace:
            trace.append(TraceSample(new.t, k, g, new.s, new.xi.copy()))
        if k != 0.0:
            kp = st["k_prev"]
            if kp != 0.0 and (k > 0) != (kp > 0) and g < 0 and st["g_prev"] < 0:
                t_c = interpolate_crossing(st["t_kprev"], kp, new.t, k)
                st["result"] = DetectionResult(Status.DETECTED, t_c, st["n"], t_end=new.t)
                return True
            st["k_prev"] = k
            st["t_kprev"] = new.t
        st["g_prev"] = g
        return False

    ctrl = opts.control.with_t_max(opts.t_max)
    try:
        end = advance_with_hook(model, CombinedState(s0, xi0, 0.0, 0.0), ctrl, hook,
                                renorm=opts.renorm_band)
    except StiffnessError as exc:
        return DetectionResult(Status.ERROR, None, st["n"], reason=f"stiff: {exc}",
                               trace=tuple(trace))
    res = st["result"]
    if res is None:
        res = DetectionResult(Status.NONE, None, st["n"], t_end=end.t)
    return DetectionResult(res.status, res.t_c, res.n_steps, res.exclusion_time, res.reason,
                           res.t_end, tuple(trace))


def write_trace_csv(trace, path) -> None:
    """Write trace samples as ``t,K,guard,c0,c1,c2`` rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "K", "guard", "c0", "c1", "c2"])
        for smp in trace:
            w.writerow([repr(smp.t), repr(smp.K), repr(smp.guard_dot),
                        repr(smp.state.c0), repr(smp.state.c1), repr(smp.state.c2)])
