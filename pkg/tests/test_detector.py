import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conversekam.core import State, det3
from conversekam.detector import (DetectionResult, DetectorOptions, Status, detect,
                                  interpolate_crossing, write_trace_csv)
from conversekam.foliations import Foliation
from conversekam.integrator import StepControl
from conversekam.models import QFlowModel, QFlowParams, TwoWaveModel, TwoWaveParams

MU = 0.015


def _tw(mu=MU, label="r"):
    P = TwoWaveParams(mu)
    return TwoWaveModel(P), Foliation(label, P)


@pytest.mark.parametrize("t1,K1,t2,K2,expected", [
    (10, 0.2, 10.5, -0.1, 10 + 1 / 3),
    (0, 1, 1, -1, 0.5),
    (5, -2, 6, 2, 5.5),
])
def test_interpolate_crossing(t1, K1, t2, K2, expected):
    assert interpolate_crossing(t1, K1, t2, K2) == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("args", [(0, 1, 1, 1), (1, 1, 0, -1), (0, 0, 1, -1)])
def test_interpolate_crossing_preconditions(args):
    with pytest.raises(ValueError):
        interpolate_crossing(*args)


@given(st.floats(0, 100), st.floats(1e-3, 1), st.floats(1e-6, 10), st.floats(1e-6, 10))
def test_interpolated_root_inside_bracket(t1, dt, a, b):
    t = interpolate_crossing(t1, a, t1 + dt, -b)
    assert t1 <= t <= t1 + dt


def test_options_validation():
    with pytest.raises(ValueError):
        DetectorOptions(t_max=0)
    with pytest.raises(ValueError):
        DetectorOptions(singular_tol=0)
    with pytest.raises(ValueError):
        DetectorOptions(xi_scale=-1)
    with pytest.raises(ValueError):
        DetectorOptions(engine="gpu")
    with pytest.raises(ValueError):
        DetectorOptions(renorm_band=(2, 3))


def test_result_equality_ignores_bookkeeping():
    assert DetectionResult(Status.DETECTED, 1.5, n_steps=3) == DetectionResult(Status.DETECTED, 1.5, n_steps=9)
    assert DetectionResult(Status.NONE) != DetectionResult(Status.EXCLUDED)


# ---------------------------------------------------------------- examples

@pytest.mark.parametrize("p0", [-0.7, 0.05, 0.3, 0.5, 1.0])
@pytest.mark.parametrize("engine", ["compiled", "python"])
def test_integrable_limit_never_detects(p0, engine):
    m, f = _tw(0.0)
    r = detect(m, f, State(0, p0, 0), DetectorOptions(engine=engine))
    assert r.status is Status.NONE
    assert r.t_end == 150.0


def test_resonance_tongue_detected():
    m, f = _tw(MU, "r")
    r = detect(m, f, State(0, 0.5, 0))
    assert r.detected and 0 < r.t_c <= 150


def test_librational_torus_r_versus_l():
    m, f = _tw(MU, "r")
    assert detect(m, f, State(0, 0.05, 0)).detected
    assert detect(m, Foliation("l", m.params), State(0, 0.05, 0)).status is Status.NONE


@pytest.mark.parametrize("label,status,t_c", [
    ("r", Status.DETECTED, 11.5754),
    ("l", Status.DETECTED, 11.0154),
    ("p", Status.DETECTED, 11.3973),
    ("s1", Status.DETECTED, 11.2286),
    ("s2", Status.EXCLUDED, None),
])
def test_frozen_centre_line(label, status, t_c):
    # regression values at mu = 0.015, p0 = 1/2
    m, f = _tw(MU, label)
    r = detect(m, f, State(0, 0.5, 0))
    assert r.status is status
    if t_c is not None:
        assert r.t_c == pytest.approx(t_c, abs=1e-3)
    else:
        assert r.exclusion_time == 0.0 and r.n_steps == 0


def test_excluded_at_start_when_singular():
    m, f = _tw(MU, "l")
    r = detect(m, f, State(0, 0, 0))
    assert r.status is Status.EXCLUDED and r.exclusion_time == 0.0
    q = QFlowModel(QFlowParams(4, 0.05))
    assert detect(q, Foliation("qpsi", q.params), State(0, 0, 0, "qflow")).status is Status.EXCLUDED


class _SwitchOff:
    """Foliation whose gradient vanishes for t >= 5 (python engine only)."""

    label = "custom"
    singular_tol = 1e-6

    def value(self, s):
        return s[1]

    def gradient(self, s):
        return np.array([0.0, 1.0, 0.0]) if s[2] < 5 else np.zeros(3)

    def is_singular(self, s, tol=None):
        return np.linalg.norm(self.gradient(s)) < (tol or self.singular_tol)


def test_excluded_mid_orbit():
    m = TwoWaveModel(TwoWaveParams(0.0))
    r = detect(m, _SwitchOff(), State(0, 0.3, 0))
    assert r.status is Status.EXCLUDED
    assert 5.0 <= r.exclusion_time <= 5.1


def test_custom_foliation_forces_python_engine():
    with pytest.raises(ValueError):
        detect(TwoWaveModel(TwoWaveParams(0.0)), _SwitchOff(), State(0, 0.3, 0),
               DetectorOptions(engine="compiled"))


def test_stiff_orbit_reports_error():
    m, f = _tw(0.03, "s1")
    opts = DetectorOptions(control=StepControl(rtol=1e-15, atol=1e-18, h_min=1e-3, h_init=1e-3))
    for engine in ("compiled", "python"):
        r = detect(m, f, State(0, 0.24, 0), DetectorOptions(**{**opts.__dict__, "engine": engine}))
        assert r.status is Status.ERROR
        assert "stiff" in r.reason


# ---------------------------------------------------------------- engines

CASES = [(MU, "r", 0.05), (MU, "l", 0.95), (MU, "p", 0.5), (MU, "s1", 0.5), (0.025, "s2", 0.3),
         (0.03, "s1", 0.24), (MU, "s1", 0.3)]


@pytest.mark.parametrize("mu,label,p0", CASES)
def test_compiled_matches_reference(mu, label, p0):
    m, f = _tw(mu, label)
    a = detect(m, f, State(0.1, p0, 0.0), DetectorOptions(engine="compiled"))
    b = detect(m, f, State(0.1, p0, 0.0), DetectorOptions(engine="python"))
    assert a.status is b.status
    if a.detected:
        assert a.t_c == pytest.approx(b.t_c, abs=1e-6)


def test_qflow_engines_agree():
    m = QFlowModel(QFlowParams(4, 0.05))
    for label, u in (("ql", 2.5), ("qpsi", 2.5), ("ql", 0.5)):
        f = Foliation(label, m.params)
        a = detect(m, f, State(u, u, 0, "qflow"))
        b = detect(m, f, State(u, u, 0, "qflow"), DetectorOptions(engine="python"))
        assert a.status is b.status
        if a.detected:
            assert a.t_c == pytest.approx(b.t_c, abs=1e-6)


# ---------------------------------------------------------------- invariants

@settings(max_examples=15, deadline=None)
@given(st.floats(0.005, 0.03), st.floats(0, 1), st.floats(0, 1),
       st.sampled_from(["r", "l", "p", "s1", "s2"]), st.floats(1e-4, 1e4))
def test_scale_and_flip_invariance(mu, q0, p0, label, c):
    m, f = _tw(mu, label)
    s0 = State(q0, p0, 0)
    ref = detect(m, f, s0)
    for r in (detect(m, f, s0, DetectorOptions(xi_scale=c)), detect(m, f.flipped(), s0)):
        assert r.status is ref.status
        if ref.detected:
            assert abs(r.t_c - ref.t_c) <= 1e-9


@pytest.mark.parametrize("engine", ["compiled", "python"])
@pytest.mark.parametrize("mu,label,p0", CASES[:5])
def test_trace_soundness_and_form_consistency(engine, mu, label, p0):
    m, f = _tw(mu, label)
    r = detect(m, f, State(0.1, p0, 0.0), DetectorOptions(record_trace=True, engine=engine))
    ts = [smp.t for smp in r.trace]
    assert all(a < b for a, b in zip(ts, ts[1:]))
    # K(0) = dalpha(eta, eta) vanishes up to rounding; it never seeds the sign
    assert r.trace[0].t == 0.0 and abs(r.trace[0].K) <= 1e-14
    for smp in r.trace:
        s = smp.state.as_array()
        eta = f.gradient(s)
        K = m.two_form(s, smp.xi, eta)
        om = m.volume_form(m.velocity(s), smp.xi, eta, s)
        assert abs(K - om) <= 1e-10 * (1 + abs(K))
        assert K == pytest.approx(smp.K, rel=1e-12, abs=1e-300)
    if r.detected:
        nz = [smp for smp in r.trace if smp.K != 0.0]
        a, b = nz[-2], nz[-1]
        assert (a.K > 0) != (b.K > 0)
        assert a.guard_dot < 0 and b.guard_dot < 0
        assert a.t < r.t_c < b.t
        assert r.t_end == b.t


def test_detected_time_bounds():
    m, f = _tw(MU, "r")
    r = detect(m, f, State(0, 0.5, 0), DetectorOptions(t_max=5.0))
    assert r.status is Status.NONE and r.t_end == 5.0
    r = detect(m, f, State(0, 0.5, 0), DetectorOptions(t_max=12.0))
    assert r.detected and 0 < r.t_c <= 12.0


def test_write_trace_csv(tmp_path):
    m, f = _tw(MU, "s1")
    r = detect(m, f, State(0, 0.5, 0), DetectorOptions(record_trace=True))
    path = tmp_path / "trace.csv"
    write_trace_csv(r.trace, path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t", "K", "guard", "c0", "c1", "c2"]
    assert len(rows) == len(r.trace) + 1
    assert float(rows[-1][0]) == r.trace[-1].t
    assert float(rows[-1][1]) == r.trace[-1].K
