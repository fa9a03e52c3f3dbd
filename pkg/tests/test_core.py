import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conversekam.core import State, det3, dot3, wrap
from conversekam.models import QFlowModel, QFlowParams, TwoWaveModel, TwoWaveParams

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
vec = st.tuples(finite, finite, finite)


@pytest.mark.parametrize("a,b,c,expected", [
    ((1, 0, 0), (0, 1, 0), (0, 0, 1), 1.0),
    ((1, 0, 0), (1, 0, 0), (0, 0, 1), 0.0),
    ((0, 1, 0), (1, 0, 0), (0, 0, 1), -1.0),
])
def test_det3_examples(a, b, c, expected):
    assert det3(a, b, c) == expected


@pytest.mark.parametrize("a,b,expected", [
    ((0, 1, 0), (0, 1, 0), 1.0),
    ((1, 0, 0), (0, 1, 0), 0.0),
    ((1, 2, 3), (-1, 0, 1), 2.0),
])
def test_dot3_examples(a, b, expected):
    assert dot3(a, b) == expected


@pytest.mark.parametrize("s,expected", [
    (State(1.25, 0.5, 2.0), (0.25, 0.5, 0.0)),
    (State(0.3, -0.2, 0.9), (0.3, -0.2, 0.9)),
    (State(7.0, -3.0, 2 * math.pi + 1, "qflow"), (7.0, -3.0, 1.0)),
])
def test_wrap_examples(s, expected):
    np.testing.assert_allclose(wrap(s).as_array(), expected, atol=1e-15)
    assert wrap(s).chart == s.chart


def test_wrap_rejects_nonfinite():
    with pytest.raises(ValueError):
        wrap(State(float("nan"), 0, 0))
    with pytest.raises(ValueError):
        wrap(State(0, float("inf"), 0))


def test_unknown_chart():
    with pytest.raises(ValueError):
        State(0, 0, 0, "torus")


@given(vec, vec, vec)
def test_det3_alternating(a, b, c):
    scale = 1 + max(map(abs, a + b + c)) ** 3
    assert abs(det3(a, b, c) + det3(b, a, c)) <= 1e-12 * scale
    assert abs(det3(a, b, c) + det3(a, c, b)) <= 1e-12 * scale
    assert det3(a, a, b) == pytest.approx(0.0, abs=1e-12 * scale)


@given(vec, vec, vec)
def test_det3_matches_numpy(a, b, c):
    scale = 1 + max(map(abs, a + b + c)) ** 3
    assert det3(a, b, c) == pytest.approx(np.linalg.det(np.array([a, b, c])), abs=1e-9 * scale)


@given(finite, finite, finite, st.sampled_from(["twowave", "qflow"]))
def test_wrap_idempotent_and_in_domain(c0, c1, c2, chart):
    w = wrap(State(c0, c1, c2, chart))
    assert wrap(w) == w
    for c, period in zip(w.as_array(), w.periods):
        if period is not None:
            assert 0.0 <= c < period


@settings(max_examples=50)
@given(st.floats(-1, 2), st.floats(-1, 1), st.floats(-1, 2), st.integers(-5, 5), st.integers(-5, 5))
def test_velocity_invariant_under_period_shift(q, p, t, m, n):
    model = TwoWaveModel(TwoWaveParams(0.02, 0.7, 2))
    a = model.velocity(State(q, p, t))
    b = model.velocity(State(q + m, p, t + n))
    np.testing.assert_allclose(a, b, atol=1e-12)


@settings(max_examples=50)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0, 6.3), st.integers(-3, 3))
def test_qflow_velocity_z_period(x, y, z, n):
    model = QFlowModel(QFlowParams(5, 0.3))
    a = model.velocity(State(x, y, z, "qflow"))
    b = model.velocity(State(x, y, z + 2 * math.pi * n, "qflow"))
    np.testing.assert_allclose(a, b, atol=1e-12)
