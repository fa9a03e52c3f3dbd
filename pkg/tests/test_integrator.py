import math

import numpy as np
import pytest

from conversekam import _kernels as K
from conversekam.core import State
from conversekam.detector import DetectorOptions, detect
from conversekam.foliations import Foliation
from conversekam.integrator import (TSIT5_A, TSIT5_B, TSIT5_BHAT, TSIT5_C, CombinedState,
                                    StepControl, StiffnessError, advance_with_hook, error_norm,
                                    rk_step, step_factor)
from conversekam.models import QFlowModel, QFlowParams, TwoWaveModel, TwoWaveParams, pendulum_energy


# ---------------------------------------------------------------- tableau

def test_tableau_row_sums():
    np.testing.assert_allclose(TSIT5_A.sum(axis=1), TSIT5_C, atol=1e-14)


@pytest.mark.parametrize("k", range(5))
def test_quadrature_order_five(k):
    assert TSIT5_B @ TSIT5_C ** k == pytest.approx(1 / (k + 1), abs=1e-13)


@pytest.mark.parametrize("k", range(4))
def test_embedded_quadrature_order_four(k):
    assert TSIT5_BHAT @ TSIT5_C ** k == pytest.approx(1 / (k + 1), abs=1e-13)


def test_fifth_order_tree_conditions():
    b, c = TSIT5_B, TSIT5_C
    A = np.zeros((7, 7))
    A[:, :6] = TSIT5_A
    Ac = A @ c
    assert b @ Ac == pytest.approx(1 / 6, abs=1e-13)
    assert b @ (c * Ac) == pytest.approx(1 / 8, abs=1e-13)
    assert b @ (A @ c ** 2) == pytest.approx(1 / 12, abs=1e-13)
    assert b @ (A @ Ac) == pytest.approx(1 / 24, abs=1e-13)
    assert b @ (c ** 2 * Ac) == pytest.approx(1 / 10, abs=1e-13)
    assert b @ (Ac * Ac) == pytest.approx(1 / 20, abs=1e-13)
    assert b @ (A @ (A @ Ac)) == pytest.approx(1 / 120, abs=1e-13)


def test_fsal():
    np.testing.assert_array_equal(TSIT5_A[6, :6], TSIT5_B[:6])
    assert TSIT5_B[6] == 0.0


def test_step_factor_clamp():
    assert step_factor(0.0) == 5.0
    assert step_factor(1e-12) == 5.0
    assert step_factor(1e12) == 0.2
    assert step_factor(1.0) == pytest.approx(0.9)


def test_step_control_validation():
    with pytest.raises(ValueError):
        StepControl(rtol=0)
    with pytest.raises(ValueError):
        StepControl(h_init=1.0, h_max=0.1)
    with pytest.raises(ValueError):
        StepControl(t_max=-1)
    assert StepControl().with_t_max(7).t_max == 7


def test_error_norm_scale_invariant_in_tangent():
    rng = np.random.default_rng(0)
    y, yn, e = rng.normal(size=6), rng.normal(size=6), rng.normal(size=6) * 1e-9
    a = error_norm(y, yn, e, 1e-8, 1e-10)
    s = np.array([1, 1, 1, 1024, 1024, 1024.0])
    assert error_norm(y * s, yn * s, e * s, 1e-8, 1e-10) == pytest.approx(a, rel=1e-14)


# ---------------------------------------------------------------- steps

def test_rk_step_free_particle_exact():
    m = TwoWaveModel(TwoWaveParams(0.0))
    cs = CombinedState(State(0, 0.5, 0), np.array([0.0, 1.0, 0.0]))
    new, err = rk_step(m, cs, 0.1)
    np.testing.assert_allclose(new.s.as_array(), [0.05, 0.5, 0.1], atol=1e-12)
    np.testing.assert_allclose(new.xi, [0.1, 1.0, 0.0], atol=1e-12)
    assert err <= 1e-12
    assert new.t == pytest.approx(0.1)


class _NanModel:
    chart = "twowave"

    def velocity(self, s):
        return np.array([np.nan, 0.0, 1.0])

    def jacobian(self, s):
        return np.zeros((3, 3))


def test_nonfinite_step_rejected(caplog):
    new, err = rk_step(_NanModel(), CombinedState(State(0, 0, 0), np.ones(3)), 0.01)
    assert err == math.inf
    assert "non-finite" in caplog.text


def test_stiffness_error():
    class Wild(_NanModel):
        pass
    with pytest.raises(StiffnessError):
        advance_with_hook(Wild(), CombinedState(State(0, 0, 0), np.ones(3)),
                          StepControl(h_min=1e-4, h_init=1e-3, h_max=0.1, t_max=1.0))


def test_qflow_time_reversal():
    m = QFlowModel(QFlowParams(5, 0.3))
    cs = CombinedState(State(1.3, -0.4, 0.2, "qflow"), np.array([0.1, 0.7, -0.2]))
    fwd, _ = rk_step(m, cs, 1e-3)
    back, _ = rk_step(m, fwd, -1e-3)
    np.testing.assert_allclose(back.s.as_array(), cs.s.as_array(), atol=1e-10)
    np.testing.assert_allclose(back.xi, cs.xi, atol=1e-10)


# ---------------------------------------------------------------- driver

def test_free_particle_to_tmax():
    m = TwoWaveModel(TwoWaveParams(0.0))
    q0, p0 = 0.1, 0.37
    end = advance_with_hook(m, CombinedState(State(q0, p0, 0), np.array([0.0, 1.0, 0.0])))
    assert end.t == 150.0
    d = (end.s.c0 - (q0 + 150 * p0)) % 1.0
    assert min(d, 1 - d) <= 1e-6


def test_hook_termination():
    m = TwoWaveModel(TwoWaveParams(0.02))
    end = advance_with_hook(m, CombinedState(State(0, 0.3, 0), np.array([0.0, 1.0, 0.0])),
                            hook=lambda prev, new: new.t >= 10)
    assert 10 <= end.t <= 10.1


def test_hook_sees_increasing_times():
    seen = []
    m = TwoWaveModel(TwoWaveParams(0.02))
    advance_with_hook(m, CombinedState(State(0, 0.3, 0), np.array([0.0, 1.0, 0.0])),
                      StepControl(t_max=5.0), hook=lambda prev, new: seen.append((prev.t, new.t)))
    assert all(a < b for a, b in seen)
    assert all(seen[i][1] == seen[i + 1][0] for i in range(len(seen) - 1))
    assert seen[-1][1] == 5.0


def test_pendulum_energy_conservation():
    P = TwoWaveParams(0.015, nu=0.0)
    m = TwoWaveModel(P)
    s0 = State(0.1, 0.2, 0.0)
    e0 = pendulum_energy(s0, P.mu)
    drift = [0.0]

    def hook(prev, new):
        drift[0] = max(drift[0], abs(pendulum_energy(new.s, P.mu) - e0))

    advance_with_hook(m, CombinedState(s0, np.array([0.0, 1.0, 0.0])), hook=hook)
    assert drift[0] <= 1e-6


def test_free_particle_conserves_p():
    m = TwoWaveModel(TwoWaveParams(0.0))
    end = advance_with_hook(m, CombinedState(State(0, 0.731, 0), np.array([0.0, 1.0, 0.0])),
                            StepControl(t_max=30))
    assert end.s.c1 == 0.731


def test_renormalisation_accumulates_log_scale():
    m = TwoWaveModel(TwoWaveParams(0.0))
    end = advance_with_hook(m, CombinedState(State(0, 0.5, 0), np.array([0.0, 1.0, 0.0])),
                            renorm=(1.0, 1.0))
    # |xi_T| = sqrt(1 + T^2) for the free particle
    total = end.log_scale + math.log(np.linalg.norm(end.xi))
    assert total == pytest.approx(0.5 * math.log(1 + 150 ** 2), rel=1e-8)
    assert np.linalg.norm(end.xi) == pytest.approx(1.0)


def test_tangent_linearity():
    m = TwoWaveModel(TwoWaveParams(0.03))
    s0 = State(0.1, 0.24, 0.0)
    xi0 = np.array([0.3, 1.0, -0.2])
    band = (0.0, math.inf)
    a = advance_with_hook(m, CombinedState(s0, xi0), StepControl(t_max=40), renorm=band)
    b = advance_with_hook(m, CombinedState(s0, 2 * xi0), StepControl(t_max=40), renorm=band)
    np.testing.assert_allclose(b.xi, 2 * a.xi, rtol=1e-8)


@pytest.mark.parametrize("model,s0", [
    (TwoWaveModel(TwoWaveParams(0.02)), State(0.1, 0.4, 0.0)),
    (QFlowModel(QFlowParams(5, 0.2)), State(0.5, 1.0, 0.0, "qflow")),
])
def test_compiled_loop_matches_reference(model, s0):
    xi0 = np.array([0.0, 1.0, 0.0])
    ref = advance_with_hook(model, CombinedState(s0, xi0), StepControl(t_max=20))
    y0 = np.concatenate([s0.as_array(), xi0])
    st, y, ls, n = K.advance_loop(model.kernel_id, model.kernel_params, y0, 0.0, 20.0, True,
                                  1e-8, 1e-10, 1e-3, 0.1, 1e-12, 1e-6, 1e6)
    assert st == K.STATUS_NONE
    np.testing.assert_allclose(y[:3], ref.s.as_array(), rtol=1e-9, atol=1e-11)
    np.testing.assert_allclose(y[3:] * math.exp(ls), ref.xi * math.exp(ref.log_scale), rtol=1e-7)


def test_renormalisation_band_does_not_change_detection():
    P = TwoWaveParams(0.03)
    m, f, s0 = TwoWaveModel(P), Foliation("r", P), State(0, 0.24, 0)
    base = detect(m, f, s0)
    for band in ((0.0, math.inf), (0.5, 2.0), (1.0, 1.0)):
        r = detect(m, f, s0, DetectorOptions(renorm_band=band))
        assert r.status == base.status
        if base.t_c is not None:
            assert r.t_c == pytest.approx(base.t_c, abs=1e-6)


def test_tolerance_convergence():
    P = TwoWaveParams(0.015)
    m, f, s0 = TwoWaveModel(P), Foliation("s1", P), State(0, 0.5, 0)
    a = detect(m, f, s0)
    b = detect(m, f, s0, DetectorOptions(control=StepControl(rtol=5e-9, atol=5e-11)))
    assert a.detected and b.detected
    assert abs(a.t_c - b.t_c) < 1e-3
