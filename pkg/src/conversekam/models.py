"""Concrete flows: the two-wave Hamiltonian model and Zaslavsky's Q-flows.

Both are Cartan-Arnol'd systems, so the area function only needs the
two-form ``dalpha``; the matching volume form (with ``i_v Omega = dalpha``) is
provided for cross-checking.

Two-wave model, extended phase space ``(q, p, t)``::

    H = p^2/2 - mu cos(2 pi q) - mu nu cos(2 pi k (q - t))
    alpha = p dq - H dt,        Omega = dp ^ dq ^ dt

Q-flow on ``(x, y, z)``::

    psi_q = sum_j cos(x cos(2 pi j/q) + y sin(2 pi j/q))
    v = (psi_y + eps sin z, -psi_x + eps cos z, psi)
    dalpha = psi dy ^ dx - dH ^ dz,  H = psi + eps (y sin z - x cos z)
    Omega = dy ^ dx ^ dz
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .core import State, det3


@dataclass(frozen=True)
class TwoWaveParams:
    mu: float
    nu: float = 1.0
    k: int = 1

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError("mu must be >= 0")
        if int(self.k) != self.k or self.k < 1:
            raise ValueError("k must be a positive integer")

    def as_array(self) -> np.ndarray:
        return np.array([self.mu, self.nu, float(self.k)])


@dataclass(frozen=True)
class QFlowParams:
    q: int = 4
    eps: float = 0.0

    def __post_init__(self):
        if int(self.q) != self.q or self.q < 1:
            raise ValueError("q must be a positive integer")
        if self.eps < 0:
            raise ValueError("eps must be >= 0")

    def as_array(self) -> np.ndarray:
        return np.array([float(self.q), self.eps])


def _arr(s) -> np.ndarray:
    if isinstance(s, State):
        return s.as_array()
    return np.asarray(s, dtype=float)


def _vec(v) -> np.ndarray:
    return np.asarray(v, dtype=float)


# --------------------------------------------------------------------------
# two-wave

def twowave_velocity(s, P: TwoWaveParams) -> np.ndarray:
    out = np.empty(3)
    K.velocity(K.MODEL_TWOWAVE, P.as_array(), _arr(s), out)
    return out


def twowave_jacobian(s, P: TwoWaveParams) -> np.ndarray:
    out = np.empty((3, 3))
    K.jacobian(K.MODEL_TWOWAVE, P.as_array(), _arr(s), out)
    return out


def twowave_dalpha(s, a, b, P: TwoWaveParams) -> float:
    return K.dalpha(K.MODEL_TWOWAVE, P.as_array(), _arr(s), _vec(a), _vec(b))


def twowave_hamiltonian(s, P: TwoWaveParams) -> float:
    q, p, t = _arr(s)
    return (0.5 * p * p - P.mu * np.cos(2 * np.pi * q)
            - P.mu * P.nu * np.cos(2 * np.pi * P.k * (q - t)))


def pendulum_energy(s, mu: float) -> float:
    q, p, _ = _arr(s)
    return 0.5 * p * p - mu * np.cos(2 * np.pi * q)


# --------------------------------------------------------------------------
# Q-flow

def psi_q(x: float, y: float, q: int) -> float:
    return K.psi_all(float(x), float(y), float(q))[0]


def psi_q_derivatives(x: float, y: float, q: int):
    """``(psi, psi_x, psi_y, psi_xx, psi_xy, psi_yy)`` at (x, y)."""
    return K.psi_all(float(x), float(y), float(q))


def qflow_velocity(s, P: QFlowParams) -> np.ndarray:
    out = np.empty(3)
    K.velocity(K.MODEL_QFLOW, P.as_array(), _arr(s), out)
    return out


def qflow_jacobian(s, P: QFlowParams) -> np.ndarray:
    out = np.empty((3, 3))
    K.jacobian(K.MODEL_QFLOW, P.as_array(), _arr(s), out)
    return out


def qflow_dalpha(s, a, b, P: QFlowParams) -> float:
    return K.dalpha(K.MODEL_QFLOW, P.as_array(), _arr(s), _vec(a), _vec(b))


# --------------------------------------------------------------------------
# FlowModel implementations

class TwoWaveModel:
    chart = "twowave"
    kernel_id = K.MODEL_TWOWAVE
    periods = (1.0, None, 1.0)

    def __init__(self, params: TwoWaveParams):
        self.params = params

    def __repr__(self):
        return f"TwoWaveModel({self.params})"

    @property
    def kernel_params(self) -> np.ndarray:
        return self.params.as_array()

    def velocity(self, s) -> np.ndarray:
        return twowave_velocity(s, self.params)

    def jacobian(self, s) -> np.ndarray:
        return twowave_jacobian(s, self.params)

    def two_form(self, s, a, b) -> float:
        return twowave_dalpha(s, a, b, self.params)

    def volume_form(self, a, b, c, s=None) -> float:
        # dp ^ dq ^ dt: reorder components to (p, q, t)
        perm = [1, 0, 2]
        return det3(_vec(a)[perm], _vec(b)[perm], _vec(c)[perm])


class QFlowModel:
    chart = "qflow"
    kernel_id = K.MODEL_QFLOW
    periods = (None, None, 2.0 * np.pi)

    def __init__(self, params: QFlowParams):
        self.params = params

    def __repr__(self):
        return f"QFlowModel({self.params})"

    @property
    def kernel_params(self) -> np.ndarray:
        return self.params.as_array()

    def velocity(self, s) -> np.ndarray:
        return qflow_velocity(s, self.params)

    def jacobian(self, s) -> np.ndarray:
        return qflow_jacobian(s, self.params)

    def two_form(self, s, a, b) -> float:
        return qflow_dalpha(s, a, b, self.params)

    def volume_form(self, a, b, c, s=None) -> float:
        # dy ^ dx ^ dz
        perm = [1, 0, 2]
        return det3(_vec(a)[perm], _vec(b)[perm], _vec(c)[perm])


def make_model(name: str, **params):
    """Build a model from its CLI name ``twowave`` or ``qflow``."""
    if name == "twowave":
        return TwoWaveModel(TwoWaveParams(**params))
    if name == "qflow":
        return QFlowModel(QFlowParams(**params))
    raise ValueError(f"unknown model {name!r}")


# --------------------------------------------------------------------------
# Beltrami check

@dataclass
class BeltramiReport:
    params: QFlowParams
    n_points: int
    max_curl_error: float
    max_div_error: float
    tol: float = 1e-5

    @property
    def passed(self) -> bool:
        return self.max_curl_error <= self.tol and self.max_div_error <= self.tol


def fd_jacobian(f, x, h: float = 1e-5) -> np.ndarray:
    """Central-difference Jacobian of f: R^3 -> R^3, J[i, j] = d f_i / d x_j."""
    x = np.asarray(x, dtype=float)
    J = np.empty((3, 3))
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        J[:, j] = (f(x + e) - f(x - e)) / (2 * h)
    return J


def verify_beltrami(P: QFlowParams, n_points: int, seed: int = 0,
                    h: float = 1e-5, box: float = 10.0) -> BeltramiReport:
    """Check ``curl v = v`` and ``div v = 0`` by finite differences."""
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    rng = np.random.default_rng(seed)
    curl_err = 0.0
    div_err = 0.0
    f = lambda x: qflow_velocity(x, P)  # noqa: E731
    for _ in range(n_points):
        x = np.array([rng.uniform(-box, box), rng.uniform(-box, box),
                      rng.uniform(0, 2 * np.pi)])
        J = fd_jacobian(f, x, h)
        curl = np.array([J[2, 1] - J[1, 2], J[0, 2] - J[2, 0], J[1, 0] - J[0, 1]])
        curl_err = max(curl_err, float(np.max(np.abs(curl - f(x)))))
        div_err = max(div_err, abs(float(np.trace(J))))
    return BeltramiReport(P, n_points, curl_err, div_err)
