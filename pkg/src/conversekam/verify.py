"""Seeded property suites behind ``conversekam verify``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List

import numpy as np

from .core import State
from .detector import DetectorOptions, Status, detect
from .foliations import Foliation, fd_gradient, random_twowave_samples, residual_scaling_test
from .models import QFlowModel, QFlowParams, TwoWaveModel, TwoWaveParams, verify_beltrami


@dataclass(frozen=True)
class PropertyResult:
    name: str
    passed: bool
    worst: float
    tol: float
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        extra = f"  {self.detail}" if self.detail else ""
        return f"[{tag}] {self.name}: worst={self.worst:.3e} tol={self.tol:.1e}{extra}"


def _random_twowave_state(rng) -> np.ndarray:
    return np.array([rng.uniform(-2, 2), rng.uniform(-1.5, 1.5), rng.uniform(-2, 2)])


def _random_qflow_state(rng) -> np.ndarray:
    return np.array([rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(0, 2 * np.pi)])


def forms(seed: int = 0, n: int = 1000, tol: float = 1e-10) -> List[PropertyResult]:
    """dalpha(a, b) = Omega(v, a, b), error measured as |diff| / (1 + |Omega|)."""
    rng = np.random.default_rng(seed)
    out = []
    cases = [("twowave", _random_twowave_state,
              lambda: TwoWaveModel(TwoWaveParams(rng.uniform(0, 0.05), rng.uniform(0, 2),
                                                 int(rng.integers(1, 4))))),
             ("qflow", _random_qflow_state,
              lambda: QFlowModel(QFlowParams(int(rng.choice([4, 5])), rng.uniform(0, 1))))]
    for name, draw, make in cases:
        worst = 0.0
        for _ in range(n):
            m = make()
            s = draw(rng)
            a, b = rng.normal(size=3), rng.normal(size=3)
            om = m.volume_form(m.velocity(s), a, b, s)
            worst = max(worst, abs(m.two_form(s, a, b) - om) / (1.0 + abs(om)))
        out.append(PropertyResult(f"forms/{name}", worst <= tol, worst, tol))
    return out


def beltrami(seed: int = 0, n: int = 100, tol: float = 1e-5) -> List[PropertyResult]:
    out = []
    for q in (4, 5):
        for eps in (0.15, 0.5):
            r = verify_beltrami(QFlowParams(q, eps), n, seed=seed)
            worst = max(r.max_curl_error, r.max_div_error)
            out.append(PropertyResult(f"beltrami/q={q},eps={eps}", worst <= tol, worst, tol,
                                      f"curl={r.max_curl_error:.2e} div={r.max_div_error:.2e}"))
    return out


def _gradient_points(label: str, rng, n: int):
    P = (QFlowParams(int(rng.choice([4, 5])), rng.uniform(0, 0.5)) if label in ("ql", "qpsi")
         else TwoWaveParams(rng.uniform(0.001, 0.03)))
    fol = Foliation(label, P)
    pts = []
    while len(pts) < n:
        s = _random_qflow_state(rng) if label in ("ql", "qpsi") else _random_twowave_state(rng)
        if label == "l" and abs((s[0] % 1.0) - 0.5) < 1e-3:
            continue  # the recentred q jumps at q = 1/2
        if fol.is_singular(s):
            continue
        pts.append(s)
    return fol, pts


def gradients(seed: int = 0, n: int = 1000, tol: float = 1e-6, h: float = 1e-5) -> List[PropertyResult]:
    """Analytic gradients against central differences, |diff| / (1 + |fd|)."""
    rng = np.random.default_rng(seed)
    out = []
    for label in ("r", "l", "p", "s1", "s2", "ql", "qpsi"):
        worst = 0.0
        for _ in range(n):
            fol, (s,) = _gradient_points(label, rng, 1)
            g = fol.gradient(s)
            if label == "r":
                # J = p^2/2 spans the same leaves; the gradient is its normalised direction
                fd = np.array([0.0, 1.0, 0.0])
            else:
                fd = fd_gradient(fol.value, s, h)
            worst = max(worst, float(np.linalg.norm(g - fd) / (1.0 + np.linalg.norm(fd))))
        out.append(PropertyResult(f"gradients/{label}", worst <= tol, worst, tol))
    return out


def residuals(seed: int = 0, n: int = 50, tol: float = 0.4) -> List[PropertyResult]:
    rng = np.random.default_rng(seed)
    samples = random_twowave_samples(n, rng, margin=0.1)
    out = []
    for label in ("s1", "s2"):
        rep = residual_scaling_test(label, samples, [(0.01, 0.005)])
        (ws, we) = rep.worst_sample
        out.append(PropertyResult(
            f"residuals/{label}", rep.passed, abs(rep.median - rep.expected), tol,
            f"median exponent={rep.median:.3f} expected={rep.expected:g} "
            f"worst sample={tuple(round(c, 4) for c in ws)} exponent={we:.3f}"))
    return out


def detected_orbits(seed: int, n: int, max_tries: int = 2000):
    """Seeded two-wave (model, foliation, state) triples that are Detected."""
    rng = np.random.default_rng(seed)
    found = []
    for _ in range(max_tries):
        if len(found) == n:
            break
        P = TwoWaveParams(rng.uniform(0.005, 0.03))
        fol = Foliation(str(rng.choice(["r", "l", "p", "s1", "s2"])), P)
        s0 = State(rng.uniform(0, 1), rng.uniform(0, 1), 0.0)
        m = TwoWaveModel(P)
        r = detect(m, fol, s0)
        if r.status is Status.DETECTED:
            found.append((m, fol, s0, r))
    return found


def invariances(seed: int = 0, n: int = 20, tol: float = 1e-9) -> List[PropertyResult]:
    """Status and t_c under xi_0 -> c xi_0 and J -> -J."""
    orbits = detected_orbits(seed, n)
    res = []
    for name, run in (
        ("scale c=3.7", lambda m, f, s: detect(m, f, s, DetectorOptions(xi_scale=3.7))),
        ("scale c=1e-3", lambda m, f, s: detect(m, f, s, DetectorOptions(xi_scale=1e-3))),
        ("flip J->-J", lambda m, f, s: detect(m, f.flipped(), s)),
    ):
        worst = 0.0
        ok = len(orbits) == n
        for m, f, s, ref in orbits:
            r = run(m, f, s)
            if r.status is not ref.status:
                ok = False
                worst = np.inf
                continue
            worst = max(worst, abs(r.t_c - ref.t_c))
        res.append(PropertyResult(f"invariances/{name}", ok and worst <= tol, worst, tol,
                                  f"{len(orbits)} detected orbits"))
    return res


SUITES: Dict[str, Callable[..., List[PropertyResult]]] = {
    "forms": forms,
    "beltrami": beltrami,
    "gradients": gradients,
    "residuals": residuals,
    "invariances": invariances,
}


def run_suite(name: str, seed: int = 0) -> List[PropertyResult]:
    if name == "all":
        return [r for key in SUITES for r in SUITES[key](seed=seed)]
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}")
    return SUITES[name](seed=seed)
