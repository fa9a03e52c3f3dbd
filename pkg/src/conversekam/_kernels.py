"""Compiled inner loops.

Everything evaluated per integration stage lives here as numba-jitted scalar
code: model vector fields, Jacobians, two-forms, foliation generators and
gradients, the Tsitouras 5(4) step, and the two driver loops (detection and
plain advance).  The public modules wrap these with Python objects.

Models and foliations are selected by integer ids so a single compiled loop
serves every combination.  Parameter vectors:

* two-wave: ``(mu, nu, k)``
* Q-flow:   ``(q, eps)``
"""

import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi

MODEL_TWOWAVE = 0
MODEL_QFLOW = 1

FOL_R = 0
FOL_L = 1
FOL_P = 2
FOL_S1 = 3
FOL_S2 = 4
FOL_QL = 5
FOL_QPSI = 6

STATUS_NONE = 0
STATUS_DETECTED = 1
STATUS_EXCLUDED = 2
STATUS_STIFF = 3

# Tsitouras (2011) 5(4) pair, 7 stages, FSAL.
C2 = 0.161
C3 = 0.327
C4 = 0.9
C5 = 0.9800255409045097
A21 = 0.161
A31 = -0.008480655492356989
A32 = 0.335480655492357
A41 = 2.897153057105493
A42 = -6.359448489975075
A43 = 4.3622954328695815
A51 = 5.325864828439257
A52 = -11.748883564062828
A53 = 7.4955393428898365
A54 = -0.09249506636175525
A61 = 5.86145544294642
A62 = -12.92096931784711
A63 = 8.159367898576159
A64 = -0.071584973281401
A65 = -0.028269050394068383
A71 = 0.09646076681806523
A72 = 0.01
A73 = 0.4798896504144996
A74 = 1.379008574103742
A75 = -3.290069515436081
A76 = 2.324710524099774
# b - bhat
E1 = -0.00178001105222577714
E2 = -0.0008164344596567469
E3 = 0.007880878010261995
E4 = -0.1447110071732629
E5 = 0.5823571654525552
E6 = -0.45808210592918697
E7 = 0.015151515151515152

SAFETY = 0.9
FAC_MIN = 0.2
FAC_MAX = 5.0

# Expanded polynomial coefficients (highest degree first) for the
# second-order two-wave invariant.
S2_J0 = (0.25, -1.0, 1.5, -1.0, 0.25, 0.0, 0.0, 0.0, 0.0)
S2_F1 = (2.0, -7.0, 9.0, -5.0, 1.0, 0.0, 0.0)
S2_F2 = (2.0, -5.0, 4.0, -1.0, 0.0, 0.0, 0.0)
S2_G0 = (10.0, -12.0, 3.0, 0.0, 0.0)
S2_G3 = (12.0, -13.0, 3.0, 0.0, 0.0)
S2_G4 = (24.0, -48.0, 28.0, -4.0, 0.0)
S2_G5 = (20.0, -40.0, 24.0, -4.0, 0.0)
S2_G6 = (12.0, -35.0, 36.0, -15.0, 2.0)
S2_G7 = (10.0, -28.0, 27.0, -10.0, 1.0)


@njit(cache=True)
def horner(c, x):
    acc = 0.0
    for ci in c:
        acc = acc * x + ci
    return acc


@njit(cache=True)
def dhorner(c, x):
    n = len(c) - 1
    acc = 0.0
    d = n
    for ci in c:
        if d == 0:
            break
        acc = acc * x + d * ci
        d -= 1
    return acc


@njit(cache=True)
def frac(x):
    return x - math.floor(x)


# --------------------------------------------------------------------------
# stream function of the Q-flows

@njit(cache=True)
def psi_all(x, y, q):
    """Return (psi, psi_x, psi_y, psi_xx, psi_xy, psi_yy)."""
    nq = int(q)
    psi = 0.0
    px = 0.0
    py = 0.0
    pxx = 0.0
    pxy = 0.0
    pyy = 0.0
    for j in range(1, nq + 1):
        ang = TWO_PI * j / nq
        c = math.cos(ang)
        s = math.sin(ang)
        arg = x * c + y * s
        ca = math.cos(arg)
        sa = math.sin(arg)
        psi += ca
        px -= c * sa
        py -= s * sa
        pxx -= c * c * ca
        pxy -= c * s * ca
        pyy -= s * s * ca
    return psi, px, py, pxx, pxy, pyy


# --------------------------------------------------------------------------
# models

@njit(cache=True)
def velocity(model, mp, y, out):
    if model == MODEL_TWOWAVE:
        mu = mp[0]
        nu = mp[1]
        k = mp[2]
        q = frac(y[0])
        t = frac(y[2])
        a = TWO_PI * q
        b = TWO_PI * frac(k * (q - t))
        out[0] = y[1]
        out[1] = -TWO_PI * mu * math.sin(a) - TWO_PI * mu * nu * k * math.sin(b)
        out[2] = 1.0
    else:
        eps = mp[1]
        psi, px, py, _, _, _ = psi_all(y[0], y[1], mp[0])
        z = y[2]
        out[0] = py + eps * math.sin(z)
        out[1] = -px + eps * math.cos(z)
        out[2] = psi


@njit(cache=True)
def jacobian(model, mp, y, out):
    for i in range(3):
        for j in range(3):
            out[i, j] = 0.0
    if model == MODEL_TWOWAVE:
        mu = mp[0]
        nu = mp[1]
        k = mp[2]
        q = frac(y[0])
        t = frac(y[2])
        ca = math.cos(TWO_PI * q)
        cb = math.cos(TWO_PI * frac(k * (q - t)))
        w = TWO_PI * TWO_PI * mu
        out[0, 1] = 1.0
        out[1, 0] = -w * (ca + nu * k * k * cb)
        out[1, 2] = w * nu * k * k * cb
    else:
        eps = mp[1]
        _, px, py, pxx, pxy, pyy = psi_all(y[0], y[1], mp[0])
        z = y[2]
        out[0, 0] = pxy
        out[0, 1] = pyy
        out[0, 2] = eps * math.cos(z)
        out[1, 0] = -pxx
        out[1, 1] = -pxy
        out[1, 2] = -eps * math.sin(z)
        out[2, 0] = px
        out[2, 1] = py


@njit(cache=True)
def dalpha(model, mp, y, a, b):
    """Cartan-Arnol'd two-form evaluated on the vectors a, b at y."""
    if model == MODEL_TWOWAVE:
        mu = mp[0]
        nu = mp[1]
        k = mp[2]
        q = frac(y[0])
        t = frac(y[2])
        hq = TWO_PI * mu * math.sin(TWO_PI * q) + TWO_PI * mu * nu * k * math.sin(
            TWO_PI * frac(k * (q - t)))
        hp = y[1]
        return ((a[1] * b[0] - a[0] * b[1])
                - hq * (a[0] * b[2] - a[2] * b[0])
                - hp * (a[1] * b[2] - a[2] * b[1]))
    eps = mp[1]
    x = y[0]
    yy = y[1]
    z = y[2]
    psi, px, py, _, _, _ = psi_all(x, yy, mp[0])
    cz = math.cos(z)
    sz = math.sin(z)
    hx = px - eps * cz
    hy = py + eps * sz
    hz = eps * (yy * cz + x * sz)
    dha = hx * a[0] + hy * a[1] + hz * a[2]
    dhb = hx * b[0] + hy * b[1] + hz * b[2]
    return psi * (a[1] * b[0] - a[0] * b[1]) - (dha * b[2] - dhb * a[2])


# --------------------------------------------------------------------------
# foliations

@njit(cache=True)
def fol_value(fol, mp, y):
    if fol == FOL_R:
        return 0.5 * y[1] * y[1]
    if fol == FOL_L:
        qt = y[0] - math.floor(y[0] + 0.5)
        return 0.5 * (qt * qt + y[1] * y[1])
    if fol == FOL_P:
        return 0.5 * y[1] * y[1] - mp[0] * math.cos(TWO_PI * frac(y[0]))
    if fol == FOL_S1:
        mu = mp[0]
        nu = mp[1]
        k = mp[2]
        p = y[1]
        q = frac(y[0])
        t = frac(y[2])
        return (-0.5 * p * p + p * p * p / 3.0
                - mu * ((p - 1.0) * math.cos(TWO_PI * q)
                        + nu * p * math.cos(TWO_PI * frac(k * (q - t)))))
    if fol == FOL_S2:
        mu = mp[0]
        nu = mp[1]
        p = y[1]
        q = frac(y[0])
        t = frac(y[2])
        c1 = math.cos(TWO_PI * q)
        c2 = math.cos(TWO_PI * (q - t))
        c3 = math.cos(2.0 * TWO_PI * (q - t))
        c4 = math.cos(TWO_PI * (2.0 * q - t))
        c5 = math.cos(TWO_PI * t)
        c6 = math.cos(2.0 * TWO_PI * q)
        first = horner(S2_F1, p) * c1 + nu * horner(S2_F2, p) * c2
        second = (nu * nu * (horner(S2_G0, p) + horner(S2_G3, p) * c3)
                  + nu * (horner(S2_G4, p) * c4 + horner(S2_G5, p) * c5)
                  + horner(S2_G6, p) * c6 + horner(S2_G7, p))
        return horner(S2_J0, p) - mu * first + 0.25 * mu * mu * second
    if fol == FOL_QL:
        return 0.5 * (y[0] * y[0] + y[1] * y[1])
    psi, _, _, _, _, _ = psi_all(y[0], y[1], mp[0])
    return psi


@njit(cache=True)
def fol_grad(fol, mp, y, out):
    out[2] = 0.0
    if fol == FOL_R:
        out[0] = 0.0
        out[1] = 1.0
    elif fol == FOL_L:
        out[0] = y[0] - math.floor(y[0] + 0.5)
        out[1] = y[1]
    elif fol == FOL_P:
        out[0] = TWO_PI * mp[0] * math.sin(TWO_PI * frac(y[0]))
        out[1] = y[1]
    elif fol == FOL_S1:
        mu = mp[0]
        nu = mp[1]
        k = mp[2]
        p = y[1]
        q = frac(y[0])
        t = frac(y[2])
        a = TWO_PI * q
        b = TWO_PI * frac(k * (q - t))
        sa = math.sin(a)
        sb = math.sin(b)
        out[0] = mu * TWO_PI * ((p - 1.0) * sa + k * nu * p * sb)
        out[1] = -p + p * p - mu * (math.cos(a) + nu * math.cos(b))
        out[2] = -mu * nu * p * TWO_PI * k * sb
    elif fol == FOL_S2:
        mu = mp[0]
        nu = mp[1]
        p = y[1]
        q = frac(y[0])
        t = frac(y[2])
        a1 = TWO_PI * q
        a2 = TWO_PI * (q - t)
        a3 = 2.0 * a2
        a4 = TWO_PI * (2.0 * q - t)
        a5 = TWO_PI * t
        a6 = 2.0 * a1
        f1 = horner(S2_F1, p)
        f2 = horner(S2_F2, p)
        g3 = horner(S2_G3, p)
        g4 = horner(S2_G4, p)
        g5 = horner(S2_G5, p)
        g6 = horner(S2_G6, p)
        s1 = math.sin(a1)
        s2 = math.sin(a2)
        s3 = math.sin(a3)
        s4 = math.sin(a4)
        s5 = math.sin(a5)
        s6 = math.sin(a6)
        m2 = 0.25 * mu * mu
        out[0] = (mu * TWO_PI * (f1 * s1 + nu * f2 * s2)
                  - m2 * 2.0 * TWO_PI * (nu * nu * g3 * s3 + nu * g4 * s4 + g6 * s6))
        out[2] = (-mu * TWO_PI * nu * f2 * s2
                  + m2 * TWO_PI * (2.0 * nu * nu * g3 * s3 + nu * g4 * s4 - nu * g5 * s5))
        dfirst = dhorner(S2_F1, p) * math.cos(a1) + nu * dhorner(S2_F2, p) * math.cos(a2)
        dsecond = (nu * nu * (dhorner(S2_G0, p) + dhorner(S2_G3, p) * math.cos(a3))
                   + nu * (dhorner(S2_G4, p) * math.cos(a4) + dhorner(S2_G5, p) * math.cos(a5))
                   + dhorner(S2_G6, p) * math.cos(a6) + dhorner(S2_G7, p))
        out[1] = dhorner(S2_J0, p) - mu * dfirst + m2 * dsecond
    elif fol == FOL_QL:
        out[0] = y[0]
        out[1] = y[1]
    else:
        _, px, py, _, _, _ = psi_all(y[0], y[1], mp[0])
        out[0] = px
        out[1] = py


# --------------------------------------------------------------------------
# integration

@njit(cache=True)
def rhs(model, mp, y, out, jac, tangent):
    velocity(model, mp, y, out)
    if tangent:
        jacobian(model, mp, y, jac)
        for i in range(3):
            out[3 + i] = jac[i, 0] * y[3] + jac[i, 1] * y[4] + jac[i, 2] * y[5]
    else:
        out[3] = 0.0
        out[4] = 0.0
        out[5] = 0.0


@njit(cache=True)
def _embedded_diff(h, i, k1, k2, k3, k4, k5, k6, k7):
    # the E weights sum to zero, so differences against k1 give the same
    # estimate without the rounding floor of the coefficient sum
    c = k1[i]
    return h * (E2 * (k2[i] - c) + E3 * (k3[i] - c) + E4 * (k4[i] - c) + E5 * (k5[i] - c)
                + E6 * (k6[i] - c) + E7 * (k7[i] - c))


@njit(cache=True)
def tsit5_step(model, mp, y, k1, h, rtol, atol, tangent, ynew, k7, ks, tmp, jac):
    """One Tsit5 step from y with derivative k1.

    Writes the 5th-order solution into ynew and its derivative into k7 (FSAL)
    and returns the weighted RMS error of the embedded 4th-order difference.
    Tangent components are weighted scale-invariantly (atol relative to the
    tangent norm) so rescaling the tangent vector never changes step control.
    """
    k2 = ks[0]
    k3 = ks[1]
    k4 = ks[2]
    k5 = ks[3]
    k6 = ks[4]
    for i in range(6):
        tmp[i] = y[i] + h * A21 * k1[i]
    rhs(model, mp, tmp, k2, jac, tangent)
    for i in range(6):
        tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i])
    rhs(model, mp, tmp, k3, jac, tangent)
    for i in range(6):
        tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
    rhs(model, mp, tmp, k4, jac, tangent)
    for i in range(6):
        tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
    rhs(model, mp, tmp, k5, jac, tangent)
    for i in range(6):
        tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i]
                             + A65 * k5[i])
    rhs(model, mp, tmp, k6, jac, tangent)
    for i in range(6):
        ynew[i] = y[i] + h * (A71 * k1[i] + A72 * k2[i] + A73 * k3[i] + A74 * k4[i]
                              + A75 * k5[i] + A76 * k6[i])
    rhs(model, mp, ynew, k7, jac, tangent)

    acc = 0.0
    n = 3
    for i in range(3):
        e = _embedded_diff(h, i, k1, k2, k3, k4, k5, k6, k7)
        sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
        acc += (e / sc) ** 2
    if tangent:
        n0 = math.sqrt(y[3] ** 2 + y[4] ** 2 + y[5] ** 2)
        n1 = math.sqrt(ynew[3] ** 2 + ynew[4] ** 2 + ynew[5] ** 2)
        nx = max(n0, n1)
        if nx > 0.0:
            n = 6
            for i in range(3, 6):
                e = _embedded_diff(h, i, k1, k2, k3, k4, k5, k6, k7)
                sc = atol * nx + rtol * max(abs(y[i]), abs(ynew[i]))
                acc += (e / sc) ** 2
    err = math.sqrt(acc / n)
    if not math.isfinite(err):
        return math.inf
    return err


@njit(cache=True)
def step_factor(err):
    if err == 0.0:
        return FAC_MAX
    f = SAFETY * err ** -0.2
    return min(FAC_MAX, max(FAC_MIN, f))


@njit(cache=True)
def _norm3(v0, v1, v2):
    return math.sqrt(v0 * v0 + v1 * v1 + v2 * v2)


@njit(cache=True)
def _grow(a, n):
    b = np.empty((2 * a.shape[0],) + a.shape[1:])
    b[:n] = a[:n]
    return b


@njit(cache=True, nogil=True)
def detect_loop(model, mp, fol, fp, orient, y0, t_max, rtol, atol,
                h_init, h_max, h_min, renorm_lo, renorm_hi, singular_tol, record):
    """Guarded sign-change search for K(t) = dalpha(xi_t, eta_t).

    xi starts as the unit vector along eta_0.  Any positive multiple gives the
    same decision, and fixing the length makes the step sequence independent
    of it bit for bit.

    Returns (status, t_c, t_end, n_steps, trace_t, trace_K, trace_g, trace_y).
    """
    y = np.empty(6)
    ynew = np.empty(6)
    k1 = np.empty(6)
    k7 = np.empty(6)
    ks = np.empty((5, 6))
    tmp = np.empty(6)
    jac = np.empty((3, 3))
    eta = np.empty(3)

    cap = 256 if record else 1
    tr_t = np.empty(cap)
    tr_k = np.empty(cap)
    tr_g = np.empty(cap)
    tr_y = np.empty((cap, 6))
    n_tr = 0

    for i in range(3):
        y[i] = y0[i]
    fol_grad(fol, fp, y, eta)
    for i in range(3):
        eta[i] *= orient
    n_eta = _norm3(eta[0], eta[1], eta[2])
    if n_eta < singular_tol:
        return (STATUS_EXCLUDED, 0.0, 0.0, 0, tr_t[:0], tr_k[:0], tr_g[:0], tr_y[:0])
    for i in range(3):
        y[3 + i] = eta[i] / n_eta

    t = 0.0
    g_prev = eta[0] * y[3] + eta[1] * y[4] + eta[2] * y[5]
    k_prev = 0.0
    t_kprev = 0.0
    if record:
        tr_t[0] = 0.0
        tr_k[0] = dalpha(model, mp, y, y[3:], eta)
        tr_g[0] = g_prev
        tr_y[0] = y
        n_tr = 1

    rhs(model, mp, y, k1, jac, True)
    h = min(max(h_init, h_min), h_max)
    n_steps = 0
    while t < t_max:
        last = False
        if t + h >= t_max:
            h = t_max - t
            last = True
        err = tsit5_step(model, mp, y, k1, h, rtol, atol, True, ynew, k7, ks, tmp, jac)
        if err > 1.0:
            h = h * step_factor(err)
            if h < h_min:
                return (STATUS_STIFF, 0.0, t, n_steps, tr_t[:n_tr], tr_k[:n_tr],
                        tr_g[:n_tr], tr_y[:n_tr])
            continue
        n_steps += 1
        t_new = t_max if last else t + h
        h = min(h * step_factor(err), h_max)
        for i in range(6):
            y[i] = ynew[i]
            k1[i] = k7[i]
        t = t_new

        nxi = _norm3(y[3], y[4], y[5])
        if nxi > renorm_hi or nxi < renorm_lo:
            inv = 1.0 / nxi
            for i in range(3, 6):
                y[i] *= inv
                k1[i] *= inv
            k_prev *= inv
            g_prev *= inv

        fol_grad(fol, fp, y, eta)
        for i in range(3):
            eta[i] *= orient
        if _norm3(eta[0], eta[1], eta[2]) < singular_tol:
            return (STATUS_EXCLUDED, 0.0, t, n_steps, tr_t[:n_tr], tr_k[:n_tr],
                    tr_g[:n_tr], tr_y[:n_tr])
        kk = dalpha(model, mp, y, y[3:], eta)
        g = eta[0] * y[3] + eta[1] * y[4] + eta[2] * y[5]
        if record:
            if n_tr == tr_t.shape[0]:
                tr_t = _grow(tr_t, n_tr)
                tr_k = _grow(tr_k, n_tr)
                tr_g = _grow(tr_g, n_tr)
                tr_y = _grow(tr_y, n_tr)
            tr_t[n_tr] = t
            tr_k[n_tr] = kk
            tr_g[n_tr] = g
            tr_y[n_tr] = y
            n_tr += 1
        if kk != 0.0:
            if k_prev != 0.0 and (kk > 0.0) != (k_prev > 0.0) and g < 0.0 and g_prev < 0.0:
                t_c = t_kprev + (t - t_kprev) * k_prev / (k_prev - kk)
                return (STATUS_DETECTED, t_c, t, n_steps, tr_t[:n_tr], tr_k[:n_tr],
                        tr_g[:n_tr], tr_y[:n_tr])
            k_prev = kk
            t_kprev = t
        g_prev = g
    return (STATUS_NONE, 0.0, t, n_steps, tr_t[:n_tr], tr_k[:n_tr], tr_g[:n_tr],
            tr_y[:n_tr])


@njit(cache=True, nogil=True)
def advance_loop(model, mp, y0, t0, t_end, tangent, rtol, atol, h_init, h_max, h_min,
                 renorm_lo, renorm_hi):
    """Integrate from t0 to exactly t_end.

    Returns (status, y_end, log_scale, n_steps).  The tangent part is
    renormalised to unit length whenever its norm leaves [renorm_lo,
    renorm_hi]; the logarithms of the removed factors accumulate in
    log_scale.
    """
    y = y0.copy()
    ynew = np.empty(6)
    k1 = np.empty(6)
    k7 = np.empty(6)
    ks = np.empty((5, 6))
    tmp = np.empty(6)
    jac = np.empty((3, 3))
    log_scale = 0.0
    rhs(model, mp, y, k1, jac, tangent)
    h = min(max(h_init, h_min), h_max)
    t = t0
    n_steps = 0
    while t < t_end:
        last = False
        if t + h >= t_end:
            h = t_end - t
            last = True
        err = tsit5_step(model, mp, y, k1, h, rtol, atol, tangent, ynew, k7, ks, tmp, jac)
        if err > 1.0:
            h = h * step_factor(err)
            if h < h_min:
                return STATUS_STIFF, y, log_scale, n_steps
            continue
        n_steps += 1
        t = t_end if last else t + h
        h = min(h * step_factor(err), h_max)
        for i in range(6):
            y[i] = ynew[i]
            k1[i] = k7[i]
        if tangent:
            nxi = _norm3(y[3], y[4], y[5])
            if nxi > renorm_hi or nxi < renorm_lo:
                log_scale += math.log(nxi)
                inv = 1.0 / nxi
                for i in range(3, 6):
                    y[i] *= inv
                    k1[i] *= inv
    return STATUS_NONE, y, log_scale, n_steps
