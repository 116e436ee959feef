"""Compiled per-step arithmetic for the Euler integrator.

These functions mirror the reference NumPy code paths in ``inclusion.py``;
the integration loop calls one of them per step, so they are written with
explicit loops over the (small) contact and velocity dimensions.
"""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def compose(JnT, JtFT, w, friction):
    n, m = JnT.shape
    f = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for c in range(m):
            acc += JnT[i, c] * w[c] + JtFT[i, 2 * c] * friction[c, 0] \
                + JtFT[i, 2 * c + 1] * friction[c, 1]
        f[i] = acc
    return f


@njit(cache=True)
def _hold(JtF, mu, w, f_fixed, stick):
    """Least-squares in-disc tangential rates for sticking contacts."""
    m = w.shape[0]
    n = f_fixed.shape[0]
    idx = np.flatnonzero(stick)
    k = idx.shape[0]
    A = np.zeros((2 * k, n))
    radius = np.zeros(k)
    for a in range(k):
        c = idx[a]
        A[2 * a] = JtF[2 * c]
        A[2 * a + 1] = JtF[2 * c + 1]
        radius[a] = mu[c] * w[c]
    G = A @ A.T
    r = A @ f_fixed
    vals, vecs = _jacobi_eig(G)
    top = np.max(vals)
    # minimum-norm solution of G b = -r
    coef = vecs.T @ r
    for j in range(2 * k):
        coef[j] = -coef[j] / vals[j] if vals[j] > 1e-12 * top else 0.0
    b = vecs @ coef
    feasible = True
    for a in range(k):
        if math.hypot(b[2 * a], b[2 * a + 1]) > radius[a] * (1 + 1e-12):
            feasible = False
    if not feasible:
        x = b.copy()
        _project(x, radius)
        lip = top * top
        if lip > 0.0:
            y = x.copy()
            t_k = 1.0
            for _ in range(500):
                grad = G @ (r + G @ y)
                x_new = y - grad / lip
                _project(x_new, radius)
                t_new = 0.5 * (1 + math.sqrt(1 + 4 * t_k * t_k))
                y = x_new + ((t_k - 1) / t_new) * (x_new - x)
                if np.max(np.abs(x_new - x)) <= 1e-15 * (1 + np.max(np.abs(x))):
                    x = x_new
                    break
                x = x_new
                t_k = t_new
        b = x
    out = np.zeros((m, 2))
    for a in range(k):
        out[idx[a], 0] = b[2 * a]
        out[idx[a], 1] = b[2 * a + 1]
    return out


@njit(cache=True)
def _jacobi_eig(G):
    """Eigen-decomposition of a small symmetric matrix by cyclic Jacobi rotations."""
    k = G.shape[0]
    a = G.copy()
    vecs = np.eye(k)
    for _ in range(50):
        off = 0.0
        diag = 0.0
        for i in range(k):
            diag += a[i, i] * a[i, i]
            for j in range(i + 1, k):
                off += a[i, j] * a[i, j]
        if off <= 1e-30 * diag or off == 0.0:
            break
        for p in range(k - 1):
            for q in range(p + 1, k):
                if a[p, q] == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for i in range(k):
                    aip = a[i, p]
                    aiq = a[i, q]
                    a[i, p] = c * aip - s * aiq
                    a[i, q] = s * aip + c * aiq
                for i in range(k):
                    api = a[p, i]
                    aqi = a[q, i]
                    a[p, i] = c * api - s * aqi
                    a[q, i] = s * api + c * aqi
                for i in range(k):
                    vip = vecs[i, p]
                    viq = vecs[i, q]
                    vecs[i, p] = c * vip - s * viq
                    vecs[i, q] = s * vip + c * viq
    vals = np.zeros(k)
    for i in range(k):
        vals[i] = a[i, i]
    return vals, vecs


@njit(cache=True)
def _project(x, radius):
    for a in range(radius.shape[0]):
        nrm = math.hypot(x[2 * a], x[2 * a + 1])
        if nrm > radius[a]:
            s = radius[a] / nrm
            x[2 * a] *= s
            x[2 * a + 1] *= s


@njit(cache=True)
def friction_rates(JnT, JtF, JtFT, mu, v, w, step, tol, hold):
    """Returns ``(friction, sticking, f)``.

    With ``hold`` false the sticking rows of ``friction`` are left at zero for
    the caller to fill.
    """
    m = w.shape[0]
    n = v.shape[0]
    friction = np.zeros((m, 2))
    sticking = np.zeros(m, dtype=np.bool_)
    zero = np.zeros((m, 2))
    any_fric = False
    for c in range(m):
        if mu[c] > 0 and w[c] > 0:
            any_fric = True
    if not any_fric:
        return friction, sticking, compose(JnT, JtFT, w, zero)
    T = np.zeros((m, 2))
    tn = np.zeros(m)
    slide = np.zeros(m, dtype=np.bool_)
    for c in range(m):
        if mu[c] > 0 and w[c] > 0:
            for k in range(2):
                acc = 0.0
                for i in range(n):
                    acc += JtF[2 * c + k, i] * v[i]
                T[c, k] = acc
            tn[c] = math.hypot(T[c, 0], T[c, 1])
            if tn[c] > tol:
                slide[c] = True
                coef = mu[c] * w[c] / tn[c]
                friction[c, 0] = -coef * T[c, 0]
                friction[c, 1] = -coef * T[c, 1]
            else:
                sticking[c] = True
    f = compose(JnT, JtFT, w, friction)
    for c in range(m):
        if slide[c]:
            approach = 0.0
            for k in range(2):
                acc = 0.0
                for i in range(n):
                    acc += JtF[2 * c + k, i] * f[i]
                approach -= T[c, k] * acc
            approach /= tn[c]
            # slip would reach zero within one step
            if approach > 0 and tn[c] <= step * approach:
                sticking[c] = True
    if sticking.any():
        for c in range(m):
            if sticking[c]:
                friction[c, 0] = 0.0
                friction[c, 1] = 0.0
        if hold:
            f_fixed = compose(JnT, JtFT, w, friction)
            held = _hold(JtF, mu, w, f_fixed, sticking)
            for c in range(m):
                if sticking[c]:
                    friction[c, 0] = held[c, 0]
                    friction[c, 1] = held[c, 1]
        f = compose(JnT, JtFT, w, friction)
    return friction, sticking, f


@njit(cache=True)
def _crossing(Jn, vn, f, h, tol):
    """Fraction of the step at which the first normal velocity changes sign."""
    m, n = Jn.shape
    theta = 1.0
    for c in range(m):
        rate = 0.0
        for i in range(n):
            rate += Jn[c, i] * f[i]
        rate *= h
        end = vn[c] + rate
        if (vn[c] < -tol and end >= 0) or (vn[c] > tol and end < 0):
            theta = min(theta, -vn[c] / rate)
    return theta


@njit(cache=True)
def guard(Jn, JnT, JtF, JtFT, mu, v, vn, w, f, friction, sticking, h, tol):
    """Step length along ``f`` with normal-crossing and energy cuts.

    Returns ``(dt, friction, sticking, f)``; the forces change only when a
    sticking selection would not dissipate and is replaced by sliding.
    """
    m, n = Jn.shape
    theta = _crossing(Jn, vn, f, h, tol)
    ff = 0.0
    fv = 0.0
    for i in range(n):
        ff += f[i] * f[i]
        fv += f[i] * v[i]
    stalled = False
    if sticking.any():
        fn = compose(JnT, JtFT, w, np.zeros((m, 2)))
        scale = math.sqrt(np.sum(fn * fn))
        stalled = -fv <= tol * math.sqrt(ff) or math.sqrt(ff) <= 1e-9 * scale
    if ff == 0.0 or stalled or fv + theta * h * ff > 0:
        if sticking.any():
            # a sticking selection that gains energy, or dissipates nothing, is
            # replaced by sliding against the residual slip (slip reversal)
            fric2 = friction.copy()
            for c in range(m):
                if sticking[c]:
                    t0 = 0.0
                    t1 = 0.0
                    for i in range(n):
                        t0 += JtF[2 * c, i] * v[i]
                        t1 += JtF[2 * c + 1, i] * v[i]
                    tn = math.hypot(t0, t1)
                    if tn > 0:
                        fric2[c, 0] = -mu[c] * w[c] * t0 / tn
                        fric2[c, 1] = -mu[c] * w[c] * t1 / tn
                    else:
                        fric2[c, 0] = 0.0
                        fric2[c, 1] = 0.0
            f2 = compose(JnT, JtFT, w, fric2)
            ff2 = 0.0
            fv2 = 0.0
            for i in range(n):
                ff2 += f2[i] * f2[i]
                fv2 += f2[i] * v[i]
            if fv2 < 0 and (fv >= 0 or stalled or -fv2 / ff2 > -fv / ff):
                friction = fric2
                sticking = np.zeros(m, dtype=np.bool_)
                f = f2
                ff = ff2
                fv = fv2
                theta = _crossing(Jn, vn, f, h, tol)
        if fv < 0 and ff > 0:
            # stop where the ray is closest to the origin so |v| keeps decreasing
            theta = min(theta, -fv / (h * ff))
    return theta * h, friction, sticking, f


SIMULTANEOUS = 0
SEQUENTIAL = 1
FIXED = 2


@njit(cache=True)
def _weights(mode, order, fixed, vn, tol):
    m = vn.shape[0]
    w = np.zeros(m)
    count = 0
    for c in range(m):
        if vn[c] < -tol:
            count += 1
    if mode == SEQUENTIAL:
        for k in range(order.shape[0]):
            if vn[order[k]] < -tol:
                w[order[k]] = 1.0
                return w
    if mode == FIXED:
        total = 0.0
        for c in range(m):
            if vn[c] <= tol:
                total += fixed[c]
        if total > 0:
            for c in range(m):
                if vn[c] <= tol:
                    w[c] = fixed[c] / total
            return w
    for c in range(m):
        if vn[c] < -tol:
            w[c] = 1.0 / count
    return w


@njit(cache=True)
def run(Jn, JnT, JtF, JtFT, mu, v0, mode, order, fixed, step, s_max, tol, max_steps):
    """Whole Euler loop for the deterministic strategies with hold-if-feasible sticking.

    Same arithmetic as the Python loop in ``integrate``; returns
    ``(s, v, weights, friction, sticking, terminated)``.
    """
    m, n = Jn.shape
    cap = 1024
    S = np.zeros(cap)
    V = np.zeros((cap, n))
    W = np.zeros((cap, m))
    F = np.zeros((cap, m, 2))
    K = np.zeros((cap, m), dtype=np.bool_)
    v = v0.copy()
    s = 0.0
    k = 0
    terminated = False
    while True:
        vn = Jn @ v
        active = False
        for c in range(m):
            if vn[c] < -tol:
                active = True
        if not active:
            terminated = True
            break
        if s >= s_max or k >= max_steps:
            break
        w = _weights(mode, order, fixed, vn, tol)
        friction, sticking, f = friction_rates(JnT, JtF, JtFT, mu, v, w, step, tol, True)
        h = min(step, s_max - s)
        dt, friction, sticking, f = guard(Jn, JnT, JtF, JtFT, mu, v, vn, w, f, friction,
                                          sticking, h, tol)
        if k + 1 >= cap:
            cap *= 2
            S = _grow1(S, cap)
            V = _grow2(V, cap)
            W = _grow2(W, cap)
            F = _grow3(F, cap)
            K = _grow2b(K, cap)
        S[k] = s
        V[k] = v
        W[k] = w
        F[k] = friction
        K[k] = sticking
        k += 1
        v = v + dt * f
        s = s + dt
    S[k] = s
    V[k] = v
    return S[:k + 1], V[:k + 1], W[:k + 1], F[:k + 1], K[:k + 1], terminated


@njit(cache=True)
def _grow1(a, cap):
    out = np.zeros(cap)
    out[:a.shape[0]] = a
    return out


@njit(cache=True)
def _grow2(a, cap):
    out = np.zeros((cap, a.shape[1]))
    out[:a.shape[0]] = a
    return out


@njit(cache=True)
def _grow2b(a, cap):
    out = np.zeros((cap, a.shape[1]), dtype=np.bool_)
    out[:a.shape[0]] = a
    return out


@njit(cache=True)
def _grow3(a, cap):
    out = np.zeros((cap, a.shape[1], a.shape[2]))
    out[:a.shape[0]] = a
    return out
