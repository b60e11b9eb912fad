"""Compiled exponential-Euler loop for registry coefficients.

Mirrors ``Stepper.step`` in :mod:`simulator` operation for operation; the two
paths are tested against each other.
"""
import math

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def fast_tanh(x):
    # expm1 form is accurate to a few ulp and cheaper than libm tanh
    if x > 20.0:
        return 1.0
    if x < -20.0:
        return -1.0
    t = math.expm1(2.0 * x)
    return t / (t + 2.0)


@njit(cache=True, inline="always")
def coef(code, p, X, Y):
    if code == 0:
        return p[0]
    if code == 1:
        return p[0] + p[1] * X + p[2] * Y
    if code == 2:
        return p[0] + p[1] * X + p[2] * fast_tanh(p[3] * Y + p[4] * X)
    return p[0] * (1.0 + p[1] * math.sin(p[2] * Y + p[3] * X))


@njit(cache=True, inline="always")
def nonlinear_part(code, p, X, Y):
    """Part of a reaction coefficient not covered by ``lin`` (see simulator)."""
    if code == 2:
        return p[2] * fast_tanh(p[3] * Y + p[4] * X)
    if code == 3:
        return p[0] * (1.0 + p[1] * math.sin(p[2] * Y + p[3] * X))
    return 0.0


@njit(cache=True, inline="always")
def _affine(out, which, lin, X, Y, one, Txy):
    """Affine part ``c + a X + b Y`` of a reaction term, projected exactly."""
    M = out.shape[0]
    c = lin[which, 0]
    a = lin[which, 1]
    b = lin[which, 2]
    for k in range(M):
        s = 0.0
        if which == 0:
            if b != 0.0:
                for j in range(Y.shape[0]):
                    s += Txy[k, j] * Y[j]
            out[k] = c * one[k] + a * X[k] + b * s
        else:
            if a != 0.0:
                for j in range(X.shape[0]):
                    s += Txy[k, j] * X[j]
            out[k] = c * one[k] + a * s + b * Y[k]


@njit(cache=True, inline="always")
def _collocated(out, code, params, row, Xg, Yg, proj):
    """Add the projected nonlinear part of a reaction term (codes 2, 3)."""
    M = out.shape[0]
    for i in range(Xg.shape[0]):
        v = nonlinear_part(code, params[row], Xg[i], Yg[i])
        for k in range(M):
            out[k] += v * proj[i, k]


@njit(cache=True, inline="always")
def _multiplier(out, scale, code, params, row, const, lam, w, wrow, Xg, Yg, basis, proj, tmp):
    """out = P(sigma * sum_k lam_k w[wrow, k] e_k) * scale (per mode)."""
    M = out.shape[0]
    if const:
        v = params[row, 0]
        for k in range(M):
            out[k] = v * lam[k] * w[wrow, k] * scale[k]
        return
    n = Xg.shape[0]
    for i in range(n):
        s = 0.0
        for k in range(M):
            s += basis[i, k] * lam[k] * w[wrow, k]
        tmp[i] = s * coef(code, params[row], Xg[i], Yg[i])
    for k in range(M):
        s = 0.0
        for i in range(n):
            s += tmp[i] * proj[i, k]
        out[k] = s * scale[k]


@njit(cache=True)
def advance(X, Y, z1, z2, u1, u2, has_u, evolve_slow,
            e1, f1, s1, e2, f2, f2c, s2, lam1, lam2,
            basis1, proj1, basis2, proj2, one1, one2, T12, T21,
            codes, params, lin, const_s1, const_s2, need_xg, need_yg,
            blowup):
    """Advance one trajectory by ``z1.shape[0]`` steps in place.

    Returns the index of the first step whose result exceeds ``blowup`` in
    H-norm, or -1.
    """
    nsteps = z1.shape[0]
    M1 = X.shape[0]
    M2 = Y.shape[0]
    n = basis1.shape[0]
    Xg = np.zeros(n)
    Yg = np.zeros(n)
    tmp = np.zeros(n)
    d1 = np.zeros(M1)
    c1 = np.zeros(M1)
    w1 = np.zeros(M1)
    d2 = np.zeros(M2)
    c2 = np.zeros(M2)
    w2 = np.zeros(M2)
    ones1 = np.ones(M1)
    ones2 = np.ones(M2)
    b2 = blowup * blowup
    for step in range(nsteps):
        if need_xg:
            for i in range(n):
                sx = 0.0
                for k in range(M1):
                    sx += basis1[i, k] * X[k]
                Xg[i] = sx
        if need_yg:
            for i in range(n):
                sy = 0.0
                for k in range(M2):
                    sy += basis2[i, k] * Y[k]
                Yg[i] = sy
        # both updates read the state at the start of the step
        if evolve_slow:
            _affine(d1, 0, lin, X, Y, one1, T12)
            if codes[0] >= 2:
                _collocated(d1, codes[0], params, 0, Xg, Yg, proj1)
            _multiplier(w1, s1, codes[2], params, 2, const_s1, lam1, z1, step, Xg, Yg,
                        basis1, proj1, tmp)
            if has_u:
                _multiplier(c1, ones1, codes[2], params, 2, const_s1, lam1, u1, step, Xg, Yg,
                            basis1, proj1, tmp)
        _affine(d2, 1, lin, X, Y, one2, T21)
        if codes[1] >= 2:
            _collocated(d2, codes[1], params, 1, Xg, Yg, proj2)
        _multiplier(w2, s2, codes[3], params, 3, const_s2, lam2, z2, step, Xg, Yg,
                    basis2, proj2, tmp)
        if has_u:
            _multiplier(c2, ones2, codes[3], params, 3, const_s2, lam2, u2, step, Xg, Yg,
                        basis2, proj2, tmp)
        nx = 0.0
        ny = 0.0
        if evolve_slow:
            for k in range(M1):
                v = e1[k] * X[k] + f1[k] * d1[k] + w1[k]
                if has_u:
                    v += f1[k] * c1[k]
                X[k] = v
                nx += v * v
        for k in range(M2):
            v = e2[k] * Y[k] + f2[k] * d2[k] + w2[k]
            if has_u:
                v += f2c[k] * c2[k]
            Y[k] = v
            ny += v * v
        if not (nx <= b2 and ny <= b2):
            return step
    return -1
