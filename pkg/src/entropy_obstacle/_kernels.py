"""Compiled inner loops for the projected nonlinear Gauss-Seidel sweep.

The discrete frozen-coefficient energy is

    E(u) = sum_e vol_e d_e Phi(grad u|_e) + sum_i m_i (B(u_i) - f_i u_i),
    Phi(xi) = (eps^2 + |xi|^2)^(p/2) / p,

so its nodal gradient is R_i = sum_e vol_e d_e a(grad u|_e) . grad phi_i
+ m_i (lot(u_i) - f_i), with ``m`` the lumped nodal volumes.
"""

import math

import numpy as np
from numba import njit

MAX_ADJ = 8


@njit(cache=True)
def _lot(u, b, r, eps_sign):
    a = abs(u)
    if b == 0.0:
        return 0.0
    return b * u / max(a, eps_sign) * a ** (r - 1.0)


@njit(cache=True)
def _dlot(u, b, r, eps_sign):
    a = abs(u)
    if b == 0.0:
        return 0.0
    if a >= eps_sign:
        return b * (r - 1.0) * a ** (r - 2.0)
    return b * r * a ** (r - 1.0) / eps_sign


@njit(cache=True)
def residual_all(u, elements, bgrad, vol, dfac, lumped, f, p, eps_reg, b, r, eps_sign, out):
    """Full nodal energy gradient into ``out``."""
    n = u.shape[0]
    E, k = elements.shape
    dim = bgrad.shape[2]
    for i in range(n):
        out[i] = lumped[i] * (_lot(u[i], b, r, eps_sign) - f[i])
    g = np.zeros(dim)
    eps2 = eps_reg * eps_reg
    for e in range(E):
        for d in range(dim):
            g[d] = 0.0
        for a in range(k):
            ua = u[elements[e, a]]
            for d in range(dim):
                g[d] += ua * bgrad[e, a, d]
        if p == 2.0:
            coef = 1.0
        else:
            m2 = eps2
            for d in range(dim):
                m2 += g[d] * g[d]
            coef = m2 ** (0.5 * (p - 2.0)) if m2 > 0.0 else 0.0
        w = vol[e] * dfac[e] * coef
        for a in range(k):
            s = 0.0
            for d in range(dim):
                s += g[d] * bgrad[e, a, d]
            out[elements[e, a]] += w * s


@njit(cache=True)
def _node_eval(c, nadj, grest, gi, wv, p, eps2, mi, fi, b, r, eps_sign):
    """Residual and derivative at one node when its value is set to ``c``."""
    dim = grest.shape[1]
    R = mi * (_lot(c, b, r, eps_sign) - fi)
    dR = mi * _dlot(c, b, r, eps_sign)
    for t in range(nadj):
        gg = 0.0
        gG = 0.0
        GG = 0.0
        for d in range(dim):
            gd = grest[t, d] + c * gi[t, d]
            gg += gd * gd
            gG += gd * gi[t, d]
            GG += gi[t, d] * gi[t, d]
        if p == 2.0:
            R += wv[t] * gG
            dR += wv[t] * GG
        else:
            m2 = eps2 + gg
            if m2 <= 0.0:
                continue
            coef = m2 ** (0.5 * (p - 2.0))
            R += wv[t] * coef * gG
            dR += wv[t] * coef * (GG + (p - 2.0) * gG * gG / m2)
    return R, dR


@njit(cache=True)
def pgs_sweep(u, psi, order, offsets, elem_ids, local, elements, bgrad, vol, dfac,
              lumped, f, p, eps_reg, b, r, eps_sign, omega, local_tol, local_max):
    """One in-place projected nonlinear SOR sweep over the nodes in ``order``.

    Per node the scalar stationarity equation is solved by Newton's method,
    falling back to bisection once a sign change is bracketed; the relaxed
    value is then projected onto [psi_i, inf).  Returns the number of local
    iterations that hit ``local_max``.
    """
    dim = bgrad.shape[2]
    k = elements.shape[1]
    grest = np.zeros((MAX_ADJ, dim))
    gi = np.zeros((MAX_ADJ, dim))
    wv = np.zeros(MAX_ADJ)
    eps2 = eps_reg * eps_reg
    stalled = 0
    for idx in range(order.shape[0]):
        i = order[idx]
        nadj = offsets[i + 1] - offsets[i]
        for t in range(nadj):
            e = elem_ids[offsets[i] + t]
            li = local[offsets[i] + t]
            wv[t] = vol[e] * dfac[e]
            for d in range(dim):
                grest[t, d] = 0.0
                gi[t, d] = bgrad[e, li, d]
            for a in range(k):
                if a == li:
                    continue
                ua = u[elements[e, a]]
                for d in range(dim):
                    grest[t, d] += ua * bgrad[e, a, d]
        c = u[i]
        R, dR = _node_eval(c, nadj, grest, gi, wv, p, eps2, lumped[i], f[i], b, r, eps_sign)
        lo = -math.inf
        hi = math.inf
        it = 0
        while abs(R) > local_tol and it < local_max:
            if R > 0.0:
                hi = min(hi, c)
            else:
                lo = max(lo, c)
            if dR > 0.0 and math.isfinite(dR):
                cn = c - R / dR
            else:
                cn = math.nan
            if not (lo < cn < hi):
                if math.isfinite(lo) and math.isfinite(hi):
                    cn = 0.5 * (lo + hi)
                elif math.isfinite(lo):
                    cn = lo + 2.0 * (abs(lo) + 1.0)
                else:
                    cn = hi - 2.0 * (abs(hi) + 1.0)
            if cn == c:
                break
            c = cn
            R, dR = _node_eval(c, nadj, grest, gi, wv, p, eps2, lumped[i], f[i], b, r, eps_sign)
            it += 1
        if it == local_max and abs(R) > local_tol:
            stalled += 1
        v = u[i] + omega * (c - u[i])
        if v < psi[i]:
            v = psi[i]
        u[i] = v
    return stalled


@njit(cache=True)
def projected_residual(u, psi, R, interior, active_tol, out):
    """Stationarity measure: R at inactive nodes, min(R, 0) at active ones."""
    worst = 0.0
    for i in range(u.shape[0]):
        if not interior[i]:
            out[i] = 0.0
            continue
        if u[i] - psi[i] <= active_tol:
            out[i] = min(R[i], 0.0)
        else:
            out[i] = R[i]
        worst = max(worst, abs(out[i]))
    return worst
