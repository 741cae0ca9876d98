"""Hot loops, each with a numba and a numpy implementation.

The public wrappers dispatch on :func:`illumwave._accel.backend`. Both paths
evaluate the same arithmetic in the same order, so on the same machine they
agree to the last bit for the stencil and to summation-order rounding for the
reductions. Reductions always go through per-slab partials that are combined
in a fixed order, which keeps results independent of the thread count.
"""

from __future__ import annotations

import math

import numpy as np

from . import _accel
from ._accel import njit, prange

N_SEEDS = 64
_NEWTON_MAX = 100


# ---------------------------------------------------------------- leapfrog


@njit(parallel=True)
def _step_nb(prev, curr, out, active, dt2, inv_h2, flag):
    nx, ny, nz = curr.shape
    bad = np.full(nx, -1, np.int64)
    for i in prange(1, nx - 1):
        for j in range(1, ny - 1):
            for k in range(1, nz - 1):
                if active[i, j, k]:
                    c = curr[i, j, k]
                    lap = (
                        ((curr[i - 1, j, k] + curr[i + 1, j, k]) + (curr[i, j - 1, k] + curr[i, j + 1, k]))
                        + (curr[i, j, k - 1] + curr[i, j, k + 1])
                    ) - 6.0 * c
                    c2 = c * c
                    v = 2.0 * c - prev[i, j, k] + dt2 * (lap * inv_h2 - flag * (c2 * c2 * c))
                    out[i, j, k] = v
                    if bad[i] < 0 and not math.isfinite(v):
                        bad[i] = (i * ny + j) * nz + k
                else:
                    out[i, j, k] = 0.0
    for i in range(nx):
        if bad[i] >= 0:
            return bad[i]
    return -1


def _step_np(prev, curr, out, active, dt2, inv_h2, flag):
    c = curr[1:-1, 1:-1, 1:-1]
    lap = (
        ((curr[:-2, 1:-1, 1:-1] + curr[2:, 1:-1, 1:-1]) + (curr[1:-1, :-2, 1:-1] + curr[1:-1, 2:, 1:-1]))
        + (curr[1:-1, 1:-1, :-2] + curr[1:-1, 1:-1, 2:])
    ) - 6.0 * c
    c2 = c * c
    v = 2.0 * c - prev[1:-1, 1:-1, 1:-1] + dt2 * (lap * inv_h2 - flag * (c2 * c2 * c))
    out[1:-1, 1:-1, 1:-1] = np.where(active[1:-1, 1:-1, 1:-1] != 0, v, 0.0)
    finite = np.isfinite(out)
    if finite.all():
        return -1
    return int(np.flatnonzero(~finite)[0])


def leapfrog_step(prev, curr, out, active, dt, h, nonlinear):
    """Write u^{n+1} into ``out``; return the first non-finite flat index or -1."""
    dt2 = float(dt) * float(dt)
    inv_h2 = 1.0 / (float(h) * float(h))
    flag = 1.0 if nonlinear else 0.0
    if _accel.backend() == "numba":
        return int(_step_nb(prev, curr, out, active, dt2, inv_h2, flag))
    return _step_np(prev, curr, out, active, dt2, inv_h2, flag)


# ----------------------------------------------------- half-step energy


@njit(parallel=True)
def _half_energy_nb(a, b, active, inv_dt, h, nonlinear):
    nx, ny, nz = a.shape
    kin = np.zeros(nx)
    pot = np.zeros(nx)
    grad = np.zeros(nx)
    for i in prange(nx):
        sk = 0.0
        sp = 0.0
        sg = 0.0
        for j in range(ny):
            for k in range(nz):
                av = a[i, j, k]
                bv = b[i, j, k]
                if active[i, j, k]:
                    d = (bv - av) * inv_dt
                    sk += d * d
                    if nonlinear:
                        a2 = av * av
                        b2 = bv * bv
                        sp += a2 * a2 * a2 + b2 * b2 * b2
                if i + 1 < nx:
                    sg += (a[i + 1, j, k] - av) * (b[i + 1, j, k] - bv)
                if j + 1 < ny:
                    sg += (a[i, j + 1, k] - av) * (b[i, j + 1, k] - bv)
                if k + 1 < nz:
                    sg += (a[i, j, k + 1] - av) * (b[i, j, k + 1] - bv)
        kin[i] = sk
        pot[i] = sp
        grad[i] = sg
    h3 = h * h * h
    tk = 0.0
    tp = 0.0
    tg = 0.0
    for i in range(nx):
        tk += kin[i]
        tp += pot[i]
        tg += grad[i]
    return 0.5 * h3 * tk + 0.5 * h * tg + h3 * tp / 12.0


def _half_energy_np(a, b, active, inv_dt, h, nonlinear):
    act = active != 0
    d = (b - a) * inv_dt
    kin = np.where(act, d * d, 0.0).sum(axis=(1, 2))
    grad = np.zeros(a.shape[0])
    grad[:-1] += (np.diff(a, axis=0) * np.diff(b, axis=0)).sum(axis=(1, 2))
    grad += (np.diff(a, axis=1) * np.diff(b, axis=1)).sum(axis=(1, 2))
    grad += (np.diff(a, axis=2) * np.diff(b, axis=2)).sum(axis=(1, 2))
    pot = np.zeros(a.shape[0])
    if nonlinear:
        a2 = a * a
        b2 = b * b
        pot = np.where(act, a2 * a2 * a2 + b2 * b2 * b2, 0.0).sum(axis=(1, 2))
    h3 = h**3
    return 0.5 * h3 * math.fsum(kin) + 0.5 * h * math.fsum(grad) + h3 * math.fsum(pot) / 12.0


def half_step_energy(a, b, active, dt, h, nonlinear):
    """Leapfrog energy between levels ``a = u^n`` and ``b = u^{n+1}``.

    Kinetic term from the forward difference, gradient term as the product of
    edge differences of both levels (the quantity leapfrog conserves exactly
    for the linear equation), potential term averaged over the two levels.
    """
    inv_dt = 1.0 / float(dt)
    if _accel.backend() == "numba":
        return float(_half_energy_nb(a, b, active, inv_dt, float(h), bool(nonlinear)))
    return float(_half_energy_np(a, b, active, inv_dt, float(h), bool(nonlinear)))


# ------------------------------------------------------- grid-wide norms


@njit(parallel=True)
def _grid_sums_nb(prev, curr, nxt, active, inv_2h, inv_2dt):
    nx, ny, nz = curr.shape
    part = np.zeros((nx, 4))
    for i in prange(1, nx - 1):
        s6 = 0.0
        s10 = 0.0
        s12 = 0.0
        se = 0.0
        for j in range(1, ny - 1):
            for k in range(1, nz - 1):
                if active[i, j, k]:
                    u = curr[i, j, k]
                    gx = (curr[i + 1, j, k] - curr[i - 1, j, k]) * inv_2h
                    gy = (curr[i, j + 1, k] - curr[i, j - 1, k]) * inv_2h
                    gz = (curr[i, j, k + 1] - curr[i, j, k - 1]) * inv_2h
                    ut = (nxt[i, j, k] - prev[i, j, k]) * inv_2dt
                    u2 = u * u
                    u4 = u2 * u2
                    u6 = u4 * u2
                    s6 += u6
                    s10 += u6 * u4
                    s12 += u6 * u6
                    se += 0.5 * (ut * ut + (gx * gx + gy * gy + gz * gz)) + u6 / 6.0
        part[i, 0] = s6
        part[i, 1] = s10
        part[i, 2] = s12
        part[i, 3] = se
    out = np.zeros(4)
    for i in range(nx):
        for m in range(4):
            out[m] += part[i, m]
    return out


def _grid_sums_np(prev, curr, nxt, active, inv_2h, inv_2dt):
    act = active[1:-1, 1:-1, 1:-1] != 0
    u = curr[1:-1, 1:-1, 1:-1]
    gx = (curr[2:, 1:-1, 1:-1] - curr[:-2, 1:-1, 1:-1]) * inv_2h
    gy = (curr[1:-1, 2:, 1:-1] - curr[1:-1, :-2, 1:-1]) * inv_2h
    gz = (curr[1:-1, 1:-1, 2:] - curr[1:-1, 1:-1, :-2]) * inv_2h
    ut = (nxt[1:-1, 1:-1, 1:-1] - prev[1:-1, 1:-1, 1:-1]) * inv_2dt
    u2 = u * u
    u4 = u2 * u2
    u6 = u4 * u2
    e = 0.5 * (ut * ut + (gx * gx + gy * gy + gz * gz)) + u6 / 6.0
    cols = [u6, u6 * u4, u6 * u6, e]
    return np.array([math.fsum(np.where(act, c, 0.0).sum(axis=(1, 2))) for c in cols])


def grid_sums(prev, curr, nxt, active, h, dt):
    """Sums over exterior nodes of u⁶, u¹⁰, u¹² and the nodal energy density.

    Nodal density uses centered differences in space and time around ``curr``.
    Values are raw sums; multiply by h³ for integrals.
    """
    inv_2h = 0.5 / float(h)
    inv_2dt = 0.5 / float(dt)
    if _accel.backend() == "numba":
        return _grid_sums_nb(prev, curr, nxt, active, inv_2h, inv_2dt)
    return _grid_sums_np(prev, curr, nxt, active, inv_2h, inv_2dt)


# ---------------------------------------------- per-node table densities

N_DENS = 6  # u⁶/6, e, |∇*u|², (u_s + u/sr)², flux density, e_linear


@njit(parallel=True)
def _table_nb(prev, curr, nxt, idx, sr, nu, lo, hi, sx, sy, inv_2h, inv_2dt):
    p = prev.ravel()
    c = curr.ravel()
    n = nxt.ravel()
    out = np.empty((hi - lo, N_DENS))
    for m in prange(lo, hi):
        q = idx[m]
        u = c[q]
        gx = (c[q + sx] - c[q - sx]) * inv_2h
        gy = (c[q + sy] - c[q - sy]) * inv_2h
        gz = (c[q + 1] - c[q - 1]) * inv_2h
        ut = (n[q] - p[q]) * inv_2dt
        nx_ = nu[m, 0]
        ny_ = nu[m, 1]
        nz_ = nu[m, 2]
        us = gx * nx_ + gy * ny_ + gz * nz_
        g2 = gx * gx + gy * gy + gz * gz
        u2 = u * u
        u6 = u2 * u2 * u2
        rad = us + u / sr[m]
        fx = nx_ * ut + gx
        fy = ny_ * ut + gy
        fz = nz_ * ut + gz
        r = m - lo
        out[r, 0] = u6 / 6.0
        out[r, 1] = 0.5 * (ut * ut + g2) + u6 / 6.0
        out[r, 2] = max(g2 - us * us, 0.0)
        out[r, 3] = rad * rad
        out[r, 4] = 0.5 * (fx * fx + fy * fy + fz * fz) + u6 / 6.0
        out[r, 5] = 0.5 * (ut * ut + g2)
    return out


def _table_np(prev, curr, nxt, idx, sr, nu, lo, hi, sx, sy, inv_2h, inv_2dt):
    p = prev.ravel()
    c = curr.ravel()
    n = nxt.ravel()
    q = idx[lo:hi]
    nuv = nu[lo:hi]
    u = c[q]
    gx = (c[q + sx] - c[q - sx]) * inv_2h
    gy = (c[q + sy] - c[q - sy]) * inv_2h
    gz = (c[q + 1] - c[q - 1]) * inv_2h
    ut = (n[q] - p[q]) * inv_2dt
    us = gx * nuv[:, 0] + gy * nuv[:, 1] + gz * nuv[:, 2]
    g2 = gx * gx + gy * gy + gz * gz
    u2 = u * u
    u6 = u2 * u2 * u2
    rad = us + u / sr[lo:hi]
    fx = nuv[:, 0] * ut + gx
    fy = nuv[:, 1] * ut + gy
    fz = nuv[:, 2] * ut + gz
    out = np.empty((hi - lo, N_DENS))
    out[:, 0] = u6 / 6.0
    out[:, 1] = 0.5 * (ut * ut + g2) + u6 / 6.0
    out[:, 2] = np.maximum(g2 - us * us, 0.0)
    out[:, 3] = rad * rad
    out[:, 4] = 0.5 * (fx * fx + fy * fy + fz * fz) + u6 / 6.0
    out[:, 5] = 0.5 * (ut * ut + g2)
    return out


def table_densities(prev, curr, nxt, idx, sr, nu, lo, hi, h, dt):
    """Pointwise densities at table entries ``lo:hi`` (flat indices ``idx``).

    Columns: u⁶/6, e(u), |∇*u|², |u_s + u/(s+ρ2M)|², flux density
    ½|ν u_t + ∇u|² + u⁶/6, and the linear energy density.
    """
    lo = int(lo)
    hi = int(hi)
    if hi <= lo:
        return np.zeros((0, N_DENS))
    _, ny, nz = curr.shape
    sx = ny * nz
    sy = nz
    inv_2h = 0.5 / float(h)
    inv_2dt = 0.5 / float(dt)
    if _accel.backend() == "numba":
        return _table_nb(prev, curr, nxt, idx, sr, nu, lo, hi, sx, sy, inv_2h, inv_2dt)
    return _table_np(prev, curr, nxt, idx, sr, nu, lo, hi, sx, sy, inv_2h, inv_2dt)


def ordered_sum(a, axis=0):
    """Deterministic sum: numpy pairwise summation over a contiguous copy."""
    return np.ascontiguousarray(a).sum(axis=axis)


# ------------------------------------------------ spheroid foot-point solve


@njit
def _g(theta, rho, z, a, c):
    st = math.sin(theta)
    ct = math.cos(theta)
    return rho * a * ct - z * c * st + (c * c - a * a) * st * ct


@njit
def _dg(theta, rho, z, a, c):
    st = math.sin(theta)
    ct = math.cos(theta)
    return -rho * a * st - z * c * ct + (c * c - a * a) * (ct * ct - st * st)


@njit
def _polish(lo, hi, glo, rho, z, a, c, tol):
    # safeguarded Newton inside a sign-change bracket
    x = 0.5 * (lo + hi)
    for _ in range(_NEWTON_MAX):
        gx = _g(x, rho, z, a, c)
        if gx == 0.0:
            return x, True
        if (gx < 0.0) == (glo < 0.0):
            lo = x
            glo = gx
        else:
            hi = x
        d = _dg(x, rho, z, a, c)
        xn = x - gx / d if d != 0.0 else 0.5 * (lo + hi)
        if not (lo < xn < hi):
            xn = 0.5 * (lo + hi)
        if abs(xn - x) <= tol * (1.0 + abs(x)):
            return xn, True
        x = xn
    return x, hi - lo <= 1e-12


@njit
def _foot_one(rho, z, a, c, nseed):
    best_s = np.inf
    best_t = 0.0
    found = False
    converged = True
    step = 2.0 * math.pi / nseed
    t0 = -math.pi + 0.5 * step
    g0 = _g(t0, rho, z, a, c)
    tprev = t0
    gprev = g0
    for k in range(1, nseed + 1):
        tk = t0 + k * step
        gk = _g(tk, rho, z, a, c) if k < nseed else g0
        if gprev == 0.0 or (gprev < 0.0) != (gk < 0.0):
            if gprev == 0.0:
                th = tprev
                ok = True
            else:
                th, ok = _polish(tprev, tk, gprev, rho, z, a, c, 1e-15)
            st = math.sin(th)
            ct = math.cos(th)
            w = math.sqrt(a * a * ct * ct + c * c * st * st)
            s = ((rho - a * st) * c * st + (z - c * ct) * a * ct) / w
            km = a * c / (w * w * w)
            kp = c / (a * w)
            if 1.0 + km * s > 0.0 and 1.0 + kp * s > 0.0 and abs(s) < abs(best_s):
                best_s = s
                best_t = th
                found = True
                converged = ok
        tprev = tk
        gprev = gk
    if best_t > math.pi:
        best_t -= 2.0 * math.pi
    return best_t, best_s, found, converged


@njit(parallel=True)
def _foot_nb(rho, z, a, c, nseed):
    n = rho.shape[0]
    th = np.empty(n)
    s = np.empty(n)
    status = np.empty(n, np.int8)
    for m in prange(n):
        t, sv, found, conv = _foot_one(rho[m], z[m], a, c, nseed)
        th[m] = t
        s[m] = sv
        status[m] = 0 if not found else (1 if conv else 2)
    return th, s, status


def _foot_np(rho, z, a, c, nseed):
    n = rho.size
    step = 2.0 * math.pi / nseed
    seeds = -math.pi + (np.arange(nseed + 1) + 0.5) * step
    k2 = c * c - a * a
    G = rho[:, None] * a * np.cos(seeds) - z[:, None] * c * np.sin(seeds) + k2 * np.sin(seeds) * np.cos(seeds)
    G[:, -1] = G[:, 0]
    gl, gr = G[:, :-1], G[:, 1:]
    P, K = np.nonzero((gl == 0.0) | ((gl < 0.0) != (gr < 0.0)))
    r, zz = rho[P], z[P]
    lo, hi = seeds[K], seeds[K + 1]
    glo = gl[P, K]
    exact = glo == 0.0
    x = np.where(exact, lo, 0.5 * (lo + hi))
    done = exact.copy()
    for _ in range(_NEWTON_MAX):
        if done.all():
            break
        st, ct = np.sin(x), np.cos(x)
        gx = r * a * ct - zz * c * st + k2 * st * ct
        d = -r * a * st - zz * c * ct + k2 * (ct * ct - st * st)
        zero = gx == 0.0
        same = (gx < 0.0) == (glo < 0.0)
        upd = ~done
        lo = np.where(upd & same, x, lo)
        glo = np.where(upd & same, gx, glo)
        hi = np.where(upd & ~same, x, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            xn = np.where(d != 0.0, x - gx / d, 0.5 * (lo + hi))
        xn = np.where((xn > lo) & (xn < hi), xn, 0.5 * (lo + hi))
        small = np.abs(xn - x) <= 1e-15 * (1.0 + np.abs(x))
        x = np.where(upd & ~zero, xn, x)
        done |= upd & (zero | small)
    conv = done | ((hi - lo) <= 1e-12)
    st, ct = np.sin(x), np.cos(x)
    w = np.sqrt(a * a * ct * ct + c * c * st * st)
    s = ((r - a * st) * c * st + (zz - c * ct) * a * ct) / w
    ok = (1.0 + a * c / w**3 * s > 0.0) & (1.0 + c / (a * w) * s > 0.0)
    best_t = np.zeros(n)
    best_s = np.full(n, np.inf)
    status = np.zeros(n, np.int8)
    P, K, x, s, conv = P[ok], K[ok], x[ok], s[ok], conv[ok]
    # first occurrence per point after sorting by (point, |s|, bracket)
    order = np.lexsort((K, np.abs(s), P))
    P, x, s, conv = P[order], x[order], s[order], conv[order]
    first = np.ones(P.size, bool)
    first[1:] = P[1:] != P[:-1]
    P, x, s, conv = P[first], x[first], s[first], conv[first]
    best_t[P] = np.where(x > math.pi, x - 2.0 * math.pi, x)
    best_s[P] = s
    status[P] = np.where(conv, 1, 2)
    return best_t, best_s, status


def _foot_np_chunked(rho, z, a, c, nseed, chunk=100_000):
    parts = [_foot_np(rho[i : i + chunk], z[i : i + chunk], a, c, nseed) for i in range(0, rho.size, chunk)]
    if not parts:
        return np.zeros(0), np.zeros(0), np.zeros(0, np.int8)
    return tuple(np.concatenate(p) for p in zip(*parts))


def spheroid_foot(rho, z, a, c, nseed=N_SEEDS):
    """Foot-point solve in the meridian plane of a spheroid (a, a, c).

    ``rho >= 0`` and ``z`` are cylindrical coordinates relative to the center.
    Returns (signed polar angle, s, status) with status 0 = no admissible
    root, 1 = converged, 2 = admissible but not converged. A negative angle
    means the foot lies at the opposite azimuth.
    """
    rho = np.ascontiguousarray(rho, dtype=np.float64).ravel()
    z = np.ascontiguousarray(z, dtype=np.float64).ravel()
    if _accel.backend() == "numba":
        return _foot_nb(rho, z, float(a), float(c), int(nseed))
    return _foot_np_chunked(rho, z, float(a), float(c), int(nseed))
