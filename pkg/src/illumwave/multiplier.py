"""Pointwise multiplier densities for □u = −u⁵ in normal-ray coordinates.

With α = (s+ρ2M)ν and N = u + α·∇u + (t+M)u_t the densities below satisfy

    ∂t Q + div P + R = (□u + u⁵) N,

so the left side vanishes on solutions. Everything is evaluated from
Cartesian field values plus the surface frame of the illuminating body; all
functions broadcast over leading array axes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, StencilError
from .geometry.bodies import (
    IlluminatingBody,
    IlluminatingCoords,
    SurfaceFrame,
    _frame_theta_phi,
    decompose_gradient,
    invert,
)

SQRT2 = math.sqrt(2.0)


@dataclass
class FieldSample:
    u: np.ndarray
    du_dt: np.ndarray
    grad_u: np.ndarray
    coords: IlluminatingCoords
    frame: SurfaceFrame
    t: float
    M: float
    rho2M: float

    def __post_init__(self):
        self.u = np.asarray(self.u, float)
        self.du_dt = np.asarray(self.du_dt, float)
        self.grad_u = np.asarray(self.grad_u, float)
        if self.M < self.rho2M:
            raise DomainError(f"M = {self.M} must be at least rho2M = {self.rho2M}")

    @classmethod
    def at(cls, body: IlluminatingBody, x, u, du_dt, grad_u, t: float, M: float) -> FieldSample:
        coords, status = invert(body, x)
        if np.any(status != 1):
            raise DomainError("sample point outside the normal-ray coordinate domain")
        th, ph = body.theta_phi(coords.sigma1, coords.sigma2)
        return cls(u, du_dt, grad_u, coords, _frame_theta_phi(body, th, ph), float(t), float(M), body.rho2M)

    @property
    def sr(self) -> np.ndarray:
        return np.asarray(self.coords.s, float) + self.rho2M

    @property
    def alpha(self) -> np.ndarray:
        return self.sr[..., None] * self.frame.nu


@dataclass
class MultiplierDensities:
    Q: np.ndarray
    P: np.ndarray
    R: np.ndarray
    Nu: np.ndarray
    e: np.ndarray


def _ray_factors(c: IlluminatingCoords, frame: SurfaceFrame):
    s = np.asarray(c.s, float)
    a1 = s + frame.rho1
    a2 = s + frame.rho2
    if np.any(a1 <= 0) or np.any(a2 <= 0):
        raise DomainError("degenerate ray: s + rho_i <= 0")
    return s, a1, a2


def energy_density(sample: FieldSample) -> np.ndarray:
    u = sample.u
    g2 = np.sum(sample.grad_u**2, axis=-1)
    return 0.5 * (sample.du_dt**2 + g2) + u**6 / 6.0


def div_alpha(c: IlluminatingCoords, frame: SurfaceFrame, rho2M: float) -> np.ndarray:
    _, a1, a2 = _ray_factors(c, frame)
    return 3.0 + (rho2M - frame.rho1) / a1 + (rho2M - frame.rho2) / a2


def h_alpha(decomp, c: IlluminatingCoords, frame: SurfaceFrame, rho2M: float) -> np.ndarray:
    """Quadratic form Σ ∂ᵢαⱼ ∂ᵢu ∂ⱼu from the split (∂_s u, ∇*₁u, ∇*₂u)."""
    ds, d1, d2 = decomp
    _, a1, a2 = _ray_factors(c, frame)
    g2 = ds * ds + d1 * d1 + d2 * d2
    return g2 + (rho2M - frame.rho1) / a1 * d1 * d1 + (rho2M - frame.rho2) / a2 * d2 * d2


def qpr_densities(sample: FieldSample) -> MultiplierDensities:
    u, ut, g = sample.u, sample.du_dt, sample.grad_u
    tm = sample.t + sample.M
    alpha = sample.alpha
    g2 = np.sum(g * g, axis=-1)
    u6 = u**6
    a_g = np.sum(alpha * g, axis=-1)
    Q = tm * (0.5 * g2 + u6 / 6.0 + 0.5 * ut * ut) + ut * a_g + u * ut
    P = (0.5 * g2 + u6 / 6.0 - 0.5 * ut * ut)[..., None] * alpha - (tm * ut + a_g + u)[..., None] * g
    da = div_alpha(sample.coords, sample.frame, sample.rho2M)
    H = h_alpha(decompose_gradient(g, sample.frame), sample.coords, sample.frame, sample.rho2M)
    R = (da - 3.0) * 0.5 * ut * ut + (1.0 - da) * 0.5 * g2 + (5.0 - da) * u6 / 6.0 + H
    Nu = u + a_g + tm * ut
    return MultiplierDensities(Q, P, R, Nu, energy_density(sample))


def mantle_density(sample: FieldSample, tol: float = 1e-9):
    """(Q − P·ν, (s+ρ2M)(u_t+u_s)² + u(u_t+u_s)) on the cone s+ρ2M = t+M."""
    tm = sample.t + sample.M
    if np.any(np.abs(sample.sr - tm) > tol * (1.0 + abs(tm))):
        raise DomainError("sample is not on the mantle s + rho2M = t + M")
    d = qpr_densities(sample)
    direct = d.Q - np.sum(d.P * sample.frame.nu, axis=-1)
    us = np.sum(sample.grad_u * sample.frame.nu, axis=-1)
    w = sample.du_dt + us
    return direct, sample.sr * w * w + sample.u * w


def boundary_density(sample: FieldSample, normal, tol: float = 1e-12):
    """(−P·n, ½(∇u·n)²(α·n)) at a Dirichlet boundary point (u = u_t = 0)."""
    if np.any(np.abs(sample.u) > tol) or np.any(np.abs(sample.du_dt) > tol):
        raise DomainError("boundary density needs u = u_t = 0")
    n = np.asarray(normal, float)
    d = qpr_densities(sample)
    gn = np.sum(sample.grad_u * n, axis=-1)
    return -np.sum(d.P * n, axis=-1), 0.5 * gn * gn * np.sum(sample.alpha * n, axis=-1)


def time_slice_density(sample: FieldSample):
    """Two expressions of I(T) at T = sample.t.

    First: the bracket form ¼(T+M+sr)[u_t + w]² + ¼(T+M−sr)[u_t − w]² +
    (T+M)u⁶/6 with w = ∂_s(sr·u)/sr. Second: Q + (T+M)/2·(u²/sr² +
    2u u_s/sr) − (T+M)|∇*u|²/2.
    """
    tm = sample.t + sample.M
    sr = sample.sr
    u, ut = sample.u, sample.du_dt
    ds, d1, d2 = decompose_gradient(sample.grad_u, sample.frame)
    w = ds + u / sr
    bracket = 0.25 * (tm + sr) * (ut + w) ** 2 + 0.25 * (tm - sr) * (ut - w) ** 2 + tm * u**6 / 6.0
    Q = qpr_densities(sample).Q
    via_q = Q + 0.5 * tm * (u * u / (sr * sr) + 2.0 * u * ds / sr) - 0.5 * tm * (d1 * d1 + d2 * d2)
    return bracket, via_q


def slice_weight_derivative(c: IlluminatingCoords, frame: SurfaceFrame, rho2M: float) -> np.ndarray:
    """∂_s[(s+ρ₁)(s+ρ₂)/(s+ρ2M)²] = Σ_{i≠j}(ρ2M−ρᵢ)(s+ρⱼ)/(s+ρ2M)³ ≥ 0."""
    s, a1, a2 = _ray_factors(c, frame)
    sr = s + rho2M
    return ((rho2M - frame.rho1) * a2 + (rho2M - frame.rho2) * a1) / sr**3


# ----------------------------------------------------- manufactured fields


@dataclass(frozen=True)
class Manufactured:
    """Closed-form u(t, x) with the derivatives the residual needs."""

    name: str
    params: tuple = ()

    def _xy(self, x):
        return np.asarray(x, float)

    def eval(self, t: float, x):
        """(u, u_t, ∇u, □u) at time t and points x (..., 3)."""
        x = self._xy(x)
        shape = x.shape[:-1]
        if self.name == "zero":
            z = np.zeros(shape)
            return z, z.copy(), np.zeros(shape + (3,)), z.copy()
        if self.name == "linear_x1":
            u = x[..., 0].copy()
            g = np.zeros(shape + (3,))
            g[..., 0] = 1.0
            return u, np.zeros(shape), g, np.zeros(shape)
        if self.name == "gaussian":
            x0 = np.asarray(self.params or (0.0, 0.0, 2.0), float)
            d = x - x0
            r2 = np.sum(d * d, axis=-1)
            u = np.exp(-r2 - t * t)
            ut = -2.0 * t * u
            utt = (4.0 * t * t - 2.0) * u
            g = -2.0 * d * u[..., None]
            lap = (4.0 * r2 - 6.0) * u
            return u, ut, g, utt - lap
        if self.name == "trig":
            k = np.array([1.0, 2.0, -1.0])
            om = 1.3
            amp = 0.5
            ph = x @ k
            u = amp * np.sin(ph) * np.cos(om * t)
            ut = -amp * om * np.sin(ph) * np.sin(om * t)
            g = (amp * np.cos(ph) * np.cos(om * t))[..., None] * k
            box = (k @ k - om * om) * u
            return u, ut, g, box
        raise KeyError(self.name)


MANUFACTURED = ("zero", "linear_x1", "gaussian", "trig")


def manufactured(name: str, params=()) -> Manufactured:
    if name not in MANUFACTURED:
        raise KeyError(f"unknown manufactured solution {name!r}; known: {', '.join(MANUFACTURED)}")
    return Manufactured(name, tuple(params))


def _densities_at(sol: Manufactured, body, x, t, M):
    u, ut, g, _ = sol.eval(t, x)
    return qpr_densities(FieldSample.at(body, x, u, ut, g, t, M))


def identity_residual(sol: Manufactured, body: IlluminatingBody, point, t: float, h: float, M: float, obstacle=None):
    """|∂tQ + div P + R − (□u+u⁵)N| with central differences of step h."""
    x = np.asarray(point, float).reshape(3)
    offsets = np.vstack([np.zeros(3), np.eye(3) * h, -np.eye(3) * h])
    stencil = x + offsets
    if obstacle is not None:
        inside = obstacle.sdf(stencil) <= 0
        if inside.any():
            bad = stencil[inside][0]
            raise StencilError(f"stencil node ({bad[0]:.6g}, {bad[1]:.6g}, {bad[2]:.6g}) lies in the obstacle")
    _, status = invert(body, stencil)
    if np.any(status != 1):
        bad = stencil[status != 1][0]
        raise StencilError(f"stencil node ({bad[0]:.6g}, {bad[1]:.6g}, {bad[2]:.6g}) is on a degenerate ray")
    space = _densities_at(sol, body, stencil, t, M)
    qp = _densities_at(sol, body, x, t + h, M).Q
    qm = _densities_at(sol, body, x, t - h, M).Q
    dtQ = (qp - qm) / (2.0 * h)
    divP = sum((space.P[1 + i, i] - space.P[4 + i, i]) / (2.0 * h) for i in range(3))
    u, _, _, box = sol.eval(t, x)
    defect = (box + u**5) * space.Nu[0]
    return float(abs(dtQ + divP + space.R[0] - defect))


def residual_table(sol, body, points, t, steps, M, obstacle=None):
    """Rows (h, max residual over points, observed order vs previous row)."""
    rows = []
    prev = None
    for h in steps:
        res = max(identity_residual(sol, body, p, t, h, M, obstacle) for p in np.atleast_2d(points))
        order = math.nan
        if prev is not None and prev[1] > 0 and res > 0:
            order = math.log(prev[1] / res) / math.log(prev[0] / h)
        rows.append((float(h), res, order))
        prev = (h, res)
    return rows


def fitted_order(rows) -> float:
    """Least-squares slope of log residual vs log h; inf when all residuals vanish."""
    h = np.array([r[0] for r in rows])
    res = np.array([r[1] for r in rows])
    if np.all(res == 0):
        return math.inf
    ok = res > 0
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(h[ok]), np.log(res[ok]), 1)[0])


# ------------------------------------------------------------------- flux


@dataclass
class MantleHistory:
    """Per-step samples of the band integral (1/h)∫_band flux density dx."""

    times: list
    band: list
    counts: list

    @classmethod
    def empty(cls) -> MantleHistory:
        return cls([], [], [])

    def append(self, t: float, value: float, count: int) -> None:
        if self.times and t <= self.times[-1]:
            raise ValueError("mantle history times must increase")
        self.times.append(float(t))
        self.band.append(float(value))
        self.counts.append(int(count))


@dataclass(frozen=True)
class FluxRecord:
    a: float
    b: float
    value: float
    samples: int


def flux_accumulate(history: MantleHistory, a: float, b: float) -> FluxRecord:
    """√2 ∫_a^b (band integral) dt by the trapezoid rule.

    Window ends that fall between samples are handled by linear
    interpolation, so the result is additive over adjacent windows.
    """
    t = np.asarray(history.times, float)
    v = np.asarray(history.band, float)
    if b < a:
        raise ValueError("flux window must satisfy a <= b")
    if t.size == 0 or a < t[0] - 1e-12 or b > t[-1] + 1e-12:
        raise DomainError(f"mantle history does not cover [{a}, {b}]")
    inner = (t > a) & (t < b)
    tt = np.concatenate([[a], t[inner], [b]])
    vv = np.concatenate([[np.interp(a, t, v)], v[inner], [np.interp(b, t, v)]])
    val = SQRT2 * float(np.sum(0.5 * (vv[1:] + vv[:-1]) * np.diff(tt)))
    sel = (t >= a) & (t <= b)
    return FluxRecord(float(a), float(b), max(val, 0.0), int(np.asarray(history.counts)[sel].sum()))
