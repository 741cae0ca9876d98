"""Decay functionals and finite-horizon audits of the decay estimates on run output."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from . import kernels
from .errors import AuditRefused, ConfigError, DomainError
from .series import DecaySeries, cumulative_trapezoid, fmt

CONE_TOL = 0.05
AUDIT_TOL = 0.05
STABILITY_TOL = 0.20
# a fitted constant whose largest contribution is below this fraction of the
# left side does not affect the inequality and is left out of stability checks
ACTIVE_FRACTION = 0.01
# certificates of umbilic configurations report eta0 at round-off level
ETA0_FLOOR = 1e-12

CONSTANT_NAMES = ("c1", "C0", "C2", "c2", "c3")


@dataclass
class InequalityAudit:
    name: str
    t: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    tolerance: float
    scale: float
    constants: dict = field(default_factory=dict)
    fit_method: str = "none"
    notes: list = field(default_factory=list)
    features: np.ndarray | None = None

    @property
    def margin(self) -> np.ndarray:
        """(rhs − lhs)/scale; zero where both sides vanish."""
        d = self.rhs - self.lhs
        if self.scale > 0:
            return d / self.scale
        return np.where(d >= 0, 0.0, -np.inf)

    @property
    def min_margin(self) -> float:
        m = self.margin
        return float(np.min(m)) if m.size else 0.0

    @property
    def passed(self) -> bool:
        return bool(np.all(self.margin >= -self.tolerance))

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else "FAIL"

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "verdict": self.verdict,
            "tolerance": self.tolerance,
            "scale": self.scale,
            "min_margin": _finite(self.min_margin),
            "constants": {k: float(v) for k, v in self.constants.items()},
            "fit_method": self.fit_method,
            "notes": list(self.notes),
            "t": self.t.tolist(),
            "lhs": self.lhs.tolist(),
            "rhs": [_finite(v) for v in self.rhs],
            "margin": [_finite(v) for v in self.margin],
        }


def _finite(v):
    v = float(v)
    return v if math.isfinite(v) else str(v)


def _need(series: DecaySeries, *cols):
    missing = [c for c in cols if c not in series.data]
    if missing:
        raise ConfigError(f"series lacks column(s) {missing}")
    if len(series) == 0:
        raise ConfigError("series has no records")


def _energy(series: DecaySeries) -> float:
    return float(series["E"][0])


def eta0_of(series: DecaySeries) -> float:
    geo = series.meta.get("geometry", {})
    v = geo.get("eta0", math.nan)
    return float(v) if not isinstance(v, str) else float(v)


# --------------------------------------------------------- exterior cone


def exterior_cone_check(series: DecaySeries, tol: float = CONE_TOL) -> InequalityAudit:
    """ext(T) + flux(0,T)/√2 ≤ ext(0), with slack tol·E; no constants."""
    _need(series, "t", "E", "ext_cone_energy", "flux_0_t")
    if series.t[0] != 0.0:
        raise ConfigError("exterior-cone check needs the state at t = 0")
    ext = series["ext_cone_energy"]
    lhs = ext + series["flux_0_t"] / math.sqrt(2.0)
    rhs = np.full_like(lhs, ext[0])
    E = _energy(series)
    return InequalityAudit("exterior_cone", series.t.copy(), lhs, rhs, tol, E)


# ------------------------------------------------------ decay functionals


def decay_functionals(series: DecaySeries) -> tuple[np.ndarray, np.ndarray]:
    """φ at every record and the running mean ψ(T) = (1/T)∫₀ᵀφ."""
    _need(series, "t", "phi_t")
    t = series.t
    phi = series["phi_t"].copy()
    integral = cumulative_trapezoid(phi, t)
    psi = np.empty_like(phi)
    pos = t > 0
    psi[pos] = integral[pos] / t[pos]
    psi[~pos] = phi[~pos]
    return phi, psi


def psi_at(series: DecaySeries, T: float) -> float:
    t = series.t
    if T < t[0] or T > t[-1]:
        raise DomainError(f"T = {T} outside the recorded range [{t[0]}, {t[-1]}]")
    _, psi = decay_functionals(series)
    return float(np.interp(T, t, psi))


# ------------------------------------------------- differential inequality


def _features(series: DecaySeries, T: np.ndarray, beta: float) -> np.ndarray:
    """Columns multiplying (c1, C0, C2, c2, c3) on the right side."""
    E = _energy(series)
    flux = np.interp(T, series.t, series["flux_0_t"])
    return np.column_stack(
        [
            2.0 * beta * E * np.ones_like(T),
            E / T,
            E * np.log1p(T) / T,
            2.0 * flux / T,
            2.0 * flux,
        ]
    )


def _fit(F: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, str]:
    """Smallest nonnegative x with F x ≥ b, minimizing the total slack Σ(Fx − b)."""
    if np.all(b <= 0):
        return np.zeros(F.shape[1]), "trivial"
    scale = np.maximum(F.max(axis=0), 1e-300)
    G = F / scale
    res = linprog(G.sum(axis=0), A_ub=-G, b_ub=-b, bounds=[(0, None)] * F.shape[1], method="highs")
    if res.status != 0:
        raise RuntimeError(f"constant fit failed: {res.message}")
    return res.x / scale, "linprog-highs: min total slack"


@dataclass
class DecayAudit:
    inequality: InequalityAudit
    gronwall: InequalityAudit
    eta0: float
    beta: float
    vacuous_gronwall: bool

    def to_dict(self) -> dict:
        return {
            "eta0": self.eta0,
            "eta": math.sqrt(self.eta0),
            "beta": self.beta,
            "differential_inequality": self.inequality.to_dict(),
            "gronwall": {**self.gronwall.to_dict(), "vacuous": self.vacuous_gronwall},
        }


def inequality_audit(series: DecaySeries, eta0: float | None = None, beta: float | None = None, t_min: float = 1.0, tol: float = AUDIT_TOL) -> DecayAudit:
    """Fit the geometric constants of the differential inequality and run the Gronwall step.

    Left side: √η₀·φ(T) + ∫_{D(T)} u⁶/3. Right side: 2c₁βE + (C₀E + C₂E ln(1+T)
    + 2(c₂+c₃T)flux(0,T))/T + η₀ψ(T). Records with T ≥ t_min enter the fit.
    """
    _need(series, "t", "E", "phi_t", "L6_D_t", "flux_0_t")
    if eta0 is None:
        eta0 = eta0_of(series)
    if not math.isfinite(eta0):
        raise AuditRefused("no eta0 available: certify the scene (geometry-check) before auditing")
    if eta0 >= 1:
        raise AuditRefused(f"eta0 = {eta0:.6g} >= 1: the certificate does not support the audit")
    eta0 = float(eta0) if eta0 > ETA0_FLOOR else 0.0
    if beta is None:
        beta = float(series.meta.get("config", {}).get("beta", 0.5))
    if series.t[-1] < t_min:
        raise DomainError(f"series ends at {series.t[-1]}, before t_min = {t_min}")
    eta = math.sqrt(eta0)
    phi, psi = decay_functionals(series)
    sel = series.t >= t_min - 1e-12
    T = series.t[sel]
    lhs = eta * phi[sel] + 2.0 * series["L6_D_t"][sel]
    known = eta0 * psi[sel]
    F = _features(series, T, beta)
    x, method = _fit(F, lhs - known)
    rhs_core = F @ x
    rhs = rhs_core + known
    constants = dict(zip(CONSTANT_NAMES, x.tolist()))
    scale = float(max(np.max(np.abs(lhs)), 0.0))
    ineq = InequalityAudit("differential_inequality", T, lhs, rhs, tol, scale, constants, method, features=F)
    ineq.notes.append("c0 and C1 are not separately identifiable and are absorbed into C0")
    contrib = F * x
    ineq.notes.append(
        "active constants: " + ", ".join(n for n, c in zip(CONSTANT_NAMES, contrib.max(axis=0)) if c > ACTIVE_FRACTION * scale)
    )

    # Gronwall: ψ(T) ≤ J(T) + ψ(1)/T^{1−η}, γ = (right side without the ψ term)/η
    psi_sel = psi[sel]
    psi1 = float(np.interp(t_min, series.t, psi))
    vacuous = eta == 0.0
    if vacuous:
        bound = np.full_like(T, np.inf)
    else:
        gamma = rhs_core / eta
        integrand = gamma * T ** (-eta)
        J = T ** (eta - 1.0) * cumulative_trapezoid(integrand, T)
        bound = J + psi1 / T ** (1.0 - eta)
    g_scale = float(np.max(psi_sel)) if psi_sel.size else 0.0
    gron = InequalityAudit("gronwall", T, psi_sel, bound, tol, g_scale, constants, method)
    if vacuous:
        gron.notes.append("eta0 = 0: gamma is unbounded, the bound holds trivially")
    return DecayAudit(ineq, gron, eta0, beta, vacuous)


def fit_stability(a: DecayAudit, b: DecayAudit, tol: float = STABILITY_TOL) -> dict:
    """Compare fitted constants of two resolutions of the same scene.

    A constant is compared when it contributes more than 1% of the left side
    in either fit; the relative difference is taken against the larger value.
    """
    out = {}
    ok = True
    for name in CONSTANT_NAMES:
        va, vb = a.inequality.constants[name], b.inequality.constants[name]
        active = _is_active(a, name) or _is_active(b, name)
        rel = abs(va - vb) / max(abs(va), abs(vb)) if max(abs(va), abs(vb)) > 0 else 0.0
        passed = (not active) or rel <= tol
        ok &= passed
        out[name] = {"coarse": va, "fine": vb, "relative_change": rel, "active": active, "pass": passed}
    return {"pass": ok, "tolerance": tol, "constants": out}


def _is_active(audit: DecayAudit, name: str) -> bool:
    ineq = audit.inequality
    if ineq.features is None or ineq.scale <= 0:
        return False
    col = ineq.features[:, CONSTANT_NAMES.index(name)] * ineq.constants[name]
    return bool(np.max(col) > ACTIVE_FRACTION * ineq.scale)


# ---------------------------------------------------------- L⁶ and norms


def l6_decay_report(series: DecaySeries) -> dict:
    _need(series, "t", "l6_omega")
    t, v = series.t, series["l6_omega"]
    T = t[-1]
    tail = t >= 0.5 * T
    tail_max = float(np.max(v[tail])) if np.any(tail) else float(v[-1])
    ok = (t > 0) & (v > 0)
    slope = float(np.polyfit(np.log(t[ok]), np.log(v[ok]), 1)[0]) if np.count_nonzero(ok) >= 2 else math.nan
    ratio = float(v[-1] / v[0]) if v[0] > 0 else 0.0
    return {
        "t": t.tolist(),
        "l6": v.tolist(),
        "initial": float(v[0]),
        "final": float(v[-1]),
        "ratio_final_initial": ratio,
        "tail_max": tail_max,
        "loglog_slope": _finite(slope),
    }


def spacetime_norms(series: DecaySeries, window: float = 2.0) -> dict:
    """Partial L⁵L¹⁰ and L⁴L¹² norms and their growth over the last ``window``."""
    _need(series, "t", "l10", "l12")
    t = series.t
    p5 = cumulative_trapezoid(series["l10"] ** 5, t) ** 0.2
    p4 = cumulative_trapezoid(series["l12"] ** 4, t) ** 0.25
    t0 = max(t[0], t[-1] - window)
    out = {"t": t.tolist(), "window": [float(t0), float(t[-1])]}
    for name, p in (("l5l10", p5), ("l4l12", p4)):
        total = float(p[-1])
        inc = total - float(np.interp(t0, t, p))
        out[name] = {"partial": p.tolist(), "total": total, "increment": inc, "increment_fraction": inc / total if total > 0 else 0.0}
    return out


# --------------------------------------------------------- linear compare


def linear_compare(checkpoint, config, T_final: float | None = None, cadence: float | None = None) -> DecaySeries:
    """Evolve the nonlinear u and the free wave v from the same checkpoint state.

    Returns a series with columns t and E0 = linear energy of u − v, plus E
    (the nonlinear energy of u) for scale.
    """
    from .solver.grid import build_grid
    from .solver.simulate import read_checkpoint

    prev, curr, h, t0 = read_checkpoint(checkpoint)
    if abs(h - config.h) > 1e-15:
        raise ConfigError(f"checkpoint h = {h} differs from config h = {config.h}")
    grid = build_grid(config.scene.body, config.scene.obstacle, config.h, config.box_L(), 0.0)
    if prev.shape != grid.shape:
        raise ConfigError(f"checkpoint grid {prev.shape} does not match the config grid {grid.shape}")
    T_final = config.T_final if T_final is None else T_final
    cadence = config.cadence if cadence is None else cadence
    dt = config.dt
    steps = int(round((T_final - t0) / dt))
    every = max(1, int(round(cadence / dt)))
    up, uc, un = prev, curr.copy(), np.zeros_like(curr)
    vp, vc, vn = prev.copy(), curr.copy(), np.zeros_like(curr)
    rows = {"t": [], "E0": [], "E": []}
    for n in range(steps + 1):
        kernels.leapfrog_step(up, uc, un, grid.active, dt, h, config.nonlinear)
        kernels.leapfrog_step(vp, vc, vn, grid.active, dt, h, False)
        if n % every == 0 or n == steps:
            w0, w1 = uc - vc, un - vn
            e0 = kernels.half_step_energy(up - vp, w0, grid.active, dt, h, False)
            e1 = kernels.half_step_energy(w0, w1, grid.active, dt, h, False)
            eu = 0.5 * (
                kernels.half_step_energy(up, uc, grid.active, dt, h, config.nonlinear)
                + kernels.half_step_energy(uc, un, grid.active, dt, h, config.nonlinear)
            )
            rows["t"].append(t0 + n * dt)
            rows["E0"].append(0.5 * (e0 + e1))
            rows["E"].append(eu)
        up, uc, un = uc, un, up
        vp, vc, vn = vc, vn, vp
    return DecaySeries(rows, {"t_match": t0, "checkpoint": str(checkpoint)})


# ------------------------------------------------------------ full audit


@dataclass
class AuditReport:
    entries: dict
    prop: DecayAudit | None
    l6: dict
    norms: dict
    refused: str | None = None

    @property
    def passed(self) -> bool:
        if self.refused:
            return False
        return all(e.passed for e in self.entries.values())

    def to_dict(self) -> dict:
        d = {
            "verdict": "PASS" if self.passed else "FAIL",
            "checks": {k: v.to_dict() for k, v in self.entries.items()},
            "l6_decay": self.l6,
            "spacetime_norms": self.norms,
        }
        if self.prop is not None:
            d["decay_inequality"] = self.prop.to_dict()
        if self.refused:
            d["refused"] = self.refused
        return d


def run_audit(series: DecaySeries, eta0: float | None = None, beta: float | None = None) -> AuditReport:
    entries = {"exterior_cone": exterior_cone_check(series)}
    prop = None
    refused = None
    try:
        prop = inequality_audit(series, eta0=eta0, beta=beta)
        entries["differential_inequality"] = prop.inequality
        entries["gronwall"] = prop.gronwall
    except AuditRefused as exc:
        refused = str(exc)
    return AuditReport(entries, prop, l6_decay_report(series), spacetime_norms(series), refused)


def functionals_csv(series: DecaySeries) -> str:
    """Plot-ready table: one row per record, one column per functional."""
    phi, psi = decay_functionals(series)
    ext = exterior_cone_check(series)
    cols = {
        "t": series.t,
        "E": series["E"],
        "phi": phi,
        "psi": psi,
        "L6_D_t": series["L6_D_t"],
        "l6_omega": series["l6_omega"],
        "ext_cone_energy": series["ext_cone_energy"],
        "flux_0_t": series["flux_0_t"],
        "cone_lhs": ext.lhs,
        "cone_rhs": ext.rhs,
        "l5l10_partial": series["l5l10_partial"],
        "l4l12_partial": series["l4l12_partial"],
    }
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(cols))
    for row in zip(*cols.values()):
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()
