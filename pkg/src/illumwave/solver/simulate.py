"""Leapfrog evolution of □u = −u⁵ (or □u = 0) outside the obstacle."""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__, kernels
from ..errors import ConfigError, InstabilityError, UncertifiedScene
from ..geometry.obstacles import NoObstacle
from ..geometry.scene import Scene, certify, load_json, parse_scene
from ..multiplier import SQRT2, MantleHistory
from ..series import DecaySeries, cumulative_trapezoid
from .grid import Grid, build_grid

CHECKPOINT_MAGIC = b"ILWV"
_HEADER = struct.Struct("<4s3Idd")


@dataclass(frozen=True)
class Bump:
    center: tuple
    radius: float
    amplitude: float

    def __post_init__(self):
        c = tuple(float(v) for v in self.center)
        if len(c) != 3:
            raise ConfigError("bump.center: expected 3 numbers")
        object.__setattr__(self, "center", c)
        if not self.radius > 0:
            raise ConfigError("bump.radius must be positive")


@dataclass
class SolverConfig:
    scene: Scene
    h: float
    T_final: float
    bump: Bump
    cfl: float = 0.5
    nonlinear: bool = True
    M: float | None = None
    cadence: float = 0.25
    L: float | None = None
    outer: str = "guard"
    checkpoints: tuple = ()
    beta: float = 0.5

    def __post_init__(self):
        self.validate()

    @property
    def dt(self) -> float:
        return self.cfl * self.h

    @property
    def steps(self) -> int:
        return int(round(self.T_final / self.dt))

    @property
    def M_eff(self) -> float:
        return float(self.scene.body.rho2M if self.M is None else self.M)

    @property
    def support(self) -> float:
        return float(np.linalg.norm(np.asarray(self.bump.center) - self.scene.body.center) + self.bump.radius)

    def guard_L(self) -> float:
        return self.support + self.T_final + 3.0 * self.h

    def validate(self) -> None:
        if not self.h > 0:
            raise ConfigError("h must be positive")
        if not 0 < self.cfl <= 0.5:
            raise ConfigError(f"cfl must be in (0, 0.5], got {self.cfl}")
        if not self.T_final >= 0:
            raise ConfigError("T_final must be non-negative")
        if abs(self.steps * self.dt - self.T_final) > 1e-9 * max(1.0, self.T_final):
            raise ConfigError("T_final must be an integer number of steps cfl*h")
        if not self.cadence > 0:
            raise ConfigError("cadence must be positive")
        if self.outer not in ("guard", "wall"):
            raise ConfigError("outer must be 'guard' or 'wall'")
        if not 0 < self.beta < 1:
            raise ConfigError("beta must lie in (0, 1)")
        rho2M = self.scene.body.rho2M
        if self.M_eff < rho2M:
            raise ConfigError(f"M = {self.M_eff} must be at least rho2M = {rho2M}")
        obst = self.scene.obstacle
        if self.bump.amplitude != 0 and not isinstance(obst, NoObstacle):
            d = float(obst.sdf(np.asarray(self.bump.center)))
            if d <= self.bump.radius:
                raise ConfigError(
                    f"bump (center {self.bump.center}, radius {self.bump.radius}) overlaps the obstacle closure"
                )
        if self.outer == "guard":
            if self.L is not None and self.L < self.support + self.T_final + 2.0 * self.h:
                raise ConfigError(
                    f"L = {self.L} violates the propagation guard L >= support + T + 2h = "
                    f"{self.support + self.T_final + 2.0 * self.h:.6g}"
                )
        elif self.L is None:
            raise ConfigError("outer = 'wall' needs an explicit L")

    def box_L(self) -> float:
        if self.L is not None:
            return float(self.L)
        return self.guard_L()

    def to_dict(self) -> dict:
        return {
            "scene": self.scene.to_dict(),
            "h": self.h,
            "cfl": self.cfl,
            "T_final": self.T_final,
            "nonlinear": self.nonlinear,
            "bump": {"center": list(self.bump.center), "radius": self.bump.radius, "amplitude": self.bump.amplitude},
            "M": self.M_eff,
            "cadence": self.cadence,
            "L": self.L,
            "outer": self.outer,
            "checkpoints": list(self.checkpoints),
            "beta": self.beta,
        }

    def digest(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    @classmethod
    def from_dict(cls, d: dict, base: Path | None = None) -> SolverConfig:
        if not isinstance(d, dict):
            raise ConfigError("config: expected a JSON object")
        if "scene" not in d:
            raise ConfigError("config: missing key 'scene'")
        sc = d["scene"]
        if isinstance(sc, str):
            p = Path(sc)
            if not p.is_absolute() and base is not None:
                p = base / p
            scene = parse_scene(load_json(p), p.parent)
        else:
            scene = parse_scene(sc, base)
        for key in ("h", "T_final", "bump"):
            if key not in d:
                raise ConfigError(f"config: missing key '{key}'")
        b = d["bump"]
        if not isinstance(b, dict):
            raise ConfigError("config.bump: expected an object")
        for key in ("center", "radius"):
            if key not in b:
                raise ConfigError(f"config.bump: missing key '{key}'")
        known = {"scene", "h", "T_final", "bump", "cfl", "nonlinear", "M", "cadence", "L", "outer", "checkpoints", "beta"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"config: unknown keys {sorted(extra)}")
        try:
            return cls(
                scene=scene,
                h=float(d["h"]),
                T_final=float(d["T_final"]),
                bump=Bump(tuple(b["center"]), float(b["radius"]), float(b.get("amplitude", 1.0))),
                cfl=float(d.get("cfl", 0.5)),
                nonlinear=bool(d.get("nonlinear", True)),
                M=None if d.get("M") is None else float(d["M"]),
                cadence=float(d.get("cadence", 0.25)),
                L=None if d.get("L") is None else float(d["L"]),
                outer=str(d.get("outer", "guard")),
                checkpoints=tuple(float(v) for v in d.get("checkpoints", ())),
                beta=float(d.get("beta", 0.5)),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"config: {exc}") from exc


@dataclass
class WaveState:
    u_prev: np.ndarray
    u_curr: np.ndarray
    t: float
    dt: float
    n: int = 0

    def velocity(self) -> np.ndarray:
        """∂t u at the half step t − dt/2."""
        return (self.u_curr - self.u_prev) / self.dt


def make_grid(config: SolverConfig) -> Grid:
    limit = config.T_final + config.M_eff + config.h
    return build_grid(config.scene.body, config.scene.obstacle, config.h, config.box_L(), limit)


def bump_field(config: SolverConfig, grid: Grid) -> np.ndarray:
    u = np.zeros(grid.shape)
    b = config.bump
    if b.amplitude == 0:
        return u
    a = grid.axis()
    c = np.asarray(b.center) - grid.center
    lo = [max(0, int(math.floor((c[k] - b.radius) / grid.h)) + grid.m) for k in range(3)]
    hi = [min(grid.n, int(math.ceil((c[k] + b.radius) / grid.h)) + grid.m + 1) for k in range(3)]
    X, Y, Z = np.meshgrid(a[lo[0] : hi[0]] - c[0], a[lo[1] : hi[1]] - c[1], a[lo[2] : hi[2]] - c[2], indexing="ij")
    q = 1.0 - (X * X + Y * Y + Z * Z) / (b.radius * b.radius)
    u[lo[0] : hi[0], lo[1] : hi[1], lo[2] : hi[2]] = np.where(q > 0, b.amplitude * q**4, 0.0)
    u *= grid.active
    return u


def init_state(config: SolverConfig, grid: Grid) -> WaveState:
    """u⁰ = bump, u⁻¹ = u⁰ + (dt²/2)(Δ_h u⁰ − u⁰⁵): zero initial velocity."""
    u0 = bump_field(config, grid)
    prev = np.zeros_like(u0)
    kernels.leapfrog_step(u0, u0, prev, grid.active, config.dt / math.sqrt(2.0), grid.h, config.nonlinear)
    return WaveState(prev, u0, 0.0, config.dt, 0)


def _advance(prev, curr, out, grid: Grid, config_dt, nonlinear):
    bad = kernels.leapfrog_step(prev, curr, out, grid.active, config_dt, grid.h, nonlinear)
    if bad >= 0:
        node = tuple(int(v) for v in np.unravel_index(bad, grid.shape))
        x = grid.node(*node)
        raise InstabilityError(f"non-finite value at node {node} (x = {x.tolist()})", node)


def step(state: WaveState, grid: Grid, config: SolverConfig) -> WaveState:
    out = np.zeros_like(state.u_curr)
    _advance(state.u_prev, state.u_curr, out, grid, state.dt, config.nonlinear)
    return WaveState(state.u_curr, out, state.t + state.dt, state.dt, state.n + 1)


def total_energy(state: WaveState, grid: Grid, nonlinear: bool = True) -> float:
    """Leapfrog energy at the half step between the two stored levels."""
    return kernels.half_step_energy(state.u_prev, state.u_curr, grid.active, state.dt, grid.h, nonlinear)


def _table_sum(grid, prev, curr, nxt, lo, hi, dt):
    dens = kernels.table_densities(prev, curr, nxt, grid.table_idx, grid.table_sr, grid.table_nu, lo, hi, grid.h, dt)
    return kernels.ordered_sum(dens, axis=0) if len(dens) else np.zeros(kernels.N_DENS)


def _regions(grid, prev, curr, nxt, t, M, eps, dt):
    h3 = grid.h**3
    level = t + M
    if level > grid.table_limit + 1e-12:
        raise ValueError(f"coordinate table covers s+rho2M <= {grid.table_limit}, need {level}")
    k_d = grid.span(level)
    k_phi = grid.span(eps * t + M)
    k_all = len(grid.table_idx)
    inner = _table_sum(grid, prev, curr, nxt, 0, k_phi, dt)
    mid = _table_sum(grid, prev, curr, nxt, k_phi, k_d, dt) if k_d >= k_phi else None
    if mid is None:
        raise ValueError("phi region must lie inside D(t)")
    outer = _table_sum(grid, prev, curr, nxt, k_d, k_all, dt)
    sums = kernels.grid_sums(prev, curr, nxt, grid.active, grid.h, dt)
    d_part = inner + mid
    beyond = max(sums[3] - (d_part[1] + outer[1]), 0.0)
    return {
        "L6_D_t": h3 * d_part[0],
        "ext_cone_energy": h3 * (outer[1] + beyond),
        "phi_tan": h3 * inner[2],
        "phi_rad": h3 * inner[3],
        "phi_t": h3 * (inner[2] + inner[3]),
        "l6_omega": h3 * sums[0],
        "l10": (h3 * sums[1]) ** 0.1,
        "l12": (h3 * sums[2]) ** (1.0 / 12.0),
        "energy_nodal": h3 * sums[3],
    }


def region_integrals(state: WaveState, grid: Grid, T: float, M: float, eps: float = 1.0, nonlinear: bool = True, nxt=None) -> dict:
    """Integrals at t = state.t over D(T) = {s+ρ2M ≤ T+M}, its complement and Ω.

    ``nxt`` is u at t+dt (computed by one step when omitted); u_t is the
    centered difference of the neighbouring levels.
    """
    if nxt is None:
        nxt = np.zeros_like(state.u_curr)
        _advance(state.u_prev, state.u_curr, nxt, grid, state.dt, nonlinear)
    out = _regions(grid, state.u_prev, state.u_curr, nxt, T, M, eps, state.dt)
    if T != state.t:
        out["note"] = "regions at level T+M, fields at state.t"
    return out


def band_integral(grid: Grid, prev, curr, nxt, t: float, M: float, dt: float) -> tuple[float, int]:
    """(1/h)∫ over |s+ρ2M − (t+M)| ≤ h/2 of the flux density, node count."""
    lo, hi = grid.band(t + M)
    if hi <= lo:
        return 0.0, 0
    dens = kernels.table_densities(prev, curr, nxt, grid.table_idx, grid.table_sr, grid.table_nu, lo, hi, grid.h, dt)
    return float(grid.h**2 * kernels.ordered_sum(dens[:, 4])), hi - lo


# ------------------------------------------------------------ checkpoints


def write_checkpoint(path, state: WaveState, h: float) -> None:
    a = np.ascontiguousarray(state.u_prev, dtype="<f8")
    b = np.ascontiguousarray(state.u_curr, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(CHECKPOINT_MAGIC, *a.shape, float(h), float(state.t)))
        fh.write(a.tobytes())
        fh.write(b.tobytes())


def read_checkpoint(path) -> tuple[np.ndarray, np.ndarray, float, float]:
    """(u(t−dt), u(t), h, t) from a checkpoint file."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated checkpoint header")
    magic, nx, ny, nz, h, t = _HEADER.unpack_from(data)
    if magic != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: bad checkpoint magic {magic!r}")
    count = nx * ny * nz
    if len(data) != _HEADER.size + 16 * count:
        raise ValueError(f"{path}: payload size does not match dims {nx}x{ny}x{nz}")
    a = np.frombuffer(data, "<f8", count, _HEADER.size).reshape(nx, ny, nz).copy()
    b = np.frombuffer(data, "<f8", count, _HEADER.size + 8 * count).reshape(nx, ny, nz).copy()
    return a, b, h, t


# ------------------------------------------------------------------- runs


@dataclass
class RunResult:
    series: DecaySeries
    grid: Grid
    state: WaveState
    history: MantleHistory
    checkpoints: dict = field(default_factory=dict)


def scene_certificate(config: SolverConfig):
    """Certificate for the run's scene; a0 is sampled over the simulation box."""
    if isinstance(config.scene.obstacle, NoObstacle):
        return None
    if config.scene.sampling.get("a0_half_width") is None:
        return certify(config.scene, a0_half_width=config.box_L())
    return certify(config.scene)


def _geometry_meta(config: SolverConfig, cert) -> dict:
    body = config.scene.body
    if cert is None:
        eta0 = 0.0 if body.kind == "sphere" else math.nan
        meta = {"certified": False, "eta0": eta0, "a0": math.nan, "cond8_margin": math.nan}
    else:
        meta = {
            "certified": bool(cert.passed),
            "eta0": float(cert.eta0),
            "a0": float(cert.a0),
            "cond8_margin": float(cert.cond8_margin),
            "min_s0_plus_rho1": float(cert.min_s0_plus_rho1),
        }
    e = meta["eta0"]
    meta["epsilon"] = 1.0 - math.sqrt(e) if math.isfinite(e) and 0 <= e < 1 else 1.0
    meta["M"] = config.M_eff
    meta["rho2M"] = body.rho2M
    return meta


def run_simulation(
    config: SolverConfig,
    certificate=None,
    checkpoint_dir=None,
    keep_result: bool = False,
    require_certificate: bool = True,
):
    """Evolve to T_final, recording the decay diagnostics at the cadence.

    Returns the DecaySeries (or a RunResult when ``keep_result``). An
    instability stops the run; the partial series is returned with
    ``meta['aborted']`` set.
    """
    if certificate is None:
        certificate = scene_certificate(config)
    if certificate is not None and require_certificate and not certificate.passed:
        raise UncertifiedScene("scene is not certified: " + "; ".join(certificate.reasons))
    geo = _geometry_meta(config, certificate)
    eps = geo["epsilon"]
    M = config.M_eff
    grid = make_grid(config)
    state = init_state(config, grid)
    dt, N = config.dt, config.steps
    every = max(1, int(round(config.cadence / dt)))
    ck_steps = {int(round(tc / dt)): tc for tc in config.checkpoints}
    if checkpoint_dir is not None:
        Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)

    prev, curr = state.u_prev, state.u_curr
    nxt = np.zeros_like(curr)
    history = MantleHistory.empty()
    rows: dict[str, list] = {}
    flux = 0.0
    last_band = None
    aborted = None
    written = {}
    for n in range(N + 1):
        t = n * dt
        try:
            _advance(prev, curr, nxt, grid, dt, config.nonlinear)
        except InstabilityError as exc:
            aborted = str(exc)
            break
        band, count = band_integral(grid, prev, curr, nxt, t, M, dt)
        history.append(t, band, count)
        if last_band is not None:
            flux += SQRT2 * dt * 0.5 * (last_band + band)
        last_band = band
        if n % every == 0 or n == N:
            rec = _regions(grid, prev, curr, nxt, t, M, eps, dt)
            e_lo = kernels.half_step_energy(prev, curr, grid.active, dt, grid.h, config.nonlinear)
            e_hi = kernels.half_step_energy(curr, nxt, grid.active, dt, grid.h, config.nonlinear)
            rec["E"] = 0.5 * (e_lo + e_hi)
            rec["flux_0_t"] = flux
            rec["t"] = t
            for k, v in rec.items():
                rows.setdefault(k, []).append(v)
        if n in ck_steps and checkpoint_dir is not None:
            p = Path(checkpoint_dir) / f"checkpoint_t{ck_steps[n]:g}.bin"
            write_checkpoint(p, WaveState(prev, curr, t, dt, n), grid.h)
            written[ck_steps[n]] = str(p)
        prev, curr, nxt = curr, nxt, prev

    data = {k: np.asarray(v, float) for k, v in rows.items() if k != "note"}
    if data:
        t_rec = data["t"]
        data["l5l10_partial"] = cumulative_trapezoid(data["l10"] ** 5, t_rec) ** 0.2
        data["l4l12_partial"] = cumulative_trapezoid(data["l12"] ** 4, t_rec) ** 0.25
    else:
        data = {"t": np.zeros(0)}
    meta = {
        "config": config.to_dict(),
        "config_hash": config.digest(),
        "geometry": geo,
        "grid": {"n": grid.n, "L": grid.L, "h": grid.h, **grid.counts(), "table": int(len(grid.table_idx)), "uncovered": grid.uncovered},
        "dt": dt,
        "steps": N,
        "record_every": every,
        "aborted": aborted,
        "version": __version__,
    }
    series = DecaySeries(data, meta)
    if not keep_result:
        return series
    if aborted is None:
        final = WaveState(nxt, prev, N * dt, dt, N)  # undo the last rotation
    else:
        final = WaveState(prev, curr, n * dt, dt, n)
    return RunResult(series, grid, final, history, written)
