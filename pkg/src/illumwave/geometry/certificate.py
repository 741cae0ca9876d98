"""Sample-based certificates for illumination of an obstacle by a convex body."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bodies import IlluminatingBody, _frame_theta_phi, invert
from .obstacles import Obstacle

RECOMMENDED_SAMPLES = 10_000
REFINE_RTOL = 0.01
MAX_LISTED_FAILURES = 50


@dataclass
class IlluminationCertificate:
    x0: np.ndarray
    x1: np.ndarray
    s0: np.ndarray
    rho1: np.ndarray
    rho2: np.ndarray
    found: np.ndarray
    contained: np.ndarray
    nu_dot_n: np.ndarray
    rho2M: float
    area: float
    min_s0_plus_rho1: float
    cond8_margin: float
    eta0: float
    a0: float
    a0_uncovered: int
    min_nu_dot_n: float
    refined: dict
    conditions: dict
    reasons: list = field(default_factory=list)
    sampling: dict = field(default_factory=dict)

    @property
    def n_samples(self) -> int:
        return int(len(self.s0))

    @property
    def passed(self) -> bool:
        return all(self.conditions.values())

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else "FAIL"

    @property
    def epsilon(self) -> float:
        return 1.0 - math.sqrt(self.eta0) if 0.0 <= self.eta0 < 1.0 else float("nan")

    def failures(self, limit: int = MAX_LISTED_FAILURES) -> list[dict]:
        bad = ~self.found | ~self.contained | (self.s0 + self.rho1 <= 0)
        bad |= self.s0 + self.rho1 - 2.0 * (self.rho2M - self.rho1) <= 0
        out = []
        for k in np.flatnonzero(bad)[:limit]:
            why = []
            if not self.found[k]:
                why.append("no ray")
            else:
                if not self.contained[k]:
                    why.append("ray re-enters V")
                if self.s0[k] + self.rho1[k] <= 0:
                    why.append("s0+rho1 <= 0")
                if self.s0[k] + self.rho1[k] - 2.0 * (self.rho2M - self.rho1[k]) <= 0:
                    why.append("cond8 violated")
            out.append(
                {
                    "index": int(k),
                    "x0": [float(v) for v in self.x0[k]],
                    "x1": [float(v) for v in self.x1[k]],
                    "s0": float(self.s0[k]),
                    "nu_dot_n": float(self.nu_dot_n[k]),
                    "reason": ", ".join(why),
                }
            )
        return out

    def to_dict(self) -> dict:
        def num(v):
            v = float(v)
            return v if math.isfinite(v) else str(v)

        return {
            "verdict": self.verdict,
            "conditions": {k: bool(v) for k, v in self.conditions.items()},
            "reasons": list(self.reasons),
            "aggregates": {
                "min_s0_plus_rho1": num(self.min_s0_plus_rho1),
                "cond8_margin": num(self.cond8_margin),
                "eta0": num(self.eta0),
                "epsilon": num(self.epsilon),
                "a0": num(self.a0),
                "a0_uncovered": int(self.a0_uncovered),
                "min_nu_dot_n": num(self.min_nu_dot_n),
                "min_s0": num(np.min(self.s0[self.found])) if self.found.any() else None,
                "max_s0": num(np.max(self.s0[self.found])) if self.found.any() else None,
                "rho2M": num(self.rho2M),
            },
            "refined": {k: num(v) for k, v in self.refined.items()},
            "sampling": dict(self.sampling),
            "failures": self.failures(),
        }


def _boundary_aggregates(body: IlluminatingBody, x0):
    coords, status = invert(body, x0)
    found = status == 1
    th, ph = body.theta_phi(coords.sigma1, coords.sigma2)
    frame = _frame_theta_phi(body, th, ph)
    s0 = coords.s
    rho1, rho2 = frame.rho1, frame.rho2
    r2m = body.rho2M
    a1 = s0 + rho1
    a2 = s0 + rho2
    if found.any():
        f = found
        min_a1 = float(np.min(a1[f]))
        cond8 = float(np.min((a1 - 2.0 * (r2m - rho1))[f]))
        if np.all(a1[f] > 0):
            eta0 = float(np.max(((r2m - rho1) / a1 + (r2m - rho2) / a2)[f]))
        else:
            eta0 = math.inf
    else:
        min_a1 = cond8 = -math.inf
        eta0 = math.inf
    return coords, found, frame, (min_a1, cond8, eta0)


def _march(obstacle: Obstacle, x0, nu, step: float, tol: float):
    """True where the ray x0 + τν, τ > 0 stays outside V (sphere tracing)."""
    n = len(x0)
    contained = np.ones(n, bool)
    if n == 0:
        return contained
    cV, rV = obstacle.bounds()
    tau = np.full(n, step)
    live = np.arange(n)
    max_iter = int(math.ceil(4.0 * (rV + float(np.max(np.linalg.norm(x0 - cV, axis=1)))) / step)) + 10
    for _ in range(max_iter):
        if live.size == 0:
            break
        p = x0[live] + tau[live, None] * nu[live]
        d = obstacle.sdf(p)
        hit = d < -tol
        contained[live[hit]] = False
        rel = p - cV
        gone = (np.einsum("ij,ij->i", rel, rel) > rV * rV) & (np.einsum("ij,ij->i", rel, nu[live]) >= 0)
        tau[live] += np.maximum(d, step)
        live = live[~hit & ~gone]
    return contained


def _a0(obstacle, body, n, half_width, rng):
    x = body.center + rng.uniform(-half_width, half_width, size=(n, 3))
    x = x[~obstacle.contains(x)]
    coords, status = invert(body, x)
    ok = status == 1
    r = np.linalg.norm(x - body.center, axis=1)
    ok &= r > 0
    if not ok.any():
        return math.nan, int(np.sum(~ok))
    ratio = (coords.s[ok] + body.rho2M) / r[ok]
    return float(np.min(ratio)), int(np.sum(~ok))


def illuminate(
    obstacle: Obstacle,
    body: IlluminatingBody,
    samples: int = RECOMMENDED_SAMPLES,
    ray_step: float = 0.01,
    seed: int = 0,
    a0_samples: int = 20_000,
    a0_half_width: float | None = None,
    refine: bool = True,
) -> IlluminationCertificate:
    """Certify that ``body`` illuminates ``obstacle`` from the exterior.

    Boundary samples are pulled back to the body along normal rays
    (x0 = s0·ν(x1) + x1), each ray {s ≥ s0} is marched outward, and the
    aggregates are recomputed on an independent sample twice as dense.
    """
    rng = np.random.default_rng(seed)
    samples = int(samples)
    if samples < 1:
        raise ValueError("need at least one boundary sample")
    x0, normals, area = obstacle.sample_surface(samples, rng)
    coords, found, frame, (min_a1, cond8, eta0) = _boundary_aggregates(body, x0)
    nu = frame.nu
    _, rV = obstacle.bounds()
    contained = np.zeros(len(x0), bool)
    contained[found] = _march(obstacle, x0[found], nu[found], ray_step, 1e-6 * max(rV, 1e-12))
    nu_dot_n = np.einsum("ij,ij->i", nu, normals)

    refined = {}
    resolved = True
    if refine:
        x0r, _, _ = obstacle.sample_surface(2 * samples, rng)
        _, _, _, agg_r = _boundary_aggregates(body, x0r)
        names = ("min_s0_plus_rho1", "cond8_margin", "eta0")
        for name, v, vr in zip(names, (min_a1, cond8, eta0), agg_r):
            refined[name] = vr
            if not (math.isfinite(v) and math.isfinite(vr)):
                resolved &= v == vr
                continue
            scale = max(abs(v), abs(vr))
            if abs(v - vr) > REFINE_RTOL * scale + 1e-12 * body.rho2M:
                resolved = False

    if a0_half_width is None:
        cV, rV = obstacle.bounds()
        a0_half_width = 2.0 * max(body.a, body.c, rV + float(np.linalg.norm(cV - body.center)))
    a0, uncovered = _a0(obstacle, body, int(a0_samples), float(a0_half_width), rng)

    conditions = {
        "rays_found": bool(found.all()),
        "rays_contained": bool(contained[found].all()),
        "jacobian_positive": bool(min_a1 > 0),
        "cond8": bool(cond8 > 0),
        "resolved": bool(resolved),
    }
    reasons = []
    if not conditions["rays_found"]:
        reasons.append(f"no admissible ray for {int(np.sum(~found))} boundary samples")
    if not conditions["rays_contained"]:
        reasons.append(f"{int(np.sum(found & ~contained))} rays re-enter the obstacle")
    if not conditions["jacobian_positive"]:
        reasons.append("min(s0+rho1) <= 0")
    if not conditions["cond8"]:
        reasons.append(f"cond8 margin {cond8:.6g} <= 0")
    if not conditions["resolved"]:
        reasons.append("under-resolved: 2x refinement moved an aggregate by more than 1%")

    cert = IlluminationCertificate(
        x0=x0,
        x1=frame.X0,
        s0=coords.s,
        rho1=frame.rho1,
        rho2=frame.rho2,
        found=found,
        contained=contained,
        nu_dot_n=nu_dot_n,
        rho2M=body.rho2M,
        area=float(area),
        min_s0_plus_rho1=min_a1,
        cond8_margin=cond8,
        eta0=eta0,
        a0=a0,
        a0_uncovered=uncovered,
        min_nu_dot_n=float(np.min(nu_dot_n[found])) if found.any() else math.nan,
        refined=refined,
        conditions=conditions,
        reasons=reasons,
        sampling={
            "surface_samples": samples,
            "refined_samples": 2 * samples if refine else 0,
            "density_per_area": samples / area if area > 0 else math.inf,
            "ray_march_step": ray_step,
            "seed": seed,
            "a0_samples": int(a0_samples),
            "a0_half_width": float(a0_half_width),
            "below_recommended_density": samples < RECOMMENDED_SAMPLES,
        },
    )
    return cert
