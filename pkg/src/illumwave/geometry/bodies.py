"""Convex illuminating bodies and the normal-ray coordinate system they induce.

A body is a sphere or a spheroid of revolution about the z axis through its
center, parametrized by the polar angle θ ∈ [0, π] and the azimuth
φ ∈ [-π, π]. Both parameter curves are lines of curvature, so they serve as
(σ₁, σ₂) directly; the order is picked so that κ₁ ≥ κ₂ everywhere:

* prolate (c > a): σ = (φ, θ), the parallels bend more than the meridians;
* oblate or sphere: σ = (θ, φ).

A point x outside the focal set is written x = s·ν(σ) + X⁰(σ).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..errors import DomainError, InversionError

_PI = math.pi


@dataclass(frozen=True)
class IlluminatingBody:
    """Sphere or spheroid with semi-axes (a, a, c) centered at ``center``."""

    center: np.ndarray
    a: float
    c: float

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float).reshape(3)
        object.__setattr__(self, "center", center)
        if not (self.a > 0 and self.c > 0 and math.isfinite(self.a) and math.isfinite(self.c)):
            raise DomainError(f"semi-axes must be positive, got a={self.a}, c={self.c}")

    @classmethod
    def sphere(cls, radius: float, center=(0.0, 0.0, 0.0)) -> IlluminatingBody:
        return cls(np.asarray(center, float), float(radius), float(radius))

    @classmethod
    def spheroid(cls, radii, center=(0.0, 0.0, 0.0)) -> IlluminatingBody:
        r = [float(v) for v in radii]
        if len(r) != 3 or r[0] != r[1]:
            raise DomainError(f"spheroid radii must be [a, a, c], got {radii}")
        return cls(np.asarray(center, float), r[0], r[2])

    @property
    def kind(self) -> str:
        return "sphere" if self.a == self.c else "spheroid"

    @property
    def prolate(self) -> bool:
        return self.c > self.a

    @property
    def rho2M(self) -> float:
        """Largest principal radius over the surface."""
        return max(self.c * self.c / self.a, self.a * self.a / self.c)

    @property
    def rho_min(self) -> float:
        return min(self.c * self.c / self.a, self.a * self.a / self.c)

    @property
    def patches(self) -> list[int]:
        return [0]

    def patch_bounds(self, patch: int = 0):
        if patch != 0:
            raise DomainError(f"unknown patch {patch}")
        th = (0.0, _PI)
        ph = (-_PI, _PI)
        return (ph, th) if self.prolate else (th, ph)

    def theta_phi(self, sigma1, sigma2):
        if self.prolate:
            return np.asarray(sigma2, float), np.asarray(sigma1, float)
        return np.asarray(sigma1, float), np.asarray(sigma2, float)

    def sigma(self, theta, phi):
        if self.prolate:
            return phi, theta
        return theta, phi

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "center": [float(v) for v in self.center],
            "radii": [self.a, self.a, self.c],
        }


@dataclass(frozen=True)
class IlluminatingCoords:
    """Normal-ray coordinates (s, σ₁, σ₂) on a patch; arrays broadcast."""

    patch: np.ndarray
    s: np.ndarray
    sigma1: np.ndarray
    sigma2: np.ndarray

    @property
    def sigma(self) -> np.ndarray:
        return np.stack([self.sigma1, self.sigma2], axis=-1)

    def take(self, mask) -> IlluminatingCoords:
        return IlluminatingCoords(self.patch[mask], self.s[mask], self.sigma1[mask], self.sigma2[mask])


@dataclass(frozen=True)
class SurfaceFrame:
    """Frame on ∂C: position, normal, curvature-line tangents, curvatures."""

    X0: np.ndarray
    nu: np.ndarray
    X_s1: np.ndarray
    X_s2: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    kappa1: np.ndarray
    kappa2: np.ndarray
    Lambda: np.ndarray

    @property
    def rho1(self) -> np.ndarray:
        return 1.0 / self.kappa1

    @property
    def rho2(self) -> np.ndarray:
        return 1.0 / self.kappa2


def _frame_theta_phi(body: IlluminatingBody, theta, phi) -> SurfaceFrame:
    a, c = body.a, body.c
    theta, phi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
    st, ct = np.sin(theta), np.cos(theta)
    sp, cp = np.sin(phi), np.cos(phi)
    w = np.sqrt(a * a * ct * ct + c * c * st * st)
    X0 = body.center + np.stack([a * st * cp, a * st * sp, c * ct], axis=-1)
    nu = np.stack([c * st * cp, c * st * sp, a * ct], axis=-1) / w[..., None]
    X_th = np.stack([a * ct * cp, a * ct * sp, -c * st], axis=-1)
    X_ph = np.stack([-a * st * sp, a * st * cp, np.zeros_like(st)], axis=-1)
    e_th = X_th / w[..., None]
    e_ph = np.stack([-sp, cp, np.zeros_like(st)], axis=-1)
    k_mer = a * c / w**3
    k_par = c / (a * w)
    lam = w * a * np.abs(st)
    if body.prolate:
        return SurfaceFrame(X0, nu, X_ph, X_th, e_ph, e_th, k_par, k_mer, lam)
    return SurfaceFrame(X0, nu, X_th, X_ph, e_th, e_ph, k_mer, k_par, lam)


def _check_sigma(body: IlluminatingBody, patch, s1, s2, tol=1e-12):
    if np.any(np.asarray(patch) != 0):
        raise DomainError("unknown patch id")
    (l1, h1), (l2, h2) = body.patch_bounds(0)
    s1 = np.asarray(s1, float)
    s2 = np.asarray(s2, float)
    bad = ~((s1 >= l1 - tol) & (s1 <= h1 + tol) & (s2 >= l2 - tol) & (s2 <= h2 + tol))
    if np.any(bad):
        k = int(np.flatnonzero(np.ravel(bad))[0])
        raise DomainError(
            f"parameter ({np.ravel(s1)[k]:.6g}, {np.ravel(s2)[k]:.6g}) outside patch "
            f"[{l1:.6g},{h1:.6g}]x[{l2:.6g},{h2:.6g}]"
        )


def surface_frame(body: IlluminatingBody, patch, sigma) -> SurfaceFrame:
    """Frame at parameters ``sigma`` (..., 2); curvatures in closed form."""
    sigma = np.asarray(sigma, float)
    s1, s2 = sigma[..., 0], sigma[..., 1]
    _check_sigma(body, patch, s1, s2)
    th, ph = body.theta_phi(s1, s2)
    return _frame_theta_phi(body, th, ph)


def frame_at(body: IlluminatingBody, c: IlluminatingCoords) -> SurfaceFrame:
    return surface_frame(body, c.patch, np.stack([c.sigma1, c.sigma2], axis=-1))


def _check_ray(frame: SurfaceFrame, s):
    f1 = frame.kappa1 * s + 1.0
    f2 = frame.kappa2 * s + 1.0
    if np.any(f1 <= 0) or np.any(f2 <= 0):
        raise DomainError("degenerate ray: kappa_i*s + 1 <= 0")
    return f1, f2


def from_illuminating_coords(body: IlluminatingBody, c: IlluminatingCoords) -> np.ndarray:
    frame = frame_at(body, c)
    s = np.asarray(c.s, float)
    _check_ray(frame, s)
    return frame.X0 + s[..., None] * frame.nu


def invert(body: IlluminatingBody, x) -> tuple[IlluminatingCoords, np.ndarray]:
    """Vectorized inversion that reports failures instead of raising.

    Returns the coordinates and a status array: 0 no admissible foot point,
    1 converged, 2 admissible but Newton did not converge.
    """
    x = np.asarray(x, float)
    shape = x.shape[:-1]
    p = (x - body.center).reshape(-1, 3)
    rho = np.hypot(p[:, 0], p[:, 1])
    z = p[:, 2]
    phi = np.arctan2(p[:, 1], p[:, 0])
    if body.a == body.c:
        r = np.sqrt(rho * rho + z * z)
        theta = np.arctan2(rho, z)
        s = r - body.a
        status = np.where(r > 0, 1, 0).astype(np.int8)
    else:
        theta, s, status = kernels.spheroid_foot(rho, z, body.a, body.c)
        flip = theta < 0
        theta = np.abs(theta)
        phi = np.where(flip, np.where(phi > 0, phi - _PI, phi + _PI), phi)
    s1, s2 = body.sigma(theta, phi)
    coords = IlluminatingCoords(
        np.zeros(shape, np.int64), s.reshape(shape), np.reshape(s1, shape), np.reshape(s2, shape)
    )
    return coords, np.asarray(status).reshape(shape)


def to_illuminating_coords(body: IlluminatingBody, x) -> IlluminatingCoords:
    """(s, σ) with x = s·ν(σ) + X⁰(σ); the admissible foot with smallest |s|."""
    coords, status = invert(body, x)
    if np.any(status == 0):
        k = int(np.flatnonzero(np.ravel(status) == 0)[0])
        raise DomainError(f"point {np.reshape(x, (-1, 3))[k]} has no foot point with kappa_i*s+1 > 0")
    if np.any(status == 2):
        k = int(np.flatnonzero(np.ravel(status) == 2)[0])
        raise InversionError(f"foot-point iteration did not converge at {np.reshape(x, (-1, 3))[k]}")
    return coords


def sum_radius(body: IlluminatingBody, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(s + ρ2M, ν, status) at points x, the two fields the solver needs."""
    coords, status = invert(body, x)
    th, ph = body.theta_phi(coords.sigma1, coords.sigma2)
    frame = _frame_theta_phi(body, th, ph)
    return coords.s + body.rho2M, frame.nu, status


def jacobian_metric(body: IlluminatingBody, c: IlluminatingCoords):
    """(|X_σ₁|, |X_σ₂|, J) with J = Λ(κ₁s+1)(κ₂s+1)."""
    frame = frame_at(body, c)
    s = np.asarray(c.s, float)
    f1, f2 = _check_ray(frame, s)
    n1 = f1 * np.linalg.norm(frame.X_s1, axis=-1)
    n2 = f2 * np.linalg.norm(frame.X_s2, axis=-1)
    return n1, n2, frame.Lambda * f1 * f2


def decompose_gradient(grad, frame: SurfaceFrame, c: IlluminatingCoords | None = None):
    """(∂_s f, ∇*₁f, ∇*₂f): components of a Cartesian gradient in (ν, e₁, e₂)."""
    grad = np.asarray(grad, float)
    ds = np.sum(grad * frame.nu, axis=-1)
    d1 = np.sum(grad * frame.e1, axis=-1)
    d2 = np.sum(grad * frame.e2, axis=-1)
    return ds, d1, d2


def region_predicates(body: IlluminatingBody, c: IlluminatingCoords, T, M, h: float = 0.0):
    """(in_D_T, on_mantle): s+ρ2M ≤ T+M and |s+ρ2M − (T+M)| ≤ h/2."""
    sr = np.asarray(c.s, float) + body.rho2M
    level = float(T) + float(M)
    return sr <= level, np.abs(sr - level) <= 0.5 * h
