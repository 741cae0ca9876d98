"""Masked Cartesian grid for the exterior domain."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..geometry.bodies import IlluminatingBody, sum_radius
from ..geometry.obstacles import NoObstacle, Obstacle

EXTERIOR = 1
BOUNDARY_GHOST = 2
INTERIOR = 3
OUTER = 4  # outermost box layer, held at zero

_SLAB_TARGET = 2_000_000


@dataclass
class Grid:
    """Node-centered box [c-L, c+L]³ with spacing h and n = 2m+1 nodes per axis.

    ``table_*`` hold the exterior nodes with s+ρ2M ≤ ``table_limit``, sorted by
    s+ρ2M: flat index, s+ρ2M and ν. Every region the diagnostics need
    ({s+ρ2M ≤ level} and thin bands around a level) is then a contiguous slice.
    """

    h: float
    L: float
    center: np.ndarray
    n: int
    mask: np.ndarray
    active: np.ndarray
    table_idx: np.ndarray
    table_sr: np.ndarray
    table_nu: np.ndarray
    table_limit: float
    rho2M: float
    uncovered: int = 0

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @property
    def m(self) -> int:
        return (self.n - 1) // 2

    def axis(self) -> np.ndarray:
        return self.h * (np.arange(self.n) - self.m)

    def node(self, i, j, k) -> np.ndarray:
        a = self.axis()
        return self.center + np.array([a[i], a[j], a[k]])

    def positions(self, flat) -> np.ndarray:
        i, j, k = np.unravel_index(np.asarray(flat), self.shape)
        a = self.axis()
        return self.center + np.stack([a[i], a[j], a[k]], axis=-1)

    def counts(self) -> dict:
        return {
            "exterior": int(np.sum(self.mask == EXTERIOR)),
            "ghost": int(np.sum(self.mask == BOUNDARY_GHOST)),
            "interior": int(np.sum(self.mask == INTERIOR)),
            "outer": int(np.sum(self.mask == OUTER)),
        }

    def span(self, level: float) -> int:
        """Number of table entries with s+ρ2M ≤ level."""
        return int(np.searchsorted(self.table_sr, level, side="right"))

    def band(self, level: float) -> tuple[int, int]:
        """Table slice with |s+ρ2M − level| ≤ h/2."""
        lo = np.searchsorted(self.table_sr, level - 0.5 * self.h, side="left")
        hi = np.searchsorted(self.table_sr, level + 0.5 * self.h, side="right")
        return int(lo), int(hi)


def _solid_mask(obstacle: Obstacle, center, h, m) -> np.ndarray:
    n = 2 * m + 1
    solid = np.zeros((n, n, n), bool)
    if isinstance(obstacle, NoObstacle):
        return solid
    cV, rV = obstacle.bounds()
    a = h * (np.arange(n) - m)
    lo = [max(0, int(math.floor((cV[k] - rV - center[k]) / h)) + m - 1) for k in range(3)]
    hi = [min(n, int(math.ceil((cV[k] + rV - center[k]) / h)) + m + 2) for k in range(3)]
    if any(l_ >= h_ for l_, h_ in zip(lo, hi)):
        return solid
    X, Y, Z = np.meshgrid(
        center[0] + a[lo[0] : hi[0]], center[1] + a[lo[1] : hi[1]], center[2] + a[lo[2] : hi[2]], indexing="ij"
    )
    pts = np.stack([X, Y, Z], axis=-1)
    solid[lo[0] : hi[0], lo[1] : hi[1], lo[2] : hi[2]] = obstacle.contains(pts)
    return solid


def _build_table(body: IlluminatingBody, center, h, m, active, limit, strict):
    n = 2 * m + 1
    a = h * (np.arange(n) - m)
    # s+ρ2M ≥ |x−c_body| − max(a,c) + ρ2M, which lets most nodes skip inversion
    r_max = limit + max(body.a, body.c) - body.rho2M + h
    off = center - body.center
    idx_parts, sr_parts, nu_parts = [], [], []
    uncovered = 0
    slab = max(1, _SLAB_TARGET // (n * n))
    yz = np.add.outer((a + off[1]) ** 2, (a + off[2]) ** 2)
    for i0 in range(0, n, slab):
        i1 = min(n, i0 + slab)
        r2 = ((a[i0:i1] + off[0]) ** 2)[:, None, None] + yz[None]
        cand = (active[i0:i1] != 0) & (r2 <= r_max * r_max)
        flat = np.flatnonzero(cand)
        if flat.size == 0:
            continue
        ii, jj, kk = np.unravel_index(flat, cand.shape)
        x = center + np.stack([a[ii + i0], a[jj], a[kk]], axis=-1)
        sr, nu, status = sum_radius(body, x)
        ok = status == 1
        if not ok.all():
            if strict:
                bad = x[~ok][0]
                raise ConfigError(
                    f"exterior node ({bad[0]:.6g}, {bad[1]:.6g}, {bad[2]:.6g}) has no admissible normal-ray coordinates"
                )
            uncovered += int(np.sum(~ok))
        keep = ok & (sr <= limit)
        idx_parts.append(flat[keep] + i0 * n * n)
        sr_parts.append(sr[keep])
        nu_parts.append(nu[keep])
    if not idx_parts:
        return np.zeros(0, np.int64), np.zeros(0), np.zeros((0, 3)), uncovered
    idx = np.concatenate(idx_parts)
    sr = np.concatenate(sr_parts)
    nu = np.concatenate(nu_parts)
    order = np.lexsort((idx, sr))
    return idx[order], sr[order], np.ascontiguousarray(nu[order]), uncovered


def build_grid(
    body: IlluminatingBody,
    obstacle: Obstacle,
    h: float,
    L: float,
    table_limit: float,
    center=None,
) -> Grid:
    """Assign masks by the obstacle inside-test and precompute coordinates.

    Solid nodes with an exterior 6-neighbour are the ghost layer; the six
    faces of the box form the OUTER layer. Raises ConfigError when the
    obstacle does not fit inside the box.
    """
    if not (h > 0 and L > 0):
        raise ConfigError("grid spacing and half-width must be positive")
    center = body.center.copy() if center is None else np.asarray(center, float)
    m = int(math.ceil(L / h - 1e-9))
    L = m * h
    n = 2 * m + 1
    if not isinstance(obstacle, NoObstacle):
        cV, rV = obstacle.bounds()
        if np.any(np.abs(cV - center) + rV >= L - h):
            raise ConfigError(f"obstacle (bounding radius {rV:.4g}) does not fit in the box of half-width {L:.4g}")
    solid = _solid_mask(obstacle, center, h, m)
    mask = np.full((n, n, n), EXTERIOR, np.uint8)
    ext = ~solid
    near = np.zeros_like(solid)
    near[1:] |= ext[:-1]
    near[:-1] |= ext[1:]
    near[:, 1:] |= ext[:, :-1]
    near[:, :-1] |= ext[:, 1:]
    near[:, :, 1:] |= ext[:, :, :-1]
    near[:, :, :-1] |= ext[:, :, 1:]
    mask[solid & near] = BOUNDARY_GHOST
    mask[solid & ~near] = INTERIOR
    for sl in (np.s_[0], np.s_[-1]):
        mask[sl, :, :] = OUTER
        mask[:, sl, :] = OUTER
        mask[:, :, sl] = OUTER
    active = (mask == EXTERIOR).astype(np.uint8)
    strict = not isinstance(obstacle, NoObstacle)
    idx, sr, nu, uncovered = _build_table(body, center, h, m, active, float(table_limit), strict)
    return Grid(float(h), float(L), center, n, mask, active, idx, sr, nu, float(table_limit), body.rho2M, uncovered)
