"""Obstacles V described by signed distance (negative inside).

All analytic shapes here have 1-Lipschitz signed distances, which is what
the sphere-traced ray test in :mod:`certificate` relies on.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError


class Obstacle:
    """Base class. Subclasses implement ``sdf`` and ``bounds``."""

    kind = "abstract"

    def sdf(self, x) -> np.ndarray:
        raise NotImplementedError

    def bounds(self) -> tuple[np.ndarray, float]:
        """Center and radius of a sphere enclosing V."""
        raise NotImplementedError

    def contains(self, x) -> np.ndarray:
        return self.sdf(x) < 0.0

    def gradient(self, x, step: float = 1e-6) -> np.ndarray:
        """Outward unit normal from central differences of the distance."""
        x = np.asarray(x, float)
        _, rad = self.bounds()
        hstep = step * max(rad, 1.0)
        g = np.empty(x.shape)
        for k in range(3):
            e = np.zeros(3)
            e[k] = hstep
            g[..., k] = (self.sdf(x + e) - self.sdf(x - e)) / (2.0 * hstep)
        return g / np.linalg.norm(g, axis=-1, keepdims=True)

    def sample_surface(self, n: int, rng: np.random.Generator):
        """(points, outward normals, surface area) with n random samples."""
        center, rad = self.bounds()
        res = 96
        lo = center - 1.05 * rad
        spacing = 2.1 * rad / (res - 1)
        axes = [lo[k] + spacing * np.arange(res) for k in range(3)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        vol = self.sdf(grid)
        from skimage.measure import marching_cubes

        verts, faces, _, _ = marching_cubes(vol, level=0.0, spacing=(spacing,) * 3)
        tri = verts[faces] + lo
        pts, _, area = _sample_triangles(tri, n, rng)
        for _ in range(4):
            pts = pts - self.sdf(pts)[:, None] * self.gradient(pts)
        return pts, self.gradient(pts), area

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class NoObstacle(Obstacle):
    kind = "none"

    def sdf(self, x):
        return np.full(np.shape(x)[:-1], np.inf)

    def bounds(self):
        return np.zeros(3), 0.0

    def sample_surface(self, n, rng):
        return np.zeros((0, 3)), np.zeros((0, 3)), 0.0

    def to_dict(self):
        return {"kind": "none"}


@dataclass(frozen=True)
class Ball(Obstacle):
    radius: float
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    kind = "ball"

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, float).reshape(3))
        if not self.radius > 0:
            raise ConfigError("ball radius must be positive")

    def sdf(self, x):
        return np.linalg.norm(np.asarray(x, float) - self.center, axis=-1) - self.radius

    def gradient(self, x, step=None):
        d = np.asarray(x, float) - self.center
        return d / np.linalg.norm(d, axis=-1, keepdims=True)

    def bounds(self):
        return self.center.copy(), float(self.radius)

    def sample_surface(self, n, rng):
        d = rng.normal(size=(n, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        return self.center + self.radius * d, d, 4.0 * math.pi * self.radius**2

    def to_dict(self):
        return {"kind": "ball", "radius": self.radius, "center": self.center.tolist()}


def _segment_distance(p, a, b):
    ab = b - a
    t = np.clip(((p - a) @ ab) / max(ab @ ab, 1e-300), 0.0, 1.0)
    return np.linalg.norm(p - (a + t[..., None] * ab), axis=-1)


def _smin(values, k):
    v = np.stack(values, axis=0)
    if k <= 0:
        return v.min(axis=0)
    m = v.min(axis=0)
    return m - k * np.log(np.exp(-(v - m) / k).sum(axis=0))


@dataclass(frozen=True)
class DogBone(Obstacle):
    """Two balls at ±half_length on the z axis joined by a round neck."""

    half_length: float
    ball_radius: float
    neck_radius: float
    smoothing: float = 0.05
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    kind = "dogbone"

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, float).reshape(3))
        if min(self.half_length, self.ball_radius, self.neck_radius) <= 0 or self.smoothing < 0:
            raise ConfigError("dog-bone parameters must be positive")

    def sdf(self, x):
        p = np.asarray(x, float) - self.center
        top = np.array([0.0, 0.0, self.half_length])
        d1 = np.linalg.norm(p - top, axis=-1) - self.ball_radius
        d2 = np.linalg.norm(p + top, axis=-1) - self.ball_radius
        d3 = _segment_distance(p, -top, top) - self.neck_radius
        return _smin([d1, d2, d3], self.smoothing)

    def bounds(self):
        r = self.half_length + max(self.ball_radius, self.neck_radius) + self.smoothing * math.log(3.0)
        return self.center.copy(), float(r)

    def to_dict(self):
        return {
            "kind": "dogbone",
            "half_length": self.half_length,
            "ball_radius": self.ball_radius,
            "neck_radius": self.neck_radius,
            "smoothing": self.smoothing,
            "center": self.center.tolist(),
        }


@dataclass(frozen=True)
class Snake(Obstacle):
    """Tube of constant radius swept along a polyline."""

    points: np.ndarray
    radius: float
    kind = "snake"

    def __post_init__(self):
        pts = np.asarray(self.points, float)
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 2:
            raise ConfigError("snake needs at least two 3D points")
        if not self.radius > 0:
            raise ConfigError("snake radius must be positive")
        object.__setattr__(self, "points", pts)

    def sdf(self, x):
        p = np.asarray(x, float)
        d = [_segment_distance(p, a, b) for a, b in zip(self.points[:-1], self.points[1:])]
        return np.min(d, axis=0) - self.radius

    def bounds(self):
        c = 0.5 * (self.points.min(axis=0) + self.points.max(axis=0))
        return c, float(np.linalg.norm(self.points - c, axis=1).max() + self.radius)

    def to_dict(self):
        return {"kind": "snake", "points": self.points.tolist(), "radius": self.radius}


# ------------------------------------------------------------------ meshes


def _sample_triangles(tri, n, rng):
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    cr = np.cross(e1, e2)
    areas = 0.5 * np.linalg.norm(cr, axis=1)
    total = float(areas.sum())
    f = rng.choice(len(tri), size=n, p=areas / total)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    pts = (1 - r1)[:, None] * tri[f, 0] + (r1 * (1 - r2))[:, None] * tri[f, 1] + (r1 * r2)[:, None] * tri[f, 2]
    normals = cr[f] / (2.0 * areas[f])[:, None]
    return pts, normals, total


def _point_triangle_distance(p, tri):
    """Unsigned distance from points p (n,3) to triangles tri (m,3,3); (n, m)."""
    a = tri[None, :, 0]
    b = tri[None, :, 1]
    c = tri[None, :, 2]
    q = p[:, None, :]
    ab, ac, ap = b - a, c - a, q - a
    d1 = np.sum(ab * ap, -1)
    d2 = np.sum(ac * ap, -1)
    bp = q - b
    d3 = np.sum(ab * bp, -1)
    d4 = np.sum(ac * bp, -1)
    cp = q - c
    d5 = np.sum(ab * cp, -1)
    d6 = np.sum(ac * cp, -1)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = 1.0 / (va + vb + vc)
        v = vb * denom
        w = vc * denom
        closest = a + ab * v[..., None] + ac * w[..., None]
        # edge and vertex regions, checked in Ericson's order (last wins)
        t_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        closest = np.where(((va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0))[..., None], b + t_bc[..., None] * (c - b), closest)
        t_ac = d2 / (d2 - d6)
        closest = np.where(((vb <= 0) & (d2 >= 0) & (d6 <= 0))[..., None], a + t_ac[..., None] * ac, closest)
        closest = np.where(((d6 >= 0) & (d5 <= d6))[..., None], c, closest)
        t_ab = d1 / (d1 - d3)
        closest = np.where(((vc <= 0) & (d1 >= 0) & (d3 <= 0))[..., None], a + t_ab[..., None] * ab, closest)
    closest = np.where(((d3 >= 0) & (d4 <= d3))[..., None], b, closest)
    closest = np.where(((d1 <= 0) & (d2 <= 0))[..., None], a, closest)
    return np.linalg.norm(q - closest, axis=-1)


def _winding(p, tri):
    """Generalized winding number of a closed mesh at points p."""
    a = tri[None, :, 0] - p[:, None, :]
    b = tri[None, :, 1] - p[:, None, :]
    c = tri[None, :, 2] - p[:, None, :]
    la, lb, lc = (np.linalg.norm(v, axis=-1) for v in (a, b, c))
    num = np.sum(a * np.cross(b, c), -1)
    den = la * lb * lc + np.sum(a * b, -1) * lc + np.sum(a * c, -1) * lb + np.sum(b * c, -1) * la
    return np.arctan2(num, den).sum(axis=1) / (2.0 * math.pi)


@dataclass(frozen=True)
class Mesh(Obstacle):
    """Closed triangle mesh; faces are reoriented to point outward."""

    triangles: np.ndarray
    source: str = ""
    kind = "mesh"

    def __post_init__(self):
        tri = np.asarray(self.triangles, float)
        if tri.ndim != 3 or tri.shape[1:] != (3, 3) or len(tri) < 4:
            raise ConfigError("mesh needs an (n, 3, 3) triangle array with n >= 4")
        vol = np.sum(tri[:, 0] * np.cross(tri[:, 1], tri[:, 2])) / 6.0
        if vol < 0:
            tri = tri[:, [0, 2, 1]]
        object.__setattr__(self, "triangles", tri)

    def _chunks(self, x, fn, chunk=2048):
        p = np.asarray(x, float).reshape(-1, 3)
        out = np.empty(len(p))
        for i in range(0, len(p), chunk):
            out[i : i + chunk] = fn(p[i : i + chunk])
        return out.reshape(np.shape(x)[:-1])

    def sdf(self, x):
        tri = self.triangles
        center, rad = self.bounds()

        def fn(p):
            d = _point_triangle_distance(p, tri).min(axis=1)
            inside = np.zeros(len(p), bool)
            near = np.linalg.norm(p - center, axis=1) <= rad
            if near.any():
                inside[near] = _winding(p[near], tri) > 0.5
            return np.where(inside, -d, d)

        return self._chunks(x, fn)

    def contains(self, x):
        tri = self.triangles
        center, rad = self.bounds()

        def fn(p):
            inside = np.zeros(len(p))
            near = np.linalg.norm(p - center, axis=1) <= rad
            if near.any():
                inside[near] = _winding(p[near], tri) > 0.5
            return inside

        return self._chunks(x, fn) > 0.5

    def bounds(self):
        v = self.triangles.reshape(-1, 3)
        c = 0.5 * (v.min(axis=0) + v.max(axis=0))
        return c, float(np.linalg.norm(v - c, axis=1).max())

    def sample_surface(self, n, rng):
        return _sample_triangles(self.triangles, n, rng)

    def to_dict(self):
        return {"kind": "mesh", "path": self.source, "faces": int(len(self.triangles))}


_STL_DTYPE = np.dtype([("normal", "<f4", (3,)), ("v", "<f4", (3, 3)), ("attr", "<u2")])


def read_stl(path) -> np.ndarray:
    """Triangles (n, 3, 3) from a binary STL file."""
    data = Path(path).read_bytes()
    if len(data) < 84:
        raise ConfigError(f"{path}: too short for a binary STL")
    (count,) = struct.unpack_from("<I", data, 80)
    if len(data) < 84 + 50 * count:
        raise ConfigError(f"{path}: truncated, header says {count} triangles")
    rec = np.frombuffer(data, dtype=_STL_DTYPE, count=count, offset=84)
    return rec["v"].astype(float)


def write_stl(path, triangles) -> None:
    tri = np.asarray(triangles, float)
    rec = np.zeros(len(tri), dtype=_STL_DTYPE)
    cr = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    rec["normal"] = cr / np.linalg.norm(cr, axis=1, keepdims=True)
    rec["v"] = tri
    with open(path, "wb") as fh:
        fh.write(b"illumwave binary stl".ljust(80, b"\0"))
        fh.write(struct.pack("<I", len(tri)))
        fh.write(rec.tobytes())


def icosphere(radius: float = 1.0, subdivisions: int = 2, center=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Triangulated sphere, outward-oriented, as an (n, 3, 3) array."""
    t = (1.0 + math.sqrt(5.0)) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    v = [np.array(p, float) / np.linalg.norm(p) for p in verts]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = v[i] + v[j]
                v.append(m / np.linalg.norm(m))
                cache[key] = len(v) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    V = np.array(v) * radius + np.asarray(center, float)
    return V[np.array(faces)]
