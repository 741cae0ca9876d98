"""JSON scene documents: an illuminating body, an obstacle, sampling options."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from .bodies import IlluminatingBody
from .obstacles import Ball, DogBone, Mesh, NoObstacle, Obstacle, Snake, read_stl

SAMPLING_DEFAULTS = {
    "surface_samples": 10_000,
    "ray_march_step": 0.01,
    "seed": 0,
    "a0_samples": 20_000,
    "a0_half_width": None,
}


@dataclass
class Scene:
    body: IlluminatingBody
    obstacle: Obstacle
    sampling: dict = field(default_factory=lambda: dict(SAMPLING_DEFAULTS))
    raw: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"body": self.body.to_dict(), "obstacle": self.obstacle.to_dict(), "sampling": dict(self.sampling)}


def _require(d: dict, key: str, where: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    if key not in d:
        raise ConfigError(f"{where}: missing key '{key}'")
    return d[key]


def _vec(v, where: str, n: int = 3) -> np.ndarray:
    try:
        a = np.asarray(v, float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: expected {n} numbers") from exc
    if a.shape != (n,) or not np.all(np.isfinite(a)):
        raise ConfigError(f"{where}: expected {n} finite numbers, got {v!r}")
    return a


def _num(d: dict, key: str, where: str, default=None) -> float:
    if key not in d:
        if default is None:
            raise ConfigError(f"{where}: missing key '{key}'")
        return float(default)
    try:
        return float(d[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}.{key}: expected a number, got {d[key]!r}") from exc


def parse_body(d: dict) -> IlluminatingBody:
    kind = _require(d, "kind", "body")
    center = _vec(d.get("center", [0, 0, 0]), "body.center")
    if kind == "sphere":
        if "radius" in d:
            r = _num(d, "radius", "body")
        else:
            radii = _vec(_require(d, "radii", "body"), "body.radii")
            if not (radii[0] == radii[1] == radii[2]):
                raise ConfigError("body.radii: a sphere needs three equal radii")
            r = float(radii[0])
        return IlluminatingBody.sphere(r, center)
    if kind == "spheroid":
        radii = _vec(_require(d, "radii", "body"), "body.radii")
        if radii[0] != radii[1]:
            raise ConfigError("body.radii: spheroid radii must be [a, a, c] (symmetry axis z)")
        return IlluminatingBody.spheroid(radii, center)
    raise ConfigError(f"body.kind: unknown kind {kind!r} (expected 'sphere' or 'spheroid')")


def parse_obstacle(d: dict, base: Path | None = None) -> Obstacle:
    kind = _require(d, "kind", "obstacle")
    params = d.get("parameters", d)
    if kind == "none":
        return NoObstacle()
    if kind == "ball":
        return Ball(_num(params, "radius", "obstacle"), _vec(params.get("center", [0, 0, 0]), "obstacle.center"))
    if kind == "dogbone":
        return DogBone(
            _num(params, "half_length", "obstacle"),
            _num(params, "ball_radius", "obstacle"),
            _num(params, "neck_radius", "obstacle"),
            _num(params, "smoothing", "obstacle", 0.05),
            _vec(params.get("center", [0, 0, 0]), "obstacle.center"),
        )
    if kind == "snake":
        pts = _require(params, "points", "obstacle")
        return Snake(np.asarray(pts, float), _num(params, "radius", "obstacle"))
    if kind == "mesh":
        path = Path(_require(params, "path", "obstacle"))
        if not path.is_absolute() and base is not None:
            path = base / path
        if not path.exists():
            raise ConfigError(f"obstacle.path: file not found: {path}")
        return Mesh(read_stl(path), str(path))
    raise ConfigError(f"obstacle.kind: unknown kind {kind!r}")


def parse_scene(d: dict, base: Path | None = None) -> Scene:
    if not isinstance(d, dict):
        raise ConfigError("scene: expected a JSON object")
    body = parse_body(_require(d, "body", "scene"))
    obstacle = parse_obstacle(_require(d, "obstacle", "scene"), base)
    sampling = dict(SAMPLING_DEFAULTS)
    user = d.get("sampling", {})
    if not isinstance(user, dict):
        raise ConfigError("scene.sampling: expected an object")
    for k, v in user.items():
        if k not in SAMPLING_DEFAULTS:
            raise ConfigError(f"scene.sampling: unknown key '{k}'")
        sampling[k] = v
    return Scene(body, obstacle, sampling, d)


def load_json(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def load_scene(path) -> Scene:
    path = Path(path)
    return parse_scene(load_json(path), path.parent)


def certify(scene: Scene, **overrides):
    from .certificate import illuminate

    s = dict(scene.sampling)
    s.update(overrides)
    return illuminate(
        scene.obstacle,
        scene.body,
        samples=int(s["surface_samples"]),
        ray_step=float(s["ray_march_step"]),
        seed=int(s["seed"]),
        a0_samples=int(s["a0_samples"]),
        a0_half_width=None if s["a0_half_width"] is None else float(s["a0_half_width"]),
    )
