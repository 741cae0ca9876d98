"""Illuminating bodies, obstacles, certificates and scenes."""

from .bodies import (
    IlluminatingBody,
    IlluminatingCoords,
    SurfaceFrame,
    decompose_gradient,
    from_illuminating_coords,
    invert,
    jacobian_metric,
    region_predicates,
    surface_frame,
    to_illuminating_coords,
)
from .certificate import IlluminationCertificate, illuminate
from .obstacles import Ball, DogBone, Mesh, NoObstacle, Obstacle, Snake, icosphere, read_stl, write_stl
from .scene import Scene, certify, load_scene, parse_scene

__all__ = [
    "Ball",
    "DogBone",
    "IlluminatingBody",
    "IlluminatingCoords",
    "IlluminationCertificate",
    "Mesh",
    "NoObstacle",
    "Obstacle",
    "Scene",
    "Snake",
    "SurfaceFrame",
    "certify",
    "decompose_gradient",
    "from_illuminating_coords",
    "icosphere",
    "illuminate",
    "invert",
    "jacobian_metric",
    "load_scene",
    "parse_scene",
    "read_stl",
    "region_predicates",
    "surface_frame",
    "to_illuminating_coords",
    "write_stl",
]
