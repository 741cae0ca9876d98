"""Finite-difference evolution on a masked grid and the recorded diagnostics."""

from .grid import BOUNDARY_GHOST, EXTERIOR, INTERIOR, OUTER, Grid, build_grid
from .simulate import (
    Bump,
    RunResult,
    SolverConfig,
    WaveState,
    band_integral,
    bump_field,
    init_state,
    make_grid,
    read_checkpoint,
    region_integrals,
    run_simulation,
    scene_certificate,
    step,
    total_energy,
    write_checkpoint,
)

__all__ = [
    "BOUNDARY_GHOST",
    "EXTERIOR",
    "INTERIOR",
    "OUTER",
    "Bump",
    "Grid",
    "RunResult",
    "SolverConfig",
    "WaveState",
    "band_integral",
    "build_grid",
    "bump_field",
    "init_state",
    "make_grid",
    "read_checkpoint",
    "region_integrals",
    "run_simulation",
    "scene_certificate",
    "step",
    "total_energy",
    "write_checkpoint",
]
