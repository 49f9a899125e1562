"""Boundary conditions for defect equilibria in a two-dimensional crystal."""
from .lattice import DefectSpec, build_hexagon, build_periodic_cell
from .potentials import AntiplanePotential, DeformationError, EamPotential
from .schemes import Problem, Solution, make_problem, solve_ac, solve_dir, solve_lin, solve_per

__all__ = [
    "AntiplanePotential",
    "DefectSpec",
    "DeformationError",
    "EamPotential",
    "Problem",
    "Solution",
    "build_hexagon",
    "build_periodic_cell",
    "make_problem",
    "solve_ac",
    "solve_dir",
    "solve_lin",
    "solve_per",
]

__version__ = "0.1.0"
