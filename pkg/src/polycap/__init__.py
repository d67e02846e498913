"""Polyharmonic condenser capacities, perturbed eigenvalues, and the
small-hole asymptotics toolkit."""

from .grid import (Ball, BoundingBox, BoxRegion, Ellipsoid, EmptyRegion, Grid,
                   NodeMask, RegionSpec, UnionRegion, build_grid, rasterize,
                   region_volume, scale_region)
from .operator import (BCKind, DiscreteForm, GridFunction, assemble_form,
                       energy, hardy_rellich_check, mass_weights,
                       surface_area)
from .capacity import (CapacityResult, CutoffSpec, condenser_capacity,
                       obstacle_capacity, potential_stability_check,
                       weighted_capacity, whole_space_capacity)
from .spectrum import EigenResult, rayleigh_quotient, solve_eigs
from .radial import (BallMode, RadialProblem, annulus_weighted_capacity,
                     ball_capacity_exact, ball_modes, bessel_zero,
                     radial_eigs)
from .asymptotics import (ExpansionReport, ExpansionSetting,
                          HomogeneousPolynomial, RateFit, ShellSamples,
                          VanishingOrder, expansion_report, fit_rate,
                          polyharmonic_basis, vanishing_order)
from .solvers import SolverError

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
