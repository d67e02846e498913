"""Condenser, weighted, obstacle, and whole-space capacities.

Each capacity is a constrained minimization of the discrete order-m energy:
node values on the hole are pinned to the data (the composed stencil then
couples the exterior to the hole across its boundary, matching derivatives
to O(h)), and the energy is minimized over the remaining domain nodes by a
preconditioned CG solve.  The obstacle variant replaces the equality pin by
a one-sided bound and runs a primal active-set iteration on the same form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq

from .grid import Grid, NodeMask, RegionSpec, Ball, rasterize, build_grid, BoundingBox
from .operator import BCKind, DiscreteForm, GridFunction, assemble_form, energy
from .solvers import SolverError, cg_solve


@dataclass(frozen=True)
class CapacityResult:
    value: float
    potential: object
    iterations: int
    residual: float
    flags: frozenset = frozenset()

    def has_flag(self, name: str) -> bool:
        return name in self.flags


@dataclass(frozen=True)
class CutoffSpec:
    """Radial plateau cutoff: 1 on r <= r_inner, 0 on r >= r_outer, with a
    polynomial blend that has `smoothness` vanishing derivatives at both
    ends (degree 2*smoothness + 1)."""

    center: np.ndarray
    r_inner: float
    r_outer: float
    smoothness: int = 2

    def __post_init__(self):
        object.__setattr__(self, "center", np.atleast_1d(np.asarray(self.center, float)))
        if not (0 <= self.r_inner < self.r_outer):
            raise ValueError("need 0 <= r_inner < r_outer")
        if self.smoothness < 1:
            raise ValueError("smoothness must be >= 1")

    def _smoothstep(self, t: np.ndarray) -> np.ndarray:
        n = self.smoothness
        t = np.clip(t, 0.0, 1.0)
        out = np.zeros_like(t)
        for i in range(n + 1):
            out += math.comb(n + i, i) * math.comb(2 * n + 1, n - i) * (-t) ** i
        return out * t ** (n + 1)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(np.atleast_2d(points) - self.center, axis=1)
        t = (r - self.r_inner) / (self.r_outer - self.r_inner)
        return 1.0 - self._smoothstep(t)

    def on_grid(self, grid: Grid) -> GridFunction:
        return GridFunction(grid, self.evaluate(grid.coords()))


def default_cutoff(form: DiscreteForm, hole: NodeMask) -> CutoffSpec:
    """Plateau cutoff around the hole: inner radius 1.1x the hole
    circumradius, outer radius capped by half the distance to the domain
    boundary."""
    coords = form.grid.coords()
    pts = coords[hole.indices]
    center = pts.mean(axis=0)
    circum = float(np.max(np.linalg.norm(pts - center, axis=1)))
    h = float(np.max(form.grid.h))
    r_in = 1.1 * max(circum, h)
    outside = ~form.omega.membership
    if np.any(outside):
        d_bdry = float(np.min(np.linalg.norm(coords[outside] - center, axis=1)))
    else:
        d_bdry = float(np.max(np.linalg.norm(coords - center, axis=1)))
    r_out = min(2.0 * r_in, 0.5 * d_bdry)
    if r_out <= r_in:
        r_out = r_in * 1.5
    return CutoffSpec(center, r_in, r_out, smoothness=form.m)


def _split_constraints(form: DiscreteForm, constrained_pos: np.ndarray):
    """Index bookkeeping: positions (into form.free) of constrained vs
    interior nodes, plus the S blocks needed for the reduced solve."""
    inter_pos = np.flatnonzero(~constrained_pos)
    con_pos = np.flatnonzero(constrained_pos)
    S = form.S
    S_ii = S[inter_pos][:, inter_pos].tocsr()
    S_ic = S[inter_pos][:, con_pos].tocsr()
    return inter_pos, con_pos, S_ii, S_ic


def _check_hole(form: DiscreteForm, hole: NodeMask):
    if hole.grid != form.grid:
        raise ValueError("hole mask belongs to a different grid")
    if not hole.issubset(form.omega):
        raise ValueError("hole must be contained in the domain mask")
    if not hole.dilate(1).issubset(form.omega):
        raise ValueError("hole touches the domain boundary; it must be "
                         "compactly contained")


def weighted_capacity(form: DiscreteForm, hole: NodeMask, data: GridFunction,
                      tol: float = 1e-10, collar: bool = False,
                      precond: str = "auto") -> CapacityResult:
    """Capacity of the hole with respect to boundary data `data`.

    Minimizes the form's energy over functions equal to `data` on the hole
    nodes (and, with collar=True, on m-1 extra node layers around thin
    holes).  The condenser capacity is the special case data = 1 on the
    hole.  An empty hole returns value 0 with the empty_hole flag, mirroring
    the fact that removing a null set does not change the space.
    """
    if hole.is_empty():
        return CapacityResult(0.0, GridFunction.zeros(form.grid), 0, 0.0,
                              frozenset({"empty_hole"}))
    _check_hole(form, hole)

    constrained = hole
    if collar and form.m > 1:
        constrained = NodeMask(form.grid,
                               hole.dilate(form.m - 1).membership
                               & form.omega.membership)
    con_mask_free = constrained.membership[form.free]
    inter_pos, con_pos, S_ii, S_ic = _split_constraints(form, con_mask_free)
    g = data.values[form.free[con_pos]]

    rhs = -(S_ic @ g)
    x, iters, res = cg_solve(S_ii, rhs, tol=tol, precond=precond)

    free_vals = np.zeros(form.n_free)
    free_vals[con_pos] = g
    free_vals[inter_pos] = x
    potential = form.extend(free_vals)
    value = form.energy_free(free_vals)
    flags = {"clipped"} if hole.clipped else set()
    return CapacityResult(value, potential, iters, res, frozenset(flags))


def condenser_capacity(form: DiscreteForm, hole: NodeMask,
                       **kwargs) -> CapacityResult:
    """Capacity with plateau data (identically 1 on the hole)."""
    ones = GridFunction(form.grid, np.ones(form.grid.node_count))
    return weighted_capacity(form, hole, ones, **kwargs)


def obstacle_capacity(form: DiscreteForm, hole: NodeMask, tol: float = 1e-10,
                      kkt_tol: float = 1e-8, max_outer: int | None = None,
                      precond: str = "auto") -> CapacityResult:
    """Capacity with the one-sided constraint f >= 1 on the hole.

    Primal active-set iteration: start from the fully pinned (condenser)
    solution, release pinned nodes whose multipliers are negative, re-solve,
    and re-pin any nodes that dip below the obstacle.  For second-order
    forms the first solve is already optimal (discrete maximum principle);
    higher orders typically release a few boundary nodes.
    """
    if hole.is_empty():
        return CapacityResult(0.0, GridFunction.zeros(form.grid), 0, 0.0,
                              frozenset({"empty_hole"}))
    _check_hole(form, hole)

    hole_pos = np.flatnonzero(hole.membership[form.free])
    active = np.ones(hole_pos.size, dtype=bool)
    if max_outer is None:
        max_outer = 2 * hole_pos.size + 10
    total_iters = 0
    free_vals = np.zeros(form.n_free)
    res = 0.0

    for _ in range(max_outer):
        con_mask_free = np.zeros(form.n_free, dtype=bool)
        con_mask_free[hole_pos[active]] = True
        inter_pos, con_pos, S_ii, S_ic = _split_constraints(form, con_mask_free)
        g = np.ones(con_pos.size)
        x, iters, res = cg_solve(S_ii, -(S_ic @ g), tol=tol, precond=precond)
        total_iters += iters
        free_vals = np.zeros(form.n_free)
        free_vals[con_pos] = g
        free_vals[inter_pos] = x

        grad = form.S @ free_vals
        mu = grad[hole_pos[active]]
        scale = max(1.0, float(np.max(np.abs(grad))))

        inactive = hole_pos[~active]
        violated = free_vals[inactive] < 1.0 - kkt_tol
        if np.any(violated):
            idx = np.flatnonzero(~active)[violated]
            active[idx] = True
            continue
        if mu.size == 0 or float(np.min(mu)) >= -kkt_tol * scale:
            value = form.energy_free(free_vals)
            kkt = max(0.0, -float(np.min(mu)) / scale) if mu.size else 0.0
            return CapacityResult(value, form.extend(free_vals), total_iters,
                                  max(res, kkt), frozenset())
        worst = int(np.argmin(mu))
        active[np.flatnonzero(active)[worst]] = False

    raise SolverError("obstacle active-set iteration did not converge",
                      partial=form.extend(free_vals))


def potential_stability_check(form: DiscreteForm, hole: NodeMask,
                              data_a: GridFunction, data_b: GridFunction,
                              cutoff: CutoffSpec | None = None,
                              tol: float = 1e-6,
                              cg_tol: float = 1e-12) -> tuple[float, float, bool]:
    """Energy-norm stability of the capacitary potential in its data:
    ||W_a - W_b||_E <= ||eta * (a - b)||_E with a plateau cutoff eta that is
    1 on the hole.  The bound is exact at the discrete level up to solver
    residual, since eta*(a-b) is admissible for the difference problem.
    """
    wa = weighted_capacity(form, hole, data_a, tol=cg_tol)
    wb = weighted_capacity(form, hole, data_b, tol=cg_tol)
    diff = wa.potential - wb.potential
    lhs = math.sqrt(max(energy(form, diff), 0.0))
    if cutoff is None:
        cutoff = default_cutoff(form, hole)
    eta = cutoff.on_grid(form.grid)
    rhs_fn = GridFunction(form.grid, eta.values * (data_a.values - data_b.values))
    rhs = math.sqrt(max(energy(form, rhs_fn), 0.0))
    return lhs, rhs, lhs <= rhs * (1 + tol) + 1e-14


# ---------------------------------------------------------------------------
# Whole-space capacity by truncation and extrapolation
# ---------------------------------------------------------------------------

def _power_extrapolate(radii: np.ndarray, vals: np.ndarray):
    """Fit c_R = c_inf + a * R^-p through the last three points.

    Returns (c_inf, p, flags).  Degenerate or non-decaying tails return the
    last value with the no_extrapolation flag.
    """
    R1, R2, R3 = radii[-3:]
    c1, c2, c3 = vals[-3:]
    d1, d2 = c1 - c2, c2 - c3
    if abs(d2) < 1e-14 * max(1.0, abs(c3)):
        return float(c3), math.inf, frozenset()
    if d1 <= 0 or d2 <= 0 or d2 >= d1:
        return float(c3), 0.0, frozenset({"no_extrapolation"})

    target = d2 / d1

    def ratio(p):
        return (R2 ** -p - R3 ** -p) / (R1 ** -p - R2 ** -p) - target

    try:
        p = brentq(ratio, 1e-4, 50.0)
    except ValueError:
        return float(c3), 0.0, frozenset({"no_extrapolation"})
    if p <= 0:
        return float(c3), p, frozenset({"no_extrapolation"})
    a = d2 / (R2 ** -p - R3 ** -p)
    c_inf = float(c3 - a * R3 ** -p)
    return c_inf, p, frozenset()


def whole_space_capacity(K: RegionSpec, U0, m: int, N: int, radii,
                         outer_resolution: int = 33,
                         monotone_rtol: float = 1e-8):
    """Whole-space capacity of K with data U0, via Dirichlet truncation at
    increasing radii and power-law extrapolation R -> infinity.

    U0 may be a scalar (constant data) or a homogeneous polynomial object
    exposing degree/evaluate.  Origin-centered balls with constant or linear
    data take the semi-analytic radial route; other shapes rasterize K in a
    box of each radius (dimension capped at 4).  Returns (value, table)
    where the table rows are (R, cap_R) and monotone nonincrease is checked
    at every step.
    """
    if N <= 2 * m:
        raise ValueError("whole-space capacity requires N > 2m")
    radii = np.asarray(sorted(float(r) for r in radii))
    if radii.size < 3:
        raise ValueError("need at least 3 truncation radii")

    u0_const = None
    u0_poly = None
    if U0 is None:
        u0_const = 1.0
    elif np.isscalar(U0):
        u0_const = float(U0)
    else:
        u0_poly = U0
        if getattr(u0_poly, "degree", None) == 0:
            u0_const = float(u0_poly.evaluate(np.zeros((1, N)))[0])
            u0_poly = None

    if u0_const is not None and u0_const == 0.0:
        table = [(float(r), 0.0) for r in radii]
        return 0.0, {"radii": table, "p": math.inf, "flags": frozenset()}

    from . import radial  # local import; radial shares CapacityResult

    vals = []
    is_origin_ball = isinstance(K, Ball) and np.allclose(K.center, 0.0) and K.radius > 0
    lin_coeffs = None
    if u0_poly is not None and getattr(u0_poly, "degree", None) == 1:
        eye = np.eye(N)
        lin_coeffs = np.asarray(u0_poly.evaluate(eye), dtype=float)

    for R in radii:
        lo, _ = K.bounds()
        if np.max(np.abs(np.concatenate(K.bounds()))) >= R:
            raise ValueError("K must fit inside the smallest truncation radius")
        if is_origin_ball and u0_const is not None:
            cap = radial.annulus_capacity_general(
                m, N, ell=0, r_inner=K.radius, r_outer=R,
                v=u0_const, s=0.0, outer_bc=BCKind.dirichlet).value
        elif is_origin_ball and lin_coeffs is not None:
            # data sum_i a_i x_i: rotationally reduce to the ell=1 profile
            # f(r) = |a| r with angular factor |S^{N-1}|/N
            amp2 = float(np.dot(lin_coeffs, lin_coeffs))
            unit = radial.annulus_capacity_general(
                m, N, ell=1, r_inner=K.radius, r_outer=R,
                v=K.radius, s=1.0, outer_bc=BCKind.dirichlet,
                angular_norm=radial.sphere_area(N) / N).value
            cap = amp2 * unit
        else:
            cap = _grid_truncated_capacity(K, u0_const, u0_poly, m, N, R,
                                           outer_resolution)
        vals.append(cap)

    vals = np.asarray(vals)
    flags = set()
    for k in range(1, vals.size):
        if vals[k] > vals[k - 1] * (1 + monotone_rtol) + 1e-14:
            flags.add("nonmonotone")
    c_inf, p, exflags = _power_extrapolate(radii, vals)
    flags |= set(exflags)
    table = [(float(r), float(c)) for r, c in zip(radii, vals)]
    return c_inf, {"radii": table, "p": p, "flags": frozenset(flags)}


def _grid_truncated_capacity(K, u0_const, u0_poly, m, N, R, resolution):
    n = resolution if resolution % 2 == 1 else resolution + 1
    box = BoundingBox(np.full(N, -R), np.full(N, R))
    grid = build_grid(box, n)
    margin = max(1, m // 2) + 1
    inner = NodeMask(grid, ~np.zeros(grid.node_count, dtype=bool)).erode(margin)
    form = assemble_form(grid, inner, m, BCKind.dirichlet)
    hole = rasterize(grid, K)
    hole = NodeMask(grid, hole.membership & inner.membership, hole.clipped)
    if u0_const is not None:
        data = GridFunction(grid, np.full(grid.node_count, u0_const))
    else:
        data = GridFunction(grid, np.asarray(u0_poly.evaluate(grid.coords()), float))
    return weighted_capacity(form, hole, data).value
