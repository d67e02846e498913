"""Bundled property-check suite.

Each check exercises one structural fact the solvers must reproduce:
monotonicity of capacities and eigenvalues in the hole, ordering of the
hinged and clamped variants, the exact scaling law of whole-space
capacities, the weighted second-order inequality for fourth-order energies,
the obstacle/condenser ordering, boundedness of the spectral stability
ratio, and the small-dimension dichotomy for point capacities.  All
randomness is drawn from one seeded generator so runs are reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import Ball, BoundingBox, BoxRegion, NodeMask, UnionRegion, build_grid, rasterize
from .operator import (BCKind, GridFunction, assemble_form, energy,
                       hardy_rellich_check, mass_weights, surface_area)
from .capacity import condenser_capacity, obstacle_capacity, weighted_capacity
from .spectrum import solve_eigs
from . import radial

SOLVER_TOL = 1e-8


@dataclass
class CheckOutcome:
    name: str
    passed: bool
    detail: str

    def __repr__(self):
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def _random_nested_pair(grid, rng, max_radius):
    center = rng.uniform(-0.15, 0.15, size=grid.ndim)
    r_small = rng.uniform(0.08, 0.6 * max_radius)
    r_big = rng.uniform(r_small, max_radius)
    extra = Ball(center + rng.uniform(-0.05, 0.05, size=grid.ndim),
                 rng.uniform(0.05, 0.3 * max_radius))
    small = rasterize(grid, Ball(center, r_small))
    big = rasterize(grid, UnionRegion((Ball(center, r_big), extra)))
    return small, NodeMask(grid, small.membership | big.membership)


def _setup_2d(n=25, radius=0.85):
    grid = build_grid(BoundingBox([-1.1, -1.1], [1.1, 1.1]), n)
    omega = rasterize(grid, Ball([0.0, 0.0], radius))
    return grid, omega


def check_hole_monotonicity(seed=42, pairs=20) -> CheckOutcome:
    """Nested holes give ordered capacities and ordered eigenvalues."""
    rng = np.random.default_rng(seed)
    grid, omega = _setup_2d()
    worst_cap, worst_eig = -math.inf, -math.inf
    for k in range(pairs):
        m = 1 if k % 2 == 0 else 2
        form = assemble_form(grid, omega, m, BCKind.dirichlet)
        mass = mass_weights(form)
        small, big = _random_nested_pair(grid, rng, 0.45)
        if small.is_empty() or big.count == small.count:
            continue
        data = GridFunction.from_callable(
            grid, lambda p: 1.0 + 0.3 * p[:, 0] - 0.2 * p[:, 1])
        cs = weighted_capacity(form, small, data).value
        cb = weighted_capacity(form, big, data).value
        worst_cap = max(worst_cap, cs - cb)
        es = solve_eigs(form, mass, small, J=2).eigenvalues
        eb = solve_eigs(form, mass, big, J=2).eigenvalues
        worst_eig = max(worst_eig, float(np.max(es - eb)))
    ok = worst_cap <= SOLVER_TOL and worst_eig <= SOLVER_TOL
    return CheckOutcome(
        "hole_monotonicity", ok,
        f"worst capacity violation {worst_cap:.2e}, "
        f"worst eigenvalue violation {worst_eig:.2e}")


def check_navier_le_dirichlet(seed=43, configs=10) -> CheckOutcome:
    """Hinged capacity never exceeds the clamped one on the same data."""
    rng = np.random.default_rng(seed)
    grid, omega = _setup_2d()
    worst = -math.inf
    for _ in range(configs):
        fn = assemble_form(grid, omega, 2, BCKind.navier)
        fd = assemble_form(grid, omega, 2, BCKind.dirichlet)
        hole = rasterize(grid, Ball(rng.uniform(-0.2, 0.2, 2),
                                    rng.uniform(0.08, 0.35)))
        data = GridFunction.from_callable(
            grid, lambda p: 1.0 + rng.uniform(-0.5, 0.5) * p[:, 0])
        vn = weighted_capacity(fn, hole, data).value
        vd = weighted_capacity(fd, hole, data).value
        worst = max(worst, vn - vd)
    return CheckOutcome("navier_le_dirichlet", worst <= SOLVER_TOL,
                        f"worst ordering violation {worst:.2e}")


def check_scaling_law() -> CheckOutcome:
    """Whole-space ball capacity scales exactly like eps^(N-2m)."""
    worst = 0.0
    for (m, N) in [(1, 3), (1, 4), (2, 5), (2, 6), (2, 7)]:
        base = radial.ball_capacity_exact(m, N, 1.0)
        for eps in (0.5, 0.25, 0.1):
            scaled = radial.ball_capacity_exact(m, N, eps)
            rel = abs(scaled / (eps ** (N - 2 * m) * base) - 1.0)
            worst = max(worst, rel)
    return CheckOutcome("scaling_law", worst <= 1e-6,
                        f"worst relative scaling error {worst:.2e}")


def check_hardy_rellich(seed=44, profiles=100) -> CheckOutcome:
    """Weighted inequality for fourth-order energies on random radial
    bumps vanishing at the unit sphere (ambient dimension 5)."""
    rng = np.random.default_rng(seed)
    N = 5
    grid1d = build_grid(BoundingBox([0.0], [1.0]), 801)
    omega = rasterize(grid1d, BoxRegion([0.0], [1.0 - 1e-12]))
    r = grid1d.axis_coords(0)
    failures = 0
    min_slack = math.inf
    for _ in range(profiles):
        coeffs = rng.uniform(-1.0, 1.0, size=4)
        vals = (1 - r**2) * sum(c * r ** (2 * j)
                                for j, c in enumerate(coeffs))
        u = GridFunction(grid1d, vals)
        lhs, rhs, ok = hardy_rellich_check(grid1d, omega, u, N)
        if rhs > 0:
            min_slack = min(min_slack, rhs - lhs)
        if not ok:
            failures += 1
    return CheckOutcome("hardy_rellich", failures == 0,
                        f"{failures} violations in {profiles} profiles, "
                        f"min slack {min_slack:.3e}")


def check_obstacle_vs_condenser(seed=45) -> CheckOutcome:
    """Obstacle capacity never exceeds the condenser one; they agree for
    second order (discrete maximum principle)."""
    rng = np.random.default_rng(seed)
    grid, omega = _setup_2d(n=29)
    msgs = []
    ok = True
    for m in (1, 2):
        form = assemble_form(grid, omega, m, BCKind.dirichlet)
        hole = rasterize(grid, Ball(rng.uniform(-0.1, 0.1, 2), 0.3))
        cond = condenser_capacity(form, hole).value
        obst = obstacle_capacity(form, hole).value
        if obst > cond * (1 + 1e-8) + 1e-12:
            ok = False
        if m == 1 and abs(obst - cond) > 1e-6 * max(cond, 1.0):
            ok = False
        msgs.append(f"m={m}: obstacle {obst:.6g} vs condenser {cond:.6g}")
    return CheckOutcome("obstacle_le_condenser", ok, "; ".join(msgs))


def check_stability_ratio() -> CheckOutcome:
    """|lambda(h ole) - lambda| / cap^(1/2) stays bounded along a shrinking
    radial sweep (never exceeds twice its largest-eps value)."""
    mode = radial.ball_modes(2, 5, 0, BCKind.navier, 1)[0]
    ratios = []
    for eps in (0.1, 0.075, 0.05, 0.025, 0.0125):
        lam = radial.radial_eigs(
            radial.RadialProblem(5, 2, 0, eps, BCKind.navier), 1).eigenvalues[0]
        cap = radial.annulus_capacity_general(
            2, 5, 0, eps, 1.0, 1.0, 0.0, BCKind.navier).value
        ratios.append((lam - mode.eigenvalue) / math.sqrt(cap))
    bound = 2.0 * ratios[0]
    ok = all(r <= bound + 1e-12 for r in ratios)
    return CheckOutcome("stability_ratio", ok,
                        f"ratios {['%.4g' % r for r in ratios]} vs bound "
                        f"{bound:.4g}")


def check_point_capacity_dichotomy() -> CheckOutcome:
    """Ball capacities decay to zero above the critical dimension and stay
    bounded below it (fourth order: N = 5 decays, N = 3 has a floor)."""
    decay = [radial.annulus_capacity_general(2, 5, 0, eps, 1.0, 1.0, 0.0,
                                             BCKind.navier).value
             for eps in (0.1, 0.01, 1e-3)]
    floor_ref = radial.annulus_capacity_general(2, 3, 0, 0.1, 1.0, 1.0, 0.0,
                                                BCKind.navier).value
    floor = [radial.annulus_capacity_general(2, 3, 0, eps, 1.0, 1.0, 0.0,
                                             BCKind.navier).value
             for eps in (0.03, 0.01, 3e-3, 1e-3)]
    decays = all(b < a for a, b in zip(decay, decay[1:])) \
        and decay[-1] < 0.02 * decay[0]
    floored = all(v > 0.1 * floor_ref for v in floor)
    return CheckOutcome(
        "point_capacity_dichotomy", decays and floored,
        f"N=5 caps {['%.3g' % v for v in decay]}; "
        f"N=3 floor {['%.4g' % v for v in floor]} vs 0.1x ref "
        f"{0.1 * floor_ref:.4g}")


def check_eigenfunction_stability(seed=46) -> CheckOutcome:
    """Mass-norm drift of the perturbed eigenfunction, normalized by the
    square root of the weighted capacity, trends to zero along the sweep."""
    grid, omega = _setup_2d(n=33, radius=1.0)
    form = assemble_form(grid, omega, 1, BCKind.dirichlet)
    mass = mass_weights(form)
    base = solve_eigs(form, mass, None, J=1)
    u = base.eigenvectors[0]
    vals = []
    for eps in (0.4, 0.3, 0.22, 0.16, 0.12):
        hole = rasterize(grid, Ball([0.0, 0.0], eps))
        cap = weighted_capacity(form, hole, u).value
        pert = solve_eigs(form, mass, hole, J=1)
        v = pert.eigenvectors[0]
        drift = np.sqrt(np.sum((v.values - u.values) ** 2) * grid.cell_volume)
        vals.append(drift / math.sqrt(cap))
    decreasing = all(b <= a * (1 + 0.05) for a, b in zip(vals, vals[1:]))
    return CheckOutcome("eigenfunction_stability",
                        decreasing and vals[-1] < vals[0],
                        f"normalized drifts {['%.4g' % v for v in vals]}")


def check_norm_decay() -> CheckOutcome:
    """Mass norm of the capacitary potential, squared and divided by the
    capacity, vanishes along a shrinking-hole sweep."""
    grid, omega = _setup_2d(n=33, radius=1.0)
    form = assemble_form(grid, omega, 1, BCKind.dirichlet)
    data = GridFunction(grid, np.ones(grid.node_count))
    vals = []
    for eps in (0.4, 0.3, 0.22, 0.16, 0.12):
        hole = rasterize(grid, Ball([0.0, 0.0], eps))
        res = weighted_capacity(form, hole, data)
        l2sq = float(np.sum(res.potential.values ** 2)) * grid.cell_volume
        vals.append(l2sq / res.value)
    decreasing = all(b <= a * (1 + 0.05) for a, b in zip(vals, vals[1:]))
    return CheckOutcome("norm_decay", decreasing and vals[-1] < vals[0],
                        f"L2^2/cap along sweep {['%.4g' % v for v in vals]}")


ALL_CHECKS = [
    check_hole_monotonicity,
    check_navier_le_dirichlet,
    check_scaling_law,
    check_hardy_rellich,
    check_obstacle_vs_condenser,
    check_stability_ratio,
    check_point_capacity_dichotomy,
    check_eigenfunction_stability,
    check_norm_decay,
]


def run_property_suite(seed: int = 42) -> list[CheckOutcome]:
    """Run every property check with seeds derived from `seed`."""
    outcomes = []
    for k, fn in enumerate(ALL_CHECKS):
        try:
            if "seed" in fn.__code__.co_varnames[:fn.__code__.co_argcount]:
                outcomes.append(fn(seed=seed + k))
            else:
                outcomes.append(fn())
        except Exception as exc:  # a crash is a failure, not an abort
            outcomes.append(CheckOutcome(fn.__name__, False,
                                         f"raised {type(exc).__name__}: {exc}"))
    return outcomes
