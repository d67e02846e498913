"""Semi-analytic radial oracle: ball capacities, annulus capacities, and
annulus/ball eigenvalues via spherical-harmonic reduction.

For profiles u = f(r) Y_l(omega) the Laplacian reduces to
L_l f = f'' + (N-1) f'/r - l(l+N-2) f/r^2, so radial polyharmonic problems
become small ODE problems: capacities reduce to linear systems in the power
basis r^beta, eigenvalues to 1D collocation on a mesh graded toward the
inner radius, and unperturbed balls to Bessel functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.special as spec
from scipy.optimize import brentq

from .capacity import CapacityResult
from .operator import BCKind, surface_area as sphere_area
from .solvers import SolverError


def _nu_tilde(N: int) -> float:
    return (N - 2) / 2.0


# ---------------------------------------------------------------------------
# Bessel zeros and ball modes
# ---------------------------------------------------------------------------

def bessel_zero(nu: float, k: int) -> float:
    """k-th positive zero of J_nu, located by sign scanning plus bisection
    (absolute error well below 1e-10)."""
    if nu < 0:
        raise ValueError("order nu must be >= 0")
    if k < 1:
        raise ValueError("zero index k must be >= 1")
    # first zero sits above nu; McMahon spacing approaches pi
    x = max(nu + 1.8557 * max(nu, 1e-8) ** (1 / 3), 0.5)
    step = 0.2
    zeros = []
    f_prev = spec.jv(nu, x)
    while len(zeros) < k:
        x_next = x + step
        f_next = spec.jv(nu, x_next)
        if f_prev == 0.0:
            zeros.append(x)
        elif f_prev * f_next < 0:
            zeros.append(brentq(lambda t: spec.jv(nu, t), x, x_next,
                                xtol=1e-13, rtol=8.9e-16))
        x, f_prev = x_next, f_next
        if x > 1e4:
            raise RuntimeError("bessel zero scan ran away")
    return float(zeros[k - 1])


def clamped_frequency(nu: float, k: int) -> float:
    """k-th positive root of J_nu(x) I_nu'(x) = I_nu(x) J_nu'(x), the
    frequency equation of the clamped ball (value and slope pinned)."""

    def f(x):
        # normalize by I_nu to keep the magnitude tame
        return spec.jv(nu, x) * spec.ivp(nu, x) / spec.iv(nu, x) - spec.jvp(nu, x)

    x = max(nu + 0.5, 0.5)
    step = 0.1
    roots = []
    f_prev = f(x)
    while len(roots) < k:
        x_next = x + step
        f_next = f(x_next)
        if f_prev * f_next < 0:
            roots.append(brentq(f, x, x_next, xtol=1e-13, rtol=8.9e-16))
        x, f_prev = x_next, f_next
        if x > 1e4:
            raise RuntimeError("clamped frequency scan ran away")
    return float(roots[k - 1])


@dataclass(frozen=True)
class BallMode:
    """Eigenmode of the unperturbed unit ball on one spherical-harmonic
    branch, normalized so the full eigenfunction has unit L2 norm."""

    N: int
    m: int
    ell: int
    outer_bc: BCKind
    frequency: float
    eigenvalue: float
    coef_regular: float  # weight of r^{-nt} I_nu(x r) relative to the J part
    amplitude: float

    @property
    def _nu(self) -> float:
        return self.ell + _nu_tilde(self.N)

    def value(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        out = np.empty_like(r)
        nt, nu, x, c = _nu_tilde(self.N), self._nu, self.frequency, self.coef_regular
        small = r < 1e-8
        rb = r[~small]
        out[~small] = rb ** (-nt) * (spec.jv(nu, x * rb) + c * spec.iv(nu, x * rb))
        lead = (1 + c) * (x / 2) ** nu / math.gamma(nu + 1)
        out[small] = lead * r[small] ** self.ell
        return self.amplitude * out

    def derivative(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        nt, nu, x, c = _nu_tilde(self.N), self._nu, self.frequency, self.coef_regular
        g = spec.jv(nu, x * r) + c * spec.iv(nu, x * r)
        gp = spec.jvp(nu, x * r) + c * spec.ivp(nu, x * r)
        return self.amplitude * (-nt * r ** (-nt - 1) * g + x * r ** (-nt) * gp)

    def center_value(self) -> float:
        if self.ell > 0:
            return 0.0
        nu, x, c = self._nu, self.frequency, self.coef_regular
        return self.amplitude * (1 + c) * (x / 2) ** nu / math.gamma(nu + 1)


def ball_modes(m: int, N: int, ell: int, outer_bc: BCKind | str,
               count: int = 1) -> list[BallMode]:
    """Lowest eigenmodes of (-Lap)^m on the unit ball for one harmonic
    branch.  Hinged (navier) fourth-order modes are squared Laplacian
    modes; clamped (dirichlet) ones solve the Bessel-cross frequency
    equation by bisection."""
    outer_bc = BCKind(outer_bc)
    if m not in (1, 2):
        raise ValueError("ball modes implemented for m in {1, 2}")
    nu = ell + _nu_tilde(N)
    modes = []
    for k in range(1, count + 1):
        if m == 1 or outer_bc is BCKind.navier:
            x = bessel_zero(nu, k)
            lam = x ** 2 if m == 1 else x ** 4
            c = 0.0
        else:
            x = clamped_frequency(nu, k)
            lam = x ** 4
            c = -spec.jv(nu, x) / spec.iv(nu, x)
        mode = BallMode(N, m, ell, outer_bc, x, lam, c, 1.0)
        ang = sphere_area(N) if ell == 0 else 1.0
        r = np.linspace(0.0, 1.0, 4001)
        f = mode.value(r)
        nrm2 = ang * _simpson(f * f * r ** (N - 1), r[1] - r[0])
        amp = 1.0 / math.sqrt(nrm2)
        if mode.value(np.array([0.25]))[0] * amp < 0 and ell == 0:
            amp = -amp
        modes.append(BallMode(N, m, ell, outer_bc, x, lam, c, amp))
    return modes


def _simpson(y: np.ndarray, h: float) -> float:
    n = y.size
    if n % 2 == 0:
        raise ValueError("simpson needs an odd number of nodes")
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return float(np.dot(w, y)) * h / 3.0


# ---------------------------------------------------------------------------
# Closed-form ball and annulus capacities
# ---------------------------------------------------------------------------

def _power_integral(s: float, a: float, b: float) -> float:
    """Integral of r^s over [a, b] (b may be inf when s < -1)."""
    if math.isinf(b):
        if s >= -1:
            raise ValueError("divergent exterior integral")
        return -(a ** (s + 1)) / (s + 1)
    if abs(s + 1) < 1e-12:
        return math.log(b / a)
    return (b ** (s + 1) - a ** (s + 1)) / (s + 1)


@dataclass(frozen=True)
class RadialPotential:
    """Potential W(r) = sum c_i r^{beta_i} on [r_inner, r_outer] for one
    harmonic branch."""

    exponents: tuple
    coeffs: tuple
    r_inner: float
    r_outer: float
    N: int
    ell: int

    def value(self, r):
        r = np.asarray(r, dtype=float)
        return sum(c * r ** b for c, b in zip(self.coeffs, self.exponents))

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        return sum(c * b * r ** (b - 1.0) for c, b in zip(self.coeffs, self.exponents))


def _capacity_exponents(m: int, N: int, ell: int, exterior: bool) -> list[float]:
    if m == 1:
        exp = [2.0 - N - ell] if exterior else [float(ell), 2.0 - N - ell]
    elif m == 2:
        exp = ([2.0 - N - ell, 4.0 - N - ell] if exterior
               else [float(ell), float(ell) + 2.0, 2.0 - N - ell, 4.0 - N - ell])
    else:
        raise ValueError("radial capacities implemented for m in {1, 2}")
    uniq = sorted(exp)
    for x, y in zip(uniq, uniq[1:]):
        if abs(x - y) < 1e-9:
            raise ValueError(
                f"logarithmic radial basis for N={N}, m={m}, ell={ell}; "
                "dimension excluded")
    return exp


def _capacity_value(m, N, ell, exps, coeffs, a, b, ang) -> float:
    q = ell * (ell + N - 2)
    total = 0.0
    if m == 2:
        kappa = [be * (be + N - 2) - q for be in exps]
        for ci, bi, ki in zip(coeffs, exps, kappa):
            for cj, bj, kj in zip(coeffs, exps, kappa):
                if ki == 0.0 or kj == 0.0:
                    continue
                total += ci * cj * ki * kj * _power_integral(bi + bj - 4 + N - 1, a, b)
    else:
        for ci, bi in zip(coeffs, exps):
            for cj, bj in zip(coeffs, exps):
                total += ci * cj * (bi * bj + q) * _power_integral(bi + bj - 2 + N - 1, a, b)
    return ang * total


def annulus_capacity_general(m: int, N: int, ell: int, r_inner: float,
                             r_outer: float, v: float, s: float,
                             outer_bc: BCKind | str,
                             angular_norm: float | None = None) -> CapacityResult:
    """Weighted capacity of the ball r <= r_inner inside the ball
    r <= r_outer, for data with radial profile value v and slope s at the
    inner sphere, on the harmonic branch ell.

    The potential is solved exactly in the power basis; the capacity is the
    closed-form energy integral times the angular factor (sphere area for
    ell = 0, or the squared angular norm of the harmonic otherwise).
    """
    outer_bc = BCKind(outer_bc)
    if not (0 < r_inner < r_outer):
        raise ValueError("need 0 < r_inner < r_outer")
    ang = angular_norm if angular_norm is not None else (
        sphere_area(N) if ell == 0 else 1.0)
    exps = _capacity_exponents(m, N, ell, exterior=False)
    a, b = float(r_inner), float(r_outer)
    q = ell * (ell + N - 2)

    rows, rhs = [], []
    rows.append([a ** be for be in exps]); rhs.append(v)
    if m == 2:
        rows.append([be * a ** (be - 1) for be in exps]); rhs.append(s)
    rows.append([b ** be for be in exps]); rhs.append(0.0)
    if m == 2:
        if outer_bc is BCKind.dirichlet:
            rows.append([be * b ** (be - 1) for be in exps])
        else:
            rows.append([(be * (be + N - 2) - q) * b ** (be - 2) for be in exps])
        rhs.append(0.0)

    A = np.asarray(rows, dtype=float)
    y = np.asarray(rhs, dtype=float)
    try:
        coeffs = sla.solve(A, y)
    except sla.LinAlgError as exc:
        raise ValueError(f"singular radial system: {exc}") from exc
    resid = float(np.linalg.norm(A @ coeffs - y))
    value = _capacity_value(m, N, ell, exps, coeffs, a, b, ang)
    pot = RadialPotential(tuple(exps), tuple(coeffs), a, b, N, ell)
    return CapacityResult(max(value, 0.0), pot, 0, resid, frozenset())


def annulus_weighted_capacity(m: int, N: int, eps: float, v: float, s: float,
                              outer_bc: BCKind | str) -> CapacityResult:
    """Weighted capacity of the ball of radius eps in the unit ball, with
    prescribed boundary value and slope at r = eps (radial branch)."""
    return annulus_capacity_general(m, N, 0, eps, 1.0, v, s, outer_bc)


def ball_capacity_exact(m: int, N: int, radius: float = 1.0) -> float:
    """Whole-space capacity of a closed ball (data 1), from the exterior
    radial minimizer: (N-2)|S^{N-1}| r^{N-2} for m = 1 and
    (N-2)^2 (N-4) |S^{N-1}| r^{N-4} for m = 2."""
    if N <= 2 * m:
        raise ValueError("whole-space ball capacity degenerates for N <= 2m")
    if radius <= 0:
        raise ValueError("radius must be > 0")
    exps = _capacity_exponents(m, N, 0, exterior=True)
    a = float(radius)
    rows = [[a ** be for be in exps]]
    rhs = [1.0]
    if m == 2:
        rows.append([be * a ** (be - 1) for be in exps])
        rhs.append(0.0)
    coeffs = sla.solve(np.asarray(rows), np.asarray(rhs))
    return _capacity_value(m, N, 0, exps, coeffs, a, math.inf, sphere_area(N))


def exterior_ball_weighted_capacity(m: int, N: int, ell: int, v: float,
                                    s: float, radius: float = 1.0,
                                    angular_norm: float | None = None) -> float:
    """Whole-space weighted capacity of a ball for data f(r) Y_l with
    f(radius) = v, f'(radius) = s."""
    if N <= 2 * m:
        raise ValueError("whole-space capacity degenerates for N <= 2m")
    ang = angular_norm if angular_norm is not None else (
        sphere_area(N) if ell == 0 else 1.0)
    exps = _capacity_exponents(m, N, ell, exterior=True)
    a = float(radius)
    rows = [[a ** be for be in exps]]
    rhs = [v]
    if m == 2:
        rows.append([be * a ** (be - 1) for be in exps])
        rhs.append(s)
    coeffs = sla.solve(np.asarray(rows), np.asarray(rhs))
    return _capacity_value(m, N, ell, exps, coeffs, a, math.inf, ang)


# ---------------------------------------------------------------------------
# Annulus eigenvalues by graded collocation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RadialProblem:
    """Annulus eigenproblem for (-Lap)^m on one harmonic branch: inner
    radius eps with clamped (Dirichlet) hole conditions, outer radius 1 with
    the chosen boundary condition."""

    N: int
    m: int
    ell: int
    inner_radius: float
    outer_bc: BCKind

    def __post_init__(self):
        object.__setattr__(self, "outer_bc", BCKind(self.outer_bc))
        if not (0 < self.inner_radius < 1):
            raise ValueError("inner radius must lie in (0, 1)")
        if self.m not in (1, 2):
            raise ValueError("radial eigensolver supports m in {1, 2}")
        if self.N < 2:
            raise ValueError("need dimension N >= 2")


@dataclass
class RadialProfile:
    """Eigenfunction profile on the mesh: nodal values and slopes."""

    nodes: np.ndarray
    values: np.ndarray
    slopes: np.ndarray

    def __call__(self, r) -> np.ndarray:
        """Piecewise cubic Hermite evaluation."""
        r = np.asarray(r, dtype=float)
        idx = np.clip(np.searchsorted(self.nodes, r) - 1, 0,
                      self.nodes.size - 2)
        r0, r1 = self.nodes[idx], self.nodes[idx + 1]
        le = r1 - r0
        x = (r - r0) / le
        h00 = 1 - 3 * x**2 + 2 * x**3
        h10 = x - 2 * x**2 + x**3
        h01 = 3 * x**2 - 2 * x**3
        h11 = -(x**2) + x**3
        return (h00 * self.values[idx] + le * h10 * self.slopes[idx]
                + h01 * self.values[idx + 1] + le * h11 * self.slopes[idx + 1])


@dataclass
class RadialEigenResult:
    eigenvalues: np.ndarray
    raw_eigenvalues: np.ndarray
    residuals: np.ndarray
    multiplicity_gaps: np.ndarray
    nodes: np.ndarray
    profiles: list
    mesh_size: int
    converged: bool


_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(5)
_GX = (_GAUSS_X + 1.0) / 2.0
_GW = _GAUSS_W / 2.0


def _hermite_shapes(x: np.ndarray, le: float):
    """Cubic Hermite shape functions and r-derivatives at points x of the
    unit reference element of length le (slope dofs in r units)."""
    one = np.ones_like(x)
    H = np.stack([
        1 - 3 * x**2 + 2 * x**3,
        le * (x - 2 * x**2 + x**3),
        3 * x**2 - 2 * x**3,
        le * (-(x**2) + x**3),
    ])
    dH = np.stack([
        (-6 * x + 6 * x**2) / le,
        one - 4 * x + 3 * x**2,
        (6 * x - 6 * x**2) / le,
        -2 * x + 3 * x**2,
    ])
    d2H = np.stack([
        (-6 + 12 * x) / le**2,
        (-4 + 6 * x) / le,
        (6 - 12 * x) / le**2,
        (-2 + 6 * x) / le,
    ])
    return H, dH, d2H


def graded_mesh(r_inner: float, r_outer: float, n: int) -> np.ndarray:
    """Nodes r_inner * (r_outer/r_inner)^t, t uniform in [0, 1]; clusters at
    the inner radius where the potential has its layer."""
    t = np.linspace(0.0, 1.0, n)
    return r_inner * (r_outer / r_inner) ** t


def _hermite_system(problem: RadialProblem, n: int):
    """Assemble the weighted form and mass in a C^1 cubic Hermite basis on
    the graded mesh: conforming for the fourth-order energy, so the discrete
    eigenvalues are free of spurious modes and converge from above."""
    nodes = graded_mesh(problem.inner_radius, 1.0, n)
    N, m, ell = problem.N, problem.m, problem.ell
    q = ell * (ell + N - 2)
    ndof = 2 * n
    rows, cols, a_vals, m_vals = [], [], [], []
    for e in range(n - 1):
        r0, r1 = nodes[e], nodes[e + 1]
        le = r1 - r0
        rg = r0 + _GX * le
        H, dH, d2H = _hermite_shapes(_GX, le)
        wq = _GW * le * rg ** (N - 1)
        if m == 2:
            Lp = d2H + (N - 1) / rg * dH - q / rg**2 * H
            Ae = (Lp * wq) @ Lp.T
        else:
            Ae = (dH * wq) @ dH.T + (H * (wq * q / rg**2)) @ H.T
        Me = (H * wq) @ H.T
        dofs = [2 * e, 2 * e + 1, 2 * e + 2, 2 * e + 3]
        for i in range(4):
            for j in range(4):
                rows.append(dofs[i])
                cols.append(dofs[j])
                a_vals.append(Ae[i, j])
                m_vals.append(Me[i, j])
    A = sp.csr_matrix((a_vals, (rows, cols)), shape=(ndof, ndof))
    M = sp.csr_matrix((m_vals, (rows, cols)), shape=(ndof, ndof))

    fixed = [0]
    if m == 2:
        fixed.append(1)
    fixed.append(2 * (n - 1))
    if m == 2 and problem.outer_bc is BCKind.dirichlet:
        fixed.append(2 * (n - 1) + 1)
    keep = np.setdiff1d(np.arange(ndof), np.array(fixed))
    return A, M, keep, nodes


def _hermite_eigs(problem: RadialProblem, count: int, n: int):
    A, M, keep, nodes = _hermite_system(problem, n)
    Ak = A[keep][:, keep].tocsc()
    Mk = M[keep][:, keep].tocsc()
    k = min(count, Ak.shape[0] - 1)
    if Ak.shape[0] <= 400:
        vals_all, vecs_all = sla.eigh(Ak.toarray(), Mk.toarray())
        vals, vecs = vals_all[:k], vecs_all[:, :k]
    else:
        import scipy.sparse.linalg as spla

        vals, vecs = spla.eigsh(Ak, k=k, M=Mk, sigma=0.0, which="LM")
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    residuals = []
    for j in range(k):
        z = vecs[:, j]
        num = np.linalg.norm(Ak @ z - vals[j] * (Mk @ z))
        residuals.append(num / max(np.linalg.norm(Mk @ z), 1e-300))
    return np.asarray(vals), vecs, np.asarray(residuals), keep, nodes, Mk


def radial_eigs(problem: RadialProblem, count: int = 1, tol: float = 1e-6,
                n0: int = 65, max_doublings: int = 4) -> RadialEigenResult:
    """Lowest eigenvalues of the annulus problem, mesh-doubling the graded
    mesh until successive values agree to relative `tol`, then Richardson
    accelerating the fourth-order pair."""
    if n0 < 64:
        n0 = 65
    prev = None
    n = n0
    for _ in range(max_doublings + 1):
        vals, vecs, resid, keep, nodes, Mk = _hermite_eigs(problem, count, n)
        if prev is not None and prev.size == vals.size:
            rel = np.abs(vals - prev) / np.maximum(np.abs(vals), 1e-300)
            if np.all(rel <= tol):
                extrap = vals + (vals - prev) / 15.0
                ang = sphere_area(problem.N) if problem.ell == 0 else 1.0
                profiles = []
                for j in range(vals.size):
                    full = np.zeros(2 * n)
                    z = vecs[:, j]
                    nrm = math.sqrt(ang * float(z @ (Mk @ z)))
                    full[keep] = z / nrm
                    fvals = full[0::2]
                    fslopes = full[1::2]
                    if fvals[np.argmax(np.abs(fvals))] < 0:
                        fvals, fslopes = -fvals, -fslopes
                    profiles.append(RadialProfile(nodes, fvals, fslopes))
                gaps = _relative_gaps(extrap)
                return RadialEigenResult(extrap, vals, resid, gaps, nodes,
                                         profiles, n, True)
        prev = vals
        n = 2 * n - 1
    raise SolverError(
        f"radial eigensolve did not reach rtol={tol:g} after "
        f"{max_doublings} mesh doublings", partial=prev)


def _relative_gaps(vals: np.ndarray) -> np.ndarray:
    gaps = np.full(vals.size, np.inf)
    for j in range(vals.size):
        neighbors = []
        if j > 0:
            neighbors.append(abs(vals[j] - vals[j - 1]))
        if j < vals.size - 1:
            neighbors.append(abs(vals[j] - vals[j + 1]))
        if neighbors:
            gaps[j] = min(neighbors) / max(abs(vals[j]), 1e-300)
    return gaps


def merged_spectrum(N: int, m: int, outer_bc: BCKind | str, eps: float,
                    count: int = 6, ell_max: int = 4,
                    per_ell: int = 3) -> list[tuple[float, int]]:
    """Scan harmonic branches ell = 0..ell_max and merge the lowest
    eigenvalues (each listed once per branch, not with multiplicity)."""
    found = []
    for ell in range(ell_max + 1):
        if eps == 0.0:
            modes = ball_modes(m, N, ell, outer_bc, per_ell)
            found.extend((mo.eigenvalue, ell) for mo in modes)
        else:
            prob = RadialProblem(N, m, ell, eps, BCKind(outer_bc))
            res = radial_eigs(prob, per_ell)
            found.extend((float(v), ell) for v in res.eigenvalues)
    found.sort(key=lambda p: p[0])
    return found[:count]
