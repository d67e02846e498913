"""Discrete polyharmonic quadratic forms with Dirichlet or Navier boundaries.

The energy realized here is

    E(u) = sum over the summation set of |grad_h^m u|^2 * prod(h),

where grad_h^m composes second-order centered Laplacian stencils (plus one
forward-difference gradient when m is odd) and u is extended by zero outside
the domain mask.  The boundary condition lives purely in the summation set:

 * dirichlet: the set includes the ghost band outside the domain that the
   composed stencil can reach, so jumps of the normal derivatives across the
   boundary are penalized (clamped conditions);
 * navier: the set is the domain mask itself, leaving the iterated Laplacian
   free on the boundary (hinged conditions).

For m = 1 the two coincide, as they do in the continuum.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .grid import Grid, NodeMask


class BCKind(str, enum.Enum):
    dirichlet = "dirichlet"
    navier = "navier"


@dataclass(frozen=True)
class GridFunction:
    """One real value per grid node; zero on non-domain nodes by convention."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.node_count,):
            raise ValueError("values length must equal node count")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function values must be finite")
        object.__setattr__(self, "values", v)

    @staticmethod
    def zeros(grid: Grid) -> "GridFunction":
        return GridFunction(grid, np.zeros(grid.node_count))

    @staticmethod
    def from_callable(grid: Grid, f) -> "GridFunction":
        return GridFunction(grid, np.asarray(f(grid.coords()), dtype=float))

    def __add__(self, other):
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other):
        return GridFunction(self.grid, self.values - other.values)

    def __mul__(self, c):
        if isinstance(c, GridFunction):
            return GridFunction(self.grid, self.values * c.values)
        return GridFunction(self.grid, self.values * float(c))

    __rmul__ = __mul__


def _lap1d(n: int, h: float) -> sp.csr_matrix:
    # zero Dirichlet extension beyond both ends: full -2 diagonal
    main = np.full(n, -2.0 / h**2)
    off = np.full(n - 1, 1.0 / h**2)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def _diff1d(n: int, h: float) -> sp.csr_matrix:
    # n+1 edge slots; slot j holds (u_j - u_{j-1})/h with out-of-range u = 0
    rows, cols, vals = [], [], []
    for j in range(n + 1):
        if j < n:
            rows.append(j)
            cols.append(j)
            vals.append(1.0 / h)
        if j > 0:
            rows.append(j)
            cols.append(j - 1)
            vals.append(-1.0 / h)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n + 1, n))


def _kron_chain(mats) -> sp.csr_matrix:
    out = mats[0]
    for m in mats[1:]:
        out = sp.kron(out, m, format="csr")
    return out


def box_laplacian(grid: Grid) -> sp.csr_matrix:
    """Centered 2N+1-point Laplacian on the full box lattice with zero
    extension beyond the box faces."""
    terms = []
    for a in range(grid.ndim):
        mats = [sp.identity(grid.resolution[b], format="csr") for b in range(grid.ndim)]
        mats[a] = _lap1d(grid.resolution[a], grid.h[a])
        terms.append(_kron_chain(mats))
    L = terms[0]
    for t in terms[1:]:
        L = L + t
    return L.tocsr()


def box_gradient(grid: Grid) -> sp.csr_matrix:
    """Stacked per-axis forward-difference operators on edge slots (including
    the slots crossing the box faces, where the outside value is zero)."""
    blocks = []
    for a in range(grid.ndim):
        mats = [sp.identity(grid.resolution[b], format="csr") for b in range(grid.ndim)]
        mats[a] = _diff1d(grid.resolution[a], grid.h[a])
        blocks.append(_kron_chain(mats))
    return sp.vstack(blocks, format="csr")


def _faceband(grid: Grid, depth: int) -> np.ndarray:
    """Boolean mask of nodes within `depth` layers of a box face."""
    if depth <= 0:
        return np.zeros(grid.node_count, dtype=bool)
    m = np.zeros(grid.resolution, dtype=bool)
    for a in range(grid.ndim):
        sl = [slice(None)] * grid.ndim
        sl[a] = slice(0, depth)
        m[tuple(sl)] = True
        sl[a] = slice(-depth, None)
        m[tuple(sl)] = True
    return m.ravel()


@dataclass(frozen=True)
class DiscreteForm:
    """Sparse symmetric realization of the order-m energy on a domain mask.

    S acts on values at the `free` nodes (the omega members); it depends only
    on (grid, m, bc, omega).  `factor` maps free values to the composed
    m-th-derivative samples over the summation set so that
    E(u) = row_weight * |factor @ u|^2, which keeps the bilinear energy
    exactly symmetric in floating point.
    """

    grid: Grid
    m: int
    bc: BCKind
    omega: NodeMask
    free: np.ndarray
    S: sp.csr_matrix
    factor: sp.csr_matrix
    row_weight: float
    summation_nodes: NodeMask | None

    @property
    def n_free(self) -> int:
        return self.free.size

    def restrict(self, u: GridFunction) -> np.ndarray:
        if u.grid is not self.grid and u.grid != self.grid:
            raise ValueError("grid function lives on a different grid")
        return u.values[self.free]

    def extend(self, vals: np.ndarray) -> GridFunction:
        full = np.zeros(self.grid.node_count)
        full[self.free] = vals
        return GridFunction(self.grid, full)

    def energy_free(self, vals: np.ndarray, other: np.ndarray | None = None) -> float:
        eu = self.factor @ vals
        ev = eu if other is None else self.factor @ other
        return self.row_weight * float(np.dot(eu, ev))

    def apply_free(self, vals: np.ndarray) -> np.ndarray:
        return self.S @ vals


def mass_weights(form: DiscreteForm) -> np.ndarray:
    """Lumped mass diagonal (cell volume per free node)."""
    return np.full(form.n_free, form.grid.cell_volume)


def assemble_form(grid: Grid, omega: NodeMask, m: int, bc: BCKind | str) -> DiscreteForm:
    """Assemble the discrete order-m form on the omega mask.

    Raises if omega is empty, thinner than the stencil reach, or (for the
    clamped case) too close to the grid box for its ghost band.
    """
    bc = BCKind(bc)
    if m < 1:
        raise ValueError("operator order m must be >= 1")
    if omega.grid != grid:
        raise ValueError("omega mask belongs to a different grid")
    if omega.is_empty():
        raise ValueError("empty domain mask")
    if omega.erode(m).is_empty():
        raise ValueError("under-resolved domain")

    p = m // 2
    reach = p if m % 2 == 0 else (m - 1) // 2
    if reach > 0 and bool(np.any(omega.membership & _faceband(grid, reach))):
        raise ValueError(
            "domain mask within the composed stencil reach of the grid box; "
            "enlarge the bounding box"
        )

    free = omega.indices
    L = box_laplacian(grid)
    comp = sp.identity(grid.node_count, format="csr")
    for _ in range(p):
        comp = (L @ comp).tocsr()

    summation_nodes = None
    if m % 2 == 0:
        if bc is BCKind.dirichlet:
            summation_nodes = omega.dilate(p)
        else:
            summation_nodes = omega
        rows = summation_nodes.indices
        B = comp[rows][:, free].tocsr()
    else:
        G = box_gradient(grid)
        B = (G @ comp)[:, free].tocsr()

    vol = grid.cell_volume
    S = (vol * (B.T @ B)).tocsr()
    S = ((S + S.T) * 0.5).tocsr()
    return DiscreteForm(grid, m, bc, omega, free, S, B, vol, summation_nodes)


def energy(form: DiscreteForm, u: GridFunction, v: GridFunction | None = None) -> float:
    """Quadratic (or bilinear, when v is given) energy of grid functions.

    Values off the free set are ignored: the form acts on the zero-extended
    restriction to omega.
    """
    uf = form.restrict(u)
    vf = None if v is None else form.restrict(v)
    return form.energy_free(uf, vf)


# ---------------------------------------------------------------------------
# Hardy-Rellich residual check
# ---------------------------------------------------------------------------

_HR_DOC_N = 4  # the weighted inequality needs N > 4


def surface_area(N: int) -> float:
    """Surface measure of the unit sphere in R^N."""
    return 2.0 * math.pi ** (N / 2.0) / math.gamma(N / 2.0)


@dataclass
class HardyRellichResult:
    lhs: float
    rhs: float
    ok: bool
    regularized: bool = False

    def __iter__(self):
        return iter((self.lhs, self.rhs, self.ok))


def hardy_rellich_check(grid: Grid, omega: NodeMask, u: GridFunction, N: int,
                        tol: float = 1e-6) -> HardyRellichResult:
    """Check (N-4)^2 * sum u^2/|x|^4 + 2(N-4) * sum |grad u|^2/|x|^2
    <= sum (lap u)^2 for a function vanishing on the domain boundary.

    On a one-dimensional grid the nodes are radii and the sums are radial
    quadratures in ambient dimension N (the operational mode, since full
    grids stop at four dimensions).  Weight singularities at the origin are
    regularized by |x| -> max(|x|, h/2) and flagged.
    """
    if N <= _HR_DOC_N:
        raise ValueError("Hardy-Rellich check requires ambient dimension N > 4")

    if grid.ndim == 1:
        r = grid.axis_coords(0)
        h = float(grid.h[0])
        vals = np.where(omega.membership, u.values, 0.0)
        regularized = bool(np.any((r < h / 2) & (np.abs(vals) > 0)))
        rs = np.maximum(r, h / 2)
        du = np.gradient(vals, r)
        d2u = np.gradient(du, r)
        lap = d2u + (N - 1) * du / rs
        w = np.full(r.size, h)
        w[0] = w[-1] = h / 2
        w = w * surface_area(N) * rs ** (N - 1)
        lhs = (N - 4) ** 2 * float(np.sum(vals**2 / rs**4 * w)) \
            + 2 * (N - 4) * float(np.sum(du**2 / rs**2 * w))
        rhs = float(np.sum(lap**2 * w))
        return HardyRellichResult(lhs, rhs, lhs <= rhs * (1 + tol), regularized)

    if grid.ndim != N:
        raise ValueError("grid dimension must be 1 (radial) or equal to N")

    # full-grid spot check (only reachable for hypothetical N > 4 grids)
    vals = np.where(omega.membership, u.values, 0.0)
    coords = grid.coords()
    h = float(np.min(grid.h))
    rr = np.linalg.norm(coords, axis=1)
    regularized = bool(np.any((rr < h / 2) & (np.abs(vals) > 0)))
    rr = np.maximum(rr, h / 2)
    vol = grid.cell_volume
    L = box_laplacian(grid)
    lap = np.asarray(L @ vals).ravel()
    inner = omega.membership
    rhs = float(np.sum(lap[inner] ** 2)) * vol
    G = box_gradient(grid)
    gu = np.asarray(G @ vals).ravel()
    # midpoint radii per edge slot, axis by axis
    mids = []
    for a in range(grid.ndim):
        shape = list(grid.resolution)
        shape[a] += 1
        ax = [grid.axis_coords(b) for b in range(grid.ndim)]
        ax[a] = np.concatenate(([ax[a][0] - grid.h[a] / 2],
                                (ax[a][1:] + ax[a][:-1]) / 2,
                                [ax[a][-1] + grid.h[a] / 2]))
        mesh = np.meshgrid(*ax, indexing="ij")
        mids.append(np.linalg.norm(np.stack([m.ravel() for m in mesh], axis=1), axis=1))
    rmid = np.maximum(np.concatenate(mids), h / 2)
    lhs = (N - 4) ** 2 * float(np.sum(vals**2 / rr**4)) * vol \
        + 2 * (N - 4) * float(np.sum(gu**2 / rmid**2)) * vol
    return HardyRellichResult(lhs, rhs, lhs <= rhs * (1 + tol), regularized)
