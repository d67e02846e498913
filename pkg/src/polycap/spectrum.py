"""Lowest eigenpairs of the discrete pencil (S, M) with optional hole.

Hole nodes are constrained to zero, realizing the clamped conditions on the
removed compact set; the remaining generalized symmetric eigenproblem is
solved densely for small systems, by shift-invert Lanczos at moderate size,
and by AMG-preconditioned LOBPCG for large second-order grids.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import NodeMask
from .operator import DiscreteForm, GridFunction
from .solvers import SolverError, make_preconditioner

_DENSE_LIMIT = 1200
_ARPACK_LIMIT = 60_000
SIMPLICITY_GAP = 1e-4


@dataclass
class EigenResult:
    eigenvalues: np.ndarray
    eigenvectors: list
    residuals: np.ndarray
    multiplicity_gaps: np.ndarray
    iterations: int = 0

    def is_simple(self, j: int, gap: float = SIMPLICITY_GAP) -> bool:
        return bool(self.multiplicity_gaps[j] >= gap)


def _gaps(vals: np.ndarray) -> np.ndarray:
    out = np.full(vals.size, np.inf)
    for j in range(vals.size):
        nb = []
        if j > 0:
            nb.append(abs(vals[j] - vals[j - 1]))
        if j < vals.size - 1:
            nb.append(abs(vals[j] - vals[j + 1]))
        if nb:
            out[j] = min(nb) / max(abs(vals[j]), 1e-300)
    return out


def solve_eigs(form: DiscreteForm, mass: np.ndarray,
               hole: NodeMask | None = None, J: int = 1,
               tol: float = 1e-9, seed: int = 42) -> EigenResult:
    """Smallest J eigenpairs of the form restricted to nodes free of both
    the boundary encoding and the hole constraint (hole nodes pinned to 0).

    Eigenvectors come back as M-orthonormal grid functions with the
    largest-magnitude entry positive; clustered eigenvalues are reported
    through `multiplicity_gaps` (the expansion machinery requires a simple
    target eigenvalue).
    """
    if J < 1:
        raise ValueError("need J >= 1")
    if hole is not None and not hole.is_empty():
        if hole.grid != form.grid:
            raise ValueError("hole mask belongs to a different grid")
        if not hole.issubset(form.omega):
            raise ValueError("hole must be contained in the domain mask")
        keep = ~hole.membership[form.free]
        if not np.any(keep):
            raise ValueError("hole constrains every domain node")
    else:
        keep = np.ones(form.n_free, dtype=bool)

    pos = np.flatnonzero(keep)
    if pos.size < J:
        raise ValueError("fewer free nodes than requested eigenpairs")
    S = form.S[pos][:, pos].tocsr()
    mvec = np.asarray(mass, dtype=float)[pos]
    n = pos.size

    if n <= _DENSE_LIMIT:
        vals, vecs, iters = _dense_eigs(S, mvec, J)
    elif n <= _ARPACK_LIMIT or form.m > 1:
        vals, vecs, iters = _arpack_eigs(S, mvec, J, tol, seed)
    else:
        vals, vecs, iters = _lobpcg_eigs(S, mvec, J, tol, seed)

    order = np.argsort(vals)
    vals = vals[order]
    vecs = vecs[:, order]

    # M-normalize, fix signs, compute residuals
    residuals = np.zeros(J)
    out_vecs = []
    for j in range(J):
        v = vecs[:, j]
        nrm = np.sqrt(float(np.dot(v, mvec * v)))
        v = v / nrm
        k = int(np.argmax(np.abs(v)))
        if v[k] < 0:
            v = -v
        vecs[:, j] = v
        num = np.linalg.norm(S @ v - vals[j] * (mvec * v))
        residuals[j] = num / max(np.linalg.norm(mvec * v), 1e-300)
        free_vals = np.zeros(form.n_free)
        free_vals[pos] = v
        out_vecs.append(form.extend(free_vals))

    return EigenResult(vals, out_vecs, residuals, _gaps(vals), iters)


def _dense_eigs(S: sp.csr_matrix, mvec: np.ndarray, J: int):
    A = S.toarray()
    vals, vecs = sla.eigh(A, np.diag(mvec), subset_by_index=[0, J - 1])
    return vals, vecs, 0


def _arpack_eigs(S, mvec, J, tol, seed):
    rng = np.random.default_rng(seed)
    n = S.shape[0]
    M = sp.diags(mvec).tocsc()
    k = min(J, n - 1)
    try:
        vals, vecs = spla.eigsh(S.tocsc(), k=k, M=M, sigma=0.0, which="LM",
                                tol=tol, v0=rng.standard_normal(n))
    except Exception as exc:
        raise SolverError(f"shift-invert eigensolve failed: {exc}") from exc
    return vals, vecs, 0


def _lobpcg_eigs(S, mvec, J, tol, seed):
    import warnings

    rng = np.random.default_rng(seed)
    n = S.shape[0]
    nb = min(max(J + 3, 2 * J), n - 1)
    X = rng.standard_normal((n, nb))
    M = sp.diags(mvec)
    P = make_preconditioner(S, "amg")
    try:
        with warnings.catch_warnings():
            # residuals are re-checked downstream; the postprocessing
            # tolerance warning is noise at this accuracy level
            warnings.simplefilter("ignore", UserWarning)
            vals, vecs = spla.lobpcg(S, X, B=M, M=P, tol=tol * 100,
                                     maxiter=400, largest=False)
    except Exception as exc:
        raise SolverError(f"LOBPCG eigensolve failed: {exc}") from exc
    order = np.argsort(vals)[:J]
    return vals[order], vecs[:, order], 0


def rayleigh_quotient(form: DiscreteForm, mass: np.ndarray,
                      u: GridFunction) -> float:
    """Energy over mass; for eigenvectors this reproduces the eigenvalue."""
    uf = form.restrict(u)
    denom = float(np.dot(uf, np.asarray(mass) * uf))
    if denom <= 0:
        raise ValueError("rayleigh quotient of a zero vector")
    return form.energy_free(uf) / denom
