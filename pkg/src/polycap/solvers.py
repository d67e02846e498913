"""Shared sparse linear-algebra helpers: preconditioned CG and errors."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SolverError(RuntimeError):
    """Raised when an iterative solver fails to converge.

    Carries the last iterate (if any) in `.partial` for diagnostics.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


# problem size above which the auto preconditioner switches to AMG
_AMG_THRESHOLD = 40_000


def make_preconditioner(A: sp.csr_matrix, kind: str = "auto"):
    """Return a LinearOperator preconditioner for the SPD matrix A.

    kind: 'diag' (Jacobi), 'amg' (smoothed aggregation), or 'auto' which
    picks AMG for large systems when pyamg is importable.
    """
    n = A.shape[0]
    if kind == "auto":
        kind = "amg" if n > _AMG_THRESHOLD else "diag"
    if kind == "amg":
        try:
            import pyamg

            ml = pyamg.smoothed_aggregation_solver(A.tocsr())
            return ml.aspreconditioner(cycle="V")
        except Exception:
            kind = "diag"
    d = A.diagonal()
    d = np.where(d > 0, d, 1.0)
    inv = 1.0 / d
    return spla.LinearOperator(A.shape, matvec=lambda x: inv * x)


def restricted_operator(P, positions: np.ndarray, full_n: int):
    """View a full-space preconditioner as an operator on a subset of
    unknowns (zero-extend, apply, restrict).  For pinned-node systems whose
    constrained set is small this stays an effective preconditioner while
    letting one AMG hierarchy serve every sub-solve."""
    positions = np.asarray(positions)

    def mv(x):
        buf = np.zeros(full_n)
        buf[positions] = x
        return (P @ buf)[positions]

    return spla.LinearOperator((positions.size, positions.size), matvec=mv)


def cg_solve(A: sp.csr_matrix, b: np.ndarray, tol: float = 1e-10,
             maxiter: int | None = None, precond="auto",
             x0: np.ndarray | None = None) -> tuple[np.ndarray, int, float]:
    """Solve SPD system A x = b by preconditioned conjugate gradients.

    `precond` is 'auto'/'diag'/'amg' or a ready LinearOperator of matching
    shape.  Returns (x, iterations, relative residual).  Raises SolverError
    on non-convergence.
    """
    if b.size == 0:
        return np.zeros(0), 0, 0.0
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(b), 0, 0.0
    if maxiter is None:
        maxiter = max(1000, 20 * int(np.sqrt(A.shape[0])))
    if isinstance(precond, str):
        M = make_preconditioner(A, precond)
    else:
        M = precond
    count = [0]

    def _cb(xk):
        count[0] += 1

    x, info = spla.cg(A, b, rtol=tol, atol=0.0, maxiter=maxiter, M=M,
                      x0=x0, callback=_cb)
    res = float(np.linalg.norm(A @ x - b)) / bnorm
    if info > 0 and res > 10 * tol:
        raise SolverError(
            f"CG failed to reach rtol={tol:g} in {maxiter} iterations "
            f"(residual {res:.3e})", partial=x)
    return x, count[0], res
