"""Small direct/iterative solver helpers shared by the cell, micro and macro solvers."""
import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import LinearSolverStall, SingularSystem


def factorize(M):
    """Sparse LU of ``M``; SingularSystem if the factorization breaks down."""
    try:
        return splu(sp.csc_matrix(M))
    except RuntimeError as exc:
        raise SingularSystem(str(exc)) from exc


def pin_first_row(M):
    """Replace row 0 of a square sparse matrix by the unit row e_0^T."""
    M = sp.csr_matrix(M, copy=True)
    M = M.tolil()
    M.rows[0] = [0]
    M.data[0] = [1.0]
    return M.tocsc()


class ZeroMeanPoisson:
    """Solve ``L x = b`` for a symmetric operator with constant null space.

    ``b`` is projected onto the range, the first (redundant) equation is
    replaced by x_0 = 0 and the result is shifted to zero mean.
    """

    def __init__(self, L):
        self.n = L.shape[0]
        self.lu = factorize(pin_first_row(L))

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        rhs = b - b.mean()
        rhs[0] = 0.0
        x = self.lu.solve(rhs)
        if not np.all(np.isfinite(x)):
            raise SingularSystem("pinned Poisson solve produced non-finite values")
        return x - x.mean()


def schur_cg(solve_A, G, f, rtol=1e-13, maxiter=2000):
    """Pressure-Schur conjugate gradients for  A u + G p = f,  G^T u = 0.

    ``solve_A`` applies A^{-1}.  The Schur operator G^T A^{-1} G has the
    constants in its null space, so p is kept at zero mean.  Returns
    ``(u, p, iterations, relative_residual)``.
    """
    u0 = solve_A(f)
    b = G.T @ u0
    bnorm = np.linalg.norm(b)
    p = np.zeros(G.shape[1])
    if bnorm == 0.0:
        return u0, p, 0, 0.0
    r = b.copy()
    r -= r.mean()
    d = r.copy()
    rr = r @ r
    it = 0
    while np.sqrt(rr) > rtol * bnorm:
        if it >= maxiter:
            raise LinearSolverStall("pressure Schur CG did not converge", np.sqrt(rr) / bnorm)
        Sd = G.T @ solve_A(G @ d)
        alpha = rr / (d @ Sd)
        p += alpha * d
        r -= alpha * Sd
        r -= r.mean()
        rr_new = r @ r
        d = r + (rr_new / rr) * d
        rr = rr_new
        it += 1
    p -= p.mean()
    u = solve_A(f - G @ p)
    return u, p, it, float(np.sqrt(rr) / bnorm)
