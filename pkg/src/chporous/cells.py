"""Periodic cell problems: scalar correctors, Stokes correctors, effective tensors."""
from dataclasses import dataclass, field

import numpy as np

from .errors import LinearSolverStall, NoSolidInclusion, SingularSystem, ValidationError
from .geometry import connectivity_check
from .linalg import ZeroMeanPoisson, factorize, schur_cg
from .mac import StaggeredGrid


def cell_grid(cell, periodic=True):
    return StaggeredGrid(cell.chi.astype(bool), 1.0 / cell.n_cell, periodic=periodic)


@dataclass
class CorrectorSolution:
    """Zero-mean periodic correctors xi_j, one pore-cell vector per direction."""
    grid: StaggeredGrid = field(repr=False)
    xi: list = field(repr=False)
    residuals: list

    def xi_array(self, j, fill=np.nan):
        return self.grid.to_array(self.xi[j], fill)


@dataclass
class StokesCorrector:
    """Unit-forced periodic Stokes solutions (omega_j on faces, pi_j on cells)."""
    grid: StaggeredGrid = field(repr=False)
    mu: float
    omega: list = field(repr=False)
    pi: list = field(repr=False)
    residuals: list
    iterations: list


@dataclass
class EffectiveTensors:
    A_hom: np.ndarray
    K: np.ndarray
    porosity: float
    n_cell: int = 0
    mu: float = 1.0
    inclusion: str = ""
    residuals: dict = field(default_factory=dict)

    def __post_init__(self):
        self.A_hom = np.asarray(self.A_hom, dtype=float)
        if self.K is not None:
            self.K = np.asarray(self.K, dtype=float)
        validate_tensors(self.A_hom, self.K, self.porosity)

    @property
    def dim(self):
        return self.A_hom.shape[0]


def _rel_asym(T):
    return float(np.abs(T - T.T).max() / max(np.abs(T).max(), 1e-300))


def validate_tensors(A, K, porosity, tol=1e-8):
    if _rel_asym(A) > tol:
        raise ValidationError(f"A_hom not symmetric (relative {_rel_asym(A):.2e})")
    ev = np.linalg.eigvalsh(0.5 * (A + A.T))
    if ev.min() <= 0.0:
        raise ValidationError(f"A_hom not positive definite (lambda_min = {ev.min():.3e})")
    if ev.max() > porosity + tol:
        raise ValidationError(f"A_hom violates the bound lambda_max <= porosity ({ev.max()} > {porosity})")
    if K is not None:
        if _rel_asym(K) > tol:
            raise ValidationError(f"K not symmetric (relative {_rel_asym(K):.2e})")
        kv = np.linalg.eigvalsh(0.5 * (K + K.T))
        if kv.min() < -tol * max(kv.max(), 1e-300):
            raise ValidationError(f"K not positive semidefinite (lambda_min = {kv.min():.3e})")


def solve_scalar_corrector(cell, tol=1e-10):
    """Solve div(grad xi_j + e_j) = 0 in Y_p, no flux on the solid, periodic, zero mean."""
    if not connectivity_check(cell.chi):
        raise SingularSystem("pore space is disconnected; corrector is not unique")
    g = cell_grid(cell)
    solver = ZeroMeanPoisson(g.lap)
    xi, res = [], []
    for j in range(cell.dim):
        rhs = -(g.div @ g.unit_faces(j))
        x = solver.solve(rhs)
        r = np.linalg.norm(g.lap @ x - rhs) / max(np.linalg.norm(rhs), 1.0)
        if r > tol:
            raise LinearSolverStall("scalar corrector residual above tolerance", r)
        xi.append(x)
        res.append(float(r))
    return CorrectorSolution(g, xi, res)


def effective_diffusion(cell, corrector, form="flux"):
    """A_hom[i, j] = (1/|Y|) int_{Y_p} (delta_ij + d xi_j / d y_i) dy.

    ``form="energy"`` evaluates the equivalent quadratic form
    int (e_i + grad xi_i) . (e_j + grad xi_j).
    """
    g = corrector.grid
    d = cell.dim
    flux = [g.unit_faces(j) + g.grad @ corrector.xi[j] for j in range(d)]
    A = np.zeros((d, d))
    for i in range(d):
        for j in range(d):
            if form == "flux":
                A[i, j] = g.vol * flux[j][g.face_slice(i)].sum()
            elif form == "energy":
                A[i, j] = g.inner_faces(flux[i], flux[j])
            else:
                raise ValueError(f"unknown form {form!r}")
    return A


class CellStokes:
    """Factorized periodic Stokes operator on a cell, reusable for many forcings."""

    def __init__(self, cell, mu=1.0, rtol=1e-13):
        if not cell.has_solid:
            raise NoSolidInclusion("periodic Stokes cell problem needs a solid inclusion")
        self.cell = cell
        self.mu = float(mu)
        self.rtol = rtol
        self.grid = cell_grid(cell)
        self.A = self.mu * self.grid.vlap
        self._lu = factorize(self.A)

    def solve(self, force):
        """Solve mu A omega + G pi = force, G^T omega = 0 (zero-mean pi)."""
        g = self.grid
        u, p, it, res = schur_cg(self._lu.solve, g.grad, force, rtol=self.rtol)
        r = np.linalg.norm(self.A @ u + g.grad @ p - force) / max(np.linalg.norm(force), 1e-300)
        return u, p, it, max(res, float(r))

    def average(self, u):
        """Cell average (1/|Y|) int_{Y_p} u of a face field, per component."""
        g = self.grid
        return np.array([g.vol * u[g.face_slice(i)].sum() for i in range(g.dim)])


def solve_stokes_corrector(cell, mu=1.0, rtol=1e-13, tol=1e-9):
    """Solve -mu Lap omega_j + grad pi_j = e_j, div omega_j = 0, omega_j = 0 on the solid."""
    cs = CellStokes(cell, mu, rtol)
    omega, pi, res, its = [], [], [], []
    for j in range(cell.dim):
        u, p, it, r = cs.solve(cs.grid.unit_faces(j))
        if r > tol:
            raise LinearSolverStall("Stokes corrector residual above tolerance", r)
        omega.append(u)
        pi.append(p)
        res.append(r)
        its.append(it)
    return StokesCorrector(cs.grid, cs.mu, omega, pi, res, its)


def permeability(cell, stokes_corrector):
    """K[i, j] = (1/|Y|) int_{Y_p} omega_j . e_i dy."""
    g = stokes_corrector.grid
    d = cell.dim
    K = np.zeros((d, d))
    for i in range(d):
        for j in range(d):
            K[i, j] = g.vol * stokes_corrector.omega[j][g.face_slice(i)].sum()
    return K


@dataclass
class WCellReport:
    dim: int
    porosity: float
    defect: float
    residual: float
    consistent: bool
    message: str

    def text(self):
        return (f"w-cell problem (Hessian = identity, no-flux boundary)\n"
                f"  dim = {self.dim}, porosity = {self.porosity!r}\n"
                f"  compatibility defect int_Yp d dy = {self.defect!r}\n"
                f"  least-squares residual = {self.residual!r}\n"
                f"  consistent: {self.consistent}\n  {self.message}")


def solve_w_cell(cell):
    """Attempt Lap xi_w = d on Y_p with no-flux data; report the compatibility defect.

    Summing the discrete Laplacian over the pore cells telescopes to zero, so
    any solution would need int_{Y_p} d dy = 0.  The defect d |Y_p| is
    returned together with the least-squares (range-projected) solution.
    """
    g = cell_grid(cell, periodic=False)
    rhs = np.full(g.n_cells, float(cell.dim))
    defect = g.vol * rhs.sum()
    xi = ZeroMeanPoisson(g.lap).solve(rhs)
    residual = np.sqrt(g.inner_cells(g.lap @ xi - rhs, g.lap @ xi - rhs))
    consistent = abs(defect) <= 1e-12
    msg = ("over-determined as stated: trace of the Hessian condition forces Lap xi = d, "
           "whose integral over Y_p cannot vanish under the no-flux condition; "
           "returned field is the least-squares solution")
    return xi, WCellReport(cell.dim, cell.porosity, float(defect), float(residual), consistent, msg)


def compute_tensors(cell, mu=1.0):
    """Scalar and Stokes correctors and the resulting effective tensors."""
    corr = solve_scalar_corrector(cell)
    A = effective_diffusion(cell, corr)
    A = 0.5 * (A + A.T)
    K = None
    res = {"corrector": max(corr.residuals)}
    if cell.has_solid:
        sc = solve_stokes_corrector(cell, mu)
        K = permeability(cell, sc)
        K = 0.5 * (K + K.T)
        res["stokes"] = max(sc.residuals)
    return EffectiveTensors(A, K, cell.porosity, cell.n_cell, float(mu), str(cell.inclusion), res)
