"""Discrete unfolding operator, harmonic extension and two-scale metrics.

With eps = 1/N and n_macro = N n_cell the unfolding of a lattice field is
an exact re-indexing: global index k n_cell + m  ->  (block k, cell index m).
Integrals and L2 norms on the product lattice use the weight
(1/N)^d (1/n_cell)^d = h^d, so they coincide with those on Omega.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import MisalignedGrids
from .linalg import factorize


@dataclass
class TwoScaleField:
    """Values on the product lattice, shape (N,)*d + (n_cell,)*d."""
    values: np.ndarray = field(repr=False)
    N: int
    n_cell: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        d = self.values.ndim // 2
        if self.values.ndim % 2 or self.values.shape != (self.N,) * d + (self.n_cell,) * d:
            raise MisalignedGrids(f"values of shape {self.values.shape} do not match "
                                  f"N={self.N}, n_cell={self.n_cell}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("two-scale field must be finite")

    @property
    def dim(self):
        return self.values.ndim // 2

    @property
    def weight(self):
        return (1.0 / (self.N * self.n_cell)) ** self.dim

    def integral(self):
        return float(self.values.sum()) * self.weight

    def norm(self):
        return float(np.sqrt(np.sum(self.values ** 2) * self.weight))

    def cell_average(self):
        """(1/|Y|) int_Y over the fast variable, shape (N,)*d."""
        d = self.dim
        return self.values.mean(axis=tuple(range(d, 2 * d)))

    def __sub__(self, other):
        _check_pair(self, other)
        return TwoScaleField(self.values - other.values, self.N, self.n_cell)

    @classmethod
    def from_function(cls, func, N, n_cell, dim=2):
        """Sample u0(x, y) at block centers x_k = (k+1/2)/N and y_m = (m+1/2)/n_cell.

        ``func`` receives two lists of broadcastable coordinate arrays,
        ``func(x, y)`` with ``x = [x_1, ..., x_d]``, ``y = [y_1, ..., y_d]``.
        """
        xk = (np.arange(N) + 0.5) / N
        ym = (np.arange(n_cell) + 0.5) / n_cell
        grids = np.meshgrid(*([xk] * dim + [ym] * dim), indexing="ij", sparse=True)
        vals = func(list(grids[:dim]), list(grids[dim:]))
        vals = np.broadcast_to(np.asarray(vals, dtype=float), (N,) * dim + (n_cell,) * dim)
        return cls(np.array(vals), N, n_cell)


def _check_pair(a, b):
    if (a.N, a.n_cell, a.dim) != (b.N, b.n_cell, b.dim):
        raise MisalignedGrids(f"two-scale lattices differ: ({a.N}, {a.n_cell}) vs ({b.N}, {b.n_cell})")


def _grid_sizes(grid):
    return grid.N, grid.cell.n_cell, grid.cell.dim


def unfold_array(arr, N, n_cell):
    arr = np.asarray(arr, dtype=float)
    d = arr.ndim
    if arr.shape != (N * n_cell,) * d:
        raise MisalignedGrids(f"field of shape {arr.shape} is not aligned with N={N}, n_cell={n_cell}")
    blocks = arr.reshape(sum(((N, n_cell) for _ in range(d)), ()))
    order = tuple(range(0, 2 * d, 2)) + tuple(range(1, 2 * d, 2))
    return blocks.transpose(order)


def unfold(field, grid):
    """T^eps of a field given on the whole macro lattice of ``grid``."""
    N, n_cell, _ = _grid_sizes(grid)
    return TwoScaleField(np.ascontiguousarray(unfold_array(field, N, n_cell)), N, n_cell)


def fold(tsf):
    """Inverse of ``unfold``."""
    d = tsf.dim
    order = sum(((a, a + d) for a in range(d)), ())
    return np.ascontiguousarray(tsf.values.transpose(order)).reshape((tsf.N * tsf.n_cell,) * d)


_EXT_CACHE = {}


def _extension_solver(grid):
    key = id(grid)
    hit = _EXT_CACHE.get(key)
    if hit is not None and hit[0] is grid:
        return hit[1]
    chi = np.asarray(grid.chi_eps, dtype=bool)
    shape = chi.shape
    solid = ~chi
    sid = np.full(shape, -1, dtype=np.int64)
    sid[solid] = np.arange(int(solid.sum()))
    pid = np.full(shape, -1, dtype=np.int64)
    pid[chi] = np.arange(int(chi.sum()))
    spos = np.argwhere(solid)
    ns = len(spos)
    rows, cols, vals = [], [], []
    brow, bcol = [], []
    diag = np.zeros(ns)
    for a in range(chi.ndim):
        for s in (-1, 1):
            npos = spos.copy()
            npos[:, a] += s
            inside = (npos[:, a] >= 0) & (npos[:, a] < shape[a])
            npos[:, a] = np.clip(npos[:, a], 0, shape[a] - 1)
            me = np.arange(ns)
            nb_s = sid[tuple(npos.T)]
            nb_p = pid[tuple(npos.T)]
            diag[inside] += 1.0
            m1 = inside & (nb_s >= 0)
            rows.append(me[m1]); cols.append(nb_s[m1]); vals.append(-np.ones(int(m1.sum())))
            m2 = inside & (nb_p >= 0)
            brow.append(me[m2]); bcol.append(nb_p[m2])
    rows.append(np.arange(ns)); cols.append(np.arange(ns)); vals.append(diag)
    Lss = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                        shape=(ns, ns))
    br = np.concatenate(brow) if brow else np.zeros(0, int)
    B = sp.csr_matrix((np.ones(len(br)), (br, np.concatenate(bcol))), shape=(ns, int(chi.sum())))
    lu = factorize(Lss) if ns else None
    solver = (lu, B, solid)
    if len(_EXT_CACHE) > 16:
        _EXT_CACHE.clear()
    _EXT_CACHE[key] = (grid, solver)
    return solver


def extend(pore_field, grid):
    """Harmonic fill of the solid cells with the adjacent pore values as Dirichlet data.

    ``pore_field`` is the vector of pore-cell values in lattice order, or a
    full array whose solid entries are ignored.
    """
    chi = np.asarray(grid.chi_eps, dtype=bool)
    v = np.asarray(pore_field, dtype=float)
    if v.shape == chi.shape:
        v = v[chi]
    if v.shape != (int(chi.sum()),):
        raise MisalignedGrids(f"pore field of length {v.shape} does not match the grid")
    out = np.empty(chi.shape)
    out[chi] = v
    lu, B, solid = _extension_solver(grid)
    if lu is not None:
        out[solid] = lu.solve(B @ v)
    return out


def zero_extend(pore_field, grid):
    chi = np.asarray(grid.chi_eps, dtype=bool)
    out = np.zeros(chi.shape)
    out[chi] = pore_field
    return out


def cell_center_velocity(sg, u):
    """Face velocities averaged to cell centers, zero in the solid: shape (d,) + grid shape."""
    return np.stack([sg.to_array(C @ u, fill=0.0) for C in sg.cell_velocity()])


def grad_norm_full(arr, h):
    """Discrete H1 seminorm on the full box (all interior faces)."""
    s = 0.0
    for a in range(arr.ndim):
        s += np.sum(np.diff(arr, axis=a) ** 2)
    return float(np.sqrt(s * h ** (arr.ndim - 2)))


def grad_norm_pore(arr, chi, h):
    """Discrete H1 seminorm over faces joining two pore cells."""
    s = 0.0
    for a in range(arr.ndim):
        both = np.logical_and(np.take(chi, range(1, chi.shape[a]), axis=a),
                              np.take(chi, range(0, chi.shape[a] - 1), axis=a))
        dv = np.diff(np.where(chi, arr, 0.0), axis=a)
        s += np.sum(np.where(both, dv, 0.0) ** 2)
    return float(np.sqrt(s * h ** (arr.ndim - 2)))


def extension_constant(pore_field, grid):
    """Ratio |grad E f|_Omega / |grad f|_pore for the harmonic extension E."""
    full = extend(pore_field, grid)
    chi = np.asarray(grid.chi_eps, dtype=bool)
    den = grad_norm_pore(full, chi, grid.h)
    return grad_norm_full(full, grid.h) / den if den > 0 else 1.0


def two_scale_distance(micro_field, limit, grid, extend_field=True):
    """|| T^eps(E u^eps) - u_0 ||_{L2(Omega x Y)}.

    ``micro_field`` is a pore-cell vector (extended harmonically, or by zero
    when ``extend_field`` is False) or a full lattice array.
    """
    N, n_cell, d = _grid_sizes(grid)
    if (limit.N, limit.n_cell, limit.dim) != (N, n_cell, d):
        raise MisalignedGrids(f"limit lattice ({limit.N}, {limit.n_cell}) does not match "
                              f"grid ({N}, {n_cell})")
    arr = np.asarray(micro_field, dtype=float)
    if arr.ndim == 1:
        arr = extend(arr, grid) if extend_field else zero_extend(arr, grid)
    return (unfold(arr, grid) - limit).norm()


def block_average(arr, N):
    """Average of a full lattice array over each of the N^d macro blocks."""
    arr = np.asarray(arr, dtype=float)
    n_cell = arr.shape[0] // N
    return TwoScaleField(unfold_array(arr, N, n_cell), N, n_cell).cell_average()


def observed_order(eps, errors):
    """Least-squares slope of log(error) against log(eps)."""
    eps = np.asarray(eps, dtype=float)
    errors = np.asarray(errors, dtype=float)
    return float(np.polyfit(np.log(eps), np.log(errors), 1)[0])


def local_orders(eps, errors):
    eps = np.asarray(eps, dtype=float)
    errors = np.asarray(errors, dtype=float)
    out = [np.nan]
    for i in range(1, len(eps)):
        out.append(float(np.log(errors[i] / errors[i - 1]) / np.log(eps[i] / eps[i - 1])))
    return out


@dataclass
class ProductReport:
    eps: list
    integrals: list
    limit: float
    errors: list
    order: float
    decreasing: bool


def product_convergence_check(u_eps_list, v_eps_list, limits, grids, phi=None):
    """Compare int u^eps v^eps phi dx with the two-scale limit int int u0 v0 phi dy dx.

    ``limits`` is either the exact limit value or a pair of callables
    ``(u0, v0)`` taking ``(x, y)`` coordinate lists as in
    ``TwoScaleField.from_function``; the limit integral is then evaluated on
    a product lattice finer than every grid.
    """
    phi = phi if phi is not None else (lambda *x: np.ones_like(x[0]))
    eps, vals = [], []
    for u, v, g in zip(u_eps_list, v_eps_list, grids):
        d = g.cell.dim
        xs = (np.arange(g.n_macro) + 0.5) * g.h
        X = np.meshgrid(*([xs] * d), indexing="ij")
        vals.append(float(np.sum(np.asarray(u) * np.asarray(v) * phi(*X)) * g.h ** d))
        eps.append(g.epsilon)
    if callable(getattr(limits, "__getitem__", None)) and not np.isscalar(limits):
        u0, v0 = limits
        Nq = 4 * max(g.N for g in grids)
        nq = max(g.cell.n_cell for g in grids)
        d = grids[0].cell.dim
        tsf = TwoScaleField.from_function(
            lambda x, y: np.asarray(u0(x, y)) * np.asarray(v0(x, y)) * phi(*x), Nq, nq, d)
        limit = tsf.integral()
    else:
        limit = float(limits)
    errs = [abs(a - limit) for a in vals]
    positive = [e for e in errs if e > 0]
    order = observed_order(eps, errs) if len(positive) == len(errs) and len(errs) > 1 else float("inf")
    dec = all(errs[i + 1] <= errs[i] for i in range(len(errs) - 1))
    return ProductReport(eps, vals, limit, errs, order, dec)
