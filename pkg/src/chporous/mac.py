"""Staggered (MAC) finite-difference operators on masked Cartesian grids.

Scalars live at cell centers of pore cells.  The velocity component along
axis ``a`` lives on faces normal to ``a``; a face at position ``i`` along
``a`` separates cells ``i-1`` and ``i``.  Only *open* faces (both neighbours
pore) carry unknowns, so no-slip / no-penetration and homogeneous Neumann
conditions are built into the index sets.

All discrete inner products are weighted by ``h**d``.
"""
import numpy as np
import scipy.sparse as sp


class StaggeredGrid:
    """Index maps and sparse operators for a pore mask.

    Parameters
    ----------
    mask : bool array of shape (n_1, ..., n_d), True on pore cells.
    h : uniform spacing.
    periodic : wrap-around stencils (discrete torus) instead of a bounded box.
    """

    def __init__(self, mask, h, periodic=False):
        mask = np.asarray(mask, dtype=bool)
        self.mask = mask
        self.shape = mask.shape
        self.dim = mask.ndim
        self.h = float(h)
        self.periodic = bool(periodic)
        self.vol = self.h ** self.dim

        self.cell_index = np.full(self.shape, -1, dtype=np.int64)
        self.cell_index[mask] = np.arange(int(mask.sum()))
        self.n_cells = int(mask.sum())

        self.face_index = []
        self.face_offset = [0]
        for a in range(self.dim):
            open_ = self._open_faces(a)
            idx = np.full(open_.shape, -1, dtype=np.int64)
            idx[open_] = self.face_offset[-1] + np.arange(int(open_.sum()))
            self.face_index.append(idx)
            self.face_offset.append(self.face_offset[-1] + int(open_.sum()))
        self.n_faces = self.face_offset[-1]
        self._cache = {}

    # ------------------------------------------------------------------ index sets
    def _open_faces(self, a):
        m = self.mask
        if self.periodic:
            return m & np.roll(m, 1, axis=a)
        fshape = list(self.shape)
        fshape[a] += 1
        open_ = np.zeros(fshape, dtype=bool)
        inner = [slice(None)] * self.dim
        inner[a] = slice(1, -1)
        lo = [slice(None)] * self.dim
        lo[a] = slice(None, -1)
        hi = [slice(None)] * self.dim
        hi[a] = slice(1, None)
        open_[tuple(inner)] = m[tuple(lo)] & m[tuple(hi)]
        return open_

    def face_slice(self, a):
        return slice(self.face_offset[a], self.face_offset[a + 1])

    def face_positions(self, a):
        """Integer positions (n_open, d) of open faces on axis ``a``, in id order."""
        return np.argwhere(self.face_index[a] >= 0)

    def cell_positions(self):
        return np.argwhere(self.mask)

    def _lookup_face(self, a, pos):
        """Face ids at integer positions; -1 where closed or outside the box."""
        idx = self.face_index[a]
        pos = pos.copy()
        ok = np.ones(len(pos), dtype=bool)
        for b in range(self.dim):
            nb = idx.shape[b]
            if self.periodic:
                pos[:, b] %= nb
            else:
                ok &= (pos[:, b] >= 0) & (pos[:, b] < nb)
                pos[:, b] = np.clip(pos[:, b], 0, nb - 1)
        out = idx[tuple(pos.T)]
        out[~ok] = -1
        return out

    def _lookup_cell(self, pos):
        pos = pos.copy()
        ok = np.ones(len(pos), dtype=bool)
        for b in range(self.dim):
            nb = self.shape[b]
            if self.periodic:
                pos[:, b] %= nb
            else:
                ok &= (pos[:, b] >= 0) & (pos[:, b] < nb)
                pos[:, b] = np.clip(pos[:, b], 0, nb - 1)
        out = self.cell_index[tuple(pos.T)]
        out[~ok] = -1
        return out

    # ------------------------------------------------------------------ coordinates
    def cell_coords(self):
        """Physical coordinates (n_cells, d) of pore-cell centers."""
        return (self.cell_positions() + 0.5) * self.h

    def face_coords(self, a):
        pos = self.face_positions(a).astype(float) + 0.5
        pos[:, a] -= 0.5
        return pos * self.h

    # ------------------------------------------------------------------ operators
    @property
    def grad(self):
        """Face gradient G (n_faces x n_cells)."""
        if "G" not in self._cache:
            rows, cols, vals = [], [], []
            for a in range(self.dim):
                pos = self.face_positions(a)
                fid = self.face_index[a][tuple(pos.T)]
                right = self._lookup_cell(pos)
                lpos = pos.copy()
                lpos[:, a] -= 1
                left = self._lookup_cell(lpos)
                rows += [fid, fid]
                cols += [right, left]
                vals += [np.full(len(fid), 1.0 / self.h), np.full(len(fid), -1.0 / self.h)]
            self._cache["G"] = sp.csr_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                shape=(self.n_faces, self.n_cells))
        return self._cache["G"]

    @property
    def div(self):
        """Cell divergence D = -G^T (n_cells x n_faces)."""
        if "D" not in self._cache:
            self._cache["D"] = (-self.grad.T).tocsr()
        return self._cache["D"]

    @property
    def lap(self):
        """Cell Laplacian D G with homogeneous Neumann on closed faces."""
        if "L" not in self._cache:
            self._cache["L"] = (self.div @ self.grad).tocsr()
        return self._cache["L"]

    @property
    def face_avg(self):
        """Arithmetic mean of the two adjacent cell values, per open face."""
        if "P" not in self._cache:
            P = abs(self.grad) * (0.5 * self.h)
            self._cache["P"] = P.tocsr()
        return self._cache["P"]

    @property
    def vlap(self):
        """Vector operator A = -Laplacian on open faces (SPD when walls exist).

        Along the component's own axis a closed neighbour face is a wall face
        with zero velocity.  Across the other axes a missing neighbour is
        handled by ghost reflection, which places the no-slip wall halfway.
        """
        if "A" not in self._cache:
            h2 = self.h ** 2
            rows, cols, vals = [], [], []
            diag = np.zeros(self.n_faces)
            for a in range(self.dim):
                pos = self.face_positions(a)
                fid = self.face_index[a][tuple(pos.T)]
                for b in range(self.dim):
                    for s in (-1, 1):
                        npos = pos.copy()
                        npos[:, b] += s
                        nb = self._lookup_face(a, npos)
                        has = nb >= 0
                        diag[fid] += 1.0 / h2
                        if b != a:
                            diag[fid[~has]] += 1.0 / h2
                        rows.append(fid[has])
                        cols.append(nb[has])
                        vals.append(np.full(int(has.sum()), -1.0 / h2))
            rows.append(np.arange(self.n_faces))
            cols.append(np.arange(self.n_faces))
            vals.append(diag)
            self._cache["A"] = sp.csr_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                shape=(self.n_faces, self.n_faces))
        return self._cache["A"]

    def transverse_avg(self, a, b):
        """T_ab: average of the (up to) four b-faces around each a-face.

        Built so that T_ba = T_ab^T and ||T_ab||_2 <= 1.
        """
        key = ("T", a, b)
        if key not in self._cache:
            pos = self.face_positions(a)
            fid = self.face_index[a][tuple(pos.T)] - self.face_offset[a]
            rows, cols = [], []
            for da in (-1, 0):
                for db in (0, 1):
                    npos = pos.copy()
                    npos[:, a] += da
                    npos[:, b] += db
                    nb = self._lookup_face(b, npos)
                    has = nb >= 0
                    rows.append(fid[has])
                    cols.append(nb[has] - self.face_offset[b])
            na = self.face_offset[a + 1] - self.face_offset[a]
            nbn = self.face_offset[b + 1] - self.face_offset[b]
            r = np.concatenate(rows)
            self._cache[key] = sp.csr_matrix(
                (np.full(len(r), 0.25), (r, np.concatenate(cols))), shape=(na, nbn))
        return self._cache[key]

    def tensor_faces(self, T):
        """Face operator for a constant symmetric d x d tensor.

        Diagonal entries act face-wise; off-diagonal entries couple components
        through the transverse averages, which keeps the operator symmetric
        and positive definite whenever ``T`` is.
        """
        T = np.asarray(T, dtype=float)
        blocks = [[None] * self.dim for _ in range(self.dim)]
        for a in range(self.dim):
            na = self.face_offset[a + 1] - self.face_offset[a]
            blocks[a][a] = sp.identity(na, format="csr") * T[a, a]
            for b in range(a + 1, self.dim):
                Tab = self.transverse_avg(a, b)
                coef = 0.5 * (T[a, b] + T[b, a])
                blocks[a][b] = coef * Tab
                blocks[b][a] = coef * Tab.T
        return sp.bmat(blocks, format="csr")

    def unit_faces(self, a):
        """Face field equal to one on open faces normal to ``a``."""
        e = np.zeros(self.n_faces)
        e[self.face_slice(a)] = 1.0
        return e

    def cell_velocity(self):
        """Per-axis operators mapping face velocities to cell-centered values."""
        if "C" not in self._cache:
            ops = []
            cpos = self.cell_positions()
            cid = self.cell_index[tuple(cpos.T)]
            for a in range(self.dim):
                rows, cols = [], []
                for s in (0, 1):
                    fpos = cpos.copy()
                    fpos[:, a] += s
                    f = self._lookup_face(a, fpos)
                    has = f >= 0
                    rows.append(cid[has])
                    cols.append(f[has])
                r = np.concatenate(rows)
                ops.append(sp.csr_matrix((np.full(len(r), 0.5), (r, np.concatenate(cols))),
                                         shape=(self.n_cells, self.n_faces)))
            self._cache["C"] = ops
        return self._cache["C"]

    # ------------------------------------------------------------------ helpers
    def to_array(self, v, fill=np.nan):
        out = np.full(self.shape, fill, dtype=float)
        out[self.mask] = v
        return out

    def from_array(self, arr):
        return np.asarray(arr, dtype=float)[self.mask]

    def face_to_array(self, v, a, fill=0.0):
        idx = self.face_index[a]
        out = np.full(idx.shape, fill, dtype=float)
        sel = idx >= 0
        out[sel] = v[idx[sel]]
        return out

    def sample_cells(self, func):
        """Evaluate ``func(*coords)`` at pore-cell centers."""
        x = self.cell_coords()
        return np.asarray(func(*x.T), dtype=float) * np.ones(self.n_cells)

    def sample_faces(self, funcs):
        """Evaluate component functions at open-face centers."""
        out = np.zeros(self.n_faces)
        for a, fn in enumerate(funcs):
            x = self.face_coords(a)
            out[self.face_slice(a)] = np.asarray(fn(*x.T), dtype=float) * np.ones(len(x))
        return out

    def inner_cells(self, a, b):
        return float(np.dot(a, b)) * self.vol

    def inner_faces(self, a, b):
        return float(np.dot(a, b)) * self.vol

    def mean(self, c):
        return float(np.sum(c)) / self.n_cells
