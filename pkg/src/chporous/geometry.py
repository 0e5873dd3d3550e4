"""Unit cell with a solid inclusion and its epsilon-periodic tiling."""
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import ndimage

from .errors import (DisconnectedPore, InclusionTouchesBoundary, NonUnitFractionEpsilon,
                     ValidationError)

KINDS = ("none", "disc", "square", "slab")


@dataclass(frozen=True)
class Inclusion:
    """Solid inclusion descriptor.

    ``size`` is the radius for ``disc``, the half width for ``square`` and the
    solid thickness for ``slab`` (solid occupies y_d in [1 - size, 1]).
    """
    kind: str = "none"
    size: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown inclusion kind {self.kind!r}; expected one of {KINDS}")
        if self.kind != "none" and not (0.0 < self.size < 1.0):
            raise ValidationError(f"inclusion size must lie in (0, 1), got {self.size}")

    @classmethod
    def parse(cls, text):
        """Parse ``none``, ``disc:0.25``, ``square:0.25`` or ``slab:0.25``."""
        text = str(text).strip().lower()
        if text == "none":
            return cls()
        kind, _, val = text.partition(":")
        if not val:
            raise ValidationError(f"inclusion {text!r} needs a size, e.g. disc:0.25")
        return cls(kind.strip(), float(val))

    def __str__(self):
        return "none" if self.kind == "none" else f"{self.kind}:{self.size!r}"

    def solid(self, y):
        """Boolean solid indicator at points ``y`` of shape (..., d)."""
        y = np.asarray(y, dtype=float)
        if self.kind == "none":
            return np.zeros(y.shape[:-1], dtype=bool)
        if self.kind == "disc":
            return np.sum((y - 0.5) ** 2, axis=-1) < self.size ** 2
        if self.kind == "square":
            return np.all(np.abs(y - 0.5) < self.size, axis=-1)
        return y[..., -1] > 1.0 - self.size


def connectivity_check(mask):
    """True iff the True cells of ``mask`` form one face-connected component."""
    mask = np.asarray(mask, dtype=bool)
    if mask.size == 0:
        raise ValidationError("mask is empty")
    _, n = ndimage.label(mask)
    return n == 1


@dataclass(frozen=True, eq=False)
class UnitCell:
    dim: int
    n_cell: int
    inclusion: Inclusion
    chi: np.ndarray = field(repr=False)
    porosity: float

    @property
    def h(self):
        return 1.0 / self.n_cell

    @property
    def has_solid(self):
        return bool((self.chi == 0).any())


def build_unit_cell(dim, n_cell, inclusion="none"):
    """Sample the inclusion at cell centers of an n_cell^dim lattice on Y = (0,1)^dim."""
    if dim not in (2, 3):
        raise ValidationError(f"dim must be 2 or 3, got {dim}")
    if int(n_cell) != n_cell or n_cell < 8:
        raise ValidationError(f"n_cell must be an integer >= 8, got {n_cell}")
    n_cell = int(n_cell)
    if not isinstance(inclusion, Inclusion):
        inclusion = Inclusion.parse(inclusion)
    y = (np.arange(n_cell) + 0.5) / n_cell
    pts = np.stack(np.meshgrid(*([y] * dim), indexing="ij"), axis=-1)
    solid = inclusion.solid(pts)
    # slabs are periodic channels and touch the cell boundary by construction
    if inclusion.kind != "slab" and solid.any():
        edge = np.zeros_like(solid)
        for a in range(dim):
            sl = [slice(None)] * dim
            sl[a] = [0, n_cell - 1]
            edge[tuple(sl)] = True
        if (solid & edge).any():
            raise InclusionTouchesBoundary(
                f"{inclusion} leaves no one-cell pore margin at n_cell={n_cell}")
    chi = (~solid).astype(np.int8)
    if not chi.any() or not connectivity_check(chi):
        raise DisconnectedPore(f"pore space of {inclusion} is not face-connected")
    chi.setflags(write=False)
    return UnitCell(dim, n_cell, inclusion, chi, int(chi.sum()) / n_cell ** dim)


@dataclass(frozen=True, eq=False)
class PerforatedGrid:
    cell: UnitCell
    epsilon: float
    N: int
    n_macro: int
    chi_eps: np.ndarray = field(repr=False)
    h: float

    @property
    def dim(self):
        return self.cell.dim

    @property
    def porosity(self):
        return int(self.chi_eps.sum()) / self.n_macro ** self.dim


def epsilon_to_N(epsilon, tol=1e-12):
    """Return N with epsilon = 1/N, or raise NonUnitFractionEpsilon."""
    if isinstance(epsilon, str):
        try:
            epsilon = float(Fraction(epsilon.strip()))
        except (ValueError, ZeroDivisionError) as exc:
            raise NonUnitFractionEpsilon(f"cannot read epsilon {epsilon!r}") from exc
    epsilon = float(epsilon)
    if not epsilon > 0:
        raise NonUnitFractionEpsilon(f"epsilon must be positive, got {epsilon}")
    N = int(round(1.0 / epsilon))
    if N < 1 or abs(epsilon * N - 1.0) > tol:
        raise NonUnitFractionEpsilon(f"epsilon={epsilon!r} is not 1/N for an integer N")
    return N


def tile_domain(cell, epsilon, N=None):
    """Tile Omega = (0,1)^d with N^d copies of the cell, epsilon = 1/N."""
    N_eps = epsilon_to_N(epsilon)
    if N is not None and int(N) != N_eps:
        raise NonUnitFractionEpsilon(f"epsilon={epsilon!r} does not equal 1/N with N={N}")
    chi_eps = np.tile(cell.chi, (N_eps,) * cell.dim)
    if not connectivity_check(chi_eps):
        raise DisconnectedPore(f"tiling {cell.inclusion} with N={N_eps} disconnects the pore space")
    chi_eps.setflags(write=False)
    n_macro = N_eps * cell.n_cell
    return PerforatedGrid(cell, 1.0 / N_eps, N_eps, n_macro, chi_eps, 1.0 / n_macro)


def write_mask_pgm(path, mask):
    """Write a 0/1 mask as plain-text PGM (P2); rows follow the first array axis."""
    mask = np.asarray(mask).astype(int)
    if mask.ndim != 2:
        mask = mask.reshape(mask.shape[0], -1)
    with open(path, "w") as fh:
        fh.write(f"P2\n{mask.shape[1]} {mask.shape[0]}\n1\n")
        for row in mask:
            fh.write(" ".join(str(v) for v in row) + "\n")
