"""Homogenized Cahn-Hilliard-Darcy model on Omega = (0,1)^d.

    phi dc/dt + div(c q) = m div(A grad w)
    phi w = phi f(c) - div(A grad c)
    mu K^{-1} q = g - grad p - lam c grad w,   div q = 0,   q.n = 0

``phi`` is the porosity, ``A`` the effective diffusion tensor and ``K`` the
(viscosity-free) permeability.  Each step solves the whole system for
(c, w, q, p) by Newton's method with the same convex splitting of f as the
pore-scale solver; c in the transport and capillary terms is lagged, which
keeps the scheme exactly mass conservative and energy dissipative for
lam > 0 and g = 0 with

    E = 1/2 (A grad c, grad c) / phi + int F(c).
"""
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator

from .cells import CellStokes
from .errors import (ConservationError, DomainError, EnergyIncrease, NewtonDivergence,
                     ValidationError)
from .linalg import factorize
from .mac import StaggeredGrid
from .micro import InitialData, body_force_faces, initial_c, vortex_field, gradient_field
from .potential import Potential, PotentialParams


@dataclass
class MacroConfig:
    n: int = 32
    params: PotentialParams = field(default_factory=PotentialParams)
    dt: float = 1e-3
    t_end: float = 0.1
    mode: str = "singular"
    linear_m0: Optional[float] = None
    mobility: float = 1.0
    force_sign: int = -1
    flow: bool = True
    body_force: Optional[str] = None
    force_amp: float = 1.0
    init: InitialData = field(default_factory=InitialData)
    dim: int = 2
    newton_tol: float = 1e-10
    newton_maxit: int = 50
    snapshot_every: int = 0
    check_energy: bool = True
    energy_rtol: float = 1e-8
    mass_tol: float = 1e-12

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError(f"dt must be positive, got {self.dt}")
        if self.n < 2:
            raise ValidationError("macro grid needs n >= 2")

    @property
    def n_steps(self):
        return int(round(self.t_end / self.dt))


@dataclass
class MacroState:
    sg: StaggeredGrid = field(repr=False)
    c: np.ndarray = field(repr=False)
    w_bar: np.ndarray = field(repr=False)
    u_bar: np.ndarray = field(repr=False)
    p: np.ndarray = field(repr=False)
    t: float = 0.0

    def copy(self):
        return replace(self, c=self.c.copy(), w_bar=self.w_bar.copy(),
                       u_bar=self.u_bar.copy(), p=self.p.copy())


@dataclass
class MacroRecord:
    t: float
    grad: float
    bulk: float
    total: float
    mass: float
    diss_w: float = 0.0
    diss_u: float = 0.0
    max_div: float = 0.0
    max_abs_c: float = 0.0
    newton_its: int = 0

    @property
    def kinetic(self):
        return 0.0


@dataclass
class MacroTrajectory:
    config: MacroConfig
    tensors: object
    records: list
    snapshots: list
    final: MacroState
    energy_law: bool

    @property
    def max_div(self):
        return max(r.max_div for r in self.records)


class MacroSolver:
    def __init__(self, config, tensors):
        self.config = config
        self.tensors = tensors
        d = config.dim
        if tensors.dim != d:
            raise ValidationError("tensor dimension does not match the macro grid")
        if config.flow and tensors.K is None:
            raise ValidationError("Darcy flow needs a permeability tensor")
        self.sg = StaggeredGrid(np.ones((config.n,) * d, dtype=bool), 1.0 / config.n)
        self.phi = float(tensors.porosity)
        self.At = self.sg.tensor_faces(tensors.A_hom)
        self.Kt = self.sg.tensor_faces(tensors.K) if tensors.K is not None else None
        self.lam = config.params.lam if config.flow else 0.0
        self.body = body_force_faces(self.sg, config.body_force, config.force_amp)
        self.DAG = (self.sg.div @ self.At @ self.sg.grad).tocsr()
        self.potential = None
        self._jac = None
        self.energy_law = (config.force_sign == -1 and not np.any(self.body))

    def setup_potential(self, c0):
        cfg = self.config
        m0 = cfg.linear_m0 if cfg.linear_m0 is not None else self.sg.mean(c0)
        self.potential = Potential(cfg.params, cfg.mode, m0=m0)

    def initial_state(self):
        c = initial_c(self.sg, self.config.init)
        if self.config.mode == "singular" and np.abs(c).max() >= 1.0:
            raise ValidationError("singular potential needs |c0| < 1")
        return self.make_state(c)

    def make_state(self, c, t=0.0):
        if self.potential is None:
            self.setup_potential(c)
        sg = self.sg
        pot = self.potential
        w = pot.force(pot.clamp_window(c)) - (self.DAG @ c) / self.phi
        return MacroState(sg, c.copy(), w, np.zeros(sg.n_faces), np.zeros(sg.n_cells), t)

    def _blocks(self, cf):
        sg = self.sg
        cfg = self.config
        dt = cfg.dt
        nc, nf = sg.n_cells, sg.n_faces
        phi = self.phi
        Icc = sp.identity(nc, format="csr")
        J12 = -dt * cfg.mobility * self.DAG
        if cfg.flow:
            J13 = dt * (sg.div @ sp.diags(cf))
            J32 = (-cfg.force_sign * self.lam) * (self.Kt @ sp.diags(cf) @ sg.grad)
            J33 = cfg.params.mu * sp.identity(nf, format="csr")
            J34 = self.Kt @ sg.grad
            return dict(J12=J12, J13=J13, J32=J32, J33=J33, J34=J34, I=Icc)
        return dict(J12=J12, I=Icc)

    def _jacobian(self, B, gp):
        phi = self.phi
        J21 = self.DAG - phi * sp.diags(gp)
        if self.config.flow:
            G = self.sg.grad
            M = sp.bmat([[phi * B["I"], B["J12"], B["J13"], None],
                         [J21, phi * B["I"], None, None],
                         [None, B["J32"], B["J33"], B["J34"]],
                         [None, None, G.T, None]], format="csr").tolil()
            # the divergence rows sum to zero; trade the first for p_0 = 0
            r0 = 2 * self.sg.n_cells + self.sg.n_faces
            M.rows[r0] = [r0]
            M.data[r0] = [1.0]
            M = M.tocsc()
        else:
            M = sp.bmat([[phi * B["I"], B["J12"]], [J21, phi * B["I"]]], format="csc")
        return factorize(M)

    def step(self, state):
        """One step of the closed macro system; returns (new_state, record)."""
        cfg = self.config
        sg = self.sg
        pot = self.potential
        phi = self.phi
        dt = cfg.dt
        nc, nf = sg.n_cells, sg.n_faces
        cn = state.c
        cf = sg.face_avg @ cn
        B = self._blocks(cf)
        explicit = pot.concave(pot.clamp_window(cn))
        gbody = self.Kt @ self.body if (cfg.flow and np.any(self.body)) else None
        if cfg.flow:
            x = np.concatenate([cn, state.w_bar, state.u_bar, state.p - state.p[0]])
        else:
            x = np.concatenate([cn, state.w_bar])

        def residual(x):
            c, w = x[:nc], x[nc:2 * nc]
            r1 = phi * (c - cn) + B["J12"] @ w
            r2 = phi * w + self.DAG @ c - phi * (pot.convex(pot.clamp_window(c)) + explicit)
            if not cfg.flow:
                return np.concatenate([r1, r2])
            q = x[2 * nc:2 * nc + nf]
            p = x[2 * nc + nf:]
            r1 = r1 + B["J13"] @ q
            r3 = B["J32"] @ w + B["J33"] @ q + B["J34"] @ p
            if gbody is not None:
                r3 = r3 - gbody
            r4 = sg.grad.T @ q
            r4[0] = p[0]
            return np.concatenate([r1, r2, r3, r4])

        trace = []
        key = "const" if pot.mode == "linear" else "var"
        refresh = self._jac is None or self._jac_key != key
        ratio = 0.0
        its = 0
        for it in range(cfg.newton_maxit + 1):
            r = residual(x)
            w = x[nc:2 * nc]
            err = max(np.abs(r[:nc]).max() / phi,
                      np.abs(r[nc:2 * nc]).max() / (phi * max(1.0, np.abs(w).max())),
                      np.abs(r[2 * nc:]).max() if cfg.flow else 0.0)
            trace.append(float(err))
            its = it
            if err <= cfg.newton_tol:
                break
            if it == cfg.newton_maxit:
                raise NewtonDivergence(f"macro Newton failed at t={state.t:.6g}", trace)
            if it > 0:
                ratio = trace[-1] / trace[-2]
            if refresh or ratio > 0.1:
                self._jac = self._jacobian(B, pot.convex_prime(pot.clamp_window(x[:nc])))
                self._jac_key = key
                refresh = False
            dx = -self._jac.solve(r)
            tau = 1.0
            if pot.singular:
                c, dc = x[:nc], dx[:nc]
                lim = 1.0 - pot.clamp
                over = np.abs(c + dc) > lim
                if over.any():
                    room = np.where(dc > 0, lim - c, -lim - c)[over] / dc[over]
                    tau = min(1.0, 0.99 * float(room.min()))
            x = x + tau * dx
            if pot.singular and np.abs(x[:nc]).max() >= 1.0:
                raise DomainError(f"macro Newton iterate left (-1, 1) at t={state.t:.6g}")
        c, w = x[:nc], x[nc:2 * nc]
        if cfg.flow:
            q = x[2 * nc:2 * nc + nf]
            p = x[2 * nc + nf:] - x[2 * nc + nf:].mean()
        else:
            q, p = np.zeros(nf), np.zeros(nc)
        new = MacroState(sg, c, w, q, p, state.t + dt)
        rec = self.energy(new)
        gw = sg.grad @ w
        rec.diss_w = dt * cfg.mobility * sg.inner_faces(self.At @ gw, gw) / phi
        if cfg.flow and self.lam > 0:
            s = sg.grad @ p - cfg.force_sign * self.lam * cf * gw
            rec.diss_u = dt * sg.inner_faces(self.Kt @ s, s) / (cfg.params.mu * self.lam * phi)
        rec.max_div = float(np.abs(sg.div @ q).max())
        rec.newton_its = its
        return new, rec

    def energy(self, state):
        sg = self.sg
        gc = sg.grad @ state.c
        grad = 0.5 * sg.inner_faces(self.At @ gc, gc) / self.phi
        bulk = sg.vol * float(np.sum(self.potential.energy(state.c)))
        return MacroRecord(state.t, grad, bulk, grad + bulk, sg.mean(state.c),
                           max_abs_c=float(np.abs(state.c).max()))

    def run(self, state=None):
        cfg = self.config
        if state is None:
            state = self.initial_state()
        rec0 = self.energy(state)
        records = [rec0]
        snaps = [state.copy()]
        tolE = cfg.energy_rtol * max(abs(rec0.total), 1e-300)
        check = cfg.check_energy and self.energy_law
        for k in range(cfg.n_steps):
            new, rec = self.step(state)
            if abs(rec.mass - rec0.mass) > cfg.mass_tol:
                raise ConservationError(f"mass drift {rec.mass - rec0.mass:.3e} at t={rec.t:.6g}")
            if check and rec.total - records[-1].total > tolE:
                raise EnergyIncrease(rec.t, rec.total - records[-1].total)
            records.append(rec)
            state = new
            if cfg.snapshot_every and (k + 1) % cfg.snapshot_every == 0:
                snaps.append(state.copy())
        if not cfg.snapshot_every or cfg.n_steps % cfg.snapshot_every:
            snaps.append(state.copy())
        return MacroTrajectory(cfg, self.tensors, records, snaps, state, self.energy_law)


def step_macro(state, config, tensors, solver=None):
    s = solver or MacroSolver(config, tensors)
    if s.potential is None:
        s.setup_potential(state.c)
    return s.step(state)[0]


def run_macro(config, tensors, state=None):
    return MacroSolver(config, tensors).run(state)


@dataclass
class MomentumCheck:
    averaged: np.ndarray
    darcy: np.ndarray
    mismatch: float
    max_residual: float


def two_scale_momentum_check(c, w_bar, tensors, cell, mu, lam, p=None, body=None,
                             resolve=True):
    """Solve the steady cell Stokes problem at every macro node and average.

    ``c``, ``w_bar`` and ``p`` are cell-centered arrays of shape (n,) * 2 on
    Omega; ``body`` optionally names a body force.  With ``resolve`` the
    forcing is evaluated at the fine-scale points x_k + y / n inside each
    macro cell (interpolated), so the comparison with the Darcy closure
    -(K/mu)(grad p + lam c grad w_bar) measures the closure error.  Returns
    the averaged velocities (n, n, 2), the closure values and the relative
    mismatch.
    """
    c = np.asarray(c, dtype=float)
    w_bar = np.asarray(w_bar, dtype=float)
    n = c.shape[0]
    h = 1.0 / n
    p = np.zeros_like(c) if p is None else np.asarray(p, dtype=float)
    xs = (np.arange(n) + 0.5) * h

    def grad(a):
        return np.stack(np.gradient(a, h, edge_order=2), axis=-1)

    F = -grad(p) - lam * c[..., None] * grad(w_bar)
    if body not in (None, "none"):
        X, Y = np.meshgrid(xs, xs, indexing="ij")
        bx, by = vortex_field(X, Y)
        if body == "vortex_gradient":
            gx, gy = gradient_field(X, Y)
            bx, by = bx + gx, by + gy
        F = F + np.stack([bx, by], axis=-1)
    cs = CellStokes(cell, mu)
    g = cs.grid
    darcy = F @ (tensors.K / mu).T
    avg = np.zeros_like(darcy)
    worst = 0.0
    if not np.any(F):
        return MomentumCheck(avg, darcy, 0.0, 0.0)
    interp = [RegularGridInterpolator((xs, xs), F[..., j], bounds_error=False, fill_value=None)
              for j in range(2)]
    for i in range(n):
        for k in range(n):
            if resolve:
                force = np.zeros(g.n_faces)
                for a in range(2):
                    y = g.face_coords(a)
                    pts = np.array([xs[i], xs[k]]) - 0.5 * h + h * y
                    force[g.face_slice(a)] = interp[a](pts)
            else:
                force = sum(F[i, k, a] * g.unit_faces(a) for a in range(2))
            u, _, _, res = cs.solve(force)
            avg[i, k] = cs.average(u)
            worst = max(worst, res)
    mismatch = float(np.linalg.norm(avg - darcy) / max(np.linalg.norm(darcy), 1e-300))
    return MomentumCheck(avg, darcy, mismatch, worst)
