"""Pore-scale Stokes-Cahn-Hilliard time stepping on a perforated grid.

Scaled system on the pore space (a, m, nu, b depend on the scaling):

    dc/dt + a div(c u) = m Lap w,          w = -Lap c + f(c)
    du/dt - nu Lap u + grad p = -b c grad w + g,   div u = 0

with no-flux conditions for c and w and no-slip for u.  The ``pore``
scaling is (a, m, nu, b) = (eps, eps^2, mu eps^2, lam eps); the
``diffusive`` scaling keeps (1, 1, mu eps^2, lam) so that transport and
diffusion remain order one as eps -> 0.

Each step is a convex-splitting Cahn-Hilliard solve (Newton on the (c, w)
block) followed by an implicit Stokes solve.  The advecting velocity inside
the Cahn-Hilliard step already contains the capillary impulse
-dt b c grad w, which makes the coupling terms cancel exactly in the
discrete energy balance

    E = 1/2 |grad c|^2 + int F(c) + (a/b) 1/2 |u|^2.
"""
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import (CFLViolation, ConservationError, DomainError, EnergyIncrease,
                     NewtonDivergence, ValidationError)
from .linalg import ZeroMeanPoisson, factorize
from .mac import StaggeredGrid
from .potential import Potential, PotentialParams

SCALINGS = {
    # exponents of eps for (transport, mobility, viscosity, capillary force)
    "pore": (1, 2, 2, 1),
    "diffusive": (0, 0, 2, 0),
}


def coefficients(scaling, eps, params):
    ea, em, en, eb = SCALINGS[scaling]
    return dict(a=eps ** ea, m=eps ** em, nu=params.mu * eps ** en, b=params.lam * eps ** eb)


@dataclass(frozen=True)
class InitialData:
    """Closed-form initial data, evaluated on each grid.

    c kinds: ``constant`` (mean), ``cosine`` (mean + amp cos(pi x) cos(pi y)),
    ``random`` (mean + amp U(-1, 1), seeded).  u kinds: ``zero`` and
    ``vortex`` (amp times the vortex field, projected to be divergence free).
    """
    c_kind: str = "cosine"
    mean: float = 0.0
    amp: float = 0.05
    seed: int = 0
    u_kind: str = "zero"
    u_amp: float = 0.0

    def __post_init__(self):
        if self.c_kind not in ("constant", "cosine", "random"):
            raise ValidationError(f"unknown initial c kind {self.c_kind!r}")
        if self.u_kind not in ("zero", "vortex"):
            raise ValidationError(f"unknown initial u kind {self.u_kind!r}")
        if not abs(self.mean) < 1.0:
            raise ValidationError(f"initial mean must satisfy |m(c0)| < 1, got {self.mean}")
        if abs(self.mean) + abs(self.amp) > 1.0:
            raise ValidationError("initial data must satisfy |c0| <= 1")


def vortex_field(x, y):
    """Divergence-free field curl(sin^2(pi x) sin^2(pi y)); vanishes on the box boundary."""
    sx, sy = np.sin(np.pi * x), np.sin(np.pi * y)
    cx, cy = np.cos(np.pi * x), np.cos(np.pi * y)
    return 2 * np.pi * sx * sx * sy * cy, -2 * np.pi * sx * cx * sy * sy


def gradient_field(x, y):
    """grad(cos(pi x) cos(pi y)) / pi."""
    return (-np.sin(np.pi * x) * np.cos(np.pi * y), -np.cos(np.pi * x) * np.sin(np.pi * y))


def body_force_faces(sg, kind, amp=1.0):
    if kind in (None, "none"):
        return np.zeros(sg.n_faces)
    if sg.dim != 2:
        raise ValidationError("body forces are defined for d = 2 only")
    if kind == "vortex":
        fx = lambda x, y: vortex_field(x, y)[0]
        fy = lambda x, y: vortex_field(x, y)[1]
    elif kind == "vortex_gradient":
        fx = lambda x, y: vortex_field(x, y)[0] + gradient_field(x, y)[0]
        fy = lambda x, y: vortex_field(x, y)[1] + gradient_field(x, y)[1]
    else:
        raise ValidationError(f"unknown body force {kind!r}")
    return amp * sg.sample_faces([fx, fy])


def initial_c(sg, init):
    if init.c_kind == "constant":
        c = np.full(sg.n_cells, init.mean)
    elif init.c_kind == "cosine":
        x = sg.cell_coords()
        c = init.mean + init.amp * np.prod(np.cos(np.pi * x), axis=1)
    else:
        rng = np.random.Generator(np.random.PCG64(init.seed))
        c = init.mean + init.amp * rng.uniform(-1.0, 1.0, sg.n_cells)
    return c


def project_div_free(sg, u):
    """Discrete L2 projection onto divergence-free face fields."""
    phi = ZeroMeanPoisson(sg.lap).solve(sg.div @ u)
    return u - sg.grad @ phi


def initial_u(sg, init):
    if init.u_kind == "zero" or init.u_amp == 0.0:
        return np.zeros(sg.n_faces)
    u = init.u_amp * sg.sample_faces([lambda x, y: vortex_field(x, y)[0],
                                      lambda x, y: vortex_field(x, y)[1]])
    return project_div_free(sg, u)


@dataclass
class MicroConfig:
    grid: object  # PerforatedGrid
    params: PotentialParams = field(default_factory=PotentialParams)
    dt: float = 1e-3
    t_end: float = 0.1
    mode: str = "singular"
    linear_m0: Optional[float] = None
    scaling: str = "pore"
    force_sign: int = -1
    advection: bool = True
    flow: bool = True
    body_force: Optional[str] = None
    force_amp: float = 1.0
    init: InitialData = field(default_factory=InitialData)
    newton_tol: float = 1e-10
    newton_maxit: int = 50
    snapshot_every: int = 0
    check_energy: bool = True
    energy_rtol: float = 1e-8
    mass_tol: float = 1e-12

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError(f"dt must be positive, got {self.dt}")
        if not self.t_end >= 0:
            raise ValidationError(f"t_end must be nonnegative, got {self.t_end}")
        if self.scaling not in SCALINGS:
            raise ValidationError(f"unknown scaling {self.scaling!r}")
        if self.force_sign not in (-1, 1):
            raise ValidationError("force_sign must be -1 or +1")

    @property
    def n_steps(self):
        return int(round(self.t_end / self.dt))


@dataclass
class MicroState:
    grid: object  # PerforatedGrid
    sg: StaggeredGrid = field(repr=False)
    c: np.ndarray = field(repr=False)
    w: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)
    p: np.ndarray = field(repr=False)
    t: float = 0.0

    def copy(self):
        return replace(self, c=self.c.copy(), w=self.w.copy(), u=self.u.copy(), p=self.p.copy())


@dataclass
class EnergyRecord:
    t: float
    grad: float
    bulk: float
    kinetic: float
    total: float
    mass: float
    diss_w: float = 0.0
    diss_u: float = 0.0
    grad_w_sq: float = 0.0
    grad_u_sq: float = 0.0
    flux_sq: float = 0.0
    c_sq: float = 0.0
    dtc_dual_sq: float = 0.0
    max_abs_c: float = 0.0
    max_div: float = 0.0
    newton_its: int = 0


@dataclass
class Trajectory:
    config: MicroConfig
    records: list
    snapshots: list
    final: MicroState
    kappa: float
    energy_law: bool

    @property
    def max_abs_c(self):
        return max(r.max_abs_c for r in self.records)

    @property
    def max_div(self):
        return max(r.max_div for r in self.records)


class MicroSolver:
    """Holds the operators and factorizations for one configuration."""

    def __init__(self, config):
        self.config = config
        grid = config.grid
        self.sg = StaggeredGrid(np.asarray(grid.chi_eps, dtype=bool), grid.h, periodic=False)
        co = coefficients(config.scaling, grid.epsilon, config.params)
        if not config.advection:
            co["a"] = 0.0
        if not config.flow:
            co["b"] = 0.0
        self.a, self.m, self.nu, self.b = co["a"], co["m"], co["nu"], co["b"]
        self.body = body_force_faces(self.sg, config.body_force, config.force_amp)
        self.potential = None
        self._kkt = None
        self._jac = None
        self._jac_key = None
        self._dual = None
        # weight of the kinetic energy that makes the coupling terms cancel
        if self.b > 0 and config.force_sign == -1:
            self.kappa = self.a / self.b
        else:
            self.kappa = 1.0
        self.energy_law = (config.force_sign == -1 and not np.any(self.body)
                           and (self.b > 0 or self.a == 0.0))

    # ------------------------------------------------------------ setup
    def setup_potential(self, c0):
        cfg = self.config
        m0 = cfg.linear_m0 if cfg.linear_m0 is not None else self.sg.mean(c0)
        self.potential = Potential(cfg.params, cfg.mode, m0=m0)

    def initial_state(self):
        cfg = self.config
        c = initial_c(self.sg, cfg.init)
        if cfg.mode == "singular" and np.abs(c).max() >= 1.0:
            raise ValidationError("singular potential needs |c0| < 1")
        u = initial_u(self.sg, cfg.init) if cfg.flow else np.zeros(self.sg.n_faces)
        return self.make_state(c, u)

    def make_state(self, c, u=None, t=0.0):
        if self.potential is None:
            self.setup_potential(c)
        u = np.zeros(self.sg.n_faces) if u is None else u
        w = self.chemical_potential(c)
        return MicroState(self.config.grid, self.sg, c.copy(), w, u.copy(),
                          np.zeros(self.sg.n_cells), t)

    # ------------------------------------------------------------ pieces
    def chemical_potential(self, c):
        pot = self.potential
        cc = pot.clamp_window(c)
        return -(self.sg.lap @ c) + pot.force(cc)

    def _mobility_faces(self, cf):
        M = np.full(self.sg.n_faces, self.m)
        if self.config.force_sign == -1 and self.b > 0 and self.a > 0:
            M = M + self.config.dt * self.a * self.b * cf * cf
        return M

    def _jacobian(self, M, gp):
        sg = self.sg
        dt = self.config.dt
        n = sg.n_cells
        I = sp.identity(n, format="csr")
        J12 = -dt * (sg.div @ sp.diags(M) @ sg.grad)
        J21 = sg.lap - sp.diags(gp)
        return factorize(sp.bmat([[I, J12], [J21, I]], format="csc"))

    def step_ch(self, state):
        """Convex-splitting Cahn-Hilliard step; returns (c, w, its, trace)."""
        cfg = self.config
        sg = self.sg
        pot = self.potential
        dt = cfg.dt
        n = sg.n_cells
        cn, wn, un = state.c, state.w, state.u
        cf = sg.face_avg @ cn
        if self.a > 0:
            vmax = np.abs(un).max() if un.size else 0.0
            cfl = dt * self.a * vmax / sg.h
            if cfl > 1.0:
                raise CFLViolation(f"advective CFL number {cfl:.3g} > 1 at t={state.t:.6g}")
        M = self._mobility_faces(cf)
        DMG = sg.div @ sp.diags(M) @ sg.grad
        explicit = pot.concave(pot.clamp_window(cn))
        r1_fixed = -cn + (dt * self.a) * (sg.div @ (cf * un)) if self.a > 0 else -cn
        c, w = cn.copy(), wn.copy()

        def residual(c, w):
            r1 = c + r1_fixed - dt * (DMG @ w)
            r2 = w + sg.lap @ c - pot.convex(pot.clamp_window(c)) - explicit
            return r1, r2

        coupled = bool(np.any(M != self.m))
        # a linear potential without capillary stabilization has a constant Jacobian
        key = "const" if (pot.mode == "linear" and not coupled) else "var"
        trace = []
        refresh = self._jac is None or self._jac_key != key
        ratio = 0.0
        for it in range(cfg.newton_maxit + 1):
            r1, r2 = residual(c, w)
            wscale = max(1.0, np.abs(w).max())
            err = max(np.abs(r1).max(), np.abs(r2).max() / wscale)
            trace.append(float(err))
            if err <= cfg.newton_tol:
                return c, w, it, trace
            if it == cfg.newton_maxit:
                break
            if it > 0:
                ratio = trace[-1] / trace[-2]
            if refresh or ratio > 0.1:
                self._jac = self._jacobian(M, pot.convex_prime(pot.clamp_window(c)))
                self._jac_key = key
                refresh = False
            d = -self._jac.solve(np.concatenate([r1, r2]))
            dc, dw = d[:n], d[n:]
            tau = 1.0
            if pot.singular:
                lim = 1.0 - pot.clamp
                trial = c + dc
                over = np.abs(trial) > lim
                if over.any():
                    room = np.where(dc > 0, lim - c, -lim - c)[over] / dc[over]
                    tau = min(1.0, 0.99 * float(room.min()))
            c = c + tau * dc
            w = w + tau * dw
            if not np.all(np.isfinite(c)):
                break
            if pot.singular and np.abs(c).max() >= 1.0:
                raise DomainError(f"Newton iterate left (-1, 1) at t={state.t:.6g}")
        raise NewtonDivergence(f"Cahn-Hilliard Newton failed at t={state.t:.6g}", trace)

    def _kkt_lu(self):
        if self._kkt is None:
            sg = self.sg
            dt = self.config.dt
            nf = sg.n_faces
            A = sp.identity(nf, format="csr") / dt + self.nu * sg.vlap
            K = sp.bmat([[A, sg.grad], [sg.grad.T, None]], format="csr").tolil()
            # the divergence rows sum to zero; trade one of them for p_0 = 0
            K.rows[nf] = [nf]
            K.data[nf] = [1.0]
            self._kkt = factorize(K.tocsc())
        return self._kkt

    def step_stokes(self, state, w_new, c_face=None):
        """Implicit Stokes solve with the capillary impulse; returns (u, p, max|div u|)."""
        sg = self.sg
        dt = self.config.dt
        cf = sg.face_avg @ state.c if c_face is None else c_face
        ustar = state.u + (self.config.force_sign * dt * self.b) * (cf * (sg.grad @ w_new))
        rhs = np.concatenate([ustar / dt + self.body, np.zeros(sg.n_cells)])
        sol = self._kkt_lu().solve(rhs)
        u = sol[: sg.n_faces]
        p = sol[sg.n_faces:]
        p = p - p.mean()
        div = float(np.abs(sg.div @ u).max()) if sg.n_cells else 0.0
        return u, p, div, ustar

    def step(self, state):
        """One full step; returns (new_state, EnergyRecord)."""
        cfg = self.config
        if self.potential is None:
            self.setup_potential(state.c)
        sg = self.sg
        cf = sg.face_avg @ state.c
        c, w, its, _ = self.step_ch(state)
        if cfg.flow:
            u, p, div, ustar = self.step_stokes(state, w, cf)
        else:
            u, p, div, ustar = state.u, state.p, 0.0, state.u
        new = MicroState(state.grid, sg, c, w, u, p, state.t + cfg.dt)
        rec = self.energy(new)
        gw = sg.grad @ w
        flux = self.m * gw - self.a * cf * ustar
        rec.grad_w_sq = sg.inner_faces(gw, gw)
        rec.grad_u_sq = sg.inner_faces(u, sg.vlap @ u) if cfg.flow else 0.0
        rec.diss_w = cfg.dt * self.m * rec.grad_w_sq
        rec.diss_u = cfg.dt * self.kappa * self.nu * rec.grad_u_sq
        rec.flux_sq = sg.inner_faces(flux, flux)
        rec.dtc_dual_sq = self.dual_norm_sq((c - state.c) / cfg.dt)
        rec.max_div = div
        rec.newton_its = its
        return new, rec

    def dual_norm_sq(self, s):
        """Squared discrete H^1-dual norm: (s, (I - Lap_h)^{-1} s)."""
        if self._dual is None:
            self._dual = factorize(sp.identity(self.sg.n_cells, format="csc") - self.sg.lap)
        return self.sg.inner_cells(s, self._dual.solve(s))

    def energy(self, state):
        sg = self.sg
        gc = sg.grad @ state.c
        grad = 0.5 * sg.inner_faces(gc, gc)
        bulk = sg.vol * float(np.sum(self.potential.energy(state.c)))
        kin = 0.5 * sg.inner_faces(state.u, state.u)
        return EnergyRecord(state.t, grad, bulk, kin, grad + bulk + self.kappa * kin,
                            sg.mean(state.c), c_sq=sg.inner_cells(state.c, state.c),
                            max_abs_c=float(np.abs(state.c).max()))

    # ------------------------------------------------------------ driver
    def run(self, state=None):
        cfg = self.config
        if state is None:
            state = self.initial_state()
        rec0 = self.energy(state)
        rec0.max_div = float(np.abs(self.sg.div @ state.u).max())
        records = [rec0]
        snaps = [state.copy()]
        E0 = rec0.total
        tolE = cfg.energy_rtol * max(abs(E0), 1e-300)
        m0 = rec0.mass
        check = cfg.check_energy and self.energy_law
        for k in range(cfg.n_steps):
            new, rec = self.step(state)
            if abs(rec.mass - m0) > cfg.mass_tol:
                raise ConservationError(f"mass drift {rec.mass - m0:.3e} at t={rec.t:.6g}")
            if check and rec.total - records[-1].total > tolE:
                raise EnergyIncrease(rec.t, rec.total - records[-1].total)
            records.append(rec)
            state = new
            if cfg.snapshot_every and (k + 1) % cfg.snapshot_every == 0:
                snaps.append(state.copy())
        if not cfg.snapshot_every or cfg.n_steps % cfg.snapshot_every:
            snaps.append(state.copy())
        return Trajectory(cfg, records, snaps, state, self.kappa, self.energy_law)


_SOLVERS = {}


def _solver(config):
    key = id(config)
    hit = _SOLVERS.get(key)
    if hit is None or hit[0] is not config:
        if len(_SOLVERS) > 8:
            _SOLVERS.clear()
        hit = (config, MicroSolver(config))
        _SOLVERS[key] = hit
    return hit[1]


def chemical_potential(c, config):
    """w = -Lap_h c + f(c) on the pore cells of ``config.grid``."""
    s = _solver(config)
    if s.potential is None:
        s.setup_potential(c)
    return s.chemical_potential(c)


def step_ch(state, config):
    s = _solver(config)
    if s.potential is None:
        s.setup_potential(state.c)
    c, w, _, _ = s.step_ch(state)
    return replace(state, c=c, w=w, t=state.t + config.dt)


def step_stokes(state, config):
    s = _solver(config)
    u, p, _, _ = s.step_stokes(state, state.w)
    return replace(state, u=u, p=p)


def step(state, config):
    s = _solver(config)
    if s.potential is None:
        s.setup_potential(state.c)
    return s.step(state)[0]


def energy(state, config):
    s = _solver(config)
    if s.potential is None:
        s.setup_potential(state.c)
    return s.energy(state)


def initial_state(config):
    return _solver(config).initial_state()


def run_micro(config, state=None):
    return _solver(config).run(state)
