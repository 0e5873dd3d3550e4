import numpy as np
import pytest

from chporous.cells import EffectiveTensors
from chporous.errors import ValidationError
from chporous.geometry import build_unit_cell, tile_domain
from chporous.macro import (MacroConfig, MacroSolver, run_macro, step_macro,
                            two_scale_momentum_check)
from chporous.micro import InitialData, MicroConfig, MicroSolver
from chporous.potential import PotentialParams

P = PotentialParams(theta=0.5, theta0=1.0, lam=1.0, mu=1.0)


def mcfg(**kw):
    base = dict(n=16, params=P, dt=1e-3, t_end=1e-2, mode="singular",
                init=InitialData("cosine", 0.0, 0.4))
    base.update(kw)
    return MacroConfig(**base)


def test_uniform_state_is_stationary(tensors16):
    s = MacroSolver(mcfg(init=InitialData("constant", 0.3, 0.0)), tensors16)
    st = s.initial_state()
    new, rec = s.step(st)
    assert np.abs(new.c - 0.3).max() < 1e-13
    assert np.abs(new.u_bar).max() < 1e-13


def test_mass_and_energy(tensors16):
    tr = run_macro(mcfg(init=InitialData("random", 0.1, 0.3, seed=5)), tensors16)
    m0 = tr.records[0].mass
    assert all(abs(r.mass - m0) <= 1e-12 for r in tr.records)
    E = [r.total for r in tr.records]
    assert all(b - a <= 1e-8 * abs(E[0]) for a, b in zip(E, E[1:]))
    assert tr.max_div <= 1e-10
    assert all(r.diss_w >= 0 and r.diss_u >= 0 for r in tr.records)


def test_zero_data_zero_trajectory(tensors16):
    tr = run_macro(mcfg(init=InitialData("constant", 0.0, 0.0)), tensors16)
    assert np.abs(tr.final.c).max() == 0 and np.abs(tr.final.u_bar).max() == 0


def test_reduces_to_plain_cahn_hilliard():
    """A_hom = I, porosity 1, lambda = 0: one macro step equals the micro step
    on the unperforated box in the diffusive scaling."""
    p = PotentialParams(theta=0.5, theta0=1.0, lam=0.0)
    init = InitialData("cosine", 0.1, 0.4)
    T = EffectiveTensors(np.eye(2), None, 1.0)
    ms = MacroSolver(MacroConfig(n=16, params=p, dt=1e-3, t_end=1e-3, mode="singular",
                                 flow=False, init=init), T)
    g = tile_domain(build_unit_cell(2, 16, "none"), 1.0)
    us = MicroSolver(MicroConfig(g, params=p, dt=1e-3, t_end=1e-3, mode="singular",
                                 scaling="diffusive", flow=False, advection=False, init=init))
    a, _ = ms.step(ms.initial_state())
    b, _ = us.step(us.initial_state())
    assert np.abs(a.c - b.c).max() <= 1e-10
    assert np.abs(a.w_bar - b.w).max() <= 1e-10


def test_darcy_closure_with_constant_c(tensors16):
    s = MacroSolver(mcfg(init=InitialData("constant", 0.2, 0.0), body_force="vortex_gradient",
                         mode="regularized"), tensors16)
    new, _ = s.step(s.initial_state())
    sg = s.sg
    g = s.Kt @ s.body
    q = -(s.Kt @ (sg.grad @ new.p)) / P.mu + g / P.mu
    assert np.abs(new.u_bar - q).max() <= 1e-10 * np.abs(q).max()
    assert np.abs(sg.div @ new.u_bar).max() <= 1e-10
    assert np.abs(new.u_bar).max() > 0


def test_step_macro_wrapper(tensors16):
    cfg = mcfg()
    s = MacroSolver(cfg, tensors16)
    st = s.initial_state()
    a = step_macro(st, cfg, tensors16)
    b, _ = s.step(st)
    assert np.allclose(a.c, b.c, atol=1e-14)


def test_flow_needs_permeability():
    with pytest.raises(ValidationError):
        MacroSolver(mcfg(), EffectiveTensors(np.eye(2) * 0.5, None, 0.8))


def test_momentum_check_zero_forcing(tensors16, disc16):
    z = np.zeros((4, 4))
    mc = two_scale_momentum_check(z, z, tensors16, disc16, 1.0, 1.0)
    assert np.abs(mc.averaged).max() == 0


def test_momentum_check_unit_pressure_gradient(tensors16, disc16):
    n = 4
    x = (np.arange(n) + 0.5) / n
    p = np.repeat(x[:, None], n, axis=1)
    z = np.zeros((n, n))
    mc = two_scale_momentum_check(z, z, tensors16, disc16, 2.0, 1.0, p=p, resolve=False)
    expect = -tensors16.K[:, 0] / 2.0
    assert np.abs(mc.averaged - expect).max() <= 1e-10
    assert mc.mismatch <= 1e-10


def test_momentum_check_closure_error_small():
    cell = build_unit_cell(2, 32, "disc:0.25")
    from chporous.cells import compute_tensors
    T = compute_tensors(cell)
    n = 8
    x = (np.arange(n) + 0.5) / n
    X, Y = np.meshgrid(x, x, indexing="ij")
    c = 0.5 * np.cos(np.pi * X) * np.cos(np.pi * Y)
    w = 0.3 * np.sin(np.pi * X) + 0.1 * Y
    mc = two_scale_momentum_check(c, w, T, cell, 1.0, 1.0)
    assert mc.mismatch <= 0.05
    assert mc.max_residual <= 1e-9
