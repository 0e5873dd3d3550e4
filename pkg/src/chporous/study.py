"""End-to-end homogenization checks: micro runs over a sequence of eps
compared with the macro model, and the eps-uniform bound table.

Error metrics (all computed on the unfolded product lattice):

error_c     ||T(E c^eps) - c(x)|| / ||c - <c>||, with c(x) the macro solution
            averaged over each period block (absolute if c is constant)
error_w     same for the chemical potential (diagnostic only)
error_u     ||T(u^eps) - u_0(x, y)|| / ||u_0||, u_0 = sum_j omega_j(y) (K^{-1} q)_j
            built from the Darcy velocity q and the Stokes correctors omega_j
error_ubar  ||<u^eps>_block - <q>_block|| / ||<q>_block||
"""
import os
from dataclasses import dataclass, field

import numpy as np

from .cells import compute_tensors, solve_stokes_corrector
from .geometry import tile_domain, write_mask_pgm
from .io import write_csv, write_energy_csv, write_tensors
from .macro import MacroConfig, MacroSolver
from .micro import MicroConfig, run_micro
from .unfolding import (TwoScaleField, block_average, cell_center_velocity,
                        local_orders, observed_order, two_scale_distance, unfold)

CONVERGENCE_COLUMNS = ("config_hash", "kind", "eps", "N", "n_cell", "dt", "n_steps",
                       "error_c", "error_w", "error_u", "error_ubar",
                       "order_c", "order_w", "order_u", "order_ubar",
                       "max_abs_c", "max_div", "mass_drift", "newton_max",
                       "macro_max_div", "corrector_residual", "stokes_residual")
ORDER_COLUMNS = ("config_hash", "metric", "observed_order", "monotone")
BOUND_COLUMNS = ("config_hash", "eps", "N", "dt", "n_steps", "c_H1", "u_L2",
                 "eps_grad_w", "eps_grad_u", "dtc_dual", "min_diss_w", "min_diss_u",
                 "max_div", "mass_drift", "newton_max")
BOUND_NORMS = ("c_H1", "u_L2", "eps_grad_w", "eps_grad_u", "dtc_dual")
METRICS = ("error_c", "error_w", "error_u", "error_ubar")


@dataclass
class StudyResult:
    kind: str
    config_hash: str
    rows: list
    orders: dict = field(default_factory=dict)
    files: list = field(default_factory=list)

    def column(self, name):
        return [r[name] for r in self.rows]

    def monotone(self, name):
        v = self.column(name)
        return all(b < a for a, b in zip(v, v[1:]))


def _dt_for(cfg, eps):
    d = cfg.values["discretization"]
    if d["dt_scaling"] == "eps2":
        return d["dt"] * (eps / cfg.eps_list[0]) ** 2
    return d["dt"]


def micro_config(cfg, eps, grid=None, cell=None, dt=None):
    """MicroConfig for one eps of a RunConfig."""
    ph, d = cfg.values["physics"], cfg.values["discretization"]
    if grid is None:
        grid = tile_domain(cell if cell is not None else cfg.unit_cell(), eps)
    bf = None if ph["body_force"] == "none" else ph["body_force"]
    return MicroConfig(grid, params=cfg.params, dt=dt if dt is not None else _dt_for(cfg, eps),
                       t_end=d["t_end"], mode=ph["potential"], linear_m0=ph["linear_m0"],
                       scaling=ph["scaling"], force_sign=ph["force_sign"],
                       advection=ph["advection"], flow=ph["flow"], body_force=bf,
                       force_amp=ph["force_amp"], init=cfg.init, newton_tol=d["newton_tol"],
                       newton_maxit=d["newton_maxit"], snapshot_every=d["snapshot_every"])


def macro_config(cfg):
    ph, d = cfg.values["physics"], cfg.values["discretization"]
    bf = None if ph["body_force"] == "none" else ph["body_force"]
    return MacroConfig(n=d["macro_n"], params=cfg.params, dt=d["dt"], t_end=d["t_end"],
                       mode=ph["potential"], linear_m0=ph["linear_m0"],
                       force_sign=ph["force_sign"], flow=ph["flow"], body_force=bf,
                       force_amp=ph["force_amp"], init=cfg.init, dim=cfg.values["geometry"]["dim"],
                       newton_tol=d["newton_tol"], newton_maxit=d["newton_maxit"])


def _broadcast(blocks, n_cell):
    """Block values (N,)*d -> TwoScaleField constant in y."""
    d = blocks.ndim
    vals = np.broadcast_to(blocks.reshape(blocks.shape + (1,) * d),
                           blocks.shape + (n_cell,) * d).copy()
    return TwoScaleField(vals, blocks.shape[0], n_cell)


def _fluctuation(tsf):
    return TwoScaleField(tsf.values - tsf.values.mean(), tsf.N, tsf.n_cell).norm()


def _rel(dist, ref):
    return dist / ref if ref > 1e-14 else dist


def cell_velocity_correctors(cell):
    """Stokes correctors omega_j at cell centers, each of shape (d,) + (n_cell,)*d."""
    sc = solve_stokes_corrector(cell, 1.0)
    cg = sc.grid
    return [np.stack([cg.to_array(C @ om, fill=0.0) for C in cg.cell_velocity()])
            for om in sc.omega]


def two_scale_velocity(q_blocks, K, omegas):
    """u_0(x, y) = sum_j omega_j(y) (K^{-1} q(x))_j; q_blocks has shape (d, N, ..)."""
    d = q_blocks.shape[0]
    F = np.einsum("ij,j...->i...", np.linalg.inv(K), q_blocks)
    idx_x = (slice(None),) * d + (None,) * d
    idx_y = (None,) * d + (slice(None),) * d
    return sum(F[j][idx_x][None] * omegas[j][(slice(None),) + idx_y] for j in range(d))


def _plot(path, xs, series, ylabel, title):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    matplotlib.rcParams["svg.hashsalt"] = "chporous"
    fig, ax = plt.subplots(figsize=(5, 4))
    for label, (x, y) in series.items():
        y = np.asarray(y, dtype=float)
        ok = np.isfinite(y) & (y > 0)
        if ok.any():
            ax.loglog(np.asarray(x)[ok], y[ok], "o-", label=label)
    ax.set_xlabel(xs)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    if ax.lines:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _plot_linear(path, t, series, ylabel, title):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    matplotlib.rcParams["svg.hashsalt"] = "chporous"
    fig, ax = plt.subplots(figsize=(5, 4))
    for label, y in series.items():
        ax.plot(t, y, label=label)
    ax.set_xlabel("t")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def convergence_study(cfg, out_dir=None, log=None):
    """Run micro at every eps of ``cfg`` and compare with the macro model.

    Rows are flushed to ``convergence.csv`` after each eps.  The ``bounds``
    kind is routed to :func:`bound_study`.
    """
    kind = cfg.get("study", "kind")
    if kind == "bounds":
        return bound_study(cfg, out_dir, log)
    say = log or (lambda msg: None)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    h = cfg.hash
    cell = cfg.unit_cell()
    n_cell = cell.n_cell
    tensors = compute_tensors(cell, mu=1.0)
    res = StudyResult(kind, h, [])
    if out_dir is not None:
        p = os.path.join(out_dir, "tensors.csv")
        write_tensors(p, tensors, os.path.join(out_dir, "tensors.json"), {"config_hash": h})
        res.files += [p, os.path.join(out_dir, "tensors.json")]

    mcfg = macro_config(cfg)
    msolver = MacroSolver(mcfg, tensors)
    mtraj = msolver.run()
    msg = msolver.sg
    c_mac = msg.to_array(mtraj.final.c)
    w_mac = msg.to_array(mtraj.final.w_bar)
    flow = cfg.get("physics", "flow") and tensors.K is not None
    q_mac = cell_center_velocity(msg, mtraj.final.u_bar) if flow else None
    omegas = cell_velocity_correctors(cell) if flow else None
    say(f"macro: n={mcfg.n} steps={mcfg.n_steps} max_div={mtraj.max_div:.2e}")

    eps_list = cfg.eps_list
    for eps in eps_list:
        grid = tile_domain(cell, eps)
        N = grid.N
        mc = micro_config(cfg, eps, grid)
        tr = run_micro(mc)
        st = tr.final
        lim_c = _broadcast(block_average(c_mac, N), n_cell)
        lim_w = _broadcast(block_average(w_mac, N), n_cell)
        row = {"config_hash": h, "kind": kind, "eps": eps, "N": N, "n_cell": n_cell,
               "dt": mc.dt, "n_steps": mc.n_steps,
               "error_c": _rel(two_scale_distance(st.c, lim_c, grid), _fluctuation(lim_c)),
               "error_w": _rel(two_scale_distance(st.w, lim_w, grid), _fluctuation(lim_w)),
               "error_u": float("nan"), "error_ubar": float("nan")}
        if flow:
            uc = cell_center_velocity(st.sg, st.u)
            qb = np.stack([block_average(q_mac[a], N) for a in range(grid.dim)])
            ub = np.stack([block_average(uc[a], N) for a in range(grid.dim)])
            u0 = two_scale_velocity(qb, tensors.K, omegas)
            diff = np.stack([unfold(uc[a], grid).values for a in range(grid.dim)]) - u0
            wgt = grid.h ** grid.dim
            row["error_u"] = float(np.sqrt((diff ** 2).sum() * wgt) / np.sqrt((u0 ** 2).sum() * wgt))
            row["error_ubar"] = float(np.linalg.norm(ub - qb) / np.linalg.norm(qb))
        row.update({"max_abs_c": tr.max_abs_c, "max_div": tr.max_div,
                    "mass_drift": max(abs(r.mass - tr.records[0].mass) for r in tr.records),
                    "newton_max": max(r.newton_its for r in tr.records),
                    "macro_max_div": mtraj.max_div,
                    "corrector_residual": tensors.residuals.get("corrector", float("nan")),
                    "stokes_residual": tensors.residuals.get("stokes", float("nan"))})
        res.rows.append(row)
        _fill_local_orders(res.rows)
        say("eps=1/%d " % N + " ".join(f"{m}={row[m]:.4g}" for m in METRICS))
        if out_dir is not None:
            write_csv(os.path.join(out_dir, "convergence.csv"), CONVERGENCE_COLUMNS, res.rows)

    for m in METRICS:
        vals = res.column(m)
        if len(vals) >= 2 and all(np.isfinite(vals)) and all(v > 0 for v in vals):
            res.orders[m] = observed_order(eps_list, vals)
        else:
            res.orders[m] = float("nan")
    if out_dir is not None:
        res.files.append(os.path.join(out_dir, "convergence.csv"))
        orows = [[h, m, res.orders[m], int(res.monotone(m))] for m in METRICS]
        p = os.path.join(out_dir, "orders.csv")
        write_csv(p, ORDER_COLUMNS, orows)
        res.files.append(p)
        p = os.path.join(out_dir, "convergence.svg")
        _plot(p, "eps", {m: (eps_list, res.column(m)) for m in METRICS}, "relative error",
              f"{kind} study")
        res.files.append(p)
    return res


def _fill_local_orders(rows):
    eps = [r["eps"] for r in rows]
    for m in METRICS:
        vals = [r[m] for r in rows]
        key = "order_" + m.split("_", 1)[1]
        if len(vals) < 2 or not all(np.isfinite(vals)) or not all(v > 0 for v in vals):
            for r in rows:
                r[key] = float("nan")
            continue
        lo = local_orders(eps, vals)
        rows[0][key] = float("nan")
        for r, o in zip(rows[1:], lo):
            r[key] = o


def bound_norms(trajectory):
    """Norms of the a priori estimate, from the energy ledger of one run.

    c_H1        max_t ||c||_{H^1}
    u_L2        max_t ||u||
    eps_grad_w  eps ||grad w||_{L2(0,T;L2)}
    eps_grad_u  eps ||grad u||_{L2(0,T;L2)}
    dtc_dual    ||d_t c||_{L2(0,T;(H^1)')}, exact discrete dual norm
    """
    R = trajectory.records
    eps = trajectory.config.grid.epsilon
    dts = np.diff([r.t for r in R])
    return {
        "c_H1": max(np.sqrt(2 * r.grad + r.c_sq) for r in R),
        "u_L2": max(np.sqrt(2 * r.kinetic) for r in R),
        "eps_grad_w": float(np.sqrt(np.sum(dts * eps ** 2 * np.array([r.grad_w_sq for r in R[1:]])))),
        "eps_grad_u": float(np.sqrt(np.sum(dts * eps ** 2 * np.array([r.grad_u_sq for r in R[1:]])))),
        "dtc_dual": float(np.sqrt(np.sum(dts * np.array([r.dtc_dual_sq for r in R[1:]])))),
    }


def report_energy(trajectory, out_dir, tag="micro"):
    """Energy CSV and SVG for one trajectory; returns its bound-table row."""
    os.makedirs(out_dir, exist_ok=True)
    R = trajectory.records
    write_energy_csv(os.path.join(out_dir, f"energy_{tag}.csv"), R)
    t = [r.t for r in R]
    _plot_linear(os.path.join(out_dir, f"energy_{tag}.svg"), t,
                 {"total": [r.total for r in R], "grad": [r.grad for r in R],
                  "bulk": [r.bulk for r in R], "kinetic": [r.kinetic for r in R]},
                 "energy", f"energy ledger ({tag})")
    row = bound_norms(trajectory) if hasattr(R[0], "c_sq") else {}
    row.update({"min_diss_w": min(r.diss_w for r in R), "min_diss_u": min(r.diss_u for r in R),
                "max_div": trajectory.max_div,
                "mass_drift": max(abs(r.mass - R[0].mass) for r in R),
                "newton_max": max(r.newton_its for r in R)})
    return row


def bound_study(cfg, out_dir=None, log=None):
    """Bound table: per-eps norms of the a priori estimate for fixed data."""
    say = log or (lambda msg: None)
    h = cfg.hash
    cell = cfg.unit_cell()
    res = StudyResult("bounds", h, [])
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    for eps in cfg.eps_list:
        grid = tile_domain(cell, eps)
        mc = micro_config(cfg, eps, grid)
        tr = run_micro(mc)
        if out_dir is not None:
            row = report_energy(tr, out_dir, f"eps{grid.N}")
        else:
            R = tr.records
            row = bound_norms(tr)
            row.update({"min_diss_w": min(r.diss_w for r in R),
                        "min_diss_u": min(r.diss_u for r in R), "max_div": tr.max_div,
                        "mass_drift": max(abs(r.mass - R[0].mass) for r in R),
                        "newton_max": max(r.newton_its for r in R)})
        row.update({"config_hash": h, "eps": eps, "N": grid.N, "dt": mc.dt, "n_steps": mc.n_steps})
        res.rows.append(row)
        say("eps=1/%d " % grid.N + " ".join(f"{k}={row[k]:.4g}" for k in BOUND_NORMS))
        if out_dir is not None:
            write_csv(os.path.join(out_dir, "bounds.csv"), BOUND_COLUMNS, res.rows)
    for k in BOUND_NORMS:
        v = res.column(k)
        res.orders[k] = float(max(v) / min(v)) if min(v) > 0 else float("inf")
    if out_dir is not None:
        p = os.path.join(out_dir, "bounds_ratio.csv")
        write_csv(p, ("config_hash", "norm", "max_over_min"), [[h, k, res.orders[k]] for k in BOUND_NORMS])
        res.files += [os.path.join(out_dir, "bounds.csv"), p]
        p = os.path.join(out_dir, "bounds.svg")
        _plot(p, "eps", {k: (res.column("eps"), res.column(k)) for k in BOUND_NORMS}, "norm",
              "bound table")
        res.files.append(p)
    return res


def write_micro_outputs(trajectory, out_dir):
    """Field dumps (nan in the solid), mask, and energy ledger of a micro run."""
    from .io import write_field
    os.makedirs(out_dir, exist_ok=True)
    st = trajectory.final
    g = trajectory.config.grid
    write_mask_pgm(os.path.join(out_dir, "mask.pgm"), g.chi_eps)
    write_field(os.path.join(out_dir, "c.field"), st.sg.to_array(st.c), g.epsilon, st.t, "c")
    write_field(os.path.join(out_dir, "w.field"), st.sg.to_array(st.w), g.epsilon, st.t, "w")
    uc = cell_center_velocity(st.sg, st.u)
    chi = np.asarray(g.chi_eps, dtype=bool)
    for a in range(g.dim):
        write_field(os.path.join(out_dir, f"u{a}.field"), np.where(chi, uc[a], np.nan),
                    g.epsilon, st.t, f"u{a}")
    return report_energy(trajectory, out_dir, "micro")
