"""Command line entry point: ``chporous <subcommand> --config run.cfg``."""
import os
import sys

import click
import numpy as np

from .config import default_config, parse_config
from .errors import ChporousError


def _load(config, eps=None, seed=None, out=None):
    cfg = parse_config(config) if config else default_config()
    return cfg.with_overrides(eps=eps, seed=seed, output=out)


def _out(cfg):
    out = cfg.get("study", "output")
    os.makedirs(out, exist_ok=True)
    return out


common = [
    click.option("--config", "config", type=click.Path(exists=True, dir_okay=False),
                 help="run configuration (section.key = value lines)"),
    click.option("--out", "out", type=click.Path(file_okay=False), help="output directory"),
    click.option("--eps", "eps", help="comma separated eps list, e.g. 1/4,1/8"),
    click.option("--seed", "seed", type=click.IntRange(0, 2 ** 64 - 1), help="seed of random initial data"),
]


def with_common(f):
    for opt in reversed(common):
        f = opt(f)
    return f


@click.group()
def cli():
    """Cahn-Hilliard-Stokes flow in periodic porous media and its homogenized limit."""


@cli.command("check-potential")
@with_common
@click.option("--strict", is_flag=True, help="fail if a structural assumption is violated")
def check_potential(config, out, eps, seed, strict):
    """Verify the structural assumptions of the potential."""
    from .potential import binodal_point, verify_assumptions
    cfg = _load(config, eps, seed, out)
    rep = verify_assumptions(cfg.params, strict=strict)
    click.echo(rep.text())
    click.echo(f"binodal s* = {binodal_point(cfg.params)!r}")


@cli.command("cell-solve")
@with_common
def cell_solve(config, out, eps, seed):
    """Solve the cell problems and write the effective tensors."""
    from .cells import compute_tensors, solve_w_cell
    from .io import write_tensors
    cfg = _load(config, eps, seed, out)
    d = _out(cfg)
    cell = cfg.unit_cell()
    T = compute_tensors(cell, mu=1.0)
    _, w = solve_w_cell(cell)
    write_tensors(os.path.join(d, "tensors.csv"), T, os.path.join(d, "tensors.json"),
                  {"config_hash": cfg.hash, "w_cell_defect": w.defect,
                   "w_cell_consistent": w.consistent})
    click.echo(f"porosity {T.porosity!r}")
    click.echo(f"A_hom {np.array2string(T.A_hom, precision=10)}")
    if T.K is not None:
        click.echo(f"K {np.array2string(T.K, precision=10)}")
    click.echo(w.text())


@cli.command("micro-run")
@with_common
def micro_run(config, out, eps, seed):
    """Run the pore-scale model at the first eps of the list."""
    from .micro import run_micro
    from .study import micro_config, write_micro_outputs
    cfg = _load(config, eps, seed, out)
    d = _out(cfg)
    tr = run_micro(micro_config(cfg, cfg.eps_list[0]))
    row = write_micro_outputs(tr, d)
    R = tr.records
    click.echo(f"steps {len(R) - 1}  E0 {R[0].total!r}  ET {R[-1].total!r}  "
               f"mass drift {row['mass_drift']:.2e}  max|c| {tr.max_abs_c:.6f}  "
               f"max|div u| {tr.max_div:.2e}")


@cli.command("macro-run")
@with_common
@click.option("--tensors", "tensors_dir", type=click.Path(exists=True, file_okay=False),
              help="directory with tensors.csv/tensors.json from cell-solve")
def macro_run(config, out, eps, seed, tensors_dir):
    """Run the homogenized model."""
    from .cells import compute_tensors
    from .io import read_tensors, write_energy_csv, write_field
    from .macro import run_macro
    from .study import macro_config
    cfg = _load(config, eps, seed, out)
    d = _out(cfg)
    if tensors_dir:
        T = read_tensors(os.path.join(tensors_dir, "tensors.csv"),
                         os.path.join(tensors_dir, "tensors.json"))
    else:
        T = compute_tensors(cfg.unit_cell(), mu=1.0)
    tr = run_macro(macro_config(cfg), T)
    st = tr.final
    write_energy_csv(os.path.join(d, "energy_macro.csv"), tr.records)
    write_field(os.path.join(d, "c_macro.field"), st.sg.to_array(st.c), 0.0, st.t, "c")
    write_field(os.path.join(d, "w_macro.field"), st.sg.to_array(st.w_bar), 0.0, st.t, "w")
    R = tr.records
    click.echo(f"steps {len(R) - 1}  E0 {R[0].total!r}  ET {R[-1].total!r}  "
               f"max|div q| {tr.max_div:.2e}")


@cli.command("unfold")
@with_common
@click.option("--field", "field_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="field file on the perforated lattice (nan in the solid)")
def unfold_cmd(config, out, eps, seed, field_path):
    """Extend a pore field to the whole box and unfold it onto the product lattice."""
    from .geometry import tile_domain
    from .io import read_field, write_field
    from .unfolding import extend, unfold
    cfg = _load(config, eps, seed, out)
    d = _out(cfg)
    vals, head = read_field(field_path)
    grid = tile_domain(cfg.unit_cell(), head["eps"])
    if vals.shape != grid.chi_eps.shape:
        raise ChporousError(f"field shape {vals.shape} does not match the lattice {grid.chi_eps.shape}")
    chi = np.asarray(grid.chi_eps, dtype=bool)
    tsf = unfold(extend(vals[chi], grid), grid)
    name = head.get("name", "field")
    path = os.path.join(d, f"{name}_unfolded.field")
    write_field(path, tsf.values, grid.epsilon, head["t"], name, blocks=(tsf.N, tsf.n_cell))
    click.echo(path)


@cli.command("study")
@with_common
def study(config, out, eps, seed):
    """Convergence study (or bound table) over the eps list."""
    from .study import convergence_study
    cfg = _load(config, eps, seed, out)
    d = _out(cfg)
    res = convergence_study(cfg, d, log=click.echo)
    for k, v in res.orders.items():
        label = "max/min" if res.kind == "bounds" else "observed order"
        click.echo(f"{k}: {label} {v:.4g}")


def main(argv=None):
    try:
        cli.main(args=argv, prog_name="chporous", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except ChporousError as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
