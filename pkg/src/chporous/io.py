"""Plain-text output formats: field files, energy ledgers, tensors, tables.

Field file layout (ASCII)::

    # chporous field
    dims: 64 64
    eps: 0.25
    t: 0.0
    name: c
    blocks: 4 16          (two-scale fields only)
    <values, row-major, one line per row of the last axis; nan marks solid>

Floats are written with ``repr`` so that identical runs give identical files.
"""
import csv
import json
import os
from io import StringIO

import numpy as np

from .errors import ParseError

ENERGY_COLUMNS = ("t", "grad", "bulk", "kinetic", "total", "mass", "diss_w", "diss_u")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def atomic_write(path, text):
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_field(path, values, eps, t, name, blocks=None):
    values = np.asarray(values, dtype=float)
    lines = ["# chporous field", "dims: " + " ".join(str(s) for s in values.shape),
             f"eps: {_fmt(float(eps))}", f"t: {_fmt(float(t))}", f"name: {name}"]
    if blocks is not None:
        lines.append(f"blocks: {blocks[0]} {blocks[1]}")
    rows = values.reshape(-1, values.shape[-1]) if values.ndim > 1 else values[None, :]
    for row in rows:
        lines.append(" ".join(_fmt(v) for v in row))
    atomic_write(path, "\n".join(lines) + "\n")


def read_field(path):
    """Return (values, header dict) from a field file."""
    header = {}
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("# chporous field"):
        raise ParseError("not a field file", 1)
    k = 1
    while k < len(lines) and ":" in lines[k]:
        key, _, val = lines[k].partition(":")
        header[key.strip()] = val.strip()
        k += 1
    try:
        dims = tuple(int(s) for s in header["dims"].split())
        data = np.array([float(v) for line in lines[k:] for v in line.split()])
        values = data.reshape(dims)
    except (KeyError, ValueError) as exc:
        raise ParseError(f"malformed field file: {exc}", k + 1) from exc
    header["eps"] = float(header.get("eps", "nan"))
    header["t"] = float(header.get("t", "nan"))
    if "blocks" in header:
        header["blocks"] = tuple(int(s) for s in header["blocks"].split())
    return values, header


def rows_to_csv(columns, rows):
    """RFC-4180 text; rows are sequences or dicts keyed by column."""
    buf = StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        vals = [r[c] for c in columns] if isinstance(r, dict) else r
        w.writerow([_fmt(v) for v in vals])
    return buf.getvalue()


def write_csv(path, columns, rows):
    atomic_write(path, rows_to_csv(columns, rows))


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_energy_csv(path, records):
    rows = [[getattr(r, c) for c in ENERGY_COLUMNS] for r in records]
    write_csv(path, ENERGY_COLUMNS, rows)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def write_tensors(path_csv, tensors, path_meta=None, extra=None):
    """Tensors as CSV rows (tensor, i, j0, j1, ...) plus a JSON metadata block."""
    d = tensors.dim
    cols = ["tensor", "i"] + [f"j{j}" for j in range(d)]
    rows = []
    for name, T in (("A_hom", tensors.A_hom), ("K", tensors.K)):
        if T is None:
            continue
        for i in range(d):
            rows.append([name, i] + [float(v) for v in T[i]])
    write_csv(path_csv, cols, rows)
    if path_meta is not None:
        meta = {"porosity": tensors.porosity, "n_cell": tensors.n_cell, "mu": tensors.mu,
                "inclusion": tensors.inclusion, "dim": d,
                "residuals": {k: float(v) for k, v in tensors.residuals.items()}}
        meta.update(extra or {})
        atomic_write(path_meta, json.dumps(meta, indent=2, sort_keys=True, default=_json_default) + "\n")


def read_tensors(path_csv, path_meta):
    from .cells import EffectiveTensors
    with open(path_meta) as fh:
        meta = json.load(fh)
    d = int(meta["dim"])
    mats = {}
    for row in read_csv(path_csv):
        M = mats.setdefault(row["tensor"], np.zeros((d, d)))
        M[int(row["i"])] = [float(row[f"j{j}"]) for j in range(d)]
    return EffectiveTensors(mats["A_hom"], mats.get("K"), float(meta["porosity"]),
                            int(meta.get("n_cell", 0)), float(meta.get("mu", 1.0)),
                            meta.get("inclusion", ""), meta.get("residuals", {}))
