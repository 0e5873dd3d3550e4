"""Line-oriented run configuration: ``section.key = value`` per line.

Blank lines and ``#`` comments are ignored.  Fractions such as ``1/4`` are
accepted wherever a number is expected; lists are comma separated.

Defaults
========

==============================  ===============  ======================================
key                             default          meaning
==============================  ===============  ======================================
geometry.dim                    2                spatial dimension
geometry.inclusion              disc:0.25        none | disc:r | square:a | slab:t
geometry.n_cell                 16               lattice points per cell edge (>= 8)
physics.theta                   0.5              temperature, 0 < theta < theta0
physics.theta0                  1.0              critical temperature
physics.lambda                  1.0              capillary coupling (>= 0)
physics.mu                      1.0              viscosity
physics.delta                   0.01             regularization width
physics.potential               singular         singular | regularized | linear
physics.linear_m0               (mean of c0)     expansion point of the linear mode
physics.force_sign              -1               sign of the capillary force
physics.scaling                 pore             pore | diffusive
physics.advection               true             transport of c by u
physics.flow                    true             solve for the velocity
physics.body_force              none             none | vortex | vortex_gradient
physics.force_amp               1.0              body-force amplitude
discretization.dt               1e-3             time step (at the largest eps)
discretization.t_end            0.01             final time
discretization.dt_scaling       fixed            fixed | eps2 (dt proportional to eps^2)
discretization.newton_tol       1e-10            Newton tolerance
discretization.newton_maxit     50               Newton iteration cap
discretization.macro_n          64               macro reference grid size
discretization.snapshot_every   0                snapshot cadence (0: first/last only)
initial.c                       cosine           constant | cosine | random
initial.mean                    0.0              mean of c0
initial.amp                     0.05             amplitude of c0
initial.u                       zero             zero | vortex
initial.u_amp                   0.0              amplitude of u0
initial.seed                    0                seed of the random initial data
study.eps                       1/4, 1/8, 1/16   strictly decreasing, each 1/N
study.kind                      full             full | stokes_darcy | diffusion | bounds
study.output                    out              output directory
==============================  ===============  ======================================
"""
import hashlib
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import ChporousError, ParseError, ValidationError
from .geometry import Inclusion, build_unit_cell, epsilon_to_N
from .micro import InitialData
from .potential import PotentialParams

_BOOL = {"true": True, "yes": True, "on": True, "1": True,
         "false": False, "no": False, "off": False, "0": False}


def _num(text):
    return float(Fraction(text.strip())) if "/" in text else float(text)


def _int(text):
    v = _num(text)
    if v != int(v):
        raise ValueError(f"{text!r} is not an integer")
    return int(v)


def _bool(text):
    try:
        return _BOOL[text.strip().lower()]
    except KeyError:
        raise ValueError(f"{text!r} is not a boolean") from None


def _str(text):
    return text.strip()


def _opt_num(text):
    return None if text.strip().lower() in ("", "none", "auto") else _num(text)


def _eps_list(text):
    return [t.strip() for t in text.split(",") if t.strip()]


SCHEMA = {
    "geometry": {"dim": (_int, 2), "inclusion": (_str, "disc:0.25"), "n_cell": (_int, 16)},
    "physics": {"theta": (_num, 0.5), "theta0": (_num, 1.0), "lambda": (_num, 1.0),
                "mu": (_num, 1.0), "delta": (_num, 0.01), "potential": (_str, "singular"),
                "linear_m0": (_opt_num, None), "force_sign": (_int, -1),
                "scaling": (_str, "pore"), "advection": (_bool, True), "flow": (_bool, True),
                "body_force": (_str, "none"), "force_amp": (_num, 1.0)},
    "discretization": {"dt": (_num, 1e-3), "t_end": (_num, 0.01), "dt_scaling": (_str, "fixed"),
                       "newton_tol": (_num, 1e-10), "newton_maxit": (_int, 50),
                       "macro_n": (_int, 64), "snapshot_every": (_int, 0)},
    "initial": {"c": (_str, "cosine"), "mean": (_num, 0.0), "amp": (_num, 0.05),
                "u": (_str, "zero"), "u_amp": (_num, 0.0), "seed": (_int, 0)},
    "study": {"eps": (_eps_list, ["1/4", "1/8", "1/16"]), "kind": (_str, "full"),
              "output": (_str, "out")},
}

CHOICES = {
    ("physics", "potential"): ("singular", "regularized", "linear"),
    ("physics", "scaling"): ("pore", "diffusive"),
    ("physics", "body_force"): ("none", "vortex", "vortex_gradient"),
    ("discretization", "dt_scaling"): ("fixed", "eps2"),
    ("initial", "c"): ("constant", "cosine", "random"),
    ("initial", "u"): ("zero", "vortex"),
    ("study", "kind"): ("full", "stokes_darcy", "diffusion", "bounds"),
}


@dataclass
class RunConfig:
    values: dict
    lines: dict = field(default_factory=dict)
    source: str = ""

    def get(self, section, key):
        return self.values[section][key]

    @property
    def params(self):
        ph = self.values["physics"]
        return PotentialParams(ph["theta"], ph["theta0"], ph["lambda"], ph["mu"], ph["delta"])

    @property
    def inclusion(self):
        return Inclusion.parse(self.values["geometry"]["inclusion"])

    @property
    def eps_list(self):
        return [1.0 / epsilon_to_N(e) for e in self.values["study"]["eps"]]

    @property
    def init(self):
        i = self.values["initial"]
        return InitialData(i["c"], i["mean"], i["amp"], i["seed"], i["u"], i["u_amp"])

    def unit_cell(self):
        g = self.values["geometry"]
        return build_unit_cell(g["dim"], g["n_cell"], self.inclusion)

    def normalized(self):
        items = []
        for sec in sorted(self.values):
            for key in sorted(self.values[sec]):
                v = self.values[sec][key]
                if isinstance(v, list):
                    v = ",".join(str(x) for x in v)
                elif isinstance(v, float):
                    v = repr(v)
                items.append(f"{sec}.{key}={v}")
        return "\n".join(items)

    @property
    def hash(self):
        return hashlib.sha256(self.normalized().encode()).hexdigest()[:12]

    def with_overrides(self, eps=None, seed=None, output=None):
        vals = {s: dict(v) for s, v in self.values.items()}
        if eps is not None:
            vals["study"]["eps"] = _eps_list(eps) if isinstance(eps, str) else [str(e) for e in eps]
        if seed is not None:
            vals["initial"]["seed"] = int(seed)
        if output is not None:
            vals["study"]["output"] = str(output)
        cfg = RunConfig(vals, dict(self.lines), self.source)
        validate(cfg)
        return cfg


def parse_text(text, source="<string>"):
    values = {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}
    values["study"]["eps"] = list(values["study"]["eps"])
    lines = {}
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'section.key = value', got {raw.strip()!r}", no)
        lhs, _, rhs = line.partition("=")
        lhs = lhs.strip()
        if "." not in lhs:
            raise ParseError(f"key {lhs!r} lacks a section prefix", no)
        sec, _, key = lhs.partition(".")
        if sec not in SCHEMA:
            raise ParseError(f"unknown section {sec!r}", no)
        if key not in SCHEMA[sec]:
            raise ParseError(f"unknown key {sec}.{key}", no)
        conv = SCHEMA[sec][key][0]
        try:
            val = conv(rhs)
        except (ValueError, ZeroDivisionError) as exc:
            raise ParseError(f"bad value for {sec}.{key}: {exc}", no) from exc
        if (sec, key) in CHOICES and val not in CHOICES[(sec, key)]:
            raise ValidationError(f"line {no}: {sec}.{key} must be one of "
                                  f"{CHOICES[(sec, key)]}, got {val!r}")
        values[sec][key] = val
        lines[(sec, key)] = no
    cfg = RunConfig(values, lines, source)
    validate(cfg)
    return cfg


def _at(cfg, sec, key):
    no = cfg.lines.get((sec, key))
    return f"line {no}: " if no else ""


def validate(cfg):
    v = cfg.values
    ph = v["physics"]
    if not (0.0 < ph["theta"] < ph["theta0"]):
        where = _at(cfg, "physics", "theta") or _at(cfg, "physics", "theta0")
        raise ValidationError(f"{where}constraint 0 < theta < theta0 violated "
                              f"(theta={ph['theta']}, theta0={ph['theta0']})")
    try:
        cfg.params
    except ChporousError as exc:
        raise ValidationError(str(exc)) from exc
    if ph["force_sign"] not in (-1, 1):
        raise ValidationError(f"{_at(cfg, 'physics', 'force_sign')}force_sign must be -1 or 1")
    g = v["geometry"]
    if g["dim"] not in (2, 3):
        raise ValidationError(f"{_at(cfg, 'geometry', 'dim')}dim must be 2 or 3")
    if g["n_cell"] < 8:
        raise ValidationError(f"{_at(cfg, 'geometry', 'n_cell')}n_cell must be >= 8")
    try:
        Inclusion.parse(g["inclusion"])
    except ChporousError as exc:
        raise ValidationError(f"{_at(cfg, 'geometry', 'inclusion')}{exc}") from exc
    d = v["discretization"]
    if not d["dt"] > 0 or not d["t_end"] >= 0:
        raise ValidationError(f"{_at(cfg, 'discretization', 'dt')}need dt > 0 and t_end >= 0")
    eps = v["study"]["eps"]
    if not eps:
        raise ValidationError(f"{_at(cfg, 'study', 'eps')}eps list is empty")
    Ns = []
    for e in eps:
        try:
            Ns.append(epsilon_to_N(e))
        except ChporousError as exc:
            raise ValidationError(f"{_at(cfg, 'study', 'eps')}eps = {e} is not of the form 1/N") from exc
    if any(b <= a for a, b in zip(Ns, Ns[1:])):
        raise ValidationError(f"{_at(cfg, 'study', 'eps')}eps list must be strictly decreasing")
    if d["macro_n"] % max(Ns) and v["study"]["kind"] != "bounds":
        raise ValidationError(f"{_at(cfg, 'discretization', 'macro_n')}macro_n must be a multiple "
                              f"of every N (largest N = {max(Ns)})")
    i = v["initial"]
    try:
        cfg.init
    except ChporousError as exc:
        raise ValidationError(str(exc)) from exc
    if ph["potential"] == "singular" and abs(i["mean"]) + abs(i["amp"]) >= 1.0:
        raise ValidationError("singular potential needs |c0| < 1")


def parse_config(path):
    with open(path) as fh:
        text = fh.read()
    return parse_text(text, str(path))


def default_config():
    return parse_text("")
