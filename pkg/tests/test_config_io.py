import numpy as np
import pytest

from chporous.cells import compute_tensors
from chporous.config import SCHEMA, default_config, parse_config, parse_text
from chporous.errors import ParseError, ValidationError
from chporous.geometry import build_unit_cell
from chporous.io import (ENERGY_COLUMNS, read_csv, read_field, read_tensors, write_csv,
                         write_energy_csv, write_field, write_tensors)


def test_minimal_file_gets_defaults(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# nothing but a comment\n\n")
    cfg = parse_config(p)
    for sec, keys in SCHEMA.items():
        for key, (_, default) in keys.items():
            assert cfg.get(sec, key) == default
    assert cfg.eps_list == [0.25, 0.125, 0.0625]


def test_values_and_fractions():
    cfg = parse_text("physics.theta = 1/4  # comment\nstudy.eps = 1/2, 1/4, 1/8\n"
                     "physics.flow = false\ngeometry.inclusion = square:0.2\n")
    assert cfg.get("physics", "theta") == 0.25
    assert cfg.eps_list == [0.5, 0.25, 0.125]
    assert cfg.get("physics", "flow") is False
    assert cfg.inclusion.kind == "square"


def test_theta_constraint_named():
    with pytest.raises(ValidationError, match="0 < theta < theta0"):
        parse_text("physics.theta = 1.0\nphysics.theta0 = 1.0\n")


def test_eps_not_unit_fraction():
    with pytest.raises(ValidationError, match="1/N"):
        parse_text("study.eps = 1/4, 0.3\n")


def test_eps_must_decrease():
    with pytest.raises(ValidationError, match="decreasing"):
        parse_text("study.eps = 1/8, 1/4\n")


@pytest.mark.parametrize("text,line", [("geometry.n_cell = 16\nbogus line\n", 2),
                                       ("nosection = 1\n", 1),
                                       ("\n\nphysics.nokey = 1\n", 3),
                                       ("physics.theta = abc\n", 1)])
def test_parse_errors_carry_line(text, line):
    with pytest.raises(ParseError) as info:
        parse_text(text)
    assert info.value.line == line


def test_choice_validation():
    with pytest.raises(ValidationError):
        parse_text("physics.potential = cubic\n")


def test_hash_stable_and_sensitive():
    a = parse_text("physics.theta = 0.5\n")
    b = parse_text("physics.theta = 1/2\n")
    c = parse_text("physics.theta = 0.4\n")
    assert a.hash == b.hash == default_config().hash
    assert a.hash != c.hash
    assert len(a.hash) == 12


def test_overrides():
    cfg = default_config().with_overrides(eps="1/2,1/4", seed=9)
    assert cfg.eps_list == [0.5, 0.25]
    assert cfg.init.seed == 9


def test_field_roundtrip(tmp_path, rng):
    a = rng.standard_normal((8, 8))
    a[2, 3] = np.nan
    p = tmp_path / "c.field"
    write_field(p, a, 0.25, 0.125, "c")
    b, head = read_field(p)
    assert np.array_equal(np.isnan(a), np.isnan(b))
    assert np.array_equal(a[~np.isnan(a)], b[~np.isnan(b)])
    assert head["eps"] == 0.25 and head["name"] == "c"
    t = rng.standard_normal((2, 2, 8, 8))
    write_field(p, t, 0.5, 0.0, "u", blocks=(2, 8))
    b, head = read_field(p)
    assert np.array_equal(b, t) and head["blocks"] == (2, 8)


def test_bad_field_file(tmp_path):
    p = tmp_path / "x.field"
    p.write_text("hello\n")
    with pytest.raises(ParseError):
        read_field(p)


def test_csv_repr_roundtrip(tmp_path):
    p = tmp_path / "t.csv"
    write_csv(p, ("a", "b"), [[0.1, 1 / 3], {"a": 2, "b": "x"}])
    rows = read_csv(p)
    assert float(rows[0]["b"]) == 1 / 3
    assert rows[1]["b"] == "x"


def test_energy_csv_columns(tmp_path):
    from types import SimpleNamespace
    recs = [SimpleNamespace(**{c: float(i) for c in ENERGY_COLUMNS}) for i in range(3)]
    p = tmp_path / "e.csv"
    write_energy_csv(p, recs)
    rows = read_csv(p)
    assert tuple(rows[0].keys()) == ENERGY_COLUMNS and len(rows) == 3


def test_tensor_roundtrip(tmp_path):
    T = compute_tensors(build_unit_cell(2, 8, "disc:0.25"))
    write_tensors(tmp_path / "t.csv", T, tmp_path / "t.json")
    U = read_tensors(tmp_path / "t.csv", tmp_path / "t.json")
    assert np.array_equal(T.A_hom, U.A_hom) and np.array_equal(T.K, U.K)
    assert U.porosity == T.porosity
