import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chporous.errors import (DisconnectedPore, InclusionTouchesBoundary,
                             NonUnitFractionEpsilon, ValidationError)
from chporous.geometry import (Inclusion, build_unit_cell, connectivity_check, epsilon_to_N,
                               tile_domain, write_mask_pgm)


def test_no_inclusion_is_all_pore():
    cell = build_unit_cell(2, 64, "none")
    assert cell.porosity == 1.0
    assert not cell.has_solid


def test_disc_porosity_close_to_area():
    cell = build_unit_cell(2, 64, "disc:0.25")
    assert abs(cell.porosity - (1 - np.pi * 0.25 ** 2)) <= 2 / 64
    assert cell.porosity == 0.8017578125


def test_square_porosity_exact():
    assert build_unit_cell(2, 64, "square:0.25").porosity == 0.75


def test_mask_is_int8_and_read_only():
    cell = build_unit_cell(2, 16, "disc:0.25")
    assert cell.chi.dtype == np.int8
    assert set(np.unique(cell.chi)) <= {0, 1}
    with pytest.raises(ValueError):
        cell.chi[0, 0] = 0


def test_solid_touching_boundary_rejected():
    with pytest.raises(InclusionTouchesBoundary):
        build_unit_cell(2, 16, "disc:0.49")


def test_bad_inclusion_and_sizes():
    with pytest.raises(ValidationError):
        Inclusion.parse("blob:0.2")
    with pytest.raises(ValidationError):
        build_unit_cell(2, 4, "none")
    with pytest.raises(ValidationError):
        build_unit_cell(4, 16, "none")


def test_disc_cell_is_mirror_symmetric():
    chi = build_unit_cell(2, 32, "disc:0.3").chi
    assert np.array_equal(chi, chi[::-1, :])
    assert np.array_equal(chi, chi.T)


def test_three_dimensional_cell():
    cell = build_unit_cell(3, 16, "disc:0.3")
    assert cell.chi.shape == (16, 16, 16)
    assert abs(cell.porosity - (1 - 4 / 3 * np.pi * 0.3 ** 3)) < 0.03


def test_connectivity_check():
    assert connectivity_check(np.ones((8, 8), dtype=bool))
    m = np.zeros((8, 8), dtype=bool)
    m[:, :3] = True
    m[5, 6] = True
    assert not connectivity_check(m)
    assert connectivity_check(build_unit_cell(2, 64, "disc:0.25").chi)


def test_identity_tiling():
    cell = build_unit_cell(2, 16, "disc:0.25")
    g = tile_domain(cell, 1.0, 1)
    assert np.array_equal(g.chi_eps, cell.chi)


def test_tiling_preserves_porosity_exactly():
    cell = build_unit_cell(2, 16, "square:0.25")
    assert cell.porosity == 0.75
    assert tile_domain(cell, 0.25, 4).porosity == 0.75


def test_tiling_matches_pointwise_evaluation(rng):
    # chi_eps(x) = chi(frac(x / eps)), evaluated directly from the inclusion
    cell = build_unit_cell(2, 16, "disc:0.3")
    g = tile_domain(cell, 0.5, 2)
    n = g.n_macro
    for _ in range(10):
        i, j = rng.integers(0, n, size=2)
        x = (np.array([i, j]) + 0.5) * g.h
        y = np.mod(x / g.epsilon, 1.0)
        assert g.chi_eps[i, j] == (0 if cell.inclusion.solid(y) else 1)


@settings(max_examples=20, deadline=None)
@given(N=st.integers(1, 6), n_cell=st.sampled_from([8, 12, 16]),
       r=st.floats(0.05, 0.4))
def test_tiling_periodicity_property(N, n_cell, r):
    try:
        cell = build_unit_cell(2, n_cell, Inclusion("disc", r))
    except InclusionTouchesBoundary:
        return
    g = tile_domain(cell, 1.0 / N)
    idx = np.indices(g.chi_eps.shape)
    assert np.array_equal(g.chi_eps, cell.chi[idx[0] % n_cell, idx[1] % n_cell])
    assert g.porosity == cell.porosity


def test_build_is_deterministic():
    a = build_unit_cell(2, 32, "disc:0.25").chi
    b = build_unit_cell(2, 32, "disc:0.25").chi
    assert a.tobytes() == b.tobytes()


def test_epsilon_must_be_unit_fraction():
    assert epsilon_to_N("1/4") == 4
    assert epsilon_to_N(0.125) == 8
    with pytest.raises(NonUnitFractionEpsilon):
        epsilon_to_N(0.3)
    cell = build_unit_cell(2, 8, "none")
    with pytest.raises(NonUnitFractionEpsilon):
        tile_domain(cell, 0.3)


def test_slab_tiling_disconnects():
    cell = build_unit_cell(2, 16, "slab:0.25")
    with pytest.raises(DisconnectedPore):
        tile_domain(cell, 0.5)


def test_pgm_export(tmp_path):
    cell = build_unit_cell(2, 8, "disc:0.25")
    p = tmp_path / "m.pgm"
    write_mask_pgm(p, cell.chi)
    lines = p.read_text().split()
    assert lines[0] == "P2"
    vals = np.array(lines[4:], dtype=int)
    assert vals.size == 64
