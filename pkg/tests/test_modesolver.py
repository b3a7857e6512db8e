import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from slotqed.geometry import CrossSection, Grid2D, Layout, Rect, rasterize
from slotqed.materials import MaterialModel, permittivity
from slotqed.modesolver import (
    ModeSolverError,
    PaddingError,
    SolverSettings,
    SolveRequest,
    assemble_operator,
    group_index,
    mode_overlap,
    read_field_dump,
    slot_enhancement,
    solve_modes,
    write_field_dump,
)

from .conftest import slab_map, slab_mode
from .oracles import slab_group_index, slab_modes

LAM = 750.0
STACK5 = [("GaP", 150), ("SiO2", 50), ("GaP", 150)]


def _eps(name, lam=LAM):
    return float(permittivity(name, lam))


def _oracle(layers, sub, sup, lam, pol):
    return slab_modes([_eps(m, lam) for m, _ in layers], [t for _, t in layers], _eps(sub, lam), _eps(sup, lam),
                      lam, pol)


# --- operator structure -------------------------------------------------------


def _box_map(nx, ny, dx, dy, n=1.0, lam=LAM):
    vac = MaterialModel.constant("medium", n)
    return rasterize(Layout(vac), Grid2D.centered(dx, dy, nx, ny), lam)


def test_pec_box_full_spectrum():
    """Uniform medium in a PEC box: every eigenvalue is (n k0)^2 - k_t^2 for a
    discrete TE_mn (m, n not both 0) or TM_mn (m, n >= 1) wavenumber."""
    nx, ny, dx, dy = 9, 8, 10.0, 9.0
    a, b = nx * dx, ny * dy
    n = 1.3
    k0 = 2 * math.pi / LAM
    A = assemble_operator(_box_map(nx, ny, dx, dy, n)).toarray()
    got = np.sort(np.linalg.eigvals(A).real)

    def kt2(m, q):
        return (4 / dx**2) * math.sin(m * math.pi * dx / (2 * a)) ** 2 + (4 / dy**2) * math.sin(
            q * math.pi * dy / (2 * b)) ** 2

    te = [kt2(m, q) for m in range(nx) for q in range(ny) if (m, q) != (0, 0)]
    tm = [kt2(m, q) for m in range(1, nx) for q in range(1, ny)]
    want = np.sort((n * k0) ** 2 - np.array(te + tm))
    assert got.shape == want.shape
    assert np.allclose(got, want, rtol=0, atol=1e-12 * (n * k0) ** 2 + 1e-14)
    # the lowest transverse eigenvalue is TE10 (a > b), not TM11
    assert got[-1] == pytest.approx((n * k0) ** 2 - kt2(1, 0), rel=1e-12)
    assert kt2(1, 0) < kt2(1, 1)


def test_blocks_have_at_most_nine_nonzeros_per_row():
    cs = CrossSection("GaP", 100, 120, 40)
    m = rasterize(cs, Grid2D.around(cs, 10.0, 10.0, 60.0), LAM)
    A = sp.csr_matrix(assemble_operator(m))
    g = m.grid
    n_x = g.nx * (g.ny - 1)
    for blk in (A[:n_x, :n_x], A[:n_x, n_x:], A[n_x:, :n_x], A[n_x:, n_x:]):
        assert np.diff(sp.csr_matrix(blk).indptr).max() <= 9


def test_stencil_on_constant_vector_hand_computed():
    """A applied to all-ones, at an interior Ex sample next to one high-index cell.

    For constant Et the curl term vanishes in the interior, and
    A 1 = k0^2 eps_x + [D/eps_z](i+1, j) - [D/eps_z](i, j) over dx,
    where D is the discrete divergence of (eps_x, eps_y) at a node.
    """
    nx = ny = 8
    dx, dy = 10.0, 20.0
    g = Grid2D.centered(dx, dy, nx, ny)
    hi = MaterialModel.constant("hi", 2.0)
    # one cell [0,10]x[0,20] of eps=4 in vacuum
    lay = Layout(MaterialModel.constant("v", 1.0), (Rect(0.0, 10.0, 0.0, 20.0, hi),))
    m = rasterize(lay, g, LAM)
    A = assemble_operator(m)
    k0 = 2 * math.pi / LAM
    y = A @ np.ones(A.shape[0])

    # Ex sample at (x=5, y=0): half index i=4, node row j=4
    i, j = 4, 4
    row = i * (ny - 1) + (j - 1)
    ex, ey, ez = m.eps_x, m.eps_y, m.eps_z

    def D(ni, nj):
        # divergence of eps*E with E = 1 on unknown samples, 0 on PEC edges
        def vx(ii, jj):
            return ex[ii, jj] if 0 < jj < ny else 0.0

        def vy(ii, jj):
            return ey[ii, jj] if 0 < ii < nx else 0.0

        return (vx(ni, nj) - vx(ni - 1, nj)) / dx + (vy(ni, nj) - vy(ni, nj - 1)) / dy

    by_hand = k0**2 * ex[i, j] + (D(i + 1, j) / ez[i + 1, j] - D(i, j) / ez[i, j]) / dx
    # spot values of the patch (area-weighted means of 1 and 4)
    assert ex[i, j] == pytest.approx(2.5)  # box [0,10]x[-10,10] half inside
    assert ez[i, j] == pytest.approx(1.75) and ez[i + 1, j] == pytest.approx(1.75)
    assert y[row] == pytest.approx(by_hand, rel=1e-12)


def test_grid_too_small():
    m = _box_map(6, 20, 10.0, 10.0, 1.5)
    with pytest.raises(ValueError, match="too small"):
        assemble_operator(m)


def test_guess_must_lie_inside_index_range():
    cs = CrossSection("GaP", 200, 200, 40)
    m = rasterize(cs, Grid2D.around(cs, 10.0, 10.0, 100.0), LAM)
    with pytest.raises(ValueError):
        SolveRequest(m, n_eff_guess=0.9)
    with pytest.raises(ValueError):
        SolveRequest(m, n_eff_guess=4.0)
    with pytest.raises(ValueError):
        SolveRequest(m, n_modes=0)


# --- oracle equivalence -------------------------------------------------------


@pytest.mark.parametrize("pol,opol", [("y", "TM"), ("x", "TE")])
def test_five_layer_slab_matches_transfer_matrix(pol, opol):
    want = _oracle(STACK5, "SiO2", "air", LAM, opol)[0]
    m = slab_mode(STACK5, "SiO2", "air", LAM, 5.0, pol)
    assert abs(m.n_eff - want) <= 1e-3


def test_slab_error_is_second_order():
    want = _oracle(STACK5, "SiO2", "air", LAM, "TM")[0]
    e10 = slab_mode(STACK5, "SiO2", "air", LAM, 10.0).n_eff - want
    e5 = slab_mode(STACK5, "SiO2", "air", LAM, 5.0).n_eff - want
    assert abs(e5) < abs(e10)
    assert 3.0 < e10 / e5 < 5.0


@settings(max_examples=8, deadline=None)
@given(
    t_core=st.sampled_from([150, 200, 300]),
    core=st.sampled_from(["GaP", "Si", "SiNx", "LN"]),
    sup=st.sampled_from(["air", "SiO2"]),
)
def test_three_layer_slabs_match_oracle(t_core, core, sup):
    layers = [("SiO2", 50), (core, t_core), ("SiO2", 50)]
    want = _oracle(layers, "SiO2", sup, LAM, "TM")[0]
    got = slab_mode(layers, "SiO2", sup, LAM, 5.0, n_modes=2, padding=2500.0,
                     settings=SolverSettings(boundary_tol=1e-3)).n_eff
    assert abs(got - want) <= 1e-3


# --- group index ----------------------------------------------------------------


def test_group_index_constant_index_slab():
    """Dispersionless materials: n_g from the energy ratio and from central
    differences both match the oracle's d beta / d k0 to 1%."""
    rail = MaterialModel.constant("rail", 3.2)
    ox = MaterialModel.constant("ox", 1.45)
    air = MaterialModel.constant("air1", 1.0)
    layers = [(rail, 150), (ox, 50), (rail, 150)]

    def eps_fn(lam):
        return [3.2**2, 1.45**2, 3.2**2], 1.45**2, 1.0

    want = slab_group_index(eps_fn, [150, 50, 150], LAM, "TM")
    emap = slab_map(layers, ox, air, LAM, 5.0)
    m = slab_mode(layers, ox, air, LAM, 5.0)
    assert m.n_g == pytest.approx(want, rel=0.01)
    assert m.n_g > m.n_eff
    fd = group_index(SolveRequest(emap, n_modes=1, n_eff_guess=m.n_eff * 1.001), dlam=1.0)
    assert fd == pytest.approx(want, rel=0.01)


def test_group_index_dispersive_slab_energy_vs_differences():
    def eps_fn(lam):
        return [_eps("GaP", lam), _eps("SiO2", lam), _eps("GaP", lam)], _eps("SiO2", lam), 1.0

    want = slab_group_index(eps_fn, [150, 50, 150], LAM, "TM")
    m = slab_mode(STACK5, "SiO2", "air", LAM, 5.0)
    assert m.n_g == pytest.approx(want, rel=0.01)
    emap = slab_map(STACK5, "SiO2", "air", LAM, 5.0)
    fd = group_index(SolveRequest(emap, n_modes=1, n_eff_guess=m.n_eff * 1.001))
    assert fd == pytest.approx(m.n_g, rel=2e-3)


def test_slot_mode_group_index_exceeds_effective_index(gap_slot_mode):
    _, m = gap_slot_mode
    assert m.n_g > m.n_eff
    # regression pin for the 200/200/20 nm GaP slot at 720 nm on a 10 nm grid
    assert m.n_eff == pytest.approx(1.88684, abs=2e-5)
    assert m.n_g == pytest.approx(3.5340, abs=2e-3)


# --- mode properties -----------------------------------------------------------


def test_mode_invariants(gap_slot_mode):
    cs, m = gap_slot_mode
    assert m.power() == pytest.approx(1.0, rel=1e-9)
    k0 = 2 * math.pi / m.wavelength
    n_max = math.sqrt(m.map.eps_max)
    assert m.residual <= 1e-8
    assert math.sqrt(m.map.eps_boundary) < m.n_eff < n_max
    assert 0.8 < m.pol_fraction_y <= 1.0
    assert 0.0 <= m.gamma_slot <= 1.0
    assert m.beta == pytest.approx(m.n_eff * k0)


def test_slot_enhancement_near_permittivity_ratio(gap_slot_mode):
    _, m = gap_slot_mode
    ratio = _eps("GaP", 720.0) / _eps("SiO2", 720.0)
    assert abs(slot_enhancement(m) / ratio - 1) < 0.15


def test_full_solve_is_mirror_symmetric_and_matches_reduced():
    cs = CrossSection("GaP", 200, 200, 20)
    emap = rasterize(cs, Grid2D.around(cs, 10.0, 10.0, 1500.0), 720.0)
    full = solve_modes(SolveRequest(emap, n_modes=2))
    slot = [m for m in full if m.pol_fraction_y > 0.5][0]
    ey = np.abs(slot.Ey)
    assert np.max(np.abs(ey - ey[::-1])) <= 1e-6 * ey.max()
    even = solve_modes(SolveRequest(emap, n_modes=1, symmetry="even"))[0]
    assert even.n_eff == pytest.approx(slot.n_eff, abs=1e-10)
    assert mode_overlap(even, slot) == pytest.approx(1.0, abs=1e-8)
    odd = solve_modes(SolveRequest(emap, n_modes=1, symmetry="odd"))[0]
    assert odd.pol_fraction_y < 0.5
    te = [m for m in full if m.pol_fraction_y < 0.5][0]
    assert odd.n_eff == pytest.approx(te.n_eff, abs=1e-10)


def test_odd_cell_count_symmetry_reduction():
    cs = CrossSection("GaP", 250, 200, 20)
    emap = rasterize(cs, Grid2D.around(cs, 10.0, 10.0, 1500.0), 720.0)
    assert emap.grid.nx % 2 == 1
    full = [m for m in solve_modes(SolveRequest(emap, n_modes=2)) if m.pol_fraction_y > 0.5][0]
    even = solve_modes(SolveRequest(emap, n_modes=1, symmetry="even"))[0]
    assert even.n_eff == pytest.approx(full.n_eff, abs=1e-10)


def test_symmetry_requires_centered_pec_grid():
    emap = slab_map(STACK5, "SiO2", "air", LAM, 10.0)
    with pytest.raises(ValueError, match="mirror"):
        SolveRequest(emap, symmetry="even")


def test_near_degenerate_pair_ordered_by_y_polarization():
    # square core, square window: the two fundamental modes are 90-degree rotations
    core = Rect(-150.0, 150.0, -150.0, 150.0, MaterialModel.constant("core", 2.0))
    lay = Layout(MaterialModel.constant("clad", 1.0), (core,))
    g = Grid2D.centered(10.0, 10.0, 300, 300)
    modes = solve_modes(SolveRequest(rasterize(lay, g, 600.0), n_modes=2))
    assert len(modes) == 2
    assert abs(modes[0].n_eff - modes[1].n_eff) < 1e-6
    assert modes[0].pol_fraction_y > 0.5 > modes[1].pol_fraction_y


def test_determinism_bitwise():
    cs = CrossSection("GaP", 200, 200, 20)
    emap = rasterize(cs, Grid2D.around(cs, 10.0, 10.0, 1100.0), 720.0)
    st_ = SolverSettings(boundary_tol=1e-3)
    a = solve_modes(SolveRequest(emap, n_modes=1, symmetry="even", settings=st_))[0]
    b = solve_modes(SolveRequest(emap, n_modes=1, symmetry="even", settings=st_))[0]
    assert a.n_eff == b.n_eff
    assert np.array_equal(a.Ey, b.Ey)


# --- failure modes --------------------------------------------------------------


def test_no_guided_mode_is_empty_not_error():
    # uniform medium: nothing can be guided
    m = _box_map(20, 20, 10.0, 10.0, 1.5)
    assert solve_modes(SolveRequest(m, n_modes=1)) == []


def test_insufficient_padding_raises_with_suggestion():
    cs = CrossSection("GaP", 200, 200, 20)
    emap = rasterize(cs, Grid2D.around(cs, 10.0, 10.0, 200.0), 720.0)
    with pytest.raises(PaddingError) as exc:
        solve_modes(SolveRequest(emap, n_modes=1, symmetry="even"))
    assert exc.value.suggested_padding > 200.0
    assert exc.value.edge_ratio > 1e-6


def test_nonconvergence_carries_residual():
    cs = CrossSection("GaP", 200, 200, 20)
    emap = rasterize(cs, Grid2D.around(cs, 10.0, 10.0, 300.0), 720.0)
    bad = SolverSettings(maxiter=1, arpack_tol=1e-15)
    with pytest.raises(ModeSolverError) as exc:
        solve_modes(SolveRequest(emap, n_modes=4, settings=bad, n_eff_guess=1.5))
    assert "converge" in str(exc.value)


# --- field dump --------------------------------------------------------------------


def test_field_dump_round_trip(tmp_path, gap_slot_mode):
    _, m = gap_slot_mode
    path = write_field_dump(m, tmp_path / "mode.fields")
    header, fields = read_field_dump(path)
    assert header["n_eff"] == m.n_eff
    assert header["nx"] == m.grid.nx and header["dx_nm"] == m.grid.dx
    for name in ("Ex", "Ey", "Ez", "Hx", "Hy", "Hz"):
        assert np.array_equal(fields[name], getattr(m, name))
    assert not (tmp_path / "mode.fields.tmp").exists()
    # raw layout: header line, then little-endian complex128 in C order
    raw = path.read_bytes()
    body = raw[raw.index(b"\n") + 1:]
    ex = np.frombuffer(body[: m.Ex.size * 16], dtype="<c16").reshape(m.Ex.shape)
    assert np.array_equal(ex, m.Ex)
