import math

import pytest

from slotqed.geometry import Grid2D, Layout, rasterize
from slotqed.modesolver import SolveRequest, solve_modes


def slab_map(layers, substrate, superstrate, wavelength, dy, padding=1500.0, nx=8, dx=10.0):
    """Quasi-1D stack: periodic in x, PEC top and bottom."""
    lay = Layout.slab_stack(layers, substrate, superstrate)
    total = sum(t for _, t in layers)
    k = int(math.ceil(padding / dy))
    # bottom of the stack on a node line; every interface follows when commensurate
    y0 = -total / 2 - k * dy
    ny = int(math.ceil((total + k * dy + padding) / dy))
    g = Grid2D(dx, dy, nx, ny, (-nx * dx / 2, y0), padding, periodic_x=True)
    return rasterize(lay, g, wavelength)


def slab_mode(layers, substrate, superstrate, wavelength, dy, pol="y", n_modes=3, settings=None, **kw):
    """Fundamental TM-like (pol='y') or TE-like (pol='x') slab mode."""
    emap = slab_map(layers, substrate, superstrate, wavelength, dy, **kw)
    modes = solve_modes(SolveRequest(emap, n_modes=n_modes, **({"settings": settings} if settings else {})))
    want_y = pol == "y"
    for m in modes:
        if (m.pol_fraction_y > 0.5) == want_y:
            return m
    raise AssertionError(f"no {pol} mode among {[m.n_eff for m in modes]}")


@pytest.fixture(scope="session")
def gap_slot_mode():
    """Fundamental slot mode of a small GaP slot waveguide at 720 nm, 10 nm grid."""
    from slotqed.geometry import CrossSection
    from slotqed.sweep import GridSettings, solve_fundamental

    cs = CrossSection("GaP", 200, 200, 20)
    mode, _ = solve_fundamental(cs, 720.0, GridSettings(10.0, 10.0))
    return cs, mode


# --- acceptance report -----------------------------------------------------------

ACCEPTANCE: dict[str, tuple[bool, str]] = {}
_SUITE_LIMIT_S = 30 * 60


def record(name: str, ok: bool, detail: str) -> bool:
    ACCEPTANCE[name] = (bool(ok), detail)
    return bool(ok)


def pytest_sessionstart(session):
    import time

    session.config._slotqed_t0 = time.perf_counter()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    import time

    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for name in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[name]
        tr.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    elapsed = time.perf_counter() - config._slotqed_t0
    ok = elapsed < _SUITE_LIMIT_S
    tr.write_line(f"{'PASS' if ok else 'FAIL'}  7b suite runtime: {elapsed / 60:.1f} min (limit 30 min)")
