"""Full-vectorial finite-difference eigenmode solver on a 2D Yee grid.

Fields carry an implicit ``exp(i(omega t - beta z))`` dependence. With
``H' = eta0 * H`` (so E and H' share units) the source-free Maxwell equations
reduce to an eigenproblem for the transverse electric field::

    beta^2 e = [ k0^2 eps_t  -  C^T C  -  G eps_z^-1 G^T eps_t ] e

where ``C`` is the discrete z-curl (Ex, Ey -> Hz points) and ``G`` the
discrete gradient from Ez nodes to the Ex/Ey points. The last term enforces
div(eps E) = 0, which is what makes the normal component of D continuous
across the slot interfaces. The window edges are perfect electric conductors
(tangential E = 0); the x edges may instead be periodic.

Lengths are in nm, so ``k0`` is in nm^-1 and ``beta^2`` in nm^-2.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import Grid2D, PermittivityMap

__all__ = [
    "SolverSettings",
    "SolveRequest",
    "Mode",
    "ModeSolverError",
    "PaddingError",
    "ModeTrackingError",
    "assemble_operator",
    "find_eigenpairs",
    "solve_modes",
    "group_index",
    "mode_overlap",
    "select_mode",
    "slot_enhancement",
    "suggest_padding",
    "write_field_dump",
    "read_field_dump",
]

log = logging.getLogger(__name__)

MIN_CELLS = 8


class ModeSolverError(RuntimeError):
    """Eigensolver failure; ``residual`` holds the worst residual seen, if any."""

    def __init__(self, msg, residual=None):
        super().__init__(msg)
        self.residual = residual


class PaddingError(ModeSolverError):
    """Guided mode not decayed at the window edge; ``suggested_padding`` in nm."""

    def __init__(self, msg, edge_ratio=None, suggested_padding=None):
        super().__init__(msg)
        self.edge_ratio = edge_ratio
        self.suggested_padding = suggested_padding


class ModeTrackingError(ModeSolverError):
    pass


@dataclass(frozen=True)
class SolverSettings:
    """Eigensolver knobs.

    ``residual_tol`` is relative to ``(n_max k0)^2``; ``boundary_tol`` bounds
    the field magnitude next to the window edge relative to the peak.
    """

    residual_tol: float = 1e-8
    boundary_tol: float = 1e-6
    maxiter: int = 3000
    arpack_tol: float = 1e-12
    extra_vectors: int = 0
    seed: int = 0


@dataclass(frozen=True)
class SolveRequest:
    """What to solve for.

    ``symmetry`` restricts the search to modes whose Ey is ``"even"`` or
    ``"odd"`` under x -> -x (requires a mirror-symmetric map on a centred
    grid). The fundamental slot mode lives in the even sector. ``None``
    searches all modes.
    """

    map: PermittivityMap
    n_modes: int = 1
    n_eff_guess: float | None = None
    settings: SolverSettings = field(default_factory=SolverSettings)
    symmetry: str | None = None

    def __post_init__(self):
        if self.n_modes < 1:
            raise ValueError("n_modes must be >= 1")
        if self.symmetry not in (None, "even", "odd"):
            raise ValueError(f"symmetry must be None, 'even' or 'odd', got {self.symmetry!r}")
        if self.symmetry is not None and (self.map.grid.periodic_x or not self.map.grid.centered_x):
            raise ValueError("mirror symmetry needs a PEC grid centred on x = 0")
        if self.n_eff_guess is not None and not 1.0 < self.n_eff_guess < math.sqrt(self.map.eps_max):
            raise ValueError(
                f"n_eff_guess {self.n_eff_guess} must lie in (1, {math.sqrt(self.map.eps_max):.4f})"
            )

    @property
    def wavelength(self) -> float:
        return self.map.wavelength

    @property
    def guess(self) -> float:
        if self.n_eff_guess is not None:
            return self.n_eff_guess
        return 0.98 * math.sqrt(self.map.eps_max)


@dataclass(eq=False)
class Mode:
    """One guided mode, power-normalized so that 1/2 Re int (E x H'*) . z dA = 1 (nm^2).

    Field arrays cover every Yee sample including the window edges, with the
    shapes of the matching permittivity arrays: ``Ex``/``Hy`` on the Ex
    points, ``Ey``/``Hx`` on the Ey points, ``Ez`` on the nodes and ``Hz`` on
    the cell centres. ``H`` is stored as eta0*H.
    """

    wavelength: float
    n_eff: float
    Ex: np.ndarray
    Ey: np.ndarray
    Ez: np.ndarray
    Hx: np.ndarray
    Hy: np.ndarray
    Hz: np.ndarray
    map: PermittivityMap = field(repr=False)
    n_g: float = float("nan")
    pol_fraction_y: float = float("nan")
    gamma_slot: float = float("nan")
    residual: float = float("nan")
    index: int = 0

    @property
    def grid(self) -> Grid2D:
        return self.map.grid

    @property
    def beta(self) -> float:
        return self.n_eff * 2 * math.pi / self.wavelength

    def power(self) -> float:
        g = self.grid
        wx_h, wy_n, wx_n, wy_h = _weights(g)
        sx = np.real(self.Ex * np.conj(self.Hy)) * np.outer(wx_h, wy_n)
        sy = np.real(self.Ey * np.conj(self.Hx)) * np.outer(wx_n, wy_h)
        return 0.5 * (sx.sum() - sy.sum()) * g.dx * g.dy

    def energy_integral(self) -> float:
        """int eps_r |E|^2 dA over the window."""
        m = self.map
        wx_h, wy_n, wx_n, wy_h = _weights(self.grid)
        tot = (
            (m.eps_x * np.abs(self.Ex) ** 2 * np.outer(wx_h, wy_n)).sum()
            + (m.eps_y * np.abs(self.Ey) ** 2 * np.outer(wx_n, wy_h)).sum()
            + (m.eps_z * np.abs(self.Ez) ** 2 * np.outer(wx_n, wy_n)).sum()
        )
        return float(tot) * self.grid.dx * self.grid.dy

    def scaled(self, factor: complex) -> "Mode":
        """Copy with every field multiplied by ``factor`` (breaks power normalization)."""
        return replace(
            self,
            **{k: getattr(self, k) * factor for k in ("Ex", "Ey", "Ez", "Hx", "Hy", "Hz")},
        )


def _weights(g: Grid2D):
    """Quadrature weights for (x halves, y nodes, x nodes, y halves)."""
    wx_h = np.ones(g.nx)
    wy_n = np.ones(g.ny + 1)
    wx_n = np.ones(g.nx + 1)
    wy_h = np.ones(g.ny)
    if g.periodic_x:
        wx_n[-1] = 0.0  # node nx duplicates node 0
    return wx_h, wy_n, wx_n, wy_h


# --- operator assembly -------------------------------------------------------


def _diff(n_cells: int, d: float, periodic: bool) -> sp.csr_matrix:
    """Forward difference from unknown nodes to the ``n_cells`` half points.

    PEC: unknown nodes are 1..n-1 (the end nodes are zero). Periodic: nodes
    0..n-1 with node n identified with node 0.
    """
    if periodic:
        rows = np.arange(n_cells)
        data = np.r_[np.full(n_cells, 1.0 / d), np.full(n_cells, -1.0 / d)]
        cols = np.r_[(rows + 1) % n_cells, rows]
        return sp.csr_matrix((data, (np.r_[rows, rows], cols)), shape=(n_cells, n_cells))
    main = sp.diags([np.full(n_cells, -1.0 / d), np.full(n_cells, 1.0 / d)], [0, 1], shape=(n_cells, n_cells + 1))
    return sp.csr_matrix(main)[:, 1:n_cells]


def _node_slice(n_cells: int, periodic: bool) -> slice:
    return slice(0, n_cells) if periodic else slice(1, n_cells)


@dataclass
class _Discretization:
    grid: Grid2D
    k0: float
    Gx: sp.csr_matrix
    Gy: sp.csr_matrix
    C: sp.csr_matrix  # (Ex, Ey) -> Hz
    G: sp.csr_matrix  # Ez nodes -> (Ex, Ey)
    eps_t: np.ndarray
    eps_z: np.ndarray
    shape_x: tuple[int, int]  # Ex unknowns
    shape_y: tuple[int, int]  # Ey unknowns
    shape_z: tuple[int, int]  # Ez unknowns
    sx: tuple[slice, slice]
    sy: tuple[slice, slice]
    sz: tuple[slice, slice]

    @property
    def n_x(self) -> int:
        return self.shape_x[0] * self.shape_x[1]


def _discretize(emap: PermittivityMap) -> _Discretization:
    g = emap.grid
    if (g.nx < MIN_CELLS and not g.periodic_x) or g.ny < MIN_CELLS:
        raise ValueError(f"grid too small ({g.nx} x {g.ny} cells); need at least {MIN_CELLS} per axis")
    if g.periodic_x and g.nx < MIN_CELLS:
        raise ValueError(f"grid too small ({g.nx} cells in x); need at least {MIN_CELLS}")
    Gx = _diff(g.nx, g.dx, g.periodic_x)
    Gy = _diff(g.ny, g.dy, False)
    nxh, nxn = Gx.shape
    nyh, nyn = Gy.shape
    Ixh, Ixn = sp.identity(nxh, format="csr"), sp.identity(nxn, format="csr")
    Iyh, Iyn = sp.identity(nyh, format="csr"), sp.identity(nyn, format="csr")
    C = sp.hstack([-sp.kron(Ixh, Gy), sp.kron(Gx, Iyh)], format="csr")
    G = sp.vstack([sp.kron(Gx, Iyn), sp.kron(Ixn, Gy)], format="csr")
    xn = _node_slice(g.nx, g.periodic_x)
    yn = _node_slice(g.ny, False)
    sx = (slice(None), yn)
    sy = (xn, slice(None))
    sz = (xn, yn)
    eps_t = np.r_[emap.eps_x[sx].ravel(), emap.eps_y[sy].ravel()]
    eps_z = emap.eps_z[sz].ravel()
    k0 = 2 * math.pi / emap.wavelength
    return _Discretization(g, k0, Gx, Gy, C, G, eps_t, eps_z, (nxh, nyn), (nxn, nyh), (nxn, nyn), sx, sy, sz)


def _mirror_basis(d: _Discretization, parity: str):
    """Expansion ``Q`` and restriction ``R`` for fields with Ey of the given x-parity.

    Ex picks up the opposite sign to Ey under the mirror; samples on the
    mirror plane that must vanish by parity are dropped. ``R Q = I``.
    """
    p = 1.0 if parity == "even" else -1.0
    nxh, nyn = d.shape_x
    nxn, nyh = d.shape_y
    # Ex halves i <-> nx-1-i; Ey unknown column k is node k+1, mirror node nx-k-1
    comps = ((nxh, nyn, nxh - 1, -p, 0), (nxn, nyh, nxn - 1, p, nxh * nyn))
    q_rows, q_cols, q_vals, r_rows = [], [], [], []
    col = 0
    for n_i, n_j, last, sign, offset in comps:
        j = np.arange(n_j)
        for i in range(n_i):
            mi = last - i
            if mi < i or (mi == i and sign < 0):
                continue
            q_rows.append(offset + i * n_j + j)
            q_cols.append(col + j)
            q_vals.append(np.ones(n_j))
            r_rows.append(offset + i * n_j + j)
            if mi != i:
                q_rows.append(offset + mi * n_j + j)
                q_cols.append(col + j)
                q_vals.append(np.full(n_j, sign))
            col += n_j
    n_full = d.n_x + nxn * nyh
    Q = sp.csr_matrix(
        (np.concatenate(q_vals), (np.concatenate(q_rows), np.concatenate(q_cols))), shape=(n_full, col)
    )
    r_rows = np.concatenate(r_rows)
    R = sp.csr_matrix((np.ones(col), (np.arange(col), r_rows)), shape=(col, n_full))
    return Q, R


def assemble_operator(emap: PermittivityMap) -> sp.csr_matrix:
    """Sparse matrix ``A`` with ``A [Ex; Ey] = beta^2 [Ex; Ey]`` (nm^-2).

    Unknowns are the Ex values (x-major, C order, edge rows removed) followed
    by the Ey values; Dirichlet samples are eliminated.
    """
    return _operator(_discretize(emap))


def _operator(d: _Discretization) -> sp.csr_matrix:
    Et = sp.diags(d.eps_t)
    Zi = sp.diags(1.0 / d.eps_z)
    A = d.k0**2 * Et - d.C.T @ d.C - d.G @ Zi @ d.G.T @ Et
    return sp.csr_matrix(A)


def find_eigenpairs(A: sp.spmatrix, sigma: float, k: int, settings: SolverSettings = SolverSettings()):
    """The ``k`` eigenpairs of ``A`` nearest ``sigma`` via shift-invert Arnoldi.

    ARPACK's implicitly restarted Arnoldi locks converged Ritz pairs, which
    deflates them from later iterations. Returns (values, vectors) with real
    eigenvalues sorted descending.
    """
    n = A.shape[0]
    k = min(k, n - 2)
    v0 = np.random.default_rng(settings.seed).standard_normal(n)
    ncv = min(n, max(2 * k + 1, 20))
    # minimum-degree ordering on A+A^T keeps fill about half of COLAMD's on these grids
    lu = spla.splu(sp.csc_matrix(A - sigma * sp.identity(n, format="csc")), permc_spec="MMD_AT_PLUS_A")
    op_inv = spla.LinearOperator((n, n), matvec=lu.solve, dtype=float)
    try:
        vals, vecs = spla.eigs(
            A, k=k, sigma=sigma, which="LM", v0=v0, ncv=ncv, OPinv=op_inv,
            maxiter=settings.maxiter, tol=settings.arpack_tol,
        )
    except spla.ArpackNoConvergence as exc:
        res = None
        if len(exc.eigenvalues):
            res = float(max(
                np.linalg.norm(A @ exc.eigenvectors[:, i] - exc.eigenvalues[i] * exc.eigenvectors[:, i])
                for i in range(len(exc.eigenvalues))
            ))
        raise ModeSolverError(
            f"eigensolver did not converge ({len(exc.eigenvalues)}/{k} pairs)", residual=res
        ) from exc
    order = np.argsort(-vals.real)
    return vals[order], vecs[:, order]


# --- mode reconstruction ------------------------------------------------------


def _real_phase(v: np.ndarray) -> np.ndarray:
    i = np.argmax(np.abs(v))
    v = v * (abs(v[i]) / v[i])
    return v.real


def _scatter(d: _Discretization, values: np.ndarray, shape_full, sl, shape_unk):
    out = np.zeros(shape_full, dtype=complex)
    out[sl] = values.reshape(shape_unk)
    if d.grid.periodic_x and shape_full[0] == d.grid.nx + 1:
        out[-1, :] = out[0, :]
    return out


def _build_mode(d: _Discretization, emap: PermittivityMap, beta2: float, vec: np.ndarray, residual: float) -> Mode:
    g = d.grid
    beta = math.sqrt(beta2)
    k0 = d.k0
    e = _real_phase(vec)
    ex, ey = e[: d.n_x], e[d.n_x:]
    div = -(d.G.T @ (d.eps_t * e))
    phi = div / d.eps_z
    gphi = d.G @ phi
    ez = -1j * phi / beta
    hy = (beta * ex - gphi[: d.n_x] / beta) / k0
    hx = (-beta * ey + gphi[d.n_x:] / beta) / k0
    hz = 1j * (d.C @ e) / k0

    Ex = _scatter(d, ex, emap.eps_x.shape, d.sx, d.shape_x)
    Ey = _scatter(d, ey, emap.eps_y.shape, d.sy, d.shape_y)
    Ez = _scatter(d, ez, emap.eps_z.shape, d.sz, d.shape_z)
    Hy = _scatter(d, hy, emap.eps_x.shape, d.sx, d.shape_x)
    Hx = _scatter(d, hx, emap.eps_y.shape, d.sy, d.shape_y)
    Hz = hz.reshape(g.nx, g.ny).astype(complex)

    n_eff = beta / k0
    mode = Mode(emap.wavelength, n_eff, Ex, Ey, Ez, Hx, Hy, Hz, emap, residual=residual)
    P = mode.power()
    if not P > 0:
        raise ModeSolverError(f"mode at n_eff={n_eff:.6f} carries non-positive power")
    s = 1.0 / math.sqrt(P)
    for name in ("Ex", "Ey", "Ez", "Hx", "Hy", "Hz"):
        setattr(mode, name, getattr(mode, name) * s)
    _metrics(mode)
    return mode


def _metrics(mode: Mode) -> None:
    m = mode.map
    g = mode.grid
    wx_h, wy_n, wx_n, wy_h = _weights(g)
    w_ex, w_ey, w_ez = np.outer(wx_h, wy_n), np.outer(wx_n, wy_h), np.outer(wx_n, wy_n)
    w_hz = np.outer(wx_h, wy_h)
    ax = np.abs(mode.Ex) ** 2
    ay = np.abs(mode.Ey) ** 2
    az = np.abs(mode.Ez) ** 2
    ix, iy = (ax * w_ex).sum(), (ay * w_ey).sum()
    mode.pol_fraction_y = float(iy / (ix + iy))

    # group index from the dispersive energy density over the power flux
    lam = mode.wavelength
    if m.deps_x is not None:
        gx, gy, gz = m.eps_x - lam * m.deps_x, m.eps_y - lam * m.deps_y, m.eps_z - lam * m.deps_z
    else:
        gx, gy, gz = m.eps_x, m.eps_y, m.eps_z
    energy = (
        (gx * ax * w_ex).sum() + (gy * ay * w_ey).sum() + (gz * az * w_ez).sum()
        + (np.abs(mode.Hy) ** 2 * w_ex).sum() + (np.abs(mode.Hx) ** 2 * w_ey).sum()
        + (np.abs(mode.Hz) ** 2 * w_hz).sum()
    ) * g.dx * g.dy
    mode.n_g = float(energy / (4.0 * mode.power()))

    tags = {r.tag for r in m.layout.regions}
    if "slot" in tags:
        fx, fy, fz = m.region_fraction("slot")
        e_tot = (m.eps_x * ax * w_ex).sum() + (m.eps_y * ay * w_ey).sum() + (m.eps_z * az * w_ez).sum()
        e_slot = (
            (fx * m.eps_x * ax * w_ex).sum() + (fy * m.eps_y * ay * w_ey).sum() + (fz * m.eps_z * az * w_ez).sum()
        )
        mode.gamma_slot = float(e_slot / e_tot)


def _edge_ratio(mode: Mode) -> float:
    """Largest |E| on the samples next to the PEC walls relative to the peak |E|."""
    g = mode.grid
    peak = max(np.abs(mode.Ex).max(), np.abs(mode.Ey).max(), np.abs(mode.Ez).max())
    edge = 0.0
    for arr, (xs, ys) in (
        (mode.Ex, (g.x_half, g.y_nodes)),
        (mode.Ey, (g.x_nodes, g.y_half)),
        (mode.Ez, (g.x_nodes, g.y_nodes)),
    ):
        x0, x1, y0, y1 = g.window
        near_y = (ys - y0 <= g.dy * 1.0000001) | (y1 - ys <= g.dy * 1.0000001)
        edge = max(edge, np.abs(arr[:, near_y]).max())
        if not g.periodic_x:
            near_x = (xs - x0 <= g.dx * 1.0000001) | (x1 - xs <= g.dx * 1.0000001)
            edge = max(edge, np.abs(arr[near_x, :]).max())
    return float(edge / peak)


def _sort_modes(modes: list[Mode]) -> list[Mode]:
    modes = sorted(modes, key=lambda m: -m.n_eff)
    # near-degenerate pairs: higher y-polarization first
    i = 0
    while i < len(modes) - 1:
        a, b = modes[i], modes[i + 1]
        if abs(a.n_eff - b.n_eff) < 1e-6 and b.pol_fraction_y > a.pol_fraction_y:
            modes[i], modes[i + 1] = b, a
        i += 1
    for k, m in enumerate(modes):
        m.index = k
    return modes


def solve_modes(req: SolveRequest) -> list[Mode]:
    """Guided modes nearest the guess, sorted by descending n_eff.

    Only modes with ``n_outer < n_eff < n_max`` are returned, where
    ``n_outer`` is the largest index touching the window edge. An empty list
    means no guided mode was found. Raises ``PaddingError`` when a guided
    mode has not decayed by ``boundary_tol`` at the window edge.
    """
    emap = req.map
    st = req.settings
    d = _discretize(emap)
    A = _operator(d)
    n_max = math.sqrt(emap.eps_max)
    n_outer = math.sqrt(emap.eps_boundary)
    sigma = (req.guess * d.k0) ** 2
    if req.symmetry is None:
        vals, vecs = find_eigenpairs(A, sigma, req.n_modes + st.extra_vectors, st)
    else:
        # A commutes with the mirror, so R A Q is A on the symmetric subspace
        Q, R = _mirror_basis(d, req.symmetry)
        vals, vecs = find_eigenpairs(sp.csr_matrix(R @ A @ Q), sigma, req.n_modes + st.extra_vectors, st)
        vecs = Q @ vecs

    scale = (n_max * d.k0) ** 2
    modes = []
    for lam, v in zip(vals, vecs.T):
        if abs(lam.imag) > 1e-9 * scale or lam.real <= 0:
            continue
        n_eff = math.sqrt(lam.real) / d.k0
        if not n_outer < n_eff < n_max:
            continue
        vr = _real_phase(v)
        res = float(np.linalg.norm(A @ vr - lam.real * vr) / np.linalg.norm(vr))
        if res > st.residual_tol * scale:
            raise ModeSolverError(
                f"residual {res:.3e} exceeds {st.residual_tol:g}*(n k0)^2 at n_eff={n_eff:.6f}", residual=res
            )
        modes.append(_build_mode(d, emap, lam.real, v, res / scale))
    modes = _sort_modes(modes)[: req.n_modes]
    for m in modes:
        ratio = _edge_ratio(m)
        if ratio > st.boundary_tol:
            pad = suggest_padding(m, st.boundary_tol)
            raise PaddingError(
                f"mode {m.index} (n_eff={m.n_eff:.5f}) has edge field {ratio:.2e} of peak "
                f"(limit {st.boundary_tol:g}); enlarge the padding to about {pad:.0f} nm",
                edge_ratio=ratio, suggested_padding=pad,
            )
    log.debug("solved %d mode(s) at %.1f nm: %s", len(modes), emap.wavelength, [round(m.n_eff, 6) for m in modes])
    return modes


def suggest_padding(mode: Mode, tol: float) -> float:
    """Padding (nm) after which the slowest evanescent tail has decayed by ``tol``."""
    k0 = 2 * math.pi / mode.wavelength
    eps_out = mode.map.eps_boundary
    gamma = k0 * math.sqrt(max(mode.n_eff**2 - eps_out, 1e-12))
    cells = 2 * max(mode.grid.dx, mode.grid.dy)
    return 1.1 * math.log(1.0 / tol) / gamma + cells


def slot_enhancement(mode: Mode) -> float:
    """Mean |Ey| on the slot's central row over mean |Ey| on the first rail row
    above the slot, both taken across the rail width.

    D-continuity makes this approach eps_rail / eps_slot for a thin slot.
    """
    regions = {r.tag: r for r in mode.map.layout.regions}
    if "slot" not in regions or "rail_top" not in regions:
        raise ValueError("slot enhancement needs a layout with 'slot' and 'rail_top' regions")
    slot, rail = regions["slot"], regions["rail_top"]
    g = mode.grid
    xs, ys = g.x_nodes, g.y_half
    cols = (xs > slot.x0) & (xs < slot.x1)
    inside = np.flatnonzero((ys > slot.y0) & (ys < slot.y1))
    if not inside.size:
        raise ValueError("no Ey row inside the slot; refine dy")
    yc = 0.5 * (slot.y0 + slot.y1)
    d = np.abs(ys[inside] - yc)
    central = inside[d <= d.min() + 1e-9 * g.dy]
    above = np.flatnonzero((ys > rail.y0) & (ys < rail.y1))
    if not above.size:
        raise ValueError("no Ey row inside the top rail")
    a = np.abs(mode.Ey[np.ix_(cols, central)]).mean()
    b = np.abs(mode.Ey[cols, above[0]]).mean()
    return float(a / b)


def select_mode(modes: list[Mode], polarization: str = "y") -> Mode:
    """Highest-index mode dominated by the given transverse E component."""
    for m in modes:
        if (m.pol_fraction_y > 0.5) == (polarization == "y"):
            return m
    raise ModeSolverError(f"no {polarization}-polarized mode among {len(modes)} solved")


def mode_overlap(a: Mode, b: Mode) -> float:
    """Normalized |<Et_a, Et_b>| for modes on the same grid, in [0, 1]."""
    if a.Ex.shape != b.Ex.shape or a.Ey.shape != b.Ey.shape:
        raise ValueError("modes live on different grids")
    num = np.vdot(a.Ex, b.Ex) + np.vdot(a.Ey, b.Ey)
    na = np.vdot(a.Ex, a.Ex).real + np.vdot(a.Ey, a.Ey).real
    nb = np.vdot(b.Ex, b.Ex).real + np.vdot(b.Ey, b.Ey).real
    return float(abs(num) / math.sqrt(na * nb))


def group_index(req: SolveRequest, dlam: float = 1.0, mode_index: int = 0, threshold: float = 0.9) -> float:
    """n_g = n_eff - lambda dn_eff/dlambda by central differences.

    The mode is followed to lambda +- dlam by field overlap; material
    dispersion enters through re-sampling the permittivity map.
    """
    lam = req.wavelength
    base = solve_modes(req)
    if len(base) <= mode_index:
        raise ModeSolverError(f"mode {mode_index} not found at {lam} nm")
    ref = base[mode_index]
    n_pm = []
    for lam_k in (lam + dlam, lam - dlam):
        sub = replace(req, map=req.map.resample(lam_k), n_modes=max(req.n_modes, mode_index + 1))
        cands = solve_modes(sub)
        if not cands:
            raise ModeTrackingError(f"no guided mode at {lam_k} nm")
        ovl = [mode_overlap(ref, c) for c in cands]
        best = int(np.argmax(ovl))
        if ovl[best] < threshold:
            raise ModeTrackingError(f"mode tracking overlap {ovl[best]:.3f} < {threshold} at {lam_k} nm")
        n_pm.append(cands[best].n_eff)
    return ref.n_eff - lam * (n_pm[0] - n_pm[1]) / (2 * dlam)


# --- field dumps --------------------------------------------------------------

_DUMP_FORMAT = "slotqed-fields-1"


def write_field_dump(mode: Mode, path: str | Path) -> Path:
    """Write one mode as a JSON header line plus raw little-endian complex128 data.

    The header lists the grid (nx, ny, dx, dy, origin), wavelength, n_eff and
    the component order with shapes. Each component follows as (re, im)
    float64 pairs in row-major order, x index slowest.
    """
    g = mode.grid
    comps = ["Ex", "Ey", "Ez", "Hx", "Hy", "Hz"]
    header = {
        "format": _DUMP_FORMAT,
        "nx": g.nx, "ny": g.ny, "dx_nm": g.dx, "dy_nm": g.dy,
        "origin_nm": list(g.origin), "periodic_x": g.periodic_x,
        "wavelength_nm": mode.wavelength, "n_eff": mode.n_eff,
        "components": [[c, list(getattr(mode, c).shape)] for c in comps],
    }
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode())
        for c in comps:
            fh.write(np.ascontiguousarray(getattr(mode, c), dtype="<c16").tobytes())
    tmp.replace(path)
    return path


def read_field_dump(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    header = json.loads(raw[:nl])
    if header.get("format") != _DUMP_FORMAT:
        raise ValueError(f"{path}: not a field dump")
    off = nl + 1
    out = {}
    for name, shape in header["components"]:
        count = int(np.prod(shape))
        out[name] = np.frombuffer(raw, dtype="<c16", count=count, offset=off).reshape(shape)
        off += 16 * count
    return header, out
