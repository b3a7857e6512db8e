"""Point-dipole coupling to a single guided mode.

The emission rate into one mode (both propagation directions), relative to
the rate in a homogeneous medium of index ``n_local``, is::

    F_wg = 3 pi c^2 n_g / (n_local omega^2) * |u . E(r0)|^2 / int eps_r |E|^2 dA
         = 3 lambda^2 n_g / (4 pi n_local) * |u . E(r0)|^2 / int eps_r |E|^2 dA

Everything not captured by the mode is lumped into a constant background
factor ``F_bg`` (1 by default), giving ``F_P = F_wg + F_bg`` and
``beta = F_wg / F_P``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .geometry import CrossSection, displacement_to_coords
from .modesolver import Mode

__all__ = [
    "DipoleSpec",
    "CouplingResult",
    "CouplingError",
    "AXES",
    "guided_rate_factor",
    "coupling_at",
    "displacement_sweep",
    "orientation_table",
    "sweep_to_csv",
]

AXES = {
    "x": (1.0, 0.0, 0.0),
    "y": (0.0, 1.0, 0.0),
    "z": (0.0, 0.0, 1.0),
}


class CouplingError(ValueError):
    pass


@dataclass(frozen=True)
class DipoleSpec:
    position: tuple[float, float]
    orientation: tuple[float, float, float]
    wavelength: float

    def __post_init__(self):
        u = self.orientation
        if isinstance(u, str):
            u = AXES[u]
        u = tuple(float(c) for c in u)
        norm = math.sqrt(sum(c * c for c in u))
        if abs(norm - 1.0) > 1e-9:
            raise CouplingError(f"dipole orientation must be a unit vector, |u| = {norm}")
        object.__setattr__(self, "orientation", u)
        object.__setattr__(self, "position", tuple(float(c) for c in self.position))


@dataclass(frozen=True)
class CouplingResult:
    F_wg: float
    F_bg: float
    mode_id: int

    @property
    def F_P(self) -> float:
        return self.F_wg + self.F_bg

    @property
    def beta(self) -> float:
        return self.F_wg / (self.F_wg + self.F_bg)


def _interp(values: np.ndarray, xs: np.ndarray, ys: np.ndarray, x: float, y: float) -> complex:
    f = RegularGridInterpolator((xs, ys), values, method="linear", bounds_error=True)
    return complex(f((x, y)))


def field_at(mode: Mode, x: float, y: float) -> np.ndarray:
    """(Ex, Ey, Ez) at (x, y), each bilinearly interpolated from its own samples."""
    g = mode.grid
    x0, x1, y0, y1 = g.window
    if not (x0 <= x <= x1 and y0 <= y <= y1):
        raise CouplingError(f"dipole at ({x}, {y}) nm lies outside the grid window")
    # clamp into each component's sample range (the half-point grids stop dx/2 short)
    def clamp(v, arr):
        return min(max(v, arr[0]), arr[-1])

    return np.array([
        _interp(mode.Ex, g.x_half, g.y_nodes, clamp(x, g.x_half), y),
        _interp(mode.Ey, g.x_nodes, g.y_half, x, clamp(y, g.y_half)),
        _interp(mode.Ez, g.x_nodes, g.y_nodes, x, y),
    ])


def local_index(mode: Mode, x: float, y: float) -> float:
    """Index of the material containing (x, y); later regions win on edges."""
    layout = mode.map.layout
    mat = layout.background
    for r in layout.regions:
        if r.x0 <= x <= r.x1 and r.y0 <= y <= r.y1:
            mat = r.material
    return math.sqrt(float(mat.eps(mode.wavelength)))


def guided_rate_factor(mode: Mode, dip: DipoleSpec, n_local: float | None = None) -> float:
    """Emission rate into ``mode`` (both directions) over the bulk rate at the site."""
    if not math.isclose(mode.wavelength, dip.wavelength, rel_tol=1e-12):
        raise CouplingError(f"mode solved at {mode.wavelength} nm, dipole at {dip.wavelength} nm")
    x, y = dip.position
    if n_local is None:
        n_local = local_index(mode, x, y)
    e = field_at(mode, x, y)
    proj = abs(np.dot(np.asarray(dip.orientation), e)) ** 2
    lam = mode.wavelength
    return float(3.0 * lam**2 * mode.n_g / (4.0 * math.pi * n_local) * proj / mode.energy_integral())


def coupling_at(mode: Mode, dip: DipoleSpec, F_bg: float = 1.0, n_local: float | None = None) -> CouplingResult:
    if F_bg <= 0:
        raise CouplingError("background factor must be positive")
    return CouplingResult(guided_rate_factor(mode, dip, n_local), F_bg, mode.index)


def displacement_sweep(
    mode: Mode,
    cs: CrossSection,
    u_samples: Sequence[float],
    orientation="y",
    F_bg: float = 1.0,
) -> list[tuple[float, CouplingResult]]:
    """Coupling along the monolayer plane at relative displacements ``u``."""
    u_samples = list(u_samples)
    if any(b < a for a, b in zip(u_samples, u_samples[1:])):
        raise CouplingError("displacement samples must be monotone increasing")
    out = []
    for u in u_samples:
        dip = DipoleSpec(displacement_to_coords(cs, u), orientation, mode.wavelength)
        out.append((u, coupling_at(mode, dip, F_bg)))
    return out


def orientation_table(mode: Mode, position, wavelength: float | None = None, F_bg: float = 1.0):
    """Coupling for x, y and z dipoles at one position."""
    lam = mode.wavelength if wavelength is None else wavelength
    return {ax: coupling_at(mode, DipoleSpec(position, ax, lam), F_bg) for ax in ("x", "y", "z")}


SWEEP_COLUMNS = ("u", "x_nm", "beta", "F_wg", "F_P", "mode_id", "lambda_nm")


def sweep_to_csv(rows, cs: CrossSection, wavelength: float) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for u, r in rows:
        x, _ = displacement_to_coords(cs, u)
        w.writerow([repr(float(u)), repr(x), repr(r.beta), repr(r.F_wg), repr(r.F_P), r.mode_id, repr(float(wavelength))])
    return buf.getvalue()
