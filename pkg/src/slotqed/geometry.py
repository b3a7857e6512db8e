"""Slot-waveguide cross-sections and their rasterization onto a Yee grid.

Coordinates are in nm. ``x`` is horizontal (parallel to the monolayer), ``y``
is vertical (normal to the slot interfaces) and the origin is the slot
centre. The propagation direction ``z`` is out of the cross-section.

Field sample locations on a grid with nodes ``(x_i, y_j)``::

    Ex  (x_{i+1/2}, y_j)       Hy at the same points
    Ey  (x_i, y_{j+1/2})       Hx at the same points
    Ez  (x_i, y_j)
    Hz  (x_{i+1/2}, y_{j+1/2})

Each permittivity sample is the area average over a ``dx*dy`` box centred on
its sample point, computed exactly for the axis-aligned rectangles used here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .materials import MaterialModel, get_material

__all__ = [
    "Rect",
    "Layout",
    "CrossSection",
    "Grid2D",
    "PermittivityMap",
    "GeometryError",
    "rasterize",
    "displacement_to_coords",
]

_INF = math.inf


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle ``[x0, x1] x [y0, y1]`` (bounds may be infinite)."""

    x0: float
    x1: float
    y0: float
    y1: float
    material: MaterialModel
    tag: str = ""

    def area_in(self, x0, x1, y0, y1) -> float:
        w = max(0.0, min(self.x1, x1) - max(self.x0, x0))
        h = max(0.0, min(self.y1, y1) - max(self.y0, y0))
        return w * h


@dataclass(frozen=True)
class Layout:
    """Background medium plus disjoint rectangles painted on top of it."""

    background: MaterialModel
    regions: tuple[Rect, ...] = ()

    def materials(self):
        yield self.background
        for r in self.regions:
            yield r.material

    def extent(self):
        """Bounding box of the finite parts of all regions, or None."""
        xs = [v for r in self.regions for v in (r.x0, r.x1) if math.isfinite(v)]
        ys = [v for r in self.regions for v in (r.y0, r.y1) if math.isfinite(v)]
        if not xs and not ys:
            return None
        return (min(xs, default=0.0), max(xs, default=0.0), min(ys, default=0.0), max(ys, default=0.0))

    @classmethod
    def slab_stack(cls, layers, substrate, superstrate) -> "Layout":
        """Planar stack, infinite in x. ``layers`` is a list of (material, thickness nm)
        from bottom to top; the stack is centred on y = 0."""
        total = sum(t for _, t in layers)
        y = -total / 2
        regions = [Rect(-_INF, _INF, -_INF, y, get_material(substrate), "substrate")]
        for k, (mat, t) in enumerate(layers):
            regions.append(Rect(-_INF, _INF, y, y + t, get_material(mat), f"layer{k}"))
            y += t
        return cls(get_material(superstrate), tuple(regions))


@dataclass(frozen=True)
class CrossSection:
    """Horizontal slot waveguide: two rails of width ``w`` around a slot.

    The slot (thickness ``t_slot``) is centred at y = 0, the bottom rail sits
    on a half-infinite substrate, and the cladding fills everything else.
    ``monolayer_y_offset`` only marks where the 2D material is; it has no
    optical effect.
    """

    rail_material: MaterialModel | str
    w: float
    h: float
    t_slot: float
    slot_material: MaterialModel | str = "SiO2"
    substrate_material: MaterialModel | str = "SiO2"
    cladding_material: MaterialModel | str = "air"
    monolayer_y_offset: float = 0.0

    def __post_init__(self):
        for name in ("rail_material", "slot_material", "substrate_material", "cladding_material"):
            object.__setattr__(self, name, get_material(getattr(self, name)))
        if not self.w > 0:
            raise GeometryError(f"width must be positive, got {self.w}")
        if not 0 < self.t_slot < self.h:
            raise GeometryError(f"need 0 < t_slot < h, got t_slot={self.t_slot}, h={self.h}")
        if abs(self.monolayer_y_offset) > self.t_slot / 2:
            raise GeometryError("monolayer plane must lie inside the slot")

    @property
    def rail_thickness(self) -> float:
        return (self.h - self.t_slot) / 2

    @property
    def slot_rect(self) -> Rect:
        return Rect(-self.w / 2, self.w / 2, -self.t_slot / 2, self.t_slot / 2, self.slot_material, "slot")

    def layout(self) -> Layout:
        w2, t2, h2 = self.w / 2, self.t_slot / 2, self.h / 2
        regions = (
            Rect(-_INF, _INF, -_INF, -h2, self.substrate_material, "substrate"),
            Rect(-w2, w2, -h2, -t2, self.rail_material, "rail_bottom"),
            self.slot_rect,
            Rect(-w2, w2, t2, h2, self.rail_material, "rail_top"),
        )
        return Layout(self.cladding_material, regions)

    def materials(self):
        return (self.rail_material, self.slot_material, self.substrate_material, self.cladding_material)


@dataclass(frozen=True)
class Grid2D:
    """Uniform node grid with ``nx * ny`` cells; node (0, 0) sits at ``origin``.

    The window edges are the outer node lines. ``padding`` records the
    intended clearance between the structure and the window edges.
    """

    dx: float
    dy: float
    nx: int
    ny: int
    origin: tuple[float, float]
    padding: float = 0.0
    periodic_x: bool = False

    def __post_init__(self):
        if not (self.dx > 0 and self.dy > 0):
            raise GeometryError("grid spacings must be positive")
        if self.nx < 1 or self.ny < 1:
            raise GeometryError("grid needs at least one cell per axis")

    def _x(self, offsets: np.ndarray) -> np.ndarray:
        if self.centered_x:
            # (i - nx/2)*dx is exactly antisymmetric in floating point
            return (offsets - self.nx / 2) * self.dx
        return self.origin[0] + offsets * self.dx

    @property
    def x_nodes(self) -> np.ndarray:
        return self._x(np.arange(self.nx + 1, dtype=float))

    @property
    def y_nodes(self) -> np.ndarray:
        return self.origin[1] + np.arange(self.ny + 1) * self.dy

    @property
    def x_half(self) -> np.ndarray:
        return self._x(np.arange(self.nx) + 0.5)

    @property
    def y_half(self) -> np.ndarray:
        return self.origin[1] + (np.arange(self.ny) + 0.5) * self.dy

    @property
    def window(self) -> tuple[float, float, float, float]:
        x0, y0 = self.origin
        return (x0, x0 + self.nx * self.dx, y0, y0 + self.ny * self.dy)

    @property
    def centered_x(self) -> bool:
        return self.origin[0] == -self.nx * self.dx / 2

    @classmethod
    def around(cls, cs: CrossSection, dx: float, dy: float, padding: float) -> "Grid2D":
        """Window symmetric in x about the optical axis, ``padding`` nm clear of
        the waveguide on every side (rounded up to whole cells).

        Node lines are placed on the rail side walls and on the slot/rail
        interfaces whenever the dimensions are commensurate with the spacing.
        """
        if padding < 0:
            raise GeometryError("padding must be non-negative")
        half_cells = cs.w / 2 / dx + padding / dx
        nx = 2 * math.ceil(half_cells - 1e-9)
        # odd nx puts a node on +-w/2 when w/dx is odd
        if _is_int(cs.w / dx) and round(cs.w / dx) % 2 == 1:
            nx += 1
        x0 = -nx * dx / 2
        # align the lower slot interface to a node line
        below = cs.t_slot / 2 + cs.rail_thickness + padding
        k = math.ceil((below - cs.t_slot / 2) / dy - 1e-9)
        y0 = -cs.t_slot / 2 - k * dy
        top = cs.h / 2 + padding
        ny = math.ceil((top - y0) / dy - 1e-9)
        return cls(dx, dy, nx, ny, (x0, y0), padding)

    @classmethod
    def centered(cls, dx, dy, nx, ny, y_center=0.0, periodic_x=False) -> "Grid2D":
        return cls(dx, dy, nx, ny, (-nx * dx / 2, y_center - ny * dy / 2), 0.0, periodic_x)


def _is_int(v: float) -> bool:
    return abs(v - round(v)) < 1e-9


@dataclass(frozen=True, eq=False)
class PermittivityMap:
    """Relative permittivity sampled at the Ex, Ey and Ez locations.

    ``eps_x`` has shape ``(nx, ny+1)``, ``eps_y`` ``(nx+1, ny)`` and ``eps_z``
    ``(nx+1, ny+1)``; boundary samples are kept so every array is mirror
    symmetric on its own. ``deps_*`` hold d(eps)/d(lambda) in nm^-1 with the
    same averaging, used for the dispersive energy density.
    """

    eps_x: np.ndarray
    eps_y: np.ndarray
    eps_z: np.ndarray
    wavelength: float
    grid: Grid2D
    layout: Layout
    deps_x: np.ndarray | None = field(default=None, repr=False)
    deps_y: np.ndarray | None = field(default=None, repr=False)
    deps_z: np.ndarray | None = field(default=None, repr=False)

    @property
    def eps_max(self) -> float:
        return float(max(self.eps_x.max(), self.eps_y.max(), self.eps_z.max()))

    @property
    def eps_boundary(self) -> float:
        """Largest permittivity touching the window edge (the outer media)."""
        ez = self.eps_z
        edges = [ez[:, 0], ez[:, -1]]
        if not self.grid.periodic_x:
            edges += [ez[0, :], ez[-1, :]]
        return float(max(e.max() for e in edges))

    def resample(self, wavelength: float) -> "PermittivityMap":
        return rasterize(self.layout, self.grid, wavelength)

    def region_fraction(self, tag: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Area fraction of the tagged region inside each sample box."""
        (rect,) = [r for r in self.layout.regions if r.tag == tag]
        g = self.grid
        return tuple(
            np.outer(_overlap(xs, g.dx, rect.x0, rect.x1), _overlap(ys, g.dy, rect.y0, rect.y1))
            for xs, ys in _sample_axes(g)
        )


def _overlap(centres: np.ndarray, d: float, a: float, b: float) -> np.ndarray:
    """Fraction of each ``[c - d/2, c + d/2]`` covered by ``[a, b]``."""
    if a == -b and math.isfinite(b):
        # symmetric interval: use |c| so mirrored samples are bitwise equal
        c = np.abs(centres)
        lo, hi = -b, b
    else:
        c, lo, hi = centres, a, b
    ov = np.minimum(c + d / 2, hi) - np.maximum(c - d / 2, lo)
    return np.clip(ov, 0.0, d) / d


def _sample_axes(g: Grid2D):
    return (
        (g.x_half, g.y_nodes),  # Ex
        (g.x_nodes, g.y_half),  # Ey
        (g.x_nodes, g.y_nodes),  # Ez
    )


def _check_inside(layout: Layout, grid: Grid2D) -> None:
    ext = layout.extent()
    if ext is None:
        return
    x0, x1, y0, y1 = grid.window
    tol = 1e-9 * max(grid.dx, grid.dy)
    for r in layout.regions:
        # finite edges of every region must lie inside the window
        for v in (r.x0, r.x1):
            if math.isfinite(v) and not (x0 - tol <= v <= x1 + tol):
                raise GeometryError(f"region {r.tag or r.material.name} exceeds the grid window in x")
        for v in (r.y0, r.y1):
            if math.isfinite(v) and not (y0 - tol <= v <= y1 + tol):
                raise GeometryError(f"region {r.tag or r.material.name} exceeds the grid window in y")


def rasterize(cs: CrossSection | Layout, grid: Grid2D, wavelength: float) -> PermittivityMap:
    """Sample permittivity on the staggered Ex/Ey/Ez points at ``wavelength`` nm.

    Interior cells get the exact material value; boundary cells get the
    area-weighted arithmetic mean of the materials they overlap.
    """
    layout = cs.layout() if isinstance(cs, CrossSection) else cs
    _check_inside(layout, grid)
    eps_bg = float(layout.background.eps(wavelength))
    deps_bg = float(layout.background.deps_dlambda(wavelength))
    out, dout = [], []
    for xs, ys in _sample_axes(grid):
        eps = np.full((xs.size, ys.size), eps_bg)
        deps = np.full((xs.size, ys.size), deps_bg)
        for r in layout.regions:
            frac = np.outer(_overlap(xs, grid.dx, r.x0, r.x1), _overlap(ys, grid.dy, r.y0, r.y1))
            e_r = float(r.material.eps(wavelength))
            eps += (e_r - eps_bg) * frac
            deps += (float(r.material.deps_dlambda(wavelength)) - deps_bg) * frac
        out.append(eps)
        dout.append(deps)
    return PermittivityMap(*out, float(wavelength), grid, layout, *dout)


def displacement_to_coords(cs: CrossSection, u: float) -> tuple[float, float]:
    """Relative lateral displacement -> (x, y) in nm.

    ``u = 0`` is the optical axis and ``|u| = 1`` the rail side wall; ``y`` is
    the monolayer plane.
    """
    if not -1.0 <= u <= 1.0:
        raise GeometryError(f"relative displacement must satisfy |u| <= 1, got {u}")
    return (u * cs.w / 2, cs.monolayer_y_offset)
