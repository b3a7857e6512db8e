"""Geometry optimization of the slot waveguide for emitter coupling.

For one rail material and wavelength band, :func:`optimize_geometry` scans a
(w, h, t_slot) grid, maximizing beta for a y-oriented dipole at the slot
centre at the band-centre wavelength, then runs one coordinate-descent pass
at half the grid step around the best point. Every evaluation is recorded;
points whose solve fails score ``-inf``.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from ._util import atomic_write_text, dump_json, stable_hash
from .coupling import DipoleSpec, coupling_at
from .geometry import CrossSection, GeometryError, Grid2D, rasterize
from .materials import MaterialRangeError, get_material
from .modesolver import ModeSolverError, PaddingError, SolverSettings, SolveRequest, select_mode, solve_modes

__all__ = [
    "Band",
    "BANDS",
    "ParamRange",
    "GridSettings",
    "SweepSpec",
    "PointResult",
    "SweepResult",
    "SweepError",
    "evaluate_point",
    "solve_fundamental",
    "with_auto_padding",
    "optimize_geometry",
    "material_comparison",
    "write_sweep_outputs",
]

log = logging.getLogger(__name__)


class SweepError(RuntimeError):
    pass


@dataclass(frozen=True)
class Band:
    name: str
    lambda_min: float
    lambda_max: float
    samples: tuple[float, ...] | None = None

    def __post_init__(self):
        if not 0 < self.lambda_min < self.lambda_max:
            raise ValueError(f"band {self.name}: need 0 < lambda_min < lambda_max")
        if self.samples is None:
            object.__setattr__(self, "samples", (self.lambda_min, self.center, self.lambda_max))
        else:
            object.__setattr__(self, "samples", tuple(float(s) for s in self.samples))

    @property
    def center(self) -> float:
        return 0.5 * (self.lambda_min + self.lambda_max)


BANDS = {
    "band1": Band("band1", 640.0, 800.0),
    "band2": Band("band2", 1050.0, 1150.0),
    "band3": Band("band3", 1500.0, 1600.0),
}


@dataclass(frozen=True)
class ParamRange:
    """Inclusive ``lo..hi`` in steps of ``step`` (nm)."""

    lo: float
    hi: float
    step: float

    def __post_init__(self):
        if self.hi < self.lo:
            raise ValueError(f"range hi {self.hi} < lo {self.lo}")
        if self.hi > self.lo and not self.step > 0:
            raise ValueError("range step must be positive")

    def values(self) -> list[float]:
        if self.hi == self.lo:
            return [float(self.lo)]
        n = int(math.floor((self.hi - self.lo) / self.step + 1e-9))
        return [round(self.lo + k * self.step, 9) for k in range(n + 1)]


@dataclass(frozen=True)
class GridSettings:
    """Grid spacing and padding (nm). ``padding=None`` means 1.5 wavelengths.

    With ``auto_padding`` a solve that fails the boundary check is retried
    once with the padding the decay constant of the mode calls for, up to
    ``max_padding`` (None: 4 wavelengths). Modes needing more are too close
    to cutoff to be useful and the point fails.
    """

    dx: float = 10.0
    dy: float = 10.0
    padding: float | None = None
    auto_padding: bool = True
    max_padding: float | None = None

    def padding_for(self, wavelength: float) -> float:
        return 1.5 * wavelength if self.padding is None else self.padding

    def padding_cap(self, wavelength: float) -> float:
        return 4.0 * wavelength if self.max_padding is None else self.max_padding


# sweeps accept a 1e-3 edge field: n_eff moves < 1e-6 relative to 1e-6
SWEEP_SOLVER = SolverSettings(boundary_tol=1e-3)


@dataclass(frozen=True)
class SweepSpec:
    material: str
    band: Band
    w: ParamRange = ParamRange(200.0, 1200.0, 50.0)
    h: ParamRange = ParamRange(150.0, 800.0, 50.0)
    t_slot: ParamRange = ParamRange(20.0, 160.0, 20.0)
    slot_material: str = "SiO2"
    substrate_material: str = "SiO2"
    cladding_material: str = "air"
    grid: GridSettings = GridSettings()
    solver: SolverSettings = SWEEP_SOLVER
    F_bg: float = 1.0
    refine: bool = True

    def __post_init__(self):
        get_material(self.material)
        if self.w.lo <= 0 or self.h.lo <= 0 or self.t_slot.lo <= 0:
            raise ValueError("geometry ranges must be positive")
        if self.t_slot.lo >= self.h.hi:
            raise ValueError("no point in the ranges satisfies t_slot < h")

    @property
    def wavelength(self) -> float:
        return self.band.center

    def to_dict(self) -> dict:
        return asdict(self)

    def key(self) -> str:
        return stable_hash(self.to_dict())


@dataclass
class PointResult:
    index: int
    w: float
    h: float
    t_slot: float
    wavelength: float
    beta: float = -math.inf
    F_wg: float = math.nan
    F_P: float = math.nan
    n_eff: float = math.nan
    n_g: float = math.nan
    pol_fraction_y: float = math.nan
    padding: float = math.nan
    status: str = "failed"
    message: str = ""

    @property
    def geometry(self) -> tuple[float, float, float]:
        return (self.w, self.h, self.t_slot)

    @property
    def ok(self) -> bool:
        return self.status == "ok"


POINT_COLUMNS = (
    "index", "w", "h", "t_slot", "wavelength", "beta", "F_wg", "F_P",
    "n_eff", "n_g", "pol_fraction_y", "padding", "status", "message",
)


def _cross_section(spec: SweepSpec, w, h, t) -> CrossSection:
    return CrossSection(
        spec.material, w, h, t,
        slot_material=spec.slot_material,
        substrate_material=spec.substrate_material,
        cladding_material=spec.cladding_material,
    )


def with_auto_padding(cs: CrossSection, wavelength: float, grid: GridSettings, fn):
    """Call ``fn(emap)`` on a window around ``cs``; returns ``(fn(emap), padding_used)``.

    A ``PaddingError`` triggers one retry with the suggested padding when
    ``grid.auto_padding`` is set and the suggestion is within the cap.
    """
    pad = grid.padding_for(wavelength)
    for attempt in range(2):
        emap = rasterize(cs, Grid2D.around(cs, grid.dx, grid.dy, pad), wavelength)
        try:
            return fn(emap), pad
        except PaddingError as exc:
            if attempt or not grid.auto_padding or exc.suggested_padding is None:
                raise
            pad = max(math.ceil(exc.suggested_padding / 10.0) * 10.0, pad * 1.25)
            if pad > grid.padding_cap(wavelength):
                raise PaddingError(
                    f"mode near cutoff needs {pad:.0f} nm padding, above the "
                    f"{grid.padding_cap(wavelength):.0f} nm cap", exc.edge_ratio, pad,
                ) from exc
            log.debug("retrying with padding %.0f nm", pad)


def solve_fundamental(cs: CrossSection, wavelength: float, grid: GridSettings,
                      solver: SolverSettings = SolverSettings()):
    """Fundamental y-polarized slot mode of ``cs``; returns ``(mode, padding_used)``.

    Searches the sector with Ey even in x, widening the search when the
    first mode found there is not y-polarized.
    """
    def fundamental(emap):
        for n_modes in (1, 3):
            modes = solve_modes(SolveRequest(emap, n_modes=n_modes, settings=solver, symmetry="even"))
            if not modes:
                raise ModeSolverError("no guided mode")
            try:
                return select_mode(modes, "y")
            except ModeSolverError:
                if len(modes) < n_modes:
                    raise
        raise ModeSolverError("no y-polarized guided mode")

    return with_auto_padding(cs, wavelength, grid, fundamental)


def evaluate_point(spec: SweepSpec, index: int, w: float, h: float, t: float,
                   wavelength: float | None = None) -> PointResult:
    """Beta of a y dipole at the slot centre for one geometry."""
    lam = spec.wavelength if wavelength is None else wavelength
    w, h, t, lam = float(w), float(h), float(t), float(lam)
    res = PointResult(index, w, h, t, lam)
    try:
        cs = _cross_section(spec, w, h, t)
        mode, pad = solve_fundamental(cs, lam, spec.grid, spec.solver)
        c = coupling_at(mode, DipoleSpec((0.0, cs.monolayer_y_offset), "y", lam), F_bg=spec.F_bg)
    except (ModeSolverError, GeometryError, MaterialRangeError, ValueError) as exc:
        res.message = f"{type(exc).__name__}: {exc}"
        log.info("point %d (w=%g h=%g t=%g) failed: %s", index, w, h, t, res.message)
        return res
    res.beta, res.F_wg, res.F_P = float(c.beta), float(c.F_wg), float(c.F_P)
    res.n_eff, res.n_g, res.pol_fraction_y = float(mode.n_eff), float(mode.n_g), float(mode.pol_fraction_y)
    res.padding = float(pad)
    res.status = "ok"
    res.message = ""
    return res


def _eval_task(args):
    spec, index, w, h, t = args
    return evaluate_point(spec, index, w, h, t)


def _rank_key(p: PointResult):
    # larger beta first, then smaller (w, h, t)
    return (-p.beta, p.w, p.h, p.t_slot)


@dataclass
class SweepResult:
    spec: SweepSpec
    points: list[PointResult]
    best: PointResult
    provenance: dict = field(default_factory=dict)
    band_curve: list[PointResult] = field(default_factory=list)

    @property
    def best_beta(self) -> float:
        return self.best.beta

    @property
    def best_geometry(self) -> tuple[float, float, float]:
        return self.best.geometry

    @property
    def F_P(self) -> float:
        return self.best.F_P

    def summary(self) -> dict:
        b = self.best
        return {
            "material": self.spec.material,
            "band": self.spec.band.name,
            "wavelength_nm": self.spec.wavelength,
            "best": {"w_nm": b.w, "h_nm": b.h, "t_slot_nm": b.t_slot, "beta": b.beta,
                     "F_wg": b.F_wg, "F_P": b.F_P, "n_eff": b.n_eff, "n_g": b.n_g,
                     "pol_fraction_y": b.pol_fraction_y, "index": b.index},
            "n_points": len(self.points),
            "n_failed": sum(not p.ok for p in self.points),
            "band_curve": [{"wavelength_nm": p.wavelength, "beta": p.beta, "F_P": p.F_P, "status": p.status}
                           for p in self.band_curve],
            "provenance": self.provenance,
        }


class _Journal:
    """Append-only JSON-lines record of evaluated points, keyed by point index."""

    def __init__(self, path: Path | None, key: str):
        self.path = path
        self.key = key
        self.done: dict[int, PointResult] = {}
        if path is None:
            return
        if path.exists():
            lines = path.read_text().splitlines()
            if lines and json.loads(lines[0]).get("spec") == key:
                kept = lines[:1]
                for ln in lines[1:]:
                    try:
                        rec = json.loads(ln)
                    except json.JSONDecodeError:
                        break  # torn final line from an interrupted run
                    p = PointResult(**rec)
                    self.done[p.index] = p
                    kept.append(ln)
                if len(kept) < len(lines) or not path.read_text().endswith("\n"):
                    atomic_write_text(path, "\n".join(kept) + "\n")
            else:
                path.unlink()
        if not path.exists():
            path.write_text(json.dumps({"spec": key}) + "\n")

    def add(self, p: PointResult) -> None:
        self.done[p.index] = p
        if self.path is not None:
            with open(self.path, "a") as fh:
                fh.write(json.dumps(asdict(p)) + "\n")


def _evaluate_many(spec, tasks, journal: _Journal, threads: int) -> list[PointResult]:
    todo = [t for t in tasks if t[0] not in journal.done]
    args = [(spec, i, w, h, t) for i, w, h, t in todo]
    if threads > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for p in pool.map(_eval_task, args):
                journal.add(p)
    else:
        for a in args:
            journal.add(_eval_task(a))
    return [journal.done[t[0]] for t in tasks]


def optimize_geometry(spec: SweepSpec, threads: int = 1, journal_path: str | Path | None = None) -> SweepResult:
    """Grid search plus one half-step coordinate-descent pass.

    ``journal_path`` makes the run resumable: points already recorded for the
    same spec are not re-evaluated.
    """
    journal = _Journal(Path(journal_path) if journal_path else None, spec.key())
    grid = [
        (w, h, t)
        for w, h, t in itertools.product(spec.w.values(), spec.h.values(), spec.t_slot.values())
        if t < h
    ]
    if not grid:
        raise SweepError("sweep ranges contain no valid geometry")
    tasks = [(i, *g) for i, g in enumerate(grid)]
    points = _evaluate_many(spec, tasks, journal, threads)
    seen = {p.geometry: p for p in points}
    best = min(points, key=_rank_key)

    if spec.refine and best.ok:
        next_index = len(grid)
        ranges = (spec.w, spec.h, spec.t_slot)
        for axis in range(3):
            r = ranges[axis]
            half = r.step / 2 if r.hi > r.lo else 0.0
            if half == 0:
                continue
            cands = []
            for sgn in (-1, 1):
                g = list(best.geometry)
                g[axis] = round(g[axis] + sgn * half, 9)
                g = tuple(g)
                if not r.lo <= g[axis] <= r.hi or not g[2] < g[1] or g in seen:
                    continue
                cands.append((next_index, *g))
                next_index += 1
            new = _evaluate_many(spec, cands, journal, threads)
            for p in new:
                seen[p.geometry] = p
            points.extend(new)
            best = min(points, key=_rank_key)

    if not any(p.ok for p in points):
        raise SweepError(f"all {len(points)} sweep points failed; first error: {points[0].message}")
    points.sort(key=lambda p: p.index)

    curve = []
    for k, lam in enumerate(spec.band.samples):
        curve.append(evaluate_point(spec, -1 - k, best.w, best.h, best.t_slot, wavelength=lam))

    prov = {
        "version": __version__,
        "spec_hash": spec.key(),
        "grid": asdict(spec.grid),
        "solver": asdict(spec.solver),
        "objective": "beta of y dipole at slot centre, band-centre wavelength",
    }
    return SweepResult(spec, points, best, prov, curve)


def material_comparison(bands: Iterable[Band | str], materials: Sequence[str], base: SweepSpec | None = None,
                        threads: int = 1) -> list[dict]:
    """Best beta and F_P per (material, band); ``base`` supplies ranges and settings."""
    rows = []
    for band in bands:
        band = BANDS[band] if isinstance(band, str) else band
        for mat in materials:
            spec = SweepSpec(mat, band) if base is None else replace(base, material=mat, band=band)
            try:
                r = optimize_geometry(spec, threads=threads)
            except SweepError as exc:
                rows.append({"material": mat, "band": band.name, "beta": -math.inf, "F_P": math.nan,
                             "F_wg": math.nan, "geometry_nm": None, "loss_note": get_material(mat).loss_note,
                             "error": str(exc)})
                continue
            rows.append({
                "material": mat,
                "band": band.name,
                "beta": r.best_beta,
                "F_P": r.F_P,
                "F_wg": r.best.F_wg,
                "geometry_nm": list(r.best_geometry),
                "loss_note": get_material(mat).loss_note,
                "error": None,
            })
    return rows


def points_to_csv(points: Sequence[PointResult]) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(POINT_COLUMNS)
    for p in points:
        d = asdict(p)
        wr.writerow([repr(d[c]) if isinstance(d[c], float) else d[c] for c in POINT_COLUMNS])
    return buf.getvalue()


def write_sweep_outputs(result: SweepResult, out_dir: str | Path, stem: str = "sweep", extra: dict | None = None):
    """``<stem>_points.csv`` (every evaluation) and ``<stem>_summary.json``."""
    out_dir = Path(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    csv_path = atomic_write_text(out_dir / f"{stem}_points.csv", points_to_csv(result.points))
    summary = result.summary()
    if extra:
        summary.update(extra)
    json_path = atomic_write_text(out_dir / f"{stem}_summary.json", dump_json(summary))
    return csv_path, json_path
