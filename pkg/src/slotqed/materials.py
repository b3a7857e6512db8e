"""Wavelength-dependent refractive indices with validity-window enforcement.

Materials are loaded from a TOML database (``data/materials.toml`` ships with
the package). Wavelengths are in nanometres at the API; the Sellmeier formula
itself is evaluated with the wavelength in micrometres and ``C_i`` in um^2.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

__all__ = [
    "MaterialModel",
    "MaterialRangeError",
    "load_database",
    "get_material",
    "refractive_index",
    "permittivity",
    "permittivity_derivative",
]

_ALLOWED_KEYS = {"kind", "terms", "index", "valid_range_nm", "loss_note"}


class MaterialRangeError(ValueError):
    """Wavelength outside a material's validity window."""


@dataclass(frozen=True)
class MaterialModel:
    """Dispersion model for one isotropic, lossless medium.

    Attributes
    ----------
    name : str
        Material identifier, e.g. ``"GaP"``.
    kind : str
        ``"sellmeier"`` or ``"constant"``.
    coefficients : tuple
        Sellmeier ``(B_i, C_i)`` pairs (``C_i`` in um^2), or a one-element
        tuple holding the constant index.
    valid_range : tuple of float
        ``(lambda_min, lambda_max)`` in nm.
    loss_note : str or None
        Informational annotation; never used in any computation.
    """

    name: str
    kind: str
    coefficients: tuple
    valid_range: tuple[float, float]
    loss_note: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("sellmeier", "constant"):
            raise ValueError(f"{self.name}: unknown material kind {self.kind!r}")
        lo, hi = self.valid_range
        if not 0 < lo < hi:
            raise ValueError(f"{self.name}: invalid range {self.valid_range}")
        if self.kind == "constant":
            if len(self.coefficients) != 1 or self.coefficients[0] < 1.0:
                raise ValueError(f"{self.name}: constant index must be a single value >= 1")
        else:
            lo2, hi2 = (lo * 1e-3) ** 2, (hi * 1e-3) ** 2
            for B, C in self.coefficients:
                if lo2 <= C <= hi2:
                    raise ValueError(
                        f"{self.name}: Sellmeier pole C={C} um^2 lies inside the validity window"
                    )

    @classmethod
    def constant(cls, name: str, index: float, valid_range=(100.0, 1e5)) -> "MaterialModel":
        return cls(name, "constant", (float(index),), tuple(valid_range))

    def check_range(self, wavelength) -> None:
        lo, hi = self.valid_range
        wl = np.asarray(wavelength, dtype=float)
        if np.any(wl < lo) or np.any(wl > hi):
            raise MaterialRangeError(
                f"wavelength {wavelength} nm outside the validity window of "
                f"{self.name} [{lo:g}, {hi:g}] nm"
            )

    def eps(self, wavelength):
        """Relative permittivity at ``wavelength`` nm (scalar or array)."""
        self.check_range(wavelength)
        wl = np.asarray(wavelength, dtype=float)
        if self.kind == "constant":
            return np.full_like(wl, self.coefficients[0] ** 2)[()]
        lam2 = (wl * 1e-3) ** 2
        out = np.ones_like(lam2)
        for B, C in self.coefficients:
            out = out + B * lam2 / (lam2 - C)
        return out[()]

    def deps_dlambda(self, wavelength):
        """Analytic d(eps)/d(lambda) in nm^-1."""
        self.check_range(wavelength)
        wl = np.asarray(wavelength, dtype=float)
        if self.kind == "constant":
            return np.zeros_like(wl)[()]
        lam = wl * 1e-3
        lam2 = lam * lam
        out = np.zeros_like(lam)
        for B, C in self.coefficients:
            out = out - 2.0 * B * C * lam / (lam2 - C) ** 2
        return (out * 1e-3)[()]


def _parse_record(name: str, rec: dict) -> MaterialModel:
    unknown = set(rec) - _ALLOWED_KEYS
    if unknown:
        raise ValueError(f"material {name!r}: unknown field(s) {sorted(unknown)}")
    for key in ("kind", "valid_range_nm"):
        if key not in rec:
            raise ValueError(f"material {name!r}: missing field {key!r}")
    kind = rec["kind"]
    if kind == "sellmeier":
        if "terms" not in rec or "index" in rec:
            raise ValueError(f"material {name!r}: sellmeier record needs `terms` and no `index`")
        coeffs = tuple((float(b), float(c)) for b, c in rec["terms"])
    elif kind == "constant":
        if "index" not in rec or "terms" in rec:
            raise ValueError(f"material {name!r}: constant record needs `index` and no `terms`")
        coeffs = (float(rec["index"]),)
    else:
        raise ValueError(f"material {name!r}: unknown kind {kind!r}")
    lo, hi = rec["valid_range_nm"]
    return MaterialModel(name, kind, coeffs, (float(lo), float(hi)), rec.get("loss_note"))


def load_database(path: str | Path | None = None) -> dict[str, MaterialModel]:
    """Parse a material database file; the built-in one when ``path`` is None."""
    if path is None:
        text = resources.files("slotqed").joinpath("data/materials.toml").read_text()
    else:
        text = Path(path).read_text()
    raw = tomllib.loads(text)
    return {name: _parse_record(name, rec) for name, rec in raw.items()}


@lru_cache(maxsize=1)
def _builtin() -> dict[str, MaterialModel]:
    return load_database()


def builtin_names() -> Iterable[str]:
    return tuple(_builtin())


def get_material(name: str | MaterialModel) -> MaterialModel:
    if isinstance(name, MaterialModel):
        return name
    try:
        return _builtin()[name]
    except KeyError:
        raise KeyError(f"unknown material {name!r}; known: {', '.join(_builtin())}") from None


def refractive_index(material: str | MaterialModel, wavelength):
    """Refractive index n at ``wavelength`` nm."""
    return np.sqrt(get_material(material).eps(wavelength))


def permittivity(material: str | MaterialModel, wavelength):
    """Relative permittivity n**2 at ``wavelength`` nm."""
    return get_material(material).eps(wavelength)


def permittivity_derivative(material: str | MaterialModel, wavelength):
    return get_material(material).deps_dlambda(wavelength)


def index_scalar(material, wavelength: float) -> float:
    return math.sqrt(float(get_material(material).eps(wavelength)))
