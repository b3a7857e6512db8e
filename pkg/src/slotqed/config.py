"""Strict TOML run configuration.

Every key carries its unit in the name (``w_nm``, ``nu_fsr_ghz``, ...).
Unknown sections or keys are errors, so a typo can never silently fall back
to a default. A parsed :class:`RunConfig` echoes back to a plain dict with
:meth:`RunConfig.to_dict`, and that dict re-parses to an equal config.
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from ._util import stable_hash

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config", "preset_names", "load_preset"]

REQUIRED = object()


class ConfigError(ValueError):
    pass


def _f(default=REQUIRED):
    if default is REQUIRED:
        return dataclasses.field(default=None, metadata={"required": True})
    return dataclasses.field(default=default)


@dataclass(frozen=True)
class GeometryConfig:
    material: str = _f()
    w_nm: float = _f()
    h_nm: float = _f()
    t_slot_nm: float = _f()
    slot_material: str = _f("SiO2")
    substrate_material: str = _f("SiO2")
    cladding_material: str = _f("air")
    monolayer_y_offset_nm: float = _f(0.0)


@dataclass(frozen=True)
class GridConfig:
    dx_nm: float = _f(10.0)
    dy_nm: float = _f(10.0)
    padding_nm: float | None = _f(None)  # None: 1.5 wavelengths
    auto_padding: bool = _f(True)


@dataclass(frozen=True)
class SolveConfig:
    wavelength_nm: float = _f()
    n_modes: int = _f(2)
    n_eff_guess: float | None = _f(None)
    symmetry: str = _f("none")  # none | even | odd
    residual_tol: float = _f(1e-8)
    boundary_tol: float = _f(1e-6)
    arpack_tol: float = _f(1e-12)
    maxiter: int = _f(3000)
    seed: int = _f(0)


@dataclass(frozen=True)
class CouplingConfig:
    wavelengths_nm: tuple = _f()
    orientations: tuple = _f(("x", "y", "z"))
    displacement_u: tuple = _f(())
    F_bg: float = _f(1.0)


@dataclass(frozen=True)
class SweepConfig:
    materials: tuple = _f()
    bands: tuple = _f(("band1",))
    w_range_nm: tuple = _f((200.0, 1200.0, 50.0))
    h_range_nm: tuple = _f((150.0, 800.0, 50.0))
    t_slot_range_nm: tuple = _f((20.0, 160.0, 20.0))
    boundary_tol: float = _f(1e-3)
    refine: bool = _f(True)
    threads: int = _f(1)
    F_bg: float = _f(1.0)


@dataclass(frozen=True)
class CqedConfig:
    nu_fsr_ghz: float = _f()
    wavelength_nm: float = _f()
    q0: float = _f()
    beta: float = _f()
    F_P: float = _f()
    gamma_l_per_s: float | None = _f(None)
    N: int = _f(1)
    gamma_total_per_s: float | None = _f(None)


@dataclass(frozen=True)
class OutputConfig:
    directory: str = _f("results")
    formats: tuple = _f(("json", "csv"))


_SECTIONS = {
    "geometry": GeometryConfig,
    "grid": GridConfig,
    "solve": SolveConfig,
    "coupling": CouplingConfig,
    "sweep": SweepConfig,
    "cqed": CqedConfig,
    "output": OutputConfig,
}

_FORMATS = {"json", "csv"}


def _coerce(section: str, name: str, ftype: str, value):
    where = f"[{section}] {name}"
    if value is None:
        return None
    if "bool" in ftype:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if ftype.startswith("int"):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if ftype.startswith("float"):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if ftype.startswith("str"):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if ftype == "tuple":
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        return tuple(float(v) if isinstance(v, int) and not isinstance(v, bool) else v for v in value)
    raise AssertionError(ftype)


def _parse_section(name: str, cls, raw: dict):
    if not isinstance(raw, dict):
        raise ConfigError(f"[{name}] must be a table")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigError(f"[{name}]: unknown key(s) {', '.join(unknown)}; allowed: {', '.join(known)}")
    kw = {}
    for f in fields(cls):
        if f.name in raw and raw[f.name] is not None:
            kw[f.name] = _coerce(name, f.name, str(f.type), raw[f.name])
        elif f.metadata.get("required"):
            raise ConfigError(f"missing required key '{f.name}' in [{name}]")
    return cls(**kw)


def _validate(cfg: "RunConfig") -> None:
    if cfg.solve and cfg.solve.symmetry not in ("none", "even", "odd"):
        raise ConfigError(f"[solve] symmetry must be none, even or odd, got {cfg.solve.symmetry!r}")
    if cfg.solve and cfg.solve.n_modes < 1:
        raise ConfigError("[solve] n_modes must be >= 1")
    if cfg.grid and not (cfg.grid.dx_nm > 0 and cfg.grid.dy_nm > 0):
        raise ConfigError("[grid] dx_nm and dy_nm must be positive")
    if cfg.coupling:
        bad = [o for o in cfg.coupling.orientations if o not in ("x", "y", "z")]
        if bad:
            raise ConfigError(f"[coupling] orientations must be x, y or z; got {bad}")
        if not cfg.coupling.wavelengths_nm:
            raise ConfigError("[coupling] wavelengths_nm must not be empty")
    if cfg.sweep:
        for k in ("w_range_nm", "h_range_nm", "t_slot_range_nm"):
            if len(getattr(cfg.sweep, k)) != 3:
                raise ConfigError(f"[sweep] {k} must be [min, max, step]")
        if cfg.sweep.threads < 1:
            raise ConfigError("[sweep] threads must be >= 1")
    if cfg.output:
        bad = set(cfg.output.formats) - _FORMATS
        if bad:
            raise ConfigError(f"[output] unknown format(s) {sorted(bad)}")


@dataclass(frozen=True)
class RunConfig:
    geometry: GeometryConfig | None = None
    grid: GridConfig = GridConfig()
    solve: SolveConfig | None = None
    coupling: CouplingConfig | None = None
    sweep: SweepConfig | None = None
    cqed: CqedConfig | None = None
    output: OutputConfig = OutputConfig()

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "RunConfig":
        unknown = sorted(set(raw) - set(_SECTIONS))
        if unknown:
            raise ConfigError(f"unknown section(s) {', '.join(unknown)}; allowed: {', '.join(_SECTIONS)}")
        kw = {name: _parse_section(name, _SECTIONS[name], raw[name]) for name in _SECTIONS
              if raw.get(name) is not None}
        cfg = cls(**kw)
        _validate(cfg)
        return cfg

    def to_dict(self) -> dict:
        out = {}
        for name in _SECTIONS:
            sec = getattr(self, name)
            out[name] = None if sec is None else {
                k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(sec).items()
            }
        return out

    def hash(self) -> str:
        return stable_hash(self.to_dict())

    def require(self, *sections: str) -> None:
        for s in sections:
            if getattr(self, s) is None:
                raise ConfigError(f"missing required section [{s}]")


def parse_config(text: str) -> RunConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    return RunConfig.from_dict(raw)


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def preset_names() -> list[str]:
    root = resources.files("slotqed").joinpath("presets")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def load_preset(name: str) -> RunConfig:
    if name not in preset_names():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return parse_config(resources.files("slotqed").joinpath(f"presets/{name}.toml").read_text())
