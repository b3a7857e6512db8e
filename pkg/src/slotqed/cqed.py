"""Cavity-QED figures of merit for an emitter coupled to a ring or racetrack resonator.

The resonator is described by its free spectral range, resonance wavelength
and intrinsic quality factor; the emitter by its waveguide coupling
efficiency ``beta``, Purcell factor ``F_P`` and free-space decay rate.

    kappa0 = 2 pi c / (lambda0 Q0)                      (s^-1)
    C      = beta * nu_FSR * (1 + F_P) / kappa0
    g1     = sqrt(2 gamma_l beta nu_FSR (1 + F_P))       so that C = g1^2 / (2 kappa0 gamma_l)
    gN     = sqrt(N) g1

Unit convention
---------------
``nu_FSR`` is entered in Hz and enters the formulas multiplied by
``FSR_RATE_FACTOR``. The factor is 1: the free spectral range is used as a
rate directly against the angular ``kappa0``. With this convention a
500 GHz ring at 750 nm and Q0 = 1e4 with ``beta (1 + F_P) = 20.6`` gives
C = 41. Setting the factor to ``2 pi`` converts nu_FSR to angular units
instead and raises C by that factor. The superstrong threshold compares
``g_N`` against ``FSR_RATE_FACTOR * nu_FSR``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from scipy.constants import c as SPEED_OF_LIGHT

__all__ = [
    "FSR_RATE_FACTOR",
    "ResonatorSpec",
    "EmitterParams",
    "CavityFigures",
    "kappa0",
    "cooperativity",
    "vacuum_rabi",
    "cooperativity_from_g1",
    "collective_rabi",
    "classify_regime",
    "cavity_figures",
    "ghz_to_hz",
    "hz_to_ghz",
]

FSR_RATE_FACTOR = 1.0


def ghz_to_hz(f_ghz: float) -> float:
    return f_ghz * 1e9


def hz_to_ghz(f_hz: float) -> float:
    return f_hz / 1e9


def _positive(name, value):
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise ValueError(f"{name} must be a finite positive number, got {value!r}")


@dataclass(frozen=True)
class ResonatorSpec:
    """Ring/racetrack resonator.

    Parameters
    ----------
    nu_fsr_hz : float
        Free spectral range in Hz.
    wavelength_nm : float
        Resonance wavelength in nm.
    q0 : float
        Intrinsic quality factor.
    """

    nu_fsr_hz: float
    wavelength_nm: float
    q0: float

    def __post_init__(self):
        _positive("nu_fsr_hz", self.nu_fsr_hz)
        _positive("wavelength_nm", self.wavelength_nm)
        _positive("q0", self.q0)

    @property
    def fsr_rate(self) -> float:
        return FSR_RATE_FACTOR * self.nu_fsr_hz


@dataclass(frozen=True)
class EmitterParams:
    beta: float
    F_P: float
    gamma_l: float | None = None  # free-space decay rate, s^-1
    N: int = 1

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if not (math.isfinite(self.F_P) and self.F_P >= 0):
            raise ValueError(f"F_P must be >= 0, got {self.F_P}")
        if self.gamma_l is not None:
            _positive("gamma_l", self.gamma_l)
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be an integer >= 1, got {self.N}")


@dataclass(frozen=True)
class CavityFigures:
    kappa0: float
    C: float
    g1: float | None = None
    g_N: float | None = None
    regime: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def kappa0(res: ResonatorSpec) -> float:
    """Intrinsic cavity decay rate 2 pi c / (lambda0 Q0) in s^-1."""
    return 2.0 * math.pi * SPEED_OF_LIGHT / (res.wavelength_nm * 1e-9 * res.q0)


def cooperativity(res: ResonatorSpec, em: EmitterParams) -> float:
    return em.beta * res.fsr_rate * (1.0 + em.F_P) / kappa0(res)


def vacuum_rabi(res: ResonatorSpec, em: EmitterParams) -> float:
    """Single-emitter vacuum Rabi frequency g1 (s^-1)."""
    if em.gamma_l is None:
        raise ValueError("vacuum Rabi frequency needs the free-space decay rate gamma_l")
    return math.sqrt(2.0 * em.gamma_l * em.beta * res.fsr_rate * (1.0 + em.F_P))


def cooperativity_from_g1(g1: float, kappa: float, gamma_l: float) -> float:
    return g1 * g1 / (2.0 * kappa * gamma_l)


def collective_rabi(g1: float, N: int) -> float:
    """Tavis-Cummings collective coupling sqrt(N) g1."""
    return math.sqrt(N) * g1


def classify_regime(fig: CavityFigures, res: ResonatorSpec, gamma_total: float) -> str:
    """``superstrong`` if g_N exceeds the FSR rate, ``strong`` if it beats every decay rate, else ``weak``."""
    if fig.g_N is None:
        raise ValueError("regime classification needs the collective Rabi frequency g_N")
    if gamma_total is None or not gamma_total >= 0:
        raise ValueError(f"gamma_total must be >= 0, got {gamma_total!r}")
    if fig.g_N > res.fsr_rate:
        return "superstrong"
    if fig.g_N > max(fig.kappa0, gamma_total):
        return "strong"
    return "weak"


def cavity_figures(res: ResonatorSpec, em: EmitterParams, gamma_total: float | None = None) -> CavityFigures:
    """Every figure computable from the inputs.

    g1/g_N need ``gamma_l``; the regime needs those and ``gamma_total``
    (defaults to gamma_l when omitted).
    """
    k = kappa0(res)
    C = cooperativity(res, em)
    if em.gamma_l is None:
        return CavityFigures(k, C)
    g1 = vacuum_rabi(res, em)
    gN = collective_rabi(g1, em.N)
    fig = CavityFigures(k, C, g1, gN)
    gt = em.gamma_l if gamma_total is None else gamma_total
    return CavityFigures(k, C, g1, gN, classify_regime(fig, res, gt))
