"""Thermal and thermodynamic quantities of an alkali vapor cell."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Mapping

from scipy.constants import k as k_B, zero_Celsius

from .config import load_constants


def celsius_to_kelvin(t_c: float) -> float:
    return t_c + zero_Celsius


@dataclass(frozen=True)
class VaporConditions:
    """Cell state. SI units: kelvin, kilogram, meter."""

    temperature: float
    atomic_mass: float
    cell_length: float = 0.025
    cell_diameter: float = 0.025

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError(f"temperature must be > 0 K, got {self.temperature}")
        if not self.atomic_mass > 0:
            raise ValueError(f"atomic_mass must be > 0, got {self.atomic_mass}")
        if not self.cell_length > 0:
            raise ValueError(f"cell_length must be > 0, got {self.cell_length}")


@dataclass(frozen=True)
class VaporPressureCoefficients:
    """Antoine form ``log10(P / Pa) = a - b_k / (T + c_k)``, valid on [t_min_k, t_max_k]."""

    a: float
    b_k: float
    c_k: float = 0.0
    t_min_k: float = 290.0
    t_max_k: float = 400.0

    def __post_init__(self):
        if self.t_min_k >= self.t_max_k:
            raise ValueError("t_min_k must be below t_max_k")
        if self.t_min_k + self.c_k <= 0:
            raise ValueError("correlation is singular inside the validity range")

    @classmethod
    def from_mapping(cls, m: Mapping[str, Any]) -> "VaporPressureCoefficients":
        return cls(**{k: float(v) for k, v in m.items()})


def cesium_coefficients() -> VaporPressureCoefficients:
    return VaporPressureCoefficients.from_mapping(load_constants()["vapor_pressure"])


def cesium_conditions(temperature: float, **kw) -> VaporConditions:
    """VaporConditions for the shipped Cs constants at *temperature* (K)."""
    c = load_constants()
    kw.setdefault("cell_length", c["cell"]["length_m"])
    kw.setdefault("cell_diameter", c["cell"]["diameter_m"])
    return VaporConditions(temperature, c["atom"]["atomic_mass_kg"], **kw)


def thermal_velocity(cond: VaporConditions) -> float:
    """One-dimensional RMS velocity sqrt(k_B T / m) in m/s.

    This is the standard deviation of the Maxwell-Boltzmann velocity
    component along the beam axis; every dephasing formula in the package
    uses this convention.
    """
    return math.sqrt(k_B * cond.temperature / cond.atomic_mass)


def vapor_pressure(temperature: float, coeffs: VaporPressureCoefficients) -> float:
    """Saturated vapor pressure in Pa."""
    if not coeffs.t_min_k <= temperature <= coeffs.t_max_k:
        raise ValueError(
            f"temperature {temperature} K outside correlation range "
            f"[{coeffs.t_min_k}, {coeffs.t_max_k}] K"
        )
    return 10.0 ** (coeffs.a - coeffs.b_k / (temperature + coeffs.c_k))


def number_density(cond: VaporConditions, coeffs: VaporPressureCoefficients) -> float:
    """Atomic number density n = P(T) / (k_B T) in m^-3."""
    return vapor_pressure(cond.temperature, coeffs) / (k_B * cond.temperature)


def doppler_fwhm(wavelength: float, cond: VaporConditions) -> float:
    """Gaussian Doppler FWHM in MHz for a transition at *wavelength* (m)."""
    if not wavelength > 0:
        raise ValueError("wavelength must be > 0")
    fwhm_hz = math.sqrt(8.0 * math.log(2.0) * k_B * cond.temperature / cond.atomic_mass) / wavelength
    return fwhm_hz * 1e-6
