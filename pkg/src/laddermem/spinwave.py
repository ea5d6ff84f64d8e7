"""Spinwave geometry, motional dephasing time and the hyperfine-beating
retrieval-efficiency model.

Units: times in ns, frequencies in MHz, spinwave wavelength in µm.
"""
from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields, replace
from typing import Literal, Optional

import numpy as np
from scipy.optimize import bisect, minimize_scalar

from .config import load_constants

# angular frequency in rad/ns per MHz; the only place the 2*pi enters
RAD_PER_NS_PER_MHZ = 2.0 * math.pi * 1e-3

PARAM_NAMES = ("eta0", "tau_s", "tau_bar", "t0", "a", "b", "c", "d")


@dataclass(frozen=True)
class SpinwaveGeometry:
    """Vacuum wavelengths (m) of signal and control fields."""

    signal_wavelength: float
    control_wavelength: float
    propagation: Literal["counter", "co"] = "counter"

    def __post_init__(self):
        if not (self.signal_wavelength > 0 and self.control_wavelength > 0):
            raise ValueError("wavelengths must be > 0")
        if self.propagation not in ("counter", "co"):
            raise ValueError(f"propagation must be 'counter' or 'co', got {self.propagation!r}")

    @classmethod
    def cesium_ladder(cls, propagation="counter") -> "SpinwaveGeometry":
        wl = load_constants()["wavelengths"]
        return cls(wl["d1_m"], wl["upper_m"], propagation)


@dataclass(frozen=True)
class HyperfineSplittings:
    """Adjacent hyperfine intervals of the storage state, in MHz (not angular)."""

    f23: float
    f34: float
    f45: float

    def __post_init__(self):
        if min(self.f23, self.f34, self.f45) < 0:
            raise ValueError("hyperfine splittings must be >= 0")

    @classmethod
    def cesium_6d32(cls) -> "HyperfineSplittings":
        hf = load_constants()["hyperfine"]
        return cls(hf["f23_mhz"], hf["f34_mhz"], hf["f45_mhz"])

    def offsets(self) -> np.ndarray:
        """Beat frequencies (MHz) paired with amplitudes (1, a, b, c, d)."""
        return np.array([0.0, self.f23, self.f34, self.f45, self.f23 + self.f34])


@dataclass(frozen=True)
class SpinwaveModelParams:
    eta0: float
    tau_s: float
    tau_bar: float
    t0: float
    a: float = 0.0
    b: float = 0.0
    c: float = 0.0
    d: float = 0.0

    def __post_init__(self):
        if not (self.tau_s > 0 and self.tau_bar > 0):
            raise ValueError("tau_s and tau_bar must be > 0")
        if self.amplitude_sum() == 0:
            raise ValueError("1 + a + b + c + d must be nonzero")

    def amplitude_sum(self) -> float:
        return (((1.0 + self.a) + self.b) + self.c) + self.d

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    @classmethod
    def from_array(cls, x) -> "SpinwaveModelParams":
        return cls(*(float(v) for v in x))

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


# Fit parameters of the storage-time scan (eta0, tau_s ns, tau_bar ns, t0 ns, A, B, C, D)
TABLE_PARAMS = SpinwaveModelParams(0.71, 24.4, 24.4, -0.02, 1.14, 2.79, -0.12, 1.45)


def wavevector_mismatch(geom: SpinwaveGeometry) -> float:
    """|delta k| in rad/m."""
    ks = 2.0 * math.pi / geom.signal_wavelength
    kc = 2.0 * math.pi / geom.control_wavelength
    return abs(ks - kc) if geom.propagation == "counter" else ks + kc


def spinwave_wavelength(geom: SpinwaveGeometry) -> float:
    """Spinwave period in µm; ``math.inf`` for a Doppler-free (matched) configuration."""
    if geom.propagation == "counter":
        inv = abs(1.0 / geom.signal_wavelength - 1.0 / geom.control_wavelength)
    else:
        inv = 1.0 / geom.signal_wavelength + 1.0 / geom.control_wavelength
    if inv == 0.0:
        return math.inf
    return 1e6 / inv


def inhomogeneous_dephasing_time(lambda_spin: float, v_th: float) -> float:
    """T_inhom = lambda_s / (sqrt(2) pi v_th), in ns.

    Args:
        lambda_spin: spinwave wavelength in µm, finite and positive.
        v_th: thermal velocity in m/s. Zero gives ``math.inf``.
    """
    if not math.isfinite(lambda_spin) or lambda_spin <= 0:
        raise ValueError(f"spinwave wavelength must be finite and > 0, got {lambda_spin}")
    if v_th < 0:
        raise ValueError("v_th must be >= 0")
    if v_th == 0:
        return math.inf
    return lambda_spin * 1e-6 / (math.sqrt(2.0) * math.pi * v_th) * 1e9


def envelope_at(t, p: SpinwaveModelParams):
    """Decay envelope: homogeneous (exponential) and Gaussian parts, beating excluded."""
    u = np.asarray(t, dtype=float) - p.t0
    expo = ((u - p.tau_s) * (u + p.tau_bar)) / (p.tau_s * p.tau_bar) + 1.0
    return p.eta0 * np.exp(-expo)


def beating_factor(t, p: SpinwaveModelParams, hf: HyperfineSplittings):
    """Normalized squared modulus of the hyperfine superposition; 1 at t = t0."""
    u = np.asarray(t, dtype=float) - p.t0
    w = RAD_PER_NS_PER_MHZ
    s = (
        1.0
        + p.a * np.exp(-1j * w * hf.f23 * u)
        + p.b * np.exp(-1j * w * hf.f34 * u)
        + p.c * np.exp(-1j * w * hf.f45 * u)
        + p.d * np.exp(-1j * w * (hf.f23 + hf.f34) * u)
    )
    return (s.real**2 + s.imag**2) / p.amplitude_sum() ** 2


def efficiency_at(t, p: SpinwaveModelParams, hf: HyperfineSplittings):
    """Retrieval efficiency after storage time *t* (ns)."""
    return envelope_at(t, p) * beating_factor(t, p, hf)


def with_efficiency_at(p: SpinwaveModelParams, hf: HyperfineSplittings, t: float, target: float):
    """Copy of *p* with eta0 rescaled so that efficiency_at(t) == target."""
    cur = float(efficiency_at(t, p, hf))
    if cur <= 0:
        raise ValueError(f"model efficiency vanishes at t={t}")
    return replace(p, eta0=p.eta0 * target / cur)


def envelope_one_over_e_time(p: SpinwaveModelParams) -> float:
    """Time after t0 at which the beating-free envelope falls to eta0/e (closed form)."""
    # u^2/(ts tb) + u (1/ts - 1/tb) = 1
    qa = 1.0 / (p.tau_s * p.tau_bar)
    qb = 1.0 / p.tau_s - 1.0 / p.tau_bar
    u = (-qb + math.sqrt(qb * qb + 4.0 * qa)) / (2.0 * qa)
    return p.t0 + u


def _local_maxima(p, hf, t0, horizon, step):
    t = np.arange(t0, t0 + horizon + step, step)
    y = efficiency_at(t, p, hf)
    idx = np.nonzero((y[1:-1] > y[:-2]) & (y[1:-1] >= y[2:]))[0] + 1
    peaks_t = [t0]
    peaks_y = [float(efficiency_at(t0, p, hf))]
    for i in idx:
        res = minimize_scalar(
            lambda s: -float(efficiency_at(s, p, hf)),
            bounds=(t[i - 1], t[i + 1]),
            method="bounded",
            options={"xatol": 1e-10 * max(1.0, abs(t[i]))},
        )
        peaks_t.append(float(res.x))
        peaks_y.append(-float(res.fun))
    return np.array(peaks_t), np.array(peaks_y)


def one_over_e_time(
    p: SpinwaveModelParams,
    hf: HyperfineSplittings,
    horizon: Optional[float] = None,
) -> Optional[float]:
    """1/e storage time of the upper envelope of the oscillating efficiency curve.

    The upper envelope joins successive local maxima of efficiency_at
    linearly; past the last maximum it follows the curve itself. Returns the
    first time after t0 at which it drops to efficiency_at(t0)/e, or None if
    that does not happen within *horizon* ns (default 10 * max(tau_s, tau_bar)).
    """
    if horizon is None:
        horizon = 10.0 * max(p.tau_s, p.tau_bar)
    fmax = max(hf.f23, hf.f34, hf.f45, hf.f23 + hf.f34)
    step = min(max(p.tau_s, p.tau_bar) / 400.0, 1e3 / (40.0 * fmax) if fmax > 0 else math.inf)
    pt, py = _local_maxima(p, hf, p.t0, horizon, step)
    thr = py[0] / math.e

    below = np.nonzero(py < thr)[0]
    if below.size:
        k = int(below[0])
        t_lo, t_hi = pt[k - 1], pt[k]
        y_lo, y_hi = py[k - 1], py[k]

        def env(s):
            return y_lo + (y_hi - y_lo) * (s - t_lo) / (t_hi - t_lo) - thr

        return float(bisect(env, t_lo, t_hi, xtol=1e-12, rtol=4 * np.finfo(float).eps))

    # past the last maximum the envelope is the curve itself
    t_last = pt[-1]
    t_end = p.t0 + horizon
    if float(efficiency_at(t_end, p, hf)) > thr:
        return None
    return float(
        bisect(lambda s: float(efficiency_at(s, p, hf)) - thr, t_last, t_end,
               xtol=1e-12, rtol=4 * np.finfo(float).eps)
    )
