"""Spectral acceptance window: convolution, regularized deconvolution and
overlap integrals on uniform detuning grids (MHz).

Convention: in ``convolve(e, m)`` the second curve is a kernel whose origin
is the central grid point ``N // 2``, and the result is the continuous
convolution integral, i.e. the discrete sum scaled by the grid spacing. On
a grid symmetric about zero with an odd number of points this is the usual
``D(x) = \\int E(x') M(x - x') dx'``. ``deconvolve`` is defined as the exact
inverse of ``convolve`` as the regularization goes to zero; no separate
Fourier-transform normalization constant appears.
"""
from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.fft import irfft, next_fast_len, rfft
from scipy.integrate import trapezoid
from scipy.interpolate import PchipInterpolator

log = logging.getLogger(__name__)

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))
# Gaussian time-bandwidth product, FWHM_t * FWHM_f
GAUSSIAN_TBP = 2.0 * math.log(2.0) / math.pi


class GridMismatchError(ValueError):
    pass


@dataclass
class SpectralCurve:
    """Values on a uniform two-photon-detuning grid (MHz)."""

    detuning: np.ndarray
    values: np.ndarray
    single_photon_detuning: Optional[float] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.detuning = np.asarray(self.detuning, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.detuning.ndim != 1 or self.detuning.shape != self.values.shape:
            raise ValueError("detuning and values must be 1-D arrays of equal length")
        if self.detuning.size < 8:
            raise ValueError("a spectral curve needs at least 8 points")
        d = np.diff(self.detuning)
        h = (self.detuning[-1] - self.detuning[0]) / d.size
        # float rounding of the grid points themselves is tolerated
        tol = 1e-9 * h + 8 * np.finfo(float).eps * np.max(np.abs(self.detuning))
        if not h > 0 or np.max(np.abs(d - h)) > tol:
            raise ValueError("detuning grid must be uniform and increasing")

    @property
    def spacing(self) -> float:
        return (self.detuning[-1] - self.detuning[0]) / (self.detuning.size - 1)

    def __len__(self):
        return self.detuning.size

    def with_values(self, values, **meta) -> "SpectralCurve":
        return SpectralCurve(self.detuning.copy(), values, self.single_photon_detuning, {**self.meta, **meta})

    def area(self) -> float:
        return float(trapezoid(self.values, self.detuning))

    def centroid(self) -> float:
        return float(trapezoid(self.values * self.detuning, self.detuning) / self.area())

    def to_csv(self) -> str:
        buf = io.StringIO()
        if self.single_photon_detuning is not None:
            buf.write(f"# single_photon_detuning_mhz={self.single_photon_detuning!r}\n")
        buf.write("delta_mhz,value\n")
        for x, y in zip(self.detuning, self.values):
            buf.write(f"{float(x)!r},{float(y)!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SpectralCurve":
        delta_sp = None
        xs, ys = [], []
        header_seen = False
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].partition("=")
                if key.strip() == "single_photon_detuning_mhz":
                    try:
                        delta_sp = float(val)
                    except ValueError:
                        raise ValueError(f"line {lineno}: bad single_photon_detuning_mhz {val!r}") from None
                continue
            if not header_seen:
                if [c.strip() for c in line.split(",")] != ["delta_mhz", "value"]:
                    raise ValueError(f"line {lineno}: expected header 'delta_mhz,value'")
                header_seen = True
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ValueError(f"line {lineno}: expected two columns, got {len(parts)}")
            try:
                xs.append(float(parts[0]))
                ys.append(float(parts[1]))
            except ValueError:
                raise ValueError(f"line {lineno}: non-numeric entry {line!r}") from None
        if not header_seen:
            raise ValueError("missing header 'delta_mhz,value'")
        return cls(np.array(xs), np.array(ys), delta_sp)


def uniform_grid(half_span: float, spacing: float) -> np.ndarray:
    """Odd-length grid symmetric about zero."""
    n = int(math.ceil(half_span / spacing))
    return spacing * np.arange(-n, n + 1)


def gaussian_curve(grid, fwhm: float, center: float = 0.0, peak: Optional[float] = None,
                   area: Optional[float] = None) -> SpectralCurve:
    """Gaussian of given FWHM; scale by *peak* or by continuous *area* (default peak 1)."""
    grid = np.asarray(grid, dtype=float)
    sigma = fwhm / FWHM_PER_SIGMA
    shape = np.exp(-0.5 * ((grid - center) / sigma) ** 2)
    if area is not None:
        shape = shape * area / (sigma * math.sqrt(2 * math.pi))
    elif peak is not None:
        shape = shape * peak
    return SpectralCurve(grid, shape)


def delta_curve(grid, at: float = 0.0, mass: float = 1.0) -> SpectralCurve:
    """Single bin of mass *mass* at the grid point nearest *at*."""
    grid = np.asarray(grid, dtype=float)
    v = np.zeros_like(grid)
    h = (grid[-1] - grid[0]) / (grid.size - 1)
    v[int(np.argmin(np.abs(grid - at)))] = mass / h
    return SpectralCurve(grid, v)


def _check_same_grid(a: SpectralCurve, b: SpectralCurve):
    if a.detuning.shape != b.detuning.shape or not np.allclose(
        a.detuning, b.detuning, rtol=0, atol=1e-9 * abs(a.spacing)
    ):
        raise GridMismatchError("curves are on different detuning grids; resample first")


def resample(curve: SpectralCurve, grid) -> SpectralCurve:
    """Monotone cubic (PCHIP) resampling; zero outside the original support."""
    grid = np.asarray(grid, dtype=float)
    f = PchipInterpolator(curve.detuning, curve.values, extrapolate=False)
    vals = np.nan_to_num(f(grid), nan=0.0)
    log.info("resampled curve of %d points onto grid of %d points", len(curve), grid.size)
    return SpectralCurve(grid, vals, curve.single_photon_detuning, dict(curve.meta))


def common_grid(a: SpectralCurve, b: SpectralCurve) -> tuple[SpectralCurve, SpectralCurve]:
    """Put two curves on one uniform grid covering both, at the finer spacing."""
    try:
        _check_same_grid(a, b)
        return a, b
    except GridMismatchError:
        pass
    h = min(a.spacing, b.spacing)
    lo = min(a.detuning[0], b.detuning[0])
    hi = max(a.detuning[-1], b.detuning[-1])
    n = int(round((hi - lo) / h)) + 1
    grid = lo + h * np.arange(n)
    return resample(a, grid), resample(b, grid)


def _padded_len(n: int) -> int:
    return next_fast_len(2 * n - 1, real=True)


def convolve(e: SpectralCurve, m: SpectralCurve) -> SpectralCurve:
    """Linear (zero-padded, FFT) convolution of *e* with kernel *m* on the grid of *e*."""
    _check_same_grid(e, m)
    n = len(e)
    L = _padded_len(n)
    full = irfft(rfft(e.values, L) * rfft(m.values, L), L)[: 2 * n - 1]
    c = n // 2
    return e.with_values(full[c : c + n] * e.spacing)


def deconvolve(d: SpectralCurve, e: SpectralCurve, epsilon: float = 1e-6) -> SpectralCurve:
    """Recover the kernel ``m`` with ``convolve(e, m) == d`` by Wiener-regularized
    spectral division.

    ``F(D) conj(F(E)) / (|F(E)|^2 + epsilon * max|F(E)|^2)``, divided by the
    grid spacing and re-centred on the grid's middle point.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be > 0")
    _check_same_grid(d, e)
    if not np.any(e.values):
        raise ValueError("cannot deconvolve by an all-zero curve")
    n = len(d)
    L = _padded_len(n)
    fd = rfft(d.values, L)
    fe = rfft(e.values, L)
    power = fe.real**2 + fe.imag**2
    r = irfft(fd * np.conj(fe) / (power + epsilon * power.max()), L) / d.spacing
    c = n // 2
    idx = (np.arange(n) - c) % L
    return d.with_values(r[idx], epsilon=epsilon)


def fourier_limited_linewidth(pulse_fwhm: float) -> float:
    """Spectral FWHM (MHz) of a transform-limited Gaussian pulse of FWHM *pulse_fwhm* (ns)."""
    if not pulse_fwhm > 0:
        raise ValueError("pulse_fwhm must be > 0")
    return GAUSSIAN_TBP / pulse_fwhm * 1e3


def expected_efficiency(m: SpectralCurve, s: SpectralCurve, center: bool = True) -> float:
    """Overlap integral of the acceptance window *m* with a unit-area signal spectrum *s*.

    With ``center=True`` the signal is shifted so its centroid sits on the
    centroid of *m* before integrating.
    """
    _check_same_grid(m, s)
    mass = s.area()
    if not math.isclose(mass, 1.0, rel_tol=1e-6):
        raise ValueError(f"signal spectrum must have unit area, got {mass:.9g}")
    sv = s.values
    if center:
        shift = s.centroid() - m.centroid()
        if abs(shift) > 1e-9 * s.spacing:
            sv = np.interp(s.detuning + shift, s.detuning, sv, left=0.0, right=0.0)
    return float(trapezoid(m.values * sv, m.detuning))
