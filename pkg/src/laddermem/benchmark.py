"""Expected SNR for quantum-dot single photons sent into the memory.

The noise floor is calibrated once from a weak-coherent measurement
(mean photon number, internal efficiency, SNR) and held fixed. The
memory's spectral acceptance window is scaled so that its overlap with the
calibration probe spectrum equals the measured internal efficiency; the
same window then weighs the broadened quantum-dot spectrum.

Photon spectra are Gaussian with FWHM sqrt(gamma_hom^2 + gamma_inhom^2),
centred on the window. Values are upper bounds and labelled so.
"""
from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence, Union

import numpy as np

from .spectral import (
    SpectralCurve,
    delta_curve,
    expected_efficiency,
    gaussian_curve,
    resample,
    uniform_grid,
)
from .traces import DetectionChain

SNR_LABEL = "snr_upper_bound"
SPECTRUM_MODEL = "gaussian, fwhm = sqrt(gamma_hom^2 + gamma_inhom^2), centred on window"
# signal-laser linewidth of the calibration measurement (MHz)
DEFAULT_PROBE_LINEWIDTH = 440.0
# grid points per FWHM of the narrowest of window and probe
_POINTS_PER_FWHM = 40
# half-span of the grid in units of the widest FWHM involved
_SPAN_FWHM = 8.0

Window = Union[SpectralCurve, float]


@dataclass(frozen=True)
class SourceBenchmarkScenario:
    eta_src: float
    eta_T: float = 0.01
    eta_P: float = 0.5
    eta_qd_mem: float = 0.66
    gamma_hom_qd: float = 400.0  # MHz
    gamma_inhom: float = 0.0  # MHz
    repetition_rate: float = 10e6  # Hz

    def __post_init__(self):
        for name in ("eta_src", "eta_T", "eta_P", "eta_qd_mem"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.gamma_hom_qd < 0 or self.gamma_inhom < 0:
            raise ValueError("linewidths must be >= 0")
        if not self.repetition_rate > 0:
            raise ValueError("repetition_rate must be > 0")

    @property
    def photon_linewidth(self) -> float:
        return math.hypot(self.gamma_hom_qd, self.gamma_inhom)

    def transmission_product(self) -> float:
        return self.eta_T * self.eta_P * self.eta_qd_mem


@dataclass(frozen=True)
class NoiseCalibration:
    noise_counts_per_pulse: float
    mean_photon_number: float
    eta_int_ref: float
    snr_ref: float
    chain: DetectionChain
    probe_linewidth_mhz: float = DEFAULT_PROBE_LINEWIDTH

    def __post_init__(self):
        if self.noise_counts_per_pulse < 0:
            raise ValueError("noise_counts_per_pulse must be >= 0")
        if not self.probe_linewidth_mhz >= 0:
            raise ValueError("probe_linewidth_mhz must be >= 0")

    def provenance(self) -> dict:
        d = asdict(self)
        d["chain"] = asdict(self.chain)
        return d


def calibrate_noise(mean_photons: float, eta_int_ref: float, chain: DetectionChain, snr_ref: float,
                    probe_linewidth: float = DEFAULT_PROBE_LINEWIDTH) -> NoiseCalibration:
    """Noise counts per pulse in the retrieval window implied by a measured SNR."""
    if not snr_ref > 0:
        raise ValueError(f"snr_ref must be > 0, got {snr_ref}")
    if mean_photons < 0 or eta_int_ref < 0:
        raise ValueError("mean_photons and eta_int_ref must be >= 0")
    noise = mean_photons * eta_int_ref * chain.setup_transmission * chain.detector_efficiency / snr_ref
    return NoiseCalibration(noise, mean_photons, eta_int_ref, snr_ref, chain, probe_linewidth)


def calibration_scenario(cal: NoiseCalibration) -> SourceBenchmarkScenario:
    """The weak-coherent reference measurement expressed as a scenario."""
    return SourceBenchmarkScenario(
        eta_src=min(cal.mean_photon_number, 1.0), eta_T=1.0, eta_P=1.0, eta_qd_mem=1.0,
        gamma_hom_qd=cal.probe_linewidth_mhz, gamma_inhom=0.0,
    )


def _window_on_grid(window: Window, probe: float, max_linewidth: float) -> SpectralCurve:
    if isinstance(window, SpectralCurve):
        h = window.spacing
        reach = max(abs(window.detuning[0]), abs(window.detuning[-1]))
        half = max(reach, _SPAN_FWHM * max(probe, max_linewidth))
        grid = uniform_grid(half, h)
        if len(grid) == len(window) and np.allclose(grid, window.detuning, rtol=0, atol=1e-9 * h):
            return window
        return resample(window, grid)
    w = float(window)
    if not w > 0:
        raise ValueError(f"window FWHM must be > 0, got {w}")
    narrow = min(w, probe) if probe > 0 else w
    half = _SPAN_FWHM * max(w, probe, max_linewidth)
    return gaussian_curve(uniform_grid(half, narrow / _POINTS_PER_FWHM), w)


def _photon_spectrum(m: SpectralCurve, fwhm: float, center: float) -> SpectralCurve:
    if fwhm == 0:
        return delta_curve(m.detuning, center)
    s = gaussian_curve(m.detuning, fwhm, center=center)
    # normalize on the grid, so narrow lines below the grid spacing stay unit-area
    return s.with_values(s.values / s.area())


class _Evaluator:
    """Per-linewidth spectral efficiency on one fixed grid."""

    def __init__(self, window: Window, cal: NoiseCalibration, max_linewidth: float):
        self.m = _window_on_grid(window, cal.probe_linewidth_mhz, max_linewidth)
        self.center = self.m.centroid()
        self.cal = cal
        ref = self._overlap(cal.probe_linewidth_mhz)
        if not ref > 0:
            raise ValueError("window has no overlap with the calibration probe spectrum")
        self.ref = ref

    def _overlap(self, fwhm: float) -> float:
        return expected_efficiency(self.m, _photon_spectrum(self.m, fwhm, self.center), center=False)

    def spectral_efficiency(self, fwhm: float) -> float:
        return self.cal.eta_int_ref * (self._overlap(fwhm) / self.ref)

    def snr_per_source_efficiency(self, scn: SourceBenchmarkScenario, chain: DetectionChain) -> float:
        eta_spec = self.spectral_efficiency(scn.photon_linewidth)
        signal = scn.transmission_product() * eta_spec * chain.setup_transmission * chain.detector_efficiency
        noise = self.cal.noise_counts_per_pulse
        if noise == 0:
            return math.inf if signal > 0 else 0.0
        return signal / noise


def spectral_efficiency(scn: SourceBenchmarkScenario, window: Window, cal: NoiseCalibration) -> float:
    """Internal memory efficiency for the scenario's photon spectrum."""
    ev = _Evaluator(window, cal, scn.photon_linewidth)
    return ev.spectral_efficiency(scn.photon_linewidth)


def expected_snr(scn: SourceBenchmarkScenario, window: Window, cal: NoiseCalibration,
                 chain: DetectionChain | None = None) -> float:
    """Retrieved signal counts per pulse over the calibrated noise counts per pulse.

    *window* is either a sampled acceptance window (any normalization) or
    the FWHM in MHz of a Gaussian one. *chain* defaults to the calibration's.
    """
    chain = chain or cal.chain
    ev = _Evaluator(window, cal, scn.photon_linewidth)
    return scn.eta_src * ev.snr_per_source_efficiency(scn, chain)


@dataclass
class SnrGrid:
    eta_src: np.ndarray
    gamma_inhom: np.ndarray
    snr: np.ndarray  # shape (len(eta_src), len(gamma_inhom))
    base: SourceBenchmarkScenario
    window: str
    calibration: NoiseCalibration
    meta: dict = field(default_factory=dict)

    def metadata(self) -> dict:
        d = {k: v for k, v in asdict(self.base).items() if k not in ("eta_src", "gamma_inhom")}
        d.update(
            quantity=SNR_LABEL,
            photon_spectrum=SPECTRUM_MODEL,
            window=self.window,
            noise_counts_per_pulse=self.calibration.noise_counts_per_pulse,
            cal_mean_photon_number=self.calibration.mean_photon_number,
            cal_eta_int=self.calibration.eta_int_ref,
            cal_snr=self.calibration.snr_ref,
            cal_probe_linewidth_mhz=self.calibration.probe_linewidth_mhz,
            setup_transmission=self.calibration.chain.setup_transmission,
            detector_efficiency=self.calibration.chain.detector_efficiency,
        )
        d.update(self.meta)
        return d

    def to_csv(self) -> str:
        buf = io.StringIO()
        for k, v in self.metadata().items():
            buf.write(f"# {k}={v!r}\n" if isinstance(v, float) else f"# {k}={v}\n")
        buf.write(f"{SNR_LABEL}," + ",".join(repr(float(g)) for g in self.gamma_inhom) + "\n")
        for e, row in zip(self.eta_src, self.snr):
            buf.write(repr(float(e)) + "," + ",".join(repr(float(v)) for v in row) + "\n")
        return buf.getvalue()


def _window_label(window: Window) -> str:
    if isinstance(window, SpectralCurve):
        return f"sampled curve, {len(window)} points, spacing {window.spacing!r} MHz"
    return f"gaussian, fwhm {float(window)!r} MHz"


def snr_grid(eta_src: Sequence[float], gamma_inhom: Sequence[float], base: SourceBenchmarkScenario,
             window: Window, cal: NoiseCalibration, chain: DetectionChain | None = None,
             workers: int = 1) -> SnrGrid:
    """expected_snr over source efficiency (rows) and inhomogeneous linewidth (columns).

    All points share one detuning grid. Columns may be evaluated on several
    threads; each is a pure function of its linewidth, so the result does not
    depend on *workers*.
    """
    e = np.asarray(eta_src, dtype=float)
    g = np.asarray(gamma_inhom, dtype=float)
    if e.ndim != 1 or g.ndim != 1 or e.size == 0 or g.size == 0:
        raise ValueError("eta_src and gamma_inhom ranges must be non-empty 1-D sequences")
    chain = chain or cal.chain
    scns = [SourceBenchmarkScenario(**{**asdict(base), "eta_src": 0.0, "gamma_inhom": float(x)}) for x in g]
    for x in e:  # validates the range
        SourceBenchmarkScenario(**{**asdict(base), "eta_src": float(x)})
    ev = _Evaluator(window, cal, max(s.photon_linewidth for s in scns))

    def column(s):
        return ev.snr_per_source_efficiency(s, chain)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            per = np.array(list(ex.map(column, scns)))
    else:
        per = np.array([column(s) for s in scns])
    return SnrGrid(e, g, e[:, None] * per[None, :], base, _window_label(window), cal)
