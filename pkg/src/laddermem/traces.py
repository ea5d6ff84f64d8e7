"""Photon-counting storage traces: histogram I/O, window integration,
efficiencies, SNR and a synthetic trace generator.

Times are in ns. Every count error is Poisson (sqrt of the count) and
ratios use first-order error propagation.
"""
from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import ndtr

from .spinwave import HyperfineSplittings, SpinwaveModelParams, efficiency_at

log = logging.getLogger(__name__)

ROLES = ("signal", "reference", "noise")
# 95 % CL upper limit on a Poisson mean after observing zero counts
ZERO_COUNT_UPPER_LIMIT = -math.log(0.05)


class HistogramFormatError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class UndefinedEfficiencyError(ValueError):
    """An efficiency ratio has a zero denominator."""


class InconsistentReferenceError(ValueError):
    """Leakage exceeds the reference input counts."""


@dataclass
class Histogram:
    bin_width: float  # ns
    start_time: float  # ns
    counts: np.ndarray
    role: str = "signal"
    integration_time: float = 1.0  # s
    repetition_rate: float = 10e6  # Hz
    mean_photon_number: Optional[float] = None

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        if self.counts.ndim != 1:
            raise ValueError("counts must be one-dimensional")
        if not np.issubdtype(self.counts.dtype, np.integer):
            if not np.all(self.counts == np.round(self.counts)):
                raise ValueError("counts must be integers")
            self.counts = self.counts.astype(np.int64)
        if not self.bin_width > 0:
            raise ValueError("bin_width must be > 0")
        if np.any(self.counts < 0):
            raise ValueError("counts must be >= 0")
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        if not (self.integration_time > 0 and self.repetition_rate > 0):
            raise ValueError("integration_time and repetition_rate must be > 0")

    @property
    def edges(self) -> np.ndarray:
        return self.start_time + self.bin_width * np.arange(self.counts.size + 1)

    @property
    def centers(self) -> np.ndarray:
        return self.start_time + self.bin_width * (np.arange(self.counts.size) + 0.5)

    @property
    def end_time(self) -> float:
        return self.start_time + self.bin_width * self.counts.size

    def to_csv(self) -> str:
        lines = [
            f"# bin_width_ns={self.bin_width!r}",
            f"# start_time_ns={self.start_time!r}",
            f"# role={self.role}",
            f"# integration_time_s={self.integration_time!r}",
            f"# repetition_rate_hz={self.repetition_rate!r}",
        ]
        if self.mean_photon_number is not None:
            lines.append(f"# mean_photon_number={self.mean_photon_number!r}")
        lines.extend(str(int(c)) for c in self.counts)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "Histogram":
        floats = {
            "bin_width_ns": "bin_width",
            "start_time_ns": "start_time",
            "integration_time_s": "integration_time",
            "repetition_rate_hz": "repetition_rate",
            "mean_photon_number": "mean_photon_number",
        }
        kw: dict = {}
        counts = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                if counts:
                    raise HistogramFormatError("header line after count data", lineno)
                key, sep, val = line[1:].partition("=")
                key, val = key.strip(), val.strip()
                if not sep:
                    raise HistogramFormatError(f"malformed header {line!r}", lineno)
                if key == "role":
                    kw["role"] = val
                elif key in floats:
                    try:
                        kw[floats[key]] = float(val)
                    except ValueError:
                        raise HistogramFormatError(f"non-numeric value for {key}: {val!r}", lineno) from None
                else:
                    raise HistogramFormatError(f"unknown header key {key!r}", lineno)
                continue
            try:
                c = int(line)
            except ValueError:
                raise HistogramFormatError(f"expected an integer count, got {line!r}", lineno) from None
            if c < 0:
                raise HistogramFormatError(f"negative count {c}", lineno)
            counts.append(c)
        for key in ("bin_width_ns", "start_time_ns", "role", "integration_time_s", "repetition_rate_hz"):
            if floats.get(key, key) not in kw:
                raise HistogramFormatError(f"missing header '# {key}=...'")
        try:
            return cls(counts=np.array(counts, dtype=np.int64), **kw)
        except ValueError as exc:
            raise HistogramFormatError(str(exc)) from None


@dataclass(frozen=True)
class WindowSpec:
    read_in: tuple
    read_out: tuple
    noise: Optional[tuple] = None

    def __post_init__(self):
        for name in ("read_in", "read_out", "noise"):
            w = getattr(self, name)
            if w is None:
                continue
            if len(w) != 2 or not w[0] < w[1]:
                raise ValueError(f"{name} window must be (t_lo, t_hi) with t_lo < t_hi")
        if self.read_in[1] > self.read_out[0] and self.read_out[1] > self.read_in[0]:
            raise ValueError("read-in and read-out windows overlap")


@dataclass(frozen=True)
class DetectionChain:
    setup_transmission: float
    detector_efficiency: float = 0.85

    def __post_init__(self):
        for name in ("setup_transmission", "detector_efficiency"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name} must be in (0, 1], got {v}")


class Measurement(NamedTuple):
    value: float
    error: float


class SplitEfficiencies(NamedTuple):
    eta_in: Measurement
    eta_out: Measurement
    eta_int: Measurement


class SNRResult(NamedTuple):
    value: float
    error: float
    lower_bound: bool = False  # True when no noise counts were seen


def integrate_window(h: Histogram, window) -> Measurement:
    """Counts in [t_lo, t_hi); partially covered bins count by their overlap fraction."""
    lo, hi = float(window[0]), float(window[1])
    if not lo < hi:
        raise ValueError("window must have t_lo < t_hi")
    tol = 1e-9 * h.bin_width
    if lo < h.start_time - tol or hi > h.end_time + tol:
        raise ValueError(
            f"window ({lo}, {hi}) ns outside histogram support ({h.start_time}, {h.end_time}) ns"
        )
    e = h.edges
    frac = np.clip(np.minimum(e[1:], hi) - np.maximum(e[:-1], lo), 0.0, None) / h.bin_width
    total = float(frac @ h.counts)
    return Measurement(total, math.sqrt(total))


def _noise_scale(signal: Histogram, noise: Histogram, window, noise_window=None) -> float:
    """Factor turning noise-histogram counts into expected counts in *window*
    at the signal's integration time."""
    scale = signal.integration_time / noise.integration_time
    if noise_window is not None:
        scale *= (window[1] - window[0]) / (noise_window[1] - noise_window[0])
    return scale


def _noise_estimate(signal: Histogram, noise: Optional[Histogram], window, noise_window=None):
    """Expected noise counts (and variance) in *window*."""
    if noise is None:
        return 0.0, 0.0
    n, _ = integrate_window(noise, noise_window if noise_window is not None else window)
    k = _noise_scale(signal, noise, window, noise_window)
    return n * k, n * k * k


def _scaled(h: Histogram, window, to: Histogram):
    n, _ = integrate_window(h, window)
    s = to.integration_time / h.integration_time
    return n * s, n * s * s


def _ratio(num, var_num, den, var_den):
    value = num / den
    err = math.sqrt(var_num / den**2 + num**2 * var_den / den**4)
    return Measurement(value, err)


def _check_range(name, value):
    if not 0.0 <= value <= 1.0:
        log.warning("%s = %.6g lies outside [0, 1]; inputs are inconsistent", name, value)


def _counts(signal, reference, w, noise, noise_from):
    nw = w.noise if noise_from == "noise_window" else None
    if noise_from == "noise_window" and nw is None:
        raise ValueError("noise_from='noise_window' needs a noise window in the WindowSpec")
    n_in, var_in = _scaled(reference, w.read_in, signal)
    s_ro, _ = integrate_window(signal, w.read_out)
    bg_ro, var_bg_ro = _noise_estimate(signal, noise, w.read_out, nw)
    s_ri, _ = integrate_window(signal, w.read_in)
    bg_ri, var_bg_ri = _noise_estimate(signal, noise, w.read_in, nw)
    return {
        "n_in": (n_in, var_in),
        "n_ret": (s_ro - bg_ro, s_ro + var_bg_ro),
        "n_leak": (s_ri - bg_ri, s_ri + var_bg_ri),
    }


def internal_efficiency(signal: Histogram, reference: Histogram, w: WindowSpec,
                        noise: Optional[Histogram] = None, noise_from: str = "read_out") -> Measurement:
    """N_ret / N_in with N_ret noise-subtracted when a noise histogram is given.

    *noise_from* selects where the noise rate comes from: the read-out
    window of the noise histogram (default) or its dedicated noise window.
    """
    c = _counts(signal, reference, w, noise, noise_from)
    n_in, var_in = c["n_in"]
    n_ret, var_ret = c["n_ret"]
    if n_in == 0:
        raise UndefinedEfficiencyError("reference has no counts in the read-in window")
    m = _ratio(n_ret, var_ret, n_in, var_in)
    _check_range("eta_int", m.value)
    return m


def split_efficiencies(signal: Histogram, reference: Histogram, w: WindowSpec,
                       noise: Optional[Histogram] = None, noise_from: str = "read_out") -> SplitEfficiencies:
    """Read-in, read-out and internal efficiency; eta_in * eta_out == eta_int.

    Leakage N_leak is the signal count in the read-in window (noise-subtracted
    like N_ret).
    """
    c = _counts(signal, reference, w, noise, noise_from)
    n_in, var_in = c["n_in"]
    n_ret, var_ret = c["n_ret"]
    n_leak, var_leak = c["n_leak"]
    if n_in == 0:
        raise UndefinedEfficiencyError("reference has no counts in the read-in window")
    if n_leak > n_in:
        raise InconsistentReferenceError(
            f"leakage ({n_leak:.6g}) exceeds reference input ({n_in:.6g}) counts"
        )
    stored = n_in - n_leak
    if stored == 0:
        raise UndefinedEfficiencyError("nothing stored (N_leak == N_in): read-out efficiency undefined")
    leak = _ratio(n_leak, var_leak, n_in, var_in)
    eta_in = Measurement(1.0 - leak.value, leak.error)
    eta_out = _ratio(n_ret, var_ret, stored, var_in + var_leak)
    eta_int = _ratio(n_ret, var_ret, n_in, var_in)
    for name, m in (("eta_in", eta_in), ("eta_out", eta_out), ("eta_int", eta_int)):
        _check_range(name, m.value)
    return SplitEfficiencies(eta_in, eta_out, eta_int)


def snr(signal: Histogram, noise: Histogram, w: WindowSpec, noise_from: str = "read_out") -> SNRResult:
    """Raw read-out-window signal counts over noise counts at equal integration time."""
    nw = w.noise if noise_from == "noise_window" else None
    if noise_from == "noise_window" and nw is None:
        raise ValueError("noise_from='noise_window' needs a noise window in the WindowSpec")
    s, _ = integrate_window(signal, w.read_out)
    n, var_n = _noise_estimate(signal, noise, w.read_out, nw)
    if n == 0:
        limit = ZERO_COUNT_UPPER_LIMIT * _noise_scale(signal, noise, w.read_out, nw)
        return SNRResult(s / limit, math.nan, True)
    value = s / n
    err = value * math.sqrt((1.0 / s if s > 0 else 0.0) + var_n / n**2)
    return SNRResult(value, err, False)


def end_to_end(eta_int: float, chain: DetectionChain) -> float:
    """eta_int times the setup transmission."""
    return eta_int * chain.setup_transmission


# --- windows ----------------------------------------------------------------

def threshold_halfwidth(pulse_fwhm: float, threshold: float = 0.1) -> float:
    """Half-width at which a Gaussian of FWHM *pulse_fwhm* falls to *threshold* of its peak."""
    return 0.5 * pulse_fwhm * math.sqrt(math.log(1.0 / threshold) / math.log(2.0))


def _peak_window(h: Histogram, lo_limit: float, threshold: float):
    c = h.counts.astype(float)
    t = h.centers
    sel = t > lo_limit
    base = float(np.median(c))
    y = np.where(sel, c - base, -np.inf)
    i = int(np.argmax(y))
    level = threshold * y[i]
    j = i
    while j > 0 and sel[j - 1] and y[j - 1] >= level:
        j -= 1
    k = i
    while k < c.size - 1 and y[k + 1] >= level:
        k += 1

    def cross(a, b):
        # linear interpolation between bin centres a (above) and b (below)
        if b < 0 or b >= c.size or not np.isfinite(y[b]):
            return h.edges[a] if b < a else h.edges[a + 1]
        return t[a] + (t[b] - t[a]) * (y[a] - level) / (y[a] - y[b])

    return cross(j, j - 1), cross(k, k + 1)


def default_windows(signal: Histogram, reference: Histogram, threshold: float = 0.1) -> WindowSpec:
    """Read-in window around the reference peak and read-out window around the
    latest signal peak, both cut at *threshold* of the peak height above the
    median floor. The noise window is the largest remaining gap."""
    ri = _peak_window(reference, -math.inf, threshold)
    ro = _peak_window(signal, ri[1], threshold)
    gaps = [(signal.start_time, ri[0]), (ri[1], ro[0]), (ro[1], signal.end_time)]
    g = max(gaps, key=lambda ab: ab[1] - ab[0])
    margin = signal.bin_width
    noise = (g[0] + margin, g[1] - margin) if g[1] - g[0] > 3 * margin else None
    return WindowSpec(tuple(map(float, ri)), tuple(map(float, ro)),
                      tuple(map(float, noise)) if noise else None)


# --- synthesis --------------------------------------------------------------

def expected_bin_fractions(h_edges, center: float, fwhm: float) -> np.ndarray:
    sigma = fwhm / (2.0 * math.sqrt(2.0 * math.log(2.0)))
    return np.diff(ndtr((h_edges - center) / sigma))


def noise_rate_for_snr(target_snr: float, retrieved_counts: float, window_width: float,
                       integration_time: float, repetition_rate: float) -> float:
    """Flat noise rate (counts/s) giving *target_snr* for *retrieved_counts*
    inside a read-out window of *window_width* ns, with SNR defined on raw
    (not noise-subtracted) window counts."""
    if not target_snr > 1:
        raise ValueError("target SNR must exceed 1 (SNR counts the noise in the numerator)")
    n_window = retrieved_counts / (target_snr - 1.0)
    per_ns = n_window / window_width
    return per_ns / (integration_time * repetition_rate * 1e-9)


def synthesize_trace(
    model: SpinwaveModelParams,
    hf: HyperfineSplittings,
    pulse_fwhm: float,
    retrieval_time: float,
    mean_photons: float,
    noise_rate: float,
    chain: DetectionChain,
    integration_time: float,
    repetition_rate: float,
    seed: int,
    *,
    read_in_efficiency: float = 0.5,
    read_in_time: float = 5.0,
    bin_width: float = 0.1,
    span: Optional[float] = None,
) -> tuple[Histogram, Histogram, Histogram]:
    """Poisson-sampled (signal, reference, noise) histograms of one storage experiment.

    The reference is the unstored input pulse at *read_in_time*. The signal
    holds the read-in leak, the retrieved pulse at ``read_in_time +
    retrieval_time`` with internal efficiency ``efficiency_at(retrieval_time)``,
    and a flat noise floor of *noise_rate* counts/s spread over the
    repetition period. The noise trace is the floor alone.
    """
    if mean_photons < 0 or noise_rate < 0:
        raise ValueError("mean_photons and noise_rate must be >= 0")
    if not 0 <= read_in_efficiency <= 1:
        raise ValueError("read_in_efficiency must be in [0, 1]")
    eta = float(efficiency_at(retrieval_time, model, hf))
    if eta > read_in_efficiency:
        raise ValueError(
            f"internal efficiency {eta:.4g} exceeds read-in efficiency {read_in_efficiency:.4g}"
        )
    if span is None:
        span = read_in_time + retrieval_time + max(10.0 * pulse_fwhm, 15.0)
    nbins = int(math.ceil(span / bin_width - 1e-9))
    edges = bin_width * np.arange(nbins + 1)

    n_in = mean_photons * repetition_rate * integration_time * chain.setup_transmission * chain.detector_efficiency
    f_in = expected_bin_fractions(edges, read_in_time, pulse_fwhm)
    f_out = expected_bin_fractions(edges, read_in_time + retrieval_time, pulse_fwhm)
    floor = noise_rate * integration_time * bin_width * 1e-9 * repetition_rate

    mu_ref = n_in * f_in
    mu_sig = n_in * (1.0 - read_in_efficiency) * f_in + n_in * eta * f_out + floor
    mu_noise = np.full(nbins, floor)

    streams = np.random.SeedSequence(seed).spawn(3)
    out = []
    for role, mu, ss in zip(("signal", "reference", "noise"), (mu_sig, mu_ref, mu_noise), streams):
        rng = np.random.Generator(np.random.Philox(ss))
        out.append(Histogram(bin_width, 0.0, rng.poisson(mu), role, integration_time,
                             repetition_rate, mean_photons if role != "noise" else None))
    return tuple(out)


def analyze(signal: Histogram, reference: Histogram, noise: Optional[Histogram],
            w: WindowSpec, chain: Optional[DetectionChain] = None) -> dict:
    """All figures of merit as a plain dict (JSON-ready)."""
    split = split_efficiencies(signal, reference, w, noise)
    rep = {
        "windows_ns": {"read_in": list(w.read_in), "read_out": list(w.read_out),
                       "noise": list(w.noise) if w.noise else None},
        "eta_in": split.eta_in._asdict(),
        "eta_out": split.eta_out._asdict(),
        "eta_int": split.eta_int._asdict(),
    }
    if chain is not None:
        rep["eta_e2e"] = {
            "value": end_to_end(split.eta_int.value, chain),
            "error": split.eta_int.error * chain.setup_transmission,
        }
    if noise is not None:
        rep["snr"] = snr(signal, noise, w)._asdict()
        if w.noise is not None:
            rep["snr_noise_window"] = snr(signal, noise, w, noise_from="noise_window")._asdict()
            rep["eta_int_noise_window"] = internal_efficiency(
                signal, reference, w, noise, noise_from="noise_window")._asdict()
    return rep
