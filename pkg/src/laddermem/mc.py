"""Monte-Carlo motional dephasing of a spinwave grating.

Each atom carries a velocity along the beam axis drawn from the 1-D
Maxwell-Boltzmann distribution and accumulates the phase dk * v * t. The
retrieval efficiency is the squared modulus of the ensemble mean of the
(optionally multi-component) phase factor.

Random numbers come from numpy's Philox counter-based generator. Atoms are
split into fixed-size chunks; chunk ``k`` draws from the substream
``SeedSequence(seed, spawn_key=(k,))``. Chunk sums are reduced in chunk
order, so results are bit-identical for any number of workers.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .spinwave import (
    HyperfineSplittings,
    SpinwaveGeometry,
    SpinwaveModelParams,
    efficiency_at,
    wavevector_mismatch,
)
from .vapor import VaporConditions, thermal_velocity

RNG_ALGORITHM = "numpy.random.Philox(SeedSequence(seed, spawn_key=(chunk,)))"


@dataclass
class McConfig:
    n_atoms: int
    seed: int
    vapor: VaporConditions
    geometry: SpinwaveGeometry
    times: Sequence[float]  # ns
    storage_components: Optional[Sequence[tuple[float, float]]] = None  # (amplitude, offset MHz)
    chunk_size: int = 16384
    workers: int = 1

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.n_atoms < 1:
            raise ValueError("n_atoms must be >= 1")
        if self.times.size and (self.times[0] < 0 or np.any(np.diff(self.times) <= 0)):
            raise ValueError("times must be non-negative and strictly increasing")
        if self.chunk_size < 1 or self.workers < 1:
            raise ValueError("chunk_size and workers must be >= 1")


@dataclass
class McResult:
    t: np.ndarray
    efficiency: np.ndarray
    stderr: np.ndarray
    meta: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t_ns", "efficiency", "stderr"])
        for row in zip(self.t, self.efficiency, self.stderr):
            w.writerow([repr(float(x)) for x in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "McResult":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0] != ["t_ns", "efficiency", "stderr"]:
            raise ValueError("line 1: expected header 't_ns,efficiency,stderr'")
        data = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float).reshape(-1, 3)
        return cls(data[:, 0], data[:, 1], data[:, 2])


def components_from_model(p: SpinwaveModelParams, hf: HyperfineSplittings):
    """(amplitude, offset) pairs reproducing the model's beating term."""
    return list(zip((1.0, p.a, p.b, p.c, p.d), hf.offsets().tolist()))


def gaussian_decay_time(cfg: McConfig) -> float:
    """1/e time (ns) of the single-component ensemble efficiency, 1/(dk v_th)."""
    rate = wavevector_mismatch(cfg.geometry) * thermal_velocity(cfg.vapor)
    return math.inf if rate == 0 else 1e9 / rate


def _chunk_sums(seed, k, n, v_th, dk, t_s):
    bitgen = np.random.Philox(np.random.SeedSequence(seed, spawn_key=(k,)))
    v = np.random.Generator(bitgen).normal(0.0, 1.0, n) * v_th
    phase = np.outer(v * dk, t_s)
    c, s = np.cos(phase), np.sin(phase)
    return np.stack([c.sum(0), s.sum(0), (c * c).sum(0), (s * s).sum(0), (c * s).sum(0)])


def simulate_decay(cfg: McConfig) -> McResult:
    """Ensemble retrieval efficiency versus storage time, with delta-method stderr."""
    t = cfg.times
    meta = {"rng": RNG_ALGORITHM, "seed": cfg.seed, "n_atoms": cfg.n_atoms}
    if t.size == 0:
        return McResult(t, np.empty(0), np.empty(0), meta)

    v_th = thermal_velocity(cfg.vapor)
    dk = wavevector_mismatch(cfg.geometry)
    t_s = t * 1e-9
    sizes = [cfg.chunk_size] * (cfg.n_atoms // cfg.chunk_size)
    if cfg.n_atoms % cfg.chunk_size:
        sizes.append(cfg.n_atoms % cfg.chunk_size)
    jobs = [(cfg.seed, k, n, v_th, dk, t_s) for k, n in enumerate(sizes)]

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as ex:
            parts = list(ex.map(lambda a: _chunk_sums(*a), jobs))
    else:
        parts = [_chunk_sums(*a) for a in jobs]
    tot = parts[0].copy()
    for part in parts[1:]:
        tot += part

    n = cfg.n_atoms
    mc, ms = tot[0] / n, tot[1] / n
    var_c = np.maximum(tot[2] / n - mc * mc, 0.0)
    var_s = np.maximum(tot[3] / n - ms * ms, 0.0)
    cov = tot[4] / n - mc * ms

    if cfg.storage_components:
        amps = np.array([a for a, _ in cfg.storage_components], dtype=float)
        offs = np.array([f for _, f in cfg.storage_components], dtype=float)
        beat = (amps[:, None] * np.exp(2j * np.pi * 1e-3 * offs[:, None] * t[None, :])).sum(0)
        beat2 = np.abs(beat) ** 2 / amps.sum() ** 2
    else:
        beat2 = np.ones_like(t)

    eff = beat2 * (mc * mc + ms * ms)
    var = 4.0 * (mc * mc * var_c + ms * ms * var_s + 2.0 * mc * ms * cov) / n
    stderr = beat2 * np.sqrt(np.maximum(var, 0.0))
    return McResult(t.copy(), eff, stderr, meta)


@dataclass
class Comparison:
    deviation: np.ndarray
    max_abs: float
    rms: float

    def as_dict(self) -> dict:
        return {"max_abs_deviation": self.max_abs, "rms_deviation": self.rms}


def compare_curves(t_a, y_a, t_b, y_b) -> Comparison:
    """Pointwise and RMS deviation of two curves, each normalized to its first point."""
    t_a, t_b = np.asarray(t_a, float), np.asarray(t_b, float)
    if t_a.shape != t_b.shape or not np.allclose(t_a, t_b, rtol=1e-12, atol=1e-12):
        raise ValueError("time grids do not match")
    ya = np.asarray(y_a, float) / y_a[0]
    yb = np.asarray(y_b, float) / y_b[0]
    dev = ya - yb
    return Comparison(dev, float(np.max(np.abs(dev))), float(np.sqrt(np.mean(dev**2))))


def compare_to_model(mc: McResult, p: SpinwaveModelParams, hf: HyperfineSplittings) -> Comparison:
    return compare_curves(mc.t, mc.efficiency, mc.t, efficiency_at(mc.t, p, hf))


def matching_model(cfg: McConfig, amplitudes=(0.0, 0.0, 0.0, 0.0)) -> SpinwaveModelParams:
    """Model parameters with the homogeneous decay disabled and the Gaussian
    time set to the MC dephasing time, for direct comparison."""
    tau = gaussian_decay_time(cfg)
    return SpinwaveModelParams(1.0, tau, tau, 0.0, *amplitudes)
