"""From photon-arrival histograms to efficiency and SNR.

Synthesizes signal, reference and noise histograms at the measured
operating point, then analyzes them the way a lab trace would be.
"""
import math

from laddermem.spinwave import TABLE_PARAMS, HyperfineSplittings, with_efficiency_at
from laddermem.traces import (
    DetectionChain,
    analyze,
    default_windows,
    noise_rate_for_snr,
    synthesize_trace,
    threshold_halfwidth,
)

hf = HyperfineSplittings.cesium_6d32()
chain = DetectionChain(setup_transmission=0.147, detector_efficiency=0.85)
model = with_efficiency_at(TABLE_PARAMS, hf, 17.4, 0.15)

hw = threshold_halfwidth(0.8)
n_in = 0.06 * 1e7 * 10 * chain.setup_transmission * chain.detector_efficiency
frac = math.erf(hw / (0.8 / (2 * math.sqrt(2 * math.log(2)))) / math.sqrt(2))
rate = noise_rate_for_snr(830.0, n_in * 0.15 * frac, 2 * hw, 10.0, 1e7)
print(f"noise rate for SNR 830: {rate:.1f} counts/s")

sig, ref, noise = synthesize_trace(model, hf, 0.8, 17.4, 0.06, rate, chain, 10.0, 1e7, seed=3,
                                   read_in_efficiency=0.6, span=40.0)
w = default_windows(sig, ref)
print(f"read-in window  {w.read_in[0]:.2f}..{w.read_in[1]:.2f} ns")
print(f"read-out window {w.read_out[0]:.2f}..{w.read_out[1]:.2f} ns")

rep = analyze(sig, ref, noise, w, chain)
for key in ("eta_int", "eta_in", "eta_out", "eta_e2e", "snr"):
    m = rep[key]
    print(f"{key:8s} {m['value']:10.4f} +/- {m['error']:.4f}")
