"""Expected SNR for quantum-dot photons stored in the memory.

The noise floor comes from the weak-coherent measurement (0.06 photons per
pulse, internal efficiency 0.15, SNR 830) and stays fixed while the photon
linewidth grows.
"""
import numpy as np

from laddermem.benchmark import SourceBenchmarkScenario, calibrate_noise, snr_grid
from laddermem.traces import DetectionChain

cal = calibrate_noise(0.06, 0.15, DetectionChain(0.147, 0.85), 830.0)
print(f"calibrated noise: {cal.noise_counts_per_pulse:.3e} counts/pulse")

base = SourceBenchmarkScenario(eta_src=0.57)
gam = np.array([0.0, 500.0, 1000.0, 2000.0, 3000.0])
g = snr_grid([0.1, 0.3, 0.57, 1.0], gam, base, 560.0, cal)
print("\nSNR upper bound (rows: source efficiency, columns: inhomogeneous width in MHz)")
print("eta_src " + "".join(f"{x:9.0f}" for x in gam))
for e, row in zip(g.eta_src, g.snr):
    print(f"{e:7.2f} " + "".join(f"{v:9.2f}" for v in row))
