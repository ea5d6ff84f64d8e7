"""Motional dephasing in a warm cesium ladder memory.

Walks from the cell temperature to the spinwave wavelength, the thermal
velocity and the dephasing time, then checks a Monte Carlo ensemble of
moving atoms against the closed-form Gaussian decay.
"""
import numpy as np

from laddermem.mc import McConfig, gaussian_decay_time, simulate_decay
from laddermem.spinwave import (
    TABLE_PARAMS,
    HyperfineSplittings,
    SpinwaveGeometry,
    efficiency_at,
    envelope_one_over_e_time,
    inhomogeneous_dephasing_time,
    one_over_e_time,
    spinwave_wavelength,
)
from laddermem.vapor import celsius_to_kelvin, cesium_coefficients, cesium_conditions, number_density, thermal_velocity

cond = cesium_conditions(celsius_to_kelvin(60.0))
geom = SpinwaveGeometry.cesium_ladder()
lam = spinwave_wavelength(geom)
v_th = thermal_velocity(cond)
print(f"cell at {cond.temperature:.2f} K, n = {number_density(cond, cesium_coefficients()):.3e} m^-3")
print(f"spinwave wavelength  {lam:.2f} um (co-propagating: "
      f"{spinwave_wavelength(SpinwaveGeometry.cesium_ladder('co')):.4f} um)")
print(f"thermal velocity     {v_th:.2f} m/s")
print(f"T_inhom              {inhomogeneous_dephasing_time(lam, v_th):.2f} ns")

# %% Monte Carlo against the Gaussian characteristic function
t = np.arange(0.0, 80.5, 4.0)
mc_cfg = McConfig(n_atoms=100_000, seed=1, vapor=cond, geometry=geom, times=t)
res = simulate_decay(mc_cfg)
tau = gaussian_decay_time(mc_cfg)
print(f"\nMC Gaussian 1/e time {tau:.2f} ns")
print(" t_ns    MC       exp(-(t/tau)^2)")
for ti, y in zip(t[::2], res.efficiency[::2]):
    print(f"{ti:5.1f}  {y:.4f}   {np.exp(-(ti / tau) ** 2):.4f}")

# %% The published beating model
hf = HyperfineSplittings.cesium_6d32()
print(f"\nbeating-free envelope 1/e time   {envelope_one_over_e_time(TABLE_PARAMS):.2f} ns")
print(f"upper-envelope 1/e time (beating) {one_over_e_time(TABLE_PARAMS, hf):.2f} ns")
ts = np.arange(0.0, 40.1, 0.1)
eta = efficiency_at(ts, TABLE_PARAMS, hf)
first = np.argmax((eta[1:-1] > eta[:-2]) & (eta[1:-1] >= eta[2:]))
print(f"first revival at {ts[first + 1]:.1f} ns, efficiency {eta[first + 1]:.3f}")
