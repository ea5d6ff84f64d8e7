"""Spectral acceptance window by deconvolution.

A measured efficiency-vs-detuning scan of 712 MHz FWHM is the window
convolved with the probe spectrum. Removing a 440 MHz probe leaves the
window itself.
"""
from laddermem.fitting import fit_gaussian
from laddermem.spectral import convolve, deconvolve, fourier_limited_linewidth, gaussian_curve, uniform_grid

grid = uniform_grid(6000.0, 5.0)
probe = gaussian_curve(grid, 440.0, area=1.0)
scan = gaussian_curve(grid, 712.0, peak=0.15)
print(f"Fourier limit of a 1 ns pulse: {fourier_limited_linewidth(1.0):.0f} MHz")

for eps in (1e-2, 1e-4, 1e-6):
    fit = fit_gaussian(deconvolve(scan, probe, eps))
    print(f"epsilon {eps:.0e}: W = {fit.fwhm:.1f} MHz")

back = fit_gaussian(convolve(probe, gaussian_curve(grid, 560.0))).fwhm
print(f"560 MHz window seen through the probe: {back:.1f} MHz")
