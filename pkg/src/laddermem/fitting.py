"""Damped least squares (Levenberg-Marquardt) and the two model fits built on it.

Jacobians are central finite differences with per-parameter steps; box
bounds are enforced by projecting every trial point onto the box.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional

import numpy as np

from .spectral import FWHM_PER_SIGMA, SpectralCurve
from .spinwave import PARAM_NAMES, HyperfineSplittings, SpinwaveModelParams, efficiency_at

_FD_REL_STEP = np.cbrt(np.finfo(float).eps)


@dataclass
class LMResult:
    x: np.ndarray
    cost: float  # sum of squared residuals
    iterations: int
    converged: bool
    message: str
    jac: np.ndarray
    residuals: np.ndarray
    history: list = field(default_factory=list)  # cost after each accepted step


def fd_jacobian(fun, x, lower, upper, scale):
    """Central-difference Jacobian; one-sided next to a bound."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        h = _FD_REL_STEP * max(abs(x[i]), scale[i])
        lo_ok = x[i] - h >= lower[i]
        hi_ok = x[i] + h <= upper[i]
        xp, xm = x.copy(), x.copy()
        if lo_ok and hi_ok:
            xp[i] += h
            xm[i] -= h
            cols.append((fun(xp) - fun(xm)) / (2 * h))
        elif hi_ok:
            xp[i] += h
            cols.append((fun(xp) - fun(x)) / h)
        else:
            xm[i] -= h
            cols.append((fun(x) - fun(xm)) / h)
    return np.column_stack(cols)


def levenberg_marquardt(
    fun: Callable[[np.ndarray], np.ndarray],
    x0,
    lower=None,
    upper=None,
    scale=None,
    lam0: float = 1e-3,
    max_iter: int = 500,
    xtol: float = 1e-8,
    ftol: float = 1e-10,
) -> LMResult:
    """Minimize ``sum(fun(x)**2)``.

    Damping starts at *lam0*, is multiplied by 10 on a rejected step and
    divided by 10 on an accepted one. Stops when the relative step is below
    *xtol* or the relative cost change is below *ftol*.
    """
    x = np.asarray(x0, dtype=float).copy()
    n = x.size
    lower = np.full(n, -np.inf) if lower is None else np.asarray(lower, float)
    upper = np.full(n, np.inf) if upper is None else np.asarray(upper, float)
    scale = np.ones(n) if scale is None else np.asarray(scale, float)
    x = np.clip(x, lower, upper)

    r = fun(x)
    cost = float(r @ r)
    history = [cost]
    lam = lam0
    converged, message = False, "maximum number of iterations reached"
    it = 0
    J = fd_jacobian(fun, x, lower, upper, scale)

    while it < max_iter:
        it += 1
        if cost == 0.0:
            converged, message = True, "zero residual"
            break
        A = J.T @ J
        g = J.T @ r
        diag = np.diag(A).copy()
        diag = np.maximum(diag, 1e-12 * max(diag.max(), 1e-300))
        accepted = False
        while lam < 1e20:
            try:
                step = np.linalg.solve(A + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            x_new = np.clip(x + step, lower, upper)
            dx = x_new - x
            r_new = fun(x_new)
            cost_new = float(r_new @ r_new)
            small_step = np.linalg.norm(dx) <= xtol * (np.linalg.norm(x) + xtol)
            if np.isfinite(cost_new) and cost_new < cost:
                accepted = True
                rel_change = (cost - cost_new) / cost
                x, r, cost = x_new, r_new, cost_new
                history.append(cost)
                lam = max(lam / 10.0, 1e-15)
                if small_step or rel_change < ftol:
                    converged = True
                    message = "relative step below xtol" if small_step else "relative cost change below ftol"
                break
            if small_step:
                # no representable improvement left along the damped direction
                converged, message = True, "relative step below xtol"
                break
            lam *= 10.0
        if converged:
            break
        if not accepted:
            message = "damping diverged without reducing the cost"
            break
        J = fd_jacobian(fun, x, lower, upper, scale)

    J = fd_jacobian(fun, x, lower, upper, scale)
    return LMResult(x, cost, it, converged, message, J, r, history)


def covariance_from_jacobian(J: np.ndarray) -> np.ndarray:
    """(J^T J)^-1 by SVD. Parameters touching a direction the data do not
    constrain get infinite variance and zero covariance with the rest."""
    _, s, vt = np.linalg.svd(J, full_matrices=True)
    tol = s.max() * max(J.shape) * np.finfo(float).eps if s.size else 0.0
    rank = int(np.count_nonzero(s > tol))
    cov = (vt[:rank].T / s[:rank] ** 2) @ vt[:rank]
    loose = np.any(np.abs(vt[rank:]) > 1e-8, axis=0)
    cov[loose, :] = 0.0
    cov[:, loose] = 0.0
    cov[loose, loose] = np.inf
    return 0.5 * (cov + cov.T)


# --- spinwave decay fit -------------------------------------------------------

HF_NAMES = ("f23", "f34", "f45")
_DEFAULT_BOUNDS = {
    "eta0": (0.0, 1.0), "tau_s": (1e-9, np.inf), "tau_bar": (1e-9, np.inf),
    "f23": (0.0, np.inf), "f34": (0.0, np.inf), "f45": (0.0, np.inf),
}
_SCALES = {"eta0": 0.1, "tau_s": 1.0, "tau_bar": 1.0, "t0": 1.0, "a": 1.0, "b": 1.0,
           "c": 1.0, "d": 1.0, "f23": 1.0, "f34": 1.0, "f45": 1.0}


@dataclass
class FitResult:
    parameters: SpinwaveModelParams
    hyperfine: HyperfineSplittings
    covariance: np.ndarray  # over names, zero rows/cols for fixed entries
    names: tuple
    free: tuple
    residual_norm: float
    iterations: int
    converged: bool
    chi2: float
    dof: int
    residuals: np.ndarray
    message: str = ""
    restarts: int = 0

    @property
    def errors(self) -> dict:
        return {n: float(math.sqrt(max(self.covariance[i, i], 0.0))) for i, n in enumerate(self.names)}

    def correlation(self) -> np.ndarray:
        sd = np.sqrt(np.clip(np.diag(self.covariance), 0, None))
        with np.errstate(divide="ignore", invalid="ignore"):
            corr = self.covariance / np.outer(sd, sd)
        corr[~np.isfinite(corr)] = 0.0
        np.fill_diagonal(corr, [1.0 if s > 0 else 0.0 for s in sd])
        return corr

    def report(self) -> dict:
        values = {**self.parameters.to_dict(), **{n: getattr(self.hyperfine, n) for n in HF_NAMES}}
        return {
            "parameters": {n: values[n] for n in self.names},
            "errors_1sigma": self.errors,
            "free": list(self.free),
            "correlation": self.correlation().tolist(),
            "chi2": self.chi2,
            "dof": self.dof,
            "residual_norm": self.residual_norm,
            "iterations": self.iterations,
            "converged": self.converged,
            "restarts": self.restarts,
            "message": self.message,
        }

    def report_json(self) -> str:
        return json.dumps(self.report(), indent=2, sort_keys=False)


def _as_data(data):
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError("data must be a sequence of (t_ns, efficiency, sigma) rows")
    t, y, s = arr.T
    if np.any(s <= 0):
        raise ValueError("all sigma values must be > 0")
    return t, y, s


def read_decay_csv(text: str) -> np.ndarray:
    """Rows of (t_ns, efficiency, sigma) from CSV with header
    ``t_ns,efficiency,stderr`` (or ``sigma`` as the third name)."""
    rows = []
    header = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        cells = [c.strip() for c in line.split(",")]
        if header is None:
            if cells[:2] != ["t_ns", "efficiency"] or len(cells) != 3 or cells[2] not in ("stderr", "sigma"):
                raise ValueError(f"line {lineno}: expected header 't_ns,efficiency,stderr'")
            header = cells
            continue
        if len(cells) != 3:
            raise ValueError(f"line {lineno}: expected 3 columns, got {len(cells)}")
        try:
            rows.append([float(c) for c in cells])
        except ValueError:
            raise ValueError(f"line {lineno}: non-numeric entry {line!r}") from None
        if not rows[-1][2] > 0:
            raise ValueError(f"line {lineno}: sigma must be > 0")
    if header is None:
        raise ValueError("missing header 't_ns,efficiency,stderr'")
    return np.array(rows, dtype=float).reshape(-1, 3)


def residuals_csv(t, y, s, model) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t_ns", "efficiency", "sigma", "model", "normalized_residual"])
    for row in zip(t, y, s, model, (y - model) / s):
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def fit_spinwave_model(
    data,
    init: SpinwaveModelParams,
    hf: HyperfineSplittings,
    bounds: Optional[Mapping[str, tuple]] = None,
    fixed: Iterable[str] = (),
    float_hyperfine: bool = False,
    max_iter: int = 500,
    restarts: int = 3,
    seed: int = 0,
) -> FitResult:
    """Weighted least-squares fit of efficiency_at to (t, eta, sigma) rows.

    Hyperfine splittings are held fixed unless *float_hyperfine*. A fit
    that does not converge is retried from up to *restarts* slightly
    perturbed starting points; the last attempt is returned either way.
    """
    t, y, s = _as_data(data)
    names = PARAM_NAMES + (HF_NAMES if float_hyperfine else ())
    fixed = set(fixed)
    unknown = fixed - set(names)
    if unknown:
        raise ValueError(f"unknown fixed parameter(s): {sorted(unknown)}")
    free = tuple(n for n in names if n not in fixed)
    if len(t) < len(free) + 1:
        raise ValueError(f"need at least {len(free) + 1} data points for {len(free)} free parameters")

    full0 = np.concatenate([init.as_array(), [getattr(hf, n) for n in HF_NAMES]])
    all_names = PARAM_NAMES + HF_NAMES
    free_idx = [all_names.index(n) for n in free]
    bnd = {**_DEFAULT_BOUNDS, **(bounds or {})}
    lower = np.array([bnd.get(n, (-np.inf, np.inf))[0] for n in free], float)
    upper = np.array([bnd.get(n, (-np.inf, np.inf))[1] for n in free], float)
    scale = np.array([_SCALES[n] for n in free])

    def unpack(x):
        full = full0.copy()
        full[free_idx] = x
        return full

    def model(full):
        return efficiency_at(t, SpinwaveModelParams.from_array(full[:8]), HyperfineSplittings(*full[8:]))

    def resid(x):
        full = unpack(x)
        amp = 1.0 + full[4] + full[5] + full[6] + full[7]
        if amp == 0 or full[1] <= 0 or full[2] <= 0:
            return np.full(t.shape, np.inf)
        return (y - model(full)) / s

    rng = np.random.default_rng(seed)
    x0 = full0[free_idx]
    attempt = 0
    while True:
        res = levenberg_marquardt(resid, x0, lower, upper, scale, max_iter=max_iter)
        if res.converged or attempt >= restarts:
            break
        attempt += 1
        x0 = np.clip(res.x * (1.0 + 0.05 * rng.standard_normal(res.x.size)), lower, upper)

    full = unpack(res.x)
    params = SpinwaveModelParams.from_array(full[:8])
    hf_out = HyperfineSplittings(*full[8:])
    cov_free = covariance_from_jacobian(res.jac)
    cov = np.zeros((len(names), len(names)))
    pos = [names.index(n) for n in free]
    cov[np.ix_(pos, pos)] = cov_free
    chi2 = res.cost
    return FitResult(
        params, hf_out, cov, names, free, float(math.sqrt(chi2)), res.iterations,
        res.converged, chi2, len(t) - len(free), res.residuals, res.message, attempt,
    )


# --- Gaussian line fit -------------------------------------------------------

@dataclass
class GaussianFit:
    center: float
    fwhm: float
    amplitude: float
    offset: float
    covariance: np.ndarray  # order: center, fwhm, amplitude, offset
    converged: bool
    chi2: float
    iterations: int

    @property
    def errors(self) -> dict:
        sd = np.sqrt(np.diag(self.covariance))
        return dict(zip(("center", "fwhm", "amplitude", "offset"), map(float, sd)))

    def as_dict(self) -> dict:
        return {
            "center_mhz": self.center,
            "fwhm_mhz": self.fwhm,
            "amplitude": self.amplitude,
            "offset": self.offset,
            "errors_1sigma": self.errors,
            "converged": self.converged,
            "chi2": self.chi2,
        }


def gaussian_model(x, center, fwhm, amplitude, offset):
    return offset + amplitude * np.exp(-0.5 * ((x - center) / (fwhm / FWHM_PER_SIGMA)) ** 2)


def fit_gaussian(curve: SpectralCurve, sigma=None, max_iter: int = 500) -> GaussianFit:
    """Gaussian plus constant offset.

    Without *sigma* the covariance is scaled by the reduced chi-square.
    """
    x, y = curve.detuning, curve.values
    if x.size < 5:
        raise ValueError("need at least 5 points")
    w = np.ones_like(y) if sigma is None else 1.0 / np.broadcast_to(np.asarray(sigma, float), y.shape)

    offset0 = float(np.median(np.concatenate([y[: max(1, y.size // 10)], y[-max(1, y.size // 10):]])))
    i_max = int(np.argmax(y))
    amp0 = float(y[i_max] - offset0)
    above = np.nonzero(y - offset0 >= 0.5 * amp0)[0] if amp0 > 0 else np.array([])
    span = x[-1] - x[0]
    fwhm0 = float((above[-1] - above[0] + 1) * curve.spacing) if above.size else span / 4
    x0 = np.array([x[i_max] if amp0 > 0 else 0.5 * (x[0] + x[-1]), fwhm0, amp0, offset0])

    def resid(p):
        return (y - gaussian_model(x, *p)) * w

    yscale = max(float(np.max(np.abs(y))), np.finfo(float).tiny)
    scale = np.array([curve.spacing, curve.spacing, yscale, yscale])
    lower = np.array([-np.inf, 1e-9 * curve.spacing, -np.inf, -np.inf])
    res = levenberg_marquardt(resid, x0, lower, None, scale, max_iter=max_iter)
    cov = covariance_from_jacobian(res.jac)
    if sigma is None:
        dof = max(x.size - 4, 1)
        with np.errstate(invalid="ignore"):
            cov = cov * (res.cost / dof)
        cov[np.isnan(cov)] = np.inf
    c, f, a, o = res.x
    return GaussianFit(float(c), float(f), float(a), float(o), cov, res.converged, res.cost, res.iterations)
