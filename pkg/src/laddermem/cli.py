"""Command-line entry point: ``laddermem <command> [--config FILE] [options]``.

Each command reads a TOML config (strict: unknown keys are rejected),
applies flag overrides (flags win), writes its outputs plus a
``manifest.json`` into the output directory and exits with

    0  success
    1  runtime or numerical failure
    2  usage, config or input-format error
"""
from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import logging
import math
import platform
import sys
from pathlib import Path
from typing import Any, Callable

import numpy as np
import scipy

from . import __version__
from .benchmark import SourceBenchmarkScenario, calibrate_noise, calibration_scenario, expected_snr, snr_grid
from .config import ConfigError, check_section, config_hash, load_constants, load_toml, tomllib
from .fitting import fit_gaussian, fit_spinwave_model, read_decay_csv, residuals_csv
from .mc import McConfig, compare_to_model, components_from_model, gaussian_decay_time, matching_model, simulate_decay
from .spectral import SpectralCurve, deconvolve, fourier_limited_linewidth, gaussian_curve
from .spinwave import (
    TABLE_PARAMS,
    HyperfineSplittings,
    SpinwaveGeometry,
    SpinwaveModelParams,
    efficiency_at,
    envelope_at,
    inhomogeneous_dephasing_time,
    one_over_e_time,
    spinwave_wavelength,
    with_efficiency_at,
)
from .traces import (
    DetectionChain,
    Histogram,
    WindowSpec,
    analyze,
    default_windows,
    expected_bin_fractions,
    noise_rate_for_snr,
    synthesize_trace,
    threshold_halfwidth,
)
from .vapor import VaporConditions, celsius_to_kelvin, thermal_velocity

log = logging.getLogger("laddermem")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
_MISSING = object()


class InputError(ValueError):
    """A malformed input file."""


class NumericalFailure(RuntimeError):
    """Computation finished but its result is unusable (e.g. fit did not converge)."""


# --- config access ------------------------------------------------------------

class Config:
    """Raw config plus a record of every value actually used (the resolved config)."""

    def __init__(self, raw: dict, base_dir: Path):
        self.raw = raw
        self.base_dir = base_dir
        self.resolved: dict[str, dict[str, Any]] = {}
        self._schema: dict[str, set] = {}

    def section(self, name: str, keys: set, required: bool = False) -> "Section":
        self._schema[name] = keys
        sec = self.raw.get(name, _MISSING)
        if sec is _MISSING:
            if required:
                raise ConfigError(f"missing required section '[{name}]'", key=name)
            sec = {}
        if not isinstance(sec, dict):
            raise ConfigError(f"'{name}' must be a table", key=name)
        check_section(sec, name, optional=keys)
        return Section(self, name, sec)

    def check_unknown_sections(self):
        for name in self.raw:
            if name not in self._schema:
                raise ConfigError(f"unknown section '[{name}]'", key=name)


class Section:
    def __init__(self, cfg: Config, name: str, data: dict):
        self.cfg, self.name, self.data = cfg, name, data

    def __contains__(self, key):
        return key in self.data

    def get(self, key: str, kind: Callable = float, default: Any = _MISSING):
        where = f"{self.name}.{key}"
        if key not in self.data:
            if default is _MISSING:
                raise ConfigError(f"missing required key '{where}'", key=where)
            value = default
        else:
            value = self.data[key]
            try:
                value = _coerce(value, kind)
            except (TypeError, ValueError):
                raise ConfigError(f"bad value for '{where}': {self.data[key]!r}", key=where) from None
        self.cfg.resolved.setdefault(self.name, {})[key] = value
        return value

    def path(self, key: str, default: Any = _MISSING):
        p = self.get(key, str, default)
        if p is None:
            return None
        p = Path(p)
        return p if p.is_absolute() else self.cfg.base_dir / p


def _coerce(value, kind):
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise TypeError
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise TypeError
        return value
    if kind is bool:
        if not isinstance(value, bool):
            raise TypeError
        return value
    if kind is str:
        if not isinstance(value, str):
            raise TypeError
        return value
    return kind(value)


def _window(value):
    if not (isinstance(value, list) and len(value) == 2):
        raise ValueError
    return (_coerce(value[0], float), _coerce(value[1], float))


def _str_list(value):
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ValueError
    return list(value)


def _parse_override(text: str):
    key, sep, val = text.partition("=")
    if not sep or "." not in key:
        raise ConfigError(f"override must look like section.key=value, got {text!r}")
    section, _, name = key.strip().partition(".")
    try:
        value = tomllib.loads(f"v = {val.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = val.strip()
    return section, name, value


def _set(raw: dict, section: str, key: str, value):
    sec = raw.setdefault(section, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"'{section}' must be a table", key=section)
    sec[key] = value


# --- shared pieces -------------------------------------------------------------

def _chain(cfg: Config) -> DetectionChain:
    sec = cfg.section("chain", {"setup_transmission", "detector_efficiency"})
    try:
        return DetectionChain(sec.get("setup_transmission", float, 0.147),
                              sec.get("detector_efficiency", float, 0.85))
    except ValueError as exc:
        raise ConfigError(f"[chain]: {exc}", key="chain") from None


_MODEL_KEYS = {"eta0", "tau_s_ns", "tau_bar_ns", "t0_ns", "a", "b", "c", "d"}


def _model(cfg: Config, name: str = "model") -> SpinwaveModelParams:
    sec = cfg.section(name, _MODEL_KEYS)
    p = TABLE_PARAMS
    try:
        return SpinwaveModelParams(
            sec.get("eta0", float, p.eta0), sec.get("tau_s_ns", float, p.tau_s),
            sec.get("tau_bar_ns", float, p.tau_bar), sec.get("t0_ns", float, p.t0),
            sec.get("a", float, p.a), sec.get("b", float, p.b),
            sec.get("c", float, p.c), sec.get("d", float, p.d),
        )
    except ValueError as exc:
        raise ConfigError(f"[{name}]: {exc}", key=name) from None


def _hyperfine(cfg: Config) -> HyperfineSplittings:
    sec = cfg.section("hyperfine", {"f23_mhz", "f34_mhz", "f45_mhz"})
    hf = HyperfineSplittings.cesium_6d32()
    return HyperfineSplittings(sec.get("f23_mhz", float, hf.f23), sec.get("f34_mhz", float, hf.f34),
                               sec.get("f45_mhz", float, hf.f45))


def _read(path: Path, parser: Callable[[str], Any]):
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    try:
        return parser(text)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None


def _time_axis(sec: Section, start: float, stop: float, step: float) -> np.ndarray:
    t0 = sec.get("t_start_ns", float, start)
    t1 = sec.get("t_stop_ns", float, stop)
    dt = sec.get("t_step_ns", float, step)
    if not (dt > 0 and t1 >= t0):
        raise ConfigError(f"[{sec.name}] needs t_step_ns > 0 and t_stop_ns >= t_start_ns", key=sec.name)
    n = int(math.floor((t1 - t0) / dt + 1e-9)) + 1
    return t0 + dt * np.arange(n)


def _dumps(obj) -> str:
    return json.dumps(_finite(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _finite(obj):
    """JSON has no inf/nan; map them to null."""
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# --- commands ------------------------------------------------------------------

def cmd_simulate_trace(cfg: Config, seed: int) -> dict[str, str]:
    model = _model(cfg)
    hf = _hyperfine(cfg)
    chain = _chain(cfg)
    tr = cfg.section("trace", {
        "pulse_fwhm_ns", "retrieval_time_ns", "mean_photon_number", "integration_time_s",
        "repetition_rate_hz", "bin_width_ns", "read_in_time_ns", "read_in_efficiency",
        "eta_int", "noise_rate_cps", "target_snr", "window_threshold", "span_ns",
    }, required=True)
    fwhm = tr.get("pulse_fwhm_ns")
    t_ret = tr.get("retrieval_time_ns")
    mean = tr.get("mean_photon_number")
    t_int = tr.get("integration_time_s")
    rep = tr.get("repetition_rate_hz")
    bin_w = tr.get("bin_width_ns", float, 0.1)
    t_in = tr.get("read_in_time_ns", float, 5.0)
    eta_in = tr.get("read_in_efficiency", float, 0.6)
    span = tr.get("span_ns", float, None)
    if "eta_int" in tr:
        model = with_efficiency_at(model, hf, t_ret, tr.get("eta_int"))
    eta = float(efficiency_at(t_ret, model, hf))

    if ("noise_rate_cps" in tr) == ("target_snr" in tr):
        raise ConfigError("[trace] needs exactly one of 'noise_rate_cps' or 'target_snr'", key="trace.noise_rate_cps")
    n_in = mean * rep * t_int * chain.setup_transmission * chain.detector_efficiency
    if "target_snr" in tr:
        thr = tr.get("window_threshold", float, 0.1)
        hw = threshold_halfwidth(fwhm, thr)
        frac = float(expected_bin_fractions(np.array([-hw, hw]), 0.0, fwhm)[0])
        noise_rate = noise_rate_for_snr(tr.get("target_snr"), n_in * eta * frac, 2 * hw, t_int, rep)
    else:
        noise_rate = tr.get("noise_rate_cps")

    sig, ref, noi = synthesize_trace(
        model, hf, fwhm, t_ret, mean, noise_rate, chain, t_int, rep, seed,
        read_in_efficiency=eta_in, read_in_time=t_in, bin_width=bin_w, span=span,
    )
    truth = {
        "eta_int": eta,
        "eta_in": eta_in,
        "noise_rate_cps": noise_rate,
        "expected_input_counts": n_in,
        "read_in_center_ns": t_in,
        "read_out_center_ns": t_in + t_ret,
        "model": model.to_dict(),
    }
    return {"signal.csv": sig.to_csv(), "reference.csv": ref.to_csv(), "noise.csv": noi.to_csv(),
            "truth.json": _dumps(truth)}


def cmd_analyze(cfg: Config, seed: int) -> dict[str, str]:
    inp = cfg.section("inputs", {"signal", "reference", "noise"}, required=True)
    sig = _read(inp.path("signal"), Histogram.from_csv)
    ref = _read(inp.path("reference"), Histogram.from_csv)
    noise_path = inp.path("noise", None)
    noi = _read(noise_path, Histogram.from_csv) if noise_path else None
    chain = _chain(cfg)
    win = cfg.section("windows", {"read_in_ns", "read_out_ns", "noise_ns", "threshold"})
    if "read_in_ns" in win or "read_out_ns" in win:
        try:
            w = WindowSpec(win.get("read_in_ns", _window), win.get("read_out_ns", _window),
                           win.get("noise_ns", _window, None))
        except ValueError as exc:
            raise ConfigError(f"[windows]: {exc}", key="windows") from None
    else:
        w = default_windows(sig, ref, win.get("threshold", float, 0.1))
    return {"report.json": _dumps(analyze(sig, ref, noi, w, chain))}


def cmd_fit_decay(cfg: Config, seed: int) -> dict[str, str]:
    inp = cfg.section("inputs", {"data"}, required=True)
    data = _read(inp.path("data"), read_decay_csv)
    init = _model(cfg, "init")
    hf = _hyperfine(cfg)
    fs = cfg.section("fit", {"fixed", "float_hyperfine", "max_iter", "restarts"})
    fixed = fs.get("fixed", _str_list, [])
    try:
        res = fit_spinwave_model(
            data, init, hf, fixed=fixed, float_hyperfine=fs.get("float_hyperfine", bool, False),
            max_iter=fs.get("max_iter", int, 500), restarts=fs.get("restarts", int, 3), seed=seed,
        )
    except ValueError as exc:
        if "unknown fixed" in str(exc):
            raise ConfigError(f"[fit]: {exc}", key="fit.fixed") from None
        raise
    cs = cfg.section("curve", {"t_start_ns", "t_stop_ns", "t_step_ns"})
    t = _time_axis(cs, 0.0, float(data[:, 0].max()), 0.05)
    p, h = res.parameters, res.hyperfine
    lines = ["t_ns,efficiency,envelope"]
    lines += [f"{x!r},{float(y)!r},{float(e)!r}" for x, y, e in
              zip(t.tolist(), efficiency_at(t, p, h), envelope_at(t, p))]
    report = res.report()
    report["one_over_e_time_ns"] = one_over_e_time(p, h)
    out = {
        "fit_report.json": _dumps(report),
        "model_curve.csv": "\n".join(lines) + "\n",
        "residuals.csv": residuals_csv(data[:, 0], data[:, 1], data[:, 2], efficiency_at(data[:, 0], p, h)),
    }
    if not res.converged:
        raise NumericalFailure(f"fit did not converge: {res.message}", out)
    return out


def cmd_mc_dephase(cfg: Config, seed: int) -> dict[str, str]:
    consts = load_constants()
    vs = cfg.section("vapor", {"temperature_c", "temperature_k"})
    if ("temperature_c" in vs) and ("temperature_k" in vs):
        raise ConfigError("[vapor] takes temperature_c or temperature_k, not both", key="vapor.temperature_k")
    if "temperature_k" in vs:
        temp = vs.get("temperature_k")
    else:
        temp = celsius_to_kelvin(vs.get("temperature_c", float, 60.0))
    vapor = VaporConditions(temp, consts["atom"]["atomic_mass_kg"])
    ms = cfg.section("mc", {"n_atoms", "chunk_size", "workers", "propagation", "components",
                            "t_start_ns", "t_stop_ns", "t_step_ns"})
    try:
        geom = SpinwaveGeometry.cesium_ladder(ms.get("propagation", str, "counter"))
    except ValueError as exc:
        raise ConfigError(f"[mc]: {exc}", key="mc.propagation") from None
    components = ms.get("components", str, "none")
    if components not in ("none", "model"):
        raise ConfigError("mc.components must be 'none' or 'model'", key="mc.components")
    times = _time_axis(ms, 0.0, 100.0, 1.0)
    model = _model(cfg)
    hf = _hyperfine(cfg)
    mcfg = McConfig(
        ms.get("n_atoms", int, 100_000), seed, vapor, geom, times,
        components_from_model(model, hf) if components == "model" else None,
        ms.get("chunk_size", int, 16384), ms.get("workers", int, 1),
    )
    res = simulate_decay(mcfg)
    amps = (model.a, model.b, model.c, model.d) if components == "model" else (0.0,) * 4
    ref = matching_model(mcfg, amps)
    lam = spinwave_wavelength(geom)
    v_th = thermal_velocity(vapor)
    report = {
        "comparison": compare_to_model(res, ref, hf).as_dict(),
        "reference_model": ref.to_dict(),
        "gaussian_decay_time_ns": gaussian_decay_time(mcfg),
        "spinwave_wavelength_um": lam,
        "thermal_velocity_m_s": v_th,
        "inhomogeneous_dephasing_time_ns": inhomogeneous_dephasing_time(lam, v_th) if math.isfinite(lam) else None,
        "temperature_k": temp,
        "rng": res.meta["rng"],
        "n_atoms": mcfg.n_atoms,
    }
    return {"mc_decay.csv": res.to_csv(), "comparison.json": _dumps(report)}


def cmd_deconvolve(cfg: Config, seed: int) -> dict[str, str]:
    inp = cfg.section("inputs", {"data"}, required=True)
    d = _read(inp.path("data"), SpectralCurve.from_csv)
    ps = cfg.section("probe", {"fwhm_mhz", "pulse_fwhm_ns"})
    if "fwhm_mhz" in ps and "pulse_fwhm_ns" in ps:
        raise ConfigError("[probe] takes fwhm_mhz or pulse_fwhm_ns, not both", key="probe.fwhm_mhz")
    if "pulse_fwhm_ns" in ps:
        e_fwhm = fourier_limited_linewidth(ps.get("pulse_fwhm_ns"))
    else:
        e_fwhm = ps.get("fwhm_mhz", float, 440.0)
    eps = cfg.section("deconvolve", {"epsilon"}).get("epsilon", float, 1e-6)
    center = float(d.detuning[len(d) // 2])
    e = gaussian_curve(d.detuning, e_fwhm, center=center, area=1.0)
    m = deconvolve(d, e, eps)
    fit_m = fit_gaussian(m)
    fit_d = fit_gaussian(d)
    summary = {
        "window_fwhm_mhz": fit_m.fwhm,
        "window_fit": fit_m.as_dict(),
        "measured_fit": fit_d.as_dict(),
        "probe_fwhm_mhz": e_fwhm,
        "quadrature_estimate_mhz": math.sqrt(fit_d.fwhm**2 - e_fwhm**2) if fit_d.fwhm > e_fwhm else None,
        "epsilon": eps,
        "single_photon_detuning_mhz": d.single_photon_detuning,
    }
    m.single_photon_detuning = d.single_photon_detuning
    out = {"window.csv": m.to_csv(), "window_fit.json": _dumps(summary)}
    if not fit_m.converged:
        raise NumericalFailure("Gaussian fit of the deconvolved window did not converge", out)
    return out


def cmd_benchmark(cfg: Config, seed: int) -> dict[str, str]:
    sc = cfg.section("scenario", {"eta_T", "eta_P", "eta_qd_mem", "gamma_hom_qd_mhz", "repetition_rate_hz"})
    try:
        base = SourceBenchmarkScenario(
            eta_src=0.0, eta_T=sc.get("eta_T", float, 0.01), eta_P=sc.get("eta_P", float, 0.5),
            eta_qd_mem=sc.get("eta_qd_mem", float, 0.66), gamma_hom_qd=sc.get("gamma_hom_qd_mhz", float, 400.0),
            repetition_rate=sc.get("repetition_rate_hz", float, 10e6),
        )
    except ValueError as exc:
        raise ConfigError(f"[scenario]: {exc}", key="scenario") from None
    gs = cfg.section("grid", {"eta_src_start", "eta_src_stop", "eta_src_num", "gamma_inhom_start_mhz",
                              "gamma_inhom_stop_mhz", "gamma_inhom_num", "workers"})
    eta = np.linspace(gs.get("eta_src_start", float, 0.0), gs.get("eta_src_stop", float, 1.0),
                      gs.get("eta_src_num", int, 11))
    gam = np.linspace(gs.get("gamma_inhom_start_mhz", float, 0.0), gs.get("gamma_inhom_stop_mhz", float, 3000.0),
                      gs.get("gamma_inhom_num", int, 31))
    ws = cfg.section("window", {"fwhm_mhz", "curve"})
    if "curve" in ws and "fwhm_mhz" in ws:
        raise ConfigError("[window] takes fwhm_mhz or curve, not both", key="window.curve")
    window = _read(ws.path("curve"), SpectralCurve.from_csv) if "curve" in ws else ws.get("fwhm_mhz", float, 560.0)
    cs = cfg.section("calibration", {"mean_photon_number", "eta_int", "snr", "probe_linewidth_mhz"})
    chain = _chain(cfg)
    try:
        cal = calibrate_noise(cs.get("mean_photon_number", float, 0.06), cs.get("eta_int", float, 0.15), chain,
                              cs.get("snr", float, 830.0), cs.get("probe_linewidth_mhz", float, 440.0))
    except ValueError as exc:
        raise ConfigError(f"[calibration]: {exc}", key="calibration") from None
    try:
        grid = snr_grid(eta, gam, base, window, cal, workers=gs.get("workers", int, 1))
    except ValueError as exc:
        raise ConfigError(f"[grid]: {exc}", key="grid") from None
    summary = {
        "label": "snr_upper_bound",
        "noise_counts_per_pulse": cal.noise_counts_per_pulse,
        "calibration_round_trip_snr": expected_snr(calibration_scenario(cal), window, cal),
        "snr_min": float(grid.snr.min()),
        "snr_max": float(grid.snr.max()),
        "calibration": cal.provenance(),
    }
    return {"snr_grid.csv": grid.to_csv(), "benchmark.json": _dumps(summary)}


COMMANDS: dict[str, tuple[Callable, str]] = {
    "simulate-trace": (cmd_simulate_trace, "synthesize signal/reference/noise histograms"),
    "analyze": (cmd_analyze, "efficiencies and SNR from histogram files"),
    "fit-decay": (cmd_fit_decay, "fit the beating decay model to efficiency-vs-time data"),
    "mc-dephase": (cmd_mc_dephase, "Monte-Carlo motional dephasing curve"),
    "deconvolve": (cmd_deconvolve, "extract the acceptance window from a detuning scan"),
    "benchmark": (cmd_benchmark, "SNR grid for quantum-dot input"),
}

# flag dest -> config key
_FLAG_KEYS = {
    "signal": "inputs.signal", "reference": "inputs.reference", "noise": "inputs.noise",
    "data": "inputs.data", "workers": None, "n_atoms": "mc.n_atoms",
    "epsilon": "deconvolve.epsilon",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", type=Path, help="TOML config file")
    common.add_argument("-o", "--output-dir", type=Path, help="output directory (default: out)")
    common.add_argument("--seed", type=int, help="random seed (default 0)")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override a config value; may repeat")
    common.add_argument("-v", "--verbose", action="count", default=None)

    ap = argparse.ArgumentParser(prog="laddermem", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"laddermem {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, (_, helptext) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=helptext)
        if name == "analyze":
            p.add_argument("--signal")
            p.add_argument("--reference")
            p.add_argument("--noise")
        if name in ("fit-decay", "deconvolve"):
            p.add_argument("--data")
        if name == "deconvolve":
            p.add_argument("--epsilon", type=float, help="Wiener regularization relative to peak power")
        if name in ("mc-dephase", "benchmark"):
            p.add_argument("--workers", type=int)
        if name == "mc-dephase":
            p.add_argument("--n-atoms", type=int)
    return ap


def _versions() -> dict:
    return {"laddermem": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _prepare(args, raw: dict) -> tuple[dict, list]:
    """Merge flag overrides into the raw config; returns it and the list of overrides."""
    applied = []
    for text in args.set:
        s, k, v = _parse_override(text)
        _set(raw, s, k, v)
        applied.append(f"{s}.{k}")
    cwd = Path.cwd()
    for dest, key in _FLAG_KEYS.items():
        val = getattr(args, dest, None)
        if val is None:
            continue
        if dest == "workers":
            key = "mc.workers" if args.command == "mc-dephase" else "grid.workers"
        if dest in ("signal", "reference", "noise", "data"):
            val = str((cwd / val).resolve())
        s, _, k = key.partition(".")
        _set(raw, s, k, val)
        applied.append(key)
    if args.seed is not None:
        _set(raw, "run", "seed", args.seed)
    if args.output_dir is not None:
        _set(raw, "run", "output_dir", str(args.output_dir))
    if args.verbose is not None:
        _set(raw, "run", "verbosity", args.verbose)
    return raw, applied


def main(argv=None) -> int:
    # leave the package logger as found, for in-process callers
    prev = log.level
    try:
        return _main(argv)
    finally:
        log.setLevel(prev)


def _main(argv) -> int:
    args = build_parser().parse_args(argv)
    started = _now()
    manifest: dict[str, Any] = {
        "tool": "laddermem", "command": args.command, "versions": _versions(),
        "started_utc": started, "config_file": str(args.config) if args.config else None,
    }
    out_dir = args.output_dir or Path("out")
    outputs: dict[str, str] = {}
    status, reason, code = "ok", None, EXIT_OK
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s")
    try:
        raw = load_toml(args.config) if args.config else {}
        base_dir = args.config.resolve().parent if args.config else Path.cwd()
        raw, manifest["overrides"] = _prepare(args, raw)
        cfg = Config(raw, base_dir)
        run = cfg.section("run", {"seed", "output_dir", "verbosity"})
        seed = run.get("seed", int, 0)
        out_dir = Path(run.get("output_dir", str, "out"))
        verbosity = run.get("verbosity", int, 0)
        log.setLevel(
            logging.DEBUG if verbosity >= 2 else logging.INFO if verbosity == 1 else logging.WARNING)
        manifest["seed"] = seed
        func = COMMANDS[args.command][0]
        try:
            outputs = func(cfg, seed)
        except NumericalFailure as exc:
            outputs = exc.args[1] if len(exc.args) > 1 else {}
            raise
        finally:
            manifest["config"] = cfg.resolved
            # where outputs land does not change them
            hashed = {k: {kk: vv for kk, vv in v.items() if (k, kk) != ("run", "output_dir")}
                      for k, v in cfg.resolved.items()}
            manifest["config_hash"] = config_hash({"command": args.command, **hashed})
        cfg.check_unknown_sections()
    except (ConfigError, InputError) as exc:
        status, reason, code = "error", str(exc), EXIT_USAGE
        outputs = {}
    except NumericalFailure as exc:
        status, reason, code = "failed", str(exc.args[0]), EXIT_RUNTIME
    except (ValueError, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        status, reason, code = "failed", f"{type(exc).__name__}: {exc}", EXIT_RUNTIME
        outputs = {}

    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, text in outputs.items():
            (out_dir / name).write_text(text)
        manifest.update(
            status=status, failure_reason=reason, exit_code=code, finished_utc=_now(),
            outputs={n: hashlib.sha256(t.encode()).hexdigest() for n, t in outputs.items()},
        )
        (out_dir / "manifest.json").write_text(_dumps(manifest))
    except OSError as exc:
        print(f"laddermem: cannot write to {out_dir}: {exc}", file=sys.stderr)
        return code or EXIT_RUNTIME
    if reason:
        print(f"laddermem {args.command}: {reason}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
