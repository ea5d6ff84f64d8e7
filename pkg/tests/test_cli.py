import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from laddermem.cli import main
from laddermem.spectral import gaussian_curve, uniform_grid
from laddermem.spinwave import TABLE_PARAMS, HyperfineSplittings, efficiency_at

from conftest import DATA

REPO = Path(__file__).resolve().parents[1]
CONFIGS = REPO / "configs"


def run(*args):
    return main([str(a) for a in args])


def manifest(d):
    return json.loads((Path(d) / "manifest.json").read_text())


def test_analyze_golden_trio_byte_for_byte(tmp_path):
    assert run("analyze", "-c", DATA / "analyze_golden.toml", "-o", tmp_path) == 0
    assert (tmp_path / "report.json").read_bytes() == (DATA / "golden_report.json").read_bytes()


def test_simulate_reproduces_golden_histograms(tmp_path):
    assert run("simulate-trace", "-c", DATA / "simulate_golden.toml", "-o", tmp_path) == 0
    for role in ("signal", "reference", "noise"):
        assert (tmp_path / f"{role}.csv").read_bytes() == (DATA / f"golden_{role}.csv").read_bytes()


def test_missing_required_key_exits_2_with_key_name(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text('[inputs]\nreference = "x.csv"\n')
    assert run("analyze", "-c", cfg, "-o", tmp_path / "out") == 2
    assert "inputs.signal" in capsys.readouterr().err
    m = manifest(tmp_path / "out")
    assert m["status"] == "error" and "inputs.signal" in m["failure_reason"]


def test_unknown_key_rejected(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[grid]\neta_src_num = 3\nbogus_mhz = 1.0\n")
    assert run("benchmark", "-c", cfg, "-o", tmp_path / "out") == 2
    assert "grid.bogus_mhz" in capsys.readouterr().err


def test_unknown_section_rejected(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[grids]\neta_src_num = 3\n")
    assert run("benchmark", "-c", cfg, "-o", tmp_path / "out") == 2


def test_wrong_type_rejected(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text('[window]\nfwhm_mhz = "wide"\n')
    assert run("benchmark", "-c", cfg, "-o", tmp_path / "out") == 2
    assert "window.fwhm_mhz" in capsys.readouterr().err


def test_malformed_histogram_reports_line(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    lines = (DATA / "golden_signal.csv").read_text().splitlines()
    lines[9] = "seven"
    bad.write_text("\n".join(lines) + "\n")
    code = run("analyze", "-c", DATA / "analyze_golden.toml", "--signal", bad, "-o", tmp_path / "out")
    assert code == 2
    assert "line 10" in capsys.readouterr().err


def test_toml_syntax_error_exit_2(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[run\nseed = 1\n")
    assert run("benchmark", "-c", cfg, "-o", tmp_path / "out") == 2
    assert manifest(tmp_path / "out")["status"] == "error"


def test_numerical_failure_exit_1(tmp_path):
    # reference with no counts makes the efficiency undefined
    ref = tmp_path / "ref.csv"
    text = (DATA / "golden_reference.csv").read_text().splitlines()
    ref.write_text("\n".join(l if l.startswith("#") else "0" for l in text) + "\n")
    code = run("analyze", "-c", DATA / "analyze_golden.toml", "--reference", ref, "-o", tmp_path / "out")
    assert code == 1
    m = manifest(tmp_path / "out")
    assert m["status"] == "failed" and "UndefinedEfficiencyError" in m["failure_reason"]


def test_flags_override_config(tmp_path):
    assert run("benchmark", "-c", CONFIGS / "benchmark.toml", "-o", tmp_path,
               "--set", "grid.eta_src_num=3", "--set", "grid.gamma_inhom_num=2") == 0
    body = [l for l in (tmp_path / "snr_grid.csv").read_text().splitlines() if not l.startswith("#")]
    assert len(body) == 4 and len(body[0].split(",")) == 3
    m = manifest(tmp_path)
    assert m["config"]["grid"]["eta_src_num"] == 3
    assert "grid.eta_src_num" in m["overrides"]


@pytest.mark.parametrize("cmd, cfg", [
    ("simulate-trace", "simulate_trace.toml"),
    ("mc-dephase", "mc_dephase.toml"),
    ("benchmark", "benchmark.toml"),
])
def test_same_config_same_outputs(tmp_path, cmd, cfg):
    extra = ["--set", "mc.n_atoms=20000"] if cmd == "mc-dephase" else []
    assert run(cmd, "-c", CONFIGS / cfg, "-o", tmp_path / "a", *extra) == 0
    assert run(cmd, "-c", CONFIGS / cfg, "-o", tmp_path / "b", *extra) == 0
    ma, mb = manifest(tmp_path / "a"), manifest(tmp_path / "b")
    assert ma["outputs"] == mb["outputs"] and ma["config_hash"] == mb["config_hash"]
    for name in ma["outputs"]:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_worker_count_does_not_change_outputs(tmp_path):
    base = ["--set", "mc.n_atoms=30000", "--set", "mc.chunk_size=4096"]
    assert run("mc-dephase", "-c", CONFIGS / "mc_dephase.toml", "-o", tmp_path / "a", *base, "--workers", "1") == 0
    assert run("mc-dephase", "-c", CONFIGS / "mc_dephase.toml", "-o", tmp_path / "b", *base, "--workers", "4") == 0
    assert (tmp_path / "a" / "mc_decay.csv").read_bytes() == (tmp_path / "b" / "mc_decay.csv").read_bytes()


def test_manifest_schema(tmp_path):
    assert run("benchmark", "-c", CONFIGS / "benchmark.toml", "-o", tmp_path, "--seed", "5") == 0
    m = manifest(tmp_path)
    for key in ("config_hash", "seed", "versions", "started_utc", "finished_utc", "status", "failure_reason", "outputs"):
        assert key in m
    assert m["seed"] == 5 and m["status"] == "ok" and m["failure_reason"] is None
    assert set(m["versions"]) >= {"laddermem", "python", "numpy", "scipy"}
    assert len(m["config_hash"]) == 64


def test_fit_decay_command(tmp_path):
    hf = HyperfineSplittings.cesium_6d32()
    t = np.arange(0.0, 60.0, 0.5)
    data = tmp_path / "decay.csv"
    data.write_text("t_ns,efficiency,stderr\n" + "".join(
        f"{float(x)!r},{float(y)!r},0.01\n" for x, y in zip(t, efficiency_at(t, TABLE_PARAMS, hf))))
    assert run("fit-decay", "-c", CONFIGS / "fit_decay.toml", "--data", data, "-o", tmp_path / "out") == 0
    rep = json.loads((tmp_path / "out" / "fit_report.json").read_text())
    assert rep["converged"]
    assert rep["parameters"]["tau_s"] == pytest.approx(24.4, rel=1e-6)
    curve = (tmp_path / "out" / "model_curve.csv").read_text().splitlines()
    assert curve[0] == "t_ns,efficiency,envelope"
    assert (tmp_path / "out" / "residuals.csv").exists()


def test_deconvolve_command(tmp_path):
    d = gaussian_curve(uniform_grid(5000.0, 5.0), 712.0, peak=0.15)
    d.single_photon_detuning = -500.0
    scan = tmp_path / "scan.csv"
    scan.write_text(d.to_csv())
    assert run("deconvolve", "-c", CONFIGS / "deconvolve.toml", "--data", scan, "--epsilon", "1e-6",
               "-o", tmp_path / "out") == 0
    summary = json.loads((tmp_path / "out" / "window_fit.json").read_text())
    assert summary["window_fwhm_mhz"] == pytest.approx(560.0, rel=0.03)
    assert summary["single_photon_detuning_mhz"] == -500.0
    assert (tmp_path / "out" / "window.csv").read_text().startswith("# single_photon_detuning_mhz=-500.0")


def test_mc_dephase_accepts_kelvin(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[vapor]\ntemperature_k = 333.15\n[mc]\nn_atoms = 2000\nt_stop_ns = 10.0\n")
    assert run("mc-dephase", "-c", cfg, "-o", tmp_path / "out") == 0
    rep = json.loads((tmp_path / "out" / "comparison.json").read_text())
    assert rep["temperature_k"] == 333.15


def test_both_temperature_units_rejected(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[vapor]\ntemperature_k = 333.15\ntemperature_c = 60.0\n")
    assert run("mc-dephase", "-c", cfg, "-o", tmp_path / "out") == 2


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 2
