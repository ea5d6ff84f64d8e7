import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import ks_2samp

from laddermem.spinwave import TABLE_PARAMS, HyperfineSplittings, SpinwaveModelParams, with_efficiency_at
from laddermem.traces import (
    ZERO_COUNT_UPPER_LIMIT,
    DetectionChain,
    Histogram,
    HistogramFormatError,
    InconsistentReferenceError,
    UndefinedEfficiencyError,
    WindowSpec,
    analyze,
    default_windows,
    end_to_end,
    integrate_window,
    internal_efficiency,
    noise_rate_for_snr,
    snr,
    split_efficiencies,
    synthesize_trace,
    threshold_halfwidth,
)

HF = HyperfineSplittings.cesium_6d32()
CHAIN = DetectionChain(0.147, 0.85)


def hist(counts, role="signal", bw=1.0, start=0.0, t_int=1.0):
    return Histogram(bw, start, np.asarray(counts, dtype=np.int64), role, t_int, 1e7)


def flat(n, value, role="signal"):
    return hist(np.full(n, value), role)


# --- integrate_window -----------------------------------------------------------

def test_all_zero_histogram():
    assert integrate_window(hist(np.zeros(50)), (3.0, 17.5)) == (0.0, 0.0)


def test_whole_bins():
    c = np.arange(40)
    m = integrate_window(hist(c), (10.0, 20.0))
    assert m.value == c[10:20].sum()
    assert m.error == pytest.approx(math.sqrt(c[10:20].sum()))


def test_partial_bin_against_finer_rebinning():
    rng = np.random.default_rng(3)
    coarse = rng.integers(0, 50, 30) * 10
    fine = np.repeat(coarse // 10, 10)
    hc = hist(coarse, bw=1.0)
    hf = hist(fine, bw=0.1)
    for w in [(2.3, 7.7), (0.0, 29.9), (11.1, 11.4)]:
        assert integrate_window(hc, w).value == pytest.approx(integrate_window(hf, w).value, rel=1e-12)


@given(st.lists(st.integers(0, 1000), min_size=20, max_size=60), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_additive_over_adjacent_windows(counts, f1, f2):
    h = hist(counts)
    lo, hi = 0.0, float(len(counts))
    a, b = sorted((lo + f1 * (hi - lo), lo + f2 * (hi - lo)))
    if not (lo < a < b < hi):
        return
    whole = integrate_window(h, (lo, hi)).value
    parts = integrate_window(h, (lo, a)).value + integrate_window(h, (a, b)).value + integrate_window(h, (b, hi)).value
    assert parts == pytest.approx(whole, rel=1e-12)


def test_window_outside_support():
    with pytest.raises(ValueError, match="outside histogram support"):
        integrate_window(hist(np.ones(10)), (5.0, 12.0))


# --- efficiencies ---------------------------------------------------------------

W = WindowSpec((0.0, 10.0), (20.0, 30.0), (40.0, 50.0))


def trio(leak, ret, n_in, noise_per_bin=0):
    sig = np.full(50, noise_per_bin)
    sig[:10] += leak
    sig[20:30] += ret
    ref = np.zeros(50, dtype=int)
    ref[:10] = n_in
    return hist(sig), hist(ref, "reference"), hist(np.full(50, noise_per_bin), "noise")


def test_equal_counts_give_unit_internal_efficiency():
    s, r, _ = trio(0, 7, 7)
    assert internal_efficiency(s, r, W).value == 1.0


def test_zero_signal_gives_zero_efficiency():
    s, r, _ = trio(0, 0, 7)
    assert internal_efficiency(s, r, W).value == 0.0


def test_zero_reference_is_undefined():
    s, r, _ = trio(0, 3, 0)
    with pytest.raises(UndefinedEfficiencyError):
        internal_efficiency(s, r, W)


def test_noise_subtraction_uses_noise_trace():
    s, r, n = trio(20, 30, 100, noise_per_bin=4)
    eta = internal_efficiency(s, r, W, n)
    assert eta.value == pytest.approx(300 / 1000)
    eta_nw = internal_efficiency(s, r, W, n, noise_from="noise_window")
    assert eta_nw.value == pytest.approx(300 / 1000)


def test_no_leak_means_unit_read_in():
    s, r, _ = trio(0, 25, 100)
    sp = split_efficiencies(s, r, W)
    assert sp.eta_in.value == 1.0
    assert sp.eta_out.value == sp.eta_int.value


def test_leak_equal_to_input_is_undefined():
    s, r, _ = trio(100, 5, 100)
    with pytest.raises(UndefinedEfficiencyError):
        split_efficiencies(s, r, W)


def test_leak_above_input_is_inconsistent():
    s, r, _ = trio(120, 5, 100)
    with pytest.raises(InconsistentReferenceError):
        split_efficiencies(s, r, W)


@settings(max_examples=300)
@given(st.integers(0, 5000), st.integers(0, 5000), st.integers(1, 5000), st.integers(0, 50))
def test_split_identity(leak, ret, n_in, noise):
    s, r, n = trio(leak, ret, n_in, noise)
    try:
        sp = split_efficiencies(s, r, W, n)
    except (InconsistentReferenceError, UndefinedEfficiencyError):
        return
    assert sp.eta_in.value * sp.eta_out.value - sp.eta_int.value == pytest.approx(0.0, abs=1e-12 * max(1.0, abs(sp.eta_int.value)))


def test_out_of_range_is_logged_not_clamped(caplog):
    s, r, _ = trio(0, 20, 10)
    with caplog.at_level(logging.WARNING):
        eta = internal_efficiency(s, r, W)
    assert eta.value == 2.0
    assert "outside [0, 1]" in caplog.text


def test_ratio_error_propagation():
    s, r, _ = trio(0, 400, 1600)
    eta = internal_efficiency(s, r, W)
    assert eta.error == pytest.approx(0.25 * math.sqrt(1 / 4000 + 1 / 16000), rel=1e-12)


# --- SNR ------------------------------------------------------------------------

def test_equal_signal_and_noise_give_unit_snr():
    assert snr(flat(50, 3), flat(50, 3, "noise"), W).value == 1.0


def test_zero_noise_is_lower_bound():
    res = snr(flat(50, 3), flat(50, 0, "noise"), W)
    assert res.lower_bound
    assert res.value == pytest.approx(30 / ZERO_COUNT_UPPER_LIMIT)


def test_noise_rescaled_to_signal_integration_time():
    sig = hist(np.full(50, 20), t_int=10.0)
    noise = hist(np.full(50, 1), "noise", t_int=1.0)
    assert snr(sig, noise, W).value == pytest.approx(2.0)


def test_end_to_end():
    assert end_to_end(0.15, CHAIN) == pytest.approx(0.022, abs=0.002)
    assert end_to_end(0.3, DetectionChain(1.0)) == 0.3
    assert end_to_end(0.0, CHAIN) == 0.0


# --- histogram I/O --------------------------------------------------------------

def test_histogram_csv_format_and_round_trip():
    h = Histogram(0.1, 0.0, np.array([0, 3, 7]), "reference", 10.0, 1e7, 0.06)
    text = h.to_csv()
    assert text == (
        "# bin_width_ns=0.1\n# start_time_ns=0.0\n# role=reference\n"
        "# integration_time_s=10.0\n# repetition_rate_hz=10000000.0\n# mean_photon_number=0.06\n0\n3\n7\n"
    )
    back = Histogram.from_csv(text)
    assert back.to_csv() == text


@pytest.mark.parametrize("text, line", [
    ("# bin_width_ns=0.1\n# start_time_ns=0\n# role=signal\n# integration_time_s=1\n# repetition_rate_hz=1e7\n3\nx\n", 7),
    ("# bin_width_ns=0.1\n# start_time_ns=0\n# role=signal\n# integration_time_s=1\n# repetition_rate_hz=1e7\n-2\n", 6),
    ("# bin_width_ns=abc\n", 1),
    ("# colour=blue\n", 1),
])
def test_malformed_histogram_reports_line(text, line):
    with pytest.raises(HistogramFormatError) as exc:
        Histogram.from_csv(text)
    assert exc.value.line == line
    assert f"line {line}" in str(exc.value)


def test_missing_header_key():
    with pytest.raises(HistogramFormatError, match="role"):
        Histogram.from_csv("# bin_width_ns=0.1\n# start_time_ns=0\n# integration_time_s=1\n# repetition_rate_hz=1e7\n1\n")


# --- synthesis ------------------------------------------------------------------

def anchor_trace(seed, **kw):
    model = with_efficiency_at(TABLE_PARAMS, HF, 17.4, 0.15)
    hw = threshold_halfwidth(0.8)
    n_in = 0.06 * 1e7 * 10 * CHAIN.setup_transmission * CHAIN.detector_efficiency
    frac = math.erf(hw / (0.8 / (2 * math.sqrt(2 * math.log(2)))) / math.sqrt(2))
    rate = noise_rate_for_snr(830.0, n_in * 0.15 * frac, 2 * hw, 10.0, 1e7)
    args = dict(read_in_efficiency=0.6, span=40.0)
    args.update(kw)
    return synthesize_trace(model, HF, 0.8, 17.4, 0.06, rate, CHAIN, 10.0, 1e7, seed, **args), hw


def test_synthesis_is_deterministic():
    (a, _), (b, _) = anchor_trace(5), anchor_trace(5)
    for x, y in zip(a, b):
        assert x.to_csv() == y.to_csv()


def test_no_photons_signal_looks_like_noise():
    model = SpinwaveModelParams(0.1, 30.0, 30.0, 0.0)
    sig, _, noise = synthesize_trace(model, HF, 0.8, 10.0, 0.0, 5e4, CHAIN, 10.0, 1e7, 11)
    assert ks_2samp(sig.counts, noise.counts).pvalue > 0.01


def test_lossless_limit_returns_all_counts():
    model = with_efficiency_at(SpinwaveModelParams(1.0, 1e6, 1e6, 0.0), HF, 10.0, 1.0)
    sig, ref, _ = synthesize_trace(model, HF, 0.8, 10.0, 0.01, 0.0, CHAIN, 1.0, 1e7, 2,
                                   read_in_efficiency=1.0, span=30.0)
    n_ref = integrate_window(ref, (0.0, 10.0)).value
    n_ret = integrate_window(sig, (10.0, 30.0)).value
    assert abs(n_ret - n_ref) < 3 * math.sqrt(n_ret + n_ref)
    assert integrate_window(sig, (0.0, 10.0)).value == 0


def test_efficiency_above_read_in_is_rejected():
    model = SpinwaveModelParams(0.9, 1e3, 1e3, 0.0)
    with pytest.raises(ValueError):
        synthesize_trace(model, HF, 0.8, 1.0, 0.06, 0.0, CHAIN, 1.0, 1e7, 0, read_in_efficiency=0.5)


@pytest.mark.parametrize("seed", range(4))
def test_closed_loop_recovers_injected_values(seed):
    (sig, ref, noise), hw = anchor_trace(seed)
    w = WindowSpec((5 - hw, 5 + hw), (22.4 - hw, 22.4 + hw), (25.0, 35.0))
    rep = analyze(sig, ref, noise, w, CHAIN)
    for key, truth in (("eta_int", 0.15), ("eta_in", 0.6), ("eta_out", 0.25), ("snr", 830.0)):
        m = rep[key]
        assert abs(m["value"] - truth) < 3 * m["error"], key


@pytest.mark.parametrize("eta, snr_target, mean", [(0.05, 50.0, 0.2), (0.3, 200.0, 0.06), (0.15, 2000.0, 0.5)])
def test_closed_loop_fuzz_corpus(eta, snr_target, mean):
    model = with_efficiency_at(TABLE_PARAMS, HF, 17.4, eta)
    hw = threshold_halfwidth(0.8)
    n_in = mean * 1e7 * 10 * CHAIN.setup_transmission * CHAIN.detector_efficiency
    frac = math.erf(hw / (0.8 / (2 * math.sqrt(2 * math.log(2)))) / math.sqrt(2))
    rate = noise_rate_for_snr(snr_target, n_in * eta * frac, 2 * hw, 10.0, 1e7)
    sig, ref, noise = synthesize_trace(model, HF, 0.8, 17.4, mean, rate, CHAIN, 10.0, 1e7, 21,
                                       read_in_efficiency=0.6, span=40.0)
    w = WindowSpec((5 - hw, 5 + hw), (22.4 - hw, 22.4 + hw))
    rep = analyze(sig, ref, noise, w, CHAIN)
    assert abs(rep["eta_int"]["value"] - eta) < 3 * rep["eta_int"]["error"]
    assert abs(rep["snr"]["value"] - snr_target) < 3 * rep["snr"]["error"]


def test_default_windows_bracket_the_pulses():
    (sig, ref, _), hw = anchor_trace(0)
    w = default_windows(sig, ref)
    assert w.read_in[0] == pytest.approx(5 - hw, abs=0.1)
    assert w.read_in[1] == pytest.approx(5 + hw, abs=0.1)
    assert w.read_out[0] == pytest.approx(22.4 - hw, abs=0.1)
    assert w.read_out[1] == pytest.approx(22.4 + hw, abs=0.1)
    assert w.noise is not None and w.noise[0] > w.read_out[1]


def test_threshold_window_keeps_over_ninety_percent():
    hw = threshold_halfwidth(0.8, 0.1)
    sigma = 0.8 / (2 * math.sqrt(2 * math.log(2)))
    assert math.erf(hw / sigma / math.sqrt(2)) > 0.9
    assert math.exp(-0.5 * (hw / sigma) ** 2) == pytest.approx(0.1, rel=1e-12)


def test_window_spec_validation():
    with pytest.raises(ValueError):
        WindowSpec((0.0, 10.0), (5.0, 15.0))
    with pytest.raises(ValueError):
        WindowSpec((3.0, 1.0), (5.0, 15.0))
