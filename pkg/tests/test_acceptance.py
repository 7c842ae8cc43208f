"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line; the lines are
also collected into an ``acceptance criteria`` section of the pytest summary.
Tolerances and run sizes are the agreed acceptance values and must not be
relaxed to make a run pass.
"""

import math
import time
from fractions import Fraction

import numpy as np
import pytest

from afdm.channel import apply_ddc, build_ecm, predict_support
from afdm.core import AfdmParams, Constellation, DdProfile
from afdm.estimation import PilotConfig, ThresholdRule, build_epa_frame, estimate_paths_epa
from afdm.harness import config_from_dict, format_csv, run_ber_sweep, run_nmse_sweep
from afdm.multiaccess import UserSpec, allocate_afdma, user_frame, user_soft_estimate
from afdm.transforms import DaftPlan, add_cpp, cpp_phase, daft, idaft, receive, transmit

from conftest import chirp_periodic_channel, direct_daft, fresnel_matrix, integer_profile

SIZES = (4, 8, 16, 64, 512)


def _frac(coef, squares):
    """``coef * s mod 1`` for each integer ``s``, reduced exactly before rounding to float."""
    q = Fraction(coef)
    return np.array([float((q * s) % 1) for s in squares])


def _kernel(n, c1, c2):
    """Forward kernel built straight from the defining exponent, reduced mod 1 exactly."""
    t = np.arange(n)
    sq = [int(v) * int(v) for v in t]
    phase = _frac(c1, sq)[None, :] + _frac(c2, sq)[:, None] + (np.outer(t, t) % n) / n
    return np.exp(-2j * np.pi * phase) / np.sqrt(n)


def _cvec(rng, n):
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


def test_criterion_1_transform_correctness(verdict):
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    round_trip = fast_vs_direct = 0.0
    for n in SIZES:
        for _ in range(100):
            c1, c2 = rng.uniform(-1, 1, 2)
            plan = DaftPlan.build(AfdmParams(n, c1, c2))
            x = _cvec(rng, n)
            round_trip = max(round_trip, np.max(np.abs(daft(plan, idaft(plan, x)) - x)))
            a = _kernel(n, c1, c2)
            fast_vs_direct = max(fast_vs_direct, np.max(np.abs(daft(plan, x) - a @ x)),
                                 np.max(np.abs(idaft(plan, x) - a.conj().T @ x)))
        if n <= 16:
            # scalar loops as a second, fully independent reference
            x = _cvec(rng, n)
            fast_vs_direct = max(fast_vs_direct,
                                 np.max(np.abs(daft(plan, x) - direct_daft(x, n, c1, c2))))
    elapsed = time.perf_counter() - t0
    ok = round_trip < 1e-10 and fast_vs_direct < 1e-10 and elapsed < 30
    verdict(1, ok, f"round trip {round_trip:.1e}, fast vs direct {fast_vs_direct:.1e}, "
                   f"{elapsed:.1f} s")


def test_criterion_2_special_cases(verdict):
    dft_err = dfnt_err = fresnel_err = 0.0
    for n in SIZES:
        t = np.arange(n)
        eye = np.eye(n)
        dft = np.exp(-2j * np.pi * np.outer(t, t) / n) / np.sqrt(n)
        fast_ofdm = daft(DaftPlan.build(AfdmParams.ofdm(n)), eye).T
        dft_err = max(dft_err, np.max(np.abs(fast_ofdm - dft)))
        fast_ocdm = daft(DaftPlan.build(AfdmParams.ocdm(n)), eye).T
        chirp = np.exp(-1j * np.pi * (t[:, None] + t[None, :]) ** 2 / n) / np.sqrt(n)
        dfnt_err = max(dfnt_err, np.max(np.abs(fast_ocdm - chirp)))
        # same kernel as the Fresnel transform up to reversal, conjugation and a constant
        reversal = eye[(-t) % n]
        expected = np.exp(-1j * np.pi / 4) * fresnel_matrix(n).conj() @ reversal
        fresnel_err = max(fresnel_err, np.max(np.abs(fast_ocdm - expected)))
    ok = max(dft_err, dfnt_err, fresnel_err) < 1e-12
    verdict(2, ok, f"DFT {dft_err:.1e}, DFnT kernel {dfnt_err:.1e}, Fresnel form {fresnel_err:.1e}")


def test_criterion_3_cpp_reduces_to_cp(verdict):
    rng = np.random.default_rng(103)
    worst = prefix_err = 0.0
    for n in (4, 8, 16, 64, 128, 512):
        for k in range(0, 2 * n + 1):
            p = AfdmParams(n, k / (2 * n), 0.0, min(n - 1, 8))
            worst = max(worst, np.max(np.abs(cpp_phase(p) - 1)))
        x = _cvec(rng, n)
        p = AfdmParams(n, 7 / (2 * n), 0.0, min(n - 1, 8))
        plain_cp = np.concatenate([x[n - p.l_cpp:], x])
        prefix_err = max(prefix_err, np.max(np.abs(add_cpp(p, x) - plain_cp)))
    ok = worst < 1e-12 and prefix_err < 1e-12
    verdict(3, ok, f"max |phase - 1| {worst:.1e}, prefix vs CP {prefix_err:.1e}")


def test_criterion_4_ecm_master_invariant(verdict):
    rng = np.random.default_rng(104)
    t0 = time.perf_counter()
    chain = 0.0
    rows_ok = support_ok = True
    for _ in range(50):
        l_max, k_max = int(rng.integers(0, 4)), int(rng.integers(0, 3))
        n_paths = int(rng.integers(1, min(6, (l_max + 1) * (2 * k_max + 1)) + 1))
        p = AfdmParams.afdm(32, k_max, l_max, c2=rng.uniform(0, 0.05))
        prof = integer_profile(rng, n_paths, l_max, k_max)
        plan = DaftPlan.build(p)
        ecm = build_ecm(prof, p)
        x = _cvec(rng, 32)
        y = receive(plan, apply_ddc(prof, transmit(plan, x), p))
        chain = max(chain, np.max(np.abs(y - ecm.matrix @ x)))
        nz = np.abs(ecm.matrix) > 1e-10
        rows_ok &= bool(np.all(nz.sum(axis=1) == n_paths))
        predicted = np.zeros_like(nz)
        sup = predict_support(prof, p)
        predicted[sup[:, 0], sup[:, 1]] = True
        support_ok &= bool(np.array_equal(nz, predicted))
    elapsed = time.perf_counter() - t0
    ok = chain < 1e-10 and rows_ok and support_ok and elapsed < 60
    verdict(4, ok, f"chain {chain:.1e}, nonzeros per row = P {rows_ok}, "
                   f"on predicted support {support_ok}, {elapsed:.1f} s")


def test_criterion_5_shift_law(verdict):
    rng = np.random.default_rng(105)
    n = 32
    mismatches = 0
    unit_ok = True
    for _ in range(20):
        k_max, l_max = int(rng.integers(0, 3)), int(rng.integers(1, 4))
        step = int(rng.integers(2 * k_max + 1, 2 * k_max + 4))
        p = AfdmParams(n, step / (2 * n), rng.uniform(0, 0.01), l_max)
        a = _kernel(n, p.c1, p.c2)
        prof = integer_profile(rng, min(3, (l_max + 1) * (2 * k_max + 1)), l_max, k_max)
        oracle = a @ chirp_periodic_channel(prof, p) @ a.conj().T
        got = {(int(r), int(c)) for r, c in zip(*np.nonzero(np.abs(oracle) > 1e-10))}
        mismatches += got != {tuple(s) for s in predict_support(prof, p)}
        # single unit paths: a Doppler bin moves one index, a delay sample moves 2 N c1
        for gain_delay_dopp, shift in (((1, 0, 1.0), 1), ((1, 1, 0.0), -step)):
            single = DdProfile.from_tuples([gain_delay_dopp])
            h = a @ chirp_periodic_channel(single, p) @ a.conj().T
            cols = np.arange(n)
            rows = np.argmax(np.abs(h), axis=0)
            unit_ok &= bool(np.all((rows - cols) % n == shift % n))
    ok = mismatches == 0 and unit_ok
    verdict(5, ok, f"support mismatches {mismatches}/20, unit shifts {unit_ok}")


def test_criterion_6_epa_exact_recovery(verdict):
    rng = np.random.default_rng(106)
    p = AfdmParams.afdm(512, 2, 3)
    pilot = PilotConfig.for_channel(p, 3, 2)
    plan = DaftPlan.build(p)
    bpsk = Constellation.make("bpsk")
    t0 = time.perf_counter()
    cells_ok = 0
    gain_err = 0.0
    for _ in range(100):
        prof = integer_profile(rng, 6, 3, 2)
        data = bpsk.points[rng.integers(0, 2, pilot.n_data(512))]
        frame = build_epa_frame(data, pilot, p)
        rx = receive(plan, apply_ddc(prof, transmit(plan, frame.symbols), p))
        est = estimate_paths_epa(rx, pilot, p, ThresholdRule(noise_var=0.0))
        got = {(e.delay, e.doppler): e.gain for e in est}
        want = {(q.delay, q.doppler): q.gain for q in prof.paths}
        if set(got) == set(want):
            cells_ok += 1
            gain_err = max(gain_err, max(abs(got[c] - want[c]) for c in want))
        else:
            gain_err = math.inf
    elapsed = time.perf_counter() - t0
    ok = cells_ok == 100 and gain_err < 1e-8 and elapsed < 60
    verdict(6, ok, f"exact (l,k) {cells_ok}/100, max gain error {gain_err:.1e}, {elapsed:.1f} s")


@pytest.mark.slow
def test_criterion_7_nmse_properties(verdict):
    t0 = time.perf_counter()
    rows = {}
    for win in ("rect", "hamming", "chebyshev"):
        cfg = config_from_dict(dict(
            waveform="afdm", doppler_guard=3, n_sub=512, window=win,
            pilot=dict(amplitude=math.sqrt(10)),
            profile=dict(source="random", n_paths=6, l_max=3, k_max=2, fractional=6),
            snr=dict(start=0, stop=30, step=10), frames=500, block=50, seed=7))
        rows[win] = run_nmse_sweep(cfg).rows
    elapsed = time.perf_counter() - t0
    decreasing = all(np.all(np.diff([r.value for r in rs]) < 0) for rs in rows.values())
    rect = rows["rect"][-1]
    gaps = {w: rect.value - rows[w][-1].value - rect.ci95 - rows[w][-1].ci95
            for w in ("hamming", "chebyshev")}
    ok = decreasing and all(g > 0 for g in gaps.values()) and elapsed < 600
    at30 = ", ".join(f"{w} {rs[-1].value:.2e}+-{rs[-1].ci95:.1e}" for w, rs in rows.items())
    verdict(7, ok, f"strictly decreasing {decreasing}; at 30 dB {at30}; {elapsed:.0f} s")


@pytest.mark.slow
def test_criterion_8_ber_ordering(verdict):
    t0 = time.perf_counter()
    rows = {}
    for wf, det in (("afdm", "mp"), ("ocdm", "mp"), ("ofdm", "single_tap")):
        cfg = config_from_dict(dict(
            waveform=wf, n_sub=128, constellation="qpsk", detector=det, csi="genie",
            profile=dict(source="random", n_paths=6, l_max=3, k_max=2),
            snr="14", frames=800, block=100, early_stop_errors=0, seed=8))
        rows[wf] = run_ber_sweep(cfg).rows[0]
    elapsed = time.perf_counter() - t0
    a, o, f = rows["afdm"], rows["ocdm"], rows["ofdm"]
    bits_ok = all(r.trials * 128 * 2 >= 200_000 for r in rows.values())
    ok = (bits_ok and o.value - a.value > a.ci95 + o.ci95
          and f.value - o.value > o.ci95 + f.ci95 and elapsed < 900)
    verdict(8, ok, f"AFDM {a.value:.2e}+-{a.ci95:.1e} < OCDM {o.value:.2e}+-{o.ci95:.1e} "
                   f"< OFDM {f.value:.2e}+-{f.ci95:.1e}; {elapsed:.0f} s")


@pytest.mark.slow
def test_criterion_9_diversity_slope(verdict):
    t0 = time.perf_counter()
    slopes = {}
    bers = {}
    for wf in ("afdm", "ofdm"):
        cfg = config_from_dict(dict(
            waveform=wf, n_sub=8, constellation="bpsk", detector="ml",
            profile=dict(source="explicit", fading="rayleigh",
                         paths=[dict(delay=0, doppler=0.0, gain_re=math.sqrt(0.5)),
                                dict(delay=1, doppler=0.0, gain_re=math.sqrt(0.5))]),
            snr=dict(start=8, stop=20, step=4), frames=125_000, block=5000,
            early_stop_errors=0, seed=9))
        res = run_ber_sweep(cfg)
        assert all(r.trials * 8 >= 1_000_000 for r in res.rows)
        bers[wf] = res.values()
        slopes[wf] = np.polyfit(res.snrs(), np.log10(res.values()), 1)[0]
    elapsed = time.perf_counter() - t0
    ratio = slopes["afdm"] / slopes["ofdm"]
    ok = 1.4 <= ratio <= 2.6 and elapsed < 1200
    verdict(9, ok, f"slope ratio {ratio:.2f} (AFDM {slopes['afdm']:.3f}/dB, "
                   f"OFDM {slopes['ofdm']:.3f}/dB); {elapsed:.0f} s")


def test_criterion_10_afdma_orthogonality(verdict):
    rng = np.random.default_rng(110)
    p = AfdmParams.afdm(128, 2, 3)
    plan_dp = DaftPlan.build(p)
    qpsk = Constellation.make("qpsk")
    worst_err = worst_leak = 0.0
    for _ in range(20):
        profiles = {"a": integer_profile(rng, 5, 3, 2), "b": integer_profile(rng, 3, 2, 1)}
        plan = allocate_afdma([UserSpec(u, prof, 20) for u, prof in profiles.items()], p, "uplink")
        data = {u: qpsk.points[rng.integers(0, 4, 20)] for u in profiles}
        rx = {u: receive(plan_dp, apply_ddc(prof, transmit(plan_dp, user_frame(plan, data, 1.0, u)), p))
              for u, prof in profiles.items()}
        total = rx["a"] + rx["b"]
        for u, v in (("a", "b"), ("b", "a")):
            rows = plan.observation_rows(u)
            worst_leak = max(worst_leak, float(np.sum(np.abs(rx[v][rows]) ** 2)))
            est = user_soft_estimate(plan, u, build_ecm(profiles[u], p).matrix, total)
            worst_err = max(worst_err, np.max(np.abs(est - data[u])))
    ok = worst_err < 1e-10 and worst_leak < 1e-10
    verdict(10, ok, f"max recovery error {worst_err:.1e}, cross-user energy {worst_leak:.1e}")


def test_criterion_11_determinism(verdict):
    base = dict(n_sub=32, detector="mp", snr="0:12:4", frames=120, block=10,
                early_stop_errors=150, seed=2024,
                profile=dict(source="random", n_paths=4, l_max=3, k_max=2, fractional=1))
    csvs = {}
    for workers in (1, 2, 3):
        cfg = config_from_dict(dict(base, workers=workers))
        nmse_cfg = config_from_dict(dict(base, n_sub=64, frames=40, workers=workers))
        csvs[workers] = format_csv(run_ber_sweep(cfg)) + format_csv(run_nmse_sweep(nmse_cfg))
    rerun = format_csv(run_ber_sweep(config_from_dict(dict(base, workers=2))))
    ok = csvs[1] == csvs[2] == csvs[3] and csvs[2].startswith(rerun)
    verdict(11, ok, f"CSV byte-identical across 1, 2 and 3 workers: {ok}")
