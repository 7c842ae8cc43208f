"""Monte Carlo SNR sweeps for bit error rate and channel-estimation NMSE.

Work is split into blocks of consecutive trials. Trial ``t`` draws its channel
and data from the stream ``(seed, "channel", t)`` and its noise from
``(seed, "noise", snr_index, t)``, so every SNR point sees the same channels and
the result never depends on how blocks are spread over worker processes.
Blocks are folded in order; early stopping is decided on that ordered fold.
"""

from __future__ import annotations

import functools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from ..channel import Ecm, NoiseSpec, add_awgn, apply_ddc, build_ecm
from ..core import (AfdmParams, Constellation, DdPath, DdProfile, ValidationReport,
                    noise_variance, rng_stream, validate_params)
from ..detection import (ML_CANDIDATE_LIMIT, Detection, DetectionError, DetectorKind, detect,
                         ml_candidates, ml_search, wilson_halfwidth)
from ..estimation import (PilotConfig, ThresholdRule, build_epa_frame, nmse,
                          reconstruct_ecm_epa_dr)
from ..transforms import DaftPlan, ShapingWindow, receive, transmit
from .config import ConfigError, Csi, ExperimentConfig, config_from_dict

# candidate-distance entries evaluated per ML chunk
_ML_CHUNK = 1 << 22


@dataclass(frozen=True)
class SweepRow:
    snr_db: float
    metric: str
    value: float
    trials: int
    errors: int
    ci95: float


@dataclass
class SweepResult:
    """Rows sorted by SNR plus provenance of the run."""

    metric: str
    rows: list[SweepRow]
    config_digest: str
    seed: int
    wall_time: float = 0.0
    validation: ValidationReport | None = None
    label: str = ""
    extra: dict = field(default_factory=dict)

    def values(self) -> np.ndarray:
        return np.array([r.value for r in self.rows])

    def snrs(self) -> np.ndarray:
        return np.array([r.snr_db for r in self.rows])


@dataclass(frozen=True, eq=False)
class _Context:
    config: ExperimentConfig
    params: AfdmParams
    plan: DaftPlan
    constellation: Constellation
    window: ShapingWindow | None
    base_profile: DdProfile | None
    pilot: PilotConfig | None
    candidates: np.ndarray | None
    # fixed path positions: unit-gain ECM per path and the combined support
    unit_ecms: np.ndarray | None = None
    unit_support: np.ndarray | None = None

    def genie_ecm(self, profile: DdProfile) -> Ecm:
        if self.unit_ecms is None:
            return build_ecm(profile, self.params, self.window)
        # the ECM is linear in the path gains
        matrix = np.tensordot(profile.gains, self.unit_ecms, axes=1)
        return Ecm(matrix, self.unit_support, self.params, profile.digest(),
                   "rect" if self.window is None else self.window.kind.value)


def bounds_profile(config: ExperimentConfig) -> DdProfile:
    """Profile used to validate parameters: the fixed one, or a single worst-case path."""
    base = config.profile.base_profile()
    if base is not None:
        return base
    return DdProfile((DdPath(1.0, config.profile.l_max, float(config.profile.k_max)),))


def check_config(config: ExperimentConfig) -> ValidationReport:
    """Validation report for the config; raises on problems no run can survive."""
    params = config.params()
    report = validate_params(params, bounds_profile(config))
    if not report["cpp_sufficiency"].passed:
        raise ConfigError(report["cpp_sufficiency"].reason)
    if config.detector is DetectorKind.ML:
        n = _n_data(config, params)
        order = config.make_constellation().order
        if order ** n > ML_CANDIDATE_LIMIT:
            raise ConfigError(f"ML over {n} symbols needs {order}**{n} candidates "
                              f"(limit {ML_CANDIDATE_LIMIT})")
    return report


def _pilot_for(config: ExperimentConfig, params: AfdmParams) -> PilotConfig:
    l_max, k_max = config.profile.bounds()
    pilot = PilotConfig.for_channel(params, l_max, int(math.ceil(k_max)),
                                    pilot_amplitude=config.pilot_amplitude,
                                    doppler_guard=config.doppler_guard)
    if pilot.n_data(params.n_sub) < 1:
        raise ConfigError(f"pilot guards leave no room for data at N={params.n_sub}")
    return pilot


def _n_data(config: ExperimentConfig, params: AfdmParams) -> int:
    if config.csi is Csi.GENIE:
        return params.n_sub
    return _pilot_for(config, params).n_data(params.n_sub)


@functools.lru_cache(maxsize=8)
def _context(doc_json: str) -> _Context:
    config = config_from_dict(json.loads(doc_json))
    params = config.params()
    const = config.make_constellation()
    pilot = _pilot_for(config, params) if config.csi is Csi.ESTIMATED else None
    cands = None
    if config.detector is DetectorKind.ML:
        cands = ml_candidates(const, _n_data(config, params))
    window = config.make_window()
    base = config.profile.base_profile()
    units = support = None
    if base is not None:
        units = np.stack([build_ecm(DdProfile((replace(p, gain=1.0),)), params, window).matrix
                          for p in base.paths])
        support = build_ecm(base, params, window).support
    return _Context(config, params, DaftPlan.build(params), const, window, base, pilot, cands,
                    units, support)


def _through_channel(ctx: _Context, profile: DdProfile, x: np.ndarray, noise_var: float,
                     rng: np.random.Generator) -> np.ndarray:
    tx = transmit(ctx.plan, x, ctx.window)
    r = add_awgn(apply_ddc(profile, tx, ctx.params), NoiseSpec(noise_var), rng)
    return receive(ctx.plan, r, ctx.window)


def _restrict(ecm: Ecm, cols: np.ndarray, square: bool = False) -> Ecm:
    """ECM seen by the data symbols only; ``square`` also keeps only the data rows."""
    n = ecm.n_sub
    col_pos = np.full(n, -1)
    col_pos[cols] = np.arange(len(cols))
    row_pos = col_pos if square else np.arange(n)
    sup = ecm.support
    if len(sup):
        sup = sup[(col_pos[sup[:, 1]] >= 0) & (row_pos[sup[:, 0]] >= 0)]
        sup = np.stack([row_pos[sup[:, 0]], col_pos[sup[:, 1]]], axis=1)
    rows = cols if square else np.arange(n)
    return Ecm(ecm.matrix[np.ix_(rows, cols)], sup, ecm.params, ecm.profile_digest, ecm.window)


def _observe(ctx: _Context, trial: int, snr_idx: int, noise_var: float):
    """Run one frame; returns (bits, channel the detector sees, detector input)."""
    cfg = ctx.config
    crng = rng_stream(cfg.seed, "channel", trial)
    nrng = rng_stream(cfg.seed, "noise", snr_idx, trial)
    profile = cfg.profile.draw(crng, ctx.base_profile)
    n = ctx.params.n_sub
    bps = ctx.constellation.bits_per_symbol
    if ctx.pilot is None:
        bits = crng.integers(0, 2, n * bps, dtype=np.uint8)
        x = ctx.constellation.modulate(bits)
        y = _through_channel(ctx, profile, x, noise_var, nrng)
        return bits, ctx.genie_ecm(profile), y
    bits = crng.integers(0, 2, ctx.pilot.n_data(n) * bps, dtype=np.uint8)
    frame = build_epa_frame(ctx.constellation.modulate(bits), ctx.pilot, ctx.params)
    y = _through_channel(ctx, profile, frame.symbols, noise_var, nrng)
    est = reconstruct_ecm_epa_dr(y, ctx.pilot, ctx.params,
                                 ThresholdRule(cfg.threshold_factor, noise_var),
                                 ctx.window, allow_empty=True)
    p = ctx.pilot.pilot_index
    y = y - est.matrix[:, p] * ctx.pilot.pilot_amplitude
    data = frame.data_indices
    if cfg.detector is DetectorKind.SINGLE_TAP:
        # one tap per data position: keep only the data rows
        return bits, _restrict(est, data, square=True), y[data]
    return bits, _restrict(est, data), y


def _detect_one(ctx: _Context, ecm: Ecm, y: np.ndarray, noise_var: float) -> np.ndarray:
    cfg = ctx.config.detector_config(noise_var)
    try:
        det: Detection = detect(cfg, ecm, y, ctx.constellation)
        return det.bits
    except DetectionError:
        # unusable channel estimate: decide every symbol as the zero vector would
        idx = ctx.constellation.nearest_index(np.zeros(ecm.matrix.shape[1]))
        return ctx.constellation.bit_map[idx].ravel()


def ber_block(doc_json: str, snr_idx: int, snr_db: float, start: int, stop: int) -> tuple[int, int, int]:
    """Bit errors, bits and frames for trials ``start..stop-1`` at one SNR point."""
    ctx = _context(doc_json)
    nv = noise_variance(snr_db)
    errors = bits_total = 0
    if ctx.candidates is not None:
        tx_bits, hs, ys = [], [], []
        for t in range(start, stop):
            b, ecm, y = _observe(ctx, t, snr_idx, nv)
            tx_bits.append(b)
            hs.append(ecm.matrix)
            ys.append(y)
        h = np.stack(hs)
        y = np.stack(ys)
        cands = ctx.candidates
        per = max(1, _ML_CHUNK // (h.shape[1] * len(cands)))
        idx = np.concatenate([ml_search(h[i:i + per], y[i:i + per], cands)
                              for i in range(0, len(h), per)])
        sym_idx = ctx.constellation.nearest_index(cands[idx])
        rx_bits = ctx.constellation.bit_map[sym_idx].reshape(len(h), -1)
        tx = np.stack(tx_bits)
        return int(np.count_nonzero(tx != rx_bits)), int(tx.size), stop - start
    for t in range(start, stop):
        b, ecm, y = _observe(ctx, t, snr_idx, nv)
        rx = _detect_one(ctx, ecm, y, nv)
        errors += int(np.count_nonzero(b != rx))
        bits_total += b.size
    return errors, bits_total, stop - start


def nmse_block(doc_json: str, snr_idx: int, snr_db: float, start: int, stop: int) -> tuple[list[float], int]:
    """Per-trial NMSE of the diagonal-reconstruction estimate, and how many found no path."""
    ctx = _context(doc_json)
    cfg = ctx.config
    nv = noise_variance(snr_db)
    pilot = ctx.pilot or _pilot_for(cfg, ctx.params)
    n = ctx.params.n_sub
    out, empty = [], 0
    for t in range(start, stop):
        crng = rng_stream(cfg.seed, "channel", t)
        nrng = rng_stream(cfg.seed, "noise", snr_idx, t)
        profile = cfg.profile.draw(crng, ctx.base_profile)
        bits = crng.integers(0, 2, pilot.n_data(n) * ctx.constellation.bits_per_symbol, dtype=np.uint8)
        frame = build_epa_frame(ctx.constellation.modulate(bits), pilot, ctx.params)
        y = _through_channel(ctx, profile, frame.symbols, nv, nrng)
        est = reconstruct_ecm_epa_dr(y, pilot, ctx.params, ThresholdRule(cfg.threshold_factor, nv),
                                     ctx.window, allow_empty=True)
        if not len(est.support):
            empty += 1
        out.append(nmse(est, ctx.genie_ecm(profile)))
    return out, empty


def _blocks(frames: int, size: int) -> list[tuple[int, int]]:
    return [(s, min(s + size, frames)) for s in range(0, frames, size)]


def _fold(pool: ProcessPoolExecutor | None, fn: Callable, doc_json: str, snr_idx: int,
          snr_db: float, blocks: list[tuple[int, int]], stop: Callable[[list], bool]) -> list:
    """Results of ``blocks`` in order, cut after the first block where ``stop`` holds."""
    done: list = []
    if pool is None:
        for s, e in blocks:
            done.append(fn(doc_json, snr_idx, snr_db, s, e))
            if stop(done):
                break
        return done
    futures = [pool.submit(fn, doc_json, snr_idx, snr_db, s, e) for s, e in blocks]
    try:
        for fut in futures:
            done.append(fut.result())
            if stop(done):
                break
    finally:
        for fut in futures:
            fut.cancel()
    return done


def _run(config: ExperimentConfig, fn: Callable, reduce: Callable, stop: Callable,
         metric: str) -> SweepResult:
    t0 = time.perf_counter()
    report = check_config(config)
    doc = config.to_dict()
    doc_json = json.dumps(doc, sort_keys=True)
    blocks = _blocks(config.frames, config.block)
    rows = []
    pool = ProcessPoolExecutor(config.workers) if config.workers > 1 else None
    try:
        for i, snr in enumerate(config.snr.points()):
            parts = _fold(pool, fn, doc_json, i, snr, blocks, stop)
            rows.append(reduce(snr, parts))
    finally:
        if pool is not None:
            pool.shutdown(cancel_futures=True)
    return SweepResult(metric, rows, config.digest(), config.seed,
                       time.perf_counter() - t0, report, config.waveform.value)


def run_ber_sweep(config: ExperimentConfig) -> SweepResult:
    """Bit error rate per SNR point with Wilson 95% half-widths."""
    limit = config.early_stop_errors

    def stop(parts: list) -> bool:
        return limit > 0 and sum(p[0] for p in parts) >= limit

    def reduce(snr: float, parts: list) -> SweepRow:
        errors = sum(p[0] for p in parts)
        bits = sum(p[1] for p in parts)
        frames = sum(p[2] for p in parts)
        return SweepRow(snr, "ber", errors / bits, frames, errors, wilson_halfwidth(errors, bits))

    return _run(config, ber_block, reduce, stop, "ber")


def run_nmse_sweep(config: ExperimentConfig) -> SweepResult:
    """Mean NMSE of the estimated ECM per SNR point; ``errors`` counts frames with no detected path."""

    def reduce(snr: float, parts: list) -> SweepRow:
        vals = np.concatenate([np.asarray(p[0], dtype=float) for p in parts])
        empty = sum(p[1] for p in parts)
        ci = 1.959963984540054 * vals.std(ddof=1) / math.sqrt(len(vals)) if len(vals) > 1 else 0.0
        return SweepRow(snr, "nmse", float(vals.mean()), len(vals), empty, float(ci))

    return _run(config, nmse_block, reduce, lambda parts: False, "nmse")
