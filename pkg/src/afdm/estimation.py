"""Embedded-pilot frames, pilot-based path estimation and diagonal ECM reconstruction."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .channel import Ecm, leakage_kernel, offset_range, shift_signs, unit_path_phase
from .core import AfdmParams, DdPath, DdProfile
from .transforms import ShapingWindow


class EstimationError(ValueError):
    pass


class AmbiguousInversion(EstimationError):
    """A pilot response offset maps to more than one (delay, Doppler) pair."""


class NoPathDetected(EstimationError):
    pass


class Role(enum.IntEnum):
    DATA = 0
    PILOT = 1
    GUARD = 2


@dataclass(frozen=True)
class PilotConfig:
    """Pilot position, amplitude and guard widths.

    ``response`` is the ``(lowest, highest)`` offset from the pilot where its
    channel response may land. Data never reaches those rows when both guards are
    at least ``highest - lowest`` wide. Without it the whole guard window is searched.
    """

    pilot_index: int
    pilot_amplitude: float = 1.0
    guard_left: int = 0
    guard_right: int = 0
    response: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        if self.pilot_amplitude <= 0:
            raise ValueError("pilot amplitude must be positive")
        if self.guard_left < 0 or self.guard_right < 0:
            raise ValueError("guard counts must be nonnegative")
        if self.response is not None:
            lo, hi = self.response
            if not -self.guard_left <= lo <= hi <= self.guard_right:
                raise ValueError(f"response window {self.response} is not inside the guards")

    @classmethod
    def for_channel(cls, params: AfdmParams, l_max: int, k_max: int,
                    pilot_index: int | None = None, pilot_amplitude: float = 1.0,
                    doppler_guard: int = 0) -> "PilotConfig":
        """Guards just wide enough that data and pilot response never overlap."""
        lo, hi = offset_range(params, l_max, k_max + doppler_guard)
        width = hi - lo
        idx = params.n_sub // 2 if pilot_index is None else pilot_index
        return cls(idx, pilot_amplitude, width, width, (lo, hi))

    def check(self, n_sub: int) -> None:
        if not 0 <= self.pilot_index < n_sub:
            raise EstimationError(f"pilot index {self.pilot_index} outside [0, {n_sub})")
        if self.guard_left + self.guard_right + 1 > n_sub:
            raise EstimationError("pilot and guards cover more than the whole frame")

    def n_data(self, n_sub: int) -> int:
        return n_sub - 1 - self.guard_left - self.guard_right

    def overhead(self, n_sub: int) -> float:
        """Fraction of DAFT indices spent on pilot and guards."""
        return (1 + self.guard_left + self.guard_right) / n_sub


@dataclass(frozen=True, eq=False)
class Frame:
    """DAFT-domain symbol vector with a role label per index."""

    symbols: np.ndarray
    roles: np.ndarray

    @property
    def data_indices(self) -> np.ndarray:
        return np.flatnonzero(self.roles == Role.DATA)

    @property
    def data(self) -> np.ndarray:
        return self.symbols[self.data_indices]


@dataclass(frozen=True)
class PathEstimate:
    delay: int
    doppler: float
    gain: complex
    peak_row: int


@dataclass(frozen=True)
class ThresholdRule:
    """Detection threshold ``factor * sigma`` on pilot-response magnitudes.

    ``sigma`` is the known noise standard deviation when ``noise_var`` is given,
    otherwise it is estimated from the median power of the observed guard
    samples. ``floor_rel`` keeps numerical residue out of noiseless runs.
    """

    factor: float = 3.0
    noise_var: float | None = None
    floor_rel: float = 1e-6

    def threshold(self, samples: np.ndarray) -> float:
        mag = np.abs(samples)
        if self.noise_var is not None:
            sigma = np.sqrt(self.noise_var)
        else:
            # median of |n|^2 for circular Gaussian noise is sigma^2 ln 2
            sigma = np.sqrt(np.median(mag ** 2) / np.log(2))
        return max(self.factor * sigma, self.floor_rel * float(mag.max(initial=0.0)))


def _guard_indices(pilot: PilotConfig, n: int) -> np.ndarray:
    left = [(pilot.pilot_index - i) % n for i in range(1, pilot.guard_left + 1)]
    right = [(pilot.pilot_index + i) % n for i in range(1, pilot.guard_right + 1)]
    return np.array(left + right, dtype=int)


def build_epa_frame(data: np.ndarray, pilot: PilotConfig, params: AfdmParams) -> Frame:
    """Place a guard-protected pilot and fill the remaining indices with data."""
    n = params.n_sub
    pilot.check(n)
    data = np.asarray(data, dtype=complex).ravel()
    need = pilot.n_data(n)
    if data.size != need:
        raise EstimationError(f"expected {need} data symbols, got {data.size}")
    roles = np.full(n, Role.DATA, dtype=np.int8)
    roles[_guard_indices(pilot, n)] = Role.GUARD
    roles[pilot.pilot_index] = Role.PILOT
    symbols = np.zeros(n, dtype=complex)
    symbols[pilot.pilot_index] = pilot.pilot_amplitude
    symbols[roles == Role.DATA] = data
    symbols.setflags(write=False)
    roles.setflags(write=False)
    return Frame(symbols, roles)


def _search_window(pilot: PilotConfig) -> np.ndarray:
    if pilot.response is not None:
        return np.arange(pilot.response[0], pilot.response[1] + 1)
    return np.arange(-pilot.guard_left, pilot.guard_right + 1)


def _invert_offset(params: AfdmParams, offset: int) -> tuple[int, int]:
    """(delay, Doppler bin) for an integer diagonal offset."""
    if not params.integer_mapping:
        raise AmbiguousInversion("pilot inversion needs 2*N*c1 to be an integer")
    step = params.delay_shift
    k_sign, l_sign = shift_signs()
    if step == 0:
        # delays do not move the pilot; only Doppler is identifiable
        return 0, k_sign * offset
    ratio = offset / (l_sign * step)
    if abs(abs(ratio - np.floor(ratio)) - 0.5) < 1e-12:
        raise AmbiguousInversion(f"offset {offset} is equidistant from two delay bands")
    delay = int(round(ratio))
    if delay < 0:
        raise AmbiguousInversion(f"offset {offset} implies a negative delay")
    doppler = k_sign * (offset - l_sign * step * delay)
    return delay, doppler


def _observe(rx: np.ndarray, pilot: PilotConfig, params: AfdmParams,
             threshold: ThresholdRule) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = params.n_sub
    pilot.check(n)
    rx = np.asarray(rx, dtype=complex)
    if rx.shape != (n,):
        raise EstimationError(f"received frame must have length {n}")
    offsets = _search_window(pilot)
    rows = (pilot.pilot_index + offsets) % n
    samples = rx[rows]
    hits = np.abs(samples) > threshold.threshold(samples)
    return offsets, rows, hits


def estimate_paths_epa(rx: np.ndarray, pilot: PilotConfig, params: AfdmParams,
                       threshold: ThresholdRule = ThresholdRule(), fractional: bool = False,
                       window: ShapingWindow | None = None) -> list[PathEstimate]:
    """Estimate path delays, Dopplers and gains from the received pilot response.

    Each response sample above threshold inside the guard window is one path.
    With ``fractional=True`` the Doppler of each local peak is refined by
    parabolic interpolation of log-magnitudes over its two neighbours, and
    non-peak samples are treated as that peak's leakage.
    """
    offsets, rows, hits = _observe(rx, pilot, params, threshold)
    if not hits.any():
        raise NoPathDetected("no pilot response above threshold")
    n = params.n_sub
    mag = np.abs(rx[rows])
    amp = pilot.pilot_amplitude
    out = []
    for i in np.flatnonzero(hits):
        if fractional:
            left = mag[i - 1] if i > 0 else 0.0
            right = mag[i + 1] if i + 1 < len(mag) else 0.0
            if mag[i] < left or mag[i] < right:
                continue
        delay, k_bin = _invert_offset(params, int(offsets[i]))
        frac = 0.0
        if fractional and 0 < i < len(mag) - 1 and min(mag[i - 1], mag[i + 1]) > 0:
            a, b, c = np.log(mag[i - 1]), np.log(mag[i]), np.log(mag[i + 1])
            denom = a - 2 * b + c
            if denom < 0:
                frac = float(np.clip(0.5 * (a - c) / denom, -0.5, 0.5))
        k_sign, _ = shift_signs()
        doppler = k_bin + k_sign * frac
        phase = unit_path_phase(params, delay, rows[i], pilot.pilot_index)
        spread = 1.0
        if frac != 0.0 or (window is not None and not window.is_rect):
            spread = leakage_kernel(params, k_sign * frac, delay, window)[0]
        gain = complex(rx[rows[i]] / (amp * phase * spread))
        out.append(PathEstimate(delay, float(doppler), gain, int(rows[i])))
    out.sort(key=lambda p: -abs(p.gain))
    return out


def profile_from_estimates(estimates: list[PathEstimate]) -> DdProfile:
    return DdProfile(tuple(DdPath(e.gain, e.delay, e.doppler) for e in estimates))


def reconstruct_ecm_epa_dr(rx: np.ndarray, pilot: PilotConfig, params: AfdmParams,
                           threshold: ThresholdRule = ThresholdRule(),
                           window: ShapingWindow | None = None,
                           allow_empty: bool = False) -> Ecm:
    """Rebuild the ECM diagonal by diagonal from the received pilot response.

    Every above-threshold sample at offset ``d`` from the pilot gives one entry on
    diagonal ``d``; the rest of that diagonal follows from the unit-path phase law
    of the delay band the offset falls in. Leakage from fractional Doppler or
    shaping lands on neighbouring diagonals and is rebuilt the same way.
    """
    n = params.n_sub
    offsets, rows, hits = _observe(rx, pilot, params, threshold)
    if not hits.any() and not allow_empty:
        raise NoPathDetected("no pilot response above threshold")
    step = params.delay_shift
    _, l_sign = shift_signs()
    amp = pilot.pilot_amplitude
    matrix = np.zeros((n, n), dtype=complex)
    cols = np.arange(n)
    support = []
    for i in np.flatnonzero(hits):
        d = int(offsets[i])
        if step == 0:
            delay = 0
        else:
            delay = int(np.clip(round(d / (l_sign * step)), 0, params.l_cpp))
        diag_rows = (cols + d) % n
        h0 = rx[rows[i]] / (amp * unit_path_phase(params, delay, rows[i], pilot.pilot_index))
        matrix[diag_rows, cols] += h0 * unit_path_phase(params, delay, diag_rows, cols)
        support.append(np.stack([diag_rows, cols], axis=1))
    support_arr = (np.unique(np.concatenate(support), axis=0) if support
                   else np.zeros((0, 2), dtype=int))
    return Ecm(matrix, support_arr, params, "epa-dr",
               "rect" if window is None else window.kind.value)


def nmse(estimate: Ecm | np.ndarray, truth: Ecm | np.ndarray) -> float:
    """``||estimate - truth||_F^2 / ||truth||_F^2``."""
    est = estimate.matrix if isinstance(estimate, Ecm) else np.asarray(estimate)
    tru = truth.matrix if isinstance(truth, Ecm) else np.asarray(truth)
    if est.shape != tru.shape:
        raise ValueError(f"shape mismatch {est.shape} vs {tru.shape}")
    energy = np.sum(np.abs(tru) ** 2)
    if energy == 0:
        raise ValueError("truth has zero energy")
    return float(np.sum(np.abs(est - tru) ** 2) / energy)
