"""DAFT-domain detectors (single-tap, ZF, LMMSE, message passing, ML) and BER accounting."""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .channel import Ecm
from .core import Constellation

ML_CANDIDATE_LIMIT = 2 ** 20


class DetectionError(ValueError):
    pass


class IllConditionedChannel(DetectionError):
    """The channel cannot be inverted without regularisation."""


class DetectorKind(str, enum.Enum):
    ZF = "zf"
    LMMSE = "lmmse"
    MP = "mp"
    ML = "ml"
    SINGLE_TAP = "single_tap"


@dataclass(frozen=True)
class DetectorConfig:
    kind: DetectorKind = DetectorKind.MP
    noise_variance: float = 0.0
    mp_max_iters: int = 30
    mp_damping: float = 0.6
    mp_tol: float = 1e-6

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", DetectorKind(self.kind))
        if self.noise_variance < 0:
            raise ValueError("noise variance must be nonnegative")
        if self.mp_max_iters < 1:
            raise ValueError("mp_max_iters must be positive")
        if not 0 < self.mp_damping <= 1:
            raise ValueError("mp_damping must lie in (0, 1]")
        if self.mp_tol <= 0:
            raise ValueError("mp_tol must be positive")


@dataclass(frozen=True, eq=False)
class Detection:
    symbols: np.ndarray
    bits: np.ndarray
    soft: np.ndarray | None = None
    iterations: int = 0
    converged: bool = True


def _finish(soft: np.ndarray, constellation: Constellation, **kw) -> Detection:
    idx = constellation.nearest_index(soft)
    return Detection(constellation.points[idx], constellation.bit_map[idx].ravel(), soft, **kw)


def _matrix(ecm: Ecm | np.ndarray) -> np.ndarray:
    return ecm.matrix if isinstance(ecm, Ecm) else np.asarray(ecm, dtype=complex)


def detect_single_tap(ecm: Ecm | np.ndarray, rx: np.ndarray, constellation: Constellation,
                      cond_limit: float = 1e12) -> Detection:
    """Divide by the ECM diagonal and ignore everything else (OFDM baseline)."""
    d = np.diag(_matrix(ecm))
    mag = np.abs(d)
    if mag.min() * cond_limit < mag.max() or mag.max() == 0:
        raise IllConditionedChannel(f"faded tap: |h|min/|h|max = {mag.min() / max(mag.max(), 1e-300):.3g}")
    return _finish(np.asarray(rx) / d, constellation)


def detect_zf(ecm: Ecm | np.ndarray, rx: np.ndarray, constellation: Constellation,
              cond_limit: float = 1e12) -> Detection:
    """Zero forcing; tall matrices (more observations than symbols) use least squares."""
    h = _matrix(ecm)
    cond = np.linalg.cond(h)
    if not np.isfinite(cond) or cond > cond_limit:
        raise IllConditionedChannel(f"condition number {cond:.3g} exceeds {cond_limit:.3g}")
    if h.shape[0] == h.shape[1]:
        return _finish(linalg.solve(h, rx), constellation)
    return _finish(linalg.lstsq(h, rx)[0], constellation)


def lmmse_filter_output(h: np.ndarray, rx: np.ndarray, noise_var: float) -> np.ndarray:
    """``H^H (H H^H + s2 I)^-1 y``."""
    n = h.shape[0]
    gram = h @ h.conj().T + noise_var * np.eye(n)
    return h.conj().T @ linalg.solve(gram, rx, assume_a="her")


def detect_lmmse(ecm: Ecm | np.ndarray, rx: np.ndarray, noise_var: float,
                 constellation: Constellation) -> Detection:
    if noise_var <= 0:
        raise DetectionError("LMMSE needs a positive noise variance")
    return _finish(lmmse_filter_output(_matrix(ecm), np.asarray(rx), noise_var), constellation)


def detect_mp(ecm: Ecm, rx: np.ndarray, noise_var: float, constellation: Constellation,
              config: DetectorConfig = DetectorConfig()) -> Detection:
    """Gaussian-approximation message passing on the ECM support graph.

    Each observation treats the interference from all other connected symbols
    as Gaussian; symbol nodes combine the resulting likelihoods and send damped
    probability messages back. Returns the best beliefs with ``converged=False``
    when the iteration budget runs out.
    """
    h = ecm.matrix
    rows, cols = ecm.support[:, 0], ecm.support[:, 1]
    he = h[rows, cols]
    keep = he != 0
    rows, cols, he = rows[keep], cols[keep], he[keep]
    n = h.shape[1]
    y = np.asarray(rx, dtype=complex)
    s = constellation.points
    q = len(s)
    # tiny floor keeps noiseless runs finite
    s2 = max(noise_var, 1e-9)
    msgs = np.full((len(he), q), 1.0 / q)
    h_abs2 = np.abs(he) ** 2
    s_abs2 = np.abs(s) ** 2
    resid_base = y[rows][:, None] - he[:, None] * s[None, :]

    converged = False
    it = 0
    total = np.zeros((n, q))
    for it in range(1, config.mp_max_iters + 1):
        mean = msgs @ s
        var = np.maximum(msgs @ s_abs2 - np.abs(mean) ** 2, 0.0)
        contrib = he * mean
        row_mu = np.bincount(rows, contrib.real, minlength=h.shape[0]) \
            + 1j * np.bincount(rows, contrib.imag, minlength=h.shape[0])
        row_var = np.bincount(rows, h_abs2 * var, minlength=h.shape[0])
        mu_e = row_mu[rows] - contrib
        var_e = row_var[rows] - h_abs2 * var + s2
        loglik = -np.abs(resid_base - mu_e[:, None]) ** 2 / var_e[:, None]
        total = np.zeros((n, q))
        np.add.at(total, cols, loglik)
        ext = total[cols] - loglik
        ext -= ext.max(axis=1, keepdims=True)
        new = np.exp(ext)
        new /= new.sum(axis=1, keepdims=True)
        new = config.mp_damping * new + (1 - config.mp_damping) * msgs
        change = np.max(np.abs(new - msgs)) if len(new) else 0.0
        msgs = new
        if change < config.mp_tol:
            converged = True
            break
    idx = np.argmax(total, axis=1)
    post = np.exp(total - total.max(axis=1, keepdims=True))
    post /= post.sum(axis=1, keepdims=True)
    soft = post @ s
    return Detection(s[idx], constellation.bit_map[idx].ravel(), soft, it, converged)


def ml_candidates(constellation: Constellation, n: int, limit: int = ML_CANDIDATE_LIMIT) -> np.ndarray:
    """All ``order**n`` symbol vectors, one per row."""
    count = constellation.order ** n
    if count > limit:
        raise DetectionError(f"ML search over {count} candidates exceeds the limit {limit}")
    idx = np.array(list(itertools.product(range(constellation.order), repeat=n)), dtype=np.int64)
    return constellation.points[idx]


def ml_search(h: np.ndarray, rx: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    """Index of the candidate minimising ``||y - H x||`` for one frame or a batch.

    ``h`` is ``(N, N)`` or ``(B, N, N)`` and ``rx`` is ``(N,)`` or ``(B, N)``.
    """
    h = np.asarray(h)
    rx = np.asarray(rx)
    est = np.matmul(h, candidates.T)             # (..., N, C)
    dist = np.sum(np.abs(rx[..., :, None] - est) ** 2, axis=-2)
    return np.argmin(dist, axis=-1)


def detect_ml(ecm: Ecm | np.ndarray, rx: np.ndarray, noise_var: float,
              constellation: Constellation, limit: int = ML_CANDIDATE_LIMIT) -> Detection:
    """Exhaustive minimum-distance search; ``noise_var`` does not change the decision."""
    h = _matrix(ecm)
    cands = ml_candidates(constellation, h.shape[1], limit)
    best = cands[ml_search(h, rx, cands)]
    idx = constellation.nearest_index(best)
    return Detection(best, constellation.bit_map[idx].ravel(), best)


def detect(config: DetectorConfig, ecm: Ecm, rx: np.ndarray, constellation: Constellation) -> Detection:
    kind = config.kind
    if kind is DetectorKind.SINGLE_TAP:
        return detect_single_tap(ecm, rx, constellation)
    if kind is DetectorKind.ZF:
        return detect_zf(ecm, rx, constellation)
    if kind is DetectorKind.LMMSE:
        return detect_lmmse(ecm, rx, config.noise_variance, constellation)
    if kind is DetectorKind.MP:
        return detect_mp(ecm, rx, config.noise_variance, constellation, config)
    return detect_ml(ecm, rx, config.noise_variance, constellation)


@dataclass(frozen=True)
class BerStats:
    errors: int
    bits: int

    @property
    def ber(self) -> float:
        return self.errors / self.bits if self.bits else 0.0

    @property
    def ci95(self) -> float:
        return wilson_halfwidth(self.errors, self.bits)

    def __add__(self, other: "BerStats") -> "BerStats":
        return BerStats(self.errors + other.errors, self.bits + other.bits)


def wilson_halfwidth(errors: int, trials: int, z: float = 1.959963984540054) -> float:
    """Half-width of the Wilson score interval for a binomial proportion."""
    if trials == 0:
        return 0.0
    p = errors / trials
    denom = 1 + z * z / trials
    return z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom


def ber(tx_bits: np.ndarray, rx_bits: np.ndarray) -> BerStats:
    tx_bits = np.asarray(tx_bits).ravel()
    rx_bits = np.asarray(rx_bits).ravel()
    if tx_bits.shape != rx_bits.shape:
        raise ValueError(f"bit sequences differ in length: {tx_bits.size} vs {rx_bits.size}")
    return BerStats(int(np.count_nonzero(tx_bits != rx_bits)), int(tx_bits.size))
