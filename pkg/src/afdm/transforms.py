"""DAFT/IDAFT, chirp-periodic prefix handling and DAFT-domain pulse shaping."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.signal import windows as _sigwin

from .core import AfdmParams

__all__ = [
    "DaftPlan", "idaft", "daft", "daft_matrix", "cpp_phase", "add_cpp", "remove_cpp",
    "WindowKind", "WindowSide", "ShapingWindow", "apply_window", "shaping_matrix",
    "transmit", "receive",
]


def _wrapped_phase(x: np.ndarray) -> np.ndarray:
    """exp(j*2*pi*x) with x reduced mod 1 first to keep large arguments accurate."""
    return np.exp(2j * np.pi * np.mod(x, 1.0))


def mod1_product(coef: float, ints: np.ndarray) -> np.ndarray:
    """``coef * ints mod 1`` without rounding the full product first.

    Both factors are split into halves of at most 26 significant bits so each
    partial product is exact in float64; ``ints`` must be nonnegative and below 2**52.
    """
    c = float(coef)
    t = c * 134217729.0  # 2**27 + 1, Veltkamp split
    c_hi = t - (t - c)
    c_lo = c - c_hi
    ints = np.asarray(ints, dtype=np.int64)
    i_hi = (ints >> 26).astype(float) * 2.0 ** 26
    i_lo = (ints & (2 ** 26 - 1)).astype(float)
    acc = np.zeros(ints.shape)
    for a in (c_hi, c_lo):
        for b in (i_hi, i_lo):
            acc += np.mod(a * b, 1.0)
    return np.mod(acc, 1.0)


@dataclass(frozen=True, eq=False)
class DaftPlan:
    """Precomputed chirp phase vectors for one parameter set.

    The DAFT factors as ``diag(conj(chirp_sub)) @ F @ diag(conj(chirp_time))`` with
    ``F`` the unitary DFT, so both directions cost one FFT.
    """

    params: AfdmParams
    chirp_time: np.ndarray
    chirp_sub: np.ndarray

    @classmethod
    def build(cls, params: AfdmParams) -> "DaftPlan":
        n = np.arange(params.n_sub, dtype=np.int64)
        sq = n * n
        chirp_time = _wrapped_phase(mod1_product(params.c1, sq))
        chirp_sub = _wrapped_phase(mod1_product(params.c2, sq))
        chirp_time.setflags(write=False)
        chirp_sub.setflags(write=False)
        return cls(params, chirp_time, chirp_sub)

    @property
    def n_sub(self) -> int:
        return self.params.n_sub


def _check_len(x: np.ndarray, n: int, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    if x.shape[-1] != n:
        raise ValueError(f"{what} length {x.shape[-1]} does not match N={n}")
    return x


def idaft(plan: DaftPlan, daft_symbols: np.ndarray) -> np.ndarray:
    """Inverse DAFT along the last axis.

    ``x[n] = N^-1/2 * sum_m X[m] exp(j2pi(c1 n^2 + c2 m^2 + n m / N))``
    """
    x = _check_len(daft_symbols, plan.n_sub, "DAFT vector")
    return plan.chirp_time * np.fft.ifft(plan.chirp_sub * x, norm="ortho")


def daft(plan: DaftPlan, time_signal: np.ndarray) -> np.ndarray:
    """Forward DAFT along the last axis; the exact inverse of :func:`idaft`."""
    x = _check_len(time_signal, plan.n_sub, "time vector")
    return plan.chirp_sub.conj() * np.fft.fft(plan.chirp_time.conj() * x, norm="ortho")


def daft_matrix(params: AfdmParams) -> np.ndarray:
    """Dense unitary DAFT matrix ``A`` with ``A[m, n]`` the forward kernel."""
    n = np.arange(params.n_sub, dtype=np.int64)
    big_n = params.n_sub
    phase = (mod1_product(params.c1, n * n)[None, :] + mod1_product(params.c2, n * n)[:, None]
             + (np.outer(n, n) % big_n) / big_n)
    return _wrapped_phase(-phase) / np.sqrt(big_n)


def cpp_phase(params: AfdmParams) -> np.ndarray:
    """Phase factors applied to the copied tail, for prefix positions ``-l_cpp .. -1``."""
    n = np.arange(-params.l_cpp, 0, dtype=np.int64)
    big_n = params.n_sub
    # c1 (N^2 + 2 N n) = (2 N c1)(N + 2n)/2; use the exact integer when it is one
    two_n_c1 = round(params.two_n_c1) if params.integer_mapping else params.two_n_c1
    return _wrapped_phase(-two_n_c1 * (big_n + 2 * n) / 2.0)


def add_cpp(params: AfdmParams, time_signal: np.ndarray) -> np.ndarray:
    """Prepend the chirp-periodic prefix along the last axis."""
    x = _check_len(time_signal, params.n_sub, "time vector")
    if params.l_cpp == 0:
        return x.copy()
    prefix = x[..., params.n_sub - params.l_cpp:] * cpp_phase(params)
    return np.concatenate([prefix, x], axis=-1)


def remove_cpp(params: AfdmParams, rx: np.ndarray) -> np.ndarray:
    rx = np.asarray(rx, dtype=complex)
    expected = params.n_sub + params.l_cpp
    if rx.shape[-1] != expected:
        raise ValueError(f"received length {rx.shape[-1]} does not match N + l_cpp = {expected}")
    return rx[..., params.l_cpp:].copy()


class WindowKind(str, enum.Enum):
    RECT = "rect"
    HAMMING = "hamming"
    CHEBYSHEV = "chebyshev"


class WindowSide(str, enum.Enum):
    TX_SHAPE = "tx"
    RX_MATCHED = "rx"


@dataclass(frozen=True, eq=False)
class ShapingWindow:
    """Pulse-shaping window with total energy ``N``.

    The window is the common envelope of every chirp subcarrier, so its
    spectral sidelobes set how far fractional-Doppler energy leaks across
    DAFT bins.
    """

    kind: WindowKind
    coefficients: np.ndarray
    normalization: float
    sidelobe_db: float | None = None

    @classmethod
    def make(cls, kind: WindowKind | str, n_sub: int, sidelobe_db: float = 60.0) -> "ShapingWindow":
        kind = WindowKind(kind)
        if kind is WindowKind.RECT:
            raw = np.ones(n_sub)
        elif kind is WindowKind.HAMMING:
            raw = _sigwin.hamming(n_sub, sym=True)
        else:
            raw = _sigwin.chebwin(n_sub, at=sidelobe_db, sym=True)
        norm = np.sqrt(n_sub / np.sum(raw ** 2))
        coeffs = raw * norm
        coeffs.setflags(write=False)
        return cls(kind, coeffs, float(norm),
                   sidelobe_db if kind is WindowKind.CHEBYSHEV else None)

    @property
    def is_rect(self) -> bool:
        return self.kind is WindowKind.RECT

    @property
    def n_sub(self) -> int:
        return len(self.coefficients)


def apply_window(window: ShapingWindow, frame: np.ndarray, side: WindowSide | str,
                 plan: DaftPlan) -> np.ndarray:
    """Shape (Tx) or matched-filter (Rx) a DAFT-domain frame.

    Both sides weight every chirp subcarrier by the window envelope; in the DAFT
    domain this is the operator ``A diag(w) A^H``. The rectangular window is the
    identity.
    """
    side = WindowSide(side)
    frame = _check_len(frame, window.n_sub, "frame")
    if window.n_sub != plan.n_sub:
        raise ValueError("window and plan sizes differ")
    if window.is_rect:
        return frame.copy()
    w = window.coefficients if side is WindowSide.TX_SHAPE else window.coefficients.conj()
    return daft(plan, w * idaft(plan, frame))


def shaping_matrix(window: ShapingWindow, plan: DaftPlan) -> np.ndarray:
    """DAFT-domain operator of Tx shaping followed by Rx matched filtering (no channel)."""
    a = daft_matrix(plan.params)
    w2 = np.abs(window.coefficients) ** 2
    return (a * w2[None, :]) @ a.conj().T


def transmit(plan: DaftPlan, frame: np.ndarray, window: ShapingWindow | None = None) -> np.ndarray:
    """DAFT frame -> shaped time samples with prefix."""
    x = idaft(plan, frame)
    if window is not None and not window.is_rect:
        x = x * window.coefficients
    return add_cpp(plan.params, x)


def receive(plan: DaftPlan, rx: np.ndarray, window: ShapingWindow | None = None) -> np.ndarray:
    """Received samples with prefix -> matched-filtered DAFT-domain frame."""
    r = remove_cpp(plan.params, rx)
    if window is not None and not window.is_rect:
        r = r * window.coefficients.conj()
    return daft(plan, r)
