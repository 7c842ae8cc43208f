"""Doubly dispersive channel, AWGN, and the effective DAFT-domain channel matrix."""

from __future__ import annotations

import functools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import AfdmParams, DdPath, DdProfile, validate_params
from .transforms import DaftPlan, ShapingWindow, mod1_product, receive, transmit

PROFILE_SCHEMA = "afdm.dd-profile"
PROFILE_VERSION = 1


class ChannelError(ValueError):
    """A profile cannot be applied with the given parameters."""


@dataclass(frozen=True)
class NoiseSpec:
    """Complex noise variance per sample, split evenly between I and Q."""

    variance: float
    label: str = "noise"

    def __post_init__(self) -> None:
        if self.variance < 0:
            raise ValueError("noise variance must be nonnegative")


@dataclass(frozen=True, eq=False)
class Ecm:
    """Effective channel matrix: maps the transmitted DAFT frame to the received one."""

    matrix: np.ndarray
    support: np.ndarray
    params: AfdmParams
    profile_digest: str
    window: str = "rect"

    @property
    def n_sub(self) -> int:
        return self.matrix.shape[0]

    def nonzeros_per_row(self, tol: float = 1e-10) -> np.ndarray:
        scale = np.max(np.abs(self.matrix))
        return np.count_nonzero(np.abs(self.matrix) > tol * scale, axis=1)

    def support_mask(self) -> np.ndarray:
        mask = np.zeros(self.matrix.shape, dtype=bool)
        if len(self.support):
            mask[self.support[:, 0], self.support[:, 1]] = True
        return mask


def _check_delays(profile: DdProfile, params: AfdmParams) -> None:
    if profile.l_max > params.l_cpp:
        raise ChannelError(f"path delay {profile.l_max} exceeds prefix length {params.l_cpp}")


def apply_ddc(profile: DdProfile, tx: np.ndarray, params: AfdmParams) -> np.ndarray:
    """Pass prefixed samples through the multipath channel along the last axis.

    ``r[n] = sum_p g_p exp(j2pi nu_p n / N) s[n - l_p]`` where ``n = 0`` is the first
    sample after the prefix and samples before the frame are zero.
    """
    _check_delays(profile, params)
    tx = np.asarray(tx, dtype=complex)
    total = params.n_sub + params.l_cpp
    if tx.shape[-1] != total:
        raise ChannelError(f"signal length {tx.shape[-1]} does not match N + l_cpp = {total}")
    n = np.arange(total) - params.l_cpp
    out = np.zeros_like(tx)
    for path in profile.paths:
        rot = path.gain * np.exp(2j * np.pi * path.doppler * n / params.n_sub)
        l = path.delay
        if l == 0:
            out += rot * tx
        else:
            out[..., l:] += rot[l:] * tx[..., :-l]
    return out


def add_awgn(signal: np.ndarray, noise: NoiseSpec, rng: np.random.Generator) -> np.ndarray:
    """Add circular complex Gaussian noise of variance ``noise.variance``."""
    signal = np.asarray(signal, dtype=complex)
    if noise.variance == 0:
        return signal.copy()
    scale = np.sqrt(noise.variance / 2)
    w = rng.standard_normal(signal.shape + (2,)) * scale
    return signal + (w[..., 0] + 1j * w[..., 1])


def build_ecm(profile: DdProfile, params: AfdmParams, window: ShapingWindow | None = None,
              support_band: int | None = None) -> Ecm:
    """Effective channel matrix measured column by column through the noiseless chain.

    Column ``m`` is the received DAFT frame when the unit vector ``e_m`` is sent.
    """
    if not validate_params(params, profile)["cpp_sufficiency"].passed:
        raise ChannelError(f"path delay {profile.l_max} exceeds prefix length {params.l_cpp}")
    plan = DaftPlan.build(params)
    eye = np.eye(params.n_sub, dtype=complex)
    # rows of `received` are the columns of the ECM
    received = receive(plan, apply_ddc(profile, transmit(plan, eye, window), params), window)
    matrix = received.T.copy()
    support = default_support(profile, params, matrix, window, support_band)
    return Ecm(matrix, support, params, profile.digest(),
               "rect" if window is None else window.kind.value)


def default_support(profile: DdProfile, params: AfdmParams, matrix: np.ndarray,
                    window: ShapingWindow | None, band: int | None) -> np.ndarray:
    """Predicted support when the shift law is exact, measured support otherwise."""
    exact = (params.integer_mapping and profile.integer_doppler
             and (window is None or window.is_rect))
    if exact and band is None:
        return predict_support(profile, params)
    if params.integer_mapping and band is not None:
        return predict_support(profile, params, band=band)
    scale = np.max(np.abs(matrix))
    rows, cols = np.nonzero(np.abs(matrix) > 1e-10 * scale)
    return np.stack([rows, cols], axis=1)


@functools.lru_cache(maxsize=None)
def shift_signs() -> tuple[int, int]:
    """Direction of the DAFT-domain shift per unit Doppler and per unit delay.

    Measured once on probe paths through :func:`build_ecm` so the prediction
    always agrees with the transform's sign convention.
    """
    params = AfdmParams(16, 1 / 32, 0.0, 2)

    def peak_offset(delay: int, doppler: float) -> int:
        prof = DdProfile((DdPath(1.0, delay, doppler),))
        plan = DaftPlan.build(params)
        e0 = np.zeros(16, dtype=complex)
        e0[0] = 1
        col = receive(plan, apply_ddc(prof, transmit(plan, e0), params))
        row = int(np.argmax(np.abs(col)))
        return row if row < 8 else row - 16

    return peak_offset(0, 1.0), peak_offset(1, 0.0)


def path_offset(params: AfdmParams, delay: int, doppler: float) -> int:
    """Integer DAFT-domain diagonal offset (row - col) of one path, before wrapping."""
    k_sign, l_sign = shift_signs()
    return k_sign * int(round(doppler)) + l_sign * params.delay_shift * delay


def offset_range(params: AfdmParams, l_max: int, k_max: int) -> tuple[int, int]:
    """Smallest and largest diagonal offset reachable with the given spreads."""
    corners = [path_offset(params, l, k) for l in (0, l_max) for k in (-k_max, k_max)]
    return min(corners), max(corners)


def predict_support(profile: DdProfile, params: AfdmParams, band: int | None = None) -> np.ndarray:
    """Predicted nonzero ``(row, col)`` entries of the ECM, sorted and unique.

    With ``band`` each predicted entry widens to ``band`` rows on either side,
    which covers fractional-Doppler leakage.
    """
    if not params.integer_mapping:
        raise ChannelError("support prediction needs 2*N*c1 to be an integer")
    if band is None:
        if not profile.integer_doppler:
            raise ChannelError("fractional Doppler needs a band half-width")
        band = 0
    n = params.n_sub
    offsets = {path_offset(params, p.delay, p.doppler) + b
               for p in profile.paths for b in range(-band, band + 1)}
    cols = np.arange(n)
    pairs = np.concatenate([np.stack([(cols + d) % n, cols], axis=1) for d in sorted(offsets)])
    pairs = np.unique(pairs, axis=0)
    return pairs


def unit_path_phase(params: AfdmParams, delay: int, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Unit-modulus factor of a delay-``delay`` path at ECM entries ``(rows, cols)``.

    Along any diagonal the remaining factor of a path's contribution depends only
    on the diagonal, so this phase law is all that is needed to extend one
    observed entry to the full diagonal.
    """
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    n = params.n_sub
    arg = (mod1_product(params.c2, (cols % n) ** 2) - mod1_product(params.c2, (rows % n) ** 2)
           + params.c1 * delay * delay - (delay * cols % n) / n)
    return np.exp(2j * np.pi * np.mod(arg, 1.0))


def leakage_kernel(params: AfdmParams, theta: np.ndarray, delay: int = 0,
                   window: ShapingWindow | None = None) -> np.ndarray:
    """Spreading factor ``(1/N) sum_n w_rx[n] w_tx[n - delay] exp(j2pi n theta / N)``.

    ``theta`` is the distance from the entry to the exact (possibly fractional)
    path location. Equals 1 at theta = 0 and vanishes at other integers for the
    rectangular window.
    """
    n = params.n_sub
    idx = np.arange(n)
    if window is None or window.is_rect:
        w = np.ones(n)
    else:
        w = window.coefficients.conj() * np.roll(window.coefficients, delay)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    return (np.exp(2j * np.pi * np.outer(theta, idx) / n) @ w) / n


def random_profile(rng: np.random.Generator, n_paths: int, l_max: int, k_max: int,
                   fractional: int = 0, normalize: str = "instantaneous") -> DdProfile:
    """Random profile with distinct (delay, Doppler-bin) pairs.

    Delays are drawn from ``0..l_max`` and integer Doppler bins from
    ``-k_max..k_max``; the first ``fractional`` paths get a uniform offset within
    their bin. Gains are complex Gaussian with total power one, either exactly
    (``"instantaneous"``) or on average (``"average"``).
    """
    cells = [(l, k) for l in range(l_max + 1) for k in range(-k_max, k_max + 1)]
    if n_paths > len(cells):
        raise ValueError(f"{n_paths} paths do not fit in {len(cells)} distinct DD bins")
    chosen = rng.choice(len(cells), size=n_paths, replace=False)
    g = (rng.standard_normal(n_paths) + 1j * rng.standard_normal(n_paths)) / np.sqrt(2)
    if normalize == "instantaneous":
        g = g / np.linalg.norm(g)
    elif normalize == "average":
        g = g / np.sqrt(n_paths)
    else:
        raise ValueError(f"unknown normalization {normalize!r}")
    offsets = rng.uniform(-0.5, 0.5, size=n_paths)
    paths = []
    for i, c in enumerate(chosen):
        l, k = cells[c]
        nu = float(k)
        if i < fractional:
            nu = float(np.clip(k + offsets[i], -k_max, k_max))
        paths.append(DdPath(complex(g[i]), l, nu))
    return DdProfile(tuple(paths))


def profile_to_json(profile: DdProfile) -> str:
    doc = {"schema": PROFILE_SCHEMA, "version": PROFILE_VERSION, **profile.to_dict()}
    return json.dumps(doc, indent=2)


def profile_from_dict(doc: dict) -> DdProfile:
    if doc.get("schema", PROFILE_SCHEMA) != PROFILE_SCHEMA:
        raise ValueError(f"not a DD profile document: schema={doc.get('schema')!r}")
    if doc.get("version", PROFILE_VERSION) != PROFILE_VERSION:
        raise ValueError(f"unsupported profile version {doc.get('version')}")
    unknown = set(doc) - {"schema", "version", "paths"}
    if unknown:
        raise ValueError(f"unknown profile keys: {sorted(unknown)}")
    paths = []
    for p in doc["paths"]:
        extra = set(p) - {"gain_re", "gain_im", "delay", "doppler"}
        if extra:
            raise ValueError(f"unknown path keys: {sorted(extra)}")
        paths.append(DdPath(complex(p["gain_re"], p.get("gain_im", 0.0)),
                            int(p["delay"]), float(p["doppler"])))
    return DdProfile(tuple(paths))


def save_profile(profile: DdProfile, path: str | Path) -> None:
    Path(path).write_text(profile_to_json(profile) + "\n")


def load_profile(path: str | Path) -> DdProfile:
    return profile_from_dict(json.loads(Path(path).read_text()))
