"""Domain types, parameter validation and symbol mapping shared by every module."""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

# Tolerance for deciding that 2*N*c1 is an integer.
_INT_TOL = 1e-9


def _is_integer(x: float, tol: float = _INT_TOL) -> bool:
    return abs(x - round(x)) <= tol


@dataclass(frozen=True)
class AfdmParams:
    """Waveform configuration.

    Parameters
    ----------
    n_sub : int
        Number of chirp subcarriers ``N``.
    c1, c2 : float
        Chirp parameters. ``c1 = c2 = 0`` is OFDM, ``c1 = c2 = 1/(2N)`` is OCDM.
    l_cpp : int
        Prefix length in samples.
    """

    n_sub: int
    c1: float
    c2: float = 0.0
    l_cpp: int = 0
    two_n_c1: float = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if int(self.n_sub) != self.n_sub or self.n_sub < 2:
            raise ValueError(f"n_sub must be an integer >= 2, got {self.n_sub}")
        if int(self.l_cpp) != self.l_cpp or self.l_cpp < 0:
            raise ValueError(f"l_cpp must be a nonnegative integer, got {self.l_cpp}")
        if self.l_cpp >= self.n_sub:
            raise ValueError(f"l_cpp ({self.l_cpp}) must be smaller than n_sub ({self.n_sub})")
        object.__setattr__(self, "n_sub", int(self.n_sub))
        object.__setattr__(self, "l_cpp", int(self.l_cpp))
        object.__setattr__(self, "c1", float(self.c1))
        object.__setattr__(self, "c2", float(self.c2))
        object.__setattr__(self, "two_n_c1", 2.0 * self.n_sub * self.c1)

    @property
    def integer_mapping(self) -> bool:
        """True when a unit delay moves a DAFT-domain symbol by a whole number of bins."""
        return _is_integer(self.two_n_c1)

    @property
    def delay_shift(self) -> int:
        """Integer DAFT-domain step per unit delay. Only defined in integer-mapping mode."""
        if not self.integer_mapping:
            raise ValueError(f"2*N*c1 = {self.two_n_c1} is not an integer")
        return int(round(self.two_n_c1))

    @property
    def cpp_is_cp(self) -> bool:
        return self.integer_mapping and self.n_sub % 2 == 0

    @classmethod
    def ofdm(cls, n_sub: int, l_cpp: int = 0) -> "AfdmParams":
        return cls(n_sub, 0.0, 0.0, l_cpp)

    @classmethod
    def ocdm(cls, n_sub: int, l_cpp: int = 0) -> "AfdmParams":
        return cls(n_sub, 1.0 / (2 * n_sub), 1.0 / (2 * n_sub), l_cpp)

    @classmethod
    def afdm(cls, n_sub: int, k_max: int, l_cpp: int = 0, c2: float = 0.0,
             doppler_guard: int = 0) -> "AfdmParams":
        """Smallest c1 on the 1/(2N) grid that keeps delay/Doppler offsets distinct.

        ``doppler_guard`` widens the per-delay Doppler band by that many bins on each
        side, leaving room for fractional-Doppler leakage.
        """
        steps = 2 * (k_max + doppler_guard) + 1
        return cls(n_sub, steps / (2 * n_sub), c2, l_cpp)

    def to_dict(self) -> dict:
        return {"n_sub": self.n_sub, "c1": self.c1, "c2": self.c2, "l_cpp": self.l_cpp}


@dataclass(frozen=True)
class GridSpec:
    """Physical time/frequency grid derived from bandwidth and subcarrier count."""

    bandwidth: float
    n_sub: int
    sample_interval: float = field(init=False)
    subcarrier_spacing: float = field(init=False)
    frame_duration: float = field(init=False)

    def __post_init__(self) -> None:
        if self.bandwidth <= 0 or self.n_sub < 1:
            raise ValueError("bandwidth and n_sub must be positive")
        object.__setattr__(self, "sample_interval", 1.0 / self.bandwidth)
        object.__setattr__(self, "subcarrier_spacing", self.bandwidth / self.n_sub)
        # T = N / B so that T * df == 1 exactly up to one rounding
        object.__setattr__(self, "frame_duration", self.n_sub / self.bandwidth)

    def normalized_doppler(self, doppler_hz: float) -> float:
        return doppler_hz / self.subcarrier_spacing

    def normalized_delay(self, delay_s: float) -> float:
        return delay_s / self.sample_interval


@dataclass(frozen=True)
class DdPath:
    """One propagation path: complex gain, integer sample delay, normalized Doppler."""

    gain: complex
    delay: int
    doppler: float

    def __post_init__(self) -> None:
        if int(self.delay) != self.delay or self.delay < 0:
            raise ValueError(f"delay must be a nonnegative integer, got {self.delay}")
        object.__setattr__(self, "delay", int(self.delay))
        object.__setattr__(self, "gain", complex(self.gain))
        object.__setattr__(self, "doppler", float(self.doppler))

    @property
    def integer_doppler(self) -> bool:
        return _is_integer(self.doppler)


@dataclass(frozen=True)
class DdProfile:
    """Ordered set of propagation paths. ``l_max`` and ``k_max`` are always derived."""

    paths: tuple[DdPath, ...]

    def __post_init__(self) -> None:
        paths = tuple(self.paths)
        if not paths:
            raise ValueError("a profile needs at least one path")
        object.__setattr__(self, "paths", paths)

    @classmethod
    def from_tuples(cls, triples: Iterable[Sequence]) -> "DdProfile":
        """Build from ``(gain, delay, doppler)`` triples."""
        return cls(tuple(DdPath(complex(g), int(l), float(k)) for g, l, k in triples))

    @classmethod
    def identity(cls) -> "DdProfile":
        return cls((DdPath(1.0, 0, 0.0),))

    def __len__(self) -> int:
        return len(self.paths)

    @property
    def l_max(self) -> int:
        return max(p.delay for p in self.paths)

    @property
    def k_max(self) -> int:
        # ceil keeps fractional Doppler inside the bijectivity budget
        return int(math.ceil(max(abs(p.doppler) for p in self.paths) - _INT_TOL))

    @property
    def gains(self) -> np.ndarray:
        return np.array([p.gain for p in self.paths], dtype=complex)

    @property
    def delays(self) -> np.ndarray:
        return np.array([p.delay for p in self.paths], dtype=int)

    @property
    def dopplers(self) -> np.ndarray:
        return np.array([p.doppler for p in self.paths], dtype=float)

    @property
    def integer_doppler(self) -> bool:
        return all(p.integer_doppler for p in self.paths)

    def collisions(self) -> list[tuple[int, int]]:
        """(delay, rounded Doppler) pairs shared by more than one path."""
        seen: dict[tuple[int, int], int] = {}
        for p in self.paths:
            key = (p.delay, int(round(p.doppler)))
            seen[key] = seen.get(key, 0) + 1
        return [k for k, v in seen.items() if v > 1]

    def to_dict(self) -> dict:
        return {
            "paths": [
                {"gain_re": p.gain.real, "gain_im": p.gain.imag,
                 "delay": p.delay, "doppler": p.doppler}
                for p in self.paths
            ]
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class Finding:
    name: str
    passed: bool
    reason: str


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple[Finding, ...]

    @property
    def ok(self) -> bool:
        return all(f.passed for f in self.findings)

    def __getitem__(self, name: str) -> Finding:
        for f in self.findings:
            if f.name == name:
                return f
        raise KeyError(name)

    def failures(self) -> list[Finding]:
        return [f for f in self.findings if not f.passed]

    def to_dict(self) -> dict:
        return {"ok": self.ok,
                "findings": [{"name": f.name, "passed": f.passed, "reason": f.reason}
                             for f in self.findings]}


def validate_params(params: AfdmParams, profile: DdProfile) -> ValidationReport:
    """Check a parameter set against a channel profile.

    Never raises; callers decide which failures are fatal. Findings are
    ``bijectivity``, ``cpp_sufficiency``, ``cp_reduction``, ``aliasing`` and
    ``separability``.
    """
    n = params.n_sub
    k_max, l_max = profile.k_max, profile.l_max
    c1_min = (2 * k_max + 1) / (2 * n)
    # relative slack so that the exact minimum passes after float rounding
    bij = abs(params.c1) >= c1_min * (1 - 1e-12)
    findings = [
        Finding("bijectivity", bij,
                f"|c1|={abs(params.c1):.6g} {'>=' if bij else '<'} (2*k_max+1)/(2N)={c1_min:.6g}"),
    ]
    cpp_ok = params.l_cpp >= l_max
    findings.append(Finding("cpp_sufficiency", cpp_ok,
                            f"l_cpp={params.l_cpp} {'>=' if cpp_ok else '<'} l_max={l_max}"))
    cp_red = params.cpp_is_cp
    findings.append(Finding(
        "cp_reduction", cp_red,
        f"2N*c1={params.two_n_c1:.6g} ({'integer' if params.integer_mapping else 'non-integer'}), "
        f"N {'even' if n % 2 == 0 else 'odd'}"))
    spread = abs(params.two_n_c1) * l_max + 2 * k_max + 1
    alias_ok = spread <= n
    findings.append(Finding("aliasing", alias_ok,
                            f"DAFT-domain spread {spread:.6g} {'<=' if alias_ok else '>'} N={n}"))
    if params.integer_mapping:
        coll = profile.collisions()
        findings.append(Finding("separability", not coll,
                                "distinct (delay, Doppler) pairs" if not coll
                                else f"paths share (delay, doppler) bins {coll}"))
    return ValidationReport(tuple(findings))


def noise_variance(snr_db: float) -> float:
    """Per-sample complex noise variance for unit-energy symbols at the given Es/N0."""
    return 10.0 ** (-snr_db / 10.0)


class ConstellationKind(str, enum.Enum):
    BPSK = "bpsk"
    QPSK = "qpsk"
    QAM16 = "qam16"


@dataclass(frozen=True, eq=False)
class Constellation:
    """Unit-energy Gray-labelled constellation.

    ``bit_map[i]`` holds the bit label of ``points[i]`` (MSB first).
    """

    kind: ConstellationKind
    points: np.ndarray
    bit_map: np.ndarray

    @property
    def bits_per_symbol(self) -> int:
        return self.bit_map.shape[1]

    @property
    def order(self) -> int:
        return len(self.points)

    @classmethod
    def make(cls, kind: ConstellationKind | str) -> "Constellation":
        kind = ConstellationKind(kind)
        if kind is ConstellationKind.BPSK:
            labels = np.array([[0], [1]])
            points = 1.0 - 2.0 * labels[:, 0] + 0j
        elif kind is ConstellationKind.QPSK:
            labels = np.array([[b0, b1] for b0 in (0, 1) for b1 in (0, 1)])
            points = ((1 - 2 * labels[:, 0]) + 1j * (1 - 2 * labels[:, 1])) / np.sqrt(2)
        else:
            labels = np.array([[(i >> s) & 1 for s in (3, 2, 1, 0)] for i in range(16)])
            b0, b1, b2, b3 = labels.T
            re = (1 - 2 * b0) * (2 - (1 - 2 * b2))
            im = (1 - 2 * b1) * (2 - (1 - 2 * b3))
            points = (re + 1j * im) / np.sqrt(10)
        points = np.asarray(points, dtype=complex)
        points.setflags(write=False)
        labels = labels.astype(np.uint8)
        labels.setflags(write=False)
        return cls(kind, points, labels)

    def modulate(self, bits: np.ndarray) -> np.ndarray:
        return modulate_bits(bits, self)

    def demap(self, symbols: np.ndarray) -> np.ndarray:
        return demap_symbols(symbols, self)

    def nearest_index(self, symbols: np.ndarray) -> np.ndarray:
        symbols = np.asarray(symbols)
        d = np.abs(symbols[..., None] - self.points) ** 2
        return np.argmin(d, axis=-1)

    def quantize(self, symbols: np.ndarray) -> np.ndarray:
        return self.points[self.nearest_index(symbols)]


def modulate_bits(bits: np.ndarray, constellation: Constellation) -> np.ndarray:
    """Map a flat bit sequence onto constellation points."""
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    bps = constellation.bits_per_symbol
    if bits.size % bps:
        raise ValueError(f"bit count {bits.size} is not a multiple of {bps}")
    groups = bits.reshape(-1, bps)
    weights = 1 << np.arange(bps - 1, -1, -1)
    label_index = constellation.bit_map.astype(int) @ weights
    lookup = np.empty(1 << bps, dtype=int)
    lookup[label_index] = np.arange(constellation.order)
    return constellation.points[lookup[groups.astype(int) @ weights]]


def demap_symbols(symbols: np.ndarray, constellation: Constellation) -> np.ndarray:
    """Hard-decision, minimum Euclidean distance demapping to bits."""
    idx = constellation.nearest_index(np.asarray(symbols).ravel())
    return constellation.bit_map[idx].ravel()


def _label_key(label: object) -> int:
    if isinstance(label, (int, np.integer)):
        return int(label)
    return int.from_bytes(hashlib.sha256(str(label).encode()).digest()[:8], "little")


def rng_stream(master_seed: int, *labels: object) -> np.random.Generator:
    """Independent generator for ``(master_seed, *labels)``.

    Streams depend only on their labels, never on the order in which they are
    requested, so work can be split over any number of workers.
    """
    key = tuple(_label_key(x) for x in labels)
    return np.random.default_rng(np.random.SeedSequence(int(master_seed), spawn_key=key))
