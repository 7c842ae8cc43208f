"""Experiment configuration: schema, YAML loading, presets and digests.

A config document is a YAML mapping. Every key is optional except where noted;
unknown keys anywhere are rejected so that typos never fall back silently to
defaults. Version 1 layout::

    schema_version: 1
    waveform: afdm          # afdm | ocdm | ofdm | custom
    c1: null                # required for custom
    c2: 0.0                 # afdm and custom only
    doppler_guard: 0        # extra Doppler bins per side in the afdm preset
    n_sub: 128
    l_cpp: null             # defaults to the largest profile delay
    constellation: qpsk     # bpsk | qpsk | qam16
    detector: {kind: mp, max_iters: 30, damping: 0.6, tol: 1.0e-6}
    window: {kind: rect, sidelobe_db: 60}
    csi: genie              # genie | estimated
    pilot: {amplitude: 1.0, threshold_factor: 3.0}
    profile:
      source: random        # random | file | explicit
      n_paths: 6
      l_max: 3
      k_max: 2
      fractional: 0         # number of paths with fractional Doppler
      normalize: instantaneous
      path: null            # file source
      paths: []             # explicit source: [{delay, doppler, gain_re, gain_im}]
      fading: none          # file/explicit: none | rayleigh
    snr: {start: 0, stop: 20, step: 2}
    frames: 1000
    block: 50               # frames per work item
    early_stop_errors: 200  # 0 disables
    seed: 1
    workers: 1
    multiaccess: {direction: uplink, shared_pilot: true, users: []}
"""

from __future__ import annotations

import copy
import enum
import hashlib
import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from ..channel import load_profile, profile_from_dict, random_profile
from ..core import AfdmParams, Constellation, ConstellationKind, DdPath, DdProfile
from ..detection import DetectorConfig, DetectorKind
from ..multiaccess import Direction, UserSpec
from ..transforms import ShapingWindow, WindowKind

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


class Waveform(str, enum.Enum):
    AFDM = "afdm"
    OCDM = "ocdm"
    OFDM = "ofdm"
    CUSTOM = "custom"


class Csi(str, enum.Enum):
    GENIE = "genie"
    ESTIMATED = "estimated"


@dataclass(frozen=True)
class SnrGrid:
    start: float
    stop: float
    step: float

    def __post_init__(self) -> None:
        if not self.step > 0:
            raise ConfigError(f"SNR step must be positive, got {self.step}")
        if self.stop < self.start:
            raise ConfigError(f"empty SNR grid {self.start}:{self.stop}:{self.step}")

    @classmethod
    def parse(cls, text: str) -> "SnrGrid":
        """``start:stop:step`` with an inclusive stop, e.g. ``0:30:10``."""
        parts = text.split(":")
        if len(parts) == 1:
            v = float(parts[0])
            return cls(v, v, 1.0)
        if len(parts) != 3:
            raise ConfigError(f"SNR grid must look like start:stop:step, got {text!r}")
        return cls(*(float(p) for p in parts))

    def points(self) -> list[float]:
        count = int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        return [round(self.start + i * self.step, 10) for i in range(count)]


@dataclass(frozen=True)
class ProfileSource:
    source: str = "random"
    n_paths: int = 6
    l_max: int = 3
    k_max: int = 2
    fractional: int = 0
    normalize: str = "instantaneous"
    path: str | None = None
    paths: tuple[tuple[float, float, int, float], ...] = ()
    fading: str = "none"

    def __post_init__(self) -> None:
        if self.source not in ("random", "file", "explicit"):
            raise ConfigError(f"unknown profile source {self.source!r}")
        if self.fading not in ("none", "rayleigh"):
            raise ConfigError(f"unknown fading {self.fading!r}")
        if self.normalize not in ("instantaneous", "average"):
            raise ConfigError(f"unknown normalization {self.normalize!r}")
        if self.source == "file" and not self.path:
            raise ConfigError("profile source 'file' needs a path")
        if self.source == "explicit" and not self.paths:
            raise ConfigError("profile source 'explicit' needs at least one path")
        if self.source == "random":
            if self.n_paths < 1 or self.l_max < 0 or self.k_max < 0:
                raise ConfigError("random profiles need n_paths >= 1 and nonnegative bounds")
            if not 0 <= self.fractional <= self.n_paths:
                raise ConfigError("fractional must lie in [0, n_paths]")

    def base_profile(self) -> DdProfile | None:
        """The fixed profile for file and explicit sources, ``None`` for random ones."""
        if self.source == "file":
            return load_profile(self.path)
        if self.source == "explicit":
            return DdProfile(tuple(DdPath(complex(re, im), int(l), float(k))
                                   for re, im, l, k in self.paths))
        return None

    def bounds(self) -> tuple[int, int]:
        """``(l_max, k_max)`` any drawn profile respects."""
        base = self.base_profile()
        if base is None:
            return self.l_max, self.k_max
        return base.l_max, base.k_max

    def draw(self, rng: np.random.Generator, base: DdProfile | None = None) -> DdProfile:
        if self.source == "random":
            return random_profile(rng, self.n_paths, self.l_max, self.k_max,
                                  self.fractional, self.normalize)
        base = self.base_profile() if base is None else base
        if self.fading == "none":
            return base
        n = len(base)
        g = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2)
        return DdProfile(tuple(replace(p, gain=complex(p.gain * gi)) for p, gi in zip(base.paths, g)))


@dataclass(frozen=True)
class UserEntry:
    user_id: str
    demand: int
    margin: int = 0
    profile: ProfileSource = field(default_factory=ProfileSource)


@dataclass(frozen=True)
class MultiAccessConfig:
    direction: str = "uplink"
    shared_pilot: bool = True
    users: tuple[UserEntry, ...] = ()

    def user_specs(self) -> list[UserSpec]:
        out = []
        for u in self.users:
            prof = u.profile.base_profile()
            if prof is None:
                raise ConfigError(f"user {u.user_id}: allocation needs a file or explicit profile")
            out.append(UserSpec(u.user_id, prof, u.demand, u.margin))
        return out


@dataclass(frozen=True)
class ExperimentConfig:
    waveform: Waveform = Waveform.AFDM
    c1: float | None = None
    c2: float = 0.0
    doppler_guard: int = 0
    n_sub: int = 128
    l_cpp: int | None = None
    constellation: ConstellationKind = ConstellationKind.QPSK
    detector: DetectorKind = DetectorKind.MP
    mp_max_iters: int = 30
    mp_damping: float = 0.6
    mp_tol: float = 1e-6
    window: WindowKind = WindowKind.RECT
    sidelobe_db: float = 60.0
    csi: Csi = Csi.GENIE
    pilot_amplitude: float = 1.0
    threshold_factor: float = 3.0
    profile: ProfileSource = field(default_factory=ProfileSource)
    snr: SnrGrid = field(default_factory=lambda: SnrGrid(0.0, 20.0, 2.0))
    frames: int = 1000
    block: int = 50
    early_stop_errors: int = 200
    seed: int = 1
    workers: int = 1
    multiaccess: MultiAccessConfig = field(default_factory=MultiAccessConfig)

    def __post_init__(self) -> None:
        for name, cls in (("waveform", Waveform), ("constellation", ConstellationKind),
                          ("detector", DetectorKind), ("window", WindowKind), ("csi", Csi)):
            try:
                object.__setattr__(self, name, cls(getattr(self, name)))
            except ValueError:
                choices = ", ".join(m.value for m in cls)
                raise ConfigError(f"{name} must be one of {choices}, got {getattr(self, name)!r}") from None
        if self.frames < 1:
            raise ConfigError("frames must be at least 1")
        if self.block < 1:
            raise ConfigError("block must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.early_stop_errors < 0:
            raise ConfigError("early_stop_errors must be nonnegative")
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.waveform is Waveform.CUSTOM and self.c1 is None:
            raise ConfigError("waveform 'custom' needs c1")
        if self.pilot_amplitude <= 0:
            raise ConfigError("pilot amplitude must be positive")

    # derived objects

    def params(self) -> AfdmParams:
        n = self.n_sub
        l_max, k_max = self.profile.bounds()
        l_cpp = l_max if self.l_cpp is None else self.l_cpp
        if self.waveform is Waveform.OFDM:
            return AfdmParams.ofdm(n, l_cpp)
        if self.waveform is Waveform.OCDM:
            return AfdmParams.ocdm(n, l_cpp)
        if self.waveform is Waveform.CUSTOM:
            return AfdmParams(n, self.c1, self.c2, l_cpp)
        # fractional Doppler spans ceil(k_max) bins
        return AfdmParams.afdm(n, int(math.ceil(k_max)), l_cpp, self.c2, self.doppler_guard)

    def make_constellation(self) -> Constellation:
        return Constellation.make(self.constellation)

    def make_window(self) -> ShapingWindow | None:
        if self.window is WindowKind.RECT:
            return None
        return ShapingWindow.make(self.window, self.n_sub, self.sidelobe_db)

    def detector_config(self, noise_var: float) -> DetectorConfig:
        return DetectorConfig(self.detector, noise_var, self.mp_max_iters,
                              self.mp_damping, self.mp_tol)

    # serialization

    def to_dict(self) -> dict[str, Any]:
        p = self.profile
        prof: dict[str, Any] = {"source": p.source}
        if p.source == "random":
            prof.update(n_paths=p.n_paths, l_max=p.l_max, k_max=p.k_max,
                        fractional=p.fractional, normalize=p.normalize)
        else:
            if p.source == "file":
                prof["path"] = p.path
            else:
                prof["paths"] = [{"gain_re": re, "gain_im": im, "delay": l, "doppler": k}
                                 for re, im, l, k in p.paths]
            prof["fading"] = p.fading
        doc = {
            "schema_version": SCHEMA_VERSION,
            "waveform": self.waveform.value,
            "c1": self.c1,
            "c2": self.c2,
            "doppler_guard": self.doppler_guard,
            "n_sub": self.n_sub,
            "l_cpp": self.l_cpp,
            "constellation": self.constellation.value,
            "detector": {"kind": self.detector.value, "max_iters": self.mp_max_iters,
                         "damping": self.mp_damping, "tol": self.mp_tol},
            "window": {"kind": self.window.value, "sidelobe_db": self.sidelobe_db},
            "csi": self.csi.value,
            "pilot": {"amplitude": self.pilot_amplitude,
                      "threshold_factor": self.threshold_factor},
            "profile": prof,
            "snr": {"start": self.snr.start, "stop": self.snr.stop, "step": self.snr.step},
            "frames": self.frames,
            "block": self.block,
            "early_stop_errors": self.early_stop_errors,
            "seed": self.seed,
            "workers": self.workers,
        }
        return doc

    def digest(self) -> str:
        """Hash of everything that can change results; ``workers`` is excluded."""
        doc = self.to_dict()
        doc.pop("workers")
        blob = json.dumps(doc, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


_TOP_KEYS = {"schema_version", "waveform", "c1", "c2", "doppler_guard", "n_sub", "l_cpp",
             "constellation", "detector", "window", "csi", "pilot", "profile", "snr", "frames",
             "block", "early_stop_errors", "seed", "workers", "multiaccess"}
_PROFILE_KEYS = {f.name for f in fields(ProfileSource)}


def _check_keys(section: str, doc: dict, allowed: set[str]) -> None:
    if not isinstance(doc, dict):
        raise ConfigError(f"{section} must be a mapping")
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {section}: {', '.join(sorted(unknown))}")


def _profile_source(doc: dict, section: str) -> ProfileSource:
    _check_keys(section, doc, _PROFILE_KEYS)
    doc = dict(doc)
    if "paths" in doc:
        rows = []
        for p in doc["paths"]:
            _check_keys(f"{section}.paths", p, {"gain_re", "gain_im", "delay", "doppler"})
            rows.append((float(p.get("gain_re", 1.0)), float(p.get("gain_im", 0.0)),
                         int(p["delay"]), float(p["doppler"])))
        doc["paths"] = tuple(rows)
    return ProfileSource(**doc)


def config_from_dict(doc: dict | None) -> ExperimentConfig:
    """Validate a parsed document and build the config."""
    doc = copy.deepcopy(doc or {})
    _check_keys("config", doc, _TOP_KEYS)
    version = doc.pop("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version}; this build reads {SCHEMA_VERSION}")
    kw: dict[str, Any] = {}
    for key in ("waveform", "c1", "c2", "doppler_guard", "n_sub", "l_cpp", "constellation",
                "csi", "frames", "block", "early_stop_errors", "seed", "workers"):
        if key in doc:
            kw[key] = doc[key]
    if "detector" in doc:
        det = doc["detector"]
        if isinstance(det, str):
            det = {"kind": det}
        _check_keys("detector", det, {"kind", "max_iters", "damping", "tol"})
        for src, dst in (("kind", "detector"), ("max_iters", "mp_max_iters"),
                         ("damping", "mp_damping"), ("tol", "mp_tol")):
            if src in det:
                kw[dst] = det[src]
    if "window" in doc:
        win = doc["window"]
        if isinstance(win, str):
            win = {"kind": win}
        _check_keys("window", win, {"kind", "sidelobe_db"})
        if "kind" in win:
            kw["window"] = win["kind"]
        if "sidelobe_db" in win:
            kw["sidelobe_db"] = float(win["sidelobe_db"])
    if "pilot" in doc:
        _check_keys("pilot", doc["pilot"], {"amplitude", "threshold_factor"})
        if "amplitude" in doc["pilot"]:
            kw["pilot_amplitude"] = float(doc["pilot"]["amplitude"])
        if "threshold_factor" in doc["pilot"]:
            kw["threshold_factor"] = float(doc["pilot"]["threshold_factor"])
    if "profile" in doc:
        kw["profile"] = _profile_source(doc["profile"], "profile")
    if "snr" in doc:
        snr = doc["snr"]
        if isinstance(snr, str):
            kw["snr"] = SnrGrid.parse(snr)
        else:
            _check_keys("snr", snr, {"start", "stop", "step"})
            kw["snr"] = SnrGrid(float(snr["start"]), float(snr["stop"]), float(snr.get("step", 1.0)))
    if "multiaccess" in doc:
        ma = doc["multiaccess"]
        _check_keys("multiaccess", ma, {"direction", "shared_pilot", "users"})
        users = []
        for i, u in enumerate(ma.get("users", [])):
            _check_keys(f"multiaccess.users[{i}]", u, {"id", "demand", "margin", "profile"})
            users.append(UserEntry(str(u["id"]), int(u["demand"]), int(u.get("margin", 0)),
                                   _profile_source(u.get("profile", {}), f"users[{i}].profile")))
        Direction(ma.get("direction", "uplink"))
        kw["multiaccess"] = MultiAccessConfig(ma.get("direction", "uplink"),
                                              bool(ma.get("shared_pilot", True)), tuple(users))
    try:
        return ExperimentConfig(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    return config_from_dict(doc)


def dump_config(config: ExperimentConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=False)
