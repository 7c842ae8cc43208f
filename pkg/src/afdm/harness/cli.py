"""Command line entry point: ``afdm-sim {ber,nmse,ecm,allocate,validate}``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from ..channel import build_ecm
from ..core import rng_stream, validate_params
from ..multiaccess import allocate_afdma
from .config import ConfigError, ExperimentConfig, SnrGrid, config_from_dict
from .io import OutputError, emit_plot, format_csv
from .sweep import bounds_profile, run_ber_sweep, run_nmse_sweep


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML experiment config")
    common.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    common.add_argument("--snr", help="SNR grid start:stop:step in dB, stop inclusive")
    common.add_argument("--frames", type=int, help="frames per SNR point")
    common.add_argument("--waveform", choices=["afdm", "ocdm", "ofdm"])
    common.add_argument("--detector", choices=["zf", "lmmse", "mp", "ml", "single_tap"])
    common.add_argument("--window", choices=["rect", "hamming", "chebyshev"])
    common.add_argument("--workers", type=int, help="worker processes")
    common.add_argument("--out", type=Path, help="output file (default: stdout)")

    p = argparse.ArgumentParser(prog="afdm-sim", description="AFDM link-level simulator")
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in (("ber", "bit error rate sweep"), ("nmse", "channel estimation NMSE sweep")):
        sp = sub.add_parser(name, parents=[common], help=text)
        sp.add_argument("--plot", type=Path, help="also write an SVG plot here")
    sub.add_parser("ecm", parents=[common], help="dump the ECM and its support for one profile")
    sub.add_parser("allocate", parents=[common], help="AFDMA resource plan for the configured users")
    sub.add_parser("validate", parents=[common], help="parameter validation report")
    return p


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    doc: dict = {}
    if args.config is not None:
        try:
            doc = yaml.safe_load(args.config.read_text()) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    for key in ("seed", "frames", "waveform", "detector", "window", "workers"):
        val = getattr(args, key)
        if val is None:
            continue
        if key in ("detector", "window") and isinstance(doc.get(key), dict):
            doc[key] = {**doc[key], "kind": val}
        else:
            doc[key] = val
    if args.snr is not None:
        grid = SnrGrid.parse(args.snr)
        doc["snr"] = {"start": grid.start, "stop": grid.stop, "step": grid.step}
    return config_from_dict(doc)


def _write(text: str, out: Path | None) -> None:
    if out is None:
        try:
            sys.stdout.write(text)
            sys.stdout.flush()
        except BrokenPipeError:
            pass
        return
    try:
        out.write_text(text, newline="")
    except OSError as exc:
        raise OutputError(f"cannot write {out}: {exc}") from exc


def _ecm_doc(config: ExperimentConfig) -> dict:
    params = config.params()
    profile = config.profile.draw(rng_stream(config.seed, "channel", 0))
    ecm = build_ecm(profile, params, config.make_window())
    return {
        "seed": config.seed,
        "config_digest": config.digest(),
        "params": params.to_dict(),
        "profile": profile.to_dict(),
        "profile_digest": ecm.profile_digest,
        "window": ecm.window,
        "support": ecm.support.tolist(),
        "matrix_re": np.real(ecm.matrix).tolist(),
        "matrix_im": np.imag(ecm.matrix).tolist(),
    }


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        config = build_config(args)
        if args.command in ("ber", "nmse"):
            run = run_ber_sweep if args.command == "ber" else run_nmse_sweep
            result = run(config)
            for f in result.validation.failures():
                print(f"warning: {f.name}: {f.reason}", file=sys.stderr)
            _write(format_csv(result), args.out)
            if args.plot is not None:
                emit_plot(result, args.plot)
        elif args.command == "ecm":
            _write(json.dumps(_ecm_doc(config)) + "\n", args.out)
        elif args.command == "allocate":
            ma = config.multiaccess
            plan = allocate_afdma(ma.user_specs(), config.params(), ma.direction, ma.shared_pilot)
            doc = {"seed": config.seed, "config_digest": config.digest(), **plan.to_dict()}
            _write(json.dumps(doc, indent=2) + "\n", args.out)
        else:
            report = validate_params(config.params(), bounds_profile(config))
            doc = {"seed": config.seed, "config_digest": config.digest(),
                   "params": config.params().to_dict(), **report.to_dict()}
            _write(json.dumps(doc, indent=2) + "\n", args.out)
            return 0 if report.ok else 1
    except (ConfigError, OutputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
