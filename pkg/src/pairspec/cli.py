"""Command-line interface: build, fourfold, purity-scan, fit, emit-config.

Exit codes: 0 success, 2 config error, 3 insufficient data, 4 fit failure.
"""
from __future__ import annotations

import argparse
import copy
import json
import sys
from pathlib import Path

import numpy as np

from . import io as pio
from .analysis import EstimationError
from .config import ConfigError, RunConfig
from .jsa import GridError
from .pipeline import fit_events, fourfold_scan, purity_scan
from .schmidt import schmidt_decompose

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NO_DATA = 3
EXIT_FIT = 4


class InsufficientDataError(RuntimeError):
    pass


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _apply_overrides(document: dict, assignments) -> dict:
    doc = copy.deepcopy(document)
    for item in assignments or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        dotted, _, raw = item.partition("=")
        parts = dotted.strip().split(".")
        if len(parts) != 2:
            raise ConfigError(f"override key {dotted!r} must be section.key")
        section, key = parts
        doc.setdefault(section, {})[key] = _parse_value(raw.strip())
    return doc


def _load_config(args) -> tuple:
    document = {}
    if args.config:
        try:
            document = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    document = _apply_overrides(document, args.set)
    if args.seed is not None:
        document.setdefault("run", {})["seed"] = args.seed
    if args.threads is not None:
        document.setdefault("run", {})["threads"] = args.threads
    if args.out is not None:
        document.setdefault("output", {})["directory"] = args.out
    config = RunConfig(document)
    seed = config.doc["run"]["seed"]
    if seed is None:
        seed = int(np.random.SeedSequence().entropy % (1 << 63))
    return config, int(seed)


def _prepare_outdir(config: RunConfig, seed: int) -> Path:
    outdir = Path(config.doc["output"]["directory"])
    outdir.mkdir(parents=True, exist_ok=True)
    resolved = config.resolved(seed)
    (outdir / "config_resolved.json").write_text(json.dumps(resolved, indent=1) + "\n")
    return outdir


def cmd_build(config: RunConfig, seed: int) -> int:
    outdir = _prepare_outdir(config, seed)
    jsa = config.build_jsa()
    pio.save_jsa(jsa, outdir / "jsa")
    lam_s = jsa.grid.signal_wavelengths()
    lam_i = jsa.grid.idler_wavelengths()
    inten = jsa.intensity
    with open(outdir / "jsi.csv", "w", newline="") as fh:
        fh.write("lambda_s_nm,lambda_i_nm,intensity\n")
        for a in range(lam_s.size):
            for b in range(lam_i.size):
                fh.write(f"{lam_s[a]!r},{lam_i[b]!r},{inten[a, b]!r}\n")
    pio.save_schmidt_csv(schmidt_decompose(jsa), outdir / "schmidt.csv")
    print(f"wrote JSA and JSI to {outdir}")
    return EXIT_OK


def cmd_fourfold(config: RunConfig, seed: int) -> int:
    outdir = _prepare_outdir(config, seed)
    n_workers = int(config.doc["run"]["threads"])
    for maps in fourfold_scan(config, seed, n_workers=n_workers):
        tag = f"chirp_{maps.chirp_ps_per_nm:+g}".replace("+", "p").replace("-", "m")
        extra = {"chirp_ps_per_nm": maps.chirp_ps_per_nm, "beta_ps2": maps.beta,
                 "seed": seed}
        pio.save_fourfold(maps.difference, outdir / f"difference_{tag}", extra)
        pio.save_fourfold(maps.product, outdir / f"product_{tag}", extra)
        if maps.events is not None:
            pio.save_events_csv(maps.events, outdir / f"events_{tag}.csv", extra)
            pio.save_fourfold(maps.empirical_difference,
                              outdir / f"difference_mc_{tag}", extra)
    print(f"wrote fourfold maps to {outdir}")
    return EXIT_OK


def cmd_purity_scan(config: RunConfig, seed: int) -> int:
    outdir = _prepare_outdir(config, seed)
    try:
        rows, _ = purity_scan(config, seed, n_workers=int(config.doc["run"]["threads"]))
    except EstimationError as exc:
        raise InsufficientDataError(
            f"{exc}; increase run.n_pulses or source.mean_pairs_per_pulse") from exc
    pio.save_scan_csv(rows, outdir / "purity_scan.csv")
    print(f"wrote purity scan to {outdir / 'purity_scan.csv'}")
    return EXIT_OK


def cmd_fit(config: RunConfig, seed: int, events_path: str | None) -> int:
    outdir = _prepare_outdir(config, seed)
    if events_path:
        try:
            events = pio.load_events_csv(events_path)
        except OSError as exc:
            raise InsufficientDataError(f"cannot read events file: {exc}") from exc
    else:
        n_events = int(config.doc["fourfold"]["n_mc_events"])
        if n_events <= 0:
            raise InsufficientDataError(
                "no events: pass --events FILE or set fourfold.n_mc_events > 0")
        from .detector import sample_fourfold_events
        events = sample_fourfold_events(config.build_jsa(), n_events, seed)
        pio.save_events_csv(events, outdir / "events.csv", {"seed": seed})
    if events.shape[0] < 100:
        raise InsufficientDataError(
            f"only {events.shape[0]} events; need at least 100 for a fit")
    jsa = config.build_jsa()
    try:
        results = fit_events(events, jsa,
                             product_bins=int(config.doc["fourfold"]["product_bins"]))
    except EstimationError as exc:
        profile = getattr(exc, "payload", {}) or {}
        if "profile_beta" in profile:
            with open(outdir / "fit_profile.csv", "w", newline="") as fh:
                fh.write("beta,loglik\n")
                for b, l in zip(profile["profile_beta"], profile["profile_loglik"]):
                    fh.write(f"{float(b)!r},{float(l)!r}\n")
            print(f"fit failed: {exc}; profile written to {outdir / 'fit_profile.csv'}",
                  file=sys.stderr)
        else:
            print(f"fit failed: {exc}", file=sys.stderr)
        return EXIT_FIT
    except GridError as exc:
        raise InsufficientDataError(
            f"events do not lie on the configured grid: {exc}") from exc
    pio.save_estimation_json(results, outdir / "fit.json")
    print(f"wrote fit results to {outdir / 'fit.json'}")
    return EXIT_OK


def cmd_emit_config(config: RunConfig, seed: int) -> int:
    print(json.dumps(config.resolved(seed), indent=1))
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pairspec",
        description="Photon-pair spectral-phase diagnostics: simulation and estimation")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("build", "write the JSA and JSI for the configured source"),
        ("fourfold", "fringe maps (and optional MC events) per chirp"),
        ("purity-scan", "simulate and estimate purity for each chirp"),
        ("fit", "recover |beta| from fourfold events"),
        ("emit-config", "print the fully resolved configuration"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override a config key (repeatable)")
        p.add_argument("--out", help="output directory (overrides output.directory)")
        p.add_argument("--seed", type=int, help="RNG seed (overrides run.seed)")
        p.add_argument("--threads", type=int, help="worker cap (overrides run.threads)")
        if name == "fit":
            p.add_argument("--events", help="CSV of fourfold events to fit")
    args = parser.parse_args(argv)

    try:
        config, seed = _load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "build":
            return cmd_build(config, seed)
        if args.command == "fourfold":
            return cmd_fourfold(config, seed)
        if args.command == "purity-scan":
            return cmd_purity_scan(config, seed)
        if args.command == "fit":
            return cmd_fit(config, seed, getattr(args, "events", None))
        if args.command == "emit-config":
            return cmd_emit_config(config, seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InsufficientDataError as exc:
        print(f"insufficient data: {exc}", file=sys.stderr)
        return EXIT_NO_DATA
    except EstimationError as exc:
        print(f"estimation failed: {exc}", file=sys.stderr)
        return EXIT_FIT
    parser.error(f"unknown command {args.command}")
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
