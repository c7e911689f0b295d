"""Command-line entry point: sweeps, single-shot debugging, and fixture dumps."""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import config, detect, harness, report
from .airlink import modulate, noise_from_snr, random_payload_bits, transmit, draw_channel
from .config import ConfigError
from .numerics import ConfigurationError


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", default=None,
                        help="TOML configuration file")
    parser.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                        dest="overrides", help="override a config key (repeatable)")
    parser.add_argument("--out", metavar="PATH", default=None, help="output path")
    parser.add_argument("--seed", metavar="U64", type=int, default=None,
                        help="override the Monte Carlo master seed")
    parser.add_argument("--workers", metavar="N", type=int, default=1,
                        help="concurrent trial workers")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="onebitmimo",
        description="Link-level simulator for 1-bit quantized massive MU-MIMO-OFDM uplinks.")
    sub = parser.add_subparsers(dest="command", required=True)
    keys = "configuration keys (all optional):\n" + config.describe_keys()
    common = dict(formatter_class=argparse.RawDescriptionHelpFormatter, epilog=keys)

    p = sub.add_parser("sweep", help="Monte Carlo BER sweep over SNR", **common)
    _add_common(p)
    p.add_argument("--no-figure", action="store_true",
                   help="skip rendering the BER figure next to the CSV")

    p = sub.add_parser("chest-mse", help="channel-estimator MSE sweep over SNR", **common)
    _add_common(p)
    p.add_argument("--no-figure", action="store_true",
                   help="skip rendering the MSE figure next to the CSV")

    p = sub.add_parser("detect-once", help="run one seeded trial and print "
                       "per-iteration objective values", **common)
    _add_common(p)

    p = sub.add_parser("dump-fixtures", help="emit fixed-point golden vectors "
                       "for hardware cross-verification", **common)
    _add_common(p)

    p = sub.add_parser("complexity", help="print the detector's real-multiplication "
                       "count for the configured system", **common)
    _add_common(p)
    return parser


def _figure_path(out: Path) -> Path:
    return out.with_suffix(".png") if out.suffix else out.with_name(out.name + ".png")


def _cmd_sweep(args, kind: str) -> int:
    spec = config.load_spec(args.config, args.overrides, args.seed)
    if kind == "ber":
        result = harness.ber_sweep(spec, workers=max(1, args.workers))
    else:
        result = harness.chest_mse_sweep(spec, workers=max(1, args.workers))
    out = Path(args.out or ("results.csv" if kind == "ber" else "chest-mse.csv"))
    harness.export_results(result, out)
    print(f"wrote {out} and {out}.meta.toml")
    if not args.no_figure:
        fig = _figure_path(out)
        report.render_figure(result, fig)
        print(f"wrote {fig}")
    return 0


def _cmd_detect_once(args) -> int:
    spec = config.load_spec(args.config, args.overrides, args.seed)
    cfg = spec.system
    snr_db = spec.snr_points_db[0]
    rng = harness.trial_rng(spec.master_seed, snr_db, 0)
    n0 = noise_from_snr(snr_db, cfg)
    sigma = math.sqrt(n0)
    channel = draw_channel(cfg, rng)
    payload = random_payload_bits(cfg, rng, 1)[0]
    frame = modulate(payload, cfg)
    _, received = transmit(frame.symbols, channel, n0, rng)
    result = detect.onebox_detect(received, channel.per_antenna, sigma, cfg,
                                  spec.detector, track_objective=True)
    print(f"snr_db = {snr_db}")
    print(f"sigma = {sigma:.6g}")
    for k, value in enumerate(result.objectives):
        label = "initial " if k == 0 else f"iter {k:2d} "
        print(f"{label} objective = {value:.6f}")
    errors = int(np.count_nonzero(result.bits ^ payload))
    print(f"bit errors: {errors} / {payload.size}")
    return 0


_HEX_SIGNALS = ("mix", "time", "spectrum", "step", "symbols")


def _write_hex(path: Path, array: np.ndarray, fmt, label: str) -> None:
    """One complex entry per line as two's-complement hex words, row-major."""
    ints = fmt.to_int(array.real), fmt.to_int(array.imag)
    digits = (fmt.word_length + 3) // 4
    mask = (1 << fmt.word_length) - 1
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# signal: {label}\n")
        fh.write(f"# format: [{fmt.integer_bits}.{fmt.fractional_bits}] "
                 f"two's complement, {fmt.word_length} bits per word, bit 0 = LSB\n")
        fh.write(f"# shape: {array.shape} (row-major; 're_hex im_hex' per entry)\n")
        for re, im in zip(ints[0].ravel(), ints[1].ravel()):
            fh.write(f"{re & mask:0{digits}x} {im & mask:0{digits}x}\n")


def _cmd_dump_fixtures(args) -> int:
    spec = config.load_spec(args.config, args.overrides, args.seed)
    cfg = spec.system
    snr_db = spec.snr_points_db[0]
    rng = harness.trial_rng(spec.master_seed, snr_db, 0)
    n0 = noise_from_snr(snr_db, cfg)
    sigma = math.sqrt(n0)
    channel = draw_channel(cfg, rng)
    payload = random_payload_bits(cfg, rng, 1)[0]
    frame = modulate(payload, cfg)
    _, received = transmit(frame.symbols, channel, n0, rng)

    capture: dict = {}
    params = spec.detector_fp
    detect.onebox_detect(received, channel.per_antenna, sigma, cfg, params,
                         capture=capture)
    out_dir = Path(args.out or "fixtures")
    out_dir.mkdir(parents=True, exist_ok=True)
    fmts = params.fixed_point
    _write_hex(out_dir / "channel.hex", capture["channel"], fmts["channel"], "channel")
    for k, signals in enumerate(capture["iterations"], start=1):
        for name in _HEX_SIGNALS:
            _write_hex(out_dir / f"iter{k}_{name}.hex", signals[name],
                       fmts[name], f"{name} (iteration {k})")
    n_files = 1 + len(capture["iterations"]) * len(_HEX_SIGNALS)
    print(f"wrote {n_files} fixture files to {out_dir}")
    return 0


def _cmd_complexity(args) -> int:
    spec = config.load_spec(args.config, args.overrides, args.seed)
    count = detect.count_multiplications(spec.system, spec.detector.iterations)
    print(f"{count:,}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "sweep":
            return _cmd_sweep(args, "ber")
        if args.command == "chest-mse":
            return _cmd_sweep(args, "chest-mse")
        if args.command == "detect-once":
            return _cmd_detect_once(args)
        if args.command == "dump-fixtures":
            return _cmd_dump_fixtures(args)
        if args.command == "complexity":
            return _cmd_complexity(args)
        raise AssertionError(f"unhandled command {args.command}")
    except (ConfigError, ConfigurationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
