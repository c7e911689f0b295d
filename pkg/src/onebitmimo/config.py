"""Structured text (TOML) configuration: schema, overrides, and echo output.

A config file has up to four tables: [system], [detector], [chest], [sweep].
Every key is optional and falls back to the desk-scale defaults. Unknown
sections or keys are rejected, as are values of the wrong type. The same
writer that echoes a sweep spec into the metadata sidecar can re-create the
run: the sidecar is itself a valid config file.
"""

from __future__ import annotations

import math
import sys
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

from .airlink import SystemConfig
from .chest import ChestParams
from .detect import DetectorParams, hardware_params
from .harness import SweepSpec
from .numerics import ClampedMillsTable


class ConfigError(ValueError):
    """Unknown key, malformed value, or unreadable configuration file."""


# (key, type, help) per section; bool before int since bool is an int subtype.
SCHEMA: dict[str, dict[str, tuple[type, str]]] = {
    "system": {
        "antennas": (int, "basestation antennas"),
        "users": (int, "single-antenna users"),
        "subcarriers": (int, "OFDM size (power of two)"),
        "used_subcarriers": (int, "centered data/pilot subcarriers"),
        "taps": (int, "channel impulse-response length"),
        "cyclic_prefix": (int, "cyclic prefix length (>= taps - 1)"),
        "pilot_repetitions": (int, "training OFDM symbols per user"),
        "data_symbols": (int, "data OFDM symbols per coherence block"),
        "symbol_energy": (float, "mean constellation energy"),
        "channel_energy": (float, "mean frequency-domain channel entry energy"),
        "constellation": (str, "qpsk | 8psk | 16qam"),
        "seed": (int, "system-level RNG seed"),
    },
    "detector": {
        "iterations": (int, "detector iterations"),
        "step_size": (float, "floating-path step size"),
        "sigma_floor": (float, "noise-deviation floor (omit: the 10 dB value)"),
        "mills": (str, "exact | clamped inverse Mills ratio"),
    },
    "chest": {
        "iterations": (int, "gradient channel-estimator iterations"),
        "step_size": (float, "normalized-gradient step size"),
        "denoise": (bool, "apply tap-subspace denoising"),
        "gain": (float, "average channel gain (omit: analytic value)"),
    },
    "sweep": {
        "snr_db": (list, "SNR grid in dB"),
        "trials": (int, "channel realizations per SNR point"),
        "chains": (list, "receiver chains to simulate"),
        "data_symbols": (int, "data OFDM symbols per trial (omit: system value)"),
        "master_seed": (int, "Monte Carlo master seed (omit: system seed)"),
    },
}


def describe_keys() -> str:
    lines = []
    for section, keys in SCHEMA.items():
        for key, (typ, text) in keys.items():
            lines.append(f"  {section}.{key:<22} {typ.__name__:<6} {text}")
    return "\n".join(lines)


def _check_types(config: dict[str, Any]) -> None:
    for section, table in config.items():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]; expected one of "
                              f"{sorted(SCHEMA)}")
        if not isinstance(table, dict):
            raise ConfigError(f"[{section}] must be a table")
        for key, value in table.items():
            if key not in SCHEMA[section]:
                raise ConfigError(
                    f"unknown key {section}.{key}; known keys: "
                    f"{', '.join(sorted(SCHEMA[section]))}")
            expected, _ = SCHEMA[section][key]
            if expected is float and isinstance(value, int) and not isinstance(value, bool):
                table[key] = float(value)
            elif expected is int and isinstance(value, bool):
                raise ConfigError(f"{section}.{key} must be {expected.__name__}")
            elif not isinstance(value, expected):
                raise ConfigError(
                    f"{section}.{key} must be {expected.__name__}, "
                    f"got {type(value).__name__}")


def load_config(path) -> dict[str, Any]:
    try:
        with open(path, "rb") as fh:
            config = _toml.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except _toml.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid TOML: {exc}") from exc
    _check_types(config)
    return config


def apply_overrides(config: dict[str, Any], overrides: list[str]) -> dict[str, Any]:
    """Apply dotted key=value pairs (TOML value syntax) onto a config dict."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        dotted, raw = item.split("=", 1)
        parts = dotted.strip().split(".")
        if len(parts) != 2:
            raise ConfigError(f"override key {dotted!r} must be section.key")
        section, key = parts[0].strip(), parts[1].strip()
        try:
            value = _toml.loads(f"v = {raw.strip()}")["v"]
        except _toml.TOMLDecodeError:
            value = raw.strip()  # bare strings are a convenience
        config.setdefault(section, {})[key] = value
    _check_types(config)
    return config


def build_spec(config: dict[str, Any]) -> SweepSpec:
    """Materialize a sweep spec from a validated config dict."""
    _check_types(config)
    system = SystemConfig(**config.get("system", {}))

    det = dict(config.get("detector", {}))
    mills_kind = det.pop("mills", "exact")
    if mills_kind not in ("exact", "clamped"):
        raise ConfigError("detector.mills must be 'exact' or 'clamped'")
    det["mills"] = None if mills_kind == "exact" else ClampedMillsTable.build()
    detector = DetectorParams(**det)
    detector_fp = hardware_params(iterations=detector.iterations,
                                  sigma_floor=detector.sigma_floor)

    chest = ChestParams(**config.get("chest", {}))

    sweep = dict(config.get("sweep", {}))
    if "snr_db" in sweep:
        sweep["snr_points_db"] = tuple(float(v) for v in sweep.pop("snr_db"))
    if "chains" in sweep:
        sweep["chains"] = tuple(str(c) for c in sweep["chains"])
    sweep.setdefault("master_seed", system.seed)
    try:
        return SweepSpec(system=system, detector=detector, detector_fp=detector_fp,
                         chest=chest, **sweep)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_spec(path, overrides: list[str] | None = None,
              seed: int | None = None) -> SweepSpec:
    config = load_config(path) if path is not None else {}
    if overrides:
        apply_overrides(config, overrides)
    if seed is not None:
        config.setdefault("sweep", {})["master_seed"] = seed
    return build_spec(config)


# ---------------------------------------------------------------------------
# TOML output
# ---------------------------------------------------------------------------

def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError("cannot emit non-finite float")
        text = repr(value)
        return text if ("." in text or "e" in text or "E" in text) else text + ".0"
    if isinstance(value, str):
        escaped = value.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise TypeError(f"cannot emit {type(value).__name__} as TOML")


def dump_toml(tables: dict[str, dict[str, Any]]) -> str:
    chunks = []
    for section, table in tables.items():
        lines = [f"[{section}]"]
        for key, value in table.items():
            if value is None:
                continue
            lines.append(f"{key} = {_toml_value(value)}")
        chunks.append("\n".join(lines))
    return "\n\n".join(chunks) + "\n"


def spec_to_toml(spec: SweepSpec) -> str:
    """Echo a sweep spec as a config file that reproduces the run."""
    system = spec.system
    tables = {
        "system": {key: getattr(system, key) for key in SCHEMA["system"]},
        "detector": {
            "iterations": spec.detector.iterations,
            "step_size": spec.detector.step_size,
            "sigma_floor": spec.detector.sigma_floor,
            "mills": "exact" if spec.detector.mills is None else "clamped",
        },
        "chest": {
            "iterations": spec.chest.iterations,
            "step_size": spec.chest.step_size,
            "denoise": spec.chest.denoise,
            "gain": spec.chest.gain,
        },
        "sweep": {
            "snr_db": list(spec.snr_points_db),
            "trials": spec.trials,
            "chains": list(spec.chains),
            "data_symbols": spec.data_symbols,
            "master_seed": spec.master_seed,
        },
    }
    return dump_toml(tables)
