"""Quantization-aware data detection with box constraints, plus the ZF baseline.

The nonlinear detector runs a fixed number of forward-backward splitting
iterations on the negative log-likelihood of the 1-bit observations: a
gradient step through the per-antenna time/frequency transforms followed by a
projection onto the constellation bounding box. Guard rows are pinned to zero
throughout. Magnitude is unobservable through 1-bit quantization, so the
relaxed output is rescaled to the nominal frame energy before slicing.

Two evaluation paths share the same iteration structure:

* floating: unitary transforms, exact inverse Mills ratio, step sqrt(2)/64;
* fixed-point: the hardware word lengths at every named signal boundary, a
  radix-2 transform pair with a per-stage scale-by-half schedule (the factor
  sqrt(2) is folded into the transform scaling, which is exact when
  log2(W) is odd), the clamped Mills lookup table, and step 1/32.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .airlink import SystemConfig, demodulate, noise_std
from .numerics import (
    ClampedMillsTable,
    ConfigurationError,
    FixedPointFormat,
    box_project,
    inv_mills_complex,
    log_std_normal_cdf,
    quantize_fixed,
    sign_refine,
)

_SQRT2 = math.sqrt(2.0)

#: Word lengths of the fixed-point signal boundaries, by pipeline stage.
HARDWARE_FORMATS: Mapping[str, FixedPointFormat] = {
    "channel": FixedPointFormat(4, 4),    # frequency-domain channel entries
    "mix": FixedPointFormat(5, 5),        # per-antenna frequency mix
    "time": FixedPointFormat(5, 4),       # scaled, sign-refined time samples
    "spectrum": FixedPointFormat(4, 4),   # refined spectrum rows
    "step": FixedPointFormat(1, 7),       # accumulated step-size-scaled update
    "symbols": FixedPointFormat(2, 7),    # symbol estimates
    "inv_sigma": FixedPointFormat(2, 6),  # reciprocal noise deviation lookup
}

_TWIDDLE_FORMAT = FixedPointFormat(2, 14)
_INV_SIGMA_LUT_SIZE = 256
_INV_SIGMA_LUT_PITCH = 1.0 / 16.0


class DegenerateOutputError(ArithmeticError):
    """The relaxed estimate is identically zero and cannot be rescaled."""


@dataclass(frozen=True)
class DetectorParams:
    """Iteration count, step size, noise floor, and evaluation-path selection.

    sigma_floor None defers to default_sigma_floor(cfg). mills None selects
    the exact inverse Mills ratio. fixed_point None selects the floating path;
    otherwise it maps the signal names of HARDWARE_FORMATS to word lengths.
    """

    iterations: int = 3
    step_size: float = _SQRT2 / 64.0
    sigma_floor: float | None = None
    mills: ClampedMillsTable | None = None
    fixed_point: Mapping[str, FixedPointFormat] | None = None

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.sigma_floor is not None and self.sigma_floor <= 0:
            raise ValueError("sigma_floor must be positive")
        if self.fixed_point is not None and self.mills is None:
            raise ValueError("the fixed-point path requires a Mills table")


def floating_params(**overrides) -> DetectorParams:
    return DetectorParams(**overrides)


def hardware_params(**overrides) -> DetectorParams:
    """Defaults of the fixed-point evaluation path (step 1/32, clamped table)."""
    kwargs = dict(step_size=1.0 / 32.0, mills=ClampedMillsTable.build(),
                  fixed_point=HARDWARE_FORMATS)
    kwargs.update(overrides)
    return DetectorParams(**kwargs)


def default_sigma_floor(cfg: SystemConfig) -> float:
    """Noise deviation implied by a 10 dB receive SNR under this configuration."""
    return noise_std(10.0, cfg)


@dataclass(frozen=True)
class DetectionResult:
    relaxed: np.ndarray             # (W, U) box-feasible estimate
    normalized: np.ndarray          # (W, U) rescaled to the nominal frame energy
    bits: np.ndarray                # (W_used, U, bits_per_symbol)
    iterations_run: int
    degenerate: bool = False
    objectives: tuple[float, ...] | None = None
    erased: np.ndarray | None = None   # (W_used,) flags for per-subcarrier failures


# ---------------------------------------------------------------------------
# Objective and gradient
# ---------------------------------------------------------------------------

def objective(symbols: np.ndarray, channel: np.ndarray, received: np.ndarray,
              sigma: float) -> float:
    """Negative log-likelihood of the 1-bit observations given symbol matrix.

    channel is (B, W, U) per-antenna, received is (B, W); evaluated in a form
    that stays finite for every finite input.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    mix = np.einsum("bwu,wu->bw", channel, symbols)
    mu = np.fft.ifft(mix, axis=1, norm="ortho")
    c = _SQRT2 / sigma
    return -float(log_std_normal_cdf(c * received.real * mu.real).sum()
                  + log_std_normal_cdf(c * received.imag * mu.imag).sum())


def _refined_spectrum(symbols, channel, received, sigma, mills):
    """Rows of the spectrum matrix feeding the gradient, shape (B, W)."""
    mix = np.einsum("bwu,wu->bw", channel, symbols)
    mu = np.fft.ifft(mix, axis=1, norm="ortho")
    alpha = (_SQRT2 / sigma) * sign_refine(received, mu)
    return np.fft.fft(sign_refine(received, inv_mills_complex(alpha, mills)),
                      axis=1, norm="ortho")


def gradient(symbols: np.ndarray, channel: np.ndarray, received: np.ndarray,
             sigma: float, mills: ClampedMillsTable | None = None):
    """Unscaled descent matrix G and its prefactor.

    prefactor * G is the negative gradient of the objective in the
    d/d(conjugate) convention; the derivative of the objective with respect to
    the real (imaginary) part of a symbol entry is -2 * prefactor * Re (Im) of
    the corresponding G entry.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    spectrum = _refined_spectrum(symbols, channel, received, sigma, mills)
    g = np.einsum("bwu,bw->wu", channel.conj(), spectrum)
    return g, _SQRT2 / (2.0 * sigma)


# ---------------------------------------------------------------------------
# Detector
# ---------------------------------------------------------------------------

def normalize_symbols(relaxed: np.ndarray, cfg: SystemConfig) -> np.ndarray:
    """Rescale to Frobenius norm symbol_energy * sqrt(users * used_subcarriers)."""
    norm = float(np.linalg.norm(relaxed))
    if norm == 0.0:
        raise DegenerateOutputError("all-zero relaxed estimate")
    target = cfg.symbol_energy * math.sqrt(cfg.users * cfg.used_subcarriers)
    return (target / norm) * relaxed


def _finish(relaxed: np.ndarray, cfg: SystemConfig, iterations: int,
            objectives, erased=None) -> DetectionResult:
    const = cfg.data_constellation
    try:
        normalized = normalize_symbols(relaxed, cfg)
        degenerate = False
    except DegenerateOutputError:
        # Total-function fallback: decide the first constellation point everywhere.
        normalized = np.zeros_like(relaxed)
        normalized[cfg.used_indices] = const.points[0]
        degenerate = True
    bits = demodulate(normalized, cfg)
    return DetectionResult(relaxed=relaxed, normalized=normalized, bits=bits,
                           iterations_run=iterations, degenerate=degenerate,
                           objectives=None if objectives is None else tuple(objectives),
                           erased=erased)


def onebox_detect(received: np.ndarray, channel: np.ndarray, sigma: float,
                  cfg: SystemConfig, params: DetectorParams | None = None,
                  track_objective: bool = False,
                  capture: dict | None = None) -> DetectionResult:
    """Box-constrained FBS detection of one OFDM symbol from 1-bit observations.

    received is (B, W) with components in {-1, +1}; channel is the per-antenna
    (B, W, U) frequency response the detector believes in; sigma is the noise
    standard deviation before flooring. capture (fixed-point path only)
    collects the per-iteration signal values for golden-vector dumps.
    """
    params = params or DetectorParams()
    if received.shape != (channel.shape[0], cfg.subcarriers):
        raise ValueError(f"received shape {received.shape} does not match "
                         f"({channel.shape[0]}, {cfg.subcarriers})")
    if channel.shape[1:] != (cfg.subcarriers, cfg.users):
        raise ValueError(f"channel shape {channel.shape} does not match config")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    floor = params.sigma_floor if params.sigma_floor is not None else default_sigma_floor(cfg)
    sigma_eff = max(sigma, floor)
    if params.fixed_point is not None:
        return _detect_fixed(received, channel, sigma_eff, cfg, params,
                             track_objective, capture)
    return _detect_floating(received, channel, sigma_eff, cfg, params, track_objective)


def _detect_floating(received, channel, sigma_eff, cfg, params, track_objective):
    used = cfg.used_indices
    half_width = cfg.data_constellation.half_width
    symbols = np.zeros((cfg.subcarriers, cfg.users), dtype=complex)
    objectives = [objective(symbols, channel, received, sigma_eff)] if track_objective else None
    for _ in range(params.iterations):
        spectrum = _refined_spectrum(symbols, channel, received, sigma_eff, params.mills)
        g = np.einsum("bwu,bw->wu", channel.conj(), spectrum)
        symbols = symbols.copy()
        symbols[used] = box_project(symbols[used] + params.step_size * g[used], half_width)
        if track_objective:
            objectives.append(objective(symbols, channel, received, sigma_eff))
    return _finish(symbols, cfg, params.iterations, objectives)


# ---------------------------------------------------------------------------
# Fixed-point path
# ---------------------------------------------------------------------------

def _bit_reversed(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for _ in range(bits):
        rev = (rev << 1) | (idx & 1)
        idx >>= 1
    return rev


def _fixed_radix2(x: np.ndarray, inverse: bool, scaled_stages: frozenset[int],
                  work_format: FixedPointFormat) -> np.ndarray:
    """Radix-2 transform along axis 0 with per-stage rounding and saturation.

    Computes the raw transform sum scaled by 2**-len(scaled_stages); the
    working word length is fixed, which is what the scale-by-half schedule of
    a streaming butterfly core buys.
    """
    n = x.shape[0]
    stages = n.bit_length() - 1
    sign = 1.0 if inverse else -1.0
    data = quantize_fixed(np.asarray(x, dtype=complex)[_bit_reversed(n)], work_format)
    for s in range(stages):
        half = 1 << s
        tw = quantize_fixed(np.exp(sign * 2j * np.pi * np.arange(half) / (2 * half)),
                            _TWIDDLE_FORMAT)
        view = data.reshape((n >> (s + 1), 2 * half) + data.shape[1:])
        tw = tw.reshape((1, half) + (1,) * (data.ndim - 1))
        t = view[:, half:] * tw
        top = view[:, :half] + t
        bot = view[:, :half] - t
        data = np.concatenate([top, bot], axis=1).reshape(data.shape)
        if s in scaled_stages:
            data = data * 0.5
        data = quantize_fixed(data, work_format)
    return data


def _lut_inv_sigma(sigma_eff: float, fmt: FixedPointFormat) -> float:
    """Reciprocal noise deviation through a 256-entry table on a 1/16 grid."""
    idx = int(np.clip(np.rint(sigma_eff / _INV_SIGMA_LUT_PITCH), 1, _INV_SIGMA_LUT_SIZE))
    return float(quantize_fixed(1.0 / (idx * _INV_SIGMA_LUT_PITCH), fmt))


def _detect_fixed(received, channel, sigma_eff, cfg, params, track_objective, capture):
    stages = cfg.subcarriers.bit_length() - 1
    if stages % 2 == 0:
        raise ConfigurationError(
            "the fixed-point path folds sqrt(2) into the transform scaling, "
            "which requires log2(subcarriers) to be odd (e.g. W = 128)")
    fmts = params.fixed_point
    # Scale-by-half schedule: the time-direction transform keeps one factor of
    # two more than unitary scaling (absorbing sqrt(2)), the frequency
    # direction one factor less, so a full loop has unit gain and the step
    # size 1/32 plays the role of sqrt(2)/64 on the floating path.
    inverse_scaled = frozenset(range(1, stages, 2))
    forward_scaled = frozenset(range(0, stages, 2))
    work_inv = FixedPointFormat(7, max(fmts["mix"].fractional_bits,
                                       fmts["time"].fractional_bits) + 2)
    work_fwd = FixedPointFormat(7, max(fmts["time"].fractional_bits,
                                       fmts["spectrum"].fractional_bits) + 2)

    used = cfg.used_indices
    half_width = cfg.data_constellation.half_width
    chan_q = quantize_fixed(channel, fmts["channel"])
    inv_sigma = _lut_inv_sigma(sigma_eff, fmts["inv_sigma"])
    rec_t = received.T  # (W, B); the transform pair works along the time axis

    if capture is not None:
        capture["channel"] = chan_q.copy()
        capture["inv_sigma"] = inv_sigma
        capture["iterations"] = []

    symbols = np.zeros((cfg.subcarriers, cfg.users), dtype=complex)
    objectives = [objective(symbols, chan_q, received, sigma_eff)] if track_objective else None
    for _ in range(params.iterations):
        mix = quantize_fixed(np.einsum("bwu,wu->wb", chan_q, symbols), fmts["mix"])
        time = _fixed_radix2(mix, inverse=True, scaled_stages=inverse_scaled,
                             work_format=work_inv)
        alpha = quantize_fixed(sign_refine(rec_t, inv_sigma * time), fmts["time"])
        refined = quantize_fixed(
            sign_refine(rec_t, inv_mills_complex(alpha, params.mills)), fmts["time"])
        spectrum = quantize_fixed(
            _fixed_radix2(refined, inverse=False, scaled_stages=forward_scaled,
                          work_format=work_fwd), fmts["spectrum"])
        step = quantize_fixed(
            params.step_size * np.einsum("bwu,wb->wu", chan_q.conj(), spectrum),
            fmts["step"])
        symbols = symbols.copy()
        symbols[used] = quantize_fixed(
            box_project(symbols[used] + step[used], half_width), fmts["symbols"])
        if capture is not None:
            capture["iterations"].append({
                "mix": mix.T.copy(), "time": alpha.T.copy(),
                "spectrum": spectrum.T.copy(), "step": step.copy(),
                "symbols": symbols.copy(),
            })
        if track_objective:
            objectives.append(objective(symbols, chan_q, received, sigma_eff))
    return _finish(symbols, cfg, params.iterations, objectives)


# ---------------------------------------------------------------------------
# Linear baseline
# ---------------------------------------------------------------------------

def zf_detect(received: np.ndarray, channel: np.ndarray,
              cfg: SystemConfig) -> DetectionResult:
    """Per-subcarrier least-squares detection after a forward DFT.

    received is (B, W): either 1-bit observations or unquantized samples (the
    infinite-resolution baseline). Rank-deficient subcarriers are flagged as
    erased and decided as the first constellation point.
    """
    spectrum = np.fft.fft(received, axis=1, norm="ortho")  # (B, W)
    used = cfg.used_indices
    a = np.swapaxes(channel, 0, 1)[used]          # (W_used, B, U)
    rhs = spectrum.T[used]                        # (W_used, B)
    gram = np.einsum("wbu,wbv->wuv", a.conj(), a)
    proj = np.einsum("wbu,wb->wu", a.conj(), rhs)
    estimates = np.zeros((cfg.subcarriers, cfg.users), dtype=complex)
    erased = np.zeros(cfg.used_subcarriers, dtype=bool)
    try:
        estimates[used] = np.linalg.solve(gram, proj[..., None])[..., 0]
    except np.linalg.LinAlgError:
        for i in range(cfg.used_subcarriers):
            try:
                estimates[used[i]] = np.linalg.solve(gram[i], proj[i])
            except np.linalg.LinAlgError:
                erased[i] = True
    return _finish(estimates, cfg, 0, None, erased=erased if erased.any() else None)


def count_multiplications(cfg: SystemConfig, iterations: int) -> int:
    """Real multiplications of the nonlinear detector for the given iterations."""
    if not iterations >= 1:
        raise ValueError("iterations must be >= 1")
    b, u, w = cfg.antennas, cfg.users, cfg.subcarriers
    log2w = w.bit_length() - 1
    per_iteration = 8 * b * u * w + 4 * b * w * log2w + b * w + 2 * u * w
    return iterations * per_iteration
