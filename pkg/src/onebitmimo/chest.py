"""Pilot-based channel estimation from 1-bit observations.

Estimators return per-antenna frequency responses shaped (B, W, U) with guard
rows left at zero. The full receive-side pipeline is: least-squares or
ML-gradient estimation per used subcarrier, then projection onto the
low-delay tap subspace (the used-subcarrier rows of adjacent tones are
correlated whenever taps < used_subcarriers), then per-antenna rescaling to
the known average channel gain, since 1-bit measurements carry no magnitude.

Per-antenna problems are independent; everything here is pure and may be
called concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .airlink import SystemConfig
from .numerics import (
    ClampedMillsTable,
    inv_mills_complex,
    log_std_normal_cdf,
    sign_refine,
)

_SQRT2 = math.sqrt(2.0)


class SingularPilotError(ArithmeticError):
    """A per-subcarrier pilot Gram matrix is singular; regenerate the pilots."""


class DegenerateEstimateError(ArithmeticError):
    """An all-zero estimate cannot be rescaled to the average channel gain."""


@dataclass(frozen=True)
class PilotSet:
    """Known frequency-domain pilots for the training phase."""

    frames: np.ndarray   # (N_t, W, U), guard rows zero

    def __post_init__(self):
        self.frames.setflags(write=False)

    @property
    def per_subcarrier(self) -> np.ndarray:
        """(W, N_t, U) view: pilot matrix of each subcarrier."""
        return np.swapaxes(self.frames, 0, 1)


@dataclass(frozen=True)
class ChestParams:
    """Gradient-solver iteration count and step, denoising, and gain options.

    gain None means the analytic average channel gain of the configured
    channel statistics. mills None selects the exact inverse Mills ratio.
    """

    iterations: int = 5
    step_size: float = 1.0 / 16.0
    denoise: bool = True
    gain: float | None = None
    mills: ClampedMillsTable | None = None

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.gain is not None and self.gain <= 0:
            raise ValueError("gain must be positive")


def generate_pilots(cfg: SystemConfig, rng: np.random.Generator) -> PilotSet:
    """i.i.d. uniform QPSK pilots on the used rows of every training symbol."""
    const = cfg.pilot_constellation
    n_t = cfg.training_symbols
    frames = np.zeros((n_t, cfg.subcarriers, cfg.users), dtype=complex)
    idx = rng.integers(0, len(const.points), size=(n_t, cfg.used_subcarriers, cfg.users))
    frames[:, cfg.used_indices, :] = const.points[idx]
    return PilotSet(frames=frames)


def average_channel_gain(cfg: SystemConfig) -> float:
    """Expected per-antenna Frobenius norm of the channel on the used rows.

    Estimates carry the used subcarriers only, so the rescaling target is the
    expected norm of the channel restricted to that support: mean square
    used_subcarriers * users * channel_energy, with the same Gamma-moment
    correction that the full-band norm (a scaled Gamma(users * taps, 1)
    variable) has. Validated against Monte Carlo in the tests.
    """
    n = cfg.users * cfg.taps
    mean_square = cfg.channel_energy * cfg.used_subcarriers * cfg.users
    correction = math.exp(math.lgamma(n + 0.5) - math.lgamma(n)) / math.sqrt(n)
    return math.sqrt(mean_square) * correction


# ---------------------------------------------------------------------------
# Least-squares estimation
# ---------------------------------------------------------------------------

def _pilot_gram(pilots: PilotSet, cfg: SystemConfig) -> np.ndarray:
    t_used = pilots.per_subcarrier[cfg.used_indices]            # (W_used, N_t, U)
    return np.einsum("wnu,wnv->wuv", t_used.conj(), t_used)


def pilots_usable(pilots: PilotSet, cfg: SystemConfig) -> bool:
    """Whether every per-subcarrier pilot matrix is safely full rank.

    Discrete pilot alphabets make exactly collinear columns possible; a bad
    subcarrier would poison the whole band through the denoising projection,
    so callers should redraw on failure.
    """
    eigs = np.linalg.eigvalsh(_pilot_gram(pilots, cfg))
    return bool(np.all(eigs[:, 0] > 1e-8 * eigs[:, -1]))


def zf_chest(received: np.ndarray, pilots: PilotSet, cfg: SystemConfig) -> np.ndarray:
    """Per-subcarrier least squares from training observations, per antenna.

    received is (B, W, N_t): 1-bit observations, or unquantized samples for
    the infinite-resolution baseline. Returns (B, W, U).
    """
    spectrum = np.fft.fft(received, axis=1, norm="ortho")       # (B, W, N_t)
    used = cfg.used_indices
    t_used = pilots.per_subcarrier[used]                        # (W_used, N_t, U)
    gram = _pilot_gram(pilots, cfg)
    if not pilots_usable(pilots, cfg):
        raise SingularPilotError("pilot Gram matrix is singular; draw new pilots")
    try:
        # solve(gram, T^H) gives the per-subcarrier left inverse of the pilots.
        pinv = np.linalg.solve(gram, np.swapaxes(t_used.conj(), 1, 2))
    except np.linalg.LinAlgError as exc:
        raise SingularPilotError("pilot Gram matrix is singular; draw new pilots") from exc
    estimates = np.zeros((received.shape[0], cfg.subcarriers, cfg.users), dtype=complex)
    estimates[:, used, :] = np.einsum("wun,bwn->bwu", pinv, spectrum[:, used, :])
    return estimates


# ---------------------------------------------------------------------------
# ML estimation by normalized gradient ascent
# ---------------------------------------------------------------------------

def _chest_gradient(estimates, frames, received, sigma, mills):
    """Ascent direction of the per-antenna training log-likelihood, (B, W, U).

    Same transform/sign-refine/inverse-Mills structure as the data detector's
    gradient with the roles of channel and symbols swapped: the observation
    index runs over training symbols instead of antennas.
    """
    mix = np.einsum("nwu,bwu->bwn", frames, estimates)
    mu = np.fft.ifft(mix, axis=1, norm="ortho")
    alpha = (_SQRT2 / sigma) * sign_refine(received, mu)
    spectrum = np.fft.fft(sign_refine(received, inv_mills_complex(alpha, mills)),
                          axis=1, norm="ortho")
    return np.einsum("nwu,bwn->bwu", frames.conj(), spectrum)


def training_log_likelihood(estimates: np.ndarray, pilots: PilotSet,
                            received: np.ndarray, sigma: float) -> np.ndarray:
    """Per-antenna log-likelihood of the 1-bit training observations, (B,)."""
    mix = np.einsum("nwu,bwu->bwn", pilots.frames, estimates)
    mu = np.fft.ifft(mix, axis=1, norm="ortho")
    c = _SQRT2 / sigma
    return (log_std_normal_cdf(c * received.real * mu.real).sum(axis=(1, 2))
            + log_std_normal_cdf(c * received.imag * mu.imag).sum(axis=(1, 2)))


def ngd_chest(received: np.ndarray, pilots: PilotSet, sigma: float,
              cfg: SystemConfig, params: ChestParams | None = None) -> np.ndarray:
    """Normalized-gradient ascent on the 1-bit training likelihood.

    Initialized from the least-squares estimates; each iteration moves every
    antenna's estimate by step_size along its unit-Frobenius-norm ascent
    direction. No constraints, hence no projection. iterations == 0 returns
    the initialization unchanged.
    """
    params = params or ChestParams()
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    estimates = zf_chest(received, pilots, cfg)
    for _ in range(params.iterations):
        grad = _chest_gradient(estimates, pilots.frames, received, sigma, params.mills)
        norms = np.linalg.norm(grad, axis=(1, 2))
        active = norms > 0
        scale = np.zeros_like(norms)
        scale[active] = params.step_size / norms[active]
        estimates = estimates + scale[:, None, None] * grad
    return estimates


# ---------------------------------------------------------------------------
# Denoising and normalization
# ---------------------------------------------------------------------------

_PROJECTOR_CACHE: dict[tuple[int, int, int, int], np.ndarray] = {}


def tdmle_projector(cfg: SystemConfig) -> np.ndarray:
    """Orthogonal projector onto the tap subspace, on the used subcarriers.

    Built from the first `taps` columns of the W-point DFT matrix restricted
    to the used rows; Hermitian and idempotent.
    """
    key = (cfg.subcarriers, cfg.used_subcarriers, int(cfg.used_indices[0]), cfg.taps)
    cached = _PROJECTOR_CACHE.get(key)
    if cached is not None:
        return cached
    w = cfg.subcarriers
    grid = np.exp(-2j * np.pi * np.outer(cfg.used_indices, np.arange(cfg.taps)) / w)
    basis = grid / math.sqrt(w)                      # (W_used, L)
    gram = basis.conj().T @ basis
    projector = basis @ np.linalg.solve(gram, basis.conj().T)
    projector.setflags(write=False)
    _PROJECTOR_CACHE[key] = projector
    return projector


def tdmle_denoise(estimate: np.ndarray, cfg: SystemConfig) -> np.ndarray:
    """Project one used-subcarrier channel vector onto the tap subspace."""
    estimate = np.asarray(estimate)
    if estimate.shape[0] != cfg.used_subcarriers:
        raise ValueError(f"expected a length-{cfg.used_subcarriers} vector")
    return tdmle_projector(cfg) @ estimate


def denoise_all(estimates: np.ndarray, cfg: SystemConfig) -> np.ndarray:
    """Apply the tap-subspace projection to every (antenna, user) pair."""
    out = estimates.copy()
    used = cfg.used_indices
    out[:, used, :] = np.einsum("vw,bwu->bvu", tdmle_projector(cfg), estimates[:, used, :])
    return out


def normalize_channel(estimates: np.ndarray, gain: float) -> np.ndarray:
    """Rescale each antenna's estimate to Frobenius norm `gain`."""
    if gain <= 0:
        raise ValueError("gain must be positive")
    norms = np.linalg.norm(estimates, axis=(1, 2))
    if np.any(norms == 0.0):
        raise DegenerateEstimateError("zero-norm channel estimate")
    return estimates * (gain / norms)[:, None, None]


def estimate_channel(received: np.ndarray, pilots: PilotSet, sigma: float,
                     cfg: SystemConfig, method: str = "ngd",
                     params: ChestParams | None = None) -> np.ndarray:
    """Full estimation pipeline: estimator, tap-subspace denoising, rescaling."""
    params = params or ChestParams()
    if method == "zf":
        estimates = zf_chest(received, pilots, cfg)
    elif method == "ngd":
        estimates = ngd_chest(received, pilots, sigma, cfg, params)
    else:
        raise ValueError(f"unknown estimation method {method!r}")
    if params.denoise:
        estimates = denoise_all(estimates, cfg)
    gain = params.gain if params.gain is not None else average_channel_gain(cfg)
    return normalize_channel(estimates, gain)
