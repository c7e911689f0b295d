"""System configuration, constellations, channel generation, and the 1-bit uplink.

Array shape conventions used throughout the package:

* channel taps               (L, B, U)   tap, basestation antenna, user
* channel, per antenna       (B, W, U)   entry [b, w, u] = gain on subcarrier w
* channel, per subcarrier    (W, B, U)   a view of the same data
* frequency-domain symbols   (W, U) or (W, U, N) for N OFDM symbols
* received signals           (B, W) or (B, W, N)
* payload bits               (W_used, U, bits_per_symbol) per OFDM symbol

1-bit received signals have real and imaginary parts in {-1, +1}, with
sign(0) = -1 on both components.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import ConfigurationError, is_power_of_two


# ---------------------------------------------------------------------------
# Constellations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Constellation:
    """Gray-labelled complex constellation normalized to a mean symbol energy."""

    name: str
    points: np.ndarray
    bit_labels: tuple[str, ...]
    bits_per_symbol: int

    def __post_init__(self):
        self.points.setflags(write=False)
        if len(self.points) != len(self.bit_labels):
            raise ValueError("one bit label per point required")

    @property
    def half_width(self) -> float:
        """Bounding-box half width: max over points of max(|Re|, |Im|)."""
        return float(np.max(np.maximum(np.abs(self.points.real),
                                       np.abs(self.points.imag))))

    @property
    def label_ints(self) -> np.ndarray:
        return np.array([int(lab, 2) for lab in self.bit_labels], dtype=np.int64)

    @property
    def index_of_label(self) -> np.ndarray:
        """Point index for each integer label value."""
        out = np.empty(2 ** self.bits_per_symbol, dtype=np.int64)
        out[self.label_ints] = np.arange(len(self.points))
        return out


def _gray_axis_levels() -> tuple[np.ndarray, tuple[str, ...]]:
    # Per-axis Gray code for 4-level PAM: adjacent levels differ in one bit.
    return np.array([-3.0, -1.0, 1.0, 3.0]), ("00", "01", "11", "10")


def make_constellation(name: str, energy: float = 1.0) -> Constellation:
    """Build one of the supported Gray-coded constellations at mean energy."""
    key = name.lower().replace("-", "")
    amp = math.sqrt(energy)
    if key == "qpsk":
        points, labels = [], []
        for b0 in (0, 1):
            for b1 in (0, 1):
                points.append(((1 - 2 * b0) + 1j * (1 - 2 * b1)) / math.sqrt(2.0))
                labels.append(f"{b0}{b1}")
        return Constellation("qpsk", amp * np.array(points), tuple(labels), 2)
    if key == "8psk":
        points = amp * np.exp(2j * np.pi * np.arange(8) / 8.0)
        labels = tuple(format(k ^ (k >> 1), "03b") for k in range(8))
        return Constellation("8psk", points, labels, 3)
    if key == "16qam":
        levels, axis_labels = _gray_axis_levels()
        scale = amp / math.sqrt(10.0)
        points, labels = [], []
        for i, li in enumerate(levels):
            for q, lq in enumerate(levels):
                points.append(scale * (li + 1j * lq))
                labels.append(axis_labels[i] + axis_labels[q])
        return Constellation("16qam", np.array(points), tuple(labels), 4)
    raise ConfigurationError(f"unknown constellation {name!r} (qpsk, 8psk, 16qam)")


# ---------------------------------------------------------------------------
# System configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SystemConfig:
    """Dimensional and physical parameters of one uplink."""

    antennas: int = 64            # basestation antennas
    users: int = 4                # single-antenna user equipments
    subcarriers: int = 128        # OFDM size, power of two
    used_subcarriers: int = 100   # centered block carrying data/pilots
    taps: int = 3                 # channel impulse-response length
    cyclic_prefix: int = 8        # CP length, >= taps - 1
    pilot_repetitions: int = 2    # training OFDM symbols per user
    data_symbols: int = 1         # data OFDM symbols per coherence block
    symbol_energy: float = 1.0    # mean constellation energy
    channel_energy: float = 1.0   # mean per-entry frequency-domain channel energy
    constellation: str = "16qam"
    seed: int = 0

    def __post_init__(self):
        if not is_power_of_two(self.subcarriers):
            raise ConfigurationError("subcarriers must be a power of two")
        if not 1 <= self.used_subcarriers <= self.subcarriers:
            raise ConfigurationError("used_subcarriers must be in [1, subcarriers]")
        if not 1 <= self.users <= self.antennas:
            raise ConfigurationError("need antennas >= users >= 1")
        if not 1 <= self.taps <= self.subcarriers:
            raise ConfigurationError("taps must be in [1, subcarriers]")
        if self.cyclic_prefix < self.taps - 1:
            raise ConfigurationError("cyclic prefix shorter than taps - 1")
        if self.pilot_repetitions < 1 or self.data_symbols < 0:
            raise ConfigurationError("pilot_repetitions >= 1 and data_symbols >= 0")
        if self.symbol_energy <= 0 or self.channel_energy <= 0:
            raise ConfigurationError("energies must be positive")
        make_constellation(self.constellation)  # validate the name early

    @property
    def guard_subcarriers(self) -> int:
        return self.subcarriers - self.used_subcarriers

    @property
    def used_indices(self) -> np.ndarray:
        """Centered contiguous used block; ceil(guard/2) guards on the low edge."""
        start = (self.guard_subcarriers + 1) // 2
        return np.arange(start, start + self.used_subcarriers)

    @property
    def guard_indices(self) -> np.ndarray:
        mask = np.ones(self.subcarriers, dtype=bool)
        mask[self.used_indices] = False
        return np.flatnonzero(mask)

    @property
    def training_symbols(self) -> int:
        return self.users * self.pilot_repetitions

    @property
    def data_constellation(self) -> Constellation:
        return make_constellation(self.constellation, self.symbol_energy)

    @property
    def pilot_constellation(self) -> Constellation:
        return make_constellation("qpsk", self.symbol_energy)

    @property
    def bits_per_frame(self) -> int:
        return self.users * self.used_subcarriers * self.data_constellation.bits_per_symbol


def noise_from_snr(snr_db: float, cfg: SystemConfig) -> float:
    """Noise variance per complex sample for a target average receive SNR."""
    if not math.isfinite(snr_db):
        raise ValueError("snr_db must be finite")
    signal = (cfg.used_subcarriers * cfg.users * cfg.symbol_energy
              * cfg.channel_energy / cfg.subcarriers)
    return signal / (10.0 ** (snr_db / 10.0))


def noise_std(snr_db: float, cfg: SystemConfig) -> float:
    return math.sqrt(noise_from_snr(snr_db, cfg))


# ---------------------------------------------------------------------------
# Channel model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChannelRealization:
    """Time-domain taps plus the matching frequency-domain representation."""

    taps: np.ndarray         # (L, B, U)
    per_antenna: np.ndarray  # (B, W, U)

    def __post_init__(self):
        self.taps.setflags(write=False)
        self.per_antenna.setflags(write=False)

    @property
    def per_subcarrier(self) -> np.ndarray:
        """(W, B, U) view of the same frequency-domain data."""
        return np.swapaxes(self.per_antenna, 0, 1)


def time_to_freq_channel(taps: np.ndarray, subcarriers: int):
    """Frequency response on a grid centered at subcarrier index W/2.

    Returns (per_subcarrier, per_antenna). The tap-to-subcarrier map is the
    unitary DFT of the zero-padded taps with the half-grid frequency offset
    folded in as an alternating tap sign.
    """
    L = taps.shape[0]
    if L > subcarriers:
        raise ConfigurationError("more taps than subcarriers")
    padded = np.zeros((subcarriers,) + taps.shape[1:], dtype=complex)
    signs = (-1.0) ** np.arange(L)
    padded[:L] = taps * signs.reshape((L,) + (1,) * (taps.ndim - 1))
    per_subcarrier = np.fft.fft(padded, axis=0, norm="ortho")
    return per_subcarrier, np.swapaxes(per_subcarrier, 0, 1)


def draw_channel(cfg: SystemConfig, rng: np.random.Generator) -> ChannelRealization:
    """i.i.d. Rayleigh taps with a uniform power-delay profile.

    The per-tap variance channel_energy * W / L makes every frequency-domain
    entry have mean square channel_energy, which is the calibration the SNR
    definition assumes.
    """
    shape = (cfg.taps, cfg.antennas, cfg.users)
    scale = math.sqrt(cfg.channel_energy * cfg.subcarriers / cfg.taps / 2.0)
    taps = scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    _, per_antenna = time_to_freq_channel(taps, cfg.subcarriers)
    return ChannelRealization(taps=taps, per_antenna=per_antenna)


# ---------------------------------------------------------------------------
# Frames, modulation, transmission
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SymbolFrame:
    """Frequency-domain symbol matrix with zeroed guard rows."""

    symbols: np.ndarray                 # (W, U)
    payload_bits: np.ndarray | None     # (W_used, U, bits_per_symbol), None for pilots

    def __post_init__(self):
        self.symbols.setflags(write=False)
        if self.payload_bits is not None:
            self.payload_bits.setflags(write=False)


def random_payload_bits(cfg: SystemConfig, rng: np.random.Generator,
                        n_frames: int = 1) -> np.ndarray:
    bps = cfg.data_constellation.bits_per_symbol
    return rng.integers(0, 2, size=(n_frames, cfg.used_subcarriers, cfg.users, bps),
                        dtype=np.uint8)


def modulate(bits: np.ndarray, cfg: SystemConfig) -> SymbolFrame:
    """Gray-map payload bits onto the used subcarriers of one OFDM symbol."""
    const = cfg.data_constellation
    bps = const.bits_per_symbol
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size != cfg.used_subcarriers * cfg.users * bps:
        raise ValueError(
            f"expected {cfg.used_subcarriers * cfg.users * bps} bits, got {bits.size}")
    bits = bits.reshape(cfg.used_subcarriers, cfg.users, bps)
    weights = 1 << np.arange(bps - 1, -1, -1, dtype=np.int64)
    labels = (bits.astype(np.int64) * weights).sum(axis=-1)
    symbols = np.zeros((cfg.subcarriers, cfg.users), dtype=complex)
    symbols[cfg.used_indices] = const.points[const.index_of_label[labels]]
    return SymbolFrame(symbols=symbols, payload_bits=bits)


def demodulate(symbol_estimates: np.ndarray, cfg: SystemConfig) -> np.ndarray:
    """Nearest-point slicing on the used rows, returning Gray-labelled bits.

    Ties go to the lowest point index.
    """
    const = cfg.data_constellation
    bps = const.bits_per_symbol
    used = np.asarray(symbol_estimates)[cfg.used_indices]
    d2 = np.abs(used[..., None] - const.points) ** 2
    labels = const.label_ints[np.argmin(d2, axis=-1)]
    shifts = np.arange(bps - 1, -1, -1, dtype=np.int64)
    return ((labels[..., None] >> shifts) & 1).astype(np.uint8)


def extended_dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise dot product (no conjugation) of two equally shaped matrices."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 2:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return np.einsum("wu,wu->w", a, b)


def one_bit_quantize(y: np.ndarray) -> np.ndarray:
    """Independent signs of real and imaginary parts, with sign(0) = -1."""
    y = np.asarray(y)
    if not np.all(np.isfinite(y)):
        raise ValueError("one_bit_quantize requires finite input")
    re = np.where(y.real > 0, 1.0, -1.0)
    im = np.where(y.imag > 0, 1.0, -1.0)
    return re + 1j * im


def transmit(symbols: np.ndarray, chan: ChannelRealization, noise_var: float,
             rng: np.random.Generator):
    """Per-antenna receive model for one or more OFDM symbols.

    symbols is (W, U) or (W, U, N). Returns (unquantized, one_bit) with shapes
    (B, W) or (B, W, N). The cyclic prefix is modeled analytically: with
    cyclic_prefix >= taps - 1 the channel acts as a circular convolution, so
    the time-domain receive vector is the inverse unitary DFT of the
    per-antenna frequency mix plus white complex Gaussian noise.
    """
    if noise_var < 0:
        raise ValueError("noise_var must be >= 0")
    s = np.asarray(symbols, dtype=complex)
    if s.ndim == 2:
        mix = np.einsum("bwu,wu->bw", chan.per_antenna, s)
    elif s.ndim == 3:
        mix = np.einsum("bwu,wun->bwn", chan.per_antenna, s)
    else:
        raise ValueError("symbols must be (W, U) or (W, U, N)")
    y = np.fft.ifft(mix, axis=1, norm="ortho")
    if noise_var > 0:
        scale = math.sqrt(noise_var / 2.0)
        y = y + scale * (rng.standard_normal(y.shape)
                         + 1j * rng.standard_normal(y.shape))
    return y, one_bit_quantize(y)
