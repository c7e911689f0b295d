"""Scalar special functions, unitary DFT, box projection, and fixed-point primitives.

All functions are pure and operate on numpy float64/complex128 data; scalars
in, scalars out. Tables and format descriptors are immutable after
construction, so everything here is safe to share across worker threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, erfcx, log_ndtr

_SQRT2 = math.sqrt(2.0)
_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


class NumericalInstabilityError(ArithmeticError):
    """The literal reference form of a function broke down in finite precision."""


class ConfigurationError(ValueError):
    """A structural precondition (e.g. power-of-two length) was violated."""


def is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def std_normal_cdf(x):
    """Standard normal CDF via the complementary error function.

    Accepts scalars or arrays; raises ValueError on non-finite input.
    """
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("std_normal_cdf requires finite input")
    out = 0.5 * erfc(-arr / _SQRT2)
    return float(out) if arr.ndim == 0 else out


def log_std_normal_cdf(x):
    """log(Phi(x)), numerically stable for arbitrarily negative x."""
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("log_std_normal_cdf requires finite input")
    out = log_ndtr(arr)
    return float(out) if arr.ndim == 0 else out


def inv_mills(x: float) -> float:
    """Inverse Mills ratio exp(-x^2/2) / (sqrt(2*pi) * Phi(x)), literal form.

    This is the double-precision reference expression. It is numerically
    unstable for large negative x, where numerator and denominator both
    underflow; that regime raises NumericalInstabilityError instead of
    returning a bogus ratio.
    """
    if not math.isfinite(x):
        raise ValueError("inv_mills requires finite input")
    num = math.exp(-0.5 * x * x)
    den = math.sqrt(2.0 * math.pi) * std_normal_cdf(x)
    if den == 0.0:
        raise NumericalInstabilityError(
            f"inv_mills({x}) underflowed; use inv_mills_clamped or inv_mills_stable"
        )
    return num / den


def inv_mills_stable(x):
    """Inverse Mills ratio via the scaled complementary error function.

    The Gaussian factors of numerator and denominator cancel inside erfcx, so
    this equals inv_mills wherever the literal form is sound and follows the
    asymptote -x exactly for very negative x. Vectorized.
    """
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("inv_mills_stable requires finite input")
    out = _SQRT_2_OVER_PI / erfcx(-arr / _SQRT2)
    return float(out) if arr.ndim == 0 else out


# ---------------------------------------------------------------------------
# Fixed-point formats
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FixedPointFormat:
    """Signed two's-complement Q-format: integer_bits includes the sign bit."""

    integer_bits: int
    fractional_bits: int

    def __post_init__(self):
        if self.integer_bits < 1:
            raise ValueError("integer_bits must be >= 1 (sign bit included)")
        if self.fractional_bits < 0:
            raise ValueError("fractional_bits must be >= 0")

    @property
    def word_length(self) -> int:
        return self.integer_bits + self.fractional_bits

    @property
    def step(self) -> float:
        return 2.0 ** (-self.fractional_bits)

    @property
    def min_value(self) -> float:
        return -(2.0 ** (self.integer_bits - 1))

    @property
    def max_value(self) -> float:
        return 2.0 ** (self.integer_bits - 1) - self.step

    @property
    def min_int(self) -> int:
        return -(1 << (self.word_length - 1))

    @property
    def max_int(self) -> int:
        return (1 << (self.word_length - 1)) - 1

    def to_int(self, x) -> np.ndarray:
        """Integer (scaled) representation of already-quantized values."""
        return np.clip(np.rint(np.asarray(x, dtype=float) / self.step),
                       self.min_int, self.max_int).astype(np.int64)

    def __str__(self) -> str:
        return f"[{self.integer_bits}.{self.fractional_bits}]"


def quantize_fixed(x, fmt: FixedPointFormat):
    """Round to the nearest representable value (ties to even) and saturate.

    Real input is quantized directly; complex input is quantized component-wise.
    Idempotent: representable values map to themselves.
    """
    arr = np.asarray(x)
    if np.iscomplexobj(arr):
        return quantize_fixed(arr.real, fmt) + 1j * quantize_fixed(arr.imag, fmt)
    arr = np.asarray(arr, dtype=float)
    q = np.clip(np.rint(arr / fmt.step), fmt.min_int, fmt.max_int) * fmt.step
    return float(q) if arr.ndim == 0 else q


# ---------------------------------------------------------------------------
# Clamped inverse-Mills lookup table
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClampedMillsTable:
    """Sampled inverse Mills ratio over (t_n, t_p) with asymptotic clamps outside.

    The table holds uniformly spaced samples starting at t_n (grid pitch
    (t_p - t_n)/len(entries)), each quantized to value_format. Lookups snap to
    the nearest sample; there is no interpolation, matching a hardware LUT
    addressed directly by the quantized input word.
    """

    t_n: float
    t_p: float
    entries: np.ndarray
    value_format: FixedPointFormat

    def __post_init__(self):
        if not self.t_n < 0.0 < self.t_p:
            raise ValueError("thresholds must satisfy t_n < 0 < t_p")
        if np.any(self.entries < 0.0):
            raise ValueError("table entries must be nonnegative")
        self.entries.setflags(write=False)

    @property
    def pitch(self) -> float:
        return (self.t_p - self.t_n) / len(self.entries)

    @classmethod
    def build(cls, t_n: float = -4.0, t_p: float = 4.0, n_entries: int = 128,
              value_format: FixedPointFormat = FixedPointFormat(3, 4)) -> "ClampedMillsTable":
        pitch = (t_p - t_n) / n_entries
        grid = t_n + pitch * np.arange(n_entries)
        entries = quantize_fixed(inv_mills_stable(grid), value_format)
        return cls(t_n=t_n, t_p=t_p, entries=entries, value_format=value_format)


def inv_mills_clamped(x, table: ClampedMillsTable):
    """Piecewise inverse Mills ratio: 0 above t_p, -x below t_n, table inside."""
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("inv_mills_clamped requires finite input")
    idx = np.clip(np.rint((arr - table.t_n) / table.pitch).astype(np.int64),
                  0, len(table.entries) - 1)
    out = np.where(arr >= table.t_p, 0.0,
                   np.where(arr <= table.t_n, -arr, table.entries[idx]))
    return float(out) if arr.ndim == 0 else out


def inv_mills_complex(z, table: ClampedMillsTable | None = None):
    """Apply the scalar inverse-Mills variant to real and imaginary parts.

    With a table the clamped variant is used, otherwise the stable exact form.
    """
    arr = np.asarray(z, dtype=complex)
    if table is None:
        out = inv_mills_stable(arr.real) + 1j * inv_mills_stable(arr.imag)
    else:
        out = inv_mills_clamped(arr.real, table) + 1j * inv_mills_clamped(arr.imag, table)
    return complex(out) if arr.ndim == 0 else out


# ---------------------------------------------------------------------------
# Transforms and element-wise operators
# ---------------------------------------------------------------------------

def unitary_dft(v, inverse: bool = False):
    """Unitary DFT of a power-of-two-length vector (F F^H = I)."""
    arr = np.asarray(v, dtype=complex)
    if arr.ndim != 1:
        raise ConfigurationError("unitary_dft expects a 1-D vector")
    if not is_power_of_two(arr.shape[0]):
        raise ConfigurationError(f"length {arr.shape[0]} is not a power of two")
    if inverse:
        return np.fft.ifft(arr, norm="ortho")
    return np.fft.fft(arr, norm="ortho")


def box_project(x, half_width: float):
    """Clip real and imaginary parts independently to [-half_width, half_width]."""
    if half_width <= 0:
        raise ValueError("half_width must be positive")
    arr = np.asarray(x, dtype=complex)
    out = (np.clip(arr.real, -half_width, half_width)
           + 1j * np.clip(arr.imag, -half_width, half_width))
    return complex(out) if arr.ndim == 0 else out


def sign_refine(mask, x):
    """Component-wise product Re(mask)*Re(x) + j*Im(mask)*Im(x).

    With a 1-bit mask (components in {-1,+1}) this conditionally negates the
    real and imaginary parts of x; applying the same mask twice is an identity.
    """
    m = np.asarray(mask)
    a = np.asarray(x)
    out = m.real * a.real + 1j * (m.imag * a.imag)
    return complex(out) if out.ndim == 0 else out
