"""Sliding DFT over the window of DC-shifted switch samples.

The window holds the last ``N`` shifted samples ``s~ = s - d`` together with
the raw switch states.  Only bins ``0..N//2`` are stored because the window is
real valued.

Phase convention
----------------
With twiddles ``x[n] = exp(+j 2 pi n / N)`` the recursion

    X[n] <- (X[n] - oldest + new) * x[n]

keeps ``X`` equal to the ordinary DFT ``sum_m w[m] exp(-j 2 pi n m / N)`` of
the window ordered oldest-first (``w[0]`` is the oldest sample).  Dropping
``w[0]`` and appending ``new`` at index ``N`` is the same as putting it at
index 0 before the rotation, and the rotation then shifts every index down by
one.  :func:`resync` therefore computes the plain DFT of the oldest-first
window and no age-dependent rotation is needed.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

__all__ = [
    "ConfigurationError",
    "EngineConfig",
    "SwitchingWindow",
    "SpectrumState",
    "make_shift_vector",
    "shifted_value",
    "clamp_duty",
    "slide",
    "resync",
    "count_bins",
]


class ConfigurationError(ValueError):
    """Raised for invalid engine, filter or controller settings."""


def count_bins(N: int) -> int:
    """Number of stored bins for a window of length ``N``."""
    return N // 2 + 1


@dataclass(frozen=True)
class EngineConfig:
    """Window length, control frequency and drift-resync period."""

    N: int = 2048
    fc: float = 400e3
    resync_interval: int = 65536

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ConfigurationError(f"N must be an integer >= 2, got {self.N!r}")
        if not self.fc > 0:
            raise ConfigurationError(f"fc must be positive, got {self.fc!r}")
        if int(self.resync_interval) != self.resync_interval or self.resync_interval < 1:
            raise ConfigurationError(
                f"resync_interval must be an integer >= 1, got {self.resync_interval!r}"
            )

    @property
    def bin_width(self) -> float:
        return self.fc / self.N

    def bin_frequencies(self) -> np.ndarray:
        return np.arange(count_bins(self.N)) * self.bin_width


def make_shift_vector(N: int) -> np.ndarray:
    """Twiddles ``exp(j 2 pi n / N)`` for the stored bins ``n = 0..N//2``."""
    if int(N) != N or N < 2:
        raise ConfigurationError(f"N must be an integer >= 2, got {N!r}")
    n = np.arange(count_bins(int(N)))
    x = np.exp(2j * np.pi * n / N)
    x[0] = 1.0 + 0.0j
    return x


def clamp_duty(duty_ref: float) -> float:
    """Clamp a duty reference to ``[0, 1]``, logging a warning if it was outside."""
    d = float(duty_ref)
    if not 0.0 <= d <= 1.0:
        clamped = min(max(d, 0.0), 1.0) if d == d else 0.0
        logger.warning("duty reference %g outside [0, 1], clamped to %g", d, clamped)
        return clamped
    return d


def shifted_value(raw: int, duty_ref: float) -> float:
    """Return ``raw - duty_ref`` with ``duty_ref`` clamped to ``[0, 1]``."""
    if raw not in (0, 1):
        raise ValueError(f"raw switch state must be 0 or 1, got {raw!r}")
    return raw - clamp_duty(duty_ref)


@dataclass
class SwitchingWindow:
    """Ring buffer of shifted samples and raw states.

    ``head`` points at the oldest sample, which is also the next slot to be
    overwritten.  ``transition_count`` is the number of adjacent unequal raw
    states in oldest-to-newest order.
    """

    samples: np.ndarray
    raw_states: np.ndarray
    head: int = 0
    transition_count: int = 0

    @classmethod
    def zeros(cls, N: int) -> "SwitchingWindow":
        """All-off window: raw states 0 and shifted samples 0."""
        if N < 2:
            raise ConfigurationError(f"N must be >= 2, got {N!r}")
        return cls(np.zeros(N), np.zeros(N, dtype=np.int8), 0, 0)

    @classmethod
    def from_sequence(cls, raw, shifted) -> "SwitchingWindow":
        """Build a window from oldest-first raw states and shifted samples."""
        raw = np.asarray(raw, dtype=np.int8).copy()
        shifted = np.asarray(shifted, dtype=float).copy()
        if raw.shape != shifted.shape or raw.ndim != 1:
            raise ValueError("raw and shifted must be 1-D arrays of equal length")
        if raw.size < 2:
            raise ConfigurationError("window length must be >= 2")
        tc = int(np.count_nonzero(raw[1:] != raw[:-1]))
        return cls(shifted, raw, 0, tc)

    @property
    def N(self) -> int:
        return self.samples.shape[0]

    @property
    def oldest(self) -> float:
        return float(self.samples[self.head])

    @property
    def newest_raw(self) -> int:
        return int(self.raw_states[(self.head - 1) % self.N])

    def ordered_samples(self) -> np.ndarray:
        """Shifted samples, oldest first."""
        return np.roll(self.samples, -self.head)

    def ordered_raw(self) -> np.ndarray:
        """Raw states, oldest first."""
        return np.roll(self.raw_states, -self.head)

    def raw_at(self, age_index: int) -> int:
        """Raw state ``age_index`` places after the oldest (0 = oldest)."""
        return int(self.raw_states[(self.head + age_index) % self.N])

    def shifted_at(self, age_index: int) -> float:
        return float(self.samples[(self.head + age_index) % self.N])

    def push(self, raw: int, shifted: float) -> None:
        """Insert a sample, expelling the oldest, and update the count."""
        N = self.N
        h = self.head
        if self.raw_states[h] != self.raw_states[(h + 1) % N]:
            self.transition_count -= 1
        if raw != self.raw_states[(h - 1) % N]:
            self.transition_count += 1
        self.samples[h] = shifted
        self.raw_states[h] = raw
        self.head = (h + 1) % N

    def copy(self) -> "SwitchingWindow":
        return SwitchingWindow(
            self.samples.copy(), self.raw_states.copy(), self.head, self.transition_count
        )


@dataclass
class SpectrumState:
    """Stored DFT bins ``0..N//2`` and the number of slides since resync."""

    bins: np.ndarray
    age: int = 0
    twiddles: np.ndarray = field(default=None, repr=False)

    @classmethod
    def zeros(cls, N: int) -> "SpectrumState":
        return cls(np.zeros(count_bins(N), dtype=complex), 0, make_shift_vector(N))

    def copy(self) -> "SpectrumState":
        # twiddles are never mutated, so branches may share them
        return SpectrumState(self.bins.copy(), self.age, self.twiddles)

    @property
    def magnitudes(self) -> np.ndarray:
        return np.abs(self.bins)


def slide(spectrum: SpectrumState, window: SwitchingWindow, new_shifted: float) -> SpectrumState:
    """Advance ``spectrum`` by one sample without touching ``window``.

    Returns a new state.  The caller is responsible for pushing the sample into
    the window when the step is committed.
    """
    x = spectrum.twiddles
    if x is None:
        x = make_shift_vector(window.N)
    bins = (spectrum.bins + (new_shifted - window.oldest)) * x
    return SpectrumState(bins, spectrum.age + 1, x)


def resync(window: SwitchingWindow) -> SpectrumState:
    """Recompute the stored bins from scratch (FFT of the oldest-first window)."""
    bins = np.fft.rfft(window.ordered_samples())
    return SpectrumState(bins.astype(complex), 0, make_shift_vector(window.N))
