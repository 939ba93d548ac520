"""Offline metrics on recorded traces.

Spectra are per-line powers of a two-sided spectrum, reported for
non-negative frequencies only and normalised to the power of the 0 Hz line.
For a unit square wave of duty ``d`` the DC line is ``d**2`` and each non-DC
harmonic ``k`` carries ``(sin(pi k d) / (pi k))**2``, so plotted values line
up with Fourier-series coefficients.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import signal

__all__ = [
    "DB_FLOOR",
    "PowerSpectrum",
    "RippleStats",
    "welch_spectrum",
    "sfdr",
    "find_peaks",
    "gap_depth",
    "flank_bands",
    "avg_switching_frequency",
    "rising_edges",
    "ripple_stats",
    "spectrogram",
    "distortion_power",
    "steady_state",
    "max_run_length",
]

DB_FLOOR = -120.0


def to_db(power, floor: float = DB_FLOOR) -> np.ndarray:
    p = np.asarray(power, dtype=float)
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(p)
    return np.maximum(db, floor)


@dataclass
class PowerSpectrum:
    """Per-line power normalised to DC.

    Attributes:
        freqs: Bin frequencies in Hz, starting at 0.
        power: Linear power relative to the DC line (``power[0] == 1`` unless
            the trace has zero mean).
        dc_power: Absolute DC power used for the normalisation.
        normalized: False when the DC power was zero and no scaling was applied.
    """

    freqs: np.ndarray
    power: np.ndarray
    dc_power: float
    normalized: bool = True

    @property
    def db(self) -> np.ndarray:
        return to_db(self.power)

    @property
    def bin_width(self) -> float:
        return float(self.freqs[1] - self.freqs[0])

    def scaled(self, factor: float) -> "PowerSpectrum":
        return PowerSpectrum(self.freqs, self.power * factor, self.dc_power, self.normalized)

    def absolute(self) -> np.ndarray:
        return self.power * (self.dc_power if self.normalized else 1.0)

    def total_power(self) -> float:
        """Mean-square of the trace implied by the spectrum (both sides summed)."""
        p = self.absolute()
        total = p[0] + 2.0 * p[1:].sum()
        if self._has_nyquist:
            total -= p[-1]
        return float(total)

    _has_nyquist: bool = False


def welch_spectrum(trace, sample_rate: float, segment_length: Optional[int] = None,
                   overlap: float = 0.5, window: str = "hann") -> PowerSpectrum:
    """Averaged periodogram normalised to the DC line.

    Args:
        trace: Real samples.
        sample_rate: Sample rate in Hz.
        segment_length: Samples per segment; defaults to the whole trace.
        overlap: Fraction of a segment shared with the next one.
        window: Any scipy window name; ``"boxcar"`` with a single segment is
            a plain periodogram (used for Parseval checks).

    Each segment has its mean removed before windowing; the DC line is taken
    from the mean of the whole trace instead.
    """
    x = np.asarray(trace, dtype=float)
    L = x.size if segment_length is None else int(segment_length)
    if L < 2:
        raise ValueError("segment length must be at least 2 samples")
    if x.size < L:
        raise ValueError(f"trace has {x.size} samples, fewer than one segment of {L}")
    if not 0 <= overlap < 1:
        raise ValueError(f"overlap must lie in [0, 1), got {overlap!r}")
    noverlap = int(round(L * overlap))
    f, P = signal.welch(x, fs=sample_rate, window=window, nperseg=L, noverlap=noverlap,
                        detrend="constant", scaling="spectrum", return_onesided=True)
    even = L % 2 == 0
    # one-sided "spectrum" scaling doubles every line except DC and Nyquist
    if even:
        P[1:-1] /= 2.0
    else:
        P[1:] /= 2.0
    dc = float(x.mean() ** 2)
    P[0] = dc
    norm = dc > 0
    out = PowerSpectrum(f, P / dc if norm else P, dc if norm else 1.0, norm)
    out._has_nyquist = even
    return out


def find_peaks(power: np.ndarray, neighborhood: int = 3) -> np.ndarray:
    """Indices of non-DC bins that are maxima of their neighbourhood."""
    if neighborhood < 1:
        raise ValueError("neighborhood must be >= 1")
    h = neighborhood // 2
    p = np.asarray(power, dtype=float)
    peaks = []
    for i in range(1, p.size):
        lo, hi = max(1, i - h), min(p.size, i + h + 1)
        seg = p[lo:hi]
        if p[i] >= seg.max() and p[i] > 0:
            # on a plateau keep only the first bin
            if i > 1 and i - 1 >= lo and p[i - 1] == p[i]:
                continue
            peaks.append(i)
    return np.asarray(peaks, dtype=int)


def sfdr(spectrum: PowerSpectrum, reference: str = "peak", neighborhood: int = 3,
         f_min: Optional[float] = None, f_max: Optional[float] = None) -> float:
    """Spurious-free dynamic range in dB.

    ``reference="peak"`` compares the largest and second-largest non-DC
    peaks.  ``reference="dc"`` compares the DC line with the largest non-DC
    line, which is how a spectrum normalised to 0 Hz reads in a plot.
    """
    p = spectrum.power
    sel = np.ones(p.size, dtype=bool)
    sel[0] = False
    if f_min is not None:
        sel &= spectrum.freqs >= f_min
    if f_max is not None:
        sel &= spectrum.freqs <= f_max
    if reference == "dc":
        if not spectrum.normalized:
            raise ValueError("DC-referenced SFDR needs a spectrum with nonzero DC")
        top = p[sel].max(initial=0.0)
        if top <= 0:
            raise ValueError("spectrum has no non-DC power")
        return float(10 * np.log10(p[0] / top))
    if reference != "peak":
        raise ValueError(f"reference must be 'peak' or 'dc', got {reference!r}")
    pk = [i for i in find_peaks(p, neighborhood) if sel[i]]
    if len(pk) < 2:
        raise ValueError("need at least two spectral peaks for SFDR")
    vals = np.sort(p[pk])[::-1]
    return float(10 * np.log10(vals[0] / vals[1]))


def flank_bands(band: tuple[float, float], width: Optional[float] = None):
    """Bands of ``width`` (default: the band width) directly below and above ``band``."""
    lo, hi = band
    w = hi - lo if width is None else width
    return ((lo - w, lo), (hi, hi + w))


def _band_mask(freqs, lo, hi, closed_hi=True):
    return (freqs >= lo) & ((freqs <= hi) if closed_hi else (freqs < hi))


def gap_depth(spectrum: PowerSpectrum, band: tuple[float, float],
              flanks: Optional[Sequence[tuple[float, float]]] = None) -> float:
    """Mean flank power minus mean in-gap power, both in dB.

    Flank bands are half-open on the side touching the gap so that no bin is
    counted twice.
    """
    f = spectrum.freqs
    db = spectrum.db
    lo, hi = band
    inside = _band_mask(f, lo, hi)
    if flanks is None:
        flanks = flank_bands(band)
    fl = np.zeros_like(inside)
    for a, b in flanks:
        m = (f >= a) & (f <= b)
        fl |= m & ~inside
    if not inside.any() or not fl.any():
        raise ValueError("gap or flank band contains no spectrum bins")
    if f[inside].max() > f[-1] or max(b for _, b in flanks) > f[-1] + spectrum.bin_width:
        raise ValueError("bands exceed the spectrum range")
    return float(db[fl].mean() - db[inside].mean())


def rising_edges(bits, initial_state: int = 0) -> int:
    """Number of 0 -> 1 transitions, treating the sample before the trace as ``initial_state``."""
    b = np.asarray(bits).astype(np.int8)
    if b.size == 0:
        return 0
    prev = np.concatenate(([initial_state], b[:-1]))
    return int(np.count_nonzero((prev == 0) & (b == 1)))


def avg_switching_frequency(bits, duration: float, initial_state: int = 0) -> float:
    """Rising edges per second; one rising edge marks one switching cycle."""
    if not duration > 0:
        raise ValueError("duration must be positive")
    return rising_edges(bits, initial_state) / duration


def max_run_length(bits) -> int:
    """Longest run of identical consecutive samples."""
    b = np.asarray(bits)
    if b.size == 0:
        return 0
    change = np.flatnonzero(np.diff(b) != 0)
    edges = np.concatenate(([-1], change, [b.size - 1]))
    return int(np.diff(edges).max())


def steady_state(trace, start_fraction: float = 0.2) -> np.ndarray:
    x = np.asarray(trace)
    return x[int(len(x) * start_fraction):]


@dataclass
class RippleStats:
    variance: float
    peak_to_peak: float
    rel_variance: Optional[float] = None
    rel_peak_to_peak: Optional[float] = None


def _ratio(a, b):
    if b == 0:
        return 1.0 if a == 0 else float("inf")
    return a / b


def ripple_stats(vC, baseline=None, start_fraction: float = 0.2) -> RippleStats:
    """Variance and peak-to-peak of the steady-state part of ``vC``.

    When ``baseline`` is given, relative factors ``this / baseline`` are
    included.  The same start fraction is applied to both traces.
    """
    v = steady_state(vC, start_fraction)
    var = float(np.var(v)) if v.size else 0.0
    p2p = float(np.ptp(v)) if v.size else 0.0
    if baseline is None:
        return RippleStats(var, p2p)
    b = ripple_stats(baseline, None, start_fraction)
    return RippleStats(var, p2p, _ratio(var, b.variance), _ratio(p2p, b.peak_to_peak))


def spectrogram(trace, sample_rate: float, window_length: int, hop: int, floor_db: float = DB_FLOOR):
    """Short-time power spectrum with a Hann window.

    Returns ``(freqs, times, power_db)`` where ``power_db`` has shape
    ``(len(freqs), len(times))``.
    """
    x = np.asarray(trace, dtype=float)
    if x.size < window_length:
        raise ValueError(f"trace has {x.size} samples, fewer than one window of {window_length}")
    if not 1 <= hop <= window_length:
        raise ValueError("hop must lie in [1, window_length]")
    f, t, S = signal.spectrogram(x, fs=sample_rate, window="hann", nperseg=window_length,
                                 noverlap=window_length - hop, detrend=False,
                                 scaling="spectrum", mode="psd")
    return f, t, to_db(S, floor_db)


def distortion_power(spectrum: PowerSpectrum, band: tuple[float, float]) -> float:
    """Sum of DC-normalised line powers in ``band`` (DC itself excluded)."""
    lo, hi = band
    if not hi >= lo:
        raise ValueError("band upper edge must not be below the lower edge")
    m = _band_mask(spectrum.freqs, lo, hi)
    m[0] = False
    if not m.any():
        raise ValueError("band contains no spectrum bins")
    return float(spectrum.power[m].sum())
