"""Declarative spectral weighting ``G`` and reference spectrum ``F*``.

A :class:`FilterSpec` is a list of frequency segments that tile ``[0, fc/2]``
plus optional gap bands.  :func:`compile_weights` evaluates it on the DFT bin
grid.  A gap band carries a *large* weight: the cost penalises weighted
magnitude, so a high weight is what keeps a band free of distortion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .spectrum import ConfigurationError, count_bins

__all__ = [
    "SHAPES",
    "Segment",
    "Gap",
    "FilterSpec",
    "FilterWeights",
    "ReferenceSpectrum",
    "compile_weights",
    "move_gap",
    "gap_centers",
    "flat_reference",
    "default_template",
]

SHAPES = ("constant", "linear_in_f", "inverse_in_f")

# Relative slack when checking that segments tile the band.
_TILE_RTOL = 1e-9


@dataclass(frozen=True)
class Segment:
    f_start: float
    f_end: float
    shape: str
    magnitude: float

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ConfigurationError(f"unknown segment shape {self.shape!r}; expected one of {SHAPES}")
        if not (math.isfinite(self.magnitude) and self.magnitude >= 0):
            raise ConfigurationError(f"segment magnitude must be finite and >= 0, got {self.magnitude!r}")
        if not self.f_end > self.f_start:
            raise ConfigurationError(f"segment end {self.f_end} must exceed start {self.f_start}")


@dataclass(frozen=True)
class Gap:
    f_center: float
    width: float
    weight: float

    def __post_init__(self):
        if not (math.isfinite(self.weight) and self.weight >= 0):
            raise ConfigurationError(f"gap weight must be finite and >= 0, got {self.weight!r}")
        if not self.width > 0:
            raise ConfigurationError(f"gap width must be positive, got {self.width!r}")

    @property
    def band(self) -> tuple[float, float]:
        return self.f_center - self.width / 2, self.f_center + self.width / 2


@dataclass(frozen=True)
class FilterSpec:
    segments: tuple[Segment, ...]
    gaps: tuple[Gap, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "gaps", tuple(self.gaps))

    def scaled(self, alpha: float) -> "FilterSpec":
        """Every magnitude and gap weight multiplied by ``alpha``."""
        return FilterSpec(
            tuple(replace(s, magnitude=s.magnitude * alpha) for s in self.segments),
            tuple(replace(g, weight=g.weight * alpha) for g in self.gaps),
        )

    def validate(self, fc: float) -> None:
        """Check tiling of ``[0, fc/2]`` and that gaps sit below Nyquist."""
        nyq = fc / 2
        tol = _TILE_RTOL * nyq
        if not self.segments:
            raise ConfigurationError("filter needs at least one segment")
        segs = self.segments
        if abs(segs[0].f_start) > tol:
            raise ConfigurationError(f"segments must start at 0 Hz, first starts at {segs[0].f_start} Hz")
        for a, b in zip(segs, segs[1:]):
            if b.f_start < a.f_end - tol:
                raise ConfigurationError(
                    f"overlapping segments: [{a.f_start}, {a.f_end}] and [{b.f_start}, {b.f_end}]"
                )
            if b.f_start > a.f_end + tol:
                raise ConfigurationError(f"uncovered range ({a.f_end}, {b.f_start}) Hz between segments")
        if abs(segs[-1].f_end - nyq) > tol:
            raise ConfigurationError(
                f"segments must end at fc/2 = {nyq} Hz, last ends at {segs[-1].f_end} Hz"
            )
        for g in self.gaps:
            lo, hi = g.band
            if lo <= 0 or hi > nyq + tol:
                raise ConfigurationError(
                    f"gap band [{lo}, {hi}] Hz must lie inside (0, fc/2 = {nyq}] Hz"
                )


@dataclass(frozen=True)
class FilterWeights:
    """Per-bin weights for bins ``1..N//2`` (bin 0 is never weighted)."""

    weights: np.ndarray
    N: int
    fc: float

    def full(self) -> np.ndarray:
        """Weights indexed by stored bin ``0..N//2`` with a zero at bin 0."""
        return np.concatenate(([0.0], self.weights))


@dataclass(frozen=True)
class ReferenceSpectrum:
    """Magnitude targets ``F*`` for bins ``1..N//2``; zero by default."""

    targets: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.targets, dtype=float)
        if np.any(t < 0) or not np.all(np.isfinite(t)):
            raise ConfigurationError("reference targets must be finite and >= 0")
        object.__setattr__(self, "targets", t)

    @classmethod
    def zeros(cls, N: int) -> "ReferenceSpectrum":
        return cls(np.zeros(count_bins(N) - 1))

    def full(self) -> np.ndarray:
        return np.concatenate(([0.0], self.targets))


def _shape_values(seg: Segment, f: np.ndarray, bin_width: float) -> np.ndarray:
    if seg.shape == "constant":
        return np.full_like(f, seg.magnitude)
    if seg.shape == "linear_in_f":
        return seg.magnitude * f / seg.f_end
    f_ref = max(seg.f_start, bin_width)
    return seg.magnitude * f_ref / f


def compile_weights(spec: FilterSpec, N: int, fc: float) -> FilterWeights:
    """Evaluate ``spec`` at ``f_n = n fc / N`` for ``n = 1..N//2``.

    A bin on a shared segment boundary takes the value of the lower segment.
    Gap bands (closed intervals) override segment values; if gaps overlap the
    later gap wins.
    """
    spec.validate(fc)
    bw = fc / N
    n = np.arange(1, count_bins(N))
    f = n * bw
    w = np.full(f.shape, np.nan)
    for seg in reversed(spec.segments):
        mask = (f >= seg.f_start) & (f <= seg.f_end)
        w[mask] = _shape_values(seg, f[mask], bw)
    # anything not hit lies inside the tolerance slack at the edges
    if np.isnan(w).any():
        raise ConfigurationError("filter segments leave some bins uncovered")
    for g in spec.gaps:
        lo, hi = g.band
        w[(f >= lo) & (f <= hi)] = g.weight
    return FilterWeights(w, N, fc)


def move_gap(spec: FilterSpec, gap_index: int, new_center: float, fc: float) -> FilterSpec:
    """Return ``spec`` with gap ``gap_index`` recentred at ``new_center``."""
    try:
        g = spec.gaps[gap_index]
    except IndexError:
        raise ConfigurationError(f"no gap with index {gap_index}") from None
    moved = replace(g, f_center=float(new_center))
    lo, hi = moved.band
    if lo <= 0 or hi >= fc / 2:
        raise ConfigurationError(f"gap band [{lo}, {hi}] Hz would leave (0, fc/2 = {fc / 2}) Hz")
    if moved == g:
        return spec
    gaps = list(spec.gaps)
    gaps[gap_index] = moved
    return FilterSpec(spec.segments, tuple(gaps))


def gap_centers(f_start: float, f_end: float, duration: float, update_period: float) -> np.ndarray:
    """Gap centres for a linear sweep updated every ``update_period`` seconds.

    The first centre is ``f_start`` at t=0 and the last is ``f_end`` at
    ``t = duration``.
    """
    if duration <= 0:
        return np.array([float(f_end)])
    steps = max(int(math.ceil(duration / update_period - 1e-9)), 1)
    t = np.minimum(np.arange(steps + 1) * update_period, duration)
    return f_start + (f_end - f_start) * t / duration


def flat_reference(N: int, fc: float, level: float, f_low: float, gaps: Sequence[Gap] = ()) -> ReferenceSpectrum:
    """Constant target ``level`` from ``f_low`` up to fc/2, zero elsewhere and in gaps."""
    f = np.arange(1, count_bins(N)) * fc / N
    t = np.where(f >= f_low, float(level), 0.0)
    for g in gaps:
        lo, hi = g.band
        t[(f >= lo) & (f <= hi)] = 0.0
    return ReferenceSpectrum(t)


def default_template(fc: float, low_magnitude: float = 100.0, high_magnitude: float = 1.0,
                     high_shape: str = "linear_in_f", gaps: Sequence[Gap] = ()) -> FilterSpec:
    """Inverse-in-f weight up to fc/10, then a rising or flat band to fc/2."""
    return FilterSpec(
        (
            Segment(0.0, fc / 10, "inverse_in_f", low_magnitude),
            Segment(fc / 10, fc / 2, high_shape, high_magnitude),
        ),
        tuple(gaps),
    )
