"""Receding-horizon choice of the next switch state.

Every control cycle the controller grows a depth-``M`` binary tree of slid
spectra from the current window.  Each leaf is one candidate switching path;
its cost is ``lambda1 * spectral + lambda2 * switching`` evaluated on the
window as it would look at the end of the horizon.  Paths that would leave
the switch idle for ``K_max`` cycles are infeasible.  Only the first bit of
the cheapest path is applied.

This module is the readable reference implementation.  The closed-loop
simulator uses the compiled kernel in :mod:`specmpc._kernels`, which is
tested to make the same choices.
"""
from __future__ import annotations

import math
from concurrent.futures import Executor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .filters import FilterWeights, ReferenceSpectrum
from .spectrum import (
    ConfigurationError,
    SpectrumState,
    SwitchingWindow,
    clamp_duty,
    resync,
    slide,
)

__all__ = [
    "CostWeights",
    "HorizonConfig",
    "ControllerState",
    "SlideCounter",
    "spectral_cost",
    "switching_cost",
    "ripple_feasibility",
    "evaluate_candidates",
    "step",
    "PredictiveController",
    "TIE_RTOL",
    "tie_tolerance",
    "choose_first_bit",
    "path_bits",
]

#: Costs within this relative distance of the minimum count as tied.
TIE_RTOL = 1e-9


def _parse_p(p) -> float:
    if isinstance(p, str):
        p = p.strip().lower()
        if p in ("inf", "infinity", "∞"):
            return math.inf
        p = float(p)
    p = float(p)
    if p not in (1.0, 2.0, math.inf):
        raise ConfigurationError(f"norm order p must be 1, 2 or inf, got {p!r}")
    return p


@dataclass(frozen=True)
class CostWeights:
    """Weights of the cost terms.  ``K_max=None`` means no ripple bound."""

    lambda1: float = 1.0
    lambda2: float = 0.0
    p: float = math.inf
    K_max: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "p", _parse_p(self.p))
        for name in ("lambda1", "lambda2"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ConfigurationError(f"{name} must be finite and >= 0, got {v!r}")
        if self.K_max is not None:
            if int(self.K_max) != self.K_max or self.K_max < 1:
                raise ConfigurationError(f"K_max must be an integer >= 1 or None, got {self.K_max!r}")
            object.__setattr__(self, "K_max", int(self.K_max))


@dataclass(frozen=True)
class HorizonConfig:
    M: int = 1

    def __post_init__(self):
        if int(self.M) != self.M or not 1 <= self.M <= 8:
            raise ConfigurationError(f"horizon M must be an integer in 1..8, got {self.M!r}")

    @property
    def candidates(self) -> int:
        return 1 << self.M

    @property
    def node_count(self) -> int:
        return (1 << (self.M + 1)) - 2


@dataclass
class ControllerState:
    window: SwitchingWindow
    spectrum: SpectrumState
    K_sw: int = 0
    last_output: int = 0

    @classmethod
    def initial(cls, N: int) -> "ControllerState":
        """All-off history: zero window, zero spectrum, output 0."""
        return cls(SwitchingWindow.zeros(N), SpectrumState.zeros(N), 0, 0)

    @classmethod
    def from_window(cls, window: SwitchingWindow, K_sw: int = 0, last_output: Optional[int] = None):
        last = window.newest_raw if last_output is None else int(last_output)
        return cls(window, resync(window), int(K_sw), last)

    def copy(self) -> "ControllerState":
        return ControllerState(self.window.copy(), self.spectrum.copy(), self.K_sw, self.last_output)


@dataclass
class SlideCounter:
    """Counts spectrum slides, used to check the tree's node count."""

    slides: int = 0

    def add(self, n: int = 1) -> None:
        self.slides += n


def _as_weight_array(weights) -> np.ndarray:
    if isinstance(weights, FilterWeights):
        return weights.weights
    return np.asarray(weights, dtype=float)


def _as_target_array(reference, n: int) -> np.ndarray:
    if reference is None:
        return np.zeros(n)
    if isinstance(reference, ReferenceSpectrum):
        return reference.targets
    return np.asarray(reference, dtype=float)


def _norm(t: np.ndarray, p: float) -> np.ndarray:
    """p-norm along the last axis."""
    if p == math.inf:
        return t.max(axis=-1, initial=0.0)
    if p == 1.0:
        return t.sum(axis=-1)
    return np.sqrt(np.sum(t * t, axis=-1))


def spectral_cost(spectrum, weights, reference=None, p=math.inf) -> float:
    """Weighted, one-sided deviation norm over bins ``1..N//2``.

    ``spectrum`` may be a :class:`SpectrumState` or an array of stored bins
    (index 0 is DC and is ignored).
    """
    bins = spectrum.bins if isinstance(spectrum, SpectrumState) else np.asarray(spectrum)
    w = _as_weight_array(weights)
    mags = np.abs(bins[1:])
    if mags.shape != w.shape:
        raise ValueError(f"spectrum has {mags.size} non-DC bins but weights have {w.size}")
    tgt = _as_target_array(reference, w.size)
    t = w * np.maximum(mags - tgt, 0.0)
    return float(_norm(t, _parse_p(p)))


def _seq_raw(window: SwitchingWindow, path: Sequence[int], i: int) -> int:
    """Element ``i`` of the oldest-first window followed by ``path``."""
    N = window.N
    return window.raw_at(i) if i < N else int(path[i - N])


def switching_cost(window: SwitchingWindow, candidate_path: Sequence[int]) -> int:
    """Transition count of the window after appending ``candidate_path``.

    Uses the stored count plus the edges the path adds minus the edges that
    leave with the expelled samples, so it costs O(len(path)).
    """
    M = len(candidate_path)
    if M < 1:
        raise ValueError("candidate path must contain at least one step")
    N = window.N
    count = window.transition_count
    for lvl in range(M):
        if _seq_raw(window, candidate_path, lvl) != _seq_raw(window, candidate_path, lvl + 1):
            count -= 1
        if _seq_raw(window, candidate_path, N - 1 + lvl) != _seq_raw(window, candidate_path, N + lvl):
            count += 1
    return count


def ripple_feasibility(K_sw: int, candidate_path: Sequence[int], last_output: int, K_max) -> bool:
    """True if the path never lets the idle counter reach ``K_max``."""
    if K_max is None or K_max == math.inf:
        return True
    prev, run = int(last_output), int(K_sw)
    for bit in candidate_path:
        if bit == prev:
            run += 1
            if run >= K_max:
                return False
        else:
            run = 0
        prev = bit
    return True


def path_bits(index: int, M: int) -> tuple[int, ...]:
    """Bits of a path in time order; bit ``l`` of ``index`` is step ``l``."""
    return tuple((index >> lvl) & 1 for lvl in range(M))


def tie_tolerance(cmin: float, cw: CostWeights) -> float:
    """Absolute tie band around the minimum cost.

    Proportional to both the minimum and the weights, so scaling the weights
    by a common factor scales the band too.
    """
    return TIE_RTOL * max(abs(cmin), cw.lambda1 + cw.lambda2)


def choose_first_bit(costs: np.ndarray, first_bits: np.ndarray, last_output: int, cw: CostWeights) -> int:
    """Apply the tie-break rules to leaf costs.

    Among all paths within the tie band of the minimum: keep the current
    output if any of them starts with it, otherwise take 0 if possible.
    """
    costs = np.asarray(costs, dtype=float)
    cmin = costs.min()
    if not math.isfinite(cmin):
        raise RuntimeError("no feasible candidate path")
    tied = costs <= cmin + tie_tolerance(cmin, cw)
    starts = set(int(b) for b in np.asarray(first_bits)[tied])
    if last_output in starts:
        return int(last_output)
    return 0 if 0 in starts else 1


def _path_terms(state: ControllerState, cw: CostWeights, M: int):
    """Switching cost and feasibility for every path index."""
    n = 1 << M
    sw = np.empty(n)
    feasible = np.empty(n, dtype=bool)
    for r in range(n):
        bits = path_bits(r, M)
        sw[r] = switching_cost(state.window, bits)
        feasible[r] = ripple_feasibility(state.K_sw, bits, state.last_output, cw.K_max)
    return sw, feasible


def _leaf_spectra_tree(state: ControllerState, d: float, M: int, counter: Optional[SlideCounter]):
    """Grow the tree level by level; row ``r`` holds the spectrum of path ``r``."""
    x = state.spectrum.twiddles
    S = state.spectrum.bins[None, :]
    vals = (0.0 - d, 1.0 - d)
    for lvl in range(M):
        old = state.window.shifted_at(lvl)
        S = np.concatenate([(S + (vals[0] - old)) * x, (S + (vals[1] - old)) * x])
        if counter is not None:
            counter.add(S.shape[0])
    return S


def _subtree_leaves(spectrum: SpectrumState, window: SwitchingWindow, prefix: tuple, d: float,
                    M: int, counter: Optional[SlideCounter]):
    """Depth-first leaves below ``prefix`` using cloned states and :func:`slide`."""
    if len(prefix) == M:
        return [(prefix, spectrum)]
    out = []
    for bit in (0, 1):
        v = bit - d
        child = slide(spectrum, window, v)
        if counter is not None:
            counter.add()
        w2 = window.copy()
        w2.push(bit, v)
        out.extend(_subtree_leaves(child, w2, prefix + (bit,), d, M, counter))
    return out


def evaluate_candidates(state: ControllerState, filter, reference, cw: CostWeights, hz: HorizonConfig,
                        duty_ref: float, *, counter: Optional[SlideCounter] = None,
                        mode: str = "tree", executor: Optional[Executor] = None) -> int:
    """Return the first bit of the cheapest feasible path.

    ``mode="tree"`` evaluates all leaves as one array per tree level.
    ``mode="sequential"`` walks the tree with explicit cloned states; with an
    ``executor`` the two first-level subtrees are evaluated concurrently.
    Both modes reduce in path-index order and give the same answer.
    """
    M = hz.M
    d = clamp_duty(duty_ref)
    w = _as_weight_array(filter)
    tgt = _as_target_array(reference, w.size)
    sw, feasible = _path_terms(state, cw, M)

    if mode == "tree":
        S = _leaf_spectra_tree(state, d, M, counter)
        t = w * np.maximum(np.abs(S[:, 1:]) - tgt, 0.0)
        spec = _norm(t, cw.p)
    elif mode == "sequential":
        def run(first_bit):
            v = first_bit - d
            child = slide(state.spectrum, state.window, v)
            local = SlideCounter()
            local.add()
            w2 = state.window.copy()
            w2.push(first_bit, v)
            return _subtree_leaves(child, w2, (first_bit,), d, M, local), local.slides

        if executor is None:
            parts = [run(0), run(1)]
        else:
            parts = list(executor.map(run, (0, 1)))
        spec = np.empty(1 << M)
        for leaves, n in parts:
            if counter is not None:
                counter.add(n)
            for bits, leaf in leaves:
                r = sum(b << i for i, b in enumerate(bits))
                spec[r] = spectral_cost(leaf, w, tgt, cw.p)
    else:
        raise ValueError(f"unknown evaluation mode {mode!r}")

    costs = cw.lambda1 * spec + cw.lambda2 * sw
    costs = np.where(feasible, costs, np.inf)
    first = np.arange(1 << M) & 1
    return choose_first_bit(costs, first, state.last_output, cw)


def step(state: ControllerState, duty_ref: float, filter, reference, cw: CostWeights, hz: HorizonConfig,
         resync_interval: int = 65536, *, counter: Optional[SlideCounter] = None,
         mode: str = "tree") -> int:
    """Choose, commit and return the next output bit (mutates ``state``)."""
    d = clamp_duty(duty_ref)
    bit = evaluate_candidates(state, filter, reference, cw, hz, d, counter=counter, mode=mode)
    v = bit - d
    state.spectrum = slide(state.spectrum, state.window, v)
    state.window.push(bit, v)
    state.K_sw = state.K_sw + 1 if bit == state.last_output else 0
    state.last_output = bit
    if state.spectrum.age >= resync_interval:
        state.spectrum = resync(state.window)
    return bit


class PredictiveController:
    """Stateful wrapper bundling the configuration with a :class:`ControllerState`.

    Args:
        weights: Compiled filter weights ``G``.
        reference: Reference spectrum ``F*`` (``None`` for zero).
        cost: Cost weights.
        horizon: Prediction horizon.
        N: Window length.
        resync_interval: Slides between full recomputations of the spectrum.
    """

    def __init__(self, weights: FilterWeights, reference: Optional[ReferenceSpectrum] = None,
                 cost: CostWeights = CostWeights(), horizon: HorizonConfig = HorizonConfig(),
                 N: Optional[int] = None, resync_interval: int = 65536):
        self.weights = weights
        self.N = int(N if N is not None else weights.N)
        self.reference = reference if reference is not None else ReferenceSpectrum.zeros(self.N)
        self.cost = cost
        self.horizon = horizon
        self.resync_interval = int(resync_interval)
        self.state = ControllerState.initial(self.N)
        self.counter = SlideCounter()

    def step(self, duty_ref: float) -> int:
        return step(self.state, duty_ref, self.weights, self.reference, self.cost, self.horizon,
                    self.resync_interval, counter=self.counter)

    def run(self, duty_refs) -> np.ndarray:
        """Open-loop modulation of a sequence of duty references."""
        return np.array([self.step(float(d)) for d in np.asarray(duty_refs, dtype=float)], dtype=np.int8)
