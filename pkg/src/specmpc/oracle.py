"""Slow reference implementations used only by the test suite.

Everything here is written for clarity and shares no code with the fast
paths it checks.  Candidate paths are enumerated one by one with a fresh
DFT of the end-of-horizon window, and the plant is integrated with a
fixed-step fourth-order Runge-Kutta scheme.
"""
from __future__ import annotations

import cmath
import math
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "direct_dft",
    "direct_dft_matrix",
    "recount_transitions",
    "brute_force_costs",
    "brute_force_choice",
    "substep_plant",
]

TIE_RTOL = 1e-9


def direct_dft(window: Sequence[float]) -> np.ndarray:
    """``X[n] = sum_m w[m] exp(-2j pi n m / N)`` for ``n = 0..N//2`` (pure Python loops)."""
    w = [float(v) for v in window]
    N = len(w)
    out = np.empty(N // 2 + 1, dtype=complex)
    for n in range(N // 2 + 1):
        acc = 0j
        for m, v in enumerate(w):
            acc += v * cmath.exp(-2j * math.pi * ((n * m) % N) / N)
        out[n] = acc
    return out


def direct_dft_matrix(window) -> np.ndarray:
    """Same sum as :func:`direct_dft` written as one matrix-vector product.

    Used where ``N`` is in the thousands and the pure loop would be too slow.
    The phase index ``n*m mod N`` is reduced exactly in integers first.
    """
    w = np.asarray(window, dtype=float)
    N = w.size
    n = np.arange(N // 2 + 1)[:, None]
    m = np.arange(N)[None, :]
    phase = (n * m) % N
    return np.exp(-2j * np.pi * phase / N) @ w


def recount_transitions(raw: Sequence[int]) -> int:
    """Number of adjacent unequal entries."""
    return sum(1 for a, b in zip(raw[:-1], raw[1:]) if a != b)


def _path(r: int, M: int) -> list:
    return [(r >> i) & 1 for i in range(M)]


def _cost(mags: np.ndarray, weights: np.ndarray, targets: np.ndarray, p: float) -> float:
    terms = [weights[n] * max(mags[n] - targets[n], 0.0) for n in range(1, len(mags))]
    if p == math.inf:
        return max(terms) if terms else 0.0
    return sum(t ** p for t in terms) ** (1.0 / p)


def brute_force_costs(raw, shifted, K_sw: int, last_output: int, duty: float, weights, targets,
                      lambda1: float, lambda2: float, p: float, K_max: Optional[int], M: int) -> list:
    """Total cost of every path; ``inf`` for paths that break the ``K_max`` rule.

    ``raw`` and ``shifted`` are the current window, oldest first.  ``weights``
    and ``targets`` cover bins ``0..N//2`` (bin 0 is ignored).  Path ``r``
    applies bit ``(r >> i) & 1`` at step ``i``.
    """
    raw = list(int(b) for b in raw)
    shifted = list(float(v) for v in shifted)
    N = len(raw)
    d = min(max(float(duty), 0.0), 1.0)
    costs = []
    for r in range(1 << M):
        bits = _path(r, M)
        seq_raw = (raw + bits)[M:]
        seq_val = (shifted + [b - d for b in bits])[M:]
        assert len(seq_raw) == N
        mags = np.abs(direct_dft(seq_val) if N <= 64 else direct_dft_matrix(seq_val))
        spec = _cost(mags, weights, targets, p)
        sw = recount_transitions(seq_raw)
        run, prev, ok = K_sw, last_output, True
        for b in bits:
            if b == prev:
                run += 1
                if K_max is not None and run >= K_max:
                    ok = False
            else:
                run = 0
            prev = b
        costs.append(lambda1 * spec + lambda2 * sw if ok else math.inf)
    return costs


def brute_force_choice(raw, shifted, K_sw: int, last_output: int, duty: float, weights, targets,
                       lambda1: float, lambda2: float, p: float, K_max: Optional[int], M: int) -> int:
    """First bit of the cheapest path, with the same tie rule as the controller.

    Paths within ``1e-9 * max(|c_min|, lambda1 + lambda2)`` of the minimum
    are tied.  Among tied paths a first bit equal to ``last_output`` wins,
    then 0.  If every path is infeasible, all are tied.
    """
    costs = brute_force_costs(raw, shifted, K_sw, last_output, duty, weights, targets,
                              lambda1, lambda2, p, K_max, M)
    cmin = min(costs)
    if cmin == math.inf:
        tied = list(range(len(costs)))
    else:
        tol = TIE_RTOL * max(abs(cmin), lambda1 + lambda2)
        tied = [r for r, c in enumerate(costs) if c <= cmin + tol]
    firsts = {r & 1 for r in tied}
    if last_output in firsts:
        return last_output
    return 0 if 0 in firsts else 1


def substep_plant(iL: float, vC: float, switch: int, Vin: float, L: float, C: float, dt: float,
                  R: Optional[float] = None, I_sink: float = 0.0, r_L: float = 0.0,
                  substeps: int = 1000) -> tuple:
    """One control period of the buck plant by classical Runge-Kutta with ``substeps`` steps."""
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    g = 0.0 if R is None else 1.0 / R
    u = switch * Vin

    def f(i, v):
        return (u - v - r_L * i) / L, (i - g * v - I_sink) / C

    h = dt / substeps
    i, v = float(iL), float(vC)
    for _ in range(substeps):
        k1 = f(i, v)
        k2 = f(i + h / 2 * k1[0], v + h / 2 * k1[1])
        k3 = f(i + h / 2 * k2[0], v + h / 2 * k2[1])
        k4 = f(i + h * k3[0], v + h * k3[1])
        i += h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        v += h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    return i, v
