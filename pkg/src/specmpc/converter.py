"""Synchronous buck plant, output-voltage controllers and a PWM baseline.

State ``x = [iL, vC]``, input ``u = [bridge voltage, sink current]``::

    L diL/dt = s*Vin - r_L*iL - vC
    C dvC/dt = iL - vC/R - I_sink

The switch is ideal and conducts both ways, so ``iL`` may go negative.  One
control period is integrated exactly with a matrix exponential.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.linalg import expm

from .spectrum import ConfigurationError

__all__ = [
    "PlantParams",
    "PlantState",
    "continuous_matrices",
    "discretize",
    "plant_step",
    "equilibrium",
    "PIParams",
    "PIController",
    "pi_step",
    "design_voltage_pi",
    "lag_time_constant",
    "CascadeParams",
    "CascadedController",
    "design_cascade",
    "PWMResult",
    "pwm_baseline",
    "propagate_affine",
    "ripple_estimate",
]


@dataclass(frozen=True)
class PlantParams:
    """Buck converter parameters.

    Args:
        Vin: Input voltage (V).
        L: Inductance (H).
        C: Output capacitance (F).
        dt: Control period (s).
        R: Resistive load (ohm) or ``None`` for no resistor.
        I_sink: Constant-current load (A).
        r_L: Series resistance of the inductor (ohm).
    """

    Vin: float
    L: float
    C: float
    dt: float
    R: Optional[float] = None
    I_sink: float = 0.0
    r_L: float = 0.0

    def __post_init__(self):
        for name in ("Vin", "L", "C", "dt"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigurationError(f"plant {name} must be positive, got {v!r}")
        if self.R is not None and not self.R > 0:
            raise ConfigurationError(f"load resistance must be positive, got {self.R!r}")
        if self.r_L < 0:
            raise ConfigurationError(f"r_L must be >= 0, got {self.r_L!r}")

    def with_load(self, R=..., I_sink=None) -> "PlantParams":
        kw = {}
        if R is not ...:
            kw["R"] = R
        if I_sink is not None:
            kw["I_sink"] = I_sink
        return replace(self, **kw)

    def load_current(self, v: float) -> float:
        """Total load current drawn at output voltage ``v``."""
        g = 0.0 if self.R is None else 1.0 / self.R
        return v * g + self.I_sink


@dataclass
class PlantState:
    iL: float = 0.0
    vC: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.iL, self.vC])


def continuous_matrices(params: PlantParams):
    g = 0.0 if params.R is None else 1.0 / params.R
    A = np.array([[-params.r_L / params.L, -1.0 / params.L],
                  [1.0 / params.C, -g / params.C]])
    B = np.array([[1.0 / params.L, 0.0],
                  [0.0, -1.0 / params.C]])
    return A, B


@lru_cache(maxsize=64)
def _discretize_cached(L, C, R, r_L, dt):
    p = PlantParams(Vin=1.0, L=L, C=C, dt=dt, R=R, r_L=r_L)
    A, B = continuous_matrices(p)
    M = np.zeros((4, 4))
    M[:2, :2] = A
    M[:2, 2:] = B
    E = expm(M * dt)
    Ad, Bd = E[:2, :2].copy(), E[:2, 2:].copy()
    Ad.setflags(write=False)
    Bd.setflags(write=False)
    return Ad, Bd


def discretize(params: PlantParams):
    """Exact zero-order-hold ``(Ad, Bd)`` for one control period, cached per load."""
    return _discretize_cached(params.L, params.C, params.R, params.r_L, params.dt)


def plant_step(state: PlantState, switch: int, params: PlantParams) -> PlantState:
    """Advance one control period with the half-bridge held at ``switch*Vin``."""
    Ad, Bd = discretize(params)
    x = Ad @ state.as_array() + Bd @ np.array([switch * params.Vin, params.I_sink])
    return PlantState(float(x[0]), float(x[1]))


def equilibrium(params: PlantParams, duty: float) -> PlantState:
    """Steady state of the averaged model for a constant duty."""
    A, B = continuous_matrices(params)
    x = -np.linalg.solve(A, B @ np.array([duty * params.Vin, params.I_sink]))
    return PlantState(float(x[0]), float(x[1]))


def ripple_estimate(params: PlantParams, vout: float, max_interval: float) -> float:
    """Peak-to-peak output ripple of the classical LC estimate ``Vo (1-D) T^2 / (8 L C)``.

    ``max_interval`` is the longest time the switch may stay in one state.
    With duty ``D = vout / Vin`` the longer of the on and off phases takes a
    fraction ``max(D, 1-D)`` of the period, so the longest admissible period
    is ``max_interval / max(D, 1-D)``.
    """
    D = min(max(vout / params.Vin, 0.0), 1.0)
    T = max_interval / max(D, 1.0 - D)
    return vout * (1.0 - D) * T * T / (8.0 * params.L * params.C)


# --------------------------------------------------------------------------
# output-voltage control


def lag_time_constant(fc: float) -> float:
    """Time constant used to model the spectral modulator as a first-order lag."""
    return 5.0 / (2.0 * math.pi * fc)


@dataclass(frozen=True)
class PIParams:
    kp: float
    ki: float
    dt: float
    ff: float = 0.0
    umin: float = 0.0
    umax: float = 1.0


def design_voltage_pi(fc: float, Vin: float, bandwidth: Optional[float] = None, ff: float = 0.0) -> PIParams:
    """PI gains for the loop ``Vin / (tau s + 1)`` by pole-zero cancellation.

    The PI zero cancels the lag pole, leaving an integrator loop
    ``omega_c / s`` with 90 degrees of phase margin.  The default bandwidth
    is ``fc / 20``.
    """
    bw = fc / 20 if bandwidth is None else bandwidth
    if not 0 < bw <= fc / 10:
        raise ConfigurationError(f"PI bandwidth must lie in (0, fc/10], got {bw!r}")
    wc = 2 * math.pi * bw
    tau = lag_time_constant(fc)
    return PIParams(kp=wc * tau / Vin, ki=wc / Vin, dt=1.0 / fc, ff=ff)


class PIController:
    """Discrete PI with feedforward bias, output clamp and conditional integration.

    The integrator is frozen while the unclamped output sits beyond a limit
    and the error would push it further out.
    """

    def __init__(self, params: PIParams):
        self.params = params
        self.integrator = 0.0

    def reset(self, value: float = 0.0) -> None:
        self.integrator = value

    def step(self, vref: float, vmeas: float) -> float:
        p = self.params
        e = vref - vmeas
        u = p.ff + p.kp * e + self.integrator
        sat = min(max(u, p.umin), p.umax)
        if not ((u > p.umax and e > 0.0) or (u < p.umin and e < 0.0)):
            self.integrator += p.ki * p.dt * e
        return sat


def pi_step(vref: float, vmeas: float, pi: PIController) -> float:
    """Functional alias for :meth:`PIController.step`."""
    return pi.step(vref, vmeas)


@dataclass(frozen=True)
class CascadeParams:
    """Outer voltage PI producing a current reference; inner proportional current loop."""

    kp_v: float
    ki_v: float
    k_i: float
    dt: float
    Vin: float
    i_limit: float = 1e3


def design_cascade(L: float, C: float, Vin: float, fc: float, f_inner: Optional[float] = None,
                   f_outer: Optional[float] = None, i_limit: float = 1e3) -> CascadeParams:
    """Gains from crossover frequencies of the two loops.

    The inner loop ``k_i / (L s)`` crosses at ``f_inner``; the outer loop
    ``kp_v / (C s)`` crosses at ``f_outer`` and its PI zero sits at
    ``f_outer / 5``.  Defaults: ``f_inner = fc/100``, ``f_outer = f_inner/10``.
    """
    fi = fc / 100 if f_inner is None else f_inner
    fo = fi / 10 if f_outer is None else f_outer
    if not 0 < fo < fi <= fc / 10:
        raise ConfigurationError(
            f"cascade needs 0 < f_outer < f_inner <= fc/10, got f_outer={fo}, f_inner={fi}"
        )
    k_i = 2 * math.pi * fi * L
    kp_v = 2 * math.pi * fo * C
    ki_v = kp_v * 2 * math.pi * fo / 5
    return CascadeParams(kp_v=kp_v, ki_v=ki_v, k_i=k_i, dt=1.0 / fc, Vin=Vin, i_limit=i_limit)


class CascadedController:
    """Duty command ``d = (vC + k_i (i_ref - iL)) / Vin`` with a PI voltage loop for ``i_ref``."""

    def __init__(self, params: CascadeParams):
        self.params = params
        self.integrator = 0.0

    def reset(self, value: float = 0.0) -> None:
        self.integrator = value

    def step(self, vref: float, vC: float, iL: float) -> float:
        p = self.params
        e = vref - vC
        iref = min(max(p.kp_v * e + self.integrator, -p.i_limit), p.i_limit)
        u = (vC + p.k_i * (iref - iL)) / p.Vin
        sat = min(max(u, 0.0), 1.0)
        if not ((u > 1.0 and e > 0.0) or (u < 0.0 and e < 0.0)):
            self.integrator += p.ki_v * p.dt * e
        return sat


# --------------------------------------------------------------------------
# PWM baseline


def propagate_affine(A: np.ndarray, B: np.ndarray, x0: np.ndarray, u: np.ndarray, taus) -> np.ndarray:
    """States ``x(tau)`` of ``dx/dt = A x + B u`` from ``x0`` for many ``tau`` at once.

    ``x0`` may be one state ``(2,)`` or one state per tau ``(n, 2)``.
    """
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    x_eq = -np.linalg.solve(A, B @ u)
    lam, V = np.linalg.eig(A)
    dx = np.atleast_2d(np.asarray(x0, dtype=float) - x_eq)
    if abs(lam[0] - lam[1]) > 1e-9 * max(abs(lam[0]), 1.0):
        Vinv = np.linalg.inv(V)
        c = dx @ Vinv.T
        out = (c * np.exp(np.outer(taus, lam))) @ V.T
        return x_eq + out.real
    # repeated eigenvalue: fall back to one matrix exponential per tau
    res = np.empty((taus.size, 2))
    for k, t in enumerate(taus):
        res[k] = x_eq + expm(A * t) @ dx[k if dx.shape[0] > 1 else 0]
    return res


@dataclass
class PWMResult:
    bits: np.ndarray  # switch state on the oversampled grid
    fs: float  # oversampled grid rate
    t: np.ndarray  # sample times of the plant trace
    iL: np.ndarray
    vC: np.ndarray
    duty: float
    f_pwm: float


def pwm_baseline(duty: float, f_pwm: float, duration: float, params: PlantParams,
                 fc: Optional[float] = None, oversample: int = 16,
                 x0: Optional[PlantState] = None) -> PWMResult:
    """Trailing-edge PWM and the exactly integrated plant response.

    The switch trace is sampled at ``oversample * fc``.  The plant is
    integrated between the true edges, period by period, and reported on the
    control grid ``k / fc``.  Starts from the averaged equilibrium unless
    ``x0`` is given.
    """
    fc = 1.0 / params.dt if fc is None else fc
    fs = oversample * fc
    if not 0 <= duty <= 1:
        raise ValueError(f"duty must lie in [0, 1], got {duty!r}")
    if not 0 < f_pwm < fs / 2:
        raise ValueError(f"f_pwm must lie in (0, fs/2) = (0, {fs / 2}), got {f_pwm!r}")
    n_fast = int(round(duration * fs))
    phase = np.mod(np.arange(n_fast) * (f_pwm / fs), 1.0)
    bits = (phase < duty).astype(np.int8)

    n_slow = int(round(duration * fc))
    t = np.arange(n_slow) / fc
    A, B = continuous_matrices(params)
    u_on = np.array([params.Vin, params.I_sink])
    u_off = np.array([0.0, params.I_sink])
    T = 1.0 / f_pwm
    t_on = duty * T
    start = equilibrium(params, duty) if x0 is None else x0
    n_periods = int(math.floor(duration * f_pwm)) + 2
    x_start = np.empty((n_periods, 2))
    x_mid = np.empty((n_periods, 2))
    x = start.as_array()
    for p in range(n_periods):
        x_start[p] = x
        x_mid[p] = propagate_affine(A, B, x, u_on, [t_on])[0]
        x = propagate_affine(A, B, x_mid[p], u_off, [T - t_on])[0]
    if n_slow:
        pidx = np.floor(t * f_pwm).astype(int)
        tau = t - pidx * T
        on = tau < t_on
        states = np.empty((n_slow, 2))
        if on.any():
            states[on] = _propagate_rows(A, B, x_start[pidx[on]], u_on, tau[on])
        if (~on).any():
            states[~on] = _propagate_rows(A, B, x_mid[pidx[~on]], u_off, tau[~on] - t_on)
    else:
        states = np.empty((0, 2))
    return PWMResult(bits, fs, t, states[:, 0], states[:, 1], float(duty), float(f_pwm))


def _propagate_rows(A, B, x0s, u, taus):
    """Row-wise propagation: row k starts at ``x0s[k]`` and runs for ``taus[k]``."""
    x_eq = -np.linalg.solve(A, B @ u)
    lam, V = np.linalg.eig(A)
    if abs(lam[0] - lam[1]) > 1e-9 * max(abs(lam[0]), 1.0):
        Vinv = np.linalg.inv(V)
        c = (x0s - x_eq) @ Vinv.T
        return x_eq + ((c * np.exp(np.outer(taus, lam))) @ V.T).real
    return np.array([x_eq + expm(A * t) @ (x - x_eq) for x, t in zip(x0s, taus)])
