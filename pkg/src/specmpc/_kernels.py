"""Compiled inner loops for long simulations.

The functions mirror :mod:`specmpc.controller` step for step: the same slide
ordering, path indexing, switching-cost bookkeeping, feasibility rule and tie
band.  The test suite checks that both make identical choices.

Integer state vector ``ist``: ``[head, transition_count, last_output, K_sw, age]``.

Output-control modes:

* ``MODE_EXTERNAL`` - duty reference read from ``duty_in``.
* ``MODE_VOLTAGE_PI`` - ``cpar = [kp, ki, ff, dt, vref, Vin, umin, umax]``,
  ``cst = [integrator]``.
* ``MODE_CASCADED`` - ``cpar = [kp_v, ki_v, k_i, dt, vref, Vin, i_lim, unused]``,
  ``cst = [current-reference integrator]``.
"""
from __future__ import annotations

import numpy as np
import numba as nb

MODE_EXTERNAL = 0
MODE_VOLTAGE_PI = 1
MODE_CASCADED = 2

P_INF = 0
P_ONE = 1
P_TWO = 2

TIE_RTOL = 1e-9


@nb.njit(cache=True)
def _seq_raw(raw, head, N, path_index, i):
    if i < N:
        return raw[(head + i) % N]
    return (path_index >> (i - N)) & 1


@nb.njit(cache=True)
def choose_bit(bins, win, raw, ist, x, w, ref, pcode, lam1, lam2, kmax, M, d, cur, nxt, costs):
    """Return the first bit of the best path (see ``controller.evaluate_candidates``).

    ``cur``/``nxt`` are ``(2**M, B)`` complex scratch arrays and ``costs`` a
    ``2**M`` float scratch array.
    """
    N = win.shape[0]
    B = bins.shape[0]
    head = ist[0]
    tc = ist[1]
    last = ist[2]
    ksw = ist[3]
    npaths = 1 << M

    for n in range(B):
        cur[0, n] = bins[n]
    width = 1
    for lvl in range(M):
        old = win[(head + lvl) % N]
        dv0 = (0.0 - d) - old
        dv1 = (1.0 - d) - old
        for i in range(width):
            j1 = i + width
            for n in range(B):
                c = cur[i, n]
                nxt[i, n] = (c + dv0) * x[n]
                nxt[j1, n] = (c + dv1) * x[n]
        width *= 2
        tmp = cur
        cur = nxt
        nxt = tmp

    for r in range(npaths):
        acc = 0.0
        for n in range(1, B):
            c = cur[r, n]
            a = np.sqrt(c.real * c.real + c.imag * c.imag) - ref[n]
            if a < 0.0:
                a = 0.0
            t = w[n] * a
            if pcode == P_INF:
                if t > acc:
                    acc = t
            elif pcode == P_TWO:
                acc += t * t
            else:
                acc += t
        if pcode == P_TWO:
            acc = np.sqrt(acc)

        sw = tc
        feasible = True
        prev = last
        run = ksw
        for lvl in range(M):
            if _seq_raw(raw, head, N, r, lvl) != _seq_raw(raw, head, N, r, lvl + 1):
                sw -= 1
            if _seq_raw(raw, head, N, r, N - 1 + lvl) != _seq_raw(raw, head, N, r, N + lvl):
                sw += 1
            bit = (r >> lvl) & 1
            if bit == prev:
                run += 1
                if kmax > 0 and run >= kmax:
                    feasible = False
            else:
                run = 0
            prev = bit
        if feasible:
            costs[r] = lam1 * acc + lam2 * sw
        else:
            costs[r] = np.inf

    cmin = np.inf
    for r in range(npaths):
        if costs[r] < cmin:
            cmin = costs[r]
    scale = abs(cmin)
    if lam1 + lam2 > scale:
        scale = lam1 + lam2
    band = cmin + TIE_RTOL * scale
    has_last = False
    has_zero = False
    for r in range(npaths):
        if costs[r] <= band:
            b = r & 1
            if b == last:
                has_last = True
            if b == 0:
                has_zero = True
    if has_last:
        return last
    if has_zero:
        return 0
    return 1


@nb.njit(cache=True)
def commit(bins, win, raw, ist, x, bit, d):
    """Slide the chosen sample into the spectrum and window."""
    N = win.shape[0]
    head = ist[0]
    v = bit - d
    dv = v - win[head]
    for n in range(bins.shape[0]):
        bins[n] = (bins[n] + dv) * x[n]
    if raw[head] != raw[(head + 1) % N]:
        ist[1] -= 1
    if bit != raw[(head - 1) % N]:
        ist[1] += 1
    win[head] = v
    raw[head] = bit
    ist[0] = (head + 1) % N
    if bit == ist[2]:
        ist[3] += 1
    else:
        ist[3] = 0
    ist[2] = bit
    ist[4] += 1


@nb.njit(cache=True)
def duty_command(mode, cpar, cst, vC, iL, duty_ext):
    """One update of the output controller; returns the clamped duty."""
    if mode == MODE_EXTERNAL:
        u = duty_ext
        if u < 0.0:
            u = 0.0
        elif u > 1.0:
            u = 1.0
        return u
    if mode == MODE_VOLTAGE_PI:
        kp = cpar[0]
        ki = cpar[1]
        ff = cpar[2]
        dt = cpar[3]
        e = cpar[4] - vC
        umin = cpar[6]
        umax = cpar[7]
        u = ff + kp * e + cst[0]
        if u > umax:
            sat = umax
        elif u < umin:
            sat = umin
        else:
            sat = u
        # conditional integration: freeze while pushing further into a limit
        if not ((u > umax and e > 0.0) or (u < umin and e < 0.0)):
            cst[0] += ki * dt * e
        return sat
    # cascaded: voltage PI -> current reference -> proportional current loop
    kpv = cpar[0]
    kiv = cpar[1]
    ki_loop = cpar[2]
    dt = cpar[3]
    Vin = cpar[5]
    ilim = cpar[6]
    e = cpar[4] - vC
    iref = kpv * e + cst[0]
    if iref > ilim:
        iref = ilim
    elif iref < -ilim:
        iref = -ilim
    u = (vC + ki_loop * (iref - iL)) / Vin
    if u > 1.0:
        sat = 1.0
    elif u < 0.0:
        sat = 0.0
    else:
        sat = u
    if not ((u > 1.0 and e > 0.0) or (u < 0.0 and e < 0.0)):
        cst[0] += kiv * dt * e
    return sat


@nb.njit(cache=True)
def run_chunk(n_steps, bins, win, raw, ist, x, w, ref, pcode, lam1, lam2, kmax, M,
              xs, Ad, Bd, Vin, i_sink, mode, cpar, cst, duty_in,
              out_bits, out_v, out_i, out_d):
    """Run ``n_steps`` closed-loop control cycles with constant parameters.

    ``xs = [iL, vC]`` is updated in place.  Trace arrays receive the state
    measured at the start of each cycle, the duty reference and the bit
    applied during the cycle.
    """
    npaths = 1 << M
    B = bins.shape[0]
    cur = np.empty((npaths, B), dtype=np.complex128)
    nxt = np.empty((npaths, B), dtype=np.complex128)
    costs = np.empty(npaths)
    iL = xs[0]
    vC = xs[1]
    for k in range(n_steps):
        ext = duty_in[k] if mode == MODE_EXTERNAL else 0.0
        d = duty_command(mode, cpar, cst, vC, iL, ext)
        bit = choose_bit(bins, win, raw, ist, x, w, ref, pcode, lam1, lam2, kmax, M, d, cur, nxt, costs)
        commit(bins, win, raw, ist, x, bit, d)
        out_bits[k] = bit
        out_v[k] = vC
        out_i[k] = iL
        out_d[k] = d
        u0 = bit * Vin
        niL = Ad[0, 0] * iL + Ad[0, 1] * vC + Bd[0, 0] * u0 + Bd[0, 1] * i_sink
        nvC = Ad[1, 0] * iL + Ad[1, 1] * vC + Bd[1, 0] * u0 + Bd[1, 1] * i_sink
        iL = niL
        vC = nvC
    xs[0] = iL
    xs[1] = vC


@nb.njit(cache=True)
def modulate(duty, bins, win, raw, ist, x, w, ref, pcode, lam1, lam2, kmax, M, out_bits):
    """Open-loop modulation of a duty sequence (no plant)."""
    npaths = 1 << M
    B = bins.shape[0]
    cur = np.empty((npaths, B), dtype=np.complex128)
    nxt = np.empty((npaths, B), dtype=np.complex128)
    costs = np.empty(npaths)
    for k in range(duty.shape[0]):
        d = duty[k]
        if d < 0.0:
            d = 0.0
        elif d > 1.0:
            d = 1.0
        bit = choose_bit(bins, win, raw, ist, x, w, ref, pcode, lam1, lam2, kmax, M, d, cur, nxt, costs)
        commit(bins, win, raw, ist, x, bit, d)
        out_bits[k] = bit


def pcode_of(p: float) -> int:
    if p == np.inf:
        return P_INF
    return P_ONE if p == 1.0 else P_TWO
