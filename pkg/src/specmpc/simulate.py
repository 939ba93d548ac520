"""Closed-loop scenario runner and metric summary.

The loop per control cycle is: measure ``(iL, vC)``, compute the duty
reference, choose the switch state, commit it to the spectrum, advance the
plant by one period.  Work is done by :func:`specmpc._kernels.run_chunk` in
chunks whose boundaries fall on timeline events, spectrum snapshots and
resync points, so that every parameter is constant inside a chunk.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels as K
from .analysis import (
    PowerSpectrum,
    avg_switching_frequency,
    distortion_power,
    flank_bands,
    gap_depth,
    max_run_length,
    ripple_stats,
    sfdr,
    spectrogram,
    welch_spectrum,
)
from .converter import (
    PWMResult,
    PlantParams,
    design_cascade,
    design_voltage_pi,
    discretize,
    equilibrium,
    pwm_baseline,
)
from .filters import FilterSpec, Gap, Segment, compile_weights, flat_reference, move_gap
from .scenario import Scenario
from .spectrum import count_bins, make_shift_vector

logger = logging.getLogger(__name__)

__all__ = ["RunArtifacts", "run_scenario", "summarize", "plant_params", "controller_setup", "replay_filter",
           "spectrogram_gap_columns"]


@dataclass
class RunArtifacts:
    """Traces and metrics of one scenario run.

    Trace arrays are indexed by control cycle ``k`` (time ``k / fc``); the
    state is the one measured at the start of the cycle and ``bits[k]`` is the
    switch state applied during it.
    """

    scenario: Scenario
    t: np.ndarray
    bits: np.ndarray
    vC: np.ndarray
    iL: np.ndarray
    duty: np.ndarray
    gap_track: list = field(default_factory=list)  # (time, [gap centres]) after each change
    snapshots: list = field(default_factory=list)  # (time, |X_n|) at snapshot times
    final_filter: Optional[FilterSpec] = None
    metrics: dict = field(default_factory=dict)
    spectrum: Optional[PowerSpectrum] = None
    pwm: Optional[PWMResult] = None
    pwm_spectrum: Optional[PowerSpectrum] = None


def plant_params(scn: Scenario) -> PlantParams:
    p = scn.plant
    return PlantParams(Vin=p["Vin"], L=p["L"], C=p["C"], dt=1.0 / scn.fc, R=p["R"],
                       I_sink=p["I_sink"], r_L=p["r_L"])


def controller_setup(scn: Scenario, params: PlantParams):
    """Return ``(mode, cpar, cst, initial_duty)`` for the kernel."""
    oc = scn.output_control
    dt = 1.0 / scn.fc
    if oc["mode"] == "fixed_duty":
        return K.MODE_EXTERNAL, np.zeros(8), np.zeros(1), oc["duty"]
    vref = oc["vref"]
    d0 = vref / params.Vin
    if oc["mode"] == "voltage_pi":
        pi = design_voltage_pi(scn.fc, params.Vin, oc.get("bandwidth"), ff=d0)
        cpar = np.array([pi.kp, pi.ki, pi.ff, dt, vref, params.Vin, pi.umin, pi.umax])
        return K.MODE_VOLTAGE_PI, cpar, np.zeros(1), d0
    cp = design_cascade(params.L, params.C, params.Vin, scn.fc, oc.get("f_inner"), oc.get("f_outer"),
                        oc.get("i_limit", 1e3))
    cpar = np.array([cp.kp_v, cp.ki_v, cp.k_i, dt, vref, params.Vin, cp.i_limit, 0.0])
    # preset the current-reference integrator to the load current at vref
    return K.MODE_CASCADED, cpar, np.array([params.load_current(vref)]), d0


def _reference(scn: Scenario, spec: FilterSpec) -> np.ndarray:
    if scn.reference_level <= 0:
        return np.zeros(count_bins(scn.N))
    return flat_reference(scn.N, scn.fc, scn.reference_level, scn.reference_f_low, spec.gaps).full()


def _apply_event(ev, spec: FilterSpec, params: PlantParams, kmax, fc):
    if ev.type == "load_step":
        kw = {}
        if "R" in ev.params:
            kw["R"] = ev.params["R"]
        params = params.with_load(**kw, I_sink=ev.params.get("I_sink"))
    elif ev.type == "gap_move":
        spec = move_gap(spec, ev.params.get("gap", 0), ev.params["f_center"], fc)
    elif ev.type == "weight_change":
        if "scale" in ev.params:
            spec = spec.scaled(ev.params["scale"])
        else:
            segs = tuple(Segment(**s) for s in ev.params["segments"])
            gaps = spec.gaps
            if "gaps" in ev.params:
                gaps = tuple(Gap(**g) for g in ev.params["gaps"])
            spec = FilterSpec(segs, gaps)
        spec.validate(fc)
    elif ev.type == "kmax_change":
        kmax = ev.params["K_max"]
    return spec, params, kmax


def replay_filter(scn: Scenario) -> tuple:
    """Final filter and gap track obtained by applying the timeline without simulating.

    Used to re-analyse stored traces.
    """
    params = plant_params(scn)
    spec, kmax = scn.filter, scn.K_max
    track = [(0.0, [g.f_center for g in spec.gaps])]
    for ev in sorted(scn.events, key=lambda e: e.time):
        new, params, kmax = _apply_event(ev, spec, params, kmax, scn.fc)
        if new is not spec:
            spec = new
            t = int(round(ev.time * scn.fc)) / scn.fc
            if track[-1][0] == t:
                track[-1] = (t, [g.f_center for g in spec.gaps])
            else:
                track.append((t, [g.f_center for g in spec.gaps]))
    return spec, track


def run_scenario(scn: Scenario, *, metrics: bool = True) -> RunArtifacts:
    """Execute ``scn`` and return traces (and metrics unless ``metrics=False``)."""
    fc, N = scn.fc, scn.N
    n_steps = int(round(scn.duration * fc))
    params = plant_params(scn)
    spec = scn.filter
    kmax = scn.K_max

    B = count_bins(N)
    bins = np.zeros(B, dtype=np.complex128)
    win = np.zeros(N)
    raw = np.zeros(N, dtype=np.int8)
    ist = np.zeros(5, dtype=np.int64)
    x = make_shift_vector(N)
    w = compile_weights(spec, N, fc).full()
    ref = _reference(scn, spec)
    pcode = K.pcode_of(scn.p)

    mode, cpar, cst, d0 = controller_setup(scn, params)
    x0 = equilibrium(params, d0)
    xs = np.array([x0.iL, x0.vC])
    duty_in = np.full(n_steps, d0) if mode == K.MODE_EXTERNAL else np.zeros(n_steps)

    bits = np.zeros(n_steps, dtype=np.int8)
    vC = np.zeros(n_steps)
    iL = np.zeros(n_steps)
    duty = np.zeros(n_steps)

    ev_steps = sorted((int(round(e.time * fc)), i) for i, e in enumerate(scn.events))
    snap = scn.analysis.get("snapshot_interval")
    snap_every = max(int(round(snap * fc)), 1) if snap else 0
    gap_track = [(0.0, [g.f_center for g in spec.gaps])]
    snapshots = []

    k = 0
    ei = 0
    while True:
        # apply all events scheduled at or before this step
        changed_filter = False
        while ei < len(ev_steps) and ev_steps[ei][0] <= k:
            ev = scn.events[ev_steps[ei][1]]
            new_spec, params, kmax = _apply_event(ev, spec, params, kmax, fc)
            if new_spec is not spec:
                spec = new_spec
                changed_filter = True
            ei += 1
        if changed_filter:
            w = compile_weights(spec, N, fc).full()
            ref = _reference(scn, spec)
            entry = (k / fc, [g.f_center for g in spec.gaps])
            if gap_track[-1][0] == entry[0]:
                gap_track[-1] = entry
            else:
                gap_track.append(entry)
        if k >= n_steps:
            break
        nxt = n_steps
        if ei < len(ev_steps):
            nxt = min(nxt, max(ev_steps[ei][0], k + 1))
        nxt = min(nxt, k + scn.resync_interval - int(ist[4]))
        if snap_every:
            nxt = min(nxt, (k // snap_every + 1) * snap_every)
        n = nxt - k
        Ad, Bd = discretize(params)
        K.run_chunk(n, bins, win, raw, ist, x, w, ref, pcode, scn.lambda1, scn.lambda2,
                    0 if kmax is None else int(kmax), scn.M, xs, np.asarray(Ad), np.asarray(Bd),
                    params.Vin, params.I_sink, mode, cpar, cst, duty_in[k:nxt],
                    bits[k:nxt], vC[k:nxt], iL[k:nxt], duty[k:nxt])
        k = nxt
        if ist[4] >= scn.resync_interval:
            order = np.roll(win, -int(ist[0]))
            bins[:] = np.fft.rfft(order)
            ist[4] = 0
        if snap_every and k % snap_every == 0:
            snapshots.append((k / fc, np.abs(bins).copy()))

    art = RunArtifacts(scn, np.arange(n_steps) / fc, bits, vC, iL, duty, gap_track, snapshots, spec)
    if metrics:
        summarize(art)
    return art


def _steady_slice(n: int, start_fraction: float) -> slice:
    return slice(int(n * start_fraction), n)


def _safe(fn, *a, **kw):
    try:
        return fn(*a, **kw)
    except ValueError:
        return None


def summarize(art: RunArtifacts) -> dict:
    """Fill ``art.metrics`` (and spectra) from the stored traces."""
    scn = art.scenario
    an = scn.analysis
    fc = scn.fc
    n = art.bits.size
    m: dict = {"name": scn.name, "seed": scn.seed, "steps": int(n), "duration_s": scn.duration}
    seg = int(an.get("welch_segment") or scn.N)
    ss = _steady_slice(n, an["start_fraction"])
    if n - ss.start < seg:
        art.metrics = m
        return m
    b = art.bits[ss].astype(float)
    dur = b.size / fc
    prev = int(art.bits[ss.start - 1]) if ss.start > 0 else 0
    spec = welch_spectrum(b, fc, seg)
    art.spectrum = spec
    m["f_sw_hz"] = avg_switching_frequency(art.bits[ss], dur, initial_state=prev)
    m["sfdr_dc_db"] = _safe(sfdr, spec, "dc")
    m["sfdr_peak_db"] = _safe(sfdr, spec, "peak")
    top = 1 + int(np.argmax(spec.power[1:]))
    m["peak_freq_hz"] = float(spec.freqs[top])
    m["peak_db"] = float(spec.db[top])
    rs = ripple_stats(art.vC, start_fraction=an["start_fraction"])
    m["v_mean"] = float(np.mean(art.vC[ss]))
    m["v_var"] = rs.variance
    m["v_p2p"] = rs.peak_to_peak
    m["i_mean"] = float(np.mean(art.iL[ss]))
    m["duty_mean"] = float(np.mean(art.duty[ss]))
    m["bit_mean"] = float(np.mean(b))
    m["max_run"] = max_run_length(art.bits)
    m["max_run_steady"] = max_run_length(art.bits[ss])
    flank = an["gap_flank_width"]
    for i, g in enumerate(art.final_filter.gaps):
        lo, hi = g.band
        m[f"gap{i}_center_hz"] = g.f_center
        m[f"gap{i}_depth_db"] = _safe(gap_depth, spec, (lo, hi), flank_bands((lo, hi), flank))
    band = an.get("distortion_band")
    if band:
        m["distortion_power"] = _safe(distortion_power, spec, tuple(band))
    sg = an.get("spectrogram")
    if sg and art.final_filter.gaps:
        cols = spectrogram_gap_columns(art)
        if cols is not None:
            depths = cols["depth_db"]
            m["spectrogram_columns"] = int(depths.size)
            m["spectrogram_min_depth_db"] = float(depths.min())
            m["spectrogram_median_depth_db"] = float(np.median(depths))
            m["spectrogram_first_center_hz"] = float(cols["center_hz"][0])
            m["spectrogram_last_center_hz"] = float(cols["center_hz"][-1])
    pw = an.get("pwm_baseline") or {}
    if pw.get("enabled"):
        _pwm_metrics(art, m, seg, prev)
    art.metrics = m
    return m


def spectrogram_gap_columns(art: RunArtifacts, gap_index: int = 0) -> Optional[dict]:
    """Gap depth in every spectrogram column of the switch trace.

    The commanded centre for a column is the one in effect at the column's
    centre time.  Returns ``None`` when the trace is shorter than a window.
    """
    scn = art.scenario
    sg = scn.analysis.get("spectrogram") or {}
    L = int(sg.get("window_length") or scn.N)
    hop = int(sg.get("hop") or L // 2)
    if art.bits.size < L:
        return None
    f, t, db = spectrogram(art.bits.astype(float), scn.fc, L, hop)
    width = art.final_filter.gaps[gap_index].width
    flank = scn.analysis["gap_flank_width"]
    times = np.array([tt for tt, _ in art.gap_track])
    centers = np.array([c[gap_index] for _, c in art.gap_track])
    out_c, out_d, out_in, out_fl = [], [], [], []
    for j, tc in enumerate(t):
        c = centers[max(np.searchsorted(times, tc, side="right") - 1, 0)]
        lo, hi = c - width / 2, c + width / 2
        inside = (f >= lo) & (f <= hi)
        fl = ((f >= lo - flank) & (f < lo)) | ((f > hi) & (f <= hi + flank))
        g_in = float(db[inside, j].mean())
        g_fl = float(db[fl, j].mean())
        out_c.append(c)
        out_in.append(g_in)
        out_fl.append(g_fl)
        out_d.append(g_fl - g_in)
    return {"time_s": t, "center_hz": np.array(out_c), "gap_db": np.array(out_in),
            "flank_db": np.array(out_fl), "depth_db": np.array(out_d)}


def _pwm_metrics(art: RunArtifacts, m: dict, seg: int, prev: int) -> None:
    """PWM at the spectral run's realised duty and measured switching frequency.

    The realised duty is the mean switch state over the steady-state window;
    it is what sets the output voltage, whereas the mean duty reference can
    differ from it by a few percent.
    """
    scn = art.scenario
    an = scn.analysis
    pw = an["pwm_baseline"]
    over = int(pw.get("oversample") or 16)
    f_pwm = pw.get("f_pwm") or m["f_sw_hz"]
    duty = float(np.clip(m["bit_mean"], 0.0, 1.0))
    res = pwm_baseline(duty, f_pwm, scn.duration, plant_params(scn), fc=scn.fc, oversample=over)
    art.pwm = res
    nf = res.bits.size
    ssf = _steady_slice(nf, an["start_fraction"])
    pspec = welch_spectrum(res.bits[ssf].astype(float), res.fs, seg * over)
    # restrict to the band visible to the spectral controller
    keep = pspec.freqs <= scn.fc / 2
    pspec = PowerSpectrum(pspec.freqs[keep], pspec.power[keep], pspec.dc_power, pspec.normalized)
    art.pwm_spectrum = pspec
    ptop = 1 + int(np.argmax(pspec.power[1:]))
    m["pwm_duty"] = duty
    m["pwm_f_hz"] = float(f_pwm)
    m["pwm_sfdr_dc_db"] = _safe(sfdr, pspec, "dc")
    m["pwm_sfdr_peak_db"] = _safe(sfdr, pspec, "peak")
    m["pwm_peak_freq_hz"] = float(pspec.freqs[ptop])
    m["pwm_peak_db"] = float(pspec.db[ptop])
    m["peak_reduction_db"] = m["pwm_peak_db"] - m["peak_db"]
    ns = res.vC.size
    vs = res.vC[_steady_slice(ns, an["start_fraction"])]
    m["pwm_v_mean"] = float(np.mean(vs))
    m["pwm_v_var"] = float(np.var(vs))
    m["pwm_v_p2p"] = float(np.ptp(vs))
