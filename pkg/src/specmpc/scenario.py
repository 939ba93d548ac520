"""Scenario files: YAML schema, loading and validation with line numbers.

A scenario is a YAML mapping.  Top-level keys::

    schema_version: 1            # required
    name: str                    # required
    description: str
    duration: float (s)          # required, >= 0
    seed: int                    # recorded with the results
    engine:     {N, fc, resync_interval}
    controller: {M, lambda1, lambda2, p, K_max}
    filter:
      segments: [{f_start, f_end, shape, magnitude}, ...]   # tile [0, fc/2]
      gaps:     [{f_center, width, weight}, ...]
    reference:  {level, f_low}   # flat target magnitude F* above f_low
    plant:      {Vin, L, C, R, I_sink, r_L}
    output_control:
      mode: cascaded | voltage_pi | fixed_duty
      vref, f_inner, f_outer, i_limit         # cascaded
      vref, bandwidth                          # voltage_pi
      duty                                     # fixed_duty
    events:
      - {time, type: load_step, I_sink | R}
      - {time, type: gap_move, gap, f_center}
      - {time, type: weight_change, scale | segments/gaps}
      - {time, type: kmax_change, K_max}
    gap_sweep: {gap, f_start, f_end, t_start, t_end, update_period}
    analysis:
      start_fraction, welch_segment, gap_flank_width, distortion_band,
      snapshot_interval, spectrogram: {window_length, hop},
      pwm_baseline: {enabled, oversample, f_pwm}
    sweep: {parameter: lambda2 | M | K_max, values: [...]}

Every problem found is reported as a :class:`Diagnostic` carrying the dotted
path into the document and the 1-based line number of the offending node.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .filters import SHAPES, FilterSpec, Gap, Segment, gap_centers
from .spectrum import ConfigurationError

SCHEMA_VERSION = 1
SWEEP_PARAMETERS = ("lambda2", "M", "K_max")
EVENT_TYPES = ("load_step", "gap_move", "weight_change", "kmax_change")
CONTROL_MODES = ("cascaded", "voltage_pi", "fixed_duty")

__all__ = [
    "SCHEMA_VERSION",
    "Diagnostic",
    "ScenarioError",
    "Event",
    "Scenario",
    "load_scenario",
    "parse_scenario",
    "scenario_from_dict",
    "shipped_scenarios",
    "shipped_path",
]


@dataclass(frozen=True)
class Diagnostic:
    path: str
    message: str
    line: Optional[int] = None

    def __str__(self) -> str:
        where = f"line {self.line}: " if self.line else ""
        return f"{where}{self.path or '<root>'}: {self.message}"


class ScenarioError(ConfigurationError):
    """Raised when a scenario fails validation; carries all diagnostics."""

    def __init__(self, diagnostics, source: str = "<scenario>"):
        self.diagnostics = list(diagnostics)
        self.source = source
        lines = "\n".join(f"  {d}" for d in self.diagnostics)
        super().__init__(f"{source}: {len(self.diagnostics)} problem(s)\n{lines}")


# ---------------------------------------------------------------------------
# YAML with line tracking


def _construct(node, path: tuple, marks: dict):
    marks[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for k, v in node.value:
            key = yaml.safe_load(yaml.serialize(k)) if not isinstance(k, yaml.ScalarNode) else k.value
            marks[path + (key,)] = k.start_mark.line + 1
            out[key] = _construct(v, path + (key,), marks)
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_construct(v, path + (i,), marks) for i, v in enumerate(node.value)]
    # scalars: let the safe loader resolve the tag (int, float, null, ...)
    value = yaml.safe_load(yaml.serialize(node))
    if isinstance(value, str) and value.lower() in (".inf", "inf", "infinity"):
        return math.inf
    return value


def parse_yaml(text: str, source: str = "<scenario>"):
    """Return ``(data, marks)`` where ``marks`` maps key paths to line numbers."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ScenarioError([Diagnostic("", f"YAML syntax error: {getattr(exc, 'problem', exc)}", line)],
                            source) from None
    marks: dict = {}
    if node is None:
        return {}, marks
    return _construct(node, (), marks), marks


# ---------------------------------------------------------------------------
# model


@dataclass(frozen=True)
class Event:
    time: float
    type: str
    params: dict


@dataclass
class Scenario:
    name: str
    duration: float
    N: int
    fc: float
    resync_interval: int
    M: int
    lambda1: float
    lambda2: float
    p: float
    K_max: Optional[int]
    filter: FilterSpec
    reference_level: float
    reference_f_low: float
    plant: dict
    output_control: dict
    events: list
    analysis: dict
    seed: int = 0
    description: str = ""
    sweep: Optional[dict] = None
    raw: dict = field(default_factory=dict, repr=False)
    source: str = "<scenario>"

    def with_parameter(self, name: str, value) -> "Scenario":
        """Copy with one sweepable controller parameter replaced."""
        if name not in SWEEP_PARAMETERS:
            raise ConfigurationError(f"cannot sweep {name!r}; choose one of {SWEEP_PARAMETERS}")
        raw = copy.deepcopy(self.raw)
        raw.setdefault("controller", {})[name] = value
        raw.pop("sweep", None)
        raw["name"] = f"{self.name}[{name}={value}]"
        return scenario_from_dict(raw, source=self.source)

    def with_duration(self, duration: float) -> "Scenario":
        raw = copy.deepcopy(self.raw)
        raw["duration"] = duration
        return scenario_from_dict(raw, source=self.source)


_ENGINE_DEFAULTS = {"N": 2048, "fc": 400e3, "resync_interval": 65536}
_CONTROLLER_DEFAULTS = {"M": 2, "lambda1": 1.0, "lambda2": 0.0, "p": math.inf, "K_max": None}
_PLANT_DEFAULTS = {"R": None, "I_sink": 0.0, "r_L": 0.0}
_ANALYSIS_DEFAULTS = {
    "start_fraction": 0.2,
    "welch_segment": None,
    "gap_flank_width": 2000.0,
    "distortion_band": None,
    "snapshot_interval": None,
    "spectrogram": None,
    "pwm_baseline": {"enabled": False, "oversample": 16, "f_pwm": None},
}


class _Checker:
    def __init__(self, marks, source):
        self.marks = marks
        self.source = source
        self.diags: list[Diagnostic] = []

    def line(self, path):
        path = tuple(path)
        while path and path not in self.marks:
            path = path[:-1]
        return self.marks.get(path)

    def err(self, path, msg):
        self.diags.append(Diagnostic(".".join(str(p) for p in path), msg, self.line(path)))

    def mapping(self, data, path, required=(), optional=()):
        if data is None:
            data = {}
        if not isinstance(data, dict):
            self.err(path, "expected a mapping")
            return {}
        missing = [k for k in required if k not in data]
        for k in missing:
            self.err(path, f"missing required key '{k}'")
        allowed = set(required) | set(optional)
        for k in data:
            if k not in allowed:
                self.err(tuple(path) + (k,), f"unknown key '{k}'")
        return data

    def number(self, data, key, path, *, default=None, positive=False, nonneg=False,
               integer=False, allow_none=False, allow_inf=False):
        p = tuple(path) + (key,)
        v = data.get(key, default)
        if v is None:
            if allow_none:
                return None
            self.err(p, "value required")
            return default
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.err(p, f"expected a number, got {v!r}")
            return default
        if math.isinf(v) and allow_inf:
            return v
        if not math.isfinite(v):
            self.err(p, f"must be finite, got {v!r}")
            return default
        if integer and int(v) != v:
            self.err(p, f"expected an integer, got {v!r}")
            return default
        if positive and not v > 0:
            self.err(p, f"must be positive, got {v!r}")
        if nonneg and v < 0:
            self.err(p, f"must be >= 0, got {v!r}")
        return int(v) if integer else float(v)


def _check_filter(ck: _Checker, data, fc: Optional[float]):
    path = ("filter",)
    data = ck.mapping(data, path, required=("segments",), optional=("gaps",))
    segs, gaps = [], []
    seg_list = data.get("segments") or []
    if not isinstance(seg_list, list) or not seg_list:
        ck.err(path + ("segments",), "expected a non-empty list of segments")
        seg_list = []
    for i, s in enumerate(seg_list):
        sp = path + ("segments", i)
        s = ck.mapping(s, sp, required=("f_start", "f_end", "shape", "magnitude"))
        if not s or any(k not in s for k in ("f_start", "f_end", "shape", "magnitude")):
            continue
        if s["shape"] not in SHAPES:
            ck.err(sp + ("shape",), f"unknown shape {s['shape']!r}; expected one of {list(SHAPES)}")
            continue
        a = ck.number(s, "f_start", sp, nonneg=True)
        b = ck.number(s, "f_end", sp, positive=True)
        m = ck.number(s, "magnitude", sp, nonneg=True)
        if None in (a, b, m):
            continue
        try:
            segs.append(Segment(a, b, s["shape"], m))
        except ConfigurationError as exc:
            ck.err(sp, str(exc))
    gap_list = data.get("gaps") or []
    if not isinstance(gap_list, list):
        ck.err(path + ("gaps",), "expected a list of gaps")
        gap_list = []
    for i, g in enumerate(gap_list):
        gp = path + ("gaps", i)
        g = ck.mapping(g, gp, required=("f_center", "width", "weight"))
        if any(k not in g for k in ("f_center", "width", "weight")):
            continue
        c = ck.number(g, "f_center", gp, positive=True)
        w = ck.number(g, "width", gp, positive=True)
        wt = ck.number(g, "weight", gp, nonneg=True)
        if None in (c, w, wt):
            continue
        try:
            gap = Gap(c, w, wt)
        except ConfigurationError as exc:
            ck.err(gp, str(exc))
            continue
        if fc is not None and (gap.band[0] <= 0 or gap.band[1] > fc / 2):
            ck.err(gp, f"gap band [{gap.band[0]:g}, {gap.band[1]:g}] Hz lies outside (0, fc/2 = {fc / 2:g}] Hz")
            continue
        gaps.append(gap)
    spec = FilterSpec(tuple(segs), tuple(gaps)) if segs else None
    if spec is not None and fc is not None and len(segs) == len(seg_list):
        try:
            FilterSpec(spec.segments, ()).validate(fc)
        except ConfigurationError as exc:
            ck.err(path + ("segments",), str(exc))
    return spec


def _check_events(ck: _Checker, events, duration, n_gaps):
    out = []
    if events is None:
        return out
    if not isinstance(events, list):
        ck.err(("events",), "expected a list of events")
        return out
    last_t = -math.inf
    for i, e in enumerate(events):
        ep = ("events", i)
        if not isinstance(e, dict):
            ck.err(ep, "expected a mapping")
            continue
        t = ck.number(e, "time", ep, nonneg=True)
        typ = e.get("type")
        if typ not in EVENT_TYPES:
            ck.err(ep + ("type",), f"unknown event type {typ!r}; expected one of {list(EVENT_TYPES)}")
            continue
        if t is None:
            continue
        if t < last_t:
            ck.err(ep + ("time",), f"events must be time-ordered ({t:g} s after {last_t:g} s)")
        last_t = max(last_t, t)
        if duration is not None and t > duration:
            ck.err(ep + ("time",), f"event at {t:g} s is after the end of the run ({duration:g} s)")
        params = {k: v for k, v in e.items() if k not in ("time", "type")}
        if typ == "load_step":
            ck.mapping(e, ep, required=("time", "type"), optional=("I_sink", "R"))
            if not params:
                ck.err(ep, "load_step needs I_sink and/or R")
            if "I_sink" in params:
                params["I_sink"] = ck.number(e, "I_sink", ep)
            if "R" in params:
                params["R"] = ck.number(e, "R", ep, positive=True, allow_none=True)
        elif typ == "gap_move":
            ck.mapping(e, ep, required=("time", "type", "gap", "f_center"))
            gi = ck.number(e, "gap", ep, integer=True, nonneg=True, default=0)
            if gi is not None and gi >= n_gaps:
                ck.err(ep + ("gap",), f"no gap with index {gi} (filter has {n_gaps})")
            params["f_center"] = ck.number(e, "f_center", ep, positive=True)
        elif typ == "weight_change":
            ck.mapping(e, ep, required=("time", "type"), optional=("scale", "segments", "gaps"))
            if "scale" in params:
                params["scale"] = ck.number(e, "scale", ep, nonneg=True)
            elif "segments" not in params:
                ck.err(ep, "weight_change needs 'scale' or a replacement 'segments' list")
        elif typ == "kmax_change":
            ck.mapping(e, ep, required=("time", "type", "K_max"))
            params["K_max"] = ck.number(e, "K_max", ep, integer=True, allow_none=True)
            if params["K_max"] is not None and params["K_max"] < 1:
                ck.err(ep + ("K_max",), "K_max must be >= 1 (or null for no limit)")
        out.append(Event(float(t), typ, params))
    return out


def _expand_gap_sweep(ck: _Checker, sw, n_gaps, duration):
    path = ("gap_sweep",)
    sw = ck.mapping(sw, path, required=("f_start", "f_end", "t_start", "t_end", "update_period"),
                    optional=("gap",))
    if not sw:
        return []
    gi = ck.number(sw, "gap", path, integer=True, nonneg=True, default=0)
    fa = ck.number(sw, "f_start", path, positive=True)
    fb = ck.number(sw, "f_end", path, positive=True)
    ta = ck.number(sw, "t_start", path, nonneg=True)
    tb = ck.number(sw, "t_end", path, nonneg=True)
    up = ck.number(sw, "update_period", path, positive=True)
    if None in (gi, fa, fb, ta, tb, up):
        return []
    if gi >= n_gaps:
        ck.err(path + ("gap",), f"no gap with index {gi} (filter has {n_gaps})")
        return []
    if tb < ta:
        ck.err(path + ("t_end",), "t_end must not precede t_start")
        return []
    centers = gap_centers(fa, fb, tb - ta, up)
    times = ta + np.minimum(np.arange(len(centers)) * up, tb - ta)
    return [Event(float(t), "gap_move", {"gap": gi, "f_center": float(c)}) for t, c in zip(times, centers)]


def scenario_from_dict(data: Any, marks: Optional[dict] = None, source: str = "<scenario>") -> Scenario:
    """Validate a parsed document and build a :class:`Scenario`.

    Raises:
        ScenarioError: listing every problem found, each with a path and,
            when known, a line number.
    """
    ck = _Checker(marks or {}, source)
    top_keys = ("schema_version", "name", "duration")
    data = ck.mapping(data, (), required=top_keys,
                      optional=("description", "seed", "engine", "controller", "filter", "reference",
                                "plant", "output_control", "events", "gap_sweep", "analysis", "sweep"))
    if "schema_version" in data and data["schema_version"] != SCHEMA_VERSION:
        ck.err(("schema_version",), f"unsupported schema_version {data['schema_version']!r}; "
                                    f"this version reads {SCHEMA_VERSION}")
    for k in ("filter", "plant", "output_control"):
        if k not in data:
            ck.err((), f"missing required key '{k}'")
    duration = ck.number(data, "duration", (), nonneg=True) if "duration" in data else None
    seed = ck.number(data, "seed", (), integer=True, nonneg=True, default=0)

    eng = {**_ENGINE_DEFAULTS, **ck.mapping(data.get("engine"), ("engine",), optional=tuple(_ENGINE_DEFAULTS))}
    N = ck.number(eng, "N", ("engine",), integer=True, positive=True)
    fc = ck.number(eng, "fc", ("engine",), positive=True)
    rs = ck.number(eng, "resync_interval", ("engine",), integer=True, positive=True)
    if N is not None and N < 2:
        ck.err(("engine", "N"), "N must be >= 2")

    ctl = {**_CONTROLLER_DEFAULTS,
           **ck.mapping(data.get("controller"), ("controller",), optional=tuple(_CONTROLLER_DEFAULTS))}
    cp = ("controller",)
    M = ck.number(ctl, "M", cp, integer=True)
    if M is not None and not 1 <= M <= 8:
        ck.err(cp + ("M",), f"horizon M must lie in 1..8, got {M}")
    lam1 = ck.number(ctl, "lambda1", cp, nonneg=True)
    lam2 = ck.number(ctl, "lambda2", cp, nonneg=True)
    p = ctl.get("p")
    if isinstance(p, str) and p.lower() in ("inf", "infinity"):
        p = math.inf
    if p not in (1, 2, math.inf):
        ck.err(cp + ("p",), f"p must be 1, 2 or inf, got {p!r}")
        p = math.inf
    kmax = ck.number(ctl, "K_max", cp, integer=True, allow_none=True, allow_inf=True)
    if kmax is not None and math.isinf(kmax):
        kmax = None
    if kmax is not None and kmax < 1:
        ck.err(cp + ("K_max",), f"K_max must be >= 1 (or null for no limit), got {kmax}")

    spec = _check_filter(ck, data["filter"], fc) if "filter" in data else None

    ref = ck.mapping(data.get("reference"), ("reference",), optional=("level", "f_low"))
    ref_level = ck.number(ref, "level", ("reference",), nonneg=True, default=0.0)
    ref_flow = ck.number(ref, "f_low", ("reference",), nonneg=True, default=0.0)

    plant = {}
    if "plant" in data:
        pl = ck.mapping(data["plant"], ("plant",), required=("Vin", "L", "C"), optional=tuple(_PLANT_DEFAULTS))
        plant = {**_PLANT_DEFAULTS, **pl}
        for k in ("Vin", "L", "C"):
            if k in pl:
                plant[k] = ck.number(pl, k, ("plant",), positive=True)
        plant["R"] = ck.number(plant, "R", ("plant",), positive=True, allow_none=True)
        plant["I_sink"] = ck.number(plant, "I_sink", ("plant",))
        plant["r_L"] = ck.number(plant, "r_L", ("plant",), nonneg=True)

    oc = {}
    if "output_control" in data:
        op = ("output_control",)
        raw_oc = data["output_control"] if isinstance(data["output_control"], dict) else {}
        mode = raw_oc.get("mode")
        if mode not in CONTROL_MODES:
            ck.err(op + ("mode",), f"mode must be one of {list(CONTROL_MODES)}, got {mode!r}")
        elif mode == "fixed_duty":
            ck.mapping(raw_oc, op, required=("mode", "duty"))
            d = ck.number(raw_oc, "duty", op)
            if d is not None and not 0 <= d <= 1:
                ck.err(op + ("duty",), f"duty must lie in [0, 1], got {d}")
            oc = {"mode": mode, "duty": d}
        elif mode == "voltage_pi":
            ck.mapping(raw_oc, op, required=("mode", "vref"), optional=("bandwidth",))
            bw = ck.number(raw_oc, "bandwidth", op, positive=True, allow_none=True)
            if bw is not None and fc is not None and bw > fc / 10:
                ck.err(op + ("bandwidth",), f"bandwidth {bw:g} Hz exceeds fc/10 = {fc / 10:g} Hz")
            oc = {"mode": mode, "vref": ck.number(raw_oc, "vref", op, positive=True), "bandwidth": bw}
        else:
            ck.mapping(raw_oc, op, required=("mode", "vref"), optional=("f_inner", "f_outer", "i_limit"))
            fi = ck.number(raw_oc, "f_inner", op, positive=True, allow_none=True)
            fo = ck.number(raw_oc, "f_outer", op, positive=True, allow_none=True)
            if fi is not None and fc is not None and fi > fc / 10:
                ck.err(op + ("f_inner",), f"f_inner {fi:g} Hz exceeds fc/10 = {fc / 10:g} Hz")
            if fi is not None and fo is not None and fo >= fi:
                ck.err(op + ("f_outer",), "f_outer must be below f_inner")
            oc = {"mode": mode, "vref": ck.number(raw_oc, "vref", op, positive=True), "f_inner": fi,
                  "f_outer": fo, "i_limit": ck.number(raw_oc, "i_limit", op, positive=True, default=1e3)}
        vref = oc.get("vref")
        if vref is not None and plant.get("Vin") and vref > plant["Vin"]:
            ck.err(op + ("vref",), f"vref {vref:g} V exceeds Vin {plant['Vin']:g} V")

    n_gaps = len(spec.gaps) if spec else 0
    events = _check_events(ck, data.get("events"), duration, n_gaps)
    if "gap_sweep" in data:
        events = sorted(events + _expand_gap_sweep(ck, data["gap_sweep"], n_gaps, duration),
                        key=lambda e: e.time)
    if fc is not None:
        for i, e in enumerate(events):
            if e.type == "gap_move" and spec is not None and e.params.get("gap", 0) < n_gaps:
                g = spec.gaps[e.params.get("gap", 0)]
                c = e.params.get("f_center")
                if c is not None and (c - g.width / 2 <= 0 or c + g.width / 2 >= fc / 2):
                    ck.err(("events", i, "f_center"), f"moved gap would leave (0, fc/2 = {fc / 2:g}) Hz")

    an = ck.mapping(data.get("analysis"), ("analysis",), optional=tuple(_ANALYSIS_DEFAULTS))
    analysis = {**_ANALYSIS_DEFAULTS, **an}
    analysis["pwm_baseline"] = {**_ANALYSIS_DEFAULTS["pwm_baseline"], **(an.get("pwm_baseline") or {})}
    sf = ck.number(analysis, "start_fraction", ("analysis",), nonneg=True)
    if sf is not None and sf >= 1:
        ck.err(("analysis", "start_fraction"), "start_fraction must be < 1")
    db = analysis.get("distortion_band")
    if db is not None and (not isinstance(db, list) or len(db) != 2 or db[1] < db[0]):
        ck.err(("analysis", "distortion_band"), "expected [f_low, f_high] with f_low <= f_high")
    if fc is not None and isinstance(db, list) and len(db) == 2 and db[1] > fc / 2:
        ck.err(("analysis", "distortion_band"), f"band exceeds fc/2 = {fc / 2:g} Hz")

    sweep = data.get("sweep")
    if sweep is not None:
        sw = ck.mapping(sweep, ("sweep",), required=("parameter", "values"))
        if sw.get("parameter") not in SWEEP_PARAMETERS:
            ck.err(("sweep", "parameter"), f"parameter must be one of {list(SWEEP_PARAMETERS)}")
        if not isinstance(sw.get("values"), list) or not sw.get("values"):
            ck.err(("sweep", "values"), "expected a non-empty list")

    if ck.diags:
        raise ScenarioError(ck.diags, source)
    return Scenario(
        name=str(data["name"]), duration=float(duration), N=N, fc=fc, resync_interval=rs, M=M,
        lambda1=lam1, lambda2=lam2, p=float(p), K_max=kmax, filter=spec,
        reference_level=ref_level, reference_f_low=ref_flow, plant=plant, output_control=oc,
        events=events, analysis=analysis, seed=seed, description=str(data.get("description", "")),
        sweep=sweep, raw=copy.deepcopy(data), source=source,
    )


def parse_scenario(text: str, source: str = "<scenario>") -> Scenario:
    data, marks = parse_yaml(text, source)
    return scenario_from_dict(data, marks, source)


def load_scenario(path) -> Scenario:
    """Load a scenario from a file path or the name of a shipped scenario."""
    p = Path(path)
    if not p.exists():
        shipped = shipped_path(str(path))
        if shipped is None:
            raise FileNotFoundError(f"no scenario file or shipped scenario named {path!r}")
        p = shipped
    return parse_scenario(p.read_text(), source=str(p))


_SHIPPED_DIR = Path(__file__).with_name("scenarios")


def shipped_scenarios() -> list[str]:
    return sorted(q.stem for q in _SHIPPED_DIR.glob("*.yaml"))


def shipped_path(name: str) -> Optional[Path]:
    q = _SHIPPED_DIR / f"{name.removesuffix('.yaml')}.yaml"
    return q if q.exists() else None
