import math
import textwrap

import pytest

from specmpc.scenario import (
    SCHEMA_VERSION,
    ScenarioError,
    load_scenario,
    parse_scenario,
    shipped_path,
    shipped_scenarios,
)

BASE = """\
schema_version: 1
name: small
duration: 0.001
engine: {N: 64, fc: 125000}
controller: {M: 2, lambda1: 1.0, lambda2: 0.5, p: inf, K_max: null}
filter:
  segments:
    - {f_start: 0, f_end: 62500, shape: constant, magnitude: 1}
  gaps:
    - {f_center: 20000, width: 4000, weight: 10}
plant: {Vin: 24, L: 22.0e-6, C: 15.0e-6, R: 1.2}
output_control: {mode: voltage_pi, vref: 6, bandwidth: 500}
"""


def diags(text):
    with pytest.raises(ScenarioError) as ei:
        parse_scenario(text, "t.yaml")
    return ei.value.diagnostics


def line_of(text, needle):
    return next(i for i, l in enumerate(text.splitlines(), 1) if needle in l)


@pytest.mark.parametrize("name", shipped_scenarios())
def test_shipped_scenarios_load(name):
    scn = load_scenario(name)
    assert scn.name == name
    assert shipped_path(name).exists()


def test_shipped_list_is_complete():
    assert {"fig4_spectral_vs_pwm", "fig5_gap_99_101k", "fig6_horizon_sweep", "fig8_load_step",
            "fig9_lambda2_sweep", "fig10_moving_gap", "table2_kmax"} <= set(shipped_scenarios())


def test_base_parses():
    scn = parse_scenario(BASE)
    assert scn.N == 64 and scn.M == 2 and scn.K_max is None and scn.p == math.inf
    assert scn.filter.gaps[0].f_center == 20000
    assert scn.plant["I_sink"] == 0.0 and scn.analysis["start_fraction"] == 0.2


def test_empty_file_lists_missing_keys():
    msgs = " ".join(d.message for d in diags(""))
    for key in ("schema_version", "name", "duration", "filter", "plant", "output_control"):
        assert key in msgs


def test_yaml_syntax_error_has_line():
    (d,) = diags("schema_version: 1\nname: [unterminated\n")
    assert d.line is not None and "YAML" in d.message


def test_wrong_schema_version():
    text = BASE.replace("schema_version: 1", "schema_version: 7")
    (d,) = diags(text)
    assert "schema_version" in d.message and d.line == 1
    assert SCHEMA_VERSION == 1


def test_unknown_key_reported_with_line():
    text = BASE + "colour: blue\n"
    (d,) = diags(text)
    assert "colour" in str(d) and d.line == line_of(text, "colour")


def test_gap_beyond_nyquist():
    text = BASE.replace("f_center: 20000", "f_center: 62000")
    ds = diags(text)
    assert any(d.line == line_of(text, "f_center") for d in ds)


def test_overlapping_segments():
    text = BASE.replace(
        "    - {f_start: 0, f_end: 62500, shape: constant, magnitude: 1}",
        "    - {f_start: 0, f_end: 30000, shape: constant, magnitude: 1}\n"
        "    - {f_start: 25000, f_end: 62500, shape: constant, magnitude: 1}")
    assert diags(text)


@pytest.mark.parametrize("old,new,needle", [
    ("K_max: null", "K_max: 0", "K_max"),
    ("M: 2", "M: 9", "M"),
    ("p: inf", "p: 3", "p"),
    ("shape: constant", "shape: cubic", "shape"),
    ("bandwidth: 500", "bandwidth: 20000", "bandwidth"),
    ("vref: 6", "vref: 30", "vref"),
    ("R: 1.2", "R: -1", "R"),
    ("N: 64", "N: 1", "N"),
    ("duration: 0.001", "duration: -1", "duration"),
])
def test_invalid_values_are_located(old, new, needle):
    text = BASE.replace(old, new)
    ds = diags(text)
    assert any(d.line == line_of(text, new) for d in ds), ds
    assert any(needle in d.path for d in ds)


def test_several_problems_reported_together():
    text = BASE.replace("M: 2", "M: 0").replace("p: inf", "p: 5")
    assert len(diags(text)) >= 2


def test_kmax_inf_means_unbounded():
    assert parse_scenario(BASE.replace("K_max: null", "K_max: .inf")).K_max is None
    assert parse_scenario(BASE.replace("K_max: null", "K_max: 10")).K_max == 10


def test_events_ordering_and_range():
    ok = BASE + textwrap.dedent("""\
        events:
          - {time: 0.0002, type: load_step, I_sink: 1.0}
          - {time: 0.0005, type: gap_move, gap: 0, f_center: 25000}
        """)
    scn = parse_scenario(ok)
    assert [e.type for e in scn.events] == ["load_step", "gap_move"]
    bad = BASE + textwrap.dedent("""\
        events:
          - {time: 0.0005, type: load_step, I_sink: 1.0}
          - {time: 0.0002, type: load_step, I_sink: 2.0}
        """)
    assert diags(bad)
    late = BASE + "events:\n  - {time: 1.0, type: load_step, I_sink: 1.0}\n"
    assert diags(late)
    unknown = BASE + "events:\n  - {time: 0.0, type: explode}\n"
    assert any(d.line == line_of(unknown, "explode") for d in diags(unknown))


def test_gap_sweep_expands_to_moves():
    text = BASE + "gap_sweep: {gap: 0, f_start: 10000, f_end: 12000, t_start: 0, t_end: 0.001, update_period: 0.0005}\n"
    scn = parse_scenario(text)
    moves = [e for e in scn.events if e.type == "gap_move"]
    assert moves[0].params["f_center"] == pytest.approx(10000)
    assert moves[-1].params["f_center"] == pytest.approx(12000)
    assert all(a.time <= b.time for a, b in zip(moves, moves[1:]))


def test_with_parameter_and_duration():
    scn = parse_scenario(BASE)
    assert scn.with_parameter("lambda2", 3.0).lambda2 == 3.0
    assert scn.with_parameter("K_max", None).K_max is None
    assert scn.with_parameter("M", 1).M == 1
    assert scn.with_duration(0.5).duration == 0.5
    with pytest.raises(ScenarioError):
        scn.with_parameter("M", 0)


def test_error_message_mentions_source_and_line():
    with pytest.raises(ScenarioError) as ei:
        parse_scenario(BASE.replace("M: 2", "M: 0"), "demo.yaml")
    assert "demo.yaml" in str(ei.value) and "line 5" in str(ei.value)


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_scenario("/nonexistent/scenario.yaml")
