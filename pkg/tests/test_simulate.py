import numpy as np
import pytest

from specmpc.controller import CostWeights, HorizonConfig, PredictiveController
from specmpc.converter import PIController, PlantState, design_voltage_pi, equilibrium, plant_step
from specmpc.filters import compile_weights
from specmpc.scenario import parse_scenario
from specmpc.simulate import plant_params, replay_filter, run_scenario

from test_scenario import BASE


@pytest.fixture
def scn():
    return parse_scenario(BASE)


def python_loop(scn, n):
    """Closed loop written with the object API, one cycle at a time."""
    params = plant_params(scn)
    d0 = scn.output_control["vref"] / params.Vin
    pi = PIController(design_voltage_pi(scn.fc, params.Vin, scn.output_control["bandwidth"], ff=d0))
    ctl = PredictiveController(compile_weights(scn.filter, scn.N, scn.fc),
                               cost=CostWeights(scn.lambda1, scn.lambda2, scn.p, scn.K_max),
                               horizon=HorizonConfig(scn.M), resync_interval=scn.resync_interval)
    s = equilibrium(params, d0)
    bits, vs = [], []
    for _ in range(n):
        d = pi.step(scn.output_control["vref"], s.vC)
        b = ctl.step(d)
        bits.append(b)
        vs.append(s.vC)
        s = plant_step(s, b, params)
    return np.array(bits), np.array(vs)


def test_kernel_loop_matches_object_loop(scn):
    art = run_scenario(scn, metrics=False)
    bits, vs = python_loop(scn, art.bits.size)
    assert np.array_equal(art.bits, bits)
    np.testing.assert_allclose(art.vC, vs, rtol=0, atol=1e-9)


def test_zero_duration(scn):
    art = run_scenario(scn.with_duration(0.0))
    assert art.bits.size == 0 and art.metrics["steps"] == 0


def test_deterministic(scn):
    a, b = run_scenario(scn), run_scenario(scn)
    assert np.array_equal(a.bits, b.bits) and np.array_equal(a.vC, b.vC)
    assert a.metrics == b.metrics or all(
        (x == y) or (x != x and y != y) for x, y in zip(a.metrics.values(), b.metrics.values()))


def test_resync_chunking_does_not_change_bits(scn):
    raw = dict(scn.raw)
    raw["engine"] = {**raw["engine"], "resync_interval": 17}
    from specmpc.scenario import scenario_from_dict

    other = scenario_from_dict(raw)
    a, b = run_scenario(scn, metrics=False), run_scenario(other, metrics=False)
    assert np.array_equal(a.bits, b.bits)


def test_snapshot_chunking_does_not_change_bits(scn):
    text = BASE + "analysis: {snapshot_interval: 0.0001}\n"
    art = run_scenario(parse_scenario(text), metrics=False)
    assert np.array_equal(art.bits, run_scenario(scn, metrics=False).bits)
    assert len(art.snapshots) == 10
    assert art.snapshots[0][1].shape == (33,)


def test_events_apply_at_their_step(scn):
    text = BASE.replace("duration: 0.001", "duration: 0.002") + (
        "events:\n"
        "  - {time: 0.001, type: gap_move, gap: 0, f_center: 30000}\n"
        "  - {time: 0.0015, type: load_step, I_sink: 2.0}\n")
    s = parse_scenario(text)
    art = run_scenario(s)
    assert art.gap_track == [(0.0, [20000.0]), (0.001, [30000.0])]
    assert art.final_filter.gaps[0].f_center == 30000
    spec, track = replay_filter(s)
    assert track == art.gap_track and spec == art.final_filter
    # before the first event the run is identical to the event-free run
    base = run_scenario(scn, metrics=False)
    assert np.array_equal(art.bits[:125], base.bits)


def test_fixed_duty_from_all_off_window_is_a_fixed_point():
    # a constant duty leaves the shifted window constant, so no non-DC bin is
    # ever excited and the cheapest choice is to keep the switch off
    text = BASE.replace("output_control: {mode: voltage_pi, vref: 6, bandwidth: 500}",
                        "output_control: {mode: fixed_duty, duty: 0.25}")
    art = run_scenario(parse_scenario(text))
    assert np.all(art.duty == 0.25)
    assert not art.bits.any()
    forced = run_scenario(parse_scenario(text.replace("K_max: null", "K_max: 8")))
    assert forced.bits.any()
    assert abs(forced.bits[40:].mean() - 0.25) < 0.1


def test_metrics_keys(scn):
    m = run_scenario(scn.with_duration(0.004)).metrics
    for key in ("f_sw_hz", "sfdr_dc_db", "v_mean", "v_var", "max_run", "gap0_depth_db", "gap0_center_hz"):
        assert key in m
    assert m["steps"] == 500
