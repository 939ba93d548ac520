import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from specmpc.oracle import (
    brute_force_choice,
    brute_force_costs,
    direct_dft,
    direct_dft_matrix,
    recount_transitions,
    substep_plant,
)


@pytest.mark.parametrize("N", [1, 2, 7, 8])
def test_impulse_is_flat(N):
    x = np.zeros(N)
    x[0] = 1.0
    np.testing.assert_allclose(direct_dft(x), np.ones(N // 2 + 1))


@pytest.mark.parametrize("N", [5, 8])
def test_constant_is_dc_only(N):
    X = direct_dft(np.full(N, 2.0))
    assert X[0] == pytest.approx(2.0 * N)
    np.testing.assert_allclose(X[1:], 0, atol=1e-12)


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=24))
def test_loop_and_matrix_forms_agree(xs):
    np.testing.assert_allclose(direct_dft(xs), direct_dft_matrix(xs), atol=1e-9)


@pytest.mark.parametrize("raw,expected", [([], 0), ([1], 0), ([0, 1, 1, 0], 2), ([1, 0] * 4, 7)])
def test_recount(raw, expected):
    assert recount_transitions(raw) == expected


def test_brute_force_switching_only():
    raw = [0, 0, 1, 1]
    costs = brute_force_costs(raw, [0.0] * 4, 0, 1, 0.5, np.zeros(3), np.zeros(3), 0.0, 1.0, math.inf, None, 1)
    assert costs == [2.0, 1.0]
    assert brute_force_choice(raw, [0.0] * 4, 0, 1, 0.5, np.zeros(3), np.zeros(3), 0.0, 1.0,
                              math.inf, None, 1) == 1


def test_brute_force_kmax_marks_infeasible():
    costs = brute_force_costs([1] * 4, [0.0] * 4, 2, 1, 0.5, np.zeros(3), np.zeros(3), 1.0, 0.0,
                              1.0, 3, 1)
    assert costs[1] == math.inf and costs[0] < math.inf


def test_brute_force_all_infeasible_falls_back_to_tie_rule():
    # K_max = 1 with M = 2: every path repeats a bit at step 1 unless it alternates from last
    costs = brute_force_costs([0] * 4, [0.0] * 4, 0, 0, 0.5, np.zeros(3), np.zeros(3), 1.0, 0.0,
                              1.0, 1, 2)
    assert [c < math.inf for c in costs] == [False, True, False, False]


def test_substep_rejects_zero_steps():
    with pytest.raises(ValueError):
        substep_plant(0, 0, 1, 24, 22e-6, 15e-6, 8e-6, substeps=0)


def test_substep_fourth_order():
    args = (0.5, 3.0, 1, 24.0, 22e-6, 15e-6, 8e-6, 1.2)
    ref = np.array(substep_plant(*args, substeps=400))
    errs = [np.abs(np.array(substep_plant(*args, substeps=n)) - ref).max() for n in (5, 10, 20)]
    slopes = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(slopes - 4) < 0.3)
