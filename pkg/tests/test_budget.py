import math

import pytest
from hypothesis import given, strategies as st

from greenroute.budget import CarbonLedger, DualState, dual_update, ledger_push, window_average
from greenroute.errors import ConfigError, GreenRouteError


def pushed(W, values, B=1.0):
    led = CarbonLedger(W, B)
    for v in values:
        ledger_push(led, v)
    return led


def test_window_sum_after_eviction():
    assert pushed(3, [1, 2, 3, 4]).running_sum_S == 9


def test_first_push():
    assert pushed(100, [5]).running_sum_S == 5


def test_zeros_stay_zero():
    led = pushed(7, [0.0] * 50)
    assert led.running_sum_S == 0.0 and len(led.ring) == 7


def test_prefix_average():
    assert window_average(pushed(100, [1, 3])) == 2.0


def test_average_after_wrap():
    assert window_average(pushed(2, [1, 3, 5])) == 4.0


def test_all_at_budget_average_is_budget():
    assert window_average(pushed(10, [0.7] * 37, B=0.7)) == pytest.approx(0.7, rel=1e-15)


def test_negative_carbon_rejected():
    with pytest.raises(GreenRouteError):
        pushed(3, [-0.1])


def test_empty_average_is_an_error():
    with pytest.raises(GreenRouteError):
        window_average(CarbonLedger(3, 1.0))


def test_invalid_construction():
    with pytest.raises(ConfigError):
        CarbonLedger(0, 1.0)
    with pytest.raises(ConfigError):
        CarbonLedger(3, 0.0)
    with pytest.raises(ConfigError):
        DualState(eta=0.0)


def update_with_ratio(lam, ratio, eta=0.05, W=4, B=2.0, count=4):
    # choose pushes so that S = ratio * B * W_eff
    led = pushed(W, [ratio * B] * count, B=B)
    d = DualState(eta=eta, lam=lam)
    dual_update(d, led)
    return d.lam


def test_on_budget_fixpoint():
    assert update_with_ratio(0.0, 1.0) == 0.0


def test_half_budget_step():
    assert update_with_ratio(0.2, 0.5) == pytest.approx(0.175, abs=1e-15)


def test_clip_at_zero():
    assert update_with_ratio(0.01, 0.5) == 0.0


def test_prefix_window_normalisation_and_strict_flag():
    led = pushed(100, [2.0, 2.0], B=1.0)  # S = 4 over two requests
    d = DualState(eta=0.05)
    dual_update(d, led)
    assert d.lam == pytest.approx(0.05)  # (4 - 2) / 2
    d2 = DualState(eta=0.05, lam=1.0)
    dual_update(d2, led, strict_bw=True)
    assert d2.lam == pytest.approx(1.0 + 0.05 * (4 - 100) / 100)


def test_infinite_budget_drives_lambda_down():
    led = pushed(5, [3.0], B=math.inf)
    d = DualState(eta=0.05, lam=0.03)
    dual_update(d, led)
    assert d.lam == 0.0


@given(st.lists(st.floats(0, 50, allow_nan=False), min_size=1, max_size=300), st.integers(1, 40))
def test_running_sum_matches_brute_force(values, W):
    led = CarbonLedger(W, 1.0)
    for t, v in enumerate(values, start=1):
        led.push(v)
        exact = math.fsum(values[max(0, t - W) : t])
        assert math.isclose(led.running_sum_S, exact, rel_tol=1e-9, abs_tol=1e-9)
        assert len(led.ring) == min(t, W) and led.count_seen == t


@given(st.lists(st.floats(0, 10, allow_nan=False), min_size=1, max_size=200), st.floats(0, 5), st.floats(0.01, 1))
def test_lambda_never_negative(values, lam0, eta):
    led = CarbonLedger(10, 1.0)
    d = DualState(eta=eta, lam=lam0)
    for v in values:
        led.push(v)
        dual_update(d, led)
        assert d.lam >= 0.0


@given(st.lists(st.floats(0, 0.9, allow_nan=False), min_size=1, max_size=200), st.floats(0, 2))
def test_lambda_nonincreasing_under_budget(values, lam0):
    led = CarbonLedger(10, 1.0)
    d = DualState(eta=0.05, lam=lam0)
    for v in values:
        led.push(v)
        before = d.lam
        dual_update(d, led)
        assert d.lam <= before
