import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from greenroute.domain import FallbackReason, RoutingDecision
from greenroute.engine import RunConfig, run
from greenroute.errors import GreenRouteError
from greenroute.estimators import make_oracle_estimators
from greenroute.grid import constant_grid
from greenroute.metrics import compare, compare_results, dominates, nearest_rank, pareto_csv, pareto_export, summarize
from greenroute.policies import PolicyConfig, Variant

from conftest import make_pool, outcome, request, slo


def decision(i, ds="d", correct=True, latency=100.0, carbon=1.0, feasible=("m1",)):
    return RoutingDecision(i, ds, "m1", tuple(feasible), not feasible, FallbackReason.NONE if feasible else FallbackReason.EMPTY_FEASIBLE,
                           0.0, {}, outcome(correct, latency, carbon))


def test_macro_accuracy_is_dataset_mean():
    decs = [decision(0, "a", True)] + [decision(i, "b", False) for i in range(1, 10)]
    assert summarize(decs, slo()).macro_accuracy == 0.5


def test_nearest_rank_p95():
    assert nearest_rank(list(range(1, 101)), 0.95) == 95
    decs = [decision(i, latency=float(v)) for i, v in enumerate(np.random.default_rng(0).permutation(np.arange(1, 101)))]
    assert summarize(decs, slo()).p95_latency_ms == 95


@given(st.lists(st.floats(0, 1e6, allow_nan=False), min_size=1, max_size=200))
def test_nearest_rank_matches_sorted_index(xs):
    assert nearest_rank(xs, 0.95) == sorted(xs)[math.ceil(0.95 * len(xs)) - 1]


def test_constant_carbon():
    assert summarize([decision(i, carbon=0.5) for i in range(7)], slo()).co2_g_per_request == 0.5


def test_rates_and_invariants():
    decs = [decision(0, latency=2000), decision(1, feasible=()), decision(2), decision(3)]
    r = summarize(decs, slo(L=1500))
    assert r.latency_compliance == 0.75 and r.feasibility_coverage == 0.75 and r.fallback_rate == 0.25
    assert r.p95_latency_ms >= r.median_latency_ms


def test_empty_decisions_is_an_error():
    with pytest.raises(GreenRouteError):
        summarize([], slo())


@given(st.lists(st.tuples(st.sampled_from("abc"), st.booleans()), min_size=1, max_size=40), st.randoms())
def test_macro_accuracy_permutation_invariant(rows, rnd):
    decs = [decision(i, d, c) for i, (d, c) in enumerate(rows)]
    shuffled = decs[:]
    rnd.shuffle(shuffled)
    assert summarize(decs, slo()).macro_accuracy == pytest.approx(summarize(shuffled, slo()).macro_accuracy, abs=1e-15)


class R:
    def __init__(self, acc, co2):
        self.macro_accuracy, self.co2_g_per_request = acc, co2


def test_pareto_examples():
    rows = pareto_export([("a", R(0.7, 1.0)), ("b", R(0.8, 0.5))])
    assert [r.dominated for r in rows] == [True, False]
    assert [r.dominated for r in pareto_export([("x", R(0.5, 0.5))])] == [False]
    # identical points do not dominate each other
    assert [r.dominated for r in pareto_export([("x", R(0.5, 0.5)), ("y", R(0.5, 0.5))])] == [False, False]


def test_pareto_matches_brute_force():
    rng = np.random.default_rng(3)
    for _ in range(20):
        pts = [(float(a), float(c)) for a, c in zip(rng.integers(0, 5, 10) / 4, rng.integers(0, 5, 10) / 4)]
        rows = pareto_export([(str(i), R(*p)) for i, p in enumerate(pts)])
        for i, p in enumerate(pts):
            brute = any(q[0] >= p[0] and q[1] <= p[1] and q != p for q in pts)
            assert rows[i].dominated == brute
    assert "dominated" in pareto_csv(rows).splitlines()[0]


def tiny_trace(n=30):
    # m2 ("2B") is larger and always more carbon-hungry
    return [request(i, {"m1": outcome(carbon=0.2), "m2": outcome(carbon=1.0)}) for i in range(n)]


def test_compare_orders_largest_above_smallest():
    trace = tiny_trace()
    pool = make_pool()
    cfgs = [RunConfig(PolicyConfig(Variant.LARGEST), slo()), RunConfig(PolicyConfig(Variant.SMALLEST), slo())]
    table = compare(cfgs, trace, pool, constant_grid({"r": 100.0}), make_oracle_estimators())
    co2 = {name: rep.co2_g_per_request for name, rep in table.rows}
    assert co2["Smallest LLM"] < co2["Largest LLM"]
    assert table.to_csv().splitlines()[0].startswith("method,macro_accuracy,co2_g_per_request,mean_latency_ms,p95_latency_ms")


def test_compare_one_row_and_determinism():
    trace, pool, grid = tiny_trace(), make_pool(), constant_grid({"r": 100.0})
    cfg = RunConfig(PolicyConfig(Variant.GAR), slo())
    assert len(compare([cfg], trace, pool, grid, make_oracle_estimators()).rows) == 1
    t2 = compare([cfg, cfg], trace, pool, grid, make_oracle_estimators())
    assert t2.as_records()[0] == t2.as_records()[1]


def test_compare_rejects_mismatched_traces():
    pool, grid, est = make_pool(), constant_grid({"r": 100.0}), make_oracle_estimators()
    cfg = RunConfig(PolicyConfig(Variant.GAR), slo())
    a = run(tiny_trace(10), pool, grid, est, cfg)
    b = run(tiny_trace(11), pool, grid, est, cfg)
    with pytest.raises(GreenRouteError):
        compare_results([a, b])


def test_oracle_ratio_at_least_one_when_all_feasible(small_workload):
    from greenroute.suite import comparison

    table, results = comparison(small_workload, slo=slo(0.0, L=math.inf, margins=__import__("greenroute").SafetyMargins()))
    assert all(d.feasible_model_ids for d in results[0].decisions)
    for name, rep in table.rows:
        if name not in ("Largest LLM", "Smallest LLM", "AccMax-Unconstrained"):
            assert rep.oracle_carbon_ratio >= 1.0 - 1e-12, name
