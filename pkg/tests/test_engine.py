import math

import numpy as np
import pytest

from greenroute.domain import PredictionBundle
from greenroute.engine import Ablations, RunConfig, apply_ablation, compute_baseline_mean_carbon, resolve_budget, run
from greenroute.errors import ConfigError, GreenRouteError
from greenroute.estimators import make_oracle_estimators
from greenroute.grid import constant_grid
from greenroute.policies import PDConfig, PolicyConfig, Variant

from conftest import FeaturePredictor, bundle, make_pool, outcome, request, slo, two_model_regime

GRID = constant_grid({"r": 100.0})


def pd_config(window=100, eta=0.05, **kw):
    return RunConfig(PolicyConfig(Variant.GAR_PD, pd=PDConfig(window_W=window, eta=eta, **kw)), slo())


def test_single_step_gar_picks_low_carbon():
    trace = [request(0, {"m1": outcome(carbon=0.4), "m2": outcome(carbon=0.2)})]
    res = run(trace, make_pool(), GRID, make_oracle_estimators(), RunConfig(PolicyConfig(Variant.GAR), slo()))
    assert [d.chosen_model_id for d in res.decisions] == ["m2"]


def test_infinite_budget_keeps_lambda_zero():
    trace, pool, est = two_model_regime(500)
    res = run(trace, pool, GRID, est, pd_config(), budget_B_g=math.inf)
    assert all(d.lambda_snapshot == 0.0 for d in res.decisions) and res.final_lambda == 0.0
    # lambda = 0 reduces the score to quality + latency: the higher-p model wins
    assert all(d.chosen_model_id == ("m2" if r.features[1] > r.features[0] else "m1")
               for d, r in zip(res.decisions, trace))


def test_two_model_regime_tracks_budget():
    trace, pool, est = two_model_regime(3000, seed=1)
    res = run(trace, pool, GRID, est, pd_config(), budget_B_g=2.0)
    carbon = [d.realized.carbon_g for d in res.decisions]
    tail = np.mean(carbon[1000:])
    assert 1.0 <= tail <= 3.0
    assert abs(tail - 2.0) <= 0.2
    assert all(d.lambda_snapshot >= 0 for d in res.decisions)


def test_baseline_carbon_and_budget():
    trace = [request(i, {"m1": outcome(carbon=0.5), "m2": outcome(carbon=2.0)}) for i in range(4)]
    pool = make_pool()
    assert compute_baseline_mean_carbon(trace, pool) == 2.0
    assert resolve_budget(trace, pool, RunConfig()) == pytest.approx(1.3, abs=1e-12)
    assert compute_baseline_mean_carbon(trace, pool, "smallest") == 0.5
    with pytest.raises(GreenRouteError):
        compute_baseline_mean_carbon([], pool)
    with pytest.raises(ConfigError):
        compute_baseline_mean_carbon(trace, pool, "gar_pd", make_oracle_estimators(), GRID)


def test_carbon_ablation_ties_on_carbon():
    b = apply_ablation(bundle([0.9, 0.8], [100, 100], [0.4, 0.2]), Ablations(disable_carbon_estimator=True))
    assert list(b.c_tilde_g) == [1.0, 1.0]
    trace = [request(0, {"m1": outcome(carbon=0.4, latency=90), "m2": outcome(carbon=0.2)})]
    cfg = RunConfig(PolicyConfig(Variant.GAR), slo(), Ablations(disable_carbon_estimator=True))
    # equal carbon, so the lower latency decides
    assert run(trace, make_pool(), GRID, make_oracle_estimators(), cfg).decisions[0].chosen_model_id == "m1"


def test_accuracy_ablation_passes_every_floor():
    b = apply_ablation(bundle([0.1, 0.2], [100, 100], [1, 2]), Ablations(disable_accuracy_estimator=True))
    assert list(b.p_hat) == [1.0, 1.0]
    trace = [request(0, {"m1": outcome(False), "m2": outcome(False)})]
    cfg = RunConfig(PolicyConfig(Variant.GAR), slo(0.9), Ablations(disable_accuracy_estimator=True))
    d = run(trace, make_pool(), GRID, make_oracle_estimators(), cfg).decisions[0]
    assert d.feasible_model_ids == ("m1", "m2") and not d.used_fallback


def test_latency_ablation_zeroes_latency():
    b = apply_ablation(bundle([0.9, 0.8], [5000, 100], [1, 2]), Ablations(disable_latency_estimator=True))
    assert list(b.ell_tilde_ms) == [0.0, 0.0]


def test_gates_ablation_makes_violator_selectable():
    trace = [request(0, {"m1": outcome(latency=5000, carbon=0.1), "m2": outcome(carbon=1.0)})]
    gated = RunConfig(PolicyConfig(Variant.GAR), slo())
    open_ = RunConfig(PolicyConfig(Variant.GAR), slo(), Ablations(disable_feasibility_gates=True))
    est = make_oracle_estimators()
    assert run(trace, make_pool(), GRID, est, gated).decisions[0].chosen_model_id == "m2"
    assert run(trace, make_pool(), GRID, est, open_).decisions[0].chosen_model_id == "m1"


def test_ablations_compose():
    a = Ablations.from_names(["carbon_estimator", "latency-estimator"])
    assert a.names == ["carbon_estimator", "latency_estimator"]
    with pytest.raises(ConfigError):
        Ablations.from_names(["nope"])


def test_determinism_byte_identical(small_workload):
    w = small_workload
    cfg = pd_config()
    a = run(w.test, w.pool, w.grid, w.estimators, cfg)
    b = run(w.test, w.pool, w.grid, w.estimators, cfg)
    assert a.decision_log() == b.decision_log()
    assert a.report.to_json() == b.report.to_json()


def test_truncation_reproduces_prefix():
    trace, pool, est = two_model_regime(600, seed=2)
    full = run(trace, pool, GRID, est, pd_config(window=50), budget_B_g=2.0)
    for cut in (1, 37, 250):
        part = run(trace[:cut], pool, GRID, est, pd_config(window=50), budget_B_g=2.0)
        assert part.decision_log().splitlines() == full.decision_log().splitlines()[:cut]


def test_ledger_holds_last_w_carbons():
    trace, pool, est = two_model_regime(437, seed=3)
    res = run(trace, pool, GRID, est, pd_config(window=100), budget_B_g=2.0)
    assert res.ledger_state["ring"] == [d.realized.carbon_g for d in res.decisions[-100:]]
    assert res.ledger_state["count_seen"] == 437


def test_one_decision_per_request_in_order(small_workload):
    w = small_workload
    res = run(w.test, w.pool, w.grid, w.estimators, RunConfig(PolicyConfig(Variant.GAR), slo(0.6)))
    assert [d.request_index for d in res.decisions] == list(range(len(w.test)))
    assert [d.dataset_id for d in res.decisions] == [r.dataset_id for r in w.test]


class Broken(FeaturePredictor):
    def predict(self, req, pool, slo, grid):
        if req.request_index == 5:
            raise GreenRouteError("estimator exploded")
        return super().predict(req, pool, slo, grid)


def test_errors_carry_request_index():
    trace, pool, _ = two_model_regime(10)
    with pytest.raises(GreenRouteError, match="request 5: estimator exploded"):
        run(trace, pool, GRID, Broken(), pd_config(), budget_B_g=2.0)


def test_target_needs_validation():
    trace, pool, est = two_model_regime(10)
    cfg = RunConfig(PolicyConfig(Variant.GAR_TARGET, target_accuracy=0.5), slo())
    with pytest.raises(ConfigError):
        run(trace, pool, GRID, est, cfg, budget_B_g=2.0)
