"""Trace-replay simulator.

Per request, in arrival order: predict, apply ablations, build the feasible
set, select (with fallback), read the chosen model's realized outcome, push
its carbon to the ledger and, for GAR-PD, update the dual variable. The
recorded lambda is the one used for the selection, i.e. before the update.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .budget import CarbonLedger, DualState, dual_update
from .domain import (
    ModelPool,
    PredictionBundle,
    RequestInstance,
    RoutingDecision,
    SafetyMargins,
    SLOConfig,
)
from .errors import ConfigError, GreenRouteError
from .estimators import predict
from .feasibility import feasible_set, full_set
from .grid import GridIntensitySeries
from .io import request_to_json
from .policies import PolicyConfig, TargetTuning, Variant, choose, tune_target_floors

ABLATION_NAMES = ("feasibility_gates", "carbon_estimator", "accuracy_estimator", "latency_estimator")


@dataclass(frozen=True)
class Ablations:
    disable_feasibility_gates: bool = False
    disable_carbon_estimator: bool = False
    disable_accuracy_estimator: bool = False
    disable_latency_estimator: bool = False

    @classmethod
    def from_names(cls, names: Sequence[str]) -> "Ablations":
        flags = {}
        for n in names:
            key = n.replace("-", "_")
            if key not in ABLATION_NAMES:
                raise ConfigError(f"unknown ablation {n!r}; choose from {', '.join(ABLATION_NAMES)}")
            flags[f"disable_{key}"] = True
        return cls(**flags)

    @property
    def names(self) -> list[str]:
        return [n for n in ABLATION_NAMES if getattr(self, f"disable_{n}")]

    @property
    def any(self) -> bool:
        return bool(self.names)


@dataclass(frozen=True)
class RunConfig:
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    slo: SLOConfig = field(default_factory=SLOConfig)
    ablations: Ablations = field(default_factory=Ablations)
    seed: int = 42
    budget_fraction: float = 0.65
    baseline_policy: str = "largest"
    label: str | None = None

    def __post_init__(self):
        if not (self.budget_fraction > 0):
            raise ConfigError("budget_fraction must be > 0")

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        base = self.policy.name
        if self.ablations.any:
            base += " w/o " + "+".join(self.ablations.names)
        return base


@dataclass
class RunResult:
    decisions: list[RoutingDecision]
    final_lambda: float
    budget_B_g: float
    ledger_state: dict
    config: RunConfig
    target_tuning: TargetTuning | None = None
    report: object = None  # metrics.MetricsReport
    trace_fingerprint: str = ""

    @property
    def lambda_trajectory(self) -> list[float]:
        return [d.lambda_snapshot for d in self.decisions]

    def decision_log(self) -> str:
        """Deterministic JSONL rendering of the decisions."""
        return "".join(json.dumps(d.to_json_dict(), sort_keys=True) + "\n" for d in self.decisions)


def trace_fingerprint(trace: Sequence[RequestInstance]) -> str:
    h = hashlib.sha256()
    for req in trace:
        h.update(json.dumps(request_to_json(req), sort_keys=True).encode())
    return h.hexdigest()


def apply_ablation(bundle: PredictionBundle, flags: Ablations) -> PredictionBundle:
    """Neutralise the disabled estimator signals (gates are handled by the caller)."""
    changes = {}
    k = len(bundle)
    if flags.disable_carbon_estimator:
        changes["c_hat_g"] = np.ones(k)
        changes["margins"] = SafetyMargins(gamma_c=0.0, gamma_ell=bundle.margins.gamma_ell)
    if flags.disable_accuracy_estimator:
        changes["p_hat"] = np.ones(k)
    if flags.disable_latency_estimator:
        changes["ell_p95_hat_ms"] = np.zeros(k)
    return bundle.replace(**changes) if changes else bundle


def compute_baseline_mean_carbon(
    trace: Sequence[RequestInstance],
    pool: ModelPool,
    reference_policy: str = "largest",
    estimators=None,
    grid: GridIntensitySeries | None = None,
    slo: SLOConfig | None = None,
) -> float:
    """Mean realized carbon (g/request) of ``reference_policy`` over ``trace``."""
    if not trace:
        raise GreenRouteError("baseline carbon of an empty trace")
    variant = Variant(reference_policy)
    if variant in (Variant.LARGEST, Variant.SMALLEST):
        mid = pool.largest() if variant is Variant.LARGEST else pool.smallest()
        return math.fsum(r.realized[mid].carbon_g for r in trace) / len(trace)
    if estimators is None or grid is None:
        raise ConfigError(f"baseline {variant.value} needs estimators and a grid")
    if variant in (Variant.GAR_PD, Variant.GAR_FIXED, Variant.GAR_EPS, Variant.GAR_TARGET):
        raise ConfigError("baseline policy must not depend on the budget")
    cfg = RunConfig(policy=PolicyConfig(variant), slo=slo or SLOConfig(default_floor=0.0))
    res = run(trace, pool, grid, estimators, cfg, budget_B_g=math.inf)
    return math.fsum(d.realized.carbon_g for d in res.decisions) / len(res.decisions)


def resolve_budget(trace, pool, config: RunConfig, estimators=None, grid=None) -> float:
    if config.policy.pd.budget_B_g is not None:
        return config.policy.pd.budget_B_g
    base = compute_baseline_mean_carbon(trace, pool, config.baseline_policy, estimators, grid, config.slo)
    if not (base > 0):
        raise ConfigError("baseline mean carbon is zero; set budget_B_g explicitly")
    return config.budget_fraction * base


def run(
    trace: Sequence[RequestInstance],
    pool: ModelPool,
    grid: GridIntensitySeries,
    estimators,
    config: RunConfig,
    validation: Sequence[RequestInstance] | None = None,
    budget_B_g: float | None = None,
    target_floors: Mapping[str, float] | None = None,
    with_report: bool = True,
) -> RunResult:
    """Replay ``trace`` under ``config`` and return the decision log."""
    policy = config.policy
    slo = config.slo
    flags = config.ablations
    if budget_B_g is None:
        budget_B_g = resolve_budget(trace, pool, config, estimators, grid) if trace else math.inf

    tuning = None
    if policy.variant is Variant.GAR_TARGET and target_floors is None:
        if policy.target_floors is not None:
            target_floors = dict(policy.target_floors)
        else:
            if not validation:
                raise ConfigError("gar_target with target_accuracy needs a validation split to tune floors")
            tuning = tune_target_floors(validation, estimators, pool, grid, slo, policy.target_accuracy)
            target_floors = tuning.floors

    ledger = CarbonLedger(policy.pd.window_W, budget_B_g)
    dual = DualState(eta=policy.pd.eta)
    is_pd = policy.variant is Variant.GAR_PD
    ids = pool.model_ids
    decisions = []
    for pos, req in enumerate(trace):
        try:
            bundle = predict(estimators, req, pool, slo, grid)
            bundle = apply_ablation(bundle, flags)
            if flags.disable_feasibility_gates:
                feas = full_set(bundle, slo, req.dataset_id)
            else:
                feas = feasible_set(bundle, slo, req.dataset_id)
            lam = dual.lam
            pick = choose(
                policy, bundle, feas, slo, req.dataset_id, pool, req.realized,
                lam=lam, budget_B_g=budget_B_g, target_floors=target_floors,
            )
            chosen = ids[pick.index]
            outcome = req.realized[chosen]
            ledger.push(outcome.carbon_g)
            if is_pd:
                dual_update(dual, ledger, strict_bw=policy.pd.strict_bw)
        except GreenRouteError as exc:
            raise type(exc)(f"request {req.request_index}: {exc}") from exc
        predicted = {
            "p_hat": float(bundle.p_hat[pick.index]),
            "ell_tilde_ms": float(bundle.ell_tilde_ms[pick.index]),
            "c_tilde_g": float(bundle.c_tilde_g[pick.index]),
        }
        scores = None
        if pick.scores is not None:
            scores = {m: float(s) for m, s in zip(ids, pick.scores)}
        decisions.append(
            RoutingDecision(
                request_index=pos,
                dataset_id=req.dataset_id,
                chosen_model_id=chosen,
                feasible_model_ids=feas.model_ids,
                used_fallback=pick.used_fallback,
                fallback_reason=pick.reason,
                lambda_snapshot=lam,
                predicted=predicted,
                realized=outcome,
                score_per_model=scores,
                constrained=policy.variant.constrained,
            )
        )
    result = RunResult(
        decisions=decisions,
        final_lambda=dual.lam,
        budget_B_g=budget_B_g,
        ledger_state=ledger.state(),
        config=config,
        target_tuning=tuning,
        trace_fingerprint=trace_fingerprint(trace),
    )
    if with_report and decisions:
        from .metrics import summarize

        result.report = summarize(decisions, slo, trace)
    return result


def with_policy(config: RunConfig, policy: PolicyConfig) -> RunConfig:
    return replace(config, policy=policy)
