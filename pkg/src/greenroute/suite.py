"""The standard method lineup and the component ablations over one workload."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

from .domain import ModelPool, RequestInstance, SLOConfig
from .engine import Ablations, RunConfig, RunResult, resolve_budget, run
from .estimators import FittedEstimators, fit_estimators
from .grid import GridIntensitySeries
from .metrics import ComparisonTable, compare_results
from .policies import PolicyConfig, Variant
from .tracegen import GenSpec, generate, split

DEFAULT_FLOOR = 0.6
DEFAULT_EPSILON = 0.05


@dataclass
class Workload:
    pool: ModelPool
    grid: GridIntensitySeries
    test: list[RequestInstance]
    validation: list[RequestInstance]
    calibration: list[RequestInstance]
    estimators: FittedEstimators


def build_workload(spec: GenSpec | None = None, split_seed: int = 42) -> Workload:
    """Generate, split and calibrate a synthetic workload."""
    spec = spec or GenSpec()
    trace, grid = generate(spec)
    test, val, cal = split(trace, seed=split_seed)
    pool = ModelPool(spec.pool)
    return Workload(pool, grid, test, val, cal, fit_estimators(cal, pool))


def default_slo(floor: float = DEFAULT_FLOOR, **kw) -> SLOConfig:
    return SLOConfig(default_floor=floor, **kw)


def validation_accuracy(w: Workload, variant: Variant, slo: SLOConfig) -> float:
    cfg = RunConfig(policy=PolicyConfig(variant), slo=slo)
    res = run(w.validation, w.pool, w.grid, w.estimators, cfg, budget_B_g=float("inf"))
    return res.report.macro_accuracy


def standard_configs(
    w: Workload,
    slo: SLOConfig,
    budget_B_g: float,
    epsilon: float = DEFAULT_EPSILON,
    target_accuracy: float | None = None,
    pd=None,
) -> list[RunConfig]:
    """Every baseline and GAR variant.

    GAR-Fixed caps per-request carbon at the budget; GAR-Target aims at the
    validation accuracy of AccMax-Feasible unless told otherwise.
    """
    if target_accuracy is None:
        target_accuracy = validation_accuracy(w, Variant.ACCMAX_FEASIBLE, slo)
    pd_kw = {"pd": pd} if pd is not None else {}
    policies = [
        PolicyConfig(Variant.LARGEST),
        PolicyConfig(Variant.SMALLEST),
        PolicyConfig(Variant.ACCMAX_UNCONSTRAINED),
        PolicyConfig(Variant.ACCMAX_FEASIBLE),
        PolicyConfig(Variant.ORACLE_FEASIBLE),
        PolicyConfig(Variant.GAR),
        PolicyConfig(Variant.GAR_FIXED, carbon_cap_g=budget_B_g),
        PolicyConfig(Variant.GAR_EPS, epsilon=epsilon),
        PolicyConfig(Variant.GAR_TARGET, target_accuracy=target_accuracy),
        PolicyConfig(Variant.GAR_PD, **pd_kw),
    ]
    return [RunConfig(policy=p, slo=slo) for p in policies]


def ablation_configs(slo: SLOConfig, pd=None) -> list[RunConfig]:
    """Full GAR-PD followed by one single-component ablation each."""
    pol = PolicyConfig(Variant.GAR_PD, **({"pd": pd} if pd is not None else {}))
    out = [RunConfig(policy=pol, slo=slo)]
    for name in ("carbon_estimator", "accuracy_estimator", "latency_estimator", "feasibility_gates"):
        out.append(RunConfig(policy=pol, slo=slo, ablations=Ablations.from_names([name])))
    return out


def run_configs(w: Workload, configs: Sequence[RunConfig], budget_B_g: float | None = None) -> list[RunResult]:
    results = []
    for cfg in configs:
        b = budget_B_g if budget_B_g is not None else resolve_budget(w.test, w.pool, cfg, w.estimators, w.grid)
        results.append(run(w.test, w.pool, w.grid, w.estimators, cfg, validation=w.validation, budget_B_g=b))
    return results


def comparison(w: Workload, slo: SLOConfig | None = None, **kw) -> tuple[ComparisonTable, list[RunResult]]:
    slo = slo or default_slo()
    budget = resolve_budget(w.test, w.pool, RunConfig(slo=slo))
    results = run_configs(w, standard_configs(w, slo, budget, **kw), budget)
    return compare_results(results), results


def ablations(w: Workload, slo: SLOConfig | None = None, pd=None) -> tuple[ComparisonTable, list[RunResult]]:
    slo = slo or default_slo()
    budget = resolve_budget(w.test, w.pool, RunConfig(slo=slo))
    results = run_configs(w, ablation_configs(slo, pd), budget)
    return compare_results(results), results


def with_slo(configs: Sequence[RunConfig], slo: SLOConfig) -> list[RunConfig]:
    return [replace(c, slo=slo) for c in configs]
