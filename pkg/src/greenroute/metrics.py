"""Evaluation metrics, comparison tables and Pareto export."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

from .domain import RequestInstance, RoutingDecision, SLOConfig
from .errors import GreenRouteError

TABLE_COLUMNS = (
    "method",
    "macro_accuracy",
    "co2_g_per_request",
    "mean_latency_ms",
    "p95_latency_ms",
    "latency_compliance",
    "feasibility_coverage",
    "fallback_rate",
    "oracle_carbon_ratio",
)


def nearest_rank(values: Sequence[float], q: float) -> float:
    """The ``ceil(q*n)``-th smallest value (1-based)."""
    if not values:
        raise GreenRouteError("quantile of an empty sample")
    s = sorted(values)
    k = max(1, math.ceil(q * len(s) - 1e-12))
    return float(s[k - 1])


@dataclass
class MetricsReport:
    n_requests: int
    macro_accuracy: float
    co2_g_per_request: float
    mean_latency_ms: float
    p95_latency_ms: float
    median_latency_ms: float
    latency_compliance: float
    feasibility_coverage: float
    fallback_rate: float
    per_dataset_accuracy: dict[str, float] = field(default_factory=dict)
    oracle_carbon_ratio: float | None = None

    def to_json(self) -> dict:
        return asdict(self)


def summarize(
    decisions: Sequence[RoutingDecision],
    slo: SLOConfig,
    trace: Sequence[RequestInstance] | None = None,
    oracle_co2_g_per_request: float | None = None,
) -> MetricsReport:
    if not decisions:
        raise GreenRouteError("cannot summarize an empty decision log")
    if trace is not None:
        if len(trace) != len(decisions):
            raise GreenRouteError(f"{len(decisions)} decisions for a {len(trace)}-request trace")
        for d, r in zip(decisions, trace):
            if d.dataset_id != r.dataset_id:
                raise GreenRouteError(f"decision {d.request_index} does not align with the trace")
    n = len(decisions)
    by_ds: dict[str, list[bool]] = {}
    for d in decisions:
        by_ds.setdefault(d.dataset_id, []).append(d.realized.correct)
    per_ds = {k: sum(v) / len(v) for k, v in sorted(by_ds.items())}
    lat = [d.realized.latency_ms for d in decisions]
    co2 = math.fsum(d.realized.carbon_g for d in decisions) / n
    return MetricsReport(
        n_requests=n,
        macro_accuracy=math.fsum(per_ds.values()) / len(per_ds),
        co2_g_per_request=co2,
        mean_latency_ms=math.fsum(lat) / n,
        p95_latency_ms=nearest_rank(lat, 0.95),
        median_latency_ms=nearest_rank(lat, 0.5),
        latency_compliance=sum(x <= slo.latency_target_L_ms for x in lat) / n,
        feasibility_coverage=sum(bool(d.feasible_model_ids) for d in decisions) / n,
        fallback_rate=sum(d.used_fallback for d in decisions) / n,
        per_dataset_accuracy=per_ds,
        oracle_carbon_ratio=None if not oracle_co2_g_per_request else co2 / oracle_co2_g_per_request,
    )


def dominates(a: tuple[float, float], b: tuple[float, float]) -> bool:
    """``a`` dominates ``b`` in (accuracy up, CO2 down)."""
    return a[0] >= b[0] and a[1] <= b[1] and (a[0] > b[0] or a[1] < b[1])


@dataclass(frozen=True)
class ParetoRow:
    method: str
    macro_accuracy: float
    co2_g_per_request: float
    dominated: bool


def pareto_export(reports: Sequence[tuple[str, MetricsReport]]) -> list[ParetoRow]:
    pts = [(r.macro_accuracy, r.co2_g_per_request) for _, r in reports]
    rows = []
    for (name, r), p in zip(reports, pts):
        dom = any(dominates(q, p) for q in pts)
        rows.append(ParetoRow(name, r.macro_accuracy, r.co2_g_per_request, dom))
    return rows


def pareto_csv(rows: Sequence[ParetoRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "macro_accuracy", "co2_g_per_request", "dominated"])
    for r in rows:
        w.writerow([r.method, repr(r.macro_accuracy), repr(r.co2_g_per_request), int(r.dominated)])
    return buf.getvalue()


@dataclass
class ComparisonTable:
    rows: list[tuple[str, MetricsReport]]

    def as_records(self) -> list[dict]:
        out = []
        for name, r in self.rows:
            out.append({
                "method": name,
                "macro_accuracy": r.macro_accuracy,
                "co2_g_per_request": r.co2_g_per_request,
                "mean_latency_ms": r.mean_latency_ms,
                "p95_latency_ms": r.p95_latency_ms,
                "latency_compliance": r.latency_compliance,
                "feasibility_coverage": r.feasibility_coverage,
                "fallback_rate": r.fallback_rate,
                "oracle_carbon_ratio": r.oracle_carbon_ratio,
            })
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=TABLE_COLUMNS, lineterminator="\n")
        w.writeheader()
        for rec in self.as_records():
            w.writerow({k: ("" if v is None else v) for k, v in rec.items()})
        return buf.getvalue()

    def format(self) -> str:
        lines = [f"{'Method':<34}{'Macro Acc.':>11}{'CO2 (g/req)':>13}{'Lat mean':>10}{'Lat p95':>10}{'Compl.':>8}{'Cover.':>8}{'Fallb.':>8}"]
        for rec in self.as_records():
            lines.append(
                f"{rec['method']:<34}{rec['macro_accuracy']:>11.3f}{rec['co2_g_per_request']:>13.3f}"
                f"{rec['mean_latency_ms']:>10.0f}{rec['p95_latency_ms']:>10.0f}{rec['latency_compliance']:>8.3f}"
                f"{rec['feasibility_coverage']:>8.3f}{rec['fallback_rate']:>8.3f}"
            )
        return "\n".join(lines)

    def pareto(self) -> list[ParetoRow]:
        return pareto_export(self.rows)


def compare_results(results) -> ComparisonTable:
    """Tabulate finished runs; all must come from the same trace."""
    if not results:
        raise GreenRouteError("nothing to compare")
    prints = {r.trace_fingerprint for r in results}
    if len(prints) != 1:
        raise GreenRouteError("runs were made on different traces")
    oracle = next((r for r in results if r.config.policy.variant.value == "oracle_feasible" and not r.config.ablations.any), None)
    rows = []
    for r in results:
        rep = summarize(r.decisions, r.config.slo, oracle_co2_g_per_request=oracle.report.co2_g_per_request if oracle else None)
        r.report = rep
        rows.append((r.config.name, rep))
    return ComparisonTable(rows)


def compare(configs, trace, pool, grid, estimators, validation=None) -> ComparisonTable:
    """Run every config over the same trace and tabulate."""
    from .engine import resolve_budget, run

    if not configs:
        raise GreenRouteError("nothing to compare")
    results = []
    for cfg in configs:
        budget = resolve_budget(trace, pool, cfg, estimators, grid)
        results.append(run(trace, pool, grid, estimators, cfg, validation=validation, budget_B_g=budget))
    return compare_results(results)
