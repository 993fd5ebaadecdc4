"""Switch off one component at a time, then sweep the budget."""

# %%
from dataclasses import replace

from greenroute.engine import RunConfig, resolve_budget
from greenroute.policies import PDConfig, PolicyConfig, Variant
from greenroute.suite import ablations, build_workload, default_slo, run_configs
from greenroute.tracegen import GenSpec

w = build_workload(GenSpec(seed=1, n_requests=2400))
table, _ = ablations(w)
print(table.format())

# %%
# A tighter budget buys carbon with accuracy. The budget is a fraction of the
# largest model's mean carbon on the replayed trace.
slo = default_slo()
for frac in (0.4, 0.5, 0.65, 0.8, 1.0):
    cfg = RunConfig(PolicyConfig(Variant.GAR_PD), slo, budget_fraction=frac)
    budget = resolve_budget(w.test, w.pool, cfg)
    (res,) = run_configs(w, [cfg], budget)
    r = res.report
    print(f"fraction {frac:.2f}  B={budget:.3f} g  acc {r.macro_accuracy:.3f}  co2 {r.co2_g_per_request:.3f} g")

# %%
# A larger step size reacts faster to overshoot.
for eta in (0.01, 0.05, 0.2):
    cfg = RunConfig(PolicyConfig(Variant.GAR_PD, pd=PDConfig(eta=eta)), slo)
    (res,) = run_configs(w, [cfg])
    print(f"eta {eta:<5} acc {res.report.macro_accuracy:.3f}  co2 {res.report.co2_g_per_request:.3f} g")
