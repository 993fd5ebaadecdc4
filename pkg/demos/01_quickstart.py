"""Quickstart: generate a workload, replay every policy, read the table.

Run with ``python3 demos/01_quickstart.py``.
"""

# %%
# A synthetic counterfactual trace records every model's outcome for every
# request, so any policy can be replayed offline on the same stream.
from greenroute.suite import build_workload, comparison, default_slo
from greenroute.tracegen import GenSpec

w = build_workload(GenSpec(seed=0, n_requests=2400))
print(f"{len(w.test)} test, {len(w.validation)} validation, {len(w.calibration)} calibration requests")
print("pool:", ", ".join(w.pool.model_ids))

# %%
# Replay the ten methods with the default SLO (accuracy floor 0.6, p95
# target 1500 ms) and a budget of 0.65 x the largest model's mean carbon.
table, results = comparison(w, slo=default_slo())
print(table.format())

# %%
# Pareto view in (accuracy up, CO2 down).
for row in table.pareto():
    flag = "dominated" if row.dominated else "frontier"
    print(f"{row.method:<22} {row.macro_accuracy:.3f} {row.co2_g_per_request:.3f} g  {flag}")

# %%
# Each run keeps a full audit trail: what was feasible, what was picked and
# the dual price at the time of the choice.
pd_run = next(r for r in results if r.config.name == "GAR-PD")
d = pd_run.decisions[250]
print(d.dataset_id, d.chosen_model_id, d.feasible_model_ids, f"lambda={d.lambda_snapshot:.3f}")
print(f"budget {pd_run.budget_B_g:.3f} g/request, final lambda {pd_run.final_lambda:.3f}")
