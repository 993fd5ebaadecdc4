"""How the dual price steers GAR-PD onto a rolling carbon budget.

Two models: one cheap, one three times the carbon but predicted more
accurate. The budget sits halfway between them, so the router has to mix.
"""

# %%
import numpy as np

from greenroute.domain import ModelPool, ModelProfile, PredictionBundle, RealizedOutcome, RequestInstance, SLOConfig
from greenroute.engine import RunConfig, run
from greenroute.grid import constant_grid
from greenroute.policies import PDConfig, PolicyConfig, Variant

rng = np.random.default_rng(0)
pool = ModelPool((ModelProfile("cheap", "7B", "r", 0.0, 1.0), ModelProfile("strong", "70B", "r", 0.0, 3.0)))


class FeaturePredictor:
    """Accuracy estimates ride along in the request features."""

    def predict(self, req, pool, slo, grid):
        c = np.array([req.realized[m].carbon_g for m in pool.model_ids])
        return PredictionBundle(pool.model_ids, np.asarray(req.features), np.full(2, 100.0), c, np.full(2, 10.0), slo.margins)


trace = []
for i in range(3000):
    lo = rng.uniform(0.3, 0.7)
    hi = min(1.0, lo + rng.uniform(0.0, 0.6))
    realized = {"cheap": RealizedOutcome(True, 100.0, 1.0, 10), "strong": RealizedOutcome(True, 100.0, 3.0, 10)}
    trace.append(RequestInstance(i, "d", float(i), (lo, hi), realized, 10))

# %%
cfg = RunConfig(PolicyConfig(Variant.GAR_PD, pd=PDConfig(eta=0.05, window_W=100)), SLOConfig(default_floor=0.0))
res = run(trace, pool, constant_grid({"r": 100.0}), FeaturePredictor(), cfg, budget_B_g=2.0)
carbon = np.array([d.realized.carbon_g for d in res.decisions])
lam = np.array(res.lambda_trajectory)

# %%
# The window average overshoots and undershoots: the price reacts to a
# 100-request window, so it lags behind the mix it causes. The long-run
# average still settles close to the budget.
for t in range(200, 3001, 200):
    print(f"t={t:>4}  window avg {carbon[t - 100:t].mean():.2f} g  lambda {lam[t - 1]:.3f}")
print(f"mean after 1000 requests: {carbon[1000:].mean():.3f} g (budget 2.0)")

# %%
# With an unbounded budget the price never leaves zero and every request
# goes to whichever model the quality term prefers.
free = run(trace, pool, constant_grid({"r": 100.0}), FeaturePredictor(), cfg, budget_B_g=float("inf"))
print("max lambda with B=inf:", max(free.lambda_trajectory))
print("strong share:", np.mean([d.chosen_model_id == "strong" for d in free.decisions]).round(3))
