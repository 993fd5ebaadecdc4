"""Routing policies: rule-based and accuracy baselines, GAR and its variants.

Every carbon-minimising selection shares one tie chain: lowest inflated
carbon, then lowest inflated latency, then highest predicted accuracy, then
earliest pool position.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .domain import FallbackReason, ModelPool, PredictionBundle, RealizedOutcome, SLOConfig
from .errors import ConfigError
from .feasibility import FeasibleSet, fallback_index, feasible_set


class Variant(str, Enum):
    LARGEST = "largest"
    SMALLEST = "smallest"
    ACCMAX_UNCONSTRAINED = "accmax_unconstrained"
    ACCMAX_FEASIBLE = "accmax_feasible"
    ORACLE_FEASIBLE = "oracle_feasible"
    GAR = "gar"
    GAR_FIXED = "gar_fixed"
    GAR_EPS = "gar_eps"
    GAR_TARGET = "gar_target"
    GAR_PD = "gar_pd"

    @property
    def constrained(self) -> bool:
        """Whether the policy picks inside the feasible set."""
        return self not in (Variant.LARGEST, Variant.SMALLEST, Variant.ACCMAX_UNCONSTRAINED)


DISPLAY_NAMES = {
    Variant.LARGEST: "Largest LLM",
    Variant.SMALLEST: "Smallest LLM",
    Variant.ACCMAX_UNCONSTRAINED: "AccMax-Unconstrained",
    Variant.ACCMAX_FEASIBLE: "AccMax-Feasible",
    Variant.ORACLE_FEASIBLE: "Oracle-Feasible",
    Variant.GAR: "GAR",
    Variant.GAR_FIXED: "GAR-Fixed",
    Variant.GAR_EPS: "GAR-Eps",
    Variant.GAR_TARGET: "GAR-Target",
    Variant.GAR_PD: "GAR-PD",
}


@dataclass(frozen=True)
class PDConfig:
    alpha_q: float = 1.0
    alpha_ell: float = 1.0
    eta: float = 0.05
    budget_B_g: float | None = None  # None: derived from the run's budget fraction
    window_W: int = 100
    strict_bw: bool = False

    def __post_init__(self):
        if self.alpha_q < 0 or self.alpha_ell < 0:
            raise ConfigError("alpha_q and alpha_ell must be >= 0")
        if not (self.eta > 0):
            raise ConfigError("eta must be > 0")
        if self.budget_B_g is not None and not (self.budget_B_g > 0):
            raise ConfigError("budget_B_g must be > 0")
        if int(self.window_W) != self.window_W or self.window_W < 1:
            raise ConfigError("window_W must be a positive integer")


@dataclass(frozen=True)
class PolicyConfig:
    variant: Variant = Variant.GAR_PD
    carbon_cap_g: float | None = None
    epsilon: float | None = None
    target_floors: Mapping[str, float] | None = None
    # used to tune target floors on the validation split when none are given
    target_accuracy: float | None = None
    pd: PDConfig = field(default_factory=PDConfig)

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        v = self.variant
        if v is Variant.GAR_FIXED and self.carbon_cap_g is None:
            raise ConfigError("gar_fixed requires carbon_cap_g")
        if v is Variant.GAR_EPS:
            if self.epsilon is None:
                raise ConfigError("gar_eps requires epsilon")
            if not (0.0 <= self.epsilon <= 1.0):
                raise ConfigError("epsilon must be in [0, 1]")
        if v is Variant.GAR_TARGET and self.target_floors is None and self.target_accuracy is None:
            raise ConfigError("gar_target requires target_floors or target_accuracy")
        if self.carbon_cap_g is not None and v is not Variant.GAR_FIXED:
            raise ConfigError("carbon_cap_g only applies to gar_fixed")
        if self.epsilon is not None and v is not Variant.GAR_EPS:
            raise ConfigError("epsilon only applies to gar_eps")
        if (self.target_floors is not None or self.target_accuracy is not None) and v is not Variant.GAR_TARGET:
            raise ConfigError("target floors only apply to gar_target")

    @property
    def name(self) -> str:
        return DISPLAY_NAMES[self.variant]


# --- index-level selection -------------------------------------------------


def gar_index(bundle: PredictionBundle, candidates: Sequence[int]) -> int:
    c, ell, p = bundle.c_tilde_g, bundle.ell_tilde_ms, bundle.p_hat
    return min(candidates, key=lambda i: (c[i], ell[i], -p[i], i))


def pd_scores(bundle: PredictionBundle, latency_target_L_ms: float, pd: PDConfig, lam: float, budget_B_g: float):
    carbon_term = np.zeros(len(bundle)) if lam == 0.0 else lam * bundle.c_tilde_g / budget_B_g
    return (
        pd.alpha_q * (1.0 - bundle.p_hat)
        + pd.alpha_ell * bundle.ell_tilde_ms / latency_target_L_ms
        + carbon_term
    )


def pd_index(bundle, candidates, latency_target_L_ms, pd, lam, budget_B_g) -> tuple[int, np.ndarray]:
    s = pd_scores(bundle, latency_target_L_ms, pd, lam, budget_B_g)
    c, ell, p = bundle.c_tilde_g, bundle.ell_tilde_ms, bundle.p_hat
    best = min(candidates, key=lambda i: (s[i], c[i], ell[i], -p[i], i))
    return best, s


def accmax_index(bundle: PredictionBundle, candidates: Sequence[int]) -> int:
    p = bundle.p_hat
    return min(candidates, key=lambda i: (-p[i], i))


def eps_candidates(bundle: PredictionBundle, candidates: Sequence[int], epsilon: float) -> list[int]:
    best = max(bundle.p_hat[i] for i in candidates)
    return [i for i in candidates if bundle.p_hat[i] >= best - epsilon]


# --- public selection API (feasible set in, model id out) ------------------


def _require(feasible: FeasibleSet):
    if not feasible:
        raise ValueError("empty feasible set: use fallback_select")


def select_gar(feasible: FeasibleSet, bundle: PredictionBundle) -> str:
    _require(feasible)
    return bundle.model_ids[gar_index(bundle, feasible.indices)]


def select_gar_fixed(feasible: FeasibleSet, bundle: PredictionBundle, cap: float) -> tuple[str, bool]:
    """Lowest-carbon model under the cap; without the cap if none qualifies."""
    _require(feasible)
    capped = [i for i in feasible.indices if bundle.c_tilde_g[i] <= cap]
    if capped:
        return bundle.model_ids[gar_index(bundle, capped)], False
    return bundle.model_ids[gar_index(bundle, feasible.indices)], True


def select_gar_eps(feasible: FeasibleSet, bundle: PredictionBundle, epsilon: float) -> str:
    _require(feasible)
    return bundle.model_ids[gar_index(bundle, eps_candidates(bundle, feasible.indices, epsilon))]


def target_index(bundle, candidates, floor, slo, dataset_id) -> tuple[int, bool]:
    restricted = [i for i in candidates if bundle.p_hat[i] >= floor]
    if restricted:
        return gar_index(bundle, restricted), False
    return fallback_index(bundle, slo, dataset_id, floor=floor, candidates=candidates), True


def select_gar_target(
    feasible: FeasibleSet,
    bundle: PredictionBundle,
    floors: Mapping[str, float],
    dataset_id: str,
    slo: SLOConfig,
) -> tuple[str, bool]:
    """Lowest-carbon feasible model with ``p_hat >= floors[dataset_id]``.

    When the target floor empties the set, the minimum-violation rule picks
    inside the feasible set with the target floor as the accuracy reference.
    """
    _require(feasible)
    i, fell_back = target_index(bundle, feasible.indices, floors[dataset_id], slo, dataset_id)
    return bundle.model_ids[i], fell_back


def pd_score(bundle: PredictionBundle, model_id: str, slo: SLOConfig, pd: PDConfig, lam: float) -> float:
    i = bundle.model_ids.index(model_id)
    if pd.budget_B_g is None:
        raise ConfigError("pd_score requires a resolved budget_B_g")
    carbon = 0.0 if lam == 0.0 else lam * bundle.c_tilde_g[i] / pd.budget_B_g
    return float(
        pd.alpha_q * (1.0 - bundle.p_hat[i])
        + pd.alpha_ell * bundle.ell_tilde_ms[i] / slo.latency_target_L_ms
        + carbon
    )


def select_pd(feasible: FeasibleSet, bundle: PredictionBundle, slo: SLOConfig, pd: PDConfig, lam: float) -> str:
    _require(feasible)
    if pd.budget_B_g is None:
        raise ConfigError("select_pd requires a resolved budget_B_g")
    i, _ = pd_index(bundle, feasible.indices, slo.latency_target_L_ms, pd, lam, pd.budget_B_g)
    return bundle.model_ids[i]


def oracle_index(candidates: Sequence[int], realized_carbon: Sequence[float]) -> int:
    return min(candidates, key=lambda i: (realized_carbon[i], i))


def select_baseline(
    variant,
    feasible: FeasibleSet,
    bundle: PredictionBundle,
    pool: ModelPool,
    realized: Mapping[str, RealizedOutcome] | None = None,
) -> str:
    variant = Variant(variant)
    if variant is Variant.LARGEST:
        return pool.largest()
    if variant is Variant.SMALLEST:
        return pool.smallest()
    if variant is Variant.ACCMAX_UNCONSTRAINED:
        return bundle.model_ids[accmax_index(bundle, range(len(bundle)))]
    _require(feasible)
    if variant is Variant.ACCMAX_FEASIBLE:
        return bundle.model_ids[accmax_index(bundle, feasible.indices)]
    if variant is Variant.ORACLE_FEASIBLE:
        if realized is None:
            raise ValueError("oracle_feasible needs realized outcomes")
        carbon = [realized[m].carbon_g for m in bundle.model_ids]
        return bundle.model_ids[oracle_index(feasible.indices, carbon)]
    raise ValueError(f"{variant.value} is not a baseline")


# --- engine-facing dispatcher ------------------------------------------------


@dataclass(frozen=True)
class Choice:
    index: int
    used_fallback: bool = False
    reason: FallbackReason = FallbackReason.NONE
    scores: np.ndarray | None = None


def choose(
    config: PolicyConfig,
    bundle: PredictionBundle,
    feasible: FeasibleSet,
    slo: SLOConfig,
    dataset_id: str,
    pool: ModelPool,
    realized: Mapping[str, RealizedOutcome],
    lam: float = 0.0,
    budget_B_g: float | None = None,
    target_floors: Mapping[str, float] | None = None,
) -> Choice:
    """One routing choice, including the empty-feasible-set fallback."""
    v = config.variant
    if v is Variant.LARGEST:
        return Choice(pool.index(pool.largest()))
    if v is Variant.SMALLEST:
        return Choice(pool.index(pool.smallest()))
    if v is Variant.ACCMAX_UNCONSTRAINED:
        return Choice(accmax_index(bundle, range(len(bundle))))
    if not feasible:
        # PD scores are still reported for the audit trail
        scores = None
        if v is Variant.GAR_PD:
            scores = pd_scores(bundle, slo.latency_target_L_ms, config.pd, lam, budget_B_g)
        return Choice(fallback_index(bundle, slo, dataset_id), True, FallbackReason.EMPTY_FEASIBLE, scores)
    cand = feasible.indices
    if v is Variant.ACCMAX_FEASIBLE:
        return Choice(accmax_index(bundle, cand))
    if v is Variant.ORACLE_FEASIBLE:
        return Choice(oracle_index(cand, [realized[m].carbon_g for m in bundle.model_ids]))
    if v is Variant.GAR:
        return Choice(gar_index(bundle, cand))
    if v is Variant.GAR_FIXED:
        capped = [i for i in cand if bundle.c_tilde_g[i] <= config.carbon_cap_g]
        if capped:
            return Choice(gar_index(bundle, capped))
        return Choice(gar_index(bundle, cand), True, FallbackReason.EMPTY_AFTER_CAP)
    if v is Variant.GAR_EPS:
        return Choice(gar_index(bundle, eps_candidates(bundle, cand, config.epsilon)))
    if v is Variant.GAR_TARGET:
        floors = target_floors if target_floors is not None else config.target_floors
        floor = floors.get(dataset_id, slo.floor_for(dataset_id))
        i, fell_back = target_index(bundle, cand, floor, slo, dataset_id)
        return Choice(i, fell_back, FallbackReason.EMPTY_AFTER_CAP if fell_back else FallbackReason.NONE)
    if v is Variant.GAR_PD:
        i, scores = pd_index(bundle, cand, slo.latency_target_L_ms, config.pd, lam, budget_B_g)
        return Choice(i, scores=scores)
    raise ValueError(f"unhandled variant {v}")


# --- GAR-Target floor tuning ---------------------------------------------------


@dataclass(frozen=True)
class TargetTuning:
    floors: dict[str, float]
    achieved: dict[str, float]
    shortfall: dict[str, float]  # datasets whose target was not reached
    probes: dict[str, list[tuple[float, float]]]


class _TargetTable:
    """Vectorised GAR-Target routing over one dataset's validation items."""

    def __init__(self, items, slo: SLOConfig, dataset_id: str):
        n, k = len(items), len(items[0][0])
        self.P = np.array([b.p_hat for b, _ in items], dtype=float).reshape(n, k)
        self.Y = np.array([list(c) for _, c in items], dtype=bool).reshape(n, k)
        self.feas = np.zeros((n, k), dtype=bool)
        self.rank = np.full((n, k), k, dtype=int)
        self.fixed = np.full(n, -1, dtype=int)  # fallback pick when the feasible set is empty
        for r, (b, _) in enumerate(items):
            fs = feasible_set(b, slo, dataset_id)
            if fs:
                idx = list(fs.indices)
                self.feas[r, idx] = True
                order = sorted(idx, key=lambda i: (b.c_tilde_g[i], b.ell_tilde_ms[i], -b.p_hat[i], i))
                self.rank[r, order] = np.arange(len(order))
            else:
                self.fixed[r] = fallback_index(b, slo, dataset_id)

    def choices(self, floor: float) -> np.ndarray:
        ok = self.feas & (self.P >= floor)
        gar = np.where(ok, self.rank, self.rank.shape[1] + 1).argmin(axis=1)
        # target fallback inside the feasible set: least deficit, then pool order
        deficit = np.where(self.feas, np.maximum(0.0, floor - self.P), np.inf)
        fb = (deficit == deficit.min(axis=1, keepdims=True)).argmax(axis=1)
        pick = np.where(ok.any(axis=1), gar, fb)
        return np.where(self.fixed >= 0, self.fixed, pick)

    def accuracy(self, floor: float) -> float:
        c = self.choices(floor)
        return float(self.Y[np.arange(c.size), c].mean())

    def step_points(self) -> list[float]:
        """Floors at which the routing can change, plus the ends of [0, 1]."""
        return sorted({0.0, 1.0} | set(self.P[self.feas].tolist()))


def tune_floors_from_bundles(
    items_by_dataset: Mapping[str, Sequence[tuple[PredictionBundle, Sequence[bool]]]],
    slo: SLOConfig,
    desired_accuracy: float,
    iterations: int = 24,
) -> TargetTuning:
    """Bisect each dataset's target floor on realized validation accuracy.

    Accuracy is a step function of the floor and need not be monotone, so the
    result is the smallest probed floor reaching ``desired_accuracy``. If no
    probe reaches it, every step point is scanned and the accuracy-maximising
    floor (smallest on ties) is returned with the shortfall.
    """
    floors, achieved, shortfall, probes = {}, {}, {}, {}
    for d, items in items_by_dataset.items():
        if not items:
            raise ValueError(f"validation split has no requests for dataset {d!r}")
        table = _TargetTable(items, slo, d)
        seen: list[tuple[float, float]] = []

        def acc(f):
            a = table.accuracy(f)
            seen.append((f, a))
            return a

        if acc(0.0) < desired_accuracy:
            lo, hi = 0.0, 1.0
            acc(1.0)
            for _ in range(iterations):
                mid = (lo + hi) / 2.0
                if acc(mid) >= desired_accuracy:
                    hi = mid
                else:
                    lo = mid
        reaching = [f for f, a in seen if a >= desired_accuracy]
        if reaching:
            floors[d] = min(reaching)
            achieved[d] = next(a for f, a in seen if f == floors[d])
        else:
            scan = [(f, table.accuracy(f)) for f in table.step_points()]
            best = max(a for _, a in scan)
            floors[d] = min(f for f, a in scan if a == best)
            achieved[d] = best
            shortfall[d] = desired_accuracy - best
        probes[d] = seen
    return TargetTuning(floors, achieved, shortfall, probes)


def tune_target_floors(validation, estimators, pool: ModelPool, grid, slo: SLOConfig, desired_accuracy: float) -> TargetTuning:
    """Per-dataset target floors matching ``desired_accuracy`` on ``validation``."""
    from .estimators import predict

    if not validation:
        raise ValueError("empty validation split")
    items: dict[str, list] = {}
    for req in validation:
        bundle = predict(estimators, req, pool, slo, grid)
        correct = [req.realized[m].correct for m in pool.model_ids]
        items.setdefault(req.dataset_id, []).append((bundle, correct))
    return tune_floors_from_bundles(items, slo, desired_accuracy)


def parse_variant(name: str) -> Variant:
    try:
        return Variant(name.replace("-", "_").lower())
    except ValueError:
        raise ConfigError(f"unknown policy {name!r}; choose from {', '.join(v.value for v in Variant)}") from None

