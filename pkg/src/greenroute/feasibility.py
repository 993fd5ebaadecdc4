"""Feasible-set construction and minimum-violation fallback."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .domain import PredictionBundle, SLOConfig


@dataclass(frozen=True, eq=False)
class FeasibleSet:
    """Feasible models (pool order) plus per-model violation amounts."""

    model_ids: tuple[str, ...]
    indices: tuple[int, ...]
    accuracy_deficit: np.ndarray
    latency_excess: np.ndarray

    def __len__(self):
        return len(self.indices)

    def __bool__(self):
        return bool(self.indices)

    def __contains__(self, model_id):
        return model_id in self.model_ids


def gate_latency(bundle: PredictionBundle, slo: SLOConfig) -> np.ndarray:
    """Latency estimate used by the SLO gate (margin-inflated unless disabled)."""
    return bundle.ell_tilde_ms if slo.latency_margin_in_gate else bundle.ell_p95_hat_ms


def violations(bundle: PredictionBundle, slo: SLOConfig, dataset_id: str, floor: float | None = None):
    tau = slo.floor_for(dataset_id) if floor is None else floor
    deficit = np.maximum(0.0, tau - bundle.p_hat)
    excess = np.maximum(0.0, gate_latency(bundle, slo) - slo.latency_target_L_ms)
    return deficit, excess


def feasible_set(bundle: PredictionBundle, slo: SLOConfig, dataset_id: str) -> FeasibleSet:
    """Models with ``p_hat >= tau_d`` and gated latency ``<= L`` (both inclusive)."""
    tau = slo.floor_for(dataset_id)
    ok = (bundle.p_hat >= tau) & (gate_latency(bundle, slo) <= slo.latency_target_L_ms)
    idx = tuple(int(i) for i in np.flatnonzero(ok))
    deficit, excess = violations(bundle, slo, dataset_id, tau)
    return FeasibleSet(tuple(bundle.model_ids[i] for i in idx), idx, deficit, excess)


def full_set(bundle: PredictionBundle, slo: SLOConfig, dataset_id: str) -> FeasibleSet:
    """Every pool model, as used when the gates are ablated."""
    deficit, excess = violations(bundle, slo, dataset_id)
    idx = tuple(range(len(bundle)))
    return FeasibleSet(tuple(bundle.model_ids), idx, deficit, excess)


def fallback_index(
    bundle: PredictionBundle,
    slo: SLOConfig,
    dataset_id: str,
    floor: float | None = None,
    candidates: Sequence[int] | None = None,
) -> int:
    """Lexicographic minimum of (accuracy deficit, latency excess, pool index)."""
    deficit, excess = violations(bundle, slo, dataset_id, floor)
    cand = range(len(bundle)) if candidates is None else candidates
    return min(cand, key=lambda i: (deficit[i], excess[i], i))


def fallback_select(bundle: PredictionBundle, slo: SLOConfig, dataset_id: str, floor: float | None = None) -> str:
    return bundle.model_ids[fallback_index(bundle, slo, dataset_id, floor)]
