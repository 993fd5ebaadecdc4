"""Core data types: model pool, trace requests, predictions, SLOs, decisions.

Units are fixed throughout the package: energy in Wh, carbon in grams CO2,
grid intensity in gCO2/kWh, latency in milliseconds, time in seconds.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DataError

_SIZE_RE = re.compile(r"^\s*([0-9]*\.?[0-9]+)\s*([KMBT]?)\s*$", re.IGNORECASE)
_SIZE_SCALE = {"": 1.0, "K": 1e3, "M": 1e6, "B": 1e9, "T": 1e12}


def parse_size_label(label: str) -> float:
    """Parameter count from a label like ``"7B"``, ``"350M"`` or ``"1.5T"``."""
    m = _SIZE_RE.match(label)
    if m is None:
        raise DataError(f"cannot parse model size label {label!r}")
    return float(m.group(1)) * _SIZE_SCALE[m.group(2).upper()]


@dataclass(frozen=True)
class ModelProfile:
    model_id: str
    size_label: str
    region: str
    energy_base_alpha: float  # Wh per request
    energy_per_token_beta: float  # Wh per 1k tokens
    nominal_latency_ms: float = 500.0

    def __post_init__(self):
        if not self.model_id:
            raise DataError("model_id must be a nonempty string")
        if not (self.energy_base_alpha >= 0):
            raise DataError(f"{self.model_id}: energy_base_alpha must be >= 0")
        if not (self.energy_per_token_beta > 0):
            raise DataError(f"{self.model_id}: energy_per_token_beta must be > 0")
        if not (self.nominal_latency_ms > 0):
            raise DataError(f"{self.model_id}: nominal_latency_ms must be > 0")

    @property
    def parameter_count(self) -> float:
        return parse_size_label(self.size_label)


@dataclass(frozen=True)
class ModelPool:
    """Ordered, nonempty pool. Order is the final tie-breaker everywhere."""

    models: tuple[ModelProfile, ...]

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))
        if not self.models:
            raise DataError("model pool must be nonempty")
        ids = [m.model_id for m in self.models]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            raise DataError(f"duplicate model_id in pool: {', '.join(dupes)}")
        object.__setattr__(self, "_index", {mid: i for i, mid in enumerate(ids)})

    def __len__(self):
        return len(self.models)

    def __iter__(self):
        return iter(self.models)

    def __getitem__(self, model_id: str) -> ModelProfile:
        return self.models[self.index(model_id)]

    @property
    def model_ids(self) -> tuple[str, ...]:
        return tuple(m.model_id for m in self.models)

    def index(self, model_id: str) -> int:
        try:
            return self._index[model_id]
        except KeyError:
            raise DataError(f"unknown model_id {model_id!r}") from None

    def largest(self) -> str:
        """Model with the most parameters; ties go to the earliest in pool order."""
        sizes = [m.parameter_count for m in self.models]
        return self.models[int(np.argmax(sizes))].model_id

    def smallest(self) -> str:
        sizes = [m.parameter_count for m in self.models]
        return self.models[int(np.argmin(sizes))].model_id


@dataclass(frozen=True)
class RealizedOutcome:
    correct: bool
    latency_ms: float
    carbon_g: float
    output_tokens: int = 0


@dataclass(frozen=True)
class RequestInstance:
    """One trace request with counterfactual outcomes for every pool model.

    ``prompt_tokens`` is known before routing and feeds the token estimate;
    total tokens for a model are ``prompt_tokens + realized[m].output_tokens``.
    """

    request_index: int
    dataset_id: str
    arrival_time: float
    features: tuple[float, ...]
    realized: Mapping[str, RealizedOutcome]
    prompt_tokens: int = 0

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(float(v) for v in self.features))
        object.__setattr__(self, "realized", MappingProxyType(dict(self.realized)))

    def total_tokens(self, model_id: str) -> int:
        return self.prompt_tokens + self.realized[model_id].output_tokens


@dataclass(frozen=True)
class SafetyMargins:
    gamma_c: float = 0.1
    gamma_ell: float = 0.05

    def __post_init__(self):
        if self.gamma_c < 0 or self.gamma_ell < 0:
            raise ConfigError("safety margins must be >= 0")


@dataclass(frozen=True, eq=False)
class PredictionBundle:
    """Per-model pre-route estimates for a single request, in pool order.

    Margin-inflated carbon and latency are derived, never stored
    independently, so ``c_tilde == (1 + gamma_c) * c_hat`` always holds.
    """

    model_ids: tuple[str, ...]
    p_hat: np.ndarray
    ell_p95_hat_ms: np.ndarray
    c_hat_g: np.ndarray
    t_hat_tokens: np.ndarray
    margins: SafetyMargins = field(default_factory=SafetyMargins)

    def __post_init__(self):
        k = len(self.model_ids)
        for name in ("p_hat", "ell_p95_hat_ms", "c_hat_g", "t_hat_tokens"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (k,):
                raise DataError(f"{name} must have shape ({k},), got {arr.shape}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any((self.p_hat < 0) | (self.p_hat > 1)) or np.any(np.isnan(self.p_hat)):
            raise DataError("p_hat must lie in [0, 1]")
        if np.any(self.c_hat_g < 0) or np.any(self.ell_p95_hat_ms < 0) or np.any(self.t_hat_tokens < 0):
            raise DataError("carbon, latency and token estimates must be >= 0")
        c_tilde = (1.0 + self.margins.gamma_c) * self.c_hat_g
        ell_tilde = (1.0 + self.margins.gamma_ell) * self.ell_p95_hat_ms
        c_tilde.setflags(write=False)
        ell_tilde.setflags(write=False)
        object.__setattr__(self, "c_tilde_g", c_tilde)
        object.__setattr__(self, "ell_tilde_ms", ell_tilde)

    def __len__(self):
        return len(self.model_ids)

    def replace(self, **changes) -> "PredictionBundle":
        kw = dict(
            model_ids=self.model_ids,
            p_hat=self.p_hat,
            ell_p95_hat_ms=self.ell_p95_hat_ms,
            c_hat_g=self.c_hat_g,
            t_hat_tokens=self.t_hat_tokens,
            margins=self.margins,
        )
        kw.update(changes)
        return PredictionBundle(**kw)

    def as_dict(self, i: int) -> dict:
        return {
            "p_hat": float(self.p_hat[i]),
            "ell_p95_hat_ms": float(self.ell_p95_hat_ms[i]),
            "ell_tilde_ms": float(self.ell_tilde_ms[i]),
            "c_hat_g": float(self.c_hat_g[i]),
            "c_tilde_g": float(self.c_tilde_g[i]),
            "t_hat_tokens": float(self.t_hat_tokens[i]),
        }


@dataclass(frozen=True)
class SLOConfig:
    accuracy_floor: Mapping[str, float] = field(default_factory=dict)
    latency_target_L_ms: float = 1500.0
    margins: SafetyMargins = field(default_factory=SafetyMargins)
    default_floor: float | None = None
    # off reproduces the plain latency estimate in the feasibility check
    latency_margin_in_gate: bool = True

    def __post_init__(self):
        object.__setattr__(self, "accuracy_floor", MappingProxyType(dict(self.accuracy_floor)))
        for d, tau in self.accuracy_floor.items():
            if not (0.0 <= tau <= 1.0):
                raise ConfigError(f"accuracy floor for {d!r} must be in [0, 1], got {tau}")
        if self.default_floor is not None and not (0.0 <= self.default_floor <= 1.0):
            raise ConfigError("default_floor must be in [0, 1]")
        if not (self.latency_target_L_ms > 0):
            raise ConfigError("latency_target_L_ms must be > 0")

    def floor_for(self, dataset_id: str) -> float:
        tau = self.accuracy_floor.get(dataset_id, self.default_floor)
        if tau is None:
            raise ConfigError(f"no accuracy floor configured for dataset {dataset_id!r}")
        return tau

    def with_floors(self, floors: Mapping[str, float]) -> "SLOConfig":
        return SLOConfig(
            accuracy_floor=floors,
            latency_target_L_ms=self.latency_target_L_ms,
            margins=self.margins,
            default_floor=self.default_floor,
            latency_margin_in_gate=self.latency_margin_in_gate,
        )


class FallbackReason(str, Enum):
    NONE = "none"
    EMPTY_FEASIBLE = "empty_feasible"
    EMPTY_AFTER_CAP = "empty_after_cap"


@dataclass(frozen=True)
class RoutingDecision:
    request_index: int
    dataset_id: str
    chosen_model_id: str
    feasible_model_ids: tuple[str, ...]
    used_fallback: bool
    fallback_reason: FallbackReason
    lambda_snapshot: float
    predicted: Mapping[str, float]
    realized: RealizedOutcome
    score_per_model: Mapping[str, float] | None = None
    # False for baselines that ignore the feasible set (Largest, Smallest, AccMax-Unconstrained)
    constrained: bool = True

    def __post_init__(self):
        if (
            self.constrained
            and not self.used_fallback
            and self.chosen_model_id not in self.feasible_model_ids
        ):
            raise ValueError(
                f"request {self.request_index}: {self.chosen_model_id} chosen without "
                "fallback but is not in the feasible set"
            )

    @property
    def chosen_feasible(self) -> bool:
        return self.chosen_model_id in self.feasible_model_ids

    def to_json_dict(self) -> dict:
        return {
            "request_index": self.request_index,
            "dataset_id": self.dataset_id,
            "chosen_model_id": self.chosen_model_id,
            "feasible_model_ids": list(self.feasible_model_ids),
            "used_fallback": self.used_fallback,
            "fallback_reason": self.fallback_reason.value,
            "lambda_snapshot": self.lambda_snapshot,
            "predicted": dict(self.predicted),
            "realized": {
                "correct": self.realized.correct,
                "latency_ms": self.realized.latency_ms,
                "carbon_g": self.realized.carbon_g,
                "output_tokens": self.realized.output_tokens,
            },
            "score_per_model": None if self.score_per_model is None else dict(self.score_per_model),
            "constrained": self.constrained,
        }


@dataclass(frozen=True)
class Violation:
    request_index: int
    kind: str
    model_id: str | None = None
    detail: str = ""

    def __str__(self):
        who = f" [{self.model_id}]" if self.model_id else ""
        return f"request {self.request_index}{who}: {self.kind} {self.detail}".rstrip()


def validate_trace(trace: Sequence[RequestInstance], pool: ModelPool) -> list[Violation]:
    """Report every structural defect in ``trace``; an empty list means well-formed."""
    out: list[Violation] = []
    prev_time = -math.inf
    for pos, req in enumerate(trace):
        t = req.request_index
        if t != pos:
            out.append(Violation(t, "index_mismatch", detail=f"expected {pos}"))
        for mid in pool.model_ids:
            outcome = req.realized.get(mid)
            if outcome is None:
                out.append(Violation(t, "missing_realized", mid))
            else:
                if not (outcome.latency_ms > 0):
                    out.append(Violation(t, "nonpositive_latency", mid, f"{outcome.latency_ms}"))
                if not (outcome.carbon_g >= 0):
                    out.append(Violation(t, "negative_carbon", mid, f"{outcome.carbon_g}"))
                if outcome.output_tokens < 0:
                    out.append(Violation(t, "negative_tokens", mid, f"{outcome.output_tokens}"))
        extra = set(req.realized) - set(pool.model_ids)
        for mid in sorted(extra):
            out.append(Violation(t, "unknown_model", mid))
        if req.arrival_time < prev_time:
            out.append(
                Violation(t, "time_regression", detail=f"{req.arrival_time} < {prev_time}")
            )
        prev_time = max(prev_time, req.arrival_time)
    return out


def dataset_ids(trace: Iterable[RequestInstance]) -> list[str]:
    """Distinct dataset ids in first-appearance order."""
    seen: dict[str, None] = {}
    for req in trace:
        seen.setdefault(req.dataset_id, None)
    return list(seen)
