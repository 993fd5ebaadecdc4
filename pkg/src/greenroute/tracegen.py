"""Seeded synthetic counterfactual traces.

Each request draws a latent difficulty ``z``; model ``m`` answers correctly
when ``rho*z + sqrt(1-rho^2)*e_m < Phi^-1(p[m, d])``, so the marginal
accuracy of every (model, dataset) pair is exactly ``p[m, d]`` while hard
requests stay hard for the whole pool. Latencies are lognormal around a
token-dependent mean; realized carbon uses the same energy formula as the
carbon estimator so a perfectly informed estimator is exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.special import ndtri

from .domain import ModelPool, ModelProfile, RealizedOutcome, RequestInstance
from .errors import ConfigError
from .estimators import carbon_estimate
from .grid import GridIntensitySeries, intensity_at

DATASETS = ("mmlu", "hellaswag", "gsm8k", "winogrande", "squad", "arc")
GRID_PATTERNS = ("constant", "diurnal_sine", "two_region_alternating")
DAY_S = 86400.0


def default_pool() -> list[ModelProfile]:
    """Five-model pool with measured per-1k-token energies (7B to 70B)."""
    return [
        ModelProfile("mistral-7b-instruct", "7B", "grid-a", 0.0, 2.2, 650.0),
        ModelProfile("llama-3.1-8b-instruct", "8B", "grid-a", 0.0, 2.5, 600.0),
        ModelProfile("phi-3-medium-14b-instruct", "14B", "grid-b", 0.0, 4.0, 1150.0),
        ModelProfile("qwen-2.5-14b-instruct", "14B", "grid-b", 0.0, 4.5, 850.0),
        ModelProfile("llama-3.3-70b-versatile", "70B", "grid-b", 0.0, 12.0, 420.0),
    ]


# rows: models in default_pool order; columns: DATASETS
_DEFAULT_CORRECTNESS = np.array([
    [0.56, 0.62, 0.34, 0.66, 0.70, 0.64],
    [0.60, 0.60, 0.50, 0.62, 0.86, 0.68],
    [0.70, 0.66, 0.90, 0.66, 0.70, 0.78],
    [0.72, 0.70, 0.80, 0.70, 0.72, 0.76],
    [0.88, 0.86, 0.74, 0.84, 0.74, 0.90],
])
_DEFAULT_VERBOSITY = (1.0, 1.05, 1.15, 1.1, 1.0)


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    prompt_tokens_mean: float
    output_tokens_mean: float
    weight: float = 1.0


def default_datasets() -> list[DatasetSpec]:
    return [
        DatasetSpec("mmlu", 250, 120),
        DatasetSpec("hellaswag", 180, 80),
        DatasetSpec("gsm8k", 150, 260),
        DatasetSpec("winogrande", 60, 40),
        DatasetSpec("squad", 400, 60),
        DatasetSpec("arc", 120, 90),
    ]


@dataclass(frozen=True)
class RegionGrid:
    mean: float = 400.0
    amplitude: float = 0.15  # relative swing of the diurnal sine / alternation
    phase: float = 0.0  # radians


def default_regions() -> dict[str, RegionGrid]:
    return {"grid-a": RegionGrid(420.0, 0.15, 0.0), "grid-b": RegionGrid(380.0, 0.15, math.pi / 2)}


@dataclass(frozen=True)
class GenSpec:
    n_requests: int = 7200
    datasets: tuple[DatasetSpec, ...] = field(default_factory=lambda: tuple(default_datasets()))
    pool: tuple[ModelProfile, ...] = field(default_factory=lambda: tuple(default_pool()))
    # model_id -> dataset -> probability of a correct answer
    correctness: Mapping[str, Mapping[str, float]] | None = None
    verbosity: Mapping[str, float] | None = None
    difficulty_correlation: float = 0.6
    difficulty_feature_noise: float = 0.25
    latency_sigma: float = 0.3
    latency_ref_tokens: float = 400.0
    prompt_sigma: float = 0.3
    output_sigma_shared: float = 0.3
    output_sigma_model: float = 0.1
    mean_interarrival_s: float = 30.0
    grid_pattern: str = "diurnal_sine"
    grid_regions: Mapping[str, RegionGrid] = field(default_factory=default_regions)
    grid_step_s: float = 3600.0
    alternation_period_s: float = 3 * 3600.0
    balanced_datasets: bool = True
    seed: int = 42

    def __post_init__(self):
        object.__setattr__(self, "datasets", tuple(self.datasets))
        object.__setattr__(self, "pool", tuple(self.pool))
        if self.correctness is None:
            if [m.model_id for m in self.pool] != [m.model_id for m in default_pool()] or [
                d.name for d in self.datasets
            ] != list(DATASETS):
                raise ConfigError("correctness probabilities are required for a non-default pool or dataset list")
            object.__setattr__(
                self,
                "correctness",
                {m.model_id: dict(zip(DATASETS, row)) for m, row in zip(self.pool, _DEFAULT_CORRECTNESS.tolist())},
            )
        if self.verbosity is None:
            defaults = dict(zip([m.model_id for m in default_pool()], _DEFAULT_VERBOSITY))
            object.__setattr__(self, "verbosity", {m.model_id: defaults.get(m.model_id, 1.0) for m in self.pool})
        self.validate()

    def validate(self):
        if self.n_requests < 0 or int(self.n_requests) != self.n_requests:
            raise ConfigError("n_requests must be a nonnegative integer")
        if not self.datasets:
            raise ConfigError("at least one dataset is required")
        ModelPool(self.pool)
        names = [d.name for d in self.datasets]
        if len(set(names)) != len(names):
            raise ConfigError("dataset names must be unique")
        for d in self.datasets:
            if d.prompt_tokens_mean < 0 or d.output_tokens_mean < 0 or not (d.weight > 0):
                raise ConfigError(f"dataset {d.name}: token means must be >= 0 and weight > 0")
        for m in self.pool:
            row = self.correctness.get(m.model_id)
            if row is None:
                raise ConfigError(f"no correctness probabilities for {m.model_id}")
            for d in names:
                p = row.get(d)
                if p is None or not (0.0 <= p <= 1.0):
                    raise ConfigError(f"correctness[{m.model_id}][{d}] must be in [0, 1]")
            if not (self.verbosity.get(m.model_id, 1.0) > 0):
                raise ConfigError(f"verbosity for {m.model_id} must be > 0")
        if not (-1.0 < self.difficulty_correlation < 1.0):
            raise ConfigError("difficulty_correlation must be in (-1, 1)")
        for name in ("latency_sigma", "prompt_sigma", "output_sigma_shared", "output_sigma_model", "difficulty_feature_noise"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if not (self.mean_interarrival_s > 0) or not (self.latency_ref_tokens > 0) or not (self.grid_step_s > 0):
            raise ConfigError("interarrival, latency_ref_tokens and grid_step_s must be > 0")
        if self.grid_pattern not in GRID_PATTERNS:
            raise ConfigError(f"grid_pattern must be one of {GRID_PATTERNS}")
        for m in self.pool:
            if m.region not in self.grid_regions:
                raise ConfigError(f"no grid parameters for region {m.region!r}")
        for region, g in self.grid_regions.items():
            if not (g.mean > 0) or not (0.0 <= g.amplitude < 1.0):
                raise ConfigError(f"region {region!r}: grid mean must be > 0 and amplitude in [0, 1)")

    # --- JSON spec files ---------------------------------------------------

    def to_json(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["datasets"] = [asdict(d) for d in self.datasets]
        out["pool"] = [asdict(m) for m in self.pool]
        out["correctness"] = {k: dict(v) for k, v in self.correctness.items()}
        out["verbosity"] = dict(self.verbosity)
        out["grid_regions"] = {k: asdict(v) for k, v in self.grid_regions.items()}
        return out

    @classmethod
    def from_json(cls, obj: Mapping) -> "GenSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown GenSpec keys: {sorted(unknown)}")
        kw = dict(obj)
        try:
            if "datasets" in kw:
                kw["datasets"] = tuple(DatasetSpec(**d) for d in kw["datasets"])
            if "pool" in kw:
                kw["pool"] = tuple(ModelProfile(**m) for m in kw["pool"])
            if "grid_regions" in kw:
                kw["grid_regions"] = {k: RegionGrid(**v) for k, v in kw["grid_regions"].items()}
        except TypeError as exc:
            raise ConfigError(f"malformed GenSpec: {exc}") from None
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "GenSpec":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def make_grid(spec: GenSpec, horizon_s: float) -> GridIntensitySeries:
    regions = sorted({m.region for m in spec.pool})
    samples = {}
    for r in regions:
        g = spec.grid_regions[r]
        if spec.grid_pattern == "constant":
            samples[r] = (np.array([0.0]), np.array([g.mean]))
            continue
        ts = np.arange(0.0, max(horizon_s, 0.0) + spec.grid_step_s, spec.grid_step_s)
        if spec.grid_pattern == "diurnal_sine":
            vals = g.mean * (1.0 + g.amplitude * np.sin(2.0 * math.pi * ts / DAY_S + g.phase))
        else:
            # regions in sorted order alternate high/low each period
            k = regions.index(r)
            phase = (np.floor(ts / spec.alternation_period_s).astype(int) + k) % 2
            vals = g.mean * np.where(phase == 0, 1.0 + g.amplitude, 1.0 - g.amplitude)
        samples[r] = (ts, vals)
    return GridIntensitySeries(samples)


def _lognormal_unit(rng, sigma, size):
    """Mean-one lognormal multipliers."""
    if sigma == 0:
        return np.ones(size)
    return np.exp(sigma * rng.standard_normal(size) - 0.5 * sigma**2)


def generate(spec: GenSpec) -> tuple[list[RequestInstance], GridIntensitySeries]:
    """Draw a counterfactual trace and the grid series it was priced with."""
    rng = np.random.default_rng(spec.seed)
    n = spec.n_requests
    K = len(spec.pool)
    names = [d.name for d in spec.datasets]
    if spec.balanced_datasets:
        ds_idx = np.resize(np.arange(len(names)), n)
        rng.shuffle(ds_idx)
    else:
        w = np.array([d.weight for d in spec.datasets], dtype=float)
        ds_idx = rng.choice(len(names), size=n, p=w / w.sum())
    arrivals = np.cumsum(rng.exponential(spec.mean_interarrival_s, size=n)) if n else np.zeros(0)
    grid = make_grid(spec, float(arrivals[-1]) if n else 0.0)

    prompt_mean = np.array([spec.datasets[i].prompt_tokens_mean for i in ds_idx])
    out_mean = np.array([spec.datasets[i].output_tokens_mean for i in ds_idx])
    prompt = np.maximum(1, np.rint(prompt_mean * _lognormal_unit(rng, spec.prompt_sigma, n))).astype(int)
    shared = _lognormal_unit(rng, spec.output_sigma_shared, n)
    verb = np.array([spec.verbosity[m.model_id] for m in spec.pool])
    per_model = _lognormal_unit(rng, spec.output_sigma_model, (n, K))
    output = np.maximum(1, np.rint(out_mean[:, None] * shared[:, None] * verb[None, :] * per_model)).astype(int)
    total = prompt[:, None] + output

    rho = spec.difficulty_correlation
    z = rng.standard_normal(n)
    e = rng.standard_normal((n, K))
    probs = np.array([[spec.correctness[m.model_id][names[i]] for m in spec.pool] for i in ds_idx]).reshape(n, K)
    with np.errstate(divide="ignore"):
        thresh = ndtri(probs)
    correct = (rho * z[:, None] + math.sqrt(1.0 - rho**2) * e) < thresh

    nominal = np.array([m.nominal_latency_ms for m in spec.pool])
    lat_mean = nominal[None, :] * (0.5 + 0.5 * total / spec.latency_ref_tokens)
    latency = lat_mean * _lognormal_unit(rng, spec.latency_sigma, (n, K))

    alpha = np.array([m.energy_base_alpha for m in spec.pool])
    beta = np.array([m.energy_per_token_beta for m in spec.pool])
    intensity = np.array([[intensity_at(grid, t, m.region) for m in spec.pool] for t in arrivals]).reshape(n, K)
    carbon = carbon_estimate(alpha[None, :], beta[None, :], total, intensity)

    difficulty_obs = z + spec.difficulty_feature_noise * rng.standard_normal(n)
    log_prompt = np.log(prompt) - 5.0

    ids = [m.model_id for m in spec.pool]
    trace = []
    for t in range(n):
        realized = {
            ids[k]: RealizedOutcome(
                correct=bool(correct[t, k]),
                latency_ms=float(latency[t, k]),
                carbon_g=float(carbon[t, k]),
                output_tokens=int(output[t, k]),
            )
            for k in range(K)
        }
        trace.append(
            RequestInstance(
                request_index=t,
                dataset_id=names[ds_idx[t]],
                arrival_time=float(arrivals[t]),
                features=(float(difficulty_obs[t]), float(log_prompt[t])),
                realized=realized,
                prompt_tokens=int(prompt[t]),
            )
        )
    return trace, grid


DEFAULT_FRACTIONS = (2 / 3, 1 / 6, 1 / 6)


def split(
    trace: Sequence[RequestInstance],
    fractions: Sequence[float] = DEFAULT_FRACTIONS,
    seed: int = 42,
) -> tuple[list[RequestInstance], list[RequestInstance], list[RequestInstance]]:
    """Seeded (test, validation, calibration) partition.

    Each part keeps arrival order and is re-indexed from 0, since window
    arithmetic runs on the position in the stream.
    """
    if len(fractions) != 3 or any(f < 0 for f in fractions) or not math.isclose(sum(fractions), 1.0, abs_tol=1e-9):
        raise ConfigError(f"split fractions must be three nonnegative numbers summing to 1, got {fractions}")
    n = len(trace)
    n_val = int(math.floor(fractions[1] * n + 1e-9))
    n_cal = int(math.floor(fractions[2] * n + 1e-9))
    n_test = n - n_val - n_cal
    perm = np.random.default_rng(seed).permutation(n)
    parts = (np.sort(perm[:n_test]), np.sort(perm[n_test : n_test + n_val]), np.sort(perm[n_test + n_val :]))
    return tuple([replace(trace[i], request_index=j) for j, i in enumerate(idx)] for idx in parts)
