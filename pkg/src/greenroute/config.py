"""Application configuration: TOML file merged under command-line overrides.

Precedence is command line > config file > built-in default. Every key in
the file must be known; the layout is documented in ``docs/config.md``.
"""

from __future__ import annotations

import copy
import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .domain import SafetyMargins, SLOConfig
from .engine import Ablations, RunConfig
from .errors import ConfigError
from .estimators import QualityConfig
from .policies import PDConfig, PolicyConfig, Variant, parse_variant
from .suite import DEFAULT_EPSILON, DEFAULT_FLOOR


@dataclass
class PathsSection:
    trace: str | None = None
    pool: str | None = None
    grid: str | None = None
    estimators: str | None = None


@dataclass
class GridSection:
    # region -> constant intensity (g/kWh); used when no grid file is given
    const: dict[str, float] = field(default_factory=dict)


@dataclass
class SLOSection:
    latency_target_ms: float = 1500.0
    default_floor: float = DEFAULT_FLOOR
    floors: dict[str, float] = field(default_factory=dict)
    gamma_c: float = 0.1
    gamma_ell: float = 0.05
    latency_margin_in_gate: bool = True


@dataclass
class PolicySection:
    name: str = "gar_pd"
    epsilon: float = DEFAULT_EPSILON
    # None: cap at the budget B
    carbon_cap_g: float | None = None
    # None: AccMax-Feasible's validation accuracy
    target_accuracy: float | None = None
    target_floors: dict[str, float] | None = None


@dataclass
class PDSection:
    alpha_q: float = 1.0
    alpha_ell: float = 1.0
    eta: float = 0.05
    window: int = 100
    budget_g: float | None = None
    budget_fraction: float = 0.65
    baseline_policy: str = "largest"
    strict_bw: bool = False


@dataclass
class RunSection:
    seed: int = 42
    # which split of the trace file to replay: test, validation, calibration or all
    split: str = "test"
    split_seed: int = 42
    ablate: list[str] = field(default_factory=list)


@dataclass
class CalibrateSection:
    l2: float = 1e-4
    shared_temperature: bool = False
    quantile: float = 0.95


@dataclass
class AppConfig:
    paths: PathsSection = field(default_factory=PathsSection)
    grid: GridSection = field(default_factory=GridSection)
    slo: SLOSection = field(default_factory=SLOSection)
    policy: PolicySection = field(default_factory=PolicySection)
    pd: PDSection = field(default_factory=PDSection)
    run: RunSection = field(default_factory=RunSection)
    calibrate: CalibrateSection = field(default_factory=CalibrateSection)

    def to_json(self) -> dict:
        return asdict(self)

    def dump(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)

    # --- typed views --------------------------------------------------------

    def slo_config(self) -> SLOConfig:
        s = self.slo
        return SLOConfig(
            accuracy_floor=s.floors,
            latency_target_L_ms=s.latency_target_ms,
            margins=SafetyMargins(s.gamma_c, s.gamma_ell),
            default_floor=s.default_floor,
            latency_margin_in_gate=s.latency_margin_in_gate,
        )

    def pd_config(self) -> PDConfig:
        p = self.pd
        return PDConfig(
            alpha_q=p.alpha_q, alpha_ell=p.alpha_ell, eta=p.eta,
            budget_B_g=p.budget_g, window_W=p.window, strict_bw=p.strict_bw,
        )

    def policy_config(self, variant: Variant | str | None = None, budget_B_g: float | None = None) -> PolicyConfig:
        v = parse_variant(variant) if isinstance(variant, str) else (variant or parse_variant(self.policy.name))
        kw: dict[str, Any] = {"pd": self.pd_config()}
        if v is Variant.GAR_EPS:
            kw["epsilon"] = self.policy.epsilon
        elif v is Variant.GAR_FIXED:
            cap = self.policy.carbon_cap_g if self.policy.carbon_cap_g is not None else budget_B_g
            if cap is None:
                raise ConfigError("gar_fixed needs policy.carbon_cap_g or a resolved budget")
            kw["carbon_cap_g"] = cap
        elif v is Variant.GAR_TARGET:
            if self.policy.target_floors is not None:
                kw["target_floors"] = dict(self.policy.target_floors)
            else:
                kw["target_accuracy"] = self.policy.target_accuracy
        return PolicyConfig(v, **kw)

    def run_config(self, policy: PolicyConfig, ablate: list[str] | None = None) -> RunConfig:
        return RunConfig(
            policy=policy,
            slo=self.slo_config(),
            ablations=Ablations.from_names(self.run.ablate if ablate is None else ablate),
            seed=self.run.seed,
            budget_fraction=self.pd.budget_fraction,
            baseline_policy=self.pd.baseline_policy,
        )

    def quality_config(self) -> QualityConfig:
        return QualityConfig(l2=self.calibrate.l2, shared_temperature=self.calibrate.shared_temperature)


def _merge_section(obj, data: Mapping[str, Any], where: str):
    known = {f.name: f for f in fields(obj)}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown config key {where}.{key}")
        current = getattr(obj, key)
        if is_dataclass(current):
            if not isinstance(value, Mapping):
                raise ConfigError(f"{where}.{key} must be a table")
            _merge_section(current, value, f"{where}.{key}")
        else:
            setattr(obj, key, value)


def from_mapping(data: Mapping[str, Any], base: AppConfig | None = None) -> AppConfig:
    cfg = base if base is not None else AppConfig()
    known = {f.name for f in fields(AppConfig)}
    for section, body in data.items():
        if section not in known:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(body, Mapping):
            raise ConfigError(f"[{section}] must be a table")
        _merge_section(getattr(cfg, section), body, section)
    validate(cfg)
    return cfg


def load(path: str | Path | None) -> AppConfig:
    if path is None:
        return AppConfig()
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return from_mapping(data)


def override(cfg: AppConfig, dotted: Mapping[str, Any]) -> AppConfig:
    """Apply ``{"section.key": value}`` overrides, skipping ``None`` values."""
    nested: dict[str, dict] = {}
    for key, value in dotted.items():
        if value is None:
            continue
        section, _, name = key.partition(".")
        nested.setdefault(section, {})[name] = value
    return from_mapping(nested, copy.deepcopy(cfg))


def _check_number(name, value, lo=-math.inf, hi=math.inf, lo_open=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number")
    if not (lo < value if lo_open else lo <= value) or not value <= hi:
        raise ConfigError(f"{name} out of range: {value}")


def validate(cfg: AppConfig) -> None:
    """Type and range checks; the typed views repeat the semantic ones."""
    _check_number("slo.latency_target_ms", cfg.slo.latency_target_ms, 0, lo_open=True)
    _check_number("slo.default_floor", cfg.slo.default_floor, 0, 1)
    _check_number("slo.gamma_c", cfg.slo.gamma_c, 0)
    _check_number("slo.gamma_ell", cfg.slo.gamma_ell, 0)
    for d, v in cfg.slo.floors.items():
        _check_number(f"slo.floors.{d}", v, 0, 1)
    _check_number("policy.epsilon", cfg.policy.epsilon, 0, 1)
    if cfg.policy.carbon_cap_g is not None:
        _check_number("policy.carbon_cap_g", cfg.policy.carbon_cap_g, 0)
    if cfg.policy.target_accuracy is not None:
        _check_number("policy.target_accuracy", cfg.policy.target_accuracy, 0, 1)
    _check_number("pd.eta", cfg.pd.eta, 0, lo_open=True)
    _check_number("pd.alpha_q", cfg.pd.alpha_q, 0)
    _check_number("pd.alpha_ell", cfg.pd.alpha_ell, 0)
    if isinstance(cfg.pd.window, bool) or not isinstance(cfg.pd.window, int) or cfg.pd.window < 1:
        raise ConfigError("pd.window must be a positive integer")
    if cfg.pd.budget_g is not None:
        _check_number("pd.budget_g", cfg.pd.budget_g, 0, lo_open=True)
    _check_number("pd.budget_fraction", cfg.pd.budget_fraction, 0, lo_open=True)
    if cfg.run.split not in ("test", "validation", "calibration", "all"):
        raise ConfigError("run.split must be one of test, validation, calibration, all")
    _check_number("calibrate.quantile", cfg.calibrate.quantile, 0, 1, lo_open=True)
    _check_number("calibrate.l2", cfg.calibrate.l2, 0)
    parse_variant(cfg.policy.name)
    Ablations.from_names(cfg.run.ablate)
    for region, v in cfg.grid.const.items():
        _check_number(f"grid.const.{region}", v, 0, lo_open=True)

