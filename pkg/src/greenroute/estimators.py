"""Pre-route estimators for correctness, p95 latency, tokens and carbon.

Quality: per-model L2-regularised logistic regression on the request
features (plus dataset indicators), followed by a per-model temperature
fitted by golden-section search on the calibration negative log-likelihood.

Latency: per-model linear quantile regression at level ``q`` over the
features and the predicted token count, solved exactly as a linear program
(pinball loss is piecewise linear). Intercept-only problems use the lower
order statistic ``sorted(y)[ceil(q*n) - 1]``, the smallest pinball minimiser.

Carbon: ``(alpha + beta * tokens / 1000) * grid / 1000`` grams, with alpha in
Wh, beta in Wh per 1k tokens and grid in gCO2/kWh.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import linprog, minimize
from scipy.special import expit

from .domain import ModelPool, PredictionBundle, RequestInstance, SLOConfig
from .errors import DataError, EstimationError
from .grid import GridIntensitySeries, intensity_at

PROB_CLAMP = 1e-3
DEFAULT_L2 = 1e-4
TEMPERATURE_BRACKET = (0.05, 20.0)
LATENCY_FLOOR_MS = 1.0
MIN_LATENCY_SAMPLES = 20
ESTIMATOR_FORMAT = "greenroute-estimators"


def carbon_estimate(alpha_wh, beta_wh_per_1k, tokens, intensity_g_per_kwh):
    """Grams CO2 for one request; works elementwise on arrays."""
    energy_wh = np.add(alpha_wh, np.multiply(beta_wh_per_1k, tokens) / 1000.0)
    return energy_wh * intensity_g_per_kwh / 1000.0


def pinball_loss(y, pred, q):
    r = np.asarray(y, dtype=float) - pred
    return float(np.sum(np.maximum(q * r, (q - 1.0) * r)))


def lower_quantile(y, q):
    """Smallest minimiser of the pinball loss over a constant predictor."""
    y = np.sort(np.asarray(y, dtype=float))
    k = max(math.ceil(q * y.size - 1e-12), 1)
    return float(y[k - 1])


def golden_section(f, lo, hi, tol=1e-6, max_iter=200):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol * (abs(a) + abs(b)):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (a + b) / 2.0


def _nll(p, y):
    p = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return -float(np.mean(y * np.log(p) + (1.0 - y) * np.log1p(-p)))


def fit_logistic(X, y, l2=DEFAULT_L2):
    """Minimise mean log-loss + l2/2 * ||w||^2 (bias unpenalised). Returns (w, b)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = X.shape

    def obj(theta):
        w, b = theta[:d], theta[d]
        z = X @ w + b
        # log(1 + e^z) - y z, stable
        loss = np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * (w @ w)
        r = expit(z) - y
        grad = np.empty(d + 1)
        grad[:d] = X.T @ r / n + l2 * w
        grad[d] = r.mean()
        return loss, grad

    res = minimize(obj, np.zeros(d + 1), jac=True, method="L-BFGS-B", options={"maxiter": 1000, "gtol": 1e-9})
    return res.x[:d].copy(), float(res.x[d])


def fit_temperature(logits, labels, bracket=TEMPERATURE_BRACKET):
    """Temperature ``T`` minimising the NLL of ``sigmoid(logits / T)``."""
    z = np.asarray(logits, dtype=float)
    y = np.asarray(labels, dtype=float)
    return golden_section(lambda T: _nll(expit(z / T), y), *bracket)


def fit_quantile_linear(X, y, q=0.95):
    """Linear quantile regression ``y ~ X beta`` (``X`` includes any intercept column)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    # min q*1'u + (1-q)*1'v  s.t.  X beta + u - v = y,  u, v >= 0
    c = np.concatenate([np.zeros(d), np.full(n, q), np.full(n, 1.0 - q)])
    A_eq = np.hstack([X, np.eye(n), -np.eye(n)])
    bounds = [(None, None)] * d + [(0, None)] * (2 * n)
    res = linprog(c, A_eq=A_eq, b_eq=y, bounds=bounds, method="highs")
    if not res.success:
        raise EstimationError(f"quantile regression failed: {res.message}")
    return res.x[:d].copy()


def _design(features: Sequence[float], dataset_id: str, datasets: Sequence[str]) -> np.ndarray:
    onehot = [1.0 if dataset_id == d else 0.0 for d in datasets]
    return np.array(list(features) + onehot, dtype=float)


@dataclass
class QualityEstimator:
    """Per-model logistic weights, bias, temperature; ``constant`` rows override."""

    model_ids: tuple[str, ...]
    datasets: tuple[str, ...]
    weights: np.ndarray  # (K, d)
    bias: np.ndarray  # (K,)
    temperature: np.ndarray  # (K,)
    constant: np.ndarray  # (K,), NaN where the logistic model is used

    def logits(self, x: np.ndarray) -> np.ndarray:
        return self.weights @ x + self.bias

    def predict_row(self, x: np.ndarray) -> np.ndarray:
        p = expit(self.logits(x) / self.temperature)
        p = np.where(np.isnan(self.constant), p, self.constant)
        return np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)


@dataclass
class TokenEstimator:
    """Expected output tokens per (model, dataset); total = prompt + output."""

    model_ids: tuple[str, ...]
    per_dataset: dict[str, np.ndarray]  # dataset -> (K,) mean output tokens
    overall: np.ndarray  # (K,)

    def predict_row(self, prompt_tokens: int, dataset_id: str) -> np.ndarray:
        out = self.per_dataset.get(dataset_id, self.overall)
        return np.maximum(prompt_tokens + out, 0.0)


@dataclass
class LatencyEstimator:
    """Per-model p95 coefficients over ``[1, features..., t_hat]``."""

    model_ids: tuple[str, ...]
    coef: np.ndarray  # (K, d + 2)
    q: float = 0.95
    floor_ms: float = LATENCY_FLOOR_MS

    def predict_row(self, features: np.ndarray, t_hat: np.ndarray) -> np.ndarray:
        d = features.size
        base = self.coef[:, 0] + self.coef[:, 1 : 1 + d] @ features
        return np.maximum(base + self.coef[:, 1 + d] * t_hat, self.floor_ms)


@dataclass
class FittedEstimators:
    quality: QualityEstimator
    latency: LatencyEstimator
    tokens: TokenEstimator
    meta: dict = field(default_factory=dict)

    def predict(self, request: RequestInstance, pool: ModelPool, slo: SLOConfig, grid: GridIntensitySeries):
        return predict(self, request, pool, slo, grid)

    def to_json(self) -> dict:
        q, lat, tok = self.quality, self.latency, self.tokens
        return {
            "format": ESTIMATOR_FORMAT,
            "version": 1,
            "model_ids": list(q.model_ids),
            "quality": {
                "datasets": list(q.datasets),
                "weights": q.weights.tolist(),
                "bias": q.bias.tolist(),
                "temperature": q.temperature.tolist(),
                "constant": [None if math.isnan(c) else float(c) for c in q.constant],
            },
            "latency": {"q": lat.q, "floor_ms": lat.floor_ms, "coef": lat.coef.tolist()},
            "tokens": {
                "per_dataset": {d: v.tolist() for d, v in tok.per_dataset.items()},
                "overall": tok.overall.tolist(),
            },
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, obj) -> "FittedEstimators":
        try:
            if obj.get("format") != ESTIMATOR_FORMAT:
                raise DataError("not an estimator sidecar file")
            ids = tuple(obj["model_ids"])
            q = obj["quality"]
            lat = obj["latency"]
            tok = obj["tokens"]
            quality = QualityEstimator(
                model_ids=ids,
                datasets=tuple(q["datasets"]),
                weights=np.array(q["weights"], dtype=float).reshape(len(ids), -1),
                bias=np.array(q["bias"], dtype=float),
                temperature=np.array(q["temperature"], dtype=float),
                constant=np.array([math.nan if c is None else c for c in q["constant"]], dtype=float),
            )
            latency = LatencyEstimator(
                model_ids=ids,
                coef=np.array(lat["coef"], dtype=float).reshape(len(ids), -1),
                q=float(lat["q"]),
                floor_ms=float(lat["floor_ms"]),
            )
            tokens = TokenEstimator(
                model_ids=ids,
                per_dataset={d: np.array(v, dtype=float) for d, v in tok["per_dataset"].items()},
                overall=np.array(tok["overall"], dtype=float),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed estimator file: {exc!r}") from None
        return cls(quality=quality, latency=latency, tokens=tokens, meta=dict(obj.get("meta", {})))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "FittedEstimators":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DataError(f"invalid JSON at line {exc.lineno}: {exc.msg}", path=path) from None
        return cls.from_json(obj)


@dataclass(frozen=True)
class QualityConfig:
    l2: float = DEFAULT_L2
    shared_temperature: bool = False
    dataset_indicators: bool = True


def fit_quality(calibration: Sequence[RequestInstance], model_ids: Sequence[str], config: QualityConfig = QualityConfig()):
    """Per-model logistic + temperature scaling on the calibration split.

    Models whose labels are single-class (or with fewer than two examples)
    get a constant prior-rate predictor.
    """
    if not calibration:
        raise EstimationError("empty calibration set")
    model_ids = tuple(model_ids)
    datasets = tuple(sorted({r.dataset_id for r in calibration})) if config.dataset_indicators else ()
    X = np.stack([_design(r.features, r.dataset_id, datasets) for r in calibration])
    d = X.shape[1]
    K = len(model_ids)
    W = np.zeros((K, d))
    b = np.zeros(K)
    T = np.ones(K)
    const = np.full(K, np.nan)
    all_logits, all_labels, fitted = [], [], []
    for k, mid in enumerate(model_ids):
        y = np.array([r.realized[mid].correct for r in calibration], dtype=float)
        if y.size < 2 or y.min() == y.max():
            const[k] = float(np.clip(y.mean(), PROB_CLAMP, 1.0 - PROB_CLAMP))
            continue
        W[k], b[k] = fit_logistic(X, y, config.l2)
        z = X @ W[k] + b[k]
        if config.shared_temperature:
            all_logits.append(z)
            all_labels.append(y)
            fitted.append(k)
        else:
            T[k] = fit_temperature(z, y)
    if config.shared_temperature and fitted:
        T[fitted] = fit_temperature(np.concatenate(all_logits), np.concatenate(all_labels))
    return QualityEstimator(model_ids, datasets, W, b, T, const)


def fit_tokens(calibration: Sequence[RequestInstance], model_ids: Sequence[str]) -> TokenEstimator:
    if not calibration:
        raise EstimationError("empty calibration set")
    model_ids = tuple(model_ids)
    out = np.array([[r.realized[m].output_tokens for m in model_ids] for r in calibration], dtype=float)
    ds = np.array([r.dataset_id for r in calibration])
    per_dataset = {str(d): out[ds == d].mean(axis=0) for d in sorted(set(ds.tolist()))}
    return TokenEstimator(model_ids, per_dataset, out.mean(axis=0))


def fit_latency(
    calibration: Sequence[RequestInstance],
    model_ids: Sequence[str],
    tokens: TokenEstimator,
    q: float = 0.95,
    floor_ms: float = LATENCY_FLOOR_MS,
) -> LatencyEstimator:
    """Linear p``q`` latency per model over ``[1, features, t_hat]``."""
    model_ids = tuple(model_ids)
    n = len(calibration)
    if n < MIN_LATENCY_SAMPLES:
        raise EstimationError(
            f"latency fit for {', '.join(model_ids)}: need >= {MIN_LATENCY_SAMPLES} "
            f"calibration samples per model, got {n}"
        )
    F = np.array([r.features for r in calibration], dtype=float).reshape(n, -1)
    d = F.shape[1]
    t_hat = np.stack([tokens.predict_row(r.prompt_tokens, r.dataset_id) for r in calibration])  # (n, K)
    coef = np.zeros((len(model_ids), d + 2))
    for k, mid in enumerate(model_ids):
        y = np.array([r.realized[mid].latency_ms for r in calibration], dtype=float)
        cols = np.column_stack([F, t_hat[:, k]])
        varying = np.ptp(cols, axis=0) > 1e-12 * np.maximum(1.0, np.abs(cols).max(axis=0))
        if not varying.any():
            coef[k, 0] = lower_quantile(y, q)
            continue
        X = np.column_stack([np.ones(n), cols[:, varying]])
        beta = fit_quantile_linear(X, y, q)
        coef[k, 0] = beta[0]
        coef[k, 1:][varying] = beta[1:]
    return LatencyEstimator(model_ids, coef, q=q, floor_ms=floor_ms)


def fit_estimators(
    calibration: Sequence[RequestInstance],
    pool: ModelPool,
    quality_config: QualityConfig = QualityConfig(),
    q: float = 0.95,
) -> FittedEstimators:
    ids = pool.model_ids
    tokens = fit_tokens(calibration, ids)
    return FittedEstimators(
        quality=fit_quality(calibration, ids, quality_config),
        latency=fit_latency(calibration, ids, tokens, q=q),
        tokens=tokens,
        meta={"n_calibration": len(calibration), "quantile": q},
    )


def _pool_alignment(est_ids: Sequence[str], pool: ModelPool) -> np.ndarray | None:
    if tuple(est_ids) == pool.model_ids:
        return None
    pos = {m: i for i, m in enumerate(est_ids)}
    missing = [m for m in pool.model_ids if m not in pos]
    if missing:
        raise EstimationError(f"estimators not fitted for models: {', '.join(missing)}")
    return np.array([pos[m] for m in pool.model_ids])


def grid_vector(request: RequestInstance, pool: ModelPool, grid: GridIntensitySeries) -> np.ndarray:
    return np.array([intensity_at(grid, request.arrival_time, m.region) for m in pool.models])


def predict(estimators, request: RequestInstance, pool: ModelPool, slo: SLOConfig, grid: GridIntensitySeries):
    """Prediction bundle for every pool model, with the SLO's safety margins.

    Anything other than ``FittedEstimators`` is treated as a predictor object
    exposing ``predict(request, pool, slo, grid)``.
    """
    if not isinstance(estimators, FittedEstimators):
        return estimators.predict(request, pool, slo, grid)
    q, lat, tok = estimators.quality, estimators.latency, estimators.tokens
    order = _pool_alignment(q.model_ids, pool)
    x_q = _design(request.features, request.dataset_id, q.datasets)
    if x_q.size != q.weights.shape[1]:
        raise EstimationError(
            f"request {request.request_index}: feature length {len(request.features)} does not match estimators"
        )
    p = q.predict_row(x_q)
    t_hat = tok.predict_row(request.prompt_tokens, request.dataset_id)
    feats = np.asarray(request.features, dtype=float)
    ell = lat.predict_row(feats, t_hat)
    if order is not None:
        p, t_hat, ell = p[order], t_hat[order], ell[order]
    alpha = np.array([m.energy_base_alpha for m in pool.models])
    beta = np.array([m.energy_per_token_beta for m in pool.models])
    c = carbon_estimate(alpha, beta, t_hat, grid_vector(request, pool, grid))
    return PredictionBundle(pool.model_ids, p, ell, c, t_hat, slo.margins)


class OracleEstimators:
    """Returns the realized outcomes as predictions (hindsight)."""

    def predict(self, request: RequestInstance, pool: ModelPool, slo: SLOConfig, grid=None):
        out = [request.realized[m] for m in pool.model_ids]
        return PredictionBundle(
            pool.model_ids,
            np.array([1.0 if o.correct else 0.0 for o in out]),
            np.array([o.latency_ms for o in out]),
            np.array([o.carbon_g for o in out]),
            np.array([request.total_tokens(m) for m in pool.model_ids], dtype=float),
            slo.margins,
        )


def make_oracle_estimators(trace=None) -> OracleEstimators:
    return OracleEstimators()


def load_estimators(path) -> FittedEstimators:
    return FittedEstimators.load(path)


def check_pool_matches(estimators, pool: ModelPool):
    if isinstance(estimators, FittedEstimators):
        _pool_alignment(estimators.quality.model_ids, pool)


__all__ = [
    "FittedEstimators",
    "LatencyEstimator",
    "OracleEstimators",
    "QualityConfig",
    "QualityEstimator",
    "TokenEstimator",
    "carbon_estimate",
    "fit_estimators",
    "fit_latency",
    "fit_logistic",
    "fit_quality",
    "fit_quantile_linear",
    "fit_temperature",
    "fit_tokens",
    "golden_section",
    "load_estimators",
    "lower_quantile",
    "make_oracle_estimators",
    "pinball_loss",
    "predict",
]
