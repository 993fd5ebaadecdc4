import functools

import numpy as np
import pytest

from greenroute.domain import (
    ModelPool,
    ModelProfile,
    PredictionBundle,
    RealizedOutcome,
    RequestInstance,
    SafetyMargins,
    SLOConfig,
)

NO_MARGINS = SafetyMargins(0.0, 0.0)


def make_pool(k=2, betas=None, sizes=None, region="r"):
    betas = betas or [1.0 + i for i in range(k)]
    sizes = sizes or [f"{i + 1}B" for i in range(k)]
    return ModelPool(tuple(ModelProfile(f"m{i + 1}", sizes[i], region, 0.0, betas[i]) for i in range(k)))


def bundle(p, ell, c, t=None, margins=NO_MARGINS, ids=None):
    k = len(p)
    ids = ids or tuple(f"m{i + 1}" for i in range(k))
    t = np.zeros(k) if t is None else t
    return PredictionBundle(tuple(ids), np.asarray(p, float), np.asarray(ell, float), np.asarray(c, float), np.asarray(t, float), margins)


def outcome(correct=True, latency=100.0, carbon=1.0, out_tokens=10):
    return RealizedOutcome(correct, latency, carbon, out_tokens)


def request(i, realized, dataset="d", t=None, features=(0.0,), prompt=10):
    return RequestInstance(i, dataset, float(i if t is None else t), tuple(features), realized, prompt)


def slo(floor=0.0, L=1500.0, margins=NO_MARGINS, **kw):
    return SLOConfig(default_floor=floor, latency_target_L_ms=L, margins=margins, **kw)


@functools.lru_cache(maxsize=None)
def default_workload(seed=0, n_requests=None):
    """Generated, split and calibrated default workload (cached per seed)."""
    from greenroute.suite import build_workload
    from greenroute.tracegen import GenSpec

    spec = GenSpec(seed=seed) if n_requests is None else GenSpec(seed=seed, n_requests=n_requests)
    return build_workload(spec)


@pytest.fixture(scope="session")
def small_workload():
    return default_workload(seed=7, n_requests=1200)


class FeaturePredictor:
    """Reads p̂ from the request features; carbon predictions equal realized carbon."""

    def __init__(self, latency_ms=100.0):
        self.latency_ms = latency_ms

    def predict(self, req, pool, slo, grid):
        ids = pool.model_ids
        k = len(ids)
        c = np.array([req.realized[m].carbon_g for m in ids])
        return PredictionBundle(ids, np.asarray(req.features, float), np.full(k, self.latency_ms), c, np.full(k, 10.0), slo.margins)


def two_model_regime(n=3000, seed=0, c_low=1.0, c_high=3.0):
    """Two models that differ in carbon; the costly one is predicted more accurate."""
    rng = np.random.default_rng(seed)
    trace = []
    for i in range(n):
        lo = rng.uniform(0.3, 0.7)
        hi = min(1.0, lo + rng.uniform(0.0, 0.6))
        trace.append(request(i, {"m1": outcome(carbon=c_low), "m2": outcome(carbon=c_high)}, features=(lo, hi)))
    return trace, make_pool(), FeaturePredictor()


# acceptance outcomes, printed one line per criterion at the end of the session
ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {n:>2}. {title}" + (f"  [{detail}]" if detail else ""))
