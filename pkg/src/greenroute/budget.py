"""Rolling carbon ledger and the projected dual update for the carbon budget."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

from .errors import ConfigError, GreenRouteError


class CarbonLedger:
    """Sliding window over the last ``window_W`` realized emissions (grams).

    The running sum is updated incrementally and recomputed exactly every
    ``window_W`` pushes to bound floating-point drift.
    """

    def __init__(self, window_W: int, budget_B_g: float):
        if int(window_W) != window_W or window_W < 1:
            raise ConfigError(f"window_W must be a positive integer, got {window_W}")
        if not (budget_B_g > 0):
            raise ConfigError(f"budget_B_g must be > 0, got {budget_B_g}")
        self.window_W = int(window_W)
        self.budget_B_g = float(budget_B_g)
        self.ring: deque[float] = deque()
        self.running_sum_S = 0.0
        self.count_seen = 0

    def push(self, c_t: float) -> "CarbonLedger":
        if not (c_t >= 0):
            raise GreenRouteError(f"realized carbon must be >= 0, got {c_t}")
        self.ring.append(float(c_t))
        self.count_seen += 1
        if self.count_seen > self.window_W:
            self.running_sum_S += c_t - self.ring.popleft()
        else:
            self.running_sum_S += c_t
        if self.count_seen % self.window_W == 0:
            self.running_sum_S = math.fsum(self.ring)
        # incremental subtraction may leave a tiny negative residue
        if self.running_sum_S < 0.0:
            self.running_sum_S = 0.0
        return self

    @property
    def effective_window(self) -> int:
        return min(self.count_seen, self.window_W)

    def window_average(self) -> float:
        if self.count_seen == 0:
            raise GreenRouteError("window average of an empty ledger")
        return self.running_sum_S / self.effective_window

    def state(self) -> dict:
        return {
            "window_W": self.window_W,
            "budget_B_g": self.budget_B_g,
            "running_sum_S": self.running_sum_S,
            "count_seen": self.count_seen,
            "ring": list(self.ring),
        }


def ledger_push(ledger: CarbonLedger, c_t: float) -> CarbonLedger:
    return ledger.push(c_t)


def window_average(ledger: CarbonLedger) -> float:
    return ledger.window_average()


@dataclass
class DualState:
    eta: float = 0.05
    lam: float = 0.0
    history: list[float] = field(default_factory=list)

    def __post_init__(self):
        if not (self.eta > 0):
            raise ConfigError(f"eta must be > 0, got {self.eta}")
        if self.lam < 0:
            raise ConfigError("lambda must be >= 0")


def dual_update(dual: DualState, ledger: CarbonLedger, strict_bw: bool = False) -> DualState:
    """``lam <- max(0, lam + eta * (S - B*W') / (B*W'))``.

    ``W'`` is the filled prefix ``min(count_seen, W)``; ``strict_bw`` uses the
    full ``W`` from the first request on.
    """
    if ledger.count_seen < 1:
        raise GreenRouteError("dual update before any carbon was recorded")
    w = ledger.window_W if strict_bw else ledger.effective_window
    bw = ledger.budget_B_g * w
    # an unbounded budget is the limit (S - BW) / BW -> -1
    gap = -1.0 if math.isinf(bw) else (ledger.running_sum_S - bw) / bw
    dual.history.append(dual.lam)
    dual.lam = max(0.0, dual.lam + dual.eta * gap)
    return dual
