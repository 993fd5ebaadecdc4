"""Time-varying grid carbon intensity per region.

Lookups are last-sample-hold: the value at ``t`` is the latest sample with
timestamp ``<= t``; queries before the first sample clamp to it.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import DataError

CSV_COLUMNS = ("timestamp_s", "region", "intensity_g_per_kwh")


@dataclass(frozen=True, eq=False)
class GridIntensitySeries:
    """Per-region step series, plus optional constant regions.

    ``samples`` maps region -> (timestamps, intensities) with strictly
    increasing timestamps and positive intensities.
    """

    samples: Mapping[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    constants: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for region, (ts, vals) in self.samples.items():
            ts = np.asarray(ts, dtype=float)
            vals = np.asarray(vals, dtype=float)
            if ts.ndim != 1 or ts.shape != vals.shape or ts.size == 0:
                raise DataError(f"region {region!r}: timestamps and intensities must be equal-length 1-D")
            if np.any(np.diff(ts) <= 0):
                raise DataError(f"region {region!r}: timestamps must be strictly increasing")
            if np.any(~(vals > 0)):
                raise DataError(f"region {region!r}: intensities must be > 0")
            ts.setflags(write=False)
            vals.setflags(write=False)
            clean[region] = (ts, vals)
        for region, v in self.constants.items():
            if not (v > 0) or math.isinf(v):
                raise DataError(f"constant intensity for {region!r} must be finite and > 0")
            if region in clean:
                raise DataError(f"region {region!r} given both as series and constant")
        object.__setattr__(self, "samples", clean)
        object.__setattr__(self, "constants", dict(self.constants))

    @property
    def regions(self) -> list[str]:
        return sorted(set(self.samples) | set(self.constants))

    def intensity_at(self, t: float, region: str) -> float:
        return intensity_at(self, t, region)

    def merged(self, other: "GridIntensitySeries") -> "GridIntensitySeries":
        """Union of both; regions present in ``other`` take its definition."""
        samples = {r: v for r, v in self.samples.items() if r not in other.constants}
        constants = {r: v for r, v in self.constants.items() if r not in other.samples}
        return GridIntensitySeries({**samples, **other.samples}, {**constants, **other.constants})


def constant_grid(values: Mapping[str, float]) -> GridIntensitySeries:
    return GridIntensitySeries(constants=dict(values))


def intensity_at(series: GridIntensitySeries, t: float, region: str) -> float:
    """Grid intensity (gCO2/kWh) in ``region`` at time ``t`` seconds."""
    if region in series.constants:
        return series.constants[region]
    try:
        ts, vals = series.samples[region]
    except KeyError:
        raise DataError(f"unknown grid region {region!r}") from None
    i = int(np.searchsorted(ts, t, side="right")) - 1
    return float(vals[max(i, 0)])


def load_series(path) -> GridIntensitySeries:
    """Parse a ``timestamp_s,region,intensity_g_per_kwh`` CSV; rows may be unsorted."""
    path = Path(path)
    rows: dict[str, list[tuple[float, float, int]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("empty grid file", path=path) from None
        if tuple(h.strip() for h in header) != CSV_COLUMNS:
            raise DataError(f"expected header {','.join(CSV_COLUMNS)}", line=1, path=path)
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise DataError(f"expected 3 columns, got {len(row)}", line=lineno, path=path)
            try:
                ts = float(row[0])
                val = float(row[2])
            except ValueError:
                raise DataError(f"non-numeric value in {row!r}", line=lineno, path=path) from None
            region = row[1].strip()
            if not region:
                raise DataError("empty region", line=lineno, path=path)
            if not math.isfinite(ts):
                raise DataError("timestamp must be finite", line=lineno, path=path)
            if not (val > 0) or not math.isfinite(val):
                raise DataError(f"intensity must be finite and > 0, got {row[2]}", line=lineno, path=path)
            rows.setdefault(region, []).append((ts, val, lineno))
    samples = {}
    for region, entries in rows.items():
        entries.sort(key=lambda e: e[0])
        for (t0, _, _), (t1, _, ln) in zip(entries, entries[1:]):
            if t1 == t0:
                raise DataError(f"duplicate timestamp {t1} for region {region!r}", line=ln, path=path)
        samples[region] = (np.array([e[0] for e in entries]), np.array([e[1] for e in entries]))
    if not samples:
        raise DataError("grid file has no samples", path=path)
    return GridIntensitySeries(samples)


def write_series(path, series: GridIntensitySeries):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for region in sorted(series.samples):
            ts, vals = series.samples[region]
            for t, v in zip(ts, vals):
                w.writerow([repr(float(t)), region, repr(float(v))])


def parse_const_spec(text: str) -> tuple[str, float]:
    """Parse a ``region=value`` command-line constant."""
    region, sep, value = text.partition("=")
    if not sep or not region.strip():
        raise DataError(f"expected REGION=VALUE, got {text!r}")
    try:
        v = float(value)
    except ValueError:
        raise DataError(f"non-numeric intensity in {text!r}") from None
    if not (v > 0) or math.isinf(v):
        raise DataError(f"intensity must be finite and > 0 in {text!r}")
    return region.strip(), v
