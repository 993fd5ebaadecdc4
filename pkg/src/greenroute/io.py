"""Trace (NDJSON) and pool (JSON) file formats.

Trace file: the first line is a header object::

    {"kind": "header", "format": "greenroute-trace", "version": 1,
     "pool": ["m1", "m2"], "epoch": 0.0,
     "units": {"time": "s", "latency": "ms", "carbon": "g", "energy": "Wh"}}

and every following line is one request::

    {"request_index": 0, "dataset_id": "mmlu", "arrival_time": 12.5,
     "prompt_tokens": 180, "features": [0.3, 1.0],
     "realized": {"m1": {"correct": true, "latency_ms": 410.2,
                         "carbon_g": 0.61, "output_tokens": 95}, ...}}

Pool file: a JSON array of objects with the ``ModelProfile`` field names,
optionally carrying a ``units`` object.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .domain import ModelPool, ModelProfile, RealizedOutcome, RequestInstance
from .errors import DataError

TRACE_FORMAT = "greenroute-trace"
TRACE_VERSION = 1
TRACE_UNITS = {"time": "s", "latency": "ms", "carbon": "g", "energy": "Wh"}
POOL_UNITS = {
    "energy_base_alpha": "Wh",
    "energy_per_token_beta": "Wh/1k tokens",
    "nominal_latency_ms": "ms",
}

_REQUEST_KEYS = {"request_index", "dataset_id", "arrival_time", "prompt_tokens", "features", "realized"}
_OUTCOME_KEYS = {"correct", "latency_ms", "carbon_g", "output_tokens"}
_PROFILE_KEYS = {
    "model_id",
    "size_label",
    "region",
    "energy_base_alpha",
    "energy_per_token_beta",
    "nominal_latency_ms",
}


@dataclass(frozen=True)
class TraceFile:
    requests: list[RequestInstance]
    model_ids: tuple[str, ...]
    epoch: float = 0.0


def _check_units(declared, expected, where, line=None, path=None):
    if declared is None:
        return
    if not isinstance(declared, dict):
        raise DataError(f"{where}: units must be an object", line=line, path=path)
    for key, unit in declared.items():
        if key not in expected:
            raise DataError(f"{where}: unknown unit key {key!r}", line=line, path=path)
        if unit != expected[key]:
            raise DataError(
                f"{where}: unsupported unit {unit!r} for {key!r} (expected {expected[key]!r})",
                line=line,
                path=path,
            )


def request_to_json(req: RequestInstance) -> dict:
    return {
        "request_index": req.request_index,
        "dataset_id": req.dataset_id,
        "arrival_time": req.arrival_time,
        "prompt_tokens": req.prompt_tokens,
        "features": list(req.features),
        "realized": {
            mid: {
                "correct": o.correct,
                "latency_ms": o.latency_ms,
                "carbon_g": o.carbon_g,
                "output_tokens": o.output_tokens,
            }
            for mid, o in req.realized.items()
        },
    }


def request_from_json(obj, line=None, path=None) -> RequestInstance:
    if not isinstance(obj, dict):
        raise DataError("request line must be a JSON object", line=line, path=path)
    unknown = set(obj) - _REQUEST_KEYS
    if unknown:
        raise DataError(f"unknown request keys: {sorted(unknown)}", line=line, path=path)
    try:
        realized = {}
        for mid, o in obj["realized"].items():
            extra = set(o) - _OUTCOME_KEYS
            if extra:
                raise DataError(f"unknown outcome keys for {mid}: {sorted(extra)}", line=line, path=path)
            if not isinstance(o["correct"], bool):
                raise DataError(f"{mid}: 'correct' must be a boolean", line=line, path=path)
            realized[mid] = RealizedOutcome(
                correct=o["correct"],
                latency_ms=float(o["latency_ms"]),
                carbon_g=float(o["carbon_g"]),
                output_tokens=int(o.get("output_tokens", 0)),
            )
        return RequestInstance(
            request_index=int(obj["request_index"]),
            dataset_id=str(obj["dataset_id"]),
            arrival_time=float(obj["arrival_time"]),
            features=tuple(obj.get("features", ())),
            realized=realized,
            prompt_tokens=int(obj.get("prompt_tokens", 0)),
        )
    except DataError:
        raise
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise DataError(f"malformed request: {exc!r}", line=line, path=path) from None


def write_trace(path, requests: Sequence[RequestInstance], model_ids: Sequence[str], epoch: float = 0.0):
    header = {
        "kind": "header",
        "format": TRACE_FORMAT,
        "version": TRACE_VERSION,
        "pool": list(model_ids),
        "epoch": epoch,
        "units": dict(TRACE_UNITS),
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        for req in requests:
            fh.write(json.dumps(request_to_json(req)) + "\n")


def read_trace(path) -> TraceFile:
    path = Path(path)
    requests = []
    header = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise DataError(f"invalid JSON: {exc.msg}", line=lineno, path=path) from None
            if header is None:
                if not isinstance(obj, dict) or obj.get("kind") != "header":
                    raise DataError("first line must be a trace header", line=lineno, path=path)
                if obj.get("format") != TRACE_FORMAT or obj.get("version") != TRACE_VERSION:
                    raise DataError("unsupported trace format/version", line=lineno, path=path)
                _check_units(obj.get("units"), TRACE_UNITS, "header", line=lineno, path=path)
                if not isinstance(obj.get("pool"), list) or not obj["pool"]:
                    raise DataError("header must list pool model ids", line=lineno, path=path)
                header = obj
                continue
            requests.append(request_from_json(obj, line=lineno, path=path))
    if header is None:
        raise DataError("empty trace file (no header)", path=path)
    return TraceFile(requests=requests, model_ids=tuple(header["pool"]), epoch=float(header.get("epoch", 0.0)))


def profile_to_json(profile: ModelProfile) -> dict:
    return asdict(profile)


def profile_from_json(obj, where="pool entry", path=None) -> ModelProfile:
    if not isinstance(obj, dict):
        raise DataError(f"{where} must be an object", path=path)
    _check_units(obj.get("units"), POOL_UNITS, where, path=path)
    fields = {k: v for k, v in obj.items() if k != "units"}
    unknown = set(fields) - _PROFILE_KEYS
    if unknown:
        raise DataError(f"{where}: unknown keys {sorted(unknown)}", path=path)
    try:
        return ModelProfile(
            model_id=str(fields["model_id"]),
            size_label=str(fields["size_label"]),
            region=str(fields["region"]),
            energy_base_alpha=float(fields.get("energy_base_alpha", 0.0)),
            energy_per_token_beta=float(fields["energy_per_token_beta"]),
            nominal_latency_ms=float(fields.get("nominal_latency_ms", 500.0)),
        )
    except KeyError as exc:
        raise DataError(f"{where}: missing field {exc.args[0]!r}", path=path) from None


def write_pool(path, pool: Iterable[ModelProfile]):
    data = [dict(profile_to_json(p), units=dict(POOL_UNITS)) for p in pool]
    Path(path).write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


def read_pool(path) -> ModelPool:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"invalid JSON at line {exc.lineno}: {exc.msg}", path=path) from None
    if not isinstance(data, list):
        raise DataError("pool file must be a JSON array", path=path)
    return ModelPool(tuple(profile_from_json(o, f"pool entry {i}", path) for i, o in enumerate(data)))
