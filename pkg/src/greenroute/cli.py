"""``greenroute`` command-line interface.

Exit codes: 0 success, 1 usage error, 2 data or validation error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from . import config as appconfig
from .domain import ModelPool, validate_trace
from .engine import ABLATION_NAMES, RunConfig, resolve_budget, run
from .errors import ConfigError, DataError, GreenRouteError
from .estimators import FittedEstimators, check_pool_matches, fit_estimators
from .grid import constant_grid, load_series, parse_const_spec, write_series
from .io import read_pool, read_trace, write_pool, write_trace
from .metrics import compare_results, pareto_csv
from .policies import Variant, parse_variant
from .suite import Workload, run_configs, validation_accuracy
from .tracegen import GenSpec, default_pool, generate, split

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
SWEEP_PARAMS = ("budget_frac", "epsilon", "cap", "tau_scale", "eta")
STANDARD_LINEUP = tuple(v.value for v in Variant)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


# --- parser ------------------------------------------------------------------


def _common_parent() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    g = p.add_argument_group("configuration")
    g.add_argument("--config", metavar="PATH", help="TOML config file (command-line flags take precedence)")
    g.add_argument("--config-dump", action="store_true", help="print the resolved configuration as JSON and exit")
    return p


def _data_parent() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    g = p.add_argument_group("inputs")
    g.add_argument("--trace", metavar="PATH", help="counterfactual trace (NDJSON)")
    g.add_argument("--pool", metavar="PATH", help="model pool (JSON); defaults to the built-in pool if the ids match")
    g.add_argument("--grid", metavar="PATH", help="grid intensity CSV (timestamp_s,region,intensity_g_per_kwh)")
    g.add_argument("--grid-const", metavar="REGION=G_PER_KWH", action="append", help="constant intensity for a region (repeatable)")
    g.add_argument("--estimators", metavar="PATH", help="fitted estimators (JSON); fitted on the calibration split if omitted")
    g.add_argument("--split", choices=("test", "validation", "calibration", "all"), help="trace split to replay (default: test)")
    g.add_argument("--split-seed", type=int, metavar="N", help="seed of the test/validation/calibration partition (default: 42)")
    return p


def _knob_parent() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    g = p.add_argument_group("policy and SLO")
    g.add_argument("--policy", metavar="NAME", help=f"routing policy: {', '.join(STANDARD_LINEUP)}")
    g.add_argument("--eta", type=float, help="dual step size (default: 0.05)")
    g.add_argument("--budget-frac", type=float, metavar="F", help="budget as a fraction of the baseline mean carbon (default: 0.65)")
    g.add_argument("--budget", type=float, metavar="G", help="absolute budget in g/request (overrides --budget-frac)")
    g.add_argument("--baseline-policy", metavar="NAME", help="policy whose mean carbon anchors the budget (default: largest)")
    g.add_argument("--window", type=int, metavar="W", help="rolling budget window in requests (default: 100)")
    g.add_argument("--alpha-q", type=float, help="quality weight of the GAR-PD score (default: 1)")
    g.add_argument("--alpha-ell", type=float, help="latency weight of the GAR-PD score (default: 1)")
    g.add_argument("--epsilon", type=float, help="GAR-Eps accuracy slack (default: 0.05)")
    g.add_argument("--cap", type=float, metavar="G", help="GAR-Fixed per-request carbon cap (default: the budget)")
    g.add_argument("--target-accuracy", type=float, metavar="A", help="GAR-Target accuracy goal (default: AccMax-Feasible on validation)")
    g.add_argument("--floor", type=float, metavar="TAU", help="accuracy floor for datasets without --tau (default: 0.6)")
    g.add_argument("--tau", action="append", metavar="DATASET=TAU", help="per-dataset accuracy floor (repeatable)")
    g.add_argument("--latency-target", type=float, metavar="MS", help="p95 latency target L in ms (default: 1500)")
    g.add_argument("--gamma-c", type=float, help="carbon safety margin (default: 0.1)")
    g.add_argument("--gamma-ell", type=float, help="latency safety margin (default: 0.05)")
    g.add_argument("--no-latency-margin", action="store_true", help="gate on the plain latency estimate instead of the inflated one")
    g.add_argument("--strict-bw", action="store_true", help="normalise the dual gap by the full window from the first request")
    g.add_argument("--ablate", action="append", metavar="NAME", help=f"disable a component (repeatable): {', '.join(ABLATION_NAMES)}")
    g.add_argument("--seed", type=int, metavar="N", help="run seed recorded with the results (default: 42)")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="greenroute", description="Carbon-aware LLM routing simulator.")
    parser.add_argument("--version", action="store_true", help="print version information as JSON and exit")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    common, data, knobs = _common_parent(), _data_parent(), _knob_parent()

    g = sub.add_parser("gen-trace", parents=[common], help="generate a synthetic counterfactual trace")
    g.add_argument("--spec", metavar="PATH", help="generator spec (JSON); built-in defaults if omitted")
    g.add_argument("--out-trace", metavar="PATH", help="where to write the trace (required)")
    g.add_argument("--out-grid", metavar="PATH", help="where to write the grid series (required)")
    g.add_argument("--out-pool", metavar="PATH", help="where to write the model pool")
    g.add_argument("--seed", type=int, metavar="N", help="generator seed (overrides --spec)")
    g.add_argument("--n-requests", type=int, metavar="N", help="trace length (overrides --spec)")

    c = sub.add_parser("calibrate", parents=[common], help="fit estimators on a trace split")
    c.add_argument("--trace", metavar="PATH", help="counterfactual trace (NDJSON)")
    c.add_argument("--pool", metavar="PATH", help="model pool (JSON)")
    c.add_argument("--split", choices=("test", "validation", "calibration", "all"), help="split to fit on (default: calibration)")
    c.add_argument("--split-seed", type=int, metavar="N", help="partition seed (default: 42)")
    c.add_argument("--l2", type=float, help="logistic ridge penalty (default: 1e-4)")
    c.add_argument("--shared-temperature", action="store_true", help="one temperature for all models")
    c.add_argument("--quantile", type=float, help="latency quantile (default: 0.95)")
    c.add_argument("--out", metavar="PATH", help="estimator JSON to write (required)")

    s = sub.add_parser("simulate", parents=[common, data, knobs], help="replay a trace under one policy")
    s.add_argument("--out", metavar="PATH", help="decision log (JSONL)")
    s.add_argument("--report", metavar="PATH", help="metrics report (JSON)")
    s.add_argument("--dump-state", metavar="PATH", help="final ledger and dual state (JSON)")

    m = sub.add_parser("compare", parents=[common, data, knobs], help="run several policies on the same trace")
    m.add_argument("--policies", metavar="LIST", help="comma-separated policies (default: every policy)")
    m.add_argument("--with-ablations", action="store_true", help="append GAR-PD single-component ablation rows")
    m.add_argument("--table", metavar="PATH", help="comparison table (CSV)")
    m.add_argument("--pareto", metavar="PATH", help="accuracy/CO2 dominance flags (CSV)")
    m.add_argument("--report", metavar="PATH", help="all metrics reports (JSON)")

    w = sub.add_parser("sweep", parents=[common, data, knobs], help="vary one parameter and emit long-format CSV")
    w.add_argument("--param", choices=SWEEP_PARAMS, help="parameter to vary (required)")
    w.add_argument("--values", metavar="LIST", help="comma-separated values (required)")
    w.add_argument("--out", metavar="PATH", help="long-format CSV (stdout if omitted)")
    for sp in (g, c, s, m, w):
        sp.set_defaults(usage=sp.format_usage())
    return parser


# --- configuration resolution ------------------------------------------------


def _kv_map(items, flag) -> dict[str, float]:
    out = {}
    for text in items or ():
        key, sep, value = text.partition("=")
        try:
            if not sep or not key.strip():
                raise ValueError
            out[key.strip()] = float(value)
        except ValueError:
            raise UsageError(f"{flag} expects NAME=VALUE, got {text!r}") from None
    return out


def resolve_config(args) -> appconfig.AppConfig:
    cfg = appconfig.load(getattr(args, "config", None))
    get = lambda name: getattr(args, name, None)  # noqa: E731
    dotted = {
        "paths.trace": get("trace"),
        "paths.pool": get("pool"),
        "paths.grid": get("grid"),
        "paths.estimators": get("estimators"),
        "run.split": get("split"),
        "run.split_seed": get("split_seed"),
        "run.seed": get("seed") if args.command != "gen-trace" else None,
        "policy.name": get("policy"),
        "policy.epsilon": get("epsilon"),
        "policy.carbon_cap_g": get("cap"),
        "policy.target_accuracy": get("target_accuracy"),
        "pd.eta": get("eta"),
        "pd.budget_fraction": get("budget_frac"),
        "pd.budget_g": get("budget"),
        "pd.baseline_policy": get("baseline_policy"),
        "pd.window": get("window"),
        "pd.alpha_q": get("alpha_q"),
        "pd.alpha_ell": get("alpha_ell"),
        "slo.default_floor": get("floor"),
        "slo.latency_target_ms": get("latency_target"),
        "slo.gamma_c": get("gamma_c"),
        "slo.gamma_ell": get("gamma_ell"),
        "calibrate.l2": get("l2"),
        "calibrate.quantile": get("quantile"),
    }
    if get("tau"):
        dotted["slo.floors"] = {**cfg.slo.floors, **_kv_map(get("tau"), "--tau")}
    if get("grid_const"):
        consts = dict(cfg.grid.const)
        for text in get("grid_const"):
            region, value = parse_const_spec(text)
            consts[region] = value
        dotted["grid.const"] = consts
    if get("ablate"):
        dotted["run.ablate"] = list(get("ablate"))
    if get("no_latency_margin"):
        dotted["slo.latency_margin_in_gate"] = False
    if get("strict_bw"):
        dotted["pd.strict_bw"] = True
    if get("shared_temperature"):
        dotted["calibrate.shared_temperature"] = True
    if args.command == "calibrate":
        # the replay split does not apply; calibrate has its own --split
        dotted["run.split"] = None
    return appconfig.override(cfg, dotted)


# --- loading -----------------------------------------------------------------


def _need(value, flag):
    if value is None:
        raise UsageError(f"missing required option {flag}")
    return value


def _load_pool(cfg, model_ids) -> ModelPool:
    if cfg.paths.pool:
        pool = read_pool(cfg.paths.pool)
    else:
        builtin = ModelPool(tuple(default_pool()))
        if tuple(model_ids) != builtin.model_ids:
            raise UsageError("--pool is required for traces that do not use the built-in pool")
        pool = builtin
    if tuple(model_ids) != pool.model_ids:
        raise DataError(f"trace pool {list(model_ids)} does not match pool file {list(pool.model_ids)}")
    return pool


def _load_grid(cfg):
    if cfg.paths.grid:
        series = load_series(cfg.paths.grid)
        if cfg.grid.const:
            series = series.merged(constant_grid(cfg.grid.const))
        return series
    if cfg.grid.const:
        return constant_grid(cfg.grid.const)
    raise UsageError("one of --grid or --grid-const is required")


def _partition(cfg, requests):
    test, val, cal = split(requests, seed=cfg.run.split_seed)
    chosen = {"test": test, "validation": val, "calibration": cal, "all": list(requests)}[cfg.run.split]
    return chosen, val, cal


def _log(msg):
    print(msg, file=sys.stderr)


def load_workload(cfg) -> Workload:
    tf = read_trace(_need(cfg.paths.trace, "--trace"))
    pool = _load_pool(cfg, tf.model_ids)
    problems = validate_trace(tf.requests, pool)
    if problems:
        v = problems[0]
        raise DataError(f"trace request {v.request_index}: {v.kind} ({v.detail}); {len(problems)} problem(s) in total")
    grid = _load_grid(cfg)
    evaluate, val, cal = _partition(cfg, tf.requests)
    if not evaluate:
        raise DataError(f"the {cfg.run.split} split is empty")
    if cfg.paths.estimators:
        est = FittedEstimators.load(cfg.paths.estimators)
        check_pool_matches(est, pool)
    else:
        _log(f"fitting estimators on {len(cal)} calibration requests")
        est = fit_estimators(cal, pool, cfg.quality_config(), q=cfg.calibrate.quantile)
    return Workload(pool, grid, evaluate, val, cal, est)


def _run_configs_for(cfg, w: Workload, variants: Sequence[Variant], budget: float) -> list[RunConfig]:
    out = []
    slo = cfg.slo_config()
    target = cfg.policy.target_accuracy
    for v in variants:
        if v is Variant.GAR_TARGET and cfg.policy.target_floors is None and target is None:
            target = validation_accuracy(w, Variant.ACCMAX_FEASIBLE, slo)
            cfg = appconfig.override(cfg, {"policy.target_accuracy": target})
        out.append(cfg.run_config(cfg.policy_config(v, budget_B_g=budget)))
    return out


def _budget(cfg, w: Workload) -> float:
    probe = cfg.run_config(cfg.policy_config(Variant.GAR_PD), ablate=[])
    return resolve_budget(w.test, w.pool, probe, w.estimators, w.grid)


def _write(path, text):
    Path(path).write_text(text, encoding="utf-8")


# --- subcommands -------------------------------------------------------------


def cmd_gen_trace(args, cfg) -> int:
    out_trace = _need(args.out_trace, "--out-trace")
    out_grid = _need(args.out_grid, "--out-grid")
    spec = GenSpec.load(args.spec) if args.spec else GenSpec()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.n_requests is not None:
        changes["n_requests"] = args.n_requests
    if changes:
        spec = GenSpec.from_json({**spec.to_json(), **changes})
    trace, grid = generate(spec)
    write_trace(out_trace, trace, [m.model_id for m in spec.pool])
    write_series(out_grid, grid)
    if args.out_pool:
        write_pool(args.out_pool, spec.pool)
    _log(f"wrote {len(trace)} requests to {out_trace}")
    return EXIT_OK


def cmd_calibrate(args, cfg) -> int:
    out = _need(args.out, "--out")
    tf = read_trace(_need(cfg.paths.trace, "--trace"))
    pool = _load_pool(cfg, tf.model_ids)
    which = args.split or "calibration"
    test, val, cal = split(tf.requests, seed=cfg.run.split_seed)
    part = {"test": test, "validation": val, "calibration": cal, "all": tf.requests}[which]
    est = fit_estimators(part, pool, cfg.quality_config(), q=cfg.calibrate.quantile)
    est.save(out)
    _log(f"fitted estimators on {len(part)} {which} requests -> {out}")
    return EXIT_OK


def cmd_simulate(args, cfg) -> int:
    w = load_workload(cfg)
    variant = parse_variant(cfg.policy.name)
    budget = _budget(cfg, w) if cfg.pd.budget_g is None else cfg.pd.budget_g
    (rc,) = _run_configs_for(cfg, w, [variant], budget)
    res = run(w.test, w.pool, w.grid, w.estimators, rc, validation=w.validation, budget_B_g=budget)
    state = {"budget_B_g": res.budget_B_g, "final_lambda": res.final_lambda, "ledger": res.ledger_state}
    report = {"method": rc.name, "metrics": res.report.to_json(), "state": state, "config": cfg.to_json()}
    if res.target_tuning is not None:
        t = res.target_tuning
        report["target_tuning"] = {"floors": t.floors, "achieved": t.achieved, "shortfall": t.shortfall}
    if args.out:
        _write(args.out, res.decision_log())
    if args.report:
        _write(args.report, json.dumps(report, indent=2, sort_keys=True) + "\n")
    if args.dump_state:
        _write(args.dump_state, json.dumps(state, indent=2, sort_keys=True) + "\n")
    if not (args.out or args.report):
        print(json.dumps(report["metrics"], indent=2, sort_keys=True))
    return EXIT_OK


def _parse_policies(text) -> list[Variant]:
    if not text:
        return list(Variant)
    return [parse_variant(t.strip()) for t in text.split(",") if t.strip()]


def cmd_compare(args, cfg) -> int:
    w = load_workload(cfg)
    budget = _budget(cfg, w) if cfg.pd.budget_g is None else cfg.pd.budget_g
    configs = _run_configs_for(cfg, w, _parse_policies(args.policies), budget)
    if args.with_ablations:
        base = cfg.policy_config(Variant.GAR_PD)
        configs += [cfg.run_config(base, ablate=[name]) for name in ABLATION_NAMES]
    results = run_configs(w, configs, budget)
    table = compare_results(results)
    print(table.format())
    if args.table:
        _write(args.table, table.to_csv())
    if args.pareto:
        _write(args.pareto, pareto_csv(table.pareto()))
    if args.report:
        reports = {name: rep.to_json() for name, rep in table.rows}
        _write(args.report, json.dumps({"budget_B_g": budget, "reports": reports}, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def _parse_values(text) -> list[float]:
    try:
        vals = [float(t) for t in _need(text, "--values").split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"--values must be comma-separated numbers, got {text!r}") from None
    if not vals:
        raise UsageError("--values is empty")
    return vals


_SWEEP_DEFAULT_POLICY = {"budget_frac": "gar_pd", "eta": "gar_pd", "epsilon": "gar_eps", "cap": "gar_fixed", "tau_scale": "gar_pd"}
SWEEP_METRICS = ("macro_accuracy", "co2_g_per_request", "mean_latency_ms", "p95_latency_ms",
                 "latency_compliance", "feasibility_coverage", "fallback_rate")


def cmd_sweep(args, cfg) -> int:
    param = _need(args.param, "--param")
    values = _parse_values(args.values)
    if args.policy is None:
        cfg = appconfig.override(cfg, {"policy.name": _SWEEP_DEFAULT_POLICY[param]})
    w = load_workload(cfg)
    variant = parse_variant(cfg.policy.name)
    rows = []
    for v in values:
        point = cfg
        if param == "budget_frac":
            point = appconfig.override(cfg, {"pd.budget_fraction": v, "pd.budget_g": None})
        elif param == "eta":
            point = appconfig.override(cfg, {"pd.eta": v})
        elif param == "epsilon":
            point = appconfig.override(cfg, {"policy.epsilon": v})
        elif param == "cap":
            point = appconfig.override(cfg, {"policy.carbon_cap_g": v})
        elif param == "tau_scale":
            floors = {d: min(1.0, t * v) for d, t in cfg.slo.floors.items()}
            point = appconfig.override(cfg, {"slo.default_floor": min(1.0, cfg.slo.default_floor * v), "slo.floors": floors})
        budget = _budget(point, w) if point.pd.budget_g is None else point.pd.budget_g
        (rc,) = _run_configs_for(point, w, [variant], budget)
        res = run(w.test, w.pool, w.grid, w.estimators, rc, validation=w.validation, budget_B_g=budget)
        rep = res.report.to_json()
        for metric in SWEEP_METRICS:
            rows.append((param, v, rc.name, metric, rep[metric]))
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(("param", "value", "method", "metric", "metric_value"))
    for r in rows:
        wr.writerow([r[0], repr(r[1]), r[2], r[3], repr(r[4])])
    if args.out:
        _write(args.out, buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


COMMANDS = {
    "gen-trace": cmd_gen_trace,
    "calibrate": cmd_calibrate,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "sweep": cmd_sweep,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = None
    try:
        args = parser.parse_args(argv)
        if args.version:
            print(json.dumps({"name": "greenroute", "version": __version__}))
            return EXIT_OK
        if not args.command:
            raise UsageError(parser.format_usage() + "greenroute: error: a command is required")
        cfg = resolve_config(args)
        if args.config_dump:
            print(cfg.dump())
            return EXIT_OK
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        msg = str(exc).rstrip()
        if not msg.startswith("usage:"):
            msg = f"{getattr(args, 'usage', parser.format_usage())}greenroute: error: {msg}"
        print(msg, file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ConfigError, GreenRouteError, ValueError) as exc:
        print(f"greenroute: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"greenroute: error: {exc.filename}: {exc.strerror}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
