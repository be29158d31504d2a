"""Command-line front end.

Subcommands ``calibrate``, ``oc``, ``table``, ``constants`` and ``simulate``.
Settings come from built-in defaults, then ``--config <file.json>``, then
flags.  Every output file embeds the resolved configuration and the package
version; feeding that configuration back reproduces the file.

Exit codes: 0 success, 1 numerical failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from . import asymptotics as asy
from . import montecarlo as mc
from . import oc
from .detectors import SR, SR_R, SRP, Procedure, resolve_head_start
from .exceptions import ConfigurationError, NumericalError, UnsupportedModelError
from .model import get_model

DEFAULT_GAMMAS = [50.0, 100.0, 500.0, 1000.0, 10000.0]


@dataclass
class RunConfig:
    model: str = "beta"
    model_params: dict = field(default_factory=dict)
    procedures: list = field(default_factory=lambda: [SR])
    head_start: str = "mu_A"
    gamma: float | None = None
    threshold: float | None = None
    gammas: list = field(default_factory=lambda: list(DEFAULT_GAMMAS))
    thresholds: dict | None = None  # optional {gamma: {"SR": A, "SRP": A}} for `table`
    grid_n: int = oc.DEFAULT_GRID_N
    nu_max: int = oc.DEFAULT_NU_MAX
    runs: int = 100_000
    seed: int | None = None
    step_cap: int | None = None
    parallel_width: int = 1
    estimators: list = field(default_factory=lambda: ["arl"])
    nu: int = 0
    nu_far: int | None = None
    zeta: float | None = None
    varkappa: float | None = None
    series_cap: int = 10_000
    mc_paths: int = 100_000
    mc_seed: int = 0
    out: str | None = None
    format: str = "csv"

    def validate(self, command: str) -> None:
        if command in ("calibrate",) and self.gamma is None:
            raise ConfigurationError("calibrate needs --gamma")
        if command in ("calibrate", "oc", "simulate"):
            if (self.gamma is None) == (self.threshold is None):
                raise ConfigurationError("set exactly one of gamma and threshold")
        if command in ("calibrate", "oc", "simulate") and not self.procedures:
            raise ConfigurationError("no procedures requested")
        for p in self.procedures:
            if p not in (SR, SR_R, SRP):
                raise ConfigurationError(f"unknown procedure {p!r}; choose from SR, SR_r, SRP")
        if self.gamma is not None and not self.gamma > 1:
            raise ConfigurationError("gamma must exceed 1")
        if self.threshold is not None and not self.threshold > 0:
            raise ConfigurationError("threshold must be positive")
        if self.grid_n < 64:
            raise ConfigurationError("grid_n must be at least 64")
        if self.format not in ("csv", "json"):
            raise ConfigurationError("format must be csv or json")
        if command == "simulate" and self.seed is None:
            raise ConfigurationError("simulate needs an explicit --seed")
        _parse_head_start(self.head_start)


def _parse_head_start(text: str):
    if text in ("zero", "mu_A", "equalizer"):
        return text
    if text.startswith("value:"):
        try:
            r = float(text[len("value:"):])
        except ValueError:
            raise ConfigurationError(f"bad head start {text!r}") from None
        if r < 0:
            raise ConfigurationError("head start must be nonnegative")
        return r
    raise ConfigurationError(f"head start must be zero, mu_A, equalizer or value:<r>, got {text!r}")


# ---------------------------------------------------------------------------
# helpers


def _model(cfg: RunConfig):
    return get_model(cfg.model, **cfg.model_params)


def _procedure(cfg: RunConfig, kind: str, model) -> Procedure:
    if kind != SR_R:
        return Procedure(kind)
    hs = _parse_head_start(cfg.head_start)
    if hs == "zero":
        return Procedure.sr_r(0.0)
    if hs == "equalizer":
        return Procedure.sr_r(asy.design_head_start("equalizer", model))
    return Procedure.sr_r(hs)


def _zeta(cfg: RunConfig, model) -> tuple[float, float]:
    if cfg.zeta is not None and cfg.varkappa is not None:
        return cfg.zeta, cfg.varkappa
    est = asy.overshoot_constants(model, cfg.series_cap, cfg.mc_paths, cfg.mc_seed)
    return (cfg.zeta if cfg.zeta is not None else est.zeta,
            cfg.varkappa if cfg.varkappa is not None else est.varkappa)


def _constants(cfg: RunConfig, model) -> asy.AsymptoticConstants:
    zeta, varkappa = _zeta(cfg, model)
    over = asy.OvershootConstants(zeta, 0.0, varkappa, 0.0, 0, 0)
    return asy.asymptotic_constants(model, overshoot=over)


def _threshold(cfg: RunConfig, model, proc: Procedure) -> float:
    if cfg.threshold is not None:
        return cfg.threshold
    return oc.calibrate_threshold(model, proc, cfg.gamma, cfg.grid_n)


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".6g")
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def _envelope(command: str, cfg: RunConfig, payload: dict) -> dict:
    return {"toolkit": "srdetect", "version": __version__, "command": command,
            "config": _jsonable(asdict(cfg)), **_jsonable(payload)}


def write_csv(path: Path, header: list[str], rows: list[list], cfg: RunConfig, command: str) -> None:
    """CSV with two ``#`` provenance lines, then a header row."""
    buf = io.StringIO()
    buf.write(f"# srdetect {__version__} {command}\n")
    buf.write("# config " + json.dumps(_jsonable(asdict(cfg)), sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue())


def _emit(command: str, cfg: RunConfig, payload: dict, tables: dict[str, tuple[list, list]] | None = None) -> dict:
    doc = _envelope(command, cfg, payload)
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{command}.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        if tables and cfg.format == "csv":
            for name, (header, rows) in tables.items():
                write_csv(out / f"{name}.csv", header, rows, cfg, command)
    return doc


def _map(cfg: RunConfig, fn, items):
    if cfg.parallel_width <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(cfg.parallel_width) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# commands


def cmd_calibrate(cfg: RunConfig) -> dict:
    cfg.validate("calibrate")
    model = _model(cfg)
    zeta, _ = _zeta(cfg, model)
    results = {}
    for kind in cfg.procedures:
        proc = _procedure(cfg, kind, model)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            A = oc.calibrate_threshold(model, proc, cfg.gamma, cfg.grid_n)
        results[proc.tag] = {
            "threshold": A,
            "arl": oc.arl(model, proc, A, cfg.grid_n),
            "approx_threshold": cfg.gamma * zeta,
            "warnings": [str(w.message) for w in caught],
        }
    return _emit("calibrate", cfg, {"gamma": cfg.gamma, "zeta": zeta, "results": results})


def cmd_oc(cfg: RunConfig) -> dict:
    cfg.validate("oc")
    model = _model(cfg)
    summary, tables = {}, {}
    for kind in cfg.procedures:
        proc = _procedure(cfg, kind, model)
        A = _threshold(cfg, model, proc)
        res = oc.operating_characteristics(model, proc, A, cfg.nu_max, cfg.grid_n)
        summary[proc.tag] = {
            "threshold": A,
            "head_start": res.head_start,
            "arl": res.arl_false_alarm,
            "sadd": res.sadd,
            "add_infinity": res.add_infinity,
            "argmax_kind": res.argmax_kind,
            "lower_bound": res.lower_bound,
            "delay_curve": res.delay_curve,
            "survival": res.survival,
        }
        rows = [[nu, d, p] for nu, (d, p) in enumerate(zip(res.delay_curve, res.survival))]
        tables[f"oc_{kind}"] = (["nu", "conditional_delay", "survival"], rows)
    return _emit("oc", cfg, {"procedures": summary}, tables)


TABLE_COLUMNS = [
    "gamma",
    "SR_A", "SR_arl", "SR_arl_approx", "SR_sadd", "SR_sadd_approx",
    "SRP_A", "SRP_arl", "SRP_arl_approx", "SRP_sadd", "SRP_sadd_approx",
    "SRr_A", "SRr_r", "SRr_arl", "SRr_arl_approx", "SRr_sadd", "SRr_sadd_approx",
    "lower_bound", "lower_bound_approx",
]


def table_row(model, gamma: float, consts: asy.AsymptoticConstants, n: int, nu_max: int,
              thresholds: dict | None = None) -> dict:
    """One column of the SR / SRP / SR-r comparison at ARL level ``gamma``.

    SR-r runs at the SRP threshold with head start ``mu_A``.  Thresholds are
    calibrated unless given in ``thresholds`` (keys ``"SR"``, ``"SRP"``).
    """
    thresholds = thresholds or {}
    A_sr = thresholds.get(SR) or oc.calibrate_threshold(model, Procedure.sr(), gamma, n)
    A_srp = thresholds.get(SRP) or oc.calibrate_threshold(model, Procedure.srp(), gamma, n)
    sr = oc.operating_characteristics(model, Procedure.sr(), A_sr, nu_max, n)
    srp = oc.srp_characteristics(model, A_srp, nu_max, n)
    mu = oc.quasi_stationary(model, A_srp, n).mean
    srr = oc.operating_characteristics(model, Procedure.sr_r(mu), A_srp, nu_max, n)
    zeta = consts.zeta
    return {
        "gamma": gamma,
        "SR_A": A_sr,
        "SR_arl": sr.arl_false_alarm,
        "SR_arl_approx": asy.approx_arl(A_sr, zeta),
        "SR_sadd": sr.sadd,
        "SR_sadd_approx": asy.approx_sadd("SR", consts, gamma=gamma),
        "SRP_A": A_srp,
        "SRP_arl": srp.arl_false_alarm,
        "SRP_arl_approx": asy.approx_arl(A_srp, zeta, mu),
        "SRP_sadd": srp.sadd,
        "SRP_sadd_approx": asy.approx_sadd("SRP", consts, gamma=gamma),
        "SRr_A": A_srp,
        "SRr_r": mu,
        "SRr_arl": srr.arl_false_alarm,
        "SRr_arl_approx": asy.approx_arl(A_srp, zeta, mu),
        "SRr_sadd": srr.sadd,
        "SRr_sadd_approx": asy.approx_sadd("SR_r", consts, gamma=gamma),
        "lower_bound": sr.lower_bound,
        "lower_bound_approx": asy.approx_sadd("lower_bound", consts, gamma=gamma),
    }


def cmd_table(cfg: RunConfig) -> dict:
    cfg.validate("table")
    model = _model(cfg)
    consts = _constants(cfg, model)
    given = {float(k): v for k, v in (cfg.thresholds or {}).items()}
    rows = _map(cfg, lambda g: table_row(model, g, consts, cfg.grid_n, cfg.nu_max, given.get(float(g))),
                [float(g) for g in cfg.gammas])
    tables = {"table": (TABLE_COLUMNS, [[r[c] for c in TABLE_COLUMNS] for r in rows])}
    payload = {"zeta": consts.zeta, "varkappa": consts.varkappa, "c_infinity": consts.c_infinity,
               "c_zero": consts.c_at(0.0), "rows": rows}
    return _emit("table", cfg, payload, tables)


def cmd_constants(cfg: RunConfig) -> dict:
    cfg.validate("constants")
    model = _model(cfg)
    over = asy.overshoot_constants(model, cfg.series_cap, cfg.mc_paths, cfg.mc_seed)
    payload: dict[str, Any] = {
        "kl": model.kl,
        "zeta": {"value": over.zeta, "se": over.zeta_se, "provenance": "series_mc"},
        "varkappa": {"value": over.varkappa, "se": over.varkappa_se, "provenance": "series_mc"},
        "series_terms_used": over.terms_used,
        "mc_paths": over.mc_paths,
    }
    try:
        laws = asy.stationary_laws(model)
    except UnsupportedModelError as exc:
        laws = None
        payload["stationary_laws"] = {"error": str(exc)}
    if laws is not None:
        quad = {
            "c_zero": asy.constant_c(model, 0.0, laws, "quadrature"),
            "c_infinity": asy.constant_c(model, asy.INFINITY, laws, "quadrature"),
            "r_star": asy.design_head_start("equalizer", model, laws=laws, method="quadrature"),
        }
        payload["stationary_laws"] = {
            "x_max": laws.x_max,
            "tail_mass_st": laws.tail_st,
            "tail_mass_tilde": laws.tail_tilde,
            "eigenvalue_st": laws.eigenvalue_st,
            "eigenvalue_tilde": laws.eigenvalue_tilde,
        }
        payload["quadrature"] = quad
    if "c_r" in model.closed_forms:
        payload["closed_form"] = {
            "c_zero": asy.constant_c(model, 0.0, method="closed_form"),
            "c_infinity": asy.constant_c(model, asy.INFINITY, method="closed_form"),
            "r_star": asy.design_head_start("equalizer", model, method="closed_form"),
        }
    rows = []
    if laws is not None:
        for A in (10.0, 100.0, 1000.0, 10000.0):
            q = oc.quasi_stationary(model, A, cfg.grid_n)
            rows.append([A, q.mean, math.log(A), q.mean - math.log(A), q.eigenvalue])
    payload["mu_A"] = [dict(zip(["A", "mu_A", "log_A", "mu_A_minus_log_A", "eigenvalue"], r)) for r in rows]
    tables = {"mu_A": (["A", "mu_A", "log_A", "mu_A_minus_log_A", "eigenvalue"], rows)}
    return _emit("constants", cfg, payload, tables)


def cmd_simulate(cfg: RunConfig) -> dict:
    cfg.validate("simulate")
    model = _model(cfg)
    mcfg = mc.McConfig(cfg.runs, cfg.seed, cfg.step_cap, cfg.parallel_width)
    results = {}
    for kind in cfg.procedures:
        proc = _procedure(cfg, kind, model)
        A = _threshold(cfg, model, proc)
        out: dict[str, Any] = {"threshold": A}
        for name in cfg.estimators:
            if name == "arl":
                est = mc.estimate_arl(model, proc, A, mcfg)
                ref = oc.arl(model, proc, A, cfg.grid_n)
            elif name == "add":
                est = mc.estimate_add(model, proc, A, cfg.nu, mcfg)
                ref = oc.conditional_delay(model, proc, A, cfg.nu, cfg.grid_n)
            elif name == "stadd":
                if kind != SR:
                    continue
                nu_far = cfg.nu_far if cfg.nu_far is not None else int(round(20 * oc.arl(model, proc, A, cfg.grid_n)))
                est = mc.estimate_stadd(model, A, nu_far, mcfg)
                ref = oc.lower_bound(model, A, cfg.grid_n)
            elif name == "martingale":
                if kind == SRP:
                    continue
                r = resolve_head_start(proc, model, A, n=cfg.grid_n)
                check = mc.verify_martingale(model, A, r, mcfg)
                est, ref = check.difference, 0.0
                out["martingale_sides"] = {"lhs": asdict(check.lhs), "rhs": asdict(check.rhs)}
            else:
                raise ConfigurationError(f"unknown estimator {name!r}")
            out[name] = {**asdict(est), "solver": ref, "z": est.z_score(ref)}
        results[proc.tag] = out
    return _emit("simulate", cfg, {"results": results})


COMMANDS = {
    "calibrate": cmd_calibrate,
    "oc": cmd_oc,
    "table": cmd_table,
    "constants": cmd_constants,
    "simulate": cmd_simulate,
}


# ---------------------------------------------------------------------------
# argument parsing


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="srdetect", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON file with RunConfig fields")
        p.add_argument("--model")
        p.add_argument("--model-param", action="append", metavar="KEY=VALUE", dest="model_param")
        p.add_argument("--gamma", type=float)
        p.add_argument("--gammas", type=float, nargs="+")
        p.add_argument("--threshold", type=float)
        p.add_argument("--procedure", action="append", choices=[SR, SR_R, SRP])
        p.add_argument("--head-start", dest="head_start", help="zero | mu_A | equalizer | value:<r>")
        p.add_argument("--grid-n", dest="grid_n", type=int)
        p.add_argument("--nu-max", dest="nu_max", type=int)
        p.add_argument("--runs", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--step-cap", dest="step_cap", type=int)
        p.add_argument("--parallel-width", dest="parallel_width", type=int)
        p.add_argument("--estimator", action="append", choices=["arl", "add", "stadd", "martingale"])
        p.add_argument("--nu", type=int)
        p.add_argument("--nu-far", dest="nu_far", type=int)
        p.add_argument("--zeta", type=float)
        p.add_argument("--varkappa", type=float)
        p.add_argument("--series-cap", dest="series_cap", type=int)
        p.add_argument("--mc-paths", dest="mc_paths", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--format", choices=["csv", "json"])
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    data: dict[str, Any] = {}
    if args.config is not None:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {args.config}: {exc}") from None
        if "config" in data and isinstance(data["config"], dict):
            data = data["config"]  # an emitted JSON document can be replayed directly
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    flags = vars(args)
    for name in known:
        if flags.get(name) is not None:
            data[name] = flags[name]
    if args.procedure:
        data["procedures"] = args.procedure
    if args.estimator:
        data["estimators"] = args.estimator
    if args.model_param:
        params = dict(data.get("model_params", {}))
        for item in args.model_param:
            key, sep, value = item.partition("=")
            if not sep:
                raise ConfigurationError(f"model parameter must be KEY=VALUE, got {item!r}")
            params[key] = float(value)
        data["model_params"] = params
    if data.get("threshold") is not None and args.gamma is None and args.threshold is not None:
        data["gamma"] = None
    if args.gamma is not None and args.threshold is None:
        data["threshold"] = None
    return RunConfig(**data)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = resolve_config(args)
        doc = COMMANDS[args.command](cfg)
    except (_UsageError, ConfigurationError, UnsupportedModelError) as exc:
        print(f"srdetect: error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"srdetect: numerical failure: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(doc, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
