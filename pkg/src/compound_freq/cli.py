"""Command-line front end.

Exit codes: 0 Satisfied (or success), 1 Violated, 2 PreconditionFailed,
3 usage or configuration error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import math
import os
import sys
from pathlib import Path as FsPath

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from . import __version__
from .dde import ConstraintKind, LinearDelaySystem
from .errors import (BoundaryError, CompoundFreqError, ConfigurationError, ContractError,
                     DomainError, IncompleteSpectrumError, InsufficientSpectrumError, NotFoundError,
                     NumericError, PreconditionError, VerificationError, BracketError)
from .models import build_system, ss_attractor_radius
from .scheme import SchemeConfig, solve_tables
from .spectrum import compound_spectral_bound, leading_roots
from .sweep import Verdict, _jsonable, convergence_report, frequency_sweep, region_scan

log = logging.getLogger("compound_freq")

EXIT = {Verdict.SATISFIED: 0, Verdict.VIOLATED: 1, Verdict.PRECONDITION_FAILED: 2}
EXIT_USAGE = 3
EXIT_NUMERIC = 4

DEFAULTS = {
    "model": "suarez-schopf",
    "alpha": 0.6, "tau": None, "radius": "auto",
    "gamma": 0.1, "beta": 0.2, "kappa": 10.0,
    "lambda_bound": None, "constraint": "norm",
    "m": 2, "N": 30, "T": 15.0, "Omega": 30.0, "nu0": 0.01, "omega_step": 0.05,
    "h": None, "theta_stride": None, "path": "fast", "mirror": True, "experimental": False,
    "threads": None, "out_dir": ".", "csv": None, "json": None, "dump_solutions": None,
    "count": None, "Ns": [10, 20, 30], "Ts": [15.0, 25.0], "param": None, "points": None,
}
DEFAULT_TAU = {"suarez-schopf": 0.83, "mackey-glass": 4.5}

DEMOS = {
    "demo-ss": {"model": "suarez-schopf", "alpha": 0.6, "tau": 0.83, "radius": "auto"},
    "demo-mg": {"model": "mackey-glass", "gamma": 0.1, "beta": 0.2, "kappa": 10.0, "tau": 4.5},
}
DEMO_SCHEME = {"m": 2, "nu0": 0.01, "T": 15.0, "Omega": 30.0, "N": 30}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in str(text).split(",") if v.strip()]


def _radius(text):
    return "auto" if str(text) == "auto" else float(text)


def _add_common(p):
    S = argparse.SUPPRESS
    g = p.add_argument_group("model")
    g.add_argument("--config", help="TOML config file (flags override it); a report JSON also works")
    g.add_argument("--model", choices=["suarez-schopf", "mackey-glass"], default=S)
    g.add_argument("--alpha", type=float, default=S)
    g.add_argument("--tau", type=float, default=S)
    g.add_argument("--radius", type=_radius, default=S, help="'auto' (attractor radius R0) or a value")
    g.add_argument("--gamma", type=float, default=S)
    g.add_argument("--beta", type=float, default=S)
    g.add_argument("--kappa", type=float, default=S)
    g.add_argument("--lambda", dest="lambda_bound", type=float, default=S,
                   help="override the sector bound (moves the linear part accordingly)")
    g.add_argument("--constraint", choices=["norm", "monotone"], default=S)
    s = p.add_argument_group("scheme")
    s.add_argument("--m", type=int, default=S)
    s.add_argument("--N", type=int, default=S)
    s.add_argument("--T", type=float, default=S)
    s.add_argument("--Omega", type=float, default=S)
    s.add_argument("--nu0", type=float, default=S)
    s.add_argument("--omega-step", dest="omega_step", type=float, default=S)
    s.add_argument("--h", type=float, default=S)
    s.add_argument("--theta-stride", dest="theta_stride", type=int, default=S)
    s.add_argument("--path", choices=["paper", "fast"], default=S)
    s.add_argument("--no-mirror", dest="mirror", action="store_false", default=S)
    s.add_argument("--experimental", action="store_true", default=S)
    o = p.add_argument_group("output")
    o.add_argument("--threads", type=int, default=S, help="BLAS threads, 0 = auto")
    o.add_argument("--out-dir", dest="out_dir", default=S)
    o.add_argument("--csv", default=S, help="curve CSV path")
    o.add_argument("--json", default=S, help="report JSON path")
    o.add_argument("--dump-solutions", dest="dump_solutions", default=S,
                   help="directory for per-solution CSV tables")
    o.add_argument("-v", "--verbose", action="store_true", default=False)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="compound-freq", description="Frequency-domain checks for compound cocycles "
                "of scalar delay equations.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, text in [("roots", "leading characteristic roots and the compound spectral bound"),
                       ("sweep", "compute the alpha curve and write CSV/JSON (exit 0 on success)"),
                       ("verify", "sweep and exit with the verdict"),
                       ("scan", "verdicts over a parameter grid"),
                       ("convergence", "curve differences across N and T"),
                       ("demo-ss", "Suarez-Schopf example (alpha=0.6, tau=0.83, R=R0)"),
                       ("demo-mg", "Mackey-Glass example (gamma=0.1, beta=0.2, kappa=10, tau=4.5)")]:
        sp = sub.add_parser(name, help=text, description=text)
        _add_common(sp)
        if name == "roots":
            sp.add_argument("--count", type=int, default=argparse.SUPPRESS)
        if name == "scan":
            sp.add_argument("--param", action="append", default=argparse.SUPPRESS,
                            help="NAME=v1,v2,...; the grid is the product of all --param lists")
        if name == "convergence":
            sp.add_argument("--Ns", type=_ints, default=argparse.SUPPRESS)
            sp.add_argument("--Ts", type=_floats, default=argparse.SUPPRESS)
    return p


def _load_config(path) -> dict:
    path = FsPath(path)
    try:
        if path.suffix == ".json":
            data = json.loads(path.read_text())
            data = data.get("run", data)
        else:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    flat = {}
    for key, value in data.items():
        if isinstance(value, dict) and key != "scan":
            flat.update(value)          # [model] / [scheme] / [output] tables
        elif key == "scan":
            flat["points"] = value.get("points")
            if "param" in value:
                flat["param"] = value["param"]
        else:
            flat[key] = value
    flat = {k.replace("-", "_"): v for k, v in flat.items()}
    unknown = set(flat) - set(DEFAULTS) - {"command"}
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    flat.pop("command", None)
    return flat


def effective_options(command: str, ns: argparse.Namespace) -> dict:
    opts = dict(DEFAULTS)
    if command in DEMOS:
        opts.update(DEMOS[command])
        opts.update(DEMO_SCHEME)
    cli = {k: v for k, v in vars(ns).items() if k not in ("command", "config", "verbose")}
    if ns.config:
        opts.update(_load_config(ns.config))
    opts.update(cli)
    if opts["tau"] is None:
        opts["tau"] = DEFAULT_TAU[opts["model"]]
    if opts["threads"] is None:
        env = os.environ.get("COMPOUND_FREQ_THREADS")
        if env:
            try:
                opts["threads"] = int(env)
            except ValueError as exc:
                raise UsageError(f"COMPOUND_FREQ_THREADS must be an integer, got {env!r}") from exc
    return opts


def _model_params(opts) -> dict:
    if opts["model"] == "suarez-schopf":
        return {"alpha": opts["alpha"], "tau": opts["tau"], "radius": opts["radius"]}
    return {k: opts[k] for k in ("gamma", "beta", "kappa", "tau")}


def make_system(opts) -> LinearDelaySystem:
    sys_ = build_system(opts["model"], lambda_bound=opts["lambda_bound"], **_model_params(opts))
    if opts["constraint"] != sys_.constraint_kind.value:
        sys_ = LinearDelaySystem(sys_.a0, sys_.a1, sys_.tau, sys_.tau0, sys_.b_tilde,
                                 sys_.lambda_bound, ConstraintKind(opts["constraint"]))
    return sys_


def make_config(opts) -> SchemeConfig:
    return SchemeConfig(m=opts["m"], N=opts["N"], T=opts["T"], Omega=opts["Omega"], nu0=opts["nu0"],
                        omega_step=opts["omega_step"], h=opts["h"], theta_stride=opts["theta_stride"],
                        path=opts["path"], mirror=opts["mirror"], experimental=opts["experimental"])


def _echo(opts) -> dict:
    return {k: v for k, v in opts.items() if v is not None}


def _radius_value(opts):
    """Numeric radius behind radius="auto" (reported next to the echo, not inside it)."""
    if opts["model"] != "suarez-schopf" or opts["radius"] != "auto":
        return None
    try:
        return ss_attractor_radius(opts["alpha"], opts["tau"])
    except CompoundFreqError:
        return None


def _out_path(opts, key, default_name):
    if opts[key]:
        return FsPath(opts[key])
    return FsPath(opts["out_dir"]) / default_name


def _progress(k, N):
    log.info("column %d/%d", k, N)


def _cmd_roots(opts):
    sys_ = make_system(opts)
    count = opts["count"] or max(opts["m"], 2)
    spec = leading_roots(sys_, count=count)
    try:
        bound = compound_spectral_bound(spec, opts["m"])
    except InsufficientSpectrumError:
        bound = None
    roots = spec.leading(count)
    out = {"roots": [{"re": z.real, "im": z.imag} for z in roots],
           "spectral_bound_m": bound if bound is None or math.isfinite(bound) else "-inf",
           "m": opts["m"], "verified_count": spec.verified_count,
           "search_box": spec.search_box.as_dict(), "radius_value": _radius_value(opts),
           "run": _echo(opts)}
    text = json.dumps(out, indent=2)
    print(text)
    if opts["json"]:
        FsPath(opts["json"]).write_text(text + "\n")
    return 0


def _cmd_sweep(opts, exit_by_verdict, stem="", echo=True):
    sys_ = make_system(opts)
    cfg = make_config(opts)
    tables = None
    if opts["dump_solutions"]:
        tables = solve_tables(sys_, cfg)
        d = FsPath(opts["dump_solutions"])
        d.mkdir(parents=True, exist_ok=True)
        for k, tab in tables.basis.items():
            tab.to_csv(d / f"solution_k{k}.csv")
        tables.fundamental.to_csv(d / "solution_fundamental.csv")
    rep = frequency_sweep(sys_, cfg, tables=tables, threads=opts["threads"] or None,
                          progress=_progress)
    out_dir = FsPath(opts["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = _out_path(opts, "csv", f"{stem}curve.csv")
    json_path = _out_path(opts, "json", f"{stem}report.json")
    if len(rep.omegas):
        rep.write_csv(csv_path)
    payload = rep.as_dict()
    payload["run"] = _echo(opts)
    payload["radius_value"] = _radius_value(opts)
    json_path.write_text(json.dumps(_jsonable(payload), indent=2) + "\n")
    summary = (f"verdict={rep.verdict.value} margin={rep.margin:.6g} threshold={rep.threshold:.6g} "
               f"spectral_bound={rep.spectral_bound:.6g}")
    if rep.near_threshold:
        summary += " (near-threshold)"
    print(summary)
    print(f"wrote {json_path}" + (f" and {csv_path}" if len(rep.omegas) else ""))
    return EXIT[rep.verdict] if exit_by_verdict else 0


def _parse_params(specs) -> dict:
    grid = {}
    for spec in specs or []:
        if "=" not in spec:
            raise UsageError(f"--param expects NAME=v1,v2,..., got {spec!r}")
        name, values = spec.split("=", 1)
        vals = [v for v in values.split(",") if v.strip()]
        grid[name.strip()] = [v if v == "auto" else float(v) for v in vals]
    return grid


def _cmd_scan(opts):
    cfg = make_config(opts)
    if opts["points"]:
        points = [dict(p) for p in opts["points"]]
    else:
        grid = _parse_params(opts["param"])
        if not grid:
            raise UsageError("scan needs --param NAME=values (or [scan] points in the config)")
        base = _model_params(opts)
        names = list(grid)
        points = []
        for combo in itertools.product(*(grid[n] for n in names)):
            pt = dict(base)
            pt.update(zip(names, combo))
            points.append(pt)
    results = region_scan(opts["model"], points, cfg, progress=lambda p: log.info("point %s", p))
    payload = {"model": opts["model"], "points": [r.as_dict() for r in results], "run": _echo(opts)}
    json_path = _out_path(opts, "json", "scan.json")
    FsPath(json_path).parent.mkdir(parents=True, exist_ok=True)
    json_path.write_text(json.dumps(_jsonable(payload), indent=2) + "\n")
    for r in results:
        extra = f" margin={r.margin:.6g}" if math.isfinite(r.margin) else ""
        print(f"{r.params}: {r.status}{extra}{' ' + r.reason if r.reason else ''}")
    return 0 if all(r.status == Verdict.SATISFIED.value for r in results) else 1


def _cmd_convergence(opts):
    sys_ = make_system(opts)
    cfg = make_config(opts)
    rows = convergence_report(sys_, cfg, opts["Ns"], opts["Ts"])
    payload = {"rows": [r.as_dict() for r in rows], "run": _echo(opts)}
    json_path = _out_path(opts, "json", "convergence.json")
    FsPath(json_path).parent.mkdir(parents=True, exist_ok=True)
    json_path.write_text(json.dumps(_jsonable(payload), indent=2) + "\n")
    for r in rows:
        print(f"{r.vary}: (N={r.N_from}, T={r.T_from:g}) -> (N={r.N_to}, T={r.T_to:g})  "
              f"sup|diff|={r.sup_diff:.3e}  {'stable' if r.stabilized else 'not stable'}")
    return 0


_NUMERIC = (NumericError, BoundaryError, VerificationError, IncompleteSpectrumError,
            InsufficientSpectrumError, NotFoundError, BracketError)
_USAGE = (ConfigurationError, DomainError, ContractError, PreconditionError)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s", stream=sys.stderr)
        opts = effective_options(ns.command, ns)
        if ns.command == "roots":
            return _cmd_roots(opts)
        if ns.command == "sweep":
            return _cmd_sweep(opts, exit_by_verdict=False)
        if ns.command == "verify":
            return _cmd_sweep(opts, exit_by_verdict=True)
        if ns.command in DEMOS:
            return _cmd_sweep(opts, exit_by_verdict=True, stem=ns.command.replace("-", "_") + "_")
        if ns.command == "scan":
            return _cmd_scan(opts)
        if ns.command == "convergence":
            return _cmd_convergence(opts)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (_USAGE + (ValueError,)) as exc:
        print(f"configuration error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _NUMERIC as exc:
        print(f"numeric error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
