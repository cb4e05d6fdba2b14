"""Experiment harness: gamma scans, h-sweeps, condition checks, report emission.

Subcommands
-----------
run               full pipeline at one base point: admissibility report, WKB
                  solve with identity checks, growth fit, pseudomode h-sweep,
                  decay fits; artifacts land in --out.
gamma-scan        membership raster of the admissible set over a rectangle.
check-conditions  sampled pointwise conditions (C1)/(C2) and the divergence
                  trends (H1)-(H3).
bound-fit         amplitude growth diagnostics only.

Examples
--------
  cmag-wkb run --builtin oscillating --x0 pi/3,-pi/2 --N 1 --h 0.1:0.003:8 --out out/
  cmag-wkb run --builtin polynomial --a 4 --b 0.3+i --c 1 --x0 0,0 --N 2 --out out/
  cmag-wkb gamma-scan --builtin oscillating --region=-2pi,2pi,-2pi,2pi --n 257 --out raster.csv
  (use the --option=value form for values that begin with a minus sign)
  cmag-wkb check-conditions --builtin exponential --c 0.4 --h 1 --region -3,3,-3,3

Exit codes: 0 success, 2 config error, 3 admissibility rejection,
4 internal identity failure, 5 quadrature resolution refusal.

Environment: CMAG_WKB_WORKERS sets the h-sweep worker count (default 1);
outputs are gathered in sweep order regardless of completion order.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fieldmodel, numop, pseudomode, wkb
from .cseries import CurveDivisionError, SeriesDivisionError
from .fieldmodel import ConditionCheckConfig, check_C, check_H, compute_Q, make_field
from .pseudomode import (
    PhaseNotPositiveError,
    Pseudomode,
    QuadratureResolutionError,
    fit_decay,
    make_pseudomode,
    residual_finite_difference,
    residual_series_exact,
    select_cutoff,
)
from .wkb import DegenerateFieldError, TransportIdentityError, fit_growth, solve_wkb

CSV_HEADER = "# cmag-wkb v1"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_GAMMA = 3
EXIT_IDENTITY = 4
EXIT_QUADRATURE = 5


class ConfigError(ValueError):
    pass


# ----------------------------------------------------------------------------
# value parsing (accepts pi-fractions and complex literals)
# ----------------------------------------------------------------------------

_PI_RE = re.compile(r"^([+-]?)(\d*\.?\d*)\s*pi(?:\s*/\s*(\d+\.?\d*))?$")


def parse_scalar(tok):
    tok = tok.strip().lower()
    m = _PI_RE.match(tok)
    if m:
        sign = -1.0 if m.group(1) == "-" else 1.0
        coeff = float(m.group(2)) if m.group(2) else 1.0
        den = float(m.group(3)) if m.group(3) else 1.0
        return sign * coeff * math.pi / den
    try:
        return float(tok)
    except ValueError as exc:
        raise ConfigError(f"cannot parse number {tok!r}") from exc


def parse_point(text):
    parts = text.split(",")
    if len(parts) != 2:
        raise ConfigError(f"point must be 'x1,x2', got {text!r}")
    return (parse_scalar(parts[0]), parse_scalar(parts[1]))


def parse_region(text):
    parts = text.split(",")
    if len(parts) != 4:
        raise ConfigError(f"region must be 'x1min,x1max,x2min,x2max', got {text!r}")
    return tuple(parse_scalar(p) for p in parts)


def parse_complex(text):
    s = str(text).strip().replace(" ", "").replace("I", "i")
    s = re.sub(r"(?<![\d.])i", "1i", s)
    s = s.replace("i", "j")
    try:
        return complex(s)
    except ValueError as exc:
        raise ConfigError(f"cannot parse complex number {text!r}") from exc


def parse_sweep(text):
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"sweep must be 'h_max:h_min:count', got {text!r}")
    h_max, h_min, count = parse_scalar(parts[0]), parse_scalar(parts[1]), int(parts[2])
    if not 0 < h_min < h_max:
        raise ConfigError("need 0 < h_min < h_max")
    if count < 2:
        raise ConfigError("need at least 2 sweep points")
    return np.geomspace(h_max, h_min, count)


# ----------------------------------------------------------------------------
# field construction from config
# ----------------------------------------------------------------------------

def field_from_config(cfg, cap):
    name = cfg.get("builtin") or cfg.get("field")
    if not name:
        raise ConfigError("no field given (--builtin or config 'builtin')")
    params = dict(cfg.get("params") or {})
    x0 = tuple(cfg.get("x0") or (0.0, 0.0))
    if name == "polynomial":
        defaults = {"a": 1.0, "b": 1j, "c": 1.0}
        for k, dv in defaults.items():
            if params.get(k) is None:
                params[k] = dv
            params[k] = parse_complex(params[k]) if isinstance(params[k], str) else complex(params[k])
        if "R" in params and params["R"] is not None:
            params["R"] = {
                (int(m), int(n)): float(v)
                for (m, n), v in (
                    params["R"].items() if isinstance(params["R"], dict)
                    else (((r[0], r[1]), r[2]) for r in params["R"])
                )
            }
    if name == "miller_simon" and isinstance(params.get("c"), str):
        params["c"] = parse_complex(params["c"])
    try:
        return make_field(name, params, base_point=x0, cap=cap)
    except (ValueError, fieldmodel.FieldConsistencyError) as exc:
        raise ConfigError(str(exc)) from exc


def _field_config(args, x0):
    params = {}
    if args.builtin == "polynomial":
        params = {"a": args.a if args.a is not None else 1.0,
                  "b": args.b if args.b is not None else 1j,
                  "c": parse_complex(args.c) if args.c else 1.0}
        if args.R:
            params["R"] = json.loads(args.R)
    elif args.builtin == "miller_simon":
        params = {"c": parse_complex(args.c) if args.c else 1 + 1j, "alpha": args.alpha}
    elif args.builtin == "exponential":
        params = {"c": parse_scalar(args.c) if args.c else 0.4}
    return {"builtin": args.builtin, "params": params, "x0": list(x0)}


# ----------------------------------------------------------------------------
# artifact writers
# ----------------------------------------------------------------------------

def write_residual_csv(path, reports):
    lines = [CSV_HEADER, "h,N_used,evaluator,u_norm,residual_norm,ratio,quad_points,tail_estimate"]
    for r in reports:
        lines.append(
            f"{float(r.h)!r},{r.N_used},{r.evaluator},{float(r.u_norm)!r},"
            f"{float(r.residual_norm)!r},{float(r.ratio)!r},{r.quadrature_points},"
            f"{float(r.tail_estimate)!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def write_gamma_csv(path, xs, ys, reports):
    lines = [CSV_HEADER, "x1,x2,in_gamma,Q1,Q2,Q3,det2,imA_norm"]
    for i, u in enumerate(xs):
        for j, v in enumerate(ys):
            r = reports[i, j]
            lines.append(
                f"{float(u)!r},{float(v)!r},{int(r.in_gamma)},{float(r.Q1)!r},"
                f"{float(r.Q2)!r},{float(r.Q3)!r},{float(r.det2)!r},{float(r.imA_norm)!r}"
            )
    Path(path).write_text("\n".join(lines) + "\n")


def gamma_report_dict(rep):
    return {
        "Q1": rep.Q1, "Q2": rep.Q2, "Q3": rep.Q3, "det2": rep.det2,
        "imA_norm": rep.imA_norm, "B0": [rep.B0.real, rep.B0.imag],
        "dzbarB": [rep.dzbarB.real, rep.dzbarB.imag],
        "in_gamma": rep.in_gamma, "failed_conditions": list(rep.failed_conditions),
    }


# ----------------------------------------------------------------------------
# sweep worker (reconstructs everything from picklable pieces)
# ----------------------------------------------------------------------------

def _sweep_worker(task):
    field_cfg, cap, sol_json, cutoff, rule, n_fixed, m_growth, h = task
    field = field_from_config(field_cfg, cap)
    sol = wkb.WKBSolution.from_json(sol_json)
    pm = Pseudomode(
        field=field, sol=sol,
        cutoff=pseudomode.CutoffSpec(*cutoff),
        N_rule=rule, N_fixed=n_fixed, m_growth=m_growth,
    )
    return residual_series_exact(pm, h)


def run_sweep(pm, hs, field_cfg, cap):
    workers = int(os.environ.get("CMAG_WKB_WORKERS", "1"))
    if workers <= 1:
        return [residual_series_exact(pm, h) for h in hs]
    cut = pm.cutoff
    tasks = [
        (field_cfg, cap, pm.sol.to_json(),
         (cut.r_in, cut.r_out, cut.delta, cut.M1, cut.M2),
         pm.N_rule, pm.N_fixed, pm.m_growth, float(h))
        for h in hs
    ]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sweep_worker, tasks))


# ----------------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved run configuration (emitted with the artifacts)."""

    field: dict
    base_point: tuple
    degree_cap: int
    N: int
    adaptive: bool
    h_max: float
    h_min: float
    h_count: int
    delta_override: float | None
    evaluator: str
    grid_n: int
    out_dir: str
    seed: int = 0

    def __post_init__(self):
        if not self.h_min < self.h_max:
            raise ConfigError("need h_min < h_max")
        if self.h_count < 2:
            raise ConfigError("need at least 2 sweep points")

    def to_json(self):
        d = dict(self.__dict__)
        d["field"] = _jsonable(self.field)
        d["base_point"] = list(self.base_point)
        return json.dumps(d, indent=1, sort_keys=True, default=str)


def _jsonable(obj):
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def cmd_run(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cap = args.D
    if args.config:
        # config file first; explicitly given flags override its entries
        field_cfg = json.loads(Path(args.config).read_text())
        if args.builtin is not None:
            field_cfg["builtin"] = args.builtin
        if args.x0 is not None:
            field_cfg["x0"] = list(parse_point(args.x0))
        params = dict(field_cfg.get("params") or {})
        for key, val in (("a", args.a), ("b", args.b), ("c", args.c)):
            if val is not None:
                params[key] = val
        if args.R:
            params["R"] = json.loads(args.R)
        field_cfg["params"] = params
        x0 = tuple(field_cfg.get("x0") or (0.0, 0.0))
    else:
        x0 = parse_point(args.x0 or "0,0")
        ns = argparse.Namespace(**{**vars(args), "builtin": args.builtin or "oscillating"})
        field_cfg = _field_config(ns, x0)
    field = field_from_config(field_cfg, cap)
    hs = parse_sweep(args.h)
    cfg = ExperimentConfig(
        field=field_cfg, base_point=tuple(x0), degree_cap=cap, N=args.N,
        adaptive=bool(args.adaptive), h_max=float(hs[0]), h_min=float(hs[-1]),
        h_count=len(hs), delta_override=args.delta, evaluator=args.evaluator,
        grid_n=args.grid_n, out_dir=str(out), seed=args.seed,
    )
    (out / "config.json").write_text(cfg.to_json())

    report = compute_Q(field)
    (out / "gamma_report.json").write_text(json.dumps(gamma_report_dict(report), indent=1, sort_keys=True))
    if not report.in_gamma:
        print(f"base point {x0} rejected: {', '.join(report.failed_conditions)}")
        return EXIT_GAMMA

    n_solve = max(args.N, args.jmax if args.adaptive else args.N)
    sol = solve_wkb(field, N=n_solve)
    (out / "wkb_solution.json").write_text(sol.to_json())
    print(f"WKB solve ok: mu = {sol.mu}, N = {sol.N}, "
          f"worst identity residual = {max(sol.residual_maxima.values()):.3e}")

    bound = fit_growth(sol)
    (out / "bound_fit.json").write_text(json.dumps({
        "m_fitted": bound.m_fitted, "per_j_norms": list(bound.per_j_norms),
        "polydisc": list(bound.polydisc), "sigma_fitted": bound.sigma_fitted,
    }, indent=1, sort_keys=True))

    rule = "adaptive" if args.adaptive else "fixed"
    pm = make_pseudomode(field, sol, report=report, N_rule=rule, N=args.N,
                         m_growth=bound.m_fitted if args.adaptive else None,
                         delta_override=args.delta)
    reports = run_sweep(pm, hs, field_cfg, cap)
    if args.evaluator in ("fd", "both"):
        for h in ([hs[len(hs) // 2]] if args.evaluator == "both" else hs):
            reports.append(residual_finite_difference(pm, float(h), n=args.grid_n))
    write_residual_csv(out / "residuals.csv", reports)

    series_reports = [r for r in reports if r.evaluator == "series_exact"]
    fits = {}
    for model in ("power", "stretched"):
        try:
            f = fit_decay(series_reports, model=model)
            fits[model] = {"slope": f.slope, "constant": f.constant, "r_squared": f.r_squared}
        except ValueError as exc:
            fits[model] = {"error": str(exc)}
    (out / "decay_fit.json").write_text(json.dumps(fits, indent=1, sort_keys=True))
    if "slope" in fits["power"]:
        print(f"sweep done: {len(series_reports)} points, "
              f"power-law slope = {fits['power']['slope']:.3f}")
    else:
        print(f"sweep done: {len(series_reports)} points, "
              f"no decay fit ({fits['power']['error']})")
    return EXIT_OK


def cmd_gamma_scan(args):
    region = parse_region(args.region)
    params_cfg = _field_config(args, (0.0, 0.0))

    def field_at(u, v):
        cfg = dict(params_cfg)
        cfg["x0"] = (u, v)
        return field_from_config(cfg, cap=2)

    xs, ys, reports = fieldmodel.gamma_scan(field_at, region, args.n)
    write_gamma_csv(args.out, xs, ys, reports)
    members = sum(int(reports[i, j].in_gamma) for i in range(args.n) for j in range(args.n))
    print(f"gamma-scan: {members} member points of {args.n * args.n}; wrote {args.out}")
    return EXIT_OK


def cmd_check_conditions(args):
    x0 = parse_point(args.x0)
    field = field_from_config(_field_config(args, x0), cap=4)
    region = parse_region(args.region)
    lines = [CSV_HEADER, "check,sign,passed,min_slack,at"]
    for which, eps, cconst in (("C1", args.epsilon1, args.C1_const),
                               ("C2", args.epsilon2, args.C2_const)):
        cfg = ConditionCheckConfig(epsilon=eps, C_const=cconst, sample_region=region,
                                   sample_density=args.n, h=args.h)
        best = None
        for sign in ("+", "-"):
            v = check_C(field, cfg, which=which, sign=sign)
            if best is None or v.min_slack > best.min_slack:
                best = v
        lines.append(f"{which},{best.sign},{int(best.passed)},{best.min_slack!r},"
                     f"\"{best.location}\"")
        print(f"{which}: {'pass' if best.passed else 'FAIL'} (sign {best.sign}, "
              f"min slack {best.min_slack:.4g} at {best.location})")
    radii = np.geomspace(args.r_min, args.r_max, 8)
    trends = check_H(field, radii)
    for hyp in ("H1", "H2", "H3"):
        t = trends[hyp]
        extra = f", sign {t.sign}" if hyp == "H1" and t.sign else ""
        lines.append(f"{hyp},,{int(t.diverging)},{t.growth_exponent!r},")
        print(f"{hyp}: {'diverging' if t.diverging else 'not diverging'} "
              f"(growth exponent {t.growth_exponent:.3g}{extra})")
    if args.out:
        Path(args.out).write_text("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_bound_fit(args):
    x0 = parse_point(args.x0)
    field = field_from_config(_field_config(args, x0), cap=args.D)
    sol = solve_wkb(field, N=args.jmax)
    bound = fit_growth(sol)
    payload = {
        "m_fitted": bound.m_fitted, "per_j_norms": list(bound.per_j_norms),
        "polydisc": list(bound.polydisc), "sigma_fitted": bound.sigma_fitted,
        "bound_holds": bound.bound_holds(),
    }
    text = json.dumps(payload, indent=1, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text)
    print(text)
    return EXIT_OK


# ----------------------------------------------------------------------------
# argument plumbing
# ----------------------------------------------------------------------------

def _add_field_args(p, concrete_defaults=True):
    # the run subcommand keeps None defaults so config-file entries are only
    # overridden by flags the user actually typed
    p.add_argument("--builtin",
                   default="oscillating" if concrete_defaults else None,
                   choices=sorted(fieldmodel.BUILTIN_FIELDS))
    p.add_argument("--a", type=parse_complex,
                   default=1.0 if concrete_defaults else None)
    p.add_argument("--b", type=parse_complex,
                   default=1j if concrete_defaults else None)
    p.add_argument("--c", default=None, help="complex parameter (polynomial c, miller_simon c, exponential c)")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--R", default=None, help="JSON list [[m,n,coeff],...] for the polynomial tail")
    p.add_argument("--x0", default="0,0" if concrete_defaults else None,
                   help="base point, e.g. 'pi/3,-pi/2'")


def build_parser():
    ap = argparse.ArgumentParser(prog="cmag-wkb", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="full pipeline at one base point")
    _add_field_args(p, concrete_defaults=False)
    p.add_argument("--config", default=None, help="JSON config file (flags override)")
    p.add_argument("--N", type=int, default=1)
    p.add_argument("--jmax", type=int, default=3, help="transport order computed for adaptive runs")
    p.add_argument("--adaptive", action="store_true", help="use N(h) = floor((e m h)^(-1/7))")
    p.add_argument("--D", type=int, default=24, help="series degree cap")
    p.add_argument("--h", default="0.1:0.003:8", help="geometric sweep h_max:h_min:count")
    p.add_argument("--delta", type=float, default=None, help="cutoff radius override")
    p.add_argument("--evaluator", choices=("series", "fd", "both"), default="series")
    p.add_argument("--grid-n", type=int, default=512)
    p.add_argument("--seed", type=int, default=0, help="seed for randomized subroutines")
    p.add_argument("--out", default="out")

    p = sub.add_parser("gamma-scan", help="membership raster over a rectangle")
    _add_field_args(p)
    p.add_argument("--region", required=True, help="'x1min,x1max,x2min,x2max' (pi allowed)")
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--out", default="raster.csv")

    p = sub.add_parser("check-conditions", help="sampled (C1)/(C2) and (H1)-(H3) checks")
    _add_field_args(p)
    p.add_argument("--epsilon1", type=float, default=0.9)
    p.add_argument("--epsilon2", type=float, default=0.45)
    p.add_argument("--C1-const", type=float, default=1.0, dest="C1_const")
    p.add_argument("--C2-const", type=float, default=0.0, dest="C2_const")
    p.add_argument("--h", type=float, default=1.0)
    p.add_argument("--region", default="-3,3,-3,3")
    p.add_argument("--n", type=int, default=96)
    p.add_argument("--r-min", type=float, default=1.0)
    p.add_argument("--r-max", type=float, default=8.0)
    p.add_argument("--out", default=None)

    p = sub.add_parser("bound-fit", help="amplitude growth diagnostics")
    _add_field_args(p)
    p.add_argument("--jmax", type=int, default=6)
    p.add_argument("--D", type=int, default=24)
    p.add_argument("--out", default=None)
    return ap


_COMMANDS = {
    "run": cmd_run,
    "gamma-scan": cmd_gamma_scan,
    "check-conditions": cmd_check_conditions,
    "bound-fit": cmd_bound_fit,
}


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else 0
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DegenerateFieldError, SeriesDivisionError) as exc:
        print(f"admissibility rejection: {exc}", file=sys.stderr)
        return EXIT_GAMMA
    except (TransportIdentityError, CurveDivisionError, PhaseNotPositiveError,
            pseudomode.GaugeConsistencyError) as exc:
        print(f"internal identity failure: {exc}", file=sys.stderr)
        return EXIT_IDENTITY
    except QuadratureResolutionError as exc:
        print(f"quadrature refusal: {exc}", file=sys.stderr)
        return EXIT_QUADRATURE


if __name__ == "__main__":
    sys.exit(main())
