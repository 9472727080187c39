"""Batch command-line front end (``occupancy-lab``)."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .asymptotics import (GridError, TGrid, block_times, classify_regime, estimate_alpha,
                          limit_covariance, log_phi, scan_pairs, sigma_convergence_scan, _fmt_t)
from .depoisson import tv_bound
from .frequencies import LN2, FrequencyError, FrequencySpec, build_frequencies
from .gaussian import normality_diagnostics
from .moments import CertificationError, DegenerateVarianceError, corr_matrix, moment_table
from .sampling import SimConfig, SimulationError, monte_carlo


class ConfigError(ValueError):
    pass


EXAMPLES = ("karlin-ex1", "bgy-ex2", "factorial-ex3", "genex")

# default grids (log t bounds, points) for the named examples
KARLIN_GRID = (0.0, 8200 * LN2, 2051)  # ends ten doublings past the last block
BGY_GRID = (0.0, 8000 * LN2, 401)
FACTORIAL_GRID = (100 * math.log(10), 1200 * math.log(10), 512)


# ---------------------------------------------------------------------------
# argument helpers

def _int_list(text: str) -> list[int]:
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated integer list, got {text!r}") from None
    if not vals:
        raise ConfigError("empty list")
    return vals


def _index_set(text: str) -> tuple[int, ...]:
    vals = sorted(set(_int_list(text)))
    if vals[0] < 1:
        raise ConfigError("indices must be >= 1")
    return tuple(vals)


def _n_list(text: str) -> list[int]:
    out = []
    for x in text.split(","):
        try:
            v = float(x)
        except ValueError:
            raise ConfigError(f"bad n value {x!r}") from None
        if v < 1 or v != int(v):
            raise ConfigError(f"n must be a positive integer, got {x!r}")
        out.append(int(v))
    return out


def _load_spec(text: Optional[str]) -> FrequencySpec:
    if text is None:
        raise ConfigError("--spec is required for this command")
    raw = text.strip()
    try:
        if raw.startswith("{"):
            data = json.loads(raw)
        else:
            data = json.loads(Path(raw).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read spec file {text!r}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"spec is not valid JSON: {exc}") from None
    try:
        return FrequencySpec.from_dict(data)
    except (TypeError, KeyError, ValueError) as exc:
        raise ConfigError(f"invalid frequency spec: {exc}") from None


def _grid(args, default: TGrid) -> TGrid:
    return TGrid.parse(args.t_grid) if args.t_grid else default


# ---------------------------------------------------------------------------
# output

def _envelope(command: str, config: dict, result) -> dict:
    return {"tool": "occupancy-lab", "version": __version__, "command": command,
            "config": config, "result": result}


def _finite(obj):
    # strict JSON has no inf/nan; spell them as strings
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, np.generic):
        return _finite(obj.item())
    if isinstance(obj, np.ndarray):
        return _finite(obj.tolist())
    return obj


def _json_text(command: str, config: dict, result) -> str:
    return json.dumps(_finite(_envelope(command, config, result)), indent=2, sort_keys=True,
                      allow_nan=False) + "\n"


def _csv_text(command: str, config: dict, header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    buf.write(f"# occupancy-lab {__version__} {command}\n")
    buf.write("# config " + json.dumps(config, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(row)
    return buf.getvalue()


def _emit(args, text: str) -> None:
    if args.out:
        try:
            Path(args.out).write_text(text)
        except OSError as exc:
            raise ConfigError(f"cannot write {args.out!r}: {exc.strerror}") from None
    else:
        sys.stdout.write(text)


def _num(x: float):
    return repr(float(x))


# ---------------------------------------------------------------------------
# commands

def cmd_moments(args) -> str:
    spec = _load_spec(args.spec)
    view = build_frequencies(spec)
    rs = _index_set(args.r or "1")
    grid = _grid(args, TGrid.geometric(1.0, 2.0, 20))
    lts = grid.log_t
    if lts[-1] > 709:
        raise ConfigError("moments needs t below 1e308; use scan-sigma or classify for larger t")
    ts = [float(np.exp(x)) for x in lts]
    table = moment_table(view, rs, ts, tol=args.tol, pairs=args.format == "json")
    config = {"spec": spec.to_dict(), "r": list(rs), "t_grid": grid.to_dict(), "tol": args.tol}
    if args.format == "json":
        return _json_text("moments", config, table.to_dict())
    rows = [[_num(e.t), e.r, _num(e.phi), _num(e.var), _num(e.cert)] for e in table.entries]
    return _csv_text("moments", config, ["t", "r", "phi", "var", "cert"], rows)


def _regime_rows(rep):
    return [[e.r, _num(e.inf), _num(e.sup), _num(e.log_inf), _num(e.log_sup)] for e in rep.evidence]


def cmd_classify(args) -> str:
    spec = _load_spec(args.spec)
    view = build_frequencies(spec)
    r_max = max(_index_set(args.r)) if args.r else 3
    grid = _grid(args, TGrid.geometric(1.0, 2.0, 41))
    rep = classify_regime(view, r_max, grid, tol=args.tol)
    config = {"spec": spec.to_dict(), "r_max": r_max, "t_grid": grid.to_dict(), "tol": args.tol}
    if args.format == "json":
        return _json_text("classify", config, rep.to_dict())
    return _csv_text("classify", dict(config, verdict=rep.label),
                     ["r", "inf", "sup", "log_inf", "log_sup"], _regime_rows(rep))


def cmd_alpha(args) -> str:
    spec = _load_spec(args.spec)
    view = build_frequencies(spec)
    rs = _index_set(args.r or "1")
    grid = _grid(args, TGrid.geometric(1.0, 1.5, 57))
    ests = [estimate_alpha(view, r, grid, tol=args.tol) for r in rs]
    config = {"spec": spec.to_dict(), "r": list(rs), "t_grid": grid.to_dict(), "tol": args.tol}
    if args.format == "json":
        return _json_text("alpha", config, [e.to_dict() for e in ests])
    rows = [[e.r, e.c, e.alpha, e.in_range, e.converged, e.amplitude] for e in ests]
    rows = [[r, _num(c), _num(a), int(i), int(cv), _num(am)] for r, c, a, i, cv, am in rows]
    return _csv_text("alpha", config, ["r", "c", "alpha_hat", "in_range", "converged", "amplitude"], rows)


def cmd_limit_cov(args) -> str:
    if args.alpha is None:
        raise ConfigError("limit-cov needs --alpha in [0, 1]")
    R = _index_set(args.R or "1,2,3")
    lc = limit_covariance(args.alpha, R)
    config = {"alpha": args.alpha, "R": list(R)}
    if args.format == "json":
        return _json_text("limit-cov", config, lc.to_dict())
    rows = [[r, s, _num(lc.S[i, k]), _num(lc.corr[i, k])]
            for i, r in enumerate(R) for k, s in enumerate(R)]
    return _csv_text("limit-cov", dict(config, case=lc.case.label), ["r", "s", "S", "corr"], rows)


def _scan_output(command: str, config: dict, sc, fmt: str) -> str:
    if fmt == "json":
        return _json_text(command, config, sc.to_dict())
    body = sc.to_csv().splitlines()
    rows = [line.split(",") for line in body[1:]]
    return _csv_text(command, config, body[0].split(","), rows)


def _parse_pairs(text: Optional[str]):
    if not text:
        return None
    R = _index_set(text)
    return [(r, s) for i, r in enumerate(R) for s in R[i + 1:]]


def cmd_scan_sigma(args) -> str:
    spec = _load_spec(args.spec)
    view = build_frequencies(spec)
    grid = _grid(args, TGrid.geometric(1e2, 10 ** (10 / 39), 40))
    pairs = _parse_pairs(args.R)
    sc = sigma_convergence_scan(view, grid, pairs=pairs, tol=args.tol)
    config = {"spec": spec.to_dict(), "t_grid": grid.to_dict(), "tol": args.tol,
              "pairs": [list(p) for p in (pairs or scan_pairs())]}
    return _scan_output("scan-sigma", config, sc, args.format)


def cmd_simulate(args) -> str:
    spec = _load_spec(args.spec)
    view = build_frequencies(spec)
    R = _index_set(args.R or "1,2,3")
    if (args.n is None) == (args.t is None):
        raise ConfigError("simulate needs exactly one of --n (fixed-n) or --t (Poissonized)")
    if args.n is not None:
        ns = _n_list(args.n)
        if len(ns) != 1:
            raise ConfigError("simulate takes a single --n")
        cfg = SimConfig("fixed_n", ns[0], reps=args.reps, seed=args.seed, R=R, retain=True)
    else:
        cfg = SimConfig("poissonized", args.t, reps=args.reps, seed=args.seed, R=R, retain=True)
    config = {"spec": spec.to_dict(), "sim": cfg.to_dict(), "tol": args.tol}
    try:
        res = monte_carlo(view, cfg, tol=args.tol)
    except DegenerateVarianceError as exc:
        # a condition of the model, not a failure: report it
        status = {"status": "degenerate_variance", "r": exc.r, "variance": exc.value}
        if args.format == "json":
            return _json_text("simulate", config, status)
        return _csv_text("simulate", config, ["status", "r", "variance"],
                         [[status["status"], exc.r, _num(exc.value)]])
    if args.format == "csv":
        body = res.replicate_csv().splitlines()
        return _csv_text("simulate", config, body[0].split(","), (l.split(",") for l in body[1:]))
    target = corr_matrix(view, R, float(cfg.size), tol=args.tol)
    report = normality_diagnostics(res, target)
    out = res.to_dict()
    out["target_corr"] = target.matrix.tolist()
    out["normality"] = report.to_dict()
    return _json_text("simulate", config, out)


def cmd_depoisson(args) -> str:
    spec = _load_spec(args.spec)
    view = build_frequencies(spec)
    ns = _n_list(args.n or "10000,100000,1000000,10000000")
    if args.m < 1:
        raise ConfigError("--m must be >= 1")
    bounds = [tv_bound(view, n, args.m) for n in ns]
    config = {"spec": spec.to_dict(), "n": ns, "m": args.m}
    if args.format == "json":
        return _json_text("depoisson", config, [b.to_dict() for b in bounds])
    rows = [[b.n, b.m, b.k, _num(b.pi_k), _num(b.bound), int(b.applicable)] for b in bounds]
    return _csv_text("depoisson", config, ["n", "m", "k", "pi_k", "bound", "applicable"], rows)


# ---------------------------------------------------------------------------
# named examples

def _series(view, rs, grid: TGrid, tol: float) -> list[dict]:
    out = []
    for x in grid.log_t:
        row = {"t": _fmt_t(float(x)), "log_t": float(x)}
        for r in rs:
            row[f"log_phi_{r}"] = log_phi(view, r, float(x), tol)
        out.append(row)
    return out


def _series_output(command: str, config: dict, summary: dict, series: list[dict], fmt: str) -> str:
    if fmt == "json":
        return _json_text(command, config, {"summary": summary, "series": series})
    keys = list(series[0]) if series else []
    rows = [[row[k] if isinstance(row[k], str) else _num(row[k]) for k in keys] for row in series]
    return _csv_text(command, dict(config, summary=summary), keys, rows)


def _grid_or(args, lo_hi_n) -> TGrid:
    return TGrid.parse(args.t_grid) if args.t_grid else TGrid.between(*lo_hi_n)


def reproduce_karlin(args) -> str:
    spec = FrequencySpec.block_rule("karlin_ex1")
    view = build_frequencies(spec)
    grid = _grid_or(args, KARLIN_GRID)
    rep = classify_regime(view, 1, grid, tol=args.tol)
    series = _series(view, (1,), grid, args.tol)
    summary = {"verdict": rep.label, "log_sup_over_inf_phi1": rep.evidence[0].grid_log_ratio,
               "sup_over_inf_exceeds_10": rep.evidence[0].grid_log_ratio > math.log(10)}
    config = {"example": "karlin-ex1", "spec": spec.to_dict(), "t_grid": grid.to_dict(), "tol": args.tol}
    return _series_output("reproduce", config, summary, series, args.format)


def reproduce_bgy(args) -> str:
    spec = FrequencySpec.block_rule("bgy_ex2")
    view = build_frequencies(spec)
    grid = _grid_or(args, BGY_GRID)
    rep = classify_regime(view, 3, grid, tol=args.tol)
    config = {"example": "bgy-ex2", "spec": spec.to_dict(), "t_grid": grid.to_dict(), "tol": args.tol}
    if args.format == "json":
        return _json_text("reproduce", config, rep.to_dict())
    return _csv_text("reproduce", dict(config, verdict=rep.label, r0=rep.r0),
                     ["r", "inf", "sup", "log_inf", "log_sup"], _regime_rows(rep))


def reproduce_factorial(args) -> str:
    spec = FrequencySpec.block_rule("factorial")
    view = build_frequencies(spec)
    grid = _grid_or(args, FACTORIAL_GRID)
    pairs = [(1, s) for s in range(2, 6)]
    sc = sigma_convergence_scan(view, grid, pairs=pairs, tol=args.tol)
    config = {"example": "factorial-ex3", "spec": spec.to_dict(), "t_grid": grid.to_dict(),
              "tol": args.tol, "pairs": [list(p) for p in pairs]}
    return _scan_output("reproduce", config, sc, args.format)


def genex_rows(view, r: int, tol: float = 1e-9) -> list[dict]:
    rows = []
    for l in range(view.index0, view.last_block_index):
        a, b = block_times(view, l)
        rows.append({"l": l, "log_t_inv_q": a, "log_t_prime": b,
                     "log_phi_at_inv_q": log_phi(view, r, a, tol),
                     "log_phi_at_t_prime": log_phi(view, r, b, tol),
                     "log_phi1_at_inv_q": log_phi(view, 1, a, tol),
                     "log_phi1_at_t_prime": log_phi(view, 1, b, tol)})
    return rows


def reproduce_genex(args) -> str:
    beta = 0.5 if args.beta is None else args.beta
    alpha = 1.0 if args.alpha is None else args.alpha
    r = _index_set(args.r)[0] if args.r else 2
    spec = FrequencySpec.block_rule("genex", beta=beta, alpha=alpha)
    view = build_frequencies(spec)
    rows = genex_rows(view, r, args.tol)
    last = rows[-3:]
    summary = {"r": r, "beta_times_1_plus_alpha": beta * (1 + alpha),
               "largest_l": [x["l"] for x in last],
               "phi_inv_q_above_10": all(x["log_phi_at_inv_q"] > math.log(10) for x in last),
               "phi_t_prime_below_half": all(x["log_phi_at_t_prime"] < math.log(0.5) for x in last)}
    config = {"example": "genex", "spec": spec.to_dict(), "r": r, "tol": args.tol}
    return _series_output("reproduce", config, summary, rows, args.format)


REPRODUCERS = {"karlin-ex1": reproduce_karlin, "bgy-ex2": reproduce_bgy,
               "factorial-ex3": reproduce_factorial, "genex": reproduce_genex}


def cmd_reproduce(args) -> str:
    return REPRODUCERS[args.example](args)


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="occupancy-lab",
                                description="Moments, regimes and simulation for infinite occupancy schemes.")
    p.add_argument("--version", action="version", version=f"occupancy-lab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, spec=True, grid=True):
        if spec:
            sp.add_argument("--spec", help="frequency spec: JSON file or inline JSON object")
        if grid:
            sp.add_argument("--t-grid", dest="t_grid", help="geometric grid a:f:n (a, f may be b^e)")
        sp.add_argument("--tol", type=float, default=1e-9, help="absolute certificate target")
        sp.add_argument("--out", help="output path (default stdout)")
        sp.add_argument("--format", choices=("csv", "json"), default="json")

    s = sub.add_parser("moments", help="Phi_r(t), V_r(t) with certificates")
    common(s)
    s.add_argument("--r", help="comma-separated r values")
    s.set_defaults(func=cmd_moments)

    s = sub.add_parser("classify", help="regime verdict with evidence")
    common(s)
    s.add_argument("--r", help="r values; the largest is r_max")
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("alpha", help="regular-variation index estimate")
    common(s)
    s.add_argument("--r", help="r values")
    s.set_defaults(func=cmd_alpha)

    s = sub.add_parser("limit-cov", help="limiting covariance matrix")
    common(s, spec=False, grid=False)
    s.add_argument("--alpha", type=float)
    s.add_argument("--R", help="index set")
    s.set_defaults(func=cmd_limit_cov)

    s = sub.add_parser("scan-sigma", help="correlation convergence scan")
    common(s)
    s.add_argument("--R", help="restrict pairs to this index set")
    s.set_defaults(func=cmd_scan_sigma)

    s = sub.add_parser("simulate", help="Monte Carlo replicates and normality diagnostics")
    common(s, grid=False)
    s.add_argument("--R", help="index set")
    s.add_argument("--n", help="fixed-n ball count")
    s.add_argument("--t", type=float, help="Poissonized time")
    s.add_argument("--reps", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("depoisson", help="de-Poissonization bound")
    common(s, grid=False)
    s.add_argument("--n", help="comma-separated n values")
    s.add_argument("--m", type=int, default=3, help="largest count index compared")
    s.set_defaults(func=cmd_depoisson)

    s = sub.add_parser("reproduce", help="named examples")
    s.add_argument("example", choices=EXAMPLES)
    common(s, spec=False)
    s.add_argument("--beta", type=float)
    s.add_argument("--alpha", type=float)
    s.add_argument("--r", help="r for the genex series")
    s.set_defaults(func=cmd_reproduce)
    return p


CONFIG_ERRORS = (ConfigError, GridError, FrequencyError, ValueError, KeyError)
RUNTIME_ERRORS = (CertificationError, SimulationError, ArithmeticError, RuntimeError)


def run_command(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        text = args.func(args)
        _emit(args, text)
    except RUNTIME_ERRORS as exc:
        print(f"occupancy-lab: error: {exc}", file=sys.stderr)
        return 1
    except CONFIG_ERRORS as exc:
        print(f"occupancy-lab: config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"occupancy-lab: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run_command())
