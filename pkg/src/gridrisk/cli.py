"""Command-line interface: ``gridrisk {analyze,region,mc,inspect} CASE [options]``.

Exit codes: 0 success (for ``analyze``: mu in the R^up region), 2 mu only in
the R* region, 3 mu in neither, 1 any error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._json import dumps
from .case_io import CapacityRule, Scenario, load_scenario
from .errors import GridRiskError
from .grid_model import build_laplacian
from .mc_oracle import (
    DEFAULT_CHUNK,
    DEFAULT_SEED,
    MonteCarloRiskEstimator,
    concentration_check,
    estimate_failure_prob,
    estimate_risk,
)
from .regions import membership, rup_halfspaces, sweep_slice
from .risk_bounds import assess

EXIT_OK, EXIT_ERROR, EXIT_STAR_ONLY, EXIT_OUTSIDE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit with status 2, which means "R* only" here
        raise UsageError(message)


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _finite(x) -> float | None:
    x = float(x)
    return x if math.isfinite(x) else None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gridrisk", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"gridrisk {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed=False):
        sp.add_argument("case", help="case file (.json or MATPOWER .m) or bundled name (k3, case14)")
        sp.add_argument("--q", type=float, help="target failure probability, in (0, 1)")
        sp.add_argument("--mu", type=_floats, help="mean non-slack injections, comma separated (per-unit)")
        sp.add_argument("--iid-variance", type=float, help="override Sigma with this multiple of I")
        sp.add_argument("--variance-unit", choices=["pu", "mw"], help="unit of --iid-variance")
        sp.add_argument("--capacity-rule", choices=["explicit", "rate_a", "factor_of_mean"])
        sp.add_argument("--capacity-factor", type=float, default=1.5)
        sp.add_argument("--zero-flow", choices=["error", "network_mean"], default="error")
        sp.add_argument("--out", help="output path (default: stdout)")
        if seed:
            sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
            sp.add_argument("--workers", type=int, default=1)
            sp.add_argument("--chunk-size", type=int, default=DEFAULT_CHUNK)

    common(sub.add_parser("analyze", help="risk bounds and region membership at mu"))
    sp = sub.add_parser("region", help="2-D slice of a capacity region as CSV + JSON sidecar")
    common(sp, seed=True)
    sp.add_argument("--axes", help="two non-slack bus ids to vary, e.g. 6,9 (default: first two)")
    sp.add_argument("--kind", choices=["up", "star", "ci"], default="up")
    sp.add_argument("--rays", type=int, default=60)
    sp.add_argument("--tol", type=float, default=1e-6)
    sp.add_argument("--n", type=int, default=100_000, help="Monte Carlo samples for --kind ci")
    sp.add_argument("--se-margin", type=float, default=3.0)
    sp = sub.add_parser("mc", help="Monte Carlo estimates of P(L) and r(mu)")
    common(sp, seed=True)
    sp.add_argument("--n", type=int, default=100_000)
    sp.add_argument("--concentration", type=_floats, help="s values for the concentration check")
    common(sub.add_parser("inspect", help="dump the parsed network and flow factors"))
    return p


def _scenario(args) -> Scenario:
    rule = None
    if args.capacity_rule is not None:
        if args.capacity_rule == "factor_of_mean":
            rule = CapacityRule("factor_of_mean", args.capacity_factor, args.zero_flow)
        else:
            rule = CapacityRule(args.capacity_rule)
    return load_scenario(
        args.case,
        q=args.q,
        mu=args.mu,
        iid_variance=args.iid_variance,
        variance_unit=args.variance_unit,
        capacity_rule=rule,
    )


def _manifest(args, sc: Scenario, seed=None) -> dict:
    return {
        "command": args.command,
        "case": args.case,
        "options": sc.options,
        "seed": seed,
        "version": __version__,
        "config_hash": sc.config_hash(),
    }


def _write(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def cmd_analyze(args) -> int:
    sc = _scenario(args)
    f = sc.factors
    ra = assess(f, sc.q)
    in_up = membership(f.mu, f, sc.q, "up")
    in_star = membership(f.mu, f, sc.q, "star")
    code = EXIT_OK if in_up else EXIT_STAR_ONLY if in_star else EXIT_OUTSIDE
    hs = rup_halfspaces(f, sc.q)
    report = {
        "manifest": _manifest(args, sc),
        "mu": f.mu,
        "nu": f.nu,
        "sigma": f.sigma,
        "max_sigma": ra.max_sigma,
        "r_up": ra.r_up,
        "r_star": ra.r_star,
        "s_star": _finite(ra.s_star),
        "threshold": ra.threshold,
        "t_up": float(hs.b_vec[0]),
        "failure_bound": ra.failure_bound,
        "failure_bound_at": ra.bound_evaluated_at,
        "failure_bound_vacuous": ra.bound_vacuous,
        "in_up": in_up,
        "in_star": in_star,
        "exit_code": code,
    }
    _write(dumps(report), args.out)
    return code


def _axes(args, sc: Scenario) -> tuple[int, int, tuple[str, str]]:
    net = sc.network
    non_slack = net.non_slack
    if args.axes is None:
        picks = [net.buses[non_slack[0]].id, net.buses[non_slack[1]].id]
    else:
        picks = [t.strip() for t in args.axes.split(",")]
        if len(picks) != 2:
            raise ValueError(f"--axes needs two bus ids, got {args.axes!r}")
    cols = []
    for bid in picks:
        idx = net.index_of(bid)
        if idx == net.slack:
            raise ValueError(f"bus {bid} is the slack bus and cannot be an axis")
        cols.append(non_slack.index(idx))
    return cols[0], cols[1], (f"mu_{picks[0]}", f"mu_{picks[1]}")


def cmd_region(args) -> int:
    if args.out is None:
        raise ValueError("region needs --out PATH.csv (a JSON sidecar is written next to it)")
    if args.rays < 8:
        raise ValueError(f"--rays must be >= 8, got {args.rays}")
    sc = _scenario(args)
    f = sc.factors
    ai, aj, labels = _axes(args, sc)
    est = None
    if args.kind == "ci":
        est = MonteCarloRiskEstimator(f, n=args.n, seed=args.seed, chunk_size=args.chunk_size)
    sl = sweep_slice(
        f, f.mu, ai, aj, sc.q, args.kind, args.rays, args.tol, est,
        se_margin=args.se_margin, workers=args.workers, seed=args.seed, labels=labels,
    )
    csv_text = sl.to_csv()
    doc = sl.to_dict()
    doc["manifest"] = _manifest(args, sc, args.seed if args.kind == "ci" else None)
    doc["manifest"]["options"] = {
        **sc.options, "axes": list(labels), "kind": args.kind, "rays": args.rays, "tol": args.tol,
        "n": args.n if args.kind == "ci" else None, "se_margin": args.se_margin,
    }
    out = Path(args.out)
    out.write_text(csv_text)
    out.with_suffix(".json").write_text(dumps(doc))
    return EXIT_OK


def cmd_mc(args) -> int:
    if args.n < 1:
        raise ValueError(f"--n must be >= 1, got {args.n}")
    sc = _scenario(args)
    f = sc.factors
    kw = dict(seed=args.seed, chunk_size=args.chunk_size, workers=args.workers)
    p_hat = estimate_failure_prob(f, args.n, **kw)
    r_hat = estimate_risk(f, args.n, **kw)
    ra = assess(f, sc.q)
    report = {
        "manifest": _manifest(args, sc, args.seed),
        "failure_prob": p_hat.to_dict(),
        "risk_level": r_hat.to_dict(),
        "r_up": ra.r_up,
        "r_star": ra.r_star,
        "failure_bound": ra.failure_bound,
        "checks": {
            "failure_prob_within_bound": p_hat.mean - 3 * p_hat.std_error <= ra.failure_bound,
            "risk_below_r_star": r_hat.mean - 3 * r_hat.std_error <= ra.r_star,
            "failure_prob_below_q": p_hat.mean - 3 * p_hat.std_error <= sc.q,
        },
    }
    if args.concentration:
        rep = concentration_check(f, sorted(set(args.concentration)), args.n, **kw)
        report["concentration"] = rep.to_dict()
        report["checks"]["concentration_holds"] = not rep.violations
    _write(dumps(report), args.out)
    return EXIT_OK


def cmd_inspect(args) -> int:
    sc = _scenario(args)
    net, f = sc.network, sc.factors
    lap_eigs = np.linalg.eigvalsh(build_laplacian(net))
    pinv_eigs = np.linalg.eigvalsh(f.l_pinv)
    report = {
        "manifest": _manifest(args, sc),
        "name": sc.case.name,
        "n": net.n,
        "m": net.m,
        "slack": net.buses[net.slack].id,
        "buses": net.bus_ids,
        "lines": [
            {
                "from": net.buses[ln.from_bus].id,
                "to": net.buses[ln.to_bus].id,
                "susceptance": ln.susceptance,
                "capacity": _finite(ln.capacity),
            }
            for ln in net.lines
        ],
        "laplacian": build_laplacian(net),
        "laplacian_spectrum": {
            "min": float(lap_eigs[0]),
            "algebraic_connectivity": float(lap_eigs[1]),
            "max": float(lap_eigs[-1]),
        },
        "pinv_spectrum": {
            "min": float(pinv_eigs[0]),
            "max": float(pinv_eigs[-1]),
            "trace": float(np.trace(f.l_pinv)),
        },
        "mu": f.mu,
        "w_mat": f.w_mat,
        "nu": f.nu,
        "sigma": f.sigma,
    }
    _write(dumps(report), args.out)
    return EXIT_OK


COMMANDS = {"analyze": cmd_analyze, "region": cmd_region, "mc": cmd_mc, "inspect": cmd_inspect}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except SystemExit as exc:  # --help / --version
        return EXIT_OK if exc.code in (0, None) else EXIT_ERROR
    except (UsageError, GridRiskError, ValueError, KeyError, OSError, argparse.ArgumentTypeError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
        err = {"error": type(exc).__name__, "message": str(msg)}
        sys.stderr.write(json.dumps(err) + "\n")
        return EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
