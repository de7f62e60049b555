"""Command-line front end.

Subcommands mirror the library: survival curves (sf), ARLs (arl), control
limits (crit / q-crit), one-axis parameter sweeps (sweep) and Monte-Carlo
cross-validation of the numerical path (validate).  Flag names follow the
chart parameterization (lambda, n, sided, sigma, hs, m) so runs are directly
comparable across tools.

Exit codes: 0 ok, 2 bad flags, 3 numerical failure, 4 infeasible target;
validate exits 1 when the numeric value and the Monte Carlo estimate differ
by more than three standard errors.
"""

from __future__ import annotations

import argparse
import json
import sys

from .conditional import ChartConfig, Limits, arl_conditional, sf_conditional
from .design import (
    ArlRule,
    QuantileRule,
    limit_vs_m_profile,
    solve_two_sided_quasi,
    solve_two_sided_symmetric,
    solve_two_sided_unbiased,
    solve_upper,
)
from .errors import ChartError, InfeasibleTargetError
from .simulate import SimulationSpec, estimate_unconditional
from .unconditional import (
    PhaseIConfig,
    arl_unconditional,
    cdf_unconditional,
    sf_unconditional,
)

_FORMATS = ("json", "csv", "tsv", "text")


def _fmt(value, digits: int) -> str:
    if isinstance(value, float):
        return f"{value:.{digits}g}"
    return str(value)


def _fmt_arl(value: float) -> str:
    # integers beyond 1000, three significant digits below
    if value >= 1000.0:
        return f"{value:.0f}"
    return f"{value:.3g}"


def _emit(args, params: dict, rows: list[dict], text_lines: list[str]) -> None:
    digits = args.digits
    if args.format == "json":
        def conv(v):
            if isinstance(v, float):
                return float(f"{v:.{digits}g}")
            return v
        payload = {
            "params": {k: conv(v) for k, v in params.items()},
            "results": [{k: conv(v) for k, v in row.items()} for row in rows],
        }
        print(json.dumps(payload))
    elif args.format in ("csv", "tsv"):
        sep = "," if args.format == "csv" else "\t"
        print("# " + json.dumps(params))
        if rows:
            cols = list(rows[0].keys())
            print(sep.join(cols))
            for row in rows:
                print(sep.join(_fmt(row[c], digits) for c in cols))
    else:
        for line in text_lines:
            print(line)


def _chart_flags(p: argparse.ArgumentParser, need_limits: bool) -> None:
    p.add_argument("--lambda", dest="lam", type=float, required=True,
                   help="EWMA smoothing constant in (0, 1]")
    p.add_argument("--n", type=int, required=True, help="subgroup size (>= 2)")
    p.add_argument("--sided", choices=("upper", "two"), default="upper")
    p.add_argument("--hs", type=float, default=1.0,
                   help="head start of the EWMA sequence (standardized scale)")
    p.add_argument("--m", type=int, default=None,
                   help="phase-I subgroup count; omit for a known in-control variance")
    p.add_argument("--basis", type=int, default=50, metavar="N",
                   help="collocation basis size per piece")
    p.add_argument("--nodes", type=int, default=60,
                   help="quadrature nodes for phase-I mixing")
    if need_limits:
        p.add_argument("--cl", type=float, default=None, help="lower control limit")
        p.add_argument("--cu", type=float, required=True, help="upper control limit")


def _common_out(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=_FORMATS, default="json")
    p.add_argument("--digits", type=int, default=6)
    p.add_argument("--config", default=None,
                   help="key=value file supplying flag defaults")


def _config_of(args) -> ChartConfig:
    return ChartConfig(lam=args.lam, n=args.n, sided=args.sided, z0=args.hs)


def _limits_of(args) -> Limits:
    cl = args.cl
    if args.sided == "upper":
        cl = None
    elif cl is None:
        raise SystemExit2("--cl is required for two-sided charts")
    return Limits(cu=args.cu, cl=cl)


def _phase1_of(args) -> PhaseIConfig | None:
    if args.m is None:
        return None
    return PhaseIConfig(m=args.m, n=args.n)


class SystemExit2(Exception):
    """Flag-combination error mapped to exit code 2."""


def _params_dict(args, **extra) -> dict:
    skip = {"func", "config", "format", "digits"}
    out = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    out.update(extra)
    return out


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _cmd_sf(args) -> int:
    cfg = _config_of(args)
    lims = _limits_of(args)
    phase1 = _phase1_of(args)
    if phase1 is None:
        curve = sf_conditional(cfg, args.sigma[0] ** 2, lims, args.lmax, N=args.basis)
        sf = curve.sf
    else:
        sf = sf_unconditional(args.lmax, cfg, phase1, args.sigma[0], lims,
                              N=args.basis, n_nodes=args.nodes)
    rows = [{"l": l, "sf": float(sf[l - 1]), "cdf": 1.0 - float(sf[l - 1])}
            for l in range(1, args.lmax + 1)]
    text = [f"{r['l']} {_fmt(r['sf'], args.digits)} {_fmt(r['cdf'], args.digits)}"
            for r in rows]
    _emit(args, _params_dict(args), rows, text)
    return 0


def _cmd_arl(args) -> int:
    cfg = _config_of(args)
    lims = _limits_of(args)
    phase1 = _phase1_of(args)
    values = []
    for sigma in args.sigma:
        if phase1 is None:
            values.append(arl_conditional(cfg, sigma * sigma, lims, N=args.basis))
        else:
            values.append(arl_unconditional(cfg, phase1, sigma, lims,
                                            N=args.basis, n_nodes=args.nodes))
    rows = [{"sigma": s, "arl": v} for s, v in zip(args.sigma, values)]
    text = ["arl " + " ".join(_fmt_arl(v) for v in values)]
    _emit(args, _params_dict(args), rows, text)
    return 0


def _solve_crit(args):
    cfg = _config_of(args)
    phase1 = _phase1_of(args)
    if args.arl0 is not None and (args.lbar is not None or args.alpha is not None):
        raise SystemExit2("give either --arl0 or --lbar/--alpha, not both")
    if args.arl0 is not None:
        target = ArlRule(args.arl0)
    elif args.lbar is not None and args.alpha is not None:
        target = QuantileRule(args.lbar, args.alpha)
    else:
        raise SystemExit2("a target needs --arl0 or both --lbar and --alpha")

    xi = None
    if cfg.sided == "upper":
        lims = solve_upper(cfg, target, phase1, N=args.basis, n_nodes=args.nodes)
    elif args.variant == "symmetric":
        lims = solve_two_sided_symmetric(cfg, target, phase1, N=args.basis,
                                         n_nodes=args.nodes)
    elif args.variant == "quasi":
        if phase1 is None:
            raise SystemExit2("--variant quasi requires --m")
        lims, design = solve_two_sided_quasi(cfg, target, phase1, N=args.basis,
                                             n_nodes=args.nodes)
        xi = design.xi
    else:
        lims = solve_two_sided_unbiased(cfg, target, phase1, N=args.basis,
                                        n_nodes=args.nodes)
    return lims, xi


def _cmd_crit(args) -> int:
    lims, xi = _solve_crit(args)
    cl = 0.0 if lims.cl is None else float(lims.cl)
    row = {"cl": cl, "cu": float(lims.cu)}
    line = f"{cl:.4f} {float(lims.cu):.4f}"
    if xi is not None:
        row["xi"] = float(xi)
        line += f" xi={float(xi):.4f}"
    _emit(args, _params_dict(args), [row], [line])
    return 0


def _cmd_sweep(args) -> int:
    values = [float(v) for v in args.values.split(",") if v.strip()]
    if not values:
        raise SystemExit2("--values must list at least one grid point")
    rows, text = [], []
    for v in values:
        sweep_args = argparse.Namespace(**vars(args))
        if args.axis == "m":
            sweep_args.m = int(v)
        elif args.axis == "lambda":
            sweep_args.lam = v
        else:
            sweep_args.sigma = [v]
        try:
            if args.task == "crit":
                lims, xi = _solve_crit(sweep_args)
                row = {"axis": args.axis, "value": v,
                       "cl": 0.0 if lims.cl is None else float(lims.cl),
                       "cu": float(lims.cu)}
                if xi is not None:
                    row["xi"] = float(xi)
            else:
                cfg = _config_of(sweep_args)
                lims = _limits_of(sweep_args)
                phase1 = _phase1_of(sweep_args)
                sigma = sweep_args.sigma[0]
                if args.task == "arl":
                    if phase1 is None:
                        val = arl_conditional(cfg, sigma * sigma, lims, N=args.basis)
                    else:
                        val = arl_unconditional(cfg, phase1, sigma, lims,
                                                N=args.basis, n_nodes=args.nodes)
                    row = {"axis": args.axis, "value": v, "arl": val}
                else:
                    l_at = args.at_l if args.at_l is not None else args.lbar
                    if l_at is None:
                        raise SystemExit2("cdf sweeps need --at-l (or --lbar)")
                    if phase1 is None:
                        curve = sf_conditional(cfg, sigma * sigma, lims, l_at,
                                               N=args.basis)
                        val = 1.0 - curve.sf_at(l_at)
                    else:
                        val = cdf_unconditional(l_at, cfg, phase1, sigma, lims,
                                                N=args.basis, n_nodes=args.nodes)
                    row = {"axis": args.axis, "value": v, "cdf": val}
        except ChartError as exc:
            row = {"axis": args.axis, "value": v, "error": str(exc)}
        rows.append(row)
        text.append(" ".join(_fmt(x, args.digits) if not isinstance(x, str) else x
                             for x in row.values()))
    _emit(args, _params_dict(args), rows, text)
    return 0


def _cmd_validate(args) -> int:
    cfg = _config_of(args)
    lims = _limits_of(args)
    phase1 = _phase1_of(args)
    sigma = args.sigma[0]
    if args.quantity == "cdf":
        if phase1 is None:
            numeric = 1.0 - sf_conditional(cfg, sigma * sigma, lims, args.l,
                                           N=args.basis).sf_at(args.l)
        else:
            numeric = cdf_unconditional(args.l, cfg, phase1, sigma, lims,
                                        N=args.basis, n_nodes=args.nodes)
    else:
        if phase1 is None:
            numeric = arl_conditional(cfg, sigma * sigma, lims, N=args.basis)
        else:
            numeric = arl_unconditional(cfg, phase1, sigma, lims, N=args.basis,
                                        n_nodes=args.nodes)

    spec = SimulationSpec(config=cfg, sigma=sigma, limits=lims,
                          replications=args.reps, phase1=phase1,
                          l_cap=args.l_cap, seed=args.seed)
    emp = estimate_unconditional(spec)
    if args.quantity == "cdf":
        mc, se = emp.cdf_at(args.l)
    else:
        mc, se, censored = emp.arl_estimate()
        if censored:
            print("warning: ARL estimate censored at l_cap; comparison is "
                  "against a lower bound", file=sys.stderr)
    z = (numeric - mc) / se if se > 0 else 0.0
    row = {"quantity": args.quantity, "numeric": numeric, "mc": mc,
           "se": se, "z": z}
    text = [f"{args.quantity} numeric={_fmt(numeric, args.digits)} "
            f"mc={_fmt(mc, args.digits)} se={_fmt(se, args.digits)} z={z:.2f}"]
    _emit(args, _params_dict(args), [row], text)
    return 0 if abs(z) <= 3.0 else 1


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="s2ewma",
        description="Run-length analysis and limit design for EWMA charts "
                    "on subgroup variances")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sf = sub.add_parser("sf", help="survival function / CDF of the run length")
    _chart_flags(p_sf, need_limits=True)
    p_sf.add_argument("--sigma", type=float, nargs="+", default=[1.0])
    p_sf.add_argument("--lmax", type=int, required=True)
    _common_out(p_sf)
    p_sf.set_defaults(func=_cmd_sf)

    p_arl = sub.add_parser("arl", help="average run length")
    _chart_flags(p_arl, need_limits=True)
    p_arl.add_argument("--sigma", type=float, nargs="+", default=[1.0])
    _common_out(p_arl)
    p_arl.set_defaults(func=_cmd_arl)

    for name, need_quantile in (("crit", False), ("q-crit", True)):
        p_crit = sub.add_parser(
            name, help="solve control limits for a design target"
                       + (" (quantile rule form)" if need_quantile else ""))
        _chart_flags(p_crit, need_limits=False)
        p_crit.add_argument("--lbar", type=int, default=None,
                            help="chart horizon for the false-alarm rule")
        p_crit.add_argument("--alpha", type=float, default=None,
                            help="false-alarm probability at the horizon")
        if not need_quantile:
            p_crit.add_argument("--arl0", type=float, default=None,
                                help="in-control ARL target")
        p_crit.add_argument("--variant",
                            choices=("symmetric", "unbiased", "quasi"),
                            default="unbiased",
                            help="two-sided design variant")
        _common_out(p_crit)
        if need_quantile:
            p_crit.set_defaults(func=_cmd_crit, arl0=None)
        else:
            p_crit.set_defaults(func=_cmd_crit)

    p_sw = sub.add_parser("sweep", help="vary one axis and tabulate")
    _chart_flags(p_sw, need_limits=False)
    p_sw.add_argument("--cl", type=float, default=None)
    p_sw.add_argument("--cu", type=float, default=None)
    p_sw.add_argument("--sigma", type=float, nargs="+", default=[1.0])
    p_sw.add_argument("--task", choices=("crit", "arl", "cdf"), required=True)
    p_sw.add_argument("--axis", choices=("m", "lambda", "sigma"), required=True)
    p_sw.add_argument("--values", required=True,
                      help="comma-separated grid for the chosen axis")
    p_sw.add_argument("--lbar", type=int, default=None)
    p_sw.add_argument("--alpha", type=float, default=None)
    p_sw.add_argument("--arl0", type=float, default=None)
    p_sw.add_argument("--variant", choices=("symmetric", "unbiased", "quasi"),
                      default="unbiased")
    p_sw.add_argument("--at-l", dest="at_l", type=int, default=None,
                      help="evaluation point for cdf sweeps")
    _common_out(p_sw)
    p_sw.set_defaults(func=_cmd_sweep)

    p_val = sub.add_parser("validate", help="numeric vs Monte Carlo cross-check")
    _chart_flags(p_val, need_limits=True)
    p_val.add_argument("--sigma", type=float, nargs="+", default=[1.0])
    p_val.add_argument("--quantity", choices=("cdf", "arl"), required=True)
    p_val.add_argument("--l", type=int, default=1000,
                       help="evaluation point for cdf validation")
    p_val.add_argument("--reps", type=int, default=100000)
    p_val.add_argument("--seed", type=int, default=0)
    p_val.add_argument("--l-cap", dest="l_cap", type=int, default=1000000)
    _common_out(p_val)
    p_val.set_defaults(func=_cmd_validate)

    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Inject key=value file entries as defaults (explicit flags win)."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        return argv
    path = argv[idx + 1]
    pairs = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or "=" not in line:
                continue
            key, _, val = line.partition("=")
            pairs.append((key.strip(), val.strip()))
    # prepend as flags so later (explicit) occurrences override
    injected = []
    for key, val in pairs:
        injected.extend([f"--{key}", *val.split()])
    return [argv[0]] + injected + argv[1:]


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    if argv:
        argv = _apply_config_file(parser, argv)
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SystemExit2 as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError,) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InfeasibleTargetError as exc:
        print(f"infeasible target: {exc}", file=sys.stderr)
        return 4
    except ChartError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
