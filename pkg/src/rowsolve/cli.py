"""Command line front end.

Four subcommands: ``integrate`` runs a single integration and emits the
trajectory, ``converge`` runs a step-halving study, ``stability`` classifies
a method's stability function and can scan a grid, ``list-methods`` prints
the built-in catalog. All numeric artifacts are CSV with a fixed header
row; ``--plot`` additionally renders a PNG next to the CSV.

Exit codes: 0 success, 1 numerical failure (last state reported on
stderr), 2 configuration error.
"""
from __future__ import annotations

import argparse
import csv
import sys as _sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .convergence import DEFAULT_N_LIST, measure_order
from .errors import IntegrationFailure, StructuralError
from .linsolve import DIRECT, TRANSFORMED
from .onestep import EMBEDDED, RICHARDSON, ControlSettings, integrate
from .problems import (Analytic, ForwardDifference, Frozen, OdeSystem,
                       TimeLagged, make_dahlquist, make_heat1d,
                       make_order_reduction_problem)
from .stability import RowStability, classify, region_scan
from .tableau_io import load_tableau
from .tableaus import (PeerTableau, RowTableau, TransformedTableau,
                       TwoStepWTableau, builtin_methods, get_method)
from .twostep import integrate_twostep, peer_spectral_radius


class ConfigError(Exception):
    """User-facing configuration problem; maps to exit code 2."""


def _parse_params(pairs: list[str]) -> dict[str, str]:
    out = {}
    for item in pairs:
        if "=" not in item:
            raise ConfigError(f"malformed parameter {item!r}; expected key=value")
        key, value = item.split("=", 1)
        out[key] = value
    return out


def _num(raw: str, what: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{what} must be a number, got {raw!r}") from None


def _build_problem(name: str | None, params: list[str],
                   t_end: float | None) -> OdeSystem:
    if name is None:
        raise ConfigError("a problem is required (--problem)")
    kv = _parse_params(params)
    if name == "dahlquist":
        lam = _num(kv.pop("lambda", "-1.0"), "lambda")
        u0 = _num(kv.pop("u0", "1.0"), "u0")
        sys_ = make_dahlquist(lam=lam, u0=u0)
    elif name == "heat1d":
        try:
            n = int(kv.pop("n", "20"))
        except ValueError:
            raise ConfigError("n must be an integer") from None
        diffusion = _num(kv.pop("diffusion", "1.0"), "diffusion")
        sys_ = make_heat1d(n=n, diffusion=diffusion)
    elif name == "protrob":
        lam = _num(kv.pop("lambda", "-1e6"), "lambda")
        sys_ = make_order_reduction_problem(lam=lam)
    else:
        raise ConfigError(f"unknown problem {name!r}")
    if kv:
        raise ConfigError(
            f"unknown parameter(s) for {name}: {', '.join(sorted(kv))}")
    if t_end is not None:
        if t_end <= sys_.t_span[0]:
            raise ConfigError(f"--t-end must exceed t0={sys_.t_span[0]}")
        sys_ = replace(sys_, t_span=(sys_.t_span[0], t_end))
    return sys_


def _resolve_method(args):
    if args.method and args.tableau_file:
        raise ConfigError("give either --method or --tableau-file, not both")
    if args.tableau_file:
        try:
            return load_tableau(args.tableau_file)
        except FileNotFoundError:
            raise ConfigError(f"no such tableau file: {args.tableau_file}") from None
        except StructuralError as exc:
            raise ConfigError(f"bad tableau file: {exc}") from None
    if args.method:
        try:
            return get_method(args.method)
        except KeyError:
            raise ConfigError(f"unknown method {args.method!r}") from None
    raise ConfigError("a method is required (--method or --tableau-file)")


def _jacobian_strategy(spec: str | None, sys_: OdeSystem):
    """Map the --jacobian flag to a strategy override (None = problem's own)."""
    if spec is None or spec == "analytic":
        return None
    base = sys_.jacobian if isinstance(sys_.jacobian,
                                       (Analytic, ForwardDifference)) \
        else ForwardDifference()
    if spec == "fd":
        return ForwardDifference()
    if spec.startswith("frozen:"):
        try:
            age = int(spec.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"bad frozen age in {spec!r}") from None
        if age < 1:
            raise ConfigError("frozen age must be at least 1")
        return Frozen(max_age=age, base=base)
    if spec == "lagged":
        return TimeLagged(base=base)
    raise ConfigError(f"unknown jacobian strategy {spec!r}; "
                      "choose analytic, fd, frozen:N, or lagged")


def _write_csv(out: str | None, header: list[str], rows) -> None:
    if out is None:
        writer = csv.writer(_sys.stdout, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        return
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _plot_target(args) -> Path:
    if not args.out:
        raise ConfigError("--plot needs --out to place the figure next to")
    return Path(args.out).with_suffix(".png")


def _report_failure(exc: IntegrationFailure) -> int:
    print(f"integration failed: {exc}", file=_sys.stderr)
    state = np.atleast_1d(np.asarray(exc.state))
    listing = ", ".join(repr(float(x)) for x in state[:8])
    if state.size > 8:
        listing += ", ..."
    print(f"last state at t={exc.t_reached!r}: [{listing}]", file=_sys.stderr)
    return 1


def _cmd_integrate(args) -> int:
    sys_ = _build_problem(args.problem, args.params, args.t_end)
    method = _resolve_method(args)
    strategy = _jacobian_strategy(args.jacobian, sys_)
    if args.h is not None and not args.fixed:
        raise ConfigError("--h selects the fixed step; pair it with --fixed "
                          "(adaptive runs take --h0)")
    if args.fixed and args.h is None:
        raise ConfigError("--fixed needs --h")
    if args.h is not None and args.h <= 0:
        raise ConfigError("--h must be positive")

    if isinstance(method, (TwoStepWTableau, PeerTableau)):
        if not args.fixed:
            raise ConfigError(
                f"{method.name} is a two-step method; it runs on a fixed "
                "grid (--fixed --h H)")
        span = sys_.t_span[1] - sys_.t_span[0]
        n_steps = max(1, round(span / args.h))
        traj = integrate_twostep(sys_, method, n_steps, jacobian=strategy)
    else:
        ctrl = ControlSettings(atol=args.atol, rtol=args.rtol, h0=args.h0,
                               error_mode=args.error_mode, jacobian=strategy,
                               mode=args.mode, fixed_h=args.h)
        try:
            traj = integrate(sys_, method, ctrl)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    dim = traj.states.shape[1]
    header = ["t"] + [f"u_{k + 1}" for k in range(dim)]
    rows = ([t] + list(state) for t, state in zip(traj.times, traj.states))
    _write_csv(args.out, header, rows)
    if args.plot:
        from .plots import save_trajectory_figure
        save_trajectory_figure(traj, _plot_target(args),
                               title=f"{sys_.name} / {method.name}")
    return 0


def _parse_n_list(raw: str | None):
    if raw is None:
        return DEFAULT_N_LIST
    try:
        ns = tuple(int(part) for part in raw.split(","))
    except ValueError:
        raise ConfigError(f"bad --n-list {raw!r}; expected e.g. 8,16,32") from None
    if len(ns) < 2 or any(n < 1 for n in ns):
        raise ConfigError("--n-list needs at least two positive step counts")
    return ns


def _cmd_converge(args) -> int:
    sys_ = _build_problem(args.problem, args.params, args.t_end)
    method = _resolve_method(args)
    strategy = _jacobian_strategy(args.jacobian, sys_)
    n_list = _parse_n_list(args.n_list)
    mode = args.mode if isinstance(method, (RowTableau, TransformedTableau)) \
        else None
    try:
        result = measure_order(sys_, method, n_list, jacobian=strategy,
                               mode=mode)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    rows = ([h, e, o] for h, e, o in
            zip(result.hs, result.errors, result.orders))
    _write_csv(args.out, ["h", "error", "observed_order"], rows)
    if args.plot:
        from .plots import save_convergence_figure
        save_convergence_figure(result, _plot_target(args))
    return 0


def _parse_range(raw: str, what: str) -> tuple[float, float]:
    parts = raw.split(":")
    if len(parts) != 2:
        raise ConfigError(f"bad {what} {raw!r}; expected MIN:MAX")
    lo, hi = (_num(p, what) for p in parts)
    if hi <= lo:
        raise ConfigError(f"{what}: need MIN < MAX")
    return lo, hi


def _parse_grid(raw: str) -> tuple[int, int]:
    try:
        nx, ny = (int(p) for p in raw.lower().split("x"))
    except ValueError:
        raise ConfigError(f"bad --grid {raw!r}; expected NXxNY") from None
    if nx < 2 or ny < 2:
        raise ConfigError("--grid needs at least 2 points per axis")
    return nx, ny


def _stability_model(method):
    if isinstance(method, TransformedTableau):
        from .tableaus import inverse_transform
        method = inverse_transform(method)
    if isinstance(method, RowTableau):
        return RowStability(method), method
    if isinstance(method, PeerTableau):
        return None, method
    raise ConfigError(f"{method.name}: no scalar stability function for "
                      "two-step W methods")


def _cmd_stability(args) -> int:
    method = _resolve_method(args)
    model, method = _stability_model(method)
    lines = [f"method: {method.name}"]
    if model is not None:
        report = classify(model)
        r_inf = report.r_infinity
        r_txt = repr(r_inf.real if abs(r_inf.imag) < 1e-14 else r_inf)
        lines += [f"r_infinity: {r_txt}",
                  f"a_stable: {str(report.a_stable).lower()}",
                  f"l_stable: {str(report.l_stable).lower()}",
                  f"alpha_deg: {report.alpha_deg!r}"]
    else:
        rho0 = peer_spectral_radius(method, 0.0)
        zs = -np.logspace(-6, 8, 49)
        rho_axis = max(peer_spectral_radius(method, z) for z in zs)
        lines += ["kind: peer",
                  f"rho_m0: {rho0!r}",
                  f"zero_stable: {str(rho0 <= 1.0 + 1e-8).lower()}",
                  f"max_rho_neg_axis: {rho_axis!r}"]
    print("\n".join(lines))
    if args.out:
        scan_model = model if model is not None else _PeerRadius(method)
        re_range = _parse_range(args.re_range, "--re-range")
        im_range = _parse_range(args.im_range, "--im-range")
        nx, ny = _parse_grid(args.grid)
        re, im, mag = region_scan(scan_model, re_range, im_range, nx, ny)
        rows = ([a, b, c] for a, b, c in zip(re, im, mag))
        _write_csv(args.out, ["re", "im", "abs_r"], rows)
        if args.plot:
            from .plots import save_region_figure
            save_region_figure(re, im, mag, _plot_target(args),
                               title=f"{method.name}: |R(z)| <= 1")
    elif args.plot:
        raise ConfigError("--plot needs --out (the scan grid to draw)")
    return 0


class _PeerRadius:
    """Adapter: spectral radius of the stage transfer matrix as a scalar map."""

    def __init__(self, tab: PeerTableau):
        self.tab = tab

    def __call__(self, z: complex) -> float:
        return peer_spectral_radius(self.tab, z)


def _method_flags(method) -> str:
    if isinstance(method, RowTableau):
        report = classify(RowStability(method))
        if report.l_stable:
            flag = "L-stable"
        elif report.a_stable:
            flag = "A-stable"
        elif report.alpha_deg > 0.0:
            flag = f"A({report.alpha_deg:.1f})-stable"
        else:
            flag = "conditionally stable"
        if method.b_hat is not None:
            flag += f", embedded p={method.embedded_order}"
        return flag
    if isinstance(method, PeerTableau):
        rho0 = peer_spectral_radius(method, 0.0)
        return "zero-stable" if rho0 <= 1.0 + 1e-8 else "not zero-stable"
    return "fixed-step"


def _method_kind(method) -> str:
    if isinstance(method, RowTableau):
        return "one-step"
    if isinstance(method, TwoStepWTableau):
        return "two-step W"
    return "peer"


def _cmd_list_methods(_args) -> int:
    rows = [(m.name, _method_kind(m), str(m.stages), str(m.order),
             _method_flags(m)) for m in builtin_methods()]
    widths = [max(len(r[k]) for r in rows + [_LIST_HEADER])
              for k in range(5)]
    for r in [_LIST_HEADER] + rows:
        print("  ".join(col.ljust(w) for col, w in zip(r, widths)).rstrip())
    return 0


_LIST_HEADER = ("name", "kind", "stages", "order", "stability")


def _add_common(p: argparse.ArgumentParser, with_problem: bool = True) -> None:
    p.add_argument("--method", help="built-in method name (see list-methods)")
    p.add_argument("--tableau-file", help="path to a tableau text file")
    p.add_argument("--out", help="CSV output path (default: stdout)")
    p.add_argument("--plot", action="store_true",
                   help="render a PNG figure next to --out")
    if with_problem:
        p.add_argument("--problem", help="dahlquist | heat1d | protrob")
        p.add_argument("params", nargs="*", metavar="key=value",
                       help="problem parameters, e.g. lambda=-1 n=20")
        p.add_argument("--t-end", type=float, default=None,
                       help="override the problem's end time")
        p.add_argument("--jacobian", default=None,
                       help="analytic | fd | frozen:N | lagged")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rowsolve",
        description="Linearly implicit stiff ODE integration toolkit")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_int = sub.add_parser("integrate", help="run one integration")
    _add_common(p_int)
    p_int.add_argument("--atol", type=float, default=1.0e-6)
    p_int.add_argument("--rtol", type=float, default=1.0e-6)
    p_int.add_argument("--h", type=float, default=None,
                       help="fixed step size (with --fixed)")
    p_int.add_argument("--h0", type=float, default=None,
                       help="initial step size for the adaptive driver")
    p_int.add_argument("--fixed", action="store_true",
                       help="disable error control; step with --h")
    p_int.add_argument("--error-mode", choices=[EMBEDDED, RICHARDSON],
                       default=EMBEDDED)
    p_int.add_argument("--mode", choices=[DIRECT, TRANSFORMED],
                       default=TRANSFORMED, help="stage formulation")

    p_conv = sub.add_parser("converge", help="step-halving order study")
    _add_common(p_conv)
    p_conv.add_argument("--n-list", default=None,
                        help="comma-separated step counts "
                             f"(default {','.join(map(str, DEFAULT_N_LIST))})")
    p_conv.add_argument("--mode", choices=[DIRECT, TRANSFORMED],
                        default=TRANSFORMED)

    p_stab = sub.add_parser("stability",
                            help="classify a method's stability function")
    _add_common(p_stab, with_problem=False)
    p_stab.add_argument("--re-range", default="-4:4",
                        help="real-axis scan range MIN:MAX")
    p_stab.add_argument("--im-range", default="-4:4",
                        help="imaginary-axis scan range MIN:MAX")
    p_stab.add_argument("--grid", default="81x81", help="scan grid NXxNY")

    sub.add_parser("list-methods", help="print the built-in catalog")
    return parser


_DISPATCH = {
    "integrate": _cmd_integrate,
    "converge": _cmd_converge,
    "stability": _cmd_stability,
    "list-methods": _cmd_list_methods,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _DISPATCH[args.subcommand](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return 2
    except IntegrationFailure as exc:
        return _report_failure(exc)


if __name__ == "__main__":
    raise SystemExit(main())
