"""Command-line front end (``aggring <subcommand> ...``).

Exit codes: 0 success, 1 a check failed, 2 invalid input, 3 the positivity
search for the ring ratio failed, 4 a numerical method did not converge.
"""

from __future__ import annotations

import argparse
import json
import math
import platform
import sys
from contextlib import ExitStack
from pathlib import Path

import numpy as np

from . import __version__
from . import io as aio
from .dynamics import (
    IntegrateOptions,
    collapse_fit,
    discretize_ball,
    integrate,
    predicted_collapse_time,
)
from .errors import (
    AggringError,
    ContractError,
    ConvergenceError,
    DomainError,
    IntegrationError,
    SearchError,
)
from .kernel import (
    KernelParams,
    Regime,
    phi,
    phi_prime_at_zero,
    psi,
    regime,
    sphere_area,
)
from .quadrature import current_config, quad_settings
from .rings import ratio_residual, search_lambda, solve_geometric
from .series import psi_series
from .verify import BALL_SLOPE_TOL, BALL_TIME_TOL, ball_slope_deviation, default_grid, run_all, worst_result

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_SEARCH, EXIT_NUMERIC = 0, 1, 2, 3, 4
RESIDUAL_TOL = 1e-8
FIT_RESIDUAL_TOL = 1e-6


class UsageError(Exception):
    """Invalid command-line input (exit code 2)."""


def _params(d: int, alpha: float) -> KernelParams:
    try:
        return aio.params_for(d, alpha)
    except DomainError as exc:
        raise UsageError(f"{exc}; admissible interval is (2-d, 2) = ({2 - d}, 2)") from exc


def _range(text: str) -> list[float]:
    try:
        return aio.parse_range(text)
    except DomainError as exc:
        raise UsageError(str(exc)) from exc


def _open_out(stack: ExitStack, path: str | None):
    if path is None or path == "-":
        return sys.stdout
    return stack.enter_context(open(path, "w", encoding="utf-8", newline="\n"))


def _info(args, text: str) -> None:
    """Human-readable lines go to stdout unless stdout carries the data table."""
    stream = sys.stderr if getattr(args, "out", None) in (None, "-") else sys.stdout
    print(text, file=stream)


# --- subcommands ------------------------------------------------------------------

def cmd_phi(args) -> int:
    params = _params(args.d, args.alpha)
    rows = []
    for r in _range(args.r):
        res = phi(params, r)
        if r > 0:
            over_r = res.value / r
        else:
            over_r = phi_prime_at_zero(params)
        rows.append([r, res.value, res.abs_error_estimate, over_r])
    with ExitStack() as stack:
        aio.write_csv(_open_out(stack, args.out), ["r", "phi", "phi_error_est", "phi_over_r"], rows)
    return EXIT_OK


def cmd_psi(args) -> int:
    params = _params(args.d, args.alpha)
    rows = []
    for r in _range(args.r):
        res = psi(params, r)
        rows.append([r, res.value, res.abs_error_estimate, int(np.sign(res.value))])
    with ExitStack() as stack:
        aio.write_csv(_open_out(stack, args.out), ["r", "psi", "psi_error_est", "sign"], rows)
    return EXIT_OK


def cmd_series(args) -> int:
    if (args.alpha is None) == (args.gamma is None):
        raise UsageError("give exactly one of --alpha or --gamma")
    alpha = args.alpha if args.alpha is not None else 4 - args.d - args.gamma
    params = _params(args.d, alpha)
    if not -1 < params.gamma < 0:
        raise UsageError(f"series needs 4 < d + alpha < 5 (gamma in (-1, 0)); got gamma = {params.gamma:g}")
    rows = []
    for r in _range(args.r):
        try:
            s = psi_series(params, r)
        except DomainError as exc:
            raise UsageError(str(exc)) from exc
        q = psi(params, r).value
        rows.append([r, s, q, s - q])
    with ExitStack() as stack:
        aio.write_csv(_open_out(stack, args.out), ["r", "psi_series", "psi_quadrature", "difference"], rows)
    return EXIT_OK


def cmd_rings(args) -> int:
    params = _params(args.d, args.alpha)
    n = args.n
    if n < 1:
        raise UsageError("--n must be >= 1")
    if n >= 2 and regime(params) is not Regime.SUBCRITICAL:
        raise UsageError(
            f"multi-ring similarity configurations need 2 < d + alpha < 4; "
            f"(d={params.d}, alpha={params.alpha:g}) is {regime(params).value}"
        )
    threshold = None
    if args.lam is not None:
        lam = args.lam
        if not lam > 1:
            raise UsageError("--lambda must be > 1")
    elif n == 1:
        lam = 2.0  # unused: a single ring sits at radius 1
    else:
        try:
            found = search_lambda(params, n)
        except SearchError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_SEARCH
        lam, threshold = found.safe, found.threshold
    config, report = solve_geometric(params, n, lam, normalize=not args.no_normalize)
    residual = ratio_residual(config)
    with ExitStack() as stack:
        _open_out(stack, args.out).write(aio.config_to_text(config))
    if threshold is not None:
        _info(args, f"lambda_threshold {aio.fmt(threshold)}")
    _info(args, f"lambda {aio.fmt(lam)}")
    _info(args, f"positivity {str(report.positivity).lower()}")
    _info(args, f"ratio_residual {aio.fmt(residual)}")
    _info(args, f"condition_estimate {aio.fmt(report.matrix_condition_estimate)}")
    ok = report.positivity and residual < RESIDUAL_TOL
    return EXIT_OK if ok else EXIT_FAIL


def cmd_simulate(args) -> int:
    try:
        config = aio.read_config(args.config)
    except DomainError as exc:
        raise UsageError(str(exc)) from exc
    if config.n == 0:
        raise UsageError("config has no rings to simulate")
    if not config.is_admissible:
        raise UsageError("config has non-positive ring masses")
    residual = ratio_residual(config)
    similar = residual < FIT_RESIDUAL_TOL
    t_end = args.t_end if args.t_end is not None else 2 * predicted_collapse_time(config)
    if not (t_end > 0 and math.isfinite(t_end)):
        raise UsageError("--t-end must be positive")
    opts = IntegrateOptions(rtol=args.rtol, atol=args.atol, save_every=args.save_every)
    try:
        traj = integrate(config, t_end, opts)
    except IntegrationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    lines = [f"aggring trajectory d={config.params.d} alpha={aio.fmt(config.params.alpha)}",
             f"initial ratio_residual {aio.fmt(residual)}"]
    summary = {"similarity": similar, "ratio_residual": residual, "steps": traj.steps,
               "events": len(traj.events)}
    if similar:
        fit = collapse_fit(traj, window=args.window)
        summary.update(lambda_fit=fit.lambda_fit, T0=fit.T0, max_profile_error=fit.max_profile_error,
                       blowup_time_observed=fit.blowup_time_observed, window=args.window)
        for key in ("lambda_fit", "T0", "max_profile_error", "blowup_time_observed"):
            lines.append(f"{key} {aio.fmt(summary[key])}")
    else:
        lines.append("no collapse fit: initial state is not a similarity configuration")
    with ExitStack() as stack:
        _open_out(stack, args.out).write(aio.trajectory_text(traj, lines))
    for line in lines[1:]:
        _info(args, line)
    if args.summary:
        clean = {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in summary.items()}
        Path(args.summary).write_text(json.dumps(clean, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_example51(args) -> int:
    if args.d < 2:
        raise UsageError("example51 needs --d >= 2")
    if args.M < 1:
        raise UsageError("--M must be >= 1")
    if not args.density > 0:
        raise UsageError("--density must be positive")
    ball = discretize_ball(args.d, args.M, args.density)
    omega = sphere_area(args.d)
    slope_expected = args.density * omega / args.d
    T_expected = 1 / (args.density * omega)
    ok = True
    inside = (ball.radii > 0.05) & (ball.radii < 0.95)
    print(f"rings {ball.n}")
    print(f"slope_expected {aio.fmt(slope_expected)}")
    if inside.any():
        dev = ball_slope_deviation(ball.scaled(1 / args.density))
        ok &= dev < BALL_SLOPE_TOL
        print(f"slope_max_rel_deviation {aio.fmt(dev)} margin {aio.fmt(BALL_SLOPE_TOL - dev)}")
    else:
        print("slope check skipped: no rings in (0.05, 0.95)")
    traj = integrate(ball, 2 * max(T_expected, predicted_collapse_time(ball)),
                     IntegrateOptions(save_every=10**9))
    T_obs = traj.blowup_time
    rel = abs(T_obs / T_expected - 1)
    ok &= rel < BALL_TIME_TOL
    print(f"collapse_time_expected {aio.fmt(T_expected)}")
    print(f"collapse_time_observed {aio.fmt(T_obs)}")
    print(f"collapse_time_rel_error {aio.fmt(rel)} margin {aio.fmt(BALL_TIME_TOL - rel)}")
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_FAIL


def _verify_grid(args):
    if args.point:
        pts = []
        for text in args.point:
            try:
                d_text, a_text = text.split(",")
                pts.append((int(d_text), float(a_text)))
            except ValueError as exc:
                raise UsageError(f"--point expects d,alpha; got {text!r}") from exc
        return pts
    grid = default_grid()
    if args.d:
        wanted = {int(x) for x in args.d.split(",")}
        grid = [p for p in grid if p[0] in wanted]
    return grid


def cmd_verify(args) -> int:
    grid = _verify_grid(args)
    r_grid = _range(args.r) if args.r else None
    reports = run_all(grid, r_grid, workers=args.workers)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.csv").write_text(
        aio.csv_text(aio.REPORT_HEADER, aio.report_rows(reports)), encoding="utf-8", newline="\n"
    )
    (out_dir / "summary.json").write_text(aio.summary_document(reports), encoding="utf-8", newline="\n")
    cfg = current_config()
    meta = {
        "argv": sys.argv[1:],
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "quad_tol": cfg.tol,
        "quad_rel_tol": cfg.rel_tol,
        "quad_max_panels": cfg.max_panels,
    }
    (out_dir / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    failed = [r for r in reports if not r.passed]
    n_points = sum(len(r.results) for r in reports)
    print(f"reports {len(reports)} points {n_points} failed_reports {len(failed)}")
    worst = worst_result(reports)
    if worst is not None:
        rep, pt = worst
        d, a = rep.params_grid[0]
        print(f"worst margin {aio.fmt(pt.margin)} claim={rep.claim_id} d={d} alpha={aio.fmt(a)} "
              f"label={pt.label!r} r={'' if pt.r is None else aio.fmt(pt.r)}")
    for rep in failed:
        if rep.error:
            print(f"error claim={rep.claim_id} at {rep.params_grid}: {rep.error}")
    return EXIT_OK if not failed else EXIT_FAIL


# --- parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--quad-tol", type=float, default=None,
                        help="absolute quadrature tolerance (default 1e-10 or $AGGRING_QUAD_TOL)")
    common.add_argument("--quad-max-panels", type=int, default=None, help="quadrature panel cap (default 16384)")

    parser = argparse.ArgumentParser(prog="aggring", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def kernel_args(p, alpha_required=True):
        p.add_argument("--d", type=int, required=True, help="space dimension")
        p.add_argument("--alpha", type=float, required=alpha_required, help="kernel exponent in (2-d, 2)")
        p.add_argument("--out", default=None, help="output file (default stdout)")

    p = sub.add_parser("phi", parents=[common], help="tabulate the kernel phi(r)")
    kernel_args(p)
    p.add_argument("--r", default="0:5:0.1", help="start:end:step or comma list (default 0:5:0.1)")
    p.set_defaults(func=cmd_phi)

    p = sub.add_parser("psi", parents=[common], help="tabulate the monotonicity functional psi(r)")
    kernel_args(p)
    p.add_argument("--r", default="0.1:5:0.1", help="start:end:step or comma list")
    p.set_defaults(func=cmd_psi)

    p = sub.add_parser("series", parents=[common], help="series evaluation of psi for 4 < d+alpha < 5")
    kernel_args(p, alpha_required=False)
    p.add_argument("--gamma", type=float, default=None, help="4 - d - alpha, alternative to --alpha")
    p.add_argument("--r", default="0.1:0.9:0.1", help="radii in [0, 0.95]")
    p.set_defaults(func=cmd_series)

    p = sub.add_parser("rings", parents=[common], help="construct a geometric multi-ring similarity config")
    kernel_args(p)
    p.add_argument("--n", type=int, required=True, help="number of rings")
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="ring ratio (default: searched)")
    p.add_argument("--no-normalize", action="store_true", help="keep rate 1 instead of unit total mass")
    p.set_defaults(func=cmd_rings)

    p = sub.add_parser("simulate", parents=[common], help="integrate ring dynamics from a config document")
    p.add_argument("--config", required=True, help="config document written by 'rings'")
    p.add_argument("--t-end", type=float, default=None, help="final time (default: twice the predicted collapse)")
    p.add_argument("--out", default=None, help="trajectory CSV (default stdout)")
    p.add_argument("--summary", default=None, help="write the collapse summary as JSON")
    p.add_argument("--rtol", type=float, default=1e-8)
    p.add_argument("--atol", type=float, default=1e-10)
    p.add_argument("--save-every", type=int, default=1, help="store every k-th accepted step")
    p.add_argument("--window", type=float, default=0.99,
                   help="profile error is measured for t <= window*T0 (default 0.99)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("example51", parents=[common], help="uniform ball on the limiting boundary alpha = 2-d")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--M", type=int, default=1000, help="number of shells/rings")
    p.add_argument("--density", type=float, default=1.0)
    p.set_defaults(func=cmd_example51)

    p = sub.add_parser("verify", parents=[common], help="run the verification suite")
    p.add_argument("--point", action="append", help="restrict to d,alpha (repeatable)")
    p.add_argument("--d", default=None, help="restrict the default grid to these dimensions (comma list)")
    p.add_argument("--r", default=None, help="override the r grid")
    p.add_argument("--out-dir", default="verify_out", help="directory for report.csv, summary.json, metadata.json")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    changes = {}
    if args.quad_tol is not None:
        if not args.quad_tol > 0:
            parser.error("--quad-tol must be positive")
        changes["tol"] = args.quad_tol
    if args.quad_max_panels is not None:
        if args.quad_max_panels < 1:
            parser.error("--quad-max-panels must be >= 1")
        changes["max_panels"] = args.quad_max_panels
    try:
        with quad_settings(**changes):
            return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (DomainError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ConvergenceError, AggringError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
