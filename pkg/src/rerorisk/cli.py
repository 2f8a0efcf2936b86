"""Command-line interface: ``rerorisk {bound,calibrate,corridor,simulate,sweep}``.

Results go to stdout as CSV (default) or JSON lines. Diagnostics go to
stderr; domain and usage errors exit with status 2.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import math
import os
import sys
from typing import Iterable, Optional

import numpy as np

from . import bounds
from .bounds import RiskParams
from .exceptions import ConfigurationError, DomainError, ReconstructionError, ShapeError
from .mechanism import (
    AttackConfig,
    TargetVector,
    clip_factor,
    ks_critical_value,
    ks_statistic,
    psnr,
    run_trials,
)
from .specfun import inverse_regularized_gamma_p

EXIT_USAGE = 2

SWEEP_VARIABLES = {
    "sigma": "sigma",
    "eta": "eta",
    "gamma": "gamma",
    "m": "m_rows",
    "rest_norm": "rest_norm",
}
_TARGET_STREAM = (1,)


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# output


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _json_value(value):
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else repr(value)
    return value


def write_rows(rows: list[dict], fmt: str, stream) -> None:
    if fmt == "json":
        for row in rows:
            stream.write(json.dumps({k: _json_value(v) for k, v in row.items()}) + "\n")
        return
    if not rows:
        return
    writer = csv.writer(stream, lineterminator="\r\n")
    writer.writerow(list(rows[0]))
    for row in rows:
        writer.writerow([_fmt(v) for v in row.values()])


# --------------------------------------------------------------------------
# argument helpers


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma separated list of numbers: {text!r}")


def _grid(text: str) -> list[float]:
    """``a,b,c`` or ``lin:START:STOP:NUM`` / ``geom:START:STOP:NUM``."""
    if text.startswith(("lin:", "geom:")):
        kind, *parts = text.split(":")
        if len(parts) != 3:
            raise argparse.ArgumentTypeError(f"expected {kind}:START:STOP:NUM")
        try:
            start, stop, num = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad grid {text!r}")
        if kind == "lin":
            return [float(v) for v in np.linspace(start, stop, num)]
        if start <= 0 or stop <= 0:
            raise argparse.ArgumentTypeError("geometric grids need positive end points")
        return [float(v) for v in np.geomspace(start, stop, num)]
    return _float_list(text)


def _add_output(p):
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--config", metavar="PATH", help="flat 'key = value' file; flags override it")


def _add_risk(p, sigma=True):
    p.add_argument("--n", type=int, help="dimension N of a target")
    if sigma:
        p.add_argument("--sigma", type=float, help="noise multiplier")
    p.add_argument("--min-norm", type=float, default=1.0, help="smallest non-zero target norm")
    p.add_argument("--clip-norm", type=float, default=1.0)


def _add_attack(p):
    p.add_argument("--m-rows", type=int, default=1)
    p.add_argument("--rest-norm", type=float, default=0.0)
    p.add_argument("--include-bias", action="store_true")
    p.add_argument("--target", type=_float_list, help="explicit target entries, comma separated")
    p.add_argument("--target-norm", type=float, help="norm of the synthetic target (default: min-norm)")
    p.add_argument("--data-range", type=float, help="PSNR range (default: the target's own)")
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1, help="worker threads for trials")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rerorisk",
        description="Reconstruction-risk bounds for analytic gradient inversion under DP-SGD.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bound", help="success-probability bound for an MSE or PSNR threshold")
    p.add_argument("--metric", choices=["mse", "psnr"], default="mse")
    _add_risk(p)
    p.add_argument("--eta", type=float, help="MSE threshold")
    p.add_argument("--eta-db", type=float, help="PSNR threshold in dB")
    p.add_argument("--data-range", type=float, help="value range of the data (PSNR)")
    p.add_argument("--target-norm", type=float, help="evaluate for one target of this norm")
    _add_output(p)

    p = sub.add_parser("calibrate", help="noise multiplier for an (eta, gamma) target")
    _add_risk(p, sigma=False)
    p.add_argument("--eta", type=float)
    p.add_argument("--gamma", type=float)
    _add_output(p)

    p = sub.add_parser("corridor", help="risk corridor for an identification bound's gamma")
    _add_risk(p)
    p.add_argument("--gamma-prior", type=float)
    _add_output(p)

    p = sub.add_parser("simulate", help="Monte Carlo run of the optimal attack")
    _add_risk(p)
    _add_attack(p)
    p.add_argument("--dump", metavar="PATH", help="write per-trial trial,mse,psnr CSV")
    _add_output(p)

    p = sub.add_parser("sweep", help="evaluate bounds or simulations over a grid")
    p.add_argument("--variable", choices=sorted(SWEEP_VARIABLES), required=False)
    p.add_argument("--grid", type=_grid, help="a,b,c or lin:START:STOP:NUM or geom:START:STOP:NUM")
    p.add_argument("--columns", type=lambda s: [c for c in s.split(",") if c])
    _add_risk(p)
    p.add_argument("--eta", type=float)
    p.add_argument("--gamma", type=float)
    _add_attack(p)
    p.set_defaults(trials=0)
    _add_output(p)
    return parser


# --------------------------------------------------------------------------
# config file


def _read_config(path: str) -> dict[str, str]:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}")
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise UsageError(f"malformed config {path}: {exc}")
    return {k.strip().lstrip("-").replace("-", "_"): v.strip() for k, v in cp["config"].items()}


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> set[str]:
    """Install config-file values as subcommand defaults; return the keys set."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config or not known.command:
        return set()
    sub_action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    subparser = sub_action.choices.get(known.command)
    if subparser is None:
        return set()
    all_dests = {
        a.dest for sp in sub_action.choices.values() for a in sp._actions
    }
    actions = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, value in _read_config(known.config).items():
        if key not in all_dests or key in ("config", "help"):
            if key not in all_dests:
                raise UsageError(f"unknown config key {key!r}")
            continue
        action = actions.get(key)
        if action is None:
            continue
        if isinstance(action, argparse._StoreTrueAction):
            if value.lower() not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                raise UsageError(f"config key {key!r} needs a boolean")
            defaults[key] = value.lower() in ("1", "true", "yes", "on")
        elif action.choices is not None and value not in action.choices:
            raise UsageError(f"config key {key!r}: {value!r} not in {sorted(action.choices)}")
        else:
            defaults[key] = value
    subparser.set_defaults(**defaults)
    return set(defaults)


def _flags_given(argv: list[str]) -> set[str]:
    return {
        tok[2:].split("=", 1)[0].replace("-", "_") for tok in argv if tok.startswith("--")
    }


# --------------------------------------------------------------------------
# commands


def _need(args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        flags = ", ".join("--" + m.replace("_", "-") for m in missing)
        raise UsageError(f"missing required option(s): {flags}")


def _risk_params(args, data_range=None) -> RiskParams:
    return RiskParams(
        n=args.n,
        noise_multiplier=args.sigma,
        clip_norm=args.clip_norm,
        min_norm=args.min_norm,
        data_range=data_range,
    )


def cmd_bound(args) -> list[dict]:
    _need(args, "n", "sigma")
    if args.metric == "mse":
        _need(args, "eta")
        params = _risk_params(args)
        if args.target_norm is not None:
            gamma = bounds.mse_success_probability(params, args.target_norm, args.eta)
            result = bounds.ReRoResult(
                bounds.Metric.MSE, args.eta, gamma, bounds.Direction.ERROR_AT_MOST_ETA
            )
        else:
            result = bounds.rero_gamma_mse(params, args.eta)
        eta_mse = args.eta
    else:
        _need(args, "eta_db", "data_range")
        params = _risk_params(args, data_range=args.data_range)
        if args.target_norm is not None:
            params = RiskParams(
                params.n, params.noise_multiplier, params.clip_norm, args.target_norm,
                data_range=params.data_range,
            )
        result = bounds.psnr_exceedance_bound(params, args.eta_db)
        eta_mse = bounds.psnr_to_mse_threshold(args.eta_db, args.data_range)
    norm = params.min_norm if args.target_norm is None else args.target_norm
    return [
        {
            "metric": result.metric.value,
            "n": params.n,
            "sigma": params.noise_multiplier,
            "norm": norm,
            "eta": result.eta,
            "eta_mse": eta_mse,
            "gamma": result.gamma,
            "direction": result.direction.value,
        }
    ]


def cmd_calibrate(args) -> list[dict]:
    _need(args, "n", "eta", "gamma")
    sigma = bounds.sigma_from_eta_gamma(args.n, args.min_norm, args.eta, args.gamma)
    return [
        {"n": args.n, "min_norm": args.min_norm, "eta": args.eta, "gamma": args.gamma, "sigma": sigma}
    ]


def cmd_corridor(args) -> list[dict]:
    _need(args, "n", "sigma", "gamma_prior")
    lower, upper = bounds.risk_corridor(_risk_params(args), args.gamma_prior)
    return [
        {
            "n": args.n,
            "sigma": args.sigma,
            "min_norm": args.min_norm,
            "gamma_prior": args.gamma_prior,
            "eta_lower": lower,
            "eta_upper": upper,
        }
    ]


def _target(args) -> TargetVector:
    if args.target is not None:
        target = TargetVector(args.target)
        if args.n is not None and args.n != target.n:
            raise UsageError(f"--n {args.n} does not match the {target.n} target entries")
    else:
        _need(args, "n")
        norm = args.min_norm if args.target_norm is None else args.target_norm
        rng = np.random.default_rng(np.random.SeedSequence(args.seed, spawn_key=_TARGET_STREAM))
        target = TargetVector.on_sphere(args.n, norm, rng)
    target.require_nonzero()
    return target


def _attack_config(args) -> AttackConfig:
    return AttackConfig(
        m_rows=args.m_rows,
        clip_norm=args.clip_norm,
        noise_multiplier=args.sigma,
        rest_norm=args.rest_norm,
        include_bias=args.include_bias,
        seed=args.seed,
    )


def _theory_quantile(n, sigma, norm, p):
    return sigma**2 * norm**2 / n * 2.0 * inverse_regularized_gamma_p(n / 2.0, p)


def _simulation_summary(target: TargetVector, config: AttackConfig, args):
    batch = run_trials(target, config, args.trials, data_range=args.data_range, n_jobs=args.jobs)
    n = target.n
    sigma = config.noise_multiplier
    params = RiskParams(n, sigma, config.clip_norm, target.norm)
    q25, q50, q75 = np.quantile(batch.mse, [0.25, 0.5, 0.75])
    finite = batch.finite_psnr
    rng_value = target.value_range if args.data_range is None else args.data_range
    theory_median = _theory_quantile(n, sigma, target.norm, 0.5)
    theory_psnr_median = float(psnr(theory_median, rng_value))
    row = {
        "trials": batch.trials,
        "seed": batch.seed,
        "n": n,
        "target_norm": target.norm,
        "sigma": sigma,
        "clip_norm": config.clip_norm,
        "m_rows": config.m_rows,
        "rest_norm": config.rest_norm,
        "include_bias": config.include_bias,
        "clip_factor": clip_factor(target, config),
        "mse_mean": float(np.mean(batch.mse)),
        "mse_q25": float(q25),
        "mse_median": float(q50),
        "mse_q75": float(q75),
        "theory_mse_mean": bounds.expected_mse(sigma, target.norm),
        "theory_mse_q25": _theory_quantile(n, sigma, target.norm, 0.25),
        "theory_mse_median": theory_median,
        "theory_mse_q75": _theory_quantile(n, sigma, target.norm, 0.75),
        "psnr_mean": float(np.mean(finite)) if finite.size else math.nan,
        "psnr_median": float(np.median(finite)) if finite.size else math.nan,
        "psnr_perfect_count": int(batch.trials - finite.size),
        "theory_psnr_median": theory_psnr_median,
        "ks": ks_statistic(batch, params, target.norm),
        "ks_critical_5pct": ks_critical_value(batch.trials),
    }
    return row, batch


def cmd_simulate(args) -> list[dict]:
    _need(args, "sigma")
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    target = _target(args)
    row, batch = _simulation_summary(target, _attack_config(args), args)
    if args.dump:
        with open(args.dump, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\r\n")
            writer.writerow(["trial", "mse", "psnr"])
            for i, (m, p) in enumerate(zip(batch.mse, batch.psnr)):
                writer.writerow([i, _fmt(m), _fmt(p)])
    return [row]


def _sweep_row(args) -> dict:
    row = {}
    n, sigma, eta, gamma = args.n, args.sigma, args.eta, args.gamma
    if n is not None and sigma is not None and eta is not None:
        row["gamma_bound"] = bounds.rero_gamma_mse(_risk_params(args), eta).gamma
    if n is not None and eta is not None and gamma is not None:
        row["sigma_required"] = bounds.sigma_from_eta_gamma(n, args.min_norm, eta, gamma)
    if n is not None and sigma is not None and gamma is not None:
        row["eta_at_gamma"] = bounds.eta_from_gamma(_risk_params(args), gamma)
    if args.trials and sigma is not None:
        summary, _ = _simulation_summary(_target(args), _attack_config(args), args)
        for key in ("clip_factor", "mse_mean", "mse_median", "theory_mse_mean", "ks"):
            row[key] = summary[key]
    return row


def cmd_sweep(args) -> list[dict]:
    _need(args, "variable", "grid")
    dest = SWEEP_VARIABLES[args.variable]
    grid = args.grid
    if not grid:
        raise UsageError("--grid is empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise UsageError("--grid must be strictly increasing")
    if dest in args.fixed:
        raise UsageError(f"--{args.variable.replace('_', '-')} is the sweep variable; drop the fixed value")
    if dest == "m_rows" and any(int(v) != v for v in grid):
        raise UsageError("an M grid needs integers")

    rows = []
    for value in grid:
        point = argparse.Namespace(**vars(args))
        setattr(point, dest, int(value) if dest == "m_rows" else value)
        computed = _sweep_row(point)
        row = {args.variable: getattr(point, dest)}
        row.update(computed)
        rows.append(row)

    available = list(rows[0])
    if len(available) == 1:
        raise UsageError("nothing to compute: supply --n with --sigma/--eta/--gamma or --trials")
    if args.columns:
        unknown = [c for c in args.columns if c not in available]
        if unknown:
            raise UsageError(f"column(s) {unknown} not computable; available: {available}")
        rows = [{c: r[c] for c in args.columns} for r in rows]
    return rows


COMMANDS = {
    "bound": cmd_bound,
    "calibrate": cmd_calibrate,
    "corridor": cmd_corridor,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
}


def _diagnose(message: str) -> None:
    prefix = "error:"
    if sys.stderr.isatty() and "NO_COLOR" not in os.environ:
        prefix = "\033[31merror:\033[0m"
    print(f"{prefix} {message}", file=sys.stderr)


def main(argv: Optional[Iterable[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        from_config = _apply_config(parser, argv)
    except UsageError as exc:
        _diagnose(str(exc))
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    args.fixed = from_config | _flags_given(argv)
    try:
        rows = COMMANDS[args.command](args)
    except (UsageError, DomainError, ConfigurationError, ShapeError, ReconstructionError) as exc:
        _diagnose(str(exc))
        return EXIT_USAGE
    buf = io.StringIO()
    write_rows(rows, args.format, buf)
    sys.stdout.write(buf.getvalue())
    return 0


if __name__ == "__main__":
    sys.exit(main())
