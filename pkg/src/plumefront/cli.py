"""Command-line front end.

Subcommands: field, boundary, moments, exposure, montecarlo, estimate,
diagnose, ingest.  Output is a tidy delimited table (or structured JSON)
written to --out or stdout; numbers print with 10 significant digits and
distances are kilometres throughout.  Every run echoes its resolved
configuration (and seed, where one applies) on stderr so results can be
reproduced byte for byte.

Exit codes: 0 success, 1 usage error, 2 data or numerical error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import estimation, functionals, ingest, montecarlo
from .errors import PlumefrontError
from .fields import BesselField, DecayingSourceField, FieldParams, GaussianField, KummerField


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return f"{value:.10g}"
    return str(value)


def _write_table(rows, columns, args, delimiter=","):
    if args.format == "json":
        payload = [{c: r.get(c) for c in columns} for r in rows]
        text = json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n"
    else:
        lines = [delimiter.join(columns)]
        for r in rows:
            lines.append(delimiter.join(_fmt(r.get(c)) for c in columns))
        text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _echo_config(args):
    config = {k: v for k, v in sorted(vars(args).items()) if k != "func" and v is not None}
    sys.stderr.write(f"# resolved config: {json.dumps(config, sort_keys=True, default=str)}\n")


def _parse_floats(text) -> list[float]:
    if isinstance(text, (int, float)):
        return [float(text)]
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    try:
        return [float(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError:
        raise _Usage(f"expected a comma-separated list of numbers, got {text!r}") from None


class _Usage(Exception):
    pass


def _make_field(args):
    profile = args.profile
    if profile == "gaussian":
        return GaussianField(FieldParams(nu=args.nu, q=args.q))
    if profile == "bessel":
        return BesselField(FieldParams(nu=args.nu, q=args.q, dim=2, source_pos=(0.0, 0.0)),
                           amplitude=args.amplitude)
    if profile == "decaying":
        if args.lam is None or args.lam <= 0:
            raise _Usage("--lam > 0 is required for the decaying profile")
        return DecayingSourceField(FieldParams(nu=args.nu, q=args.q, lam=args.lam))
    if profile == "kummer":
        coeffs = [(c, n) for n, c in enumerate(_parse_floats(args.coeffs))]
        return KummerField(coeffs, FieldParams(nu=args.nu, q=args.q))
    raise _Usage(f"unknown profile {profile!r}")


def _boundary_spec(args) -> functionals.BoundarySpec:
    given = [args.epsilon is not None, args.fraction is not None, args.tau_min is not None]
    if sum(given) != 1:
        raise _Usage("set exactly one of --epsilon, --fraction, --tau-min")
    if args.epsilon is not None:
        return functionals.BoundarySpec(mode="decay_by_epsilon", epsilon=args.epsilon)
    if args.fraction is not None:
        return functionals.BoundarySpec(mode="decay_to_fraction", fraction=args.fraction)
    return functionals.BoundarySpec(mode="absolute", tau_min=args.tau_min)


# ---------------------------------------------------------------------------
# subcommand runners
# ---------------------------------------------------------------------------


def _run_field(args):
    _require(args, "r", "t")
    fld = _make_field(args)
    rows = []
    for t in _parse_floats(args.t):
        for r in _parse_floats(args.r):
            if hasattr(fld, "eval"):
                ev = fld.eval(r, t)
                rows.append({"r_km": r, "t": t, "value": ev.value,
                             "d_dr": ev.d_dr, "d_dt": ev.d_dt})
            else:
                rows.append({"r_km": r, "t": t, "value": fld.value(r, t),
                             "d_dr": None, "d_dt": None})
    _write_table(rows, ["r_km", "t", "value", "d_dr", "d_dt"], args)
    return 0


def _run_boundary(args):
    _require(args, "t")
    fld = _make_field(args)
    spec = _boundary_spec(args)
    times = _parse_floats(args.t)
    rows = [{"t": t, "boundary_km": functionals.boundary_radius(fld, spec, t)} for t in times]
    if len(rows) == 1 and args.out is None and args.format == "csv":
        sys.stdout.write(_fmt(rows[0]["boundary_km"]) + "\n")
    else:
        _write_table(rows, ["t", "boundary_km"], args)
    return 0


def _run_moments(args):
    _require(args, "t")
    fld = _make_field(args)
    rows = []
    for t in _parse_floats(args.t):
        for k in _parse_floats(args.k):
            res = functionals.spatial_moment(fld, int(k), t)
            rows.append({"k": int(k), "t": t, "value": res.value,
                         "quadrature_error": res.quadrature_error})
    _write_table(rows, ["k", "t", "value", "quadrature_error"], args)
    return 0


def _run_exposure(args):
    _require(args, "r")
    fld = _make_field(args)
    if args.horizon in (None, "inf"):
        horizon = math.inf
    else:
        try:
            horizon = float(args.horizon)
        except ValueError:
            raise _Usage(f"--horizon must be a number or 'inf', got {args.horizon!r}") from None
    rows = [
        {"r_km": r, "t_min": args.t_min, "horizon": args.horizon or "inf",
         "exposure": functionals.cumulative_exposure(fld, r, args.t_min, horizon)}
        for r in _parse_floats(args.r)
    ]
    _write_table(rows, ["r_km", "t_min", "horizon", "exposure"], args)
    return 0


def _run_montecarlo(args):
    if args.dgp == "all":
        specs = list(montecarlo.STANDARD_DGPS.values())
    else:
        if args.dgp not in montecarlo.STANDARD_DGPS:
            raise _Usage(f"unknown DGP {args.dgp!r}; choose from "
                         f"{', '.join(montecarlo.STANDARD_DGPS)} or 'all'")
        specs = [montecarlo.STANDARD_DGPS[args.dgp]]
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    result = montecarlo.run_campaign(
        specs, n_reps=args.reps, n_obs=args.n, methods=methods, base_seed=args.seed,
        fraction=args.fraction, n_boot=args.n_boot, keep_replications=args.per_rep is not None,
    )
    summaries, records = result if args.per_rep is not None else (result, None)
    columns = ["dgp_id", "method", "bias_km", "rmse_km", "coverage",
               "false_positive_rate", "correct_rejection_rate",
               "n_reps", "n_obs", "n_detected", "n_failed"]
    rows = [
        {"dgp_id": s.dgp_id, "method": s.method, "bias_km": s.bias, "rmse_km": s.rmse,
         "coverage": s.coverage, "false_positive_rate": s.false_positive_rate,
         "correct_rejection_rate": s.correct_rejection_rate, "n_reps": s.n_reps,
         "n_obs": s.n_obs, "n_detected": s.n_detected, "n_failed": s.n_failed}
        for s in summaries
    ]
    _write_table(rows, columns, args)
    if records is not None:
        rep_rows = [
            {"dgp_id": r.dgp_id, "method": r.method, "rep": r.rep, "seed": r.seed,
             "estimate_km": r.estimate, "ci_lo_km": r.ci_lo, "ci_hi_km": r.ci_hi,
             "failed": r.failed}
            for r in records
        ]
        rep_args = argparse.Namespace(out=args.per_rep, format=args.format)
        _write_table(rep_rows, ["dgp_id", "method", "rep", "seed", "estimate_km",
                                "ci_lo_km", "ci_hi_km", "failed"], rep_args)
    return 0


def _read_columns(path, names):
    import csv as _csv

    with open(path, newline="", encoding="utf-8") as fh:
        sample = fh.read(4096)
        fh.seek(0)
        delim = "\t" if sample.count("\t") > sample.count(",") else ","
        reader = _csv.DictReader(fh, delimiter=delim)
        if reader.fieldnames is None:
            raise PlumefrontError(f"{path}: empty input file")
        missing = [n for n in names if n not in reader.fieldnames]
        if missing:
            raise PlumefrontError(f"{path}: missing columns: {', '.join(missing)}")
        cols = {n: [] for n in names}
        for row in reader:
            for n in names:
                try:
                    cols[n].append(float(row[n]))
                except (TypeError, ValueError):
                    raise PlumefrontError(
                        f"{path} row {reader.line_num}: column {n!r} is not numeric: {row[n]!r}"
                    ) from None
        return [np.array(cols[n]) for n in names]


def _run_estimate(args):
    _require(args, "input")
    d, y = _read_columns(args.input, [args.distance_col, args.outcome_col])
    rows = []
    if args.method in ("loglinear", "both"):
        fit = estimation.fit_loglinear(d, y, robust_cutoff=args.robust_cutoff)
        rows.append({
            "method": "loglinear", "kappa_per_km": fit.kappa_s, "intercept": fit.intercept,
            "se_classical": fit.se_classical, "se_spatial": fit.se_spatial,
            "r_squared": fit.r_squared, "n": fit.n, "d_star_km": fit.d_star,
            "ci_lo_km": None if fit.d_star_ci is None else fit.d_star_ci[0],
            "ci_hi_km": None if fit.d_star_ci is None else fit.d_star_ci[1],
            "bandwidth_km": None, "boundary_km": None, "reject_null": None,
        })
    if args.method in ("nonparametric", "both"):
        fit = estimation.nonparametric_fit(d, y, bandwidth=args.bandwidth)
        boundary, reject = estimation.detect_boundary(
            fit, fraction=args.fraction, n_boot=args.n_boot, seed=args.seed
        )
        rows.append({
            "method": "nonparametric", "kappa_per_km": None, "intercept": None,
            "se_classical": None, "se_spatial": None, "r_squared": None, "n": d.size,
            "d_star_km": None, "ci_lo_km": None, "ci_hi_km": None,
            "bandwidth_km": fit.bandwidth, "boundary_km": boundary, "reject_null": reject,
        })
        if args.curve_out:
            curve_rows = [{"distance_km": g, "m_hat": m}
                          for g, m in zip(fit.grid, fit.m_hat)]
            curve_args = argparse.Namespace(out=args.curve_out, format=args.format)
            _write_table(curve_rows, ["distance_km", "m_hat"], curve_args)
    _write_table(rows, ["method", "kappa_per_km", "intercept", "se_classical", "se_spatial",
                        "r_squared", "n", "d_star_km", "ci_lo_km", "ci_hi_km",
                        "bandwidth_km", "boundary_km", "reject_null"], args)
    return 0


def _run_diagnose(args):
    _require(args, "input")
    d, y = _read_columns(args.input, [args.distance_col, args.outcome_col])
    report = estimation.diagnostics(d, y, n_bins=args.bins)
    rows = [
        {"bin_lo_km": lo, "bin_hi_km": hi, "mean": mean, "se": se, "count": count,
         "pct_decline_from_first_bin": dec}
        for (lo, hi, mean, se, count), dec in zip(report.binned_means,
                                                  report.pct_decline_from_first_bin)
    ]
    sys.stderr.write(
        f"# spearman_rho={_fmt(report.spearman_rho)} p={_fmt(report.spearman_p)} "
        f"decision={report.decision} bins_used={report.n_bins_used}\n"
    )
    if args.split is not None:
        regional = estimation.regional_heterogeneity(d, y, args.split)
        sys.stderr.write(
            f"# regional split at {_fmt(args.split)} km: "
            f"kappa_near={_fmt(regional.near.kappa_s)} kappa_far={_fmt(regional.far.kappa_s)} "
            f"sign_reversal={str(regional.sign_reversal).lower()}\n"
        )
    _write_table(rows, ["bin_lo_km", "bin_hi_km", "mean", "se", "count",
                        "pct_decline_from_first_bin"], args)
    return 0


def _run_ingest(args):
    _require(args, "sources", "observations")
    sources = ingest.load_sources(args.sources, min_capacity=args.min_capacity)
    observations = ingest.load_observations(args.observations)
    sample = ingest.build_sample(
        observations, sources,
        max_distance_km=args.max_distance,
        min_monthly_obs_per_year=args.min_months,
    )
    rows = [
        {"lat": o.lat, "lon": o.lon, "period": o.period, "outcome": o.outcome,
         "nearest_source_id": o.nearest_source_id, "distance_km": o.distance_km}
        for o in sample
    ]
    # mirror the observation file's delimiter convention on the way out
    with open(args.observations, encoding="utf-8") as fh:
        head = fh.read(4096)
    delim = "\t" if head.count("\t") > head.count(",") else ","
    _write_table(rows, ["lat", "lon", "period", "outcome", "nearest_source_id",
                        "distance_km"], args, delimiter=delim)
    sys.stderr.write(f"# ingested {len(rows)} observations "
                     f"({len(observations)} read, {len(sources)} sources kept)\n")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_field_options(p, need_r=True, need_t=True):
    p.add_argument("--profile", default="gaussian",
                   choices=["gaussian", "bessel", "decaying", "kummer"])
    p.add_argument("--nu", type=float, default=1.0, help="diffusion coefficient (km^2/time)")
    p.add_argument("--q", type=float, default=1.0, help="source strength")
    p.add_argument("--amplitude", type=float, default=1.0, help="Bessel profile amplitude")
    p.add_argument("--lam", type=float, default=None, help="source decay rate (1/time)")
    p.add_argument("--coeffs", default="1", help="Kummer coefficients C0,C1,...")
    # Presence is validated at run time so the values may come from --config.
    if need_r:
        p.add_argument("--r", default=None, help="radii in km, comma separated (required)")
    if need_t:
        p.add_argument("--t", default=None, help="times, comma separated (required)")


def _require(args, *names):
    for name in names:
        if getattr(args, name, None) in (None, ""):
            raise _Usage(f"--{name.replace('_', '-')} is required (flag or config)")


def _add_output_options(p):
    p.add_argument("--out", default=None, help="output path (default: stdout)")
    p.add_argument("--format", default="csv", choices=["csv", "json"])
    p.add_argument("--config", default=None, help="JSON config file; flags override its values")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plumefront",
        description="Point-source diffusion fields, spatial boundaries, and their estimation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("field", help="evaluate a field and its derivatives on an (r, t) grid")
    _add_field_options(p)
    _add_output_options(p)
    p.set_defaults(func=_run_field)

    p = sub.add_parser("boundary", help="threshold boundary radius at given times")
    _add_field_options(p, need_r=False)
    p.add_argument("--epsilon", type=float, default=None,
                   help="relative decay threshold (1-eps) of the source value")
    p.add_argument("--fraction", type=float, default=None,
                   help="decay-to-fraction threshold of the source value")
    p.add_argument("--tau-min", dest="tau_min", type=float, default=None,
                   help="absolute intensity threshold")
    _add_output_options(p)
    p.set_defaults(func=_run_boundary)

    p = sub.add_parser("moments", help="radial spatial moments M_k(t)")
    _add_field_options(p, need_r=False)
    p.add_argument("--k", default="0,2,4", help="moment orders, comma separated")
    _add_output_options(p)
    p.set_defaults(func=_run_moments)

    p = sub.add_parser("exposure", help="cumulative exposure at fixed radii")
    _add_field_options(p, need_t=False)
    p.add_argument("--t-min", dest="t_min", type=float, default=0.0)
    p.add_argument("--horizon", default="inf", help="upper time limit or 'inf'")
    _add_output_options(p)
    p.set_defaults(func=_run_exposure)

    p = sub.add_parser("montecarlo", help="boundary-detection simulation campaign")
    p.add_argument("--dgp", default="all",
                   help="strong_decay, weak_decay, hump, flat, or all")
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--methods", default="parametric,nonparametric")
    p.add_argument("--fraction", type=float, default=0.1)
    p.add_argument("--n-boot", dest="n_boot", type=int, default=200)
    p.add_argument("--per-rep", dest="per_rep", default=None,
                   help="also write one row per replication to this path")
    _add_output_options(p)
    p.set_defaults(func=_run_montecarlo)

    p = sub.add_parser("estimate", help="decay estimation on a distance/outcome table")
    p.add_argument("--input", default=None, help="input table (required)")
    p.add_argument("--distance-col", dest="distance_col", default="distance_km")
    p.add_argument("--outcome-col", dest="outcome_col", default="outcome")
    p.add_argument("--method", default="loglinear",
                   choices=["loglinear", "nonparametric", "both"])
    p.add_argument("--robust-cutoff", dest="robust_cutoff", type=float, default=None,
                   help="spatial HAC cutoff in km (e.g. 50)")
    p.add_argument("--bandwidth", default="auto",
                   help="kernel bandwidth in km, 'auto', or 'auto-cv'")
    p.add_argument("--fraction", type=float, default=0.1)
    p.add_argument("--n-boot", dest="n_boot", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--curve-out", dest="curve_out", default=None,
                   help="write the fitted nonparametric curve to this path")
    _add_output_options(p)
    p.set_defaults(func=_run_estimate)

    p = sub.add_parser("diagnose", help="spatial-decay diagnostics for a data table")
    p.add_argument("--input", default=None, help="input table (required)")
    p.add_argument("--distance-col", dest="distance_col", default="distance_km")
    p.add_argument("--outcome-col", dest="outcome_col", default="outcome")
    p.add_argument("--bins", type=int, default=8)
    p.add_argument("--split", type=float, default=None,
                   help="regional heterogeneity split distance in km")
    _add_output_options(p)
    p.set_defaults(func=_run_diagnose)

    p = sub.add_parser("ingest", help="match grid observations to nearest sources")
    p.add_argument("--sources", default=None, help="sources table (required)")
    p.add_argument("--observations", default=None, help="observations table (required)")
    p.add_argument("--min-capacity", dest="min_capacity", type=float, default=100.0)
    p.add_argument("--max-distance", dest="max_distance", type=float, default=200.0)
    p.add_argument("--min-months", dest="min_months", type=int, default=10)
    _add_output_options(p)
    p.set_defaults(func=_run_ingest)

    return parser


def _merge_config(parser, args, argv, config):
    """Fill parsed args from a config mapping; explicit flags keep priority.

    A key is skipped when its long option appears verbatim in argv.  Values
    are coerced through the option's declared type when given as strings.
    """
    sub_action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    subparser = sub_action.choices[args.command]
    types = {a.dest: a.type for a in subparser._actions}
    for key, value in config.items():
        attr = key.replace("-", "_")
        if attr not in vars(args):
            raise _Usage(f"config key {key!r} is not a recognised option")
        flag = "--" + attr.replace("_", "-")
        if any(tok == flag or tok.startswith(flag + "=") for tok in argv):
            continue
        coerce = types.get(attr)
        if coerce is not None and isinstance(value, str):
            value = coerce(value)
        setattr(args, attr, value)


def _load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            config = json.load(fh)
    except OSError as exc:
        raise PlumefrontError(f"cannot read config file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise PlumefrontError(f"config file is not valid JSON: {exc}") from None
    if not isinstance(config, dict):
        raise PlumefrontError("config file must contain a JSON object")
    return config


def dispatch(argv) -> int:
    """Parse tokens, run the named pipeline, return the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage problems and 0 on --help
        return 0 if exc.code == 0 else 1
    try:
        if getattr(args, "config", None) is not None:
            _merge_config(parser, args, argv, _load_config(args.config))
        _echo_config(args)
        return args.func(args)
    except _Usage as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return 1
    except (PlumefrontError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
