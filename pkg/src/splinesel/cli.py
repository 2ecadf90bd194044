"""Command-line front end.

Subcommands: spectrum, select, simulate, tables, curvature, reversal,
decompose, rates.  Exit status 0 on success, 1 on a runtime failure (a
machine-readable JSON error goes to stderr), 2 on a usage error (unknown
flags, malformed config).
"""

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import geometry, oracle, simlab
from .criteria import criterion_by_name, default_sigma_m, select, sigma_estimate
from .errors import ConfigError, NumericError
from .simlab import SimConfig
from .spectrum import build_design, cached_decompose, decompose

USAGE_EXIT = 2
FAILURE_EXIT = 1

DEFAULT_DESIGN = '{"kind": "equispaced", "lo": -1.0, "hi": 1.0}'


def _parse_design(text: str) -> dict:
    try:
        design = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"--design is not valid JSON: {exc}") from exc
    if not isinstance(design, dict) or "kind" not in design:
        raise ConfigError("--design must be a JSON object with a 'kind' field")
    return design


def _parse_int_list(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad integer list {text!r}") from exc


def _spectrum_for(design: dict, n: int, cache_dir):
    grid = simlab._grid_for(design, n)
    if cache_dir:
        return grid, cached_decompose(grid, cache_dir)
    return grid, decompose(grid)


def _add_common_model_flags(sub, default_out: str):
    sub.add_argument("--criteria", default="cp,gml,ee",
                     help="comma-separated criterion ids (default cp,gml,ee)")
    sub.add_argument("--truth", default="paper-fig3",
                     help="truth curve id or expression in x")
    sub.add_argument("--sigma", type=float, default=1.0, help="noise sd (default 1.0)")
    sub.add_argument("--design", default=DEFAULT_DESIGN,
                     help="design JSON (default equispaced on [-1, 1])")
    sub.add_argument("--cache-dir", default="spectra", help="spectrum cache directory")
    sub.add_argument("--out", default=default_out, help=f"output path (default {default_out})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splinesel",
        description="Smoothing-spline selection criteria, oracle diagnostics, "
                    "and the simulation lab.")
    subs = parser.add_subparsers(dest="command", required=True)

    s = subs.add_parser("spectrum", help="build and cache a design spectrum")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--design", default=DEFAULT_DESIGN)
    s.add_argument("--cache-dir", default="spectra")

    s = subs.add_parser("select", help="pick a smoothing parameter for one dataset")
    s.add_argument("--input", required=True, help="CSV with columns x,y")
    s.add_argument("--criterion", required=True)
    s.add_argument("--sigma", default="known:1.0",
                   help="known:VALUE | estimated | estimated:M (default known:1.0)")

    s = subs.add_parser("simulate", help="run a simulation campaign")
    s.add_argument("--config", default="sim.json")

    s = subs.add_parser("tables", help="summarize a finished run into CSV tables")
    s.add_argument("--config", default="sim.json")
    s.add_argument("--runs", default=None,
                   help="runs.csv path (default <output_dir>/runs.csv)")
    s.add_argument("--out-dir", default=None, help="default <output_dir>")

    s = subs.add_parser("curvature", help="squared curvature at the ideal lambda")
    s.add_argument("--n", required=True, help="comma-separated sample sizes")
    _add_common_model_flags(s, "table1.csv")

    s = subs.add_parser("reversal", help="reversal-region diagnostics")
    s.add_argument("--n", required=True, help="comma-separated sample sizes")
    s.add_argument("--replicates", type=int, default=10000)
    s.add_argument("--seed", type=int, default=0)
    _add_common_model_flags(s, "reversal.csv")

    s = subs.add_parser("decompose", help="Monte Carlo extra-risk decomposition")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--criterion", required=True)
    s.add_argument("--replicates", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--truth", default="paper-fig3")
    s.add_argument("--sigma", type=float, default=1.0)
    s.add_argument("--design", default=DEFAULT_DESIGN)
    s.add_argument("--cache-dir", default="spectra")
    s.add_argument("--out", default="decomposition.json")

    s = subs.add_parser("rates", help="slopes of lambda_c and df_c against n")
    s.add_argument("--n", required=True,
                   help="comma-separated increasing sample sizes (>= 4)")
    _add_common_model_flags(s, "rates.csv")

    return parser


def _cmd_spectrum(args) -> str:
    design = _parse_design(args.design)
    grid, spec = _spectrum_for(design, args.n, args.cache_dir)
    return (f"spectrum n={spec.n} null_dim={spec.null_dim} "
            f"k_max={spec.k.max():.6g} cached in {args.cache_dir}")


def _cmd_select(args) -> str:
    rows = []
    with open(args.input, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"x", "y"} <= set(reader.fieldnames):
            raise ConfigError(f"{args.input} must have columns x,y")
        for row in reader:
            rows.append((float(row["x"]), float(row["y"])))
    if len(rows) < 5:
        raise ConfigError("need at least 5 data rows")
    rows.sort()
    x = np.array([r[0] for r in rows])
    y = np.array([r[1] for r in rows])
    grid = build_design("explicit", points=x)
    spec = decompose(grid)
    mode = args.sigma
    if mode.startswith("known:"):
        sigma = float(mode.split(":", 1)[1])
        if sigma <= 0:
            raise ConfigError("known sigma must be positive")
    elif mode == "estimated" or mode.startswith("estimated:"):
        M = (int(mode.split(":", 1)[1]) if ":" in mode
             else default_sigma_m(spec.n))
        sigma = float(np.sqrt(sigma_estimate(spec, y, M)))
    else:
        raise ConfigError(f"bad --sigma {mode!r}")
    c = criterion_by_name(args.criterion)
    picked = select(c, spec, (spec.U.T @ y) / sigma)
    return (f"select criterion={c.name} n={spec.n} lambda_hat={picked.lam_hat:.8g} "
            f"df_hat={picked.df_hat:.4f} sigma={sigma:.6g} "
            f"at_boundary={picked.at_boundary}")


def _cmd_simulate(args) -> str:
    cfg = SimConfig.from_json(Path(args.config).read_text())
    out = Path(cfg.output_dir)
    runs_path = out / "runs.csv"
    count = simlab.write_runs_csv(simlab.run_simulation(cfg), runs_path)
    return (f"simulate wrote {count} records to {runs_path} "
            f"(workers={simlab.worker_count()})")


def _cmd_tables(args) -> str:
    cfg = SimConfig.from_json(Path(args.config).read_text())
    runs = Path(args.runs) if args.runs else Path(cfg.output_dir) / "runs.csv"
    records = simlab.read_runs_csv(runs)
    paths = simlab.emit_tables(records, cfg, args.out_dir)
    names = ", ".join(str(p) for p in paths.values())
    return f"tables wrote {names} from {len(records)} records"


def _model_inputs(args):
    design = _parse_design(args.design)
    ns = _parse_int_list(args.n)
    names = [tok.strip() for tok in args.criteria.split(",") if tok.strip()]
    criteria = [criterion_by_name(name) for name in names]
    return design, ns, names, criteria


def _cmd_curvature(args) -> str:
    design, ns, names, criteria = _model_inputs(args)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n"] + names)
        for n in ns:
            grid, spec = _spectrum_for(design, n, args.cache_dir)
            truth = oracle.make_truth(spec, simlab.truth_curve(args.truth, grid), args.sigma)
            lam0 = oracle.ideal_lambda(spec, truth).lam
            writer.writerow(
                [n] + [f"{geometry.curvature_sq(c, spec, lam0):.17g}" for c in criteria])
    return f"curvature wrote {out} for n={ns} criteria={names}"


def _cmd_reversal(args) -> str:
    design, ns, names, criteria = _model_inputs(args)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["criterion", "n", "lambda0", "beta", "mean", "variance",
                         "t_stat", "prob_normal", "prob_mc", "mc_se"])
        for c in criteria:
            for n in ns:
                grid, spec = _spectrum_for(design, n, args.cache_dir)
                truth = oracle.make_truth(
                    spec, simlab.truth_curve(args.truth, grid), args.sigma)
                lam0 = oracle.ideal_lambda(spec, truth).lam
                rs = geometry.reversal_summary(
                    c, spec, truth, lam0, args.replicates, args.seed)
                writer.writerow([c.name, n] + [
                    f"{v:.17g}" for v in (rs.lam0, rs.beta, rs.M, rs.V, rs.T_n,
                                          rs.prob_normal, rs.prob_mc, rs.mc_se)])
    return f"reversal wrote {out} ({args.replicates} draws per cell)"


def _cmd_decompose(args) -> str:
    design = _parse_design(args.design)
    grid, spec = _spectrum_for(design, args.n, args.cache_dir)
    truth = oracle.make_truth(spec, simlab.truth_curve(args.truth, grid), args.sigma)
    c = criterion_by_name(args.criterion)
    report = oracle.decomposition_mc(c, spec, truth, args.replicates, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report.to_json())
    return (f"decompose wrote {out} (criterion={c.name} n={args.n} "
            f"bias={report.bias_term:.6g} var={report.variability_term:.6g})")


def _cmd_rates(args) -> str:
    design, ns, names, criteria = _model_inputs(args)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    excluded_notes = []
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["criterion", "n", "lambda_c", "df_c",
                         "slope_lambda", "slope_df"])
        for c in criteria:
            probe = oracle.rate_probe(
                c, design, ns,
                lambda grid: simlab.truth_curve(args.truth, grid),
                sigma=args.sigma, cache_dir=args.cache_dir)
            for n, lam_c, df_c in probe.rows:
                writer.writerow([c.name, n, f"{lam_c:.17g}", f"{df_c:.17g}",
                                 f"{probe.slope_lambda:.17g}", f"{probe.slope_df:.17g}"])
            if probe.excluded:
                excluded_notes.append(f"{c.name}: boundary at n={probe.excluded}")
    note = ("; ".join(excluded_notes)) if excluded_notes else "no boundary exclusions"
    return f"rates wrote {out} ({note})"


_COMMANDS = {
    "spectrum": _cmd_spectrum,
    "select": _cmd_select,
    "simulate": _cmd_simulate,
    "tables": _cmd_tables,
    "curvature": _cmd_curvature,
    "reversal": _cmd_reversal,
    "decompose": _cmd_decompose,
    "rates": _cmd_rates,
}


def cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help; pass both through.
        return int(exc.code or 0)
    try:
        print(_COMMANDS[args.command](args))
        return 0
    except ConfigError as exc:
        print(json.dumps({"error": "config", "message": str(exc)}), file=sys.stderr)
        return USAGE_EXIT
    except (NumericError, ValueError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return FAILURE_EXIT


def main() -> None:
    sys.exit(cli())
