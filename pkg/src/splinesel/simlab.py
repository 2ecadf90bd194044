"""End-to-end simulation lab: data generation, per-replicate selection,
and plot-ready summary tables.

A run is described by a single JSON-serializable config.  For each sample
size the design is built and decomposed once (disk-cached), then every
replicate draws y = f + sigma * eps with eps keyed by (seed, n, replicate),
feeds the identical dataset to every requested criterion, and streams one
record per (n, replicate, criterion) into runs.csv.  Replicates fan out
across a process pool sized by the SPLINESEL_WORKERS environment variable;
records are reduced in deterministic order, so output is byte-identical for
any worker count.
"""

from dataclasses import dataclass, asdict
import csv
import json
import logging
import math
import os
import re
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import geometry, oracle
from ._rng import replicate_normals
from .criteria import (
    Criterion,
    criterion_by_name,
    default_sigma_m,
    select,
    selection_window,
)
from .errors import ConfigError, NumericError
from .spectrum import DesignGrid, DesignSpectrum, build_design, cached_decompose

log = logging.getLogger("splinesel")

WORKERS_ENV_VAR = "SPLINESEL_WORKERS"

RUNS_COLUMNS = [
    "n", "replicate", "criterion", "lambda_hat", "df_hat",
    "sqerr", "sqerr_response", "at_boundary",
]


@dataclass(frozen=True)
class SimConfig:
    """One simulation campaign; mirrors the JSON config document."""

    design: dict
    n_list: list[int]
    replicates: int
    seed: int
    criteria: list[str]
    truth: str
    sigma: float
    sigma_mode: str = "known"
    output_dir: str = "out"

    def validate(self) -> "SimConfig":
        if not self.n_list:
            raise ConfigError("n_list must be nonempty")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if self.sigma <= 0:
            raise ConfigError("sigma must be positive")
        if not self.criteria:
            raise ConfigError("criteria must be nonempty")
        if not isinstance(self.design, dict) or "kind" not in self.design:
            raise ConfigError("design must be an object with a 'kind' field")
        _parse_sigma_mode(self.sigma_mode, 100)  # shape check only
        for name in self.criteria:
            try:
                criterion_by_name(name)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        return self

    @classmethod
    def from_json(cls, text: str) -> "SimConfig":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(payload, dict):
            raise ConfigError("config must be a JSON object")
        known = {f for f in cls.__dataclass_fields__}
        extra = set(payload) - known
        if extra:
            raise ConfigError(f"unknown config fields: {sorted(extra)}")
        missing = {"design", "n_list", "replicates", "seed", "criteria",
                   "truth", "sigma"} - set(payload)
        if missing:
            raise ConfigError(f"missing config fields: {sorted(missing)}")
        return cls(**payload).validate()

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def _parse_sigma_mode(mode: str, n: int) -> tuple[bool, int]:
    """-> (estimated?, M).  Accepts 'known', 'estimated', 'estimated:M'."""
    if mode == "known":
        return False, 0
    if mode == "estimated":
        return True, default_sigma_m(n)
    if mode.startswith("estimated:"):
        try:
            return True, int(mode.split(":", 1)[1])
        except ValueError as exc:
            raise ConfigError(f"bad sigma_mode {mode!r}") from exc
    raise ConfigError(f"bad sigma_mode {mode!r} (known | estimated | estimated:M)")


_EXPR_NAMES = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp,
    "log": np.log, "sqrt": np.sqrt, "abs": np.abs, "pi": np.pi, "e": np.e,
}


def truth_curve(curve_id: str, grid: DesignGrid) -> np.ndarray:
    """Evaluate a named true curve on the design points.

    Built-ins: "paper-fig3" = sin(pi(x+1))/(x/2+1), "zero", and
    "linear(a,b)" = a + b x.  Anything else is treated as an expression in x
    (numpy functions sin/cos/tan/exp/log/sqrt/abs and constants pi/e).
    """
    x = grid.x
    if curve_id == "paper-fig3":
        return np.sin(np.pi * (x + 1.0)) / (x / 2.0 + 1.0)
    if curve_id == "zero":
        return np.zeros_like(x)
    m = re.fullmatch(r"linear\(\s*([^,]+)\s*,\s*([^)]+)\s*\)", curve_id)
    if m:
        try:
            a, b = float(m.group(1)), float(m.group(2))
        except ValueError as exc:
            raise ConfigError(f"bad linear(...) parameters in {curve_id!r}") from exc
        return a + b * x
    try:
        value = eval(curve_id, {"__builtins__": {}}, {**_EXPR_NAMES, "x": x})
    except Exception as exc:
        raise ConfigError(f"cannot interpret truth curve {curve_id!r}: {exc}") from exc
    value = np.asarray(value, dtype=float)
    if value.shape != x.shape or not np.all(np.isfinite(value)):
        raise ConfigError(f"truth curve {curve_id!r} did not produce a finite vector")
    return value


@dataclass(frozen=True)
class RunRecord:
    """One selection outcome; sqerr is the spectral-scale squared error
    ||g_hat - g||^2 and sqerr_response = sigma^2 * sqerr its response-scale
    twin."""

    n: int
    replicate: int
    criterion: str
    lambda_hat: float
    df_hat: float
    sqerr: float
    sqerr_response: float
    at_boundary: str


def _grid_for(cfg_design: dict, n: int) -> DesignGrid:
    params = {k: v for k, v in cfg_design.items() if k != "kind"}
    return build_design(cfg_design["kind"], n, **params)


def spectra_cache_dir(cfg: SimConfig) -> Path:
    return Path(cfg.output_dir) / "spectra"


def _replicate_records(spec: DesignSpectrum, g: np.ndarray, f: np.ndarray,
                       criteria: list[Criterion], cfg: SimConfig, window,
                       rep_range) -> list[RunRecord]:
    estimated, M = _parse_sigma_mode(cfg.sigma_mode, spec.n)
    sigma = cfg.sigma
    out: list[RunRecord] = []
    for r in rep_range:
        eps = replicate_normals(cfg.seed, spec.n, r, spec.n)
        y = f + sigma * eps
        coeffs = spec.U.T @ y
        if estimated:
            tail = coeffs[spec.n - 2 - M:]
            s2 = float(np.sum(tail * tail) / (M - 2.0))
            sigma_use = math.sqrt(s2) if s2 > 0 else math.nan
        else:
            sigma_use = sigma
        for c in criteria:
            try:
                if not math.isfinite(sigma_use):
                    raise NumericError("noise-scale estimate collapsed to zero")
                picked = select(c, spec, coeffs / sigma_use, window)
                ahat = 1.0 / (1.0 + picked.lam_hat * spec.k)
                sqerr = float(np.sum((ahat * coeffs / sigma - g) ** 2))
                out.append(RunRecord(
                    n=spec.n, replicate=r, criterion=c.name,
                    lambda_hat=picked.lam_hat, df_hat=picked.df_hat,
                    sqerr=sqerr, sqerr_response=sigma * sigma * sqerr,
                    at_boundary=picked.at_boundary,
                ))
            except NumericError as exc:
                log.warning("replicate %d criterion %s failed: %s", r, c.name, exc)
                out.append(RunRecord(
                    n=spec.n, replicate=r, criterion=c.name,
                    lambda_hat=math.nan, df_hat=math.nan,
                    sqerr=math.nan, sqerr_response=math.nan,
                    at_boundary="error",
                ))
    return out


def _chunk_worker(args) -> list[RunRecord]:
    spec, g, f, names, cfg, rep_range = args
    window = selection_window(spec)
    criteria = [criterion_by_name(name) for name in names]
    return _replicate_records(spec, g, f, criteria, cfg, window, rep_range)


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV_VAR, "1")
    try:
        count = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{WORKERS_ENV_VAR}={raw!r} is not an integer") from exc
    return max(count, 1)


def run_simulation(cfg: SimConfig):
    """Yield RunRecords for the whole campaign in deterministic order.

    Ordering is (n in cfg order, replicate, criterion in cfg order)
    regardless of worker count.  A spectrum failure aborts that n with a
    logged error; single-replicate numeric failures yield an error-flagged
    record rather than disappearing.
    """
    cfg.validate()
    cache = spectra_cache_dir(cfg)
    workers = worker_count()
    criteria = [criterion_by_name(name) for name in cfg.criteria]
    for n in cfg.n_list:
        try:
            grid = _grid_for(cfg.design, n)
            spec = cached_decompose(grid, cache)
            f = truth_curve(cfg.truth, grid)
        except (ValueError, NumericError) as exc:
            log.error("n=%d aborted: %s", n, exc)
            continue
        g = (spec.U.T @ f) / cfg.sigma
        if workers == 1 or cfg.replicates < 2 * workers:
            window = selection_window(spec)
            yield from _replicate_records(
                spec, g, f, criteria, cfg, window, range(cfg.replicates))
        else:
            bounds = np.linspace(0, cfg.replicates, workers + 1).astype(int)
            jobs = [
                (spec, g, f, cfg.criteria, cfg, range(int(lo), int(hi)))
                for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo
            ]
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for batch in pool.map(_chunk_worker, jobs):
                    yield from batch


def _format(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def write_runs_csv(records, path) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RUNS_COLUMNS)
        for rec in records:
            writer.writerow([_format(getattr(rec, col)) for col in RUNS_COLUMNS])
            count += 1
    return count


def read_runs_csv(path) -> list[RunRecord]:
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RUNS_COLUMNS:
            raise ConfigError(f"{path} does not look like a runs.csv (header mismatch)")
        for row in reader:
            records.append(RunRecord(
                n=int(row["n"]), replicate=int(row["replicate"]),
                criterion=row["criterion"],
                lambda_hat=float(row["lambda_hat"]), df_hat=float(row["df_hat"]),
                sqerr=float(row["sqerr"]),
                sqerr_response=float(row["sqerr_response"]),
                at_boundary=row["at_boundary"],
            ))
    return records


# --- summary tables ---------------------------------------------------------


def emit_tables(records, cfg: SimConfig, out_dir=None) -> dict[str, Path]:
    """Write the four summary CSVs from a finished run.

    table1.csv:    squared curvature of each criterion at the ideal
                   smoothing parameter, one row per n (deterministic).
    table2.csv:    mean and sample sd of the spectral squared error per
                   (criterion, n) cell.
    fig4_hist.csv: df_hat histogram counts, unit-width bins anchored at
                   integers.
    df0_bars.csv:  ideal smoothing parameter and df per n.

    Cells with no usable records are emitted empty with a logged warning.
    """
    out = Path(out_dir) if out_dir is not None else Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = list(records)
    cache = spectra_cache_dir(cfg)

    ideal_points = {}
    specs = {}
    for n in cfg.n_list:
        grid = _grid_for(cfg.design, n)
        spec = cached_decompose(grid, cache)
        truth = oracle.make_truth(spec, truth_curve(cfg.truth, grid), cfg.sigma)
        specs[n] = spec
        ideal_points[n] = oracle.ideal_lambda(spec, truth)

    paths = {}

    path1 = out / "table1.csv"
    with open(path1, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n"] + list(cfg.criteria))
        for n in cfg.n_list:
            lam0 = ideal_points[n].lam
            row = [n] + [
                _format(geometry.curvature_sq(criterion_by_name(name), specs[n], lam0))
                for name in cfg.criteria
            ]
            writer.writerow(row)
    paths["table1"] = path1

    path2 = out / "table2.csv"
    with open(path2, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["criterion", "n", "mean_sqerr", "sd_sqerr", "count"])
        for name in cfg.criteria:
            for n in cfg.n_list:
                vals = np.array([
                    r.sqerr for r in records
                    if r.criterion == name and r.n == n and math.isfinite(r.sqerr)
                ])
                if len(vals) == 0:
                    log.warning("table2: no usable records for criterion=%s n=%d", name, n)
                    writer.writerow([name, n, "", "", 0])
                    continue
                sd = vals.std(ddof=1) if len(vals) > 1 else 0.0
                writer.writerow([name, n, _format(float(vals.mean())),
                                 _format(float(sd)), len(vals)])
    paths["table2"] = path2

    path3 = out / "fig4_hist.csv"
    with open(path3, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["criterion", "n", "bin_lo", "bin_hi", "count"])
        for name in cfg.criteria:
            for n in cfg.n_list:
                vals = [r.df_hat for r in records
                        if r.criterion == name and r.n == n and math.isfinite(r.df_hat)]
                if not vals:
                    log.warning("fig4_hist: no usable records for criterion=%s n=%d", name, n)
                    writer.writerow([name, n, "", "", 0])
                    continue
                lo = math.floor(min(vals))
                hi = math.ceil(max(vals))
                hi = max(hi, lo + 1)
                counts, edges = np.histogram(vals, bins=np.arange(lo, hi + 1))
                for cnt, edge in zip(counts, edges[:-1]):
                    writer.writerow([name, n, int(edge), int(edge) + 1, int(cnt)])
    paths["fig4_hist"] = path3

    path4 = out / "df0_bars.csv"
    with open(path4, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "lambda0", "df0"])
        for n in cfg.n_list:
            pt = ideal_points[n]
            writer.writerow([n, _format(pt.lam), _format(pt.df)])
    paths["df0_bars"] = path4

    return paths
