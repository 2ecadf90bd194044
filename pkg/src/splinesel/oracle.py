"""Truth-known quantities: risk curves, ideal and central smoothing parameters,
and the bias/covariance/variability decomposition of the extra prediction risk.

With the true curve in hand (simulation settings), the risk
R(lam) = sum_i (b_i^2 g_i^2 + a_i^2) is available in closed form.  Its
minimizer lam0 is the ideal smoothing parameter; the minimizer lam_c of the
expected criterion is where a given criterion is centered.  The gap between
selecting at lam_hat and sitting at lam0 decomposes into a deterministic bias
piece plus stochastic covariance and variability pieces, estimated here by
Monte Carlo and approximated analytically.
"""

from dataclasses import dataclass, asdict
import json
import math

import numpy as np

from . import specfun
from ._rng import replicate_normals
from .criteria import (
    Criterion,
    SelectionWindow,
    loss,
    loss_derivs,
    minimize_on_window,
    select,
    selection_window,
)
from .errors import NumericError
from .spectrum import DesignSpectrum, df, rotate, weights


@dataclass(frozen=True)
class TruthSpectrum:
    """True curve and its spectral image g = U'f / sigma."""

    f: np.ndarray
    sigma: float
    g: np.ndarray


def make_truth(spec: DesignSpectrum, f, sigma: float) -> TruthSpectrum:
    f = np.asarray(f, dtype=float)
    if f.shape != (spec.n,):
        raise ValueError(f"f must have length {spec.n}, got shape {f.shape}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    return TruthSpectrum(f=f, sigma=float(sigma), g=rotate(spec, f, sigma))


@dataclass(frozen=True)
class LambdaPoint:
    """A located smoothing parameter with its degrees of freedom."""

    lam: float
    df: float
    at_boundary: str


def risk(spec: DesignSpectrum, truth: TruthSpectrum, lam: float) -> float:
    """Expected squared error in spectral scale: sum_i (b_i^2 g_i^2 + a_i^2).

    The sum runs over all n components; equals n at lam = 0 and tends to the
    null-space dimension plus the unsmoothable signal as lam -> infinity.
    """
    w = weights(spec, lam)
    return float(np.sum(w.b**2 * truth.g**2 + w.a**2))


def _risk_slope(spec: DesignSpectrum, truth: TruthSpectrum, lam: float) -> float:
    # dR/dlam = (2/lam) sum a b (b g^2 - a); null components contribute 0.
    w = weights(spec, lam)
    return 2.0 / lam * float(np.sum(w.a * w.b * (w.b * truth.g**2 - w.a)))


def ideal_lambda(spec: DesignSpectrum, truth: TruthSpectrum,
                 window: SelectionWindow | None = None) -> LambdaPoint:
    """Risk-minimizing smoothing parameter over the selection window.

    Uses the same two-stage optimizer as data-driven selection, plus a
    slope-bisection polish (the risk derivative is available in closed
    form).  A boundary winner is flagged, never clipped.
    """
    if window is None:
        window = selection_window(spec)
    lam, _, flag = minimize_on_window(
        window,
        lambda l: risk(spec, truth, l),
        derivative=lambda l: _risk_slope(spec, truth, l),
    )
    return LambdaPoint(lam=lam, df=df(spec, lam), at_boundary=flag)


def expected_power_vector(truth: TruthSpectrum, q: float) -> np.ndarray:
    """E|z_i|^(2/q) componentwise for z ~ Normal(g, I)."""
    return np.array([specfun.abs_moment(gi, 1.0 / q) for gi in truth.g])


def central_lambda(c: Criterion, spec: DesignSpectrum, truth: TruthSpectrum,
                   window: SelectionWindow | None = None) -> LambdaPoint:
    """Minimizer of the expected criterion: where selection is centered.

    The criterion is linear in u, so the expected criterion is the criterion
    evaluated at u = E|z|^(2/q).  Minimized with the selection optimizer and
    polished on the analytic slope; for the (2, 1) member this lands exactly
    on the ideal smoothing parameter.
    """
    if window is None:
        window = selection_window(spec)
    eu = expected_power_vector(truth, c.q)
    lam, _, flag = minimize_on_window(
        window,
        lambda l: loss(c, weights(spec, l), eu),
        derivative=lambda l: loss_derivs(c, spec, l, eu)[0],
    )
    return LambdaPoint(lam=lam, df=df(spec, lam), at_boundary=flag)


def stationarity_residual(c: Criterion, spec: DesignSpectrum, truth: TruthSpectrum,
                          lam: float) -> float:
    """Normal-equation residual of the expected criterion at lam.

    sum a b^(p/q) (c_q E|z|^(2/q) - 1) - [ sum a b^((p-1)/q) - sum a b^(p/q) ]
    over penalized components; zero at the central smoothing parameter.
    """
    w = weights(spec, lam)
    nd = spec.null_dim
    a = w.a[nd:]
    b = w.b[nd:]
    eu = expected_power_vector(truth, c.q)[nd:]
    lhs = float(np.sum(a * b ** (c.p / c.q) * (c.c_q * eu - 1.0)))
    rhs = float(np.sum(a * b ** ((c.p - 1.0) / c.q)) - np.sum(a * b ** (c.p / c.q)))
    return lhs - rhs


@dataclass(frozen=True)
class DecompositionReport:
    """Monte Carlo decomposition of the extra prediction risk.

    extra_risk = E||g_hat(lam_hat) - g||^2 - R(lam0) splits into the
    deterministic bias_term = R(lam_c) - R(lam0), twice the covariance_term,
    and the variability_term; mc_standard_errors covers the three Monte
    Carlo estimates (covariance, variability, extra risk).
    """

    lambda0: float
    df0: float
    lambda_c: float
    df_c: float
    bias_term: float
    covariance_term: float
    variability_term: float
    extra_risk: float
    mc_replicates: int
    mc_standard_errors: tuple[float, float, float]

    def to_json(self) -> str:
        payload = asdict(self)
        payload["mc_standard_errors"] = list(self.mc_standard_errors)
        return json.dumps(payload, indent=2)


def decomposition_mc(c: Criterion, spec: DesignSpectrum, truth: TruthSpectrum,
                     replicates: int, seed: int,
                     window: SelectionWindow | None = None) -> DecompositionReport:
    """Estimate the risk decomposition by Monte Carlo.

    Per replicate r, z = g + eps with eps keyed by (seed, n, r) -- the same
    draws for every criterion, so cross-criterion comparisons use common
    random numbers.  The bias term is computed exactly from the risk curve;
    covariance, variability, and the total extra risk are averaged over
    replicates with standard errors.
    """
    if replicates < 100:
        raise ValueError(f"decomposition_mc needs >= 100 replicates, got {replicates}")
    if window is None:
        window = selection_window(spec)
    ideal = ideal_lambda(spec, truth, window)
    central = central_lambda(c, spec, truth, window)
    risk0 = risk(spec, truth, ideal.lam)
    bias = risk(spec, truth, central.lam) - risk0

    a_c = weights(spec, central.lam).a
    cov_s = np.empty(replicates)
    var_s = np.empty(replicates)
    extra_s = np.empty(replicates)
    for r in range(replicates):
        z = truth.g + replicate_normals(seed, spec.n, r, spec.n)
        picked = select(c, spec, z, window)
        ghat = weights(spec, picked.lam_hat).a * z
        gcen = a_c * z
        cov_s[r] = float(np.dot(gcen - truth.g, ghat - gcen))
        var_s[r] = float(np.sum((ghat - gcen) ** 2))
        extra_s[r] = float(np.sum((ghat - truth.g) ** 2)) - risk0

    root = math.sqrt(replicates)
    return DecompositionReport(
        lambda0=ideal.lam,
        df0=ideal.df,
        lambda_c=central.lam,
        df_c=central.df,
        bias_term=bias,
        covariance_term=float(cov_s.mean()),
        variability_term=float(var_s.mean()),
        extra_risk=float(extra_s.mean()),
        mc_replicates=replicates,
        mc_standard_errors=(
            float(cov_s.std(ddof=1) / root),
            float(var_s.std(ddof=1) / root),
            float(extra_s.std(ddof=1) / root),
        ),
    )


def curvature_denominator(c: Criterion, spec: DesignSpectrum, lam: float, u) -> float:
    """The normalizer Q_lam(u) of the first-order selection expansion.

    sum a b^((p-1)/q) { (1/q) a + [ (1 + p/q) a - 2 ] (c_q b^(1/q) u - 1) }
    over penalized components; at u with c_q b^(1/q) u = 1 it collapses to
    sum (1/q) a^2 b^((p-1)/q).
    """
    w = weights(spec, lam)
    nd = spec.null_dim
    a = w.a[nd:]
    b = w.b[nd:]
    up = np.asarray(u, dtype=float)[nd:]
    p, q = c.p, c.q
    B = b ** ((p - 1.0) / q)
    inner = a / q + ((1.0 + p / q) * a - 2.0) * (c.c_q * b ** (1.0 / q) * up - 1.0)
    return float(np.sum(a * B * inner))


def decomposition_approx(c: Criterion, spec: DesignSpectrum, truth: TruthSpectrum,
                         window: SelectionWindow | None = None) -> tuple[float, float]:
    """First-order analytic approximations to variability and covariance.

    Both come from linearizing the selection equation around the central
    smoothing parameter:

        variability = c_q^2/Q^2 { (sum a^2 b^2 (g^2+1)) (sum a^2 b^(2p/q) var w)
                                   + sum a^4 b^(2+2p/q) third_mixed }
        covariance  = (c_q/Q) sum a^2 b^(1+p/q) (a cov(z^2, w) - g cov(z, w))

    with all moments of w = |z|^(2/q) at the true g and Q the normalizer
    evaluated at u = E|z|^(2/q).  Approximate by construction; the Monte
    Carlo decomposition is the ground truth it is compared against.
    """
    central = central_lambda(c, spec, truth, window)
    w = weights(spec, central.lam)
    nd = spec.null_dim
    a = w.a[nd:]
    b = w.b[nd:]
    g = truth.g[nd:]
    p, q = c.p, c.q

    moments = [specfun.moment_set(gi, q) for gi in g]
    m1 = np.array([m.m1 for m in moments])
    var_w = np.array([m.var_w for m in moments])
    cov_z2_w = np.array([m.cov_z2_w for m in moments])
    cov_z_w = np.array([m.cov_z_w for m in moments])
    third = np.array([m.third_mixed for m in moments])

    eu = np.empty(spec.n)
    eu[:nd] = 0.0
    eu[nd:] = m1
    Q = curvature_denominator(c, spec, central.lam, eu)
    scale = float(np.sum(np.abs(a * b ** ((p - 1.0) / q))))
    if abs(Q) < 1e-12 * max(scale, 1e-300):
        raise NumericError(f"degenerate selection normalizer Q = {Q:.3e}")

    signal = float(np.sum(a**2 * b**2 * (g**2 + 1.0)))
    spread = float(np.sum(a**2 * b ** (2.0 * p / q) * var_w))
    skew = float(np.sum(a**4 * b ** (2.0 + 2.0 * p / q) * third))
    variability = c.c_q**2 / Q**2 * (signal * spread + skew)
    covariance = c.c_q / Q * float(
        np.sum(a**2 * b ** (1.0 + p / q) * (a * cov_z2_w - g * cov_z_w))
    )
    return variability, covariance


@dataclass(frozen=True)
class RateProbe:
    """Central smoothing parameters across sample sizes with fitted slopes."""

    rows: list[tuple[int, float, float]]  # (n, lam_c, df_c)
    slope_lambda: float
    slope_df: float
    excluded: list[int]  # n values dropped for boundary-flagged lam_c


def rate_probe(c: Criterion, design: dict, n_list, truth_gen, sigma: float = 1.0,
               cache_dir=None) -> RateProbe:
    """Track how the central smoothing parameter scales with sample size.

    For each n, builds the design and spectrum (cached when cache_dir is
    given), evaluates the truth generator on the grid, and locates lam_c;
    boundary-flagged fits are excluded and reported.  Slopes are least
    squares of log lam_c and log df_c against log n.
    """
    from .spectrum import build_design, cached_decompose, decompose

    n_list = [int(n) for n in n_list]
    if len(n_list) < 4 or any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("rate_probe needs an increasing n list with >= 4 values")
    rows: list[tuple[int, float, float]] = []
    excluded: list[int] = []
    for n in n_list:
        grid = build_design(design["kind"], n, **{k: v for k, v in design.items() if k != "kind"})
        spec = cached_decompose(grid, cache_dir) if cache_dir else decompose(grid)
        truth = make_truth(spec, truth_gen(grid), sigma)
        central = central_lambda(c, spec, truth)
        if central.at_boundary != "none":
            excluded.append(n)
            continue
        rows.append((n, central.lam, central.df))
    if len(rows) < 2:
        raise NumericError("rate_probe: fewer than two interior fits, no slope")
    logn = np.log([r[0] for r in rows])
    slope_lam = float(np.polyfit(logn, np.log([r[1] for r in rows]), 1)[0])
    slope_df = float(np.polyfit(logn, np.log([r[2] for r in rows]), 1)[0])
    return RateProbe(rows=rows, slope_lambda=slope_lam, slope_df=slope_df, excluded=excluded)
