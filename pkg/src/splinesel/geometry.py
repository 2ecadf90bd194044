"""Geometric diagnostics of the criterion family.

Seen as estimating equations, the criteria trace curves through data space;
their statistical curvature measures how far each is from a straightforward
(exponential-family-like) problem, and the reversal statistic R0 detects
datasets on which the criterion's second-order behavior at the ideal
smoothing parameter flips sign, i.e. the criterion locally prefers moving
away from the optimum.  Low curvature and rare reversals go together.
"""

from dataclasses import dataclass
import math

import numpy as np

from . import specfun
from ._rng import replicate_normals
from .criteria import Criterion, loss_derivs
from .errors import NumericError
from .oracle import TruthSpectrum
from .spectrum import DesignSpectrum, weights


@dataclass(frozen=True)
class CriterionGeometry:
    """Local geometry of one criterion at one smoothing parameter.

    eta_dot/eta_ddot are the first two lam-derivatives of the natural
    parameter curve, mu the center of u = |z|^(2/q); entries for null
    components are 0 (and mu there is +inf, the unshrunk limit).
    """

    lam: float
    eta_dot: np.ndarray
    eta_ddot: np.ndarray
    mu: np.ndarray
    gamma_sq: float


@dataclass(frozen=True)
class ReversalSummary:
    """Reversal diagnostics at the ideal smoothing parameter.

    M and V are the mean and variance of R0 (up to the positive factors
    lam0^2 and lam0^4 respectively, which cancel in the ratio).  M > 0 in
    well-behaved settings, so reversals are the lower tail of R0 and the
    approximation quantile T_n = -M/sqrt(V) is negative; prob_normal =
    Phi(T_n) approximates P(R0 < 0), prob_mc is its Monte Carlo estimate
    (nan until computed).
    """

    lam0: float
    beta: float
    M: float
    V: float
    T_n: float
    prob_normal: float
    prob_mc: float = math.nan
    mc_se: float = math.nan


def normal_cdf(t: float) -> float:
    """Standard normal CDF via the complementary error function."""
    return 0.5 * math.erfc(-t / math.sqrt(2.0))


def _penalized_ab(spec: DesignSpectrum, lam: float):
    if lam <= 0:
        raise ValueError(f"geometry requires lam > 0, got {lam}")
    w = weights(spec, lam)
    nd = spec.null_dim
    return w.a[nd:], w.b[nd:]


def eta_curve(c: Criterion, spec: DesignSpectrum, lam: float):
    """(eta_dot, eta_ddot, mu) on penalized components.

    eta_dot_i = -(p/(q lam)) a_i t_i^p with t_i = c_q b_i^(1/q);
    differentiating again via da/dlam = -ab/lam, db/dlam = ab/lam gives
    eta_ddot_i = (p/(q lam^2)) a_i t_i^p (1 + b_i - (p/q) a_i).
    mu_i = 1/t_i.
    """
    a, b = _penalized_ab(spec, lam)
    p, q = c.p, c.q
    t = c.c_q * b ** (1.0 / q)
    atp = a * t**p
    eta_dot = -(p / (q * lam)) * atp
    eta_ddot = p / (q * lam * lam) * atp * (1.0 + b - (p / q) * a)
    mu = 1.0 / t
    return eta_dot, eta_ddot, mu


def curvature_sq(c: Criterion, spec: DesignSpectrum, lam: float) -> float:
    """Squared statistical curvature, spectral-sum form.

    With B_i = b_i^((p-1)/q) and S_m = sum a^m B over penalized components:

        gamma^2 = ((p+q)^2 / (p c_q^(p-1))) ( S4/S2^2 - S3^2/S2^3 )

    Nonnegative by Cauchy-Schwarz; small curvature means the criterion
    behaves like a straight estimating equation near lam.
    """
    a, b = _penalized_ab(spec, lam)
    p, q = c.p, c.q
    B = b ** ((p - 1.0) / q)
    s2 = float(np.sum(a**2 * B))
    s3 = float(np.sum(a**3 * B))
    s4 = float(np.sum(a**4 * B))
    return (p + q) ** 2 / (p * c.c_q ** (p - 1.0)) * (s4 / s2**2 - s3**2 / s2**3)


def curvature_via_matrix(c: Criterion, spec: DesignSpectrum, lam: float) -> float:
    """Squared curvature from the defining Gram construction.

    gamma^2 = det(M) / (eta_dot' V eta_dot)^3 with V = diag(c_q^-(p+1)
    b^-(p+1)/q / p) and M the 2x2 Gram matrix of (eta_dot, eta_ddot) under
    V.  Agrees with curvature_sq to rounding; kept as an independent route.
    """
    a, b = _penalized_ab(spec, lam)
    eta_dot, eta_ddot, _ = eta_curve(c, spec, lam)
    p, q = c.p, c.q
    V = c.c_q ** (-(p + 1.0)) * b ** (-(p + 1.0) / q) / p
    m11 = float(np.sum(eta_dot * V * eta_dot))
    m12 = float(np.sum(eta_ddot * V * eta_dot))
    m22 = float(np.sum(eta_ddot * V * eta_ddot))
    det = m11 * m22 - m12 * m12
    return det / m11**3


def criterion_geometry(c: Criterion, spec: DesignSpectrum, lam: float) -> CriterionGeometry:
    """Bundle eta derivatives, centers, and curvature at one lam."""
    eta_dot_p, eta_ddot_p, mu_p = eta_curve(c, spec, lam)
    nd = spec.null_dim
    eta_dot = np.zeros(spec.n)
    eta_ddot = np.zeros(spec.n)
    mu = np.full(spec.n, math.inf)
    eta_dot[nd:] = eta_dot_p
    eta_ddot[nd:] = eta_ddot_p
    mu[nd:] = mu_p
    return CriterionGeometry(
        lam=lam, eta_dot=eta_dot, eta_ddot=eta_ddot, mu=mu,
        gamma_sq=curvature_sq(c, spec, lam),
    )


def reversal_beta(c: Criterion, spec: DesignSpectrum, lam0: float) -> float:
    """Projection constant beta removing the first-order direction from l''.

    beta = -(1/lam0) [ 2 - (1 + p/q) (sum a^3 b^(-2/q)) / (sum a^2 b^(-2/q)) ]
    over penalized components; the b-exponent is -2/q for every (p, q).
    """
    a, b = _penalized_ab(spec, lam0)
    ratio = _weight_ratio(c, a, b)
    return -(2.0 - (1.0 + c.p / c.q) * ratio) / lam0


def _weight_ratio(c: Criterion, a: np.ndarray, b: np.ndarray) -> float:
    wb = b ** (-2.0 / c.q)
    return float(np.sum(a**3 * wb) / np.sum(a**2 * wb))


def reversal_stat(c: Criterion, spec: DesignSpectrum, lam0: float, z) -> float:
    """R0(z) = l''(u) - beta l'(u) at the ideal smoothing parameter.

    u = |z|^(2/q); negative values mark the reversal region, where the
    criterion's local slope-curvature combination points away from lam0.
    """
    z = np.asarray(z, dtype=float)
    u = np.abs(z) ** (2.0 / c.q)
    ld, ldd = loss_derivs(c, spec, lam0, u)
    return ldd - reversal_beta(c, spec, lam0) * ld


def _r0_affine(c: Criterion, spec: DesignSpectrum, lam0: float):
    """R0 is affine in u: return (coeff on penalized u, constant).

    Extracted by evaluating the same loss_derivs path at basis vectors, so
    the vectorized Monte Carlo below cannot drift from reversal_stat.
    """
    beta = reversal_beta(c, spec, lam0)
    n, nd = spec.n, spec.null_dim

    def r0_of_u(u):
        ld, ldd = loss_derivs(c, spec, lam0, u)
        return ldd - beta * ld

    base = r0_of_u(np.zeros(n))
    coeff = np.empty(n - nd)
    e = np.zeros(n)
    for j in range(nd, n):
        e[j] = 1.0
        coeff[j - nd] = r0_of_u(e) - base
        e[j] = 0.0
    return coeff, base


def reversal_moments(c: Criterion, spec: DesignSpectrum, truth: TruthSpectrum,
                     lam0: float) -> ReversalSummary:
    """Mean/variance normal approximation to the reversal probability.

    With rho = (sum a^3 b^(-2/q)) / (sum a^2 b^(-2/q)), B = b^((p-1)/q),
    and w-moments at the true g:

        M = (p/q^2)(p+q) c_q^(p-1) { (1/(p+q)) sum a^2 B
              + sum a B (a - rho)(c_q b^(1/q) E|z|^(2/q) - 1) }
        V = (p^2/q^4)(p+q)^2 c_q^(2p) sum a^2 b^(2p/q) (a - rho)^2 var w

    (common positive powers of lam0 dropped; they cancel in T_n).
    prob_normal = Phi(-M/sqrt(V)) approximates the lower-tail mass P(R0 < 0).
    """
    a, b = _penalized_ab(spec, lam0)
    g = truth.g[spec.null_dim:]
    p, q = c.p, c.q
    rho = _weight_ratio(c, a, b)
    B = b ** ((p - 1.0) / q)
    m1 = np.array([specfun.abs_moment(gi, 1.0 / q) for gi in g])
    var_w = np.array([specfun.moment_set(gi, q).var_w for gi in g])

    centered = c.c_q * b ** (1.0 / q) * m1 - 1.0
    M = (p / q**2) * (p + q) * c.c_q ** (p - 1.0) * (
        float(np.sum(a**2 * B)) / (p + q)
        + float(np.sum(a * B * (a - rho) * centered))
    )
    V = (p**2 / q**4) * (p + q) ** 2 * c.c_q ** (2.0 * p) * float(
        np.sum(a**2 * b ** (2.0 * p / q) * (a - rho) ** 2 * var_w)
    )
    if V <= 0:
        raise NumericError(f"reversal variance V = {V:.3e} is not positive")
    # M is the (positive) mean of R0, so reversals R0 < 0 are the lower
    # tail: the normal-approximation quantile is -M/sqrt(V), negative, with
    # magnitude growing in n as the reversal probability vanishes.
    t_n = -M / math.sqrt(V)
    return ReversalSummary(
        lam0=lam0, beta=reversal_beta(c, spec, lam0), M=M, V=V,
        T_n=t_n, prob_normal=normal_cdf(t_n),
    )


def reversal_prob_mc(c: Criterion, spec: DesignSpectrum, truth: TruthSpectrum,
                     lam0: float, replicates: int, seed: int) -> tuple[float, float]:
    """Monte Carlo estimate of P(R0(z) < 0) with binomial standard error.

    Draws z ~ Normal(g, I) keyed by (seed, n, replicate) and evaluates the
    affine form of R0 batchwise.
    """
    if replicates < 1000:
        raise ValueError(f"reversal_prob_mc needs >= 1000 replicates, got {replicates}")
    coeff, base = _r0_affine(c, spec, lam0)
    nd = spec.null_dim
    hits = 0
    chunk = 2000
    done = 0
    while done < replicates:
        m = min(chunk, replicates - done)
        z = np.empty((m, spec.n))
        for i in range(m):
            z[i] = truth.g + replicate_normals(seed, spec.n, done + i, spec.n)
        u = np.abs(z[:, nd:]) ** (2.0 / c.q)
        r0 = u @ coeff + base
        hits += int(np.sum(r0 < 0.0))
        done += m
    prob = hits / replicates
    se = math.sqrt(max(prob * (1.0 - prob), 0.0) / replicates)
    return prob, se


def reversal_summary(c: Criterion, spec: DesignSpectrum, truth: TruthSpectrum,
                     lam0: float, replicates: int, seed: int) -> ReversalSummary:
    """Normal-approximation moments plus the Monte Carlo probability."""
    summary = reversal_moments(c, spec, truth, lam0)
    prob, se = reversal_prob_mc(c, spec, truth, lam0, replicates, seed)
    return ReversalSummary(
        lam0=summary.lam0, beta=summary.beta, M=summary.M, V=summary.V,
        T_n=summary.T_n, prob_normal=summary.prob_normal,
        prob_mc=prob, mc_se=se,
    )
