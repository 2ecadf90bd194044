"""The unified two-parameter family of selection criteria and data-driven selection.

A criterion is indexed by (p, q) with p, q >= 1.  Writing b_i for the shrunk
fraction at smoothing parameter lam, t_i = c_q b_i^(1/q), and u_i = |z_i|^(2/q)
for the rotated data z, the criterion value is

    p > 1:  sum_i [ t_i^p u_i - (p/(p-1)) (t_i^(p-1) - 1) ]
    p = 1:  sum_i [ t_i u_i - (1/q) log b_i ]

summed over penalized components (k_i > 0); the null components contribute
constants for p > 1 and are undefined at p = 1.  The classical trio is
cp = (2, 1), gml = (1, 1), ee = (3/2, 3/2): all three are recovered exactly,
up to positive-affine transforms that leave the minimizer unchanged.

Selection minimizes the criterion over a degrees-of-freedom window with a
coarse global grid followed by golden-section refinement in log lam.
"""

from dataclasses import dataclass
import math
import re

import numpy as np

from . import specfun
from .spectrum import DesignSpectrum, SmootherWeights, df, lambda_for_df, smooth, weights

# Search window in degrees of freedom: just inside the interpolation end
# (df = n) and just above the null fit (df = 2), per-spectrum.
DF_WINDOW_LO = 2.1
DF_WINDOW_MARGIN = 0.5
COARSE_CANDIDATES = 201
REFINE_LOG_TOL = 1e-6

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class Criterion:
    """One member of the (p, q) family; c_q is cached at construction."""

    name: str
    p: float
    q: float
    c_q: float


def make_criterion(p: float, q: float, name: str | None = None) -> Criterion:
    if p < 1 or q < 1:
        raise ValueError(f"criterion requires p >= 1 and q >= 1, got ({p}, {q})")
    if name is None:
        name = f"p{p:g}q{q:g}"
    return Criterion(name=name, p=float(p), q=float(q), c_q=specfun.c_q(q))


CP = make_criterion(2.0, 1.0, "cp")
GML = make_criterion(1.0, 1.0, "gml")
EE = make_criterion(1.5, 1.5, "ee")

_BY_NAME = {c.name: c for c in (CP, GML, EE)}


def criterion_by_name(name: str) -> Criterion:
    """Look up cp/gml/ee, or parse a custom 'p<var>q<var>' id."""
    key = name.strip().lower()
    if key in _BY_NAME:
        return _BY_NAME[key]
    m = re.fullmatch(r"p([0-9.]+)q([0-9.]+)", key)
    if m:
        return make_criterion(float(m.group(1)), float(m.group(2)))
    raise ValueError(f"unknown criterion {name!r}")


@dataclass(frozen=True)
class SelectionResult:
    lam_hat: float
    df_hat: float
    loss: float
    at_boundary: str  # "none" | "low-lambda" | "high-lambda"


def loss(c: Criterion, w: SmootherWeights, u) -> float:
    """Criterion value at one smoothing parameter.

    u must be the full-length vector |z|^(2/q) (nonnegative); only its
    penalized entries matter.  For p = 1 the value diverges as lam -> 0, and
    lam = 0 itself is a domain error (log of zero).
    """
    u = np.asarray(u, dtype=float)
    if u.shape != w.a.shape:
        raise ValueError(f"u must have length {len(w.a)}, got shape {u.shape}")
    if np.any(u < 0):
        raise ValueError("u must be nonnegative")
    nd = w.null_dim
    b = w.b[nd:]
    up = u[nd:]
    if c.p == 1.0:
        if np.any(b <= 0):
            raise ValueError("p = 1 criterion undefined at lam = 0 (log of zero)")
        t = c.c_q * b ** (1.0 / c.q)
        return float(np.sum(t * up - np.log(b) / c.q))
    t = c.c_q * b ** (1.0 / c.q)
    return float(np.sum(t**c.p * up - (c.p / (c.p - 1.0)) * (t ** (c.p - 1.0) - 1.0)))


def loss_derivs(c: Criterion, spec: DesignSpectrum, lam: float, u) -> tuple[float, float]:
    """First and second lam-derivatives of the criterion at lam > 0.

    Closed forms follow from da/dlam = -ab/lam and db/dlam = ab/lam: with
    t = c_q b^(1/q),

        l'  = (p/(q lam)) [ sum a t^p u - sum a t^(p-1) ]
        l'' = -l'/lam + (p/(q lam^2)) [ sum a t^p ((p/q)a - b) u
                                        - sum a t^(p-1) (((p-1)/q)a - b) ]
    """
    if lam <= 0:
        raise ValueError(f"loss_derivs requires lam > 0, got {lam}")
    u = np.asarray(u, dtype=float)
    if u.shape != (spec.n,):
        raise ValueError(f"u must have length {spec.n}, got shape {u.shape}")
    w = weights(spec, lam)
    nd = w.null_dim
    a = w.a[nd:]
    b = w.b[nd:]
    up = u[nd:]
    p, q = c.p, c.q
    t = c.c_q * b ** (1.0 / q)
    atp = a * t**p
    atp1 = a * t ** (p - 1.0)
    s1 = float(np.sum(atp * up))
    s2 = float(np.sum(atp1))
    ld = p / (q * lam) * (s1 - s2)
    s1d = float(np.sum(atp * ((p / q) * a - b) * up))
    s2d = float(np.sum(atp1 * (((p - 1.0) / q) * a - b)))
    ldd = -ld / lam + p / (q * lam * lam) * (s1d - s2d)
    return ld, ldd


# --- search window ----------------------------------------------------------


@dataclass
class SelectionWindow:
    """Precomputed coarse grid for one spectrum, shared across replicates.

    lam ascending (df descending from n - 0.5 to 2.1); a and b are the
    (candidates x n) weight tables.  Power tables per criterion are cached
    lazily since they do not depend on the data.
    """

    spec: DesignSpectrum
    lambdas: np.ndarray
    df_targets: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self._powers: dict[tuple[float, float], tuple[np.ndarray, np.ndarray]] = {}

    def criterion_tables(self, c: Criterion) -> tuple[np.ndarray, np.ndarray]:
        """(T, offset): coarse losses are T @ u_penalized + offset."""
        key = (c.p, c.q)
        cached = self._powers.get(key)
        if cached is not None:
            return cached
        nd = self.spec.null_dim
        b = self.b[:, nd:]
        t = c.c_q * b ** (1.0 / c.q)
        if c.p == 1.0:
            T = t
            offset = -np.sum(np.log(b), axis=1) / c.q
        else:
            T = t**c.p
            offset = -np.sum((c.p / (c.p - 1.0)) * (t ** (c.p - 1.0) - 1.0), axis=1)
        self._powers[key] = (T, offset)
        return T, offset


def selection_window(spec: DesignSpectrum, candidates: int = COARSE_CANDIDATES) -> SelectionWindow:
    """Build the df-equispaced candidate grid for one spectrum."""
    targets = np.linspace(spec.n - DF_WINDOW_MARGIN, DF_WINDOW_LO, candidates)
    lambdas = np.array([lambda_for_df(spec, t) for t in targets])
    denom = 1.0 + lambdas[:, None] * spec.k[None, :]
    a = 1.0 / denom
    b = lambdas[:, None] * spec.k[None, :] / denom
    return SelectionWindow(spec=spec, lambdas=lambdas, df_targets=targets, a=a, b=b)


def _argmin_prefer_larger(values: np.ndarray) -> int:
    # np.argmin takes the first of tied minima; scanning the reversed array
    # makes ties resolve toward larger lam (ascending lam ordering).
    return len(values) - 1 - int(np.argmin(values[::-1]))


def minimize_on_window(window: SelectionWindow, objective, coarse_values=None,
                       log_tol: float = REFINE_LOG_TOL,
                       derivative=None) -> tuple[float, float, str]:
    """Two-stage scalar minimization over the smoothing-parameter window.

    Global coarse pass over the candidate grid, then golden-section in
    log lam inside the bracket around the winner; exact ties resolve to the
    larger lam.  If `derivative` is given (deterministic objectives with an
    analytic slope), the final bracket is polished by bisecting the sign
    change, pinning the minimizer well past golden-section resolution.
    Returns (lam, value, boundary flag).
    """
    lams = window.lambdas
    if coarse_values is None:
        coarse_values = np.array([objective(l) for l in lams])
    best = _argmin_prefer_larger(np.asarray(coarse_values))
    lo = math.log(lams[max(best - 1, 0)])
    hi = math.log(lams[min(best + 1, len(lams) - 1)])
    bracket = (lo, hi)

    evaluated = [(float(coarse_values[best]), float(lams[best]))]
    c1 = hi - _GOLDEN * (hi - lo)
    c2 = lo + _GOLDEN * (hi - lo)
    f1 = objective(math.exp(c1))
    f2 = objective(math.exp(c2))
    evaluated.append((f1, math.exp(c1)))
    evaluated.append((f2, math.exp(c2)))
    while hi - lo > log_tol:
        if f1 < f2:
            hi, c2, f2 = c2, c1, f1
            c1 = hi - _GOLDEN * (hi - lo)
            f1 = objective(math.exp(c1))
            evaluated.append((f1, math.exp(c1)))
        else:
            lo, c1, f1 = c1, c2, f2
            c2 = lo + _GOLDEN * (hi - lo)
            f2 = objective(math.exp(c2))
            evaluated.append((f2, math.exp(c2)))

    if derivative is not None:
        # Golden-section comparisons go noise-limited once the bracket is
        # tight; bisecting the slope's sign change over the coarse bracket
        # pins deterministic minimizers to near machine precision.
        rlo, rhi = bracket
        d_lo, d_hi = derivative(math.exp(rlo)), derivative(math.exp(rhi))
        if d_lo < 0 < d_hi:
            for _ in range(200):
                mid = 0.5 * (rlo + rhi)
                if rhi - rlo < 1e-14:
                    break
                if derivative(math.exp(mid)) < 0:
                    rlo = mid
                else:
                    rhi = mid
            lam_pol = math.exp(0.5 * (rlo + rhi))
            evaluated.append((objective(lam_pol), lam_pol))

    value, lam = min(evaluated, key=lambda pair: (pair[0], -pair[1]))

    flag = "none"
    if math.log(lam) - math.log(lams[0]) <= 2.0 * log_tol:
        flag = "low-lambda"
    elif math.log(lams[-1]) - math.log(lam) <= 2.0 * log_tol:
        flag = "high-lambda"
    return lam, value, flag


def select(c: Criterion, spec: DesignSpectrum, z,
           window: SelectionWindow | None = None) -> SelectionResult:
    """Data-driven smoothing parameter: global minimizer of the criterion.

    z is the rotated data; u = |z|^(2/q) is formed internally.  Pass a
    prebuilt window when selecting for many replicates on one spectrum.
    """
    z = np.asarray(z, dtype=float)
    if z.shape != (spec.n,):
        raise ValueError(f"z must have length {spec.n}, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("z must be finite")
    if window is None:
        window = selection_window(spec)
    u = np.abs(z) ** (2.0 / c.q)
    T, offset = window.criterion_tables(c)
    coarse = T @ u[spec.null_dim:] + offset
    lam, value, flag = minimize_on_window(
        window, lambda l: loss(c, weights(spec, l), u), coarse_values=coarse
    )
    return SelectionResult(lam_hat=lam, df_hat=df(spec, lam), loss=value, at_boundary=flag)


# --- classical statistics ---------------------------------------------------


def classic_statistics(spec: DesignSpectrum, lam: float, y, sigma: float,
                       omega: float = 1.0) -> tuple[float, float]:
    """Residual-based model statistics (cp, gcv) with inflation factor omega.

        cp  = ||y - f_hat||^2 + 2 omega sigma^2 df(lam) - n sigma^2
        gcv = ||y - f_hat||^2 / (1 - omega df(lam)/n)^2

    At omega = 1, minimizing cp over lam reproduces selection under the
    (2, 1) criterion applied to z = U'y/sigma.
    """
    if sigma <= 0:
        raise ValueError(f"classic_statistics requires sigma > 0, got {sigma}")
    if omega <= 0:
        raise ValueError(f"classic_statistics requires omega > 0, got {omega}")
    y = np.asarray(y, dtype=float)
    rss = float(np.sum((y - smooth(spec, lam, y)) ** 2))
    d = df(spec, lam)
    cp = rss + 2.0 * omega * sigma * sigma * d - spec.n * sigma * sigma
    shrink = 1.0 - omega * d / spec.n
    if shrink <= 0:
        raise ValueError(f"gcv undefined: omega * df = {omega * d:.6g} >= n = {spec.n}")
    gcv = rss / (shrink * shrink)
    return cp, gcv


def sigma_estimate(spec: DesignSpectrum, y, M: int) -> float:
    """Noise-variance estimate from the M + 2 highest rotated components.

    Returns sum of the top (U'y)_i^2 divided by M - 2.  High components of a
    smooth signal are essentially zero, so for noisy data the estimate is
    close to sigma^2 inflated by (M + 2)/(M - 2); the index/divisor
    asymmetry is intentional, matching the estimator this implements.
    """
    M = int(M)
    if not (5 <= M <= spec.n - 5):
        raise ValueError(f"sigma_estimate requires 5 <= M <= n - 5, got M={M}, n={spec.n}")
    y = np.asarray(y, dtype=float)
    if y.shape != (spec.n,):
        raise ValueError(f"y must have length {spec.n}, got shape {y.shape}")
    tail = spec.U[:, spec.n - 2 - M:].T @ y
    return float(np.sum(tail * tail) / (M - 2.0))


def default_sigma_m(n: int) -> int:
    """Default tail size for sigma_estimate: max(20, n/10), rounded."""
    return max(20, round(n / 10))
