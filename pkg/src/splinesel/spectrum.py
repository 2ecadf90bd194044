"""Penalty construction and spectral decomposition for cubic smoothing splines.

The smoother is diagonalized once per design: the roughness penalty K for a
natural cubic spline on the design points is formed from its band-structured
factors, eigendecomposed as K = U diag(k) U', and everything downstream works
with the shrinkage weights a_i = 1/(1 + lam * k_i) in the rotated basis.
"""

from dataclasses import dataclass
import hashlib
import math
import re
from pathlib import Path

import numpy as np
from scipy.linalg import eigh, solveh_banded
from scipy.stats import norm as _normal_dist

from .errors import NumericError

CACHE_FORMAT_VERSION = 1

# Eigenvalues below _NULL_CLAMP_EPS_MULT * eps * max(k) are treated as exact
# zeros; the penalty has rank n - 2, so more than two such values means the
# decomposition went wrong.  The threshold must track the eigensolver's
# absolute noise floor (~eps * max(k)): the smallest positive eigenvalue
# decays like 1/n while max(k) grows like n^3, so any fixed relative cutoff
# eventually swallows genuine spectrum (at n = 4096 the true k[2] is already
# ~4e-14 * max(k)).  A multiplier of 32 keeps > 30x separation on both sides
# for all supported n.
_NULL_CLAMP_EPS_MULT = 32.0


@dataclass(frozen=True)
class DesignGrid:
    """Strictly increasing design points, at least four of them."""

    x: np.ndarray

    @property
    def n(self) -> int:
        return len(self.x)


@dataclass(frozen=True)
class DesignSpectrum:
    """Eigendecomposition of the roughness penalty for one design.

    U is orthogonal with columns ordered by ascending eigenvalue k; the first
    null_dim = 2 eigenvalues are exactly zero (constant and linear functions
    are never penalized).
    """

    n: int
    x: np.ndarray
    U: np.ndarray
    k: np.ndarray
    null_dim: int


@dataclass(frozen=True)
class SmootherWeights:
    """Per-component shrinkage at one value of the smoothing parameter.

    a_i = 1/(1 + lam * k_i) is the retained fraction, b_i = 1 - a_i the
    shrunk fraction; b_i = lam * k_i * a_i identically.
    """

    lam: float
    a: np.ndarray
    b: np.ndarray
    null_dim: int


def build_design(kind: str, n: int | None = None, *, lo: float | None = None,
                 hi: float | None = None, dist: str | None = None,
                 points=None) -> DesignGrid:
    """Construct a design grid.

    kind "equispaced": n points lo + (i-1)(hi-lo)/(n-1), i = 1..n.
    kind "quantile":   x_i = G^{-1}((2i-1)/(2n)) for the named distribution,
                       dist one of "uniform(a,b)" or "normal(mu,sd)".
    kind "explicit":   takes the given points verbatim.
    """
    if kind == "equispaced":
        if n is None or lo is None or hi is None:
            raise ValueError("equispaced design needs lo, hi, and n")
        if n < 4:
            raise ValueError(f"design needs n >= 4, got {n}")
        if not hi > lo:
            raise ValueError(f"equispaced design needs hi > lo, got ({lo}, {hi})")
        x = np.linspace(float(lo), float(hi), n)
    elif kind == "quantile":
        if n is None or dist is None:
            raise ValueError("quantile design needs dist and n")
        if n < 4:
            raise ValueError(f"design needs n >= 4, got {n}")
        u = (2.0 * np.arange(1, n + 1) - 1.0) / (2.0 * n)
        x = _quantile_fn(dist)(u)
    elif kind == "explicit":
        if points is None:
            raise ValueError("explicit design needs points")
        x = np.asarray(points, dtype=float)
        if x.ndim != 1 or len(x) < 4:
            raise ValueError("explicit design needs a flat list of >= 4 points")
    else:
        raise ValueError(f"unknown design kind {kind!r}")
    if not np.all(np.diff(x) > 0):
        raise ValueError("design points must be strictly increasing")
    return DesignGrid(x=x)


def _quantile_fn(dist: str):
    m = re.fullmatch(r"\s*(uniform|normal)\(\s*([^,]+)\s*,\s*([^)]+)\s*\)\s*", dist)
    if not m:
        raise ValueError(f"unknown distribution spec {dist!r}")
    name, p1, p2 = m.group(1), float(m.group(2)), float(m.group(3))
    if name == "uniform":
        if not p2 > p1:
            raise ValueError(f"uniform({p1},{p2}) needs upper > lower")
        return lambda u: p1 + (p2 - p1) * u
    if p2 <= 0:
        raise ValueError(f"normal({p1},{p2}) needs sd > 0")
    return lambda u: _normal_dist.ppf(u, loc=p1, scale=p2)


def penalty_matrix(grid: DesignGrid) -> np.ndarray:
    """Dense roughness penalty K = Q R^{-1} Q' for a natural cubic spline.

    Q is the n x (n-2) second-difference matrix built from the gaps
    h_i = x_{i+1} - x_i, R the symmetric tridiagonal Gram matrix with
    diagonal (h_{i-1} + h_i)/3 and off-diagonal h_i/6.  R is eliminated by
    a banded Cholesky solve, never inverted densely.
    """
    x = grid.x
    n = len(x)
    h = np.diff(x)
    Q = np.zeros((n, n - 2))
    idx = np.arange(1, n - 1)
    Q[idx - 1, idx - 1] = 1.0 / h[idx - 1]
    Q[idx, idx - 1] = -1.0 / h[idx - 1] - 1.0 / h[idx]
    Q[idx + 1, idx - 1] = 1.0 / h[idx]
    band = np.zeros((2, n - 2))
    band[0] = (h[:-1] + h[1:]) / 3.0
    band[1, :-1] = h[1:-1] / 6.0
    K = Q @ solveh_banded(band, Q.T, lower=True)
    return 0.5 * (K + K.T)


def decompose(grid: DesignGrid) -> DesignSpectrum:
    """Eigendecompose the penalty into an orthogonal basis and its spectrum.

    Dense symmetric solve, O(n^3); intended for designs up to a few thousand
    points.  The two zero eigenvalues of the rank-(n-2) penalty are clamped
    to exact zeros after the solve.
    """
    K = penalty_matrix(grid)
    try:
        k, U = eigh(K)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - rare
        raise NumericError(f"penalty eigendecomposition failed: {exc}") from exc
    kmax = float(k[-1])
    if not math.isfinite(kmax) or kmax <= 0:
        raise NumericError("penalty spectrum is degenerate (no positive eigenvalues)")
    tiny = np.abs(k) < _NULL_CLAMP_EPS_MULT * np.finfo(float).eps * kmax
    if int(tiny.sum()) > 2:
        raise NumericError(
            f"penalty rank deficiency: {int(tiny.sum())} near-zero eigenvalues, expected 2"
        )
    k = k.copy()
    k[:2] = 0.0
    k[2:] = np.maximum(k[2:], 0.0)
    # LAPACK hands back U Fortran-ordered; the npz cache round-trips it
    # C-ordered, and BLAS matvec rounding depends on layout.  Normalize so
    # fresh and cache-loaded spectra give bit-identical products.
    return DesignSpectrum(n=grid.n, x=grid.x.copy(),
                          U=np.ascontiguousarray(U), k=k, null_dim=2)


def weights(spec: DesignSpectrum, lam: float) -> SmootherWeights:
    """Shrinkage weights a, b at smoothing parameter lam >= 0."""
    if lam < 0 or not math.isfinite(lam):
        raise ValueError(f"weights requires finite lam >= 0, got {lam}")
    denom = 1.0 + lam * spec.k
    a = 1.0 / denom
    b = lam * spec.k / denom
    return SmootherWeights(lam=float(lam), a=a, b=b, null_dim=spec.null_dim)


def df(spec: DesignSpectrum, lam: float) -> float:
    """Effective degrees of freedom tr(A_lam) = sum_i a_i.

    Strictly decreasing in lam, from n at lam = 0 down to null_dim.
    """
    if lam < 0 or not math.isfinite(lam):
        raise ValueError(f"df requires finite lam >= 0, got {lam}")
    return float(np.sum(1.0 / (1.0 + lam * spec.k)))


def lambda_for_df(spec: DesignSpectrum, target: float) -> float:
    """Invert the monotone df map: lam with df(lam) = target to 1e-9.

    Bisection on log lam; target must lie strictly between null_dim and n.
    """
    if not (spec.null_dim < target < spec.n):
        raise ValueError(
            f"df target must lie in ({spec.null_dim}, {spec.n}), got {target}"
        )
    kpos = spec.k[spec.null_dim:]
    lo, hi = math.log(1e-8 / kpos[-1]), math.log(1e8 / kpos[0])
    while df(spec, math.exp(lo)) < target:
        lo -= 5.0
    while df(spec, math.exp(hi)) > target:
        hi += 5.0
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        val = df(spec, math.exp(mid))
        if abs(val - target) <= 1e-9:
            return math.exp(mid)
        if val > target:
            lo = mid
        else:
            hi = mid
    raise NumericError(f"lambda_for_df bisection stalled at target {target}")


def smooth(spec: DesignSpectrum, lam: float, y) -> np.ndarray:
    """Apply the smoother: f_hat = U diag(a) U' y."""
    y = np.asarray(y, dtype=float)
    if y.shape != (spec.n,):
        raise ValueError(f"y must have length {spec.n}, got shape {y.shape}")
    w = weights(spec, lam)
    return spec.U @ (w.a * (spec.U.T @ y))


def rotate(spec: DesignSpectrum, v, sigma: float) -> np.ndarray:
    """Rotate into spectral coordinates: U'v / sigma."""
    if sigma <= 0:
        raise ValueError(f"rotate requires sigma > 0, got {sigma}")
    v = np.asarray(v, dtype=float)
    if v.shape != (spec.n,):
        raise ValueError(f"v must have length {spec.n}, got shape {v.shape}")
    return (spec.U.T @ v) / sigma


# --- disk cache -------------------------------------------------------------
# Layout: NumPy .npz with arrays format_version (scalar), n (scalar), x (n,),
# k (n,), U (n, n) row-major, null_dim (scalar).  One file per (design, n),
# named by a hash of the design points.


def save_spectrum(spec: DesignSpectrum, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(
        path,
        format_version=np.int64(CACHE_FORMAT_VERSION),
        n=np.int64(spec.n),
        x=spec.x,
        k=spec.k,
        U=np.ascontiguousarray(spec.U),
        null_dim=np.int64(spec.null_dim),
    )


def load_spectrum(path) -> DesignSpectrum:
    with np.load(path) as data:
        version = int(data["format_version"])
        if version != CACHE_FORMAT_VERSION:
            raise ValueError(
                f"spectrum cache {path} has format_version {version}, "
                f"expected {CACHE_FORMAT_VERSION}"
            )
        return DesignSpectrum(
            n=int(data["n"]),
            x=data["x"],
            U=data["U"],
            k=data["k"],
            null_dim=int(data["null_dim"]),
        )


def cache_key(grid: DesignGrid) -> str:
    digest = hashlib.sha256(grid.x.tobytes()).hexdigest()[:12]
    return f"spectrum_n{grid.n}_{digest}"


def cached_decompose(grid: DesignGrid, cache_dir) -> DesignSpectrum:
    """Decompose with a per-(design, n) disk cache.

    A hit is validated against the requested design points; simulations at
    many replicates then reuse one O(n^3) decomposition.
    """
    path = Path(cache_dir) / (cache_key(grid) + ".npz")
    if path.exists():
        spec = load_spectrum(path)
        if spec.n == grid.n and np.array_equal(spec.x, grid.x):
            return spec
    spec = decompose(grid)
    save_spectrum(spec, path)
    return spec
