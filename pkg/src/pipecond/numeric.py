"""Dense least squares, t/F tail probabilities and the seeded random source.

The tail functions work in the log domain internally so that p-values far
below the double-precision underflow limit are still available as base-10
logarithms (``log10_t_two_sided_p``, ``log10_f_sf``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg, optimize, stats

from .errors import DimensionMismatch, DomainError, NonConvergence, RankDeficient

RANK_TOL = 1e-10

_MASK64 = (1 << 64) - 1
# Golden-ratio increment used to decorrelate derived seeds (splitmix64 constant).
FOLD_SEED_CONSTANT = 0x9E3779B97F4A7C15


# --------------------------------------------------------------------------
# least squares


@dataclass(frozen=True)
class LeastSquaresSolution:
    beta: np.ndarray
    xtx_inverse_diag: np.ndarray
    residual_ss: float


def as_matrix(X, name="X"):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise DomainError(f"{name} contains non-finite entries")
    return X


def solve_least_squares(X, y, rank_tol=RANK_TOL):
    """Minimise ``||X b - y||^2`` by Householder QR.

    The diagonal of ``(X^T X)^{-1}`` is recovered from ``R^{-1}`` (row sums of
    squares), so it never forms the normal equations.
    """
    X = as_matrix(X)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if y.shape != (n,):
        raise DimensionMismatch(f"y has shape {y.shape}, expected ({n},)")
    if not np.all(np.isfinite(y)):
        raise DomainError("y contains non-finite entries")
    if n < p:
        raise RankDeficient(f"need n >= p, got n={n}, p={p}")
    if p == 0:
        raise DimensionMismatch("X has no columns")

    Q, R = np.linalg.qr(X, mode="reduced")
    pivots = np.abs(np.diag(R))
    largest = pivots.max()
    if largest == 0.0 or np.any(pivots < rank_tol * largest):
        bad = int(np.argmin(pivots))
        raise RankDeficient(f"design is rank deficient near column {bad}")

    beta = linalg.solve_triangular(R, Q.T @ y, lower=False)
    r_inv = linalg.solve_triangular(R, np.eye(p), lower=False)
    xtx_inv_diag = np.sum(r_inv * r_inv, axis=1)
    resid = y - X @ beta
    return LeastSquaresSolution(beta, xtx_inv_diag, float(resid @ resid))


# --------------------------------------------------------------------------
# incomplete beta and tail probabilities


def _beta_cf(x, a, b, max_iter=10_000, eps=1e-16):
    # Continued fraction for I_x(a, b), modified Lentz.
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise NonConvergence(f"incomplete beta continued fraction (x={x}, a={a}, b={b})")


def log_regularized_incomplete_beta(x, a, b, xc=None):
    """Natural log of ``I_x(a, b)``.

    ``xc`` may carry ``1 - x`` computed without cancellation by the caller.
    """
    if xc is None:
        xc = 1.0 - x
    if not (a > 0 and b > 0) or not math.isfinite(a) or not math.isfinite(b):
        raise DomainError(f"shape parameters must be positive, got a={a}, b={b}")
    if not (0.0 <= x <= 1.0) or not (0.0 <= xc <= 1.0):
        raise DomainError(f"x must lie in [0, 1], got {x}")
    if x == 0.0:
        return -math.inf
    if xc == 0.0:
        return 0.0
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log(xc)
    )
    if x < (a + 1.0) / (a + b + 2.0):
        return log_front + math.log(_beta_cf(x, a, b)) - math.log(a)
    other = math.exp(log_front + math.log(_beta_cf(xc, b, a)) - math.log(b))
    return math.log1p(-min(other, 1.0)) if other < 1.0 else -math.inf


def regularized_incomplete_beta(x, a, b):
    x = float(x)
    return math.exp(log_regularized_incomplete_beta(x, float(a), float(b)))


def _check_df(*dfs):
    for df in dfs:
        if not (df > 0) or math.isnan(df):
            raise DomainError(f"degrees of freedom must be positive, got {df}")


def log10_t_two_sided_p(t, df):
    t = float(t)
    df = float(df)
    _check_df(df)
    if math.isnan(t):
        raise DomainError("t is NaN")
    if math.isinf(t):
        return -math.inf
    t2 = t * t
    x = df / (df + t2)
    xc = t2 / (df + t2)
    return log_regularized_incomplete_beta(x, df / 2.0, 0.5, xc) / math.log(10.0)


def t_two_sided_p(t, df):
    """Two-sided p-value ``P(|T| >= |t|)`` for Student's t with ``df``."""
    return 10.0 ** log10_t_two_sided_p(t, df)


def log10_f_sf(f, d1, d2):
    f = float(f)
    d1 = float(d1)
    d2 = float(d2)
    _check_df(d1, d2)
    if not (f >= 0):
        raise DomainError(f"F statistic must be non-negative, got {f}")
    if math.isinf(f):
        return -math.inf
    x = d2 / (d2 + d1 * f)
    xc = d1 * f / (d2 + d1 * f)
    return log_regularized_incomplete_beta(x, d2 / 2.0, d1 / 2.0, xc) / math.log(10.0)


def f_sf(f, d1, d2):
    """Upper tail ``P(F >= f)`` of the F(d1, d2) distribution."""
    return 10.0 ** log10_f_sf(f, d1, d2)


def split_log10(log10_value):
    """(mantissa, exponent) with ``mantissa * 10**exponent == 10**log10_value``."""
    if math.isinf(log10_value):
        return (0.0, 0) if log10_value < 0 else (math.inf, 0)
    exponent = math.floor(log10_value)
    return 10.0 ** (log10_value - exponent), int(exponent)


def t_quantile(p, df, xtol=1e-12, max_iter=200):
    """Quantile of Student's t: returns ``q`` with ``P(T <= q) = p``.

    Found by root-finding on the log two-sided tail, which is monotone in |t|.
    """
    p = float(p)
    df = float(df)
    _check_df(df)
    if not (0.0 < p < 1.0):
        raise DomainError(f"p must lie in (0, 1), got {p}")
    if p == 0.5:
        return 0.0
    tail = 2.0 * min(p, 1.0 - p)
    target = math.log10(tail)

    def g(t):
        return log10_t_two_sided_p(t, df) - target

    hi = 1.0
    for _ in range(2000):
        if g(hi) < 0:
            break
        hi *= 2.0
    else:
        raise NonConvergence(f"could not bracket t quantile for p={p}, df={df}")
    try:
        root = optimize.brentq(g, 0.0, hi, xtol=xtol, rtol=4 * np.finfo(float).eps,
                               maxiter=max_iter)
    except RuntimeError as exc:
        raise NonConvergence(str(exc)) from exc
    return root if p > 0.5 else -root


def chi2_quantile(q, df):
    if q >= 1.0:
        return math.inf
    return float(stats.chi2.ppf(q, df))


# --------------------------------------------------------------------------
# random source


def derive_seed(master_seed, index):
    """Seed for sub-stream ``index``: ``master XOR (index + 1) * FOLD_SEED_CONSTANT``."""
    return (int(master_seed) ^ (((int(index) + 1) * FOLD_SEED_CONSTANT) & _MASK64)) & _MASK64


class RandomSource:
    """Deterministic 64-bit stream (SFC64 seeded through ``SeedSequence``).

    All derived draws are defined here on top of the raw 64-bit words so the
    stream layout does not depend on numpy's distribution code:

    * uniform: ``(word >> 11) * 2**-53`` in [0, 1)
    * normal: Box-Muller on uniform pairs ``(u1, u2)``, radius from ``1 - u1``,
      emitting ``r cos`` then ``r sin``; an odd leftover is kept for the next call
    * integer in ``[0, k)``: ``floor(uniform * k)``
    """

    algorithm_id = "sfc64-seedsequence/boxmuller/v1"

    def __init__(self, seed):
        self.seed = int(seed) & _MASK64
        self._bits = np.random.SFC64(np.random.SeedSequence(self.seed))
        self._spare = None

    @property
    def state(self):
        st = self._bits.state
        return {"seed": self.seed, "words": [int(w) for w in st["state"]["state"]],
                "spare": self._spare, "algorithm_id": self.algorithm_id}

    def raw(self, size):
        return self._bits.random_raw(size)

    def uniform(self, size=None):
        if size is None:
            return float(self.uniform(1)[0])
        words = np.asarray(self.raw(int(np.prod(size))), dtype=np.uint64)
        out = (words >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
        return out.reshape(size)

    def standard_normal(self, size=None):
        if size is None:
            return float(self.standard_normal(1)[0])
        total = int(np.prod(size))
        out = np.empty(total)
        filled = 0
        if self._spare is not None and total > 0:
            out[0] = self._spare
            self._spare = None
            filled = 1
        need = total - filled
        pairs = (need + 1) // 2
        if pairs:
            u = self.uniform(2 * pairs)
            r = np.sqrt(-2.0 * np.log(1.0 - u[0::2]))
            theta = 2.0 * np.pi * u[1::2]
            z = np.empty(2 * pairs)
            z[0::2] = r * np.cos(theta)
            z[1::2] = r * np.sin(theta)
            out[filled:] = z[:need]
            if 2 * pairs > need:
                self._spare = float(z[-1])
        return out.reshape(size)

    def integers(self, low, high, size=None):
        """Integers in the closed range ``[low, high]``."""
        span = high - low + 1
        if span <= 0:
            raise DomainError(f"empty integer range [{low}, {high}]")
        u = self.uniform(size)
        return low + np.floor(np.asarray(u) * span).astype(np.int64)

    def shuffle(self, n):
        """Fisher-Yates permutation of ``0..n-1``."""
        perm = np.arange(n, dtype=np.int64)
        if n < 2:
            return perm
        u = self.uniform(n - 1)
        for step, i in enumerate(range(n - 1, 0, -1)):
            j = int(u[step] * (i + 1))
            perm[i], perm[j] = perm[j], perm[i]
        return perm


def rng_standard_normal(r):
    return r.standard_normal()


def rng_shuffle(r, n):
    if n < 0:
        raise DomainError("n must be non-negative")
    return r.shuffle(n)
