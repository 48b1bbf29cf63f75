"""Ordinary least squares with the regression-statistics / ANOVA / coefficient
tables, plus ridge and lasso variants.

The design matrix is expected to carry the intercept as its first column
(``preprocess.assemble_design`` in ``mlr_numeric`` mode does this).
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, TooFewRows
from .numeric import (
    as_matrix,
    log10_f_sf,
    log10_t_two_sided_p,
    solve_least_squares,
    split_log10,
    t_quantile,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AnovaTable:
    df_regression: int
    df_residual: int
    df_total: int
    ss_regression: float
    ss_residual: float
    ss_total: float
    ms_regression: float
    ms_residual: float
    f_stat: float
    significance_f: float
    log10_significance_f: float

    def to_dict(self):
        mant, expo = split_log10(self.log10_significance_f)
        return {
            "regression": {"df": self.df_regression, "ss": self.ss_regression,
                           "ms": self.ms_regression, "f": self.f_stat,
                           "significance_f": self.significance_f,
                           "log10_significance_f": self.log10_significance_f,
                           "significance_f_mantissa": mant,
                           "significance_f_exponent": expo},
            "residual": {"df": self.df_residual, "ss": self.ss_residual, "ms": self.ms_residual},
            "total": {"df": self.df_total, "ss": self.ss_total},
        }


def anova_table(ss_regression, ss_residual, n, p, ss_total=None):
    """ANOVA block for ``p`` predictors (intercept excluded) and ``n`` rows."""
    df_reg = p
    df_res = n - p - 1
    if df_res <= 0:
        raise TooFewRows(f"need n > p + 1, got n={n}, p={p}")
    if ss_total is None:
        ss_total = ss_regression + ss_residual
    ms_reg = ss_regression / df_reg if df_reg > 0 else math.nan
    ms_res = ss_residual / df_res
    if df_reg == 0:
        f_stat, log10_sig = math.nan, math.nan
    elif ms_res == 0:
        f_stat, log10_sig = math.inf, -math.inf
    else:
        f_stat = ms_reg / ms_res
        log10_sig = log10_f_sf(f_stat, df_reg, df_res)
    sig = 10.0 ** log10_sig if not math.isnan(log10_sig) else math.nan
    return AnovaTable(df_reg, df_res, n - 1, float(ss_regression), float(ss_residual),
                      float(ss_total), ms_reg, ms_res, f_stat, sig, log10_sig)


@dataclass(frozen=True)
class RegressionStatistics:
    multiple_r: float
    r_square: float
    adjusted_r_square: float
    standard_error: float
    observations: int


def regression_statistics(anova, n, p):
    r2 = anova.ss_regression / anova.ss_total
    adj = 1.0 - (1.0 - r2) * (n - 1) / (n - p - 1)
    return RegressionStatistics(math.sqrt(r2), r2, adj, math.sqrt(anova.ms_residual), n)


@dataclass(frozen=True, eq=False)
class CoefficientInference:
    t_stats: np.ndarray
    p_values: np.ndarray
    log10_p_values: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    t_critical: float


def coefficient_inference(coefficients, standard_errors, df_residual, confidence=0.95):
    beta = np.asarray(coefficients, dtype=float)
    se = np.asarray(standard_errors, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = beta / se
    log10p = np.array([log10_t_two_sided_p(v, df_residual) if not math.isnan(v) else math.nan
                       for v in t])
    tq = t_quantile((1.0 + confidence) / 2.0, df_residual)
    return CoefficientInference(t, 10.0 ** log10p, log10p, beta - tq * se, beta + tq * se, tq)


@dataclass(frozen=True, eq=False)
class OlsFit:
    names: tuple
    coefficients: np.ndarray
    standard_errors: np.ndarray
    t_stats: np.ndarray
    p_values: np.ndarray
    log10_p_values: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    confidence: float
    anova: AnovaTable
    r_square: float
    adjusted_r_square: float
    multiple_r: float
    standard_error_of_estimate: float
    n: int
    p: int

    def predict(self, X):
        return predict_linear(self.coefficients, X)

    def to_dict(self):
        level = f"{100 * self.confidence:g}%"
        rows = []
        for j, name in enumerate(self.names):
            mant, expo = split_log10(self.log10_p_values[j])
            rows.append({
                "name": name,
                "coefficient": float(self.coefficients[j]),
                "standard_error": float(self.standard_errors[j]),
                "t_stat": float(self.t_stats[j]),
                "p_value": float(self.p_values[j]),
                "log10_p_value": float(self.log10_p_values[j]),
                "p_value_mantissa": mant,
                "p_value_exponent": expo,
                f"lower_{level}": float(self.ci_low[j]),
                f"upper_{level}": float(self.ci_high[j]),
            })
        return {
            "regression_statistics": {
                "multiple_r": self.multiple_r,
                "r_square": self.r_square,
                "adjusted_r_square": self.adjusted_r_square,
                "standard_error": self.standard_error_of_estimate,
                "observations": self.n,
            },
            "anova": self.anova.to_dict(),
            "coefficients": rows,
            "confidence": self.confidence,
            "predictors": self.p,
        }

    def write_csv_tables(self, directory):
        """``regression_statistics.csv``, ``anova.csv`` and ``coefficients.csv``."""
        directory = Path(directory)
        d = self.to_dict()
        with open(directory / "regression_statistics.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["statistic", "value"])
            for label, key in [("Multiple R", "multiple_r"), ("R Square", "r_square"),
                               ("Adjusted R Square", "adjusted_r_square"),
                               ("Standard Error", "standard_error"),
                               ("Observations", "observations")]:
                w.writerow([label, repr(d["regression_statistics"][key])])
        a = self.anova
        with open(directory / "anova.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["source", "df", "SS", "MS", "F", "Significance F"])
            w.writerow(["Regression", a.df_regression, repr(a.ss_regression), repr(a.ms_regression),
                        repr(a.f_stat), _format_p(a.significance_f, a.log10_significance_f)])
            w.writerow(["Residual", a.df_residual, repr(a.ss_residual), repr(a.ms_residual), "", ""])
            w.writerow(["Total", a.df_total, repr(a.ss_total), "", "", ""])
        pct = f"{100 * self.confidence:g}%"
        with open(directory / "coefficients.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["", "Coefficient", "Standard Error", "t Stat", "P-value",
                        f"Lower {pct}", f"Upper {pct}"])
            for j, name in enumerate(self.names):
                w.writerow([name, repr(float(self.coefficients[j])),
                            repr(float(self.standard_errors[j])), repr(float(self.t_stats[j])),
                            _format_p(self.p_values[j], self.log10_p_values[j]),
                            repr(float(self.ci_low[j])), repr(float(self.ci_high[j]))])


def _format_p(p, log10p):
    if p > 0 or math.isnan(p):
        return repr(float(p))
    mant, expo = split_log10(log10p)
    return f"{mant!r}e{expo:+04d}"


def fit_ols(X, y, confidence=0.95, names=None):
    X = as_matrix(X)
    y = np.asarray(y, dtype=float)
    n, cols = X.shape
    p = cols - 1
    if n <= p + 1:
        raise TooFewRows(f"OLS needs n > p + 1, got n={n}, p={p}")
    sol = solve_least_squares(X, y)
    fitted = X @ sol.beta
    y_bar = y.mean()
    ss_total = float(np.sum((y - y_bar) ** 2))
    ss_reg = float(np.sum((fitted - y_bar) ** 2))
    anova = anova_table(ss_reg, sol.residual_ss, n, p, ss_total)
    stats = regression_statistics(anova, n, p)
    se = np.sqrt(anova.ms_residual * sol.xtx_inverse_diag)
    inf = coefficient_inference(sol.beta, se, anova.df_residual, confidence)
    if names is None:
        names = ("Intercept",) + tuple(f"x{j}" for j in range(1, cols))
    return OlsFit(tuple(names), sol.beta, se, inf.t_stats, inf.p_values, inf.log10_p_values,
                  inf.ci_low, inf.ci_high, confidence, anova, stats.r_square,
                  stats.adjusted_r_square, stats.multiple_r, stats.standard_error, n, p)


def predict_linear(coefficients, X):
    beta = np.asarray(coefficients, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != beta.shape[0]:
        raise DimensionMismatch(f"X has shape {X.shape}, expected (*, {beta.shape[0]})")
    return X @ beta


# --------------------------------------------------------------------------
# penalised variants


@dataclass(frozen=True, eq=False)
class RegularizedFit:
    coefficients: np.ndarray
    lam: float
    kind: str
    iterations: int = 0
    converged: bool = True
    objective_history: tuple = ()

    def predict(self, X):
        return predict_linear(self.coefficients, X)


def _penalty_mask(cols, intercept):
    mask = np.ones(cols, dtype=bool)
    if intercept:
        mask[0] = False
    return mask


def fit_ridge(X, y, lam, intercept=True):
    """argmin ||X b - y||^2 + lam * ||b[penalised]||^2, intercept unpenalised."""
    X = as_matrix(X)
    y = np.asarray(y, dtype=float)
    if y.shape != (X.shape[0],):
        raise DimensionMismatch(f"y has shape {y.shape}, expected ({X.shape[0]},)")
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    mask = _penalty_mask(X.shape[1], intercept)
    if lam == 0:
        beta = solve_least_squares(X, y).beta
    else:
        pen = np.diag(mask.astype(float) * math.sqrt(lam))[mask]
        Xa = np.vstack([X, pen])
        ya = np.concatenate([y, np.zeros(pen.shape[0])])
        beta = solve_least_squares(Xa, ya).beta
    return RegularizedFit(beta, float(lam), "ridge")


def lasso_objective(X, y, beta, lam, intercept=True):
    r = y - X @ beta
    mask = _penalty_mask(X.shape[1], intercept)
    return float(r @ r + lam * np.sum(np.abs(beta[mask])))


def fit_lasso(X, y, lam, tol=1e-8, max_iter=10_000, intercept=True):
    """Cyclic coordinate descent on RSS + lam * ||b[penalised]||_1.

    No 1/(2n) scaling: the soft-threshold level per coordinate is ``lam / 2``.
    A fit that hits ``max_iter`` is returned with ``converged=False``.
    """
    X = as_matrix(X)
    y = np.asarray(y, dtype=float)
    n, cols = X.shape
    if y.shape != (n,):
        raise DimensionMismatch(f"y has shape {y.shape}, expected ({n},)")
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    mask = _penalty_mask(cols, intercept)
    col_sq = np.sum(X * X, axis=0)
    beta = np.zeros(cols)
    r = y.copy()
    history = [lasso_objective(X, y, beta, lam, intercept)]
    half = lam / 2.0
    for sweep in range(1, max_iter + 1):
        max_change = 0.0
        for j in range(cols):
            if col_sq[j] == 0.0:
                continue
            xj = X[:, j]
            old = beta[j]
            rho = xj @ r + col_sq[j] * old
            if mask[j]:
                new = math.copysign(max(abs(rho) - half, 0.0), rho) / col_sq[j]
            else:
                new = rho / col_sq[j]
            if new != old:
                r += xj * (old - new)
                beta[j] = new
                max_change = max(max_change, abs(new - old))
        history.append(lasso_objective(X, y, beta, lam, intercept))
        if max_change < tol:
            return RegularizedFit(beta, float(lam), "lasso", sweep, True, tuple(history))
    log.warning("lasso did not converge in %d sweeps (lambda=%g)", max_iter, lam)
    return RegularizedFit(beta, float(lam), "lasso", max_iter, False, tuple(history))
