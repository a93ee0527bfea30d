"""Weighted least-squares fits for slopes and power-law exponents.

All fits are linear in log-transformed variables and report parameter
covariance, R^2, and (when point errors are supplied) chi^2 per degree of
freedom.  Exponent conventions:

    variance vs ln r      slope s      ->  stiffness K = pi^2 s
    |c(r)| ~ r^(-2 kappa) log-log slope -2 kappa
    E(r) ~ r^(-eta)       log-log slope -eta
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class FitResult:
    """Linear fit y = X beta with named parameters."""

    params: np.ndarray
    cov: np.ndarray
    names: tuple
    window: tuple
    r2: float
    chi2_dof: float  # nan when no point errors were given
    n: int
    derived: dict = field(default_factory=dict)

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))

    def param(self, name: str) -> float:
        return float(self.params[self.names.index(name)])

    def error(self, name: str) -> float:
        return float(self.stderr[self.names.index(name)])


def _linear_fit(X, y, sigma, names, window) -> FitResult:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n < max(p + 2, 4):
        raise ValueError("need at least %d points in the fit window" % max(p + 2, 4))
    if sigma is not None:
        w = 1.0 / np.asarray(sigma, dtype=float) ** 2
    else:
        w = np.ones(n)
    W = np.diag(w)
    G = X.T @ W @ X
    cov = np.linalg.inv(G)
    beta = cov @ (X.T @ (w * y))
    resid = y - X @ beta
    chi2 = float(np.sum(w * resid ** 2))
    if sigma is not None:
        chi2_dof = chi2 / (n - p)
    else:
        # scale covariance by the residual variance estimate
        s2 = chi2 / (n - p)
        cov = cov * s2
        chi2_dof = float("nan")
    ybar = np.average(y, weights=w)
    ss_tot = float(np.sum(w * (y - ybar) ** 2))
    r2 = 1.0 - chi2 / ss_tot if ss_tot > 0 else 1.0
    return FitResult(beta, cov, names, window, r2, chi2_dof, n)


def _apply_window(r, window, L=None):
    r = np.asarray(r, dtype=float)
    if window is None:
        lo = 8.0
        hi = (L / 4.0) if L is not None else float(np.max(r))
    else:
        lo, hi = window
    keep = (r >= lo) & (r <= hi)
    return keep, (float(lo), float(hi))


def fit_log_slope(r, values, errors=None, window=None, L=None) -> FitResult:
    """values ~ intercept + slope ln r; derived stiffness K = pi^2 slope.

    Default window drops r < 8 and, when L is given, r > L/4.
    """
    keep, win = _apply_window(r, window, L)
    r = np.asarray(r, dtype=float)[keep]
    y = np.asarray(values, dtype=float)[keep]
    sig = np.asarray(errors, dtype=float)[keep] if errors is not None else None
    X = np.stack([np.ones_like(r), np.log(r)], axis=1)
    fit = _linear_fit(X, y, sig, ("intercept", "slope"), win)
    fit.derived["K"] = math.pi ** 2 * fit.param("slope")
    fit.derived["K_err"] = math.pi ** 2 * fit.error("slope")
    return fit


def fit_power_exponent(r, values, errors=None, window=None, L=None,
                       strip_oscillation: bool = False) -> FitResult:
    """log |values| ~ intercept - p log r; derived kappa = p / 2.

    With strip_oscillation the values are multiplied by (-1)^r first; the
    stripped series must be single-signed inside the window.
    """
    keep, win = _apply_window(r, window, L)
    r = np.asarray(r, dtype=float)[keep]
    v = np.asarray(values, dtype=float)[keep]
    if strip_oscillation:
        v = v * (-1.0) ** np.asarray(r, dtype=int)
    if np.any(v == 0):
        raise ValueError("zero values inside the fit window")
    if not (np.all(v > 0) or np.all(v < 0)):
        raise ValueError("series changes sign inside the window; "
                         "oscillation stripping failed")
    sig = None
    if errors is not None:
        sig = np.asarray(errors, dtype=float)[keep] / np.abs(v)
    X = np.stack([np.ones_like(r), np.log(r)], axis=1)
    fit = _linear_fit(X, np.log(np.abs(v)), sig, ("intercept", "slope"), win)
    fit.derived["exponent"] = -fit.param("slope")
    fit.derived["exponent_err"] = fit.error("slope")
    fit.derived["kappa"] = -fit.param("slope") / 2.0
    fit.derived["kappa_err"] = fit.error("slope") / 2.0
    return fit


def electric_exponent(r, values, errors=None, window=None, L=None) -> FitResult:
    """Decay exponent eta of a positive correlator: values ~ C r^-eta."""
    fit = fit_power_exponent(r, values, errors, window, L)
    fit.derived["eta"] = fit.derived.pop("exponent")
    fit.derived["eta_err"] = fit.derived.pop("exponent_err")
    fit.derived.pop("kappa")
    fit.derived.pop("kappa_err")
    return fit
