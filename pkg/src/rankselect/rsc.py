"""Rank Selection Criterion (RSC) for multivariate regression ``Y = X A + E``.

The estimator minimizes ``||Y - X B||_F^2 + mu * rank(B)``. Its rank is the
number of eigenvalues of ``Y' P Y`` at or above ``mu`` and the fit is the
reduced-rank least squares estimator of that rank.
"""

import math
from dataclasses import dataclass

import numpy as np

from .linalg import EPS, as_matrix, design_summary, sym_eigendecomp


class DegenerateDesignError(ValueError):
    """Raised when the design leaves no residual degrees of freedom."""


@dataclass(frozen=True)
class RankKFit:
    """Reduced-rank least squares fit ``b_k = w_k @ g_k`` of rank at most k."""

    k: int
    b_k: np.ndarray
    w_k: np.ndarray
    g_k: np.ndarray
    fitted: np.ndarray


@dataclass(frozen=True)
class RscFit:
    coefficients: np.ndarray
    selected_rank: int
    mu: float
    eigenvalues: np.ndarray
    objective: float
    fit: RankKFit


@dataclass(frozen=True)
class PenaltyConfig:
    """Constants of the theoretical penalties.

    ``theta`` and ``xi`` inflate the noise level, ``delta`` is the gap
    parameter, ``constant`` multiplies ``S^2 (n + q)`` in the adaptive rule.
    """

    theta: float = 1.0
    xi: float = 1.0
    delta: float = 0.5
    constant: float = 2.0

    def __post_init__(self):
        if self.theta <= 0:
            raise ValueError("theta must be positive")
        if self.xi < 0:
            raise ValueError("xi must be non-negative")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.constant <= 0:
            raise ValueError("constant must be positive")


def _check_xy(x, y):
    x = as_matrix(x, "x")
    y = as_matrix(y, "y")
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"x has {x.shape[0]} rows but y has {y.shape[0]}")
    return x, y


def least_squares(design, x, y):
    """Minimum-norm least squares coefficients ``M^- X' Y`` (p x n)."""
    x, y = _check_xy(x, y)
    if design.gram.shape[0] != x.shape[1]:
        raise ValueError("design summary does not belong to x")
    return design.pinv_gram @ (x.T @ y)


def projected_spectrum(design, y):
    """Eigenvalues and eigenvectors of ``Y' P Y``, nonincreasing.

    Eigenvalues past the rank of the design, and those below the rounding
    level ``n * eps * lambda_1``, are set to exactly zero; negative rounding
    residue is clipped.
    """
    y = as_matrix(y, "y")
    py = design.projector @ y
    lam, vecs = sym_eigendecomp(py.T @ py)
    lam = np.clip(lam, 0.0, None)
    if lam.size:
        lam[design.rank_q:] = 0.0
        lam[lam <= 10 * y.shape[1] * EPS * lam[0]] = 0.0
    return lam, vecs


def fit_from_spectrum(x, b_hat, vecs, k):
    p, n = b_hat.shape
    g_k = vecs[:, :k].T
    w_k = b_hat @ vecs[:, :k]
    b_k = w_k @ g_k if k else np.zeros((p, n))
    return RankKFit(k=k, b_k=b_k, w_k=w_k, g_k=g_k, fitted=x @ b_k)


def restricted_rank(design, x, y, k):
    """Least squares fit constrained to rank at most `k`.

    Uses the eigenvectors ``V`` of ``Y' P Y``: ``W = B_hat V``, ``G = V'`` and
    ``B_k = W[:, :k] G[:k]``. ``k = 0`` gives the zero fit.
    """
    x, y = _check_xy(x, y)
    n = y.shape[1]
    if not 0 <= k <= min(n, x.shape[1]):
        raise ValueError(f"k={k} outside [0, min(n, p)={min(n, x.shape[1])}]")
    b_hat = least_squares(design, x, y)
    _, vecs = projected_spectrum(design, y)
    return fit_from_spectrum(x, b_hat, vecs, k)


def select_rank(eigenvalues, mu):
    """Number of eigenvalues ``>= mu`` (ties are selected)."""
    lam = np.asarray(eigenvalues, dtype=float)
    return int(np.sum(lam >= mu))


def rsc_fit(x, y, mu, design=None):
    """Fit the RSC estimator with penalty ``mu`` per unit of rank.

    Parameters
    ----------
    x : array_like (m, p)
    y : array_like (m, n)
    mu : float
        Positive penalty, in squared units of ``y``.
    design : DesignSummary, optional
        Reused when fitting many responses against the same design.

    Returns
    -------
    RscFit
    """
    x, y = _check_xy(x, y)
    if not mu > 0:
        raise ValueError("mu must be positive")
    if design is None:
        design = design_summary(x)
    lam, vecs = projected_spectrum(design, y)
    k_hat = select_rank(lam, mu)
    k_hat = min(k_hat, x.shape[1])
    b_hat = least_squares(design, x, y)
    fit = fit_from_spectrum(x, b_hat, vecs, k_hat)
    resid = y - fit.fitted
    objective = float(np.sum(resid**2) + mu * k_hat)
    return RscFit(
        coefficients=fit.b_k,
        selected_rank=k_hat,
        mu=float(mu),
        eigenvalues=lam,
        objective=objective,
        fit=fit,
    )


def noise_variance(design, y):
    """Unbiased estimate ``S^2 = ||Y - P Y||_F^2 / (n (m - q))`` of sigma^2."""
    y = as_matrix(y, "y")
    m, n = y.shape
    q = design.rank_q
    if m <= q:
        raise DegenerateDesignError(f"S^2 needs m > rank(X); got m={m}, q={q}")
    resid = y - design.projector @ y
    return float(np.sum(resid**2) / (n * (m - q)))


def adaptive_mu(s2, n, q, constant=2.0):
    """``constant * s2 * (n + q)``; the default constant 2 gives ``mu_adapt``."""
    if s2 < 0:
        raise ValueError("s2 must be non-negative")
    if constant <= 0:
        raise ValueError("constant must be positive")
    return float(constant * s2 * (n + q))


def theoretical_mu(sigma, n, q, theta=1.0, delta=1.0):
    """``(1 + theta)^2 sigma^2 (sqrt(n) + sqrt(q))^2 / delta^2``."""
    return float((1 + theta) ** 2 * sigma**2 * (math.sqrt(n) + math.sqrt(q)) ** 2 / delta**2)


def oracle_mu(sigma, n, q, theta=1.0, xi=1.0):
    """Penalty per unit rank ``(1 + theta)(1 + xi)^2 (sqrt(n) + sqrt(q))^2 sigma^2``."""
    return float((1 + theta) * (1 + xi) ** 2 * (math.sqrt(n) + math.sqrt(q)) ** 2 * sigma**2)


def adaptive_penalty_mu(s2, n, q, theta=1.0, xi=1.0, delta=0.5):
    """Data-driven version of :func:`oracle_mu` with ``S^2 / (1 - delta)`` for sigma^2."""
    return float(
        (1 + theta) / (1 - delta) * (1 + xi) ** 2 * (math.sqrt(n) + math.sqrt(q)) ** 2 * s2
    )


def effective_rank(signal_singular_values, mu, delta):
    """Index s with ``d_s > (1+delta) sqrt(mu)`` and ``d_{s+1} < (1-delta) sqrt(mu)``.

    ``d_{s+1}`` is taken as 0 past the end of the vector and ``d_0`` as
    infinity, so ``s = 0`` is returned for a signal entirely below the noise
    level. Both inequalities are strict. Returns ``None`` when no index
    satisfies them.
    """
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    if not mu > 0:
        raise ValueError("mu must be positive")
    d = np.asarray(signal_singular_values, dtype=float)
    root = math.sqrt(mu)
    upper = (1 + delta) * root
    lower = (1 - delta) * root
    padded = np.concatenate([[np.inf], d, [0.0]])
    for s in range(d.size + 1):
        if padded[s] > upper and padded[s + 1] < lower:
            return s
    return None


@dataclass(frozen=True)
class PathPoint:
    mu: float
    rank: int
    fit_error: float | None = None
    validation_error: float | None = None


def solution_path(x, y, mu_grid, a_true=None, validation=None, design=None):
    """RSC fits along an increasing grid of penalties.

    Fits only change when ``mu`` crosses an eigenvalue of ``Y' P Y``, so one
    fit per distinct selected rank is computed and shared.

    Parameters
    ----------
    mu_grid : array_like
        Positive, increasing penalties.
    a_true : array_like, optional
        When given, ``||X A_hat - X A||_F^2`` is reported for each point.
    validation : tuple (x_val, y_val), optional
        When given, the mean squared prediction error on it is reported.

    Returns
    -------
    list of PathPoint
    """
    x, y = _check_xy(x, y)
    grid = np.asarray(mu_grid, dtype=float)
    if grid.size == 0 or np.any(grid <= 0):
        raise ValueError("mu grid must be nonempty and positive")
    if np.any(np.diff(grid) < 0):
        raise ValueError("mu grid must be increasing")
    if design is None:
        design = design_summary(x)
    lam, vecs = projected_spectrum(design, y)
    b_hat = least_squares(design, x, y)
    xa = None if a_true is None else x @ as_matrix(a_true, "a_true")
    cache = {}
    points = []
    for mu in grid:
        k = min(select_rank(lam, mu), x.shape[1])
        if k not in cache:
            fit = fit_from_spectrum(x, b_hat, vecs, k)
            err = None if xa is None else float(np.sum((fit.fitted - xa) ** 2))
            val = None
            if validation is not None:
                xv, yv = validation
                val = float(np.mean((yv - xv @ fit.b_k) ** 2))
            cache[k] = (err, val)
        err, val = cache[k]
        points.append(PathPoint(mu=float(mu), rank=k, fit_error=err, validation_error=val))
    return points


def rank_breakpoints(x, y, design=None):
    """Positive eigenvalues of ``Y' P Y``: the penalties where the RSC rank changes."""
    x, y = _check_xy(x, y)
    if design is None:
        design = design_summary(x)
    lam, _ = projected_spectrum(design, y)
    return lam[lam > 0]
