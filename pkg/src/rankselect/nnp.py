"""Nuclear-norm penalized least squares and its rank-calibrated variant.

``nnp_fit`` minimizes ``||Y - X B||_F^2 + 2 tau ||B||_*`` with a monotone
accelerated proximal gradient method (FISTA with function-value restart).
The minimizer lies in the row space of X, so the iteration runs on the
coordinates ``C = V_q' B`` of that subspace, where the design acts as the
diagonal of its nonzero singular values.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import as_matrix, design_summary, singular_values
from .rsc import restricted_rank

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverOptions:
    max_iterations: int = 5000
    rel_objective_tol: float = 1e-9
    kkt_tol_factor: float = 1e-4
    step_size: float | None = None

    def __post_init__(self):
        if self.max_iterations <= 0 or self.rel_objective_tol <= 0 or self.kkt_tol_factor <= 0:
            raise ValueError("solver options must be positive")
        if self.step_size is not None and self.step_size <= 0:
            raise ValueError("step_size must be positive")


@dataclass(frozen=True)
class NnpFit:
    coefficients: np.ndarray
    tau: float
    iterations: int
    converged: bool
    objective: float
    kkt_residual: float
    rank: int
    objective_trace: np.ndarray = field(repr=False)


def svt(a, threshold):
    """Singular value soft-thresholding ``U diag((d - threshold)_+) V'``.

    This is the proximal map of ``threshold * ||.||_*``.
    """
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    a = as_matrix(a, "a")
    if threshold == 0:
        return a.copy()
    out, _ = _svt(a, threshold)
    return out


def _svt(a, threshold):
    u, d, vt = np.linalg.svd(a, full_matrices=False)
    shrunk = d - threshold
    keep = shrunk > 0
    out = (u[:, keep] * shrunk[keep]) @ vt[keep]
    return out, shrunk[keep]


def _kkt_from_grad(b, grad_term, tau):
    # grad_term = X'(Y - X B); optimality: d1(G) <= tau and U'GV = tau I on supp(B)
    d1 = singular_values(grad_term)[0] if grad_term.size else 0.0
    excess = max(d1 - tau, 0.0)
    if b.size and np.any(b):
        u, d, vt = np.linalg.svd(b, full_matrices=False)
        pos = d > 1e-12 * d[0]
        align = u[:, pos].T @ grad_term @ vt[pos].T
        excess = max(excess, float(np.max(np.abs(align - tau * np.eye(align.shape[0])))))
    return excess / tau


def kkt_residual(x, y, b_tilde, tau):
    """Scale-free optimality violation of `b_tilde` for the NNP objective.

    With ``G = X'(Y - X B)``, returns
    ``max((d1(G) - tau)_+, max|U'GV - tau I|) / tau`` where ``U, V`` span the
    positive singular directions of ``B``. It is zero exactly at a minimizer.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    x = as_matrix(x, "x")
    y = as_matrix(y, "y")
    b = as_matrix(b_tilde, "b_tilde")
    return _kkt_from_grad(b, x.T @ (y - x @ b), tau)


def nnp_objective(x, y, b, tau):
    return float(np.sum((y - x @ b) ** 2) + 2 * tau * np.sum(singular_values(b)))


def nnp_fit(x, y, tau, opts=None, design=None, warm_start=None):
    """Minimize ``||Y - X B||_F^2 + 2 tau ||B||_*`` over p x n matrices B.

    Parameters
    ----------
    x : array_like (m, p)
    y : array_like (m, n)
    tau : float
        Non-negative penalty level. ``tau = 0`` returns the minimum-norm
        least squares solution without iterating.
    opts : SolverOptions, optional
    design : DesignSummary, optional
    warm_start : array_like (p, n), optional
        Starting point; defaults to zero.

    Returns
    -------
    NnpFit
        ``converged`` is set only when the objective has stalled (relative
        change below ``opts.rel_objective_tol``, or no decrease at all) *and*
        the KKT residual is within ``opts.kkt_tol_factor``.
        Otherwise a warning is logged.
    """
    x = as_matrix(x, "x")
    y = as_matrix(y, "y")
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"x has {x.shape[0]} rows but y has {y.shape[0]}")
    if tau < 0:
        raise ValueError("tau must be non-negative")
    opts = opts or SolverOptions()
    if design is None:
        design = design_summary(x)
    vq, uq, dq = design.row_basis, design.col_basis, design.singular_values
    p, n = x.shape[1], y.shape[1]
    q = dq.size
    const = float(np.sum((y - design.projector @ y) ** 2))

    if q == 0:
        zero = np.zeros((p, n))
        return NnpFit(zero, float(tau), 0, True, const, 0.0, 0, np.array([const]))

    z = uq.T @ y
    dz = dq[:, None] * z

    def objective(c, nuc):
        return const + float(np.sum((z - dq[:, None] * c) ** 2)) + 2 * tau * nuc

    if tau == 0:
        c = z / dq[:, None]
        obj = objective(c, 0.0)
        b = vq @ c
        rank = int(np.sum(singular_values(b) > 1e-12 * max(1.0, np.abs(b).max())))
        return NnpFit(b, 0.0, 0, True, obj, 0.0, rank, np.array([obj]))

    eta = opts.step_size if opts.step_size is not None else 1.0 / (2 * dq[0] ** 2)
    thresh = 2 * tau * eta
    d2 = (dq**2)[:, None]

    if warm_start is None:
        c = np.zeros((q, n))
        nuc = 0.0
    else:
        c, nuc_vals = _svt(vq.T @ as_matrix(warm_start, "warm_start"), 0.0)
        nuc = float(np.sum(nuc_vals))
    f_c = objective(c, nuc)
    c_prev = c
    y_pt = c
    t = 1.0
    restarted = True
    trace = [f_c]
    converged = False
    kkt = math.inf
    rank = int(np.linalg.matrix_rank(c)) if np.any(c) else 0
    it = 0
    for it in range(1, opts.max_iterations + 1):
        grad = 2 * (d2 * y_pt - dz)
        cand, shrunk = _svt(y_pt - eta * grad, thresh)
        f_cand = objective(cand, float(np.sum(shrunk)))
        t_next = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
        if f_cand <= f_c:
            c_prev, c = c, cand
            f_old, f_c = f_c, f_cand
            rank = shrunk.size
            y_pt = c + ((t - 1) / t_next) * (c - c_prev)
            t = t_next
            restarted = False
            trace.append(f_c)
            if abs(f_old - f_c) <= opts.rel_objective_tol * max(1.0, abs(f_c)):
                grad_term = dq[:, None] * (z - dq[:, None] * c)
                kkt = _kkt_from_grad(c, grad_term, tau)
                if kkt <= opts.kkt_tol_factor:
                    converged = True
                    break
        elif restarted:
            # a plain prox-gradient step no longer decreases: rounding floor
            trace.append(f_c)
            break
        else:
            # momentum overshot: restart from the current iterate
            t = 1.0
            y_pt = c
            restarted = True
            trace.append(f_c)
    if not converged:
        grad_term = dq[:, None] * (z - dq[:, None] * c)
        kkt = _kkt_from_grad(c, grad_term, tau)
        converged = kkt <= opts.kkt_tol_factor and it < opts.max_iterations
        if not converged:
            log.warning(
                "nnp_fit stopped after %d iterations without convergence "
                "(tau=%.4g, kkt residual %.3e)", it, tau, kkt,
            )
    return NnpFit(
        coefficients=vq @ c,
        tau=float(tau),
        iterations=it,
        converged=converged,
        objective=f_c,
        kkt_residual=float(kkt),
        rank=rank,
        objective_trace=np.asarray(trace),
    )


def calibrated_rank(gram, a_tilde, tau):
    """``max{k : d_k(M A_tilde) > 2 tau}``; zero when no singular value qualifies."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    d = singular_values(as_matrix(gram, "gram") @ as_matrix(a_tilde, "a_tilde"))
    return int(np.sum(d > 2 * tau))


def nnp_calibrated(x, y, tau, opts=None, design=None, nnp=None):
    """Reduced-rank least squares at the rank selected by :func:`calibrated_rank`.

    A precomputed ``nnp`` fit for the same ``tau`` may be supplied to avoid
    solving the convex problem twice.
    """
    x = as_matrix(x, "x")
    y = as_matrix(y, "y")
    if design is None:
        design = design_summary(x)
    if nnp is None:
        nnp = nnp_fit(x, y, tau, opts, design=design)
    k = calibrated_rank(design.gram, nnp.coefficients, tau)
    k = min(k, y.shape[1], x.shape[1])
    return restricted_rank(design, x, y, k)


def tau_theoretical(sigma, d1_x, n, q, theta):
    """``(1 + theta) d1(X) sigma (sqrt(n) + sqrt(q))``."""
    if sigma <= 0 or d1_x <= 0 or n <= 0 or q <= 0 or theta < 0:
        raise ValueError("tau_theoretical needs positive inputs")
    return float((1 + theta) * d1_x * sigma * (math.sqrt(n) + math.sqrt(q)))


def rank_recovery_premise(gram, a, tau, r=None):
    """Signal margin ``d_r(M A) / (4 tau)``; values above 1 meet the rank-recovery premise."""
    d = singular_values(as_matrix(gram, "gram") @ as_matrix(a, "a"))
    if r is None:
        r = int(np.linalg.matrix_rank(as_matrix(a, "a")))
    if r == 0:
        return math.inf
    return float(d[r - 1] / (4 * tau))
