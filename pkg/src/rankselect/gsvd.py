"""Generalized SVD of a coefficient matrix under the metric ``M = X'X``.

With ``M = N N`` (N the symmetric PSD square root), the decomposition
``B0 = U D V'`` satisfies ``U' M U = I``, ``V' V = I`` and
``N B0 = N U D V'``; it is obtained from the ordinary SVD of ``N B0``.
Truncating it to the k largest generalized singular values gives the best
rank-k approximation of ``B0`` in the seminorm ``||X B||_F``.
"""

from dataclasses import dataclass

import numpy as np

from .linalg import EPS, as_matrix, numeric_rank, sym_eigendecomp, thin_svd


class NotPSDError(ValueError):
    pass


@dataclass(frozen=True)
class MetricGsvd:
    u: np.ndarray
    d: np.ndarray
    v: np.ndarray
    metric: np.ndarray

    @property
    def rank(self):
        return self.d.size


def metric_sqrt(m):
    """Symmetric PSD square root ``N`` with ``N @ N = m``.

    Uses the eigendecomposition, so rank-deficient metrics are fine.
    Eigenvalues below ``-1e-10 * max(1, lambda_max)`` raise :class:`NotPSDError`;
    smaller negative values are rounding noise and are clipped to zero.
    """
    m = as_matrix(m, "m")
    lam, vecs = sym_eigendecomp(m)
    scale = max(1.0, abs(lam[0])) if lam.size else 1.0
    if lam.size and lam[-1] < -1e-10 * scale:
        raise NotPSDError(f"metric has negative eigenvalue {lam[-1]:.3e}")
    root = np.sqrt(np.clip(lam, 0.0, None))
    return (vecs * root) @ vecs.T


def gsvd_metric(b0, m, tol=None):
    """GSVD of `b0` (p x n) under the metric `m` (p x p).

    Generalized singular values are the nonzero singular values of ``N b0``;
    those at or below ``tol * d1`` are dropped. ``U`` is taken as
    ``b0 V D^{-1}``, which satisfies ``N U = Ubar`` for the SVD
    ``Ubar D V'`` of ``N b0``.
    """
    b0 = as_matrix(b0, "b0")
    m = as_matrix(m, "m")
    if m.shape != (b0.shape[0], b0.shape[0]):
        raise ValueError(f"metric shape {m.shape} does not match b0 rows {b0.shape[0]}")
    n_root = metric_sqrt(m)
    svd = thin_svd(n_root @ b0)
    if tol is None:
        tol = max(b0.shape) * EPS
    r = numeric_rank(svd.d, tol)
    d = svd.d[:r]
    v = svd.vt[:r].T
    u = (b0 @ v) / d if r else np.zeros((b0.shape[0], 0))
    return MetricGsvd(u=u, d=d, v=v, metric=m)


def truncate_gsvd(g, k):
    """``U_k D_k V_k'`` from the k leading generalized singular triplets."""
    if not 0 <= k <= g.rank:
        raise ValueError(f"k={k} outside [0, {g.rank}]")
    return (g.u[:, :k] * g.d[:k]) @ g.v[:, :k].T
