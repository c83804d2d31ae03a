"""Dense linear-algebra primitives shared by the estimators.

Matrices are plain 2-D ``float64`` numpy arrays. Every public function
rejects non-finite input before doing any work.
"""

from dataclasses import dataclass

import numpy as np

EPS = np.finfo(np.float64).eps


class NumericalError(RuntimeError):
    """A decomposition or iterative method failed to produce a usable result."""


def as_matrix(a, name="matrix"):
    """Return `a` as a finite 2-D float64 array, raising ``ValueError`` otherwise."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf entries")
    return arr


def _fix_signs(vectors):
    # first component with non-negligible magnitude made positive, column-wise
    if vectors.size == 0:
        return np.ones(vectors.shape[1])
    mags = np.abs(vectors)
    cut = 1e-12 * np.maximum(mags.max(axis=0), np.finfo(float).tiny)
    idx = np.argmax(mags > cut, axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return signs


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD ``a = u @ diag(d) @ vt`` with nonincreasing ``d``."""

    u: np.ndarray
    d: np.ndarray
    vt: np.ndarray

    def reconstruct(self):
        return (self.u * self.d) @ self.vt


def thin_svd(a):
    """Thin singular value decomposition with a deterministic sign convention.

    Each left singular vector has its first non-negligible entry positive;
    the matching right singular vector is flipped with it.

    Parameters
    ----------
    a : array_like, shape (m, n)

    Returns
    -------
    SvdFactors
        ``u`` is (m, k), ``d`` has length k, ``vt`` is (k, n), k = min(m, n).
    """
    a = as_matrix(a, "a")
    try:
        u, d, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc
    signs = _fix_signs(u)
    return SvdFactors(u * signs, d, vt * signs[:, None])


def singular_values(a):
    return np.linalg.svd(as_matrix(a, "a"), compute_uv=False)


def sym_eigendecomp(m):
    """Eigen-decomposition of a symmetric matrix, eigenvalues nonincreasing.

    The input is symmetrized as ``(m + m') / 2`` first. Eigenvectors follow
    the same sign convention as :func:`thin_svd`.
    """
    m = as_matrix(m, "m")
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"matrix must be square, got {m.shape}")
    sym = 0.5 * (m + m.T)
    try:
        lam, vecs = np.linalg.eigh(sym)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition did not converge: {exc}") from exc
    lam = lam[::-1]
    vecs = vecs[:, ::-1]
    return lam, vecs * _fix_signs(vecs)


def moore_penrose(m, tol=None):
    """Pseudo-inverse of a symmetric PSD matrix.

    Eigenvalues above ``tol * lambda_max`` are inverted, the rest zeroed.
    ``tol`` defaults to ``dim * eps``.
    """
    m = as_matrix(m, "m")
    if tol is None:
        tol = m.shape[0] * EPS
    lam, vecs = sym_eigendecomp(m)
    lam_max = lam[0] if lam.size else 0.0
    if lam_max <= 0:
        return np.zeros_like(m)
    keep = lam > tol * lam_max
    vk = vecs[:, keep]
    return (vk / lam[keep]) @ vk.T


def numeric_rank(d, tol=None, shape=None):
    """Number of singular values above ``tol * d[0]``."""
    d = np.asarray(d, dtype=float)
    if d.size == 0 or d[0] <= 0:
        return 0
    if tol is None:
        tol = (max(shape) if shape else d.size) * EPS
    return int(np.sum(d > tol * d[0]))


@dataclass(frozen=True)
class DesignSummary:
    """Quantities derived once from a design matrix ``x`` (m x p).

    Attributes
    ----------
    gram : ndarray (p, p)
        ``x' x``.
    pinv_gram : ndarray (p, p)
        Moore-Penrose inverse of the Gram matrix.
    projector : ndarray (m, m)
        Orthogonal projector onto the column space of ``x``.
    rank_q : int
    top_singular_value : float
    min_nonzero_eigenvalue : float
        Smallest nonzero eigenvalue of the Gram matrix.
    """

    gram: np.ndarray
    pinv_gram: np.ndarray
    projector: np.ndarray
    rank_q: int
    top_singular_value: float
    min_nonzero_eigenvalue: float
    # orthonormal bases of the column space (m x q) and row space (p x q) of x,
    # with the matching nonzero singular values
    col_basis: np.ndarray
    row_basis: np.ndarray
    singular_values: np.ndarray


def design_summary(x, tol=None):
    """Gram matrix, its pseudo-inverse and the column-space projector of `x`.

    Everything is derived from one SVD of `x` so the projector, the
    pseudo-inverse and ``rank_q`` agree on the numerical rank. A singular
    value counts as nonzero when it exceeds ``tol * d1(x)``; ``tol``
    defaults to ``max(m, p) * eps``.
    """
    x = as_matrix(x, "x")
    if x.shape[0] < 1:
        raise ValueError("design needs at least one row")
    svd = thin_svd(x)
    if tol is None:
        tol = max(x.shape) * EPS
    q = numeric_rank(svd.d, tol)
    uq = svd.u[:, :q]
    vq = svd.vt[:q].T
    dq = svd.d[:q]
    gram = x.T @ x
    pinv_gram = (vq / dq**2) @ vq.T
    projector = uq @ uq.T
    return DesignSummary(
        gram=gram,
        pinv_gram=pinv_gram,
        projector=projector,
        rank_q=q,
        top_singular_value=float(svd.d[0]) if svd.d.size else 0.0,
        min_nonzero_eigenvalue=float(dq[-1] ** 2) if q else 0.0,
        col_basis=uq,
        row_basis=vq,
        singular_values=dq,
    )


def nuclear_norm(a):
    return float(np.sum(singular_values(a)))
