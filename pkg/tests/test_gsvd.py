import numpy as np
import pytest

from conftest import random_instance
from rankselect.gsvd import NotPSDError, gsvd_metric, metric_sqrt, truncate_gsvd
from rankselect.linalg import design_summary
from rankselect.rsc import least_squares, restricted_rank


def test_metric_sqrt_examples(rng):
    assert np.allclose(metric_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))
    assert np.allclose(metric_sqrt(np.eye(3)), np.eye(3))
    x = rng.standard_normal((4, 7))
    m = x.T @ x
    n = metric_sqrt(m)
    assert np.allclose(n, n.T)
    assert np.linalg.norm(n @ n - m) <= 1e-8 * np.linalg.norm(m)


def test_metric_sqrt_rejects_indefinite():
    with pytest.raises(NotPSDError):
        metric_sqrt(np.diag([1.0, -1.0]))


def test_identity_metric_is_plain_svd(rng):
    b0 = rng.standard_normal((5, 3))
    g = gsvd_metric(b0, np.eye(5))
    assert np.allclose(g.d, np.linalg.svd(b0, compute_uv=False))
    assert np.allclose((g.u * g.d) @ g.v.T, b0)


def test_zero_coefficients():
    g = gsvd_metric(np.zeros((4, 3)), np.eye(4))
    assert g.rank == 0 and g.u.shape == (4, 0)
    assert np.all(truncate_gsvd(g, 0) == 0)


@pytest.mark.parametrize("m,p,n", [(10, 4, 3), (6, 12, 5)])
def test_gsvd_invariants(rng, m, p, n):
    x = rng.standard_normal((m, p))
    b0 = rng.standard_normal((p, n))
    mm = x.T @ x
    g = gsvd_metric(b0, mm)
    d_xb = np.linalg.svd(x @ b0, compute_uv=False)
    assert np.allclose(g.d, d_xb[: g.rank], atol=1e-8 * d_xb[0])
    assert np.allclose(g.u.T @ mm @ g.u, np.eye(g.rank), atol=1e-8)
    assert np.allclose(g.v.T @ g.v, np.eye(g.rank), atol=1e-10)
    assert np.allclose(x @ (g.u * g.d) @ g.v.T, x @ b0, atol=1e-8 * np.abs(x @ b0).max())
    with pytest.raises(ValueError):
        truncate_gsvd(g, g.rank + 1)


def test_truncation_diagonal():
    g = gsvd_metric(np.diag([3.0, 2.0, 1.0]), np.eye(3))
    b1 = truncate_gsvd(g, 1)
    assert np.sum((np.diag([3.0, 2.0, 1.0]) - b1) ** 2) == pytest.approx(5.0)


def test_truncation_full_rank_is_exact(rng):
    x = rng.standard_normal((8, 4))
    b0 = rng.standard_normal((4, 3))
    g = gsvd_metric(b0, x.T @ x)
    assert np.linalg.norm(x @ b0 - x @ truncate_gsvd(g, g.rank)) <= 1e-10 * np.linalg.norm(x @ b0)


def test_eckart_young_lower_bound(rng):
    x = rng.standard_normal((9, 5))
    b0 = rng.standard_normal((5, 4))
    d = np.linalg.svd(x @ b0, compute_uv=False)
    for k in (1, 2):
        bound = np.sum(d[k:] ** 2)
        bs = np.einsum("tpk,tkn->tpn", rng.standard_normal((500, 5, k)), rng.standard_normal((500, k, 4)))
        errs = np.sum((x @ b0 - x[None] @ bs) ** 2, axis=(1, 2))
        assert errs.min() >= bound - 1e-6
        g = gsvd_metric(b0, x.T @ x)
        assert np.sum((x @ b0 - x @ truncate_gsvd(g, k)) ** 2) == pytest.approx(bound, rel=1e-6)


def test_restricted_rank_is_truncated_gsvd_of_least_squares(rng):
    for m, p, n, qx in [(20, 5, 4, None), (8, 15, 6, 6)]:
        x, _, y = random_instance(rng, m, p, n, rank_x=qx)
        d = design_summary(x)
        g = gsvd_metric(least_squares(d, x, y), d.gram)
        for k in range(1, g.rank + 1):
            bk = restricted_rank(d, x, y, k).b_k
            assert np.linalg.norm(bk - truncate_gsvd(g, k)) <= 1e-6 * max(1, np.linalg.norm(bk))
