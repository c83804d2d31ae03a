import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import random_instance
from rankselect.linalg import design_summary, nuclear_norm
from rankselect.nnp import (
    SolverOptions,
    calibrated_rank,
    kkt_residual,
    nnp_calibrated,
    nnp_fit,
    nnp_objective,
    rank_recovery_premise,
    svt,
    tau_theoretical,
)
from rankselect.rsc import projected_spectrum, rsc_fit
from rankselect.simulate import tau_grid


def test_svt_examples():
    assert np.allclose(svt(np.diag([3.0, 1.0]), 2.0), np.diag([1.0, 0.0]))
    a = np.arange(6.0).reshape(2, 3)
    assert np.array_equal(svt(a, 0.0), a)
    with pytest.raises(ValueError):
        svt(a, -1.0)


@settings(max_examples=30, deadline=None)
@given(arrays(float, (4, 3), elements=st.floats(-10, 10)), st.floats(0.0, 5.0))
def test_svt_is_the_prox(a, t):
    out = svt(a, t)

    def obj(b):
        return 0.5 * np.sum((b - a) ** 2) + t * nuclear_norm(b)

    best = obj(out)
    rng = np.random.default_rng(0)
    for scale in (1e-3, 1e-1, 1.0):
        for _ in range(333):
            assert best <= obj(out + scale * rng.standard_normal(a.shape)) + 1e-9


def test_orthogonal_design_closed_form():
    fit = nnp_fit(np.eye(2), np.diag([5.0, 1.0]), 2.0)
    assert fit.converged
    assert np.allclose(fit.coefficients, np.diag([3.0, 0.0]), atol=1e-6)
    assert kkt_residual(np.eye(2), np.diag([5.0, 1.0]), np.diag([3.0, 0.0]), 2.0) <= 1e-8


def test_orthogonal_designs_match_svt(rng):
    for _ in range(50):
        m, p, n = int(rng.integers(4, 12)), int(rng.integers(2, 5)), int(rng.integers(2, 6))
        q, _ = np.linalg.qr(rng.standard_normal((m, p)))
        y = rng.standard_normal((m, n)) * 3
        tau = rng.uniform(0.1, 3)
        fit = nnp_fit(q, y, tau)
        assert fit.converged
        assert np.abs(fit.coefficients - svt(q.T @ y, tau)).max() <= 1e-6


def test_tau_zero_is_least_squares(rng):
    x, _, y = random_instance(rng, 12, 20, 4, rank_x=8)
    d = design_summary(x)
    fit = nnp_fit(x, y, 0.0, design=d)
    assert np.linalg.norm(x @ fit.coefficients - d.projector @ y) <= 1e-8 * np.linalg.norm(y)


def test_zero_is_optimal_above_d1(rng):
    x, _, y = random_instance(rng, 15, 5, 4)
    tau = np.linalg.svd(x.T @ y, compute_uv=False)[0] * 1.01
    fit = nnp_fit(x, y, tau)
    assert np.all(fit.coefficients == 0) and fit.rank == 0
    assert kkt_residual(x, y, np.zeros((5, 4)), tau) == 0.0


def test_perturbation_and_rsc_oracle(rng):
    for _ in range(10):
        x, _, y = random_instance(rng, 10, 4, 3, rank_a=1)
        tau = rng.uniform(0.5, 5)
        fit = nnp_fit(x, y, tau, SolverOptions(rel_objective_tol=1e-12, kkt_tol_factor=1e-6))
        assert fit.converged
        f = nnp_objective(x, y, fit.coefficients, tau)
        assert f == pytest.approx(fit.objective, rel=1e-10)
        for _ in range(200):
            b = fit.coefficients + 1e-2 * rng.standard_normal(fit.coefficients.shape)
            assert f <= nnp_objective(x, y, b, tau) + 1e-6
        lam, _ = projected_spectrum(design_summary(x), y)
        rsc = rsc_fit(x, y, lam[1] + 1e-9).coefficients
        assert f <= nnp_objective(x, y, rsc, tau) + 1e-6


def test_matches_generic_convex_solver(rng):
    cp = pytest.importorskip("cvxpy")
    x, _, y = random_instance(rng, 12, 5, 4, rank_a=2)
    tau = 3.0
    b = cp.Variable((5, 4))
    prob = cp.Problem(cp.Minimize(cp.sum_squares(y - x @ b) + 2 * tau * cp.normNuc(b)))
    prob.solve(solver="SCS", eps=1e-9, max_iters=200000)
    fit = nnp_fit(x, y, tau, SolverOptions(rel_objective_tol=1e-13, kkt_tol_factor=1e-8))
    assert fit.objective <= prob.value + 1e-6 * abs(prob.value)
    assert np.abs(fit.coefficients - b.value).max() <= 1e-3


@pytest.mark.parametrize("shape", [(40, 8, 6, None), (12, 30, 7, 9)])
def test_solver_certificates(rng, shape):
    m, p, n, qx = shape
    for _ in range(5):
        x, _, y = random_instance(rng, m, p, n, rank_x=qx, rank_a=2)
        d1 = np.linalg.svd(x.T @ y, compute_uv=False)[0]
        for tau in (0.02 * d1, 0.2 * d1):
            fit = nnp_fit(x, y, tau)
            assert fit.converged and fit.kkt_residual <= 1e-4
            assert kkt_residual(x, y, fit.coefficients, tau) == pytest.approx(fit.kkt_residual, abs=1e-6)
            assert np.all(np.diff(fit.objective_trace) <= 0)


def test_nonconvergence_is_reported(rng, caplog):
    x, _, y = random_instance(rng, 30, 10, 8)
    tau = 0.01 * np.linalg.svd(x.T @ y, compute_uv=False)[0]
    with caplog.at_level(logging.WARNING):
        fit = nnp_fit(x, y, tau, SolverOptions(max_iterations=3))
    assert not fit.converged
    assert "without convergence" in caplog.text


def test_shrinkage_ordering_and_small_tau_limit(rng):
    x, _, y = random_instance(rng, 25, 6, 5, rank_a=2)
    d = design_summary(x)
    taus = tau_grid(np.linalg.svd(x.T @ y, compute_uv=False)[0], 15)
    norms, gaps = [], []
    for tau in taus:
        b = nnp_fit(x, y, tau, design=d).coefficients
        norms.append(nuclear_norm(b))
        gaps.append(np.linalg.norm(x @ b - d.projector @ y))
    assert all(a >= b - 1e-6 * max(1, a) for a, b in zip(norms, norms[1:]))
    assert gaps[0] <= 1e-2 * np.linalg.norm(d.projector @ y)


def test_calibrated_rank_examples():
    assert calibrated_rank(np.eye(3), np.diag([10.0, 3.0, 1.0]), 2.0) == 1
    assert calibrated_rank(np.eye(3), np.zeros((3, 2)), 1.0) == 0
    # strict inequality at the boundary
    assert calibrated_rank(np.eye(2), np.diag([4.0, 1.0]), 2.0) == 0


def test_nnp_calibrated_noiseless(rng):
    x, a, _ = random_instance(rng, 30, 8, 6, rank_a=3)
    y = x @ a
    tau = 1e-4 * np.linalg.svd(x.T @ y, compute_uv=False)[0]
    fit = nnp_calibrated(x, y, tau)
    assert fit.k == 3
    assert np.linalg.norm(fit.fitted - y) <= 1e-6 * np.linalg.norm(y)


def test_nnp_calibrated_huge_tau(rng):
    x, _, y = random_instance(rng, 20, 5, 4)
    tau = 10 * np.linalg.svd(x.T @ y, compute_uv=False)[0]
    fit = nnp_calibrated(x, y, tau)
    assert fit.k == 0 and np.all(fit.b_k == 0)


def test_tau_theoretical():
    assert tau_theoretical(1.0, 1.0, 4, 4, 0.0) == pytest.approx(4.0)
    with pytest.raises(ValueError):
        tau_theoretical(0.0, 1.0, 4, 4, 0.0)


def test_rank_recovery_premise(rng):
    x, a, _ = random_instance(rng, 100, 25, 25, rank_a=10)
    d = design_summary(x)
    tau = tau_theoretical(1.0, d.top_singular_value, 25, 25, 1.0)
    ratio = rank_recovery_premise(d.gram, a, tau)
    sv = np.linalg.svd(d.gram @ a, compute_uv=False)
    assert ratio == pytest.approx(sv[9] / (4 * tau))
