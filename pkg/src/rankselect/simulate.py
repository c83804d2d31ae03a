"""Monte Carlo experiments comparing RSC and NNP estimators.

Two data-generating designs are provided. ``exp1`` has ``m > p`` and
Gaussian rows with AR(1) correlation ``rho^|j-k|``. ``exp2`` has ``p > m``
and a design of rank ``q < m`` built as ``X1 X2 Sigma^{1/2}``. In both, the
coefficient matrix is ``b B0 B1`` with standard normal factors and the
noise has i.i.d. ``N(0, sigma^2)`` entries.

Four estimators are compared per replication: ``RSC_adap`` (penalty
``2 S^2 (n + q)``) and the validation-tuned ``RSC_val``, ``NNP_val`` and
``NNPc_val``.
"""

import dataclasses
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .linalg import design_summary, numeric_rank, singular_values, sym_eigendecomp
from .nnp import calibrated_rank, nnp_fit
from .rsc import (
    adaptive_mu,
    fit_from_spectrum,
    least_squares,
    noise_variance,
    projected_spectrum,
    rsc_fit,
    select_rank,
    solution_path,
)

log = logging.getLogger(__name__)

ESTIMATORS = ("RSC_adap", "RSC_val", "NNP_val", "NNPc_val")


@dataclass(frozen=True)
class RngSpec:
    """Seed plus stream index; each pair yields an independent, reproducible generator."""

    seed: int
    stream_id: int = 0

    def generator(self):
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,)))


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    m: int
    p: int
    n: int
    r: int
    rho: float
    b: float
    q: int | None = None
    sigma: float = 1.0
    replications: int = 20
    seed: int = 20240101
    validation_multiplier: int = 10
    trim: float = 0.4
    grid_points: int = 50
    constant: float = 2.0

    def __post_init__(self):
        if self.experiment not in ("exp1", "exp2"):
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if min(self.m, self.p, self.n, self.r) < 1:
            raise ValueError("m, p, n, r must be positive")
        if not 0 <= self.rho < 1:
            raise ValueError("rho must lie in [0, 1)")
        if self.b < 0 or self.sigma <= 0:
            raise ValueError("b must be non-negative and sigma positive")
        if self.r > min(self.n, self.p):
            raise ValueError("r must not exceed min(n, p)")
        if self.experiment == "exp1":
            if self.m <= self.p:
                raise ValueError("exp1 needs m > p")
        else:
            if self.q is None or not self.q < self.m <= self.p:
                raise ValueError("exp2 needs q < m <= p")
            if self.r > self.q:
                raise ValueError("exp2 needs r <= q")
        if self.replications < 1 or self.validation_multiplier < 1 or self.grid_points < 2:
            raise ValueError("replications, validation_multiplier must be >= 1, grid_points >= 2")
        if not 0 <= self.trim < 0.5:
            raise ValueError("trim must lie in [0, 0.5)")

    @property
    def design_rank(self):
        return self.p if self.experiment == "exp1" else self.q

    def label(self):
        return f"{self.experiment} b={self.b:g} rho={self.rho:g}"

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class SummaryRow:
    scenario: str
    estimator: str
    mse_xa: float
    mse_a: float
    rank_median: float
    rrp: float
    snr: float
    replications: int
    failed: int
    config: ExperimentConfig = field(repr=False)

    def as_record(self):
        cfg = self.config
        return {
            "experiment": cfg.experiment, "m": cfg.m, "p": cfg.p, "n": cfg.n, "r": cfg.r,
            "q": cfg.design_rank, "rho": cfg.rho, "b": cfg.b, "estimator": self.estimator,
            "mse_xa": self.mse_xa, "mse_a": self.mse_a, "rank_median": self.rank_median,
            "rrp": self.rrp, "snr": self.snr, "replications": self.replications,
            "failed": self.failed,
        }


def ar1_covariance(p, rho):
    idx = np.arange(p)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def _sym_sqrt(s):
    lam, vecs = sym_eigendecomp(s)
    return (vecs * np.sqrt(np.clip(lam, 0, None))) @ vecs.T


def gen_design_exp1(m, p, rho, rng):
    """m x p design with i.i.d. rows ``N(0, Sigma)``, ``Sigma_jk = rho^|j-k|``."""
    root = _sym_sqrt(ar1_covariance(p, rho))
    return rng.standard_normal((m, p)) @ root


def _exp2_row_factor(q, p, rho, rng):
    return rng.standard_normal((q, p)) @ _sym_sqrt(ar1_covariance(p, rho))


def gen_design_exp2(m, p, q, rho, rng, max_attempts=10):
    """Rank-q design ``X1 X2 Sigma^{1/2}`` with ``X1`` m x q and ``X2`` q x p.

    A draw whose numerical rank falls below q is discarded and redrawn.
    """
    if not q < m <= p:
        raise ValueError("exp2 design needs q < m <= p")
    for attempt in range(max_attempts):
        x = rng.standard_normal((m, q)) @ _exp2_row_factor(q, p, rho, rng)
        if numeric_rank(singular_values(x), shape=x.shape) == q:
            return x
        log.warning("exp2 design draw %d was rank deficient, redrawing", attempt)
    raise RuntimeError(f"could not draw a rank-{q} design in {max_attempts} attempts")


def gen_coefficients(p, n, r, b, rng):
    """``b B0 B1`` with standard normal ``B0`` (p x r) and ``B1`` (r x n)."""
    if r > min(p, n):
        raise ValueError("r must not exceed min(p, n)")
    return b * (rng.standard_normal((p, r)) @ rng.standard_normal((r, n)))


def trimmed_mean(values, trim_fraction_per_tail):
    """Mean after dropping ``floor(fraction * len)`` values from each tail."""
    values = np.asarray(values, dtype=float)
    if not 0 <= trim_fraction_per_tail < 0.5:
        raise ValueError("trim fraction must lie in [0, 0.5)")
    if values.size == 0:
        raise ValueError("no values to average")
    return float(stats.trim_mean(values, trim_fraction_per_tail))


def snr(xa_singular, r, q, n):
    """``d_r(XA) / (sqrt(q) + sqrt(n))``."""
    d = np.asarray(xa_singular, dtype=float)
    if r > d.size:
        raise ValueError("r exceeds the number of singular values")
    return float(d[r - 1] / (math.sqrt(q) + math.sqrt(n)))


@dataclass
class Instance:
    x: np.ndarray
    a: np.ndarray
    e: np.ndarray
    y: np.ndarray
    x_val: np.ndarray
    y_val: np.ndarray


def draw_instance(config, rng):
    """Training data plus a validation set sharing A and the row law of X."""
    m, p, n = config.m, config.p, config.n
    m_val = config.validation_multiplier * m
    if config.experiment == "exp1":
        root = _sym_sqrt(ar1_covariance(p, config.rho))
        x = rng.standard_normal((m, p)) @ root
        x_val = rng.standard_normal((m_val, p)) @ root
    else:
        # validation rows reuse the row factor X2 Sigma^{1/2}, so they are
        # fresh draws from the same conditional row distribution
        q = config.q
        for _ in range(10):
            row = _exp2_row_factor(q, p, config.rho, rng)
            x = rng.standard_normal((m, q)) @ row
            if numeric_rank(singular_values(x), shape=x.shape) == q:
                break
            log.warning("exp2 design draw was rank deficient, redrawing")
        x_val = rng.standard_normal((m_val, q)) @ row
    a = gen_coefficients(p, n, config.r, config.b, rng)
    e = config.sigma * rng.standard_normal((m, n))
    y = x @ a + e
    y_val = x_val @ a + config.sigma * rng.standard_normal((m_val, n))
    return Instance(x, a, e, y, x_val, y_val)


def draw_training(config, rng):
    """Training triple ``(X, A, E)`` without a validation set."""
    if config.experiment == "exp1":
        x = gen_design_exp1(config.m, config.p, config.rho, rng)
    else:
        x = gen_design_exp2(config.m, config.p, config.q, config.rho, rng)
    a = gen_coefficients(config.p, config.n, config.r, config.b, rng)
    e = config.sigma * rng.standard_normal((config.m, config.n))
    return x, a, e


def mu_grid(eigenvalues, points=50):
    """Log-spaced penalties from half the smallest positive eigenvalue to twice the largest."""
    lam = np.asarray(eigenvalues, dtype=float)
    pos = lam[lam > 0]
    if pos.size == 0:
        return np.geomspace(1e-8, 1.0, points)
    return np.geomspace(pos.min() / 2, 2 * pos.max(), points)


def tau_grid(d1_xty, points=50):
    """Log-spaced penalties over ``[1e-4 d1(X'Y), d1(X'Y)]``."""
    top = max(d1_xty, 1e-12)
    return np.geomspace(top * 1e-4, top, points)


def nnp_path(x, y, taus, design=None, opts=None):
    """NNP fits along a grid, solved from the largest tau down with warm starts.

    Returned in the order of `taus`.
    """
    taus = np.asarray(taus, dtype=float)
    if design is None:
        design = design_summary(x)
    order = np.argsort(taus)[::-1]
    fits = [None] * taus.size
    warm = None
    for i in order:
        fit = nnp_fit(x, y, taus[i], opts, design=design, warm_start=warm)
        fits[i] = fit
        warm = fit.coefficients
    return fits


def _errors(inst, b, scale_xa, scale_a):
    diff = inst.a - b
    return (
        scale_xa * float(np.sum((inst.x @ diff) ** 2)),
        scale_a * float(np.sum(diff**2)),
    )


def _val_error(inst, b):
    return float(np.mean((inst.y_val - inst.x_val @ b) ** 2))


def run_replication(config, rep, estimators=ESTIMATORS, opts=None):
    """Fit the requested estimators on replication `rep`; returns one dict per estimator."""
    rng = RngSpec(config.seed, rep).generator()
    inst = draw_instance(config, rng)
    m, p, n = config.m, config.p, config.n
    scale_xa = 100.0 / (m * n)
    scale_a = 100.0 / (p * n)
    design = design_summary(inst.x)
    q = design.rank_q
    xa_d = singular_values(inst.x @ inst.a)
    rep_snr = snr(xa_d, config.r, q, n) if config.r <= xa_d.size else 0.0
    lam, vecs = projected_spectrum(design, inst.y)
    b_hat = least_squares(design, inst.x, inst.y)
    rank_fits = {}

    def rank_k(k):
        if k not in rank_fits:
            rank_fits[k] = fit_from_spectrum(inst.x, b_hat, vecs, k)
        return rank_fits[k]

    out = []

    def record(name, b, rank, tuning, converged=True, nonconverged=0):
        mse_xa, mse_a = _errors(inst, b, scale_xa, scale_a)
        out.append({
            "rep": rep, "estimator": name, "rank": int(rank), "mse_xa": mse_xa,
            "mse_a": mse_a, "tuning": float(tuning), "converged": bool(converged),
            "nonconverged_grid_fits": int(nonconverged), "snr": rep_snr,
        })

    if "RSC_adap" in estimators:
        mu = adaptive_mu(noise_variance(design, inst.y), n, q, config.constant)
        if mu > 0:
            fit = rsc_fit(inst.x, inst.y, mu, design=design)
            record("RSC_adap", fit.coefficients, fit.selected_rank, mu)
        else:
            record("RSC_adap", b_hat, rank_k(min(n, q)).k, mu)

    if "RSC_val" in estimators:
        grid = mu_grid(lam, config.grid_points)
        best = None
        for mu in grid:
            k = min(select_rank(lam, mu), p)
            err = _val_error(inst, rank_k(k).b_k)
            if best is None or err < best[0]:
                best = (err, mu, k)
        _, mu, k = best
        record("RSC_val", rank_k(k).b_k, k, mu)

    if "NNP_val" in estimators or "NNPc_val" in estimators:
        d1 = singular_values(inst.x.T @ inst.y)[0]
        taus = tau_grid(d1, config.grid_points)
        fits = nnp_path(inst.x, inst.y, taus, design=design, opts=opts)
        bad = sum(not f.converged for f in fits)
        if "NNP_val" in estimators:
            errs = [_val_error(inst, f.coefficients) for f in fits]
            i = int(np.argmin(errs))
            record("NNP_val", fits[i].coefficients, fits[i].rank, taus[i], fits[i].converged, bad)
        if "NNPc_val" in estimators:
            best = None
            for i, f in enumerate(fits):
                k = min(calibrated_rank(design.gram, f.coefficients, taus[i]), n, p)
                err = _val_error(inst, rank_k(k).b_k)
                if best is None or err < best[0]:
                    best = (err, i, k)
            _, i, k = best
            record("NNPc_val", rank_k(k).b_k, k, taus[i], fits[i].converged, bad)
    return out


def fit_paths(x, y, a=None, validation=None, grid_points=50, opts=None):
    """RSC and NNP solution paths on one data set, as plot-ready records.

    Each record has ``method`` ("RSC" or "NNP"), ``tuning`` (mu or tau),
    ``rank``, ``calibrated_rank`` (NNP only), ``mse_xa`` (``100/(mn)``
    scaled, when `a` is given) and ``val_mse`` (when `validation` is given).
    """
    design = design_summary(x)
    m, n = y.shape
    lam, _ = projected_spectrum(design, y)
    records = []
    for pt in solution_path(x, y, mu_grid(lam, grid_points), a_true=a, validation=validation,
                            design=design):
        records.append({
            "method": "RSC", "tuning": pt.mu, "rank": pt.rank, "calibrated_rank": None,
            "mse_xa": None if pt.fit_error is None else 100.0 * pt.fit_error / (m * n),
            "val_mse": pt.validation_error, "converged": True,
        })
    taus = tau_grid(singular_values(x.T @ y)[0], grid_points)
    xa = None if a is None else x @ a
    for tau, fit in zip(taus, nnp_path(x, y, taus, design=design, opts=opts)):
        b = fit.coefficients
        val = None
        if validation is not None:
            xv, yv = validation
            val = float(np.mean((yv - xv @ b) ** 2))
        records.append({
            "method": "NNP", "tuning": float(tau), "rank": fit.rank,
            "calibrated_rank": calibrated_rank(design.gram, b, tau),
            "mse_xa": None if xa is None else 100.0 * float(np.sum((x @ b - xa) ** 2)) / (m * n),
            "val_mse": val, "converged": fit.converged,
        })
    return records


def _replication_job(args):
    config, rep, estimators, opts = args
    return run_replication(config, rep, estimators, opts)


def run_replications(config, estimators=ESTIMATORS, opts=None, n_jobs=1):
    """Per-replication detail records, ordered by replication index."""
    jobs = [(config, rep, tuple(estimators), opts) for rep in range(config.replications)]
    if n_jobs == 1:
        results = [_replication_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_replication_job, jobs))
    return [rec for reps in results for rec in reps]


def summarize(config, details, estimators=ESTIMATORS):
    """Aggregate detail records into one :class:`SummaryRow` per estimator.

    Replications whose selected NNP fit did not converge are counted in
    ``failed`` and left out of the averages.
    """
    rows = []
    for name in estimators:
        recs = [d for d in details if d["estimator"] == name]
        ok = [d for d in recs if d["converged"]]
        failed = len(recs) - len(ok)
        if failed:
            log.warning("%s: %d of %d replications failed to converge", name, failed, len(recs))
        if ok:
            ranks = np.array([d["rank"] for d in ok])
            row = SummaryRow(
                scenario=config.label(),
                estimator=name,
                mse_xa=trimmed_mean([d["mse_xa"] for d in ok], config.trim),
                mse_a=trimmed_mean([d["mse_a"] for d in ok], config.trim),
                rank_median=float(np.median(ranks)),
                rrp=100.0 * float(np.mean(ranks == config.r)),
                snr=float(np.mean([d["snr"] for d in ok])),
                replications=len(recs),
                failed=failed,
                config=config,
            )
        else:
            nan = float("nan")
            row = SummaryRow(config.label(), name, nan, nan, nan, 0.0, nan, len(recs), failed, config)
        rows.append(row)
    return rows


def run_experiment(config, estimators=ESTIMATORS, opts=None, n_jobs=1, return_details=False):
    """Run every replication of `config` and summarize per estimator.

    Returns
    -------
    list of SummaryRow, or (rows, details) when `return_details` is true.
    """
    details = run_replications(config, estimators, opts, n_jobs)
    rows = summarize(config, details, estimators)
    return (rows, details) if return_details else rows


def expand_scenarios(spec):
    """Expand a JSON-style dict whose ``b`` and ``rho`` may be lists into configs."""
    spec = dict(spec)
    bs = spec.pop("b")
    rhos = spec.pop("rho")
    bs = bs if isinstance(bs, list) else [bs]
    rhos = rhos if isinstance(rhos, list) else [rhos]
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(spec) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return [ExperimentConfig(b=b, rho=rho, **spec) for b in bs for rho in rhos]


# -- tightness of the rank-consistency threshold ---------------------------------


@dataclass(frozen=True)
class TightnessPoint:
    mu1: float
    mu_u: float | None
    snr: float
    params: dict


def default_scenario_sampler(rng):
    """Random exp1-style scenario (m, p, n, r, rho, b)."""
    p = int(rng.integers(10, 31))
    n = int(rng.integers(10, 31))
    m = int(rng.integers(p + 20, 4 * p + 40))
    r = int(rng.integers(1, max(2, min(p, n) // 2) + 1))
    rho = float(rng.choice([0.1, 0.5, 0.9]))
    b = float(rng.uniform(0.2, 0.5))
    return {"experiment": "exp1", "m": m, "p": p, "n": n, "r": r, "rho": rho, "b": b}


def largest_rank_mu(eigenvalues, grid, r):
    """Largest grid penalty whose RSC rank equals `r`, or ``None``."""
    hits = [mu for mu in grid if select_rank(eigenvalues, mu) == r]
    return float(max(hits)) if hits else None


def tightness_study(n_runs, scenario_sampler=None, mu_grid=None, rng=None, sigma=1.0,
                    require_snr_above=1.0, max_tries=1000):
    """Compare ``mu1 = d_r^2(XA)`` with the largest penalty that still selects rank r.

    For each run a scenario is sampled, (X, A) drawn and redrawn until its
    SNR exceeds `require_snr_above`, and one response matrix observed. With
    ``mu_grid=None`` the grid is the exact set of rank breakpoints (the
    eigenvalues of ``Y'PY``) merged with 200 log-spaced points, so ``mu_u``
    is exact. A fixed grid limits ``mu_u`` to its resolution.

    ``sigma = 0`` gives noiseless responses.
    """
    if rng is None:
        rng = np.random.default_rng()
    sampler = scenario_sampler or default_scenario_sampler
    out = []
    for _ in range(n_runs):
        for _ in range(max_tries):
            params = sampler(rng)
            if params["experiment"] == "exp1":
                x = gen_design_exp1(params["m"], params["p"], params["rho"], rng)
            else:
                x = gen_design_exp2(params["m"], params["p"], params["q"], params["rho"], rng)
            a = gen_coefficients(params["p"], params["n"], params["r"], params["b"], rng)
            design = design_summary(x)
            xa_d = singular_values(x @ a)
            run_snr = snr(xa_d, params["r"], design.rank_q, params["n"])
            if run_snr > require_snr_above:
                break
        else:
            raise RuntimeError("scenario sampler never produced the required SNR")
        y = x @ a + sigma * rng.standard_normal((params["m"], params["n"]))
        lam, _ = projected_spectrum(design, y)
        if mu_grid is None:
            pos = lam[lam > 0]
            grid = np.union1d(pos, np.geomspace(pos.min() / 2, 2 * pos.max(), 200))
        else:
            grid = np.asarray(mu_grid, dtype=float)
        mu_u = largest_rank_mu(lam, grid, params["r"])
        if mu_u is None:
            log.info("no grid penalty recovers rank %d", params["r"])
        out.append(TightnessPoint(float(xa_d[params["r"] - 1] ** 2), mu_u, run_snr, params))
    return out
