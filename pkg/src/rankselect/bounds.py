"""Monte Carlo checks of the probabilistic bounds behind RSC and NNP.

Each check draws random problems, evaluates the closed-form bound at the
same parameters and compares. Frequencies are compared against the bound
plus a one-sided binomial margin at a fixed confidence (99% by default), so
a check fails only when the excess is statistically clear. Deterministic
("with probability one" or on-event) inequalities are counted as
violations and must be zero.
"""

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .linalg import design_summary, singular_values
from .nnp import nnp_fit, tau_theoretical
from .rsc import (
    adaptive_mu,
    adaptive_penalty_mu,
    effective_rank,
    fit_from_spectrum,
    least_squares,
    noise_variance,
    oracle_mu,
    projected_spectrum,
    rsc_fit,
    select_rank,
    theoretical_mu,
)
from .simulate import draw_training


@dataclass(frozen=True)
class NoiseSpec:
    """Noise law for the entries of E.

    ``kind="gaussian"`` draws ``N(0, sigma^2)``. ``kind="subgaussian"`` draws
    from a family with subGaussian moment ``gamma``, meaning
    ``E exp(t W) <= exp(gamma t^2 / 4)`` for all t, so that ``N(0, 1)`` and
    ``+-1`` signs both have ``gamma = 2``. ``rademacher`` is
    ``+-sqrt(gamma / 2)`` and ``uniform`` is uniform on
    ``[-sqrt(3 gamma / 2), sqrt(3 gamma / 2)]``; both attain the moment
    bound to second order, so gamma is exact rather than estimated.
    """

    kind: str = "gaussian"
    sigma: float = 1.0
    gamma: float | None = None
    family: str = "rademacher"

    def __post_init__(self):
        if self.kind == "gaussian":
            if self.sigma <= 0:
                raise ValueError("sigma must be positive")
        elif self.kind == "subgaussian":
            if self.gamma is None or self.gamma <= 0:
                raise ValueError("gamma must be positive")
            if self.family not in ("rademacher", "uniform"):
                raise ValueError(f"unknown subgaussian family {self.family!r}")
        else:
            raise ValueError(f"unknown noise kind {self.kind!r}")

    @classmethod
    def gaussian(cls, sigma=1.0):
        return cls("gaussian", sigma=sigma)

    @classmethod
    def subgaussian(cls, gamma, family="rademacher"):
        return cls("subgaussian", gamma=gamma, family=family)

    @property
    def subgaussian_moment(self):
        return 2 * self.sigma**2 if self.kind == "gaussian" else self.gamma

    def sample(self, rng, shape):
        if self.kind == "gaussian":
            return self.sigma * rng.standard_normal(shape)
        if self.family == "rademacher":
            return math.sqrt(self.gamma / 2) * rng.choice([-1.0, 1.0], size=shape)
        half = math.sqrt(1.5 * self.gamma)
        return rng.uniform(-half, half, size=shape)


@dataclass(frozen=True)
class BoundCheckReport:
    """Outcome of one empirical-vs-theoretical comparison.

    ``passed`` is ``empirical_value <= theoretical_bound + margin``, or
    ``None`` for report-only quantities whose constants are not explicit.
    """

    bound_name: str
    trials: int
    empirical_value: float
    theoretical_bound: float
    passed: bool | None
    details: str = ""
    margin: float = 0.0

    def to_dict(self):
        return dataclasses.asdict(self)

    def line(self):
        status = {True: "PASS", False: "FAIL", None: "INFO"}[self.passed]
        return (f"[{status}] {self.bound_name}: empirical {self.empirical_value:.6g} "
                f"vs bound {self.theoretical_bound:.6g} (+{self.margin:.3g}), "
                f"{self.trials} trials. {self.details}")


def binomial_margin(bound, trials, confidence=0.99):
    """One-sided normal-approximation margin for a frequency whose true value is `bound`."""
    p = min(max(bound, 0.0), 1.0)
    z = stats.norm.ppf(confidence)
    return float(z * math.sqrt(p * (1 - p) / trials))


def _check(name, trials, empirical, bound, margin=0.0, details=""):
    return BoundCheckReport(name, int(trials), float(empirical), float(bound),
                            bool(empirical <= bound + margin), details, float(margin))


def _freq_check(name, trials, freq, bound, confidence, details=""):
    return _check(name, trials, freq, bound, binomial_margin(bound, trials, confidence), details)


def random_design(m, q, rng, p=None):
    """m x p Gaussian design of rank q (p defaults to q)."""
    p = q if p is None else p
    if q > min(m, p):
        raise ValueError("q must not exceed min(m, p)")
    if q == p:
        return rng.standard_normal((m, p))
    return rng.standard_normal((m, q)) @ rng.standard_normal((q, p))


def _projected_top(col_basis, e):
    # ||P E||_2 = ||U_q' E||_2 for an orthonormal basis U_q of the column space
    return float(singular_values(col_basis.T @ e)[0])


def mc_projected_noise(m, n, q, noise=None, trials=1000, rng=None, confidence=0.99,
                       t_values=(1.0, 2.0)):
    """Expected size and upper tail of ``d1(P E)`` for Gaussian noise.

    One design of rank q is drawn and held fixed. Checks the mean against
    ``sigma (sqrt(n) + sqrt(q))`` and, for each t, the frequency of
    ``d1(PE) >= mean + sigma t`` against ``exp(-t^2 / 2)``; the empirical
    mean stands in for the expectation.
    """
    noise = noise or NoiseSpec.gaussian()
    if noise.kind != "gaussian":
        raise ValueError("mc_projected_noise needs Gaussian noise")
    if trials < 200:
        raise ValueError("use at least 200 trials")
    rng = np.random.default_rng(rng)
    design = design_summary(random_design(m, q, rng))
    d1 = np.array([_projected_top(design.col_basis, noise.sample(rng, (m, n)))
                   for _ in range(trials)])
    sigma = noise.sigma
    mean = float(d1.mean())
    reports = [_check("lemma3_mean", trials, mean, sigma * (math.sqrt(n) + math.sqrt(q)),
                      details=f"m={m} n={n} q={q} sigma={sigma:g}")]
    for t in t_values:
        freq = float(np.mean(d1 >= mean + sigma * t))
        reports.append(_freq_check(f"lemma3_tail_t={t:g}", trials, freq, math.exp(-t * t / 2),
                                   confidence, details=f"P(d1(PE) >= mean + {t:g} sigma)"))
    return reports


def mc_subgaussian_projected_noise(m, n, q, noise, trials=1000, rng=None, confidence=0.99,
                                   x_values=(1.0, 2.0)):
    """Tail and mean of ``d1(PE)`` for subGaussian noise with moment ``Gamma``.

    Checks ``P{d1^2(PE) >= 32 Gamma ((n+q) ln 5 + x)} <= 2 exp(-x)`` for
    each x and ``E d1(PE) <= 15 Gamma sqrt(n + q)``.
    """
    rng = np.random.default_rng(rng)
    gamma = noise.subgaussian_moment
    design = design_summary(random_design(m, q, rng))
    d1 = np.array([_projected_top(design.col_basis, noise.sample(rng, (m, n)))
                   for _ in range(trials)])
    reports = []
    for x in x_values:
        level = 32 * gamma * ((n + q) * math.log(5) + x)
        freq = float(np.mean(d1**2 >= level))
        reports.append(_freq_check(f"prop15_tail_x={x:g}", trials, freq, min(1.0, 2 * math.exp(-x)),
                                   confidence, details=f"level {level:.4g}, max d1^2 {d1.max()**2:.4g}"))
    reports.append(_check("prop15_mean", trials, float(d1.mean()), 15 * gamma * math.sqrt(n + q),
                          details=f"{noise.kind if noise.kind == 'gaussian' else noise.family} gamma={gamma:g}"))
    return reports


def _mu_for_rule(rule, design, y, config, theta, delta=1.0):
    n = y.shape[1]
    q = design.rank_q
    if callable(rule):
        return float(rule(design, y, config))
    if rule == "theoretical":
        return theoretical_mu(config.sigma, n, q, theta, delta)
    if rule == "theoretical_qlogm":
        return theoretical_mu(config.sigma, n, q * math.log(y.shape[0]), theta, delta)
    if rule == "adaptive":
        return adaptive_mu(noise_variance(design, y), n, q, config.constant)
    raise ValueError(f"unknown mu rule {rule!r}")


def mc_consistency(config, mu_rule="theoretical", trials=100, rng=None, theta=1.0, delta=0.5,
                   confidence=0.99):
    """Frequency of wrong rank selection against ``exp(-theta^2 (n + q) / 2)``.

    The first report checks ``k_hat != r`` under ``sqrt(mu) = (1 + theta)
    sigma (sqrt(n) + sqrt(q))``; its premise ``d_r(XA) > 2 sqrt(mu)`` is
    checked per draw and the report fails as an invalid premise when more
    than 10% of draws violate it. The second checks ``k_hat != r_e(mu)`` for
    the gap version with ``mu`` divided by ``delta^2``, over the draws where
    the effective rank exists.
    """
    rng = np.random.default_rng(rng)
    n = config.n
    miss = miss_e = premise_bad = have_e = 0
    q = config.design_rank
    for _ in range(trials):
        x, a, e = draw_training(config, rng)
        y = x @ a + e
        design = design_summary(x)
        xa_d = singular_values(x @ a)
        mu = _mu_for_rule(mu_rule, design, y, config, theta)
        lam, _ = projected_spectrum(design, y)
        k_hat = select_rank(lam, mu)
        premise_bad += xa_d[config.r - 1] <= 2 * math.sqrt(mu)
        miss += k_hat != config.r
        mu_e = _mu_for_rule(mu_rule, design, y, config, theta, delta)
        if mu_rule not in ("theoretical", "theoretical_qlogm"):
            mu_e = mu / delta**2
        r_e = effective_rank(xa_d, mu_e, delta)
        if r_e is not None:
            have_e += 1
            miss_e += select_rank(lam, mu_e) != r_e
    bound = math.exp(-0.5 * theta**2 * (n + q))
    freq = miss / trials
    report = _freq_check("cor4_rank_recovery", trials, freq, bound, confidence,
                         details=f"rule={mu_rule}, premise violated in {premise_bad}/{trials} draws")
    if premise_bad > 0.1 * trials:
        report = dataclasses.replace(report, passed=False,
                                     details="invalid premise: " + report.details)
    reports = [report]
    if have_e:
        reports.append(_freq_check("cor4_effective_rank", have_e, miss_e / have_e, bound,
                                   confidence, details=f"delta={delta:g}, effective rank defined "
                                   f"in {have_e}/{trials} draws"))
    return reports


def _c(theta):
    return 1 + 2 / theta


def rsc_oracle_bound(xa_d, mu, theta, kmax):
    """``min_{0<=k<=kmax} c^2 sum_{j>k} d_j^2 + 2 c mu k``."""
    c = _c(theta)
    tails = np.concatenate([np.cumsum((xa_d**2)[::-1])[::-1], [0.0]])
    ks = np.arange(kmax + 1)
    tail_k = tails[np.minimum(ks, xa_d.size)]
    return float(np.min(c * c * tail_k + 2 * c * mu * ks))


def mc_oracle_rsc(config, trials=200, rng=None, theta=1.0, xi=1.0, confidence=0.99):
    """Oracle inequalities for the restricted-rank fits and the RSC estimator.

    Reports, in order: the fixed-k bound on every draw and every k; its
    Gaussian high-probability version at ``k = r``; the penalized-estimator
    bound on the event ``(1 + theta) d1^2(PE) <= mu``; the frequency of that
    event; and the expectation bound, with ``mu`` the known-variance
    penalty ``(1 + theta)(1 + xi)^2 (sqrt(n) + sqrt(q))^2 sigma^2``.
    """
    rng = np.random.default_rng(rng)
    n, p, sigma = config.n, config.p, config.sigma
    c = _c(theta)
    kmax = min(n, p)
    fixed_k_bad = cor6_bad = on_event = on_event_bad = 0
    errs, exp_bounds = [], []
    q = None
    for _ in range(trials):
        x, a, e = draw_training(config, rng)
        y = x @ a + e
        design = design_summary(x)
        q = design.rank_q
        xa = x @ a
        xa_d = singular_values(xa)
        tails = np.concatenate([np.cumsum((xa_d**2)[::-1])[::-1], [0.0]])
        d1pe = _projected_top(design.col_basis, e)
        lam, vecs = projected_spectrum(design, y)
        b_hat = least_squares(design, x, y)
        draw_bad = False
        for k in range(1, kmax + 1):
            err_k = float(np.sum((fit_from_spectrum(x, b_hat, vecs, k).fitted - xa) ** 2))
            tail = tails[min(k, xa_d.size)]
            if err_k > c * c * tail + 2 * (1 + theta) * c * k * d1pe**2 + 1e-9 * max(1.0, err_k):
                draw_bad = True
            if k == config.r:
                cor6 = c * c * tail + 2 * c * (1 + theta) * (1 + xi) ** 2 * sigma**2 * k * (n + q)
                cor6_bad += err_k > cor6
        fixed_k_bad += draw_bad
        mu = oracle_mu(sigma, n, q, theta, xi)
        fit = rsc_fit(x, y, mu, design=design)
        err = float(np.sum((fit.fit.fitted - xa) ** 2))
        errs.append(err)
        if (1 + theta) * d1pe**2 <= mu:
            on_event += 1
            if err > rsc_oracle_bound(xa_d, mu, theta, kmax) + 1e-9 * max(1.0, err):
                on_event_bad += 1
        main = min(
            c * c * tails[min(k, xa_d.size)]
            + 2 * (1 + theta) * c * (1 + xi) ** 2 * sigma**2 * (math.sqrt(n) + math.sqrt(q)) ** 2 * k
            for k in range(1, kmax + 1)
        )
        remainder = 4 * (1 + theta) * c * kmax * sigma**2 * (1 + 1 / xi) * math.exp(-xi**2 * (n + q))
        exp_bounds.append(main + remainder)
    off_bound = math.exp(-xi**2 * (n + q) / 2)
    return [
        _check("thm5_fixed_rank_every_draw", trials, fixed_k_bad, 0,
               details="draws with any k violating the bound"),
        _freq_check("cor6_fixed_rank_whp", trials, cor6_bad / trials, off_bound, confidence,
                    details=f"k=r={config.r}"),
        _check("thm7_on_event", on_event, on_event_bad, 0,
               details=f"violations among {on_event} on-event draws"),
        _freq_check("thm7_event_frequency", trials, 1 - on_event / trials, off_bound, confidence,
                    details="frequency of (1+theta) d1^2(PE) > mu"),
        _check("cor8_expectation", trials, float(np.mean(errs)), float(np.mean(exp_bounds)),
               details="mean fit error vs mean bound"),
    ]


def mc_oracle_nnp(config, trials=100, rng=None, theta=1.0, opts=None, confidence=0.99):
    """Oracle inequality of the NNP estimator with ``B = A`` on ``d1(X'E) <= tau``.

    ``tau = (1 + theta) d1(X) sigma (sqrt(n) + sqrt(q))``. Also reports the
    event frequency and, report-only, the ratio of the fit error to
    ``min_{k<=r} sum_{j=k+1}^r d_j^2(XA) + c0(M) k sigma^2 (n + q)`` whose
    constant is not explicit.
    """
    rng = np.random.default_rng(rng)
    n, sigma = config.n, config.sigma
    on_event = bad = nonconv = 0
    ratios = []
    q = config.design_rank
    for _ in range(trials):
        x, a, e = draw_training(config, rng)
        y = x @ a + e
        design = design_summary(x)
        q = design.rank_q
        tau = tau_theoretical(sigma, design.top_singular_value, n, q, theta)
        fit = nnp_fit(x, y, tau, opts, design=design)
        nonconv += not fit.converged
        xa = x @ a
        err = float(np.sum((x @ fit.coefficients - xa) ** 2))
        if singular_values(x.T @ e)[0] <= tau:
            on_event += 1
            rhs = 4 * tau * float(np.sum(singular_values(a)))
            if err > rhs + 1e-6 * max(1.0, rhs):
                bad += 1
        xa_d = singular_values(xa)
        lam_p = design.min_nonzero_eigenvalue
        c0 = design.top_singular_value**2 / lam_p if lam_p > 0 else math.inf
        r = config.r
        ref = min(float(np.sum(xa_d[k:r] ** 2)) + c0 * k * sigma**2 * (n + q) for k in range(r + 1))
        ratios.append(err / ref if ref > 0 else math.inf)
    off_bound = math.exp(-theta**2 * (n + q) / 2)
    return [
        _check("thm10_on_event", on_event, bad, 0,
               details=f"violations among {on_event} on-event draws; {nonconv} fits not converged"),
        _freq_check("cor11_event_frequency", trials, 1 - on_event / trials, off_bound, confidence,
                    details="frequency of d1(X'E) > tau"),
        BoundCheckReport("thm12_ratio", trials, float(np.median(ratios)), float("nan"), None,
                         "median error / rate; constants unspecified, report only"),
    ]


def mc_adaptive_penalty(config, trials=200, rng=None, theta=1.0, xi=0.1, delta=0.1):
    """Risk of RSC with the ``S^2``-based penalty against the known-variance penalty.

    Reports the ratio of empirical risks (``max(ratio, 1/ratio) <= 2``), the
    accuracy of ``S^2`` (mean ``|S^2 - sigma^2| <= 0.05``) and the mean risk
    against the expectation bound for the data-driven penalty.
    """
    rng = np.random.default_rng(rng)
    n, p, sigma = config.n, config.p, config.sigma
    c = _c(theta)
    kmax = min(n, p)
    risk_s, risk_sigma, s2_dev, bounds = [], [], [], []
    for _ in range(trials):
        x, a, e = draw_training(config, rng)
        y = x @ a + e
        design = design_summary(x)
        q = design.rank_q
        m = x.shape[0]
        xa = x @ a
        s2 = noise_variance(design, y)
        s2_dev.append(abs(s2 - sigma**2))
        mu_s = adaptive_penalty_mu(s2, n, q, theta, xi, delta)
        mu_sigma = oracle_mu(sigma, n, q, theta, xi)
        for mu, store in ((mu_s, risk_s), (mu_sigma, risk_sigma)):
            if mu > 0:
                fitted = rsc_fit(x, y, mu, design=design).fit.fitted
            else:
                fitted = design.projector @ y
            store.append(float(np.sum((fitted - xa) ** 2)))
        xa_d = singular_values(xa)
        tails = np.concatenate([np.cumsum((xa_d**2)[::-1])[::-1], [0.0]])
        root = math.sqrt(n) + math.sqrt(q)
        main = min(c * c * tails[min(k, xa_d.size)]
                   + 2 * (1 + theta) * c * (1 + xi) ** 2 * sigma**2 * root**2 * k
                   for k in range(1, kmax + 1))
        rem1 = 4 * (1 + theta) * c * kmax * sigma**2 * (1 + 1 / xi) * math.exp(-xi**2 * (n + q) / 2)
        rem2 = (4 * (1 + theta) * c * kmax * sigma**2 * (2 + root**2 + root * math.sqrt(2 * math.pi))
                * math.exp(-delta**2 * n * (m - q) / (4 * (1 + delta))))
        bounds.append(main + rem1 + rem2)
    mean_s, mean_sigma = float(np.mean(risk_s)), float(np.mean(risk_sigma))
    if mean_s == 0 and mean_sigma == 0:
        ratio = 1.0
    elif mean_s == 0 or mean_sigma == 0:
        ratio = math.inf
    else:
        ratio = max(mean_s / mean_sigma, mean_sigma / mean_s)
    return [
        _check("thm9_risk_ratio", trials, ratio, 2.0,
               details=f"risk with S^2 {mean_s:.4g}, with sigma^2 {mean_sigma:.4g}"),
        _check("s2_consistency", trials, float(np.mean(s2_dev)), 0.05,
               details="mean |S^2 - sigma^2|"),
        _check("thm9_expectation", trials, mean_s, float(np.mean(bounds)),
               details="mean fit error vs mean bound"),
    ]


def lemma16_bound(mean):
    return mean**2 + mean * math.sqrt(2 * math.pi) + 2


def lemma17_bound(d, t):
    return math.exp(-t * t * d / (4 * (1 + t)))


def mc_tail_lemmas(trials=10000, rng=None, m=50, n=10, q=10, xi=0.2, confidence=0.99,
                   dofs=(100, 475), ts=(0.1, 0.3)):
    """Second-moment and chi-square lower-tail inequalities.

    The second-moment inequality is instantiated with ``d1(P E)`` for
    standard Gaussian E (its mean replaced by the empirical mean); the
    chi-square inequality ``P{Z_d <= (1 - t) d} <= exp(-t^2 d / (4 (1 + t)))``
    is checked for each (d, t).
    """
    if trials < 10000:
        raise ValueError("use at least 10000 trials")
    rng = np.random.default_rng(rng)
    design = design_summary(random_design(m, q, rng))
    vals = np.array([_projected_top(design.col_basis, rng.standard_normal((m, n)))
                     for _ in range(trials)])
    mean = float(vals.mean())
    reports = [
        _check("lemma16_second_moment", trials, float(np.mean(vals**2)), lemma16_bound(mean),
               details=f"X = d1(PE), mean {mean:.4g}"),
        _check("lemma16_excess", trials,
               float(np.mean(np.clip(vals**2 - (1 + xi) ** 2 * mean**2, 0, None))),
               2 * (1 + 1 / xi) * math.exp(-xi**2 * mean**2 / 2), details=f"xi={xi:g}"),
    ]
    for d in dofs:
        z = rng.chisquare(d, size=trials)
        for t in ts:
            freq = float(np.mean(z <= (1 - t) * d))
            reports.append(_freq_check(f"lemma17_d={d}_t={t:g}", trials, freq, lemma17_bound(d, t),
                                       confidence))
    return reports


def mc_tightness_probabilities(x, a, mu, trials=1000, rng=None, sigma=1.0):
    """Sandwich ``P1 <= P{k_hat != r} <= P2`` for the RSC rank at penalty `mu`.

    ``P1`` is the probability of ``sqrt(mu) <= d_{2r+1}(PE)`` or
    ``d1(PE) < sqrt(mu) - d_r(XA)``; ``P2`` that of
    ``d1(PE) >= min(sqrt(mu), d_r(XA) - sqrt(mu))``. The event inclusions
    hold draw by draw, so both reports count per-draw violations.
    """
    rng = np.random.default_rng(rng)
    design = design_summary(x)
    xa = x @ a
    xa_d = singular_values(xa)
    r = int(np.sum(xa_d > 1e-10 * max(xa_d[0], 1e-300)))
    root = math.sqrt(mu)
    d_r = xa_d[r - 1] if r else math.inf
    e1 = e2 = miss = low_bad = high_bad = 0
    for _ in range(trials):
        e = sigma * rng.standard_normal(xa.shape)
        y = xa + e
        pe_d = singular_values(design.col_basis.T @ e)
        lam, _ = projected_spectrum(design, y)
        k_hat = select_rank(lam, mu)
        wrong = k_hat != r
        d_2r1 = pe_d[2 * r] if 2 * r < pe_d.size else 0.0
        ev1 = root <= d_2r1 or pe_d[0] < root - d_r
        ev2 = pe_d[0] >= min(root, d_r - root)
        e1 += ev1
        e2 += ev2
        miss += wrong
        low_bad += ev1 and not wrong
        high_bad += wrong and not ev2
    details = f"P1={e1 / trials:.4g}, P(k_hat!=r)={miss / trials:.4g}, P2={e2 / trials:.4g}"
    return [
        _check("tightness_lower_inclusion", trials, low_bad, 0, details=details),
        _check("tightness_upper_inclusion", trials, high_bad, 0, details=details),
    ]


CHECKS = {
    "lemma3": "mc_projected_noise",
    "prop15": "mc_subgaussian_projected_noise",
    "cor4": "mc_consistency",
    "thm7": "mc_oracle_rsc",
    "thm10": "mc_oracle_nnp",
    "thm9": "mc_adaptive_penalty",
    "tails": "mc_tail_lemmas",
}
