"""Fit RSC and NNP to one simulated instance and compare their ranks.

Run with ``python demos/fit_one_instance.py``.
"""

import numpy as np

from rankselect import (
    ExperimentConfig,
    RngSpec,
    adaptive_mu,
    calibrated_rank,
    design_summary,
    draw_instance,
    nnp_fit,
    noise_variance,
    rsc_fit,
    tau_theoretical,
)


def main():
    cfg = ExperimentConfig("exp1", m=100, p=25, n=25, r=10, rho=0.5, b=0.3)
    inst = draw_instance(cfg, RngSpec(seed=7).generator())
    x, y, a = inst.x, inst.y, inst.a
    d = design_summary(x)
    n = y.shape[1]

    s2 = noise_variance(d, y)
    mu = adaptive_mu(s2, n, d.rank_q)
    rsc = rsc_fit(x, y, mu, design=d)
    print(f"noise variance estimate {s2:.3f}, mu_adapt {mu:.1f}")
    print(f"RSC selected rank {rsc.selected_rank} (true {cfg.r})")
    print("eigenvalues of Y'PY vs mu:", np.round(rsc.eigenvalues[:12], 1))

    # the theoretical level is conservative and shrinks hard; see rank_paths.py
    tau = tau_theoretical(np.sqrt(s2), d.top_singular_value, n, d.rank_q, 1.0)
    nnp = nnp_fit(x, y, tau, design=d)
    k = calibrated_rank(d.gram, nnp.coefficients, tau)
    print(f"NNP at tau {tau:.1f}: rank {nnp.rank}, calibrated rank {k}, "
          f"{nnp.iterations} iterations, KKT residual {nnp.kkt_residual:.1e}")

    for name, b in (("RSC", rsc.coefficients), ("NNP", nnp.coefficients)):
        err = 100 * np.sum((x @ (b - a)) ** 2) / (x.shape[0] * n)
        print(f"{name}: 100/(mn) ||X(B - A)||^2 = {err:.2f}")


if __name__ == "__main__":
    main()
