"""Trace rank and validation error along the RSC and NNP tuning paths.

Prints, for one Exp1 instance, where each method attains its smallest
validation error. RSC typically lands on the true rank 10 while the
validation-tuned NNP keeps a larger rank.
"""

from rankselect import ExperimentConfig, RngSpec, draw_instance, fit_paths


def main():
    cfg = ExperimentConfig("exp1", m=100, p=25, n=25, r=10, rho=0.1, b=0.3)
    inst = draw_instance(cfg, RngSpec(seed=3).generator())
    recs = fit_paths(inst.x, inst.y, inst.a, (inst.x_val, inst.y_val), grid_points=50)
    for method in ("RSC", "NNP"):
        path = [r for r in recs if r["method"] == method]
        best = min(path, key=lambda r: r["val_mse"])
        print(f"{method}: {len(path)} grid points, validation minimum at tuning "
              f"{best['tuning']:.3g} with rank {best['rank']} "
              f"(calibrated {best['calibrated_rank']}), MSE(XA) {best['mse_xa']:.2f}")
    print("\nrank along the RSC path (increasing mu):")
    print(" ".join(str(r["rank"]) for r in recs if r["method"] == "RSC"))


if __name__ == "__main__":
    main()
