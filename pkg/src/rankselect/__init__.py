"""Reduced-rank multivariate regression with the Rank Selection Criterion.

The package fits ``Y = X A + E`` with a low-rank ``A`` by penalizing
``rank(B)`` (RSC) or the nuclear norm of ``B`` (NNP), and ships the
Monte Carlo harness used to compare them and to check their bounds.
"""

from .gsvd import MetricGsvd, gsvd_metric, metric_sqrt, truncate_gsvd
from .linalg import (
    DesignSummary,
    NumericalError,
    design_summary,
    moore_penrose,
    numeric_rank,
    singular_values,
    sym_eigendecomp,
    thin_svd,
)
from .nnp import (
    NnpFit,
    SolverOptions,
    calibrated_rank,
    kkt_residual,
    nnp_calibrated,
    nnp_fit,
    svt,
    tau_theoretical,
)
from .rsc import (
    PenaltyConfig,
    RankKFit,
    RscFit,
    adaptive_mu,
    effective_rank,
    noise_variance,
    restricted_rank,
    rsc_fit,
    select_rank,
    solution_path,
)
from .simulate import (
    ExperimentConfig,
    RngSpec,
    draw_instance,
    fit_paths,
    run_experiment,
    tightness_study,
)

__version__ = "0.1.0"
