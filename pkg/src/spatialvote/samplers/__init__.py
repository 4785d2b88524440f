"""Random streams, distributions, integrators and convergence diagnostics."""

from .diagnostics import (
    MIN_DRAWS,
    ChainDiagnostics,
    DiagnosticsUnavailable,
    diagnostics,
    effective_sample_size,
    split_rhat,
    thin,
)
from .distributions import (
    bessel_ratio,
    gamma_sample,
    log_bessel_i0,
    make_rng,
    truncated_normal_sample,
    von_mises_logpdf,
    von_mises_sample,
    wrap_angle,
)
from .hmc import (
    DualAveraging,
    HMCRun,
    HMCState,
    IntegratorError,
    Kinetic,
    hmc_step,
    leapfrog,
    run_hmc,
)

__all__ = [
    "MIN_DRAWS",
    "ChainDiagnostics",
    "DiagnosticsUnavailable",
    "DualAveraging",
    "HMCRun",
    "HMCState",
    "IntegratorError",
    "Kinetic",
    "bessel_ratio",
    "diagnostics",
    "effective_sample_size",
    "gamma_sample",
    "hmc_step",
    "leapfrog",
    "log_bessel_i0",
    "make_rng",
    "run_hmc",
    "split_rhat",
    "thin",
    "truncated_normal_sample",
    "von_mises_logpdf",
    "von_mises_sample",
    "wrap_angle",
]
