"""Run-length analysis and control-limit design for EWMA charts on subgroup
variances of normal data, with and without phase-I estimation uncertainty."""

from .conditional import (
    ChartConfig,
    Limits,
    RLCurve,
    arl_conditional,
    rl_quantile_conditional,
    sf_conditional,
    sf_markov_chain,
    transition_density,
)
from .design import (
    ArlRule,
    QuantileRule,
    TwoSidedDesign,
    limit_vs_m_profile,
    solve_two_sided_arl_unbiased,
    solve_two_sided_quasi,
    solve_two_sided_symmetric,
    solve_two_sided_unbiased,
    solve_upper,
)
from .errors import (
    ChartError,
    DivergenceError,
    InfeasibleTargetError,
    SaturationError,
    SolverError,
)
from .numerics import (
    QuadratureRule,
    chebyshev_T_shifted,
    chebyshev_nodes,
    chi2_cdf,
    chi2_pdf,
    chi2_quantile,
    chi2_sf,
    gauss_legendre,
)
from .simulate import (
    EmpiricalRL,
    SimulationSpec,
    estimate_unconditional,
    simulate_phase1_estimate,
    simulate_run_length,
)
from .unconditional import (
    MixingRule,
    PhaseIConfig,
    arl_unconditional,
    build_mixing_rule,
    cdf_unconditional,
    percentile_marginal,
    quantile_unconditional,
    sf_unconditional,
)

__version__ = "0.1.0"
