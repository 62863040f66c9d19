"""Entanglement structure of 1D trapped particles with inverse-power repulsion.

Two routes to the one-particle density matrix and its entropies:

- strong coupling, exactly: classical crystal -> normal modes -> per-site
  Gaussian kernels -> closed-form occupancy ladders and entropies;
- finite coupling, numerically: Jastrow trial state -> variational scale ->
  grid-discretized kernel -> occupancies and entropies.
"""

from .crystal import (
    EquilibriumConfig,
    SystemSpec,
    evaluate_potential,
    potential_energy,
    potential_gradient,
    potential_hessian,
    scale_positions,
    solve_equilibrium,
)
from .entropy import (
    EntropyReport,
    asymptotic_report,
    renyi_sum,
    site_entropy_closed,
    site_entropy_direct,
    total_entropy,
)
from .finiteg import (
    FiniteRunResult,
    JastrowAnsatz,
    MonteCarloIntegrator,
    NystromGrid,
    QuadratureIntegrator,
    RDMatrix,
    default_grid,
    diagonalize_rdm,
    finite_report,
    optimize_alpha,
    rdm_from_kernel,
    rdm_matrix,
    rdm_monte_carlo,
    rdm_quadrature,
    run_finite,
)
from .modes import NormalModes, decompose, hessian, jacobi_eigh
from .rdm import (
    AsymptoticRDM,
    AsymptoticSolution,
    GaussianKernel,
    Orbital,
    SchmidtSite,
    assemble_asymptotic_rdm,
    asymptotic_sites,
    degenerate_pair,
    mehler_schmidt,
    natural_orbital,
    site_kernel,
)
from .twobody import (
    TONKS,
    CorrelationFactor,
    OddSeries,
    RelativeSolution,
    magic_g,
    make_correlation_factor,
    relative_ground_odd,
    series_coefficients,
    tonks_factor,
)

__version__ = "0.1.0"
