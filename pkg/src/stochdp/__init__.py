"""Stochastic dynamic programming with unbounded returns and unbounded shocks.

The library iterates the Bellman operator on tabulated functions that are
piecewise multilinear in the endogenous state and tabulated at finitely many
shock nodes, monitors convergence through sup-in-state / L1-in-shock
seminorms, and certifies existence, uniqueness, and error bounds through a
companion operator acting on tables of seminorm values.
"""

from .bellman import (BellmanCop, FeasibleSet, MaximizerOptions, ModelSpec,
                      PolicyFunction, apply_bellman, cop_apply, extract_policy,
                      markov_operator, psi, seminorm_family, seminorm_profile,
                      seminorm_table, simulate_policy_value, truncation_bound,
                      truncation_horizon)
from .contraction import (CopOperator, IterationReport, PseudometricFamily,
                          ScaledCop, SeminormTable, ball_membership,
                          check_geometric_tail, cop_series_R0, iterate_fixed_point)
from .counterexample import (currency_claim_gap, currency_dp_residual, currency_value,
                             discontinuity_gap, markov_image)
from .errors import (ConditionError, ConfigError, DivergenceError, FeasibilityError,
                     GridError, NumericError, StochDPError)
from .growth import (GrowthParams, GrowthSolution, check_growth_condition, gamma_const,
                     growth_R0, growth_l0, lagrange_relaxation_optimum,
                     single_capital_model, solve_growth, theta_const)
from .kernels import (AppendixCKernel, AtomLaw, DegenerateKernel, DegenerateLaw,
                      FoldedLogNormalLaw, InnovationLaw, KernelQuadrature,
                      LinearARKernel, LogLogARKernel, RectifiedLogNormalLaw,
                      ShiftedLogNormalLaw, TransitionKernel, conditional_expectation,
                      moment_theta, moment_theta_mc, sample_path, spectral_norm,
                      successor_closed_nodes)
from .ledger import (BoundLedger, flat_bound_ledger, residual_certificate,
                     verify_B6_geometric)
from .lucas import (IsoelasticPlusLinearUtility, LucasParams, PriceFunction,
                    affine_bound_gap, build_household_model, equilibrium_gap,
                    h_function, household_R0, neumann_phi, price_bound_constants,
                    price_from_phi, solve_household, solve_phi)
from .values import (CompactSetSpec, ValueFunction, evaluate, multilinear, seminorm,
                     seminorm_distance, write_csv)

__version__ = "0.1.0"
