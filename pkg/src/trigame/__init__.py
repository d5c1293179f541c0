"""Solver and verification harness for a three-level incentive hierarchy
playing a linear-quadratic stochastic differential game under a disturbance
attenuation constraint."""

from .errors import (ConfigError, DivergenceError, InvertibilityError,
                     MatchingError, StructureError, TrigameError,
                     VerificationFailure)
from .incentive import (Level1Parameters, Level2Parameters, MatchingReport,
                        SolverConfig, incentive_identity_check,
                        level1_recursion, level2_recursion)
from .model import (CentralizedForm, Dimensions, ProblemSpec,
                    ValidationReport, assemble_centralized,
                    assemble_executive_view, assemble_manager_view,
                    component_gains, validate_problem)
from .presets import (BENCHMARK_TERMINAL_ETA, BENCHMARK_TERMINAL_RHO,
                      BENCHMARK_TERMINAL_ZETA, benchmark_config_path,
                      benchmark_spec)
from .riccati import (RiccatiPath, SecondMomentPath, TimeGrid,
                      integrate_backward, second_moment, solve_P, step_Phi,
                      step_Pi)
from .simulate import (CostReport, GainDeviation, NoiseBundle,
                       TrajectoryBundle, estimate_costs, sample_brownian,
                       simulate_closed_loop, simulate_hierarchy)
from .team import (AnalyticCosts, TeamSolution, analytic_costs,
                   compute_Lambda, team_gains)
from .verify import (NashProbeReport, VerificationReport, VerifyConfig,
                     convexity_gram, hinf_gain_probe, nash_probe,
                     riccati_residual, run_verification, sample_deviation)

__version__ = "0.1.0"
