"""Data-driven 2DOF PI controller tuning for noisy MIMO LTI systems.

Feedforward estimation from closed-loop experiments, zeroth-order PI gain
optimization over a constraint set, a model-based baseline (ZOH + Ho-Kalman +
projected gradient on the identified model), and analytic Lyapunov-based
oracles for verification.
"""

from .errors import (DivergenceError, EstimationError, IdentificationError,
                     RankError, SingularityError, StabilityError)
from .linmath import (VanLoanResult, expm, right_pinv, sample_frobenius_sphere,
                      solve_lyapunov_continuous, solve_lyapunov_discrete, van_loan)
from .plant import (AugmentedClosedLoop, Equilibrium, InitialStateDistribution,
                    LtiPlant, PiGain, RolloutSample, build_closed_loop,
                    compute_equilibrium, generate_random_plant, is_stabilizing,
                    load_plant, make_pi_rollout, save_plant, simulate_closed_loop)
from .oracle import (CostGradient, analytic_cost, analytic_gradient,
                     finite_horizon_moments, nonconvexity_witness,
                     stationarity_measure)
from .feedforward import (FeedforwardEstimate, FeedforwardBounds, estimate_decay_constant,
                          estimate_feedforward, feedforward_bounds)
from .tuner import (ConstraintBox, PgdConfig, TuneTrace, ZoConfig, estimate_gradient,
                    project_onto_omega, tune_gains)
from .baseline import (DiscreteEquilibrium, DiscretePlant, IdentifiedModel,
                       discrete_cost_gradient, discrete_equilibrium, discretize_zoh,
                       identify_ho_kalman, simulate_zoh_closed_loop,
                       tune_gains_modelbased)
from .bench import (ExperimentConfig, MetricRow, eval_fbar, matched_nid,
                    proposed_sim_time, run_experiment, steady_state_rel_err)

__version__ = "0.1.0"
