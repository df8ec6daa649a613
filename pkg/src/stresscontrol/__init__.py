"""Control synthesis and verification for distress propagation dynamics.

The toolkit discretizes a logistic reaction-diffusion model on Neumann
domains, synthesizes the attenuating state feedback from the algebraic
Riccati equation, simulates the controlled nonlinear dynamics, and certifies
the stability and gain claims numerically.
"""

__version__ = "0.1.0"

from .dynamics import (DisturbanceSpec, HjFeedback, LinearFeedback,
                       ModelParams, StateField, Trajectory, default_dt,
                       make_disturbance, reaction, simulate, step)
from .spatial import (Channel, Discretization, GridSpec, IoLayout,
                      IoOperators, apply_laplacian, build_grid,
                      build_io_operators, inner_product)
from .synthesis import (HjRepresentation, LinearSystem, PbhReport,
                        RiccatiSolution, assemble_linearization,
                        check_stabilizability_detectability, feedback_gain,
                        hj_feedback, hj_quadratic_correction, hj_residual,
                        minimal_gamma, solve_h_infinity_riccati)
from .verify import (BasinReport, Certificate, DecrementReport, GainEstimate,
                     SaddleCostReport, basin_sweep, closed_loop_hinf_norm,
                     contraction_certificate, empirical_l2_gain,
                     hj_residual_slopes, lyapunov_decrement_check,
                     saddle_cost_check, standard_gain_ensemble)

__all__ = [
    "__version__",
    "Channel", "Discretization", "GridSpec", "IoLayout", "IoOperators",
    "apply_laplacian", "build_grid", "build_io_operators", "inner_product",
    "DisturbanceSpec", "HjFeedback", "LinearFeedback", "ModelParams",
    "StateField", "Trajectory", "default_dt", "make_disturbance", "reaction",
    "simulate", "step",
    "HjRepresentation", "LinearSystem", "PbhReport", "RiccatiSolution",
    "assemble_linearization", "check_stabilizability_detectability",
    "feedback_gain", "hj_feedback", "hj_quadratic_correction", "hj_residual",
    "minimal_gamma", "solve_h_infinity_riccati",
    "BasinReport", "Certificate", "DecrementReport", "GainEstimate",
    "SaddleCostReport", "basin_sweep", "closed_loop_hinf_norm",
    "contraction_certificate", "empirical_l2_gain", "hj_residual_slopes",
    "lyapunov_decrement_check", "saddle_cost_check", "standard_gain_ensemble",
]
