"""Gradients of layer-stepped neural ODEs.

Networks whose layers discretise a parameterised flow with the two-step
(second-order) recursion get chain-rule gradients that oscillate between
layers and never converge to the continuum functional gradient. This
package reproduces the effect, certifies the closed-form reverse
recursions against a tape engine and finite differences, solves the
continuum costate for ground truth, and applies the block-banded averaging
post-process that restores second-order accuracy.
"""

from .adjoint import (
    AdjointPath,
    ContinuumSolution,
    FunctionalDerivative,
    LinearModelOracle,
    adjoint_solve,
    continuum_solution,
    functional_derivative,
    linear_model_oracle,
)
from .averaging import AveragingMatrix, gradient_averaging_matrix, propagator_averaging_matrix
from .backprop import (
    RAW,
    TIMES_L,
    Backpropagator,
    GradientGrid,
    LossSpec,
    assemble_gradient,
    euler_backprop,
    fd_gradient,
    layer_scaled_rows,
    leapfrog_backprop,
    loss_value,
    relative_deviation,
    vanilla_gradient,
)
from .experiments import (
    ExperimentConfig,
    NumericalError,
    alternation_fraction,
    build_problem,
    default_config,
    fit_rate,
    gradient_truth_error,
    linear_config,
    load_config,
    run_convergence,
    run_gradcheck,
    run_oscillation,
    run_train,
)
from .fields import (
    CustomField,
    JacobianReport,
    LinearField,
    LinearReadout,
    TanhField,
    TanhLinearReadout,
    TrigWeightPath,
    fd_validate,
    make_field,
    make_readout,
)
from .integrators import (
    EULER,
    LEAPFROG,
    REFERENCE,
    Trajectory,
    WeightGrid,
    euler_trajectory,
    leapfrog_trajectory,
    reference_trajectory,
)
from .reports import SchemaError, read_csv, write_csv
from .tape import Tape, TapeBudgetError, tape_gradient, tape_pullback

__version__ = "0.1.0"
