"""Collision-rate Monte Carlo for colloidal pairs and mild-form coagulation-diffusion solvers."""

from .densities import (
    DriftBoundLaw,
    GaussianLaw,
    aronson_envelope,
    density_ratio_check,
    drift_density_bounds,
    ever_collide_probability,
    extremal_drift_density,
    fit_aronson_constant,
    gaussian_density,
    pair_meeting_density,
)
from .experiments import (
    CollisionEstimate,
    FunctionalSpec,
    experiment_brownian_limit,
    experiment_ou_fast,
    experiment_ou_slow,
    experiment_periodic_drift,
    mc_estimate,
    reference_functional,
)
from .kernels import (
    DragLaw,
    KernelSpec,
    MotionModel,
    WeightSpec,
    brownian_kernel,
    c_brownian,
    c_ou,
    check_kernel_domination,
    default_weight,
    diffusivity_law,
    ou_mass_kernel,
    pair_bound_weight,
)
from .sde import (
    CollisionOutcome,
    OUPairConfig,
    PairConfig,
    bridge_collision_check,
    run_first_collision,
    step_brownian_pair,
    step_ou_pair_exact,
)
from .smoluchowski import (
    MassField,
    MassGrid,
    MomentReport,
    Problem,
    SignedMassField,
    apply_drift_semigroup,
    apply_heat_semigroup,
    coag_gain,
    coag_loss,
    homogeneous_oracle,
    linearized_solve,
    load_checkpoint,
    moment_monitor,
    picard_solve,
    save_checkpoint,
    strang_step,
)

__version__ = "0.1.0"
