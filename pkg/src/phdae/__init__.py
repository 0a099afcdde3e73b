"""Structure-preserving modeling and simulation of port-Hamiltonian
descriptor systems: model representation and validation, model algebra
(transformation, autonomization, interconnection), Dirac-structure
lifting, and Gauss-Legendre collocation with exact discrete energy
balance for quadratic Hamiltonians."""

from .model import (
    LTIModel,
    PHDAEModel,
    ValidationReport,
    constant,
    dissipation_check,
    lti_to_model,
    pbe_residual,
    validate_structure,
)
from .transform import (
    InterconnectionSpec,
    TransformSpec,
    affine_transform,
    apply_transformation,
    autonomize,
    autonomized_input,
    identity_transform,
    interconnect,
)
from .dirac import (
    DiracPoint,
    dimension_check,
    lift,
    membership,
    pairing,
    skew_map,
)
from .collocation import (
    ButcherTableau,
    NewtonError,
    NewtonOptions,
    StepRecord,
    Trajectory,
    consistent_init,
    convergence_study,
    discrete_energy_report,
    gauss_legendre_tableau,
    integrate,
    step,
)
from .circuits import (
    CircuitParams,
    ControlPlan,
    build_dc_network,
    circuit_lti,
    desired_state,
    feedback_model,
    ramp_control,
    ramp_then_hold,
    shifted_hamiltonian,
)
from .modelio import LTIFile, ModelFileError, format_lti_model, load_lti_file

__version__ = "0.1.0"

__all__ = [
    "ButcherTableau", "CircuitParams", "ControlPlan", "DiracPoint",
    "InterconnectionSpec", "LTIFile", "LTIModel", "ModelFileError",
    "NewtonError", "NewtonOptions", "PHDAEModel", "StepRecord",
    "Trajectory", "TransformSpec", "ValidationReport",
    "affine_transform", "apply_transformation", "autonomize",
    "autonomized_input", "build_dc_network", "circuit_lti", "consistent_init",
    "constant", "convergence_study", "desired_state", "dimension_check",
    "discrete_energy_report", "dissipation_check", "feedback_model",
    "format_lti_model", "gauss_legendre_tableau", "identity_transform",
    "integrate", "interconnect", "lift", "load_lti_file", "lti_to_model",
    "membership", "pairing", "pbe_residual", "ramp_control",
    "ramp_then_hold", "shifted_hamiltonian", "skew_map", "step",
    "validate_structure",
]
