//! Vector fields, Lie derivatives and brackets, and the dithered system they
//! assemble into.

mod checks;
mod field;
mod lipschitz;
mod system;

pub use checks::{check_vanishing_at_origin, VanishingCondition, VanishingEntry, VanishingReport};
pub use field::{
    evaluate_field, lie_bracket, lie_bracket_probe, lie_derivative, lie_derivative_probe, second_lie_derivative,
    time_partial_lie_derivative, JacobianEval, Matrix, Probe, Vector, VectorField, DEFAULT_FD_STEP,
};
pub use lipschitz::{estimate_lipschitz, SampleBox};
pub use system::{Channel, DitheredSystem};
