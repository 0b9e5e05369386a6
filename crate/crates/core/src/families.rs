//! Named test cocycles used by the experiments and the CLI.

use crate::cocycle::Cocycle;
use crate::error::{LabError, Result};
use crate::jacobi::toy_two_step;
use crate::mat2::Mat2;

/// `(diag(θ_1, 1/θ_1), …)` with the given probabilities.
pub fn diag_cocycle(thetas: &[f64], probs: &[f64]) -> Result<Cocycle> {
    if thetas.iter().any(|t| *t == 0.0 || !t.is_finite()) {
        return Err(LabError::ZeroEigenvalue);
    }
    Cocycle::new(thetas.iter().map(|t| Mat2::diag(*t, 1.0 / t)).collect(), probs.to_vec())
}

/// The diagonal cocycle `θ = (2, 8)` with a rotation by `eta` mixed into the
/// first member: `(diag(2, 1/2)·R(η), diag(8, 1/8))`, equiprobable.
///
/// `ρ(B_η)` is of order `η`, and `B_0` is diagonal.
pub fn b_eta(eta: f64) -> Result<Cocycle> {
    Cocycle::uniform(vec![Mat2::diag(2.0, 0.5) * Mat2::rotation(eta), Mat2::diag(8.0, 0.125)])
}

/// The unperturbed member of the `b_eta` family.
pub fn b_eta_base() -> Cocycle {
    b_eta(0.0).expect("diagonal members are invertible")
}

/// Two-step transfer matrices of the alternating-weight toy operator at
/// energy `e`, one member per weight value.
pub fn toy_process(e: f64, omegas: &[f64], probs: &[f64]) -> Result<Cocycle> {
    let mats = omegas.iter().map(|w| toy_two_step(*w, e)).collect::<Result<Vec<_>>>()?;
    Cocycle::new(mats, probs.to_vec())
}
