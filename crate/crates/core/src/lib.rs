// SPDX-License-Identifier: Apache-2.0

//! Asymptotic statistics of continuously monitored quantum Markov systems.
//!
//! Given a family of Lindblad models `(H(θ), {L_j(θ)})`, this crate computes
//!
//! * the quantum Fisher information per unit time of the joint system and
//!   output state,
//! * the classical Fisher informations of the total counts and of the
//!   integrated homodyne current,
//!
//! and checks local asymptotic normality both exactly (matrix exponentials of
//! finite-time tilted generators) and empirically (Monte Carlo unravellings).
//!
//! The numerical core is generic over the real scalar type through [`Real`];
//! the `*64` aliases below fix it to `f64`, which is what every tolerance in
//! the crate is calibrated for.
//!
//! Vectorization convention used throughout: `vec(X)` stacks the columns of
//! `X`, so `A·X·B ↦ (Bᵀ ⊗ A)·vec(X)`. Two-level models use the ordered basis
//! `(|e⟩, |g⟩)` with `σ₋ = |g⟩⟨e|`.

pub mod asymptotics;
pub mod error;
pub mod fisher;
pub mod linalg;
pub mod model;
pub mod stationary;
pub mod superop;
pub mod trajectories;

use nalgebra::RealField;
use num_traits::ToPrimitive;

pub use error::{Error, Result};
pub use nalgebra::Complex;

/// Real scalar the numerical core is generic over (`f32`, `f64`, ...).
pub trait Real: RealField + Copy + ToPrimitive {}

impl<T: RealField + Copy + ToPrimitive> Real for T {}

/// Converts an `f64` literal into the working scalar.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    nalgebra::convert(x)
}

/// Lossy conversion back to `f64` for reporting.
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

pub type C64 = Complex<f64>;
pub type CMatrix<T> = nalgebra::DMatrix<Complex<T>>;
pub type CVector<T> = nalgebra::DVector<Complex<T>>;

pub type CMatrix64 = CMatrix<f64>;
pub type ParamModel64 = model::ParamModel<f64>;
pub type ModelPoint64 = model::ModelPoint<f64>;
pub type SuperOp64 = superop::SuperOp<f64>;
pub type StationaryAnalysis64 = stationary::StationaryAnalysis<f64>;
pub type Analysis64 = fisher::Analysis<f64>;
pub type FisherReport64 = fisher::FisherReport<f64>;
pub type LanSweep64 = asymptotics::LanSweep<f64>;

pub use asymptotics::{LanKind, LanSweep};
pub use fisher::{Analysis, FisherReport};
pub use model::{ModelPoint, ParamModel};
pub use stationary::{StationaryAnalysis, StationaryOptions};
pub use superop::{Picture, SuperOp};
