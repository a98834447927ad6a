// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("hamiltonian is not hermitian (defect {defect:.3e})")]
    NonHermitianHamiltonian { defect: f64 },

    #[error("coupling z must be non-zero; the two-level model is reducible at z = 0")]
    ZeroCoupling,

    #[error("Fock cutoff {cutoff} too small: tail weight {tail_ratio:.3e} relative to the peak")]
    CutoffTooSmall { cutoff: usize, tail_ratio: f64 },

    #[error("channel {channel} out of range (model has {channels} jump operators)")]
    BadChannel { channel: usize, channels: usize },

    #[error("matrix exponential overflow: |tau*g|_1 = {norm:.3e}")]
    Overflow { norm: f64 },

    #[error("gap certificate failed, generator is not irreducible: {kernel_dim} eigenvalues within {tol:.3e} of zero")]
    NotIrreducible { kernel_dim: usize, tol: f64 },

    #[error("rank certificate failed, stationary state is not full rank: smallest eigenvalue {min_eig:.3e} <= {rank_tol:.3e}")]
    NotFullRank { min_eig: f64, rank_tol: f64 },

    #[error("no eigenvalue within {tol:.3e} of zero; closest has modulus {closest:.3e}")]
    NoStationaryState { tol: f64, closest: f64 },

    #[error("bordered system for the restricted inverse is singular")]
    SingularOnComplement,

    #[error("second derivatives of the model are required but not available")]
    MissingSecondDerivatives,

    #[error("{quantity}: imaginary residue {residue:.3e} exceeds tolerance")]
    ImaginaryResidue { quantity: &'static str, residue: f64 },

    #[error("classical information {information:.6e} exceeds quantum Fisher information {qfi:.6e} ({which})")]
    BoundViolated {
        which: &'static str,
        information: f64,
        qfi: f64,
    },

    #[error("characteristic function vanishes (|cf| = {modulus:.3e}) at t = {t}, arg = {arg}; shrink the grid")]
    BranchCut { t: f64, arg: f64, modulus: f64 },

    #[error("time step too large: per-step jump probability {probability:.3e}")]
    StepTooLarge { probability: f64 },

    #[error("conditional state blew up (trace {trace:.6e}) at step {step}")]
    StateBlowup { step: usize, trace: f64 },

    #[error("estimator undefined: |mu| = {mu:.3e} is degenerate")]
    DegenerateMean { mu: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for the irreducibility certificates (kernel, rank, existence).
    pub fn is_irreducibility(&self) -> bool {
        matches!(
            self,
            Error::NotIrreducible { .. }
                | Error::NotFullRank { .. }
                | Error::NoStationaryState { .. }
                | Error::SingularOnComplement
        )
    }
}
