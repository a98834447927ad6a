// SPDX-License-Identifier: Apache-2.0

//! Stationary state, irreducibility certificates, and the inverse of the
//! generator on observables with zero stationary mean.

use nalgebra::{Complex, ComplexField, DMatrix, DVector};

use crate::linalg::{self, real};
use crate::model::ModelPoint;
use crate::superop::{lindblad_schrodinger, Picture, SuperOp};
use crate::{lit, to_f64, CMatrix, Error, Real, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StationaryOptions {
    /// Smallest admissible eigenvalue of the stationary state.
    pub rank_tol: f64,
    /// Eigenvalues within `gap_tol·max(1, ‖gen‖₁)` of zero count as kernel.
    pub gap_tol: f64,
    /// For Fock-truncated models: replace the full-rank certificate by a
    /// bound on `ρ(cutoff)/max_n ρ(n)`, the weight left in the top level.
    pub fock_tail_tol: Option<f64>,
}

impl Default for StationaryOptions {
    fn default() -> Self {
        StationaryOptions {
            rank_tol: 1e-10,
            gap_tol: 1e-10,
            fock_tail_tol: None,
        }
    }
}

/// Stationary state of an irreducible generator together with the maps
/// `P(X) = Tr(ρ_ss X)·𝟙`, `Q = id − P` and the restricted inverse `L̃`
/// satisfying `L̃L₀ = L₀L̃ = Q`.
#[derive(Clone, Debug)]
pub struct StationaryAnalysis<T: Real> {
    pub rho_ss: CMatrix<T>,
    pub gap: T,
    pub min_eig: T,
    /// Liouvillian spectrum, block by block.
    pub eigenvalues: Vec<Complex<T>>,
    /// Heisenberg generator `L₀`.
    pub l0: SuperOp<T>,
    pub p: SuperOp<T>,
    pub q: SuperOp<T>,
    pub ltilde: SuperOp<T>,
}

impl<T: Real> StationaryAnalysis<T> {
    pub fn dim(&self) -> usize {
        self.rho_ss.nrows()
    }

    /// `Tr(ρ_ss X)`.
    pub fn expect(&self, x: &CMatrix<T>) -> Complex<T> {
        linalg::expect(&self.rho_ss, x)
    }

    /// `X − Tr(ρ_ss X)·𝟙`.
    pub fn center(&self, x: &CMatrix<T>) -> CMatrix<T> {
        let m = self.expect(x);
        x - linalg::identity::<T>(self.dim()) * m
    }

    /// `L̃(Y)`.
    pub fn invert(&self, y: &CMatrix<T>) -> CMatrix<T> {
        self.ltilde.apply(y)
    }
}

/// Stationary analysis of the Lindblad generator of `point`.
pub fn analyze<T: Real>(point: &ModelPoint<T>, opts: &StationaryOptions) -> Result<StationaryAnalysis<T>> {
    stationary_state(&lindblad_schrodinger(point), opts)
}

fn vec_identity<T: Real>(d: usize, idx: &[usize]) -> DVector<Complex<T>> {
    DVector::from_iterator(
        idx.len(),
        idx.iter().map(|&k| {
            if k % d == k / d {
                Complex::new(T::one(), T::zero())
            } else {
                Complex::new(T::zero(), T::zero())
            }
        }),
    )
}

fn is_diag(d: usize, k: usize) -> bool {
    k % d == k / d
}

fn singular_threshold<T: Real>() -> f64 {
    0.01 / to_f64(T::default_epsilon())
}

/// Inverse with a condition-number guard.
fn guarded_inverse<T: Real>(m: &CMatrix<T>) -> Result<CMatrix<T>> {
    let inv = m.clone().lu().try_inverse().ok_or(Error::SingularOnComplement)?;
    let cond = to_f64(linalg::one_norm(m)) * to_f64(linalg::one_norm(&inv));
    if !cond.is_finite() || cond > singular_threshold::<T>() {
        return Err(Error::SingularOnComplement);
    }
    Ok(inv)
}

/// Finds `ρ_ss` from a Schrödinger-picture generator and certifies
/// irreducibility.
///
/// The zero eigenvalue must be simple and every other eigenvalue must have a
/// strictly negative real part; `ρ_ss` must be full rank (or, with
/// `fock_tail_tol`, have negligible weight in the top Fock level).
pub fn stationary_state<T: Real>(gen: &SuperOp<T>, opts: &StationaryOptions) -> Result<StationaryAnalysis<T>> {
    if gen.picture() == Picture::Heisenberg {
        return Err(Error::invalid("stationary_state expects a Schrödinger-picture generator"));
    }
    let d = gen.dim();
    let norm = to_f64(gen.one_norm()).max(1.0);
    // tolerances never drop below the working precision
    let tol = to_f64(crate::model::tol::<T>(opts.gap_tol)) * norm;

    let eigenvalues = gen.eigenvalues()?;
    let moduli: Vec<f64> = eigenvalues.iter().map(|z| to_f64(nalgebra::ComplexField::modulus(*z))).collect();
    let kernel = moduli.iter().filter(|&&m| m <= tol).count();
    if kernel == 0 {
        let closest = moduli.iter().cloned().fold(f64::INFINITY, f64::min);
        return Err(Error::NoStationaryState { tol, closest });
    }
    if kernel > 1 {
        return Err(Error::NotIrreducible { kernel_dim: kernel, tol });
    }
    let mut gap = f64::INFINITY;
    let mut peripheral = 1;
    for (z, &m) in eigenvalues.iter().zip(&moduli) {
        if m > tol {
            let decay = -to_f64(z.re);
            if decay <= tol {
                peripheral += 1;
            }
            gap = gap.min(decay);
        }
    }
    if peripheral > 1 {
        return Err(Error::NotIrreducible {
            kernel_dim: peripheral,
            tol,
        });
    }

    // Bordered solve for the kernel vector on the blocks holding populations.
    let ((idx, core), _) = gen.split_blocks(|b| b.iter().any(|&k| is_diag(d, k)));
    let n = idx.len();
    let c = vec_identity::<T>(d, &idx);
    let mut bordered = DMatrix::zeros(n + 1, n + 1);
    bordered.view_mut((0, 0), (n, n)).copy_from(&core);
    let inv_d = real(T::one() / lit(d as f64));
    for r in 0..n {
        bordered[(r, n)] = c[r] * inv_d;
        bordered[(n, r)] = c[r];
    }
    let mut rhs = DVector::zeros(n + 1);
    rhs[n] = Complex::new(T::one(), T::zero());
    let sol = bordered.lu().solve(&rhs).ok_or(Error::NoStationaryState {
        tol,
        closest: 0.0,
    })?;
    let mut rho = linalg::zeros::<T>(d);
    for (p, &k) in idx.iter().enumerate() {
        rho[(k % d, k / d)] = sol[p];
    }
    let rho = linalg::hermitize(&rho);
    let tr = rho.trace().re;
    let rho = rho * real(T::one() / tr);

    let min_eig = linalg::min_hermitian_eigenvalue(&rho);
    match opts.fock_tail_tol {
        None => {
            if to_f64(min_eig) <= opts.rank_tol {
                return Err(Error::NotFullRank {
                    min_eig: to_f64(min_eig),
                    rank_tol: opts.rank_tol,
                });
            }
        }
        Some(tail_tol) => {
            if to_f64(min_eig) < -opts.rank_tol {
                return Err(Error::NotFullRank {
                    min_eig: to_f64(min_eig),
                    rank_tol: opts.rank_tol,
                });
            }
            let peak = (0..d).map(|i| to_f64(rho[(i, i)].re)).fold(0.0, f64::max);
            let tail_ratio = to_f64(rho[(d - 1, d - 1)].re) / peak;
            if tail_ratio > tail_tol {
                return Err(Error::CutoffTooSmall {
                    cutoff: d - 1,
                    tail_ratio,
                });
            }
        }
    }

    let l0 = gen.dual(Picture::Heisenberg);
    let (ltilde, p, q) = complement_maps(&l0, &rho)?;
    Ok(StationaryAnalysis {
        rho_ss: rho,
        gap: lit(gap),
        min_eig,
        eigenvalues,
        l0,
        p,
        q,
        ltilde,
    })
}

/// `(L̃, P, Q)` for a Heisenberg generator `l0` and its stationary state.
fn complement_maps<T: Real>(l0: &SuperOp<T>, rho: &CMatrix<T>) -> Result<(SuperOp<T>, SuperOp<T>, SuperOp<T>)> {
    let d = l0.dim();
    let zero = Complex::new(T::zero(), T::zero());
    // vec(ρᵀ) pairs with vec(X) to give Tr(ρX).
    let r_of = |k: usize| rho[(k / d, k % d)];
    let ((idx, core), rest) = l0.split_blocks(|b| b.iter().any(|&k| is_diag(d, k) || r_of(k) != zero));
    let n = idx.len();
    let c = vec_identity::<T>(d, &idx);
    let r = DVector::from_iterator(n, idx.iter().map(|&k| r_of(k)));

    let mut bordered = DMatrix::zeros(n + 1, n + 1);
    bordered.view_mut((0, 0), (n, n)).copy_from(&core);
    for k in 0..n {
        bordered[(k, n)] = c[k];
        bordered[(n, k)] = r[k];
    }
    let binv = guarded_inverse(&bordered)?;
    let proj = &c * r.transpose();
    let q_core = DMatrix::identity(n, n) - &proj;
    let lt_core = binv.view((0, 0), (n, n)) * &q_core;

    let mut lt_parts = vec![(idx.clone(), lt_core)];
    let mut p_parts = vec![(idx.clone(), proj)];
    let mut q_parts = vec![(idx, q_core)];
    for (b, m) in rest {
        let k = b.len();
        lt_parts.push((b.clone(), guarded_inverse(&m)?));
        p_parts.push((b.clone(), DMatrix::zeros(k, k)));
        q_parts.push((b, DMatrix::identity(k, k)));
    }
    Ok((
        SuperOp::from_blocks(d, Picture::Auxiliary, lt_parts)?,
        SuperOp::from_blocks(d, Picture::Auxiliary, p_parts)?,
        SuperOp::from_blocks(d, Picture::Auxiliary, q_parts)?,
    ))
}

/// Inverse of the Heisenberg generator `l0` on `{X : Tr(ρ_ss X) = 0}`,
/// extended by `L̃(𝟙) = 0`. `L̃(Y)` is the unique `X` with
/// `L₀(X) = Q(Y)` and `Tr(ρ_ss X) = 0`.
pub fn restricted_inverse<T: Real>(l0: &SuperOp<T>, rho_ss: &CMatrix<T>) -> Result<SuperOp<T>> {
    complement_maps(l0, rho_ss).map(|(lt, _, _)| lt)
}

/// `|Tr(ρ_ss · op)|`.
pub fn check_centering<T: Real>(op: &CMatrix<T>, rho_ss: &CMatrix<T>) -> T {
    linalg::expect(rho_ss, op).modulus()
}
