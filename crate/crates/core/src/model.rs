// SPDX-License-Identifier: Apache-2.0

//! Parametrized Lindblad models and their evaluation at a point.

use std::fmt;
use std::sync::Arc;

use nalgebra::Complex;
use rand::Rng;

use crate::linalg::{self, c, real};
use crate::{lit, to_f64, CMatrix, Error, Real, Result, C64};

/// `θ ↦ matrix`.
pub type MatrixMap<T> = Arc<dyn Fn(T) -> CMatrix<T> + Send + Sync>;

/// Which family a model belongs to. Fock-truncated models get a tail-mass
/// check instead of the full-rank certificate.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelKind<T: Real> {
    Custom,
    TwoLevel { z: Complex<T> },
    AtomMaser { n_ex: T, nu: T, cutoff: usize },
}

/// A family `θ ↦ (H(θ), L_1(θ), …, L_k(θ))` with optional derivative maps.
#[derive(Clone)]
pub struct ParamModel<T: Real> {
    dim: usize,
    hamiltonian: MatrixMap<T>,
    jumps: Vec<MatrixMap<T>>,
    d_hamiltonian: Option<MatrixMap<T>>,
    d_jumps: Option<Vec<MatrixMap<T>>>,
    dd_hamiltonian: Option<MatrixMap<T>>,
    dd_jumps: Option<Vec<MatrixMap<T>>>,
    kind: ModelKind<T>,
}

impl<T: Real> fmt::Debug for ParamModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParamModel")
            .field("dim", &self.dim)
            .field("channels", &self.jumps.len())
            .field("analytic_first", &self.d_hamiltonian.is_some())
            .field("analytic_second", &self.dd_hamiltonian.is_some())
            .field("kind", &self.kind)
            .finish()
    }
}

/// Matrix together with its first and second θ-derivatives at the expansion
/// point of a polynomial model.
#[derive(Clone, Debug)]
pub struct Taylor<T: Real> {
    pub value: CMatrix<T>,
    pub first: CMatrix<T>,
    pub second: CMatrix<T>,
}

impl<T: Real> Taylor<T> {
    pub fn constant(value: CMatrix<T>) -> Self {
        let d = value.nrows();
        Taylor {
            value,
            first: linalg::zeros(d),
            second: linalg::zeros(d),
        }
    }

    pub fn linear(value: CMatrix<T>, first: CMatrix<T>) -> Self {
        let d = value.nrows();
        Taylor {
            value,
            first,
            second: linalg::zeros(d),
        }
    }

    fn at(&self, h: T) -> CMatrix<T> {
        &self.value + &self.first * real(h) + &self.second * real(h * h * lit(0.5))
    }

    fn shape_ok(&self, d: usize) -> bool {
        [&self.value, &self.first, &self.second]
            .iter()
            .all(|m| m.nrows() == d && m.ncols() == d)
    }
}

impl<T: Real> ParamModel<T> {
    /// Model without derivative maps; derivatives fall back to finite
    /// differences.
    pub fn new(dim: usize, hamiltonian: MatrixMap<T>, jumps: Vec<MatrixMap<T>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("model dimension must be positive"));
        }
        if jumps.is_empty() {
            return Err(Error::invalid("model needs at least one jump operator"));
        }
        Ok(ParamModel {
            dim,
            hamiltonian,
            jumps,
            d_hamiltonian: None,
            d_jumps: None,
            dd_hamiltonian: None,
            dd_jumps: None,
            kind: ModelKind::Custom,
        })
    }

    pub fn with_derivatives(mut self, d_h: MatrixMap<T>, d_jumps: Vec<MatrixMap<T>>) -> Result<Self> {
        if d_jumps.len() != self.jumps.len() {
            return Err(Error::invalid(format!(
                "{} jump derivatives for {} jump operators",
                d_jumps.len(),
                self.jumps.len()
            )));
        }
        self.d_hamiltonian = Some(d_h);
        self.d_jumps = Some(d_jumps);
        Ok(self)
    }

    pub fn with_second_derivatives(
        mut self,
        dd_h: MatrixMap<T>,
        dd_jumps: Vec<MatrixMap<T>>,
    ) -> Result<Self> {
        if dd_jumps.len() != self.jumps.len() {
            return Err(Error::invalid(format!(
                "{} second jump derivatives for {} jump operators",
                dd_jumps.len(),
                self.jumps.len()
            )));
        }
        self.dd_hamiltonian = Some(dd_h);
        self.dd_jumps = Some(dd_jumps);
        Ok(self)
    }

    fn with_kind(mut self, kind: ModelKind<T>) -> Self {
        self.kind = kind;
        self
    }

    /// Quadratic model about `theta0` with exact first and second
    /// derivatives: `M(θ) = M₀ + (θ−θ₀)M₁ + ½(θ−θ₀)²M₂`.
    pub fn polynomial(theta0: T, hamiltonian: Taylor<T>, jumps: Vec<Taylor<T>>) -> Result<Self> {
        let d = hamiltonian.value.nrows();
        if d == 0 || !hamiltonian.shape_ok(d) {
            return Err(Error::invalid("hamiltonian coefficients must be square and equal-sized"));
        }
        for (j, l) in jumps.iter().enumerate() {
            if !l.shape_ok(d) {
                return Err(Error::invalid(format!("jump operator {j} is not {d}x{d}")));
            }
        }
        let h = Arc::new(hamiltonian);
        let ls: Vec<Arc<Taylor<T>>> = jumps.into_iter().map(Arc::new).collect();

        let value = |m: &Arc<Taylor<T>>| -> MatrixMap<T> {
            let m = m.clone();
            Arc::new(move |th: T| m.at(th - theta0))
        };
        let first = |m: &Arc<Taylor<T>>| -> MatrixMap<T> {
            let m = m.clone();
            Arc::new(move |th: T| &m.first + &m.second * real(th - theta0))
        };
        let second = |m: &Arc<Taylor<T>>| -> MatrixMap<T> {
            let m = m.clone();
            Arc::new(move |_| m.second.clone())
        };

        ParamModel::new(d, value(&h), ls.iter().map(value).collect())?
            .with_derivatives(first(&h), ls.iter().map(first).collect())?
            .with_second_derivatives(second(&h), ls.iter().map(second).collect())
    }

    /// θ-independent model.
    pub fn constant(hamiltonian: CMatrix<T>, jumps: Vec<CMatrix<T>>) -> Result<Self> {
        ParamModel::polynomial(
            T::zero(),
            Taylor::constant(hamiltonian),
            jumps.into_iter().map(Taylor::constant).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn channels(&self) -> usize {
        self.jumps.len()
    }

    pub fn kind(&self) -> &ModelKind<T> {
        &self.kind
    }

    pub fn is_fock_truncated(&self) -> bool {
        matches!(self.kind, ModelKind::AtomMaser { .. })
    }

    pub fn has_analytic_derivatives(&self) -> bool {
        self.d_hamiltonian.is_some()
    }

    pub fn has_second_derivatives(&self) -> bool {
        self.dd_hamiltonian.is_some()
    }

    pub fn hamiltonian_at(&self, theta: T) -> CMatrix<T> {
        (self.hamiltonian)(theta)
    }

    pub fn jumps_at(&self, theta: T) -> Vec<CMatrix<T>> {
        self.jumps.iter().map(|l| l(theta)).collect()
    }

    pub fn check_channel(&self, channel: usize) -> Result<()> {
        if channel >= self.channels() {
            return Err(Error::BadChannel {
                channel,
                channels: self.channels(),
            });
        }
        Ok(())
    }
}

/// A model and its derivatives evaluated at `theta0`.
#[derive(Clone, Debug)]
pub struct ModelPoint<T: Real> {
    pub theta0: T,
    pub h: CMatrix<T>,
    pub h_dot: CMatrix<T>,
    pub h_ddot: Option<CMatrix<T>>,
    pub l: Vec<CMatrix<T>>,
    pub l_dot: Vec<CMatrix<T>>,
    pub l_ddot: Option<Vec<CMatrix<T>>>,
}

impl<T: Real> ModelPoint<T> {
    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn channels(&self) -> usize {
        self.l.len()
    }

    /// Point with the given operators and vanishing derivatives.
    pub fn frozen(theta0: T, h: CMatrix<T>, l: Vec<CMatrix<T>>) -> Self {
        let d = h.nrows();
        let zeros = vec![linalg::zeros(d); l.len()];
        ModelPoint {
            theta0,
            h_dot: linalg::zeros(d),
            h_ddot: Some(linalg::zeros(d)),
            h,
            l_dot: zeros.clone(),
            l_ddot: Some(zeros),
            l,
        }
    }
}

/// Relative tolerance floor: `max(x, 100 ε)`.
pub(crate) fn tol<T: Real>(x: f64) -> T {
    let floor = to_f64(T::default_epsilon()) * 100.0;
    lit(x.max(floor))
}

fn check_hermitian<T: Real>(m: &CMatrix<T>, rel: f64) -> Result<CMatrix<T>> {
    let defect = linalg::hermiticity_defect(m);
    let scale = linalg::max_abs(m).max(T::one());
    if defect > tol::<T>(rel) * scale {
        return Err(Error::NonHermitianHamiltonian {
            defect: to_f64(defect),
        });
    }
    Ok(linalg::hermitize(m))
}

fn central_difference<T: Real>(f: &MatrixMap<T>, theta0: T, h: T) -> CMatrix<T> {
    (f(theta0 + h) - f(theta0 - h)) * real(T::one() / (h + h))
}

/// Evaluates `model` and its derivatives at `theta0`.
///
/// Missing first-derivative maps are replaced by central differences with
/// step `fd_step`, by default `ε^{1/3}·max(1, |θ₀|)`.
pub fn evaluate<T: Real>(model: &ParamModel<T>, theta0: T, fd_step: Option<T>) -> Result<ModelPoint<T>> {
    let h = check_hermitian(&model.hamiltonian_at(theta0), 1e-12)?;
    let l = model.jumps_at(theta0);
    let d = model.dim;
    if h.nrows() != d || h.ncols() != d || l.iter().any(|m| m.nrows() != d || m.ncols() != d) {
        return Err(Error::invalid(format!("model maps must return {d}x{d} matrices")));
    }

    let (h_dot, l_dot) = match (&model.d_hamiltonian, &model.d_jumps) {
        (Some(dh), Some(dl)) => (
            check_hermitian(&dh(theta0), 1e-12)?,
            dl.iter().map(|f| f(theta0)).collect(),
        ),
        _ => {
            let step = fd_step.unwrap_or_else(|| {
                let cbrt = T::default_epsilon().powf(lit(1.0 / 3.0));
                cbrt * theta0.abs().max(T::one())
            });
            if step <= T::zero() {
                return Err(Error::invalid("finite-difference step must be positive"));
            }
            let hd = central_difference(&model.hamiltonian, theta0, step);
            (
                check_hermitian(&hd, 1e-8)?,
                model
                    .jumps
                    .iter()
                    .map(|f| central_difference(f, theta0, step))
                    .collect(),
            )
        }
    };

    let (h_ddot, l_ddot) = match (&model.dd_hamiltonian, &model.dd_jumps) {
        (Some(ddh), Some(ddl)) => (
            Some(check_hermitian(&ddh(theta0), 1e-12)?),
            Some(ddl.iter().map(|f| f(theta0)).collect()),
        ),
        _ => (None, None),
    };

    Ok(ModelPoint {
        theta0,
        h,
        h_dot,
        h_ddot,
        l,
        l_dot,
        l_ddot,
    })
}

/// `σ₋ = |g⟩⟨e|` in the ordered basis `(|e⟩, |g⟩)`.
pub fn sigma_minus<T: Real>() -> CMatrix<T> {
    linalg::from_rows(2, &[(0.0, 0.0), (0.0, 0.0), (1.0, 0.0), (0.0, 0.0)])
}

pub fn sigma_plus<T: Real>() -> CMatrix<T> {
    sigma_minus::<T>().transpose()
}

pub fn sigma_z<T: Real>() -> CMatrix<T> {
    linalg::from_rows(2, &[(1.0, 0.0), (0.0, 0.0), (0.0, 0.0), (-1.0, 0.0)])
}

/// Resonantly driven two-level atom: `L_θ = θσ₋ + z𝟙`,
/// `H_θ = (i/2)θ(z̄σ₋ − zσ₊)`.
pub fn two_level_model<T: Real>(z: Complex<T>) -> Result<ParamModel<T>> {
    if nalgebra::ComplexField::modulus(z) == T::zero() {
        return Err(Error::ZeroCoupling);
    }
    let sm = sigma_minus::<T>();
    let sp = sigma_plus::<T>();
    let half_i = Complex::new(T::zero(), lit(0.5));
    let h_dir = (&sm * z.conj() - &sp * z) * half_i;
    let eye = linalg::identity::<T>(2);

    let h = {
        let g = h_dir.clone();
        Arc::new(move |th: T| &g * real(th)) as MatrixMap<T>
    };
    let l = {
        let (sm, eye) = (sm.clone(), eye.clone());
        Arc::new(move |th: T| &sm * real(th) + &eye * z) as MatrixMap<T>
    };
    let dh = {
        let g = h_dir.clone();
        Arc::new(move |_| g.clone()) as MatrixMap<T>
    };
    let dl = {
        let sm = sm.clone();
        Arc::new(move |_| sm.clone()) as MatrixMap<T>
    };
    let zero: MatrixMap<T> = Arc::new(|_| linalg::zeros(2));

    Ok(ParamModel::new(2, h, vec![l])?
        .with_derivatives(dh, vec![dl])?
        .with_second_derivatives(zero.clone(), vec![zero])?
        .with_kind(ModelKind::TwoLevel { z }))
}

/// Annihilator on Fock levels `0..=cutoff`.
pub fn annihilator<T: Real>(cutoff: usize) -> CMatrix<T> {
    let d = cutoff + 1;
    let mut a = linalg::zeros::<T>(d);
    for n in 1..d {
        a[(n - 1, n)] = real(lit::<T>(n as f64).sqrt());
    }
    a
}

/// Single-mode cavity pumped by a beam of excited atoms and coupled to a
/// thermal bath. The parameter is the Rabi angle `φ`.
///
/// Channels: 0 ground-state atoms (emission into the cavity), 1 excited-state
/// atoms, 2 photon loss, 3 thermal photon gain. Functions of `aa†` act on its
/// eigenvalues `n+1` on every retained level.
pub fn atom_maser_model<T: Real>(n_ex: T, nu: T, cutoff: usize) -> Result<ParamModel<T>> {
    if cutoff < 2 {
        return Err(Error::invalid("Fock cutoff must be at least 2"));
    }
    if !(n_ex > T::zero()) {
        return Err(Error::invalid("atom rate n_ex must be positive"));
    }
    if !(nu >= T::zero()) {
        return Err(Error::invalid("thermal photon number nu must be non-negative"));
    }
    let d = cutoff + 1;
    let sqrt_n = n_ex.sqrt();

    // Builders for a†·f(√(n+1)) and diag g(√(n+1)).
    let raising = move |f: Arc<dyn Fn(T, T) -> T + Send + Sync>| -> MatrixMap<T> {
        Arc::new(move |phi: T| {
            let mut m = linalg::zeros::<T>(d);
            for n in 0..cutoff {
                let r = lit::<T>((n + 1) as f64).sqrt();
                m[(n + 1, n)] = real(sqrt_n * r * f(phi, r));
            }
            m
        })
    };
    let diagonal = move |g: Arc<dyn Fn(T, T) -> T + Send + Sync>| -> MatrixMap<T> {
        Arc::new(move |phi: T| {
            let mut m = linalg::zeros::<T>(d);
            for n in 0..d {
                let r = lit::<T>((n + 1) as f64).sqrt();
                m[(n, n)] = real(sqrt_n * g(phi, r));
            }
            m
        })
    };

    let a = annihilator::<T>(cutoff);
    let loss = a.clone() * real((nu + T::one()).sqrt());
    let gain = a.adjoint() * real(nu.sqrt());
    let fixed = |m: CMatrix<T>| -> MatrixMap<T> { Arc::new(move |_| m.clone()) };
    let zero = fixed(linalg::zeros(d));

    let l1 = raising(Arc::new(|phi, r| (phi * r).sin() / r));
    let l2 = diagonal(Arc::new(|phi, r| (phi * r).cos()));
    let dl1 = raising(Arc::new(|phi, r| (phi * r).cos()));
    let dl2 = diagonal(Arc::new(|phi, r| -r * (phi * r).sin()));
    let ddl1 = raising(Arc::new(|phi, r| -r * (phi * r).sin()));
    let ddl2 = diagonal(Arc::new(|phi, r| -r * r * (phi * r).cos()));

    Ok(ParamModel::new(d, zero.clone(), vec![l1, l2, fixed(loss), fixed(gain)])?
        .with_derivatives(zero.clone(), vec![dl1, dl2, zero.clone(), zero.clone()])?
        .with_second_derivatives(zero.clone(), vec![ddl1, ddl2, zero.clone(), zero])?
        .with_kind(ModelKind::AtomMaser { n_ex, nu, cutoff }))
}

/// Closed-form values for the two-level model.
///
/// `b_h` and `i_h = a_h²/b_h` are the reference closed forms for the
/// homodyne variance and information. `homodyne_variance` and
/// `homodyne_information` are the re-derived closed forms; they agree with
/// the generator pipeline and with trajectory simulations, while `b_h` does
/// not. The homodyne mean coefficient is `homodyne_mean = −a_h`.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoLevelOracles {
    pub f: f64,
    pub a: f64,
    pub b: C64,
    pub c: C64,
    pub a_tilde: f64,
    pub counting_rate: f64,
    pub mean_homodyne: f64,
    pub a_h: f64,
    pub b_h: f64,
    pub i_h: f64,
    pub homodyne_mean: f64,
    pub homodyne_variance: f64,
    pub homodyne_information: f64,
}

pub fn two_level_oracles(z: C64, theta0: f64, phi: f64) -> Result<TwoLevelOracles> {
    if theta0 == 0.0 {
        return Err(Error::invalid("closed forms need theta0 != 0"));
    }
    if z.norm() == 0.0 {
        return Err(Error::ZeroCoupling);
    }
    let th = theta0;
    let z2 = z.norm_sqr();
    let den = 8.0 * z2 + th * th;
    let a = 4.0 * z2 / den;
    let b = -z * (th * a / (2.0 * z2));
    let cc = -z.conj() * (th * a / (2.0 * z2));
    let a_tilde = 1.0 - 2.0 * a;

    let w = C64::from_polar(1.0, phi) * z;
    let (x, s) = (w.re, w.im);
    let mean_homodyne = 2.0 * x - 4.0 * x * a_tilde;
    let a_h = 64.0 * th * z2 * x / (den * den);
    let th2 = th * th;
    let th4 = th2 * th2;
    let z4 = z2 * z2;
    let b_h = 1.0 + 2.0 / den.powi(3) * (th4 * (4.0 * s * s - 16.0 * z2) + 192.0 * th2 * z4 + 512.0 * z4 * s * s);
    let v_h =
        1.0 + 2.0 / den.powi(3) * (th4 * (32.0 * s * s - 16.0 * z2) + 256.0 * th2 * z4 + 1024.0 * z4 * s * s);

    Ok(TwoLevelOracles {
        f: 128.0 * z4 / (den * th2),
        a,
        b,
        c: cc,
        a_tilde,
        counting_rate: z2,
        mean_homodyne,
        a_h,
        b_h,
        i_h: a_h * a_h / b_h,
        homodyne_mean: -a_h,
        homodyne_variance: v_h,
        homodyne_information: a_h * a_h / v_h,
    })
}

/// Closed-form stationary populations and quantum Fisher information of the
/// atom maser.
#[derive(Clone, Debug, PartialEq)]
pub struct MaserOracles {
    pub rho_diag: Vec<f64>,
    pub f: f64,
}

/// Largest admissible `ρ(cutoff)/max_n ρ(n)`.
pub const MASER_TAIL_TOL: f64 = 1e-12;

pub fn maser_oracles(n_ex: f64, nu: f64, phi: f64, cutoff: usize) -> Result<MaserOracles> {
    if cutoff < 2 || !(n_ex > 0.0) || !(nu >= 0.0) {
        return Err(Error::invalid("need cutoff >= 2, n_ex > 0, nu >= 0"));
    }
    let mut rho = Vec::with_capacity(cutoff + 1);
    let mut p = 1.0f64;
    rho.push(p);
    for i in 1..=cutoff {
        let fi = i as f64;
        p *= nu / (nu + 1.0) + n_ex / (nu + 1.0) * (phi * fi.sqrt()).sin().powi(2) / fi;
        rho.push(p);
    }
    let total: f64 = rho.iter().sum();
    rho.iter_mut().for_each(|r| *r /= total);
    let peak = rho.iter().cloned().fold(0.0, f64::max);
    let tail_ratio = rho[cutoff] / peak;
    if tail_ratio > MASER_TAIL_TOL {
        return Err(Error::CutoffTooSmall { cutoff, tail_ratio });
    }
    let f = 4.0 * n_ex * rho.iter().enumerate().map(|(k, r)| (k as f64 + 1.0) * r).sum::<f64>();
    Ok(MaserOracles { rho_diag: rho, f })
}

/// Complex unit helper used by callers that build models from polar data.
pub fn phase<T: Real>(angle: f64) -> Complex<T> {
    c(angle.cos(), angle.sin())
}

/// Dense model with uniformly random entries in the unit square, quadratic
/// in `θ` about `theta0`. Almost surely irreducible.
pub fn random_model<R: Rng + ?Sized>(dim: usize, channels: usize, theta0: f64, rng: &mut R) -> Result<ParamModel<f64>> {
    let mut mat = |herm: bool| -> CMatrix<f64> {
        let m = CMatrix::<f64>::from_fn(dim, dim, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        if herm {
            linalg::hermitize(&m)
        } else {
            m
        }
    };
    let mut taylor = |herm: bool| Taylor {
        value: mat(herm),
        first: mat(herm),
        second: mat(herm),
    };
    let h = taylor(true);
    let jumps = (0..channels).map(|_| taylor(false)).collect();
    ParamModel::polynomial(theta0, h, jumps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;

    fn tl(z: C64, th: f64) -> ModelPoint<f64> {
        evaluate(&two_level_model(z).unwrap(), th, None).unwrap()
    }

    #[test]
    fn two_level_matrices_at_theta_two() {
        let p = tl(C64::new(1.0, 0.0), 2.0);
        let l = linalg::from_rows::<f64>(2, &[(1.0, 0.0), (0.0, 0.0), (2.0, 0.0), (1.0, 0.0)]);
        assert!(max_abs_diff(&p.l[0], &l) < 1e-15);
        assert!(max_abs_diff(&p.l_dot[0], &sigma_minus()) < 1e-15);
        let h = (sigma_minus::<f64>() - sigma_plus::<f64>()) * C64::new(0.0, 1.0);
        assert!(max_abs_diff(&p.h, &h) < 1e-15);
        assert!(max_abs_diff(&p.h_dot, &(h * C64::new(0.5, 0.0))) < 1e-15);
    }

    #[test]
    fn two_level_at_zero_theta() {
        let p = tl(C64::new(0.0, 1.0), 0.0);
        assert!(linalg::max_abs(&p.h) < 1e-15);
        let il = linalg::identity::<f64>(2) * C64::new(0.0, 1.0);
        assert!(max_abs_diff(&p.l[0], &il) < 1e-15);
    }

    #[test]
    fn zero_coupling_rejected() {
        assert_eq!(two_level_model::<f64>(C64::new(0.0, 0.0)).unwrap_err(), Error::ZeroCoupling);
    }

    #[test]
    fn constant_model_has_zero_derivatives() {
        let h = linalg::from_rows::<f64>(2, &[(1.0, 0.0), (0.0, 0.5), (0.0, -0.5), (-1.0, 0.0)]);
        let m = ParamModel::constant(h, vec![sigma_minus()]).unwrap();
        let p = evaluate(&m, 0.7, None).unwrap();
        assert!(linalg::max_abs(&p.h_dot) == 0.0);
        assert!(linalg::max_abs(&p.l_dot[0]) == 0.0);
    }

    #[test]
    fn finite_difference_on_linear_jump() {
        let sm = sigma_minus::<f64>();
        let eye = linalg::identity::<f64>(2);
        let l: MatrixMap<f64> = Arc::new(move |th| &sm * C64::new(th, 0.0) + &eye);
        let h: MatrixMap<f64> = Arc::new(|_| linalg::zeros(2));
        let m = ParamModel::new(2, h, vec![l]).unwrap();
        let p = evaluate(&m, 1.0, Some(1e-5)).unwrap();
        assert!(max_abs_diff(&p.l_dot[0], &sigma_minus()) < 1e-9);
        assert!(p.h_ddot.is_none());
    }

    #[test]
    fn non_hermitian_hamiltonian_rejected() {
        let h: MatrixMap<f64> = Arc::new(|_| sigma_minus());
        let l: MatrixMap<f64> = Arc::new(|_| sigma_minus());
        let m = ParamModel::new(2, h, vec![l]).unwrap();
        assert!(matches!(evaluate(&m, 0.0, None), Err(Error::NonHermitianHamiltonian { .. })));
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let check = |m: &ParamModel<f64>, th: f64| {
            let p = evaluate(m, th, None).unwrap();
            let h = 1e-5;
            let lp = m.jumps_at(th + h);
            let lm = m.jumps_at(th - h);
            for j in 0..m.channels() {
                let fd = (&lp[j] - &lm[j]) / C64::new(2.0 * h, 0.0);
                let scale = linalg::max_abs(&p.l_dot[j]).max(1.0);
                assert!(max_abs_diff(&fd, &p.l_dot[j]) < 1e-8 * scale, "channel {j} at {th}");
            }
            let fdh = (m.hamiltonian_at(th + h) - m.hamiltonian_at(th - h)) / C64::new(2.0 * h, 0.0);
            assert!(max_abs_diff(&fdh, &p.h_dot) < 1e-8 * linalg::max_abs(&p.h_dot).max(1.0));
        };
        let tl = two_level_model(C64::new(0.5, 0.3)).unwrap();
        let maser = atom_maser_model(16.0, 0.1, 12).unwrap();
        for th in [-1.0, 0.3, 1.0, 2.5] {
            check(&tl, th);
            check(&maser, th);
            assert!(linalg::hermiticity_defect(&tl.hamiltonian_at(th)) < 1e-12);
        }
    }

    #[test]
    fn maser_annihilator_and_dark_gain() {
        let a = annihilator::<f64>(2);
        let want = linalg::from_rows::<f64>(
            3,
            &[
                (0.0, 0.0),
                (1.0, 0.0),
                (0.0, 0.0),
                (0.0, 0.0),
                (0.0, 0.0),
                (2f64.sqrt(), 0.0),
                (0.0, 0.0),
                (0.0, 0.0),
                (0.0, 0.0),
            ],
        );
        assert!(max_abs_diff(&a, &want) < 1e-15);
        let m = atom_maser_model(4.0, 0.0, 5).unwrap();
        assert!(linalg::max_abs(&m.jumps_at(0.3)[3]) == 0.0);
    }

    #[test]
    fn two_level_oracle_values() {
        let o = two_level_oracles(C64::new(1.0, 0.0), 2.0, 0.0).unwrap();
        assert!((o.f - 8.0 / 3.0).abs() < 1e-15);
        assert!((o.a - 1.0 / 3.0).abs() < 1e-15);
        assert!((o.b.re + 1.0 / 3.0).abs() < 1e-15 && (o.c.re + 1.0 / 3.0).abs() < 1e-15);
        assert!((o.mean_homodyne - 2.0 / 3.0).abs() < 1e-15);
        assert!((o.a_h - 8.0 / 9.0).abs() < 1e-15);
        assert!((o.b_h - (1.0 + 1024.0 / 1728.0)).abs() < 1e-14);
        assert!((o.i_h - 0.496124031).abs() < 1e-8);
        assert!((o.homodyne_variance - 17.0 / 9.0).abs() < 1e-14);
        assert!((o.homodyne_information - 64.0 / 153.0).abs() < 1e-14);
    }

    #[test]
    fn two_level_oracle_state_is_a_density_matrix() {
        for &(zr, zi) in &[(1.0, 0.0), (0.5, 0.3), (0.0, 2.0), (-0.7, 0.1)] {
            for th in [0.1, 0.5, 1.0, 2.0, 5.0] {
                let o = two_level_oracles(C64::new(zr, zi), th, 0.0).unwrap();
                assert_eq!(o.a + (1.0 - o.a), 1.0);
                // 2x2 PSD: diagonal >= 0 and det >= 0
                let det = o.a * (1.0 - o.a) - (o.b * o.c).re;
                assert!(o.a >= 0.0 && o.a <= 1.0 && det >= -1e-15);
                assert!((o.b.conj() - o.c).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn maser_oracle_ratio_and_normalization() {
        let o = maser_oracles(16.0, 0.1, 1.0, 60).unwrap();
        let want = 0.1 / 1.1 + 16.0 / 1.1 * 1f64.sin().powi(2);
        assert!((o.rho_diag[1] / o.rho_diag[0] - want).abs() < 1e-12);
        assert!((want - 10.390).abs() < 1e-3);
        assert!((o.rho_diag.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(o.rho_diag.iter().all(|&r| r >= 0.0));
        assert!((o.f - 416.9858).abs() < 1e-3);
    }

    #[test]
    fn maser_oracle_small_angle_limit() {
        let o = maser_oracles(16.0, 0.0, 1e-6, 10).unwrap();
        assert!((o.rho_diag[0] - 1.0).abs() < 1e-9);
        assert!((o.f - 64.0).abs() < 1e-6);
    }

    #[test]
    fn maser_oracle_cutoff_too_small() {
        assert!(matches!(
            maser_oracles(16.0, 0.1, 1.0, 8),
            Err(Error::CutoffTooSmall { cutoff: 8, .. })
        ));
    }
}
