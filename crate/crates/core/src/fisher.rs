// SPDX-License-Identifier: Apache-2.0

//! Asymptotic quantum Fisher information and the classical Fisher
//! informations of total counts and integrated homodyne current.

use nalgebra::Complex;
use serde::Serialize;

use crate::linalg::{self, i_unit, im_part, re_part, real};
use crate::model::{evaluate, tol, ModelPoint, ParamModel, MASER_TAIL_TOL};
use crate::stationary::{analyze, check_centering, StationaryAnalysis, StationaryOptions};
use crate::{lit, to_f64, CMatrix, Error, Real, Result};

/// Relative size of an imaginary part tolerated on a provably real quantity.
pub const IMAG_TOL: f64 = 1e-10;
/// Variances at or below this are reported as degenerate.
pub const DEGENERATE_VARIANCE: f64 = 1e-12;

fn real_value<T: Real>(quantity: &'static str, z: Complex<T>) -> Result<T> {
    let (re, im) = (to_f64(z.re), to_f64(z.im));
    if im.abs() > to_f64(tol::<T>(IMAG_TOL)) * re.abs().max(1.0) {
        return Err(Error::ImaginaryResidue { quantity, residue: im });
    }
    Ok(z.re)
}

/// `Ã = ⟨Ḣ + Im Σ_j L̇_j†L_j⟩_ss`.
pub fn phase_generator<T: Real>(point: &ModelPoint<T>, rho_ss: &CMatrix<T>) -> T {
    linalg::expect(rho_ss, &phase_operator(point)).re
}

fn phase_operator<T: Real>(point: &ModelPoint<T>) -> CMatrix<T> {
    let mut b = point.h_dot.clone();
    for (l, ld) in point.l.iter().zip(&point.l_dot) {
        b += im_part(&(ld.adjoint() * l));
    }
    b
}

/// Results of the quantum Fisher information computation.
#[derive(Clone, Debug)]
pub struct Qfi<T: Real> {
    pub f: T,
    /// Centered phase operator `B = Ḣ + Im Σ L̇†L − Ã`.
    pub b: CMatrix<T>,
    /// `B̃ = L̃(B)`.
    pub b_tilde: CMatrix<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CountingCoefficients<T: Real + Serialize> {
    pub mu_c: T,
    pub v_c: T,
    pub i_c: T,
    pub rate: T,
    /// `V_c` vanished; `i_c` is reported as zero.
    pub degenerate_variance: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HomodyneCoefficients<T: Real + Serialize> {
    pub phi: T,
    pub mu_h: T,
    pub v_h: T,
    pub i_h: T,
    pub drift: T,
    pub degenerate_variance: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostics<T: Real + Serialize> {
    pub gap: T,
    pub min_eig: T,
    pub a_tilde: T,
    /// Largest `|⟨·⟩_ss|` over the centered intermediates.
    pub centering_residual: T,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FisherReport<T: Real + Serialize> {
    pub theta0: T,
    pub channel: usize,
    #[serde(rename = "F")]
    pub f: T,
    #[serde(rename = "X2_mean")]
    pub x2_mean: Option<T>,
    pub count: Option<CountingCoefficients<T>>,
    pub homodyne: Option<HomodyneCoefficients<T>>,
    pub diagnostics: Diagnostics<T>,
}

/// A model evaluated at `θ₀` with its stationary analysis; the entry point
/// for every Fisher-information quantity.
#[derive(Clone, Debug)]
pub struct Analysis<T: Real> {
    pub model: ParamModel<T>,
    pub point: ModelPoint<T>,
    pub stationary: StationaryAnalysis<T>,
    pub a_tilde: T,
}

impl<T: Real + Serialize> Analysis<T> {
    /// Default options: full-rank certificate, or the Fock tail check for
    /// truncated models.
    pub fn default_options(model: &ParamModel<T>) -> StationaryOptions {
        StationaryOptions {
            fock_tail_tol: model.is_fock_truncated().then_some(MASER_TAIL_TOL),
            ..StationaryOptions::default()
        }
    }

    pub fn new(model: &ParamModel<T>, theta0: T) -> Result<Self> {
        Self::with_options(model, theta0, &Self::default_options(model), None)
    }

    pub fn with_options(
        model: &ParamModel<T>,
        theta0: T,
        opts: &StationaryOptions,
        fd_step: Option<T>,
    ) -> Result<Self> {
        let point = evaluate(model, theta0, fd_step)?;
        let stationary = analyze(&point, opts)?;
        let a_tilde = real_value("A~", stationary.expect(&phase_operator(&point)))?;
        Ok(Analysis {
            model: model.clone(),
            point,
            stationary,
            a_tilde,
        })
    }

    pub fn theta0(&self) -> T {
        self.point.theta0
    }

    fn expect(&self, x: &CMatrix<T>) -> Complex<T> {
        self.stationary.expect(x)
    }

    /// `K = Σ_j (L̇_j†L_j + L_j†L̇_j)`.
    fn k_total(&self) -> CMatrix<T> {
        let d = self.point.dim();
        let mut k = linalg::zeros::<T>(d);
        for (l, ld) in self.point.l.iter().zip(&self.point.l_dot) {
            k += ld.adjoint() * l + l.adjoint() * ld;
        }
        k
    }

    /// θ-derivative of the Heisenberg generator applied to `X`.
    fn d_generator(&self, x: &CMatrix<T>) -> CMatrix<T> {
        let p = &self.point;
        let mut out = linalg::commutator(&p.h_dot, x) * i_unit::<T>();
        let half = real(lit::<T>(0.5));
        for (l, ld) in p.l.iter().zip(&p.l_dot) {
            let kj = ld.adjoint() * l + l.adjoint() * ld;
            out += ld.adjoint() * x * l + l.adjoint() * x * ld - linalg::anticommutator(&kj, x) * half;
        }
        out
    }

    pub fn qfi(&self) -> Result<Qfi<T>> {
        let p = &self.point;
        let b = self.stationary.center(&phase_operator(p));
        let bt = self.stationary.invert(&b);
        let k = self.k_total();
        let d = p.dim();
        let mut x1 = linalg::zeros::<T>(d);
        let mut sandwich = linalg::zeros::<T>(d);
        for (l, ld) in p.l.iter().zip(&p.l_dot) {
            x1 += ld.adjoint() * ld * real(lit::<T>(0.5));
            sandwich += ld.adjoint() * &bt * l;
        }
        x1 -= re_part(&(&p.h_dot * &bt));
        x1 -= im_part(&sandwich);
        x1 -= linalg::commutator(&k, &bt) * Complex::new(T::zero(), lit(0.25));
        let mut f = real_value("F", self.expect(&x1))? * lit(8.0);
        if f < T::zero() {
            if to_f64(f) >= -1e-10 {
                f = T::zero();
            } else {
                return Err(Error::BoundViolated {
                    which: "F >= 0",
                    information: to_f64(f),
                    qfi: 0.0,
                });
            }
        }
        Ok(Qfi { f, b, b_tilde: bt })
    }

    /// `⟨X₂⟩_ss`, the coefficient of the limiting overlap phase
    /// `e^{i(u²−v²)⟨X₂⟩}`.
    pub fn phase_constant_x2(&self) -> Result<T> {
        let p = &self.point;
        let (hdd, ldd) = match (&p.h_ddot, &p.l_ddot) {
            (Some(h), Some(l)) => (h, l),
            _ => return Err(Error::MissingSecondDerivatives),
        };
        let bt = self.qfi()?.b_tilde;
        let half = real(lit::<T>(0.5));
        let mut acc = hdd.clone();
        for (l, lddj) in p.l.iter().zip(ldd) {
            acc += im_part(&(lddj.adjoint() * l));
        }
        let mut x2 = acc * half;
        let mut sandwich = linalg::zeros::<T>(p.dim());
        for (l, ld) in p.l.iter().zip(&p.l_dot) {
            sandwich += ld.adjoint() * &bt * l;
        }
        x2 += im_part(&(&p.h_dot * &bt));
        x2 -= re_part(&sandwich);
        x2 += linalg::anticommutator(&self.k_total(), &bt) * real(lit::<T>(0.25));
        real_value("X2", self.expect(&x2))
    }

    fn channel_ops(&self, channel: usize) -> Result<(&CMatrix<T>, &CMatrix<T>)> {
        self.model.check_channel(channel)?;
        Ok((&self.point.l[channel], &self.point.l_dot[channel]))
    }

    /// Mean slope `μ_c`, variance `V_c` and rate of the counts in `channel`.
    pub fn counting_coefficients(&self, channel: usize) -> Result<CountingCoefficients<T>> {
        let (l, ld) = self.channel_ops(channel)?;
        let ll = l.adjoint() * l;
        let rate = real_value("rate", self.expect(&ll))?;
        let a = -self.stationary.invert(&self.stationary.center(&ll));
        let km = ld.adjoint() * l + l.adjoint() * ld;
        let mu = real_value("mu_c", self.expect(&(self.d_generator(&a) + km)))?;
        let v = rate + real_value("V_c", self.expect(&(l.adjoint() * &a * l)))? * lit(2.0);
        let degenerate = to_f64(v) <= DEGENERATE_VARIANCE;
        Ok(CountingCoefficients {
            mu_c: mu,
            v_c: v,
            i_c: if degenerate { T::zero() } else { mu * mu / v },
            rate,
            degenerate_variance: degenerate,
        })
    }

    /// Centered counting observable `A = −L̃(L†L − rate)`.
    pub fn counting_observable(&self, channel: usize) -> Result<CMatrix<T>> {
        let (l, _) = self.channel_ops(channel)?;
        Ok(-self.stationary.invert(&self.stationary.center(&(l.adjoint() * l))))
    }

    /// Centered homodyne observable `B = −L̃(e^{−iφ}L† + e^{iφ}L − drift)`.
    pub fn homodyne_observable(&self, phi: T, channel: usize) -> Result<CMatrix<T>> {
        let (l, _) = self.channel_ops(channel)?;
        let y = quadrature(l, phi);
        Ok(-self.stationary.invert(&self.stationary.center(&y)))
    }

    /// Mean slope `μ_h`, variance `V_h` and drift of the integrated homodyne
    /// current of `channel` at local oscillator phase `phi`.
    pub fn homodyne_coefficients(&self, phi: T, channel: usize) -> Result<HomodyneCoefficients<T>> {
        let (l, ld) = self.channel_ops(channel)?;
        let e = Complex::new(phi.cos(), phi.sin());
        let drift = real_value("drift", self.expect(&quadrature(l, phi)))?;
        let b = self.homodyne_observable(phi, channel)?;
        let lin = ld.adjoint() * e.conj() + ld * e;
        let mu = real_value("mu_h", self.expect(&(self.d_generator(&b) + lin)))?;
        let cross = l.adjoint() * &b * e.conj() + &b * l * e;
        let v = T::one() + real_value("V_h", self.expect(&cross))? * lit(2.0);
        let degenerate = to_f64(v) <= DEGENERATE_VARIANCE;
        Ok(HomodyneCoefficients {
            phi,
            mu_h: mu,
            v_h: v,
            i_h: if degenerate { T::zero() } else { mu * mu / v },
            drift,
            degenerate_variance: degenerate,
        })
    }

    /// All informations at once, with `I_c ≤ F` and `I_h ≤ F` enforced.
    pub fn report(&self, phi: T, channel: usize) -> Result<FisherReport<T>> {
        let q = self.qfi()?;
        let x2 = match self.phase_constant_x2() {
            Ok(v) => Some(v),
            Err(Error::MissingSecondDerivatives) => None,
            Err(e) => return Err(e),
        };
        let count = self.counting_coefficients(channel)?;
        let homodyne = self.homodyne_coefficients(phi, channel)?;
        let f64f = to_f64(q.f);
        let slack = 1e-8 * f64f + 1e-12;
        for (which, info) in [("I_c", to_f64(count.i_c)), ("I_h", to_f64(homodyne.i_h))] {
            if info > f64f + slack {
                return Err(Error::BoundViolated {
                    which,
                    information: info,
                    qfi: f64f,
                });
            }
        }
        let rho = &self.stationary.rho_ss;
        let residual = [
            check_centering(&q.b_tilde, rho),
            check_centering(&self.counting_observable(channel)?, rho),
            check_centering(&self.homodyne_observable(phi, channel)?, rho),
        ]
        .into_iter()
        .fold(T::zero(), |a, b| a.max(b));
        Ok(FisherReport {
            theta0: self.theta0(),
            channel,
            f: q.f,
            x2_mean: x2,
            count: Some(count),
            homodyne: Some(homodyne),
            diagnostics: Diagnostics {
                gap: self.stationary.gap,
                min_eig: self.stationary.min_eig,
                a_tilde: self.a_tilde,
                centering_residual: residual,
            },
        })
    }
}

/// `e^{−iφ}L† + e^{iφ}L`.
pub fn quadrature<T: Real>(l: &CMatrix<T>, phi: T) -> CMatrix<T> {
    let e = Complex::new(phi.cos(), phi.sin());
    l.adjoint() * e.conj() + l * e
}

/// Quantum Fisher information per unit time at `theta0`.
pub fn qfi<T: Real + Serialize>(model: &ParamModel<T>, theta0: T) -> Result<Qfi<T>> {
    Analysis::new(model, theta0)?.qfi()
}

pub fn phase_constant_x2<T: Real + Serialize>(model: &ParamModel<T>, theta0: T) -> Result<T> {
    Analysis::new(model, theta0)?.phase_constant_x2()
}

pub fn counting_coefficients<T: Real + Serialize>(
    model: &ParamModel<T>,
    theta0: T,
    channel: usize,
) -> Result<CountingCoefficients<T>> {
    Analysis::new(model, theta0)?.counting_coefficients(channel)
}

pub fn homodyne_coefficients<T: Real + Serialize>(
    model: &ParamModel<T>,
    theta0: T,
    phi: T,
    channel: usize,
) -> Result<HomodyneCoefficients<T>> {
    Analysis::new(model, theta0)?.homodyne_coefficients(phi, channel)
}

pub fn assemble_report<T: Real + Serialize>(
    model: &ParamModel<T>,
    theta0: T,
    phi: T,
    channel: usize,
) -> Result<FisherReport<T>> {
    Analysis::new(model, theta0)?.report(phi, channel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{atom_maser_model, maser_oracles, sigma_minus, sigma_plus, two_level_model, two_level_oracles};
    use crate::C64;

    fn tl(z: C64, th: f64) -> Analysis<f64> {
        Analysis::new(&two_level_model(z).unwrap(), th).unwrap()
    }

    #[test]
    fn two_level_qfi() {
        let a = tl(C64::new(1.0, 0.0), 2.0);
        let q = a.qfi().unwrap();
        assert!((q.f - 8.0 / 3.0).abs() < 1e-12);
        assert!(check_centering(&q.b, &a.stationary.rho_ss) < 1e-12);
        assert!(check_centering(&q.b_tilde, &a.stationary.rho_ss) < 1e-12);
    }

    #[test]
    fn two_level_phase_generator_and_x2() {
        let a = tl(C64::new(1.0, 0.0), 2.0);
        // ⟨Ḣ⟩ and ⟨Im σ₊(2σ₋ + 𝟙)⟩ cancel against ρ_ss
        assert!((phase_generator(&a.point, &a.stationary.rho_ss) - a.a_tilde).abs() < 1e-15);
        assert!(a.a_tilde.abs() < 1e-12);
        assert!(a.phase_constant_x2().unwrap().abs() < 1e-12);
    }

    #[test]
    fn two_level_counting() {
        for (z, th) in [(C64::new(1.0, 0.0), 2.0), (C64::new(0.5, 0.3), 1.0)] {
            let c = tl(z, th).counting_coefficients(0).unwrap();
            assert!((c.rate - z.norm_sqr()).abs() < 1e-12);
            assert!(c.mu_c.abs() < 1e-10);
            assert!(c.i_c < 1e-20);
        }
        let c = tl(C64::new(1.0, 0.0), 2.0).counting_coefficients(0).unwrap();
        assert!((c.v_c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_level_homodyne_against_rederived_forms() {
        let z = C64::new(1.0, 0.0);
        let a = tl(z, 2.0);
        let h = a.homodyne_coefficients(0.0, 0).unwrap();
        assert!((h.drift - 2.0 / 3.0).abs() < 1e-12);
        assert!((h.mu_h + 8.0 / 9.0).abs() < 1e-12);
        assert!((h.v_h - 17.0 / 9.0).abs() < 1e-12);
        for k in 0..12 {
            let phi = k as f64 * std::f64::consts::PI / 6.0;
            let h = a.homodyne_coefficients(phi, 0).unwrap();
            let o = two_level_oracles(z, 2.0, phi).unwrap();
            assert!((h.mu_h - o.homodyne_mean).abs() < 1e-10);
            assert!((h.v_h - o.homodyne_variance).abs() < 1e-10);
            assert!((h.drift - o.mean_homodyne).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_model_has_no_information() {
        let m = ParamModel::constant(linalg::zeros::<f64>(2), vec![sigma_minus(), sigma_plus() * C64::new(0.5, 0.0)])
            .unwrap();
        let r = assemble_report(&m, 0.0, 0.3, 0).unwrap();
        assert_eq!(r.f, 0.0);
        assert!(r.count.as_ref().unwrap().mu_c.abs() < 1e-14);
        assert!(r.homodyne.as_ref().unwrap().mu_h.abs() < 1e-14);
        assert!(r.x2_mean.unwrap().abs() < 1e-14);
    }

    #[test]
    fn maser_qfi_matches_closed_form() {
        let m = atom_maser_model(16.0, 0.1, 60).unwrap();
        let a = Analysis::new(&m, 1.0).unwrap();
        let o = maser_oracles(16.0, 0.1, 1.0, 60).unwrap();
        let f = a.qfi().unwrap().f;
        assert!((f - o.f).abs() < 1e-6 * o.f);
        for (n, r) in o.rho_diag.iter().enumerate() {
            assert!((a.stationary.rho_ss[(n, n)].re - r).abs() < 1e-10);
        }
    }

    #[test]
    fn missing_second_derivatives() {
        let sm = sigma_minus::<f64>();
        let l: crate::model::MatrixMap<f64> = std::sync::Arc::new(move |th| &sm * C64::new(th, 0.0) + linalg::identity(2));
        let h: crate::model::MatrixMap<f64> = std::sync::Arc::new(|_| linalg::zeros(2));
        let m = ParamModel::new(2, h, vec![l]).unwrap();
        let a = Analysis::new(&m, 2.0).unwrap();
        assert_eq!(a.phase_constant_x2().unwrap_err(), Error::MissingSecondDerivatives);
        let r = a.report(0.0, 0).unwrap();
        assert!(r.x2_mean.is_none());
    }
}
