// SPDX-License-Identifier: Apache-2.0

use std::sync::Arc;

use approx::assert_relative_eq;
use proptest::prelude::*;
use qlan::asymptotics::{exact_counting_cf, exact_homodyne_cf, exact_overlap};
use qlan::model::{random_model, two_level_model, MatrixMap, Taylor};
use qlan::superop::{lindblad_heisenberg, lindblad_schrodinger};
use qlan::trajectories::trajectory_rng;
use qlan::{Analysis, Analysis64, CMatrix64, Complex, ParamModel64, C64};

fn random_analysis(seed: u64, d: usize, k: usize) -> Option<Analysis64> {
    let mut rng = trajectory_rng(seed, 0);
    let m = random_model(d, k, 0.3, &mut rng).ok()?;
    Analysis64::new(&m, 0.3).ok()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn informations_bounded_by_qfi(seed in any::<u64>(), d in 2usize..=4, k in 1usize..=3, phi in 0.0..std::f64::consts::TAU) {
        let Some(an) = random_analysis(seed, d, k) else { return Ok(()) };
        let f = an.qfi().unwrap().f;
        prop_assert!(f >= 0.0);
        for ch in 0..k {
            let r = an.report(phi, ch).unwrap();
            let slack = 1e-8 * f + 1e-12;
            prop_assert!(r.count.unwrap().i_c <= f + slack);
            prop_assert!(r.homodyne.unwrap().i_h <= f + slack);
            prop_assert!(r.diagnostics.centering_residual < 1e-10);
        }
    }

    #[test]
    fn generator_identities(seed in any::<u64>(), d in 2usize..=4, k in 1usize..=3) {
        let Some(an) = random_analysis(seed, d, k) else { return Ok(()) };
        let heis = lindblad_heisenberg(&an.point);
        let schr = lindblad_schrodinger(&an.point);
        let one = heis.apply(&CMatrix64::identity(d, d));
        prop_assert!(one.iter().all(|z| z.norm() < 1e-12));
        prop_assert!(schr.apply(&an.stationary.rho_ss).iter().all(|z| z.norm() < 1e-10));
        prop_assert!(heis.max_abs_diff(&schr.dual(qlan::Picture::Heisenberg)) < 1e-14);
        prop_assert!(an.stationary.min_eig > 0.0);
    }

    #[test]
    fn characteristic_functions_are_bounded(seed in any::<u64>(), s in -2.0f64..2.0) {
        let Some(an) = random_analysis(seed, 2, 1) else { return Ok(()) };
        let a = exact_counting_cf(&an, 0.0, s, 30.0, 0, None).unwrap();
        let b = exact_counting_cf(&an, 0.0, -s, 30.0, 0, None).unwrap();
        prop_assert!((a - b.conj()).norm() < 1e-10);
        prop_assert!(a.norm() <= 1.0 + 1e-9);
        let h = exact_homodyne_cf(&an, 0.0, s, 0.4, 30.0, 0, None).unwrap();
        prop_assert!(h.norm() <= 1.0 + 1e-9);
        let o = exact_overlap(&an, s, 0.5, 30.0, None).unwrap();
        prop_assert!(o.norm() <= 1.0 + 1e-9);
    }
}

fn rotate(m: &CMatrix64, u: &CMatrix64) -> CMatrix64 {
    u * m * u.adjoint()
}

fn transformed(base: &ParamModel64, f: impl Fn(CMatrix64, CMatrix64) -> (CMatrix64, CMatrix64) + Send + Sync + 'static) -> ParamModel64 {
    // single-channel models only
    let base = Arc::new(base.clone());
    let f = Arc::new(f);
    let (b1, f1) = (base.clone(), f.clone());
    let h: MatrixMap<f64> = Arc::new(move |th| f1(b1.hamiltonian_at(th), b1.jumps_at(th)[0].clone()).0);
    let (b2, f2) = (base.clone(), f.clone());
    let l: MatrixMap<f64> = Arc::new(move |th| f2(b2.hamiltonian_at(th), b2.jumps_at(th)[0].clone()).1);
    ParamModel64::new(base.dim(), h, vec![l]).unwrap()
}

fn random_unitary(d: usize, seed: u64) -> CMatrix64 {
    use rand::Rng;
    let mut rng = trajectory_rng(seed, 1);
    let g = CMatrix64::from_fn(d, d, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    g.qr().q()
}

#[test]
fn unitary_and_phase_gauge_invariance() {
    let mut rng = trajectory_rng(3, 0);
    let base = random_model(3, 1, 0.3, &mut rng).unwrap();
    let reference = Analysis64::new(&base, 0.3).unwrap();
    let f0 = reference.qfi().unwrap().f;
    let ic0 = reference.counting_coefficients(0).unwrap().i_c;
    let ih0 = reference.homodyne_coefficients(0.9, 0).unwrap().i_h;

    let u = random_unitary(3, 11);
    let rotated = transformed(&base, move |h, l| (rotate(&h, &u), rotate(&l, &u)));
    let an = Analysis64::new(&rotated, 0.3).unwrap();
    assert_relative_eq!(an.qfi().unwrap().f, f0, max_relative = 1e-6);
    assert_relative_eq!(an.counting_coefficients(0).unwrap().i_c, ic0, max_relative = 1e-6);
    assert_relative_eq!(an.homodyne_coefficients(0.9, 0).unwrap().i_h, ih0, max_relative = 1e-6);

    // a phase on L shifts the homodyne phase and leaves the rest alone
    let phased = transformed(&base, |h, l| (h, l * C64::from_polar(1.0, 0.4)));
    let an = Analysis64::new(&phased, 0.3).unwrap();
    assert_relative_eq!(an.qfi().unwrap().f, f0, max_relative = 1e-6);
    assert_relative_eq!(an.counting_coefficients(0).unwrap().i_c, ic0, max_relative = 1e-6);
    assert_relative_eq!(an.homodyne_coefficients(0.5, 0).unwrap().i_h, ih0, max_relative = 1e-6);
}

#[test]
fn displacement_gauge_leaves_qfi_unchanged() {
    // L → L + c𝟙, H → H − (i/2)(c̄L − cL†) keeps the generator; the output
    // changes by a parameter-free displacement.
    let mut rng = trajectory_rng(5, 0);
    let base = random_model(2, 1, 0.3, &mut rng).unwrap();
    let f0 = Analysis64::new(&base, 0.3).unwrap().qfi().unwrap().f;
    let c = C64::new(0.7, -0.2);
    let shifted = transformed(&base, move |h, l| {
        let d = l.nrows();
        let extra = (&l * c.conj() - l.adjoint() * c) * C64::new(0.0, -0.5);
        (h + extra, l + CMatrix64::identity(d, d) * c)
    });
    let an = Analysis64::new(&shifted, 0.3).unwrap();
    let base_gen = lindblad_heisenberg(&Analysis64::new(&base, 0.3).unwrap().point);
    assert!(lindblad_heisenberg(&an.point).max_abs_diff(&base_gen) < 1e-12);
    assert_relative_eq!(an.qfi().unwrap().f, f0, max_relative = 1e-6);
}

#[test]
fn finite_differences_match_analytic_derivatives() {
    let mut rng = trajectory_rng(8, 0);
    for (d, k) in [(2, 1), (3, 2), (4, 3)] {
        let analytic = random_model(d, k, 0.3, &mut rng).unwrap();
        let a = Analysis64::new(&analytic, 0.3).unwrap();
        let m = Arc::new(analytic.clone());
        let m1 = m.clone();
        let h: MatrixMap<f64> = Arc::new(move |th| m1.hamiltonian_at(th));
        let jumps: Vec<MatrixMap<f64>> = (0..k)
            .map(|j| {
                let m = m.clone();
                Arc::new(move |th| m.jumps_at(th)[j].clone()) as MatrixMap<f64>
            })
            .collect();
        let fd = ParamModel64::new(d, h, jumps).unwrap();
        assert!(!fd.has_analytic_derivatives());
        let b = Analysis64::new(&fd, 0.3).unwrap();
        assert_relative_eq!(a.qfi().unwrap().f, b.qfi().unwrap().f, max_relative = 1e-6);
        for ch in 0..k {
            let (x, y) = (a.homodyne_coefficients(0.2, ch).unwrap(), b.homodyne_coefficients(0.2, ch).unwrap());
            assert_relative_eq!(x.mu_h, y.mu_h, max_relative = 1e-5, epsilon = 1e-8);
        }
    }
}

#[test]
fn single_precision_two_level() {
    let m = two_level_model::<f32>(Complex::new(1.0, 0.0)).unwrap();
    let an = Analysis::<f32>::new(&m, 2.0).unwrap();
    assert_relative_eq!(an.qfi().unwrap().f, 8.0 / 3.0, max_relative = 1e-3);
    let h = an.homodyne_coefficients(0.0, 0).unwrap();
    assert_relative_eq!(h.v_h, 17.0 / 9.0, max_relative = 1e-3);
    assert_relative_eq!(h.mu_h, -8.0 / 9.0, max_relative = 1e-3);
}

#[test]
fn polynomial_model_reproduces_two_level() {
    let z = C64::new(0.5, 0.3);
    let tl = two_level_model(z).unwrap();
    let th0 = 1.0;
    let taylor = |v: CMatrix64, d: CMatrix64| Taylor::linear(v, d);
    let h0 = tl.hamiltonian_at(th0);
    let h1 = tl.hamiltonian_at(th0 + 1.0) - &h0;
    let l0 = tl.jumps_at(th0)[0].clone();
    let l1 = tl.jumps_at(th0 + 1.0)[0].clone() - &l0;
    let poly = ParamModel64::polynomial(th0, taylor(h0, h1), vec![taylor(l0, l1)]).unwrap();
    let a = Analysis64::new(&tl, th0).unwrap().report(0.3, 0).unwrap();
    let b = Analysis64::new(&poly, th0).unwrap().report(0.3, 0).unwrap();
    assert_relative_eq!(a.f, b.f, max_relative = 1e-12);
    assert_relative_eq!(a.homodyne.unwrap().i_h, b.homodyne.unwrap().i_h, max_relative = 1e-12);
}
