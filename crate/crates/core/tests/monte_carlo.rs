// SPDX-License-Identifier: Apache-2.0

use qlan::asymptotics::exact_homodyne_cf;
use qlan::model::{evaluate, two_level_model};
use qlan::trajectories::{
    empirical_lan_check, plug_in_estimator, run_ensemble, Scheme, TrajectoryConfig, TrajectoryRecord, CF_GRID,
};
use qlan::{Analysis64, C64};

const THETA0: f64 = 2.0;

fn setup() -> Analysis64 {
    Analysis64::new(&two_level_model(C64::new(1.0, 0.0)).unwrap(), THETA0).unwrap()
}

fn config(scheme: Scheme, t: f64, dt: f64, n: usize, seed: u64, centering: f64) -> TrajectoryConfig {
    TrajectoryConfig {
        t_final: t,
        dt,
        seed,
        n_traj: n,
        scheme,
        phi: 0.0,
        channel: 0,
        centering,
    }
}

fn run(an: &Analysis64, u: f64, cfg: &TrajectoryConfig) -> Vec<TrajectoryRecord> {
    let point = evaluate(&an.model, THETA0 + u / cfg.t_final.sqrt(), None).unwrap();
    run_ensemble(&point, cfg, &an.stationary.rho_ss).unwrap()
}

// mean and standard error of y/√t
fn mean_se(recs: &[TrajectoryRecord], t: f64) -> (f64, f64) {
    let xs: Vec<f64> = recs.iter().map(|r| r.y_centered / t.sqrt()).collect();
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

#[test]
fn finite_time_bias_shrinks_with_time() {
    // what the empirical normality statistic estimates, without sampling noise
    let an = setup();
    let h = an.homodyne_coefficients(0.0, 0).unwrap();
    let bias: Vec<f64> = [50.0, 200.0, 800.0]
        .iter()
        .map(|&t| {
            CF_GRID
                .iter()
                .map(|&s| {
                    let exact = exact_homodyne_cf(&an, 1.0, s, 0.0, t, 0, None).unwrap();
                    (exact - C64::new(-0.5 * h.v_h * s * s, h.mu_h * s).exp()).norm()
                })
                .fold(0.0, f64::max)
        })
        .collect();
    assert!(bias[0] > bias[1] && bias[1] > bias[2], "{bias:?}");
    // roughly t^(-1/2)
    let slope = (bias[2] / bias[0]).ln() / 16f64.ln();
    assert!((-0.75..=-0.35).contains(&slope), "slope {slope}");
}

#[test]
fn normality_statistic_sits_at_sampling_floor() {
    let an = setup();
    let h = an.homodyne_coefficients(0.0, 0).unwrap();
    let n = 500;
    let recs = run(&an, 1.0, &config(Scheme::Diffusive, 50.0, 0.005, n, 17, h.drift));
    let check = empirical_lan_check(&recs, h.mu_h, h.v_h, 1.0, 50.0).unwrap();
    // |ĉ(s) − c(s)| has scale 1/√n; the exact bias at t = 50 is below 0.01
    let floor = 3.0 / (n as f64).sqrt();
    assert!(check.normality_stat < floor + 0.01, "{}", check.normality_stat);
    assert!((check.mean_z - check.target_mean).abs() < 4.0 * check.mean_z_se);
}

#[test]
fn halving_the_step_leaves_the_mean_alone() {
    let an = setup();
    let h = an.homodyne_coefficients(0.0, 0).unwrap();
    let t = 20.0;
    let (a, sa) = mean_se(&run(&an, 1.0, &config(Scheme::Diffusive, t, 0.005, 400, 5, h.drift)), t);
    let (b, sb) = mean_se(&run(&an, 1.0, &config(Scheme::Diffusive, t, 0.0025, 400, 6, h.drift)), t);
    assert!((a - b).abs() < 3.0 * sa.hypot(sb), "{a} vs {b}");
}

#[test]
fn outputs_are_centered_at_zero_shift() {
    let an = setup();
    let t = 30.0;
    let c = an.counting_coefficients(0).unwrap();
    let (m, se) = mean_se(&run(&an, 0.0, &config(Scheme::Jump, t, 0.005, 400, 9, c.rate)), t);
    assert!(m.abs() < 3.0 * se, "counting {m} ± {se}");

    let h = an.homodyne_coefficients(0.0, 0).unwrap();
    let (m, se) = mean_se(&run(&an, 0.0, &config(Scheme::Diffusive, t, 0.005, 400, 10, h.drift)), t);
    assert!(m.abs() < 3.0 * se, "homodyne {m} ± {se}");
}

#[test]
fn plug_in_is_unbiased_at_zero_shift() {
    let an = setup();
    let h = an.homodyne_coefficients(0.0, 0).unwrap();
    let t = 30.0;
    let recs = run(&an, 0.0, &config(Scheme::Diffusive, t, 0.005, 400, 11, h.drift));
    let p = plug_in_estimator(&recs, h.mu_h, THETA0, THETA0, t).unwrap();
    assert!((p.mean_theta_hat - THETA0).abs() < 3.0 * p.mean_theta_hat_se, "{p:?}");
    // t·MSE is of order the inverse homodyne information
    assert!(p.mse_times_t > 0.5 / h.i_h && p.mse_times_t < 2.0 / h.i_h, "{}", p.mse_times_t);
}
