// SPDX-License-Identifier: Apache-2.0

//! Monte Carlo unravellings of the monitored dynamics: quantum jumps for
//! photon counting and a diffusive scheme for homodyne detection.
//!
//! Conditional states are density matrices; unmonitored channels are traced
//! out at every step. Everything here is `f64`.

use nalgebra::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::linalg;
use crate::{CMatrix64, Error, ModelPoint64, Result, C64};

/// Hard cap on the per-step jump probability.
pub const MAX_JUMP_PROBABILITY: f64 = 0.1;
/// Sanity bound on `dt · max_j ‖L_j†L_j‖`.
pub const MAX_STEP_LOAD: f64 = 0.05;
/// Minimum ensemble size for [`empirical_lan_check`].
pub const MIN_LAN_ENSEMBLE: usize = 500;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Jump,
    Diffusive,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrajectoryConfig {
    pub t_final: f64,
    pub dt: f64,
    pub seed: u64,
    pub n_traj: usize,
    pub scheme: Scheme,
    /// Quadrature phase, diffusive scheme only.
    pub phi: f64,
    pub channel: usize,
    /// Rate (jump) or drift (diffusive) at the reference parameter; the
    /// recorded statistic is `raw − t_final · centering`.
    pub centering: f64,
}

impl TrajectoryConfig {
    /// Number of steps and the step actually used (`t_final / steps`).
    pub fn steps(&self) -> (usize, f64) {
        let n = (self.t_final / self.dt - 1e-9).ceil().max(1.0) as usize;
        (n, self.t_final / n as f64)
    }

    pub fn validate(&self, point: &ModelPoint64) -> Result<()> {
        if !(self.t_final.is_finite() && self.t_final > 0.0) {
            return Err(Error::invalid("t_final must be positive"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) || self.dt > self.t_final {
            return Err(Error::invalid("dt must satisfy 0 < dt <= t_final"));
        }
        if self.n_traj == 0 {
            return Err(Error::invalid("n_traj must be positive"));
        }
        if !self.phi.is_finite() || !self.centering.is_finite() {
            return Err(Error::invalid("phi and centering must be finite"));
        }
        if self.channel >= point.channels() {
            return Err(Error::BadChannel {
                channel: self.channel,
                channels: point.channels(),
            });
        }
        let load = point
            .l
            .iter()
            .map(|l| spectral_norm(&(l.adjoint() * l)))
            .fold(0.0, f64::max)
            * self.dt;
        if load > MAX_STEP_LOAD {
            return Err(Error::StepTooLarge { probability: load });
        }
        Ok(())
    }
}

fn spectral_norm(m: &CMatrix64) -> f64 {
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Raw measured quantity of one trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Raw {
    Counts(u64),
    Current(f64),
}

impl Raw {
    pub fn value(self) -> f64 {
        match self {
            Raw::Counts(n) => n as f64,
            Raw::Current(z) => z,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub raw: Raw,
    pub y_centered: f64,
    pub final_state: CMatrix64,
}

/// Preallocated per-trajectory work space.
struct Stepper {
    d: usize,
    h_eff_step: CMatrix64,
    m0_adj: CMatrix64,
    mon: CMatrix64,
    mon_adj: CMatrix64,
    mon_n: CMatrix64,
    others: Vec<(CMatrix64, CMatrix64)>,
    dt: f64,
    tmp: CMatrix64,
    out: CMatrix64,
}

impl Stepper {
    fn new(point: &ModelPoint64, channel: usize, dt: f64, l_mon: CMatrix64) -> Self {
        let d = point.dim();
        let mut k = linalg::zeros::<f64>(d);
        for l in &point.l {
            k += l.adjoint() * l;
        }
        // M0 = 𝟙 − (iH + ½ Σ L†L) dt
        let m0 = linalg::identity::<f64>(d) - (&point.h * C64::i() + k * C64::new(0.5, 0.0)) * C64::new(dt, 0.0);
        let others = point
            .l
            .iter()
            .enumerate()
            .filter(|(j, l)| *j != channel && l.iter().any(|z| *z != C64::new(0.0, 0.0)))
            .map(|(_, l)| (l.clone(), l.adjoint()))
            .collect();
        Stepper {
            d,
            m0_adj: m0.adjoint(),
            h_eff_step: m0,
            mon_adj: l_mon.adjoint(),
            mon_n: l_mon.adjoint() * &l_mon,
            mon: l_mon,
            others,
            dt,
            tmp: linalg::zeros(d),
            out: linalg::zeros(d),
        }
    }

    /// `out = Σ_{j≠m} L_j ρ L_j† dt + out`.
    fn add_unmonitored(&mut self, rho: &CMatrix64) {
        let dt = C64::new(self.dt, 0.0);
        for (l, l_adj) in &self.others {
            self.tmp.gemm(C64::new(1.0, 0.0), l, rho, C64::new(0.0, 0.0));
            self.out.gemm(dt, &self.tmp, l_adj, C64::new(1.0, 0.0));
        }
    }

    /// `out = M ρ M†`.
    fn sandwich(&mut self, m: &CMatrix64, m_adj: &CMatrix64, rho: &CMatrix64) {
        self.tmp.gemm(C64::new(1.0, 0.0), m, rho, C64::new(0.0, 0.0));
        self.out.gemm(C64::new(1.0, 0.0), &self.tmp, m_adj, C64::new(0.0, 0.0));
    }

    /// Normalizes `out` into `rho`.
    fn commit(&mut self, rho: &mut CMatrix64, step: usize) -> Result<()> {
        let tr = linalg::trace(&self.out).re;
        if !tr.is_finite() || tr <= 0.0 {
            return Err(Error::StateBlowup { step, trace: tr });
        }
        let inv = 1.0 / tr;
        for i in 0..self.d {
            for j in 0..self.d {
                let a = self.out[(i, j)];
                let b = self.out[(j, i)].conj();
                rho[(i, j)] = (a + b) * (0.5 * inv);
            }
        }
        Ok(())
    }
}

fn check_state(rho0: &CMatrix64, d: usize) -> Result<()> {
    if rho0.nrows() != d || rho0.ncols() != d {
        return Err(Error::invalid("initial state has the wrong dimension"));
    }
    if (linalg::trace(rho0) - C64::new(1.0, 0.0)).norm() > 1e-8 || linalg::hermiticity_defect(rho0) > 1e-8 {
        return Err(Error::invalid("initial state must be a density matrix"));
    }
    Ok(())
}

/// One quantum-jump trajectory counting clicks in `cfg.channel`.
pub fn simulate_counting<R: Rng + ?Sized>(
    point: &ModelPoint64,
    cfg: &TrajectoryConfig,
    rho0: &CMatrix64,
    rng: &mut R,
) -> Result<TrajectoryRecord> {
    if cfg.scheme != Scheme::Jump {
        return Err(Error::invalid("simulate_counting needs the jump scheme"));
    }
    cfg.validate(point)?;
    check_state(rho0, point.dim())?;
    let (n, dt) = cfg.steps();
    let mut st = Stepper::new(point, cfg.channel, dt, point.l[cfg.channel].clone());
    let m0 = st.h_eff_step.clone();
    let m0_adj = st.m0_adj.clone();
    let (mon, mon_adj, mon_n) = (st.mon.clone(), st.mon_adj.clone(), st.mon_n.clone());
    let mut rho = rho0.clone();
    let mut counts = 0u64;
    for step in 0..n {
        let p = dt * linalg::expect(&rho, &mon_n).re;
        if p > MAX_JUMP_PROBABILITY {
            return Err(Error::StepTooLarge { probability: p });
        }
        if rng.random::<f64>() < p {
            counts += 1;
            st.sandwich(&mon, &mon_adj, &rho);
        } else {
            st.sandwich(&m0, &m0_adj, &rho);
            st.add_unmonitored(&rho);
        }
        st.commit(&mut rho, step)?;
    }
    Ok(TrajectoryRecord {
        raw: Raw::Counts(counts),
        y_centered: counts as f64 - cfg.t_final * cfg.centering,
        final_state: rho,
    })
}

/// One diffusive trajectory of the integrated quadrature current
/// `dZ = ⟨e^{−iφ}L† + e^{iφ}L⟩ dt + dW`.
///
/// The conditional state is propagated with the second-order Kraus map
/// `M = M0 + c dZ + ½c²(dZ² − dt)`, `c = e^{iφ}L`, which keeps it positive.
pub fn simulate_homodyne<R: Rng + ?Sized>(
    point: &ModelPoint64,
    cfg: &TrajectoryConfig,
    rho0: &CMatrix64,
    rng: &mut R,
) -> Result<TrajectoryRecord> {
    if cfg.scheme != Scheme::Diffusive {
        return Err(Error::invalid("simulate_homodyne needs the diffusive scheme"));
    }
    cfg.validate(point)?;
    check_state(rho0, point.dim())?;
    let (n, dt) = cfg.steps();
    let c = &point.l[cfg.channel] * C64::from_polar(1.0, cfg.phi);
    let mut st = Stepper::new(point, cfg.channel, dt, c);
    let c2 = &st.mon * &st.mon;
    let m0 = st.h_eff_step.clone();
    let mut m = m0.clone();
    let mut m_adj = m0.clone();
    let quad = &st.mon + &st.mon_adj;
    let sq = dt.sqrt();
    let mut rho = rho0.clone();
    let mut z = 0.0;
    for step in 0..n {
        let dw: f64 = rng.sample::<f64, _>(StandardNormal) * sq;
        let dy = linalg::expect(&rho, &quad).re * dt + dw;
        z += dy;
        let a = C64::new(dy, 0.0);
        let b = C64::new(0.5 * (dy * dy - dt), 0.0);
        for (k, mk) in m.iter_mut().enumerate() {
            *mk = m0[k] + st.mon[k] * a + c2[k] * b;
        }
        m.adjoint_to(&mut m_adj);
        st.sandwich(&m, &m_adj, &rho);
        st.add_unmonitored(&rho);
        st.commit(&mut rho, step)?;
    }
    Ok(TrajectoryRecord {
        raw: Raw::Current(z),
        y_centered: z - cfg.t_final * cfg.centering,
        final_state: rho,
    })
}

/// Generator for trajectory `index`: stream `index` of the ChaCha8 key
/// derived from `seed`, so results do not depend on scheduling.
pub fn trajectory_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Runs `cfg.n_traj` independent trajectories on the current rayon pool.
pub fn run_ensemble(point: &ModelPoint64, cfg: &TrajectoryConfig, rho0: &CMatrix64) -> Result<Vec<TrajectoryRecord>> {
    cfg.validate(point)?;
    check_state(rho0, point.dim())?;
    (0..cfg.n_traj)
        .into_par_iter()
        .map(|i| {
            let mut rng = trajectory_rng(cfg.seed, i);
            match cfg.scheme {
                Scheme::Jump => simulate_counting(point, cfg, rho0, &mut rng),
                Scheme::Diffusive => simulate_homodyne(point, cfg, rho0, &mut rng),
            }
        })
        .collect()
}

/// Average of the final conditional states.
pub fn ensemble_mean_state(records: &[TrajectoryRecord]) -> Option<CMatrix64> {
    let first = records.first()?;
    let mut acc = linalg::zeros::<f64>(first.final_state.nrows());
    for r in records {
        acc += &r.final_state;
    }
    Some(acc / C64::new(records.len() as f64, 0.0))
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = if xs.len() > 1 {
        xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, v)
}

#[derive(Clone, Debug, Serialize)]
pub struct PlugIn {
    pub theta_hats: Vec<f64>,
    pub mse_times_t: f64,
    /// Standard error of `mse_times_t`.
    pub mse_times_t_se: f64,
    pub mean_theta_hat: f64,
    pub mean_theta_hat_se: f64,
}

/// `θ̂ = θ₀ + y_centered/(t μ)` per record, and `t · mean((θ̂ − θ)²)`.
pub fn plug_in_estimator(records: &[TrajectoryRecord], mu: f64, theta0: f64, theta: f64, t: f64) -> Result<PlugIn> {
    if !(mu.abs() > 1e-10) {
        return Err(Error::DegenerateMean { mu: mu.abs() });
    }
    if records.is_empty() || !(t > 0.0) {
        return Err(Error::invalid("plug-in estimator needs records and t > 0"));
    }
    let theta_hats: Vec<f64> = records.iter().map(|r| theta0 + r.y_centered / (t * mu)).collect();
    let sq: Vec<f64> = theta_hats.iter().map(|h| t * (h - theta) * (h - theta)).collect();
    let (mse, mse_var) = mean_var(&sq);
    let (m, v) = mean_var(&theta_hats);
    let n = records.len() as f64;
    Ok(PlugIn {
        mse_times_t: mse,
        mse_times_t_se: (mse_var / n).sqrt(),
        mean_theta_hat: m,
        mean_theta_hat_se: (v / n).sqrt(),
        theta_hats,
    })
}

/// Arguments at which the empirical characteristic function is compared.
pub const CF_GRID: [f64; 6] = [0.25, 0.5, 0.75, 1.0, 1.25, 1.5];

#[derive(Clone, Debug, Serialize)]
pub struct LanCheck {
    pub n: usize,
    pub mean_z: f64,
    pub mean_z_se: f64,
    pub var_z: f64,
    pub var_z_se: f64,
    pub target_mean: f64,
    pub target_var: f64,
    /// `max_s |E e^{isZ} − e^{iμus − Vs²/2}|` over [`CF_GRID`].
    pub normality_stat: f64,
}

/// Moments of `Z = y_centered/√t` against the Gaussian limit `N(μu, V)`.
pub fn empirical_lan_check(records: &[TrajectoryRecord], mu: f64, v: f64, u: f64, t: f64) -> Result<LanCheck> {
    if records.len() < MIN_LAN_ENSEMBLE {
        return Err(Error::invalid(format!(
            "empirical LAN check needs at least {MIN_LAN_ENSEMBLE} trajectories"
        )));
    }
    if !(t > 0.0) {
        return Err(Error::invalid("t must be positive"));
    }
    let zs: Vec<f64> = records.iter().map(|r| r.y_centered / t.sqrt()).collect();
    let n = zs.len() as f64;
    let (m, var) = mean_var(&zs);
    let m4 = zs.iter().map(|z| (z - m).powi(4)).sum::<f64>() / n;
    let var_se = ((m4 - var * var * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt();
    let normality_stat = CF_GRID
        .iter()
        .map(|&s| {
            let emp = zs.iter().map(|z| C64::from_polar(1.0, s * z)).sum::<C64>() / n;
            let gauss = Complex::new(-0.5 * v * s * s, mu * u * s).exp();
            (emp - gauss).norm()
        })
        .fold(0.0, f64::max);
    Ok(LanCheck {
        n: zs.len(),
        mean_z: m,
        mean_z_se: (var / n).sqrt(),
        var_z: var,
        var_z_se: var_se,
        target_mean: mu * u,
        target_var: v,
        normality_stat,
    })
}

/// Trace-norm distance between the ensemble-mean state and `reference`.
pub fn unravelling_defect(records: &[TrajectoryRecord], reference: &CMatrix64) -> Option<f64> {
    let mean = ensemble_mean_state(records)?;
    Some(linalg::trace_norm_hermitian(&linalg::hermitize(&(mean - reference))))
}
