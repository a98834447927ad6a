// SPDX-License-Identifier: Apache-2.0

use std::f64::consts::PI;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use qlan::asymptotics::{lan_sweep, LanSetup};
use qlan::model::{evaluate, maser_oracles, two_level_model, two_level_oracles};
use qlan::trajectories::{
    empirical_lan_check, plug_in_estimator, run_ensemble, LanCheck, Scheme, TrajectoryConfig, MIN_LAN_ENSEMBLE,
};
use qlan::{Analysis64, Error, FisherReport64, LanKind, ParamModel64, C64};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{bad, check_grid, ModelSpec, RunConfig};

pub struct Ctx {
    pub cfg: RunConfig,
    pub out: PathBuf,
}

impl Ctx {
    fn model(&self) -> anyhow::Result<ParamModel64> {
        self.cfg.model.build(self.cfg.theta0)
    }

    fn analysis(&self, model: &ParamModel64, theta0: f64) -> anyhow::Result<Analysis64> {
        let opts = self.cfg.tolerances.apply(Analysis64::default_options(model));
        Ok(Analysis64::with_options(model, theta0, &opts, None)?)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> anyhow::Result<()> {
    let mut f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

fn write_csv<S: Serialize>(path: &Path, rows: &[S]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Closed-form comparison values where the model has them.
fn oracle_columns(spec: &ModelSpec, theta0: f64, phi: f64) -> (Option<f64>, Option<f64>) {
    match spec {
        ModelSpec::TwoLevel { z_re, z_im } => two_level_oracles(C64::new(*z_re, *z_im), theta0, phi)
            .map(|o| (Some(o.f), Some(o.homodyne_information)))
            .unwrap_or((None, None)),
        ModelSpec::AtomMaser { n_ex, nu, cutoff } => (maser_oracles(*n_ex, *nu, theta0, *cutoff).ok().map(|o| o.f), None),
        ModelSpec::Custom { .. } => (None, None),
    }
}

#[derive(Serialize)]
struct FisherRow {
    theta0: f64,
    phi: f64,
    channel: usize,
    #[serde(rename = "F")]
    f: f64,
    #[serde(rename = "F_oracle")]
    f_oracle: Option<f64>,
    #[serde(rename = "X2_mean")]
    x2_mean: Option<f64>,
    rate: f64,
    mu_c: f64,
    #[serde(rename = "V_c")]
    v_c: f64,
    #[serde(rename = "I_c")]
    i_c: f64,
    drift: f64,
    mu_h: f64,
    #[serde(rename = "V_h")]
    v_h: f64,
    #[serde(rename = "I_h")]
    i_h: f64,
    #[serde(rename = "I_h_oracle")]
    i_h_oracle: Option<f64>,
    gap: f64,
    min_eig: f64,
}

fn fisher_row(spec: &ModelSpec, r: &FisherReport64) -> FisherRow {
    let c = r.count.as_ref().expect("report has counting coefficients");
    let h = r.homodyne.as_ref().expect("report has homodyne coefficients");
    let (f_oracle, i_h_oracle) = oracle_columns(spec, r.theta0, h.phi);
    FisherRow {
        theta0: r.theta0,
        phi: h.phi,
        channel: r.channel,
        f: r.f,
        f_oracle,
        x2_mean: r.x2_mean,
        rate: c.rate,
        mu_c: c.mu_c,
        v_c: c.v_c,
        i_c: c.i_c,
        drift: h.drift,
        mu_h: h.mu_h,
        v_h: h.v_h,
        i_h: h.i_h,
        i_h_oracle,
        gap: r.diagnostics.gap,
        min_eig: r.diagnostics.min_eig,
    }
}

#[derive(Serialize)]
struct FisherFile<'a> {
    model: &'a ModelSpec,
    reports: &'a [FisherReport64],
}

pub fn fisher(ctx: &Ctx) -> anyhow::Result<Vec<PathBuf>> {
    let block = ctx.cfg.fisher.clone().unwrap_or_default();
    let thetas = block.theta0_grid.unwrap_or_else(|| vec![ctx.cfg.theta0]);
    let phis = block.phi_grid.unwrap_or_else(|| vec![0.0]);
    check_grid("fisher.theta0_grid", &thetas)?;
    check_grid("fisher.phi_grid", &phis)?;
    let model = ctx.model()?;
    model.check_channel(block.channel)?;
    let per_theta: Vec<Vec<FisherReport64>> = thetas
        .par_iter()
        .map(|&th| {
            let an = ctx.analysis(&model, th)?;
            phis.iter()
                .map(|&phi| Ok(an.report(phi, block.channel)?))
                .collect::<anyhow::Result<Vec<_>>>()
        })
        .collect::<anyhow::Result<_>>()?;
    let reports: Vec<FisherReport64> = per_theta.into_iter().flatten().collect();
    let rows: Vec<FisherRow> = reports.iter().map(|r| fisher_row(&ctx.cfg.model, r)).collect();

    let json = ctx.path("fisher_report.json");
    let csv_path = ctx.path("fisher_sweep.csv");
    write_json(
        &json,
        &FisherFile {
            model: &ctx.cfg.model,
            reports: &reports,
        },
    )?;
    write_csv(&csv_path, &rows)?;
    Ok(vec![json, csv_path])
}

#[derive(Serialize)]
struct LanSummary {
    kind: &'static str,
    u: f64,
    t_grid: Vec<f64>,
    deviation: Vec<f64>,
    decay_exponent: Option<f64>,
    monotone: bool,
}

pub fn lan(ctx: &Ctx) -> anyhow::Result<Vec<PathBuf>> {
    let block = ctx.cfg.lan.clone().unwrap_or_default();
    check_grid("lan.arg_grid", &block.arg_grid)?;
    check_grid("lan.t_grid", &block.t_grid)?;
    if !block.u.is_finite() || !block.phi.is_finite() {
        return Err(bad("lan.u and lan.phi must be finite"));
    }
    let kinds = block
        .kinds
        .iter()
        .map(|k| k.parse::<LanKind>())
        .collect::<qlan::Result<Vec<_>>>()?;
    if kinds.is_empty() {
        return Err(bad("lan.kinds must be non-empty"));
    }
    let model = ctx.model()?;
    let an = ctx.analysis(&model, ctx.cfg.theta0)?;
    let setup = LanSetup {
        phi: block.phi,
        channel: block.channel,
        ..LanSetup::default()
    };
    let mut written = Vec::new();
    let mut summary = Vec::new();
    for kind in kinds {
        let sweep = lan_sweep(kind, &an, block.u, &block.arg_grid, &block.t_grid, &setup)?;
        let path = ctx.path(&format!("lan_{}.csv", kind.name()));
        write_csv(&path, &sweep.rows())?;
        written.push(path);
        summary.push(LanSummary {
            kind: kind.name(),
            u: block.u,
            t_grid: sweep.t_grid.clone(),
            deviation: sweep.deviation.clone(),
            decay_exponent: sweep.decay_exponent,
            monotone: sweep.is_monotone(),
        });
    }
    let path = ctx.path("lan_summary.json");
    write_json(&path, &summary)?;
    written.push(path);
    Ok(written)
}

#[derive(Serialize)]
struct Theory {
    mu: f64,
    #[serde(rename = "V")]
    v: f64,
    #[serde(rename = "I")]
    i: f64,
    #[serde(rename = "I_inv")]
    i_inv: Option<f64>,
    #[serde(rename = "F")]
    f: f64,
}

#[derive(Serialize)]
struct PlugInSummary {
    mse_times_t: f64,
    mse_times_t_se: f64,
    mean_theta_hat: f64,
    mean_theta_hat_se: f64,
    target_mse_times_t: Option<f64>,
}

#[derive(Serialize)]
struct SimulateSummary {
    scheme: Scheme,
    seed: u64,
    theta0: f64,
    theta: f64,
    u: f64,
    t_final: f64,
    dt: f64,
    n_traj: usize,
    phi: f64,
    channel: usize,
    centering: f64,
    mean_y_centered: f64,
    var_y_centered: f64,
    theory: Theory,
    lan_check: Option<LanCheck>,
    plug_in: Option<PlugInSummary>,
    warnings: Vec<String>,
}

#[derive(Serialize)]
struct DumpRow {
    traj_id: usize,
    n_counts_or_current: f64,
    y_centered: f64,
}

pub fn simulate(ctx: &Ctx) -> anyhow::Result<Vec<PathBuf>> {
    let block = ctx
        .cfg
        .simulate
        .clone()
        .ok_or_else(|| bad("simulate block is missing"))?;
    let scheme = match block.scheme.as_str() {
        "jump" | "counting" => Scheme::Jump,
        "diffusive" | "homodyne" => Scheme::Diffusive,
        other => return Err(bad(format!("unknown scheme '{other}'"))),
    };
    if block.n_traj == 0 {
        return Err(bad("simulate.n_traj must be positive"));
    }
    if !(block.t_final.is_finite() && block.t_final > 0.0) || !block.u.is_finite() {
        return Err(bad("simulate.t_final must be positive and u finite"));
    }
    let model = ctx.model()?;
    let theta0 = ctx.cfg.theta0;
    let an = ctx.analysis(&model, theta0)?;
    let t = block.t_final;
    let theta = theta0 + block.u / t.sqrt();
    let f = an.qfi()?.f;
    let (mu, v, info, centering) = match scheme {
        Scheme::Jump => {
            let c = an.counting_coefficients(block.channel)?;
            (c.mu_c, c.v_c, c.i_c, c.rate)
        }
        Scheme::Diffusive => {
            let h = an.homodyne_coefficients(block.phi, block.channel)?;
            (h.mu_h, h.v_h, h.i_h, h.drift)
        }
    };
    let point = evaluate(&model, theta, None)?;
    let tcfg = TrajectoryConfig {
        t_final: t,
        dt: block.dt,
        seed: ctx.cfg.seed,
        n_traj: block.n_traj,
        scheme,
        phi: block.phi,
        channel: block.channel,
        centering,
    };
    let records = run_ensemble(&point, &tcfg, &an.stationary.rho_ss)?;

    let mut warnings = Vec::new();
    let lan_check = if records.len() >= MIN_LAN_ENSEMBLE {
        Some(empirical_lan_check(&records, mu, v, block.u, t)?)
    } else {
        warnings.push(format!("LAN check skipped: fewer than {MIN_LAN_ENSEMBLE} trajectories"));
        None
    };
    let plug_in = match plug_in_estimator(&records, mu, theta0, theta, t) {
        Ok(p) => Some(PlugInSummary {
            mse_times_t: p.mse_times_t,
            mse_times_t_se: p.mse_times_t_se,
            mean_theta_hat: p.mean_theta_hat,
            mean_theta_hat_se: p.mean_theta_hat_se,
            target_mse_times_t: (info > 0.0).then(|| 1.0 / info),
        }),
        Err(e @ Error::DegenerateMean { .. }) => {
            warnings.push(format!("plug-in estimator skipped: {e}"));
            None
        }
        Err(e) => return Err(e.into()),
    };
    let n = records.len() as f64;
    let mean = records.iter().map(|r| r.y_centered).sum::<f64>() / n;
    let var = if records.len() > 1 {
        records.iter().map(|r| (r.y_centered - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let summary = SimulateSummary {
        scheme,
        seed: ctx.cfg.seed,
        theta0,
        theta,
        u: block.u,
        t_final: t,
        dt: block.dt,
        n_traj: block.n_traj,
        phi: block.phi,
        channel: block.channel,
        centering,
        mean_y_centered: mean,
        var_y_centered: var,
        theory: Theory {
            mu,
            v,
            i: info,
            i_inv: (info > 0.0).then(|| 1.0 / info),
            f,
        },
        lan_check,
        plug_in,
        warnings,
    };
    let mut written = Vec::new();
    let path = ctx.path("simulate_summary.json");
    write_json(&path, &summary)?;
    written.push(path);
    if block.dump {
        let rows: Vec<DumpRow> = records
            .iter()
            .enumerate()
            .map(|(i, r)| DumpRow {
                traj_id: i,
                n_counts_or_current: r.raw.value(),
                y_centered: r.y_centered,
            })
            .collect();
        let path = ctx.path("trajectories.csv");
        write_csv(&path, &rows)?;
        written.push(path);
    }
    Ok(written)
}

/// Ratio `|z|/θ₀` of the homodyne preset.
pub const FIG2_RATIO: f64 = 0.66;
pub const FIG3_N_EX: f64 = 16.0;
pub const FIG3_NU: f64 = 0.1;
pub const FIG3_CUTOFF: usize = 60;

#[derive(Serialize)]
struct Fig2PhiRow {
    phi: f64,
    #[serde(rename = "I_h")]
    i_h: f64,
    #[serde(rename = "I_h_oracle")]
    i_h_oracle: f64,
    #[serde(rename = "F")]
    f: f64,
    mu_h: f64,
    #[serde(rename = "V_h")]
    v_h: f64,
}

#[derive(Serialize)]
struct Fig2ThetaRow {
    theta0: f64,
    z: f64,
    #[serde(rename = "I_h")]
    i_h: f64,
    #[serde(rename = "I_h_oracle")]
    i_h_oracle: f64,
    #[serde(rename = "F")]
    f: f64,
    #[serde(rename = "F_oracle")]
    f_oracle: f64,
}

#[derive(Serialize)]
struct Fig3Row {
    phi: f64,
    #[serde(rename = "F")]
    f: f64,
    #[serde(rename = "F_oracle")]
    f_oracle: f64,
    #[serde(rename = "I_c_0")]
    i_c0: f64,
    #[serde(rename = "I_c_1")]
    i_c1: f64,
    #[serde(rename = "I_c_2")]
    i_c2: f64,
    #[serde(rename = "I_c_3")]
    i_c3: f64,
}

fn fig2(ctx: &Ctx) -> anyhow::Result<Vec<PathBuf>> {
    // φ sweep at θ₀ = 1, z = 0.66
    let theta0 = 1.0;
    let z = C64::new(FIG2_RATIO * theta0, 0.0);
    let model = two_level_model(z)?;
    let an = ctx.analysis(&model, theta0)?;
    let f = an.qfi()?.f;
    let phis: Vec<f64> = (0..=72).map(|k| k as f64 * PI / 36.0).collect();
    let rows = phis
        .iter()
        .map(|&phi| {
            let h = an.homodyne_coefficients(phi, 0)?;
            Ok(Fig2PhiRow {
                phi,
                i_h: h.i_h,
                i_h_oracle: two_level_oracles(z, theta0, phi)?.homodyne_information,
                f,
                mu_h: h.mu_h,
                v_h: h.v_h,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let p1 = ctx.path("fig2_phi.csv");
    write_csv(&p1, &rows)?;

    // θ₀ sweep at fixed ratio and φ = 0
    let thetas: Vec<f64> = (1..=40).map(|k| k as f64 * 0.125).collect();
    let rows = thetas
        .par_iter()
        .map(|&th| {
            let z = C64::new(FIG2_RATIO * th, 0.0);
            let an = ctx.analysis(&two_level_model(z)?, th)?;
            let o = two_level_oracles(z, th, 0.0)?;
            Ok(Fig2ThetaRow {
                theta0: th,
                z: z.re,
                i_h: an.homodyne_coefficients(0.0, 0)?.i_h,
                i_h_oracle: o.homodyne_information,
                f: an.qfi()?.f,
                f_oracle: o.f,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let p2 = ctx.path("fig2_theta.csv");
    write_csv(&p2, &rows)?;
    Ok(vec![p1, p2])
}

fn fig3(ctx: &Ctx) -> anyhow::Result<Vec<PathBuf>> {
    let model = qlan::model::atom_maser_model(FIG3_N_EX, FIG3_NU, FIG3_CUTOFF)?;
    let phis: Vec<f64> = (1..=40).map(|k| k as f64 / 25.0).collect();
    let rows = phis
        .par_iter()
        .map(|&phi| {
            let an = ctx.analysis(&model, phi)?;
            let ic = |j| -> anyhow::Result<f64> { Ok(an.counting_coefficients(j)?.i_c) };
            Ok(Fig3Row {
                phi,
                f: an.qfi()?.f,
                f_oracle: maser_oracles(FIG3_N_EX, FIG3_NU, phi, FIG3_CUTOFF)?.f,
                i_c0: ic(0)?,
                i_c1: ic(1)?,
                i_c2: ic(2)?,
                i_c3: ic(3)?,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let p = ctx.path("fig3.csv");
    write_csv(&p, &rows)?;
    Ok(vec![p])
}

pub fn figdata(ctx: &Ctx) -> anyhow::Result<Vec<PathBuf>> {
    let preset = ctx
        .cfg
        .figdata
        .as_ref()
        .map(|b| b.preset.trim().to_string())
        .ok_or_else(|| bad("figdata block is missing"))?;
    match preset.as_str() {
        "" => Err(bad("figdata.preset is empty")),
        "fig2" => fig2(ctx),
        "fig3" => fig3(ctx),
        "all" => {
            let mut v = fig2(ctx)?;
            v.extend(fig3(ctx)?);
            Ok(v)
        }
        other => Err(bad(format!("unknown figdata preset '{other}'"))),
    }
}

#[derive(Serialize)]
struct Validation {
    dim: usize,
    channels: usize,
    theta0: f64,
    gap: f64,
    min_eig: f64,
    #[serde(rename = "F")]
    f: f64,
}

/// Parses the config, checks every block it carries, and certifies
/// irreducibility at `theta0`.
pub fn validate(ctx: &Ctx) -> anyhow::Result<Vec<PathBuf>> {
    let cfg = &ctx.cfg;
    if let Some(b) = &cfg.fisher {
        for (name, g) in [("fisher.theta0_grid", &b.theta0_grid), ("fisher.phi_grid", &b.phi_grid)] {
            if let Some(g) = g {
                check_grid(name, g)?;
            }
        }
    }
    if let Some(b) = &cfg.lan {
        check_grid("lan.arg_grid", &b.arg_grid)?;
        check_grid("lan.t_grid", &b.t_grid)?;
        for k in &b.kinds {
            k.parse::<LanKind>()?;
        }
    }
    if let Some(b) = &cfg.simulate {
        if b.n_traj == 0 {
            return Err(bad("simulate.n_traj must be positive"));
        }
    }
    if let Some(b) = &cfg.figdata {
        if b.preset.trim().is_empty() {
            return Err(bad("figdata.preset is empty"));
        }
    }
    let model = ctx.model()?;
    let an = ctx.analysis(&model, cfg.theta0)?;
    let v = Validation {
        dim: model.dim(),
        channels: model.channels(),
        theta0: cfg.theta0,
        gap: an.stationary.gap,
        min_eig: an.stationary.min_eig,
        f: an.qfi()?.f,
    };
    let path = ctx.path("validation.json");
    write_json(&path, &v)?;
    Ok(vec![path])
}
