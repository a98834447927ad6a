// SPDX-License-Identifier: Apache-2.0

//! JSON run configuration.

use std::path::{Path, PathBuf};

use qlan::model::{atom_maser_model, two_level_model, Taylor};
use qlan::{CMatrix64, ParamModel64, StationaryOptions, C64};
use serde::{Deserialize, Serialize};

/// Bad input rather than a numerical failure; maps to exit code 3.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid configuration: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn bad(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

/// A complex entry, written either as a bare real number or `[re, im]`.
#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(untagged)]
pub enum Cx {
    Re(f64),
    Pair([f64; 2]),
}

impl Cx {
    fn value(self) -> C64 {
        match self {
            Cx::Re(x) => C64::new(x, 0.0),
            Cx::Pair([a, b]) => C64::new(a, b),
        }
    }
}

/// Row-major nested matrix.
pub type RawMatrix = Vec<Vec<Cx>>;

fn matrix(name: &str, dim: usize, rows: &RawMatrix) -> anyhow::Result<CMatrix64> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(bad(format!("{name} must be {dim}x{dim}")));
    }
    let m = CMatrix64::from_fn(dim, dim, |i, j| rows[i][j].value());
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(bad(format!("{name} has non-finite entries")));
    }
    Ok(m)
}

/// `M(θ) = value + (θ−θ₀) first + ½(θ−θ₀)² second`.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TaylorSpec {
    pub value: RawMatrix,
    #[serde(default)]
    pub first: Option<RawMatrix>,
    #[serde(default)]
    pub second: Option<RawMatrix>,
}

impl TaylorSpec {
    fn build(&self, name: &str, dim: usize) -> anyhow::Result<Taylor<f64>> {
        let zero = || CMatrix64::zeros(dim, dim);
        Ok(Taylor {
            value: matrix(name, dim, &self.value)?,
            first: self.first.as_ref().map_or(Ok(zero()), |m| matrix(name, dim, m))?,
            second: self.second.as_ref().map_or(Ok(zero()), |m| matrix(name, dim, m))?,
        })
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    TwoLevel {
        z_re: f64,
        #[serde(default)]
        z_im: f64,
    },
    AtomMaser {
        n_ex: f64,
        nu: f64,
        cutoff: usize,
    },
    /// Quadratic model about `theta0`.
    Custom {
        dim: usize,
        #[serde(rename = "H")]
        h: TaylorSpec,
        #[serde(rename = "L")]
        l: Vec<TaylorSpec>,
    },
}

impl ModelSpec {
    pub fn build(&self, theta0: f64) -> anyhow::Result<ParamModel64> {
        Ok(match self {
            ModelSpec::TwoLevel { z_re, z_im } => two_level_model(C64::new(*z_re, *z_im))?,
            ModelSpec::AtomMaser { n_ex, nu, cutoff } => atom_maser_model(*n_ex, *nu, *cutoff)?,
            ModelSpec::Custom { dim, h, l } => {
                if *dim == 0 {
                    return Err(bad("custom dim must be positive"));
                }
                if l.is_empty() {
                    return Err(bad("custom model needs at least one jump operator"));
                }
                let hh = h.build("H", *dim)?;
                let ls = l
                    .iter()
                    .enumerate()
                    .map(|(j, t)| t.build(&format!("L[{j}]"), *dim))
                    .collect::<anyhow::Result<Vec<_>>>()?;
                ParamModel64::polynomial(theta0, hh, ls)?
            }
        })
    }
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub rank_tol: Option<f64>,
    pub gap_tol: Option<f64>,
    pub fock_tail_tol: Option<f64>,
}

impl Tolerances {
    pub fn apply(&self, mut o: StationaryOptions) -> StationaryOptions {
        if let Some(x) = self.rank_tol {
            o.rank_tol = x;
        }
        if let Some(x) = self.gap_tol {
            o.gap_tol = x;
        }
        if self.fock_tail_tol.is_some() {
            o.fock_tail_tol = self.fock_tail_tol;
        }
        o
    }
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FisherBlock {
    pub theta0_grid: Option<Vec<f64>>,
    pub phi_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub channel: usize,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct LanBlock {
    #[serde(default = "all_kinds")]
    pub kinds: Vec<String>,
    #[serde(default = "one")]
    pub u: f64,
    #[serde(default = "default_arg_grid")]
    pub arg_grid: Vec<f64>,
    #[serde(default = "default_t_grid")]
    pub t_grid: Vec<f64>,
    #[serde(default)]
    pub phi: f64,
    #[serde(default)]
    pub channel: usize,
}

impl Default for LanBlock {
    fn default() -> Self {
        LanBlock {
            kinds: all_kinds(),
            u: 1.0,
            arg_grid: default_arg_grid(),
            t_grid: default_t_grid(),
            phi: 0.0,
            channel: 0,
        }
    }
}

fn all_kinds() -> Vec<String> {
    vec!["overlap".into(), "counting".into(), "homodyne".into()]
}

fn one() -> f64 {
    1.0
}

fn default_arg_grid() -> Vec<f64> {
    (-6..=6).map(|k| k as f64 * 0.5).collect()
}

fn default_t_grid() -> Vec<f64> {
    vec![1e2, 1e3, 1e4]
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    /// `jump` (counting) or `diffusive` (homodyne).
    pub scheme: String,
    #[serde(default)]
    pub u: f64,
    pub t_final: f64,
    pub dt: f64,
    pub n_traj: usize,
    #[serde(default)]
    pub phi: f64,
    #[serde(default)]
    pub channel: usize,
    /// Write the per-trajectory CSV.
    #[serde(default)]
    pub dump: bool,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FigdataBlock {
    /// `fig2`, `fig3` or `all`.
    pub preset: String,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub theta0: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub fisher: Option<FisherBlock>,
    #[serde(default)]
    pub lan: Option<LanBlock>,
    #[serde(default)]
    pub simulate: Option<SimulateBlock>,
    #[serde(default)]
    pub figdata: Option<FigdataBlock>,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        if !cfg.theta0.is_finite() {
            return Err(bad("theta0 must be finite"));
        }
        Ok(cfg)
    }
}

pub fn check_grid(name: &str, grid: &[f64]) -> anyhow::Result<()> {
    if grid.is_empty() {
        return Err(bad(format!("{name} must be non-empty")));
    }
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(bad(format!("{name} must be finite")));
    }
    Ok(())
}
