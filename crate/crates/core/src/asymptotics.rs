// SPDX-License-Identifier: Apache-2.0

//! Exact finite-time overlaps and characteristic functions, and their
//! convergence to the Gaussian limits.

use nalgebra::{Complex, ComplexField};
use rayon::prelude::*;
use serde::Serialize;

use crate::fisher::{quadrature, Analysis};
use crate::linalg::{self, real};
use crate::superop::{counting_lan_generator, homodyne_lan_generator, semigroup_apply, two_sided_generator};
use crate::{lit, to_f64, CMatrix, CVector, Error, Real, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LanKind {
    Overlap,
    Counting,
    Homodyne,
}

impl LanKind {
    pub fn name(self) -> &'static str {
        match self {
            LanKind::Overlap => "overlap",
            LanKind::Counting => "counting",
            LanKind::Homodyne => "homodyne",
        }
    }
}

impl std::str::FromStr for LanKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "overlap" => Ok(LanKind::Overlap),
            "counting" => Ok(LanKind::Counting),
            "homodyne" => Ok(LanKind::Homodyne),
            other => Err(Error::invalid(format!("unknown LAN kind '{other}'"))),
        }
    }
}

/// `⟨χ₀| e^{G}(𝟙) |χ₀⟩` for the two-sided generator at local parameters
/// `u`, `v`. `chi0` defaults to the first basis vector.
pub fn exact_overlap<T: Real + Serialize>(
    an: &Analysis<T>,
    u: T,
    v: T,
    t: T,
    chi0: Option<&CVector<T>>,
) -> Result<Complex<T>> {
    let d = an.point.dim();
    let g = two_sided_generator(&an.model, an.theta0(), an.a_tilde, u, v, t)?;
    let x = semigroup_apply(&g, T::one(), &linalg::identity(d))?;
    Ok(match chi0 {
        None => x[(0, 0)],
        Some(c) => {
            if c.len() != d {
                return Err(Error::invalid("chi0 has the wrong dimension"));
            }
            (c.adjoint() * x * c)[(0, 0)]
        }
    })
}

/// Gaussian-shift overlap `e^{−(u−v)²F/8} · e^{i(u²−v²)X₂}`; modulus only
/// when `x2` is absent.
pub fn limit_overlap<T: Real>(f: T, x2: Option<T>, u: T, v: T) -> Complex<T> {
    ComplexField::exp(limit_overlap_exponent(f, x2, u, v))
}

fn limit_overlap_exponent<T: Real>(f: T, x2: Option<T>, u: T, v: T) -> Complex<T> {
    let re = -(u - v) * (u - v) * f / lit(8.0);
    let im = x2.map_or(T::zero(), |x| (u * u - v * v) * x);
    Complex::new(re, im)
}

fn state_expect<T: Real>(an: &Analysis<T>, rho_in: Option<&CMatrix<T>>, x: &CMatrix<T>) -> Result<Complex<T>> {
    let rho = rho_in.unwrap_or(&an.stationary.rho_ss);
    if rho.nrows() != x.nrows() || rho.ncols() != x.ncols() {
        return Err(Error::invalid("initial state has the wrong dimension"));
    }
    Ok(linalg::expect(rho, x))
}

fn counting_rate0<T: Real + Serialize>(an: &Analysis<T>, channel: usize) -> Result<T> {
    an.model.check_channel(channel)?;
    let l = &an.point.l[channel];
    Ok(an.stationary.expect(&(l.adjoint() * l)).re)
}

fn homodyne_drift0<T: Real + Serialize>(an: &Analysis<T>, phi: T, channel: usize) -> Result<T> {
    an.model.check_channel(channel)?;
    Ok(an.stationary.expect(&quadrature(&an.point.l[channel], phi)).re)
}

/// `E exp(i s Y_t/√t)` for the centered counts at `θ = θ₀ + u/√t`, started
/// in `rho_in` (default `ρ_ss(θ₀)`).
pub fn exact_counting_cf<T: Real + Serialize>(
    an: &Analysis<T>,
    u: T,
    s: T,
    t: T,
    channel: usize,
    rho_in: Option<&CMatrix<T>>,
) -> Result<Complex<T>> {
    let rate0 = counting_rate0(an, channel)?;
    let g = counting_lan_generator(&an.model, an.theta0(), rate0, u, s, t, channel)?;
    let x = semigroup_apply(&g, T::one(), &linalg::identity(an.point.dim()))?;
    state_expect(an, rho_in, &x)
}

/// `E exp(i p W_t/√t)` for the centered integrated homodyne current.
#[allow(clippy::too_many_arguments)]
pub fn exact_homodyne_cf<T: Real + Serialize>(
    an: &Analysis<T>,
    u: T,
    p: T,
    phi: T,
    t: T,
    channel: usize,
    rho_in: Option<&CMatrix<T>>,
) -> Result<Complex<T>> {
    let drift0 = homodyne_drift0(an, phi, channel)?;
    let g = homodyne_lan_generator(&an.model, an.theta0(), drift0, u, p, phi, t, channel)?;
    let x = semigroup_apply(&g, T::one(), &linalg::identity(an.point.dim()))?;
    state_expect(an, rho_in, &x)
}

/// Measurement and initial-state choices for a sweep.
#[derive(Clone, Debug)]
pub struct LanSetup<T: Real> {
    pub phi: T,
    pub channel: usize,
    pub rho_in: Option<CMatrix<T>>,
    pub chi0: Option<CVector<T>>,
}

impl<T: Real> Default for LanSetup<T> {
    fn default() -> Self {
        LanSetup {
            phi: T::zero(),
            channel: 0,
            rho_in: None,
            chi0: None,
        }
    }
}

/// Limit exponent and evaluator for one kind of sweep.
struct Target<T: Real> {
    exponent: Box<dyn Fn(T) -> Complex<T> + Send + Sync>,
}

fn target<T: Real + Serialize>(kind: LanKind, an: &Analysis<T>, u: T, setup: &LanSetup<T>) -> Result<Target<T>> {
    Ok(match kind {
        LanKind::Overlap => {
            let f = an.qfi()?.f;
            let x2 = match an.phase_constant_x2() {
                Ok(x) => Some(x),
                Err(Error::MissingSecondDerivatives) => None,
                Err(e) => return Err(e),
            };
            Target {
                exponent: Box::new(move |v| limit_overlap_exponent(f, x2, u, v)),
            }
        }
        LanKind::Counting => {
            let c = an.counting_coefficients(setup.channel)?;
            Target {
                exponent: Box::new(move |s| Complex::new(-s * s * c.v_c * lit(0.5), u * s * c.mu_c)),
            }
        }
        LanKind::Homodyne => {
            let h = an.homodyne_coefficients(setup.phi, setup.channel)?;
            Target {
                exponent: Box::new(move |p| Complex::new(-p * p * h.v_h * lit(0.5), u * p * h.mu_h)),
            }
        }
    })
}

fn exact_value<T: Real + Serialize>(
    kind: LanKind,
    an: &Analysis<T>,
    u: T,
    arg: T,
    t: T,
    setup: &LanSetup<T>,
) -> Result<Complex<T>> {
    match kind {
        LanKind::Overlap => exact_overlap(an, u, arg, t, setup.chi0.as_ref()),
        LanKind::Counting => exact_counting_cf(an, u, arg, t, setup.channel, setup.rho_in.as_ref()),
        LanKind::Homodyne => exact_homodyne_cf(an, u, arg, setup.phi, t, setup.channel, setup.rho_in.as_ref()),
    }
}

/// Exact values on a `(t, arg)` grid against the Gaussian limit.
///
/// `arg` is `v` for overlaps, `s` for counting and `p` for homodyne.
#[derive(Clone, Debug)]
pub struct LanSweep<T: Real> {
    pub kind: LanKind,
    pub u: T,
    pub t_grid: Vec<T>,
    pub arg_grid: Vec<T>,
    /// `exact[i][j]` at `t_grid[i]`, `arg_grid[j]`.
    pub exact: Vec<Vec<Complex<T>>>,
    pub limit: Vec<Complex<T>>,
    /// Per `t`: `max_arg |log exact − log limit|` with continuity-tracked
    /// logarithms.
    pub deviation: Vec<T>,
    /// Least-squares slope of `ln deviation` against `ln t`; absent when some
    /// deviation vanishes.
    pub decay_exponent: Option<T>,
}

/// One CSV row of a sweep.
#[derive(Clone, Debug, Serialize)]
pub struct LanRow {
    pub kind: &'static str,
    pub t: f64,
    pub arg: f64,
    pub re_exact: f64,
    pub im_exact: f64,
    pub re_limit: f64,
    pub im_limit: f64,
    pub deviation: f64,
}

impl<T: Real> LanSweep<T> {
    pub fn rows(&self) -> Vec<LanRow> {
        let mut out = Vec::with_capacity(self.t_grid.len() * self.arg_grid.len());
        for (i, &t) in self.t_grid.iter().enumerate() {
            for (j, &a) in self.arg_grid.iter().enumerate() {
                let e = self.exact[i][j];
                let l = self.limit[j];
                out.push(LanRow {
                    kind: self.kind.name(),
                    t: to_f64(t),
                    arg: to_f64(a),
                    re_exact: to_f64(e.re),
                    im_exact: to_f64(e.im),
                    re_limit: to_f64(l.re),
                    im_limit: to_f64(l.im),
                    deviation: to_f64(self.deviation[i]),
                });
            }
        }
        out
    }

    /// Strictly decreasing deviations along `t_grid`.
    pub fn is_monotone(&self) -> bool {
        self.deviation.windows(2).all(|w| w[1] < w[0])
    }
}

/// Continuity-tracked `log z_j`, unwrapping the phase from the grid point
/// closest to zero outward in both directions.
fn tracked_logs(args: &[f64], values: &[Complex<f64>]) -> Vec<Complex<f64>> {
    let n = args.len();
    let mut out = vec![Complex::new(0.0, 0.0); n];
    if n == 0 {
        return out;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| args[a].partial_cmp(&args[b]).unwrap_or(std::cmp::Ordering::Equal));
    let start = (0..n)
        .min_by(|&a, &b| {
            args[order[a]]
                .abs()
                .partial_cmp(&args[order[b]].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .unwrap_or(0);
    let principal = |z: Complex<f64>| Complex::new(z.norm().ln(), z.arg());
    out[order[start]] = principal(values[order[start]]);
    for dir in [1isize, -1] {
        let mut prev = out[order[start]].im;
        let mut k = start as isize + dir;
        while k >= 0 && (k as usize) < n {
            let idx = order[k as usize];
            let z = values[idx];
            let mut ph = z.arg();
            let two_pi = std::f64::consts::TAU;
            ph += two_pi * ((prev - ph) / two_pi).round();
            out[idx] = Complex::new(z.norm().ln(), ph);
            prev = ph;
            k += dir;
        }
    }
    out
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || y.iter().any(|&v| !(v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Smallest `|exact|` for which the logarithm is trusted.
pub const BRANCH_CUT_TOL: f64 = 1e-12;

/// Exact-versus-limit sweep over `t_grid × arg_grid`, evaluated in parallel
/// and merged by index.
pub fn lan_sweep<T: Real + Serialize>(
    kind: LanKind,
    an: &Analysis<T>,
    u: T,
    arg_grid: &[T],
    t_grid: &[T],
    setup: &LanSetup<T>,
) -> Result<LanSweep<T>> {
    let ts: Vec<f64> = t_grid.iter().map(|&t| to_f64(t)).collect();
    if ts.len() < 3 {
        return Err(Error::invalid("t grid needs at least 3 points"));
    }
    if ts.iter().any(|t| !(t.is_finite() && *t > 0.0)) || ts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("t grid must be positive and strictly ascending"));
    }
    if ts[ts.len() - 1] / ts[0] < 100.0 * (1.0 - 1e-12) {
        return Err(Error::invalid("t grid must span at least two decades"));
    }
    if arg_grid.is_empty() || arg_grid.iter().any(|a| !to_f64(*a).is_finite()) {
        return Err(Error::invalid("argument grid must be non-empty and finite"));
    }

    let tgt = target(kind, an, u, setup)?;
    let limit_exp: Vec<Complex<T>> = arg_grid.iter().map(|&a| (tgt.exponent)(a)).collect();
    let limit: Vec<Complex<T>> = limit_exp.iter().map(|z| ComplexField::exp(*z)).collect();

    let m = arg_grid.len();
    let cells: Vec<Result<Complex<T>>> = (0..t_grid.len() * m)
        .into_par_iter()
        .map(|idx| exact_value(kind, an, u, arg_grid[idx % m], t_grid[idx / m], setup))
        .collect();

    let args64: Vec<f64> = arg_grid.iter().map(|&a| to_f64(a)).collect();
    let mut exact = Vec::with_capacity(t_grid.len());
    let mut deviation = Vec::with_capacity(t_grid.len());
    for (i, &t) in t_grid.iter().enumerate() {
        let row = cells[i * m..(i + 1) * m].iter().cloned().collect::<Result<Vec<_>>>()?;
        let row64: Vec<Complex<f64>> = row.iter().map(|z| Complex::new(to_f64(z.re), to_f64(z.im))).collect();
        for (j, z) in row64.iter().enumerate() {
            if z.norm() < BRANCH_CUT_TOL {
                return Err(Error::BranchCut {
                    t: to_f64(t),
                    arg: args64[j],
                    modulus: z.norm(),
                });
            }
        }
        let logs = tracked_logs(&args64, &row64);
        let dev = logs
            .iter()
            .zip(&limit_exp)
            .map(|(a, b)| (a - Complex::new(to_f64(b.re), to_f64(b.im))).norm())
            .fold(0.0, f64::max);
        deviation.push(lit::<T>(dev));
        exact.push(row);
    }
    let dev64: Vec<f64> = deviation.iter().map(|&d| to_f64(d)).collect();
    let decay_exponent = log_log_slope(&ts, &dev64).map(lit);
    Ok(LanSweep {
        kind,
        u,
        t_grid: t_grid.to_vec(),
        arg_grid: arg_grid.to_vec(),
        exact,
        limit,
        deviation,
        decay_exponent,
    })
}

/// Mean slope and variance read off the exact log characteristic function at
/// the origin by 5-point central differences with step `h`:
/// `log φ(a) ≈ i·u·μ·a − V·a²/2`. Returns `(μ, V)`; `μ` is `NaN` at `u = 0`.
pub fn cf_coefficients<T: Real + Serialize>(
    kind: LanKind,
    an: &Analysis<T>,
    u: T,
    t: T,
    setup: &LanSetup<T>,
    h: T,
) -> Result<(T, T)> {
    if kind == LanKind::Overlap {
        return Err(Error::invalid("cf_coefficients applies to counting and homodyne"));
    }
    let mut logs = [Complex::new(T::zero(), T::zero()); 5];
    for (k, off) in [-2.0, -1.0, 0.0, 1.0, 2.0].iter().enumerate() {
        let z = exact_value(kind, an, u, h * lit(*off), t, setup)?;
        logs[k] = ComplexField::ln(z);
    }
    let twelve_h = h * lit(12.0);
    let d1 = (logs[0] - logs[1] * real(lit(8.0)) + logs[3] * real(lit(8.0)) - logs[4]) / real(twelve_h);
    let d2 = (-logs[0] + logs[1] * real(lit(16.0)) - logs[2] * real(lit(30.0)) + logs[3] * real(lit(16.0))
        - logs[4])
        / real(twelve_h * h);
    let mu = if u == T::zero() { lit(f64::NAN) } else { d1.im / u };
    Ok((mu, -d2.re))
}
