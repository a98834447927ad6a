// SPDX-License-Identifier: Apache-2.0

//! Superoperators on `d×d` matrices and the generators built from a model.
//!
//! A [`SuperOp`] is the `d²×d²` matrix of a linear map in the column-stacking
//! vectorization, stored as a direct sum of blocks. The blocks are the
//! connected components of the sparsity graph of the map, so models with
//! conserved structure (Fock-diagonal dynamics, for instance) never
//! materialize the full matrix.

use nalgebra::{Complex, DMatrix, DVector};

use crate::linalg::{self, i_unit, real};
use crate::model::{ModelPoint, ParamModel};
use crate::{lit, to_f64, CMatrix, Error, Real, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Picture {
    Heisenberg,
    Schrodinger,
    Deformed,
    /// Projections, inverses and other derived maps.
    Auxiliary,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Partition {
    blocks: Vec<Vec<usize>>,
    /// `(block, position)` of every vec index.
    loc: Vec<(usize, usize)>,
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.0[hi] = lo;
        }
    }
}

impl Partition {
    fn from_union_find(uf: &mut UnionFind) -> Self {
        let n = uf.0.len();
        let mut root_block = vec![usize::MAX; n];
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        let mut loc = vec![(0, 0); n];
        for k in 0..n {
            let r = uf.find(k);
            if root_block[r] == usize::MAX {
                root_block[r] = blocks.len();
                blocks.push(Vec::new());
            }
            let b = root_block[r];
            loc[k] = (b, blocks[b].len());
            blocks[b].push(k);
        }
        Partition { blocks, loc }
    }

    fn from_groups(n: usize, groups: &[Vec<usize>]) -> Self {
        let mut uf = UnionFind::new(n);
        for g in groups {
            for w in g.windows(2) {
                uf.union(w[0], w[1]);
            }
        }
        Partition::from_union_find(&mut uf)
    }

    fn len(&self) -> usize {
        self.loc.len()
    }

    fn join(&self, other: &Partition) -> Partition {
        if self == other {
            return self.clone();
        }
        let mut groups = self.blocks.clone();
        groups.extend(other.blocks.iter().cloned());
        Partition::from_groups(self.len(), &groups)
    }
}

/// Linear map on `d×d` complex matrices.
#[derive(Clone, Debug)]
pub struct SuperOp<T: Real> {
    dim: usize,
    picture: Picture,
    part: Partition,
    mats: Vec<CMatrix<T>>,
}

impl<T: Real> SuperOp<T> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn picture(&self) -> Picture {
        self.picture
    }

    pub fn with_picture(mut self, picture: Picture) -> Self {
        self.picture = picture;
        self
    }

    /// Sizes of the diagonal blocks.
    pub fn block_sizes(&self) -> Vec<usize> {
        self.part.blocks.iter().map(Vec::len).collect()
    }

    pub fn identity(dim: usize, picture: Picture) -> Self {
        let n = dim * dim;
        let groups: Vec<Vec<usize>> = (0..n).map(|k| vec![k]).collect();
        SuperOp {
            dim,
            picture,
            part: Partition::from_groups(n, &groups),
            mats: vec![linalg::identity(1); n],
        }
    }

    /// Builds a map from explicit blocks. `parts` must cover every vec index
    /// exactly once.
    pub fn from_blocks(dim: usize, picture: Picture, parts: Vec<(Vec<usize>, CMatrix<T>)>) -> Result<Self> {
        let n = dim * dim;
        let mut seen = vec![false; n];
        for (idx, m) in &parts {
            if m.nrows() != idx.len() || m.ncols() != idx.len() {
                return Err(Error::invalid("block matrix does not match its index set"));
            }
            for &k in idx {
                if k >= n || seen[k] {
                    return Err(Error::invalid("block index sets must partition 0..d²"));
                }
                seen[k] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::invalid("block index sets must partition 0..d²"));
        }
        let groups: Vec<Vec<usize>> = parts.iter().map(|(i, _)| i.clone()).collect();
        let part = Partition::from_groups(n, &groups);
        let mut mats: Vec<CMatrix<T>> = part.blocks.iter().map(|b| DMatrix::zeros(b.len(), b.len())).collect();
        for (idx, m) in &parts {
            for (a, &ka) in idx.iter().enumerate() {
                let (blk, pa) = part.loc[ka];
                for (b, &kb) in idx.iter().enumerate() {
                    let (_, pb) = part.loc[kb];
                    mats[blk][(pa, pb)] = m[(a, b)];
                }
            }
        }
        Ok(SuperOp { dim, picture, part, mats })
    }

    /// Wraps a dense `d²×d²` matrix, splitting it along its sparsity pattern.
    pub fn from_dense(dim: usize, picture: Picture, m: &CMatrix<T>) -> Result<Self> {
        let n = dim * dim;
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::invalid(format!("expected a {n}x{n} matrix")));
        }
        let mut uf = UnionFind::new(n);
        let zero = Complex::new(T::zero(), T::zero());
        for col in 0..n {
            for row in 0..n {
                if m[(row, col)] != zero {
                    uf.union(row, col);
                }
            }
        }
        let part = Partition::from_union_find(&mut uf);
        let mats = part
            .blocks
            .iter()
            .map(|b| DMatrix::from_fn(b.len(), b.len(), |r, c| m[(b[r], b[c])]))
            .collect();
        Ok(SuperOp { dim, picture, part, mats })
    }

    pub fn to_dense(&self) -> CMatrix<T> {
        let n = self.dim * self.dim;
        let mut out = DMatrix::zeros(n, n);
        for (b, m) in self.part.blocks.iter().zip(&self.mats) {
            for (r, &kr) in b.iter().enumerate() {
                for (c, &kc) in b.iter().enumerate() {
                    out[(kr, kc)] = m[(r, c)];
                }
            }
        }
        out
    }

    /// `vec(op(X))` for `vec(X) = v`.
    pub fn apply_vec(&self, v: &[Complex<T>]) -> Vec<Complex<T>> {
        let mut out = vec![Complex::new(T::zero(), T::zero()); v.len()];
        for (b, m) in self.part.blocks.iter().zip(&self.mats) {
            let x = DVector::from_iterator(b.len(), b.iter().map(|&k| v[k]));
            let y = m * x;
            for (p, &k) in b.iter().enumerate() {
                out[k] = y[p];
            }
        }
        out
    }

    pub fn apply(&self, x: &CMatrix<T>) -> CMatrix<T> {
        assert_eq!(x.nrows(), self.dim, "operand dimension mismatch");
        let v = self.apply_vec(x.as_slice());
        CMatrix::from_vec(self.dim, self.dim, v)
    }

    fn embed(&self, coarse: &Partition) -> Vec<CMatrix<T>> {
        if *coarse == self.part {
            return self.mats.clone();
        }
        let mut out: Vec<CMatrix<T>> = coarse.blocks.iter().map(|b| DMatrix::zeros(b.len(), b.len())).collect();
        for (b, m) in self.part.blocks.iter().zip(&self.mats) {
            for (r, &kr) in b.iter().enumerate() {
                let (cb, pr) = coarse.loc[kr];
                for (c, &kc) in b.iter().enumerate() {
                    let (_, pc) = coarse.loc[kc];
                    out[cb][(pr, pc)] = m[(r, c)];
                }
            }
        }
        out
    }

    fn zip_with(&self, other: &Self, picture: Picture, f: impl Fn(&CMatrix<T>, &CMatrix<T>) -> CMatrix<T>) -> Self {
        assert_eq!(self.dim, other.dim, "superoperator dimension mismatch");
        let part = self.part.join(&other.part);
        let a = self.embed(&part);
        let b = other.embed(&part);
        let mats = a.iter().zip(&b).map(|(x, y)| f(x, y)).collect();
        SuperOp {
            dim: self.dim,
            picture,
            part,
            mats,
        }
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Self) -> Self {
        self.zip_with(other, Picture::Auxiliary, |a, b| a * b)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, self.picture, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, self.picture, |a, b| a - b)
    }

    pub fn scale(&self, c: Complex<T>) -> Self {
        SuperOp {
            dim: self.dim,
            picture: self.picture,
            part: self.part.clone(),
            mats: self.mats.iter().map(|m| m * c).collect(),
        }
    }

    /// Largest entry modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        let d = self.zip_with(other, Picture::Auxiliary, |a, b| a - b);
        d.mats.iter().fold(T::zero(), |acc, m| acc.max(linalg::max_abs(m)))
    }

    /// Bitwise equality of the represented matrices.
    pub fn same_matrix(&self, other: &Self) -> bool {
        self.dim == other.dim && self.part == other.part && self.mats == other.mats
    }

    /// Induced 1-norm of the full matrix.
    pub fn one_norm(&self) -> T {
        self.mats.iter().fold(T::zero(), |acc, m| acc.max(linalg::one_norm(m)))
    }

    /// All `d²` eigenvalues, block by block, from complex Schur forms.
    pub fn eigenvalues(&self) -> Result<Vec<Complex<T>>> {
        let mut out = Vec::with_capacity(self.dim * self.dim);
        for m in &self.mats {
            if m.nrows() == 1 {
                out.push(m[(0, 0)]);
                continue;
            }
            let schur = nalgebra::linalg::Schur::try_new(m.clone(), T::default_epsilon(), 10_000 * m.nrows())
                .ok_or_else(|| Error::invalid("Schur iteration did not converge"))?;
            let (_, t) = schur.unpack();
            out.extend(t.diagonal().iter().cloned());
        }
        Ok(out)
    }

    /// `e^{τ·self}` as a superoperator.
    pub fn exp(&self, tau: T) -> Result<Self> {
        check_tau(tau)?;
        let mats = self
            .mats
            .iter()
            .map(|m| linalg::expm(&(m * real(tau))))
            .collect::<Result<Vec<_>>>()?;
        Ok(SuperOp {
            dim: self.dim,
            picture: Picture::Auxiliary,
            part: self.part.clone(),
            mats,
        })
    }

    /// The dual map under the pairing `⟨ρ, X⟩ = Tr(ρ X)`: a Schrödinger
    /// generator becomes the Heisenberg one and vice versa.
    pub fn dual(&self, picture: Picture) -> Self {
        let d = self.dim;
        let swap = |k: usize| (k / d) + (k % d) * d;
        let parts = self
            .part
            .blocks
            .iter()
            .zip(&self.mats)
            .map(|(b, m)| (b.iter().map(|&k| swap(k)).collect(), m.transpose()))
            .collect();
        SuperOp::from_blocks(d, picture, parts).expect("transposition permutes a partition")
    }

    /// Indices and direct sum of the blocks selected by `pick`, merged into
    /// one dense matrix. Returns the remaining blocks separately.
    pub(crate) fn split_blocks(
        &self,
        pick: impl Fn(&[usize]) -> bool,
    ) -> ((Vec<usize>, CMatrix<T>), Vec<(Vec<usize>, CMatrix<T>)>) {
        let mut core_idx = Vec::new();
        let mut core_blocks = Vec::new();
        let mut rest = Vec::new();
        for (b, m) in self.part.blocks.iter().zip(&self.mats) {
            if pick(b) {
                core_blocks.push((b.clone(), m));
                core_idx.extend_from_slice(b);
            } else {
                rest.push((b.clone(), m.clone()));
            }
        }
        let n = core_idx.len();
        let mut core = DMatrix::zeros(n, n);
        let mut off = 0;
        for (b, m) in core_blocks {
            core.view_mut((off, off), (b.len(), b.len())).copy_from(m);
            off += b.len();
        }
        ((core_idx, core), rest)
    }
}

fn check_tau<T: Real>(tau: T) -> Result<()> {
    let t = to_f64(tau);
    if !t.is_finite() || t < 0.0 {
        return Err(Error::invalid(format!("semigroup time must be finite and non-negative, got {t}")));
    }
    Ok(())
}

/// `e^{τ·g}(X)`, blockwise Padé scaling and squaring.
///
/// Fails with [`Error::Overflow`] when `τ‖g_b‖₁` exceeds
/// [`linalg::EXPM_NORM_LIMIT`] for some block or the result is not finite.
pub fn semigroup_apply<T: Real>(g: &SuperOp<T>, tau: T, x: &CMatrix<T>) -> Result<CMatrix<T>> {
    check_tau(tau)?;
    if tau == T::zero() {
        return Ok(x.clone());
    }
    assert_eq!(x.nrows(), g.dim, "operand dimension mismatch");
    let v = x.as_slice();
    let mut out = vec![Complex::new(T::zero(), T::zero()); v.len()];
    for (b, m) in g.part.blocks.iter().zip(&g.mats) {
        let xb = DVector::from_iterator(b.len(), b.iter().map(|&k| v[k]));
        if xb.iter().all(|z| z.re == T::zero() && z.im == T::zero()) {
            continue;
        }
        let e = linalg::expm(&(m * real(tau)))?;
        let y = e * xb;
        for (p, &k) in b.iter().enumerate() {
            out[k] = y[p];
        }
    }
    Ok(CMatrix::from_vec(g.dim, g.dim, out))
}

type Entries<T> = Vec<(usize, usize, Complex<T>)>;

fn nonzeros<T: Real>(m: &CMatrix<T>) -> Entries<T> {
    let zero = Complex::new(T::zero(), T::zero());
    let mut out = Vec::new();
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            let v = m[(r, c)];
            if v != zero {
                out.push((r, c, v));
            }
        }
    }
    out
}

fn identity_entries<T: Real>(d: usize) -> Entries<T> {
    (0..d).map(|i| (i, i, Complex::new(T::one(), T::zero()))).collect()
}

/// Accumulates terms `X ↦ c·A·X·B` into a block-structured [`SuperOp`].
///
/// Terms with an exactly zero coefficient are dropped, so adding a deformation
/// with vanishing parameter leaves the result bitwise unchanged.
pub struct SuperOpBuilder<T: Real> {
    dim: usize,
    terms: Vec<(Complex<T>, Entries<T>, Entries<T>)>,
}

impl<T: Real> SuperOpBuilder<T> {
    pub fn new(dim: usize) -> Self {
        SuperOpBuilder { dim, terms: Vec::new() }
    }

    fn push(&mut self, c: Complex<T>, a: Entries<T>, b: Entries<T>) -> &mut Self {
        if c != Complex::new(T::zero(), T::zero()) && !a.is_empty() && !b.is_empty() {
            self.terms.push((c, a, b));
        }
        self
    }

    /// `X ↦ c·A·X·B`.
    pub fn sandwich(&mut self, c: Complex<T>, a: &CMatrix<T>, b: &CMatrix<T>) -> &mut Self {
        self.push(c, nonzeros(a), nonzeros(b))
    }

    /// `X ↦ c·A·X`.
    pub fn left(&mut self, c: Complex<T>, a: &CMatrix<T>) -> &mut Self {
        let id = identity_entries(self.dim);
        self.push(c, nonzeros(a), id)
    }

    /// `X ↦ c·X·B`.
    pub fn right(&mut self, c: Complex<T>, b: &CMatrix<T>) -> &mut Self {
        let id = identity_entries(self.dim);
        self.push(c, id, nonzeros(b))
    }

    /// `X ↦ c·X`.
    pub fn scalar(&mut self, c: Complex<T>) -> &mut Self {
        let id = identity_entries(self.dim);
        self.push(c, id.clone(), id)
    }

    pub fn build(&self, picture: Picture) -> SuperOp<T> {
        let d = self.dim;
        let n = d * d;
        let mut uf = UnionFind::new(n);
        for (_, a, b) in &self.terms {
            for &(k, i, _) in a {
                for &(j, l, _) in b {
                    uf.union(i + j * d, k + l * d);
                }
            }
        }
        let part = Partition::from_union_find(&mut uf);
        let mut mats: Vec<CMatrix<T>> = part.blocks.iter().map(|b| DMatrix::zeros(b.len(), b.len())).collect();
        for (c, a, b) in &self.terms {
            for &(k, i, av) in a {
                let ca = *c * av;
                for &(j, l, bv) in b {
                    let (blk, pr) = part.loc[k + l * d];
                    let (_, pc) = part.loc[i + j * d];
                    mats[blk][(pr, pc)] += ca * bv;
                }
            }
        }
        SuperOp { dim: d, picture, part, mats }
    }
}

fn half<T: Real>() -> Complex<T> {
    real(lit(0.5))
}

fn push_heisenberg<T: Real>(b: &mut SuperOpBuilder<T>, h: &CMatrix<T>, ls: &[CMatrix<T>], scale: T) {
    let s = real(scale);
    let i = i_unit::<T>() * s;
    b.left(i, h).right(-i, h);
    for l in ls {
        let ld = l.adjoint();
        let ll = &ld * l;
        b.sandwich(s, &ld, l);
        b.left(-half::<T>() * s, &ll);
        b.right(-half::<T>() * s, &ll);
    }
}

/// `L(X) = i[H,X] + Σ_j (L_j† X L_j − ½{L_j†L_j, X})`.
pub fn lindblad_heisenberg<T: Real>(point: &ModelPoint<T>) -> SuperOp<T> {
    let mut b = SuperOpBuilder::new(point.dim());
    push_heisenberg(&mut b, &point.h, &point.l, T::one());
    b.build(Picture::Heisenberg)
}

/// `L_*(ρ) = −i[H,ρ] + Σ_j (L_j ρ L_j† − ½{L_j†L_j, ρ})`.
pub fn lindblad_schrodinger<T: Real>(point: &ModelPoint<T>) -> SuperOp<T> {
    let mut b = SuperOpBuilder::new(point.dim());
    let i = i_unit::<T>();
    b.left(-i, &point.h).right(i, &point.h);
    for l in &point.l {
        let ld = l.adjoint();
        let ll = &ld * l;
        b.sandwich(real(T::one()), l, &ld);
        b.left(-half::<T>(), &ll);
        b.right(-half::<T>(), &ll);
    }
    b.build(Picture::Schrodinger)
}

fn check_channel(channels: usize, channel: usize) -> Result<()> {
    if channel >= channels {
        return Err(Error::BadChannel { channel, channels });
    }
    Ok(())
}

/// `L(X) + (e^{is} − 1)·L_m† X L_m` for the monitored channel `m`.
pub fn counting_deformed<T: Real>(point: &ModelPoint<T>, s: T, channel: usize) -> Result<SuperOp<T>> {
    check_channel(point.channels(), channel)?;
    let mut b = SuperOpBuilder::new(point.dim());
    push_heisenberg(&mut b, &point.h, &point.l, T::one());
    let lm = &point.l[channel];
    b.sandwich(Complex::new(s.cos() - T::one(), s.sin()), &lm.adjoint(), lm);
    Ok(b.build(Picture::Deformed))
}

/// `L(X) + ip(e^{−iφ} L_m† X + X e^{iφ} L_m) − (p²/2)·X`.
pub fn homodyne_deformed<T: Real>(point: &ModelPoint<T>, p: T, phi: T, channel: usize) -> Result<SuperOp<T>> {
    check_channel(point.channels(), channel)?;
    let mut b = SuperOpBuilder::new(point.dim());
    push_heisenberg(&mut b, &point.h, &point.l, T::one());
    push_homodyne_tilt(&mut b, &point.l[channel], p, phi);
    b.scalar(real(-p * p * lit(0.5)));
    Ok(b.build(Picture::Deformed))
}

fn push_homodyne_tilt<T: Real>(b: &mut SuperOpBuilder<T>, lm: &CMatrix<T>, p: T, phi: T) {
    let e = Complex::new(phi.cos(), phi.sin());
    let ip = Complex::new(T::zero(), p);
    b.left(ip * e.conj(), &lm.adjoint());
    b.right(ip * e, lm);
}

fn check_time<T: Real>(t: T) -> Result<()> {
    let tf = to_f64(t);
    if !(tf.is_finite() && tf > 0.0) {
        return Err(Error::invalid(format!("time t must be positive and finite, got {tf}")));
    }
    Ok(())
}

/// Finite-time generator of the overlap between output states at
/// `θ = θ₀ + u/√t` and `θ′ = θ₀ + v/√t`:
///
/// `t·[i(H_θ X − X H_θ′) + Σ_j (L_{j,θ}† X L_{j,θ′} − ½(L_{j,θ}†L_{j,θ} X + X L_{j,θ′}†L_{j,θ′})) − i(θ−θ′)·Ã·X]`.
///
/// `a_tilde` is the stationary phase generator at `θ₀`. The overlap is
/// `⟨χ₀| e^{G}(𝟙) |χ₀⟩` at semigroup time one.
pub fn two_sided_generator<T: Real>(
    model: &ParamModel<T>,
    theta0: T,
    a_tilde: T,
    u: T,
    v: T,
    t: T,
) -> Result<SuperOp<T>> {
    check_time(t)?;
    let rt = t.sqrt();
    let th_u = theta0 + u / rt;
    let th_v = theta0 + v / rt;
    let (hu, hv) = (model.hamiltonian_at(th_u), model.hamiltonian_at(th_v));
    let (lu, lv) = (model.jumps_at(th_u), model.jumps_at(th_v));

    let mut b = SuperOpBuilder::new(model.dim());
    let ts = real(t);
    let i = i_unit::<T>() * ts;
    b.left(i, &hu).right(-i, &hv);
    for (a, c) in lu.iter().zip(&lv) {
        let ad = a.adjoint();
        b.sandwich(ts, &ad, c);
        b.left(-half::<T>() * ts, &(&ad * a));
        b.right(-half::<T>() * ts, &(c.adjoint() * c));
    }
    b.scalar(Complex::new(T::zero(), -(th_u - th_v) * a_tilde * t));
    Ok(b.build(Picture::Deformed))
}

/// Finite-time generator for the characteristic function of the centered
/// counts in channel `m` at `θ = θ₀ + u/√t`:
///
/// `t·[L_θ(X) + (e^{is/√t} − 1)·L_m† X L_m − (is/√t)·rate₀·X]`.
#[allow(clippy::too_many_arguments)]
pub fn counting_lan_generator<T: Real>(
    model: &ParamModel<T>,
    theta0: T,
    rate0: T,
    u: T,
    s: T,
    t: T,
    channel: usize,
) -> Result<SuperOp<T>> {
    check_time(t)?;
    model.check_channel(channel)?;
    let rt = t.sqrt();
    let th = theta0 + u / rt;
    let ls = model.jumps_at(th);
    let mut b = SuperOpBuilder::new(model.dim());
    push_heisenberg(&mut b, &model.hamiltonian_at(th), &ls, t);
    let sr = s / rt;
    let lm = &ls[channel];
    b.sandwich(Complex::new(sr.cos() - T::one(), sr.sin()) * real(t), &lm.adjoint(), lm);
    b.scalar(Complex::new(T::zero(), -sr * rate0 * t));
    Ok(b.build(Picture::Deformed))
}

/// Finite-time generator for the characteristic function of the centered
/// integrated homodyne current in channel `m` at `θ = θ₀ + u/√t`:
///
/// `t·[L_θ(X) + (ip/√t)(e^{−iφ} L_m† X + X e^{iφ} L_m) − (p²/2t)·X − (ip/√t)·drift₀·X]`.
#[allow(clippy::too_many_arguments)]
pub fn homodyne_lan_generator<T: Real>(
    model: &ParamModel<T>,
    theta0: T,
    drift0: T,
    u: T,
    p: T,
    phi: T,
    t: T,
    channel: usize,
) -> Result<SuperOp<T>> {
    check_time(t)?;
    model.check_channel(channel)?;
    let rt = t.sqrt();
    let th = theta0 + u / rt;
    let ls = model.jumps_at(th);
    let mut b = SuperOpBuilder::new(model.dim());
    push_heisenberg(&mut b, &model.hamiltonian_at(th), &ls, t);
    push_homodyne_tilt(&mut b, &ls[channel], p * rt, phi);
    b.scalar(Complex::new(-p * p * lit(0.5), -p * drift0 * rt));
    Ok(b.build(Picture::Deformed))
}
