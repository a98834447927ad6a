// SPDX-License-Identifier: Apache-2.0

//! Dense complex matrix helpers and the matrix exponential.

use nalgebra::{Complex, ComplexField, DMatrix};

use crate::{lit, to_f64, CMatrix, Error, Real, Result};

#[inline]
pub fn c<T: Real>(re: f64, im: f64) -> Complex<T> {
    Complex::new(lit(re), lit(im))
}

#[inline]
pub fn real<T: Real>(x: T) -> Complex<T> {
    Complex::new(x, T::zero())
}

#[inline]
pub fn i_unit<T: Real>() -> Complex<T> {
    Complex::new(T::zero(), T::one())
}

pub fn identity<T: Real>(d: usize) -> CMatrix<T> {
    DMatrix::identity(d, d)
}

pub fn zeros<T: Real>(d: usize) -> CMatrix<T> {
    DMatrix::zeros(d, d)
}

/// Builds a matrix from row-major `(re, im)` pairs.
pub fn from_rows<T: Real>(d: usize, entries: &[(f64, f64)]) -> CMatrix<T> {
    assert_eq!(entries.len(), d * d, "expected {} entries", d * d);
    DMatrix::from_fn(d, d, |r, col| {
        let (re, im) = entries[r * d + col];
        c(re, im)
    })
}

pub fn dagger<T: Real>(m: &CMatrix<T>) -> CMatrix<T> {
    m.adjoint()
}

pub fn commutator<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> CMatrix<T> {
    a * b - b * a
}

pub fn anticommutator<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> CMatrix<T> {
    a * b + b * a
}

/// Hermitian part `(X + X†)/2`.
pub fn re_part<T: Real>(m: &CMatrix<T>) -> CMatrix<T> {
    (m + m.adjoint()) * real(lit::<T>(0.5))
}

/// Anti-hermitian part divided by `i`: `(X − X†)/(2i)`, itself hermitian.
pub fn im_part<T: Real>(m: &CMatrix<T>) -> CMatrix<T> {
    (m - m.adjoint()) * Complex::new(T::zero(), lit(-0.5))
}

pub fn trace<T: Real>(m: &CMatrix<T>) -> Complex<T> {
    m.trace()
}

/// `Tr(ρ X)` without forming the product.
pub fn expect<T: Real>(rho: &CMatrix<T>, x: &CMatrix<T>) -> Complex<T> {
    let d = rho.nrows();
    let mut acc = Complex::new(T::zero(), T::zero());
    for i in 0..d {
        for j in 0..d {
            acc += rho[(i, j)] * x[(j, i)];
        }
    }
    acc
}

/// Induced 1-norm (max column sum).
pub fn one_norm<T: Real>(m: &CMatrix<T>) -> T {
    let mut best = T::zero();
    for col in m.column_iter() {
        let s = col.iter().fold(T::zero(), |acc, z| acc + z.modulus());
        if s > best {
            best = s;
        }
    }
    best
}

pub fn max_abs<T: Real>(m: &CMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, z| {
        let n = z.modulus();
        if n > acc {
            n
        } else {
            acc
        }
    })
}

pub fn max_abs_diff<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> T {
    max_abs(&(a - b))
}

/// `max |X − X†|`.
pub fn hermiticity_defect<T: Real>(m: &CMatrix<T>) -> T {
    max_abs(&(m - m.adjoint()))
}

pub fn hermitize<T: Real>(m: &CMatrix<T>) -> CMatrix<T> {
    re_part(m)
}

/// Smallest eigenvalue of the hermitian part of `m`.
pub fn min_hermitian_eigenvalue<T: Real>(m: &CMatrix<T>) -> T {
    let h = hermitize(m);
    let eig = h.symmetric_eigenvalues();
    eig.iter().fold(T::max_value().unwrap_or_else(|| lit(f64::MAX)), |acc, &x| {
        if x < acc {
            x
        } else {
            acc
        }
    })
}

/// Trace norm `Σ|λ_i|` of a hermitian matrix.
pub fn trace_norm_hermitian<T: Real>(m: &CMatrix<T>) -> T {
    hermitize(m)
        .symmetric_eigenvalues()
        .iter()
        .fold(T::zero(), |acc, x| acc + x.abs())
}

/// Largest `τ·‖g‖₁` accepted by [`expm`]; beyond this the squaring phase
/// alone loses every significant digit.
pub const EXPM_NORM_LIMIT: f64 = 1e12;

// Padé(13,13) numerator coefficients b_0..b_13.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring around a Padé(13,13) kernel.
pub fn expm<T: Real>(a: &CMatrix<T>) -> Result<CMatrix<T>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    if n == 0 {
        return Ok(a.clone());
    }
    let norm = one_norm(a);
    let norm64 = to_f64(norm);
    if !norm64.is_finite() || norm64 > EXPM_NORM_LIMIT {
        return Err(Error::Overflow { norm: norm64 });
    }
    if n == 1 {
        return Ok(a.map(|z| ComplexField::exp(z)));
    }

    let squarings = if norm64 > THETA13 {
        (norm64 / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let scale: T = lit(0.5f64.powi(squarings));
    let a = a * real(scale);

    let b = |k: usize| real::<T>(lit(PADE13[k]));
    let eye = identity::<T>(n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let u_inner = &a6 * b(13) + &a4 * b(11) + &a2 * b(9);
    let u_outer = &a6 * &u_inner + &a6 * b(7) + &a4 * b(5) + &a2 * b(3) + &eye * b(1);
    let u = &a * u_outer;
    let v_inner = &a6 * b(12) + &a4 * b(10) + &a2 * b(8);
    let v = &a6 * &v_inner + &a6 * b(6) + &a4 * b(4) + &a2 * b(2) + &eye * b(0);

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .ok_or(Error::Overflow { norm: norm64 })?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    if r.iter().any(|z| !to_f64(z.re).is_finite() || !to_f64(z.im).is_finite()) {
        return Err(Error::Overflow { norm: norm64 });
    }
    Ok(r)
}
