//! Dense complex matrix kernel.
//!
//! Matrices here are small (d rarely above 16), so everything is a plain
//! row-major `Vec<Complex64>` with naive loops. The operator norm is the
//! largest singular value; the exponential is scaling-and-squaring over a
//! truncated Taylor series with an a priori truncation bound.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tolerance for [`CMatrix::exp`].
pub const EXP_TOL: f64 = 1e-16;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// A dense complex d×d matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CMatrix[{}x{}](", self.dim, self.dim)?;
        for i in 0..self.dim {
            if i > 0 {
                write!(f, "; ")?;
            }
            for j in 0..self.dim {
                let z = self[(i, j)];
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{}{:+}i", z.re, z.im)?;
            }
        }
        write!(f, ")")
    }
}

impl CMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "matrix dimension must be positive");
        CMatrix {
            dim,
            data: vec![ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = ONE;
        }
        m
    }

    /// Builds a matrix from row-major entries, rejecting non-square input and
    /// non-finite entries.
    pub fn from_row_major(dim: usize, data: Vec<Complex64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("matrix dimension must be positive".into()));
        }
        if data.len() != dim * dim {
            return Err(Error::InvalidInput(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                data.len()
            )));
        }
        let m = CMatrix { dim, data };
        if !m.is_finite() {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        Ok(m)
    }

    /// Builds a real matrix from rows. Panics on ragged or empty input; meant
    /// for literals.
    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let dim = rows.len();
        assert!(dim >= 1 && rows.iter().all(|r| r.len() == dim), "rows must form a square matrix");
        let data = rows
            .iter()
            .flat_map(|r| r.iter().map(|&x| Complex64::new(x, 0.0)))
            .collect();
        CMatrix { dim, data }
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m.data[i * dim + j] = f(i, j);
            }
        }
        m
    }

    pub fn diag(entries: &[Complex64]) -> Self {
        let mut m = Self::zeros(entries.len());
        for (i, &z) in entries.iter().enumerate() {
            m.data[i * entries.len() + i] = z;
        }
        m
    }

    pub fn diag_real(entries: &[f64]) -> Self {
        let z: Vec<Complex64> = entries.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Self::diag(&z)
    }

    /// Matrix unit E_{ij} (0-based).
    pub fn unit(dim: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(dim);
        m.data[i * dim + j] = ONE;
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        (0..self.dim).all(|i| {
            (0..self.dim).all(|j| (self[(i, j)] - self[(j, i)].conj()).norm() <= tol)
        })
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, c: f64) -> Self {
        CMatrix {
            dim: self.dim,
            data: self.data.iter().map(|z| z * c).collect(),
        }
    }

    pub fn scale_complex(&self, c: Complex64) -> Self {
        CMatrix {
            dim: self.dim,
            data: self.data.iter().map(|z| z * c).collect(),
        }
    }

    /// `self += c * other`, in place.
    pub fn add_scaled_assign(&mut self, c: f64, other: &CMatrix) {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * c;
        }
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest singular value. Returns NaN for non-finite input; use
    /// [`op_norm`] for the checked version.
    pub fn norm(&self) -> f64 {
        if !self.is_finite() {
            return f64::NAN;
        }
        match self.dim {
            1 => self.data[0].norm(),
            2 => norm_2x2(&self.data),
            d => DMatrix::from_row_slice(d, d, &self.data)
                .singular_values()
                .iter()
                .copied()
                .fold(0.0, f64::max),
        }
    }

    /// Operator norm of `self - other` without allocating for d <= 2.
    pub fn distance(&self, other: &CMatrix) -> f64 {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        match self.dim {
            1 => (self.data[0] - other.data[0]).norm(),
            2 => {
                let mut diff = [ZERO; 4];
                for (k, z) in diff.iter_mut().enumerate() {
                    *z = self.data[k] - other.data[k];
                }
                norm_2x2(&diff)
            }
            _ => (self - other).norm(),
        }
    }

    /// Matrix exponential at the default tolerance.
    pub fn exp(&self) -> CMatrix {
        exp_unchecked(self, EXP_TOL)
    }

    /// `self * other` written into `out`, which must not alias either input.
    pub fn mul_into(&self, other: &CMatrix, out: &mut CMatrix) {
        assert!(self.dim == other.dim && self.dim == out.dim, "dimension mismatch");
        let d = self.dim;
        for i in 0..d {
            for j in 0..d {
                let mut acc = ZERO;
                for k in 0..d {
                    acc += self.data[i * d + k] * other.data[k * d + j];
                }
                out.data[i * d + j] = acc;
            }
        }
    }
}

impl std::ops::Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.dim + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        CMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        CMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim);
        self.mul_into(rhs, &mut out);
        out
    }
}

impl Neg for &CMatrix {
    type Output = CMatrix;
    fn neg(self) -> CMatrix {
        self.scale(-1.0)
    }
}

/// Serialized as `{"d": .., "entries": [[re, im], ...]}` in row-major order.
#[derive(Serialize, Deserialize)]
struct CMatrixRepr {
    d: usize,
    entries: Vec<[f64; 2]>,
}

impl Serialize for CMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        CMatrixRepr {
            d: self.dim,
            entries: self.data.iter().map(|z| [z.re, z.im]).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = CMatrixRepr::deserialize(d)?;
        let data = repr.entries.iter().map(|&[re, im]| Complex64::new(re, im)).collect();
        CMatrix::from_row_major(repr.d, data).map_err(serde::de::Error::custom)
    }
}

fn norm_2x2(m: &[Complex64]) -> f64 {
    // Largest eigenvalue of the Hermitian M*M = [[a, b], [b*, c]].
    let a = m[0].norm_sqr() + m[2].norm_sqr();
    let c = m[1].norm_sqr() + m[3].norm_sqr();
    let b = m[0].conj() * m[1] + m[2].conj() * m[3];
    let lambda = 0.5 * (a + c) + (0.5 * (a - c)).hypot(b.norm());
    lambda.max(0.0).sqrt()
}

fn check_finite(m: &CMatrix) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput("matrix has non-finite entries".into()))
    }
}

/// Operator norm (largest singular value).
pub fn op_norm(m: &CMatrix) -> Result<f64> {
    check_finite(m)?;
    Ok(m.norm())
}

/// Matrix exponential by scaling and squaring.
///
/// The matrix is scaled by 2^-s until its Frobenius norm (an upper bound on
/// the operator norm) is at most 1/2, the Taylor series is truncated at the
/// first order K with remainder bound `2 y^{K+1}/(K+1)! <= tol / 2^s`, and the
/// result is squared back s times.
pub fn mat_exp(m: &CMatrix, tol: f64) -> Result<CMatrix> {
    check_finite(m)?;
    if !(tol > 0.0 && tol <= 1e-6) {
        return Err(Error::InvalidInput(format!("exp tolerance {tol} outside (0, 1e-6]")));
    }
    Ok(exp_unchecked(m, tol))
}

fn exp_unchecked(m: &CMatrix, tol: f64) -> CMatrix {
    let d = m.dim;
    let x = m.frobenius_norm();
    if x == 0.0 {
        return CMatrix::identity(d);
    }
    let mut s = 0i32;
    while x / 2f64.powi(s) > 0.5 {
        s += 1;
    }
    let y = x / 2f64.powi(s);
    let target = tol / 2f64.powi(s);

    // Smallest K with 2 y^{K+1} / (K+1)! <= target.
    let mut order = 0usize;
    let mut rem = 2.0 * y;
    while rem > target && order < 40 {
        order += 1;
        rem *= y / (order as f64 + 1.0);
    }

    let scaled = m.scale(2f64.powi(-s));
    // Horner: P <- I + X P / k, k = K..1.
    let mut p = CMatrix::identity(d);
    let mut tmp = CMatrix::zeros(d);
    for k in (1..=order).rev() {
        scaled.mul_into(&p, &mut tmp);
        let inv = 1.0 / k as f64;
        for (pi, ti) in p.data.iter_mut().zip(&tmp.data) {
            *pi = ti * inv;
        }
        for i in 0..d {
            p.data[i * d + i] += ONE;
        }
    }
    for _ in 0..s {
        p.mul_into(&p.clone(), &mut tmp);
        std::mem::swap(&mut p, &mut tmp);
    }
    p
}

/// The Hermitian dilation `[[0, M], [M*, 0]]` of dimension 2d.
pub fn hermitian_dilation(m: &CMatrix) -> Result<CMatrix> {
    check_finite(m)?;
    let d = m.dim;
    Ok(CMatrix::from_fn(2 * d, |i, j| match (i < d, j < d) {
        (true, false) => m[(i, j - d)],
        (false, true) => m[(j, i - d)].conj(),
        _ => ZERO,
    }))
}

/// `AB - BA`.
pub fn commutator(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch {
            expected: a.dim,
            actual: b.dim,
        });
    }
    Ok(&(a * b) - &(b * a))
}

/// Matrix with i.i.d. standard complex Gaussian entries.
pub fn random_gaussian<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(dim, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

/// Random Hermitian matrix of operator norm exactly 1 (Gaussian entries,
/// Hermitized, normalized).
pub fn random_hermitian_direction<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    loop {
        let g = random_gaussian(dim, rng);
        let h = (&g + &g.adjoint()).scale(0.5);
        let n = h.norm();
        if n > 1e-12 {
            return h.scale(1.0 / n);
        }
    }
}
