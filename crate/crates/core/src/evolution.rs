//! Evolution families `U(s, t)` of a matrix-valued function on `[0, 1]`,
//! approximated by products of exponentials of sampled generators.

use serde::{Deserialize, Serialize};

use crate::arrays::{gen_riemann, row_stats, ArrayRow, MatrixFn, SamplingMode};
use crate::error::{Error, Result};
use crate::matlin::CMatrix;
use crate::rng::{self, tag};
use crate::trotter::ExpFactors;

/// Built-in generator families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathFunction {
    /// `A(x) = a`.
    Constant { a: CMatrix },
    /// `A(x) = x diag(entries)`.
    LinearDiagonal { entries: Vec<f64> },
    /// `A(x) = b` for `x <= 1/2`, `c` afterwards.
    Step { b: CMatrix, c: CMatrix },
    /// `A(x) = scale (cos(2 pi x) X + sin(2 pi x) Z)` with Pauli `X`, `Z`.
    Rotation { scale: f64 },
}

impl PathFunction {
    pub fn validate(&self) -> Result<()> {
        match self {
            PathFunction::Constant { a } if !a.is_finite() => Err(Error::InvalidInput("constant generator is not finite".into())),
            PathFunction::LinearDiagonal { entries } if entries.is_empty() || entries.iter().any(|x| !x.is_finite()) => {
                Err(Error::InvalidInput("linear_diagonal needs finite entries".into()))
            }
            PathFunction::Step { b, c } if b.dim() != c.dim() => Err(Error::DimensionMismatch {
                expected: b.dim(),
                actual: c.dim(),
            }),
            PathFunction::Step { b, c } if !(b.is_finite() && c.is_finite()) => {
                Err(Error::InvalidInput("step generators are not finite".into()))
            }
            PathFunction::Rotation { scale } if !scale.is_finite() => Err(Error::InvalidInput("rotation scale is not finite".into())),
            _ => Ok(()),
        }
    }

    /// Closed form of the ordered (time-ordered) limit `U(s, t)` where one is
    /// available.
    pub fn ordered_limit(&self, s: f64, t: f64) -> Option<CMatrix> {
        match self {
            PathFunction::Constant { a } => Some(a.scale(t - s).exp()),
            PathFunction::LinearDiagonal { entries } => {
                let w = (t * t - s * s) / 2.0;
                Some(CMatrix::diag_real(&entries.iter().map(|e| e * w).collect::<Vec<_>>()).exp())
            }
            PathFunction::Step { b, c } => {
                let left = (t.min(0.5) - s).max(0.0);
                let right = (t - s.max(0.5)).max(0.0);
                Some(&b.scale(left).exp() * &c.scale(right).exp())
            }
            PathFunction::Rotation { .. } => None,
        }
    }
}

impl MatrixFn for PathFunction {
    fn dim(&self) -> usize {
        match self {
            PathFunction::Constant { a } => a.dim(),
            PathFunction::LinearDiagonal { entries } => entries.len(),
            PathFunction::Step { b, .. } => b.dim(),
            PathFunction::Rotation { .. } => 2,
        }
    }

    fn eval(&self, x: f64) -> CMatrix {
        match self {
            PathFunction::Constant { a } => a.clone(),
            PathFunction::LinearDiagonal { entries } => {
                CMatrix::diag_real(&entries.iter().map(|e| e * x).collect::<Vec<_>>())
            }
            PathFunction::Step { b, c } => {
                if x <= 0.5 {
                    b.clone()
                } else {
                    c.clone()
                }
            }
            PathFunction::Rotation { scale } => {
                let (sin, cos) = (2.0 * std::f64::consts::PI * x).sin_cos();
                CMatrix::from_real_rows(&[&[scale * sin, scale * cos], &[scale * cos, -scale * sin]])
            }
        }
    }

    fn sup_norm(&self) -> Option<f64> {
        Some(match self {
            PathFunction::Constant { a } => a.norm(),
            PathFunction::LinearDiagonal { entries } => entries.iter().fold(0.0, |m, e| m.max(e.abs())),
            PathFunction::Step { b, c } => b.norm().max(c.norm()),
            PathFunction::Rotation { scale } => scale.abs(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagatorSpec {
    pub func: PathFunction,
    pub s: f64,
    pub t: f64,
    pub n: usize,
    pub mode: SamplingMode,
    pub seed: u64,
}

impl PropagatorSpec {
    pub fn validate(&self) -> Result<()> {
        self.func.validate()?;
        if !(0.0 <= self.s && self.s <= self.t && self.t <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "need 0 <= s <= t <= 1, got s = {}, t = {}",
                self.s, self.t
            )));
        }
        if self.n == 0 {
            return Err(Error::InvalidInput("n must be at least 1".into()));
        }
        Ok(())
    }

    /// The sampled row; permuted and iid modes draw from the stream
    /// `(seed, EVOLUTION, n)`.
    pub fn row(&self) -> Result<ArrayRow> {
        self.validate()?;
        let mut r = rng::stream(self.seed, &[tag::EVOLUTION, self.n as u64]);
        gen_riemann(&self.func, self.n, self.mode, &mut r)
    }
}

/// `(1/n) sum_{i=1}^n f(i/n)`, on the same points as the ordered row.
pub fn riemann_integral(func: &dyn MatrixFn, n: usize) -> Result<CMatrix> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be at least 1".into()));
    }
    let mut sum = CMatrix::zeros(func.dim());
    for i in 1..=n {
        sum.add_scaled_assign(1.0, &crate::arrays::eval_checked(func, i as f64 / n as f64)?);
    }
    Ok(sum.scale(1.0 / n as f64))
}

/// The integral used as the limit generator for an `n`-point propagator,
/// evaluated on a `4n` grid.
pub fn reference_integral(func: &dyn MatrixFn, n: usize) -> Result<CMatrix> {
    riemann_integral(func, 4 * n)
}

/// `[x n]`, robust to `x n` landing a rounding error below an integer.
pub fn grid_index(x: f64, n: usize) -> usize {
    ((x * n as f64 + 1e-9).floor() as usize).min(n)
}

/// `prod_{i=[sn]+1}^{[tn]} exp(A_i / n)`, leftmost factor first.
pub fn propagate_row(row: &ArrayRow, s: f64, t: f64) -> Result<CMatrix> {
    propagate_factors(&ExpFactors::new(row), row.n(), s, t)
}

fn propagate_factors(factors: &ExpFactors, n: usize, s: f64, t: f64) -> Result<CMatrix> {
    if !(0.0 <= s && s <= t && t <= 1.0) {
        return Err(Error::InvalidInput(format!("need 0 <= s <= t <= 1, got s = {s}, t = {t}")));
    }
    let (lo, hi) = (grid_index(s, n), grid_index(t, n));
    let d = factors.dim();
    let mut p = CMatrix::identity(d);
    let mut next = CMatrix::zeros(d);
    for i in lo..hi {
        p.mul_into(factors.get(i), &mut next);
        std::mem::swap(&mut p, &mut next);
    }
    Ok(p)
}

pub fn propagate(spec: &PropagatorSpec) -> Result<CMatrix> {
    propagate_row(&spec.row()?, spec.s, spec.t)
}

/// `||U(s, r) U(r, t) - U(s, t)||` on one shared ordered row.
pub fn cocycle_check(spec: &PropagatorSpec, r: f64) -> Result<f64> {
    if spec.mode != SamplingMode::Ordered {
        return Err(Error::Precondition("cocycle_check needs ordered mode".into()));
    }
    if !(spec.s <= r && r <= spec.t) {
        return Err(Error::InvalidInput(format!("r = {r} outside [{}, {}]", spec.s, spec.t)));
    }
    let row = spec.row()?;
    let factors = ExpFactors::new(&row);
    let left = propagate_factors(&factors, spec.n, spec.s, r)?;
    let right = propagate_factors(&factors, spec.n, r, spec.t)?;
    let whole = propagate_factors(&factors, spec.n, spec.s, spec.t)?;
    Ok((&left * &right).distance(&whole))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolutionRecord {
    pub n: usize,
    pub trial: usize,
    /// `||U_n(s, t) - exp((t - s) int A)||`.
    pub deviation: f64,
    /// `||U_n(s, t) - ordered limit||` when the limit has a closed form.
    pub ordered_deviation: Option<f64>,
    pub l1: f64,
    pub linf: f64,
}

/// Propagates `spec` and compares it to both candidate limits.
pub fn evolution_record(spec: &PropagatorSpec, trial: usize) -> Result<EvolutionRecord> {
    let row = spec.row()?;
    let u = propagate_row(&row, spec.s, spec.t)?;
    let target = reference_integral(&spec.func, spec.n)?.scale(spec.t - spec.s).exp();
    let stats = row_stats(&row);
    Ok(EvolutionRecord {
        n: spec.n,
        trial,
        deviation: u.distance(&target),
        ordered_deviation: spec.func.ordered_limit(spec.s, spec.t).map(|l| u.distance(&l)),
        l1: stats.l1,
        linf: stats.linf,
    })
}
