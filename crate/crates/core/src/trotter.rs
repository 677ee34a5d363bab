//! Permuted exponential-product paths and the block-average machinery.
//!
//! For a row `{A_i}` and a permutation `sigma`, the path is
//! `P_k = exp(A_{sigma(0)}/n) ... exp(A_{sigma(k-1)}/n)` for `k = 0..n`,
//! leftmost factor first. It is compared against `R_k = exp(k T / n)` for a
//! target generator `T` (usually the row mean).

use std::io::Write;
use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::arrays::{check_len, row_stats, ArrayRow, RowStats};
use crate::error::{Error, Result};
use crate::matlin::CMatrix;

/// A bijection of `{0, ..., n-1}`; position `i` takes element `map[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Permutation {
    map: Vec<usize>,
}

impl Permutation {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; map.len()];
        for &j in &map {
            if j >= map.len() || std::mem::replace(&mut seen[j], true) {
                return Err(Error::InvalidInput(format!("{map:?} is not a permutation")));
            }
        }
        Ok(Permutation { map })
    }

    pub fn identity(n: usize) -> Self {
        Permutation { map: (0..n).collect() }
    }

    pub fn reversed(n: usize) -> Self {
        Permutation {
            map: (0..n).rev().collect(),
        }
    }

    /// Uniform over all n! permutations (Fisher-Yates over `rng`).
    pub fn uniform<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut map: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            map.swap(i, j);
        }
        Permutation { map }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn map(&self) -> &[usize] {
        &self.map
    }
}

pub fn uniform_permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Permutation {
    Permutation::uniform(n, rng)
}

/// Partition of `{0, ..., a*b - 1}` into `b = floor(n / a)` consecutive
/// blocks of size `a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockScheme {
    pub n: usize,
    pub a_n: usize,
    pub b_n: usize,
}

impl BlockScheme {
    pub fn new(n: usize, a_n: usize) -> Result<Self> {
        if a_n == 0 || a_n > n {
            return Err(Error::InvalidInput(format!("block size {a_n} must lie in 1..={n}")));
        }
        Ok(BlockScheme { n, a_n, b_n: n / a_n })
    }

    pub fn block(&self, j: usize) -> Range<usize> {
        j * self.a_n..(j + 1) * self.a_n
    }

    pub fn blocks(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        (0..self.b_n).map(|j| self.block(j))
    }

    /// Number of indices covered by blocks, `a_n * b_n`.
    pub fn covered(&self) -> usize {
        self.a_n * self.b_n
    }
}

/// `exp(A_i / n)` for every element of a row. Rows with an alphabet only
/// exponentiate each letter once, so equal elements get bit-identical factors.
#[derive(Debug, Clone)]
pub struct ExpFactors {
    factors: Vec<CMatrix>,
}

impl ExpFactors {
    pub fn new(row: &ArrayRow) -> Self {
        let inv_n = 1.0 / row.n() as f64;
        let factors = match row.alphabet() {
            Some(alpha) => {
                let letters: Vec<CMatrix> =
                    alpha.letters.iter().map(|l| l.scale(inv_n).exp()).collect();
                alpha.letter_of.iter().map(|&j| letters[j].clone()).collect()
            }
            None => row.elements().iter().map(|m| m.scale(inv_n).exp()).collect(),
        };
        ExpFactors { factors }
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.factors[0].dim()
    }

    pub fn get(&self, i: usize) -> &CMatrix {
        &self.factors[i]
    }

    /// Visits `(k, P_k)` for `k = 0..=n`.
    pub fn walk(&self, sigma: &Permutation, mut visit: impl FnMut(usize, &CMatrix)) -> Result<()> {
        if sigma.len() != self.factors.len() {
            return Err(Error::DimensionMismatch {
                expected: self.factors.len(),
                actual: sigma.len(),
            });
        }
        let mut p = CMatrix::identity(self.dim());
        let mut next = CMatrix::zeros(self.dim());
        visit(0, &p);
        for (k, &j) in sigma.map().iter().enumerate() {
            p.mul_into(&self.factors[j], &mut next);
            std::mem::swap(&mut p, &mut next);
            visit(k + 1, &p);
        }
        Ok(())
    }
}

/// `P_0 = I`, `P_k = P_{k-1} exp(A_{sigma(k)} / n)`.
pub fn partial_products(row: &ArrayRow, sigma: &Permutation) -> Result<Vec<CMatrix>> {
    check_len(row, sigma)?;
    let mut out = Vec::with_capacity(row.n() + 1);
    ExpFactors::new(row).walk(sigma, |_, p| out.push(p.clone()))?;
    Ok(out)
}

/// `R_k = exp(k A / n)` for `k = 0..=n`, by repeated multiplication with
/// `exp(A / n)`, restarting from a fresh exponential every `ceil(sqrt n)`
/// steps.
pub fn reference_path(a: &CMatrix, n: usize) -> Vec<CMatrix> {
    assert!(n >= 1, "reference path needs n >= 1");
    let step = a.scale(1.0 / n as f64).exp();
    let restart = n.isqrt() + usize::from(n.isqrt() * n.isqrt() < n);
    let mut out = Vec::with_capacity(n + 1);
    out.push(CMatrix::identity(a.dim()));
    for k in 1..=n {
        let r = if k % restart == 0 {
            a.scale(k as f64 / n as f64).exp()
        } else {
            &out[k - 1] * &step
        };
        out.push(r);
    }
    out
}

/// Grid deviations `||P_k - R_k||` and a certified bound on the continuous
/// supremum over `t in [0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathReport {
    pub deviations: Vec<f64>,
    /// `||T|| e^{||T||} / n`, the Lipschitz drift of `exp(tT)` over one cell.
    pub slack: f64,
    /// `max_k deviations[k] + slack`.
    pub sup_dev: f64,
}

impl PathReport {
    pub fn final_deviation(&self) -> f64 {
        *self.deviations.last().expect("path has n + 1 points")
    }

    pub fn max_grid_deviation(&self) -> f64 {
        self.deviations.iter().copied().fold(0.0, f64::max)
    }
}

/// Reusable pieces of a path comparison for one (row, target) pair.
#[derive(Debug, Clone)]
pub struct PathEvaluator {
    factors: ExpFactors,
    reference: Vec<CMatrix>,
    slack: f64,
}

impl PathEvaluator {
    pub fn new(row: &ArrayRow, target: &CMatrix) -> Result<Self> {
        if target.dim() != row.d() {
            return Err(Error::DimensionMismatch {
                expected: row.d(),
                actual: target.dim(),
            });
        }
        let tn = target.norm();
        Ok(PathEvaluator {
            factors: ExpFactors::new(row),
            reference: reference_path(target, row.n()),
            slack: tn * tn.exp() / row.n() as f64,
        })
    }

    pub fn slack(&self) -> f64 {
        self.slack
    }

    pub fn evaluate(&self, sigma: &Permutation) -> Result<PathReport> {
        let mut deviations = Vec::with_capacity(self.reference.len());
        self.factors
            .walk(sigma, |k, p| deviations.push(p.distance(&self.reference[k])))?;
        let max = deviations.iter().copied().fold(0.0, f64::max);
        Ok(PathReport {
            deviations,
            slack: self.slack,
            sup_dev: max + self.slack,
        })
    }
}

pub fn path_deviation(row: &ArrayRow, sigma: &Permutation, target: &CMatrix) -> Result<PathReport> {
    check_len(row, sigma)?;
    PathEvaluator::new(row, target)?.evaluate(sigma)
}

/// Grid indices kept when a path is written out: `round(m n / 100)` for
/// `m = 0..=100`, deduplicated.
pub fn downsample_indices(n: usize) -> Vec<usize> {
    let mut ks: Vec<usize> = (0..=100)
        .map(|m| ((m * n) as f64 / 100.0).round() as usize)
        .collect();
    ks.dedup();
    ks
}

/// Writes path reports as CSV. Each report contributes one `path` row per
/// kept grid index and one `summary` row:
///
/// ```text
/// record,trial,k,deviation,sup_dev,slack
/// path,0,0,0,,
/// ...
/// summary,0,,,0.0123,0.0001
/// ```
pub fn write_path_csv<W: Write>(out: W, reports: &[(usize, &PathReport)], downsample: bool) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["record", "trial", "k", "deviation", "sup_dev", "slack"])?;
    for &(trial, report) in reports {
        let n = report.deviations.len() - 1;
        let ks: Vec<usize> = if downsample { downsample_indices(n) } else { (0..=n).collect() };
        for k in ks {
            w.write_record([
                "path".to_string(),
                trial.to_string(),
                k.to_string(),
                report.deviations[k].to_string(),
                String::new(),
                String::new(),
            ])?;
        }
        w.write_record([
            "summary".to_string(),
            trial.to_string(),
            String::new(),
            String::new(),
            report.sup_dev.to_string(),
            report.slack.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockCheck {
    pub ok: bool,
    /// `max_j ||block mean - A_n|| e^{L1}`.
    pub worst_mean_gap: f64,
    /// `max_j |block mean norm - L1| e^{L1}`.
    pub worst_norm_gap: f64,
}

/// Checks both block-average conditions on the permuted row
/// `A_{sigma(0)}, ..., A_{sigma(n-1)}`. Positions beyond `a_n b_n` are not
/// part of any block.
pub fn check_block_conditions(
    row: &ArrayRow,
    sigma: &Permutation,
    scheme: &BlockScheme,
    eps: f64,
) -> Result<BlockCheck> {
    check_len(row, sigma)?;
    if scheme.n != row.n() {
        return Err(Error::DimensionMismatch {
            expected: row.n(),
            actual: scheme.n,
        });
    }
    let stats = row_stats(row);
    Ok(block_gaps(row, sigma, scheme, &stats, eps))
}

pub(crate) fn block_gaps(
    row: &ArrayRow,
    sigma: &Permutation,
    scheme: &BlockScheme,
    stats: &RowStats,
    eps: f64,
) -> BlockCheck {
    let weight = stats.l1.exp();
    let inv_a = 1.0 / scheme.a_n as f64;
    let mut worst_mean: f64 = 0.0;
    let mut worst_norm: f64 = 0.0;
    for block in scheme.blocks() {
        let mut sum = CMatrix::zeros(row.d());
        let mut norm_sum = 0.0;
        for i in block {
            let m = &row.elements()[sigma.map()[i]];
            sum.add_scaled_assign(inv_a, m);
            norm_sum += m.norm();
        }
        worst_mean = worst_mean.max(sum.distance(&stats.mean) * weight);
        worst_norm = worst_norm.max((norm_sum * inv_a - stats.l1).abs() * weight);
    }
    BlockCheck {
        ok: worst_mean <= eps && worst_norm <= eps,
        worst_mean_gap: worst_mean,
        worst_norm_gap: worst_norm,
    }
}

/// Deterministic bound on `sup_t ||P_[tn] - exp(t A_n)||` when both block
/// conditions hold at `eps`:
///
/// `3/(2b) (e^{eps/b} (L1+eps)^2 + (L1 + eps + ||A_n||) + ||A_n||^2) e^{L1+eps} + eps e^eps`.
pub fn prop_uniform_bound(l1: f64, norm_an: f64, eps: f64, b_n: usize) -> Result<f64> {
    if !(l1 >= 0.0 && norm_an >= 0.0 && eps >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "bound inputs must be non-negative: L1 = {l1}, ||A_n|| = {norm_an}, eps = {eps}"
        )));
    }
    if b_n == 0 {
        return Err(Error::InvalidInput("b_n must be at least 1".into()));
    }
    if norm_an > l1 * (1.0 + 1e-12) + 1e-15 {
        return Err(Error::Precondition(format!("||A_n|| = {norm_an} exceeds L1 = {l1}")));
    }
    let b = b_n as f64;
    let le = l1 + eps;
    let bracket = (eps / b).exp() * le * le + (le + norm_an) + norm_an * norm_an;
    Ok(1.5 / b * bracket * le.exp() + eps * eps.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockMode {
    /// `a_n = ceil(sqrt(n max(1, L1 Linf e^{2 L1})))`.
    Probability,
    /// As `Probability` with an extra `log n` under the root.
    AlmostSure,
    /// `a_n = ceil(sqrt n)`.
    SqrtDefault,
}

fn ceil_sqrt(x: f64) -> usize {
    let mut r = x.sqrt().ceil() as usize;
    while r > 1 && ((r - 1) as f64) * ((r - 1) as f64) >= x {
        r -= 1;
    }
    while (r as f64) * (r as f64) < x {
        r += 1;
    }
    r
}

/// Block size for a row, clamped to `1..=n/2`.
pub fn choose_blocks(n: usize, stats: &RowStats, mode: BlockMode) -> Result<BlockScheme> {
    if n < 4 {
        return Err(Error::Precondition(format!("choose_blocks needs n >= 4, got {n}")));
    }
    let growth = (stats.l1 * stats.linf * (2.0 * stats.l1).exp()).max(1.0);
    let nf = n as f64;
    let a = match mode {
        BlockMode::SqrtDefault => ceil_sqrt(nf),
        BlockMode::Probability => ceil_sqrt(nf * growth),
        BlockMode::AlmostSure => ceil_sqrt(nf * nf.ln() * growth),
    };
    BlockScheme::new(n, a.clamp(1, n / 2))
}
