//! Tail bounds for block averages of a randomly permuted row, and Monte Carlo
//! estimates to compare them against.

use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arrays::{row_stats, ArrayRow, RowStats};
use crate::error::{Error, Result};
use crate::matlin::CMatrix;
use crate::rng::{self, tag};
use crate::trotter::BlockScheme;

/// Parameters of a matrix Bernstein tail query for `S_k = X_1 + ... + X_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailQuery {
    pub eps: f64,
    /// Uniform bound `||X_i|| <= L`.
    pub l: f64,
    /// Variance proxy `v_k`.
    pub v: f64,
    pub d: usize,
    pub k: usize,
}

impl TailQuery {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.eps, self.l, self.v].iter().all(|x| x.is_finite() && *x >= 0.0);
        if !finite || self.d == 0 {
            return Err(Error::InvalidInput(format!("invalid tail query {self:?}")));
        }
        Ok(())
    }
}

/// `P(||S_k|| >= eps) <= 2d exp(-(eps^2/2) / (v + L eps/3))`.
pub fn bernstein_tail(q: &TailQuery) -> Result<f64> {
    q.validate()?;
    let cap = 2.0 * q.d as f64;
    if q.eps == 0.0 {
        return Ok(cap);
    }
    let denom = q.v + q.l * q.eps / 3.0;
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((cap * (-(q.eps * q.eps / 2.0) / denom).exp()).clamp(0.0, cap))
}

/// Ordered sample of `k` distinct positions of `pool`, uniform over all
/// ordered k-subsets (the first `k` steps of a Fisher-Yates shuffle).
pub fn sample_without_replacement<T: Clone, R: Rng + ?Sized>(pool: &[T], k: usize, rng: &mut R) -> Result<Vec<T>> {
    if k > pool.len() {
        return Err(Error::InvalidInput(format!(
            "cannot draw {k} items from a pool of {}",
            pool.len()
        )));
    }
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    partial_shuffle(&mut idx, k, rng);
    Ok(idx[..k].iter().map(|&i| pool[i].clone()).collect())
}

/// Puts a uniform ordered k-subset of `idx` into `idx[..k]`.
fn partial_shuffle<R: Rng + ?Sized>(idx: &mut [usize], k: usize, rng: &mut R) {
    let n = idx.len();
    for i in 0..k.min(n.saturating_sub(1)) {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
}

/// `v = (a_n / n) sum_i ||A_i - A_n||^2`.
pub fn variance_proxy(row: &ArrayRow, a_n: usize) -> Result<f64> {
    if a_n > row.n() {
        return Err(Error::InvalidInput(format!("a_n = {a_n} exceeds n = {}", row.n())));
    }
    let mean = row_stats(row).mean;
    let total: f64 = row.elements().iter().map(|m| m.distance(&mean).powi(2)).sum();
    Ok(a_n as f64 / row.n() as f64 * total)
}

/// `b_n 2d exp(-(a_n eps^2 / 12) / (L1 Linf))`, with an extra `e^{2 L1}` in
/// the denominator when `rescaled` (then `eps` carries the `e^{L1}` weight of
/// the block conditions).
pub fn lemma_random_bound(
    a_n: usize,
    b_n: usize,
    eps: f64,
    stats: &RowStats,
    d: usize,
    rescaled: bool,
) -> Result<f64> {
    let l1 = stats.l1;
    if !(eps > 0.0) {
        return Err(Error::Precondition(format!("need 0 < eps, got eps = {eps}")));
    }
    if rescaled {
        if !(eps * (-l1).exp() < 3.0 * l1) {
            return Err(Error::Precondition(format!(
                "need eps e^(-L1) < 3 L1, got eps = {eps}, L1 = {l1}"
            )));
        }
    } else if !(eps < 3.0 * l1) {
        return Err(Error::Precondition(format!("need eps < 3 L1, got eps = {eps}, L1 = {l1}")));
    }
    let mut scale = l1 * stats.linf;
    if rescaled {
        scale *= (2.0 * l1).exp();
    }
    let front = b_n as f64 * 2.0 * d as f64;
    Ok(front * (-(a_n as f64 * eps * eps / 12.0) / scale).exp())
}

/// Comparison rate `(Linf e^{||A||} / sqrt n) sqrt(2 e^2 log(d / delta))`.
pub fn tropp_ward_rate(n: usize, stats: &RowStats, norm_a: f64, d: usize, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidInput(format!("delta must lie in (0, 1), got {delta}")));
    }
    let e2 = std::f64::consts::E.powi(2);
    let root = (2.0 * e2 * (d as f64 / delta).ln()).sqrt();
    Ok(stats.linf * norm_a.exp() / (n as f64).sqrt() * root)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockTail {
    pub freq_mean_cond: f64,
    pub freq_norm_cond: f64,
}

/// Per-trial worst block gaps `(max_j ||mean_j - A_n||, max_j |normmean_j - L1|)`
/// without the `e^{L1}` weight. Trial `t` draws its permutation from the
/// stream `(seed, TAIL, n, t)`.
pub fn block_gap_samples(row: &ArrayRow, scheme: &BlockScheme, trials: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    if scheme.n != row.n() {
        return Err(Error::DimensionMismatch {
            expected: row.n(),
            actual: scheme.n,
        });
    }
    let n = row.n();
    let d = row.d();
    let dd = d * d;
    let stats = row_stats(row);
    let mut centered = Vec::with_capacity(n * dd);
    for m in row.elements() {
        centered.extend(m.as_slice().iter().zip(stats.mean.as_slice()).map(|(x, y)| x - y));
    }
    let norm_dev: Vec<f64> = row.elements().iter().map(|m| m.norm() - stats.l1).collect();
    let inv_a = 1.0 / scheme.a_n as f64;
    let covered = scheme.covered();

    let out = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::stream(seed, &[tag::TAIL, n as u64, t as u64]);
            let mut idx: Vec<usize> = (0..n).collect();
            partial_shuffle(&mut idx, covered, &mut r);
            let mut block = CMatrix::zeros(d);
            let zero = CMatrix::zeros(d);
            let (mut worst_mean, mut worst_norm) = (0.0f64, 0.0f64);
            for chunk in idx[..covered].chunks(scheme.a_n) {
                let mut acc = vec![Complex64::new(0.0, 0.0); dd];
                let mut norm_acc = 0.0;
                for &i in chunk {
                    for (a, x) in acc.iter_mut().zip(&centered[i * dd..(i + 1) * dd]) {
                        *a += x;
                    }
                    norm_acc += norm_dev[i];
                }
                for (k, a) in acc.iter().enumerate() {
                    block[(k / d, k % d)] = a * inv_a;
                }
                worst_mean = worst_mean.max(block.distance(&zero));
                worst_norm = worst_norm.max((norm_acc * inv_a).abs());
            }
            (worst_mean, worst_norm)
        })
        .collect();
    Ok(out)
}

/// Fraction of trials in which some block violates
/// `||mean_j - A_n|| <= eps` (resp. `|normmean_j - L1| <= eps`).
pub fn empirical_block_tail(row: &ArrayRow, scheme: &BlockScheme, eps: f64, trials: usize, seed: u64) -> Result<BlockTail> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be at least 1".into()));
    }
    let samples = block_gap_samples(row, scheme, trials, seed)?;
    Ok(tail_from_samples(&samples, eps))
}

pub fn tail_from_samples(samples: &[(f64, f64)], eps: f64) -> BlockTail {
    let t = samples.len() as f64;
    BlockTail {
        freq_mean_cond: samples.iter().filter(|s| s.0 > eps).count() as f64 / t,
        freq_norm_cond: samples.iter().filter(|s| s.1 > eps).count() as f64 / t,
    }
}

/// 12 geometrically spaced points from 0.05 up to, but excluding, `3 L1`.
pub fn eps_grid(l1: f64) -> Vec<f64> {
    let lo: f64 = 0.05;
    let hi = 3.0 * l1;
    if hi <= lo {
        return Vec::new();
    }
    let ratio = (hi / lo).powf(1.0 / 12.0);
    (0..12).map(|i| lo * ratio.powi(i)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub eps: f64,
    pub empirical_freq: f64,
    pub bernstein_bound: f64,
    pub lemma_bound: f64,
    pub trials: usize,
}

/// Empirical block-mean violation frequency next to the union-bounded
/// Bernstein tail and the lemma bound, one row per `eps`.
pub fn tail_report(row: &ArrayRow, scheme: &BlockScheme, grid: &[f64], trials: usize, seed: u64) -> Result<Vec<TailRow>> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be at least 1".into()));
    }
    let stats = row_stats(row);
    let samples = block_gap_samples(row, scheme, trials, seed)?;
    let v = variance_proxy(row, scheme.a_n)?;
    let l = row.elements().iter().map(|m| m.distance(&stats.mean)).fold(0.0, f64::max);
    let a = scheme.a_n as f64;
    grid.iter()
        .map(|&eps| {
            let q = TailQuery { eps: eps * a, l, v, d: row.d(), k: scheme.a_n };
            Ok(TailRow {
                eps,
                empirical_freq: tail_from_samples(&samples, eps).freq_mean_cond,
                bernstein_bound: scheme.b_n as f64 * bernstein_tail(&q)?,
                lemma_bound: lemma_random_bound(scheme.a_n, scheme.b_n, eps, &stats, row.d(), false)?,
                trials,
            })
        })
        .collect()
}

pub fn write_tail_csv<W: Write>(out: W, rows: &[TailRow]) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["eps", "empirical_freq", "bernstein_bound", "lemma_bound", "trials"])?;
    for r in rows {
        w.write_record([
            r.eps.to_string(),
            r.empirical_freq.to_string(),
            r.bernstein_bound.to_string(),
            r.lemma_bound.to_string(),
            r.trials.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
