//! Words over `a` letters in which every letter occurs `b` times, and their
//! distance to the standard word `(0, 1, ..., a-1)` repeated `b` times.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::trotter::Permutation;

/// Letters are `0..a`, each occurring exactly `b` times.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Word {
    a: usize,
    b: usize,
    letters: Vec<usize>,
}

impl Word {
    pub fn new(a: usize, b: usize, letters: Vec<usize>) -> Result<Self> {
        if a == 0 || b == 0 {
            return Err(Error::InvalidInput(format!("need a, b >= 1, got a = {a}, b = {b}")));
        }
        if letters.len() != a * b {
            return Err(Error::InvalidInput(format!("word length {} != a b = {}", letters.len(), a * b)));
        }
        let mut counts = vec![0usize; a];
        for &l in &letters {
            if l >= a {
                return Err(Error::InvalidInput(format!("letter {l} outside 0..{a}")));
            }
            counts[l] += 1;
        }
        if let Some(i) = counts.iter().position(|&c| c != b) {
            return Err(Error::InvalidInput(format!("letter {i} occurs {} times, expected {b}", counts[i])));
        }
        Ok(Word { a, b, letters })
    }

    pub fn standard(a: usize, b: usize) -> Self {
        Word {
            a,
            b,
            letters: (0..a * b).map(|p| p % a).collect(),
        }
    }

    /// `0^b 1^b ... (a-1)^b`.
    pub fn sorted(a: usize, b: usize) -> Self {
        Word {
            a,
            b,
            letters: (0..a * b).map(|p| p / b).collect(),
        }
    }

    /// Uniform over all words (a shuffle of the standard multiset).
    pub fn random<R: Rng + ?Sized>(a: usize, b: usize, rng: &mut R) -> Self {
        let mut letters = Word::standard(a, b).letters;
        for i in (1..letters.len()).rev() {
            letters.swap(i, rng.random_range(0..=i));
        }
        Word { a, b, letters }
    }

    pub fn a(&self) -> usize {
        self.a
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn letters(&self) -> &[usize] {
        &self.letters
    }
}

/// Reads `A_{sigma(0)}, ..., A_{sigma(n-1)}` for the layout
/// `A_{i + k a} = B_i` and keeps the letters of indices below `a b`.
pub fn restrict_word(sigma: &Permutation, n: usize, a: usize, b: usize) -> Result<Word> {
    if sigma.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: sigma.len() });
    }
    if a == 0 || b == 0 || a * b > n {
        return Err(Error::InvalidInput(format!("a b = {} must lie in 1..={n}", a * b)));
    }
    let letters = sigma.map().iter().filter(|&&j| j < a * b).map(|&j| j % a).collect();
    Ok(Word { a, b, letters })
}

/// `counts[i][j]` is the number of occurrences of letter `i` among the
/// first `j` positions, for `j = 0..=len`.
pub fn prefix_counts(w: &Word) -> Vec<Vec<usize>> {
    let mut counts = vec![vec![0usize; w.len() + 1]; w.a];
    for (j, &l) in w.letters.iter().enumerate() {
        for (i, row) in counts.iter_mut().enumerate() {
            row[j + 1] = row[j] + usize::from(i == l);
        }
    }
    counts
}

/// `max_j (max_i w_i[j] - min_i w_i[j])`.
pub fn max_discrepancy(w: &Word) -> usize {
    let mut running = vec![0usize; w.a];
    let mut worst = 0;
    for &l in &w.letters {
        running[l] += 1;
        let hi = running.iter().max().unwrap();
        let lo = running.iter().min().unwrap();
        worst = worst.max(hi - lo);
    }
    worst
}

/// `tau(w) = (max discrepancy + 1) / b`.
pub fn tau(w: &Word) -> f64 {
    (max_discrepancy(w) + 1) as f64 / w.b as f64
}

/// Target position of every position of `w` in the standard word: the
/// `k`-th occurrence of letter `i` goes to `k a + i`.
fn standard_targets(w: &Word) -> Vec<usize> {
    let mut seen = vec![0usize; w.a];
    w.letters
        .iter()
        .map(|&l| {
            let t = seen[l] * w.a + l;
            seen[l] += 1;
            t
        })
        .collect()
}

fn count_inversions(v: &mut [usize], buf: &mut Vec<usize>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut inv = count_inversions(&mut v[..mid], buf) + count_inversions(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[i] <= v[j] {
            buf.push(v[i]);
            i += 1;
        } else {
            buf.push(v[j]);
            inv += (mid - i) as u64;
            j += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    inv
}

/// Adjacent transpositions needed to sort `w` into the standard word when
/// equal letters keep their relative order.
pub fn transposition_distance(w: &Word) -> u64 {
    let mut t = standard_targets(w);
    let mut buf = Vec::with_capacity(t.len());
    count_inversions(&mut t, &mut buf)
}

/// The swaps `(p, p + 1)` of an insertion sort from `w` to the standard
/// word, as the list of left positions `p`. Its length is
/// `transposition_distance(w)`.
pub fn transposition_sequence(w: &Word) -> Vec<usize> {
    let mut t = standard_targets(w);
    let mut swaps = Vec::new();
    for i in 1..t.len() {
        let mut p = i;
        while p > 0 && t[p - 1] > t[p] {
            t.swap(p - 1, p);
            swaps.push(p - 1);
            p -= 1;
        }
    }
    swaps
}

pub fn apply_transpositions(w: &Word, swaps: &[usize]) -> Word {
    let mut letters = w.letters.clone();
    for &p in swaps {
        letters.swap(p, p + 1);
    }
    Word { a: w.a, b: w.b, letters }
}

/// `distance <= n^2 tau(w)` with `n = a b`, checked in integers.
pub fn within_distance_bound(w: &Word) -> bool {
    let n = w.len() as u128;
    let lhs = transposition_distance(w) as u128 * w.b as u128;
    lhs <= n * n * (max_discrepancy(w) as u128 + 1)
}

/// Smallest admissible binomial index `ceil(b - p sqrt b + 1)`.
fn tail_index(b: usize, p: f64) -> Result<usize> {
    let bf = b as f64;
    let shift = p * bf.sqrt();
    if !(p > 0.0) || shift > bf + 1.0 {
        return Err(Error::Precondition(format!(
            "need 0 < p and p sqrt(b) <= b + 1, got p = {p}, b = {b}"
        )));
    }
    Ok(((bf - shift + 1.0 - 1e-9).ceil()).max(0.0) as usize)
}

/// `C(2b, m) / C(2b, b)` as a product of ratios.
fn central_binomial_ratio(b: usize, m: usize) -> f64 {
    let m = if m > b { 2 * b - m } else { m };
    (1..=b - m).map(|k| (m + k) as f64 / (b + k) as f64).product()
}

/// Bound on `P(tau(w) > p / sqrt b)`: `2 a^2 C(2b, m) / C(2b, b)` with
/// `m = ceil(b - p sqrt b + 1)` when `exact`, else `2 a^2 e^{-p^2}`.
pub fn tau_tail_bound(a: usize, b: usize, p: f64, exact: bool) -> Result<f64> {
    let m = tail_index(b, p)?;
    let front = 2.0 * (a * a) as f64;
    let v = if exact {
        front * central_binomial_ratio(b, m)
    } else {
        front * (-p * p).exp()
    };
    Ok(v.max(0.0))
}

/// Frequency of `tau(w) > p / sqrt b` over uniform random words; trial `t`
/// uses the stream `(seed, TAIL, a, b, t)`.
pub fn tau_tail_empirical(a: usize, b: usize, p: f64, trials: usize, seed: u64) -> Result<f64> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be at least 1".into()));
    }
    let threshold = p / (b as f64).sqrt();
    let hits: usize = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::stream(seed, &[tag::TAIL, a as u64, b as u64, t as u64]);
            usize::from(tau(&Word::random(a, b, &mut r)) > threshold)
        })
        .sum();
    Ok(hits as f64 / trials as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WordRecord {
    pub trial: usize,
    pub tau: f64,
    pub distance: u64,
    /// `n^2 tau(w)`.
    pub bound: f64,
}

/// Statistics of `trials` random words; trial `t` uses the stream
/// `(seed, WORD, a, b, t)`.
pub fn word_records(a: usize, b: usize, trials: usize, seed: u64) -> Vec<WordRecord> {
    let n = (a * b) as f64;
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::stream(seed, &[tag::WORD, a as u64, b as u64, t as u64]);
            let w = Word::random(a, b, &mut r);
            let tau = tau(&w);
            WordRecord {
                trial: t,
                tau,
                distance: transposition_distance(&w),
                bound: n * n * tau,
            }
        })
        .collect()
}

pub fn write_word_csv<W: Write>(out: W, records: &[WordRecord]) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["trial", "tau", "distance", "bound"])?;
    for r in records {
        w.write_record([r.trial.to_string(), r.tau.to_string(), r.distance.to_string(), r.bound.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
