//! Rows of triangular arrays and their generators.
//!
//! A row is the finite family `{A_{i,n} : 1 <= i <= n}`. Rows with
//! repeated-letter structure also carry their alphabet `{B_j}` and the
//! assignment `i -> j(i)`. Indices are 0-based throughout.

use num_rational::Ratio;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matlin::{random_hermitian_direction, CMatrix};
use crate::trotter::Permutation;

/// Distinct letters of a row and the letter index of every element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alphabet {
    pub letters: Vec<CMatrix>,
    pub letter_of: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayRow {
    d: usize,
    elements: Vec<CMatrix>,
    alphabet: Option<Alphabet>,
}

impl ArrayRow {
    pub fn new(elements: Vec<CMatrix>) -> Result<Self> {
        let first = elements.first().ok_or(Error::EmptyRow)?;
        let d = first.dim();
        for m in &elements {
            if m.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: m.dim(),
                });
            }
            if !m.is_finite() {
                return Err(Error::InvalidInput("row element has non-finite entries".into()));
            }
        }
        Ok(ArrayRow {
            d,
            elements,
            alphabet: None,
        })
    }

    /// Row whose i-th element is `letters[letter_of[i]]`.
    pub fn from_letters(letters: Vec<CMatrix>, letter_of: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = letter_of.iter().find(|&&j| j >= letters.len()) {
            return Err(Error::InvalidInput(format!(
                "letter index {bad} out of range for alphabet of size {}",
                letters.len()
            )));
        }
        let elements = letter_of.iter().map(|&j| letters[j].clone()).collect();
        let mut row = Self::new(elements)?;
        if letters.iter().any(|l| l.dim() != row.d) {
            return Err(Error::InvalidInput("alphabet letters differ in dimension".into()));
        }
        row.alphabet = Some(Alphabet { letters, letter_of });
        Ok(row)
    }

    pub fn n(&self) -> usize {
        self.elements.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn elements(&self) -> &[CMatrix] {
        &self.elements
    }

    pub fn alphabet(&self) -> Option<&Alphabet> {
        self.alphabet.as_ref()
    }

    /// Rescales every element of norm above 1 down to norm 1.
    pub fn unit_normalized(&self) -> ArrayRow {
        let clip = |m: &CMatrix| {
            let nm = m.norm();
            if nm > 1.0 {
                m.scale(1.0 / nm)
            } else {
                m.clone()
            }
        };
        ArrayRow {
            d: self.d,
            elements: self.elements.iter().map(clip).collect(),
            alphabet: self.alphabet.as_ref().map(|a| Alphabet {
                letters: a.letters.iter().map(clip).collect(),
                letter_of: a.letter_of.clone(),
            }),
        }
    }

    /// Elements reordered as `A_{sigma(0)}, ..., A_{sigma(n-1)}`.
    pub fn permuted(&self, sigma: &Permutation) -> Result<ArrayRow> {
        check_len(self, sigma)?;
        Ok(ArrayRow {
            d: self.d,
            elements: sigma.map().iter().map(|&j| self.elements[j].clone()).collect(),
            alphabet: self.alphabet.as_ref().map(|a| Alphabet {
                letters: a.letters.clone(),
                letter_of: sigma.map().iter().map(|&j| a.letter_of[j]).collect(),
            }),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&RowRepr::from(self)).expect("row serialization is infallible")
    }

    pub fn from_json(s: &str) -> Result<ArrayRow> {
        let repr: RowRepr =
            serde_json::from_str(s).map_err(|e| Error::InvalidInput(format!("row JSON: {e}")))?;
        repr.try_into()
    }
}

pub(crate) fn check_len(row: &ArrayRow, sigma: &Permutation) -> Result<()> {
    if sigma.len() != row.n() {
        return Err(Error::DimensionMismatch {
            expected: row.n(),
            actual: sigma.len(),
        });
    }
    Ok(())
}

/// On-disk row layout: `{n, d, elements: [[[re, im], ...], ...]}`, each
/// element flattened row-major.
#[derive(Serialize, Deserialize)]
struct RowRepr {
    n: usize,
    d: usize,
    elements: Vec<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    letter_of: Option<Vec<usize>>,
}

impl From<&ArrayRow> for RowRepr {
    fn from(row: &ArrayRow) -> Self {
        RowRepr {
            n: row.n(),
            d: row.d,
            elements: row
                .elements
                .iter()
                .map(|m| m.as_slice().iter().map(|z| [z.re, z.im]).collect())
                .collect(),
            letter_of: row.alphabet.as_ref().map(|a| a.letter_of.clone()),
        }
    }
}

impl TryFrom<RowRepr> for ArrayRow {
    type Error = Error;
    fn try_from(repr: RowRepr) -> Result<ArrayRow> {
        if repr.elements.len() != repr.n {
            return Err(Error::InvalidInput(format!(
                "row declares n = {} but has {} elements",
                repr.n,
                repr.elements.len()
            )));
        }
        let elements = repr
            .elements
            .into_iter()
            .map(|e| {
                let data = e.into_iter().map(|[re, im]| num_complex::Complex64::new(re, im)).collect();
                CMatrix::from_row_major(repr.d, data)
            })
            .collect::<Result<Vec<_>>>()?;
        match repr.letter_of {
            None => ArrayRow::new(elements),
            Some(letter_of) => {
                if letter_of.len() != elements.len() {
                    return Err(Error::InvalidInput("letter_of length differs from n".into()));
                }
                // Rebuild the alphabet from first occurrences.
                let size = letter_of.iter().max().map_or(0, |m| m + 1);
                let mut letters: Vec<Option<CMatrix>> = vec![None; size];
                for (m, &j) in elements.iter().zip(&letter_of) {
                    match &letters[j] {
                        None => letters[j] = Some(m.clone()),
                        Some(l) if l != m => {
                            return Err(Error::InvalidInput(format!(
                                "elements assigned to letter {j} differ"
                            )))
                        }
                        Some(_) => {}
                    }
                }
                let letters = letters
                    .into_iter()
                    .map(|l| l.ok_or_else(|| Error::InvalidInput("unused letter index".into())))
                    .collect::<Result<Vec<_>>>()?;
                ArrayRow::from_letters(letters, letter_of)
            }
        }
    }
}

/// Row mean `A_n` and the norm statistics `L1 = mean ||A_i||`,
/// `Linf = max ||A_i||`.
#[derive(Debug, Clone, PartialEq)]
pub struct RowStats {
    pub mean: CMatrix,
    pub l1: f64,
    pub linf: f64,
}

pub fn row_stats(row: &ArrayRow) -> RowStats {
    let n = row.n() as f64;
    let mut mean = CMatrix::zeros(row.d);
    let mut sum_norm = 0.0;
    let mut linf: f64 = 0.0;
    for m in &row.elements {
        mean.add_scaled_assign(1.0, m);
        let nm = m.norm();
        sum_norm += nm;
        linf = linf.max(nm);
    }
    RowStats {
        mean: mean.scale(1.0 / n),
        l1: sum_norm / n,
        linf,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TwoLetterOrder {
    #[default]
    FirstHalfB,
    Interleaved,
}

/// `n/2` copies each of `b` and `c`.
pub fn gen_two_letter(n: usize, b: &CMatrix, c: &CMatrix, order: TwoLetterOrder) -> Result<ArrayRow> {
    if n == 0 || n % 2 != 0 {
        return Err(Error::InvalidInput(format!("two-letter rows need even n > 0, got {n}")));
    }
    if b.dim() != c.dim() {
        return Err(Error::DimensionMismatch {
            expected: b.dim(),
            actual: c.dim(),
        });
    }
    let letter_of = match order {
        TwoLetterOrder::FirstHalfB => (0..n).map(|i| usize::from(i >= n / 2)).collect(),
        TwoLetterOrder::Interleaved => (0..n).map(|i| i % 2).collect(),
    };
    ArrayRow::from_letters(vec![b.clone(), c.clone()], letter_of)
}

/// Fill for the `n - a*b` positions left over after the periodic layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailFill {
    /// Zero matrices (the additive identity).
    #[serde(alias = "identity_fill")]
    #[default]
    Zero,
    /// Continue the cycle from the first letter.
    RepeatFirst,
}

/// Periodic layout `A_{i + k a} = letters[i]` for `k < b = floor(n / a)`,
/// where `a = letters.len()`.
pub fn gen_repeated(letters: &[CMatrix], n: usize, tail: TailFill) -> Result<ArrayRow> {
    let a = letters.len();
    if a == 0 {
        return Err(Error::InvalidInput("no letters".into()));
    }
    if a > n {
        return Err(Error::InvalidInput(format!("{a} letters exceed row length {n}")));
    }
    let b = n / a;
    let mut alphabet = letters.to_vec();
    let mut letter_of: Vec<usize> = (0..a * b).map(|i| i % a).collect();
    if n > a * b {
        match tail {
            TailFill::RepeatFirst => letter_of.extend(0..n - a * b),
            TailFill::Zero => {
                alphabet.push(CMatrix::zeros(letters[0].dim()));
                letter_of.extend(std::iter::repeat_n(a, n - a * b));
            }
        }
    }
    ArrayRow::from_letters(alphabet, letter_of)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Spike count for convergence in probability.
    ProbRegime,
    /// Spike count for almost sure convergence.
    AsRegime,
    /// `Linf = n / (log n (loglog n)^{3+2 delta})`.
    LargeLinf,
    /// Every element of norm `(log n - (5 + delta) loglog n) / 3`.
    BoundedLog,
    /// `Linf = n^{1-alpha} (log n)^{1-beta} / (3t)`.
    Intermediate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeSpec {
    pub regime: Regime,
    pub delta: f64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default = "one")]
    pub t: f64,
    /// Spike norm for `ProbRegime` / `AsRegime`; defaults to `ln n`.
    #[serde(default)]
    pub linf: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl RegimeSpec {
    pub fn new(regime: Regime, delta: f64) -> Self {
        RegimeSpec {
            regime,
            delta,
            alpha: 0.0,
            beta: 0.0,
            t: 1.0,
            linf: None,
        }
    }

    pub fn intermediate(delta: f64, alpha: f64, beta: f64, t: f64) -> Self {
        RegimeSpec {
            alpha,
            beta,
            t,
            ..Self::new(Regime::Intermediate, delta)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) {
            return Err(Error::InvalidInput(format!("delta must be positive, got {}", self.delta)));
        }
        if self.regime == Regime::Intermediate {
            if !(self.t > 0.0 && self.t <= 1.0) {
                return Err(Error::InvalidInput(format!("t must lie in (0, 1], got {}", self.t)));
            }
            let alpha_ok =
                (self.alpha > 0.0 && self.alpha < 1.0) || (self.alpha == 1.0 && self.beta <= 0.0);
            if !alpha_ok {
                return Err(Error::InvalidInput(format!(
                    "need 0 < alpha < 1, or alpha = 1 with beta <= 0; got alpha = {}, beta = {}",
                    self.alpha, self.beta
                )));
            }
        }
        if let Some(l) = self.linf {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::InvalidInput(format!("linf must be positive, got {l}")));
            }
        }
        Ok(())
    }
}

/// Spike count (before rounding) and spike norm for a regime at row length `n`.
pub fn regime_targets(n: usize, spec: &RegimeSpec) -> Result<(f64, f64)> {
    spec.validate()?;
    let nf = n as f64;
    let ln = nf.ln();
    let lln = ln.ln();
    let delta = spec.delta;
    let (k, linf, what) = match spec.regime {
        Regime::ProbRegime | Regime::AsRegime => {
            let l = spec.linf.unwrap_or(ln);
            let x = nf / l;
            if !(x > 1.0 && x.ln() > 1.0) {
                return Err(Error::InfeasibleRegime(format!(
                    "n / Linf = {x} too small for log log (n / Linf)"
                )));
            }
            let lx = x.ln();
            let bracket = if spec.regime == Regime::ProbRegime {
                lx - (4.0 + 2.0 * delta) * lx.ln()
            } else {
                lx - lln - (3.0 + delta) * lx.ln()
            };
            (nf / (3.0 * l) * bracket, l, "k_n")
        }
        Regime::LargeLinf => {
            let factor = ln * lln.powf(3.0 + 2.0 * delta);
            (factor / 3.0, nf / factor, "k_n")
        }
        Regime::BoundedLog => {
            let l = (ln - (5.0 + delta) * lln) / 3.0;
            if !(l > 0.0) {
                return Err(Error::InfeasibleRegime(format!(
                    "Linf = (log n - (5 + delta) log log n) / 3 = {l} is not positive"
                )));
            }
            (nf, l, "k_n")
        }
        Regime::Intermediate => {
            let l = nf.powf(1.0 - spec.alpha) * ln.powf(1.0 - spec.beta) / (3.0 * spec.t);
            let k = spec.alpha * spec.t * nf.powf(spec.alpha) * ln.powf(spec.beta);
            (k, l, "k_n")
        }
    };
    if !(linf > 0.0 && linf.is_finite()) {
        return Err(Error::InfeasibleRegime(format!("Linf = {linf} is not a positive norm")));
    }
    if !k.is_finite() || k.round() < 1.0 {
        return Err(Error::InfeasibleRegime(format!("{what} = {k} rounds below 1")));
    }
    if k.round() > nf {
        return Err(Error::InfeasibleRegime(format!("{what} = {k} exceeds n = {n}")));
    }
    Ok((k, linf))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Remainder {
    /// Random Hermitian elements of norm 1.
    #[default]
    RandomUnit,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpikeDirection {
    /// A fresh random Hermitian unit direction per spike.
    #[default]
    Random,
    /// `diag(1, -1, 1, ...)` for every spike.
    Fixed,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SpikeOptions {
    #[serde(default)]
    pub remainder: Remainder,
    #[serde(default)]
    pub direction: SpikeDirection,
}

#[derive(Debug, Clone)]
pub struct SpikedRow {
    pub row: ArrayRow,
    /// Number of spikes, the rounded formula value.
    pub k_n: usize,
    /// Unrounded formula value.
    pub k_formula: f64,
    /// Norm of every spike.
    pub linf: f64,
}

/// `k_n` spikes of norm `Linf_n` in the first positions, the remaining
/// `n - k_n` elements of norm at most 1.
pub fn gen_spiked<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    spec: &RegimeSpec,
    opts: SpikeOptions,
    rng: &mut R,
) -> Result<SpikedRow> {
    let (k_formula, linf) = regime_targets(n, spec)?;
    let k_n = k_formula.round() as usize;
    let fixed = CMatrix::diag_real(&(0..d).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect::<Vec<_>>());
    let mut elements = Vec::with_capacity(n);
    for _ in 0..k_n {
        let dir = match opts.direction {
            SpikeDirection::Random => random_hermitian_direction(d, rng),
            SpikeDirection::Fixed => fixed.clone(),
        };
        elements.push(dir.scale(linf));
    }
    for _ in k_n..n {
        elements.push(match opts.remainder {
            Remainder::RandomUnit => random_hermitian_direction(d, rng),
            Remainder::Zero => CMatrix::zeros(d),
        });
    }
    Ok(SpikedRow {
        row: ArrayRow::new(elements)?,
        k_n,
        k_formula,
        linf,
    })
}

/// Frequency quantization of a lettered row into equal multiplicities.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizationPlan {
    pub c_n: usize,
    pub alpha_n: Ratio<u64>,
    /// `alpha_n n / c_n`, an integer by precondition.
    pub threshold: usize,
    /// `beta_j`, the multiplicity of each letter.
    pub multiplicities: Vec<usize>,
    /// `U_n`, letters with `beta_j >= threshold`, ascending.
    pub retained: Vec<usize>,
    /// `floor(beta_j / threshold)` for retained letters, 0 otherwise.
    pub new_multiplicities: Vec<usize>,
    pub a_n_out: usize,
    /// `sum_{j in U_n} beta_j`.
    pub retained_mass: usize,
    /// `||(alpha/c) sum_U m_j B_j - (1/n) sum_j beta_j B_j||`.
    pub discrepancy: f64,
    /// `2 alpha_n max_j ||B_j||`.
    pub discrepancy_bound: f64,
    n: usize,
}

impl QuantizationPlan {
    /// `sum_U beta_j >= (1 - alpha) n`, exact integer arithmetic.
    pub fn mass_certified(&self) -> bool {
        let (num, den) = (*self.alpha_n.numer() as u128, *self.alpha_n.denom() as u128);
        self.retained_mass as u128 * den >= (den - num) * self.n as u128
    }

    /// `(1 - 2 alpha)(c / alpha) <= a_n_out <= c / alpha`, exact.
    pub fn size_certified(&self) -> bool {
        let (num, den) = (*self.alpha_n.numer() as i128, *self.alpha_n.denom() as i128);
        let a = self.a_n_out as i128;
        let c = self.c_n as i128;
        a * num <= c * den && a * num >= (den - 2 * num) * c
    }

    pub fn discrepancy_certified(&self) -> bool {
        self.discrepancy <= self.discrepancy_bound + 1e-12
    }

    pub fn certified(&self) -> bool {
        self.mass_certified() && self.size_certified() && self.discrepancy_certified()
    }

    /// Retained letters, each repeated `new_multiplicities[j]` times: an
    /// alphabet of size `a_n_out` with equal weights.
    pub fn reduced_letters(&self, alphabet: &Alphabet) -> Vec<CMatrix> {
        self.retained
            .iter()
            .flat_map(|&j| std::iter::repeat_n(alphabet.letters[j].clone(), self.new_multiplicities[j]))
            .collect()
    }
}

pub fn frequency_quantize(row: &ArrayRow, c_n: usize, alpha_n: Ratio<u64>) -> Result<QuantizationPlan> {
    let alphabet = row
        .alphabet()
        .ok_or_else(|| Error::InvalidInput("frequency quantization needs a lettered row".into()))?;
    let n = row.n();
    if c_n == 0 || alphabet.letters.len() > c_n {
        return Err(Error::Precondition(format!(
            "alphabet of size {} exceeds c_n = {c_n}",
            alphabet.letters.len()
        )));
    }
    let (num, den) = (*alpha_n.numer(), *alpha_n.denom());
    if num == 0 || num >= den {
        return Err(Error::Precondition(format!("alpha_n = {alpha_n} not in (0, 1)")));
    }
    let top = num as u128 * n as u128;
    let bottom = den as u128 * c_n as u128;
    if top % bottom != 0 || top == 0 {
        return Err(Error::Precondition(format!(
            "alpha_n n / c_n = {alpha_n} * {n} / {c_n} is not a positive integer"
        )));
    }
    let threshold = (top / bottom) as usize;

    let mut multiplicities = vec![0usize; alphabet.letters.len()];
    for &j in &alphabet.letter_of {
        multiplicities[j] += 1;
    }
    let retained: Vec<usize> = (0..multiplicities.len())
        .filter(|&j| multiplicities[j] >= threshold)
        .collect();
    let mut new_multiplicities = vec![0usize; multiplicities.len()];
    for &j in &retained {
        new_multiplicities[j] = multiplicities[j] / threshold;
    }
    let a_n_out = new_multiplicities.iter().sum();
    let retained_mass = retained.iter().map(|&j| multiplicities[j]).sum();

    let alpha = num as f64 / den as f64;
    let d = row.d();
    let mut quantized = CMatrix::zeros(d);
    let mut mean = CMatrix::zeros(d);
    for (j, letter) in alphabet.letters.iter().enumerate() {
        quantized.add_scaled_assign(alpha / c_n as f64 * new_multiplicities[j] as f64, letter);
        mean.add_scaled_assign(multiplicities[j] as f64 / n as f64, letter);
    }
    let max_letter = alphabet.letters.iter().map(CMatrix::norm).fold(0.0, f64::max);

    Ok(QuantizationPlan {
        c_n,
        alpha_n,
        threshold,
        multiplicities,
        retained,
        new_multiplicities,
        a_n_out,
        retained_mass,
        discrepancy: (&quantized - &mean).norm(),
        discrepancy_bound: 2.0 * alpha * max_letter,
        n,
    })
}

/// A matrix-valued function on `[0, 1]`.
pub trait MatrixFn: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: f64) -> CMatrix;
    /// `sup_x ||f(x)||` when known in closed form.
    fn sup_norm(&self) -> Option<f64> {
        None
    }
}

/// Wraps a closure as a [`MatrixFn`].
pub struct FnMatrix<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(f64) -> CMatrix + Sync> MatrixFn for FnMatrix<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: f64) -> CMatrix {
        (self.f)(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// `A_i = f(i/n)`.
    Ordered,
    /// `A_i = f(sigma(i)/n)` for a uniform permutation.
    Permuted,
    /// `A_i = f(U_i)` for independent uniform `U_i`.
    Iid,
}

pub(crate) fn eval_checked(func: &dyn MatrixFn, x: f64) -> Result<CMatrix> {
    let m = func.eval(x);
    if m.dim() != func.dim() {
        return Err(Error::DimensionMismatch {
            expected: func.dim(),
            actual: m.dim(),
        });
    }
    if !m.is_finite() {
        return Err(Error::InvalidInput(format!("function value at x = {x} is not finite")));
    }
    Ok(m)
}

/// Row sampled from `func` at the right endpoints `i/n`, `i = 1..n`, in the
/// given mode. `rng` is untouched in ordered mode.
pub fn gen_riemann<R: Rng + ?Sized>(
    func: &dyn MatrixFn,
    n: usize,
    mode: SamplingMode,
    rng: &mut R,
) -> Result<ArrayRow> {
    if n == 0 {
        return Err(Error::EmptyRow);
    }
    let nf = n as f64;
    let points: Vec<f64> = match mode {
        SamplingMode::Ordered => (1..=n).map(|i| i as f64 / nf).collect(),
        SamplingMode::Permuted => {
            let sigma = Permutation::uniform(n, rng);
            sigma.map().iter().map(|&j| (j + 1) as f64 / nf).collect()
        }
        SamplingMode::Iid => (0..n).map(|_| rng.random::<f64>()).collect(),
    };
    let elements = points
        .into_iter()
        .map(|x| eval_checked(func, x))
        .collect::<Result<Vec<_>>>()?;
    ArrayRow::new(elements)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn e12() -> CMatrix {
        CMatrix::unit(2, 0, 1)
    }
    fn e21() -> CMatrix {
        CMatrix::unit(2, 1, 0)
    }

    #[test]
    fn stats_of_constant_row() {
        let a = CMatrix::from_real_rows(&[&[1.0, 2.0], &[0.0, -1.0]]);
        let row = ArrayRow::new(vec![a.clone(); 7]).unwrap();
        let s = row_stats(&row);
        assert!((&s.mean - &a).norm() < 1e-15);
        assert!((s.l1 - a.norm()).abs() < 1e-15);
        assert_eq!(s.linf, a.norm());
    }

    #[test]
    fn stats_of_two_letter_row() {
        for order in [TwoLetterOrder::FirstHalfB, TwoLetterOrder::Interleaved] {
            let row = gen_two_letter(10, &e12(), &e21(), order).unwrap();
            let s = row_stats(&row);
            assert!((&s.mean - &(&e12() + &e21()).scale(0.5)).norm() < 1e-15);
            assert!((s.l1 - 1.0).abs() < 1e-15);
            assert_eq!(s.linf, 1.0);
        }
    }

    #[test]
    fn stats_match_resummation() {
        let mut r = rng::stream(1, &[1]);
        let row = ArrayRow::new((0..10).map(|_| crate::matlin::random_gaussian(2, &mut r)).collect()).unwrap();
        let s = row_stats(&row);
        // Re-sum entrywise in reverse order.
        let mean = CMatrix::from_fn(2, |i, j| {
            row.elements().iter().rev().map(|m| m[(i, j)]).sum::<num_complex::Complex64>() / 10.0
        });
        let norms: Vec<f64> = row.elements().iter().rev().map(|m| m.norm()).collect();
        assert!((&s.mean - &mean).norm() < 1e-12);
        assert!((s.l1 - norms.iter().sum::<f64>() / 10.0).abs() < 1e-12);
        assert_eq!(s.linf, norms.iter().copied().fold(0.0, f64::max));
        assert!(s.mean.norm() <= s.l1 + 1e-12 && s.l1 <= s.linf + 1e-12);
    }

    #[test]
    fn empty_row_rejected() {
        assert_eq!(ArrayRow::new(vec![]), Err(Error::EmptyRow));
    }

    #[test]
    fn two_letter_orders() {
        let (b, c) = (e12(), e21());
        let row = gen_two_letter(4, &b, &c, TwoLetterOrder::FirstHalfB).unwrap();
        assert_eq!(row.elements(), &[b.clone(), b.clone(), c.clone(), c.clone()]);
        let row = gen_two_letter(4, &b, &c, TwoLetterOrder::Interleaved).unwrap();
        assert_eq!(row.elements(), &[b.clone(), c.clone(), b.clone(), c.clone()]);
        assert!(gen_two_letter(5, &b, &c, TwoLetterOrder::Interleaved).is_err());
    }

    #[test]
    fn repeated_layout() {
        let (b, c) = (e12(), e21());
        let row = gen_repeated(&[b.clone(), c.clone()], 5, TailFill::RepeatFirst).unwrap();
        assert_eq!(row.elements(), &[b.clone(), c.clone(), b.clone(), c.clone(), b.clone()]);
        let row = gen_repeated(&[b.clone()], 6, TailFill::Zero).unwrap();
        assert!(row.elements().iter().all(|m| *m == b));
        let row = gen_repeated(&[b.clone(), c.clone()], 5, TailFill::Zero).unwrap();
        assert!(row.elements()[4].is_zero());
        assert!(gen_repeated(&[b.clone(), c.clone(), b], 2, TailFill::Zero).is_err());
    }

    #[test]
    fn repeated_counts_by_direct_count() {
        let mut r = rng::stream(2, &[1]);
        let letters: Vec<CMatrix> = (0..7).map(|_| crate::matlin::random_gaussian(2, &mut r)).collect();
        for n in [7, 20, 50, 51] {
            let row = gen_repeated(&letters, n, TailFill::RepeatFirst).unwrap();
            let b = n / 7;
            for l in &letters {
                let count = row.elements()[..7 * b].iter().filter(|m| *m == l).count();
                assert_eq!(count, b);
            }
            for i in 0..7 * b {
                assert_eq!(row.alphabet().unwrap().letter_of[i], i % 7);
            }
        }
    }

    #[test]
    fn bounded_log_norms() {
        let spec = RegimeSpec::new(Regime::BoundedLog, 0.1);
        let n = 1_000_000usize;
        let (_, linf) = regime_targets(n, &spec).unwrap();
        let ln = (n as f64).ln();
        assert!((linf - (ln - 5.1 * ln.ln()) / 3.0).abs() < 1e-12);
        let mut r = rng::stream(3, &[1]);
        let s = gen_spiked(2000, 2, &RegimeSpec::new(Regime::BoundedLog, 0.01), SpikeOptions::default(), &mut r);
        // n = 2000 is far too small for this regime.
        assert!(matches!(s, Err(Error::InfeasibleRegime(_))));
    }

    #[test]
    fn bounded_log_delta_one_is_infeasible_at_1e6() {
        // (log 1e6 - 6 log log 1e6) / 3 = -0.646.
        let spec = RegimeSpec::new(Regime::BoundedLog, 1.0);
        let err = regime_targets(1_000_000, &spec).unwrap_err();
        assert!(matches!(err, Error::InfeasibleRegime(ref m) if m.contains("-0.646")), "{err}");
    }

    #[test]
    fn prob_regime_rounding_to_zero_is_infeasible() {
        // Linf near n/e^e makes the bracket tiny; k_n rounds to 0.
        let mut spec = RegimeSpec::new(Regime::ProbRegime, 0.1);
        spec.linf = Some(100.0);
        let err = regime_targets(1000, &spec).unwrap_err();
        assert!(matches!(err, Error::InfeasibleRegime(_)));
    }

    #[test]
    fn spiked_l1_tracks_prediction() {
        let mut r = rng::stream(4, &[1]);
        let spec = RegimeSpec::intermediate(0.1, 0.5, 0.0, 1.0);
        let n = 20_000;
        let s = gen_spiked(n, 2, &spec, SpikeOptions::default(), &mut r).unwrap();
        let stats = row_stats(&s.row);
        let spikes = s.row.elements()[..s.k_n].iter().map(|m| m.norm()).sum::<f64>();
        let rest = s.row.elements()[s.k_n..].iter().map(|m| m.norm()).sum::<f64>();
        assert!((stats.l1 - (spikes + rest) / n as f64).abs() < 1e-9);
        let predicted = s.k_n as f64 / n as f64 * s.linf;
        assert!(stats.l1 >= predicted && stats.l1 <= predicted + 1.0);
        assert!((stats.linf - s.linf).abs() < 1e-9 * s.linf);
    }

    #[test]
    fn regime_spec_validation() {
        assert!(RegimeSpec::new(Regime::BoundedLog, 0.0).validate().is_err());
        assert!(RegimeSpec::intermediate(0.1, 1.0, 0.5, 1.0).validate().is_err());
        assert!(RegimeSpec::intermediate(0.1, 1.0, 0.0, 1.0).validate().is_ok());
        assert!(RegimeSpec::intermediate(0.1, 0.5, 0.0, 1.5).validate().is_err());
    }

    #[test]
    fn quantize_equal_multiplicities() {
        let letters: Vec<CMatrix> = (0..4).map(|i| CMatrix::diag_real(&[i as f64 / 4.0, 0.5])).collect();
        // n = 400, c = 4, beta_j = 100, alpha = 1/10: threshold 10 divides 100.
        let letter_of = (0..400).map(|i| i % 4).collect();
        let row = ArrayRow::from_letters(letters, letter_of).unwrap();
        let plan = frequency_quantize(&row, 4, Ratio::new(1, 10)).unwrap();
        assert_eq!(plan.threshold, 10);
        assert_eq!(plan.a_n_out, 40);
        assert_eq!(plan.retained, vec![0, 1, 2, 3]);
        assert!(plan.discrepancy < 1e-15);
        assert!(plan.certified());
    }

    #[test]
    fn quantize_single_letter() {
        let row = ArrayRow::from_letters(vec![e12()], vec![0; 60]).unwrap();
        let plan = frequency_quantize(&row, 3, Ratio::new(1, 4)).unwrap();
        assert_eq!(plan.retained, vec![0]);
        assert_eq!(plan.new_multiplicities, vec![12]);
        assert_eq!(plan.reduced_letters(row.alphabet().unwrap()).len(), 12);
        assert!(plan.certified());
    }

    #[test]
    fn quantize_rejects_non_integral_threshold() {
        let row = ArrayRow::from_letters(vec![e12()], vec![0; 61]).unwrap();
        assert!(matches!(
            frequency_quantize(&row, 3, Ratio::new(1, 4)),
            Err(Error::Precondition(_))
        ));
        let row = gen_two_letter(60, &e12(), &e21(), TwoLetterOrder::Interleaved).unwrap();
        assert!(frequency_quantize(&row, 1, Ratio::new(1, 4)).is_err());
    }

    #[test]
    fn riemann_modes() {
        let a = CMatrix::diag_real(&[0.3, -0.2]);
        let constant = FnMatrix { dim: 2, f: |_x: f64| CMatrix::diag_real(&[0.3, -0.2]) };
        let mut r = rng::stream(5, &[1]);
        for mode in [SamplingMode::Ordered, SamplingMode::Permuted, SamplingMode::Iid] {
            let row = gen_riemann(&constant, 9, mode, &mut r).unwrap();
            assert!(row.elements().iter().all(|m| *m == a));
        }
        let step = FnMatrix { dim: 2, f: |x: f64| if x <= 0.5 { e12() } else { e21() } };
        let row = gen_riemann(&step, 4, SamplingMode::Ordered, &mut r).unwrap();
        assert_eq!(row.elements(), &[e12(), e12(), e21(), e21()]);
    }

    #[test]
    fn riemann_rejects_bad_functions() {
        let mut r = rng::stream(6, &[1]);
        let bad_dim = FnMatrix { dim: 2, f: |_x: f64| CMatrix::zeros(3) };
        assert!(gen_riemann(&bad_dim, 4, SamplingMode::Ordered, &mut r).is_err());
        let nan = FnMatrix { dim: 1, f: |_x: f64| CMatrix::diag_real(&[f64::NAN]) };
        assert!(gen_riemann(&nan, 4, SamplingMode::Ordered, &mut r).is_err());
    }

    #[test]
    fn json_round_trip() {
        let mut r = rng::stream(7, &[1]);
        let row = ArrayRow::new((0..5).map(|_| crate::matlin::random_gaussian(3, &mut r)).collect()).unwrap();
        assert_eq!(ArrayRow::from_json(&row.to_json()).unwrap(), row);
        let lettered = gen_repeated(&[e12(), e21()], 7, TailFill::Zero).unwrap();
        assert_eq!(ArrayRow::from_json(&lettered.to_json()).unwrap(), lettered);
        assert!(ArrayRow::from_json(r#"{"n":2,"d":1,"elements":[[[1,0]]]}"#).is_err());
    }

    #[test]
    fn unit_normalization_clips() {
        let row = ArrayRow::new(vec![CMatrix::diag_real(&[3.0, 0.0]), CMatrix::diag_real(&[0.5, 0.0])]).unwrap();
        let u = row.unit_normalized();
        assert!((u.elements()[0].norm() - 1.0).abs() < 1e-15);
        assert_eq!(u.elements()[1], row.elements()[1]);
    }
}
