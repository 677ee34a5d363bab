use std::path::PathBuf;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::arrays::{
    gen_repeated, gen_riemann, gen_spiked, gen_two_letter, regime_targets, ArrayRow, Regime, RegimeSpec,
    SamplingMode, SpikeOptions, TailFill, TwoLetterOrder,
};
use crate::evolution::{PathFunction, PropagatorSpec};
use crate::matlin::{random_gaussian, random_hermitian_direction, CMatrix};
use crate::trotter::BlockMode;
use crate::words::tau_tail_bound;
use crate::arrays::MatrixFn;

use super::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Converge,
    Tail,
    Regime,
    Words,
    Evolution,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Converge => "converge",
            Kind::Tail => "tail",
            Kind::Regime => "regime",
            Kind::Words => "words",
            Kind::Evolution => "evolution",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SigmaMode {
    #[default]
    Random,
    Identity,
}

/// Row generators selectable from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Generator {
    /// `n` copies of `a`.
    Constant { a: CMatrix },
    /// `n/2` copies each of `b` and `c`.
    TwoLetter {
        b: CMatrix,
        c: CMatrix,
        #[serde(default)]
        order: TwoLetterOrder,
    },
    /// Periodic layout of the given letters.
    Repeated {
        letters: Vec<CMatrix>,
        #[serde(default)]
        tail: TailFill,
    },
    /// Independent Hermitian elements of norm 1.
    RandomUnit,
    /// Independent real diagonal elements with entries uniform in `[-scale, scale]`.
    RandomDiagonal { scale: f64 },
    /// Independent complex Gaussian elements times `scale`.
    Gaussian { scale: f64 },
    /// Spiked row of a regime.
    Spiked {
        regime: RegimeSpec,
        #[serde(default)]
        options: SpikeOptions,
    },
    /// Samples of a catalog function.
    Riemann { func: PathFunction, mode: SamplingMode },
}

impl Generator {
    /// Matrix dimension fixed by the generator, if any.
    pub fn fixed_dim(&self) -> Option<usize> {
        match self {
            Generator::Constant { a } => Some(a.dim()),
            Generator::TwoLetter { b, .. } => Some(b.dim()),
            Generator::Repeated { letters, .. } => letters.first().map(CMatrix::dim),
            Generator::Riemann { func, .. } => Some(func.dim()),
            _ => None,
        }
    }

    pub fn validate(&self, d: usize) -> Result<(), String> {
        if let Some(fd) = self.fixed_dim() {
            if fd != d {
                return Err(format!("generator has dimension {fd} but d = {d}"));
            }
        }
        match self {
            Generator::TwoLetter { b, c, .. } if b.dim() != c.dim() => {
                Err(format!("two_letter: b is {}x{} but c is {}x{}", b.dim(), b.dim(), c.dim(), c.dim()))
            }
            Generator::Repeated { letters, .. } if letters.is_empty() => Err("repeated: no letters".into()),
            Generator::Repeated { letters, .. } if letters.iter().any(|l| l.dim() != d) => {
                Err("repeated: letters differ in dimension".into())
            }
            Generator::RandomDiagonal { scale } | Generator::Gaussian { scale } if !(scale.is_finite() && *scale >= 0.0) => {
                Err(format!("scale must be finite and non-negative, got {scale}"))
            }
            Generator::Spiked { regime, .. } => regime.validate().map_err(|e| e.to_string()),
            Generator::Riemann { func, .. } => func.validate().map_err(|e| e.to_string()),
            _ => Ok(()),
        }
    }

    pub fn build<R: Rng + ?Sized>(&self, n: usize, d: usize, rng: &mut R) -> crate::Result<ArrayRow> {
        match self {
            Generator::Constant { a } => ArrayRow::from_letters(vec![a.clone()], vec![0; n]),
            Generator::TwoLetter { b, c, order } => gen_two_letter(n, b, c, *order),
            Generator::Repeated { letters, tail } => gen_repeated(letters, n, *tail),
            Generator::RandomUnit => ArrayRow::new((0..n).map(|_| random_hermitian_direction(d, rng)).collect()),
            Generator::RandomDiagonal { scale } => ArrayRow::new(
                (0..n)
                    .map(|_| {
                        let e: Vec<f64> = (0..d).map(|_| scale * rng.random_range(-1.0..=1.0)).collect();
                        CMatrix::diag_real(&e)
                    })
                    .collect(),
            ),
            Generator::Gaussian { scale } => ArrayRow::new((0..n).map(|_| random_gaussian(d, rng).scale(*scale)).collect()),
            Generator::Spiked { regime, options } => Ok(gen_spiked(n, d, regime, *options, rng)?.row),
            Generator::Riemann { func, mode } => gen_riemann(func, n, *mode, rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WordParams {
    /// Alphabet size; `b = floor(n / a)` for each `n`.
    #[serde(default = "default_alphabet")]
    pub a: usize,
    /// Values of `p` for the tau tail table.
    #[serde(default)]
    pub p_grid: Vec<f64>,
}

impl Default for WordParams {
    fn default() -> Self {
        WordParams { a: default_alphabet(), p_grid: Vec::new() }
    }
}

fn default_alphabet() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionParams {
    pub func: PathFunction,
    #[serde(default)]
    pub s: f64,
    #[serde(default = "unit")]
    pub t: f64,
    pub mode: SamplingMode,
}

fn unit() -> f64 {
    1.0
}

fn default_d() -> usize {
    2
}

fn default_trials() -> usize {
    1
}

/// One experiment; see the README for the per-kind schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub n_list: Vec<usize>,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// Block-condition threshold; converge uses the measured gap when unset.
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub generator: Option<Generator>,
    #[serde(default)]
    pub sigma_mode: SigmaMode,
    #[serde(default)]
    pub block_mode: Option<BlockMode>,
    #[serde(default)]
    pub out_path: Option<PathBuf>,
    /// Extra comparison generator for converge.
    #[serde(default)]
    pub target: Option<CMatrix>,
    /// Converge: also write downsampled paths next to the CSV.
    #[serde(default)]
    pub write_paths: bool,
    /// Tail: explicit eps grid instead of the geometric default.
    #[serde(default)]
    pub eps_grid: Vec<f64>,
    /// Regime: specs to sweep (all five at delta = 0.1 when empty).
    #[serde(default)]
    pub regimes: Vec<RegimeSpec>,
    #[serde(default)]
    pub spike_options: SpikeOptions,
    /// Regime: also evaluate the permuted path for every row.
    #[serde(default)]
    pub products: bool,
    #[serde(default)]
    pub words: WordParams,
    #[serde(default)]
    pub evolution: Option<EvolutionParams>,
}

impl ExperimentConfig {
    pub fn block_mode(&self) -> BlockMode {
        self.block_mode.unwrap_or(BlockMode::SqrtDefault)
    }

    pub fn generator(&self) -> Generator {
        if let Some(g) = &self.generator {
            return g.clone();
        }
        match self.kind {
            Kind::Converge => Generator::TwoLetter {
                b: CMatrix::unit(2, 0, 1),
                c: CMatrix::unit(2, 1, 0),
                order: TwoLetterOrder::FirstHalfB,
            },
            _ => Generator::RandomUnit,
        }
    }

    pub fn regimes(&self) -> Vec<RegimeSpec> {
        if !self.regimes.is_empty() {
            return self.regimes.clone();
        }
        vec![
            RegimeSpec::new(Regime::ProbRegime, 0.1),
            RegimeSpec::new(Regime::AsRegime, 0.1),
            RegimeSpec::new(Regime::LargeLinf, 0.1),
            RegimeSpec::new(Regime::BoundedLog, 0.1),
            RegimeSpec::intermediate(0.1, 0.5, 0.0, 1.0),
        ]
    }

    pub fn evolution(&self) -> EvolutionParams {
        self.evolution.clone().unwrap_or(EvolutionParams {
            func: PathFunction::Step {
                b: CMatrix::unit(2, 0, 1),
                c: CMatrix::unit(2, 1, 0),
            },
            s: 0.0,
            t: 1.0,
            mode: SamplingMode::Permuted,
        })
    }

    /// Checks every field; messages name the offending field.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, msg: String| Err(CliError::Config(format!("{field}: {msg}")));
        if self.n_list.is_empty() {
            return bad("n_list", "must not be empty".into());
        }
        if let Some(&n) = self.n_list.iter().find(|&&n| n == 0) {
            return bad("n_list", format!("entries must be positive, got {n}"));
        }
        if self.trials == 0 {
            return bad("trials", "must be at least 1".into());
        }
        if self.d == 0 {
            return bad("d", "must be at least 1".into());
        }
        if let Some(e) = self.eps {
            if !(e > 0.0 && e.is_finite()) {
                return bad("eps", format!("must be positive, got {e}"));
            }
        }
        if let Some(t) = &self.target {
            if t.dim() != self.d {
                return bad("target", format!("dimension {} differs from d = {}", t.dim(), self.d));
            }
        }
        match self.kind {
            Kind::Converge | Kind::Tail => {
                if let Err(e) = self.generator().validate(self.d) {
                    return bad("generator", e);
                }
                if self.kind == Kind::Tail {
                    if let Some(&n) = self.n_list.iter().find(|&&n| n < 4) {
                        return bad("n_list", format!("tail needs n >= 4, got {n}"));
                    }
                    if let Some(&e) = self.eps_grid.iter().find(|&&e| !(e > 0.0 && e.is_finite())) {
                        return bad("eps_grid", format!("entries must be positive, got {e}"));
                    }
                }
                if let Generator::TwoLetter { .. } = self.generator() {
                    if let Some(&n) = self.n_list.iter().find(|&&n| n % 2 != 0) {
                        return bad("n_list", format!("two_letter needs even n, got {n}"));
                    }
                }
            }
            Kind::Regime => {
                for (i, spec) in self.regimes().iter().enumerate() {
                    for &n in &self.n_list {
                        if let Err(e) = regime_targets(n, spec) {
                            return bad(&format!("regimes[{i}]"), format!("n = {n}: {e}"));
                        }
                    }
                }
            }
            Kind::Words => {
                let a = self.words.a;
                if a == 0 {
                    return bad("words.a", "must be at least 1".into());
                }
                for &n in &self.n_list {
                    if n < a {
                        return bad("n_list", format!("n = {n} is smaller than words.a = {a}"));
                    }
                    for &p in &self.words.p_grid {
                        if let Err(e) = tau_tail_bound(a, n / a, p, true) {
                            return bad("words.p_grid", format!("n = {n}: {e}"));
                        }
                    }
                }
            }
            Kind::Evolution => {
                let ev = self.evolution();
                let spec = PropagatorSpec { func: ev.func, s: ev.s, t: ev.t, n: 1, mode: ev.mode, seed: 0 };
                if let Err(e) = spec.validate() {
                    return bad("evolution", e.to_string());
                }
            }
        }
        Ok(())
    }
}
