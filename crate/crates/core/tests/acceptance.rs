//! Acceptance suite. Each test prints one `[PASS]`/`[FAIL]` line to stderr
//! (written through the raw handle so it shows up even when output is
//! captured) and then asserts.

use std::io::Write;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::Rng;

use trotter_shuffle::arrays::{
    gen_repeated, gen_spiked, gen_two_letter, row_stats, ArrayRow, Regime, RegimeSpec, SamplingMode, SpikeOptions,
    TailFill, TwoLetterOrder,
};
use trotter_shuffle::concentration::{empirical_block_tail, eps_grid, lemma_random_bound};
use trotter_shuffle::evolution::{cocycle_check, propagate, PathFunction, PropagatorSpec};
use trotter_shuffle::matlin::{op_norm, random_gaussian, random_hermitian_direction, CMatrix};
use trotter_shuffle::rng;
use trotter_shuffle::trotter::{
    check_block_conditions, partial_products, path_deviation, prop_uniform_bound, BlockScheme, PathEvaluator,
    Permutation,
};
use trotter_shuffle::words::{
    apply_transpositions, restrict_word, tau, tau_tail_bound, tau_tail_empirical, transposition_sequence,
    within_distance_bound, Word,
};

/// `||e^{B/2} e^{C/2} - e^{(B+C)/2}||` for `B = E12`, `C = E21`, evaluated
/// from the closed forms at 40 digits.
const V_STAR: f64 = 0.129_393_515_919_781_127_457_289_561_052_422_578_3;

fn report(id: u32, name: &str, pass: bool, detail: &str, elapsed: Duration) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let line = format!("[{tag}] AC{id} {name}: {detail} ({:.2}s)\n", elapsed.as_secs_f64());
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
}

fn finish(id: u32, name: &str, ok: bool, detail: String, start: Instant, limit: Duration) {
    let elapsed = start.elapsed();
    let in_time = elapsed < limit;
    let detail = if in_time { detail } else { format!("{detail}; over the {}s budget", limit.as_secs()) };
    report(id, name, ok && in_time, &detail, elapsed);
    assert!(ok, "AC{id} {name}: {detail}");
    assert!(in_time, "AC{id} {name}: took {elapsed:?}, budget {limit:?}");
}

fn e12() -> CMatrix {
    CMatrix::unit(2, 0, 1)
}

fn e21() -> CMatrix {
    CMatrix::unit(2, 1, 0)
}

/// Plain Taylor series `sum_k M^k / k!` to 120 terms, no scaling.
fn series_oracle(m: &CMatrix) -> CMatrix {
    let d = m.dim();
    let mut sum = CMatrix::identity(d);
    let mut term = CMatrix::identity(d);
    for k in 1..120 {
        term = (&term * m).scale(1.0 / k as f64);
        sum = &sum + &term;
    }
    sum
}

#[test]
fn ac1_exponential_oracle() {
    let start = Instant::now();
    let mut r = rng::stream(1, &[1]);
    let mut worst: f64 = 0.0;
    for i in 0..200 {
        let d = 2 + i % 5;
        let g = random_gaussian(d, &mut r);
        let target = r.random_range(0.0..=4.0);
        let m = g.scale(target / op_norm(&g).unwrap());
        let norm = op_norm(&m).unwrap();
        let err = (&m.exp() - &series_oracle(&m)).norm() / norm.exp();
        worst = worst.max(err);
    }
    let ok = worst <= 1e-10;
    finish(1, "exponential oracle", ok, format!("worst err / e^||M|| = {worst:.3e} (limit 1e-10)"), start, Duration::from_secs(5));
}

#[test]
fn ac2_commuting_exactness() {
    let start = Instant::now();
    let mut r = rng::stream(2, &[1]);
    let mut worst_identical: f64 = 0.0;
    let mut worst_diag_final: f64 = 0.0;
    let mut worst_diag_path: f64 = 0.0;

    // Identical elements: the path is exactly exp(kA/n), so sup_dev is the slack.
    for n in [10usize, 1000, 5000] {
        for a in [random_gaussian(2, &mut r).scale(0.7), CMatrix::diag_real(&[0.8, -1.3, 0.1])] {
            let row = ArrayRow::new(vec![a.clone(); n]).unwrap();
            let eval = PathEvaluator::new(&row, &a).unwrap();
            for _ in 0..50 {
                let rep = eval.evaluate(&Permutation::uniform(n, &mut r)).unwrap();
                worst_identical = worst_identical.max(rep.sup_dev - rep.slack);
            }
        }
    }

    // Distinct diagonal elements commute: P_k = exp(sum of the first k / n)
    // for every k, and P_n = exp(A_n) whatever sigma is.
    for n in [10usize, 1000, 5000] {
        let row = ArrayRow::new(
            (0..n)
                .map(|_| CMatrix::diag_real(&[r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]))
                .collect(),
        )
        .unwrap();
        let mean = row_stats(&row).mean;
        for _ in 0..50 {
            let sigma = Permutation::uniform(n, &mut r);
            let ps = partial_products(&row, &sigma).unwrap();
            worst_diag_final = worst_diag_final.max(ps[n].distance(&mean.exp()));
            let mut acc = [0.0f64; 3];
            for (k, &j) in sigma.map().iter().enumerate() {
                for (q, x) in acc.iter_mut().enumerate() {
                    *x += row.elements()[j][(q, q)].re / n as f64;
                }
                let exact = CMatrix::diag(&acc.map(|x| Complex64::new(x.exp(), 0.0)));
                worst_diag_path = worst_diag_path.max(ps[k + 1].distance(&exact));
            }
        }
    }
    let ok = worst_identical <= 1e-8 && worst_diag_final <= 1e-8 && worst_diag_path <= 1e-8;
    finish(
        2,
        "commuting exactness",
        ok,
        format!(
            "identical rows: max(sup_dev - slack) = {worst_identical:.2e}; diagonal rows: final {worst_diag_final:.2e}, per-step {worst_diag_path:.2e} (limit 1e-8)"
        ),
        start,
        Duration::from_secs(30),
    );
}

#[test]
fn ac3_ordered_product_misses_the_limit() {
    let start = Instant::now();
    let n = 2000;
    let row = gen_two_letter(n, &e12(), &e21(), TwoLetterOrder::FirstHalfB).unwrap();
    let target = (&e12() + &e21()).scale(0.5);
    let rep = path_deviation(&row, &Permutation::identity(n), &target).unwrap();
    let gap = (rep.final_deviation() - V_STAR).abs();
    finish(
        3,
        "ordered product non-convergence",
        gap <= 1e-3,
        format!("final deviation {:.6}, v* = {V_STAR:.6}, gap {gap:.2e} (limit 1e-3)", rep.final_deviation()),
        start,
        Duration::from_secs(10),
    );
}

#[test]
fn ac4_randomized_convergence() {
    let start = Instant::now();
    let target = (&e12() + &e21()).scale(0.5);
    let mut medians = Vec::new();
    for n in [500usize, 2000, 8000] {
        let row = gen_two_letter(n, &e12(), &e21(), TwoLetterOrder::FirstHalfB).unwrap();
        let eval = PathEvaluator::new(&row, &target).unwrap();
        let mut devs: Vec<f64> = (0..101u64)
            .map(|t| {
                let sigma = Permutation::uniform(n, &mut rng::stream(4, &[rng::tag::SIGMA, n as u64, t]));
                eval.evaluate(&sigma).unwrap().sup_dev
            })
            .collect();
        devs.sort_by(f64::total_cmp);
        medians.push(devs[50]);
    }
    let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
    let ok = decreasing && medians[2] <= 0.08;
    finish(
        4,
        "randomized convergence",
        ok,
        format!("median sup_dev at n = 500, 2000, 8000: {medians:.4?} (strictly decreasing, last <= 0.08)"),
        start,
        Duration::from_secs(180),
    );
}

#[test]
fn ac5_deterministic_bound_consistency() {
    let start = Instant::now();
    let mut r = rng::stream(5, &[1]);
    let mut checked = 0;
    let mut worst_margin = f64::INFINITY;
    let mut violations = 0;
    while checked < 50 {
        let n = r.random_range(1000..=4000usize);
        let d = r.random_range(2..=3usize);
        let scale = r.random_range(0.2..=1.0);
        let row = ArrayRow::new((0..n).map(|_| random_hermitian_direction(d, &mut r).scale(scale)).collect()).unwrap();
        let stats = row_stats(&row);
        let a = n.isqrt() + usize::from(n.isqrt() * n.isqrt() < n);
        let scheme = BlockScheme::new(n, a).unwrap();
        if stats.l1 * stats.l1 * stats.l1.exp() > scheme.b_n as f64 / 10.0 {
            continue;
        }
        let sigma = Permutation::uniform(n, &mut r);
        let probe = check_block_conditions(&row, &sigma, &scheme, f64::INFINITY).unwrap();
        let eps = probe.worst_mean_gap.max(probe.worst_norm_gap);
        let check = check_block_conditions(&row, &sigma, &scheme, eps).unwrap();
        assert!(check.ok);
        let rep = path_deviation(&row, &sigma, &stats.mean).unwrap();
        let bound = prop_uniform_bound(stats.l1, stats.mean.norm().min(stats.l1), eps, scheme.b_n).unwrap();
        let margin = bound + 1e-6 - rep.sup_dev;
        worst_margin = worst_margin.min(margin);
        if margin < 0.0 {
            violations += 1;
        }
        checked += 1;
    }
    finish(
        5,
        "deterministic bound consistency",
        violations == 0,
        format!("{checked} instances, {violations} violations, smallest margin {worst_margin:.3e}"),
        start,
        Duration::from_secs(120),
    );
}

#[test]
fn ac6_tail_domination() {
    let start = Instant::now();
    let (n, a, trials) = (10_000usize, 100usize, 10_000usize);
    let scheme = BlockScheme::new(n, a).unwrap();
    let mut r = rng::stream(6, &[1]);
    let rows = [
        ("random unit", ArrayRow::new((0..n).map(|_| random_hermitian_direction(2, &mut r)).collect()).unwrap()),
        ("two-letter", gen_two_letter(n, &e12(), &e21(), TwoLetterOrder::Interleaved).unwrap()),
    ];
    let mut failures = Vec::new();
    let mut points = 0;
    for (label, row) in &rows {
        let stats = row_stats(row);
        assert!(stats.linf <= 1.0 + 1e-12);
        let grid = eps_grid(stats.l1);
        assert_eq!(grid.len(), 12);
        for &eps in &grid {
            let freq = empirical_block_tail(row, &scheme, eps, trials, 66).unwrap().freq_mean_cond;
            let p = lemma_random_bound(a, scheme.b_n, eps, &stats, row.d(), false).unwrap().clamp(0.0, 1.0);
            let limit = p + 3.0 * (p * (1.0 - p) / trials as f64).sqrt();
            points += 1;
            if freq > limit {
                failures.push(format!("{label} eps={eps:.3}: freq {freq} > {limit:.3e}"));
            }
        }
    }
    finish(
        6,
        "tail domination",
        failures.is_empty(),
        if failures.is_empty() { format!("{points} grid points dominated") } else { failures.join("; ") },
        start,
        Duration::from_secs(180),
    );
}

#[test]
fn ac7_word_layer() {
    let start = Instant::now();
    let (a, b) = (5usize, 8usize);
    let mut r = rng::stream(7, &[1]);
    let mut bound_ok = true;
    let mut replay_ok = true;
    for _ in 0..1000 {
        let w = Word::random(a, b, &mut r);
        bound_ok &= within_distance_bound(&w);
        replay_ok &= apply_transpositions(&w, &transposition_sequence(&w)) == Word::standard(a, b);
    }

    let trials = 100_000;
    let slack = 3.0 * (0.25 / trials as f64).sqrt();
    let mut tail_ok = true;
    let mut worst = f64::NEG_INFINITY;
    for i in 0..6 {
        let p = 2.0 + 0.2 * i as f64;
        let emp = tau_tail_empirical(a, b, p, trials, 77).unwrap();
        let bound = tau_tail_bound(a, b, p, true).unwrap().min(1.0);
        worst = worst.max(emp - bound);
        tail_ok &= emp <= bound + slack;
    }

    // All 24 permutations of 4 positions onto words with a = b = 2.
    fn perms(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        perms(n - 1)
            .into_iter()
            .flat_map(|p| {
                (0..=p.len()).map(move |i| {
                    let mut q = p.clone();
                    q.insert(i, n - 1);
                    q
                })
            })
            .collect()
    }
    let mut counts = std::collections::HashMap::new();
    for p in perms(4) {
        let w = restrict_word(&Permutation::new(p).unwrap(), 4, 2, 2).unwrap();
        *counts.entry(w.letters().to_vec()).or_insert(0usize) += 1;
    }
    let uniform_ok = counts.len() == 6 && counts.values().all(|&c| c == 4);
    let sample_tau = tau(&Word::standard(a, b));

    let ok = bound_ok && replay_ok && tail_ok && uniform_ok;
    finish(
        7,
        "word layer",
        ok,
        format!(
            "distance bound {bound_ok}, replay {replay_ok}, tail domination {tail_ok} (max emp - bound {worst:.2e}), uniform words {uniform_ok}, tau(standard) = {sample_tau}"
        ),
        start,
        Duration::from_secs(60),
    );
}

#[test]
fn ac8_evolution_family() {
    let start = Instant::now();
    let step = PathFunction::Step { b: e12(), c: e21() };
    let spec = |mode, seed| PropagatorSpec { func: step.clone(), s: 0.0, t: 1.0, n: 4000, mode, seed };

    let ordered_target = CMatrix::from_real_rows(&[&[1.25, 0.5], &[0.5, 1.0]]);
    let ordered_dev = propagate(&spec(SamplingMode::Ordered, 0)).unwrap().distance(&ordered_target);

    let (c, s) = (0.5f64.cosh(), 0.5f64.sinh());
    let sym_target = CMatrix::from_real_rows(&[&[c, s], &[s, c]]);
    let hits = (0..50u64)
        .filter(|&seed| propagate(&spec(SamplingMode::Permuted, seed)).unwrap().distance(&sym_target) <= 0.05)
        .count();

    let residual = cocycle_check(&spec(SamplingMode::Ordered, 0), 0.5).unwrap();
    let ok = ordered_dev <= 1e-2 && hits >= 45 && residual <= 1e-10;
    finish(
        8,
        "evolution family",
        ok,
        format!("ordered dev {ordered_dev:.2e} (<= 1e-2), permuted hits {hits}/50 (>= 45), cocycle residual {residual:.2e} (<= 1e-10)"),
        start,
        Duration::from_secs(60),
    );
}

#[test]
fn ac9_regime_feasibility() {
    let start = Instant::now();
    let n = 1_000_000usize;
    let nf = n as f64;
    let (ln, lln) = (nf.ln(), nf.ln().ln());
    let delta = 0.1;
    // (spec, expected k_n before rounding, expected Linf), written out from
    // the regime formulas independently of the generator.
    let prob_k = |l: f64| {
        let x = nf / l;
        nf / (3.0 * l) * (x.ln() - (4.0 + 2.0 * delta) * x.ln().ln())
    };
    let as_k = |l: f64| {
        let x = nf / l;
        nf / (3.0 * l) * (x.ln() - lln - (3.0 + delta) * x.ln().ln())
    };
    let big = ln * lln.powf(3.0 + 2.0 * delta);
    let bounded = (ln - (5.0 + delta) * lln) / 3.0;
    let (alpha, beta, t) = (0.5, 0.0, 1.0);
    let cases = [
        (RegimeSpec::new(Regime::ProbRegime, delta), prob_k(ln), ln),
        (RegimeSpec::new(Regime::AsRegime, delta), as_k(ln), ln),
        (RegimeSpec::new(Regime::LargeLinf, delta), big / 3.0, nf / big),
        (RegimeSpec::new(Regime::BoundedLog, delta), nf, bounded),
        (
            RegimeSpec::intermediate(delta, alpha, beta, t),
            alpha * t * nf.powf(alpha) * ln.powf(beta),
            nf.powf(1.0 - alpha) * ln.powf(1.0 - beta) / (3.0 * t),
        ),
    ];
    let mut lines = Vec::new();
    let mut ok = true;
    for (i, (spec, k_expect, linf_expect)) in cases.iter().enumerate() {
        let spiked = gen_spiked(n, 2, spec, SpikeOptions::default(), &mut rng::stream(9, &[i as u64])).unwrap();
        let stats = row_stats(&spiked.row);
        let target = spiked.k_n as f64 / nf * spiked.linf;
        let k_ok = spiked.k_n as f64 == k_expect.round();
        let linf_ok = (spiked.linf - linf_expect).abs() <= 1e-9 * linf_expect;
        let l1_ok = stats.l1 >= target / 2.0 && stats.l1 <= 2.0 * target + 1.0;
        ok &= k_ok && linf_ok && l1_ok;
        lines.push(format!(
            "{:?}: k_n {} (formula {:.2}), Linf {:.4}, L1 {:.4} vs {:.4}",
            spec.regime, spiked.k_n, k_expect, spiked.linf, stats.l1, target
        ));
    }
    finish(9, "regime feasibility", ok, lines.join("; "), start, Duration::from_secs(10));
}

#[test]
fn standard_layout_is_exactly_balanced() {
    // Sanity check used by AC5's reasoning: the periodic layout satisfies the
    // block conditions with eps = 0.
    let letters = [e12(), e21(), CMatrix::diag_real(&[0.5, -0.5])];
    let row = gen_repeated(&letters, 300, TailFill::Zero).unwrap();
    let scheme = BlockScheme::new(300, 3).unwrap();
    let check = check_block_conditions(&row, &Permutation::identity(300), &scheme, 1e-12).unwrap();
    assert!(check.ok);
}
