//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use drphase_core::criteria::{
    classify, d0, lemma1_growth_check, lemma2_tail_check, lemma3_contraction_check, lemma4_association_check, offspring_association_check,
    Verdict,
};
use drphase_core::evolution::{evolve, gf_step_deriv, gf_step_eval, step, EvolveOptions};
use drphase_core::montecarlo::{ancestor_count, derive_seed, simulate, tree_estimate};
use drphase_core::random::{random_bounded_offspring, random_pmf, random_suite, RandomModelConfig};
use drphase_core::scan::{bisect_boundary, scan, Criterion, Family, FamilyKind};
use drphase_core::{FinitePmf, ModelSpec, OffspringLaw};

const SUITE_SEED: u64 = 20_240_601;
const SUITE_SIZE: usize = 20;
const MC_SEED: u64 = 2026;

type Check = fn() -> Outcome;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / a.abs().max(b.abs())
}

fn two_point_family(tax: usize, high: usize) -> Family<f64> {
    Family::new(FamilyKind::TwoPoint { high }, tax, OffspringLaw::deterministic(2).unwrap()).unwrap()
}

fn suite() -> Vec<ModelSpec> {
    random_suite(SUITE_SEED, SUITE_SIZE, &RandomModelConfig::default())
}

fn boundary_tax_one() -> Outcome {
    let start = Instant::now();
    let fam = two_point_family(1, 2);
    let sup = bisect_boundary(&fam, Criterion::Super, 1e-9).unwrap();
    let sub = bisect_boundary(&fam, Criterion::Sub, 1e-9).unwrap();
    let elapsed = start.elapsed();
    let pass = [sup, sub].iter().all(|i| i.width() <= 1e-9 && i.contains(0.2)) && elapsed < Duration::from_secs(1);
    Outcome::new(
        pass,
        format!(
            "super [{:.12}, {:.12}], sub [{:.12}, {:.12}], {:?}",
            sup.lo, sup.hi, sub.lo, sub.hi, elapsed
        ),
    )
}

fn gap_tax_two() -> Outcome {
    let start = Instant::now();
    let fam = two_point_family(2, 3);
    // D_0 at (s, m) = (sqrt 2, 2) is 2p(1 + sqrt 2) - 2, at (3/2, 2) it is 5.375p - 2
    let super_root = 2f64.sqrt() - 1.0;
    let sub_root = 2.0 / 5.375;
    let grid = scan(&fam, 1001).unwrap();
    let mut misplaced = Vec::new();
    for g in &grid {
        let p = g.parameter;
        let expected = if p <= 0.37 {
            Some(Verdict::Subcritical)
        } else if p >= 0.42 {
            Some(Verdict::Supercritical)
        } else if p > sub_root + 1e-9 && p < super_root - 1e-9 {
            Some(Verdict::Undetermined)
        } else {
            None
        };
        if expected.is_some_and(|v| v != g.verdict.verdict) {
            misplaced.push(p);
        }
    }
    let sup = bisect_boundary(&fam, Criterion::Super, 1e-9).unwrap();
    let sub = bisect_boundary(&fam, Criterion::Sub, 1e-9).unwrap();
    let elapsed = start.elapsed();
    let pass = misplaced.is_empty() && sup.contains(super_root) && sub.contains(sub_root) && elapsed < Duration::from_secs(1);
    Outcome::new(
        pass,
        format!(
            "{} grid points, {} misplaced; undetermined band ({:.9}, {:.9}); {:?}",
            grid.len(),
            misplaced.len(),
            sub.hi,
            sup.lo,
            elapsed
        ),
    )
}

fn monotone_bracket() -> Outcome {
    let mut worst = 0f64;
    let mut supercritical = 0;
    let mut uncertified = Vec::new();
    for (i, m) in suite().iter().enumerate() {
        let trace = evolve(m, 30, &EvolveOptions::leak_free()).unwrap();
        for w in trace.rows[..=20].windows(2) {
            worst = worst.max(w[1].q_upper - w[0].q_upper).max(w[0].q_lower - w[1].q_lower);
        }
        if classify(m).verdict == Verdict::Supercritical {
            supercritical += 1;
            if trace.first_positive_lower().is_none() {
                uncertified.push(i);
            }
        }
    }
    Outcome::new(
        worst <= 1e-12 && uncertified.is_empty(),
        format!("worst violation {worst:.3e}; {supercritical} supercritical, uncertified by n = 30: {uncertified:?}"),
    )
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let opts = EvolveOptions::leak_free();
    let mut worst = 0f64;
    let mut comparisons = 0;
    let mut leaky = 0;
    for m in suite() {
        let mut x: FinitePmf = m.x0().clone();
        // X_n = step(X_{n-1}) for n = 1..=8
        for _ in 0..8 {
            let next = step(&x, &m, &opts).unwrap();
            // entries below 1e-300 dropped by step() can carry all of a tiny derivative
            let leak_free = next.leaked_mass() == 0.0;
            leaky += usize::from(!leak_free);
            for s in [1.1, 1.5, 2.0, 3.0] {
                worst = worst.max(rel_err(next.pgf_eval(s), gf_step_eval(&x, &m, s).unwrap()));
                comparisons += 1;
                if leak_free {
                    worst = worst.max(rel_err(next.pgf_deriv(s), gf_step_deriv(&x, &m, s).unwrap()));
                    comparisons += 1;
                }
            }
            x = next;
        }
    }
    let elapsed = start.elapsed();
    Outcome::new(
        worst <= 1e-10 && elapsed < Duration::from_secs(10),
        format!(
            "{comparisons} comparisons, worst relative error {worst:.3e}, derivatives skipped on {leaky} leaky generations; {elapsed:?}"
        ),
    )
}

fn tail_bound() -> Outcome {
    let mut worst = 0f64;
    let mut checked = 0;
    for m in suite().iter().filter(|m| classify(m).verdict == Verdict::Subcritical) {
        let report = lemma2_tail_check(m, 20, &EvolveOptions::leak_free()).unwrap();
        worst = worst.max(report.worst_ratio);
        checked += 1;
    }
    Outcome::new(
        checked > 0 && worst <= 1.0 + 1e-9,
        format!("{checked} subcritical models, worst ratio {worst:.6}"),
    )
}

fn contraction() -> Outcome {
    let mut violations = 0;
    let mut sign_flips = 0;
    let mut rows = 0;
    for m in suite() {
        let bound = m.offspring().bound_m().unwrap();
        let base = 1.0 + (bound - 1) as f64 / m.tax() as f64;
        for s in [base, 2.0 * base] {
            let check = lemma3_contraction_check(&m, s, 11, &EvolveOptions::leak_free()).unwrap();
            rows += check.len();
            violations += check.iter().filter(|r| !r.holds(1e-9)).count();
            if check[0].d_current_scaled < 0.0 {
                sign_flips += check.iter().filter(|r| r.d_current_scaled >= 0.0 || r.d_next_scaled >= 0.0).count();
            }
        }
    }
    Outcome::new(
        violations == 0 && sign_flips == 0,
        format!("{rows} rows, {violations} contraction violations, {sign_flips} sign changes"),
    )
}

fn geometric_growth() -> Outcome {
    let mut failures = 0;
    let mut checked_models = 0;
    let mut rows = 0;
    for m in suite().iter().filter(|m| classify(m).verdict == Verdict::Supercritical) {
        let en = m.offspring().mean_n();
        let s_max = en.powf(1.0 / m.tax() as f64);
        let points: Vec<f64> = [0.9, 0.95, 0.99]
            .iter()
            .map(|f| f * s_max)
            .filter(|&s| s > 1.0 && d0(m, s, en) > 0.0)
            .collect();
        if points.is_empty() {
            continue;
        }
        checked_models += 1;
        for s in points {
            let check = lemma1_growth_check(m, s, 8, &EvolveOptions::leak_free()).unwrap();
            rows += check.len();
            failures += check.iter().filter(|r| !r.holds(1e-9)).count();
        }
    }
    Outcome::new(
        checked_models > 0 && failures == 0,
        format!("{checked_models} models, {rows} rows, {failures} below the floor"),
    )
}

fn association() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SUITE_SEED ^ 0xA5);
    let mut pmf_failures = 0;
    for _ in 0..100 {
        let p: FinitePmf = random_pmf(&mut rng, 6);
        for s in [1.5, 2.0, 4.0] {
            let (lhs, rhs) = lemma4_association_check(&p, s).unwrap();
            if lhs < rhs - 1e-12 {
                pmf_failures += 1;
            }
        }
    }
    let mut law_failures = 0;
    for _ in 0..100 {
        let law: OffspringLaw = random_bounded_offspring(&mut rng, 4);
        for v in [1.0, 1.5, 2.0] {
            if !offspring_association_check(&law, v).unwrap().holds(1e-12) {
                law_failures += 1;
            }
        }
    }
    Outcome::new(
        pmf_failures == 0 && law_failures == 0,
        format!("pmf failures {pmf_failures}/300, offspring failures {law_failures}/300"),
    )
}

fn monte_carlo() -> Outcome {
    let start = Instant::now();
    let model = ModelSpec::new(
        1,
        FinitePmf::from_pairs([(0, 0.5), (2, 0.5)]).unwrap(),
        OffspringLaw::deterministic(2).unwrap(),
    )
    .unwrap();
    let exact = evolve(&model, 10, &EvolveOptions::leak_free()).unwrap().rows[10].mean_xn;
    let last = simulate(&model, 100_000, 10, MC_SEED).unwrap().pop().unwrap().stats;
    let z = (last.mean - exact) / last.stderr;
    let population_ok = z.abs() <= 4.0;

    let uniform = OffspringLaw::finite([(1, 0.5), (3, 0.5)]).unwrap();
    let counts: Vec<f64> = (0..10_000u64)
        .map(|i| ancestor_count(&uniform, 10, derive_seed(MC_SEED, 0, i)).unwrap() as f64)
        .collect();
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<f64>() / n;
    let sd = (counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let target = 2f64.powi(10);
    let ancestors_ok = (mean - target).abs() <= 3.0 * sd / n.sqrt();

    // context only: run-to-run spread of the population mean and an exact tree estimate
    let replicates: Vec<f64> = (1..=8u64)
        .map(|r| {
            simulate(&model, 100_000, 10, derive_seed(MC_SEED, u64::MAX, r))
                .unwrap()
                .pop()
                .unwrap()
                .stats
                .mean
        })
        .collect();
    let rm = replicates.iter().sum::<f64>() / 8.0;
    let rsd = (replicates.iter().map(|x| (x - rm).powi(2)).sum::<f64>() / 7.0).sqrt();
    let tree = tree_estimate(&model, 10, 100_000, MC_SEED).unwrap();

    let elapsed = start.elapsed();
    Outcome::new(
        population_ok && ancestors_ok && elapsed < Duration::from_secs(60),
        format!(
            "population mean {:.4} vs exact {exact:.4}, {z:+.1} stderr (stderr {:.4}); ancestors {mean:.2} vs {target} ({:+.2} stderr); \
             replicate sd {rsd:.3}, tree estimate {:.3} +/- {:.3}; {elapsed:?}",
            last.mean,
            last.stderr,
            (mean - target) / (sd / n.sqrt()),
            tree.mean,
            tree.stderr,
        ),
    )
}

fn reproducibility() -> Outcome {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/supercritical.json");
    let run = |threads: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_drphase"))
            .args(["simulate", "--config", config.to_str().unwrap(), "--output", "csv"])
            .env("DRPHASE_THREADS", threads)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        out.stdout
    };
    let outputs = [run("1"), run("1"), run("4"), run("4")];
    let identical = outputs.iter().all(|o| *o == outputs[0]);
    Outcome::new(
        identical && !outputs[0].is_empty(),
        format!("4 runs, {} bytes each, identical: {identical}", outputs[0].len()),
    )
}

fn main() {
    let criteria: [(&str, Check); 10] = [
        ("boundary for a = 1 at p = 0.2", boundary_tax_one),
        ("gap exhibition for a = 2", gap_tax_two),
        ("monotone free-energy bracket", monotone_bracket),
        ("generating-function oracle equivalence", oracle_equivalence),
        ("subcritical tail bound", tail_bound),
        ("contraction and sign persistence", contraction),
        ("geometric growth", geometric_growth),
        ("association inequalities", association),
        ("Monte Carlo consistency", monte_carlo),
        ("reproducibility across runs and threads", reproducibility),
    ];
    let mut failed = 0;
    let mut err = std::io::stderr();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = check();
        let status = if outcome.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!outcome.pass);
        let _ = writeln!(err, "criterion {:>2} {status}: {name}: {}", i + 1, outcome.detail);
    }
    let _ = writeln!(err, "acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
