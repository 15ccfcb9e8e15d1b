//! Acceptance suite: one test per criterion, each printing a PASS line.
//! Run with `cargo test -p clickchoice-cli --test acceptance -- --nocapture`.

use std::collections::BTreeSet;
use std::process::Command;
use std::time::Instant;

use chrono::NaiveDate;
use clickchoice_core::em::{em_fit, posterior_memberships, EmConfig};
use clickchoice_core::eval::{
    average_precision, prf1, run_evaluation, select_top_n, ModelScorer, ScoredPair,
};
use clickchoice_core::features::{frequency_level, recency_level};
use clickchoice_core::lclr::lclr_em_fit;
use clickchoice_core::solver::{
    fit_mcc, fit_monotone, objective_value, SolverConfig, WeightedCellCounts,
};
use clickchoice_core::synth::{
    generate_planted_samples, generate_planted_tensor, oracle_fit, ExposurePlan,
    PlantedSampleConfig,
};
use clickchoice_core::types::{
    check_shape_constraints, CountTensor, GridSpec, LatentClassModel, ProbabilityTable, ShapeMode,
    ShapeTag,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPSILON: f64 = 1e-5;

fn assert_feasible(table: &ProbabilityTable, mode: Option<ShapeMode>, context: &str) {
    if let Some(mode) = mode {
        let violations = check_shape_constraints(table, mode, 1e-9);
        assert!(
            violations.is_empty(),
            "{context}: shape violations {violations:?}"
        );
    }
    let boxes = table.box_violations();
    assert!(boxes.is_empty(), "{context}: box violations {boxes:?}");
    assert_eq!(table.epsilon, EPSILON, "{context}: unexpected epsilon");
}

fn random_integer_counts(grid: GridSpec, rng: &mut ChaCha8Rng) -> WeightedCellCounts {
    let a: Vec<f64> = (0..grid.cells())
        .map(|_| rng.random_range(0..=20) as f64)
        .collect();
    let b: Vec<f64> = (0..grid.cells())
        .map(|_| rng.random_range(0..=20) as f64)
        .collect();
    WeightedCellCounts::new(grid, a, b).unwrap()
}

fn random_tensor(
    grid: GridSpec,
    categories: usize,
    max_n: u64,
    rng: &mut ChaCha8Rng,
) -> CountTensor {
    let names: Vec<String> = (0..categories).map(|k| format!("k{k:02}")).collect();
    let n: Vec<Vec<Vec<u64>>> = (0..categories)
        .map(|_| {
            (0..grid.recency_levels)
                .map(|_| {
                    (0..grid.frequency_levels)
                        .map(|_| rng.random_range(5..=max_n))
                        .collect()
                })
                .collect()
        })
        .collect();
    let q: Vec<Vec<Vec<u64>>> = n
        .iter()
        .map(|m| {
            m.iter()
                .map(|row| {
                    row.iter()
                        .map(|&nn| {
                            let rate = 0.05 + 0.8 * rng.random::<f64>();
                            let mean = nn as f64 * rate;
                            (mean.round() as u64).min(nn)
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    CountTensor::new(grid, names, n, q).unwrap()
}

/// The planted model used by criteria 4 and 5: four parallel tables with a
/// multiplicative convex-concave bump, per-cell class gap 0.18 everywhere,
/// and the 15/9/13/19 split of 56 categories.
struct Planted {
    tables: Vec<ProbabilityTable>,
    assignment: Vec<usize>,
    categories: Vec<String>,
    pi: [f64; 4],
}

fn planted_four_class() -> Planted {
    let grid = GridSpec::new(6, 4).unwrap();
    let (ni, nj) = (grid.recency_levels, grid.frequency_levels);
    let tables: Vec<ProbabilityTable> = (0..4)
        .map(|s| {
            let values = (1..=ni)
                .map(|i| {
                    (1..=nj)
                        .map(|j| {
                            let convex = ((i - 1) as f64 / (ni - 1) as f64).powi(2);
                            let concave = (j as f64 / nj as f64).sqrt();
                            0.02 + 0.18 * s as f64 + 0.38 * convex * concave
                        })
                        .collect()
                })
                .collect();
            ProbabilityTable::new(grid, EPSILON, ShapeTag::Mcc, values).unwrap()
        })
        .collect();
    // class sizes 15, 9, 13, 19 of 56 categories
    let counts = [15usize, 9, 13, 19];
    let mut assignment = Vec::new();
    for (s, &c) in counts.iter().enumerate() {
        assignment.extend(std::iter::repeat_n(s, c));
    }
    // interleave deterministically so class is not a function of category index
    let mut rng = ChaCha8Rng::seed_from_u64(561);
    for idx in (1..assignment.len()).rev() {
        let other = rng.random_range(0..=idx);
        assignment.swap(idx, other);
    }
    let categories: Vec<String> = (0..56).map(|k| format!("cat{k:02}")).collect();
    Planted {
        tables,
        assignment,
        categories,
        pi: [15.0 / 56.0, 9.0 / 56.0, 13.0 / 56.0, 19.0 / 56.0],
    }
}

fn best_permutation_matches(
    predicted: &[usize],
    truth: &[usize],
    classes: usize,
) -> (usize, Vec<usize>) {
    fn permutations(k: usize) -> Vec<Vec<usize>> {
        if k == 1 {
            return vec![vec![0]];
        }
        let mut out = Vec::new();
        for shorter in permutations(k - 1) {
            for pos in 0..k {
                let mut p = shorter.clone();
                p.insert(pos, k - 1);
                out.push(p);
            }
        }
        out
    }
    let mut best = (0usize, Vec::new());
    for perm in permutations(classes) {
        let matches = predicted
            .iter()
            .zip(truth)
            .filter(|&(&p, &t)| perm[p] == t)
            .count();
        if matches > best.0 {
            best = (matches, perm);
        }
    }
    best
}

fn hard_assignment(model: &LatentClassModel) -> Vec<usize> {
    model
        .memberships
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .max_by(|(_, a), (_, b)| a.total_cmp(b))
                .map(|(s, _)| s)
                .unwrap()
        })
        .collect()
}

#[test]
fn criterion_1_solver_oracle_equivalence() {
    let start = Instant::now();
    let config = SolverConfig::default();
    let shapes = [(1, 1), (2, 1), (1, 2), (2, 2), (3, 1), (1, 3)];
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let mut checked = 0usize;
    for (ni, nj) in shapes {
        let grid = GridSpec::new(ni, nj).unwrap();
        for instance in 0..200 {
            let counts = random_integer_counts(grid, &mut rng);
            for mode in [ShapeMode::Monotone, ShapeMode::Mcc] {
                let fitted = match mode {
                    ShapeMode::Monotone => fit_monotone(&counts, &config).unwrap(),
                    ShapeMode::Mcc => fit_mcc(&counts, &config).unwrap(),
                };
                assert_feasible(
                    &fitted,
                    Some(mode),
                    &format!("{ni}x{nj} #{instance} {mode:?}"),
                );
                let (_, oracle_obj) = oracle_fit(&counts, mode, 0.01, config.epsilon).unwrap();
                let solver_obj = objective_value(&fitted, &counts).unwrap();
                assert!(
                    solver_obj >= oracle_obj - 1e-3,
                    "{ni}x{nj} #{instance} {mode:?}: solver {solver_obj} < oracle {oracle_obj} - 1e-3"
                );
                checked += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 60, "took {elapsed:?}, budget is 60 s");
    println!(
        "acceptance 1 (solver-oracle equivalence, {checked} fits in {:.1} s): PASS",
        elapsed.as_secs_f64()
    );
}

#[test]
fn criterion_2_feasibility_of_all_fitted_tables() {
    let config = SolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2002);
    let mut tables_checked = 0usize;

    // single-table fits across grid sizes, including the full default grid
    for (ni, nj) in [(1, 1), (3, 2), (4, 4), (8, 5), (24, 16)] {
        let grid = GridSpec::new(ni, nj).unwrap();
        let counts = random_integer_counts(grid, &mut rng);
        let mono = fit_monotone(&counts, &config).unwrap();
        assert_feasible(&mono, Some(ShapeMode::Monotone), "criterion 2 mono");
        let mcc = fit_mcc(&counts, &config).unwrap();
        assert_feasible(&mcc, Some(ShapeMode::Mcc), "criterion 2 mcc");
        tables_checked += 2;
    }

    // mixture fits: every class table must be feasible
    let grid = GridSpec::new(4, 3).unwrap();
    for round in 0..3 {
        let tensor = random_tensor(grid, 12, 60, &mut rng);
        let mut em_config = EmConfig::new(3);
        em_config.restarts = 3;
        em_config.seed = round;
        let fit = em_fit(&tensor, &em_config).unwrap();
        for table in &fit.model.tables {
            assert_feasible(table, Some(ShapeMode::Mcc), "criterion 2 lcmcc");
            tables_checked += 1;
        }
        // logistic tables carry no shape tag; the box bound still applies
        let lclr = lclr_em_fit(&tensor, &em_config).unwrap();
        for table in &lclr.model.tables {
            assert_feasible(table, None, "criterion 2 lclr");
            tables_checked += 1;
        }
    }
    println!("acceptance 2 (feasibility, {tables_checked} tables at slack 1e-9, eps 1e-5): PASS");
}

#[test]
fn criterion_3_em_ascent_on_random_tensors() {
    let start = Instant::now();
    let grid = GridSpec::new(3, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3003);
    let mut chains = 0usize;
    for round in 0..50u64 {
        let tensor = random_tensor(grid, 20, 50, &mut rng);
        for classes in [2usize, 4] {
            let mut config = EmConfig::new(classes);
            config.restarts = 2;
            config.seed = round;
            config.max_em_iterations = 6;

            let lcmcc = em_fit(&tensor, &config).unwrap();
            let lclr = lclr_em_fit(&tensor, &config).unwrap();
            for (label, traces) in [
                ("lcmcc", &lcmcc.diagnostics.traces),
                ("lclr", &lclr.diagnostics.traces),
            ] {
                for trace in traces {
                    chains += 1;
                    for w in trace.windows(2) {
                        assert!(
                            w[1] >= w[0] - 1e-6,
                            "{label} round {round} |S|={classes}: decreasing trace {trace:?}"
                        );
                    }
                }
            }
        }
    }
    println!(
        "acceptance 3 (EM ascent, {chains} chains within 1e-6 in {:.1} s): PASS",
        start.elapsed().as_secs_f64()
    );
}

#[test]
fn criterion_4_planted_class_recovery() {
    let start = Instant::now();
    let planted = planted_four_class();
    let (tensor, truth) = generate_planted_tensor(
        &planted.tables,
        &planted.assignment,
        &planted.categories,
        &ExposurePlan::Uniform(60),
        4004,
    )
    .unwrap();
    for (s, want) in planted.pi.iter().enumerate() {
        assert!((truth.pi[s] - want).abs() < 1e-12);
    }

    let mut config = EmConfig::new(4);
    config.restarts = 10;
    config.max_em_iterations = 10;
    config.seed = 44;
    let fit = em_fit(&tensor, &config).unwrap();
    fit.model.validate(1e-9).unwrap();
    for table in &fit.model.tables {
        assert_feasible(table, Some(ShapeMode::Mcc), "criterion 4");
    }

    let predicted = hard_assignment(&fit.model);
    let (matches, perm) = best_permutation_matches(&predicted, &planted.assignment, 4);
    let rate = matches as f64 / planted.assignment.len() as f64;
    assert!(
        rate >= 0.95,
        "recovered only {matches}/56 assignments ({rate:.3})"
    );
    // estimated class sizes within +-0.05 of the planted proportions,
    // compared through the same permutation
    for (fit_class, &true_class) in perm.iter().enumerate() {
        let diff = (fit.model.pi[fit_class] - planted.pi[true_class]).abs();
        assert!(
            diff <= 0.05,
            "pi[{fit_class}] = {} vs planted {} (diff {diff:.4})",
            fit.model.pi[fit_class],
            planted.pi[true_class]
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 300, "took {elapsed:?}, budget is 5 min");
    println!(
        "acceptance 4 (planted recovery, {matches}/56 assignments, pi within 0.05, {:.1} s): PASS",
        elapsed.as_secs_f64()
    );
}

/// Heterogeneous planted classes for the ordering criterion. Two classes are
/// `base +- h` where `h` is a centered recency-frequency interaction: `h` is
/// orthogonal to {1, i, j}, so logistic surfaces cannot tell the pair apart
/// (their log-likelihood difference vanishes for any coefficients) although
/// the tables differ by 0.21 at the grid corners. The other two classes are a
/// flat high-base table and a sharp late spike. Cell-wise likelihoods
/// separate all four cleanly.
fn planted_heterogeneous() -> Planted {
    let grid = GridSpec::new(12, 8).unwrap();
    let (ni, nj) = (grid.recency_levels, grid.frequency_levels);
    let lin_i = move |i: usize| (i - 1) as f64 / (ni - 1) as f64;
    let lin_j = move |j: usize| (j - 1) as f64 / (nj - 1) as f64;
    let spike = move |i: usize| ((i - 1) as f64 / (ni - 1) as f64).powi(4);
    let early = move |j: usize| {
        let f = (j - 1) as f64 / (nj - 1) as f64;
        1.0 - (1.0 - f) * (1.0 - f)
    };
    let pow_j = move |j: usize| (j as f64 / nj as f64).powf(0.7);
    let base = move |i: usize, j: usize| {
        0.13 + 0.22 * lin_i(i) + 0.22 * lin_j(j) + 0.10 * spike(i) * early(j)
    };
    let inter = move |i: usize, j: usize| 0.0055 * (i as f64 - 6.5) * (j as f64 - 4.5);
    let surfaces: [Box<dyn Fn(usize, usize) -> f64>; 4] = [
        Box::new(move |i, j| base(i, j) + inter(i, j)),
        Box::new(move |i, j| base(i, j) - inter(i, j)),
        Box::new(move |i, j| 0.20 + 0.06 * lin_i(i) + 0.03 * early(j)),
        Box::new(move |i, j| 0.004 + 0.55 * spike(i) * pow_j(j)),
    ];
    let tables: Vec<ProbabilityTable> = surfaces
        .iter()
        .map(|surface| {
            let values = (1..=ni)
                .map(|i| (1..=nj).map(|j| surface(i, j)).collect())
                .collect();
            ProbabilityTable::new(grid, EPSILON, ShapeTag::Mcc, values).unwrap()
        })
        .collect();
    let assignment: Vec<usize> = (0..56).map(|k| k % 4).collect();
    let categories: Vec<String> = (0..56).map(|k| format!("cat{k:02}")).collect();
    Planted {
        tables,
        assignment,
        categories,
        pi: [14.0 / 56.0; 4],
    }
}

#[test]
fn criterion_5_qualitative_model_ordering() {
    let planted = planted_heterogeneous();
    let (tensor, _) = generate_planted_tensor(
        &planted.tables,
        &planted.assignment,
        &planted.categories,
        &ExposurePlan::Uniform(60),
        5005,
    )
    .unwrap();

    let solver = SolverConfig::default();
    let mut config = EmConfig::new(4);
    config.restarts = 10;
    config.max_em_iterations = 10;
    config.seed = 55;

    let lcmcc = em_fit(&tensor, &config).unwrap();
    let lclr = lclr_em_fit(&tensor, &config).unwrap();
    let pooled = fit_mcc(&WeightedCellCounts::from_tensor(&tensor), &solver).unwrap();
    let mcc1 = LatentClassModel {
        pi: vec![1.0],
        tables: vec![pooled],
        memberships: vec![vec![1.0]; planted.categories.len()],
        final_log_likelihood: 0.0,
    };

    let scorers = [
        ModelScorer::from_model(&lcmcc.model, &planted.categories).unwrap(),
        ModelScorer::from_model(&mcc1, &planted.categories).unwrap(),
        ModelScorer::from_model(&lclr.model, &planted.categories).unwrap(),
    ];

    // ten independently generated test sets, one per base date; frequency
    // levels drawn with a realistic skew toward single views
    let mut samples = Vec::new();
    for day in 0..10u64 {
        let mut sample_config = PlantedSampleConfig::new(
            NaiveDate::from_ymd_opt(2015, 10, day as u32 + 1).unwrap(),
            120,
            40,
        );
        sample_config.frequency_weights =
            Some(vec![1.0, 0.5, 0.25, 0.12, 0.06, 0.03, 0.015, 0.008]);
        sample_config.seed = 9000 + day;
        samples.extend(
            generate_planted_samples(
                &planted.tables,
                &planted.assignment,
                &planted.categories,
                &sample_config,
            )
            .unwrap(),
        );
    }

    let f1_series: Vec<Vec<f64>> = scorers
        .iter()
        .map(|scorer| {
            let report = run_evaluation(scorer, &samples, &[3]).unwrap();
            assert_eq!(
                report.per_base_date.len(),
                10,
                "a test set lost its purchases"
            );
            report
                .per_base_date
                .iter()
                .map(|r| r.by_n[0].mean_f1)
                .collect()
        })
        .collect();

    let margin = |better: &[f64], worse: &[f64], label: &str| -> (f64, f64) {
        let diffs: Vec<f64> = better.iter().zip(worse).map(|(a, b)| a - b).collect();
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (diffs.len() - 1) as f64;
        let se = (var / diffs.len() as f64).sqrt();
        assert!(
            mean > se,
            "{label}: mean F1 margin {mean:.4} does not exceed its standard error {se:.4}; diffs {diffs:?}"
        );
        (mean, se)
    };
    let (m1, se1) = margin(&f1_series[0], &f1_series[1], "LCMCC(4) vs MCC(1)");
    let (m2, se2) = margin(&f1_series[0], &f1_series[2], "LCMCC(4) vs LCLR(4)");
    println!(
        "acceptance 5 (ordering: LCMCC(4) beats MCC(1) by {m1:.4} (se {se1:.4}) and LCLR(4) by {m2:.4} (se {se2:.4})): PASS"
    );
}

#[test]
fn criterion_6_feature_level_formulas() {
    let pairs: [(usize, &str); 6] = [
        (24, "viewr"),
        (12, "sesr"),
        (24, "dayr"),
        (16, "viewf"),
        (8, "sesf"),
        (8, "dayf"),
    ];
    for (levels, _) in pairs.iter().take(3) {
        for m in 1..=200u64 {
            let want = (*levels as i64 + 1 - m as i64).max(1) as usize;
            assert_eq!(recency_level(m, *levels), want);
        }
    }
    for (levels, _) in pairs.iter().skip(3) {
        for n in 1..=200u64 {
            let want = (n as usize).min(*levels);
            assert_eq!(frequency_level(n, *levels), want);
        }
    }
    println!("acceptance 6 (feature formulas, all m, n <= 200 on all six thresholds): PASS");
}

#[test]
fn criterion_7_posterior_coefficient_invariance() {
    let grid = GridSpec::new(2, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7007);
    let ln_choose = |n: u64, q: u64| -> f64 {
        (1..=q)
            .map(|t| (((n - q + t) as f64) / t as f64).ln())
            .sum()
    };
    let mut entries = 0usize;
    for _ in 0..20 {
        let tensor = random_tensor(grid, 6, 25, &mut rng);
        let classes = rng.random_range(2..=3);
        let tables: Vec<ProbabilityTable> = (0..classes)
            .map(|_| {
                let lo = 0.05 + 0.4 * rng.random::<f64>();
                let hi = lo + 0.3 * rng.random::<f64>();
                let values = (1..=2)
                    .map(|i| {
                        (1..=2)
                            .map(|j| lo + (hi - lo) * ((i + j - 2) as f64 / 2.0))
                            .collect()
                    })
                    .collect();
                ProbabilityTable::new(grid, EPSILON, ShapeTag::Mcc, values).unwrap()
            })
            .collect();
        let raw: Vec<f64> = (0..classes).map(|_| 0.2 + rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let pi: Vec<f64> = raw.into_iter().map(|v| v / total).collect();

        let omitted = posterior_memberships(&tensor, &pi, &tables);
        // recompute with the full binomial pmf, coefficients included
        for (k, row) in omitted.iter().enumerate() {
            let scores: Vec<f64> = tables
                .iter()
                .zip(&pi)
                .map(|(table, p)| {
                    let mut ll = p.ln();
                    for i in 1..=2 {
                        for j in 1..=2 {
                            let n = tensor.n(k, i, j);
                            let q = tensor.q(k, i, j);
                            let x = table.value(i, j);
                            ll += ln_choose(n, q)
                                + q as f64 * x.ln()
                                + (n - q) as f64 * (1.0 - x).ln();
                        }
                    }
                    ll
                })
                .collect();
            let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
            let norm: f64 = weights.iter().sum();
            for (z_omitted, w) in row.iter().zip(&weights) {
                assert!(
                    (z_omitted - w / norm).abs() < 1e-12,
                    "posterior differs: {z_omitted} vs {}",
                    w / norm
                );
                entries += 1;
            }
        }
    }
    println!(
        "acceptance 7 (posterior coefficient-invariance, {entries} entries within 1e-12): PASS"
    );
}

#[test]
fn criterion_8_metric_examples_and_tie_breaks() {
    // prf1 tagged examples, exact
    let selected: BTreeSet<&str> = ["a", "b"].into();
    let purchased: BTreeSet<&str> = ["a"].into();
    let m = prf1(&selected, &purchased).unwrap();
    assert_eq!(m.recall, 1.0);
    assert_eq!(m.precision, 0.5);
    assert_eq!(m.f1, 2.0 * 1.0 * 0.5 / 1.5);

    let same: BTreeSet<&str> = ["a", "b"].into();
    let m = prf1(&same, &same).unwrap();
    assert_eq!((m.recall, m.precision, m.f1), (1.0, 1.0, 1.0));

    let missed: BTreeSet<&str> = ["c"].into();
    let m = prf1(&missed, &purchased).unwrap();
    assert_eq!((m.recall, m.precision, m.f1), (0.0, 0.0, 0.0));

    assert!(prf1(&selected, &BTreeSet::new()).is_none());

    // average precision tagged examples, exact
    assert_eq!(average_precision(&[true]), Some(1.0));
    assert_eq!(average_precision(&[false, true]), Some(0.5));
    assert_eq!(
        average_precision(&[true, false, true]),
        Some((1.0 + 2.0 / 3.0) / 2.0)
    );

    // top-N honors the view-frequency tie-break, then the id tie-break
    let pair = |id: &str, score: f64, frequency: usize| ScoredPair {
        customer_id: "c".into(),
        product_id: id.into(),
        score,
        frequency,
        purchased: false,
    };
    let pairs = vec![pair("x", 0.4, 2), pair("y", 0.4, 5), pair("z", 0.9, 1)];
    let top = select_top_n(&pairs, 2);
    assert_eq!(top[0].product_id, "z");
    assert_eq!(
        top[1].product_id, "y",
        "frequency 5 must beat frequency 2 on tied scores"
    );
    let tied = vec![pair("b", 0.4, 3), pair("a", 0.4, 3)];
    let top = select_top_n(&tied, 1);
    assert_eq!(
        top[0].product_id, "a",
        "residual ties resolve by ascending product id"
    );

    // fewer viewed products than N: all are selected
    assert_eq!(select_top_n(&pairs, 10).len(), 3);

    println!("acceptance 8 (metric examples and ViewF tie-break): PASS");
}

// --- criterion 9: byte-identical CLI artifacts across reruns and thread counts ---

struct StageRun {
    dir: tempfile::TempDir,
}

fn run_cli(args: &[&str], threads: usize) -> StageRun {
    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_clickchoice"))
        .args(["--threads", &threads.to_string()])
        .args(args)
        .current_dir(dir.path())
        .env("CLICKCHOICE_LOG", "error")
        .status()
        .unwrap();
    assert!(status.success(), "clickchoice {args:?} failed");
    StageRun { dir }
}

fn file_bytes(run: &StageRun, name: &str) -> Vec<u8> {
    std::fs::read(run.dir.path().join(name)).unwrap()
}

fn assert_runs_identical(args: &[&str], files: &[&str], stage: &str) {
    let runs = [
        run_cli(args, 1),
        run_cli(args, 1),
        run_cli(args, 4),
        run_cli(args, 4),
    ];
    for name in files {
        let reference = file_bytes(&runs[0], name);
        assert!(!reference.is_empty(), "{stage}: {name} is empty");
        for (idx, run) in runs.iter().enumerate().skip(1) {
            assert_eq!(
                reference,
                file_bytes(run, name),
                "{stage}: {name} differs between run 0 and run {idx}"
            );
        }
    }
}

#[test]
fn criterion_9_cli_determinism_across_threads() {
    let shared = tempfile::tempdir().unwrap();
    let shared_path = |name: &str| shared.path().join(name).display().to_string();

    // a small planted profile drives the whole pipeline
    let planted = planted_four_class();
    let profile = serde_json::json!({
        "start_date": "2015-09-01",
        "days": 16,
        "customers": 20,
        "products_per_category": 2,
        "class_of_category": [0, 1, 2, 3],
        "class_tables": planted.tables,
        "daily_view_prob": 0.3,
        "max_views_per_burst": 2,
        "lookback_days": 7
    });
    std::fs::write(
        shared.path().join("profile.json"),
        serde_json::to_string(&profile).unwrap(),
    )
    .unwrap();

    let profile_arg = shared_path("profile.json");
    assert_runs_identical(
        &[
            "simulate",
            "--profile",
            &profile_arg,
            "--seed",
            "3",
            "--out",
            "events.jsonl",
            "--truth",
            "truth.json",
        ],
        &["events.jsonl", "truth.json"],
        "simulate",
    );

    // shared inputs for the downstream stages
    let seeded = run_cli(
        &[
            "simulate",
            "--profile",
            &profile_arg,
            "--seed",
            "3",
            "--out",
            "events.jsonl",
            "--truth",
            "truth.json",
        ],
        2,
    );
    std::fs::copy(
        seeded.dir.path().join("events.jsonl"),
        shared.path().join("events.jsonl"),
    )
    .unwrap();

    let events_arg = shared_path("events.jsonl");
    let features_args = [
        "features",
        "--events",
        &events_arg,
        "--base-dates",
        "2015-09-08..2015-09-12",
        "--recency",
        "dayr",
        "--frequency",
        "viewf",
        "--recency-levels",
        "6",
        "--frequency-levels",
        "4",
        "--lookback-days",
        "7",
        "--outlier-frac",
        "0",
        "--seed",
        "9",
        "--out",
        "feat",
    ];
    assert_runs_identical(
        &features_args,
        &[
            "feat/samples.jsonl",
            "feat/tensor.json",
            "feat/summary.json",
        ],
        "features",
    );

    let featured = run_cli(&features_args, 2);
    for name in ["tensor.json", "samples.jsonl"] {
        std::fs::copy(
            featured.dir.path().join("feat").join(name),
            shared.path().join(name),
        )
        .unwrap();
    }

    let tensor_arg = shared_path("tensor.json");
    for model in ["mcc", "lcmcc", "lclr"] {
        let fit_args = [
            "fit",
            "--model",
            model,
            "--tensor",
            &tensor_arg,
            "--out",
            "model.json",
            "--classes",
            "2",
            "--restarts",
            "3",
            "--max-iter",
            "5",
            "--seed",
            "11",
        ];
        assert_runs_identical(&fit_args, &["model.json"], &format!("fit {model}"));
    }

    let fitted = run_cli(
        &[
            "fit",
            "--model",
            "lcmcc",
            "--tensor",
            &tensor_arg,
            "--out",
            "model.json",
            "--classes",
            "2",
            "--restarts",
            "3",
            "--max-iter",
            "5",
            "--seed",
            "11",
        ],
        2,
    );
    std::fs::copy(
        fitted.dir.path().join("model.json"),
        shared.path().join("model.json"),
    )
    .unwrap();

    let model_arg = shared_path("model.json");
    let samples_arg = shared_path("samples.jsonl");
    let evaluate_args = [
        "evaluate",
        "--model",
        &model_arg,
        "--samples",
        &samples_arg,
        "--top-n",
        "3,5",
        "--out",
        "report.json",
        "--emit-plots",
        "plots",
    ];
    assert_runs_identical(
        &evaluate_args,
        &["report.json", "plots/f1_by_n.csv", "plots/map.csv"],
        "evaluate",
    );

    let evaluated = run_cli(&evaluate_args, 2);
    std::fs::copy(
        evaluated.dir.path().join("report.json"),
        shared.path().join("report.json"),
    )
    .unwrap();

    let report_arg = shared_path("report.json");
    assert_runs_identical(
        &[
            "report",
            "--model",
            &model_arg,
            "--out",
            "profiles.json",
            "--eval",
            &report_arg,
            "--plots-dir",
            "plots",
        ],
        &[
            "profiles.json",
            "plots/f1_summary.csv",
            "plots/map_summary.csv",
        ],
        "report",
    );

    println!("acceptance 9 (byte-identical artifacts across reruns and --threads 1/4): PASS");
}
