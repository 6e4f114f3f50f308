//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::fs;
use std::path::Path;
use std::time::Instant;

use heatalloc::io::{read_dataset, write_dataset};
use heatalloc_core::domain::Method;
use heatalloc_core::estimator::{default_grid, lcurve, lcurve_select, solve_rls, NormalEquations, SamplingMatrix};
use heatalloc_core::linalg::Matrix;
use heatalloc_core::metrics::{allocation_errors, fractions, global_indicators, global_uncertainty, Subsets};
use heatalloc_core::pipeline::{self, calibrate, LambdaPolicy};
use heatalloc_core::sensitivity::{sensitivity_suite, Axis, SensitivityOptions};
use heatalloc_core::simulator::{simulate_season, NoiseSpec, ScenarioConfig};
use heatalloc_core::uncertainty::{monte_carlo_check, PropagationCase, UncertaintyConfig};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::{Config, TestError, TestRunner};

struct Outcome {
    pass: bool,
    summary: String,
    details: Vec<String>,
}

impl Outcome {
    fn new(pass: bool, summary: impl Into<String>) -> Self {
        Self {
            pass,
            summary: summary.into(),
            details: Vec::new(),
        }
    }
}

fn draw<S: Strategy>(s: &S, runner: &mut TestRunner) -> S::Value {
    s.new_tree(runner).expect("strategy draws").current()
}

fn matrix(m: usize, k: usize, a: &[f64], q: &[f64]) -> SamplingMatrix {
    SamplingMatrix::unlabelled(Matrix::from_row_major(m, k, a.to_vec()).unwrap(), q.to_vec()).unwrap()
}

type System = (usize, usize, Vec<f64>, Vec<f64>, Vec<f64>);

fn system(max_m: usize, max_k: usize) -> impl Strategy<Value = System> {
    (1..=max_m, 1..=max_k).prop_flat_map(|(m, k)| {
        (
            Just(m),
            Just(k),
            prop::collection::vec(0.0f64..5.0, m * k),
            prop::collection::vec(0.0f64..100.0, m),
            prop::collection::vec(0.1f64..3.0, k),
        )
    })
}

fn inf_rel(est: &[f64], truth: &[f64]) -> f64 {
    let d = est.iter().zip(truth).map(|(e, t)| (e - t).abs()).fold(0.0, f64::max);
    d / truth.iter().map(|t| t.abs()).fold(0.0, f64::max)
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn exact_recovery() -> Outcome {
    let t0 = Instant::now();
    let (d, truth) = simulate_season(&ScenarioConfig::exact(20, 30.0, 1)).unwrap();
    let mut worst = Vec::new();
    for m in [Method::Hca, Method::Stv] {
        let cal = calibrate(&d, m, &LambdaPolicy::Fixed(1e-8)).unwrap();
        worst.push((m, inf_rel(&cal.estimate.theta_hat_watts(), truth.theta(m))));
    }
    let secs = t0.elapsed().as_secs_f64();
    let deviates = truth.deviation.iter().all(|x| (x - 1.0).abs() > 1e-3);
    let pass = deviates && worst.iter().all(|(_, e)| *e <= 1e-6) && secs <= 10.0;
    Outcome::new(
        pass,
        format!(
            "max relative error hca {:.1e}, stv {:.1e} (limit 1e-6), {secs:.2} s (limit 10 s)",
            worst[0].1, worst[1].1
        ),
    )
}

fn solver_correctness() -> Outcome {
    let mut runner = TestRunner::deterministic();
    let strat = system(50, 50);
    let mut worst_residual = 0.0f64;
    let mut worst_prior = 0.0f64;
    for _ in 0..1000 {
        let (m, k, a, q, t0) = draw(&strat, &mut runner);
        let lambda = draw(&(-6.0f64..3.0), &mut runner).exp2();
        let sm = matrix(m, k, &a, &q);
        let ne = NormalEquations::new(&sm);
        let th = ne.theta(&t0, lambda).unwrap();
        worst_residual = worst_residual.max(ne.relative_residual(&th, &t0, lambda));
        let big = solve_rls(&sm, &t0, 1e12).unwrap();
        for (e, p) in big.theta_hat.iter().zip(&t0) {
            worst_prior = worst_prior.max((e - p).abs() / p.abs().max(1.0));
        }
    }
    // Least squares on well-conditioned tall systems, against a QR oracle.
    let tall = (1usize..=20).prop_flat_map(|k| {
        let m = 2 * k + 3;
        (
            Just(m),
            Just(k),
            prop::collection::vec(0.1f64..5.0, m * k),
            prop::collection::vec(0.0f64..100.0, m),
        )
    });
    let (mut worst_ols, mut n_ols) = (0.0f64, 0);
    while n_ols < 200 {
        let (m, k, a, q) = draw(&tall, &mut runner);
        let am = DMatrix::from_row_slice(m, k, &a);
        let sv = am.clone().svd(false, false).singular_values;
        if sv.max() / sv.min() > 1e3 {
            continue;
        }
        n_ols += 1;
        let r = solve_rls(&matrix(m, k, &a, &q), &vec![0.0; k], 0.0).unwrap();
        let qr = am.qr();
        let ols = qr.r().solve_upper_triangular(&(qr.q().transpose() * DVector::from_vec(q))).unwrap();
        for (e, o) in r.theta_hat.iter().zip(ols.iter()) {
            worst_ols = worst_ols.max((e - o).abs() / o.abs().max(1.0));
        }
    }
    let pass = worst_residual <= 1e-8 && worst_prior <= 1e-6 && worst_ols <= 1e-8;
    Outcome::new(
        pass,
        format!(
            "1000 systems: residual {worst_residual:.1e} (limit 1e-8); lambda=1e12 prior gap {worst_prior:.1e} \
             (limit 1e-6); lambda=0 vs OLS {worst_ols:.1e} over {n_ols} systems (limit 1e-8)"
        ),
    )
}

fn path_monotonicity() -> Outcome {
    let mut runner = TestRunner::deterministic();
    let strat = system(30, 20);
    let grid = default_grid();
    let mut violations = 0;
    for _ in 0..100 {
        let (m, k, a, q, t0) = draw(&strat, &mut runner);
        let pts = lcurve(&matrix(m, k, &a, &q), &t0, &grid).unwrap();
        for w in pts.windows(2) {
            let res_ok = w[1].residual_norm >= w[0].residual_norm * (1.0 - 1e-12);
            let dev_ok = w[1].prior_deviation_norm <= w[0].prior_deviation_norm * (1.0 + 1e-12) + 1e-300;
            if !(res_ok && dev_ok) {
                violations += 1;
            }
        }
    }
    Outcome::new(
        violations == 0,
        format!("100 systems x {} grid points, {violations} monotonicity violations", grid.len()),
    )
}

/// Collinear positive sampling matrix with a known parameter vector and
/// noisy totals.
fn ill_posed() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
    (6usize..=12, 0usize..=8).prop_flat_map(|(k, extra)| {
        let m = k + 4 + extra;
        (
            Just(m),
            Just(k),
            prop::collection::vec(1.0f64..3.0, m),
            prop::collection::vec(0.5f64..1.5, k),
            prop::collection::vec(-1.0f64..1.0, m * k),
            prop::collection::vec(0.5f64..2.0, k),
            prop::collection::vec(-0.4f64..0.4, k),
            prop::collection::vec(-1.0f64..1.0, m),
        )
            .prop_map(|(m, k, rows, cols, jitter, prior, dev, noise)| {
                let a: Vec<f64> = (0..m * k)
                    .map(|i| rows[i / k] * (cols[i % k] + 0.02 * jitter[i]))
                    .collect();
                let theta: Vec<f64> = prior.iter().zip(&dev).map(|(p, d)| p * (1.0 + d)).collect();
                let exact: Vec<f64> = (0..m)
                    .map(|i| (0..k).map(|j| a[i * k + j] * theta[j]).sum())
                    .collect();
                let scale = 0.01 * exact.iter().sum::<f64>() / m as f64;
                let q = exact.iter().zip(&noise).map(|(e, n)| e + scale * n).collect();
                (m, k, a, q, prior, theta)
            })
    })
}

fn lcurve_quality() -> Outcome {
    let mut runner = TestRunner::deterministic();
    let strat = ill_posed();
    let grid = default_grid();
    let (mut good, mut degenerate) = (0, 0);
    let mut ratios = Vec::new();
    for _ in 0..50 {
        let (m, k, a, q, prior, theta) = draw(&strat, &mut runner);
        let sm = matrix(m, k, &a, &q);
        let errs: Vec<f64> = grid
            .iter()
            .map(|&l| l2(&solve_rls(&sm, &prior, l).unwrap().theta_hat, &theta))
            .collect();
        let best = errs.iter().copied().fold(f64::INFINITY, f64::min);
        match lcurve_select(&sm, &prior, &grid) {
            Ok((l, _)) => {
                let e = l2(&solve_rls(&sm, &prior, l).unwrap().theta_hat, &theta);
                ratios.push(e / best);
                if e <= 2.0 * best {
                    good += 1;
                }
            }
            Err(_) => degenerate += 1,
        }
    }
    let mut r = ratios.clone();
    let med = if r.is_empty() { f64::NAN } else { median(&mut r) };
    Outcome::new(
        good * 10 >= 50 * 9,
        format!(
            "{good}/50 within 2x of the grid optimum (need 45), {degenerate} without a corner, median ratio {med:.2}"
        ),
    )
}

fn table_consistency() -> Outcome {
    let a = global_uncertainty(0.70, 0.18);
    let b = global_uncertainty(0.21, 0.08);
    Outcome::new(
        (a - 0.73).abs() <= 0.01 && (b - 0.22).abs() <= 0.01,
        format!("u_G(0.70, 0.18) = {a:.4} vs 0.73; u_G(0.21, 0.08) = {b:.4} vs 0.22 (tolerance 0.01)"),
    )
}

fn off_design(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        noise: NoiseSpec::MODERATE,
        seed,
        ..ScenarioConfig::default()
    }
}

fn loss_trend() -> Outcome {
    let levels = [0.0, 0.05, 0.1, 0.2];
    let opts = SensitivityOptions::default();
    let mut monotone = 0;
    let mut details = Vec::new();
    for seed in 1..=10 {
        let rows = sensitivity_suite(&off_design(seed), Axis::HeatLoss, &levels, &opts).unwrap();
        let mape: Vec<f64> = rows.iter().map(|r| r.indicators.mape).collect();
        let ok = mape.windows(2).all(|w| w[1] >= w[0]);
        monotone += ok as usize;
        details.push(format!(
            "seed {seed:2}: MAPE {} {}",
            mape.iter().map(|m| format!("{m:6.3}")).collect::<Vec<_>>().join(" "),
            if ok { "" } else { "(not monotone)" }
        ));
    }
    let mut o = Outcome::new(
        monotone >= 8,
        format!("{monotone}/10 seeds with non-decreasing MAPE over losses 0, 5, 10, 20 % (need 8)"),
    );
    o.details = details;
    o
}

/// Improved over nominal allocator MAPE per seed.
fn improvement_ratios(radiator_tau_s: f64) -> Vec<f64> {
    let grid = default_grid();
    let policy = LambdaPolicy::LCurve {
        fallback: grid.first().copied(),
        grid,
    };
    let ucfg = UncertaintyConfig::default();
    (1..=20)
        .map(|seed| {
            let mut c = off_design(100 + seed);
            c.thermal.radiator_tau_s = radiator_tau_s;
            let (d, truth) = simulate_season(&c).unwrap();
            let ids: Vec<String> = d.radiators.iter().map(|r| r.id.clone()).collect();
            let reference = pipeline::exact_reference(ids.clone(), truth.radiator_totals());
            let cmp = pipeline::compare(&d, &reference, &Subsets::per_radiator(&ids), &policy, &[Method::Hca], &ucfg)
                .unwrap();
            cmp.reports[1].indicators.mape / cmp.reports[0].indicators.mape
        })
        .collect()
}

fn fmt_dist(v: &[f64]) -> String {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ")
}

fn improvement() -> Outcome {
    let mut lag_free = improvement_ratios(0.0);
    let mut lagged = improvement_ratios(ScenarioConfig::default().thermal.radiator_tau_s);
    let med = median(&mut lag_free);
    let med_lagged = median(&mut lagged);
    let mut o = Outcome::new(
        med <= 0.8,
        format!("median improved/nominal MAPE {med:.3} over 20 off-design seeds (limit 0.8)"),
    );
    o.details = vec![
        format!("distribution: {}", fmt_dist(&lag_free)),
        format!(
            "with a 1800 s radiator time constant (not gated): median {med_lagged:.3}, {}",
            fmt_dist(&lagged)
        ),
    ];
    o
}

fn uncertainty_oracle() -> Outcome {
    let cases: Vec<(PropagationCase, f64)> = vec![
        (
            PropagationCase::ReferenceEnergy {
                q_ref: 120.0,
                rel_flow: 0.01,
                rel_dt: 0.004,
                rel_rho: 0.001,
                rel_cp: 0.001,
                correction_kwh: 2.0,
            },
            3.0,
        ),
        (PropagationCase::HcaUnits { count: 850, u_d: 0.05 }, 3.0),
        (
            PropagationCase::EstimatedEnergy {
                q_rad: 300.0,
                u_h: 0.01,
                u_k: 0.02 / 3f64.sqrt(),
                u_p: 0.01,
            },
            3.0,
        ),
        (
            PropagationCase::Fraction {
                x: vec![100.0, 120.0, 90.0, 110.0, 80.0],
                u_x: vec![3.0, 3.6, 2.7, 3.3, 2.4],
                subset: 1,
            },
            3.0,
        ),
        (
            PropagationCase::Fraction {
                x: vec![900.0, 20.0, 30.0, 50.0],
                u_x: vec![27.0, 1.0, 1.5, 2.5],
                subset: 0,
            },
            5.0,
        ),
        (
            PropagationCase::AllocationError {
                u_f_ref: 0.08,
                u_f_x: 0.15,
            },
            3.0,
        ),
    ];
    let mut pass = true;
    let mut details = Vec::new();
    for (case, k) in &cases {
        let r = monte_carlo_check(case, 100_000, 2024).unwrap();
        let ok = r.agrees_within(*k);
        pass &= ok;
        details.push(format!(
            "{:<18} analytic {:.6e} empirical {:.6e} z {:+.2} (limit {k}) {}",
            case.name(),
            r.analytic,
            r.empirical,
            r.z_score,
            if ok { "ok" } else { "off" }
        ));
    }
    let mut o = Outcome::new(pass, format!("{} propagations at 1e5 draws", cases.len()));
    o.details = details;
    o
}

fn note<T: std::fmt::Debug>(failures: &mut Vec<String>, name: &str, r: Result<(), TestError<T>>) {
    if let Err(e) = r {
        failures.push(format!("{name}: {e}"));
    }
}

fn metric_identities() -> Outcome {
    let pair = (2usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(0.01f64..1e4, n),
            prop::collection::vec(0.01f64..1e4, n),
        )
    });
    let scaled = (pair.clone(), 1e-3f64..1e3, 1e-3f64..1e3);
    let mut runner = TestRunner::new(Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    });
    let mut failures = Vec::new();
    note(
        &mut failures,
        "fraction sum",
        runner.run(&pair, |(x, _)| {
            let s: f64 = fractions(&x).unwrap().iter().sum();
            prop_assert!((s - 100.0).abs() <= 1e-9);
            Ok(())
        }),
    );
    note(
        &mut failures,
        "error sum",
        runner.run(&pair, |(x, r)| {
            let e = allocation_errors(&fractions(&x).unwrap(), &fractions(&r).unwrap()).unwrap();
            prop_assert!(e.iter().sum::<f64>().abs() <= 1e-9);
            Ok(())
        }),
    );
    let mut scale_runner = TestRunner::new(Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    });
    let scale = scale_runner.run(&scaled, |((x, r), c, d)| {
        let ind = |x: &[f64], r: &[f64]| {
            let fr = fractions(r).unwrap();
            let e = allocation_errors(&fractions(x).unwrap(), &fr).unwrap();
            global_indicators(&e, &fr, Some(&e)).unwrap()
        };
        let a = ind(&x, &r);
        let xs: Vec<f64> = x.iter().map(|v| v * c).collect();
        let rs: Vec<f64> = r.iter().map(|v| v * d).collect();
        let b = ind(&xs, &rs);
        for (u, v) in [(a.sigma, b.sigma), (a.max, b.max), (a.min, b.min), (a.mape, b.mape)] {
            prop_assert!((u - v).abs() <= 1e-9 * u.abs().max(1.0));
        }
        prop_assert_eq!(a.delta_e_hca, b.delta_e_hca);
        prop_assert_eq!(a.p_l, b.p_l);
        Ok(())
    });
    note(&mut failures, "scale invariance", scale);
    note(
        &mut failures,
        "self baseline",
        runner.run(&pair, |(x, r)| {
            let fr = fractions(&r).unwrap();
            let e = allocation_errors(&fractions(&x).unwrap(), &fr).unwrap();
            let g = global_indicators(&e, &fr, Some(&e)).unwrap();
            prop_assert_eq!(g.delta_e_hca, Some(0.0));
            prop_assert_eq!(g.p_l, Some(0.0));
            Ok(())
        }),
    );
    let mut o = Outcome::new(
        failures.is_empty(),
        "fraction sums, error sums, scale invariance, self baseline: 1000 cases each",
    );
    o.details = failures;
    o
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let c = off_design(77);
    let tmp = std::env::temp_dir().join(format!("heatalloc-acceptance-{}", std::process::id()));
    let (a, b, r) = (tmp.join("a"), tmp.join("b"), tmp.join("r"));
    let (d1, _) = simulate_season(&c).unwrap();
    let (d2, _) = simulate_season(&c).unwrap();
    write_dataset(&a, &d1, Some(c.sampling_frequency)).unwrap();
    write_dataset(&b, &d2, Some(c.sampling_frequency)).unwrap();
    let same_seed = dir_bytes(&a) == dir_bytes(&b);
    let back = read_dataset(&a).unwrap();
    write_dataset(&r, &back, Some(c.sampling_frequency)).unwrap();
    let reemit = dir_bytes(&a) == dir_bytes(&r);
    let worst = d1
        .total_energy_per_period
        .iter()
        .zip(&back.total_energy_per_period)
        .map(|(x, y)| (x - y).abs() / x.abs().max(1e-300))
        .fold(0.0, f64::max);
    let _ = fs::remove_dir_all(&tmp);
    Outcome::new(
        same_seed && reemit && worst <= 1e-9,
        format!(
            "same seed byte-identical: {same_seed}; re-emit byte-identical: {reemit}; \
             period totals after ingest within {worst:.1e}"
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("exact recovery", exact_recovery),
        ("solver correctness", solver_correctness),
        ("Tikhonov path monotonicity", path_monotonicity),
        ("L-curve quality", lcurve_quality),
        ("indicator table consistency", table_consistency),
        ("heat-loss trend", loss_trend),
        ("improvement over nominal allocator", improvement),
        ("uncertainty vs Monte Carlo", uncertainty_oracle),
        ("metric identities", metric_identities),
        ("determinism and round trip", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let o = f();
        failed += !o.pass as usize;
        println!(
            "{} {:>2} {name}: {} [{:.1} s]",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.summary,
            t0.elapsed().as_secs_f64()
        );
        for d in &o.details {
            println!("        {d}");
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
