//! Desk-scale acceptance suite. Each test prints one PASS/FAIL line to the
//! real stdout (not the captured one) and then asserts.

#[path = "common/normal_oracle.rs"]
mod normal;
#[path = "common/bound_oracle.rs"]
mod oracle;

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use dml_core::bounds::Regime;
use dml_core::inference::{
    sup_t_critical_value, CorrelationEstimate, Sided, DEFAULT_CORRELATION_RIDGE,
};
use dml_core::model::{Dgp, DiscreteDgp, Label, NoiseKind, SharedFn};
use dml_core::montecarlo::{
    bound_vs_empirical, decomposition_audit, run_coverage, AlphaPerturbation, CriticalSpec,
    DgpSpec, Exec, ExperimentSpec, Mode, NuisanceSpec, TargetSpec,
};
use dml_core::nuisance::Dictionary;
use dml_core::scores::{
    check_orthogonality, double_robustness_residual, MomentFunctional, PolicyRule,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(criterion: u32, name: &str, failures: &[String], started: Instant) {
    let mut out = std::io::stdout().lock();
    let status = if failures.is_empty() { "PASS" } else { "FAIL" };
    let detail = if failures.is_empty() {
        String::new()
    } else {
        format!(": {}", failures.join("; "))
    };
    let _ = writeln!(
        out,
        "criterion {criterion} ({name}): {status} [{:.1?}]{detail}",
        started.elapsed()
    );
    assert!(
        failures.is_empty(),
        "criterion {criterion} failed: {failures:?}"
    );
}

fn note(line: String) {
    let _ = writeln!(std::io::stdout().lock(), "    {line}");
}

fn ate() -> MomentFunctional {
    MomentFunctional::ManyTreatments {
        treated: Label(1),
        control: Label(0),
    }
}

fn binary_functionals() -> Vec<MomentFunctional> {
    vec![
        ate(),
        MomentFunctional::PolicyValue {
            policy: PolicyRule::Threshold {
                covariate: 0,
                threshold: 0.5,
                above: true,
            },
            treated: Label(1),
            control: Label(0),
        },
        MomentFunctional::CdfAtPoint {
            arm: Label(1),
            outcome: 0,
            threshold: 1.0,
        },
    ]
}

/// A direction given by one value per (support cell, label).
fn table_fn(dgp: &DiscreteDgp, values: Vec<f64>) -> SharedFn {
    let cells = dgp.cells().to_vec();
    let labels = dgp.labels().len();
    Arc::new(move |d: Label, x: &[f64]| {
        let c = cells
            .iter()
            .position(|cell| cell.as_slice() == x)
            .expect("support point");
        values[c * labels + d.0]
    })
}

fn base(dgp: DgpSpec, mode: Mode) -> ExperimentSpec {
    ExperimentSpec {
        dgp,
        n: 2000,
        targets: TargetSpec::Contrasts {
            treated: Label(1),
            control: Label(0),
        },
        nuisance: NuisanceSpec::default(),
        folds: 5,
        level: 0.95,
        replications: 1000,
        master_seed: 20261014,
        mode,
        draws: 20_000,
        gaussian_draws: 100_000,
        critical_value: CriticalSpec::Sampled,
        sided: Sided::TwoSided,
    }
}

#[test]
fn criterion_1_exact_identities() {
    let started = Instant::now();
    let mut failures = Vec::new();
    let dgp = DiscreteDgp::confounded_binary();
    let cells = dgp.cells().len() * dgp.labels().len();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let fs = binary_functionals();

    let mut worst = 0.0f64;
    for f in &fs {
        for _ in 0..50 {
            let dg = table_fn(
                &dgp,
                (0..cells).map(|_| rng.random_range(-2.0..2.0)).collect(),
            );
            let da = table_fn(
                &dgp,
                (0..cells).map(|_| rng.random_range(-2.0..2.0)).collect(),
            );
            let (g, a) = check_orthogonality(&dgp, f, dg.as_ref(), da.as_ref(), 1e-3).unwrap();
            worst = worst.max(g.abs()).max(a.abs());
        }
    }
    note(format!("orthogonality: max |derivative| = {worst:e}"));
    if worst > 1e-8 {
        failures.push(format!("orthogonality derivative {worst:e} > 1e-8"));
    }

    let mut worst = 0.0f64;
    for k in 0..100 {
        let f = &fs[k % fs.len()];
        let g0 = dgp.regression(f.outcome_kind()).unwrap();
        let a0 = dgp.riesz(f).unwrap();
        let tg = table_fn(
            &dgp,
            (0..cells).map(|_| rng.random_range(-1.0..1.0)).collect(),
        );
        let ta = table_fn(
            &dgp,
            (0..cells).map(|_| rng.random_range(-3.0..3.0)).collect(),
        );
        let gamma = move |d: Label, x: &[f64]| g0.eval(d, x) + tg.eval(d, x);
        let alpha = move |d: Label, x: &[f64]| a0.eval(d, x) + ta.eval(d, x);
        let (lhs, rhs) = double_robustness_residual(&dgp, f, &gamma, &alpha).unwrap();
        worst = worst.max((lhs - rhs).abs());
    }
    note(format!(
        "double robustness: max |lhs - rhs| = {worst:e} over 100 perturbations"
    ));
    if worst > 1e-10 {
        failures.push(format!("double robustness gap {worst:e} > 1e-10"));
    }

    let dict = Dictionary::saturated(dgp.cells(), dgp.labels().len());
    let mut worst = 0.0f64;
    for f in &fs {
        let a0 = dgp.riesz(f).unwrap();
        for term in dict.terms() {
            let lhs = dgp
                .expectation(|_, _, x| f.evaluate(x, term).unwrap())
                .unwrap();
            let rhs = dgp
                .expectation(|_, d, x| a0.eval(d, x) * term.eval(d, x))
                .unwrap();
            worst = worst.max((lhs - rhs).abs());
        }
    }
    note(format!(
        "riesz identity: max gap = {worst:e} over {} dictionary terms",
        dict.terms().len()
    ));
    if worst > 1e-10 {
        failures.push(format!("riesz identity gap {worst:e} > 1e-10"));
    }

    for (label, nuisance) in [
        ("oracle", NuisanceSpec::Oracle),
        ("cross-fit", NuisanceSpec::default()),
    ] {
        let spec = ExperimentSpec {
            dgp: DgpSpec::ConfoundedBinary,
            targets: TargetSpec::Explicit {
                functionals: fs.clone(),
            },
            nuisance,
            replications: 200,
            ..base(DgpSpec::ConfoundedBinary, Mode::DecompositionAudit)
        };
        match decomposition_audit(&spec, &Exec::default()) {
            Ok(r) => {
                note(format!(
                    "decomposition ({label}): max scaled residual = {:e} over {} replications",
                    r.max_residual_scaled,
                    r.rows.len()
                ));
                if r.max_residual_scaled > 1e-10 || r.rows.len() + r.failed != 200 {
                    failures.push(format!(
                        "{label} decomposition residual {:e}",
                        r.max_residual_scaled
                    ));
                }
            }
            Err(e) => failures.push(format!("{label} decomposition audit: {e}")),
        }
    }
    verdict(1, "exact identities", &failures, started);
}

fn corr(m: DMatrix<f64>) -> CorrelationEstimate {
    CorrelationEstimate::from_matrix(m, DEFAULT_CORRELATION_RIDGE).unwrap()
}

#[test]
fn criterion_2_critical_values() {
    let started = Instant::now();
    let mut failures = Vec::new();
    let draws = 1_000_000;
    let c1 = sup_t_critical_value(
        &corr(DMatrix::identity(1, 1)),
        0.95,
        draws,
        1,
        Sided::TwoSided,
    )
    .unwrap();
    note(format!(
        "p=1: {c1:.5} (exact {:.5})",
        normal::quantile(0.975)
    ));
    if (c1 - 1.95996).abs() > 0.01 {
        failures.push(format!("p=1 critical value {c1}"));
    }
    let want = normal::independent_two_sided(2, 0.95);
    let c2 = sup_t_critical_value(
        &corr(DMatrix::identity(2, 2)),
        0.95,
        draws,
        2,
        Sided::TwoSided,
    )
    .unwrap();
    note(format!("p=2 independent: {c2:.5} (bisection {want:.5})"));
    if (want - 2.2365).abs() > 1e-3 || (c2 - want).abs() > 0.01 {
        failures.push(format!("p=2 critical value {c2} vs {want}"));
    }
    let c100 = sup_t_critical_value(
        &corr(DMatrix::from_element(100, 100, 1.0)),
        0.95,
        draws,
        3,
        Sided::TwoSided,
    )
    .unwrap();
    note(format!("p=100 perfectly correlated: {c100:.5}"));
    if (c100 - c1).abs() > 0.02 {
        failures.push(format!("p=100 correlated {c100} vs p=1 {c1}"));
    }
    verdict(2, "critical values", &failures, started);
}

#[test]
fn criterion_3_coverage() {
    let started = Instant::now();
    let mut failures = Vec::new();

    let a = ExperimentSpec {
        nuisance: NuisanceSpec::Oracle,
        replications: 2000,
        draws: 100_000,
        ..base(DgpSpec::ConfoundedBinary, Mode::Coverage)
    };
    let r = run_coverage(&a, &Exec::default()).unwrap();
    let (lo, hi) = (0.94 - 2.0 * r.mc_se, 0.96 + 2.0 * r.mc_se);
    note(format!(
        "(a) oracle p=1: coverage {:.4} (se {:.4}), window [{lo:.4}, {hi:.4}]",
        r.joint_coverage, r.mc_se
    ));
    if !(lo..=hi).contains(&r.joint_coverage) {
        failures.push(format!(
            "(a) coverage {} outside [{lo}, {hi}]",
            r.joint_coverage
        ));
    }

    let b = base(
        DgpSpec::IndependentOutcomes {
            p: 50,
            noise: NoiseKind::Gaussian,
        },
        Mode::Coverage,
    );
    let r = run_coverage(&b, &Exec::default()).unwrap();
    note(format!(
        "(b) p=50 cross-fit: coverage {:.4} (se {:.4}, failed {}, mean critical value {:.3})",
        r.joint_coverage, r.mc_se, r.failed, r.mean_critical_value
    ));
    if r.joint_coverage < 0.92 {
        failures.push(format!("(b) coverage {} < 0.92", r.joint_coverage));
    }

    let grid: Vec<f64> = (0..20).map(|k| -3.5 + 8.0 * k as f64 / 19.0).collect();
    let c = ExperimentSpec {
        targets: TargetSpec::Cdf {
            arm: Label(1),
            outcome: 0,
            grid,
        },
        replications: 500,
        ..base(
            DgpSpec::IndependentOutcomes {
                p: 1,
                noise: NoiseKind::Logistic,
            },
            Mode::Coverage,
        )
    };
    let r = run_coverage(&c, &Exec::default()).unwrap();
    note(format!(
        "(c) CDF band, 20 points: coverage {:.4} (se {:.4}, failed {})",
        r.joint_coverage, r.mc_se, r.failed
    ));
    if r.joint_coverage < 0.92 {
        failures.push(format!("(c) coverage {} < 0.92", r.joint_coverage));
    }
    verdict(3, "coverage", &failures, started);
}

#[test]
fn criterion_4_ks_trend() {
    let started = Instant::now();
    let ks = |n: usize, seed: u64| {
        let spec = ExperimentSpec {
            n,
            replications: 2000,
            master_seed: seed,
            draws: 1000,
            gaussian_draws: 100_000,
            sided: Sided::OneSided,
            ..base(DgpSpec::RareOutcome, Mode::Ks)
        };
        bound_vs_empirical(&spec, &Exec::default(), None)
            .unwrap()
            .ks
    };
    let mut wins = 0;
    for seed in 1..=5 {
        let (small, large) = (ks(200, seed), ks(2000, seed));
        note(format!(
            "seed {seed}: KS at n=200 {small:.4}, at n=2000 {large:.4}"
        ));
        if large < small {
            wins += 1;
        }
    }
    let failures = if wins >= 4 {
        vec![]
    } else {
        vec![format!("KS decreased in only {wins} of 5 seeds")]
    };
    verdict(4, "KS trend", &failures, started);
}

#[test]
fn criterion_5_double_robustness_rate() {
    let started = Instant::now();
    let spec = ExperimentSpec {
        nuisance: NuisanceSpec::Perturbed {
            gamma_shift: 0.0,
            alpha: AlphaPerturbation::Constant { value: 1.0 },
        },
        ..base(DgpSpec::ConfoundedBinary, Mode::Ks)
    };
    let r = bound_vs_empirical(&spec, &Exec::default(), None).unwrap();
    // two-sided sup-t with one target is sqrt(n)|theta_hat - theta_0| / sigma_oracle
    let mean = r.sup_t.iter().sum::<f64>() / r.sup_t.len() as f64;
    let sigma = DiscreteDgp::confounded_binary()
        .oracle_covariance(&[ate()])
        .unwrap()[(0, 0)]
        .sqrt();
    let n = spec.n as f64;
    note(format!(
        "mean |theta_hat - theta_0| = {:.5}, limit 3 sigma/sqrt(n) = {:.5} over {} replications",
        mean * sigma / n.sqrt(),
        3.0 * sigma / n.sqrt(),
        r.sup_t.len()
    ));
    let failures = if r.sup_t.len() == 1000 && mean <= 3.0 {
        vec![]
    } else {
        vec![format!("scaled mean error {mean} > 3")]
    };
    verdict(5, "double-robustness rate", &failures, started);
}

#[test]
fn criterion_6_bound_calculators() {
    let started = Instant::now();
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    if let Err(e) = oracle::check_agreement(&mut rng, 50, 1e-12) {
        failures.push(e);
    }
    if let Err(e) = oracle::check_monotonicity(&mut rng, 200) {
        failures.push(e);
    }
    let totals: Vec<f64> = (10..=40)
        .step_by(2)
        .map(|k| {
            dml_core::bounds::theorem1_bound(
                &oracle::growth_schedule(2f64.powi(k)),
                Regime::HeavyTailQ,
            )
            .unwrap()
            .total
        })
        .collect();
    let last = *totals.last().unwrap();
    note(format!(
        "schedule total at n=2^10: {:.3e}, at n=2^40: {last:.3e}",
        totals[0]
    ));
    if !totals.windows(2).all(|w| w[1] < w[0]) || last >= 1e-3 {
        failures.push(format!("growth schedule totals {totals:?}"));
    }
    verdict(6, "bound calculators", &failures, started);
}

fn results_block(path: &Path) -> String {
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    serde_json::to_string(&v["results"]).unwrap()
}

#[test]
fn criterion_7_determinism() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let configs = [
        ("simulate-coverage", "[simulate]\ndgp = { name = \"independent_outcomes\", p = 4, noise = \"gaussian\" }\nn = 400\nreplications = 40\nmaster_seed = 3\ndraws = 5000\ntargets = { kind = \"contrasts\" }\n"),
        ("simulate-ks", "[simulate]\ndgp = { name = \"rare_outcome\" }\nmode = \"ks\"\nn = 300\nreplications = 60\nmaster_seed = 4\ndraws = 2000\ngaussian_draws = 5000\ntargets = { kind = \"contrasts\" }\n"),
        ("simulate-audit", "[simulate]\ndgp = { name = \"three_arm\" }\nmode = \"decomposition_audit\"\nn = 300\nreplications = 30\nmaster_seed = 5\ntargets = { kind = \"contrasts\", treated = 2 }\n"),
        ("bands", "command = \"bands\"\ndraws = 20000\nseed = 9\n[dgp]\nmodel = { name = \"independent_outcomes\", p = 6, noise = \"gaussian\" }\nn = 800\n"),
        ("cdf-bands", "command = \"cdf-bands\"\ndraws = 20000\nseed = 10\ntargets = { kind = \"cdf\", arm = 1, grid = [-2.0, -1.0, 0.0, 1.0, 2.0, 3.0] }\n[dgp]\nmodel = { name = \"independent_outcomes\", p = 1, noise = \"logistic\" }\nn = 800\n"),
    ];
    let mut failures = Vec::new();
    for (name, text) in configs {
        std::fs::write(dir.path().join(format!("{name}.toml")), text).unwrap();
        let mut blocks = Vec::new();
        for workers in ["1", "8", "8"] {
            let out_name = format!("{name}-{workers}.json");
            let out = Command::new(env!("CARGO_BIN_EXE_dml"))
                .current_dir(dir.path())
                .args([
                    name.split('-')
                        .next()
                        .filter(|_| name.starts_with("simulate"))
                        .unwrap_or(name),
                    "--config",
                    &format!("{name}.toml"),
                    "--workers",
                    workers,
                    "--out",
                    &out_name,
                ])
                .output()
                .expect("binary runs");
            if out.status.code() != Some(0) {
                failures.push(format!(
                    "{name} with {workers} workers: {}",
                    String::from_utf8_lossy(&out.stderr).trim()
                ));
                break;
            }
            blocks.push(results_block(&dir.path().join(&out_name)));
        }
        if blocks.len() == 3 && blocks.windows(2).all(|w| w[0] == w[1]) {
            note(format!(
                "{name}: identical results blocks ({} bytes)",
                blocks[0].len()
            ));
        } else if blocks.len() == 3 {
            failures.push(format!("{name}: results differ across worker counts"));
        }
    }
    verdict(7, "determinism", &failures, started);
}
