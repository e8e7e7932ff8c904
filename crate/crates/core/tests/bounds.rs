#[path = "common/bound_oracle.rs"]
mod oracle;

use dml_core::bounds::{
    empirical_bound_inputs, theorem1_bound, theorem1_report, theorem2_bound, theorem2_terms,
    Regime, Theorem1Inputs, Theorem2Inputs, VACUOUS,
};
use dml_core::error::DmlError;
use dml_core::model::{make_folds, Dgp, DiscreteDgp, Label};
use dml_core::nuisance::{cross_fit, RegressionMethod, RieszMethod, TargetRecipe};
use dml_core::scores::{orthogonal_score, MomentFunctional};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn formulas_match_the_re_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    oracle::check_agreement(&mut rng, 50, 1e-12).unwrap();
}

#[test]
fn monotone_in_the_stated_directions() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    oracle::check_monotonicity(&mut rng, 200).unwrap();
}

#[test]
fn growth_schedule_drives_the_total_down() {
    let totals: Vec<f64> = (10..=40)
        .step_by(2)
        .map(|k| {
            theorem1_bound(&oracle::growth_schedule(2f64.powi(k)), Regime::HeavyTailQ)
                .unwrap()
                .total
        })
        .collect();
    assert!(totals.windows(2).all(|w| w[1] < w[0]), "{totals:?}");
    assert!(*totals.last().unwrap() < 1e-3, "{totals:?}");
}

#[test]
fn regimes_are_ordered() {
    let t = Theorem1Inputs::default();
    let heavy = theorem1_bound(&t, Regime::HeavyTailQ).unwrap().term_a;
    let sub = theorem1_bound(&t, Regime::SubGaussian).unwrap().term_a;
    let bounded = theorem1_bound(&t, Regime::Bounded).unwrap().term_a;
    assert!(bounded < sub && bounded < heavy);
}

#[test]
fn exact_nuisances_zero_the_product_term() {
    let t = Theorem1Inputs {
        r_gamma: 0.0,
        r_alpha: 0.3,
        ..Default::default()
    };
    let b = theorem1_bound(&t, Regime::Bounded).unwrap();
    assert_eq!(b.delta_2n, 0.0);
}

#[test]
fn huge_constants_are_vacuous() {
    let mut t = Theorem1Inputs::default();
    t.constants.c_q = 1e6;
    let report = theorem1_report(&t, Regime::HeavyTailQ).unwrap();
    assert!(report.total >= 1.0);
    assert!(report.warnings.iter().any(|w| w == VACUOUS));
}

#[test]
fn invalid_inputs_name_the_field() {
    let t = Theorem1Inputs {
        q: 2.0,
        ..Default::default()
    };
    match theorem1_bound(&t, Regime::HeavyTailQ) {
        Err(DmlError::Validation(m)) => assert!(m.contains('q'), "{m}"),
        other => panic!("{other:?}"),
    }
    let t = Theorem2Inputs {
        big_a_n: 10.0,
        ..Default::default()
    };
    match theorem2_terms(&t) {
        Err(DmlError::Validation(m)) => assert!(m.contains("A_n"), "{m}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn theorem2_report_matches_terms() {
    let t = Theorem2Inputs::default();
    let terms = theorem2_terms(&t).unwrap();
    let report = theorem2_bound(&t).unwrap();
    assert_eq!(report.total, terms.total);
    assert_eq!(report.term("r_1n"), Some(terms.r_1n));
    assert_eq!(report.theorem, 2);
}

fn exact_recipes(dgp: &DiscreteDgp, fs: &[MomentFunctional]) -> Vec<TargetRecipe> {
    fs.iter()
        .map(|f| TargetRecipe {
            regression: RegressionMethod::Fixed(dgp.regression(f.outcome_kind()).unwrap()),
            riesz: RieszMethod::Fixed(dgp.riesz(f).unwrap()),
            clip_bound: f64::INFINITY,
        })
        .collect()
}

fn oracle_score(
    dgp: &DiscreteDgp,
    fs: &[MomentFunctional],
    n: usize,
) -> (
    dml_core::nuisance::NuisanceFitSet,
    dml_core::scores::ScoreMatrix,
) {
    let data = dgp.generate(n, 1).unwrap();
    let plan = make_folds(n, 2, 2).unwrap();
    let fits = cross_fit(&data, &plan, fs, &exact_recipes(dgp, fs)).unwrap();
    let columns = fs
        .iter()
        .map(|f| {
            let g = dgp.regression(f.outcome_kind()).unwrap();
            let a = dgp.riesz(f).unwrap();
            let theta = dgp.theta(f).unwrap();
            (0..n)
                .map(|i| {
                    orthogonal_score(
                        f,
                        data.d(i),
                        data.x(i),
                        f.outcome_kind().apply(data.y(i)),
                        theta,
                        g.as_ref(),
                        a.as_ref(),
                    )
                    .unwrap()
                })
                .collect()
        })
        .collect();
    let score = dml_core::scores::ScoreMatrix::from_columns(
        columns,
        fs.iter().map(|f| f.describe()).collect(),
        false,
    )
    .unwrap();
    (fits, score)
}

#[test]
fn measured_inputs_under_exact_fits() {
    let dgp = DiscreteDgp::confounded_binary();
    let fs = [MomentFunctional::ManyTreatments {
        treated: Label(1),
        control: Label(0),
    }];
    let (fits, score) = oracle_score(&dgp, &fs, 400);
    let m = empirical_bound_inputs(&dgp, &fs, &fits, &score, 4.0).unwrap();
    assert_eq!((m.r_gamma, m.r_alpha), (0.0, 0.0));
    assert_eq!(m.lambda_min, 1.0);
    let sd = dgp.oracle_covariance(&fs).unwrap()[(0, 0)].sqrt();
    assert!((m.sigma_min - sd).abs() < 1e-12);
    assert!(m.warnings.is_empty());
}

#[test]
fn duplicate_targets_are_singular() {
    let dgp = DiscreteDgp::confounded_binary();
    let f = MomentFunctional::ManyTreatments {
        treated: Label(1),
        control: Label(0),
    };
    let fs = [f.clone(), f];
    let (fits, score) = oracle_score(&dgp, &fs, 300);
    let m = empirical_bound_inputs(&dgp, &fs, &fits, &score, 4.0).unwrap();
    assert_eq!(m.lambda_min, 0.0);
    assert!(
        m.warnings.iter().any(|w| w.contains("singular")),
        "{:?}",
        m.warnings
    );
    // a singular correlation has no finite Gaussian approximation term
    let t = m.apply(Theorem1Inputs::default());
    assert!(theorem1_bound(&t, Regime::Bounded).is_err());
}
