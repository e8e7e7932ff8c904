use std::sync::Arc;

use dml_core::error::DmlError;
use dml_core::inference::estimate_targets;
use dml_core::model::{make_folds, Dataset, Dgp, DiscreteDgp, Label, OutcomeKind};
use dml_core::nuisance::{
    cross_fit, fit_regression_rows, riesz_automatic, riesz_automatic_rows, riesz_plugin_for,
    Dictionary, RegressionMethod, RieszMethod, TargetRecipe,
};
use dml_core::scores::{IdentityFunctional, MomentFunctional, PolicyRule};
use proptest::prelude::*;

/// Empirical `P_n(D = d | X = x)` over the support cells.
fn frequencies(
    data: &Dataset,
    rows: &[usize],
) -> impl Fn(Label, &[f64]) -> f64 + Send + Sync + 'static {
    let mut table: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let labels = data.labels().len();
    for &i in rows {
        let x = data.x(i).to_vec();
        let slot = match table.iter().position(|(c, _)| *c == x) {
            Some(s) => s,
            None => {
                table.push((x, vec![0.0; labels]));
                table.len() - 1
            }
        };
        table[slot].1[data.d(i).0] += 1.0;
    }
    move |d: Label, x: &[f64]| {
        let (_, counts) = table
            .iter()
            .find(|(c, _)| c.as_slice() == x)
            .expect("cell seen in training");
        counts[d.0] / counts.iter().sum::<f64>()
    }
}

#[test]
fn automatic_matches_plugin_on_a_saturated_dictionary() {
    let cases = [
        (
            DiscreteDgp::confounded_binary(),
            MomentFunctional::ManyTreatments {
                treated: Label(1),
                control: Label(0),
            },
        ),
        (
            DiscreteDgp::confounded_binary(),
            MomentFunctional::PolicyValue {
                policy: PolicyRule::Threshold {
                    covariate: 0,
                    threshold: 0.5,
                    above: true,
                },
                treated: Label(1),
                control: Label(0),
            },
        ),
        (
            DiscreteDgp::three_arm(),
            MomentFunctional::ManyTreatments {
                treated: Label(2),
                control: Label(0),
            },
        ),
    ];
    for (dgp, f) in cases {
        let data = dgp.generate(3000, 17).unwrap();
        let dict = Arc::new(Dictionary::saturated(dgp.cells(), dgp.labels().len()));
        let auto = riesz_automatic(&data, &f, &dict, 0.0, 1e9).unwrap();
        let plugin = riesz_plugin_for(
            Arc::new(frequencies(&data, &(0..data.n()).collect::<Vec<_>>())),
            &f,
            1e9,
        )
        .unwrap();
        for x in dgp.cells() {
            for d in 0..dgp.labels().len() {
                let (a, b) = (auto.predict(Label(d), x), plugin.predict(Label(d), x));
                assert!(
                    (a - b).abs() <= 1e-8,
                    "{} at d={d} x={x:?}: {a} vs {b}",
                    f.describe()
                );
            }
        }
    }
}

#[test]
fn identity_functional_has_unit_representer() {
    let dgp = DiscreteDgp::three_arm();
    let data = dgp.generate(500, 3).unwrap();
    for dict in [
        Dictionary::constant(),
        Dictionary::saturated(dgp.cells(), 3),
    ] {
        let fit = riesz_automatic(&data, &IdentityFunctional, &Arc::new(dict), 0.0, 100.0).unwrap();
        for x in dgp.cells() {
            for d in 0..3 {
                assert!((fit.predict(Label(d), x) - 1.0).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn fold_fits_use_the_complement() {
    let dgp = DiscreteDgp::confounded_binary();
    let data = dgp.generate(600, 9).unwrap();
    let plan = make_folds(600, 2, 10).unwrap();
    let f = MomentFunctional::ManyTreatments {
        treated: Label(1),
        control: Label(0),
    };
    let dict = Arc::new(Dictionary::saturated(dgp.cells(), 2));
    let recipe = TargetRecipe {
        regression: RegressionMethod::Ridge {
            dictionary: dict.clone(),
            ridge: Some(1e-4),
        },
        riesz: RieszMethod::Automatic {
            dictionary: dict.clone(),
            ridge: Some(1e-4),
        },
        clip_bound: 50.0,
    };
    let fits = cross_fit(&data, &plan, std::slice::from_ref(&f), &[recipe]).unwrap();
    for fold in 0..2 {
        let rows = plan.complement(fold);
        assert_eq!(fits.folds()[fold].train_rows(), rows.as_slice());
        let g =
            fit_regression_rows(&data, &rows, OutcomeKind::Column(0), &dict, Some(1e-4)).unwrap();
        let a = riesz_automatic_rows(&data, &rows, &f, &dict, Some(1e-4), 50.0).unwrap();
        let fit = fits.target(fold, 0);
        for x in dgp.cells() {
            for d in [Label(0), Label(1)] {
                assert_eq!(fit.regression.predict(d, x), g.predict(d, x));
                assert_eq!(fit.riesz.predict(d, x), a.predict(d, x));
            }
        }
    }
    fits.audit(&plan).unwrap();
}

#[test]
fn tampered_provenance_fails_the_audit() {
    let dgp = DiscreteDgp::confounded_binary();
    let data = dgp.generate(300, 4).unwrap();
    let plan = make_folds(300, 3, 5).unwrap();
    let f = MomentFunctional::ManyTreatments {
        treated: Label(1),
        control: Label(0),
    };
    let recipe = TargetRecipe {
        regression: RegressionMethod::Fixed(dgp.regression(f.outcome_kind()).unwrap()),
        riesz: RieszMethod::Fixed(dgp.riesz(&f).unwrap()),
        clip_bound: f64::INFINITY,
    };
    let mut fits = cross_fit(&data, &plan, std::slice::from_ref(&f), &[recipe]).unwrap();
    let mut leaked = plan.complement(1);
    leaked.push(plan.members(1)[0]);
    fits.overwrite_provenance(1, leaked);
    assert!(matches!(fits.audit(&plan), Err(DmlError::Audit(_))));
    assert!(matches!(
        estimate_targets(&data, &[f], &fits, &plan),
        Err(DmlError::Audit(_))
    ));
}

#[test]
fn pooled_plan_trains_on_all_rows() {
    let dgp = DiscreteDgp::confounded_binary();
    let data = dgp.generate(200, 1).unwrap();
    let plan = dml_core::model::FoldPlan::pooled(200).unwrap();
    let f = MomentFunctional::ManyTreatments {
        treated: Label(1),
        control: Label(0),
    };
    let dict = Arc::new(Dictionary::saturated(dgp.cells(), 2));
    let recipe = TargetRecipe {
        regression: RegressionMethod::Ridge {
            dictionary: dict.clone(),
            ridge: Some(0.0),
        },
        riesz: RieszMethod::Automatic {
            dictionary: dict,
            ridge: Some(0.0),
        },
        clip_bound: 100.0,
    };
    let fits = cross_fit(&data, &plan, &[f], &[recipe]).unwrap();
    assert_eq!(fits.folds()[0].train_rows().len(), 200);
    fits.audit(&plan).unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn representer_respects_its_clip(seed in 0u64..1000, bound in 0.5f64..5.0) {
        let dgp = DiscreteDgp::rare_outcome();
        let data = dgp.generate(200, seed).unwrap();
        let f = MomentFunctional::ManyTreatments { treated: Label(1), control: Label(0) };
        let fit = riesz_automatic(&data, &f, &Arc::new(Dictionary::saturated(dgp.cells(), 2)), 1e-3, bound).unwrap();
        for x in dgp.cells() {
            for d in [Label(0), Label(1)] {
                prop_assert!(fit.predict(d, x).abs() <= bound);
            }
        }
    }

    #[test]
    fn fixed_methods_reproduce_the_truth(seed in 0u64..1000, folds in 2usize..6) {
        let dgp = DiscreteDgp::three_arm();
        let data = dgp.generate(120, seed).unwrap();
        let plan = make_folds(120, folds, seed + 1).unwrap();
        let f = MomentFunctional::ManyTreatments { treated: Label(2), control: Label(1) };
        let g0 = dgp.regression(f.outcome_kind()).unwrap();
        let a0 = dgp.riesz(&f).unwrap();
        let recipe = TargetRecipe {
            regression: RegressionMethod::Fixed(g0.clone()),
            riesz: RieszMethod::Fixed(a0.clone()),
            clip_bound: f64::INFINITY,
        };
        let fits = cross_fit(&data, &plan, &[f], &[recipe]).unwrap();
        for fold in 0..folds {
            let t = fits.target(fold, 0);
            for x in dgp.cells() {
                for d in 0..3 {
                    prop_assert_eq!(t.regression.predict(Label(d), x), g0.eval(Label(d), x));
                    prop_assert_eq!(t.riesz.predict(Label(d), x), a0.eval(Label(d), x));
                }
            }
        }
    }
}
