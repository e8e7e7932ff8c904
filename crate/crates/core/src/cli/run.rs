use std::fmt;
use std::time::Instant;

use super::config::{BoundConfig, Command, RunConfig, Theorem};
use super::report::{EstimateResults, Report, Results, Timing, SCHEMA_VERSION};
use crate::bounds::{theorem1_report, theorem2_bound};
use crate::error::DmlError;
use crate::inference::{
    build_bands, estimate_cdf_band, estimate_correlation, estimate_targets,
    DEFAULT_CORRELATION_RIDGE,
};
use crate::model::{load_csv, make_folds, Dataset, Dgp, FoldPlan};
use crate::montecarlo::{
    bound_vs_empirical, decomposition_audit, run_coverage, write_sample_csv, BoundChoice, Exec,
    Mode, TargetSpec,
};
use crate::nuisance::cross_fit;
use crate::rng::{derive_seed, tag};
use crate::scores::MomentFunctional;

/// Pipeline step an error came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Ingestion,
    Nuisance,
    Estimation,
    CriticalValue,
    Bound,
    Simulation,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Ingestion => "ingestion",
            Stage::Nuisance => "nuisance fitting",
            Stage::Estimation => "estimation",
            Stage::CriticalValue => "critical value",
            Stage::Bound => "bound",
            Stage::Simulation => "simulation",
            Stage::Output => "output",
        })
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} failed: {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: DmlError,
}

impl StageError {
    /// 2 for input problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        if self.source.is_input_error() {
            2
        } else {
            3
        }
    }
}

pub(crate) trait At<T> {
    fn at(self, stage: Stage) -> Result<T, StageError>;
}

impl<T> At<T> for crate::error::Result<T> {
    fn at(self, stage: Stage) -> Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

struct Prepared {
    data: Dataset,
    truth: Option<std::sync::Arc<dyn Dgp>>,
    functionals: Vec<MomentFunctional>,
    plan: FoldPlan,
}

fn prepare(config: &RunConfig) -> Result<Prepared, StageError> {
    let (data, truth) = match (&config.data, &config.dgp) {
        (Some(csv), _) => (load_csv(&csv.path, &csv.schema).at(Stage::Ingestion)?, None),
        (None, Some(src)) => {
            let dgp = src.model.build().at(Stage::Config)?;
            let data = dgp
                .generate(src.n, derive_seed(config.seed, tag::DATA))
                .at(Stage::Ingestion)?;
            (data, Some(dgp))
        }
        (None, None) => unreachable!("validated"),
    };
    let functionals = config
        .targets
        .functionals_for(data.labels().len(), data.outcome_dim())
        .at(Stage::Config)?;
    let plan = if config.folds == 1 {
        FoldPlan::pooled(data.n())
    } else {
        make_folds(data.n(), config.folds, derive_seed(config.seed, tag::FOLDS))
    }
    .at(Stage::Config)?;
    Ok(Prepared {
        data,
        truth,
        functionals,
        plan,
    })
}

fn estimate(config: &RunConfig, p: &Prepared) -> Result<crate::inference::EstimateSet, StageError> {
    let recipes = config
        .nuisance
        .recipes_for(
            p.data.covariate_dim(),
            p.data.labels().len(),
            p.truth.as_deref(),
            &p.functionals,
            config.targets.is_cdf(),
        )
        .at(Stage::Config)?;
    let fits = cross_fit(&p.data, &p.plan, &p.functionals, &recipes).at(Stage::Nuisance)?;
    estimate_targets(&p.data, &p.functionals, &fits, &p.plan).at(Stage::Estimation)
}

fn degenerate_warnings(est: &crate::inference::EstimateSet) -> Vec<String> {
    est.rows()
        .iter()
        .filter(|r| r.sigma == 0.0)
        .map(|r| {
            format!(
                "score of {} has zero variance; its band has zero width",
                r.target
            )
        })
        .collect()
}

fn run_bound(b: &BoundConfig) -> Result<Results, StageError> {
    let report = match b.theorem {
        Theorem::One => theorem1_report(&b.theorem1, b.regime),
        Theorem::Two => theorem2_bound(&b.theorem2),
    }
    .at(Stage::Bound)?;
    Ok(Results::Bound(report))
}

/// Dispatches a validated configuration.
pub fn run(config: &RunConfig) -> Result<Report, StageError> {
    config.validate().at(Stage::Config)?;
    let start = Instant::now();
    let mut warnings = Vec::new();
    let critical_seed = derive_seed(config.seed, tag::CRITICAL);
    let results = match config.command {
        Command::Estimate => {
            let p = prepare(config)?;
            let est = estimate(config, &p)?;
            warnings.extend(degenerate_warnings(&est));
            Results::Estimate(EstimateResults {
                n: est.n,
                folds: p.plan.folds(),
                targets: est.rows(),
            })
        }
        Command::Bands => {
            let p = prepare(config)?;
            let est = estimate(config, &p)?;
            warnings.extend(degenerate_warnings(&est));
            let corr = estimate_correlation(&est.score, DEFAULT_CORRELATION_RIDGE)
                .at(Stage::CriticalValue)?;
            Results::Bands(
                build_bands(&est, &corr, config.level, config.draws, critical_seed)
                    .at(Stage::CriticalValue)?,
            )
        }
        Command::CdfBands => {
            let p = prepare(config)?;
            let TargetSpec::Cdf { arm, outcome, grid } = &config.targets else {
                unreachable!("validated")
            };
            let recipes = config
                .nuisance
                .recipes_for(
                    p.data.covariate_dim(),
                    p.data.labels().len(),
                    p.truth.as_deref(),
                    &p.functionals,
                    true,
                )
                .at(Stage::Config)?;
            let fits = cross_fit(&p.data, &p.plan, &p.functionals, &recipes).at(Stage::Nuisance)?;
            let band = estimate_cdf_band(
                &p.data,
                *arm,
                *outcome,
                grid,
                &fits,
                &p.plan,
                config.level,
                config.draws,
                critical_seed,
            )
            .at(Stage::Estimation)?;
            for (g, s) in band.se.iter().enumerate() {
                if *s == 0.0 {
                    warnings.push(format!(
                        "grid point {} has a degenerate score",
                        band.grid[g]
                    ));
                }
            }
            Results::CdfBands(band)
        }
        Command::Bound => {
            let results = run_bound(config.bound.as_ref().expect("validated"))?;
            if let Results::Bound(b) = &results {
                warnings.extend(b.warnings.iter().cloned());
            }
            results
        }
        Command::Simulate => {
            let spec = config.simulate.as_ref().expect("validated");
            let exec = Exec {
                workers: config.workers,
            };
            match spec.mode {
                Mode::Coverage => {
                    Results::Coverage(run_coverage(spec, &exec).at(Stage::Simulation)?)
                }
                Mode::Ks => {
                    let choice = config.bound.as_ref().map(|b| match b.theorem {
                        Theorem::One => BoundChoice::Theorem1 {
                            inputs: b.theorem1,
                            regime: b.regime,
                        },
                        Theorem::Two => BoundChoice::Theorem2 { inputs: b.theorem2 },
                    });
                    let ks =
                        bound_vs_empirical(spec, &exec, choice.as_ref()).at(Stage::Simulation)?;
                    if let Some(path) = &config.dump_sup_t {
                        write_sample_csv(path, "sup_t", &ks.sup_t).at(Stage::Output)?;
                    }
                    Results::Ks(ks)
                }
                Mode::DecompositionAudit => {
                    Results::Audit(decomposition_audit(spec, &exec).at(Stage::Simulation)?)
                }
            }
        }
    };
    Ok(Report {
        schema_version: SCHEMA_VERSION,
        command: config.command,
        config: config.clone(),
        spec_hash: config.hash(),
        results,
        warnings,
        timing: Timing {
            seconds: start.elapsed().as_secs_f64(),
        },
    })
}
