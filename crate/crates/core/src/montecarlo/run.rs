use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ks_distance;
use super::spec::{CriticalSpec, ExperimentSpec, Mode};
use crate::bounds::{theorem1_bound, theorem2_terms, Regime, Theorem1Inputs, Theorem2Inputs};
use crate::error::{DmlError, Result};
use crate::inference::{
    assemble, bands_with_critical_value, estimate_correlation, estimate_targets,
    gaussian_max_sample, joint_critical_value, sup_t_critical_value, CorrelationEstimate,
    EstimateSet, Sided, DEFAULT_CORRELATION_RIDGE,
};
use crate::model::{make_folds, Dataset, Dgp, FoldPlan};
use crate::nuisance::{cross_fit, NuisanceFitSet, TargetRecipe};
use crate::rng::{derive_seed, tag};
use crate::scores::{oracle_decomposition, MomentFunctional};

/// Scales an identity residual is compared against.
pub const IDENTITY_TOLERANCE: f64 = 1e-10;

/// Execution settings that do not affect results.
#[derive(Debug, Clone, Copy, Default)]
pub struct Exec {
    /// Size of a dedicated thread pool; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl Exec {
    pub fn workers(workers: usize) -> Self {
        Self {
            workers: Some(workers),
        }
    }

    fn install<T: Send>(&self, job: impl FnOnce() -> T + Send) -> Result<T> {
        match self.workers {
            None => Ok(job()),
            Some(w) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(w.max(1))
                    .build()
                    .map_err(|e| {
                        DmlError::Argument(format!("cannot build a pool of {w} workers: {e}"))
                    })?;
                Ok(pool.install(job))
            }
        }
    }
}

struct Context {
    dgp: Arc<dyn Dgp>,
    functionals: Vec<MomentFunctional>,
    recipes: Vec<TargetRecipe>,
    theta: Vec<f64>,
}

fn prepare(spec: &ExperimentSpec) -> Result<Context> {
    spec.validate()?;
    let dgp = spec.dgp.build()?;
    let functionals = spec.targets.functionals(dgp.as_ref())?;
    let recipes = spec
        .nuisance
        .recipes(dgp.as_ref(), &functionals, spec.targets.is_cdf())?;
    let theta = functionals
        .iter()
        .map(|f| dgp.theta(f))
        .collect::<Result<_>>()?;
    Ok(Context {
        dgp,
        functionals,
        recipes,
        theta,
    })
}

struct Fitted {
    seed: u64,
    data: Dataset,
    plan: FoldPlan,
    fits: NuisanceFitSet,
    est: EstimateSet,
}

fn fit_replication(spec: &ExperimentSpec, ctx: &Context, r: usize) -> Result<Fitted> {
    let seed = derive_seed(spec.master_seed, r as u64);
    let data = ctx.dgp.generate(spec.n, derive_seed(seed, tag::DATA))?;
    let plan = make_folds(spec.n, spec.folds, derive_seed(seed, tag::FOLDS))?;
    let fits = cross_fit(&data, &plan, &ctx.functionals, &ctx.recipes)?;
    let est = estimate_targets(&data, &ctx.functionals, &fits, &plan)?;
    Ok(Fitted {
        seed,
        data,
        plan,
        fits,
        est,
    })
}

struct Replicated<T> {
    ok: Vec<T>,
    failed: usize,
}

/// Runs `job` for every replication index and applies the failure policy:
/// failed replications are dropped, and more than 1% failures fail the run.
fn replicate<T: Send>(
    spec: &ExperimentSpec,
    exec: &Exec,
    job: impl Fn(usize) -> Result<T> + Sync,
) -> Result<Replicated<T>> {
    let results: Vec<Result<T>> =
        exec.install(|| (0..spec.replications).into_par_iter().map(&job).collect())?;
    let total = results.len();
    let mut ok = Vec::with_capacity(total);
    let mut first = None;
    let mut failed = 0;
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(v) => ok.push(v),
            Err(e) => {
                failed += 1;
                first.get_or_insert((r, e));
            }
        }
    }
    if failed * 100 > total {
        let (r, e) = first.expect("a failure was counted");
        return Err(DmlError::Estimation(format!(
            "{failed} of {total} replications failed (more than 1%); replication {r}: {e}"
        )));
    }
    Ok(Replicated { ok, failed })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub spec_hash: String,
    pub replications: usize,
    pub failed: usize,
    pub targets: Vec<String>,
    pub joint_coverage: f64,
    /// `sqrt(cov (1 - cov) / R)` over successful replications.
    pub mc_se: f64,
    pub marginal_coverage: Vec<f64>,
    #[serde(with = "crate::numeric::nonfinite::vec")]
    pub mean_half_width: Vec<f64>,
    #[serde(with = "crate::numeric::nonfinite")]
    pub mean_critical_value: f64,
}

struct CoverageRep {
    joint: bool,
    each: Vec<bool>,
    half_width: Vec<f64>,
    critical_value: f64,
}

fn coverage_rep(spec: &ExperimentSpec, ctx: &Context, r: usize) -> Result<CoverageRep> {
    let Fitted { seed, est, .. } = fit_replication(spec, ctx, r)?;
    let crit_seed = derive_seed(seed, tag::CRITICAL);
    let fixed = match spec.critical_value {
        CriticalSpec::Sampled => None,
        CriticalSpec::Fixed { value } => Some(value),
        CriticalSpec::Infinite => Some(f64::INFINITY),
    };
    if let crate::montecarlo::TargetSpec::Cdf { arm, grid, .. } = &spec.targets {
        let c = match fixed {
            Some(c) => c,
            None => joint_critical_value(&est, spec.level, spec.draws, crit_seed)?,
        };
        let band = assemble(*arm, grid, &est, c, spec.level, spec.draws, crit_seed);
        let each: Vec<bool> = (0..grid.len())
            .map(|j| band.lower[j] <= ctx.theta[j] && ctx.theta[j] <= band.upper[j])
            .collect();
        let half_width = band
            .lower
            .iter()
            .zip(&band.upper)
            .map(|(l, u)| 0.5 * (u - l))
            .collect();
        return Ok(CoverageRep {
            joint: each.iter().all(|&b| b),
            each,
            half_width,
            critical_value: c,
        });
    }
    let c = match fixed {
        Some(c) => c,
        None => {
            let corr = estimate_correlation(&est.score, DEFAULT_CORRELATION_RIDGE)?;
            sup_t_critical_value(&corr, spec.level, spec.draws, crit_seed, Sided::TwoSided)?
        }
    };
    let band = bands_with_critical_value(&est, c, spec.level, spec.draws, crit_seed)?;
    let each = band.covers_each(&ctx.theta);
    let half_width = band
        .targets
        .iter()
        .map(|t| 0.5 * (t.upper - t.lower))
        .collect();
    Ok(CoverageRep {
        joint: each.iter().all(|&b| b),
        each,
        half_width,
        critical_value: c,
    })
}

/// Joint and marginal coverage of the simultaneous band.
pub fn run_coverage(spec: &ExperimentSpec, exec: &Exec) -> Result<CoverageReport> {
    if spec.mode != Mode::Coverage {
        return Err(DmlError::Argument(
            "run_coverage needs mode = coverage".into(),
        ));
    }
    let ctx = prepare(spec)?;
    let reps = replicate(spec, exec, |r| coverage_rep(spec, &ctx, r))?;
    let m = reps.ok.len() as f64;
    let p = ctx.functionals.len();
    let joint = reps.ok.iter().filter(|c| c.joint).count() as f64 / m;
    let marginal = (0..p)
        .map(|j| reps.ok.iter().filter(|c| c.each[j]).count() as f64 / m)
        .collect();
    let mean_half_width = (0..p)
        .map(|j| reps.ok.iter().map(|c| c.half_width[j]).sum::<f64>() / m)
        .collect();
    let mean_critical_value = reps.ok.iter().map(|c| c.critical_value).sum::<f64>() / m;
    Ok(CoverageReport {
        spec_hash: spec.hash(),
        replications: spec.replications,
        failed: reps.failed,
        targets: ctx
            .functionals
            .iter()
            .map(MomentFunctional::describe)
            .collect(),
        joint_coverage: joint,
        mc_se: (joint * (1.0 - joint) / m).sqrt(),
        marginal_coverage: marginal,
        mean_half_width,
        mean_critical_value,
    })
}

fn oracle_sd(ctx: &Context) -> Result<Vec<f64>> {
    let cov = ctx.dgp.oracle_covariance(&ctx.functionals)?;
    Ok((0..cov.nrows())
        .map(|j| cov[(j, j)].max(0.0).sqrt())
        .collect())
}

fn sup_t_value(est: &EstimateSet, theta: &[f64], sd: &[f64], sided: Sided) -> Result<f64> {
    let root_n = (est.n as f64).sqrt();
    let mut best = f64::NEG_INFINITY;
    for j in 0..theta.len() {
        let diff = est.theta_hat[j] - theta[j];
        let t = if sd[j] > 0.0 {
            root_n * diff / sd[j]
        } else if diff.abs() <= 1e-12 {
            0.0
        } else {
            return Err(DmlError::Precondition(format!(
                "oracle standard deviation of {} is zero but the estimate is off by {diff:e}",
                est.score.target_meta()[j]
            )));
        };
        best = best.max(match sided {
            Sided::TwoSided => t.abs(),
            Sided::OneSided => t,
        });
    }
    Ok(best)
}

/// Replicated `max_j sqrt(n)(theta_hat_j - theta_0j) / sigma_j` with the
/// oracle `sigma_j`, in replication order. Failed replications are dropped.
pub fn empirical_sup_t(spec: &ExperimentSpec, exec: &Exec) -> Result<Vec<f64>> {
    let ctx = prepare(spec)?;
    Ok(sup_t_sample(spec, exec, &ctx)?.ok)
}

fn sup_t_sample(spec: &ExperimentSpec, exec: &Exec, ctx: &Context) -> Result<Replicated<f64>> {
    let sd = oracle_sd(ctx)?;
    replicate(spec, exec, |r| {
        let f = fit_replication(spec, ctx, r)?;
        sup_t_value(&f.est, &ctx.theta, &sd, spec.sided)
    })
}

/// Gaussian-max reference sample from the oracle correlation.
fn gaussian_reference(spec: &ExperimentSpec, exec: &Exec, ctx: &Context) -> Result<Vec<f64>> {
    let cov = ctx.dgp.oracle_covariance(&ctx.functionals)?;
    let live: Vec<usize> = (0..cov.nrows()).filter(|&j| cov[(j, j)] > 0.0).collect();
    if live.is_empty() {
        return Err(DmlError::DegenerateScore {
            target: "every oracle score has zero variance".into(),
        });
    }
    let sub = nalgebra::DMatrix::from_fn(live.len(), live.len(), |a, b| cov[(live[a], live[b])]);
    let corr = CorrelationEstimate::from_covariance(&sub, DEFAULT_CORRELATION_RIDGE)?;
    let seed = derive_seed(spec.master_seed, tag::GAUSSIAN);
    exec.install(|| gaussian_max_sample(&corr, spec.gaussian_draws, seed, spec.sided))?
}

/// Bound evaluated alongside an empirical distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "theorem", rename_all = "snake_case")]
pub enum BoundChoice {
    Theorem1 {
        inputs: Theorem1Inputs,
        regime: Regime,
    },
    Theorem2 {
        inputs: Theorem2Inputs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    #[serde(with = "crate::numeric::nonfinite")]
    pub total: f64,
    pub vacuous: bool,
    /// `ks <= min(1, total)`; trivially true when vacuous.
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsReport {
    pub spec_hash: String,
    pub replications: usize,
    pub failed: usize,
    pub sup_t: Vec<f64>,
    pub gaussian_draws: usize,
    pub ks: f64,
    pub bound: Option<BoundCheck>,
}

/// Two-sample Kolmogorov distance between replicated sup-t values and the
/// Gaussian maximum, with an optional bound for comparison.
pub fn bound_vs_empirical(
    spec: &ExperimentSpec,
    exec: &Exec,
    bound: Option<&BoundChoice>,
) -> Result<KsReport> {
    if spec.mode != Mode::Ks {
        return Err(DmlError::Argument(
            "bound_vs_empirical needs mode = ks".into(),
        ));
    }
    let ctx = prepare(spec)?;
    let reps = sup_t_sample(spec, exec, &ctx)?;
    let reference = gaussian_reference(spec, exec, &ctx)?;
    let ks = ks_distance(&reps.ok, &reference)?;
    let bound = match bound {
        None => None,
        Some(choice) => {
            let total = match choice {
                BoundChoice::Theorem1 { inputs, regime } => theorem1_bound(inputs, *regime)?.total,
                BoundChoice::Theorem2 { inputs } => theorem2_terms(inputs)?.total,
            };
            let vacuous = total >= 1.0;
            Some(BoundCheck {
                total,
                vacuous,
                consistent: vacuous || ks <= total,
            })
        }
    };
    Ok(KsReport {
        spec_hash: spec.hash(),
        replications: spec.replications,
        failed: reps.failed,
        sup_t: reps.ok,
        gaussian_draws: spec.gaussian_draws,
        ks,
        bound,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    /// Largest `|residual| / (1 + |sqrt(n)(theta_hat - theta_0)|)` over targets.
    pub residual_scaled: f64,
    pub max_abs_a: f64,
    pub max_abs_b: f64,
    pub max_abs_c: f64,
    pub max_abs_d: f64,
    pub max_d_bound: f64,
    /// `max_j |theta_hat_j - theta_0j|`.
    pub preliminary_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub spec_hash: String,
    pub replications: usize,
    pub failed: usize,
    pub rows: Vec<AuditRow>,
    pub max_residual_scaled: f64,
    pub median_abs_d: f64,
    pub max_preliminary_rate: f64,
}

/// Exact oracle decomposition in every replication. Fails if the identity
/// is violated anywhere.
pub fn decomposition_audit(spec: &ExperimentSpec, exec: &Exec) -> Result<AuditReport> {
    if spec.mode == Mode::Coverage {
        return Err(DmlError::Argument(
            "decomposition_audit needs mode = ks or decomposition_audit".into(),
        ));
    }
    let ctx = prepare(spec)?;
    let discrete = ctx.dgp.as_discrete().ok_or_else(|| {
        DmlError::Precondition("the decomposition audit needs a discrete DGP".into())
    })?;
    let reps = replicate(spec, exec, |r| {
        let f = fit_replication(spec, &ctx, r)?;
        let rows = oracle_decomposition(&f.data, discrete, &ctx.functionals, &f.fits, &f.plan)?;
        let max_of = |g: &dyn Fn(&crate::scores::OracleDecomposition) -> f64| {
            rows.iter().map(|d| g(d)).fold(0.0, f64::max)
        };
        Ok(AuditRow {
            residual_scaled: max_of(&|d| d.residual.abs() / (1.0 + d.total.abs())),
            max_abs_a: max_of(&|d| d.a.abs()),
            max_abs_b: max_of(&|d| d.b.abs()),
            max_abs_c: max_of(&|d| d.c.abs()),
            max_abs_d: max_of(&|d| d.d.abs()),
            max_d_bound: max_of(&|d| d.d_bound),
            preliminary_rate: f
                .est
                .theta_hat
                .iter()
                .zip(&ctx.theta)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        })
    })?;
    let max_residual_scaled = reps
        .ok
        .iter()
        .map(|r| r.residual_scaled)
        .fold(0.0, f64::max);
    if max_residual_scaled > IDENTITY_TOLERANCE {
        return Err(DmlError::Audit(format!(
            "oracle decomposition residual {max_residual_scaled:e} exceeds {IDENTITY_TOLERANCE:e}"
        )));
    }
    let mut d: Vec<f64> = reps.ok.iter().map(|r| r.max_abs_d).collect();
    d.sort_by(f64::total_cmp);
    let median_abs_d = if d.is_empty() {
        0.0
    } else if d.len() % 2 == 1 {
        d[d.len() / 2]
    } else {
        0.5 * (d[d.len() / 2 - 1] + d[d.len() / 2])
    };
    let max_preliminary_rate = reps
        .ok
        .iter()
        .map(|r| r.preliminary_rate)
        .fold(0.0, f64::max);
    Ok(AuditReport {
        spec_hash: spec.hash(),
        replications: spec.replications,
        failed: reps.failed,
        rows: reps.ok,
        max_residual_scaled,
        median_abs_d,
        max_preliminary_rate,
    })
}
