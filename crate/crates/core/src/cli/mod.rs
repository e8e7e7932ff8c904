//! Command-line surface: configuration, dispatch and reports.

mod config;
mod report;
mod run;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

pub use config::{
    config_from_value, parse_config, parse_config_text, read_config_file, BoundConfig, Command,
    CsvSource, DgpSource, Override, RunConfig, Theorem,
};
pub use report::{EstimateResults, Report, Results, Timing, SCHEMA_VERSION};
pub use run::{run, Stage, StageError};

use crate::error::DmlError;
use run::At;

#[derive(Debug, Parser)]
#[command(
    name = "dml",
    version,
    about = "Debiased machine learning with simultaneous bands"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Cross-fitted point estimates and standard errors.
    Estimate(DataArgs),
    /// Simultaneous sup-t bands for the targets.
    Bands(DataArgs),
    /// Monotone simultaneous band for a potential-outcome CDF.
    CdfBands(CdfArgs),
    /// Evaluate a Gaussian approximation bound.
    Bound(BoundArgs),
    /// Monte Carlo coverage, KS or decomposition audit.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML configuration (JSON if the extension is .json).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Report path; without it the report goes to standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Outcome columns, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub outcomes: Option<Vec<String>>,
    #[arg(long)]
    pub treatment: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub labels: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    /// Catalog DGP to sample from instead of a CSV.
    #[arg(long)]
    pub dgp: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Propensity clipping level of the cross-fitted nuisances.
    #[arg(long)]
    pub clip: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CdfArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub arm: Option<usize>,
    #[arg(long)]
    pub outcome: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RegimeArg {
    Heavy,
    Subgauss,
    Bounded,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub theorem: Option<u8>,
    #[arg(long, value_enum)]
    pub regime: Option<RegimeArg>,
    /// Bound input as key=value, e.g. `--input n=1e6`; repeatable.
    #[arg(long = "input", value_name = "KEY=VALUE")]
    pub inputs: Vec<String>,
    /// Constant override as key=value, e.g. `--constant c_q=2`; repeatable.
    #[arg(long = "constant", value_name = "KEY=VALUE")]
    pub constants: Vec<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum ModeArg {
    Coverage,
    Ks,
    DecompositionAudit,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long)]
    pub dgp: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Write the replicated sup-t values (ks mode) as a one-column CSV.
    #[arg(long)]
    pub dump_sup_t: Option<PathBuf>,
}

fn push<T: Into<Value>>(out: &mut Vec<Override>, key: &str, v: Option<T>) {
    if let Some(v) = v {
        out.push(Override::new(key, v));
    }
}

fn path_value(p: &std::path::Path) -> Value {
    Value::String(p.display().to_string())
}

fn common(out: &mut Vec<Override>, c: &CommonArgs, prefix: &str) {
    push(out, &format!("{prefix}level"), c.level);
    push(out, &format!("{prefix}draws"), c.draws);
    let seed_key = if prefix.is_empty() {
        "seed".to_string()
    } else {
        format!("{prefix}master_seed")
    };
    push(out, &seed_key, c.seed);
    push(out, "workers", c.workers);
    push(out, "out", c.out.as_deref().map(path_value));
}

fn data_overrides(out: &mut Vec<Override>, d: &DataArgs) {
    common(out, &d.common, "");
    push(out, "data.path", d.csv.as_deref().map(path_value));
    push(out, "data.schema.outcomes", d.outcomes.clone());
    push(out, "data.schema.treatment", d.treatment.clone());
    push(out, "data.schema.labels", d.labels.clone());
    push(out, "data.schema.covariates", d.covariates.clone());
    push(
        out,
        "dgp.model",
        d.dgp.as_ref().map(|name| json!({ "name": name })),
    );
    push(out, "dgp.n", d.n);
    push(out, "folds", d.folds);
    if let Some(clip) = d.clip {
        out.push(Override::if_absent("nuisance.kind", "cross_fit"));
        out.push(Override::new("nuisance.clip", clip));
    }
}

/// Config file and the list of flag overrides, in application order.
pub fn overrides(cli: &Cli) -> crate::error::Result<(Option<PathBuf>, Vec<Override>)> {
    let mut out = vec![];
    let (file, name) = match &cli.command {
        Sub::Estimate(d) => {
            data_overrides(&mut out, d);
            (d.common.config.clone(), "estimate")
        }
        Sub::Bands(d) => {
            data_overrides(&mut out, d);
            (d.common.config.clone(), "bands")
        }
        Sub::CdfBands(c) => {
            data_overrides(&mut out, &c.data);
            if c.arm.is_some() || c.outcome.is_some() || c.grid.is_some() {
                out.push(Override::new("targets.kind", "cdf"));
            }
            push(&mut out, "targets.arm", c.arm);
            push(&mut out, "targets.outcome", c.outcome);
            push(&mut out, "targets.grid", c.grid.clone());
            (c.data.common.config.clone(), "cdf-bands")
        }
        Sub::Bound(b) => {
            common(&mut out, &b.common, "");
            push(&mut out, "bound.theorem", b.theorem);
            let regime = b.regime.map(|r| match r {
                RegimeArg::Heavy => "heavy_tail_q",
                RegimeArg::Subgauss => "sub_gaussian",
                RegimeArg::Bounded => "bounded",
            });
            push(&mut out, "bound.regime", regime);
            for kv in &b.inputs {
                out.push(Override::bound_input("", kv)?);
            }
            for kv in &b.constants {
                out.push(Override::bound_input("constants", kv)?);
            }
            (b.common.config.clone(), "bound")
        }
        Sub::Simulate(s) => {
            common(&mut out, &s.common, "simulate.");
            push(
                &mut out,
                "simulate.mode",
                s.mode.map(|m| match m {
                    ModeArg::Coverage => "coverage",
                    ModeArg::Ks => "ks",
                    ModeArg::DecompositionAudit => "decomposition_audit",
                }),
            );
            push(&mut out, "simulate.replications", s.replications);
            push(
                &mut out,
                "simulate.dgp",
                s.dgp.as_ref().map(|name| json!({ "name": name })),
            );
            push(&mut out, "simulate.n", s.n);
            push(&mut out, "simulate.folds", s.folds);
            push(
                &mut out,
                "dump_sup_t",
                s.dump_sup_t.as_deref().map(path_value),
            );
            (s.common.config.clone(), "simulate")
        }
    };
    out.insert(0, Override::new("command", name));
    Ok((file, out))
}

/// Runs the binary with `args` and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli) -> Result<(), StageError> {
    let (file, flags) = overrides(cli).at(Stage::Config)?;
    let config = parse_config(file.as_deref(), &flags).at(Stage::Config)?;
    let report = run(&config)?;
    let text = match &config.out {
        Some(path) => {
            report.write(path).at(Stage::Output)?;
            report.summary()
        }
        None => report.to_json().at(Stage::Output)? + "\n",
    };
    let mut stdout = std::io::stdout().lock();
    match stdout
        .write_all(text.as_bytes())
        .and_then(|()| stdout.flush())
    {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
            Err(DmlError::Io(e)).at(Stage::Output)
        }
        _ => Ok(()),
    }
}
