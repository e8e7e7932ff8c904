//! Replicated experiments: band coverage, Kolmogorov distance of the sup-t
//! statistic to its Gaussian limit, and oracle decomposition audits.
//!
//! Replication `r` draws all of its randomness from
//! `derive_seed(master_seed, r)` and results are folded in index order, so
//! reports are identical for any worker count.

mod run;
mod spec;

use std::io::Write;
use std::path::Path;

use crate::error::{DmlError, Result};

pub use run::{
    bound_vs_empirical, decomposition_audit, empirical_sup_t, run_coverage, AuditReport, AuditRow,
    BoundCheck, BoundChoice, CoverageReport, Exec, KsReport, IDENTITY_TOLERANCE,
};
pub use spec::{
    AlphaPerturbation, CriticalSpec, DgpSpec, ExperimentSpec, Mode, NuisanceSpec, RieszSpec,
    TargetSpec,
};

/// `sup_t |F_a(t) - F_b(t)|` for the empirical CDFs of two samples.
pub fn ks_distance(sample_a: &[f64], sample_b: &[f64]) -> Result<f64> {
    if sample_a.is_empty() || sample_b.is_empty() {
        return Err(DmlError::Argument(
            "ks_distance needs two nonempty samples".into(),
        ));
    }
    if sample_a.iter().chain(sample_b).any(|v| v.is_nan()) {
        return Err(DmlError::Argument(
            "ks_distance samples must not contain NaN".into(),
        ));
    }
    let mut a = sample_a.to_vec();
    let mut b = sample_b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut best = 0.0f64;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] == v {
            i += 1;
        }
        while j < b.len() && b[j] == v {
            j += 1;
        }
        best = best.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(best)
}

/// Writes a sample as a single-column CSV with a header.
pub fn write_sample_csv(path: &Path, header: &str, sample: &[f64]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{header}")?;
    for v in sample {
        writeln!(w, "{v}")?;
    }
    w.flush()?;
    Ok(())
}
