//! Point estimates, score correlation, sup-t critical values and bands.

mod bands;
mod cdf;
mod correlation;
mod critical;
mod estimate;

pub use bands::{bands_with_critical_value, build_bands, BandResult, BandRow};
pub(crate) use cdf::{assemble, joint_critical_value};
pub use cdf::{
    cdf_functionals, check_grid, estimate_cdf_band, generalized_inverse, pava, qte_from_cdf,
    CdfBandResult, QteResult,
};
pub use correlation::{estimate_correlation, CorrelationEstimate, DEFAULT_CORRELATION_RIDGE};
pub(crate) use critical::check_level;
pub use critical::{
    correlation_factor, gaussian_max_sample, order_statistic, sup_t_critical_value, Sided,
};
pub use estimate::{estimate_targets, EstimateRow, EstimateSet};
