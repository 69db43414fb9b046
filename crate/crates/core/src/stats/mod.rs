//! Time-series statistics: unit-root screening, rank correlation with group
//! aggregation, least squares and Nadaraya-Watson regression.

mod correlation;
mod linalg;
mod regression;
mod stationarity;

pub use correlation::{
    correlate_groups, fisher_mean, spearman, stars, stouffer, CorrelationEntry, CorrelationReport, GroupRho,
    Screening, SpearmanResult,
};
pub use regression::{
    incremental_r2_curve, nw_regress, ols_fit, CurvePoint, NwModel, NwPrediction, OlsFit, Ordering,
    RegressionMethod,
};
pub use stationarity::{
    adf_test, pp_test, PBand, StationarityResult, ADF_CRITICAL_VALUES, MIN_STATIONARITY_LEN, UNIT_ROOT_SPEC,
};
