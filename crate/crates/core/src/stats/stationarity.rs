//! Augmented Dickey-Fuller and Phillips-Perron unit-root tests with a
//! constant and no trend. Decisions use the asymptotic critical values of
//! the Dickey-Fuller t distribution for that case.

use serde::Serialize;

use super::linalg::least_squares;
use crate::error::{CoevoError, Result};

/// Test specification, recorded in run manifests.
pub const UNIT_ROOT_SPEC: &str =
    "constant, no trend; ADF lags by BIC up to 12(T/100)^0.25; PP Bartlett bandwidth floor(4(T/100)^(2/9))";

/// 1%, 5% and 10% asymptotic critical values, constant-only regression.
pub const ADF_CRITICAL_VALUES: [f64; 3] = [-3.43, -2.86, -2.57];

pub const MIN_STATIONARITY_LEN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum PBand {
    #[serde(rename = "<0.01")]
    Below1,
    #[serde(rename = "<0.05")]
    Below5,
    #[serde(rename = "<0.10")]
    Below10,
    #[serde(rename = ">=0.10")]
    Above10,
}

impl PBand {
    pub fn from_statistic(stat: f64) -> Self {
        let [c1, c5, c10] = ADF_CRITICAL_VALUES;
        if stat < c1 {
            PBand::Below1
        } else if stat < c5 {
            PBand::Below5
        } else if stat < c10 {
            PBand::Below10
        } else {
            PBand::Above10
        }
    }

    /// Whether the band lies entirely below `level` (one of 0.01, 0.05, 0.10).
    pub fn below(self, level: f64) -> bool {
        let upper = match self {
            PBand::Below1 => 0.01,
            PBand::Below5 => 0.05,
            PBand::Below10 => 0.10,
            PBand::Above10 => return false,
        };
        upper <= level + 1e-12
    }

    pub fn label(self) -> &'static str {
        match self {
            PBand::Below1 => "<0.01",
            PBand::Below5 => "<0.05",
            PBand::Below10 => "<0.10",
            PBand::Above10 => ">=0.10",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationarityResult {
    pub statistic: f64,
    /// ADF: number of lagged differences; PP: Bartlett bandwidth.
    pub lag_or_bandwidth: usize,
    pub p_band: PBand,
    /// Unit root rejected at 1%.
    pub reject_unit_root: bool,
    /// Constant series; reported as trivially stationary.
    pub degenerate: bool,
}

impl StationarityResult {
    fn from_stat(statistic: f64, lag: usize) -> Self {
        let p_band = PBand::from_statistic(statistic);
        StationarityResult {
            statistic,
            lag_or_bandwidth: lag,
            p_band,
            reject_unit_root: p_band == PBand::Below1,
            degenerate: false,
        }
    }

    fn constant() -> Self {
        StationarityResult {
            statistic: f64::NEG_INFINITY,
            lag_or_bandwidth: 0,
            p_band: PBand::Below1,
            reject_unit_root: true,
            degenerate: true,
        }
    }
}

fn check_series(y: &[f64]) -> Result<bool> {
    if y.len() < MIN_STATIONARITY_LEN {
        return Err(CoevoError::invalid(format!(
            "unit-root test needs at least {MIN_STATIONARITY_LEN} observations, got {}",
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(CoevoError::invalid("series contains non-finite values"));
    }
    let first = y[0];
    Ok(y.iter().all(|&v| v == first))
}

/// Regressors of the ADF regression with `lags` lagged differences, using
/// observations from index `start` of the differenced series onward.
/// Column order: constant, lagged level, lagged differences.
fn adf_design(y: &[f64], lags: usize, start: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let dy: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
    let rows = start..dy.len();
    let n = rows.len();
    let mut cols = vec![vec![1.0; n], rows.clone().map(|t| y[t]).collect()];
    for i in 1..=lags {
        cols.push(rows.clone().map(|t| dy[t - i]).collect());
    }
    let target = rows.map(|t| dy[t]).collect();
    (cols, target)
}

fn bic(ssr: f64, n: usize, k: usize) -> f64 {
    let nf = n as f64;
    let llf = -nf / 2.0 * ((2.0 * std::f64::consts::PI).ln() + (ssr / nf).ln() + 1.0);
    -2.0 * llf + k as f64 * nf.ln()
}

/// ADF test. The number of lagged differences minimises BIC over
/// `0..=floor(12 (T/100)^(1/4))`, all candidates fitted on a common sample;
/// the chosen model is then refitted on every usable observation.
pub fn adf_test(y: &[f64]) -> Result<StationarityResult> {
    if check_series(y)? {
        return Ok(StationarityResult::constant());
    }
    let t = y.len();
    let rule = (12.0 * (t as f64 / 100.0).powf(0.25)).floor() as usize;
    let max_lag = rule.min((t / 2).saturating_sub(2));

    let mut best = (f64::INFINITY, 0usize);
    for lag in 0..=max_lag {
        let (cols, target) = adf_design(y, lag, max_lag);
        let fit = least_squares(&cols, &target);
        let ic = bic(fit.ssr, target.len(), cols.len());
        if ic < best.0 {
            best = (ic, lag);
        }
    }
    let lag = best.1;
    let (cols, target) = adf_design(y, lag, lag);
    let fit = least_squares(&cols, &target);
    Ok(StationarityResult::from_stat(fit.beta[1] / fit.std_err[1], lag))
}

/// Newey-West bandwidth `floor(4 (T/100)^(2/9))`.
pub fn newey_west_bandwidth(t: usize) -> usize {
    (4.0 * (t as f64 / 100.0).powf(2.0 / 9.0)).floor() as usize
}

/// Phillips-Perron Z-tau: the lag-0 Dickey-Fuller t statistic corrected with
/// a Bartlett-kernel long-run variance of the residuals.
pub fn pp_test(y: &[f64]) -> Result<StationarityResult> {
    if check_series(y)? {
        return Ok(StationarityResult::constant());
    }
    let bandwidth = newey_west_bandwidth(y.len());
    let (cols, target) = adf_design(y, 0, 0);
    let fit = least_squares(&cols, &target);
    let u = &fit.residuals;
    let n = u.len();
    let nf = n as f64;
    let k = cols.len() as f64;

    let gamma0 = u.iter().map(|v| v * v).sum::<f64>() / nf;
    let mut lam2 = gamma0;
    for j in 1..=bandwidth.min(n - 1) {
        let gj = u[j..].iter().zip(u).map(|(a, b)| a * b).sum::<f64>() / nf;
        lam2 += 2.0 * (1.0 - j as f64 / (bandwidth as f64 + 1.0)) * gj;
    }
    if !(lam2 > 0.0) {
        return Err(CoevoError::Degenerate("non-positive long-run variance".into()));
    }
    let s = (fit.ssr / (nf - k)).sqrt();
    let lam = lam2.sqrt();
    let se = fit.std_err[1];
    let t_stat = fit.beta[1] / se;
    let z_tau = (gamma0 / lam2).sqrt() * t_stat - 0.5 * ((lam2 - gamma0) / lam) * (nf * se / s);
    Ok(StationarityResult::from_stat(z_tau, bandwidth))
}
