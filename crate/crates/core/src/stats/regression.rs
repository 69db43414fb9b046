use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::correlation::pearson;
use super::linalg::{independent_columns, least_squares};
use crate::error::{CoevoError, Result};
use crate::series::MetricSeries;

const COLLINEAR_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    /// Slope per input column; `None` for columns dropped as collinear.
    pub coefficients: Vec<Option<f64>>,
    pub intercept: f64,
    pub r2: f64,
    pub dropped: Vec<usize>,
}

/// Least squares with an intercept. Columns in the span of the intercept
/// and earlier columns are dropped.
pub fn ols_fit(columns: &[Vec<f64>], y: &[f64]) -> Result<OlsFit> {
    let n = y.len();
    if columns.iter().any(|c| c.len() != n) {
        return Err(CoevoError::invalid("design columns and target differ in length"));
    }
    if n <= columns.len() + 1 {
        return Err(CoevoError::invalid(format!(
            "need more rows than parameters ({n} rows, {} parameters)",
            columns.len() + 1
        )));
    }
    if y.iter().chain(columns.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(CoevoError::invalid("non-finite value in regression input"));
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if sst <= 0.0 {
        return Err(CoevoError::Degenerate("target has zero variance".into()));
    }

    let mut design = vec![vec![1.0; n]];
    design.extend(columns.iter().cloned());
    let keep = independent_columns(&design, COLLINEAR_TOL);
    let kept: Vec<Vec<f64>> = keep.iter().map(|&j| design[j].clone()).collect();
    let fit = least_squares(&kept, y);

    let mut coefficients = vec![None; columns.len()];
    let mut intercept = 0.0;
    for (pos, &j) in keep.iter().enumerate() {
        if j == 0 {
            intercept = fit.beta[pos];
        } else {
            coefficients[j - 1] = Some(fit.beta[pos]);
        }
    }
    let dropped = (0..columns.len())
        .filter(|&j| coefficients[j].is_none())
        .collect();
    Ok(OlsFit {
        coefficients,
        intercept,
        r2: 1.0 - fit.ssr / sst,
        dropped,
    })
}

/// Gaussian product-kernel Nadaraya-Watson regressor.
#[derive(Debug, Clone)]
pub struct NwModel {
    /// Training inputs, one row per sample.
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    pub bandwidths: Vec<f64>,
    pub mean_y: f64,
    /// Leave-one-out R²; `None` when the target is constant.
    pub loo_r2: Option<f64>,
    /// Some predictor is (almost) perfectly correlated with the target.
    pub target_leak: bool,
    /// Leave-one-out predictions that fell back to the global mean.
    pub loo_fallbacks: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NwPrediction {
    pub value: f64,
    /// All kernel weights underflowed; `value` is the training mean.
    pub fallback: bool,
}

impl NwModel {
    fn kernel_sum(&self, q: &[f64], skip: Option<usize>) -> (f64, f64) {
        let (mut num, mut den) = (0.0, 0.0);
        for (i, xi) in self.x.iter().enumerate() {
            if skip == Some(i) {
                continue;
            }
            let d2: f64 = xi
                .iter()
                .zip(q)
                .zip(&self.bandwidths)
                .map(|((a, b), h)| ((a - b) / h).powi(2))
                .sum();
            let w = (-0.5 * d2).exp();
            num += w * self.y[i];
            den += w;
        }
        (num, den)
    }

    pub fn predict(&self, q: &[f64]) -> NwPrediction {
        let (num, den) = self.kernel_sum(q, None);
        if den > 0.0 {
            NwPrediction {
                value: num / den,
                fallback: false,
            }
        } else {
            NwPrediction {
                value: self.mean_y,
                fallback: true,
            }
        }
    }

    pub fn n_samples(&self) -> usize {
        self.y.len()
    }
}

pub const MIN_NW_SAMPLES: usize = 10;

/// Fits a Nadaraya-Watson regression on `inputs` (one vector per predictor).
/// Without explicit bandwidths each dimension gets `1.06 sd n^(-1/5)`.
/// Bandwidths are in the units of the inputs; infinite bandwidths are allowed.
pub fn nw_regress(inputs: &[Vec<f64>], y: &[f64], bandwidths: Option<&[f64]>) -> Result<NwModel> {
    let n = y.len();
    if n < MIN_NW_SAMPLES {
        return Err(CoevoError::invalid(format!(
            "kernel regression needs at least {MIN_NW_SAMPLES} samples, got {n}"
        )));
    }
    if inputs.is_empty() || inputs.iter().any(|c| c.len() != n) {
        return Err(CoevoError::invalid(
            "kernel regression inputs are empty or misaligned",
        ));
    }
    if y.iter().chain(inputs.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(CoevoError::invalid("non-finite value in regression input"));
    }
    let nf = n as f64;
    let bw: Vec<f64> = match bandwidths {
        Some(b) => {
            if b.len() != inputs.len() || b.iter().any(|h| !(*h > 0.0)) {
                return Err(CoevoError::invalid("bandwidths must be positive, one per input"));
            }
            b.to_vec()
        }
        None => inputs
            .iter()
            .map(|c| {
                let m = c.iter().sum::<f64>() / nf;
                let sd = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / nf).sqrt();
                // constant columns carry no information; any width will do
                let sd = if sd > 0.0 { sd } else { 1.0 };
                1.06 * sd * nf.powf(-0.2)
            })
            .collect(),
    };
    let x: Vec<Vec<f64>> = (0..n).map(|i| inputs.iter().map(|c| c[i]).collect()).collect();
    let mean_y = y.iter().sum::<f64>() / nf;
    let target_leak = inputs
        .iter()
        .any(|c| pearson(c, y).is_some_and(|r| r.abs() > 1.0 - 1e-9));

    let mut model = NwModel {
        x,
        y: y.to_vec(),
        bandwidths: bw,
        mean_y,
        loo_r2: None,
        target_leak,
        loo_fallbacks: 0,
    };

    let sst: f64 = y.iter().map(|v| (v - mean_y).powi(2)).sum();
    let loo: Vec<(f64, bool)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (num, den) = model.kernel_sum(&model.x[i], Some(i));
            if den > 0.0 {
                (num / den, false)
            } else {
                (mean_y, true)
            }
        })
        .collect();
    model.loo_fallbacks = loo.iter().filter(|p| p.1).count();
    if sst > 0.0 {
        let sse: f64 = loo.iter().zip(y).map(|((p, _), v)| (v - p).powi(2)).sum();
        model.loo_r2 = Some(1.0 - sse / sst);
    }
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegressionMethod {
    Ols,
    Nw,
}

/// A named sequence of predictors added one at a time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ordering {
    pub name: String,
    pub predictors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub ordering: String,
    pub step: usize,
    pub added: String,
    /// `None` when the fit was degenerate.
    pub r2: Option<f64>,
    pub n: usize,
    pub target_leak: bool,
}

/// R² after each prefix of each ordering. Every fit of one ordering uses the
/// rows where the target and all of that ordering's predictors are present,
/// so points along a curve share one sample. NW reports leave-one-out R²,
/// OLS in-sample R².
pub fn incremental_r2_curve(
    series: &MetricSeries,
    target: &str,
    orderings: &[Ordering],
    method: RegressionMethod,
) -> Result<Vec<CurvePoint>> {
    let mut out = Vec::new();
    for ord in orderings {
        if ord.predictors.is_empty() {
            return Err(CoevoError::invalid(format!("ordering `{}` is empty", ord.name)));
        }
        let mut names: Vec<&str> = vec![target];
        names.extend(ord.predictors.iter().map(String::as_str));
        let mut cols = series.complete_rows(&names)?;
        let y = cols.remove(0);
        for step in 1..=cols.len() {
            let xs = &cols[..step];
            let (r2, leak) = match method {
                RegressionMethod::Nw => {
                    let m = nw_regress(xs, &y, None)?;
                    (m.loo_r2, m.target_leak)
                }
                RegressionMethod::Ols => match ols_fit(xs, &y) {
                    Ok(f) => (
                        Some(f.r2),
                        xs.iter()
                            .any(|c| pearson(c, &y).is_some_and(|r| r.abs() > 1.0 - 1e-9)),
                    ),
                    Err(CoevoError::Degenerate(_)) => (None, false),
                    Err(e) => return Err(e),
                },
            };
            out.push(CurvePoint {
                ordering: ord.name.clone(),
                step,
                added: ord.predictors[step - 1].clone(),
                r2,
                n: y.len(),
                target_leak: leak,
            });
        }
    }
    Ok(out)
}
