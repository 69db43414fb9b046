use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use super::stationarity::{adf_test, pp_test};
use crate::error::{CoevoError, Result};
use crate::series::MetricSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpearmanResult {
    pub rho: f64,
    /// Two-sided p-value from the t approximation with `n - 2` df.
    pub p: f64,
    pub n: usize,
    /// One input was constant; `rho` is reported as 0 and `p` as 1.
    pub degenerate: bool,
}

/// Ranks starting at 1, ties sharing their average rank.
pub(crate) fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

pub(crate) fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation over pairs where both values are present.
pub fn spearman(xs: &[Option<f64>], ys: &[Option<f64>]) -> Result<SpearmanResult> {
    let (a, b): (Vec<f64>, Vec<f64>) = xs
        .iter()
        .zip(ys)
        .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
        .unzip();
    let n = a.len();
    if n < 3 {
        return Err(CoevoError::invalid(format!(
            "Spearman correlation needs at least 3 complete pairs, got {n}"
        )));
    }
    let Some(rho) = pearson(&average_ranks(&a), &average_ranks(&b)) else {
        return Ok(SpearmanResult {
            rho: 0.0,
            p: 1.0,
            n,
            degenerate: true,
        });
    };
    let p = if rho.abs() >= 1.0 {
        0.0
    } else {
        let df = (n - 2) as f64;
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("positive df");
        2.0 * dist.sf(t.abs())
    };
    Ok(SpearmanResult {
        rho,
        p,
        n,
        degenerate: false,
    })
}

/// Significance stars: `***` p < 0.001, `**` p < 0.01, `*` p < 0.1.
pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

/// Mean correlation through the Fisher z transform.
pub fn fisher_mean(rhos: &[f64]) -> f64 {
    const LIM: f64 = 1.0 - 1e-12;
    // identical inputs come back exactly, not through a tanh/atanh round trip
    if rhos.iter().all(|&r| r == rhos[0]) {
        return rhos[0];
    }
    let z = rhos.iter().map(|r| r.clamp(-LIM, LIM).atanh()).sum::<f64>() / rhos.len() as f64;
    z.tanh()
}

/// Stouffer combination of two-sided p-values carrying the sign of each
/// group's correlation. Returns the two-sided combined p.
pub fn stouffer(signed: &[(f64, f64)]) -> f64 {
    let norm = Normal::standard();
    let k = signed.len() as f64;
    let z: f64 = signed
        .iter()
        .map(|&(rho, p)| {
            // lower tail keeps precision for tiny p
            let z = -norm.inverse_cdf(p.clamp(1e-300, 1.0) / 2.0);
            rho.signum() * z
        })
        .sum::<f64>()
        / k.sqrt();
    2.0 * norm.sf(z.abs())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupRho {
    pub group: String,
    pub rho: f64,
    pub p: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationEntry {
    pub var_a: String,
    pub var_b: String,
    pub mean_rho: f64,
    pub combined_p: f64,
    pub stars: &'static str,
    pub groups: Vec<GroupRho>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub entries: Vec<CorrelationEntry>,
    /// Groups removed by stationarity screening, with the offending column.
    pub excluded_groups: Vec<(String, String)>,
    pub n_groups: usize,
}

/// Unit-root screening applied to each group before correlating.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Screening {
    None,
    /// Every used column must reject a unit root under both ADF and PP at
    /// this level (0.01, 0.05 or 0.10).
    BothTests(f64),
}

fn column_passes(values: &[Option<f64>], level: f64) -> bool {
    let ys: Vec<f64> = values.iter().flatten().copied().collect();
    match (adf_test(&ys), pp_test(&ys)) {
        (Ok(a), Ok(p)) => a.p_band.below(level) && p.p_band.below(level),
        _ => false,
    }
}

/// Correlates each variable pair within every group and aggregates across
/// groups: Fisher-z mean of the group correlations and a signed Stouffer
/// combination of their p-values. Pairs with fewer than 3 complete rows or
/// a constant side in a group skip that group.
pub fn correlate_groups(
    groups: &[MetricSeries],
    pairs: &[(String, String)],
    screening: Screening,
) -> Result<CorrelationReport> {
    if groups.is_empty() {
        return Err(CoevoError::invalid("no groups to correlate"));
    }
    let mut used: Vec<&str> = pairs.iter().flat_map(|(a, b)| [a.as_str(), b.as_str()]).collect();
    used.sort_unstable();
    used.dedup();

    let mut report = CorrelationReport::default();
    let mut kept = Vec::new();
    for (gi, g) in groups.iter().enumerate() {
        let name = g.group.clone().unwrap_or_else(|| format!("group{gi}"));
        let mut failed = None;
        for col in &used {
            let values = g.require(col)?;
            if let Screening::BothTests(level) = screening {
                if !column_passes(values, level) {
                    failed = Some(col.to_string());
                    break;
                }
            }
        }
        match failed {
            Some(col) => report.excluded_groups.push((name, col)),
            None => kept.push((name, g)),
        }
    }
    if kept.is_empty() {
        return Err(CoevoError::Degenerate(
            "every group failed stationarity screening".into(),
        ));
    }
    report.n_groups = kept.len();

    for (a, b) in pairs {
        let mut per_group = Vec::new();
        for (name, g) in &kept {
            match spearman(g.require(a)?, g.require(b)?) {
                Ok(r) if !r.degenerate => per_group.push(GroupRho {
                    group: name.clone(),
                    rho: r.rho,
                    p: r.p,
                    n: r.n,
                }),
                _ => {}
            }
        }
        if per_group.is_empty() {
            continue;
        }
        let rhos: Vec<f64> = per_group.iter().map(|g| g.rho).collect();
        let signed: Vec<(f64, f64)> = per_group.iter().map(|g| (g.rho, g.p)).collect();
        let combined_p = stouffer(&signed);
        report.entries.push(CorrelationEntry {
            var_a: a.clone(),
            var_b: b.clone(),
            mean_rho: fisher_mean(&rhos),
            combined_p,
            stars: stars(combined_p),
            groups: per_group,
        });
    }
    Ok(report)
}
