//! Correlation and regression results against values computed with scipy
//! and statsmodels (see `data/reference_stats.json`).

use approx::assert_abs_diff_eq;
use coevo_core::stats::{fisher_mean, nw_regress, ols_fit, spearman, stouffer};
use serde_json::Value;

fn reference() -> Value {
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/tests/data/reference_stats.json"
    ))
    .unwrap();
    serde_json::from_str(&text).unwrap()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect()
}

fn columns(v: &Value) -> Vec<Vec<f64>> {
    v.as_array().unwrap().iter().map(floats).collect()
}

#[test]
fn spearman_with_ties_matches_scipy() {
    let r = &reference()["spearman"];
    let x: Vec<Option<f64>> = floats(&r["x"]).into_iter().map(Some).collect();
    let y: Vec<Option<f64>> = floats(&r["y"]).into_iter().map(Some).collect();
    let s = spearman(&x, &y).unwrap();
    assert_abs_diff_eq!(s.rho, r["rho"].as_f64().unwrap(), epsilon = 1e-12);
    let p = r["p"].as_f64().unwrap();
    assert!((s.p - p).abs() / p < 1e-8, "{} vs {p}", s.p);
}

#[test]
fn group_combination_matches_reference() {
    let r = reference();
    let pairs: Vec<(f64, f64)> = r["stouffer"]["pairs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| (p[0].as_f64().unwrap(), p[1].as_f64().unwrap()))
        .collect();
    assert_abs_diff_eq!(
        stouffer(&pairs),
        r["stouffer"]["p"].as_f64().unwrap(),
        epsilon = 1e-12
    );
    assert_abs_diff_eq!(
        fisher_mean(&floats(&r["fisher"]["rhos"])),
        r["fisher"]["mean"].as_f64().unwrap(),
        epsilon = 1e-12
    );
}

#[test]
fn ols_matches_statsmodels() {
    let r = &reference()["ols"];
    let fit = ols_fit(&columns(&r["x"]), &floats(&r["y"])).unwrap();
    assert_abs_diff_eq!(fit.r2, r["r2"].as_f64().unwrap(), epsilon = 1e-10);
    let params = floats(&r["params"]);
    assert_abs_diff_eq!(fit.intercept, params[0], epsilon = 1e-10);
    for (c, p) in fit.coefficients.iter().zip(&params[1..]) {
        assert_abs_diff_eq!(c.unwrap(), *p, epsilon = 1e-10);
    }
}

#[test]
fn nadaraya_watson_loo_matches_statsmodels() {
    let r = &reference()["nw"];
    let x = columns(&r["x"]);
    let y = floats(&r["y"]);
    let bw = floats(&r["bandwidths"]);
    let expected = r["loo_r2"].as_f64().unwrap();
    let explicit = nw_regress(&x, &y, Some(&bw)).unwrap();
    assert_abs_diff_eq!(explicit.loo_r2.unwrap(), expected, epsilon = 1e-10);
    // the default rule gives the same widths
    let default = nw_regress(&x, &y, None).unwrap();
    for (a, b) in default.bandwidths.iter().zip(&bw) {
        assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
    }
    assert_abs_diff_eq!(default.loo_r2.unwrap(), expected, epsilon = 1e-10);
}
