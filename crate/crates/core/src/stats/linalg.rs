use nalgebra::{DMatrix, DVector};

/// Least-squares fit through a Householder QR of the design matrix.
pub(crate) struct LsFit {
    pub beta: Vec<f64>,
    pub residuals: Vec<f64>,
    pub ssr: f64,
    /// Standard errors from `s^2 (X'X)^-1` with `s^2 = SSR / (n - k)`.
    pub std_err: Vec<f64>,
}

/// `columns` are the regressors. Callers guarantee full column rank and
/// more rows than columns.
pub(crate) fn least_squares(columns: &[Vec<f64>], y: &[f64]) -> LsFit {
    let n = y.len();
    let k = columns.len();
    let x = DMatrix::from_fn(n, k, |i, j| columns[j][i]);
    let yv = DVector::from_column_slice(y);
    let qr = x.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let qty = q.transpose() * &yv;
    let beta = r.solve_upper_triangular(&qty).expect("full-rank design");
    let resid = &yv - &x * &beta;
    let ssr = resid.norm_squared();
    let dof = n.saturating_sub(k).max(1) as f64;
    let s2 = ssr / dof;
    let rinv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .expect("full-rank design");
    // (X'X)^-1 = R^-1 R^-T; diagonal entries are the squared row norms of R^-1
    let std_err = (0..k).map(|i| (s2 * rinv.row(i).norm_squared()).sqrt()).collect();
    LsFit {
        beta: beta.iter().copied().collect(),
        residuals: resid.iter().copied().collect(),
        ssr,
        std_err,
    }
}

/// Indices of columns that are not (numerically) in the span of earlier
/// columns, judged by the diagonal of R relative to the column norm.
pub(crate) fn independent_columns(columns: &[Vec<f64>], rel_tol: f64) -> Vec<usize> {
    if columns.is_empty() {
        return Vec::new();
    }
    let n = columns[0].len();
    let x = DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i]);
    let r = x.qr().r();
    (0..columns.len())
        .filter(|&j| {
            let norm = columns[j].iter().map(|v| v * v).sum::<f64>().sqrt();
            j < r.nrows() && norm > 0.0 && r[(j, j)].abs() > rel_tol * norm
        })
        .collect()
}
