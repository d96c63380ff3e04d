//! Thin wrappers around the distribution CDFs needed for p-values, plus a
//! small least-squares routine shared by the regression-based predictors and
//! tests.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Two-sided p-value of a standard-normal statistic.
pub fn normal_two_sided_p(stat: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).expect("unit normal");
    let p = 2.0 * (1.0 - n.cdf(stat.abs()));
    p.clamp(0.0, 1.0)
}

/// Upper-tail probability of a chi-squared distribution with `dof` degrees
/// of freedom.
pub fn chi2_sf(stat: f64, dof: usize) -> f64 {
    if stat <= 0.0 {
        return 1.0;
    }
    let chi = ChiSquared::new(dof as f64).expect("positive dof");
    (1.0 - chi.cdf(stat)).clamp(0.0, 1.0)
}

/// OLS fit that survives rank-deficient designs by greedily dropping
/// collinear columns.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct OlsFit {
    /// Coefficient per original column; dropped columns get 0.
    pub coef: Vec<f64>,
    /// Indices of dropped columns, ascending.
    pub dropped: Vec<usize>,
    /// Rank of the retained design (= number of kept columns).
    pub rank: usize,
    /// Fitted values Xβ̂ on the training rows.
    pub fitted: Vec<f64>,
}

/// Least squares of `y` on the rows of `x_rows`, scanning columns left to
/// right and dropping any whose residual after projection onto the kept ones
/// is below a relative tolerance. Earlier columns therefore take precedence —
/// put the intercept first.
pub(crate) fn ols_drop_collinear(x_rows: &[Vec<f64>], y: &[f64]) -> Result<OlsFit> {
    let t = x_rows.len();
    if t == 0 || t != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "design has {t} rows, response has {}",
            y.len()
        )));
    }
    let p = x_rows[0].len();
    if p == 0 || x_rows.iter().any(|r| r.len() != p) {
        return Err(Error::DimensionMismatch("ragged or empty design matrix".into()));
    }
    if x_rows.iter().flatten().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ols inputs".into()));
    }

    // Modified Gram-Schmidt to pick a well-conditioned column subset.
    let col = |j: usize| -> Vec<f64> { x_rows.iter().map(|r| r[j]).collect() };
    let mut basis: Vec<Vec<f64>> = Vec::new(); // orthonormal
    let mut kept: Vec<usize> = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..p {
        let mut v = col(j);
        let orig_norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= dot * bi;
            }
        }
        let resid_norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if resid_norm <= 1e-10 * orig_norm.max(1e-300) || orig_norm == 0.0 {
            dropped.push(j);
            continue;
        }
        for vi in v.iter_mut() {
            *vi /= resid_norm;
        }
        basis.push(v);
        kept.push(j);
    }
    if kept.is_empty() {
        return Err(Error::Degenerate("all design columns are zero".into()));
    }

    // Solve on the kept columns via normal equations (dimensions are tiny).
    let k = kept.len();
    let x = nalgebra::DMatrix::from_fn(t, k, |i, jj| x_rows[i][kept[jj]]);
    let yv = nalgebra::DVector::from_column_slice(y);
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * &yv;
    let beta_kept = xtx
        .lu()
        .solve(&xty)
        .ok_or_else(|| Error::Degenerate("normal equations singular after pruning".into()))?;
    let mut coef = vec![0.0; p];
    for (jj, &j) in kept.iter().enumerate() {
        coef[j] = beta_kept[jj];
    }
    let fitted = (x * beta_kept).iter().copied().collect();
    Ok(OlsFit { coef, dropped, rank: k, fitted })
}
