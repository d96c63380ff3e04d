//! Low-rank completion of the day × intraday spot-variance matrix.
//!
//! The D×n matrix Σ̂ stacks one estimated variance curve per day; on the
//! current day (row D) only the first n₁ intraday points are observed. If the
//! underlying matrix has rank r with a nonsingular core, the missing block
//! satisfies Σ₂₂ = Σ₂₁Σ₁₁⁺Σ₁₂, estimated stably from the leading singular
//! subspaces of the two fully observed blocks:
//!
//! ```text
//! Σ̃₂₂ = Σ̂₂₁ · V̂₁₁ · (Û₁₁ᵀ Σ̂₁₁ V̂₁₁)⁻¹ · Û₁₁ᵀ · Σ̂₁₂
//! ```
//!
//! with Û₁₁ the leading-r left singular vectors of the (D−1)×n history block
//! Σ̂₁• and V̂₁₁ the leading-r right singular vectors of the D×n₁ observed
//! columns Σ̂•₁. The module also provides the benchmark predictors (column
//! mean, per-column AR(1), principal components, HAR with diurnal effects)
//! evaluated on the same matrix.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::ols_drop_collinear;

/// Day × intraday matrix of spot-variance estimates with a partially observed
/// last row.
///
/// Rows 1..D−1 are fully observed history; row D is the current day, observed
/// only in columns 1..n₁. Entries beyond column n₁ of the last row are
/// carried but never read by the predictors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolMatrix {
    data: DMatrix<f64>,
    n1: usize,
}

impl VolMatrix {
    /// Validates shape (D ≥ 2, 1 ≤ n₁ < n) and that every *readable* entry —
    /// all of the first D−1 rows plus the observed part of the last row — is
    /// finite and strictly positive.
    pub fn new(data: DMatrix<f64>, n1: usize) -> Result<Self> {
        let (d, n) = data.shape();
        if d < 2 {
            return Err(Error::InsufficientData(format!("need D >= 2 days, got {d}")));
        }
        if n < 2 || n1 < 1 || n1 >= n {
            return Err(Error::InvalidParameter(format!(
                "need 1 <= n1 < n, got n1={n1}, n={n}"
            )));
        }
        for i in 0..d {
            let cols = if i + 1 == d { n1 } else { n };
            for j in 0..cols {
                let v = data[(i, j)];
                if !v.is_finite() || v <= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "vol matrix entry ({i},{j}) = {v} must be finite and positive"
                    )));
                }
            }
        }
        Ok(VolMatrix { data, n1 })
    }

    pub fn d(&self) -> usize {
        self.data.nrows()
    }

    pub fn n(&self) -> usize {
        self.data.ncols()
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    /// Number of hidden columns n₂ = n − n₁.
    pub fn n2(&self) -> usize {
        self.n() - self.n1
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Σ̂₁• — the (D−1)×n fully observed history.
    pub fn history(&self) -> DMatrix<f64> {
        self.data.rows(0, self.d() - 1).into_owned()
    }

    /// Σ̂•₁ — all D rows, observed columns.
    pub fn observed_cols(&self) -> DMatrix<f64> {
        self.data.columns(0, self.n1).into_owned()
    }

    /// Σ̂₁₁ — history rows, observed columns.
    pub fn block11(&self) -> DMatrix<f64> {
        self.data.view((0, 0), (self.d() - 1, self.n1)).into_owned()
    }

    /// Σ̂₁₂ — history rows, hidden columns.
    pub fn block12(&self) -> DMatrix<f64> {
        self.data
            .view((0, self.n1), (self.d() - 1, self.n2()))
            .into_owned()
    }

    /// Σ̂₂₁ — last row, observed columns.
    pub fn block21(&self) -> DMatrix<f64> {
        self.data.view((self.d() - 1, 0), (1, self.n1)).into_owned()
    }

    /// Hidden-block truth, for evaluation against simulated data only.
    pub fn hidden_row(&self) -> Vec<f64> {
        (self.n1..self.n())
            .map(|j| self.data[(self.d() - 1, j)])
            .collect()
    }
}

/// Prediction method tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Sip,
    Ave,
    Ar1,
    Pc,
    HarD,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Sip, Method::Ave, Method::Ar1, Method::Pc, Method::HarD];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Sip => "sip",
            Method::Ave => "ave",
            Method::Ar1 => "ar1",
            Method::Pc => "pc",
            Method::HarD => "har_d",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sip" => Ok(Method::Sip),
            "ave" => Ok(Method::Ave),
            "ar1" => Ok(Method::Ar1),
            "pc" => Ok(Method::Pc),
            "har_d" | "hard" => Ok(Method::HarD),
            other => Err(Error::InvalidParameter(format!("unknown method '{other}'"))),
        }
    }
}

/// Forecast of the hidden tail of the current day's curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub method: Method,
    /// Predicted variances for columns n₁+1..n, reported as computed (may be
    /// negative; flooring happens where positivity is required).
    pub values: Vec<f64>,
    /// Rank actually used, for the low-rank methods.
    pub rank: Option<usize>,
    /// Condition number of the inverted core (SIP only).
    pub conditioning: Option<f64>,
    /// Human-readable notes about degraded paths taken (column-mean
    /// fallbacks, dropped collinear regressors).
    pub fallbacks: Vec<String>,
}

/// Leading-r singular factors of a matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    /// p×r left singular vectors.
    pub u: DMatrix<f64>,
    /// Singular values, descending.
    pub s: Vec<f64>,
    /// r×q right singular vectors, transposed.
    pub vt: DMatrix<f64>,
}

impl SvdFactors {
    /// U·diag(S)·Vᵀ.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let r = self.s.len();
        let mut scaled = self.u.clone();
        for k in 0..r {
            let sk = self.s[k];
            scaled.column_mut(k).scale_mut(sk);
        }
        &scaled * &self.vt
    }
}

/// Leading-r SVD factors, singular values sorted descending. The
/// reconstruction is the best rank-r approximation in Frobenius norm.
pub fn truncated_svd(m: &DMatrix<f64>, r: usize) -> Result<SvdFactors> {
    let (p, q) = m.shape();
    if r < 1 || r > p.min(q) {
        return Err(Error::RankOutOfRange { r, max: p.min(q) });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("svd input".into()));
    }
    let mut svd = m.clone().svd(true, true);
    svd.sort_by_singular_values();
    let u_full = svd.u.as_ref().expect("u requested");
    let vt_full = svd.v_t.as_ref().expect("vt requested");
    let u = u_full.columns(0, r).into_owned();
    let vt = vt_full.rows(0, r).into_owned();
    let s = svd.singular_values.iter().take(r).copied().collect();
    Ok(SvdFactors { u, s, vt })
}

/// Criterion for data-driven rank selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankMethod {
    /// argmax λ_k/λ_{k+1}.
    Ratio,
    /// argmax λ_k − λ_{k+1}.
    Gap,
}

/// Rank maximizing the singular-value ratio or gap over k = 1..r_max, ties
/// broken toward smaller k. A zero λ_{k+1} means an exactly rank-k matrix:
/// the ratio criterion returns that k immediately (infinite ratio).
pub fn select_rank(singular_values: &[f64], r_max: usize, method: RankMethod) -> Result<usize> {
    if r_max < 1 || r_max >= singular_values.len() {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= r_max < len, got r_max={r_max}, len={}",
            singular_values.len()
        )));
    }
    for w in singular_values.windows(2) {
        if !(w[0].is_finite() && w[1].is_finite()) || w[0] < 0.0 || w[1] < 0.0 {
            return Err(Error::InvalidParameter("singular values must be finite and >= 0".into()));
        }
        if w[1] > w[0] {
            return Err(Error::InvalidParameter("singular values must be non-increasing".into()));
        }
    }
    let mut best_k = 1;
    let mut best = f64::NEG_INFINITY;
    for k in 1..=r_max {
        let (lam_k, lam_next) = (singular_values[k - 1], singular_values[k]);
        let score = match method {
            RankMethod::Ratio => {
                if lam_next == 0.0 {
                    return Ok(k);
                }
                lam_k / lam_next
            }
            RankMethod::Gap => lam_k - lam_next,
        };
        if score > best {
            best = score;
            best_k = k;
        }
    }
    Ok(best_k)
}

/// How to pick the rank fed to the low-rank predictors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RankPolicy {
    Fixed { r: usize },
    Ratio { r_max: usize },
    Gap { r_max: usize },
}

impl RankPolicy {
    /// Resolves the policy on the singular values of the fully observed
    /// history block Σ̂₁•, capped so the result is feasible for sip_predict
    /// (r ≤ min(D−1, n₁)).
    pub fn resolve(&self, vm: &VolMatrix) -> Result<usize> {
        let feasible = (vm.d() - 1).min(vm.n1());
        match *self {
            RankPolicy::Fixed { r } => {
                if r < 1 || r > feasible {
                    Err(Error::RankOutOfRange { r, max: feasible })
                } else {
                    Ok(r)
                }
            }
            RankPolicy::Ratio { r_max } | RankPolicy::Gap { r_max } => {
                let hist = vm.history();
                let mut svd = hist.svd(false, false);
                svd.sort_by_singular_values();
                // Values below numerical precision are floating-point junk
                // whose ratios are meaningless; clip them to exact zeros so
                // an exactly rank-k input selects k.
                let tol = 1e-12 * svd.singular_values[0];
                let values: Vec<f64> = svd
                    .singular_values
                    .iter()
                    .map(|&v| if v < tol { 0.0 } else { v })
                    .collect();
                let cap = r_max.min(feasible).min(values.len() - 1).max(1);
                let method = if matches!(self, RankPolicy::Ratio { .. }) {
                    RankMethod::Ratio
                } else {
                    RankMethod::Gap
                };
                select_rank(&values, cap, method)
            }
        }
    }
}

/// Knobs for the core inversion inside SIP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SipOptions {
    /// Ridge added to the core diagonal before inversion (0 = none).
    pub ridge: f64,
    /// Condition-number ceiling; beyond it the core is treated as singular.
    pub cond_limit: f64,
}

impl Default for SipOptions {
    fn default() -> Self {
        SipOptions { ridge: 0.0, cond_limit: 1e12 }
    }
}

/// The two singular-subspace factors entering the SIP formula. Exposed so
/// invariance checks can inject modified factors (e.g. sign flips).
#[derive(Debug, Clone, PartialEq)]
pub struct SipFactors {
    /// (D−1)×r: leading left singular vectors of Σ̂₁•.
    pub u11: DMatrix<f64>,
    /// n₁×r: leading right singular vectors of Σ̂•₁.
    pub v11: DMatrix<f64>,
}

/// Computes Û₁₁ and V̂₁₁ for a given rank.
pub fn compute_sip_factors(vm: &VolMatrix, r: usize) -> Result<SipFactors> {
    let feasible = (vm.d() - 1).min(vm.n1());
    if r < 1 || r > feasible {
        return Err(Error::RankOutOfRange { r, max: feasible });
    }
    let u11 = truncated_svd(&vm.history(), r)?.u;
    let v11 = truncated_svd(&vm.observed_cols(), r)?.vt.transpose();
    Ok(SipFactors { u11, v11 })
}

/// SIP prediction from explicitly supplied factors.
pub fn sip_predict_from_factors(
    vm: &VolMatrix,
    factors: &SipFactors,
    opts: &SipOptions,
) -> Result<Prediction> {
    let r = factors.u11.ncols();
    if factors.v11.ncols() != r
        || factors.u11.nrows() != vm.d() - 1
        || factors.v11.nrows() != vm.n1()
    {
        return Err(Error::DimensionMismatch(format!(
            "factor shapes u11 {}x{}, v11 {}x{} incompatible with D={}, n1={}",
            factors.u11.nrows(),
            factors.u11.ncols(),
            factors.v11.nrows(),
            factors.v11.ncols(),
            vm.d(),
            vm.n1()
        )));
    }
    // Core C = Û₁₁ᵀ Σ̂₁₁ V̂₁₁ (r×r), optionally ridged.
    let mut core = factors.u11.transpose() * vm.block11() * &factors.v11;
    if opts.ridge != 0.0 {
        for k in 0..r {
            core[(k, k)] += opts.ridge;
        }
    }
    let mut core_svd = core.clone().svd(false, false);
    core_svd.sort_by_singular_values();
    let smax = core_svd.singular_values[0];
    let smin = core_svd.singular_values[r - 1];
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !cond.is_finite() || cond > opts.cond_limit {
        return Err(Error::IllConditioned { cond, limit: opts.cond_limit });
    }
    // w = C⁻¹ Û₁₁ᵀ Σ̂₁₂ via LU solve rather than an explicit inverse.
    let rhs = factors.u11.transpose() * vm.block12();
    let w = core
        .lu()
        .solve(&rhs)
        .ok_or(Error::IllConditioned { cond, limit: opts.cond_limit })?;
    let tail = vm.block21() * &factors.v11 * w;
    Ok(Prediction {
        method: Method::Sip,
        values: tail.row(0).iter().copied().collect(),
        rank: Some(r),
        conditioning: Some(cond),
        fallbacks: Vec::new(),
    })
}

/// Low-rank completion of the hidden block at rank r with default options.
pub fn sip_predict(vm: &VolMatrix, r: usize) -> Result<Prediction> {
    sip_predict_with(vm, r, &SipOptions::default())
}

pub fn sip_predict_with(vm: &VolMatrix, r: usize, opts: &SipOptions) -> Result<Prediction> {
    let factors = compute_sip_factors(vm, r)?;
    sip_predict_from_factors(vm, &factors, opts)
}

/// Tail of the last history row of the best rank-r approximation of Σ̂₁•.
pub fn pc_predict(vm: &VolMatrix, r: usize) -> Result<Prediction> {
    let hist = vm.history();
    let factors = truncated_svd(&hist, r)?;
    let approx = factors.reconstruct();
    let last = vm.d() - 2;
    let values = (vm.n1()..vm.n()).map(|j| approx[(last, j)]).collect();
    Ok(Prediction {
        method: Method::Pc,
        values,
        rank: Some(r),
        conditioning: None,
        fallbacks: Vec::new(),
    })
}

/// Column means of the history rows over the hidden columns.
pub fn ave_predict(vm: &VolMatrix) -> Result<Prediction> {
    let hist = vm.history();
    let dh = hist.nrows() as f64;
    let values = (vm.n1()..vm.n())
        .map(|j| hist.column(j).sum() / dh)
        .collect();
    Ok(Prediction {
        method: Method::Ave,
        values,
        rank: None,
        conditioning: None,
        fallbacks: Vec::new(),
    })
}

/// Per-column AR(1): for each hidden column j, OLS of c_{i,j} on
/// (1, c_{i−1,j}) over history days i = 2..D−1, forecast α̂ + β̂·c_{D−1,j}.
/// A column with zero lag variance falls back to its column mean (flagged).
pub fn ar1_predict(vm: &VolMatrix) -> Result<Prediction> {
    let d = vm.d();
    if d < 3 {
        return Err(Error::InsufficientData(format!(
            "AR(1) needs D >= 3 for at least one lag pair, got D={d}"
        )));
    }
    let hist = vm.history();
    let dh = hist.nrows(); // D−1 rows, lag pairs (i−1, i) for i = 1..dh−1.
    let mut values = Vec::with_capacity(vm.n2());
    let mut fallbacks = Vec::new();
    for j in vm.n1()..vm.n() {
        let col = hist.column(j);
        let t = dh - 1;
        let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        for i in 1..dh {
            let x = col[i - 1];
            let y = col[i];
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        let tf = t as f64;
        let var_x = sxx - sx * sx / tf;
        if var_x <= 1e-14 * sxx.max(1.0) {
            let mean = col.sum() / dh as f64;
            values.push(mean);
            fallbacks.push(format!(
                "ar1: column {} has zero lag variance; used column mean",
                j + 1
            ));
            continue;
        }
        let beta = (sxy - sx * sy / tf) / var_x;
        let alpha = (sy - beta * sx) / tf;
        values.push(alpha + beta * col[dh - 1]);
    }
    Ok(Prediction {
        method: Method::Ar1,
        values,
        rank: None,
        conditioning: None,
        fallbacks,
    })
}

/// Precomputed regressors for the HAR-with-diurnal-effects benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct HarInputs {
    /// Column means over the history rows (length n) — the diurnal profile.
    pub diurnal: Vec<f64>,
    /// RV_d(i) = mean of day i's n spot values, i over the history rows.
    pub rv_daily: Vec<f64>,
    /// 5-day trailing means of rv_daily (entry i averages days i−4..i).
    pub rv_weekly: Vec<f64>,
    /// 22-day trailing means.
    pub rv_monthly: Vec<f64>,
}

impl HarInputs {
    pub fn from_matrix(vm: &VolMatrix) -> Self {
        let hist = vm.history();
        let (dh, n) = hist.shape();
        let diurnal = (0..n).map(|j| hist.column(j).sum() / dh as f64).collect();
        let rv_daily: Vec<f64> = (0..dh).map(|i| hist.row(i).sum() / n as f64).collect();
        let trailing = |len: usize| -> Vec<f64> {
            (0..dh)
                .map(|i| {
                    if i + 1 < len {
                        f64::NAN
                    } else {
                        rv_daily[i + 1 - len..=i].iter().sum::<f64>() / len as f64
                    }
                })
                .collect()
        };
        HarInputs {
            diurnal,
            rv_weekly: trailing(5),
            rv_monthly: trailing(22),
            rv_daily,
        }
    }
}

/// HAR-D: pooled OLS of ĉ_{i,j} on (1, RV_d(i−1), RV_w(i−1), RV_m(i−1),
/// diurnal_j, ĉ_{i,n₁}) over history days i with 22 prior days available and
/// all columns j; forecast for day D uses its own observed ĉ_{D,n₁}.
/// Collinear regressors are dropped greedily (flagged).
pub fn har_d_predict(vm: &VolMatrix, inputs: &HarInputs) -> Result<Prediction> {
    let d = vm.d();
    if d < 24 {
        return Err(Error::InsufficientData(format!(
            "HAR-D needs D >= 24 (22 days of monthly RV plus one training day), got D={d}"
        )));
    }
    let hist = vm.history();
    let (dh, n) = hist.shape();
    let n1 = vm.n1();
    // Training rows: day index i (0-based) with rv_monthly available at i−1.
    let mut x_rows: Vec<Vec<f64>> = Vec::new();
    let mut y = Vec::new();
    for i in 22..dh {
        let lag = i - 1;
        for j in 0..n {
            x_rows.push(vec![
                1.0,
                inputs.rv_daily[lag],
                inputs.rv_weekly[lag],
                inputs.rv_monthly[lag],
                inputs.diurnal[j],
                hist[(i, n1 - 1)],
            ]);
            y.push(hist[(i, j)]);
        }
    }
    let fit = ols_drop_collinear(&x_rows, &y)?;
    let mut fallbacks = Vec::new();
    if !fit.dropped.is_empty() {
        let names = ["intercept", "rv_d", "rv_w", "rv_m", "diurnal", "last_obs"];
        let dropped: Vec<&str> = fit.dropped.iter().map(|&ix| names[ix]).collect();
        fallbacks.push(format!("har_d: dropped collinear regressors [{}]", dropped.join(", ")));
    }
    // Day-D regressors share the lagged RVs ending at the last history day.
    let lag = dh - 1;
    let last_obs = vm.data()[(d - 1, n1 - 1)];
    let values = (n1..n)
        .map(|j| {
            let x = [
                1.0,
                inputs.rv_daily[lag],
                inputs.rv_weekly[lag],
                inputs.rv_monthly[lag],
                inputs.diurnal[j],
                last_obs,
            ];
            x.iter().zip(&fit.coef).map(|(a, b)| a * b).sum()
        })
        .collect();
    Ok(Prediction {
        method: Method::HarD,
        values,
        rank: None,
        conditioning: None,
        fallbacks,
    })
}

/// Runs one method under a rank policy; the policy is resolved once per call
/// for the rank-based methods and ignored by the others.
pub fn predict(
    vm: &VolMatrix,
    method: Method,
    policy: &RankPolicy,
    opts: &SipOptions,
) -> Result<Prediction> {
    match method {
        Method::Sip => {
            let r = policy.resolve(vm)?;
            sip_predict_with(vm, r, opts)
        }
        Method::Pc => {
            let r = policy.resolve(vm)?;
            pc_predict(vm, r)
        }
        Method::Ave => ave_predict(vm),
        Method::Ar1 => ar1_predict(vm),
        Method::HarD => {
            let inputs = HarInputs::from_matrix(vm);
            har_d_predict(vm, &inputs)
        }
    }
}
