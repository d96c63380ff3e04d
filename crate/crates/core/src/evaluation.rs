//! Forecast evaluation: losses, comparison tests, multiple-testing
//! correction, VaR coverage backtests, and the rolling-window harness that
//! ties them together.
//!
//! Losses are pooled over (day, intraday point) pairs. Forecast-accuracy
//! comparisons are Diebold–Mariano tests with a Newey–West HAC variance
//! (Bartlett kernel, lag ⌊T^{1/3}⌋), and all p-values produced by one
//! backtest report form a single Benjamini–Hochberg family. VaR backtests
//! standardize 5-minute returns by in-sample conditional variances, read an
//! empirical quantile off the standardized sample, and test the resulting
//! hit sequences with the unconditional-coverage, conditional-coverage, and
//! dynamic-quantile statistics.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lowrank::{predict, Method, RankPolicy, SipOptions, VolMatrix};
use crate::stats::{chi2_sf, normal_two_sided_p, ols_drop_collinear};

/// Variance floor applied wherever a prediction enters a logarithm or a
/// square root (QLIKE, VaR). Raw predictions are reported unfloored.
pub const FLOOR_EPS: f64 = 1e-12;

/// Denominator convention for MSPE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Divide by the full grid size n even though only n₂ terms are summed.
    PerN,
    /// Divide by the number of predicted points n₂.
    PerN2,
}

/// Mean squared prediction error of the hidden tail. `n` is the full
/// intraday grid size used by the `PerN` normalization.
pub fn mspe(pred: &[f64], truth: &[f64], n: usize, norm: Normalization) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "mspe length mismatch: {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() || n == 0 {
        return Err(Error::InsufficientData("mspe on empty input".into()));
    }
    let sse: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(match norm {
        Normalization::PerN => sse / n as f64,
        Normalization::PerN2 => sse / pred.len() as f64,
    })
}

/// QLIKE loss: mean of log(pred) + proxy/pred. Both inputs must be strictly
/// positive (floor upstream).
pub fn qlike(pred: &[f64], proxy: &[f64]) -> Result<f64> {
    if pred.len() != proxy.len() {
        return Err(Error::DimensionMismatch(format!(
            "qlike length mismatch: {} vs {}",
            pred.len(),
            proxy.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InsufficientData("qlike on empty input".into()));
    }
    let mut total = 0.0;
    for (p, c) in pred.iter().zip(proxy) {
        if !(*p > 0.0) || !(*c > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "qlike needs positive inputs, got pred={p}, proxy={c}"
            )));
        }
        total += p.ln() + c / p;
    }
    Ok(total / pred.len() as f64)
}

/// Per-observation losses of one method, keyed by (day, intraday index) so
/// comparisons can verify alignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSeries {
    pub method: Method,
    pub values: Vec<f64>,
    pub keys: Vec<(usize, usize)>,
}

impl LossSeries {
    pub fn new(method: Method, values: Vec<f64>, keys: Vec<(usize, usize)>) -> Result<Self> {
        if values.len() != keys.len() {
            return Err(Error::DimensionMismatch(format!(
                "loss series has {} values but {} keys",
                values.len(),
                keys.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("loss series".into()));
        }
        Ok(LossSeries { method, values, keys })
    }
}

/// Diebold–Mariano comparison result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Newey–West long-run variance of the loss differential.
    pub hac_variance: f64,
    /// Bartlett truncation lag ⌊T^{1/3}⌋.
    pub lag: usize,
    pub t: usize,
}

/// Diebold–Mariano test of equal predictive accuracy on aligned loss series.
/// The differential is `loss_a − loss_b`, so a positive statistic means
/// method A lost more.
pub fn dm_test(loss_a: &LossSeries, loss_b: &LossSeries) -> Result<DmResult> {
    if loss_a.keys != loss_b.keys {
        return Err(Error::DimensionMismatch(
            "dm_test requires identically keyed loss series".into(),
        ));
    }
    let d: Vec<f64> = loss_a
        .values
        .iter()
        .zip(&loss_b.values)
        .map(|(a, b)| a - b)
        .collect();
    dm_from_differentials(&d)
}

/// DM statistic from a precomputed loss-differential series.
pub fn dm_from_differentials(d: &[f64]) -> Result<DmResult> {
    let t = d.len();
    if t < 10 {
        return Err(Error::InsufficientData(format!(
            "dm test needs T >= 10, got {t}"
        )));
    }
    let tf = t as f64;
    let mean = d.iter().sum::<f64>() / tf;
    let lag = tf.powf(1.0 / 3.0).floor() as usize;
    // Bartlett-weighted Newey–West variance: γ₀ + 2Σ (1 − l/(L+1)) γ_l.
    let gamma = |l: usize| -> f64 {
        (l..t).map(|i| (d[i] - mean) * (d[i - l] - mean)).sum::<f64>() / tf
    };
    let mut hac = gamma(0);
    for l in 1..=lag.min(t - 1) {
        hac += 2.0 * (1.0 - l as f64 / (lag as f64 + 1.0)) * gamma(l);
    }
    let scale = d.iter().map(|v| v * v).sum::<f64>() / tf;
    if hac <= 1e-300 || hac <= 1e-16 * scale {
        if mean.abs() <= 1e-300 || (scale > 0.0 && mean.abs() <= 1e-12 * scale.sqrt()) {
            // Identical series: no evidence either way.
            return Ok(DmResult { statistic: 0.0, p_value: 1.0, hac_variance: 0.0, lag, t });
        }
        return Err(Error::Degenerate(format!(
            "dm test: zero HAC variance with nonzero mean differential {mean}"
        )));
    }
    let statistic = mean / (hac / tf).sqrt();
    Ok(DmResult {
        statistic,
        p_value: normal_two_sided_p(statistic),
        hac_variance: hac,
        lag,
        t,
    })
}

/// Benjamini–Hochberg adjustment output, in the input order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BhResult {
    pub adjusted: Vec<f64>,
    pub reject: Vec<bool>,
    pub alpha: f64,
}

/// Step-up BH adjustment: p̃_(i) = min_{j ≥ i} (M·p_(j)/j) ∧ 1 over the
/// sorted order, mapped back to input positions; reject iff p̃ ≤ α.
pub fn bh_adjust(pvalues: &[f64], alpha: f64) -> Result<BhResult> {
    if !(0.0..1.0).contains(&alpha) || alpha <= 0.0 {
        return Err(Error::InvalidParameter(format!("alpha must be in (0,1), got {alpha}")));
    }
    for p in pvalues {
        if !(0.0..=1.0).contains(p) {
            return Err(Error::InvalidParameter(format!("p-value {p} outside [0,1]")));
        }
    }
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvalues[a].partial_cmp(&pvalues[b]).unwrap());
    let mut adjusted = vec![0.0; m];
    let mut running_min = 1.0f64;
    for rank in (0..m).rev() {
        let idx = order[rank];
        let candidate = (m as f64 * pvalues[idx] / (rank as f64 + 1.0)).min(1.0);
        running_min = running_min.min(candidate);
        adjusted[idx] = running_min;
    }
    let reject = adjusted.iter().map(|&p| p <= alpha).collect();
    Ok(BhResult { adjusted, reject, alpha })
}

/// Type-7 (linear interpolation) empirical quantile of an unsorted sample.
pub fn quantile_type7(sample: &[f64], q: f64) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::InsufficientData("quantile of empty sample".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidParameter(format!("quantile level {q} outside [0,1]")));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (sorted.len() as f64 - 1.0) * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Standardized in-sample returns z_t = r_t/√(vol_t·Δ) with Δ = 1/n.
pub fn standardize_returns(returns: &[f64], vols: &[f64], n: usize) -> Result<Vec<f64>> {
    if returns.len() != vols.len() {
        return Err(Error::DimensionMismatch(format!(
            "returns/vols length mismatch: {} vs {}",
            returns.len(),
            vols.len()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    let dt = 1.0 / n as f64;
    returns
        .iter()
        .zip(vols)
        .map(|(r, v)| {
            if !(*v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "nonpositive variance {v} in standardization"
                )));
            }
            Ok(r / (v * dt).sqrt())
        })
        .collect()
}

/// Empirical quantiles of the standardized in-sample returns at each q₀.
pub fn var_quantiles(returns: &[f64], vols: &[f64], n: usize, q0_list: &[f64]) -> Result<Vec<f64>> {
    let z = standardize_returns(returns, vols, n)?;
    q0_list.iter().map(|&q| quantile_type7(&z, q)).collect()
}

/// VaR forecasts VaR_t = ẑ_{q₀}·√(pred_vol_t·Δ).
pub fn var_forecast(pred_vols: &[f64], quantile: f64, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    let dt = 1.0 / n as f64;
    pred_vols
        .iter()
        .map(|v| {
            if !(*v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "nonpositive predicted variance {v} in var_forecast"
                )));
            }
            Ok(quantile * (v * dt).sqrt())
        })
        .collect()
}

/// A VaR hit sequence with its inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarSeries {
    pub q0: f64,
    pub var_values: Vec<f64>,
    pub returns: Vec<f64>,
    pub hits: Vec<bool>,
}

impl VarSeries {
    /// Builds the hit indicators hit_t = 1{r_t < VaR_t}.
    pub fn new(q0: f64, var_values: Vec<f64>, returns: Vec<f64>) -> Result<Self> {
        if !(0.0 < q0 && q0 < 1.0) {
            return Err(Error::InvalidParameter(format!("q0 must be in (0,1), got {q0}")));
        }
        if var_values.len() != returns.len() {
            return Err(Error::DimensionMismatch(format!(
                "var/returns length mismatch: {} vs {}",
                var_values.len(),
                returns.len()
            )));
        }
        let hits = returns.iter().zip(&var_values).map(|(r, v)| r < v).collect();
        Ok(VarSeries { q0, var_values, returns, hits })
    }
}

/// Result of a coverage test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageTest {
    pub statistic: f64,
    pub p_value: f64,
    pub dof: usize,
    /// Notes about degraded paths (dropped collinear DQ regressors).
    pub flags: Vec<String>,
}

#[inline]
fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// Unconditional-coverage likelihood ratio: LR = −2[ℓ(q₀) − ℓ(p̂)] with
/// p̂ = Σhits/T, referred to χ²₁. 0·ln 0 is taken as 0.
pub fn lruc_test(hits: &[bool], q0: f64) -> Result<CoverageTest> {
    if hits.is_empty() {
        return Err(Error::InsufficientData("lruc on empty hit sequence".into()));
    }
    if !(0.0 < q0 && q0 < 1.0) {
        return Err(Error::InvalidParameter(format!("q0 must be in (0,1), got {q0}")));
    }
    let t = hits.len() as f64;
    let x = hits.iter().filter(|&&h| h).count() as f64;
    let phat = x / t;
    let ll_null = xlogy(t - x, 1.0 - q0) + xlogy(x, q0);
    let ll_alt = xlogy(t - x, 1.0 - phat) + xlogy(x, phat);
    let statistic = (-2.0 * (ll_null - ll_alt)).max(0.0);
    Ok(CoverageTest {
        statistic,
        p_value: chi2_sf(statistic, 1),
        dof: 1,
        flags: Vec::new(),
    })
}

/// Independence part of the conditional-coverage test: likelihood ratio of a
/// first-order Markov hit chain against an iid chain, from the 2×2
/// transition counts.
fn lrind_statistic(hits: &[bool]) -> f64 {
    let (mut n00, mut n01, mut n10, mut n11) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for w in hits.windows(2) {
        match (w[0], w[1]) {
            (false, false) => n00 += 1.0,
            (false, true) => n01 += 1.0,
            (true, false) => n10 += 1.0,
            (true, true) => n11 += 1.0,
        }
    }
    let total = n00 + n01 + n10 + n11;
    if total == 0.0 {
        return 0.0;
    }
    let pi = (n01 + n11) / total;
    let pi01 = if n00 + n01 > 0.0 { n01 / (n00 + n01) } else { 0.0 };
    let pi11 = if n10 + n11 > 0.0 { n11 / (n10 + n11) } else { 0.0 };
    let ll_null = xlogy(n00 + n10, 1.0 - pi) + xlogy(n01 + n11, pi);
    let ll_alt = xlogy(n00, 1.0 - pi01) + xlogy(n01, pi01) + xlogy(n10, 1.0 - pi11)
        + xlogy(n11, pi11);
    (-2.0 * (ll_null - ll_alt)).max(0.0)
}

/// Conditional-coverage test LRcc = LRuc + LRind, referred to χ²₂.
pub fn lrcc_test(hits: &[bool], q0: f64) -> Result<CoverageTest> {
    if hits.len() < 2 {
        return Err(Error::InsufficientData("lrcc needs at least 2 observations".into()));
    }
    let uc = lruc_test(hits, q0)?;
    let statistic = uc.statistic + lrind_statistic(hits);
    Ok(CoverageTest {
        statistic,
        p_value: chi2_sf(statistic, 2),
        dof: 2,
        flags: Vec::new(),
    })
}

/// Dynamic-quantile test: regress centered hits Hit_t = hit_t − q₀ on
/// [1, Hit_{t−1..t−lags}, VaR_t] (pre-sample lags zero-padded) and refer
/// DQ = ‖projection‖²/(q₀(1−q₀)) to χ² with rank(X) degrees of freedom.
/// Collinear regressors are dropped and flagged.
pub fn dq_test(hits: &[bool], q0: f64, var_values: &[f64], lags: usize) -> Result<CoverageTest> {
    let t = hits.len();
    if t != var_values.len() {
        return Err(Error::DimensionMismatch(format!(
            "hits/var length mismatch: {t} vs {}",
            var_values.len()
        )));
    }
    if t <= lags + 2 {
        return Err(Error::InsufficientData(format!(
            "dq test needs T > lags+2, got T={t}, lags={lags}"
        )));
    }
    if !(0.0 < q0 && q0 < 1.0) {
        return Err(Error::InvalidParameter(format!("q0 must be in (0,1), got {q0}")));
    }
    let hit: Vec<f64> = hits.iter().map(|&h| (h as u8) as f64 - q0).collect();
    let mut x_rows = Vec::with_capacity(t);
    for ti in 0..t {
        let mut row = Vec::with_capacity(lags + 2);
        row.push(1.0);
        for l in 1..=lags {
            row.push(if ti >= l { hit[ti - l] } else { 0.0 });
        }
        row.push(var_values[ti]);
        x_rows.push(row);
    }
    let fit = ols_drop_collinear(&x_rows, &hit)?;
    let mut flags = Vec::new();
    if !fit.dropped.is_empty() {
        let name = |j: usize| -> String {
            if j == 0 {
                "intercept".into()
            } else if j <= lags {
                format!("hit_lag{j}")
            } else {
                "var".into()
            }
        };
        let names: Vec<String> = fit.dropped.iter().map(|&j| name(j)).collect();
        flags.push(format!("dq: dropped collinear regressors [{}]", names.join(", ")));
    }
    let proj_norm2: f64 = fit.fitted.iter().map(|v| v * v).sum();
    let statistic = proj_norm2 / (q0 * (1.0 - q0));
    let dof = fit.rank;
    Ok(CoverageTest { statistic, p_value: chi2_sf(statistic, dof), dof, flags })
}

/// Loss metric tags for report rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Mspe,
    Qlike,
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Metric::Mspe => "mspe",
            Metric::Qlike => "qlike",
        })
    }
}

/// Configuration of the rolling backtest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    /// In-sample window length in days; the target day is its last row.
    pub window: usize,
    /// Observed fractions ω of the target day; n₁ = clamp(round(ω·n)).
    pub omegas: Vec<f64>,
    /// VaR levels (empty = skip the VaR section).
    pub q0_levels: Vec<f64>,
    pub methods: Vec<Method>,
    pub rank_policy: RankPolicy,
    pub sip: SipOptions,
    pub normalization: Normalization,
    /// BH rejection level for the report's p-value family.
    pub alpha: f64,
    /// DQ lag order.
    pub dq_lags: usize,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig {
            window: 63,
            omegas: vec![0.1, 0.5, 0.9],
            q0_levels: vec![0.01, 0.05],
            methods: Method::ALL.to_vec(),
            rank_policy: RankPolicy::Ratio { r_max: 10 },
            sip: SipOptions::default(),
            normalization: Normalization::PerN,
            alpha: 0.05,
            dq_lags: 4,
        }
    }
}

/// One loss row of the report: pooled loss value for a (method, metric, ω)
/// cell plus, for non-SIP methods, the DM comparison against SIP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossCell {
    pub method: Method,
    pub metric: Metric,
    pub omega: f64,
    pub value: f64,
    pub dm: Option<DmResult>,
    /// BH-adjusted DM p-value (family = every p-value in this report).
    pub p_adj: Option<f64>,
    pub reject: Option<bool>,
}

/// Coverage-test row for one (method, ω, q₀) cell, pooled over all
/// out-of-sample days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCell {
    pub method: Method,
    pub omega: f64,
    pub q0: f64,
    pub observations: usize,
    pub hit_rate: f64,
    pub lruc: CoverageTest,
    pub lrcc: CoverageTest,
    pub dq: CoverageTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub window: usize,
    pub n: usize,
    pub days_evaluated: usize,
    /// (ω, n₁) pairs actually used.
    pub omega_n1: Vec<(f64, usize)>,
    pub losses: Vec<LossCell>,
    pub coverage: Vec<CoverageCell>,
    pub alpha: f64,
}

/// Number of observed grid points for a fraction ω of an n-point day:
/// round(ω·n) clamped into [1, n−1] so both blocks of the target row are
/// nonempty.
pub fn n1_from_omega(omega: f64, n: usize) -> Result<usize> {
    if !(0.0 < omega && omega < 1.0) {
        return Err(Error::InvalidParameter(format!("omega must be in (0,1), got {omega}")));
    }
    Ok(((omega * n as f64).round() as usize).clamp(1, n - 1))
}

/// Per-day raw material produced inside the rolling loop.
struct DayOutcome {
    day: usize,
    /// (ω index, method index) → per-point squared errors and QLIKE terms.
    sq_err: Vec<Vec<Vec<f64>>>,
    ql: Vec<Vec<Vec<f64>>>,
    /// (ω index, method index, q₀ index) → (VaR values, realized returns).
    var_segments: Vec<Vec<Vec<(Vec<f64>, Vec<f64>)>>>,
}

/// Rolling-window backtest over a day × intraday panel of variance
/// estimates. `vols[(i, j)]` is day i's estimate at grid point j and serves
/// both as predictor input and as the evaluation proxy for hidden points.
/// `returns`, when given, must be the matching realized per-interval returns
/// and activates the VaR section.
pub fn run_backtest(
    vols: &DMatrix<f64>,
    returns: Option<&DMatrix<f64>>,
    cfg: &BacktestConfig,
) -> Result<BacktestReport> {
    let (d_total, n) = vols.shape();
    if cfg.window < 2 {
        return Err(Error::InvalidParameter("window must be >= 2".into()));
    }
    if d_total <= cfg.window {
        return Err(Error::InsufficientData(format!(
            "panel has {d_total} days; need more than window = {} for out-of-sample evaluation",
            cfg.window
        )));
    }
    if cfg.methods.is_empty() {
        return Err(Error::InvalidParameter("no methods requested".into()));
    }
    if let Some(r) = returns {
        if r.shape() != (d_total, n) {
            return Err(Error::DimensionMismatch(format!(
                "returns shape {:?} does not match vols {:?}",
                r.shape(),
                vols.shape()
            )));
        }
    }
    let n1s: Vec<usize> = cfg
        .omegas
        .iter()
        .map(|&w| n1_from_omega(w, n))
        .collect::<Result<_>>()?;

    let targets: Vec<usize> = (cfg.window - 1..d_total).collect();
    let q0_count = if returns.is_some() { cfg.q0_levels.len() } else { 0 };

    let outcomes: Vec<DayOutcome> = targets
        .par_iter()
        .map(|&day| -> Result<DayOutcome> {
            let start = day + 1 - cfg.window;
            let window = vols.rows(start, cfg.window).into_owned();
            let mut sq_err =
                vec![vec![Vec::new(); cfg.methods.len()]; cfg.omegas.len()];
            let mut ql = vec![vec![Vec::new(); cfg.methods.len()]; cfg.omegas.len()];
            let mut var_segments =
                vec![vec![vec![(Vec::new(), Vec::new()); q0_count]; cfg.methods.len()];
                    cfg.omegas.len()];
            for (wi, &n1) in n1s.iter().enumerate() {
                let vm = VolMatrix::new(window.clone(), n1)?;
                let proxy: Vec<f64> =
                    (n1..n).map(|j| vols[(day, j)].max(FLOOR_EPS)) .collect();
                // In-sample standardization set for VaR: the window's full
                // history days plus the target day's observed opening.
                let quantiles: Vec<f64> = if let Some(rets) = returns {
                    let mut ins_r = Vec::with_capacity((cfg.window - 1) * n + n1);
                    let mut ins_v = Vec::with_capacity((cfg.window - 1) * n + n1);
                    for i in start..day {
                        for j in 0..n {
                            ins_r.push(rets[(i, j)]);
                            ins_v.push(vols[(i, j)].max(FLOOR_EPS));
                        }
                    }
                    for j in 0..n1 {
                        ins_r.push(rets[(day, j)]);
                        ins_v.push(vols[(day, j)].max(FLOOR_EPS));
                    }
                    var_quantiles(&ins_r, &ins_v, n, &cfg.q0_levels)?
                } else {
                    Vec::new()
                };
                for (mi, &method) in cfg.methods.iter().enumerate() {
                    let pred = predict(&vm, method, &cfg.rank_policy, &cfg.sip)?;
                    let floored: Vec<f64> =
                        pred.values.iter().map(|&v| v.max(FLOOR_EPS)).collect();
                    for (p, c) in pred.values.iter().zip(&proxy) {
                        sq_err[wi][mi].push((p - c) * (p - c));
                    }
                    for (p, c) in floored.iter().zip(&proxy) {
                        ql[wi][mi].push(p.ln() + c / p);
                    }
                    if let Some(rets) = returns {
                        let realized: Vec<f64> =
                            (n1..n).map(|j| rets[(day, j)]).collect();
                        for (qi, &z) in quantiles.iter().enumerate() {
                            let var_vals = var_forecast(&floored, z, n)?;
                            let seg = &mut var_segments[wi][mi][qi];
                            seg.0.extend_from_slice(&var_vals);
                            seg.1.extend_from_slice(&realized);
                        }
                    }
                }
            }
            Ok(DayOutcome { day, sq_err, ql, var_segments })
        })
        .collect::<Result<_>>()?;

    // Deterministic reduction in day order.
    let mut outcomes = outcomes;
    outcomes.sort_by_key(|o| o.day);

    let sip_index = cfg.methods.iter().position(|&m| m == Method::Sip);
    let mut losses = Vec::new();
    let mut coverage = Vec::new();
    let mut dm_slots: Vec<usize> = Vec::new(); // indices into `losses` carrying a DM p
    let mut pvalues: Vec<f64> = Vec::new();

    for (wi, &omega) in cfg.omegas.iter().enumerate() {
        let n1 = n1s[wi];
        let n2 = n - n1;
        // Pool losses over (day, point).
        let pooled: Vec<(Vec<f64>, Vec<f64>)> = (0..cfg.methods.len())
            .map(|mi| {
                let mut sq = Vec::new();
                let mut qlv = Vec::new();
                for o in &outcomes {
                    sq.extend_from_slice(&o.sq_err[wi][mi]);
                    qlv.extend_from_slice(&o.ql[wi][mi]);
                }
                (sq, qlv)
            })
            .collect();
        let keys: Vec<(usize, usize)> = outcomes
            .iter()
            .flat_map(|o| (0..n2).map(move |j| (o.day, n1 + j)))
            .collect();
        for (mi, &method) in cfg.methods.iter().enumerate() {
            let (sq, qlv) = &pooled[mi];
            let denom = match cfg.normalization {
                Normalization::PerN => (outcomes.len() * n) as f64,
                Normalization::PerN2 => sq.len() as f64,
            };
            let mspe_val = sq.iter().sum::<f64>() / denom;
            let qlike_val = qlv.iter().sum::<f64>() / qlv.len() as f64;
            for (metric, value, series) in
                [(Metric::Mspe, mspe_val, sq), (Metric::Qlike, qlike_val, qlv)]
            {
                let dm = match sip_index {
                    Some(si) if si != mi => {
                        let own = LossSeries::new(method, series.clone(), keys.clone())?;
                        let sip_series = if metric == Metric::Mspe {
                            &pooled[si].0
                        } else {
                            &pooled[si].1
                        };
                        let sip = LossSeries::new(
                            Method::Sip,
                            sip_series.clone(),
                            keys.clone(),
                        )?;
                        Some(dm_test(&own, &sip)?)
                    }
                    _ => None,
                };
                if let Some(d) = &dm {
                    dm_slots.push(losses.len());
                    pvalues.push(d.p_value);
                }
                losses.push(LossCell {
                    method,
                    metric,
                    omega,
                    value,
                    dm,
                    p_adj: None,
                    reject: None,
                });
            }
        }
        // Coverage tests on the pooled hit series.
        if returns.is_some() {
            for (mi, &method) in cfg.methods.iter().enumerate() {
                for (qi, &q0) in cfg.q0_levels.iter().enumerate() {
                    let mut var_vals = Vec::new();
                    let mut rets = Vec::new();
                    for o in &outcomes {
                        let seg = &o.var_segments[wi][mi][qi];
                        var_vals.extend_from_slice(&seg.0);
                        rets.extend_from_slice(&seg.1);
                    }
                    let series = VarSeries::new(q0, var_vals, rets)?;
                    let hit_rate = series.hits.iter().filter(|&&h| h).count() as f64
                        / series.hits.len() as f64;
                    coverage.push(CoverageCell {
                        method,
                        omega,
                        q0,
                        observations: series.hits.len(),
                        hit_rate,
                        lruc: lruc_test(&series.hits, q0)?,
                        lrcc: lrcc_test(&series.hits, q0)?,
                        dq: dq_test(&series.hits, q0, &series.var_values, cfg.dq_lags)?,
                    });
                }
            }
        }
    }

    // One BH family per report, as the comparison tables are read jointly.
    if !pvalues.is_empty() {
        let bh = bh_adjust(&pvalues, cfg.alpha)?;
        for (slot, (adj, rej)) in dm_slots.iter().zip(bh.adjusted.iter().zip(&bh.reject)) {
            losses[*slot].p_adj = Some(*adj);
            losses[*slot].reject = Some(*rej);
        }
    }

    Ok(BacktestReport {
        window: cfg.window,
        n,
        days_evaluated: targets.len(),
        omega_n1: cfg.omegas.iter().copied().zip(n1s).collect(),
        losses,
        coverage,
        alpha: cfg.alpha,
    })
}
