//! Jump-robust pre-averaging estimation of the spot (instantaneous) variance
//! curve from one day of noisy log prices.
//!
//! For a day of m+1 log prices Y_0..Y_m on the grid t_s = s/m, the estimator
//! at intraday time τ/n is a kernel-weighted, truncated sum of noise-corrected
//! pre-averaged squared returns:
//!
//! ```text
//! ĉ(τ/n) = (1/φ_k(g)) Σ_s K_b(t_{s−1} − τ/n)·(1/m)·(Ȳ_s² − ½Ŷ_s)·1{|Ȳ_s| ≤ ν} · m / Z_τ
//! ```
//!
//! where Ȳ_s is the weighted pre-averaged return starting at tick s, Ŷ_s the
//! matching noise-variance correction, ν the day's jump-truncation threshold
//! from bipower variation, and Z_τ the kernel mass actually present in the
//! window (so weights integrate to one even at the day's edges).
//!
//! Estimation error scales like √(k/(m·b)) per grid point, and the φ-based
//! normalization attenuates the signal by the factor 1 − S/(2φ) with
//! S = Σ(Δg)² — negligible for k ≳ 20 (−0.8% at k=28) but severe for tiny k
//! (−22% at k=5, total at k=2), so configurations with very small k trade
//! bias for variance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kernel support shape around the evaluation time τ/n.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelShape {
    /// Uniform on [τ−b/2, τ+b/2].
    UniformSymmetric,
    /// Uniform on [τ−b, τ]: uses only data up to τ, and is the only shape
    /// that can cover τ = 1 when b ≤ k/m ticks would otherwise run past the
    /// last computable pre-averaged return.
    UniformLeft,
}

/// Pre-averaging weight function on [0,1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightShape {
    /// g(x) = min(2x, 1−x): rises twice as fast as it decays, peak 2/3 at x=1/3.
    AsymmetricTent,
    /// g(x) = min(x, 1−x): the common symmetric tent, peak 1/2 at x=1/2.
    SymmetricTent,
}

/// Configuration of the spot-variance estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreAvgConfig {
    /// Pre-averaging window length in ticks (k ≥ 2).
    pub k: usize,
    /// Kernel bandwidth b as a fraction of the trading day.
    pub bandwidth: f64,
    pub kernel: KernelShape,
    pub weight: WeightShape,
    /// Multiplier in the truncation threshold ν = trunc_const·√BPV·(k/m)^trunc_exp.
    pub trunc_const: f64,
    /// Exponent in the truncation threshold.
    pub trunc_exp: f64,
    /// Renormalize kernel mass over the grid points actually present in the
    /// window; keeps the weights summing to one at boundary τ.
    pub boundary_renormalize: bool,
    /// Lower bound applied to non-positive estimates (variance must stay
    /// positive for downstream QLIKE/VaR).
    pub floor_eps: f64,
}

impl PreAvgConfig {
    /// Defaults for a day of `m` ticks evaluated on an `n`-point grid:
    /// k = ⌈√m⌉, b = 1/n, symmetric uniform kernel, asymmetric tent weight.
    pub fn for_grid(m: usize, n: usize) -> Self {
        PreAvgConfig {
            k: default_window(m, 1.0),
            bandwidth: 1.0 / n as f64,
            kernel: KernelShape::UniformSymmetric,
            weight: WeightShape::AsymmetricTent,
            trunc_const: 1.8,
            trunc_exp: 0.47,
            boundary_renormalize: true,
            floor_eps: 1e-12,
        }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if self.k < 2 || self.k > m / 2 {
            return Err(Error::InvalidParameter(format!(
                "pre-averaging window k={} must satisfy 2 <= k <= m/2 = {}",
                self.k,
                m / 2
            )));
        }
        if !(self.bandwidth > 0.0 && self.bandwidth <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "bandwidth must be in (0, 1], got {}",
                self.bandwidth
            )));
        }
        if !(self.trunc_const > 0.0) {
            return Err(Error::InvalidParameter("trunc_const must be > 0".into()));
        }
        if !(self.trunc_exp > 0.0 && self.trunc_exp < 1.0) {
            return Err(Error::InvalidParameter("trunc_exp must be in (0, 1)".into()));
        }
        if !(self.floor_eps > 0.0) {
            return Err(Error::InvalidParameter("floor_eps must be > 0".into()));
        }
        Ok(())
    }
}

/// Default pre-averaging window k = max(2, ⌈θ·√m⌉).
pub fn default_window(m: usize, theta: f64) -> usize {
    ((theta * (m as f64).sqrt()).ceil() as usize).max(2)
}

#[inline]
fn g(x: f64, shape: WeightShape) -> f64 {
    match shape {
        WeightShape::AsymmetricTent => (2.0 * x).min(1.0 - x),
        WeightShape::SymmetricTent => x.min(1.0 - x),
    }
}

/// Pre-averaging weight g(x); errors outside the domain [0, 1].
pub fn weight_g(x: f64, shape: WeightShape) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidParameter(format!("weight argument {x} outside [0, 1]")));
    }
    Ok(g(x, shape))
}

/// Squared-weight mass φ_k(g) = Σ_{i=1..k} g(i/k)².
pub fn phi_weight(k: usize, shape: WeightShape) -> f64 {
    (1..=k).map(|i| g(i as f64 / k as f64, shape).powi(2)).sum()
}

/// Pre-averaged return Ȳ_s and its noise correction Ŷ_s at start tick s
/// (1-based, 1 ≤ s ≤ m−k+1).
///
/// Ȳ_s = Σ_{l=1}^{k−1} g(l/k)·(Y_{s+l} − Y_{s+l−1});
/// Ŷ_s = Σ_{l=1}^{k} (g(l/k) − g((l−1)/k))²·(Y_{s+l} − Y_{s+l−1})², where the
/// l = k term is dropped at s = m−k+1 because increment s+k does not exist.
pub fn preaverage(prices: &[f64], s: usize, k: usize, shape: WeightShape) -> Result<(f64, f64)> {
    if prices.len() < 2 {
        return Err(Error::InsufficientData("need at least 2 prices".into()));
    }
    let m = prices.len() - 1;
    if s < 1 || s + k - 1 > m {
        return Err(Error::IndexOutOfRange(format!(
            "pre-averaging start s={s} with k={k} outside 1..={} (m={m})",
            m + 1 - k
        )));
    }
    Ok(preaverage_unchecked(prices, s, k, shape))
}

#[inline]
fn preaverage_unchecked(prices: &[f64], s: usize, k: usize, shape: WeightShape) -> (f64, f64) {
    let m = prices.len() - 1;
    let kf = k as f64;
    let mut ybar = 0.0;
    let mut yhat = 0.0;
    let mut g_prev = 0.0;
    for l in 1..=k {
        let gl = g(l as f64 / kf, shape);
        if s + l <= m {
            let diff = prices[s + l] - prices[s + l - 1];
            if l < k {
                ybar += gl * diff;
            }
            let dg = gl - g_prev;
            yhat += dg * dg * diff * diff;
        }
        g_prev = gl;
    }
    (ybar, yhat)
}

/// Bipower variation BPV = (π/2)·Σ_{s=2}^{m} |ΔY_{s−1}|·|ΔY_s|, a
/// jump-insensitive scale estimate of the day's integrated variance.
pub fn bipower_variation(prices: &[f64]) -> Result<f64> {
    if prices.len() < 3 {
        return Err(Error::InsufficientData(
            "bipower variation needs at least 3 prices".into(),
        ));
    }
    let mut sum = 0.0;
    let mut prev = (prices[1] - prices[0]).abs();
    for s in 2..prices.len() {
        let cur = (prices[s] - prices[s - 1]).abs();
        sum += prev * cur;
        prev = cur;
    }
    Ok(std::f64::consts::FRAC_PI_2 * sum)
}

/// Jump-truncation threshold ν = trunc_const·√BPV·(k/m)^trunc_exp.
pub fn truncation_threshold(bpv: f64, k: usize, m: usize, cfg: &PreAvgConfig) -> f64 {
    cfg.trunc_const * bpv.sqrt() * (k as f64 / m as f64).powf(cfg.trunc_exp)
}

/// Per-day estimator diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpotDiagnostics {
    /// Number of (τ, s) window terms zeroed by the jump truncation.
    pub truncated: usize,
    /// Number of grid estimates that were non-positive before flooring.
    pub floored: usize,
    /// The day's bipower variation.
    pub bpv: f64,
    /// The day's truncation threshold ν.
    pub nu: f64,
}

/// Estimated spot-variance curve for one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpotCurve {
    /// ĉ at τ = 1..n, floored at `floor_eps`.
    pub values: Vec<f64>,
    /// Grid times τ/n.
    pub grid: Vec<f64>,
    pub diagnostics: SpotDiagnostics,
}

/// Inclusive range of start ticks s whose weight position t_{s−1} = (s−1)/m
/// falls inside the kernel window at τ_frac, clipped to computable
/// pre-averaged returns (s ≤ m−k+1).
fn window_start_ticks(
    tau_frac: f64,
    m: usize,
    k: usize,
    cfg: &PreAvgConfig,
) -> Option<(usize, usize)> {
    let (lo_t, hi_t) = match cfg.kernel {
        KernelShape::UniformSymmetric => {
            (tau_frac - cfg.bandwidth / 2.0, tau_frac + cfg.bandwidth / 2.0)
        }
        KernelShape::UniformLeft => (tau_frac - cfg.bandwidth, tau_frac),
    };
    let s_max = m + 1 - k;
    let mf = m as f64;
    // Candidate bounds, then exact membership checks on (s−1)/m to avoid
    // floating-point edge surprises.
    let mut lo = ((lo_t * mf).floor() as i64).max(0) as usize + 1; // s = (s−1)+1
    let mut hi = (((hi_t * mf).ceil() as i64).max(0) as usize + 1).min(s_max);
    let inside = |s: usize| {
        let t = (s - 1) as f64 / mf;
        t >= lo_t && t <= hi_t
    };
    while lo <= hi && !inside(lo) {
        lo += 1;
    }
    while lo > 1 && inside(lo - 1) {
        lo -= 1;
    }
    while hi >= lo && !inside(hi) {
        hi -= 1;
    }
    if lo > hi || lo > s_max {
        None
    } else {
        Some((lo, hi.min(s_max)))
    }
}

/// Noise-corrected, truncated terms for every start tick of a day, shared by
/// all τ evaluations.
struct DayTerms {
    /// (Ȳ_s² − ½Ŷ_s)·1{|Ȳ_s| ≤ ν}, indexed by s−1.
    value: Vec<f64>,
    /// Truncation indicator per s.
    truncated: Vec<bool>,
    bpv: f64,
    nu: f64,
}

fn day_terms(prices: &[f64], cfg: &PreAvgConfig) -> Result<DayTerms> {
    let m = prices.len() - 1;
    let bpv = bipower_variation(prices)?;
    let nu = truncation_threshold(bpv, cfg.k, m, cfg);
    let s_max = m + 1 - cfg.k;
    let mut value = Vec::with_capacity(s_max);
    let mut truncated = Vec::with_capacity(s_max);
    for s in 1..=s_max {
        let (ybar, yhat) = preaverage_unchecked(prices, s, cfg.k, cfg.weight);
        let cut = ybar.abs() > nu;
        value.push(if cut { 0.0 } else { ybar * ybar - 0.5 * yhat });
        truncated.push(cut);
    }
    Ok(DayTerms { value, truncated, bpv, nu })
}

fn estimate_at(
    terms: &DayTerms,
    tau_frac: f64,
    m: usize,
    cfg: &PreAvgConfig,
) -> Result<(f64, usize, bool)> {
    let Some((lo, hi)) = window_start_ticks(tau_frac, m, cfg.k, cfg) else {
        return Err(Error::EmptyKernelWindow { tau_frac });
    };
    let mut sum = 0.0;
    let mut hits = 0usize;
    for s in lo..=hi {
        sum += terms.value[s - 1];
        if terms.truncated[s - 1] {
            hits += 1;
        }
    }
    let count = (hi - lo + 1) as f64;
    let phi = phi_weight(cfg.k, cfg.weight);
    // Kernel weights carry the 1/m grid measure: W_s = K_b(·)/m with uniform
    // K_b = 1/b, so the mass present in the window is Z = count/(m·b). With
    // renormalization the weighted average uses Z as drawn; otherwise the
    // ideal unit mass is assumed (biased low near boundaries).
    let mf = m as f64;
    let mass = if cfg.boundary_renormalize { count / (mf * cfg.bandwidth) } else { 1.0 };
    let raw = sum / (mf * cfg.bandwidth) / (phi * mass) * mf;
    // Non-positive, not just negative: a window whose every term was
    // truncated sums to exactly zero, and downstream consumers (QLIKE, VaR,
    // the completion matrix) require strictly positive variances.
    let floored = raw <= 0.0;
    let value = if floored { cfg.floor_eps } else { raw };
    Ok((value, hits, floored))
}

/// Spot-variance estimate at a single intraday time τ_frac = τ/n ∈ (0, 1].
pub fn spot_estimate(prices: &[f64], tau_frac: f64, cfg: &PreAvgConfig) -> Result<f64> {
    if prices.len() < 3 {
        return Err(Error::InsufficientData("need at least 3 prices".into()));
    }
    let m = prices.len() - 1;
    cfg.validate(m)?;
    if !(0.0..=1.0).contains(&tau_frac) {
        return Err(Error::InvalidParameter(format!("tau_frac {tau_frac} outside [0, 1]")));
    }
    if prices.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("prices".into()));
    }
    let terms = day_terms(prices, cfg)?;
    estimate_at(&terms, tau_frac, m, cfg).map(|(v, _, _)| v)
}

/// The full estimated curve at τ = 1..n, sharing one pass of pre-averaging
/// and one ν per day. Identical to n independent `spot_estimate` calls.
pub fn spot_curve(prices: &[f64], n: usize, cfg: &PreAvgConfig) -> Result<SpotCurve> {
    if n < 1 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    if prices.len() < 3 {
        return Err(Error::InsufficientData("need at least 3 prices".into()));
    }
    let m = prices.len() - 1;
    cfg.validate(m)?;
    if prices.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("prices".into()));
    }
    let terms = day_terms(prices, cfg)?;
    let mut values = Vec::with_capacity(n);
    let mut grid = Vec::with_capacity(n);
    let mut truncated = 0usize;
    let mut floored = 0usize;
    for tau in 1..=n {
        let tau_frac = tau as f64 / n as f64;
        let (v, hits, hit_floor) = estimate_at(&terms, tau_frac, m, cfg)?;
        values.push(v);
        grid.push(tau_frac);
        truncated += hits;
        floored += hit_floor as usize;
    }
    Ok(SpotCurve {
        values,
        grid,
        diagnostics: SpotDiagnostics { truncated, floored, bpv: terms.bpv, nu: terms.nu },
    })
}

/// Estimates curves for many days in parallel (order-preserving, so results
/// are independent of the thread count).
pub fn spot_matrix(
    days: &[Vec<f64>],
    n: usize,
    cfg: &PreAvgConfig,
) -> Result<Vec<SpotCurve>> {
    days.par_iter().map(|prices| spot_curve(prices, n, cfg)).collect()
}

/// Kernel mass Σ_s W_s present in the window at τ_frac (weights including the
/// 1/m measure, before renormalization). Equals 1 up to grid discreteness for
/// interior τ and is the quantity the boundary renormalization divides by.
pub fn kernel_mass(tau_frac: f64, m: usize, cfg: &PreAvgConfig) -> Result<f64> {
    cfg.validate(m)?;
    let Some((lo, hi)) = window_start_ticks(tau_frac, m, cfg.k, cfg) else {
        return Err(Error::EmptyKernelWindow { tau_frac });
    };
    Ok((hi - lo + 1) as f64 / (m as f64 * cfg.bandwidth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::master_rng;
    use crate::simulate::{gen_tick_day, DgpParams};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn walk(len: usize, seed: u64, step_sd: f64) -> Vec<f64> {
        let mut rng = master_rng(seed);
        let mut out = vec![0.0];
        for _ in 0..len - 1 {
            let z: f64 = rng.sample(StandardNormal);
            let last = *out.last().unwrap();
            out.push(last + step_sd * z);
        }
        out
    }

    #[test]
    fn weight_examples() {
        assert_relative_eq!(weight_g(0.25, WeightShape::AsymmetricTent).unwrap(), 0.5);
        assert_relative_eq!(weight_g(0.5, WeightShape::AsymmetricTent).unwrap(), 0.5);
        assert_eq!(weight_g(0.0, WeightShape::AsymmetricTent).unwrap(), 0.0);
        assert_eq!(weight_g(1.0, WeightShape::AsymmetricTent).unwrap(), 0.0);
        assert_relative_eq!(weight_g(0.25, WeightShape::SymmetricTent).unwrap(), 0.25);
        assert!(weight_g(-0.1, WeightShape::AsymmetricTent).is_err());
        assert!(weight_g(1.1, WeightShape::AsymmetricTent).is_err());
    }

    #[test]
    fn phi_two_term_sum() {
        // φ₂ = g(1/2)² + g(1)² = 0.25.
        assert_relative_eq!(phi_weight(2, WeightShape::AsymmetricTent), 0.25);
    }

    #[test]
    fn preaverage_k2_closed_form() {
        // At k=2: Ȳ_s = g(1/2)·(Y_{s+1} − Y_s) = 0.5·ΔY_{s+1}, and Ŷ_s picks
        // up (Δg)² = 0.25 on both increments of the window.
        let prices = vec![1.0, 1.3, 0.9, 1.1];
        let d1 = prices[2] - prices[1];
        let d2 = prices[3] - prices[2];
        let (ybar, yhat) = preaverage(&prices, 1, 2, WeightShape::AsymmetricTent).unwrap();
        assert_relative_eq!(ybar, 0.5 * d1, max_relative = 1e-15);
        assert_relative_eq!(yhat, 0.25 * d1 * d1 + 0.25 * d2 * d2, max_relative = 1e-15);
        // The last admissible start drops the l = k noise term (no Y_{m+1}).
        let (ybar2, yhat2) = preaverage(&prices, 2, 2, WeightShape::AsymmetricTent).unwrap();
        assert_relative_eq!(ybar2, 0.5 * d2, max_relative = 1e-15);
        assert_relative_eq!(yhat2, 0.25 * d2 * d2, max_relative = 1e-15);
    }

    #[test]
    fn preaverage_constant_prices_is_zero() {
        let prices = vec![2.5; 50];
        let (ybar, yhat) = preaverage(&prices, 10, 7, WeightShape::AsymmetricTent).unwrap();
        assert_eq!(ybar, 0.0);
        assert_eq!(yhat, 0.0);
    }

    #[test]
    fn preaverage_matches_naive_double_loop() {
        let prices = walk(200, 77, 0.01);
        let m = prices.len() - 1;
        let k = 10;
        for s in [1usize, 5, 100, m - k + 1] {
            let (ybar, yhat) = preaverage(&prices, s, k, WeightShape::AsymmetricTent).unwrap();
            // Naive oracle written directly from the definitions.
            let gk = |l: usize| {
                let x = l as f64 / k as f64;
                f64::min(2.0 * x, 1.0 - x)
            };
            let mut ybar_naive = 0.0;
            for l in 1..k {
                ybar_naive += gk(l) * (prices[s + l] - prices[s + l - 1]);
            }
            let mut yhat_naive = 0.0;
            for l in 1..=k {
                if s + l <= m {
                    let dg = gk(l) - gk(l - 1);
                    let diff = prices[s + l] - prices[s + l - 1];
                    yhat_naive += dg * dg * diff * diff;
                }
            }
            assert_relative_eq!(ybar, ybar_naive, max_relative = 1e-12);
            assert_relative_eq!(yhat, yhat_naive, max_relative = 1e-12);
        }
    }

    #[test]
    fn preaverage_rejects_out_of_range_start() {
        let prices = vec![0.0; 20];
        assert!(preaverage(&prices, 0, 5, WeightShape::AsymmetricTent).is_err());
        assert!(preaverage(&prices, 16, 5, WeightShape::AsymmetricTent).is_err());
        assert!(preaverage(&prices, 15, 5, WeightShape::AsymmetricTent).is_ok());
    }

    #[test]
    fn preaverage_clamps_final_noise_term() {
        // At s = m−k+1 the l = k increment does not exist and is dropped.
        let prices = walk(30, 3, 0.05);
        let m = prices.len() - 1;
        let k = 6;
        let s = m - k + 1;
        let (_, yhat) = preaverage(&prices, s, k, WeightShape::AsymmetricTent).unwrap();
        let gk = |l: usize| {
            let x = l as f64 / k as f64;
            f64::min(2.0 * x, 1.0 - x)
        };
        let mut expected = 0.0;
        for l in 1..k {
            let dg = gk(l) - gk(l - 1);
            let diff = prices[s + l] - prices[s + l - 1];
            expected += dg * dg * diff * diff;
        }
        assert_relative_eq!(yhat, expected, max_relative = 1e-12);
    }

    #[test]
    fn bipower_constant_increments() {
        let delta = 0.01;
        let m = 50;
        let prices: Vec<f64> = (0..=m).map(|s| s as f64 * delta).collect();
        let bpv = bipower_variation(&prices).unwrap();
        assert_relative_eq!(
            bpv,
            std::f64::consts::FRAC_PI_2 * (m as f64 - 1.0) * delta * delta,
            max_relative = 1e-12
        );
    }

    #[test]
    fn bipower_zero_path() {
        assert_eq!(bipower_variation(&vec![1.0; 10]).unwrap(), 0.0);
    }

    #[test]
    fn bipower_matches_naive_loop() {
        let prices = walk(300, 9, 0.02);
        let got = bipower_variation(&prices).unwrap();
        let mut naive = 0.0;
        for s in 2..prices.len() {
            naive += (prices[s - 1] - prices[s - 2]).abs() * (prices[s] - prices[s - 1]).abs();
        }
        naive *= std::f64::consts::FRAC_PI_2;
        assert_relative_eq!(got, naive, max_relative = 1e-12);
    }

    #[test]
    fn truncation_threshold_examples() {
        let cfg = PreAvgConfig::for_grid(10_000, 78);
        // 1.8·√4·0.01^0.47
        let nu = truncation_threshold(4.0, 100, 10_000, &cfg);
        assert_relative_eq!(nu, 0.4133353037388779, max_relative = 1e-12);
        assert_eq!(truncation_threshold(0.0, 100, 10_000, &cfg), 0.0);
        assert_eq!(cfg.trunc_const, 1.8);
        assert_eq!(cfg.trunc_exp, 0.47);
    }

    #[test]
    fn default_window_examples() {
        assert_eq!(default_window(23_400, 1.0), 153);
        assert_eq!(default_window(4, 1.0), 2);
        assert_eq!(default_window(400, 0.5), 10);
    }

    fn calibration_cfg() -> PreAvgConfig {
        PreAvgConfig {
            k: 28,
            bandwidth: 0.7,
            ..PreAvgConfig::for_grid(23_400, 78)
        }
    }

    fn constant_vol_day(m: usize, var: f64, noise_sd: f64, seed: u64) -> Vec<f64> {
        let params = DgpParams {
            mu: var / 2.0,
            noise_sd,
            jump_intensity: 0.0,
            m,
            ..DgpParams::default()
        };
        let vol_path = vec![var; m + 1];
        gen_tick_day(&vol_path, 0.0, &params, &mut master_rng(seed)).unwrap().y
    }

    #[test]
    fn constant_vol_calibration_smoke() {
        // Unit-sized version of the acceptance run: σ² = 1, interior τ.
        let cfg = calibration_cfg();
        let mut within = 0;
        let reps = 40;
        for rep in 0..reps {
            let prices = constant_vol_day(23_400, 1.0, 0.0, 1000 + rep);
            let c = spot_estimate(&prices, 0.5, &cfg).unwrap();
            if (c - 1.0).abs() <= 0.1 {
                within += 1;
            }
        }
        assert!(within >= reps * 9 / 10, "only {within}/{reps} within ±10%");
    }

    #[test]
    fn pure_noise_is_centered_near_zero() {
        // X constant: the ½Ŷ correction must cancel the noise contribution.
        let cfg = calibration_cfg();
        let mut sum_abs = 0.0;
        let reps = 20;
        for rep in 0..reps {
            let prices = constant_vol_day(23_400, 1e-20, 0.0005, 2000 + rep);
            let cfg_nofloor = PreAvgConfig { floor_eps: 1e-300, ..cfg.clone() };
            let c = spot_estimate(&prices, 0.5, &cfg_nofloor).unwrap();
            sum_abs += c.abs();
        }
        // Without the ½Ŷ correction the estimate would sit at the noise
        // energy S·noise_sd²·m/φ ≈ 9.7e−5; corrected it must land well below.
        assert!(sum_abs / (reps as f64) < 2e-5, "mean |c| = {}", sum_abs / reps as f64);
    }

    #[test]
    fn single_jump_moves_interior_estimates_by_little() {
        let cfg = calibration_cfg();
        let m = 23_400;
        let base = constant_vol_day(m, 1.0, 0.0, 31);
        let mut jumped = base.clone();
        let jump = 10.0 * (1.0f64 / m as f64).sqrt();
        for price in jumped.iter_mut().skip(m / 2) {
            *price += jump;
        }
        let c0 = spot_estimate(&base, 0.5, &cfg).unwrap();
        let c1 = spot_estimate(&jumped, 0.5, &cfg).unwrap();
        assert!(
            ((c1 - c0) / c0).abs() < 0.05,
            "jump moved the estimate from {c0} to {c1}"
        );
    }

    #[test]
    fn curve_equals_independent_estimates() {
        let prices = walk(2_000, 17, 0.003);
        let cfg = PreAvgConfig { k: 15, bandwidth: 0.2, ..PreAvgConfig::for_grid(1_999, 10) };
        let curve = spot_curve(&prices, 10, &cfg).unwrap();
        for tau in 1..=10usize {
            let single = spot_estimate(&prices, tau as f64 / 10.0, &cfg).unwrap();
            assert_eq!(curve.values[tau - 1], single, "tau = {tau}");
        }
    }

    #[test]
    fn degenerate_small_case_runs() {
        // m = n with the smallest window; a day-wide bandwidth keeps every
        // τ window populated.
        let prices = walk(79, 5, 0.01);
        let cfg = PreAvgConfig { k: 2, bandwidth: 1.0, ..PreAvgConfig::for_grid(78, 78) };
        let curve = spot_curve(&prices, 78, &cfg).unwrap();
        assert_eq!(curve.values.len(), 78);
        assert!(curve.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn empty_window_is_an_error() {
        // Symmetric kernel, b = 1/n: the τ = n window lies entirely beyond
        // the last computable pre-averaged return when k > m·b/2.
        let prices = walk(785, 6, 0.01);
        let cfg = PreAvgConfig { k: 100, ..PreAvgConfig::for_grid(784, 8) };
        let err = spot_estimate(&prices, 1.0, &cfg).unwrap_err();
        assert!(matches!(err, Error::EmptyKernelWindow { .. }));
        // The left-sided kernel covers τ = 1.0 with room to spare.
        let cfg_left = PreAvgConfig { kernel: KernelShape::UniformLeft, k: 30, ..cfg };
        assert!(spot_estimate(&prices, 1.0, &cfg_left).is_ok());
    }

    #[test]
    fn all_truncated_window_is_floored_positive() {
        // Left kernel with k = m·b: the τ = 1 window holds exactly one
        // pre-averaged return. A jump inside it gets truncated, the window
        // sums to exactly zero, and the estimate must still come out
        // strictly positive for downstream consumers.
        let m = 200;
        let mut prices = walk(m + 1, 9, 1e-4);
        for p in prices.iter_mut().skip(190) {
            *p += 0.5;
        }
        let cfg = PreAvgConfig {
            k: 20,
            bandwidth: 0.1,
            kernel: KernelShape::UniformLeft,
            ..PreAvgConfig::for_grid(m, 10)
        };
        let curve = spot_curve(&prices, 10, &cfg).unwrap();
        assert_eq!(curve.values[9], cfg.floor_eps);
        assert!(curve.diagnostics.floored >= 1);
        assert!(curve.values.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn kernel_mass_is_unit_interior_and_clipped_at_the_close() {
        let m = 23_400;
        // k small enough that the τ = 1 window still contains start ticks.
        let cfg = PreAvgConfig { k: 28, ..PreAvgConfig::for_grid(m, 78) };
        // Interior: raw mass within grid discreteness of 1.
        let mass = kernel_mass(0.5, m, &cfg).unwrap();
        let slack = 2.0 / (m as f64 * cfg.bandwidth);
        assert!((mass - 1.0).abs() <= slack, "interior mass {mass}");
        // At the close, start ticks stop at m−k+1 and half the window hangs
        // past the end of the day, so well under half the mass remains.
        let mass_close = kernel_mass(1.0, m, &cfg).unwrap();
        assert!(mass_close < 0.9, "boundary mass {mass_close} should be clipped");
    }

    #[test]
    fn noise_correction_identity_on_constant_vol() {
        // With zero noise, E[Ȳ²]·m/φ ≈ σ² (up to the small 1−S/2φ factor on
        // the corrected version; the raw Ȳ² form has no such attenuation).
        let m = 23_400;
        let k = 153;
        let prices = constant_vol_day(m, 1.0, 0.0, 99);
        let phi = phi_weight(k, WeightShape::AsymmetricTent);
        let mut sum = 0.0;
        let s_max = m + 1 - k;
        for s in 1..=s_max {
            let (ybar, _) = preaverage(&prices, s, k, WeightShape::AsymmetricTent).unwrap();
            sum += ybar * ybar;
        }
        let est = sum / s_max as f64 * m as f64 / phi;
        // Overlapping windows leave ~m/k effective observations → ~11% sd.
        assert!((est - 1.0).abs() < 0.35, "normalized mean square {est}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn scale_equivariance(seed in 0u64..10_000, alpha in prop::sample::select(vec![0.5f64, 2.0, 3.7])) {
            let prices = walk(600, seed, 0.01);
            let scaled: Vec<f64> = prices.iter().map(|p| p * alpha).collect();
            let cfg = PreAvgConfig { k: 12, bandwidth: 0.25, ..PreAvgConfig::for_grid(599, 8) };
            // ν and Ȳ scale together by α, so truncation decisions agree and
            // the estimate scales by exactly α².
            let c = spot_curve(&prices, 8, &cfg).unwrap();
            let c_scaled = spot_curve(&scaled, 8, &cfg).unwrap();
            for (a, b) in c.values.iter().zip(&c_scaled.values) {
                // Floored values stay floored under scaling.
                if *a > cfg.floor_eps {
                    prop_assert!((b / (alpha * alpha * a) - 1.0).abs() < 1e-12);
                }
            }
            prop_assert_eq!(c.diagnostics.truncated, c_scaled.diagnostics.truncated);
        }
    }
}
