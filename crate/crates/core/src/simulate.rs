//! Synthetic high-frequency panel generation.
//!
//! One trading day is the unit interval discretized into `m` Euler steps.
//! Daily variance levels follow an HAR recursion; within a day the spot
//! variance is the daily factor squared times a parabolic diurnal curve plus
//! a heteroskedastic perturbation; log prices follow a jump diffusion
//! observed under additive Gaussian microstructure noise.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::replication_rng;

/// How positivity of the spot-variance path is enforced.
///
/// The target law is the perturbation vector conditioned on every grid value
/// being positive. Because the perturbations are independent across ticks and
/// the positivity event factorizes per tick, redrawing only the offending
/// ticks samples exactly that conditional law while terminating quickly
/// (each tick succeeds with probability > 1/2 per round). Whole-day rejection
/// draws from the same distribution but its acceptance probability decays
/// geometrically in `m` and is impractical beyond a few hundred ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositivityPolicy {
    /// Redraw the perturbation only at ticks where the variance is ≤ 0.
    PerTick,
    /// Redraw the whole day's perturbation vector when any tick is ≤ 0.
    WholeDay,
}

/// Parameters of the data-generating process, in daily units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpParams {
    /// Drift of the log price per day.
    pub mu: f64,
    /// Diurnal curve level: h(t) = gamma0 + gamma1·(t − 0.6)².
    pub gamma0: f64,
    /// Diurnal curve curvature.
    pub gamma1: f64,
    /// HAR intercept.
    pub b0: f64,
    /// HAR daily-lag coefficient.
    pub b1: f64,
    /// HAR weekly-mean coefficient (5-day average).
    pub b2: f64,
    /// HAR monthly-mean coefficient (22-day average).
    pub b3: f64,
    /// Standard deviation of additive microstructure noise on log prices.
    pub noise_sd: f64,
    /// Mean of a single jump in log-price units.
    pub jump_mean: f64,
    /// Standard deviation of a single jump.
    pub jump_sd: f64,
    /// Expected number of jumps per day.
    pub jump_intensity: f64,
    /// Standard deviation of the variance-perturbation innovation ξ.
    pub eps_scale_sd: f64,
    /// Ticks per day (Euler steps; a day has m+1 price observations).
    pub m: usize,
    /// Intraday grid points per day for the true-variance matrix.
    pub n: usize,
    /// Days to generate (after burn-in).
    pub d_total: usize,
    /// Master seed for the panel.
    pub seed: u64,
    /// HAR warm-up days discarded before the panel starts.
    pub burn_in: usize,
    /// Positivity enforcement mechanism.
    pub positivity: PositivityPolicy,
    /// Maximum redraw rounds before giving up with a positivity failure.
    pub max_redraws: u32,
}

impl Default for DgpParams {
    fn default() -> Self {
        DgpParams {
            mu: 0.05 / 252.0,
            gamma0: 0.04 / 252.0,
            gamma1: 0.5 / 252.0,
            b0: 0.5,
            b1: 0.372,
            b2: 0.343,
            b3: 0.224,
            noise_sd: 0.0005,
            jump_mean: -0.01,
            jump_sd: 0.02,
            jump_intensity: 36.0 / 252.0,
            eps_scale_sd: 0.01,
            m: 23_400,
            n: 78,
            d_total: 200,
            seed: 0,
            burn_in: 500,
            positivity: PositivityPolicy::PerTick,
            max_redraws: 10_000,
        }
    }
}

impl DgpParams {
    pub fn validate(&self) -> Result<()> {
        if self.m < self.n || self.n < 2 {
            return Err(Error::InvalidParameter(format!(
                "need m >= n >= 2, got m={}, n={}",
                self.m, self.n
            )));
        }
        if self.d_total < 1 {
            return Err(Error::InvalidParameter("d_total must be >= 1".into()));
        }
        if self.burn_in < 22 {
            return Err(Error::InvalidParameter(
                "burn_in must be >= 22 (HAR recursion lookback)".into(),
            ));
        }
        for (name, v) in [
            ("noise_sd", self.noise_sd),
            ("jump_sd", self.jump_sd),
            ("jump_intensity", self.jump_intensity),
            ("eps_scale_sd", self.eps_scale_sd),
        ] {
            if !(v >= 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {v}")));
            }
        }
        let persistence = self.b1 + self.b2 + self.b3;
        if persistence >= 1.0 {
            return Err(Error::NonstationaryHar { sum: persistence });
        }
        if !(self.gamma0 > 0.0) || self.gamma1 < 0.0 {
            return Err(Error::InvalidParameter(
                "diurnal curve needs gamma0 > 0 and gamma1 >= 0".into(),
            ));
        }
        Ok(())
    }

    /// Diurnal variance curve h(t) on t ∈ [0,1], minimized at t = 0.6.
    pub fn diurnal(&self, t: f64) -> f64 {
        self.gamma0 + self.gamma1 * (t - 0.6) * (t - 0.6)
    }

    /// Unconditional mean of the HAR recursion, b0 / (1 − b1 − b2 − b3).
    pub fn har_mean(&self) -> f64 {
        self.b0 / (1.0 - self.b1 - self.b2 - self.b3)
    }
}

/// Scale of the variance perturbation: q(t)² = 0.1 + 0.5·(2t − 1)².
pub fn eps_scale_q(t: f64) -> f64 {
    (0.1 + 0.5 * (2.0 * t - 1.0) * (2.0 * t - 1.0)).sqrt()
}

/// One day of noisy log prices plus generation metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickDay {
    /// Day index within the panel (0-based).
    pub day: usize,
    /// Noisy log prices Y at s = 0..=m.
    pub y: Vec<f64>,
    /// Noise-free log price at the close (seeds the next day's open).
    pub x_close: f64,
    /// Jumps applied during the day as (time fraction, size) pairs.
    pub jumps: Vec<(f64, f64)>,
}

/// A generated panel: noisy observations plus the ground truth that produced
/// them.
#[derive(Debug, Clone, PartialEq)]
pub struct SimPanel {
    pub params: DgpParams,
    /// One TickDay per day.
    pub ticks: Vec<TickDay>,
    /// True diffusive spot variance c at the n-grid, d_total × n.
    /// Jumps are not part of c: it is the diffusion coefficient σ², which is
    /// what the predictors target.
    pub true_vol: DMatrix<f64>,
    /// Daily HAR factors σ̃_i.
    pub daily_factor: Vec<f64>,
    /// Per-day jump lists, mirroring `ticks[i].jumps`.
    pub jump_times: Vec<Vec<(f64, f64)>>,
}

impl SimPanel {
    /// Log returns over each of the n intraday blocks of every day,
    /// r_{i,j} = Y(s_j) − Y(s_{j−1}) with s_j = round(j·m/n).
    pub fn block_returns(&self) -> Vec<Vec<f64>> {
        self.ticks
            .iter()
            .map(|day| block_returns_from_prices(&day.y, self.params.n).expect("valid panel day"))
            .collect()
    }
}

/// Block log returns of one day of m+1 prices on the n-point grid.
pub fn block_returns_from_prices(y: &[f64], n: usize) -> Result<Vec<f64>> {
    if y.len() < 2 {
        return Err(Error::InsufficientData("need at least 2 prices".into()));
    }
    let m = y.len() - 1;
    if n < 1 || n > m {
        return Err(Error::InvalidParameter(format!(
            "block grid n={n} must satisfy 1 <= n <= m = {m}"
        )));
    }
    Ok((1..=n)
        .map(|j| y[grid_tick(j, m, n)] - y[grid_tick(j - 1, m, n)])
        .collect())
}

/// Tick index of intraday grid point j (j = 0..=n).
pub(crate) fn grid_tick(j: usize, m: usize, n: usize) -> usize {
    ((j * m) as f64 / n as f64).round() as usize
}

/// HAR recursion driven by an explicit innovation sequence; history starts at
/// the unconditional mean and the first `burn_in` outputs are discarded.
fn har_recursion(params: &DgpParams, innovations: &[f64]) -> Vec<f64> {
    let total = innovations.len();
    let mut hist = vec![params.har_mean(); 22];
    let mut out = Vec::with_capacity(total.saturating_sub(params.burn_in));
    for (i, zeta) in innovations.iter().enumerate() {
        let len = hist.len();
        let last = hist[len - 1];
        let weekly: f64 = hist[len - 5..].iter().sum::<f64>() / 5.0;
        let monthly: f64 = hist[len - 22..].iter().sum::<f64>() / 22.0;
        let value = params.b0 + params.b1 * last + params.b2 * weekly + params.b3 * monthly + zeta;
        hist.push(value);
        hist.remove(0);
        if i >= params.burn_in {
            out.push(value);
        }
    }
    out
}

/// Draws the daily factor sequence σ̃_1..σ̃_{d_total}.
pub fn gen_har_factor(params: &DgpParams, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    params.validate()?;
    let total = params.burn_in + params.d_total;
    let innovations: Vec<f64> = (0..total).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Ok(har_recursion(params, &innovations))
}

/// Draws one day's spot-variance path σ²(t_s) = σ̃²·h(t_s) + q(t_s)·ξ_s for
/// s = 0..=m, conditioned on positivity at every tick.
pub fn gen_spot_vol_day(
    sigma_tilde: f64,
    params: &DgpParams,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let m = params.m;
    let factor = sigma_tilde * sigma_tilde;
    let mut path = Vec::with_capacity(m + 1);
    for s in 0..=m {
        let t = s as f64 / m as f64;
        let base = factor * params.diurnal(t);
        let eps = eps_scale_q(t) * params.eps_scale_sd * rng.sample::<f64, _>(StandardNormal);
        path.push(base + eps);
    }
    if params.eps_scale_sd == 0.0 {
        // Deterministic path: positive by construction (gamma0 > 0).
        return Ok(path);
    }
    for _round in 0..params.max_redraws {
        let mut any_nonpositive = false;
        match params.positivity {
            PositivityPolicy::PerTick => {
                for s in 0..=m {
                    if path[s] <= 0.0 {
                        any_nonpositive = true;
                        let t = s as f64 / m as f64;
                        let base = factor * params.diurnal(t);
                        let eps = eps_scale_q(t)
                            * params.eps_scale_sd
                            * rng.sample::<f64, _>(StandardNormal);
                        path[s] = base + eps;
                    }
                }
                // A per-tick round leaves previously-positive ticks untouched,
                // so only freshly redrawn ticks can still be nonpositive.
                if !any_nonpositive {
                    return Ok(path);
                }
                if path.iter().all(|&v| v > 0.0) {
                    return Ok(path);
                }
            }
            PositivityPolicy::WholeDay => {
                any_nonpositive = path.iter().any(|&v| v <= 0.0);
                if !any_nonpositive {
                    return Ok(path);
                }
                for s in 0..=m {
                    let t = s as f64 / m as f64;
                    let base = factor * params.diurnal(t);
                    let eps =
                        eps_scale_q(t) * params.eps_scale_sd * rng.sample::<f64, _>(StandardNormal);
                    path[s] = base + eps;
                }
            }
        }
    }
    if path.iter().all(|&v| v > 0.0) {
        return Ok(path);
    }
    Err(Error::PositivityFailure { day: 0, attempts: params.max_redraws })
}

/// Simulates one day of noisy log prices from a given spot-variance path.
///
/// Euler scheme with step Δ = 1/m:
/// X_s = X_{s−1} + (μ − σ²_{s−1}/2)Δ + σ_{s−1}√Δ·Z_s + jumps,
/// with a Poisson(jump_intensity/m) jump count per step and
/// N(jump_mean, jump_sd²) sizes; observations Y_s = X_s + e_s.
///
/// `x_open` is the opening noise-free log price (1.0 on a panel's first day,
/// the previous close afterwards).
pub fn gen_tick_day(
    vol_path: &[f64],
    x_open: f64,
    params: &DgpParams,
    rng: &mut ChaCha8Rng,
) -> Result<TickDay> {
    let m = params.m;
    if vol_path.len() != m + 1 {
        return Err(Error::DimensionMismatch(format!(
            "vol_path has {} points, expected m+1 = {}",
            vol_path.len(),
            m + 1
        )));
    }
    let dt = 1.0 / m as f64;
    let sqrt_dt = dt.sqrt();

    let mut x = Vec::with_capacity(m + 1);
    x.push(x_open);
    for s in 1..=m {
        let var = vol_path[s - 1];
        let z: f64 = rng.sample(StandardNormal);
        let next = x[s - 1] + (params.mu - var / 2.0) * dt + var.sqrt() * sqrt_dt * z;
        x.push(next);
    }

    let mut jumps = Vec::new();
    if params.jump_intensity > 0.0 {
        let poisson = Poisson::new(params.jump_intensity * dt)
            .map_err(|e| Error::InvalidParameter(format!("jump intensity: {e}")))?;
        let mut cumulative = 0.0;
        for s in 1..=m {
            let count = poisson.sample(rng) as u64;
            if count > 0 {
                let mut size = 0.0;
                for _ in 0..count {
                    size += params.jump_mean
                        + params.jump_sd * rng.sample::<f64, _>(StandardNormal);
                }
                jumps.push((s as f64 * dt, size));
                cumulative += size;
            }
            x[s] += cumulative;
        }
    }

    let y = x
        .iter()
        .map(|&xi| xi + params.noise_sd * rng.sample::<f64, _>(StandardNormal))
        .collect();

    Ok(TickDay { day: 0, y, x_close: x[m], jumps })
}

/// Generates a full panel deterministically from `params.seed`.
pub fn gen_panel(params: &DgpParams) -> Result<SimPanel> {
    gen_panel_with_stream(params, 0)
}

/// Generates a panel on a specific RNG stream of the master seed. Monte Carlo
/// drivers give replication i stream i+1 so replications are independent and
/// reproducible in any execution order.
pub fn gen_panel_with_stream(params: &DgpParams, stream: u64) -> Result<SimPanel> {
    params.validate()?;
    let mut rng = replication_rng(params.seed, stream);
    let daily_factor = gen_har_factor(params, &mut rng)?;

    let (m, n, days) = (params.m, params.n, params.d_total);
    let mut ticks = Vec::with_capacity(days);
    let mut true_vol = DMatrix::zeros(days, n);
    let mut x_open = 1.0;
    for day in 0..days {
        let vol_path = gen_spot_vol_day(daily_factor[day], params, &mut rng).map_err(|e| {
            match e {
                Error::PositivityFailure { attempts, .. } => {
                    Error::PositivityFailure { day, attempts }
                }
                other => other,
            }
        })?;
        for j in 1..=n {
            true_vol[(day, j - 1)] = vol_path[grid_tick(j, m, n)];
        }
        let mut tick_day = gen_tick_day(&vol_path, x_open, params, &mut rng)?;
        tick_day.day = day;
        x_open = tick_day.x_close;
        ticks.push(tick_day);
    }

    let jump_times = ticks.iter().map(|d| d.jumps.clone()).collect();
    Ok(SimPanel { params: params.clone(), ticks, true_vol, daily_factor, jump_times })
}
