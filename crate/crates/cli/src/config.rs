//! Run configuration: built-in defaults, a flat key=value config file with
//! sections, and environment overrides, merged in that order. Command-line
//! flags are merged on top by `main` and win over everything.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sipvol_core::evaluation::Normalization;
use sipvol_core::lowrank::{Method, RankPolicy, SipOptions};
use sipvol_core::simulate::{DgpParams, PositivityPolicy};
use sipvol_core::spot_vol::{default_window, kernel_mass, KernelShape, PreAvgConfig, WeightShape};
use sipvol_core::{Error, Result};

/// Where artifacts go and how many workers run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Worker threads; 0 means one per core.
    pub threads: usize,
}

/// Spot-estimation settings; `k` and `bandwidth` use 0 as "choose
/// automatically from the data dimensions".
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpotConfig {
    /// Intraday grid points per day in the output matrix.
    pub grid: usize,
    pub k: usize,
    pub bandwidth: f64,
    pub kernel: KernelShape,
    pub weight: WeightShape,
    pub trunc_const: f64,
    pub trunc_exp: f64,
    pub boundary_renormalize: bool,
}

impl SpotConfig {
    /// Concrete estimator settings for a day of `m` returns on an `n`-point
    /// grid. Automatic `k` starts at ⌈√m⌉ and shrinks until the kernel window
    /// at the close still contains pre-averaged returns — the close is the
    /// binding grid point, and the symmetric kernel only keeps half its
    /// bandwidth inside the day there.
    pub fn resolve_for(&self, m: usize, n: usize) -> Result<PreAvgConfig> {
        let bandwidth = if self.bandwidth == 0.0 { 1.0 / n as f64 } else { self.bandwidth };
        let build = |k: usize| PreAvgConfig {
            k,
            bandwidth,
            kernel: self.kernel,
            weight: self.weight,
            trunc_const: self.trunc_const,
            trunc_exp: self.trunc_exp,
            boundary_renormalize: self.boundary_renormalize,
            ..PreAvgConfig::for_grid(m, n)
        };
        let k = if self.k == 0 {
            let mut k = default_window(m, 1.0).min(m / 2).max(2);
            while k > 2 && kernel_mass(1.0, m, &build(k)).is_err() {
                k -= 1;
            }
            k
        } else {
            self.k
        };
        let cfg = build(k);
        cfg.validate(m)?;
        Ok(cfg)
    }

    /// `resolve_for` on this section's own output grid.
    pub fn resolve(&self, m: usize) -> Result<PreAvgConfig> {
        self.resolve_for(m, self.grid)
    }
}

/// Which rank-selection rule to use; parameters live next to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RankPolicyKind {
    Fixed,
    Ratio,
    Gap,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictConfig {
    pub methods: Vec<Method>,
    /// Observed fraction of the target day.
    pub omega: f64,
    pub rank_policy: RankPolicyKind,
    /// Rank used by the `fixed` policy.
    pub rank: usize,
    /// Cap for the `ratio` and `gap` policies.
    pub rank_max: usize,
    pub ridge: f64,
    pub cond_limit: f64,
}

impl PredictConfig {
    pub fn policy(&self) -> RankPolicy {
        match self.rank_policy {
            RankPolicyKind::Fixed => RankPolicy::Fixed { r: self.rank },
            RankPolicyKind::Ratio => RankPolicy::Ratio { r_max: self.rank_max },
            RankPolicyKind::Gap => RankPolicy::Gap { r_max: self.rank_max },
        }
    }

    pub fn sip_options(&self) -> SipOptions {
        SipOptions { ridge: self.ridge, cond_limit: self.cond_limit }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestSection {
    /// Rolling in-sample window length in days.
    pub window: usize,
    pub omegas: Vec<f64>,
    /// VaR levels; empty skips the coverage section.
    pub q0_levels: Vec<f64>,
    pub alpha: f64,
    pub dq_lags: usize,
    pub normalization: Normalization,
    /// Monte Carlo replications in sweep mode.
    pub reps: usize,
    /// History lengths D evaluated in sweep mode.
    pub window_grid: Vec<usize>,
    pub omega_grid: Vec<f64>,
    /// Ticks per simulated day in sweep mode.
    pub sweep_ticks: usize,
    /// ω held fixed in the MSPE-vs-D plot table (nearest grid value).
    pub plot_omega: f64,
    /// D held fixed in the MSPE-vs-ω plot table (nearest grid value).
    pub plot_window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub output: OutputConfig,
    pub simulate: DgpParams,
    pub spot: SpotConfig,
    pub predict: PredictConfig,
    pub backtest: BacktestSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            output: OutputConfig { dir: PathBuf::from("sipvol-out"), threads: 0 },
            simulate: DgpParams::default(),
            spot: SpotConfig {
                grid: 78,
                k: 0,
                bandwidth: 0.0,
                kernel: KernelShape::UniformLeft,
                weight: WeightShape::AsymmetricTent,
                trunc_const: 1.8,
                trunc_exp: 0.47,
                boundary_renormalize: true,
            },
            predict: PredictConfig {
                methods: Method::ALL.to_vec(),
                omega: 0.5,
                rank_policy: RankPolicyKind::Ratio,
                rank: 1,
                rank_max: 10,
                ridge: 0.0,
                cond_limit: 1e12,
            },
            backtest: BacktestSection {
                window: 63,
                omegas: vec![0.1, 0.5, 0.9],
                q0_levels: vec![0.01, 0.05],
                alpha: 0.05,
                dq_lags: 4,
                normalization: Normalization::PerN,
                reps: 500,
                window_grid: vec![50, 100, 150, 200],
                omega_grid: (1..=18).map(|i| i as f64 / 20.0).collect(),
                sweep_ticks: 23_400,
                plot_omega: 0.5,
                plot_window: 200,
            },
        }
    }
}

impl RunConfig {
    /// Defaults, then the config file (if given), then the `SIPVOL_OUT_DIR`
    /// and `SIPVOL_THREADS` environment variables. The caller merges
    /// command-line flags on top and validates the final result.
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(p) = path {
            let text = std::fs::read_to_string(p).map_err(|e| {
                Error::InvalidParameter(format!("cannot read config file {}: {e}", p.display()))
            })?;
            apply_text(&mut cfg, &text)?;
            cfg.validate()?;
        }
        apply_env(&mut cfg)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.simulate.validate()?;
        let s = &self.spot;
        if s.grid < 1 {
            return Err(bad("spot grid must be >= 1"));
        }
        if s.k == 1 {
            return Err(bad("spot k must be 0 (automatic) or >= 2"));
        }
        if s.bandwidth != 0.0 && !(s.bandwidth > 0.0 && s.bandwidth <= 1.0) {
            return Err(bad("spot bandwidth must be 0 (automatic) or in (0, 1]"));
        }
        if !(s.trunc_const > 0.0) {
            return Err(bad("trunc_const must be > 0"));
        }
        if !(s.trunc_exp > 0.0 && s.trunc_exp < 1.0) {
            return Err(bad("trunc_exp must be in (0, 1)"));
        }
        let p = &self.predict;
        if p.methods.is_empty() {
            return Err(bad("predict methods must not be empty"));
        }
        if !(p.omega > 0.0 && p.omega < 1.0) {
            return Err(bad("predict omega must be in (0, 1)"));
        }
        if p.rank < 1 {
            return Err(bad("rank must be >= 1"));
        }
        if p.rank_max < 1 {
            return Err(bad("rank_max must be >= 1"));
        }
        if !(p.ridge >= 0.0) {
            return Err(bad("ridge must be >= 0"));
        }
        if !(p.cond_limit > 0.0) {
            return Err(bad("cond_limit must be > 0"));
        }
        let b = &self.backtest;
        if b.window < 2 {
            return Err(bad("backtest window must be >= 2"));
        }
        if b.omegas.is_empty() || b.omegas.iter().any(|&w| !(w > 0.0 && w < 1.0)) {
            return Err(bad("backtest omegas must be a nonempty list inside (0, 1)"));
        }
        if b.q0_levels.iter().any(|&q| !(q > 0.0 && q < 1.0)) {
            return Err(bad("q0_levels must lie in (0, 1)"));
        }
        if !(b.alpha > 0.0 && b.alpha < 1.0) {
            return Err(bad("alpha must be in (0, 1)"));
        }
        if b.reps < 1 {
            return Err(bad("reps must be >= 1"));
        }
        if b.window_grid.is_empty() || b.window_grid.iter().any(|&d| d < 2) {
            return Err(bad("window_grid must be a nonempty list of day counts >= 2"));
        }
        if b.omega_grid.is_empty() || b.omega_grid.iter().any(|&w| !(w > 0.0 && w < 1.0)) {
            return Err(bad("omega_grid must be a nonempty list inside (0, 1)"));
        }
        if b.sweep_ticks < 2 {
            return Err(bad("sweep_ticks must be >= 2"));
        }
        if !(b.plot_omega > 0.0 && b.plot_omega < 1.0) {
            return Err(bad("plot_omega must be in (0, 1)"));
        }
        if b.plot_window < 2 {
            return Err(bad("plot_window must be >= 2"));
        }
        Ok(())
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

fn apply_env(cfg: &mut RunConfig) -> Result<()> {
    if let Some(v) = env_var("SIPVOL_OUT_DIR") {
        cfg.output.dir = PathBuf::from(v);
    }
    if let Some(v) = env_var("SIPVOL_THREADS") {
        cfg.output.threads = v
            .parse()
            .map_err(|e| bad(format!("SIPVOL_THREADS: {e} (value '{v}')")))?;
    }
    Ok(())
}

fn env_var(key: &str) -> Option<String> {
    std::env::var(key).ok().filter(|s| !s.is_empty())
}

/// Applies `key = value` lines under `[section]` headers. `#` starts a
/// comment; unknown sections or keys are errors so typos don't silently
/// fall back to defaults.
pub fn apply_text(cfg: &mut RunConfig, text: &str) -> Result<()> {
    let mut section = String::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        if let Some(rest) = line.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                return Err(bad(format!("config line {lineno}: malformed section header '{raw}'")));
            };
            let name = name.trim();
            if !matches!(name, "output" | "simulate" | "spot" | "predict" | "backtest") {
                return Err(bad(format!("config line {lineno}: unknown section '{name}'")));
            }
            section = name.to_string();
            continue;
        }
        let Some(eq) = line.find('=') else {
            return Err(bad(format!("config line {lineno}: expected 'key = value', got '{line}'")));
        };
        let key = line[..eq].trim();
        let value = line[eq + 1..].trim();
        set_key(cfg, &section, key, value)
            .map_err(|e| bad(format!("config line {lineno}: {e}")))?;
    }
    Ok(())
}

fn set_key(cfg: &mut RunConfig, section: &str, key: &str, value: &str) -> Result<()> {
    match (section, key) {
        ("output", "dir") => cfg.output.dir = PathBuf::from(value),
        ("output", "threads") => cfg.output.threads = p(key, value)?,

        ("simulate", "mu") => cfg.simulate.mu = p(key, value)?,
        ("simulate", "gamma0") => cfg.simulate.gamma0 = p(key, value)?,
        ("simulate", "gamma1") => cfg.simulate.gamma1 = p(key, value)?,
        ("simulate", "b0") => cfg.simulate.b0 = p(key, value)?,
        ("simulate", "b1") => cfg.simulate.b1 = p(key, value)?,
        ("simulate", "b2") => cfg.simulate.b2 = p(key, value)?,
        ("simulate", "b3") => cfg.simulate.b3 = p(key, value)?,
        ("simulate", "noise_sd") => cfg.simulate.noise_sd = p(key, value)?,
        ("simulate", "jump_mean") => cfg.simulate.jump_mean = p(key, value)?,
        ("simulate", "jump_sd") => cfg.simulate.jump_sd = p(key, value)?,
        ("simulate", "jump_intensity") => cfg.simulate.jump_intensity = p(key, value)?,
        ("simulate", "eps_scale_sd") => cfg.simulate.eps_scale_sd = p(key, value)?,
        ("simulate", "ticks") => cfg.simulate.m = p(key, value)?,
        ("simulate", "grid") => cfg.simulate.n = p(key, value)?,
        ("simulate", "days") => cfg.simulate.d_total = p(key, value)?,
        ("simulate", "seed") => cfg.simulate.seed = p(key, value)?,
        ("simulate", "burn_in") => cfg.simulate.burn_in = p(key, value)?,
        ("simulate", "positivity") => {
            cfg.simulate.positivity = positivity_from_str(value).map_err(Error::InvalidParameter)?
        }
        ("simulate", "max_redraws") => cfg.simulate.max_redraws = p(key, value)?,

        ("spot", "grid") => cfg.spot.grid = p(key, value)?,
        ("spot", "k") => cfg.spot.k = p(key, value)?,
        ("spot", "bandwidth") => cfg.spot.bandwidth = p(key, value)?,
        ("spot", "kernel") => {
            cfg.spot.kernel = kernel_from_str(value).map_err(Error::InvalidParameter)?
        }
        ("spot", "weight") => {
            cfg.spot.weight = weight_from_str(value).map_err(Error::InvalidParameter)?
        }
        ("spot", "trunc_const") => cfg.spot.trunc_const = p(key, value)?,
        ("spot", "trunc_exp") => cfg.spot.trunc_exp = p(key, value)?,
        ("spot", "boundary_renormalize") => cfg.spot.boundary_renormalize = p(key, value)?,

        ("predict", "methods") => cfg.predict.methods = parse_methods(value)?,
        ("predict", "omega") => cfg.predict.omega = p(key, value)?,
        ("predict", "rank_policy") => {
            cfg.predict.rank_policy = rank_policy_from_str(value).map_err(Error::InvalidParameter)?
        }
        ("predict", "rank") => cfg.predict.rank = p(key, value)?,
        ("predict", "rank_max") => cfg.predict.rank_max = p(key, value)?,
        ("predict", "ridge") => cfg.predict.ridge = p(key, value)?,
        ("predict", "cond_limit") => cfg.predict.cond_limit = p(key, value)?,

        ("backtest", "window") => cfg.backtest.window = p(key, value)?,
        ("backtest", "omegas") => cfg.backtest.omegas = p_list(key, value)?,
        ("backtest", "q0_levels") => cfg.backtest.q0_levels = p_list(key, value)?,
        ("backtest", "alpha") => cfg.backtest.alpha = p(key, value)?,
        ("backtest", "dq_lags") => cfg.backtest.dq_lags = p(key, value)?,
        ("backtest", "normalization") => {
            cfg.backtest.normalization =
                normalization_from_str(value).map_err(Error::InvalidParameter)?
        }
        ("backtest", "reps") => cfg.backtest.reps = p(key, value)?,
        ("backtest", "window_grid") => cfg.backtest.window_grid = p_list(key, value)?,
        ("backtest", "omega_grid") => cfg.backtest.omega_grid = p_list(key, value)?,
        ("backtest", "sweep_ticks") => cfg.backtest.sweep_ticks = p(key, value)?,
        ("backtest", "plot_omega") => cfg.backtest.plot_omega = p(key, value)?,
        ("backtest", "plot_window") => cfg.backtest.plot_window = p(key, value)?,

        ("", k) => return Err(bad(format!("key '{k}' appears before any [section] header"))),
        (s, k) => return Err(bad(format!("unknown key '{k}' in section [{s}]"))),
    }
    Ok(())
}

fn p<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| bad(format!("{key}: {e} (value '{value}')")))
}

fn p_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|s| p(key, s.trim())).collect()
}

/// Serializes a config in the same format `apply_text` reads, with every key
/// written explicitly; parse ∘ serialize is the identity on `RunConfig`.
pub fn to_text(cfg: &RunConfig) -> String {
    let mut s = String::new();
    let w = &mut s;
    writeln!(w, "[output]").unwrap();
    writeln!(w, "dir = {}", cfg.output.dir.display()).unwrap();
    writeln!(w, "threads = {}", cfg.output.threads).unwrap();

    let sm = &cfg.simulate;
    writeln!(w, "\n[simulate]").unwrap();
    writeln!(w, "days = {}", sm.d_total).unwrap();
    writeln!(w, "ticks = {}", sm.m).unwrap();
    writeln!(w, "grid = {}", sm.n).unwrap();
    writeln!(w, "seed = {}", sm.seed).unwrap();
    writeln!(w, "mu = {}", sm.mu).unwrap();
    writeln!(w, "gamma0 = {}", sm.gamma0).unwrap();
    writeln!(w, "gamma1 = {}", sm.gamma1).unwrap();
    writeln!(w, "b0 = {}", sm.b0).unwrap();
    writeln!(w, "b1 = {}", sm.b1).unwrap();
    writeln!(w, "b2 = {}", sm.b2).unwrap();
    writeln!(w, "b3 = {}", sm.b3).unwrap();
    writeln!(w, "noise_sd = {}", sm.noise_sd).unwrap();
    writeln!(w, "jump_mean = {}", sm.jump_mean).unwrap();
    writeln!(w, "jump_sd = {}", sm.jump_sd).unwrap();
    writeln!(w, "jump_intensity = {}", sm.jump_intensity).unwrap();
    writeln!(w, "eps_scale_sd = {}", sm.eps_scale_sd).unwrap();
    writeln!(w, "burn_in = {}", sm.burn_in).unwrap();
    writeln!(w, "positivity = {}", positivity_token(sm.positivity)).unwrap();
    writeln!(w, "max_redraws = {}", sm.max_redraws).unwrap();

    let sp = &cfg.spot;
    writeln!(w, "\n[spot]").unwrap();
    writeln!(w, "grid = {}", sp.grid).unwrap();
    writeln!(w, "k = {}", sp.k).unwrap();
    writeln!(w, "bandwidth = {}", sp.bandwidth).unwrap();
    writeln!(w, "kernel = {}", kernel_token(sp.kernel)).unwrap();
    writeln!(w, "weight = {}", weight_token(sp.weight)).unwrap();
    writeln!(w, "trunc_const = {}", sp.trunc_const).unwrap();
    writeln!(w, "trunc_exp = {}", sp.trunc_exp).unwrap();
    writeln!(w, "boundary_renormalize = {}", sp.boundary_renormalize).unwrap();

    let pr = &cfg.predict;
    writeln!(w, "\n[predict]").unwrap();
    writeln!(w, "methods = {}", join_methods(&pr.methods)).unwrap();
    writeln!(w, "omega = {}", pr.omega).unwrap();
    writeln!(w, "rank_policy = {}", rank_policy_token(pr.rank_policy)).unwrap();
    writeln!(w, "rank = {}", pr.rank).unwrap();
    writeln!(w, "rank_max = {}", pr.rank_max).unwrap();
    writeln!(w, "ridge = {}", pr.ridge).unwrap();
    writeln!(w, "cond_limit = {}", pr.cond_limit).unwrap();

    let bt = &cfg.backtest;
    writeln!(w, "\n[backtest]").unwrap();
    writeln!(w, "window = {}", bt.window).unwrap();
    writeln!(w, "omegas = {}", join(&bt.omegas)).unwrap();
    writeln!(w, "q0_levels = {}", join(&bt.q0_levels)).unwrap();
    writeln!(w, "alpha = {}", bt.alpha).unwrap();
    writeln!(w, "dq_lags = {}", bt.dq_lags).unwrap();
    writeln!(w, "normalization = {}", normalization_token(bt.normalization)).unwrap();
    writeln!(w, "reps = {}", bt.reps).unwrap();
    writeln!(w, "window_grid = {}", join(&bt.window_grid)).unwrap();
    writeln!(w, "omega_grid = {}", join(&bt.omega_grid)).unwrap();
    writeln!(w, "sweep_ticks = {}", bt.sweep_ticks).unwrap();
    writeln!(w, "plot_omega = {}", bt.plot_omega).unwrap();
    writeln!(w, "plot_window = {}", bt.plot_window).unwrap();
    s
}

fn join<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn join_methods(methods: &[Method]) -> String {
    methods.iter().map(|m| m.name()).collect::<Vec<_>>().join(",")
}

pub fn parse_methods(value: &str) -> Result<Vec<Method>> {
    value
        .split(',')
        .map(|s| method_from_str(s.trim()).map_err(Error::InvalidParameter))
        .collect()
}

// Token tables shared by the config file and the command-line flags, so both
// accept exactly the same spellings.

pub fn method_from_str(s: &str) -> std::result::Result<Method, String> {
    s.parse()
        .map_err(|_| format!("unknown method '{s}' (expected sip, ave, ar1, pc, har_d)"))
}

pub fn kernel_from_str(s: &str) -> std::result::Result<KernelShape, String> {
    match s {
        "symmetric" => Ok(KernelShape::UniformSymmetric),
        "left" => Ok(KernelShape::UniformLeft),
        _ => Err(format!("unknown kernel '{s}' (expected symmetric or left)")),
    }
}

pub fn kernel_token(k: KernelShape) -> &'static str {
    match k {
        KernelShape::UniformSymmetric => "symmetric",
        KernelShape::UniformLeft => "left",
    }
}

pub fn weight_from_str(s: &str) -> std::result::Result<WeightShape, String> {
    match s {
        "asymmetric_tent" => Ok(WeightShape::AsymmetricTent),
        "symmetric_tent" => Ok(WeightShape::SymmetricTent),
        _ => Err(format!("unknown weight '{s}' (expected asymmetric_tent or symmetric_tent)")),
    }
}

pub fn weight_token(wgt: WeightShape) -> &'static str {
    match wgt {
        WeightShape::AsymmetricTent => "asymmetric_tent",
        WeightShape::SymmetricTent => "symmetric_tent",
    }
}

pub fn rank_policy_from_str(s: &str) -> std::result::Result<RankPolicyKind, String> {
    match s {
        "fixed" => Ok(RankPolicyKind::Fixed),
        "ratio" => Ok(RankPolicyKind::Ratio),
        "gap" => Ok(RankPolicyKind::Gap),
        _ => Err(format!("unknown rank policy '{s}' (expected fixed, ratio, or gap)")),
    }
}

pub fn rank_policy_token(k: RankPolicyKind) -> &'static str {
    match k {
        RankPolicyKind::Fixed => "fixed",
        RankPolicyKind::Ratio => "ratio",
        RankPolicyKind::Gap => "gap",
    }
}

pub fn normalization_from_str(s: &str) -> std::result::Result<Normalization, String> {
    match s {
        "per_n" => Ok(Normalization::PerN),
        "per_n2" => Ok(Normalization::PerN2),
        _ => Err(format!("unknown normalization '{s}' (expected per_n or per_n2)")),
    }
}

pub fn normalization_token(n: Normalization) -> &'static str {
    match n {
        Normalization::PerN => "per_n",
        Normalization::PerN2 => "per_n2",
    }
}

pub fn positivity_from_str(s: &str) -> std::result::Result<PositivityPolicy, String> {
    match s {
        "per_tick" => Ok(PositivityPolicy::PerTick),
        "whole_day" => Ok(PositivityPolicy::WholeDay),
        _ => Err(format!("unknown positivity policy '{s}' (expected per_tick or whole_day)")),
    }
}

pub fn positivity_token(p: PositivityPolicy) -> &'static str {
    match p {
        PositivityPolicy::PerTick => "per_tick",
        PositivityPolicy::WholeDay => "whole_day",
    }
}
