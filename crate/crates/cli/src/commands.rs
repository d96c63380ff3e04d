//! Subcommand implementations: artifact layout and orchestration on top of
//! the core library. Every command writes a `manifest.json` recording the
//! resolved configuration and the master seed (when randomness is involved),
//! so any artifact directory is reproducible from its manifest alone.

use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use sipvol_core::evaluation::{
    bh_adjust, dm_from_differentials, mspe, n1_from_omega, run_backtest, BacktestConfig, DmResult,
};
use sipvol_core::io::{
    read_ticks_csv, read_volmatrix_csv, write_json, write_report_csv, write_ticks_csv,
    write_volmatrix_csv,
};
use sipvol_core::lowrank::{predict, Method, Prediction, VolMatrix};
use sipvol_core::simulate::{block_returns_from_prices, gen_panel_with_stream, DgpParams};
use sipvol_core::spot_vol::{spot_matrix, SpotDiagnostics};
use sipvol_core::Result;

use crate::config::RunConfig;

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'static str,
    /// Master seed behind all randomness; absent for deterministic commands.
    master_seed: Option<u64>,
    config: &'a RunConfig,
}

fn write_manifest(cfg: &RunConfig, command: &'static str, master_seed: Option<u64>) -> Result<()> {
    let manifest = Manifest { command, master_seed, config: cfg };
    write_json(cfg.output.dir.join("manifest.json"), &manifest)
}

#[derive(Serialize)]
struct SimRecord<'a> {
    master_seed: u64,
    replication: u64,
    params: &'a DgpParams,
}

pub fn cmd_simulate(cfg: &RunConfig, replication: u64) -> Result<()> {
    let params = &cfg.simulate;
    let panel = gen_panel_with_stream(params, replication)?;
    let out = &cfg.output.dir;
    write_ticks_csv(out.join("ticks.csv"), &panel.ticks)?;
    let grid: Vec<f64> = (1..=params.n).map(|j| j as f64 / params.n as f64).collect();
    write_volmatrix_csv(out.join("true_vol.csv"), &panel.true_vol, &grid)?;
    write_json(
        out.join("params.json"),
        &SimRecord { master_seed: params.seed, replication, params },
    )?;
    write_manifest(cfg, "simulate", Some(params.seed))?;
    println!(
        "simulated {} days x {} ticks (seed {}, stream {}) -> {}",
        params.d_total,
        params.m,
        params.seed,
        replication,
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct DayDiagnostics {
    day: usize,
    #[serde(flatten)]
    diagnostics: SpotDiagnostics,
}

pub fn cmd_spot(cfg: &RunConfig, input: &Path) -> Result<()> {
    let days = read_ticks_csv(input)?;
    let m = days[0].len() - 1;
    let pa_cfg = cfg.spot.resolve(m)?;
    let n = cfg.spot.grid;
    let curves = spot_matrix(&days, n, &pa_cfg)?;
    let est = DMatrix::from_fn(curves.len(), n, |i, j| curves[i].values[j]);
    let out = &cfg.output.dir;
    write_volmatrix_csv(out.join("volmatrix.csv"), &est, &curves[0].grid)?;
    // Matching per-interval returns, so a rolling backtest on these
    // estimates can run its VaR section without going back to the ticks.
    let rets: Vec<Vec<f64>> = days
        .iter()
        .map(|prices| block_returns_from_prices(prices, n))
        .collect::<Result<_>>()?;
    let ret_matrix = DMatrix::from_fn(curves.len(), n, |i, j| rets[i][j]);
    write_volmatrix_csv(out.join("returns.csv"), &ret_matrix, &curves[0].grid)?;
    let diagnostics: Vec<DayDiagnostics> = curves
        .iter()
        .enumerate()
        .map(|(day, c)| DayDiagnostics { day, diagnostics: c.diagnostics })
        .collect();
    write_json(out.join("spot_diagnostics.json"), &diagnostics)?;
    write_manifest(cfg, "spot", None)?;
    println!(
        "estimated {} days on a {}-point grid (k = {}, bandwidth = {}) -> {}",
        curves.len(),
        n,
        pa_cfg.k,
        pa_cfg.bandwidth,
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct PredictRecord {
    omega: f64,
    n1: usize,
    n: usize,
    days: usize,
    /// Grid times of the predicted (hidden) points.
    grid_hidden: Vec<f64>,
    predictions: Vec<Prediction>,
}

pub fn cmd_predict(cfg: &RunConfig, input: &Path) -> Result<()> {
    let (data, grid) = read_volmatrix_csv(input)?;
    let n = data.ncols();
    let days = data.nrows();
    let n1 = n1_from_omega(cfg.predict.omega, n)?;
    let vm = VolMatrix::new(data, n1)?;
    let policy = cfg.predict.policy();
    let opts = cfg.predict.sip_options();
    let predictions: Vec<Prediction> = cfg
        .predict
        .methods
        .iter()
        .map(|&method| predict(&vm, method, &policy, &opts))
        .collect::<Result<_>>()?;
    let record = PredictRecord {
        omega: cfg.predict.omega,
        n1,
        n,
        days,
        grid_hidden: grid[n1..].to_vec(),
        predictions,
    };
    write_json(cfg.output.dir.join("predictions.json"), &record)?;
    write_manifest(cfg, "predict", None)?;
    println!(
        "predicted {} hidden points from {} observed (D = {} days) -> {}",
        n - n1,
        n1,
        days,
        cfg.output.dir.display()
    );
    Ok(())
}

pub fn cmd_backtest_rolling(
    cfg: &RunConfig,
    volmatrix: &Path,
    returns: Option<&Path>,
) -> Result<()> {
    let (vols, _grid) = read_volmatrix_csv(volmatrix)?;
    let rets = match returns {
        Some(path) => Some(read_volmatrix_csv(path)?.0),
        None => None,
    };
    let bt = BacktestConfig {
        window: cfg.backtest.window,
        omegas: cfg.backtest.omegas.clone(),
        q0_levels: cfg.backtest.q0_levels.clone(),
        methods: cfg.predict.methods.clone(),
        rank_policy: cfg.predict.policy(),
        sip: cfg.predict.sip_options(),
        normalization: cfg.backtest.normalization,
        alpha: cfg.backtest.alpha,
        dq_lags: cfg.backtest.dq_lags,
    };
    let report = run_backtest(&vols, rets.as_ref(), &bt)?;
    let out = &cfg.output.dir;
    write_json(out.join("report.json"), &report)?;
    write_report_csv(out.join("report.csv"), &report)?;
    write_manifest(cfg, "backtest-rolling", None)?;
    println!(
        "backtested {} days ({} loss cells, {} coverage cells) -> {}",
        report.days_evaluated,
        report.losses.len(),
        report.coverage.len(),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct SweepCell {
    method: Method,
    metric: &'static str,
    omega: f64,
    window: usize,
    /// Mean MSPE across replications.
    value: f64,
    /// DM test of this method against SIP on the replication loss series.
    dm: Option<DmResult>,
    p_adj: Option<f64>,
    reject: Option<bool>,
}

#[derive(Serialize)]
struct SweepReport<'a> {
    master_seed: u64,
    replications: usize,
    ticks: usize,
    grid: usize,
    window_grid: &'a [usize],
    omega_grid: &'a [f64],
    methods: &'a [Method],
    alpha: f64,
    cells: Vec<SweepCell>,
}

/// Monte Carlo sweep over history lengths D and observed fractions ω:
/// replication `i` simulates a panel on RNG stream `i`, estimates the spot
/// matrix from the noisy ticks, predicts the last day's hidden block with
/// every method, and scores it against the true simulated variance.
pub fn cmd_backtest_sweep(cfg: &RunConfig) -> Result<()> {
    let bt = &cfg.backtest;
    let methods = &cfg.predict.methods;
    let d_max = *bt.window_grid.iter().max().expect("validated nonempty");
    let mut params = cfg.simulate.clone();
    params.m = bt.sweep_ticks;
    params.d_total = d_max;
    params.validate()?;
    // Estimation runs on the simulated panel's grid, not the [spot]
    // section's output grid (those matter for external tick files).
    let spot_cfg = cfg.spot.resolve_for(params.m, params.n)?;
    let n = params.n;
    let policy = cfg.predict.policy();
    let opts = cfg.predict.sip_options();

    let n_cells = bt.window_grid.len() * bt.omega_grid.len() * methods.len();
    // losses[rep] holds per-cell losses in (D, ω, method) order.
    let losses: Vec<Vec<f64>> = (0..bt.reps)
        .into_par_iter()
        .map(|rep| -> Result<Vec<f64>> {
            let panel = gen_panel_with_stream(&params, rep as u64)?;
            let prices: Vec<Vec<f64>> = panel.ticks.iter().map(|d| d.y.clone()).collect();
            let curves = spot_matrix(&prices, n, &spot_cfg)?;
            let est = DMatrix::from_fn(d_max, n, |i, j| curves[i].values[j]);
            let mut cell_losses = Vec::with_capacity(n_cells);
            for &dwin in &bt.window_grid {
                let window = est.rows(d_max - dwin, dwin).into_owned();
                for &omega in &bt.omega_grid {
                    let n1 = n1_from_omega(omega, n)?;
                    let vm = VolMatrix::new(window.clone(), n1)?;
                    let truth: Vec<f64> =
                        (n1..n).map(|j| panel.true_vol[(d_max - 1, j)]).collect();
                    for &method in methods {
                        let pred = predict(&vm, method, &policy, &opts)?;
                        cell_losses.push(mspe(&pred.values, &truth, n, bt.normalization)?);
                    }
                }
            }
            Ok(cell_losses)
        })
        .collect::<Result<_>>()?;

    let sip_pos = methods.iter().position(|&m| m == Method::Sip);
    let mut cells: Vec<SweepCell> = Vec::with_capacity(n_cells);
    let mut means = Vec::with_capacity(n_cells);
    let mut pvalues = Vec::new();
    let mut pvalue_cells = Vec::new();
    for (di, &dwin) in bt.window_grid.iter().enumerate() {
        for (wi, &omega) in bt.omega_grid.iter().enumerate() {
            let base = (di * bt.omega_grid.len() + wi) * methods.len();
            for (mi, &method) in methods.iter().enumerate() {
                let series: Vec<f64> = losses.iter().map(|r| r[base + mi]).collect();
                let value = series.iter().sum::<f64>() / series.len() as f64;
                // The DM test needs a minimum series length; short sweeps
                // just report mean losses without significance columns.
                let dm = match sip_pos {
                    Some(sp) if method != Method::Sip && bt.reps >= 10 => {
                        let diffs: Vec<f64> = losses
                            .iter()
                            .map(|r| r[base + mi] - r[base + sp])
                            .collect();
                        Some(dm_from_differentials(&diffs)?)
                    }
                    _ => None,
                };
                if let Some(result) = &dm {
                    pvalues.push(result.p_value);
                    pvalue_cells.push(cells.len());
                }
                means.push(value);
                cells.push(SweepCell {
                    method,
                    metric: "mspe",
                    omega,
                    window: dwin,
                    value,
                    dm,
                    p_adj: None,
                    reject: None,
                });
            }
        }
    }
    if !pvalues.is_empty() {
        let bh = bh_adjust(&pvalues, bt.alpha)?;
        for (i, &ci) in pvalue_cells.iter().enumerate() {
            cells[ci].p_adj = Some(bh.adjusted[i]);
            cells[ci].reject = Some(bh.reject[i]);
        }
    }

    let out = &cfg.output.dir;
    let mut w = csv::Writer::from_path(out.join("sweep.csv"))?;
    w.write_record(["method", "metric", "omega", "D", "value", "p_adj"])?;
    for cell in &cells {
        w.write_record([
            cell.method.to_string(),
            cell.metric.to_string(),
            cell.omega.to_string(),
            cell.window.to_string(),
            cell.value.to_string(),
            cell.p_adj.map(|p| p.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;

    // Plot tables: MSPE against D at a fixed ω, and against ω at a fixed D,
    // with the fixed value snapped to the nearest grid point.
    let cell_mean = |di: usize, wi: usize, mi: usize| {
        means[(di * bt.omega_grid.len() + wi) * methods.len() + mi]
    };
    let wi_star = nearest_index(&bt.omega_grid, bt.plot_omega);
    let di_star = nearest_index(
        &bt.window_grid.iter().map(|&d| d as f64).collect::<Vec<_>>(),
        bt.plot_window as f64,
    );
    let mut header = vec!["D".to_string()];
    header.extend(methods.iter().map(|m| m.name().to_string()));
    let mut w = csv::Writer::from_path(out.join("mspe_vs_window.csv"))?;
    w.write_record(&header)?;
    for (di, &dwin) in bt.window_grid.iter().enumerate() {
        let mut row = vec![dwin.to_string()];
        row.extend((0..methods.len()).map(|mi| cell_mean(di, wi_star, mi).to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    header[0] = "omega".to_string();
    let mut w = csv::Writer::from_path(out.join("mspe_vs_omega.csv"))?;
    w.write_record(&header)?;
    for (wi, &omega) in bt.omega_grid.iter().enumerate() {
        let mut row = vec![omega.to_string()];
        row.extend((0..methods.len()).map(|mi| cell_mean(di_star, wi, mi).to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;

    let report = SweepReport {
        master_seed: params.seed,
        replications: bt.reps,
        ticks: params.m,
        grid: n,
        window_grid: &bt.window_grid,
        omega_grid: &bt.omega_grid,
        methods,
        alpha: bt.alpha,
        cells,
    };
    write_json(out.join("sweep.json"), &report)?;
    write_manifest(cfg, "backtest-sweep", Some(params.seed))?;
    println!(
        "swept {} replications over {} D x {} omega cells (seed {}) -> {}",
        bt.reps,
        bt.window_grid.len(),
        bt.omega_grid.len(),
        params.seed,
        out.display()
    );
    Ok(())
}

fn nearest_index(grid: &[f64], target: f64) -> usize {
    let mut best = 0;
    for (i, &g) in grid.iter().enumerate() {
        if (g - target).abs() < (grid[best] - target).abs() {
            best = i;
        }
    }
    best
}
