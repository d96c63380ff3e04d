//! Acceptance gate: one test per release criterion, each printing a single
//! PASS/FAIL line with the measured value against its threshold.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use sipvol_core::evaluation::{
    bh_adjust, dm_test, dq_test, lruc_test, mspe, LossSeries, Normalization,
};
use sipvol_core::lowrank::{
    ar1_predict, ave_predict, compute_sip_factors, pc_predict, sip_predict,
    sip_predict_from_factors, Method, RankPolicy, SipOptions, VolMatrix,
};
use sipvol_core::rng::replication_rng;
use sipvol_core::simulate::{gen_panel_with_stream, gen_tick_day, DgpParams};
use sipvol_core::spot_vol::{spot_curve, spot_estimate, KernelShape, PreAvgConfig};

fn report(name: &str, pass: bool, detail: &str) {
    println!("[acceptance] {name}: {} — {detail}", if pass { "PASS" } else { "FAIL" });
}

/// Random positive matrix with entries in [0.5, 2): guarantees positive
/// entries and nonsingular cores for the exact-rank constructions.
fn positive_matrix(p: usize, q: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(p, q, |_, _| rng.gen_range(0.5..2.0))
}

fn exact_rank_r(p: usize, q: usize, r: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    positive_matrix(p, r, rng) * positive_matrix(r, q, rng)
}

/// Pseudoinverse through the Gram-matrix eigendecomposition — a route
/// independent of the production SVD/LU code path.
fn pinv_oracle(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let gram = m.transpose() * m;
    let dim = gram.nrows();
    let eig = nalgebra::SymmetricEigen::new(gram);
    let maxev = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let mut inv = DMatrix::zeros(dim, dim);
    for k in 0..dim {
        let ev = eig.eigenvalues[k];
        if ev > rel_tol * maxev {
            let v = eig.eigenvectors.column(k);
            inv += v * v.transpose() / ev;
        }
    }
    inv * m.transpose()
}

#[test]
fn exact_low_rank_recovery() {
    let start = Instant::now();
    let cases: Vec<(usize, u64)> = (0..1000).map(|i| ((i % 3) + 1, i as u64)).collect();
    let max_err = cases
        .par_iter()
        .map(|&(r, seed)| {
            let mut rng = replication_rng(901, seed);
            let p = rng.gen_range(r + 2..=50);
            let q = rng.gen_range(r + 2..=80);
            let n1 = rng.gen_range(r.max(1)..q);
            let m = exact_rank_r(p, q, r, &mut rng);
            let vm = VolMatrix::new(m.clone(), n1).unwrap();
            let pred = sip_predict(&vm, r).unwrap();
            let mut worst = 0.0f64;
            for (j, got) in pred.values.iter().enumerate() {
                let truth = m[(p - 1, n1 + j)];
                worst = worst.max(((got - truth) / truth).abs());
            }
            worst
        })
        .reduce(|| 0.0, f64::max);
    let elapsed = start.elapsed();
    let pass = max_err <= 1e-8 && elapsed.as_secs_f64() < 30.0;
    report(
        "exact low-rank recovery",
        pass,
        &format!(
            "max relative error {max_err:.3e} (threshold 1e-8) over 1000 matrices, r in {{1,2,3}}, in {elapsed:.2?} (limit 30s)"
        ),
    );
    assert!(pass);
}

#[test]
fn pseudoinverse_oracle_equivalence() {
    let mut worst = 0.0f64;
    for i in 0..200u64 {
        let r = (i % 3) as usize + 1;
        let mut rng = replication_rng(902, i);
        let p = rng.gen_range(r + 2..=30);
        let q = rng.gen_range(r + 2..=30);
        let n1 = rng.gen_range(r..q);
        let m = exact_rank_r(p, q, r, &mut rng);
        let vm = VolMatrix::new(m, n1).unwrap();
        let pred = sip_predict(&vm, r).unwrap();
        let oracle = vm.block21() * pinv_oracle(&vm.block11(), 1e-12) * vm.block12();
        for (j, got) in pred.values.iter().enumerate() {
            let want = oracle[(0, j)];
            worst = worst.max(((got - want) / want).abs());
        }
    }
    let pass = worst <= 1e-8;
    report(
        "pseudoinverse-oracle equivalence",
        pass,
        &format!("max relative difference {worst:.3e} (threshold 1e-8) over 200 matrices"),
    );
    assert!(pass);
}

/// One day of constant-variance log prices with optional observation noise.
fn constant_vol_day(m: usize, var: f64, noise_sd: f64, seed_stream: (u64, u64)) -> Vec<f64> {
    let params = DgpParams {
        mu: var / 2.0, // zero effective drift
        noise_sd,
        jump_intensity: 0.0,
        m,
        ..DgpParams::default()
    };
    let vol_path = vec![var; m + 1];
    let mut rng = replication_rng(seed_stream.0, seed_stream.1);
    gen_tick_day(&vol_path, 0.0, &params, &mut rng).unwrap().y
}

fn calibration_cfg(m: usize, n: usize) -> PreAvgConfig {
    PreAvgConfig { k: 28, bandwidth: 0.7, ..PreAvgConfig::for_grid(m, n) }
}

#[test]
fn spot_estimator_calibration() {
    let start = Instant::now();
    let m = 23_400;
    let cfg = calibration_cfg(m, 78);
    let reps = 500u64;
    let results: Vec<(f64, f64)> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let clean = constant_vol_day(m, 1.0, 0.0, (903, rep));
            let noisy = constant_vol_day(m, 1.0, 0.0005, (904, rep));
            (
                spot_estimate(&clean, 0.5, &cfg).unwrap(),
                spot_estimate(&noisy, 0.5, &cfg).unwrap(),
            )
        })
        .collect();
    let within = results.iter().filter(|(c, _)| (c - 1.0).abs() <= 0.1).count();
    let medae = |vals: &mut Vec<f64>| -> f64 {
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals[vals.len() / 2]
    };
    let mut ae_clean: Vec<f64> = results.iter().map(|(c, _)| (c - 1.0).abs()).collect();
    let mut ae_noisy: Vec<f64> = results.iter().map(|(_, c)| (c - 1.0).abs()).collect();
    let med_clean = medae(&mut ae_clean);
    let med_noisy = medae(&mut ae_noisy);
    let elapsed = start.elapsed();
    let coverage_ok = within as f64 >= 0.95 * reps as f64;
    let noise_ok = med_noisy <= 2.0 * med_clean;
    let time_ok = elapsed.as_secs_f64() < 300.0;
    let pass = coverage_ok && noise_ok && time_ok;
    report(
        "spot-estimator calibration",
        pass,
        &format!(
            "{within}/{reps} within ±10% (need ≥475); median |err| noisy {med_noisy:.4} vs clean {med_clean:.4} (ratio {:.3}, limit 2.0); {elapsed:.2?} (limit 5min)",
            med_noisy / med_clean
        ),
    );
    assert!(pass);
}

#[test]
fn jump_robustness() {
    let m = 23_400;
    let n = 78;
    let cfg = calibration_cfg(m, n);
    let jump = 10.0 * (1.0f64 / m as f64).sqrt();
    let interior: Vec<usize> = (1..=n)
        .filter(|&tau| {
            let f = tau as f64 / n as f64;
            (0.35..=0.65).contains(&f)
        })
        .collect();
    let mut max_changes: Vec<f64> = (0..200u64)
        .into_par_iter()
        .map(|rep| {
            let base = constant_vol_day(m, 1.0, 0.0, (905, rep));
            let mut jumped = base.clone();
            for price in jumped.iter_mut().skip(m / 2) {
                *price += jump;
            }
            let c0 = spot_curve(&base, n, &cfg).unwrap().values;
            let c1 = spot_curve(&jumped, n, &cfg).unwrap().values;
            interior
                .iter()
                .map(|&tau| ((c1[tau - 1] - c0[tau - 1]) / c0[tau - 1]).abs())
                .fold(0.0f64, f64::max)
        })
        .collect();
    max_changes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = max_changes[max_changes.len() / 2];
    let pass = median < 0.05;
    report(
        "jump robustness",
        pass,
        &format!(
            "median max interior change {:.3}% (threshold 5%) over 200 paired paths, jump 10·√(σ²/m)",
            median * 100.0
        ),
    );
    assert!(pass);
}

/// Estimates every day of a panel and predicts the target-day tail with each
/// method, returning per-method MSPE against the true diffusive variance.
struct DeskResult {
    sip: f64,
    ave: f64,
    ar1: f64,
    pc: f64,
}

fn desk_mspe(
    est: &DMatrix<f64>,
    truth_tail: &[f64],
    d: usize,
    n1: usize,
) -> DeskResult {
    let d_total = est.nrows();
    let n = est.ncols();
    let window = est.rows(d_total - d, d).into_owned();
    let vm = VolMatrix::new(window, n1).unwrap();
    let policy = RankPolicy::Ratio { r_max: 10 };
    let r = policy.resolve(&vm).unwrap();
    let sip = sip_predict(&vm, r).unwrap().values;
    let ave = ave_predict(&vm).unwrap().values;
    let ar1 = ar1_predict(&vm).unwrap().values;
    let pc = pc_predict(&vm, r).unwrap().values;
    let loss = |pred: &[f64]| mspe(pred, truth_tail, n, Normalization::PerN).unwrap();
    DeskResult { sip: loss(&sip), ave: loss(&ave), ar1: loss(&ar1), pc: loss(&pc) }
}

/// Generates a desk-scale panel and the spot-estimate matrix for it.
fn estimated_panel(
    d_total: usize,
    cfg: &PreAvgConfig,
    stream: u64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let params = DgpParams { m: 2_340, d_total, seed: 906, ..DgpParams::default() };
    let panel = gen_panel_with_stream(&params, stream).unwrap();
    let n = params.n;
    let curves: Vec<Vec<f64>> = panel
        .ticks
        .iter()
        .map(|day| spot_curve(&day.y, n, cfg).unwrap().values)
        .collect();
    let est = DMatrix::from_fn(d_total, n, |i, j| curves[i][j]);
    (est, panel.true_vol)
}

#[test]
fn method_ordering_at_desk_scale() {
    let start = Instant::now();
    let n = 78;
    let cfg = PreAvgConfig { k: 8, bandwidth: 6.0 / 78.0, ..PreAvgConfig::for_grid(2_340, n) };
    let reps = 100u64;
    let cells = [(50usize, 0.1f64), (50, 0.5), (100, 0.1), (100, 0.5)];
    // Accumulate mean MSPE per cell and method over replications.
    let per_rep: Vec<Vec<DeskResult>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let (est, truth) = estimated_panel(100, &cfg, rep + 1);
            cells
                .iter()
                .map(|&(d, omega)| {
                    let n1 = ((omega * n as f64).round() as usize).clamp(1, n - 1);
                    let tail: Vec<f64> =
                        (n1..n).map(|j| truth[(est.nrows() - 1, j)]).collect();
                    desk_mspe(&est, &tail, d, n1)
                })
                .collect()
        })
        .collect();
    let mut pass = true;
    let mut details = Vec::new();
    for (ci, &(d, omega)) in cells.iter().enumerate() {
        let mean = |f: &dyn Fn(&DeskResult) -> f64| {
            per_rep.iter().map(|r| f(&r[ci])).sum::<f64>() / reps as f64
        };
        let sip = mean(&|r| r.sip);
        let ave = mean(&|r| r.ave);
        let ar1 = mean(&|r| r.ar1);
        let pc = mean(&|r| r.pc);
        let cell_ok = sip < ave && sip < ar1 && sip < pc;
        pass &= cell_ok;
        details.push(format!(
            "D={d} ω={omega}: sip {sip:.3e} vs ave {ave:.3e} / ar1 {ar1:.3e} / pc {pc:.3e} {}",
            if cell_ok { "ok" } else { "VIOLATED" }
        ));
    }
    let elapsed = start.elapsed();
    let time_ok = elapsed.as_secs_f64() < 1800.0;
    pass &= time_ok;
    report(
        "method ordering at desk scale",
        pass,
        &format!("{}; {elapsed:.2?} (limit 30min)", details.join("; ")),
    );
    assert!(pass);
}

#[test]
fn longer_history_improves_sip() {
    let n = 78;
    let cfg = PreAvgConfig {
        k: 15,
        bandwidth: 1.0 / 78.0,
        kernel: KernelShape::UniformLeft,
        ..PreAvgConfig::for_grid(2_340, n)
    };
    let reps = 100u64;
    let omega = 0.5;
    let n1 = ((omega * n as f64).round() as usize).clamp(1, n - 1);
    let diffs: Vec<(f64, f64)> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let (est, truth) = estimated_panel(200, &cfg, rep + 1);
            let tail: Vec<f64> = (n1..n).map(|j| truth[(199, j)]).collect();
            let long = desk_mspe(&est, &tail, 200, n1).sip;
            let short = desk_mspe(&est, &tail, 50, n1).sip;
            (long, short)
        })
        .collect();
    let mean_long = diffs.iter().map(|d| d.0).sum::<f64>() / reps as f64;
    let mean_short = diffs.iter().map(|d| d.1).sum::<f64>() / reps as f64;
    // Paired t statistic on the per-replication differences, for the record.
    let deltas: Vec<f64> = diffs.iter().map(|d| d.1 - d.0).collect();
    let mean_delta = deltas.iter().sum::<f64>() / reps as f64;
    let var_delta = deltas.iter().map(|d| (d - mean_delta).powi(2)).sum::<f64>()
        / (reps as f64 - 1.0);
    let t_stat = mean_delta / (var_delta / reps as f64).sqrt();
    let pass = mean_long < mean_short;
    report(
        "longer history improves the low-rank forecast",
        pass,
        &format!(
            "mean MSPE D=200 {mean_long:.4e} < D=50 {mean_short:.4e} (ratio {:.3}, paired t {t_stat:.2}, same 100 seeds, ω=0.5)",
            mean_long / mean_short
        ),
    );
    assert!(pass);
}

#[test]
fn statistical_test_identities() {
    // Exact coverage → LRuc = 0.
    let mut hits = vec![false; 100];
    for h in hits.iter_mut().take(5) {
        *h = true;
    }
    let lruc = lruc_test(&hits, 0.05).unwrap();
    let lruc_ok = lruc.statistic.abs() < 1e-12;

    // Zero hits, constant VaR → DQ = T·q₀/(1−q₀).
    let zero_hits = vec![false; 100];
    let dq = dq_test(&zero_hits, 0.05, &vec![-0.02; 100], 4).unwrap();
    let dq_want = 100.0 * 0.05 / 0.95;
    let dq_ok = (dq.statistic - dq_want).abs() <= 1e-9;

    // BH on an arithmetic grid collapses to the largest p.
    let bh = bh_adjust(&[0.01, 0.02, 0.03, 0.04], 0.05).unwrap();
    let bh_ok = bh.adjusted.iter().all(|&p| (p - 0.04).abs() <= 1e-12);

    // DM on identical loss series.
    let vals: Vec<f64> = (0..60).map(|i| 1.0 + (i as f64 * 0.7).cos().abs()).collect();
    let keys: Vec<(usize, usize)> = (0..60).map(|i| (i, 0)).collect();
    let a = LossSeries::new(Method::Sip, vals.clone(), keys.clone()).unwrap();
    let b = LossSeries::new(Method::Ave, vals, keys).unwrap();
    let dm = dm_test(&a, &b).unwrap();
    let dm_ok = dm.statistic == 0.0 && dm.p_value == 1.0;

    let pass = lruc_ok && dq_ok && bh_ok && dm_ok;
    report(
        "statistical-test identities",
        pass,
        &format!(
            "LRuc@exact {:.2e} (ok={lruc_ok}); DQ {:.12} vs {dq_want:.12} (ok={dq_ok}); BH flat 0.04 (ok={bh_ok}); DM identical → ({}, {}) (ok={dm_ok})",
            lruc.statistic, dq.statistic, dm.statistic, dm.p_value
        ),
    );
    assert!(pass);
}

#[test]
fn sip_invariances() {
    let mut worst_hom = 0.0f64;
    let mut worst_flip = 0.0f64;
    for i in 0..100u64 {
        let r = (i % 3) as usize + 1;
        let mut rng = replication_rng(907, i);
        let p = rng.gen_range(r + 3..=24);
        let q = rng.gen_range(r + 3..=24);
        let n1 = rng.gen_range(r..q);
        let base_m = exact_rank_r(p, q, r, &mut rng);
        let vm = VolMatrix::new(base_m.clone(), n1).unwrap();
        let base = sip_predict(&vm, r).unwrap();

        // Degree-1 homogeneity.
        let alpha = rng.gen_range(0.3..5.0);
        let scaled = VolMatrix::new(base_m * alpha, n1).unwrap();
        let pred_scaled = sip_predict(&scaled, r).unwrap();
        for (a, b) in base.values.iter().zip(&pred_scaled.values) {
            worst_hom = worst_hom.max((b / (alpha * a) - 1.0).abs());
        }

        // Sign flips of one column of each factor.
        let factors = compute_sip_factors(&vm, r).unwrap();
        let col = rng.gen_range(0..r);
        for flip_u in [true, false] {
            let mut f = factors.clone();
            if flip_u {
                f.u11.column_mut(col).scale_mut(-1.0);
            } else {
                f.v11.column_mut(col).scale_mut(-1.0);
            }
            let flipped = sip_predict_from_factors(&vm, &f, &SipOptions::default()).unwrap();
            for (a, b) in base.values.iter().zip(&flipped.values) {
                worst_flip = worst_flip.max(((b - a) / a).abs());
            }
        }
    }
    let pass = worst_hom <= 1e-10 && worst_flip <= 1e-10;
    report(
        "sip invariance suite",
        pass,
        &format!(
            "homogeneity max deviation {worst_hom:.3e}, sign-flip max deviation {worst_flip:.3e} (threshold 1e-10) over 100 matrices"
        ),
    );
    assert!(pass);
}
