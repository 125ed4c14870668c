//! Acceptance suite. Runs every criterion at its fixed tolerance, prints one
//! line per criterion and exits non-zero if any of them fails.

use std::process::Command;
use std::time::Instant;

use geocsi::channel3d::{draw_large_scale_field, generate_taps, CorrelationConfig, LosBearing, TapDrawConfig};
use geocsi::estimation::{build_mmse_context, ls_estimate, mmse_estimate, EstimateMethod, MmseContext};
use geocsi::harness::{generate_realization, run_sweep, ExperimentConfig, SweepResult};
use geocsi::linksim::{make_pilot_frame, transmit_pilot, Modulation};
use geocsi::metrics::nmse;
use geocsi::predictor::{loss_and_gradient, tensor_ranges, Batch, LstmModel, Normalization, PredictorMode};
use geocsi::{rng, Complex64};
use nalgebra::DMatrix;
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn cn(rng: &mut impl Rng) -> Complex64 {
    Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)) / 2f64.sqrt()
}

// Criteria 1 to 4 share one sweep over 24 realizations of the quick profile.
fn ensemble_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::quick();
    cfg.n_realizations = 24;
    cfg
}

fn cell(res: &SweepResult, e: EstimateMethod, m: PredictorMode, s: f64) -> Result<f64, String> {
    match res.find(e, m, s) {
        Some(r) if r.n_realizations >= 20 && r.nmse_avg.is_finite() => Ok(r.nmse_avg),
        Some(r) => Err(format!("{} {} {s} dB averaged only {} realizations", e.tag(), m.tag(), r.n_realizations)),
        None => Err(format!("{} {} {s} dB missing", e.tag(), m.tag())),
    }
}

fn low_ssnrs(cfg: &ExperimentConfig) -> Vec<f64> {
    cfg.ssnr_sweep_db.iter().copied().filter(|&s| s <= 10.0).collect()
}

fn criterion_1(cfg: &ExperimentConfig, res: &SweepResult) -> Outcome {
    use EstimateMethod::*;
    let i = PredictorMode::Interpolation;
    let mut notes = Vec::new();
    let mut ok = true;
    for s in low_ssnrs(cfg) {
        let (ls, mm) = (cell(res, Ls, i, s)?, cell(res, LsMmse, i, s)?);
        ok &= mm < ls;
        notes.push(format!("{s}dB LS/LSMMSE={:.3}", ls / mm));
    }
    let ratio0 = cell(res, Ls, i, 0.0)? / cell(res, LsMmse, i, 0.0)?;
    ok &= ratio0 >= 1.2;
    for s in cfg.ssnr_sweep_db.iter().copied().filter(|&s| s >= 35.0) {
        let (ls, mm) = (cell(res, Ls, i, s)?, cell(res, LsMmse, i, s)?);
        let f = ls.max(mm) / ls.min(mm);
        ok &= f <= 1.3;
        notes.push(format!("{s}dB factor={f:.3}"));
    }
    check(ok, notes.join(", "))
}

fn criterion_2(cfg: &ExperimentConfig, res: &SweepResult) -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for &s in &cfg.ssnr_sweep_db {
        let open = cell(res, EstimateMethod::LsMmse, PredictorMode::OpenLoop, s)?;
        let interp = cell(res, EstimateMethod::LsMmse, PredictorMode::Interpolation, s)?;
        let margin = 1.0 - open / interp;
        ok &= open < interp;
        if s <= 10.0 {
            ok &= margin >= 0.2;
        }
        notes.push(format!("{s}dB {:.0}%", 100.0 * margin));
    }
    check(ok, format!("open-loop gain over interpolation: {}", notes.join(", ")))
}

fn criterion_3(cfg: &ExperimentConfig, res: &SweepResult) -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for s in low_ssnrs(cfg) {
        let closed = cell(res, EstimateMethod::Ls, PredictorMode::ClosedLoop, s)?;
        let interp = cell(res, EstimateMethod::Ls, PredictorMode::Interpolation, s)?;
        ok &= closed < interp;
        notes.push(format!("{s}dB closed {closed:.3} vs interp {interp:.3}"));
    }
    check(ok, notes.join(", "))
}

fn criterion_4(cfg: &ExperimentConfig, res: &SweepResult) -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for s in low_ssnrs(cfg) {
        let open = cell(res, EstimateMethod::Ls, PredictorMode::OpenLoop, s)?;
        let closed = cell(res, EstimateMethod::Ls, PredictorMode::ClosedLoop, s)?;
        ok &= open > closed;
        notes.push(format!("{s}dB open {open:.3} vs closed {closed:.3}"));
    }
    check(ok, notes.join(", "))
}

fn uniform_block(r: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_fn((3, 2), |_| r.random_range(-1.5..1.5))
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut model = LstmModel::init(4, 2, Normalization::identity(2), 21).map_err(|e| e.to_string())?;
    let mut r = rng::stream(22, "acceptance-bias", 0);
    for v in model.params.iter_mut() {
        *v += r.random_range(-0.3..0.3);
    }
    let batch = Batch {
        inputs: (0..6).map(|_| uniform_block(&mut r)).collect(),
        targets: (0..6).map(|_| uniform_block(&mut r)).collect(),
    };
    let loss = |m: &LstmModel| loss_and_gradient(m, &batch, None).map_err(|e| e.to_string());
    let (_, grad) = loss(&model)?;
    let eps = 1e-5;
    let mut worst = Vec::new();
    for (name, range) in tensor_ranges(&model.layout) {
        let mut max_rel = 0.0f64;
        for i in range {
            let mut p = model.clone();
            p.params[i] += eps;
            let mut m = model.clone();
            m.params[i] -= eps;
            let fd = (loss(&p)?.0 - loss(&m)?.0) / (2.0 * eps);
            let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-12);
            max_rel = max_rel.max(rel);
        }
        worst.push((name, max_rel));
    }
    let secs = start.elapsed().as_secs_f64();
    let max = worst.iter().map(|w| w.1).fold(0.0, f64::max);
    let detail = worst.iter().map(|(n, v)| format!("{n} {v:.1e}")).collect::<Vec<_>>().join(", ");
    check(max < 1e-4 && secs < 10.0, format!("max relative error {max:.1e} ({detail}) in {secs:.2}s"))
}

fn criterion_6() -> Outcome {
    let mut r = rng::stream(31, "acceptance-estimators", 0);
    let n = 128;
    let h: Vec<Complex64> = (0..n).map(|_| cn(&mut r)).collect();
    let frame = make_pilot_frame(n, Modulation::Qam16, 32);
    let rx = transmit_pilot(&frame, &h, f64::INFINITY, 33).map_err(|e| e.to_string())?;
    let ls = ls_estimate(&rx, &frame).map_err(|e| e.to_string())?;
    let norm = |v: &[Complex64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let diff = |a: &[Complex64], b: &[Complex64]| a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
    let ls_err = diff(&ls, &h) / norm(&h);

    // Full-rank autocorrelation from plenty of samples, no noise.
    let m = 16;
    let samples: Vec<Vec<Complex64>> = (0..200).map(|_| (0..m).map(|_| cn(&mut r)).collect()).collect();
    let ctx = build_mmse_context(samples.iter().map(|v| v.as_slice()), f64::INFINITY, 17.0 / 9.0)
        .map_err(|e| e.to_string())?;
    let x: Vec<Complex64> = (0..m).map(|_| cn(&mut r)).collect();
    let w0 = mmse_estimate(&x, &ctx).map_err(|e| e.to_string())?;
    let w0_err = diff(&w0, &x) / norm(&x);

    // 4x4 against Gaussian elimination of (R + W I) y = h, then R y.
    let a = DMatrix::from_fn(4, 4, |_, _| cn(&mut r));
    let rhh = &a * a.adjoint() + DMatrix::identity(4, 4) * Complex64::new(0.1, 0.0);
    let (ssnr, beta) = (3.0, 17.0 / 9.0);
    let ctx = MmseContext::new(rhh.clone(), ssnr, beta).map_err(|e| e.to_string())?;
    let hls: Vec<Complex64> = (0..4).map(|_| cn(&mut r)).collect();
    let got = mmse_estimate(&hls, &ctx).map_err(|e| e.to_string())?;
    let want = oracle_mmse(&rhh, beta / ssnr, &hls);
    let mmse_err = diff(&got, &want) / norm(&want);

    check(
        ls_err <= 1e-14 && w0_err <= 1e-12 && mmse_err <= 1e-10,
        format!("noiseless LS {ls_err:.1e}, W=0 MMSE vs LS {w0_err:.1e}, 4x4 MMSE vs oracle {mmse_err:.1e}"),
    )
}

fn oracle_mmse(rhh: &DMatrix<Complex64>, w: f64, h: &[Complex64]) -> Vec<Complex64> {
    let n = h.len();
    let mut a: Vec<Vec<Complex64>> = (0..n)
        .map(|i| (0..n).map(|j| rhh[(i, j)] + if i == j { Complex64::new(w, 0.0) } else { Complex64::new(0.0, 0.0) }).collect())
        .collect();
    let mut b = h.to_vec();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].norm().total_cmp(&a[j][col].norm())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                let v = a[col][k];
                a[row][k] -= f * v;
            }
            let v = b[col];
            b[row] -= f * v;
        }
    }
    let mut y = vec![Complex64::new(0.0, 0.0); n];
    for row in (0..n).rev() {
        let s: Complex64 = (row + 1..n).map(|k| a[row][k] * y[k]).sum();
        y[row] = (b[row] - s) / a[row][row];
    }
    (0..n).map(|i| (0..n).map(|j| rhh[(i, j)] * y[j]).sum()).collect()
}

fn criterion_7() -> Outcome {
    let mut r = rng::stream(41, "acceptance-metric", 0);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (t, k) = (r.random_range(1..=50), r.random_range(1..=128));
        let truth = Array2::from_shape_fn((t, k), |_| cn(&mut r) + Complex64::new(0.05, 0.0));
        let pred = Array2::from_shape_fn((t, k), |_| cn(&mut r));
        let rep = nmse(pred.view(), truth.view()).map_err(|e| e.to_string())?;
        let (mut re, mut im) = (0.0, 0.0);
        for i in 0..t {
            for j in 0..k {
                let e = pred[[i, j]] - truth[[i, j]];
                let m = truth[[i, j]].norm();
                re += (e.re / m) * (e.re / m);
                im += (e.im / m) * (e.im / m);
            }
        }
        let n = (t * k) as f64;
        let (re, im) = (re / n, im / n);
        for (got, want) in [(rep.nmse_real, re), (rep.nmse_imag, im), (rep.nmse_avg, 0.5 * (re + im))] {
            worst = worst.max((got - want).abs() / want.abs().max(1e-300));
        }
    }
    let truth = Array2::from_shape_fn((7, 9), |(i, j)| Complex64::new(1.0 + i as f64, -(j as f64)));
    let perfect = nmse(truth.view(), truth.view()).map_err(|e| e.to_string())?;
    let zero = perfect.nmse_real == 0.0 && perfect.nmse_imag == 0.0 && perfect.nmse_avg == 0.0;
    check(worst <= 1e-12 && zero, format!("max relative deviation from double-loop oracle {worst:.1e}, perfect prediction exactly 0: {zero}"))
}

fn criterion_8() -> Outcome {
    let cfg = CorrelationConfig::new(5.0);
    let pos = [[0.0, 0.0, 1.5], [5.0, 0.0, 1.5]];
    let draws = 10_000u64;
    let mut pairs = Vec::with_capacity(draws as usize);
    for seed in 0..draws {
        let f = draw_large_scale_field(&pos, &cfg, seed).map_err(|e| e.to_string())?;
        pairs.push((f[0].shadow_fading_x, f[1].shadow_fading_x));
    }
    let n = draws as f64;
    let (ma, mb) = (pairs.iter().map(|p| p.0).sum::<f64>() / n, pairs.iter().map(|p| p.1).sum::<f64>() / n);
    let cov = pairs.iter().map(|p| (p.0 - ma) * (p.1 - mb)).sum::<f64>() / n;
    let va = pairs.iter().map(|p| (p.0 - ma).powi(2)).sum::<f64>() / n;
    let vb = pairs.iter().map(|p| (p.1 - mb).powi(2)).sum::<f64>() / n;
    let rho = cov / (va * vb).sqrt();

    let taps = TapDrawConfig::default();
    let bearing = LosBearing { departure: (0.3, 1.6), arrival: (0.3 + std::f64::consts::PI, 1.5) };
    let mut k_sum = 0.0;
    let mut worst_power = 0.0f64;
    for seed in 0..draws {
        let lsp = draw_large_scale_field(&pos[..1], &cfg, 1_000_000 + seed).map_err(|e| e.to_string())?[0];
        let set = generate_taps(&lsp, &taps, &bearing, seed).map_err(|e| e.to_string())?;
        k_sum += set.k_factor_db().ok_or("no LoS tap")?;
        worst_power = worst_power.max((set.total_power() - 1.0).abs());
    }
    let k_mean = k_sum / n;
    let target = (-1.0f64).exp();
    check(
        (rho - target).abs() <= 0.05 && (k_mean + 3.0).abs() <= 0.15 && worst_power <= 1e-12,
        format!("correlation at d_dec {rho:.4} (target {target:.4}), mean K {k_mean:.3} dB, worst power-sum error {worst_power:.1e}"),
    )
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut csvs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_geocsi"))
            .args(["sweep", "--quick", "--seed", "7", "--out"])
            .arg(&out)
            .env_clear()
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(format!("sweep failed: {}", String::from_utf8_lossy(&status.stderr)));
        }
        csvs.push(std::fs::read(out.join("results.csv")).map_err(|e| e.to_string())?);
    }
    let rows = String::from_utf8_lossy(&csvs[0]).lines().count().saturating_sub(1);
    check(csvs[0] == csvs[1] && rows > 0, format!("{rows} rows, identical bytes: {}", csvs[0] == csvs[1]))
}

fn criterion_10() -> Outcome {
    let cfg = ExperimentConfig::paper();
    cfg.validate().map_err(|e| e.to_string())?;
    let per = cfg.scenario.csi_size;
    let total = per * cfg.n_realizations;
    let (train, test) = cfg.split();
    let (train_all, test_all) = (train * cfg.n_realizations, test * cfg.n_realizations);
    let data = generate_realization(&cfg, 0).map_err(|e| e.to_string())?;
    let frames = data.dl.n_frames();
    check(
        per == 2000 && cfg.n_realizations == 10 && total == 20_000 && cfg.scenario.dataset_size == Some(total)
            && (train_all, test_all) == (16_000, 4_000)
            && frames == 2000,
        format!("{per} frames x {} realizations = {total}, split {train_all}/{test_all}, generated {frames} frames", cfg.n_realizations),
    )
}

fn main() {
    // Honour `cargo test -- <filter>` loosely: any argument that is not a
    // flag restricts the run to criteria whose number matches.
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let wanted = |n: usize| filter.is_empty() || filter.iter().any(|f| f == &n.to_string());

    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    if (1..=4).any(wanted) {
        let cfg = ensemble_config();
        let dir = tempfile::tempdir().expect("temp dir");
        let mut cfg = cfg;
        cfg.output_dir = dir.path().to_path_buf();
        let start = Instant::now();
        match run_sweep(&cfg) {
            Ok(res) => {
                println!("ensemble sweep: {} realizations in {:.0}s", cfg.n_realizations, start.elapsed().as_secs_f64());
                results.push((1, "estimator ordering", criterion_1(&cfg, &res)));
                results.push((2, "open-loop gain with LS-MMSE", criterion_2(&cfg, &res)));
                results.push((3, "closed-loop gain with LS", criterion_3(&cfg, &res)));
                results.push((4, "error accumulation with LS", criterion_4(&cfg, &res)));
            }
            Err(e) => {
                for (n, name) in [(1, "estimator ordering"), (2, "open-loop gain"), (3, "closed-loop gain"), (4, "error accumulation")] {
                    results.push((n, name, Err(format!("sweep failed: {e}"))));
                }
            }
        }
    }
    type Check = (usize, &'static str, fn() -> Outcome);
    let singles: [Check; 6] = [
        (5, "LSTM gradient", criterion_5),
        (6, "estimator exactness", criterion_6),
        (7, "metric oracle", criterion_7),
        (8, "channel statistics", criterion_8),
        (9, "determinism", criterion_9),
        (10, "scale sanity", criterion_10),
    ];
    for (n, name, f) in singles {
        if wanted(n) {
            results.push((n, name, f()));
        }
    }
    results.retain(|r| wanted(r.0));

    let mut failed = 0;
    for (n, name, outcome) in &results {
        match outcome {
            Ok(d) => println!("criterion {n:>2} PASS  {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {d}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
