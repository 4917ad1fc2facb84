//! Acceptance suite: one pass/fail line per criterion, nonzero exit status if
//! any criterion fails.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use contvoc::acoustic_model::{
    forward, gradients, mse_loss, toy_dataset, train, CellKind, Sequence, SequenceModelParams, ToyConfig,
    TrainConfig,
};
use contvoc::analysis::ContinuousParams;
use contvoc::archive::{load_archive, save_archive};
use contvoc::cli::cmd_ecdf;
use contvoc::dsp::median;
use contvoc::mask::{compute_cnm, MaskConvention};
use contvoc::metrics::{ecdf, evaluate_ecdf, mcd, pearson_corr, rmse};
use contvoc::synthesis::{apply_mask, synthesize_raw, ExcitationPlan};
use contvoc::testsignals::{add_noise_snr, alternating_voicing, harmonic_complex, vowel, vowel_formants, white_noise};
use contvoc::vocoder::{analyze, resynthesize, AnalysisConfig};
use contvoc::FrameSpec;

const SR: u32 = 16000;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn cfg() -> AnalysisConfig {
    AnalysisConfig::for_sample_rate(SR)
}

/// Frame-level voicing agreement of the default mask on alternating
/// harmonic and noise segments.
fn ac1_vuv_tracking() -> Outcome {
    let start = Instant::now();
    let (w, truth) = alternating_voicing(200.0, 4000.0, 0.5, 8, SR, 11);
    let c = cfg();
    let a = analyze(&w, &c).map_err(|e| e.to_string())?;
    let n = a.mask.len();
    let label = |k: usize| {
        let centre = (c.frame_spec.frame_center(k).round() as usize).min(truth.len() - 1);
        truth[centre]
    };
    let labels: Vec<bool> = (0..n).map(label).collect();
    let near_boundary = |k: usize| {
        let lo = k.saturating_sub(2);
        let hi = (k + 2).min(n - 1);
        (lo..hi).any(|j| labels[j] != labels[j + 1])
    };
    let scored: Vec<usize> = (0..n).filter(|&k| !near_boundary(k)).collect();
    let agree = scored
        .iter()
        .filter(|&&k| a.mask.keeps_voiced(k) == labels[k])
        .count();
    let rate = agree as f64 / scored.len() as f64;
    let elapsed = start.elapsed();
    check(
        rate >= 0.90 && elapsed < Duration::from_secs(10),
        format!(
            "agreement {:.1}% over {} frames (need >= 90%), {:.2} s (need < 10 s)",
            100.0 * rate,
            scored.len(),
            elapsed.as_secs_f64()
        ),
    )
}

/// Median normalized deviation on stationary harmonic signals and on noise.
fn ac2_pdd_bounds() -> Outcome {
    let c = cfg();
    let mut worst_harmonic = 0.0f64;
    let mut worst_noise = 1.0f64;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let f0 = rng.random_range(100.0..250.0);
        let count = (4000.0 / f0) as usize;
        let amps: Vec<f64> = (1..=count).map(|h| 1.0 / h as f64).collect();
        let harm = harmonic_complex(f0, &amps, None, 1.0, SR, 0.6, seed);
        let a = analyze(&harm, &c).map_err(|e| e.to_string())?;
        worst_harmonic = worst_harmonic.max(median(&a.mask.pdd));
        let noise = white_noise(1.0, SR, 0.2, 500 + seed);
        let a = analyze(&noise, &c).map_err(|e| e.to_string())?;
        worst_noise = worst_noise.min(median(&a.mask.pdd));
    }
    check(
        worst_harmonic < 0.05 && worst_noise > 0.9,
        format!(
            "max harmonic median {worst_harmonic:.4} (need < 0.05), min noise median {worst_noise:.4} (need > 0.9), 10 seeds"
        ),
    )
}

fn random_params(rng: &mut ChaCha8Rng, frames: usize) -> ContinuousParams {
    let base = rng.random_range(90.0..250.0);
    let spec = FrameSpec::for_sample_rate(SR);
    ContinuousParams {
        cont_f0: (0..frames)
            .map(|k| base * (1.0 + 0.1 * (2.0 * PI * k as f64 / frames as f64).sin()))
            .collect(),
        mvf: (0..frames).map(|_| rng.random_range(1000.0..7500.0)).collect(),
        envelope: (0..frames)
            .map(|_| {
                (0..25)
                    .map(|i| rng.random_range(-1.0..1.0) / (1.0 + i as f64))
                    .collect()
            })
            .collect(),
        frame_spec: spec,
        sample_rate: SR,
        warp: 0.42,
    }
}

/// Voiced-only plus unvoiced-only synthesis equals full synthesis.
fn ac3_superposition() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames = rng.random_range(60..160);
        let params = random_params(&mut rng, frames);
        let cnm: Vec<f64> = (0..frames).map(|_| rng.random::<f64>()).collect();
        let mask = compute_cnm(&cnm, MaskConvention::Direct, 0.77).map_err(|e| e.to_string())?;
        let plan = ExcitationPlan::from_params(&params, seed).map_err(|e| e.to_string())?;
        let plan = apply_mask(&plan, &mask).map_err(|e| e.to_string())?;
        let full = synthesize_raw(&plan, &params).map_err(|e| e.to_string())?;
        let v = synthesize_raw(&plan.voiced_only(), &params).map_err(|e| e.to_string())?;
        let u = synthesize_raw(&plan.unvoiced_only(), &params).map_err(|e| e.to_string())?;
        let err: f64 = full
            .iter()
            .zip(v.iter().zip(&u))
            .map(|(f, (a, b))| (f - a - b).powi(2))
            .sum::<f64>()
            / full.len() as f64;
        worst = worst.max(err.sqrt());
    }
    check(worst < 1e-6, format!("max residual RMS {worst:.3e} over 5 archives (need < 1e-6)"))
}

/// Inclusive threshold boundary and exact per-frame noise scaling.
fn ac4_mask_semantics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut checked = 0;
    for _ in 0..5 {
        let threshold: f64 = rng.random_range(0.1..0.9);
        let frames = 12;
        let params = random_params(&mut rng, frames);
        let mut cnm: Vec<f64> = (0..frames).map(|_| rng.random::<f64>()).collect();
        cnm[0] = threshold;
        cnm[1] = threshold + 1e-12;
        cnm[2] = threshold - 1e-12;
        let mask = compute_cnm(&cnm, MaskConvention::Direct, threshold).map_err(|e| e.to_string())?;
        let plan = ExcitationPlan::from_params(&params, 7).map_err(|e| e.to_string())?;
        let masked = apply_mask(&plan, &mask).map_err(|e| e.to_string())?;
        for n in 0..frames {
            let keep = cnm[n] <= threshold;
            if keep && masked.voiced[n] != plan.voiced[n] {
                return Err(format!("frame {n}: voiced altered at cnm {} <= {threshold}", cnm[n]));
            }
            if !keep && masked.voiced[n].iter().any(|&x| x != 0.0) {
                return Err(format!("frame {n}: voiced kept at cnm {} > {threshold}", cnm[n]));
            }
            for (m, u) in masked.unvoiced[n].iter().zip(&plan.unvoiced[n]) {
                if *m != u * cnm[n] {
                    return Err(format!("frame {n}: unvoiced not scaled by {}", cnm[n]));
                }
            }
            checked += 1;
        }
        if masked.voiced[0] != plan.voiced[0] || masked.voiced[1].iter().any(|&x| x != 0.0) {
            return Err("boundary frames handled incorrectly".into());
        }
    }
    Ok(format!("{checked} frames exact, cnm = threshold kept, threshold + 1e-12 zeroed"))
}

/// Copy-synthesis of five sawtooth vowels preserves pitch and envelope.
fn ac5_copy_synthesis() -> Outcome {
    let c = cfg();
    let mut worst_rmse = 0.0f64;
    let mut worst_mcd = 0.0f64;
    for (i, formants) in vowel_formants().iter().enumerate() {
        let f0 = 120.0 + 40.0 * i as f64;
        let w = vowel(f0, 0.0, formants, 1.0, SR, 0.6);
        let a = analyze(&w, &c).map_err(|e| e.to_string())?;
        let out = resynthesize(&a.params, &a.mask, 42).map_err(|e| e.to_string())?;
        let b = analyze(&out, &c).map_err(|e| e.to_string())?;
        let n = a.params.frame_count().min(b.params.frame_count());
        let r = rmse(&a.params.cont_f0[..n], &b.params.cont_f0[..n]).map_err(|e| e.to_string())?;
        let d = mcd(&a.params.envelope[..n], &b.params.envelope[..n]).map_err(|e| e.to_string())?;
        worst_rmse = worst_rmse.max(r);
        worst_mcd = worst_mcd.max(d);
    }
    check(
        worst_rmse < 5.0 && worst_mcd < 8.0,
        format!("max contF0 RMSE {worst_rmse:.3} Hz (need < 5), max MCD {worst_mcd:.3} dB (need < 8), 5 vowels 120-280 Hz"),
    )
}

/// Metrics against brute-force formula oracles on randomized instances.
fn ac6_metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut err_mcd = 0.0f64;
    let mut err_rmse = 0.0f64;
    let mut err_corr = 0.0f64;
    let mut err_mse = 0.0f64;
    let mut err_ecdf = 0.0f64;
    for _ in 0..100 {
        let frames = rng.random_range(1..60);
        let order = rng.random_range(1..30);
        let a: Vec<Vec<f64>> = (0..frames)
            .map(|_| (0..=order).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        let b: Vec<Vec<f64>> = (0..frames)
            .map(|_| (0..=order).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        let mut total = 0.0;
        for t in 0..frames {
            let mut s = 0.0;
            for i in 1..=order {
                let d = a[t][i] - b[t][i];
                s += d * d;
            }
            total += 10.0 / 10f64.ln() * (2.0 * s).sqrt();
        }
        let oracle = total / frames as f64;
        err_mcd = err_mcd.max((mcd(&a, &b).unwrap() - oracle).abs());

        let n = rng.random_range(2..200);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(50.0..400.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(50.0..400.0)).collect();
        let mut sq = 0.0;
        for i in 0..n {
            sq += (x[i] - y[i]) * (x[i] - y[i]);
        }
        err_rmse = err_rmse.max((rmse(&x, &y).unwrap() - (sq / n as f64).sqrt()).abs());

        let (mut sx, mut sy) = (0.0, 0.0);
        for i in 0..n {
            sx += x[i];
            sy += y[i];
        }
        let (mx, my) = (sx / n as f64, sy / n as f64);
        let (mut cov, mut vx, mut vy) = (0.0, 0.0, 0.0);
        for i in 0..n {
            cov += (x[i] - mx) * (y[i] - my);
            vx += (x[i] - mx) * (x[i] - mx);
            vy += (y[i] - my) * (y[i] - my);
        }
        let oracle = (cov / n as f64) / ((vx / n as f64).sqrt() * (vy / n as f64).sqrt());
        err_corr = err_corr.max((pearson_corr(&x, &y).unwrap() - oracle).abs());

        let t_len = rng.random_range(1..10);
        let dim = rng.random_range(1..6);
        let p: Vec<Vec<f64>> = (0..t_len).map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let q: Vec<Vec<f64>> = (0..t_len).map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let mut s = 0.0;
        for t in 0..t_len {
            for d in 0..dim {
                s += (p[t][d] - q[t][d]).powi(2);
            }
        }
        err_mse = err_mse.max((mse_loss(&p, &q).unwrap() - s / (t_len * dim) as f64).abs());

        let values: Vec<f64> = (0..rng.random_range(1..300))
            .map(|_| (rng.random_range(0.0..1.0f64) * 50.0).round() / 50.0)
            .collect();
        let curve = ecdf(&values).unwrap();
        for _ in 0..10 {
            let probe: f64 = rng.random_range(-0.1..1.1);
            let count = values.iter().filter(|&&v| v <= probe).count();
            err_ecdf = err_ecdf.max((evaluate_ecdf(&curve, probe) - count as f64 / values.len() as f64).abs());
        }
    }
    let d = 0.731;
    let single = mcd(&[vec![0.0, 0.0, 0.0]], &[vec![9.0, d, 0.0]]).unwrap();
    let err_single = (single - 10.0 * 2f64.sqrt() / 10f64.ln() * d).abs();
    check(
        err_mcd < 1e-9 && err_single < 1e-9 && err_rmse < 1e-12 && err_corr < 1e-12 && err_mse < 1e-12 && err_ecdf < 1e-12,
        format!(
            "max errors: MCD {err_mcd:.1e}, single-coefficient {err_single:.1e}, RMSE {err_rmse:.1e}, CORR {err_corr:.1e}, MSE {err_mse:.1e}, ECDF {err_ecdf:.1e} (100 instances)"
        ),
    )
}

fn batch_loss(p: &SequenceModelParams, batch: &[Sequence]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0;
    for s in batch {
        let y = forward(p, &s.inputs).unwrap().y;
        let count = s.targets.len() * p.output_dim;
        sum += mse_loss(&y, &s.targets).unwrap() * count as f64;
        n += count;
    }
    sum / n as f64
}

/// Analytic gradients against central finite differences.
fn ac7_gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut summary = Vec::new();
    let mut ok = true;
    for kind in CellKind::ALL {
        let mut worst = 0.0f64;
        for instance in 0..20u64 {
            let i = rng.random_range(1..=8);
            let h = rng.random_range(1..=8);
            let o = rng.random_range(1..=8);
            let t = rng.random_range(1..=6);
            let p = SequenceModelParams::init(kind, i, h, o, instance);
            let batch: Vec<Sequence> = (0..2)
                .map(|_| Sequence {
                    inputs: (0..t).map(|_| (0..i).map(|_| rng.random_range(-1.0..1.0)).collect()).collect(),
                    targets: (0..t).map(|_| (0..o).map(|_| rng.random_range(-1.0..1.0)).collect()).collect(),
                })
                .collect();
            let (_, g) = gradients(&p, &batch).map_err(|e| e.to_string())?;
            let analytic = g.flatten();
            let flat = p.flatten();
            let mut probe = p.clone();
            for k in 0..flat.len() {
                let mut v = flat.clone();
                v[k] = flat[k] + 1e-5;
                probe.unflatten(&v).unwrap();
                let up = batch_loss(&probe, &batch);
                v[k] = flat[k] - 1e-5;
                probe.unflatten(&v).unwrap();
                let down = batch_loss(&probe, &batch);
                let numeric = (up - down) / 2e-5;
                let scale = numeric.abs().max(analytic[k].abs());
                let rel = if scale < 1e-10 { 0.0 } else { (numeric - analytic[k]).abs() / scale };
                worst = worst.max(rel);
            }
        }
        ok &= worst < 1e-4;
        summary.push(format!("{kind} {worst:.1e}"));
    }
    check(
        ok,
        format!("max relative error {} (need < 1e-4, 20 instances each)", summary.join(", ")),
    )
}

/// Four-sequence overfitting run.
fn ac8_toy_training() -> Outcome {
    let start = Instant::now();
    let toy = ToyConfig {
        samples: 4,
        frames: 20,
        phone_classes: 6,
        output_dim: 4,
        seed: 42,
    };
    let data = toy_dataset(&toy);
    let p = SequenceModelParams::init(CellKind::VanillaBidirectional, toy.input_dim(), 16, 4, 42);
    let cfg = TrainConfig::per_sequence(2000, 0.01, 42);
    let first = train(p.clone(), &data, &cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let second = train(p, &data, &cfg).map_err(|e| e.to_string())?;
    let last = *first.train_loss.last().unwrap();
    let deterministic = first.train_loss == second.train_loss;
    check(
        last < 1e-3 && deterministic && elapsed < Duration::from_secs(60),
        format!(
            "final loss {last:.3e} after 2000 epochs (need < 1e-3), repeat run identical: {deterministic}, {:.2} s (need < 60 s)",
            elapsed.as_secs_f64()
        ),
    )
}

/// MCD and median PDD grow as the SNR drops.
fn ac9_noise_ordering() -> Outcome {
    let c = cfg();
    let mut lines = Vec::new();
    let mut ok = true;
    for (i, formants) in vowel_formants().iter().enumerate() {
        let f0 = 110.0 + 35.0 * i as f64;
        let reference = vowel(f0, 0.05, formants, 1.0, SR, 0.5);
        let base = analyze(&reference, &c).map_err(|e| e.to_string())?;
        let mut mcds = Vec::new();
        let mut pdds = Vec::new();
        for snr in [30.0, 20.0, 10.0] {
            let noisy = add_noise_snr(&reference, snr, 900 + i as u64);
            let a = analyze(&noisy, &c).map_err(|e| e.to_string())?;
            mcds.push(mcd(&base.params.envelope, &a.params.envelope).map_err(|e| e.to_string())?);
            pdds.push(median(&a.mask.pdd));
        }
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0]);
        ok &= increasing(&mcds) && increasing(&pdds);
        lines.push(format!(
            "ref{i}: MCD {:.2}/{:.2}/{:.2} PDD {:.3}/{:.3}/{:.3}",
            mcds[0], mcds[1], mcds[2], pdds[0], pdds[1], pdds[2]
        ));
    }
    check(ok, format!("SNR 30/20/10 dB: {}", lines.join("; ")))
}

/// Structure of emitted ECDF curves and exact agreement with counting.
fn ac10_ecdf_structure() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut probes = 0;
    for _ in 0..20 {
        let values: Vec<f64> = (0..rng.random_range(1..500))
            .map(|_| (rng.random::<f64>() * 30.0).floor() / 30.0)
            .collect();
        let curve = ecdf(&values).map_err(|e| e.to_string())?;
        if !curve.cumulative.windows(2).all(|w| w[0] <= w[1]) {
            return Err("cumulative column decreases".into());
        }
        if *curve.cumulative.last().unwrap() != 1.0 {
            return Err("curve does not end at 1".into());
        }
        for _ in 0..100 {
            let x: f64 = rng.random_range(-0.2..1.2);
            let count = values.iter().filter(|&&v| v <= x).count();
            if evaluate_ecdf(&curve, x) != count as f64 / values.len() as f64 {
                return Err(format!("mismatch at probe {x}"));
            }
            probes += 1;
        }
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let c = cfg();
    let mut archives = Vec::new();
    for (i, w) in [
        vowel(150.0, 0.0, &vowel_formants()[0], 0.5, SR, 0.5),
        white_noise(0.5, SR, 0.2, 3),
    ]
    .iter()
    .enumerate()
    {
        let a = analyze(w, &c).map_err(|e| e.to_string())?;
        let path = dir.path().join(format!("utt{i}"));
        save_archive(&a, &path).map_err(|e| e.to_string())?;
        load_archive(&path).map_err(|e| e.to_string())?;
        archives.push(path);
    }
    let out = dir.path().join("ecdf.csv");
    cmd_ecdf(&archives, &out, "pdd").map_err(|e| e.to_string())?;
    let mut files = 0;
    for entry in std::fs::read_dir(dir.path()).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        if path.extension().is_none_or(|e| e != "csv") {
            continue;
        }
        let text = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
        let mut by_source: std::collections::BTreeMap<String, Vec<f64>> = Default::default();
        for line in text.lines().skip(1) {
            let fields: Vec<&str> = line.split(',').collect();
            let source = if fields.len() == 3 { fields[0] } else { "" };
            let cum: f64 = fields.last().unwrap().parse().map_err(|_| "bad number".to_string())?;
            by_source.entry(source.to_string()).or_default().push(cum);
        }
        for (source, cum) in by_source {
            if !cum.windows(2).all(|w| w[0] <= w[1]) || *cum.last().unwrap() != 1.0 {
                return Err(format!("{} {source}: malformed cumulative column", path.display()));
            }
        }
        files += 1;
    }
    check(
        files == 3,
        format!("{probes} probes exact; {files} emitted files non-decreasing and ending at 1.0"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("AC1 mask V/UV tracking", ac1_vuv_tracking),
        ("AC2 PDD purity bounds", ac2_pdd_bounds),
        ("AC3 excitation superposition", ac3_superposition),
        ("AC4 mask threshold semantics", ac4_mask_semantics),
        ("AC5 copy-synthesis fidelity", ac5_copy_synthesis),
        ("AC6 metric oracles", ac6_metric_oracles),
        ("AC7 recurrent gradient check", ac7_gradient_check),
        ("AC8 toy training", ac8_toy_training),
        ("AC9 noise-ordering monotonicity", ac9_noise_ordering),
        ("AC10 ECDF structure", ac10_ecdf_structure),
    ];
    let mut failures = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(format!("panic: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] {name}: {detail} [{secs:.2} s]"),
            Err(detail) => {
                failures += 1;
                println!("[FAIL] {name}: {detail} [{secs:.2} s]");
            }
        }
    }
    println!("acceptance: {} passed, {failures} failed", 10 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
