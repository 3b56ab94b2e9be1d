//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use ndarray::{Array2, Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mvmsynth::baselines::{horn_schunck_flow, linear_interpolate, BaselineMethod, HSConfig};
use mvmsynth::harness::{
    evaluate, evaluate_method, run_ablations, AblationRun, Dataset, EvalOptions, Method, MethodKind, TrainConfig,
};
use mvmsynth::loss::{
    boundary_loss, boundary_loss_grad, dice_loss, dice_loss_grad, signed_distance_map, total_loss, weighted_mae,
    weighted_mae_grad, LossConfig, LossTargets, Predictions,
};
use mvmsynth::metrics::{dice_score, pearson, psnr_from_mse, ssim};
use mvmsynth::network::{
    configure_ablation, load_checkpoint, save_checkpoint, AblationRow, Batch, Checkpoint, Network, NetworkConfig,
    TrainingMetadata,
};
use mvmsynth::phantom::{analytic_velocity_curves, generate_phantom, CohortConfig, PhantomConfig};
use mvmsynth::sampling::{build_sample, SynthesisSample};
use mvmsynth::series::resample_bilinear;
use mvmsynth::velocity::{velocity_curves, Direction};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

struct Outcome {
    pass: bool,
}

fn run(id: u32, name: &str, limit_s: Option<f64>, f: impl FnOnce() -> Check) -> Outcome {
    let start = Instant::now();
    let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    let res = match (res, limit_s) {
        (Ok(d), Some(l)) if secs >= l => Err(format!("{d}; runtime {secs:.2}s exceeds {l}s")),
        (r, _) => r,
    };
    let (pass, detail) = match res {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    println!("[{}] {id:>2} {name} ({secs:.2}s): {detail}", if pass { "PASS" } else { "FAIL" });
    Outcome { pass }
}

fn disk(n: usize, cy: f64, cx: f64, r: f64) -> Array2<f32> {
    Array2::from_shape_fn((n, n), |(y, x)| ((y as f64 - cy).hypot(x as f64 - cx) <= r) as u8 as f32)
}

fn metric_oracles() -> Check {
    let p = psnr_from_mse(0.01, 1.0);
    ensure!(p == 20.0, "psnr(mse=0.01) = {p}");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = Array2::from_shape_fn((32, 32), |_| rng.random::<f32>());
    let s = ssim(a.view(), a.view(), 1.0).map_err(|e| e.to_string())?;
    ensure!(s == 1.0, "ssim(a, a) = {s}");
    let m = disk(16, 8.0, 8.0, 5.0);
    let d_same = dice_score(&m, &m).map_err(|e| e.to_string())?;
    let left = Array2::from_shape_fn((16, 16), |(_, x)| (x < 8) as u8 as f32);
    let right = left.mapv(|v| 1.0 - v);
    let d_disjoint = dice_score(&left, &right).map_err(|e| e.to_string())?;
    ensure!(d_same == 1.0 && d_disjoint == 0.0, "dice {d_same} / {d_disjoint}");
    let r = pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).map_err(|e| e.to_string())?;
    ensure!((r - 0.982).abs() <= 1e-3, "pearson = {r}");
    Ok(format!("psnr {p} dB, ssim {s}, dice {d_same}/{d_disjoint}, pearson {r:.5}"))
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Largest relative error between `grad` and central differences of `f` over `probes` entries.
fn fd_check(x: &Array3<f64>, grad: &Array3<f64>, probes: &[(usize, usize, usize)], f: impl Fn(&Array3<f64>) -> f64) -> f64 {
    let h = 1e-4;
    probes
        .iter()
        .map(|&ix| {
            let (mut up, mut dn) = (x.clone(), x.clone());
            up[ix] += h;
            dn[ix] -= h;
            rel_err(grad[ix], (f(&up) - f(&dn)) / (2.0 * h))
        })
        .fold(0.0, f64::max)
}

fn loss_correctness() -> Check {
    // 4x4 fixture against hand recomputation.
    let n = 4;
    let mut mask = Array2::<f32>::zeros((n, n));
    mask[[1, 1]] = 1.0;
    mask[[1, 2]] = 1.0;
    let sdm = signed_distance_map(mask.view()).map_err(|e| e.to_string())?;
    let weight = Array2::from_shape_fn((n, n), |(y, x)| 0.1 + ((y + x) % 2) as f64);
    let targets = LossTargets {
        mag: Array3::from_shape_fn((1, n, n), |(_, y, x)| (y * n + x) as f64 / 16.0),
        phase: Array3::zeros((3, n, n)),
        mask: mask.mapv(f64::from).insert_axis(Axis(0)),
        weight: weight.clone(),
        sdm: sdm.clone(),
    };
    let pred = Predictions {
        mag: targets.mag.mapv(|v| v + 0.25),
        phase: Array3::from_shape_fn((3, n, n), |(c, _, _)| 0.1 * c as f64),
        mask_prob: Array3::from_elem((1, n, n), 0.25),
    };
    let cfg = LossConfig::default();
    let (b, _) = total_loss(&pred, &targets, &cfg).map_err(|e| e.to_string())?;
    let mut sdm_sum = 0.0;
    for v in sdm.iter() {
        sdm_sum += v;
    }
    let expected = cfg.w_syn * (0.25 + 0.1) + cfg.w_seg * ((1.0 - 2.0 / 7.0) + 0.25 * sdm_sum / 16.0);
    ensure!((b.total - expected).abs() <= 1e-6, "fixture total {} vs {expected}", b.total);

    // Finite differences on 16x16 random fixtures.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let dim = (2, 16, 16);
    let target = Array3::from_shape_fn(dim, |_| rng.random::<f64>());
    // Keep predictions away from the |.| kink so central differences are smooth.
    let pred = Array3::from_shape_fn(dim, |ix| {
        let off = rng.random_range(0.05..0.3);
        target[ix] + if rng.random_bool(0.5) { off } else { -off }
    });
    let w = Array2::from_shape_fn((16, 16), |_| rng.random_range(0.1..2.1));
    let probes: Vec<(usize, usize, usize)> = (0..40)
        .map(|_| (rng.random_range(0..2), rng.random_range(0..16), rng.random_range(0..16)))
        .collect();
    let (_, g) = weighted_mae_grad(pred.view(), target.view(), w.view()).map_err(|e| e.to_string())?;
    let e_mae = fd_check(&pred, &g, &probes, |p| weighted_mae(p.view(), target.view(), w.view()).unwrap());

    let prob = Array3::from_shape_fn((1, 16, 16), |_| rng.random_range(0.05..0.95));
    let gt = disk(16, 7.5, 8.0, 5.0).mapv(f64::from).insert_axis(Axis(0));
    let probes1: Vec<(usize, usize, usize)> = (0..40).map(|_| (0, rng.random_range(0..16), rng.random_range(0..16))).collect();
    let (_, g) = dice_loss_grad(prob.view(), gt.view(), 1.0).map_err(|e| e.to_string())?;
    let e_dice = fd_check(&prob, &g, &probes1, |p| dice_loss(p.view(), gt.view(), 1.0).unwrap());

    let sdm16 = signed_distance_map(disk(16, 7.5, 8.0, 5.0).view()).map_err(|e| e.to_string())?;
    let (_, g) = boundary_loss_grad(prob.view(), sdm16.view()).map_err(|e| e.to_string())?;
    let e_bd = fd_check(&prob, &g, &probes1, |p| boundary_loss(p.view(), sdm16.view()).unwrap());

    let worst = e_mae.max(e_dice).max(e_bd);
    ensure!(worst < 1e-3, "relative FD errors mae {e_mae:.2e} dice {e_dice:.2e} boundary {e_bd:.2e}");
    Ok(format!(
        "fixture total {:.6}; FD rel err mae {e_mae:.1e} dice {e_dice:.1e} boundary {e_bd:.1e}",
        b.total
    ))
}

/// All-pairs signed distance: `+d` outside to the nearest mask pixel, `-d` inside to
/// the nearest mask pixel that touches background.
fn brute_sdm(mask: &Array2<f32>) -> Array2<f64> {
    let (h, w) = mask.dim();
    let inside = |y: isize, x: isize| y >= 0 && x >= 0 && (y as usize) < h && (x as usize) < w && mask[[y as usize, x as usize]] > 0.5;
    let within = |y: isize, x: isize| y >= 0 && x >= 0 && (y as usize) < h && (x as usize) < w;
    let mut pts = Vec::new();
    let mut edge = Vec::new();
    for y in 0..h as isize {
        for x in 0..w as isize {
            if inside(y, x) {
                pts.push((y, x));
                if [(y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)]
                    .iter()
                    .any(|&(a, b)| within(a, b) && !inside(a, b))
                {
                    edge.push((y, x));
                }
            }
        }
    }
    let nearest = |set: &[(isize, isize)], y: isize, x: isize| {
        set.iter()
            .map(|&(a, b)| (((a - y).pow(2) + (b - x).pow(2)) as f64).sqrt())
            .fold(f64::INFINITY, f64::min)
    };
    Array2::from_shape_fn((h, w), |(y, x)| {
        let (y, x) = (y as isize, x as isize);
        if inside(y, x) {
            -nearest(&edge, y, x)
        } else {
            nearest(&pts, y, x)
        }
    })
}

fn sdm_brute_force() -> Check {
    let disks = [(3.5, 3.5, 2.5), (3.5, 3.5, 1.5), (2.0, 5.0, 3.0), (4.0, 4.0, 1.2), (3.0, 4.0, 3.6), (5.0, 2.0, 2.2)];
    for &(cy, cx, r) in &disks {
        let m = disk(8, cy, cx, r);
        let fast = signed_distance_map(m.view()).map_err(|e| e.to_string())?;
        let slow = brute_sdm(&m);
        if let Some((p, v)) = fast.indexed_iter().find(|&(p, &v)| v != slow[p]) {
            return Err(format!("disk ({cy},{cx},{r}) at {p:?}: {v} vs {}", slow[p]));
        }
    }
    Ok(format!("{} disks on 8x8 match exactly", disks.len()))
}

fn blob(n: usize, cy: f64, cx: f64, sigma: f64) -> Array2<f32> {
    Array2::from_shape_fn((n, n), |(y, x)| {
        (-((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)) / (2.0 * sigma * sigma)).exp() as f32
    })
}

fn horn_schunck_recovery() -> Check {
    let (a, b) = (blob(32, 15.0, 14.0, 3.0), blob(32, 15.0, 15.0, 3.0));
    let cfg = HSConfig::default();
    let f = horn_schunck_flow(a.view(), b.view(), &cfg).map_err(|e| e.to_string())?;
    let (mut su, mut sv, mut n) = (0.0, 0.0, 0.0);
    for ((y, x), &v) in a.indexed_iter() {
        if v > 0.1 || b[[y, x]] > 0.1 {
            su += f.u[[y, x]];
            sv += f.v[[y, x]];
            n += 1.0;
        }
    }
    let (mu, mv) = (su / n, sv / n);
    let dist = (mu - 1.0).hypot(mv);
    ensure!(dist <= 0.3, "mean flow ({mu:.3}, {mv:.3}) is {dist:.3} px from (1, 0)");
    let z = horn_schunck_flow(a.view(), a.view(), &cfg).map_err(|e| e.to_string())?;
    let zmax = z.u.iter().chain(z.v.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
    ensure!(zmax == 0.0, "identical images give |flow| up to {zmax}");
    Ok(format!("mean flow ({mu:.3}, {mv:.3}), distance {dist:.3} px; identical images zero flow"))
}

fn test_samples(size: usize) -> Vec<SynthesisSample> {
    let s = generate_phantom(&PhantomConfig { frames: 12, seed: 5, ..Default::default() }).unwrap();
    let s = if size == 64 { s } else { resample_bilinear(&s, size / 64).unwrap() };
    [(0, 1), (3, 2), (7, 3)].iter().map(|&(t, k)| build_sample(&s, t, k).unwrap()).collect()
}

fn residual_identity(data: &Dataset) -> Check {
    let base = NetworkConfig { base_channels: 8, ..Default::default() };
    let smp = test_samples(64);
    let refs: Vec<&SynthesisSample> = smp.iter().collect();
    let mut worst = 0.0f32;
    for row in AblationRow::ALL {
        let (cfg, _) = configure_ablation(row, &base, &LossConfig::default());
        let net = Network::new(cfg, 17).map_err(|e| e.to_string())?;
        for (p, s) in net.predict(&refs, 3).map_err(|e| e.to_string())?.iter().zip(&smp) {
            let lin = linear_interpolate(s.mag_in.index_axis(Axis(0), 0), s.mag_in.index_axis(Axis(0), 1), s.k).unwrap();
            for (a, b) in p.mag.iter().zip(lin.iter()) {
                worst = worst.max((a - b).abs());
            }
            for d in 0..3 {
                let lin = linear_interpolate(s.phase_in.index_axis(Axis(0), 2 * d), s.phase_in.index_axis(Axis(0), 2 * d + 1), s.k).unwrap();
                for (a, b) in p.phase.index_axis(Axis(0), d).iter().zip(lin.iter()) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
    }
    ensure!(worst <= 1e-6, "max deviation from linear interpolation {worst:e}");

    let net = Network::new(base, 17).map_err(|e| e.to_string())?;
    let opts = EvalOptions::default();
    let test = &data.test[..2];
    let lin = evaluate_method(Method::Baseline(BaselineMethod::Linear), test, &opts);
    let model = evaluate_method(Method::Model(&net), test, &opts);
    ensure!(lin.samples.len() == model.samples.len(), "row sizes differ");
    let mut dev = [0.0f64; 3];
    for (a, b) in lin.samples.iter().zip(&model.samples) {
        for (x, y) in [(&a.magnitude, &b.magnitude), (&a.phase, &b.phase)] {
            dev[0] = dev[0].max((x.mae - y.mae).abs());
            dev[1] = dev[1].max((x.psnr - y.psnr).abs());
            dev[2] = dev[2].max((x.ssim - y.ssim).abs());
        }
    }
    ensure!(
        dev[0] <= 1e-6 && dev[1] <= 1e-4 && dev[2] <= 1e-5,
        "model rows differ from linear rows: mae {:.1e} psnr {:.1e} ssim {:.1e}",
        dev[0],
        dev[1],
        dev[2]
    );
    Ok(format!(
        "max output deviation {worst:.1e} over 4 rows; row deltas mae {:.1e} psnr {:.1e} dB ssim {:.1e} over {} samples",
        dev[0],
        dev[1],
        dev[2],
        lin.samples.len()
    ))
}

fn velocity_oracle() -> Check {
    let cfg = PhantomConfig { noise_sigma: 0.0, ..Default::default() };
    let s = generate_phantom(&cfg).map_err(|e| e.to_string())?;
    let measured = velocity_curves(&s, &s.mask).map_err(|e| e.to_string())?;
    let truth = analytic_velocity_curves(&cfg).map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    for d in Direction::ALL {
        let r = pearson(measured.curve(d), truth.curve(d)).map_err(|e| e.to_string())?;
        let peak = truth.curve(d).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let dev = measured
            .curve(d)
            .iter()
            .zip(truth.curve(d))
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let rel = dev / peak;
        ensure!(r >= 0.999 && rel <= 0.02, "{}: r {r:.5}, peak deviation {:.2}%", d.name(), 100.0 * rel);
        parts.push(format!("{} r {r:.5} dev {:.2}%", d.name(), 100.0 * rel));
    }
    Ok(parts.join(", "))
}

fn shape_adaptability() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("model.ckpt");
    let cfg = NetworkConfig { base_channels: 8, ..Default::default() };
    let ck = Checkpoint {
        network: Network::new(cfg.clone(), 23).map_err(|e| e.to_string())?,
        metadata: TrainingMetadata::default(),
    };
    save_checkpoint(&ck, &path).map_err(|e| e.to_string())?;
    let net = load_checkpoint(&path, Some(&cfg)).map_err(|e| e.to_string())?.network;
    for size in [64, 128, 512] {
        let smp = test_samples(size);
        let p = net.predict(&[&smp[0]], 1).map_err(|e| format!("{size}x{size}: {e}"))?;
        ensure!(p[0].mag.dim() == (1, size, size), "{size}x{size}: output {:?}", p[0].mag.dim());
        ensure!(p[0].mag.iter().all(|v| v.is_finite()), "{size}x{size}: non-finite output");
    }

    let smp = test_samples(64);
    let refs: Vec<&SynthesisSample> = smp.iter().collect();
    let f = net.forward(&Batch::from_samples(&refs).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let (mut worst_mean, mut worst_var, mut planes, mut min_raw) = (0.0f64, 0.0f64, 0usize, f64::INFINITY);
    for (o, i) in f.graph.instance_norm_outputs().iter().zip(f.graph.instance_norm_inputs()) {
        let plane = o.plane();
        for (p, chunk) in o.data().chunks(plane).enumerate() {
            let src = &i.data()[p * plane..(p + 1) * plane];
            let m_in = src.iter().map(|&v| v as f64).sum::<f64>() / plane as f64;
            let raw_var = src.iter().map(|&v| (v as f64 - m_in).powi(2)).sum::<f64>() / plane as f64;
            let mean = chunk.iter().map(|&v| v as f64).sum::<f64>() / plane as f64;
            let var = chunk.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / plane as f64;
            worst_mean = worst_mean.max(mean.abs());
            worst_var = worst_var.max((var - 1.0).abs());
            min_raw = min_raw.min(raw_var);
            planes += 1;
        }
    }
    ensure!(planes > 0, "no instance-norm planes recorded");
    ensure!(
        worst_mean < 1e-4 && worst_var < 1e-3,
        "instance norm |mean| {worst_mean:.1e}, |var-1| {worst_var:.1e}, smallest input variance {min_raw:.1e}"
    );
    Ok(format!(
        "checkpoint ran at 64/128/512; {planes} IN planes, max |mean| {worst_mean:.1e}, max |var-1| {worst_var:.1e}, smallest input variance {min_raw:.1e}"
    ))
}

fn desk_scale_training(run: &AblationRun, data: &Dataset, opts: &EvalOptions) -> Check {
    let full = run.report.ablation(AblationRow::Full).ok_or("no full row")?;
    let (_, ck) = run.checkpoints.iter().find(|(r, _)| *r == AblationRow::Full).ok_or("no full checkpoint")?;
    let report = evaluate(Some(ck), &data.test, &[MethodKind::Linear, MethodKind::HsFlow, MethodKind::Model], opts)
        .map_err(|e| e.to_string())?;
    print!("{}", report.render());
    let psnr = |m: &str| report.method(m).map(|r| r.aggregate.magnitude.psnr.mean).unwrap_or(f64::NAN);
    let (model, hs, lin) = (psnr("model"), psnr("hs_flow"), psnr("linear"));
    let secs = full.train_wall_clock_s;
    let detail = format!(
        "magnitude PSNR model {model:.3} / hs_flow {hs:.3} / linear {lin:.3} dB; training {secs:.0}s, {} steps",
        full.steps
    );
    ensure!(secs <= 1800.0, "{detail}; training exceeded 30 min");
    ensure!(model >= lin + 1.0, "{detail}; model is not 1 dB above linear");
    ensure!(model >= hs && hs >= lin, "{detail}; ordering model >= hs_flow >= linear violated");
    Ok(detail)
}

fn segmentation_quality(run: &AblationRun, seed: u64) -> Check {
    let full = run.report.ablation(AblationRow::Full).ok_or("no full row")?;
    let dice = full.dice.map_or(f64::NAN, |d| d.mean);
    let vel = full.velocity_coefficient.map_or(f64::NAN, |v| v.mean);
    let detail = format!(
        "Dice {dice:.4} (>= 0.90), velocity coefficient {vel:.4} (>= 0.80), seed {seed}, {} velocity failures",
        full.report.failures.len()
    );
    ensure!(dice >= 0.90 && vel >= 0.80, "{detail}");
    Ok(detail)
}

fn ablation_harness(run: &AblationRun, cfg: &TrainConfig, data: &Dataset, opts: &EvalOptions) -> Check {
    let rows = &run.report.ablations;
    ensure!(rows.len() == 4, "{} rows", rows.len());
    for (e, row) in rows.iter().zip(AblationRow::ALL) {
        let (net, loss) = configure_ablation(row, &cfg.net, &cfg.loss);
        ensure!(e.row == row && e.net == net && e.weighted_loss == loss.weighted, "row {} config mismatch", row.name());
        ensure!(e.dice.is_some(), "row {} has no Dice", row.name());
    }
    print!("{}", mvmsynth::harness::ablation_table(rows));
    let dice: Vec<f64> = rows.iter().map(|e| e.dice.map_or(f64::NAN, |d| d.mean)).collect();
    let best = dice.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let full = dice[3];
    ensure!(full >= best - 0.02, "full Dice {full:.4} is more than 0.02 below best {best:.4}");

    // Determinism: the whole grid twice with a shortened schedule.
    let short = TrainConfig { max_steps: 20, eval_every: 10, ..cfg.clone() };
    let small = Dataset {
        test: data.test[..1].to_vec(),
        ..data.clone()
    };
    let a = run_ablations(&short, &small, opts, &AblationRow::ALL).map_err(|e| e.to_string())?;
    let b = run_ablations(&short, &small, opts, &AblationRow::ALL).map_err(|e| e.to_string())?;
    for (x, y) in a.report.ablations.iter().zip(&b.report.ablations) {
        ensure!(x.report == y.report && x.steps == y.steps, "row {} differs between identical runs", x.row.name());
    }
    for ((_, x), (_, y)) in a.checkpoints.iter().zip(&b.checkpoints) {
        ensure!(x == y, "checkpoints differ between identical runs");
    }
    Ok(format!(
        "4 rows; Dice {}; full {full:.4} vs best {best:.4}; reruns identical",
        dice.iter().map(|d| format!("{d:.4}")).collect::<Vec<_>>().join("/")
    ))
}

fn main() {
    let mut results = Vec::new();
    let desk_data = Dataset::from_cohort(&CohortConfig::default()).expect("phantom cohort");

    results.push(run(1, "metric oracles", Some(1.0), metric_oracles));
    results.push(run(2, "loss correctness", Some(30.0), loss_correctness));
    results.push(run(3, "boundary/SDM brute force", None, sdm_brute_force));
    results.push(run(4, "Horn-Schunck recovery", Some(10.0), horn_schunck_recovery));
    results.push(run(5, "residual identity", None, || residual_identity(&desk_data)));
    results.push(run(6, "velocity pipeline oracle", Some(30.0), velocity_oracle));
    results.push(run(10, "shape adaptability", None, shape_adaptability));

    let cfg = TrainConfig::desk_scale();
    let opts = EvalOptions::default();
    let started = Instant::now();
    let grid = run_ablations(&cfg, &desk_data, &opts, &AblationRow::ALL);
    println!("ablation grid trained in {:.0}s", started.elapsed().as_secs_f64());
    match grid {
        Ok(run_) => {
            results.push(run(7, "desk-scale training", None, || desk_scale_training(&run_, &desk_data, &opts)));
            results.push(run(8, "segmentation quality", None, || segmentation_quality(&run_, cfg.seed)));
            results.push(run(9, "ablation harness", None, || ablation_harness(&run_, &cfg, &desk_data, &opts)));
        }
        Err(e) => {
            for (id, name) in [(7, "desk-scale training"), (8, "segmentation quality"), (9, "ablation harness")] {
                results.push(run(id, name, None, || Err(format!("ablation run failed: {e}"))));
            }
        }
    }

    let failed = results.iter().filter(|o| !o.pass).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
