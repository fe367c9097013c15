//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use acdiff::data::LabeledSample;
use acdiff::diffusion::{generate_batch, training_step, Mode};
use acdiff::model::AcDiffModel;
use acdiff::run::{DatasetSource, RunConfig, Split};
use acdiff::Rng;

/// Plain linear DDPM rates from `lo` to `hi` over `steps` steps.
pub fn linear_betas(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(steps);
    for i in 0..steps {
        let frac = i as f64 / (steps - 1) as f64;
        let b = lo + frac * (hi - lo);
        out.push(if b > hi { hi } else { b });
    }
    out
}

pub fn cumulative_alphas(betas: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(betas.len());
    let mut prod = 1.0;
    for b in betas {
        prod *= 1.0 - b;
        out.push(prod);
    }
    out
}

/// `x_t` for a given `ε`; `t` is 1-based.
pub fn ddpm_noise(x0: &[f64], eps: &[f64], abar: &[f64], t: usize) -> Vec<f64> {
    let a = abar[t - 1];
    let (s, n) = (a.sqrt(), (1.0 - a).sqrt());
    (0..x0.len()).map(|j| s * x0[j] + n * eps[j]).collect()
}

/// Ancestral step with variance `β_t`.
pub fn ddpm_denoise(
    x: &[f64],
    eps_hat: &[f64],
    z: &[f64],
    betas: &[f64],
    abar: &[f64],
    t: usize,
) -> Vec<f64> {
    let b = betas[t - 1];
    let scale = 1.0 / (1.0 - b).sqrt();
    let k = b / (1.0 - abar[t - 1]).sqrt();
    (0..x.len())
        .map(|j| scale * (x[j] - k * eps_hat[j]) + b.sqrt() * z[j])
        .collect()
}

/// Small two-moons config for the plain-DDPM comparison.
pub fn reduction_config() -> RunConfig {
    let mut cfg = RunConfig::parse(
        "dataset = two_moons_2d\nnum_classes = 3\nsamples_per_class = 40\nt_min = 10\nt_max = 50\n\
         d_emb = 4\nhidden = 6\nhidden_denoiser = 16\nd_time = 8\nbatch_size = 8\nlr = 0.01\n\
         steps = 30\nseed = 17\nmode = fixed_T_fixed_beta\n",
    )
    .expect("valid config");
    assert!(matches!(cfg.dataset, DatasetSource::Toy(_)));
    cfg.model.clip_x0 = None;
    cfg
}

/// Checks forward draws, training losses and reverse trajectories of the
/// fixed-length, fixed-rate mode against the plain reference, bitwise.
/// Returns a summary of what was compared.
pub fn check_ddpm_reduction() -> Result<String, String> {
    let cfg = reduction_config();
    let s = &cfg.model.schedule;
    let betas = linear_betas(s.beta_min, s.beta_max, s.t_max);
    let abar = cumulative_alphas(&betas);
    let data = cfg.load_dataset(Split::Train).map_err(|e| e.to_string())?;
    let mut model = AcDiffModel::new(cfg.model.clone(), cfg.seed).map_err(|e| e.to_string())?;
    let mode = Mode::FixedTFixedBeta;

    // Forward draws.
    let probe = acdiff::conditioning::PromptInput::class(0);
    let d = model
        .conditioner
        .cts_decide(&model.store, &probe, &data[0].condition, s.t_min, s.t_max)
        .map_err(|e| e.to_string())?;
    let sched = acdiff::diffusion::schedule_for(&model, mode, &d).map_err(|e| e.to_string())?;
    if sched.betas_prime() != betas.as_slice() {
        return Err("schedule rates differ from the reference".into());
    }
    let mut forward_checked = 0;
    for (i, sample) in data.iter().take(20).enumerate() {
        let mut rng = Rng::new(i as u64);
        let mut mirror = rng.clone();
        let t = 1 + i % s.t_max;
        let draw = acdiff::diffusion::forward_sample(&sample.x_0, t, &sched, &mut rng)
            .map_err(|e| e.to_string())?;
        let eps = mirror.normals(sample.x_0.len());
        if draw.x_t != ddpm_noise(&sample.x_0, &eps, &abar, t) || draw.eps != eps {
            return Err(format!("forward draw {i} differs"));
        }
        forward_checked += 1;
    }

    // Training losses: the reference replays the batch and noise draws and
    // scores the current weights before each update.
    let mut rng = Rng::stream(cfg.seed, 2);
    let mut reference_losses = Vec::new();
    let mut library_losses = Vec::new();
    for step in 0..cfg.steps {
        let mut mirror = rng.clone();
        let batch: Vec<&LabeledSample> = (0..cfg.batch_size)
            .map(|_| &data[mirror.below(data.len() as u64) as usize])
            .collect();
        let mut sum = 0.0;
        for sample in &batch {
            let t = 1 + mirror.below(s.t_max as u64) as usize;
            let eps = mirror.normals(cfg.data_dim);
            let x_t = ddpm_noise(&sample.x_0, &eps, &abar, t);
            let d = model
                .conditioner
                .cts_decide(
                    &model.store,
                    &sample.prompt,
                    &sample.condition,
                    s.t_min,
                    s.t_max,
                )
                .map_err(|e| e.to_string())?;
            let eps_hat = model
                .denoiser
                .predict_noise(&model.store, &x_t, t, &d.f_p.values, &d.f_d.values)
                .map_err(|e| e.to_string())?;
            for j in 0..cfg.data_dim {
                sum += (eps_hat[j] - eps[j]) * (eps_hat[j] - eps[j]);
            }
        }
        reference_losses.push(sum / (cfg.batch_size * cfg.data_dim) as f64);

        let batch: Vec<&LabeledSample> = (0..cfg.batch_size)
            .map(|_| &data[rng.below(data.len() as u64) as usize])
            .collect();
        let stats =
            training_step(&mut model, &batch, &mut rng, cfg.lr, mode).map_err(|e| e.to_string())?;
        library_losses.push(stats.loss);
        if rng != mirror {
            return Err(format!("step {step}: random streams diverged"));
        }
    }
    if reference_losses
        .iter()
        .zip(&library_losses)
        .any(|(a, b)| a.to_bits() != b.to_bits())
    {
        return Err(format!(
            "losses differ: {reference_losses:?} vs {library_losses:?}"
        ));
    }
    let (_, trained) = acdiff::run::train(&cfg, |_, _| {}).map_err(|e| e.to_string())?;
    if trained
        .iter()
        .zip(&library_losses)
        .any(|(a, b)| a.to_bits() != b.to_bits())
    {
        return Err("the training loop disagrees with stepwise training".into());
    }

    // Reverse trajectories.
    let inputs: Vec<_> = data
        .iter()
        .take(6)
        .map(|s| (s.prompt.clone(), s.condition.clone()))
        .collect();
    let generated = generate_batch(&model, &inputs, mode, 99).map_err(|e| e.to_string())?;
    for (i, ((prompt, cond), g)) in inputs.iter().zip(&generated).enumerate() {
        let d = model
            .conditioner
            .cts_decide(&model.store, prompt, cond, s.t_min, s.t_max)
            .map_err(|e| e.to_string())?;
        let mut rng = Rng::stream(99, i as u64);
        let mut x = rng.normals(cfg.data_dim);
        for t in (1..=s.t_max).rev() {
            let eps_hat = model
                .denoiser
                .predict_noise(&model.store, &x, t, &d.f_p.values, &d.f_d.values)
                .map_err(|e| e.to_string())?;
            let z = if t > 1 {
                rng.normals(cfg.data_dim)
            } else {
                vec![0.0; cfg.data_dim]
            };
            x = ddpm_denoise(&x, &eps_hat, &z, &betas, &abar, t);
        }
        if g.x_0 != x || g.record.t_cond != s.t_max {
            return Err(format!("trajectory {i} differs: {:?} vs {x:?}", g.x_0));
        }
    }
    Ok(format!(
        "{forward_checked} forward draws, {} losses, {} trajectories of {} steps match bitwise",
        library_losses.len(),
        generated.len(),
        s.t_max
    ))
}

/// Toy-width model and batch for finite-difference checks.
pub fn gradcheck_fixture() -> (AcDiffModel, Vec<LabeledSample>) {
    let cfg = RunConfig::parse(
        "dataset = two_moons_2d\nnum_classes = 3\nsamples_per_class = 4\nt_min = 3\nt_max = 9\n\
         d_emb = 3\nhidden = 4\nhidden_denoiser = 5\nd_time = 4\nseed = 3\n",
    )
    .expect("valid config");
    let data = cfg.load_dataset(Split::Train).expect("toy data");
    let model = AcDiffModel::new(cfg.model.clone(), cfg.seed).expect("model");
    (model, data)
}

/// Largest relative error between tape and finite-difference gradients of
/// the adaptive training objective, plus the number of scalars checked.
///
/// The step head reads detached embeddings, so its regression loss is
/// checked against the step-head weights alone; the noise-prediction loss
/// is checked against every parameter. Fails if any parameter gets an
/// all-zero gradient from both.
pub fn check_full_gradients() -> Result<(f64, usize), String> {
    use acdiff::diffusion::training_loss;
    use acdiff::numerics::{grad_check, Tape, Var};
    let (model, data) = gradcheck_fixture();
    let batch: Vec<&LabeledSample> = [0, 5, 10].iter().map(|&i| &data[i]).collect();
    let noise_loss = |tape: &mut Tape, vars: &[Var]| {
        training_loss(
            tape,
            vars,
            &model,
            &batch,
            &mut Rng::new(11),
            Mode::Adaptive,
        )
        .map(|l| l.loss)
    };
    let head: Vec<usize> = model
        .conditioner
        .step_head
        .params()
        .iter()
        .map(|id| id.index())
        .collect();
    let aux_loss = |tape: &mut Tape, head_vars: &[Var]| {
        let mut vars = Vec::new();
        for (i, t) in model.store.tensors().iter().enumerate() {
            vars.push(match head.iter().position(|h| *h == i) {
                Some(k) => head_vars[k],
                None => tape.constant(t.clone())?,
            });
        }
        let l = training_loss(
            tape,
            &vars,
            &model,
            &batch,
            &mut Rng::new(11),
            Mode::Adaptive,
        )?;
        tape.sub(l.total, l.loss)
    };

    let mut tape = Tape::new();
    let vars = model.store.register(&mut tape);
    let l = training_loss(
        &mut tape,
        &vars,
        &model,
        &batch,
        &mut Rng::new(11),
        Mode::Adaptive,
    )
    .map_err(|e| e.to_string())?;
    tape.backward(l.total).map_err(|e| e.to_string())?;
    for (id, var) in model.store.ids().zip(&vars) {
        if tape.grad(*var).is_none_or(|g| g.iter().all(|v| *v == 0.0)) {
            return Err(format!(
                "parameter `{}` receives no gradient",
                model.store.name(id)
            ));
        }
    }
    let all = model.store.tensors();
    let head_tensors: Vec<_> = head.iter().map(|&i| all[i].clone()).collect();
    let e1 = grad_check(noise_loss, all, 1e-5).map_err(|e| e.to_string())?;
    let e2 = grad_check(aux_loss, &head_tensors, 1e-5).map_err(|e| e.to_string())?;
    Ok((e1.max(e2), all.iter().map(|t| t.numel()).sum()))
}

/// Random schedule knobs: kind, length in `[1, 500]`, `λ ∈ [0, 1]` and
/// `r_s ∈ [0.5, 1.5]`, plus random base extremes.
pub fn random_schedule_case(
    rng: &mut Rng,
) -> (acdiff::schedule::BaseScheduleConfig, usize, f64, f64) {
    use acdiff::schedule::{BaseScheduleConfig, ScheduleKind};
    let kind = ScheduleKind::ALL[rng.below(3) as usize];
    let beta_min = rng.uniform(1e-4, 1e-2);
    let beta_max = rng.uniform(0.02, 0.3);
    let cfg = BaseScheduleConfig {
        kind,
        beta_min,
        beta_max,
        ..Default::default()
    };
    let steps = 1 + rng.below(500) as usize;
    (cfg, steps, rng.next_f64(), rng.uniform(0.5, 1.5))
}

pub fn check_schedule_properties(draws: usize) -> Result<String, String> {
    use acdiff::schedule::{base_schedule, beta_tilde, HybridSchedule};
    let mut rng = Rng::new(3000);
    for i in 0..draws {
        let (cfg, steps, lambda, r_s) = random_schedule_case(&mut rng);
        let s = HybridSchedule::build(&cfg, steps, r_s, lambda)
            .map_err(|e| format!("draw {i}: {e}"))?;
        s.check_invariants()
            .map_err(|e| format!("draw {i} ({cfg:?}, T={steps}, λ={lambda}, r_s={r_s}): {e}"))?;
        let base = base_schedule(&cfg, steps, r_s).map_err(|e| e.to_string())?;
        let end = HybridSchedule::build(&cfg, steps, r_s, 1.0).map_err(|e| e.to_string())?;
        if end
            .betas_prime()
            .iter()
            .zip(&base)
            .any(|(a, b)| a.to_bits() != b.to_bits())
        {
            return Err(format!("draw {i}: λ = 1 does not recover the base rates"));
        }
    }
    let tilde = beta_tilde(&[0.1, 0.2]).map_err(|e| e.to_string())?;
    // (1 − 0.9) / (1 − 0.72) · 0.2 = 0.02 / 0.28
    if tilde[0] != 0.0
        || (tilde[1] - 0.0714285714).abs() > 1e-10
        || (tilde[1] - 0.02 / 0.28).abs() > 1e-12
    {
        return Err(format!("beta_tilde([0.1, 0.2]) = {tilde:?}"));
    }
    Ok(format!(
        "{draws} random schedules satisfy every invariant; λ = 1 recovery bitwise; β̃ = {tilde:?}"
    ))
}

/// Sample mean and variance.
pub fn moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Closed-form forward draws against step-by-step composition, and variance
/// preservation for standard-normal data. Returns the worst deviations.
pub fn check_forward_statistics(draws: usize) -> Result<String, String> {
    use acdiff::diffusion::forward_sample;
    use acdiff::schedule::{BaseScheduleConfig, HybridSchedule};
    let cfg = BaseScheduleConfig::default();
    let sched = HybridSchedule::build(&cfg, 40, 0.8, 0.4).map_err(|e| e.to_string())?;
    let x0 = 0.7;
    let mut rng = Rng::new(404);
    let (mut worst_mean, mut worst_var, mut worst_pres) = (0.0f64, 0.0f64, 0.0f64);
    for t in [1, 5, 20, 40] {
        let closed: Vec<f64> = (0..draws)
            .map(|_| forward_sample(&[x0], t, &sched, &mut rng).map(|d| d.x_t[0]))
            .collect::<acdiff::Result<_>>()
            .map_err(|e| e.to_string())?;
        let iterated: Vec<f64> = (0..draws)
            .map(|_| {
                let mut x = x0;
                for s in 1..=t {
                    let b = sched.beta_prime(s);
                    x = (1.0 - b).sqrt() * x + b.sqrt() * rng.normal();
                }
                x
            })
            .collect();
        let (m1, v1) = moments(&closed);
        let (m2, v2) = moments(&iterated);
        worst_mean = worst_mean.max((m1 - m2).abs());
        worst_var = worst_var.max((v1 - v2).abs());
    }
    for t in 1..=sched.t_cond() {
        let xs: Vec<f64> = (0..draws)
            .map(|_| {
                let x0 = rng.normal();
                forward_sample(&[x0], t, &sched, &mut rng).map(|d| d.x_t[0])
            })
            .collect::<acdiff::Result<_>>()
            .map_err(|e| e.to_string())?;
        worst_pres = worst_pres.max((moments(&xs).1 - 1.0).abs());
    }
    let summary = format!(
        "mean gap {worst_mean:.4}, variance gap {worst_var:.4}, preservation gap {worst_pres:.4}"
    );
    if worst_mean < 0.02 && worst_var < 0.05 && worst_pres < 0.05 {
        Ok(summary)
    } else {
        Err(summary)
    }
}

pub fn check_cts_properties() -> Result<String, String> {
    use acdiff::conditioning::{spatial_complexity, steps_from_unit, ConditionImage};
    let bins = 32;
    let flat = ConditionImage::filled(16, 16, 0.37).map_err(|e| e.to_string())?;
    let low = spatial_complexity(&flat, bins).map_err(|e| e.to_string())?;
    // 32×32 pixels, 32 per bin, each at a bin center
    let uniform: Vec<f64> = (0..1024)
        .map(|i| ((i % bins) as f64 + 0.5) / bins as f64)
        .collect();
    let uniform = ConditionImage::new(32, 32, uniform).map_err(|e| e.to_string())?;
    let high = spatial_complexity(&uniform, bins).map_err(|e| e.to_string())?;
    if low != 0.5 || high != 1.5 {
        return Err(format!(
            "constant image r_s = {low}, uniform image r_s = {high}"
        ));
    }
    let mut rng = Rng::new(55);
    for _ in 0..50 {
        let mut pixels: Vec<f64> = (0..256).map(|_| rng.next_f64().powi(3)).collect();
        let a = spatial_complexity(&ConditionImage::new(16, 16, pixels.clone()).unwrap(), bins)
            .unwrap();
        rng.shuffle(&mut pixels);
        let b = spatial_complexity(&ConditionImage::new(16, 16, pixels).unwrap(), bins).unwrap();
        if a.to_bits() != b.to_bits() {
            return Err(format!("permuting pixels changed r_s from {a} to {b}"));
        }
    }
    let spot = steps_from_unit(0.5, 1.0, 20, 200);
    if spot != 110 {
        return Err(format!("T_cond(u = 0.5, r_s = 1, [20, 200]) = {spot}"));
    }
    Ok(format!(
        "r_s: constant {low}, uniform {high}, permutation invariant; T_cond spot value {spot}"
    ))
}

/// Environment variable naming the published CIFAR-10 `test_batch.bin`.
pub const CIFAR_TEST_BATCH_VAR: &str = "ACDIFF_CIFAR10_TEST_BATCH";

/// Minimal record reader written separately from the library: label byte,
/// then the first pixel's red, green and blue bytes.
pub fn raw_first_record(bytes: &[u8]) -> Option<(u8, [u8; 3])> {
    if bytes.len() < 3073 {
        return None;
    }
    Some((bytes[0], [bytes[1], bytes[1 + 1024], bytes[1 + 2048]]))
}

/// Rejection of every truncated prefix of a synthetic batch. Returns the
/// number of prefixes tried.
pub fn check_cifar_truncation() -> Result<usize, String> {
    use acdiff::data::{parse_records, RECORD_BYTES};
    let mut rng = Rng::new(10);
    let bytes: Vec<u8> = (0..3 * RECORD_BYTES)
        .map(|i| {
            if i % RECORD_BYTES == 0 {
                (i / RECORD_BYTES) as u8
            } else {
                rng.below(256) as u8
            }
        })
        .collect();
    let mut tried = 0;
    for len in 1..bytes.len() {
        let ok = parse_records(&bytes[..len], None).is_ok();
        if ok != (len % RECORD_BYTES == 0) {
            return Err(format!("prefix of {len} bytes: accepted = {ok}"));
        }
        tried += 1;
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let file = dir.path().join("short.bin");
    std::fs::write(&file, &bytes[..bytes.len() - 7]).map_err(|e| e.to_string())?;
    if acdiff::data::load_cifar10(&file, Some(1)).is_ok() {
        return Err("truncated file accepted from disk".into());
    }
    Ok(tried)
}

/// With the published test batch available, its first label must be 3
/// (cat) and agree with the raw reader, and truncations must be rejected.
/// `Ok(None)` when the file is not configured.
pub fn check_cifar_test_batch() -> Result<Option<String>, String> {
    let Some(path) = std::env::var_os(CIFAR_TEST_BATCH_VAR) else {
        return Ok(None);
    };
    let bytes = std::fs::read(&path).map_err(|e| format!("{}: {e}", path.to_string_lossy()))?;
    let (label, rgb) = raw_first_record(&bytes).ok_or("file shorter than one record")?;
    let recs = acdiff::data::parse_records(&bytes, Some(1)).map_err(|e| e.to_string())?;
    let gray = (0.299 * rgb[0] as f64 + 0.587 * rgb[1] as f64 + 0.114 * rgb[2] as f64) / 255.0;
    if recs[0].label != label || (recs[0].gray.get(0, 0) - gray).abs() > 1e-12 {
        return Err("library and raw reader disagree on the first record".into());
    }
    if label != 3 {
        return Err(format!("first label is {label}, expected 3"));
    }
    for cut in [1, 100, 3072, bytes.len() / 2 + 1] {
        if acdiff::data::parse_records(&bytes[..bytes.len() - cut], None).is_ok() {
            return Err(format!("file truncated by {cut} bytes was accepted"));
        }
    }
    Ok(Some(format!(
        "first label {label} ({})",
        acdiff::data::CLASS_NAMES[label as usize]
    )))
}

/// Runs the binary and returns stdout, failing on a nonzero exit.
pub fn run_cli(bin: &str, args: &[&str]) -> Result<Vec<u8>, String> {
    let out = std::process::Command::new(bin)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(out.stdout)
}

/// Every file under `dir` except wall-clock timing files, sorted by name.
pub fn reproducible_files(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .into_iter()
        .flatten()
        .flatten()
        .map(|e| e.path())
        .filter(|p| {
            p.is_file()
                && !p
                    .file_name()
                    .unwrap()
                    .to_string_lossy()
                    .starts_with("timing")
        })
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

/// Checkpoint round trip and byte-reproducibility of every seeded command.
pub fn check_persistence(bin: &str) -> Result<String, String> {
    use acdiff::checkpoint::{decode, encode};
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let s = |p: &std::path::Path| p.to_string_lossy().into_owned();
    let cfg = d.join("run.cfg");
    std::fs::write(
        &cfg,
        "dataset = shapes_16x16\nnum_classes = 5\nsamples_per_class = 6\nt_min = 4\nt_max = 16\n\
         d_emb = 4\nhidden = 6\nhidden_denoiser = 24\nd_time = 8\nbatch_size = 6\nlr = 0.05\n\
         steps = 15\nseed = 21\nclip_x0 = 1.0\n",
    )
    .map_err(|e| e.to_string())?;
    let cond = d.join("cond.pgm");
    let pixels = (0..256).map(|i| ((i * 37) % 11) as f64 / 10.0).collect();
    acdiff::data::write_pgm(
        &cond,
        &acdiff::conditioning::ConditionImage::new(16, 16, pixels).unwrap(),
    )
    .map_err(|e| e.to_string())?;

    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let ckpt = d.join(format!("{run}.ckpt"));
        let mut stdout = run_cli(bin, &["train", "--config", &s(&cfg), "--out", &s(&ckpt)])?;
        let gen = d.join(format!("gen_{run}"));
        stdout.extend(run_cli(
            bin,
            &[
                "generate",
                "--ckpt",
                &s(&ckpt),
                "--class",
                "2",
                "--condition",
                &s(&cond),
                "--count",
                "3",
                "--seed",
                "6",
                "--out",
                &s(&gen),
            ],
        )?);
        let eval = d.join(format!("eval_{run}"));
        stdout.extend(run_cli(
            bin,
            &[
                "eval",
                "--ckpt",
                &s(&ckpt),
                "--mode",
                "adaptive",
                "--n",
                "10",
                "--seed",
                "2",
                "--out",
                &s(&eval),
            ],
        )?);
        stdout.extend(run_cli(
            bin,
            &[
                "schedule",
                "--config",
                &s(&cfg),
                "--rs",
                "0.8",
                "--lambda",
                "0.3",
                "--steps",
                "9",
            ],
        )?);
        let ckpt_bytes = std::fs::read(&ckpt).map_err(|e| e.to_string())?;
        let loss = std::fs::read(acdiff::cli::loss_log_path(&ckpt)).map_err(|e| e.to_string())?;
        outputs.push((
            stdout.clone(),
            ckpt_bytes,
            loss,
            reproducible_files(&gen),
            reproducible_files(&eval),
        ));
    }
    let stdout_text = String::from_utf8_lossy(&outputs[0].0).replace(&s(d), "");
    let strip = |o: &(
        Vec<u8>,
        Vec<u8>,
        Vec<u8>,
        Vec<(String, Vec<u8>)>,
        Vec<(String, Vec<u8>)>,
    )| { (o.1.clone(), o.2.clone(), o.3.clone(), o.4.clone()) };
    if strip(&outputs[0]) != strip(&outputs[1]) {
        return Err("seeded commands produced different files".into());
    }
    let stdout_b = String::from_utf8_lossy(&outputs[1].0)
        .replace(&s(d), "")
        .replace("gen_b", "gen_a");
    if stdout_text != stdout_b {
        return Err("seeded commands printed different output".into());
    }
    let (config, model) = decode(&outputs[0].1).map_err(|e| e.to_string())?;
    if encode(&config, &model) != outputs[0].1 {
        return Err("checkpoint decode/encode is not byte-identical".into());
    }
    Ok(format!(
        "checkpoint round trip byte-identical ({} bytes); train, generate, eval and schedule reproducible",
        outputs[0].1.len()
    ))
}
