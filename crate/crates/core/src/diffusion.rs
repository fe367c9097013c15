//! Forward noising, the conditional training step and the adaptive-length
//! reverse sampler.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::conditioning::{ConditionImage, ConditionStats, CtsDecision, PromptInput};
use crate::data::LabeledSample;
use crate::error::{Error, Result};
use crate::model::AcDiffModel;
use crate::numerics::{Tape, Tensor, Var};
use crate::rng::Rng;
use crate::schedule::{
    alpha_bar_var, base_schedule, hybrid_betas_var, subsample_even, HybridSchedule,
};

/// Which parts of the adaptive machinery are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Learned step count and learned hybrid schedule.
    Adaptive,
    /// Plain DDPM: `T = t_max`, `λ = 1`, `r_s = 1`.
    FixedTFixedBeta,
    /// Learned step count, rates subsampled from the `t_max` base schedule.
    AdaptiveTFixedBeta,
}

impl Mode {
    pub const ALL: [Mode; 3] = [
        Mode::Adaptive,
        Mode::FixedTFixedBeta,
        Mode::AdaptiveTFixedBeta,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Adaptive => "adaptive",
            Mode::FixedTFixedBeta => "fixed_T_fixed_beta",
            Mode::AdaptiveTFixedBeta => "adaptive_T_fixed_beta",
        }
    }

    fn learns_lambda(self) -> bool {
        self == Mode::Adaptive
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::contract(format!("unknown mode `{s}`")))
    }
}

/// One closed-form forward draw.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionDraw {
    pub t: usize,
    pub eps: Vec<f64>,
    pub x_t: Vec<f64>,
    pub alpha_bar: f64,
}

/// `x_t = √ᾱ′_t·x_0 + √(1−ᾱ′_t)·ε` with `ε` drawn from `rng`.
pub fn forward_sample(
    x_0: &[f64],
    t: usize,
    sched: &HybridSchedule,
    rng: &mut Rng,
) -> Result<DiffusionDraw> {
    let eps = rng.normals(x_0.len());
    forward_with_noise(x_0, t, sched, eps)
}

/// [`forward_sample`] with caller-supplied noise.
pub fn forward_with_noise(
    x_0: &[f64],
    t: usize,
    sched: &HybridSchedule,
    eps: Vec<f64>,
) -> Result<DiffusionDraw> {
    if t == 0 || t > sched.t_cond() {
        return Err(Error::contract(format!(
            "t = {t} outside [1, {}]",
            sched.t_cond()
        )));
    }
    if eps.len() != x_0.len() {
        return Err(Error::Dimension {
            op: "forward_sample",
            left: vec![x_0.len()],
            right: vec![eps.len()],
        });
    }
    let alpha_bar = sched.alpha_bar_prime(t);
    let (a, b) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt());
    let x_t = x_0.iter().zip(&eps).map(|(x, e)| a * x + b * e).collect();
    Ok(DiffusionDraw {
        t,
        eps,
        x_t,
        alpha_bar,
    })
}

/// `x_{t−1} = 1/√α′_t·(x_t − β′_t/√(1−ᾱ′_t)·ε̂) + √β′_t·z`; `z` must be zero at `t = 1`.
pub fn reverse_step(
    x_t: &[f64],
    t: usize,
    sched: &HybridSchedule,
    eps_hat: &[f64],
    z: &[f64],
) -> Result<Vec<f64>> {
    if t == 0 || t > sched.t_cond() {
        return Err(Error::contract(format!(
            "t = {t} outside [1, {}]",
            sched.t_cond()
        )));
    }
    if eps_hat.len() != x_t.len() || z.len() != x_t.len() {
        return Err(Error::Dimension {
            op: "reverse_step",
            left: vec![x_t.len()],
            right: vec![eps_hat.len(), z.len()],
        });
    }
    if t == 1 && z.iter().any(|v| *v != 0.0) {
        return Err(Error::contract("the final reverse step takes no noise"));
    }
    let beta = sched.beta_prime(t);
    let inv = 1.0 / sched.alpha_prime(t).sqrt();
    let coef = beta / (1.0 - sched.alpha_bar_prime(t)).sqrt();
    let sigma = beta.sqrt();
    let out: Vec<f64> = x_t
        .iter()
        .zip(eps_hat)
        .zip(z)
        .map(|((x, e), z)| inv * (x - coef * e) + sigma * z)
        .collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric(format!(
            "non-finite reverse step at t = {t}"
        )));
    }
    Ok(out)
}

/// One sampling step. Without `clip` this is [`reverse_step`]. With it the
/// implied `x_0 = (x_t − √(1−ᾱ′_t)·ε̂)/√ᾱ′_t` is clamped to `[−clip, clip]`
/// and the step uses the posterior mean
/// `√ᾱ′_{t−1}·β′_t/(1−ᾱ′_t)·x_0 + √α′_t·(1−ᾱ′_{t−1})/(1−ᾱ′_t)·x_t`, which
/// matches [`reverse_step`] whenever nothing is clamped.
pub fn denoise_step(
    x_t: &[f64],
    t: usize,
    sched: &HybridSchedule,
    eps_hat: &[f64],
    z: &[f64],
    clip: Option<f64>,
) -> Result<Vec<f64>> {
    let Some(bound) = clip else {
        return reverse_step(x_t, t, sched, eps_hat, z);
    };
    // reuse the argument checks
    reverse_step(x_t, t, sched, eps_hat, z)?;
    let alpha_bar = sched.alpha_bar_prime(t);
    let prev = if t > 1 {
        sched.alpha_bar_prime(t - 1)
    } else {
        1.0
    };
    let beta = sched.beta_prime(t);
    let c_x0 = prev.sqrt() * beta / (1.0 - alpha_bar);
    let c_xt = sched.alpha_prime(t).sqrt() * (1.0 - prev) / (1.0 - alpha_bar);
    let (root, noise) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt());
    let sigma = beta.sqrt();
    let out: Vec<f64> = x_t
        .iter()
        .zip(eps_hat)
        .zip(z)
        .map(|((x, e), z)| {
            let x0 = ((x - noise * e) / root).clamp(-bound, bound);
            c_x0 * x0 + c_xt * x + sigma * z
        })
        .collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric(format!(
            "non-finite reverse step at t = {t}"
        )));
    }
    Ok(out)
}

/// Base rates for a sample under `mode`: `(betas, r_s)`. `λ` is
/// applied separately.
fn mode_betas(model: &AcDiffModel, mode: Mode, d: &CtsDecision) -> Result<(Vec<f64>, f64)> {
    let cfg = model.schedule_config();
    match mode {
        Mode::Adaptive => Ok((base_schedule(cfg, d.t_cond, d.r_s)?, d.r_s)),
        Mode::FixedTFixedBeta => Ok((base_schedule(cfg, cfg.t_max, 1.0)?, 1.0)),
        Mode::AdaptiveTFixedBeta => {
            let full = base_schedule(cfg, cfg.t_max, 1.0)?;
            Ok((subsample_even(&full, d.t_cond)?, d.r_s))
        }
    }
}

/// Schedule used to sample under `mode` given a step decision.
pub fn schedule_for(model: &AcDiffModel, mode: Mode, d: &CtsDecision) -> Result<HybridSchedule> {
    let (betas, r_s) = mode_betas(model, mode, d)?;
    let sched = if mode.learns_lambda() {
        crate::schedule::hybrid_combine(&betas, d.lambda)?
    } else {
        crate::schedule::hybrid_combine(&betas, 1.0)?
    };
    Ok(sched.with_r_s(r_s))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    /// Mean squared noise-prediction error before the update.
    pub loss: f64,
    /// Step-head regression loss; zero when the step head is unused.
    pub aux_loss: f64,
    pub mean_t_cond: f64,
}

/// Differentiable training objective on `tape`, built over `vars` (one per
/// parameter, in store order).
pub struct TrainingLoss {
    /// Mean squared noise-prediction error.
    pub loss: Var,
    /// `loss` plus the step-head regression term when the head is trained.
    pub total: Var,
    pub aux_loss: f64,
    /// `(t, T_cond, λ, β′_t)` per sample.
    pub draws: Vec<(usize, usize, f64, f64)>,
}

/// Builds the loss for `batch`, drawing per sample, in batch order,
/// `t ~ U{1..T_cond}` then `ε`.
pub fn training_loss(
    tape: &mut Tape,
    vars: &[Var],
    model: &AcDiffModel,
    batch: &[&LabeledSample],
    rng: &mut Rng,
    mode: Mode,
) -> Result<TrainingLoss> {
    if batch.is_empty() {
        return Err(Error::contract("empty training batch"));
    }
    let dim = model.config.data_dim;
    if let Some(bad) = batch.iter().find(|s| s.x_0.len() != dim) {
        return Err(Error::Dimension {
            op: "training_step",
            left: vec![bad.x_0.len()],
            right: vec![dim],
        });
    }
    let cfg = model.schedule_config().clone();
    let prompts: Vec<&PromptInput> = batch.iter().map(|s| &s.prompt).collect();
    let conds: Vec<&ConditionImage> = batch.iter().map(|s| &s.condition).collect();
    let stats = conds
        .iter()
        .map(|c| ConditionStats::of(c, model.conditioner.bins))
        .collect::<Result<Vec<_>>>()?;

    let cv = model.conditioner.forward(tape, vars, &prompts, &conds)?;
    let decisions = model
        .conditioner
        .decisions(tape, &cv, &stats, cfg.t_min, cfg.t_max);
    let one = tape.constant(Tensor::scalar(1.0))?;

    let mut rows = Vec::with_capacity(batch.len());
    let mut steps = Vec::with_capacity(batch.len());
    let mut noise = Vec::with_capacity(batch.len() * dim);
    let mut diag = Vec::with_capacity(batch.len());
    for (i, (sample, d)) in batch.iter().zip(&decisions).enumerate() {
        let (betas, _) = mode_betas(model, mode, d)?;
        let t_cond = betas.len();
        let lambda = if mode.learns_lambda() {
            tape.gather_rows(cv.lambda, &[i])?
        } else {
            one
        };
        let betas_prime = hybrid_betas_var(tape, lambda, &betas)?;
        let t = 1 + rng.below(t_cond as u64) as usize;
        let eps = rng.normals(dim);
        diag.push((
            t,
            t_cond,
            tape.scalar(lambda),
            tape.value(betas_prime).data()[t - 1],
        ));

        let alpha_bar = alpha_bar_var(tape, betas_prime, t)?;
        let signal = tape.sqrt(alpha_bar)?;
        let rest = tape.rsub_scalar(1.0, alpha_bar)?;
        let spread = tape.sqrt(rest)?;
        let x0 = tape.constant(Tensor::row(sample.x_0.clone()))?;
        let e = tape.constant(Tensor::row(eps.clone()))?;
        let a = tape.matmul(signal, x0)?;
        let b = tape.matmul(spread, e)?;
        rows.push(tape.add(a, b)?);
        steps.push(t);
        noise.extend(eps);
    }

    let describe = |err: Error| describe_draws(err, &diag);
    let x_t = tape.concat_rows(&rows)?;
    let eps_hat = model
        .denoiser
        .forward(tape, vars, x_t, &steps, cv.f_p, cv.f_d)
        .map_err(describe)?;
    let target = tape.constant(Tensor::matrix(batch.len(), dim, noise)?)?;
    let diff = tape.sub(eps_hat, target).map_err(describe)?;
    let sq = tape.square(diff).map_err(describe)?;
    let loss = tape.mean(sq).map_err(describe)?;
    let (total, aux_loss) = if mode == Mode::FixedTFixedBeta {
        (loss, 0.0)
    } else {
        let aux = model.conditioner.step_head_loss(tape, cv.u, &stats)?;
        let v = tape.scalar(aux);
        (tape.add(loss, aux)?, v)
    };
    Ok(TrainingLoss {
        loss,
        total,
        aux_loss,
        draws: diag,
    })
}

fn describe_draws(err: Error, draws: &[(usize, usize, f64, f64)]) -> Error {
    match err {
        Error::Numeric(msg) => {
            let detail: Vec<String> = draws
                .iter()
                .map(|(t, tc, l, b)| format!("(t={t}, T_cond={tc}, lambda={l}, beta'_t={b})"))
                .collect();
            Error::numeric(format!("{msg}; draws: {}", detail.join(" ")))
        }
        other => other,
    }
}

/// One gradient-descent update on a batch; see [`training_loss`] for the
/// draw order. The returned loss is measured before the update.
pub fn training_step(
    model: &mut AcDiffModel,
    batch: &[&LabeledSample],
    rng: &mut Rng,
    lr: f64,
    mode: Mode,
) -> Result<StepStats> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::contract(format!(
            "learning rate must be positive, got {lr}"
        )));
    }
    let mut tape = Tape::new();
    let vars = model.store.register(&mut tape);
    let l = training_loss(&mut tape, &vars, model, batch, rng, mode)?;
    let describe = |err: Error| describe_draws(err, &l.draws);
    tape.backward(l.total).map_err(describe)?;
    model.store.accumulate_grads(&tape);
    model.store.sgd_step(lr);
    model.store.zero_grad();
    if model.store.tensors().iter().any(|t| !t.is_finite()) {
        return Err(describe(Error::numeric("parameters became non-finite")));
    }
    Ok(StepStats {
        loss: tape.scalar(l.loss),
        aux_loss: l.aux_loss,
        mean_t_cond: l.draws.iter().map(|d| d.1 as f64).sum::<f64>() / l.draws.len() as f64,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub class_id: usize,
    pub t_cond: usize,
    pub lambda: f64,
    pub r_s: f64,
    pub u: f64,
    pub alpha_bar_final: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub x_0: Vec<f64>,
    pub record: SampleRecord,
}

struct Trajectory {
    sched: HybridSchedule,
    decision: CtsDecision,
    x: Vec<f64>,
    rng: Rng,
    class_id: usize,
}

/// Reverse-diffuses one sample. Draws `x_T` first, then one noise vector
/// per step for `t > 1`.
pub fn generate(
    model: &AcDiffModel,
    prompt: &PromptInput,
    condition: &ConditionImage,
    mode: Mode,
    rng: &mut Rng,
) -> Result<Generated> {
    let start = Instant::now();
    let cfg = model.schedule_config();
    let d = model
        .conditioner
        .cts_decide(&model.store, prompt, condition, cfg.t_min, cfg.t_max)?;
    let sched = schedule_for(model, mode, &d)?;
    let dim = model.config.data_dim;
    let mut x = rng.normals(dim);
    for t in (1..=sched.t_cond()).rev() {
        let eps_hat =
            model
                .denoiser
                .predict_noise(&model.store, &x, t, &d.f_p.values, &d.f_d.values)?;
        let z = if t > 1 {
            rng.normals(dim)
        } else {
            vec![0.0; dim]
        };
        x = denoise_step(&x, t, &sched, &eps_hat, &z, model.config.clip_x0)?;
    }
    Ok(Generated {
        x_0: x,
        record: record(
            prompt.class_id,
            &d,
            &sched,
            mode,
            start.elapsed().as_secs_f64(),
        ),
    })
}

fn record(
    class_id: usize,
    d: &CtsDecision,
    sched: &HybridSchedule,
    mode: Mode,
    secs: f64,
) -> SampleRecord {
    SampleRecord {
        class_id,
        t_cond: sched.t_cond(),
        lambda: sched.lambda(),
        r_s: if mode == Mode::FixedTFixedBeta {
            1.0
        } else {
            d.r_s
        },
        u: d.u,
        alpha_bar_final: sched.alpha_bar_prime(sched.t_cond()),
        wall_time_s: secs,
    }
}

/// Generates one sample per input pair, sample `i` using `Rng::stream(seed, i)`.
///
/// Results equal calling [`generate`] per sample with those streams; the
/// denoiser is evaluated over all unfinished samples at once. Wall time is
/// split across samples in proportion to their step counts.
pub fn generate_batch(
    model: &AcDiffModel,
    inputs: &[(PromptInput, ConditionImage)],
    mode: Mode,
    seed: u64,
) -> Result<Vec<Generated>> {
    if inputs.is_empty() {
        return Ok(Vec::new());
    }
    let start = Instant::now();
    let cfg = model.schedule_config().clone();
    let dim = model.config.data_dim;
    let mut trajs = Vec::with_capacity(inputs.len());
    for (i, (p, c)) in inputs.iter().enumerate() {
        let decision = model
            .conditioner
            .cts_decide(&model.store, p, c, cfg.t_min, cfg.t_max)?;
        let sched = schedule_for(model, mode, &decision)?;
        let mut rng = Rng::stream(seed, i as u64);
        let x = rng.normals(dim);
        trajs.push(Trajectory {
            sched,
            decision,
            x,
            rng,
            class_id: p.class_id,
        });
    }
    let longest = trajs.iter().map(|t| t.sched.t_cond()).max().unwrap_or(0);
    let d_emb = model.config.d_emb;
    for k in 0..longest {
        let active: Vec<usize> = (0..trajs.len())
            .filter(|&i| trajs[i].sched.t_cond() > k)
            .collect();
        let steps: Vec<usize> = active
            .iter()
            .map(|&i| trajs[i].sched.t_cond() - k)
            .collect();
        let mut tape = Tape::new();
        let vars = model.store.register(&mut tape);
        let gather = |f: &dyn Fn(&Trajectory) -> &[f64], width: usize| {
            let mut flat = Vec::with_capacity(active.len() * width);
            active
                .iter()
                .for_each(|&i| flat.extend_from_slice(f(&trajs[i])));
            Tensor::matrix(active.len(), width, flat)
        };
        let x = tape.constant(gather(&|t| &t.x, dim)?)?;
        let fp = tape.constant(gather(&|t| &t.decision.f_p.values, d_emb)?)?;
        let fd = tape.constant(gather(&|t| &t.decision.f_d.values, d_emb)?)?;
        let out: Var = model
            .denoiser
            .forward(&mut tape, &vars, x, &steps, fp, fd)?;
        let eps_hat = tape.value(out).data().to_vec();
        for (row, (&i, &t)) in active.iter().zip(&steps).enumerate() {
            let tr = &mut trajs[i];
            let z = if t > 1 {
                tr.rng.normals(dim)
            } else {
                vec![0.0; dim]
            };
            let eps = &eps_hat[row * dim..(row + 1) * dim];
            tr.x = denoise_step(&tr.x, t, &tr.sched, eps, &z, model.config.clip_x0)?;
        }
    }
    let total_steps: usize = trajs.iter().map(|t| t.sched.t_cond()).sum();
    let secs = start.elapsed().as_secs_f64();
    Ok(trajs
        .into_iter()
        .map(|tr| {
            let share = secs * tr.sched.t_cond() as f64 / total_steps as f64;
            Generated {
                record: record(tr.class_id, &tr.decision, &tr.sched, mode, share),
                x_0: tr.x,
            }
        })
        .collect())
}
