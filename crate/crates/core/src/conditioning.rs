//! Per-sample control signals: prompt and condition embeddings, the entropy
//! based complexity ratio `r_s`, the adaptive step count and the hybrid
//! schedule coefficient `λ`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numerics::{Linear, ParamId, ParamStore, Tape, Tensor, Var};
use crate::rng::Rng;

/// Side length of the pooled grid fed to the condition encoder.
pub const POOL_SIDE: usize = 8;
pub const DEFAULT_BINS: usize = 32;

/// Lower and upper bound of the normalized complexity ratio.
pub const R_S_MIN: f64 = 0.5;
pub const R_S_MAX: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptInput {
    pub class_id: usize,
    /// Kept for provenance; the table encoder only looks at `class_id`.
    pub label: Option<String>,
}

impl PromptInput {
    pub fn class(class_id: usize) -> Self {
        PromptInput {
            class_id,
            label: None,
        }
    }
}

/// Grayscale image with pixels in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl ConditionImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::contract("condition image must be nonempty"));
        }
        if pixels.len() != width * height {
            return Err(Error::Dimension {
                op: "condition_image",
                left: vec![height, width],
                right: vec![pixels.len()],
            });
        }
        if let Some(p) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::contract(format!("pixel value {p} outside [0, 1]")));
        }
        Ok(ConditionImage {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        ConditionImage::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingSource {
    Prompt,
    Condition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub values: Vec<f64>,
    pub source: EmbeddingSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CtsDecision {
    pub t_cond: usize,
    pub r_s: f64,
    /// Raw fusion output in `(0, 1)` before the affine step mapping.
    pub u: f64,
    pub lambda: f64,
    pub f_p: Embedding,
    pub f_d: Embedding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConditioningDims {
    pub num_classes: usize,
    pub d_emb: usize,
    pub hidden: usize,
}

/// Average-pools an image onto an 8×8 grid, row-major.
pub fn pool_grid(img: &ConditionImage) -> Vec<f64> {
    let (w, h) = (img.width, img.height);
    let span = |i: usize, n: usize| {
        let start = i * n / POOL_SIDE;
        let end = ((i + 1) * n / POOL_SIDE).max(start + 1);
        start..end
    };
    let mut out = Vec::with_capacity(POOL_SIDE * POOL_SIDE);
    for gy in 0..POOL_SIDE {
        for gx in 0..POOL_SIDE {
            let (ys, xs) = (span(gy, h), span(gx, w));
            let count = (ys.len() * xs.len()) as f64;
            let mut sum = 0.0;
            for y in ys {
                for x in xs.clone() {
                    sum += img.get(x, y);
                }
            }
            out.push(sum / count);
        }
    }
    out
}

/// Normalized histogram entropy `r_s = 0.5 + H / ln(bins)`, clamped to `[0.5, 1.5]`.
///
/// Bins with equal counts are grouped before summing, so an image spread
/// evenly over `k` bins has entropy exactly `ln k`.
pub fn spatial_complexity(img: &ConditionImage, bins: usize) -> Result<f64> {
    if bins < 2 {
        return Err(Error::contract(format!(
            "need at least 2 histogram bins, got {bins}"
        )));
    }
    let mut counts = vec![0usize; bins];
    for &p in &img.pixels {
        let b = ((p * bins as f64) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let mut multiplicity: BTreeMap<usize, usize> = BTreeMap::new();
    for c in counts.into_iter().filter(|c| *c > 0) {
        *multiplicity.entry(c).or_default() += 1;
    }
    let n = img.pixels.len();
    let entropy: f64 = multiplicity
        .iter()
        .map(|(&c, &m)| ((m * c) as f64 / n as f64) * (n as f64 / c as f64).ln())
        .sum();
    Ok((R_S_MIN + entropy / (bins as f64).ln()).clamp(R_S_MIN, R_S_MAX))
}

/// Fraction of pixels strictly above 0.5.
pub fn edge_density(img: &ConditionImage) -> f64 {
    img.pixels.iter().filter(|p| **p > 0.5).count() as f64 / img.pixels.len() as f64
}

/// Regression target for the step head: `clamp01(0.5·(r_s − 0.5) + 0.5·density)`.
pub fn step_head_target(r_s: f64, density: f64) -> f64 {
    (0.5 * (r_s - R_S_MIN) + 0.5 * density).clamp(0.0, 1.0)
}

/// `round(r_s · (t_min + u·(t_max − t_min)))`, rounding halves up, at least 1.
pub fn steps_from_unit(u: f64, r_s: f64, t_min: usize, t_max: usize) -> usize {
    let base = t_min as f64 + u * (t_max - t_min) as f64;
    ((r_s * base + 0.5).floor() as usize).max(1)
}

/// Learned `num_classes × d_emb` lookup table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PromptEncoder {
    pub table: ParamId,
    pub num_classes: usize,
}

impl PromptEncoder {
    pub fn new(store: &mut ParamStore, dims: ConditioningDims, rng: &mut Rng) -> Self {
        let data = (0..dims.num_classes * dims.d_emb)
            .map(|_| rng.normal())
            .collect();
        let table = store.add(
            "prompt.table",
            Tensor::matrix(dims.num_classes, dims.d_emb, data).expect("table shape"),
        );
        PromptEncoder {
            table,
            num_classes: dims.num_classes,
        }
    }

    pub fn forward(&self, tape: &mut Tape, vars: &[Var], prompts: &[&PromptInput]) -> Result<Var> {
        let ids = prompts
            .iter()
            .map(|p| {
                if p.class_id < self.num_classes {
                    Ok(p.class_id)
                } else {
                    Err(Error::contract(format!(
                        "class id {} out of range for {} classes",
                        p.class_id, self.num_classes
                    )))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        tape.gather_rows(vars[self.table.index()], &ids)
    }
}

/// Pooled 8×8 grid → linear → SiLU.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionEncoder {
    pub proj: Linear,
}

impl ConditionEncoder {
    pub fn new(store: &mut ParamStore, dims: ConditioningDims, rng: &mut Rng) -> Self {
        ConditionEncoder {
            proj: Linear::new(
                store,
                "condition.proj",
                POOL_SIDE * POOL_SIDE,
                dims.d_emb,
                true,
                rng,
            ),
        }
    }

    pub fn forward(&self, tape: &mut Tape, vars: &[Var], conds: &[&ConditionImage]) -> Result<Var> {
        let rows: Vec<Vec<f64>> = conds.iter().map(|c| pool_grid(c)).collect();
        let x = tape.constant(Tensor::from_rows(&rows)?)?;
        let h = self.proj.forward(tape, vars, x)?;
        tape.silu(h)
    }
}

/// Two-layer MLP `2·d_emb → hidden → 1` with a sigmoid output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionHead {
    pub hidden: Linear,
    pub out: Linear,
}

impl FusionHead {
    pub fn new(store: &mut ParamStore, name: &str, dims: ConditioningDims, rng: &mut Rng) -> Self {
        FusionHead {
            hidden: Linear::new(
                store,
                &format!("{name}.hidden"),
                2 * dims.d_emb,
                dims.hidden,
                true,
                rng,
            ),
            out: Linear::new(store, &format!("{name}.out"), dims.hidden, 1, true, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape, vars: &[Var], fused: Var) -> Result<Var> {
        let h = self.hidden.forward(tape, vars, fused)?;
        let h = tape.silu(h)?;
        let o = self.out.forward(tape, vars, h)?;
        tape.sigmoid(o)
    }

    pub fn params(&self) -> Vec<ParamId> {
        [self.hidden, self.out]
            .iter()
            .flat_map(|l| std::iter::once(l.weight).chain(l.bias))
            .collect()
    }
}

/// Tape handles for one batch of conditioning.
#[derive(Debug, Clone, Copy)]
pub struct ConditioningVars {
    pub f_p: Var,
    pub f_d: Var,
    /// Step-head output computed from detached embeddings.
    pub u: Var,
    pub lambda: Var,
}

/// Per-image quantities that depend only on the condition image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionStats {
    pub r_s: f64,
    pub density: f64,
}

impl ConditionStats {
    pub fn of(img: &ConditionImage, bins: usize) -> Result<Self> {
        Ok(ConditionStats {
            r_s: spatial_complexity(img, bins)?,
            density: edge_density(img),
        })
    }
}

/// The encoders plus the step head `G_T` and the schedule head `G_β`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditioner {
    pub dims: ConditioningDims,
    pub prompt: PromptEncoder,
    pub condition: ConditionEncoder,
    pub step_head: FusionHead,
    pub schedule_head: FusionHead,
    pub bins: usize,
}

impl Conditioner {
    pub fn new(store: &mut ParamStore, dims: ConditioningDims, bins: usize, rng: &mut Rng) -> Self {
        Conditioner {
            dims,
            prompt: PromptEncoder::new(store, dims, rng),
            condition: ConditionEncoder::new(store, dims, rng),
            step_head: FusionHead::new(store, "step_head", dims, rng),
            schedule_head: FusionHead::new(store, "schedule_head", dims, rng),
            bins,
        }
    }

    /// Embeds a batch and runs both heads. The step head sees detached
    /// embeddings so its auxiliary loss only trains the step head.
    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        prompts: &[&PromptInput],
        conds: &[&ConditionImage],
    ) -> Result<ConditioningVars> {
        if prompts.len() != conds.len() || prompts.is_empty() {
            return Err(Error::contract(
                "conditioning batch needs matching, nonempty inputs",
            ));
        }
        let f_p = self.prompt.forward(tape, vars, prompts)?;
        let f_d = self.condition.forward(tape, vars, conds)?;
        let fused = tape.concat_cols(&[f_p, f_d])?;
        let lambda = self.schedule_head.forward(tape, vars, fused)?;
        let detached = tape.detach(fused);
        let u = self.step_head.forward(tape, vars, detached)?;
        Ok(ConditioningVars {
            f_p,
            f_d,
            u,
            lambda,
        })
    }

    /// Mean squared error of the step head against [`step_head_target`].
    pub fn step_head_loss(&self, tape: &mut Tape, u: Var, stats: &[ConditionStats]) -> Result<Var> {
        let targets: Vec<f64> = stats
            .iter()
            .map(|s| step_head_target(s.r_s, s.density))
            .collect();
        let target = tape.constant(Tensor::matrix(targets.len(), 1, targets)?)?;
        let diff = tape.sub(u, target)?;
        let sq = tape.square(diff)?;
        tape.mean(sq)
    }

    /// Reads per-sample decisions off an evaluated batch.
    pub fn decisions(
        &self,
        tape: &Tape,
        cv: &ConditioningVars,
        stats: &[ConditionStats],
        t_min: usize,
        t_max: usize,
    ) -> Vec<CtsDecision> {
        let d = self.dims.d_emb;
        let (fp, fd) = (tape.value(cv.f_p).data(), tape.value(cv.f_d).data());
        let (us, ls) = (tape.value(cv.u).data(), tape.value(cv.lambda).data());
        stats
            .iter()
            .enumerate()
            .map(|(i, s)| CtsDecision {
                t_cond: steps_from_unit(us[i], s.r_s, t_min, t_max),
                r_s: s.r_s,
                u: us[i],
                lambda: ls[i],
                f_p: Embedding {
                    values: fp[i * d..(i + 1) * d].to_vec(),
                    source: EmbeddingSource::Prompt,
                },
                f_d: Embedding {
                    values: fd[i * d..(i + 1) * d].to_vec(),
                    source: EmbeddingSource::Condition,
                },
            })
            .collect()
    }

    pub fn encode_prompt(&self, store: &ParamStore, p: &PromptInput) -> Result<Embedding> {
        let mut tape = Tape::new();
        let vars = store.register(&mut tape);
        let v = self.prompt.forward(&mut tape, &vars, &[p])?;
        Ok(Embedding {
            values: tape.value(v).data().to_vec(),
            source: EmbeddingSource::Prompt,
        })
    }

    pub fn encode_condition(&self, store: &ParamStore, c: &ConditionImage) -> Result<Embedding> {
        let mut tape = Tape::new();
        let vars = store.register(&mut tape);
        let v = self.condition.forward(&mut tape, &vars, &[c])?;
        Ok(Embedding {
            values: tape.value(v).data().to_vec(),
            source: EmbeddingSource::Condition,
        })
    }

    /// Adaptive step count, complexity ratio and `λ` for one input pair.
    pub fn cts_decide(
        &self,
        store: &ParamStore,
        p: &PromptInput,
        c: &ConditionImage,
        t_min: usize,
        t_max: usize,
    ) -> Result<CtsDecision> {
        let mut tape = Tape::new();
        let vars = store.register(&mut tape);
        let cv = self.forward(&mut tape, &vars, &[p], &[c])?;
        let stats = [ConditionStats::of(c, self.bins)?];
        Ok(self.decisions(&tape, &cv, &stats, t_min, t_max).remove(0))
    }

    /// One gradient step on the step head alone; returns the pre-update loss.
    pub fn train_step_head(
        &self,
        store: &mut ParamStore,
        batch: &[(&PromptInput, &ConditionImage)],
        lr: f64,
    ) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::contract("empty auxiliary batch"));
        }
        let prompts: Vec<_> = batch.iter().map(|b| b.0).collect();
        let conds: Vec<_> = batch.iter().map(|b| b.1).collect();
        let stats = conds
            .iter()
            .map(|c| ConditionStats::of(c, self.bins))
            .collect::<Result<Vec<_>>>()?;
        let mut tape = Tape::new();
        let vars = store.register(&mut tape);
        let cv = self.forward(&mut tape, &vars, &prompts, &conds)?;
        let loss = self.step_head_loss(&mut tape, cv.u, &stats)?;
        let value = tape.scalar(loss);
        tape.backward(loss)?;
        let head = self.step_head.params();
        for (id, g) in tape.param_grads() {
            if head.contains(&id) {
                store.get_mut(id).accumulate_grad(g);
            }
        }
        store.sgd_step(lr);
        store.zero_grad();
        Ok(value)
    }
}
