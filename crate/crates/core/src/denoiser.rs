//! Conditioned noise estimator.
//!
//! A residual MLP: the noisy sample is projected to the hidden width, then the
//! time, prompt and condition embeddings are each projected to the same width
//! and added into that hidden feature before two residual blocks and a linear
//! read-out.

use crate::error::{Error, Result};
use crate::numerics::{Linear, ParamStore, Tape, Tensor, Var};
use crate::rng::Rng;

const TIME_BASE: f64 = 10_000.0;

/// Sinusoidal embedding of an absolute step `t ≥ 1`:
/// `v[2k] = sin(t / 10000^{2k/dim})`, `v[2k+1] = cos(·)`.
pub fn time_embed(t: usize, dim: usize) -> Result<Vec<f64>> {
    if t < 1 {
        return Err(Error::contract("time step must be at least 1"));
    }
    let mut v = Vec::with_capacity(dim);
    for i in 0..dim {
        let k = i / 2;
        let freq = TIME_BASE.powf(2.0 * k as f64 / dim as f64);
        let angle = t as f64 / freq;
        v.push(if i % 2 == 0 { angle.sin() } else { angle.cos() });
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenoiserDims {
    pub data_dim: usize,
    pub hidden: usize,
    pub d_time: usize,
    pub d_emb: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Denoiser {
    pub dims: DenoiserDims,
    pub input: Linear,
    pub time_proj: Linear,
    pub prompt_proj: Linear,
    pub condition_proj: Linear,
    pub blocks: [Linear; 2],
    pub output: Linear,
}

impl Denoiser {
    pub fn new(store: &mut ParamStore, dims: DenoiserDims, rng: &mut Rng) -> Self {
        let h = dims.hidden;
        let input = Linear::new(store, "denoiser.input", dims.data_dim, h, true, rng);
        let time_proj = Linear::new(store, "denoiser.time_proj", dims.d_time, h, false, rng);
        let prompt_proj = Linear::new(store, "denoiser.prompt_proj", dims.d_emb, h, false, rng);
        let condition_proj =
            Linear::new(store, "denoiser.condition_proj", dims.d_emb, h, false, rng);
        let blocks = [
            Linear::new(store, "denoiser.block0", h, h, true, rng),
            Linear::new(store, "denoiser.block1", h, h, true, rng),
        ];
        let output = Linear::new(store, "denoiser.output", h, dims.data_dim, true, rng);
        Denoiser {
            dims,
            input,
            time_proj,
            prompt_proj,
            condition_proj,
            blocks,
            output,
        }
    }

    /// `[B, d_time]` constant matrix of time embeddings for each row's step.
    pub fn time_matrix(&self, tape: &mut Tape, steps: &[usize]) -> Result<Var> {
        let rows = steps
            .iter()
            .map(|&t| time_embed(t, self.dims.d_time))
            .collect::<Result<Vec<_>>>()?;
        tape.constant(Tensor::from_rows(&rows)?)
    }

    /// `ε_θ` for a batch: `x_t` is `[B, data_dim]`, `f_p`/`f_d` are `[B, d_emb]`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        x_t: Var,
        steps: &[usize],
        f_p: Var,
        f_d: Var,
    ) -> Result<Var> {
        let shape = tape.value(x_t).shape().to_vec();
        if shape.len() != 2 || shape[1] != self.dims.data_dim || shape[0] != steps.len() {
            return Err(Error::Dimension {
                op: "predict_noise",
                left: shape,
                right: vec![steps.len(), self.dims.data_dim],
            });
        }
        let temb = self.time_matrix(tape, steps)?;
        let h = self.input.forward(tape, vars, x_t)?;
        let mut h = tape.silu(h)?;
        for (proj, emb) in [
            (&self.time_proj, temb),
            (&self.prompt_proj, f_p),
            (&self.condition_proj, f_d),
        ] {
            let injected = proj.forward(tape, vars, emb)?;
            h = tape.add(h, injected)?;
        }
        for block in &self.blocks {
            let z = block.forward(tape, vars, h)?;
            let z = tape.silu(z)?;
            h = tape.add(h, z)?;
        }
        self.output.forward(tape, vars, h)
    }

    /// Convenience wrapper evaluating one sample from plain vectors.
    pub fn predict_noise(
        &self,
        store: &ParamStore,
        x_t: &[f64],
        t: usize,
        f_p: &[f64],
        f_d: &[f64],
    ) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let vars = store.register(&mut tape);
        let x = tape.constant(Tensor::row(x_t.to_vec()))?;
        let p = tape.constant(Tensor::row(f_p.to_vec()))?;
        let d = tape.constant(Tensor::row(f_d.to_vec()))?;
        let out = self.forward(&mut tape, &vars, x, &[t], p, d)?;
        Ok(tape.value(out).data().to_vec())
    }
}
