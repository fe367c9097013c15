//! Sample-quality and efficiency metrics.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::data::LabeledSample;
use crate::diffusion::{generate_batch, Generated, Mode};
use crate::error::{Error, Result};
use crate::model::AcDiffModel;
use crate::rng::Rng;

pub const DEFAULT_PROJECTIONS: usize = 128;

fn unit_direction(dim: usize, rng: &mut Rng) -> Vec<f64> {
    loop {
        let v = rng.normals(dim);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Mean over random unit directions of the 1-D 2-Wasserstein distance
/// between the projected sets. The larger set is randomly subsampled to the
/// size of the smaller one.
pub fn sliced_wasserstein(
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    projections: usize,
    rng: &mut Rng,
) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::contract("sliced Wasserstein needs nonempty sets"));
    }
    if projections == 0 {
        return Err(Error::contract("need at least one projection"));
    }
    let dim = a[0].len();
    if let Some(bad) = a.iter().chain(b).find(|x| x.len() != dim) {
        return Err(Error::Dimension {
            op: "sliced_wasserstein",
            left: vec![dim],
            right: vec![bad.len()],
        });
    }
    let n = a.len().min(b.len());
    let pick = |set: &[Vec<f64>], rng: &mut Rng| -> Vec<usize> {
        let mut idx: Vec<usize> = (0..set.len()).collect();
        if set.len() > n {
            rng.shuffle(&mut idx);
            idx.truncate(n);
        }
        idx
    };
    let (ia, ib) = (pick(a, rng), pick(b, rng));
    let mut total = 0.0;
    for _ in 0..projections {
        let dir = unit_direction(dim, rng);
        let project = |set: &[Vec<f64>], idx: &[usize]| {
            let mut p: Vec<f64> = idx
                .iter()
                .map(|&i| set[i].iter().zip(&dir).map(|(x, d)| x * d).sum())
                .collect();
            p.sort_by(f64::total_cmp);
            p
        };
        let (pa, pb) = (project(a, &ia), project(b, &ib));
        let mse = pa
            .iter()
            .zip(&pb)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            / n as f64;
        total += mse.sqrt();
    }
    Ok(total / projections as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub sliced_wasserstein: f64,
    pub avg_steps: f64,
    pub avg_time_s: f64,
    /// Mean step count per class, for classes that were sampled.
    pub per_class_steps: BTreeMap<usize, f64>,
    pub ablation_tag: Mode,
    pub n: usize,
}

impl MetricReport {
    /// Flat `key=value` lines. Wall time is left out so the text is
    /// reproducible; see [`MetricReport::timing_text`].
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "ablation_tag={}", self.ablation_tag);
        let _ = writeln!(out, "n={}", self.n);
        let _ = writeln!(out, "sliced_wasserstein={}", self.sliced_wasserstein);
        let _ = writeln!(out, "avg_steps={}", self.avg_steps);
        out
    }

    pub fn timing_text(&self) -> String {
        format!("avg_time_s={}\n", self.avg_time_s)
    }

    pub fn per_class_csv(&self) -> String {
        let mut out = String::from("class_id,avg_steps\n");
        for (k, v) in &self.per_class_steps {
            let _ = writeln!(out, "{k},{v}");
        }
        out
    }
}

/// Generates `n` samples conditioned on held-out pairs (cycling through
/// `held_out`) and scores them against the held-out data.
pub fn run_benchmark(
    model: &AcDiffModel,
    held_out: &[LabeledSample],
    mode: Mode,
    n: usize,
    rng: &mut Rng,
) -> Result<(MetricReport, Vec<Generated>)> {
    if n == 0 {
        return Err(Error::contract("benchmark needs n >= 1"));
    }
    if held_out.is_empty() {
        return Err(Error::contract("benchmark needs held-out samples"));
    }
    let inputs: Vec<_> = (0..n)
        .map(|i| {
            let s = &held_out[i % held_out.len()];
            (s.prompt.clone(), s.condition.clone())
        })
        .collect();
    let generated = generate_batch(model, &inputs, mode, rng.next_u64())?;
    let samples: Vec<Vec<f64>> = generated.iter().map(|g| g.x_0.clone()).collect();
    let reference: Vec<Vec<f64>> = held_out.iter().map(|s| s.x_0.clone()).collect();
    let sw = sliced_wasserstein(&samples, &reference, DEFAULT_PROJECTIONS, rng)?;

    let mut per_class: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for g in &generated {
        let e = per_class.entry(g.record.class_id).or_default();
        e.0 += g.record.t_cond as f64;
        e.1 += 1;
    }
    let report = MetricReport {
        sliced_wasserstein: sw,
        avg_steps: generated
            .iter()
            .map(|g| g.record.t_cond as f64)
            .sum::<f64>()
            / n as f64,
        avg_time_s: generated.iter().map(|g| g.record.wall_time_s).sum::<f64>() / n as f64,
        per_class_steps: per_class
            .into_iter()
            .map(|(k, (s, c))| (k, s / c as f64))
            .collect(),
        ablation_tag: mode,
        n,
    };
    if !(report.sliced_wasserstein.is_finite() && report.avg_time_s.is_finite()) {
        return Err(Error::numeric("benchmark produced non-finite metrics"));
    }
    Ok((report, generated))
}
