//! Datasets: synthetic complexity-graded toys, CIFAR-10 batches, PGM-backed
//! manifests, plus the edge extractor that turns images into conditions.
//!
//! Image samples live in model space `x = 2·pixel − 1`; their condition is
//! the Sobel edge map of the pixel image. 2-D point samples get a 16×16
//! rasterized Gaussian bump centred on the point as their condition.

mod cifar;
mod pgm;
mod sobel;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub use cifar::{
    load_cifar10, parse_records, CifarRecord, CLASS_NAMES, RECORD_BYTES, SIDE as CIFAR_SIDE,
};
pub use pgm::{decode_pgm, encode_pgm, read_pgm, write_pgm};
pub use sobel::sobel_edges;

use crate::conditioning::{ConditionImage, PromptInput};
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const SHAPE_SIDE: usize = 16;
pub const SKETCH_SIDE: usize = 16;
/// Half-width of the square window rasterized for 2-D sketches.
pub const SKETCH_EXTENT: f64 = 3.0;
const SKETCH_BLUR: f64 = 0.4;

pub const MAX_STROKES: usize = 5;
pub const MAX_COMPONENTS: usize = 5;
pub const MIXTURE_RADIUS: f64 = 2.0;
pub const MIXTURE_STD: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub x_0: Vec<f64>,
    pub prompt: PromptInput,
    pub condition: ConditionImage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyKind {
    GaussMixture2d,
    TwoMoons2d,
    Shapes16x16,
}

impl ToyKind {
    pub fn data_dim(self) -> usize {
        match self {
            ToyKind::GaussMixture2d | ToyKind::TwoMoons2d => 2,
            ToyKind::Shapes16x16 => SHAPE_SIDE * SHAPE_SIDE,
        }
    }

    pub fn is_image(self) -> bool {
        matches!(self, ToyKind::Shapes16x16)
    }
}

impl fmt::Display for ToyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            ToyKind::GaussMixture2d => "gauss_mixture_2d",
            ToyKind::TwoMoons2d => "two_moons_2d",
            ToyKind::Shapes16x16 => "shapes_16x16",
        })
    }
}

impl FromStr for ToyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gauss_mixture_2d" => Ok(ToyKind::GaussMixture2d),
            "two_moons_2d" => Ok(ToyKind::TwoMoons2d),
            "shapes_16x16" => Ok(ToyKind::Shapes16x16),
            other => Err(Error::contract(format!("unknown toy dataset `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyDatasetSpec {
    pub kind: ToyKind,
    pub num_classes: usize,
    pub samples_per_class: usize,
    /// Per-class structure level in `[0, 1]`.
    pub complexity_profile: Vec<f64>,
}

impl ToyDatasetSpec {
    /// Profile rising evenly from 0 (class 0) to 1 (last class).
    pub fn graded(kind: ToyKind, num_classes: usize, samples_per_class: usize) -> Self {
        let complexity_profile = (0..num_classes)
            .map(|k| {
                if num_classes > 1 {
                    k as f64 / (num_classes - 1) as f64
                } else {
                    0.0
                }
            })
            .collect();
        ToyDatasetSpec {
            kind,
            num_classes,
            samples_per_class,
            complexity_profile,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(Error::contract("toy dataset needs at least one class"));
        }
        if self.complexity_profile.len() != self.num_classes {
            return Err(Error::contract(
                "complexity profile length must equal class count",
            ));
        }
        if self
            .complexity_profile
            .iter()
            .any(|c| !(0.0..=1.0).contains(c))
        {
            return Err(Error::contract("complexity values must lie in [0, 1]"));
        }
        Ok(())
    }
}

fn level(c: f64, max: usize) -> usize {
    1 + (c * (max - 1) as f64).round() as usize
}

/// Number of strokes drawn for a shapes class of complexity `c`.
pub fn stroke_count(c: f64) -> usize {
    level(c, MAX_STROKES)
}

/// Number of mixture components for a class of complexity `c`.
pub fn component_count(c: f64) -> usize {
    level(c, MAX_COMPONENTS)
}

pub fn mixture_center(j: usize, components: usize) -> [f64; 2] {
    let a = 2.0 * std::f64::consts::PI * j as f64 / components as f64;
    [MIXTURE_RADIUS * a.cos(), MIXTURE_RADIUS * a.sin()]
}

pub fn moon_noise(c: f64) -> f64 {
    0.05 + 0.25 * c
}

fn draw_strokes(count: usize, rng: &mut Rng) -> Vec<f64> {
    let side = SHAPE_SIDE;
    let mut img = vec![0.0; side * side];
    let hi = (side - 2) as f64;
    for _ in 0..count {
        let (x0, y0) = (rng.uniform(1.0, hi), rng.uniform(1.0, hi));
        let (x1, y1) = (rng.uniform(1.0, hi), rng.uniform(1.0, hi));
        let len = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();
        let n = (2.0 * len).ceil() as usize + 1;
        for i in 0..=n {
            let s = i as f64 / n as f64;
            let x = (x0 + s * (x1 - x0)).round() as usize;
            let y = (y0 + s * (y1 - y0)).round() as usize;
            img[y * side + x] = 1.0;
        }
    }
    img
}

/// The condition image attached to a sample of `kind` with data `x_0`.
pub fn derive_condition(kind: ToyKind, x_0: &[f64]) -> Result<ConditionImage> {
    match kind {
        ToyKind::Shapes16x16 => {
            let pixels = x_0
                .iter()
                .map(|v| ((v + 1.0) / 2.0).clamp(0.0, 1.0))
                .collect();
            sobel_edges(&ConditionImage::new(SHAPE_SIDE, SHAPE_SIDE, pixels)?)
        }
        ToyKind::GaussMixture2d | ToyKind::TwoMoons2d => point_sketch(x_0),
    }
}

/// 16×16 Gaussian bump centred on a 2-D point over `[-3, 3]²`.
pub fn point_sketch(point: &[f64]) -> Result<ConditionImage> {
    if point.len() != 2 {
        return Err(Error::contract("point sketch needs a 2-D point"));
    }
    let cell = 2.0 * SKETCH_EXTENT / SKETCH_SIDE as f64;
    let mut px = Vec::with_capacity(SKETCH_SIDE * SKETCH_SIDE);
    for row in 0..SKETCH_SIDE {
        // row 0 is the top of the window
        let cy = SKETCH_EXTENT - (row as f64 + 0.5) * cell;
        for col in 0..SKETCH_SIDE {
            let cx = -SKETCH_EXTENT + (col as f64 + 0.5) * cell;
            let d2 = (cx - point[0]).powi(2) + (cy - point[1]).powi(2);
            px.push((-d2 / (2.0 * SKETCH_BLUR * SKETCH_BLUR)).exp());
        }
    }
    ConditionImage::new(SKETCH_SIDE, SKETCH_SIDE, px)
}

/// Model-space sample from a `[0, 1]` image: `x = 2·pixel − 1`, condition = edges.
pub fn image_sample(img: &ConditionImage, prompt: PromptInput) -> Result<LabeledSample> {
    Ok(LabeledSample {
        x_0: img.pixels().iter().map(|p| 2.0 * p - 1.0).collect(),
        prompt,
        condition: sobel_edges(img)?,
    })
}

/// Inverse of the image model-space map, clamped to `[0, 1]`.
pub fn to_pixels(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|v| ((v + 1.0) / 2.0).clamp(0.0, 1.0))
        .collect()
}

/// Draws the dataset in class-interleaved order: sample `i` has class
/// `i % num_classes`.
pub fn generate_toy(spec: &ToyDatasetSpec, rng: &mut Rng) -> Result<Vec<LabeledSample>> {
    spec.validate()?;
    let mut out = Vec::with_capacity(spec.num_classes * spec.samples_per_class);
    for _ in 0..spec.samples_per_class {
        for (class_id, &c) in spec.complexity_profile.iter().enumerate() {
            let x_0 = match spec.kind {
                ToyKind::Shapes16x16 => draw_strokes(stroke_count(c), rng)
                    .into_iter()
                    .map(|p| 2.0 * p - 1.0)
                    .collect(),
                ToyKind::GaussMixture2d => {
                    let m = component_count(c);
                    let center = mixture_center(rng.below(m as u64) as usize, m);
                    vec![
                        center[0] + MIXTURE_STD * rng.normal(),
                        center[1] + MIXTURE_STD * rng.normal(),
                    ]
                }
                ToyKind::TwoMoons2d => {
                    let theta = rng.uniform(0.0, std::f64::consts::PI);
                    let upper = rng.next_f64() < 0.5;
                    let (x, y) = if upper {
                        (theta.cos(), theta.sin())
                    } else {
                        (1.0 - theta.cos(), 0.5 - theta.sin())
                    };
                    let s = moon_noise(c);
                    vec![x + s * rng.normal(), y + s * rng.normal()]
                }
            };
            let condition = derive_condition(spec.kind, &x_0)?;
            out.push(LabeledSample {
                x_0,
                prompt: PromptInput::class(class_id),
                condition,
            });
        }
    }
    Ok(out)
}

/// Reads `path,label` lines; blank lines and `#` comments are skipped.
/// Relative paths resolve against the manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<(PathBuf, usize)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    let mut offset = 0u64;
    for line in text.lines() {
        let trimmed = line.trim();
        if !trimmed.is_empty() && !trimmed.starts_with('#') {
            let (p, label) = trimmed
                .rsplit_once(',')
                .ok_or_else(|| Error::format(offset, "manifest line needs `path,label`"))?;
            let label = label
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::format(offset, format!("bad label `{label}`")))?;
            out.push((base.join(p.trim()), label));
        }
        offset += line.len() as u64 + 1;
    }
    Ok(out)
}

pub fn write_manifest(path: &Path, entries: &[(PathBuf, usize)]) -> Result<()> {
    let text: String = entries
        .iter()
        .map(|(p, l)| format!("{},{}\n", p.display(), l))
        .collect();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads every PGM listed in a manifest as an image sample.
pub fn load_manifest_dataset(path: &Path) -> Result<Vec<LabeledSample>> {
    read_manifest(path)?
        .into_iter()
        .map(|(p, label)| image_sample(&read_pgm(&p)?, PromptInput::class(label)))
        .collect()
}
