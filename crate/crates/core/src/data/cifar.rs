//! CIFAR-10 binary batches: 3073-byte records of one label byte followed by
//! 1024 red, 1024 green and 1024 blue bytes of a 32×32 image.

use std::path::Path;

use super::{image_sample, LabeledSample};
use crate::conditioning::{ConditionImage, PromptInput};
use crate::error::{Error, Result};

pub const RECORD_BYTES: usize = 3073;
pub const SIDE: usize = 32;
const PLANE: usize = SIDE * SIDE;

pub const CLASS_NAMES: [&str; 10] = [
    "airplane",
    "automobile",
    "bird",
    "cat",
    "deer",
    "dog",
    "frog",
    "horse",
    "ship",
    "truck",
];

/// One decoded record: label and luma image.
#[derive(Debug, Clone, PartialEq)]
pub struct CifarRecord {
    pub label: u8,
    pub gray: ConditionImage,
}

/// Decodes up to `limit` records (all of them when `limit` is `None`).
pub fn parse_records(bytes: &[u8], limit: Option<usize>) -> Result<Vec<CifarRecord>> {
    if bytes.len() % RECORD_BYTES != 0 {
        let whole = bytes.len() / RECORD_BYTES * RECORD_BYTES;
        return Err(Error::format(
            whole as u64,
            format!(
                "truncated record: {} trailing bytes, file size {} is not a multiple of {RECORD_BYTES}",
                bytes.len() - whole,
                bytes.len()
            ),
        ));
    }
    let count = bytes.len() / RECORD_BYTES;
    let take = limit.map_or(count, |l| l.min(count));
    let mut out = Vec::with_capacity(take);
    for (i, rec) in bytes.chunks_exact(RECORD_BYTES).take(take).enumerate() {
        let label = rec[0];
        if label > 9 {
            return Err(Error::format(
                (i * RECORD_BYTES) as u64,
                format!("label {label} > 9"),
            ));
        }
        let (r, g, b) = (
            &rec[1..1 + PLANE],
            &rec[1 + PLANE..1 + 2 * PLANE],
            &rec[1 + 2 * PLANE..],
        );
        let gray = (0..PLANE)
            .map(|p| {
                let y = 0.299 * r[p] as f64 + 0.587 * g[p] as f64 + 0.114 * b[p] as f64;
                (y / 255.0).clamp(0.0, 1.0)
            })
            .collect();
        out.push(CifarRecord {
            label,
            gray: ConditionImage::new(SIDE, SIDE, gray)?,
        });
    }
    Ok(out)
}

/// Reads a batch file into samples whose prompts carry the category name and
/// whose conditions are Sobel edge maps.
pub fn load_cifar10(path: &Path, subset_size: Option<usize>) -> Result<Vec<LabeledSample>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_records(&bytes, subset_size)?
        .into_iter()
        .map(|rec| {
            let prompt = PromptInput {
                class_id: rec.label as usize,
                label: Some(CLASS_NAMES[rec.label as usize].to_string()),
            };
            image_sample(&rec.gray, prompt)
        })
        .collect()
}
