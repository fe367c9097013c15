//! Binary PGM ("P5", maxval 255) reading and writing.

use std::path::Path;

use crate::conditioning::ConditionImage;
use crate::error::{Error, Result};

/// Encodes with header `P5\n{w} {h}\n255\n`; pixels are rounded to 8 bits.
pub fn encode_pgm(img: &ConditionImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(
        img.pixels()
            .iter()
            .map(|p| (p.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<ConditionImage> {
    let mut pos = 0usize;
    let token = |pos: &mut usize| -> Result<String> {
        loop {
            match bytes.get(*pos) {
                Some(b'#') => {
                    while bytes.get(*pos).is_some_and(|b| *b != b'\n') {
                        *pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => *pos += 1,
                Some(_) => break,
                None => return Err(Error::format(*pos as u64, "unexpected end of header")),
            }
        }
        let start = *pos;
        while bytes.get(*pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            *pos += 1;
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };
    let magic = token(&mut pos)?;
    if magic != "P5" {
        return Err(Error::format(
            0,
            format!("bad magic `{magic}`, expected P5"),
        ));
    }
    let number = |pos: &mut usize, what: &str| -> Result<usize> {
        let at = *pos as u64;
        let t = token(pos)?;
        t.parse::<usize>()
            .map_err(|_| Error::format(at, format!("bad {what} `{t}`")))
    };
    let width = number(&mut pos, "width")?;
    let height = number(&mut pos, "height")?;
    let maxval = number(&mut pos, "maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::format(0, format!("bad dimensions {width}x{height}")));
    }
    if maxval != 255 {
        return Err(Error::format(
            pos as u64,
            format!("maxval {maxval} unsupported, need 255"),
        ));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let need = width * height;
    let raster = bytes.get(pos..pos + need).ok_or_else(|| {
        Error::format(
            bytes.len() as u64,
            format!("raster truncated, need {need} bytes"),
        )
    })?;
    ConditionImage::new(
        width,
        height,
        raster.iter().map(|b| *b as f64 / 255.0).collect(),
    )
}

pub fn read_pgm(path: &Path) -> Result<ConditionImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes)
}

pub fn write_pgm(path: &Path, img: &ConditionImage) -> Result<()> {
    std::fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}
