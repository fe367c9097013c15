use crate::conditioning::ConditionImage;
use crate::error::{Error, Result};

/// Mirror index without repeating the border pixel: -1 → 1, n → n-2.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    r as usize
}

/// Sobel gradient magnitude normalized by its maximum; flat images map to zero.
pub fn sobel_edges(img: &ConditionImage) -> Result<ConditionImage> {
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return Err(Error::contract(format!(
            "sobel needs at least 3x3, got {w}x{h}"
        )));
    }
    let mut mag = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let at = |dx: isize, dy: isize| {
                img.get(reflect(x as isize + dx, w), reflect(y as isize + dy, h))
            };
            // Each side is summed in the same order so flat patches cancel exactly.
            let side = |a: f64, b: f64, c: f64| a + 2.0 * b + c;
            let gx = side(at(1, -1), at(1, 0), at(1, 1)) - side(at(-1, -1), at(-1, 0), at(-1, 1));
            let gy = side(at(-1, 1), at(0, 1), at(1, 1)) - side(at(-1, -1), at(0, -1), at(1, -1));
            mag.push((gx * gx + gy * gy).sqrt());
        }
    }
    let max = mag.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        mag.iter_mut().for_each(|m| *m = (*m / max).min(1.0));
    }
    ConditionImage::new(w, h, mag)
}
