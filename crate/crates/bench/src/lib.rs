//! Deterministic inputs shared by the benchmarks.

use photochat_core::{BinaryMask, RasterImage};

/// A `size x size` gradient photo.
pub fn photo(size: u32) -> RasterImage {
    RasterImage::from_fn_rgb(size, size, |x, y| {
        [(x * 255 / size) as u8, (y * 255 / size) as u8, ((x + y) * 127 / size) as u8]
    })
}

/// A centred disc covering roughly a tenth of the image.
pub fn blob(size: u32) -> BinaryMask {
    let c = size as f64 / 2.0;
    let r = size as f64 * 0.18;
    BinaryMask::from_fn(size, size, |x, y| {
        let (dx, dy) = (x as f64 - c, y as f64 - c);
        dx * dx + dy * dy <= r * r
    })
}

/// A reply naming `n` functions, with a short analysis.
pub fn reply(n: usize) -> String {
    let names: Vec<String> = (0..n).map(|i| format!("Function {i}")).collect();
    format!("Functions: [{}]\nAnalysis: the user asks for several edits.", names.join(", "))
}
