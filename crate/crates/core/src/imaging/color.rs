use serde::{Deserialize, Serialize};

use super::{BinaryMask, ImageError, RasterImage, Result};

/// Sample units added per brightness degree.
pub const BRIGHTNESS_STEP: i32 = 12;
pub const MAX_BRIGHTNESS_DEGREE: i32 = 10;
/// Chroma blend ratio used by lipstick recoloring.
pub const RECOLOR_RATIO: f64 = 0.6;
/// Fill for pixels outside a retained object.
pub const RETAIN_BACKGROUND: u8 = 255;

/// The five photo filters. Each is an integer 3x3 matrix in thousandths plus
/// a per-channel offset, applied as `out = clamp(round(M * rgb / 1000) + offset)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Filter {
    Grayscale,
    Sepia,
    Warm,
    Cool,
    Vintage,
}

impl Filter {
    pub const ALL: [Filter; 5] = [
        Filter::Grayscale,
        Filter::Sepia,
        Filter::Warm,
        Filter::Cool,
        Filter::Vintage,
    ];

    pub fn matrix(self) -> [[i32; 3]; 3] {
        match self {
            Filter::Grayscale => [[299, 587, 114], [299, 587, 114], [299, 587, 114]],
            Filter::Sepia => [[393, 769, 189], [349, 686, 168], [272, 534, 131]],
            Filter::Warm => [[1100, 0, 0], [0, 1000, 0], [0, 0, 900]],
            Filter::Cool => [[900, 0, 0], [0, 1000, 0], [0, 0, 1100]],
            Filter::Vintage => [[700, 250, 50], [150, 700, 150], [100, 200, 500]],
        }
    }

    pub fn offset(self) -> [i32; 3] {
        match self {
            Filter::Grayscale | Filter::Sepia => [0, 0, 0],
            Filter::Warm => [8, 4, 0],
            Filter::Cool => [0, 4, 8],
            Filter::Vintage => [18, 10, 0],
        }
    }
}

fn clamp_u8(v: i32) -> u8 {
    v.clamp(0, 255) as u8
}

/// Non-negative integer division rounding half up; negative sums round toward
/// the nearest with ties away from zero.
fn div_round(num: i32, den: i32) -> i32 {
    if num >= 0 {
        (num + den / 2) / den
    } else {
        -((-num + den / 2) / den)
    }
}

pub fn apply_filter(image: &RasterImage, filter: Filter) -> Result<RasterImage> {
    image.require_rgb()?;
    let m = filter.matrix();
    let off = filter.offset();
    let mut out = image.clone();
    for p in out.data.chunks_exact_mut(3) {
        let rgb = [p[0] as i32, p[1] as i32, p[2] as i32];
        for (c, row) in m.iter().enumerate() {
            let acc = row[0] * rgb[0] + row[1] * rgb[1] + row[2] * rgb[2];
            p[c] = clamp_u8(div_round(acc, 1000) + off[c]);
        }
    }
    Ok(out)
}

/// Adds `degree * BRIGHTNESS_STEP` to every sample inside `mask` (the whole
/// image when absent), saturating at 0 and 255.
pub fn adjust_brightness(
    image: &RasterImage,
    mask: Option<&BinaryMask>,
    degree: i32,
) -> Result<RasterImage> {
    if degree.abs() > MAX_BRIGHTNESS_DEGREE {
        return Err(ImageError::DegreeOutOfRange(degree));
    }
    if let Some(m) = mask {
        image.check_mask(m)?;
    }
    let delta = degree * BRIGHTNESS_STEP;
    let mut out = image.clone();
    if delta == 0 {
        return Ok(out);
    }
    let c = image.channels() as usize;
    for (i, px) in out.data.chunks_exact_mut(c).enumerate() {
        if mask.is_some_and(|m| !m.bits[i]) {
            continue;
        }
        for s in px.iter_mut() {
            *s = clamp_u8(*s as i32 + delta);
        }
    }
    Ok(out)
}

/// A named lipstick color.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shade {
    pub name: String,
    pub rgb: [u8; 3],
}

impl Shade {
    pub fn new(name: impl Into<String>, rgb: [u8; 3]) -> Self {
        Self {
            name: name.into(),
            rgb,
        }
    }
}

// BT.601 full-range YCbCr.
fn to_ycbcr(rgb: [f64; 3]) -> [f64; 3] {
    let [r, g, b] = rgb;
    [
        0.299 * r + 0.587 * g + 0.114 * b,
        128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b,
        128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b,
    ]
}

fn from_ycbcr(ycc: [f64; 3]) -> [f64; 3] {
    let [y, cb, cr] = ycc;
    [
        y + 1.402 * (cr - 128.0),
        y - 0.344136 * (cb - 128.0) - 0.714136 * (cr - 128.0),
        y + 1.772 * (cb - 128.0),
    ]
}

/// Blends the chroma of each masked pixel toward `shade` at [`RECOLOR_RATIO`],
/// keeping the pixel's own luma.
pub fn recolor_region(image: &RasterImage, mask: &BinaryMask, shade: &Shade) -> Result<RasterImage> {
    recolor_region_with_ratio(image, mask, shade, RECOLOR_RATIO)
}

pub fn recolor_region_with_ratio(
    image: &RasterImage,
    mask: &BinaryMask,
    shade: &Shade,
    ratio: f64,
) -> Result<RasterImage> {
    image.require_rgb()?;
    image.check_mask(mask)?;
    let target = to_ycbcr(shade.rgb.map(f64::from));
    let mut out = image.clone();
    for (i, p) in out.data.chunks_exact_mut(3).enumerate() {
        if !mask.bits[i] {
            continue;
        }
        let [y, cb, cr] = to_ycbcr([p[0] as f64, p[1] as f64, p[2] as f64]);
        let blended = [
            y,
            (1.0 - ratio) * cb + ratio * target[1],
            (1.0 - ratio) * cr + ratio * target[2],
        ];
        let rgb = from_ycbcr(blended);
        for c in 0..3 {
            p[c] = rgb[c].round().clamp(0.0, 255.0) as u8;
        }
    }
    Ok(out)
}

/// Keeps masked pixels and paints everything else [`RETAIN_BACKGROUND`].
pub fn retain_object(image: &RasterImage, mask: &BinaryMask) -> Result<RasterImage> {
    image.check_mask(mask)?;
    let c = image.channels() as usize;
    let mut out = image.clone();
    for (i, px) in out.data.chunks_exact_mut(c).enumerate() {
        if !mask.bits[i] {
            px.fill(RETAIN_BACKGROUND);
        }
    }
    Ok(out)
}
