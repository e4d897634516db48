use super::{BinaryMask, ImageError, RasterImage, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InpaintStats {
    pub sweeps: usize,
    pub filled: usize,
}

/// Fills masked pixels by repeated 4-neighbour averaging.
///
/// Each sweep assigns every still-unknown pixel that touches at least one
/// known pixel the rounded mean of those known neighbours; the newly filled
/// pixels only become known once the sweep ends. Unmasked pixels are copied
/// through untouched.
pub fn naive_inpaint(image: &RasterImage, mask: &BinaryMask) -> Result<RasterImage> {
    naive_inpaint_with_stats(image, mask).map(|(img, _)| img)
}

pub fn naive_inpaint_with_stats(
    image: &RasterImage,
    mask: &BinaryMask,
) -> Result<(RasterImage, InpaintStats)> {
    image.check_mask(mask)?;
    let unknown_total = mask.count();
    if unknown_total == 0 {
        return Ok((
            image.clone(),
            InpaintStats {
                sweeps: 0,
                filled: 0,
            },
        ));
    }
    if unknown_total == image.pixel_count() {
        return Err(ImageError::FullMask);
    }

    let (w, h) = (image.width() as usize, image.height() as usize);
    let c = image.channels() as usize;
    let mut out = image.clone();
    let mut known: Vec<bool> = mask.bits().iter().map(|&b| !b).collect();
    let mut remaining = unknown_total;
    let mut sweeps = 0;
    let mut frontier: Vec<(usize, [u8; 3])> = Vec::new();

    while remaining > 0 {
        sweeps += 1;
        frontier.clear();
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if known[i] {
                    continue;
                }
                let mut sum = [0u32; 3];
                let mut n = 0u32;
                let mut visit = |j: usize| {
                    if known[j] {
                        for ch in 0..c {
                            sum[ch] += out.data[j * c + ch] as u32;
                        }
                        n += 1;
                    }
                };
                if x > 0 {
                    visit(i - 1);
                }
                if x + 1 < w {
                    visit(i + 1);
                }
                if y > 0 {
                    visit(i - w);
                }
                if y + 1 < h {
                    visit(i + w);
                }
                if n > 0 {
                    let mut px = [0u8; 3];
                    for ch in 0..c {
                        px[ch] = ((sum[ch] + n / 2) / n) as u8;
                    }
                    frontier.push((i, px));
                }
            }
        }
        // A non-full mask on a connected grid always has a frontier.
        debug_assert!(!frontier.is_empty());
        for &(i, px) in &frontier {
            out.data[i * c..i * c + c].copy_from_slice(&px[..c]);
            known[i] = true;
        }
        remaining -= frontier.len();
    }

    Ok((
        out,
        InpaintStats {
            sweeps,
            filled: unknown_total,
        },
    ))
}
