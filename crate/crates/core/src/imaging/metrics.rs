use super::{ImageError, RasterImage, Result};

/// PSNR reported for identical images (and the ceiling for near-identical ones).
pub const PSNR_CAP_DB: f64 = 99.0;
pub const SSIM_WINDOW: usize = 8;
pub const SSIM_STRIDE: usize = 4;

const C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

fn check_shape(a: &RasterImage, b: &RasterImage) -> Result<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(ImageError::ShapeMismatch(a.shape(), b.shape()))
    }
}

/// Peak signal-to-noise ratio over all samples, in dB, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &RasterImage, b: &RasterImage) -> Result<f64> {
    check_shape(a, b)?;
    let sse: u64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum();
    if sse == 0 {
        return Ok(PSNR_CAP_DB);
    }
    let mse = sse as f64 / a.data().len() as f64;
    Ok((10.0 * (255.0f64 * 255.0 / mse).log10()).min(PSNR_CAP_DB))
}

/// Mean SSIM over 8x8 windows at stride 4 on the luma plane.
///
/// Images smaller than a window in either direction use a single window
/// spanning that whole dimension.
pub fn ssim(a: &RasterImage, b: &RasterImage) -> Result<f64> {
    check_shape(a, b)?;
    let (w, h) = (a.width() as usize, a.height() as usize);
    let la = a.luma();
    let lb = b.luma();
    let win_w = SSIM_WINDOW.min(w);
    let win_h = SSIM_WINDOW.min(h);

    let mut total = 0.0;
    let mut windows = 0usize;
    for y0 in (0..=h - win_h).step_by(SSIM_STRIDE) {
        for x0 in (0..=w - win_w).step_by(SSIM_STRIDE) {
            total += window_ssim(&la, &lb, w, x0, y0, win_w, win_h);
            windows += 1;
        }
    }
    Ok(total / windows as f64)
}

fn window_ssim(
    a: &[f64],
    b: &[f64],
    stride: usize,
    x0: usize,
    y0: usize,
    win_w: usize,
    win_h: usize,
) -> f64 {
    let n = (win_w * win_h) as f64;
    let (mut sa, mut sb) = (0.0, 0.0);
    for y in y0..y0 + win_h {
        for x in x0..x0 + win_w {
            sa += a[y * stride + x];
            sb += b[y * stride + x];
        }
    }
    let (ma, mb) = (sa / n, sb / n);
    let (mut vaa, mut vbb, mut vab) = (0.0, 0.0, 0.0);
    for y in y0..y0 + win_h {
        for x in x0..x0 + win_w {
            let da = a[y * stride + x] - ma;
            let db = b[y * stride + x] - mb;
            vaa += da * da;
            vbb += db * db;
            vab += da * db;
        }
    }
    let (vaa, vbb, vab) = (vaa / n, vbb / n, vab / n);
    ((2.0 * ma * mb + C1) * (2.0 * vab + C2)) / ((ma * ma + mb * mb + C1) * (vaa + vbb + C2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_identity_hits_cap() {
        let a = RasterImage::from_fn_rgb(5, 3, |x, y| [x as u8, y as u8, 3]);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP_DB);
    }

    #[test]
    fn psnr_black_vs_white_is_zero() {
        let a = RasterImage::filled_rgb(4, 4, [0; 3]);
        let b = RasterImage::filled_rgb(4, 4, [255; 3]);
        assert_eq!(psnr(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn psnr_shape_mismatch() {
        let a = RasterImage::filled_gray(2, 2, 0);
        let b = RasterImage::filled_rgb(2, 2, [0; 3]);
        assert!(matches!(psnr(&a, &b), Err(ImageError::ShapeMismatch(..))));
    }

    #[test]
    fn ssim_identity_is_exactly_one() {
        let a = RasterImage::from_fn_rgb(21, 13, |x, y| {
            [(x * 11 % 256) as u8, (y * 17 % 256) as u8, ((x ^ y) * 5) as u8]
        });
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn ssim_small_image_uses_one_window() {
        let a = RasterImage::filled_gray(3, 2, 10);
        let b = RasterImage::filled_gray(3, 2, 60);
        // Zero variances: (2*10*60 + C1) / (10^2 + 60^2 + C1).
        let expected = (1200.0 + C1) / (3700.0 + C1);
        assert!((ssim(&a, &b).unwrap() - expected).abs() < 1e-12);
    }
}
