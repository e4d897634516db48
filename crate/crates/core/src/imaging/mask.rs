use super::{BinaryMask, ImageError, Result};

/// Morphological dilation with a `(2r+1) x (2r+1)` square, clipped at the
/// borders. Done as a horizontal pass followed by a vertical pass.
pub fn dilate_mask(mask: &BinaryMask, radius: u32) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let r = radius as usize;

    let mut horizontal = vec![false; w * h];
    for y in 0..h {
        let row = &mask.bits[y * w..(y + 1) * w];
        // Prefix counts give each window's population in O(1).
        let mut prefix = vec![0usize; w + 1];
        for x in 0..w {
            prefix[x + 1] = prefix[x] + row[x] as usize;
        }
        for x in 0..w {
            let lo = x.saturating_sub(r);
            let hi = (x + r + 1).min(w);
            horizontal[y * w + x] = prefix[hi] > prefix[lo];
        }
    }

    let mut bits = vec![false; w * h];
    let mut column = vec![0usize; h + 1];
    for x in 0..w {
        for y in 0..h {
            column[y + 1] = column[y] + horizontal[y * w + x] as usize;
        }
        for y in 0..h {
            let lo = y.saturating_sub(r);
            let hi = (y + r + 1).min(h);
            bits[y * w + x] = column[hi] > column[lo];
        }
    }
    BinaryMask::new(mask.width(), mask.height(), bits).expect("same dimensions")
}

fn check_same(a: &BinaryMask, b: &BinaryMask) -> Result<()> {
    if a.dimensions() == b.dimensions() {
        Ok(())
    } else {
        Err(ImageError::DimensionMismatch(
            a.width(),
            a.height(),
            b.width(),
            b.height(),
        ))
    }
}

/// Number of pixels set in both masks.
pub fn overlap_area(a: &BinaryMask, b: &BinaryMask) -> Result<usize> {
    check_same(a, b)?;
    Ok(a.bits.iter().zip(&b.bits).filter(|(&x, &y)| x && y).count())
}

/// Intersection over union; two empty masks score 0.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    check_same(a, b)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.bits.iter().zip(&b.bits) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radius_zero_is_identity() {
        let m = BinaryMask::from_fn(7, 5, |x, y| (x * y) % 4 == 1);
        assert_eq!(dilate_mask(&m, 0), m);
    }

    #[test]
    fn single_bit_grows_to_block() {
        let mut m = BinaryMask::empty(5, 5);
        m.set(2, 2, true);
        let d = dilate_mask(&m, 1);
        assert_eq!(d, BinaryMask::rect(5, 5, 1, 1, 3, 3));
    }

    #[test]
    fn dilation_clips_at_corner() {
        let mut m = BinaryMask::empty(4, 4);
        m.set(0, 0, true);
        assert_eq!(dilate_mask(&m, 2), BinaryMask::rect(4, 4, 0, 0, 3, 3));
    }

    #[test]
    fn overlap_basics() {
        let a = BinaryMask::rect(8, 8, 0, 0, 4, 4);
        let b = BinaryMask::rect(8, 8, 4, 4, 4, 4);
        assert_eq!(overlap_area(&a, &a).unwrap(), a.count());
        assert_eq!(overlap_area(&a, &b).unwrap(), 0);
        assert!(overlap_area(&a, &BinaryMask::empty(4, 8)).is_err());
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&BinaryMask::empty(2, 2), &BinaryMask::empty(2, 2)).unwrap(), 0.0);
    }
}
