use serde::{Deserialize, Serialize};

use super::{BinaryMask, RasterImage, Result};

/// Local geometric warp applied inside a region, about the region centroid.
///
/// A scale above 1 magnifies along that axis; below 1 it shrinks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeWarp {
    pub scale_x: f64,
    pub scale_y: f64,
}

impl ShapeWarp {
    pub const ENLARGE_EYES: ShapeWarp = ShapeWarp {
        scale_x: 1.15,
        scale_y: 1.15,
    };
    pub const WIDEN_EYE_DISTANCE: ShapeWarp = ShapeWarp {
        scale_x: 1.12,
        scale_y: 1.0,
    };
    pub const SLIM_FACE: ShapeWarp = ShapeWarp {
        scale_x: 0.92,
        scale_y: 1.0,
    };
    pub const NARROW_NOSE: ShapeWarp = ShapeWarp {
        scale_x: 0.9,
        scale_y: 1.0,
    };
}

/// Resamples masked pixels from `centroid + (p - centroid) / scale` with
/// nearest-neighbour lookup. Pixels outside the mask are untouched; an empty
/// mask returns the input.
pub fn scale_region(image: &RasterImage, mask: &BinaryMask, warp: ShapeWarp) -> Result<RasterImage> {
    image.check_mask(mask)?;
    let Some((cx, cy)) = mask.centroid() else {
        return Ok(image.clone());
    };
    let (w, h) = image.dimensions();
    let mut out = image.clone();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let sx = cx + (x as f64 - cx) / warp.scale_x;
            let sy = cy + (y as f64 - cy) / warp.scale_y;
            let sx = sx.round().clamp(0.0, (w - 1) as f64) as u32;
            let sy = sy.round().clamp(0.0, (h - 1) as f64) as u32;
            let src = image.pixel(sx, sy).to_vec();
            out.pixel_mut(x, y).copy_from_slice(&src);
        }
    }
    Ok(out)
}
