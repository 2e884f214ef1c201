//! Polygon area and intersection-over-union on masks and polygons.

use crate::error::{Error, Result};
use crate::raster::{Polygon, Raster};
use crate::scalar::Real;

/// Default rasterization density for polygon IoU: 4 samples per unit (0.25 m in projected frames).
pub const DEFAULT_IOU_RESOLUTION: f64 = 4.0;

/// Absolute shoelace area.
pub fn polygon_area<T: Real>(p: &Polygon<T>) -> T {
    p.signed_area().abs()
}

/// `|A ∩ B| / |A ∪ B|` over the nonzero pixels of two same-sized masks; 1 when both are empty.
pub fn mask_iou(a: &Raster<u8>, b: &Raster<u8>) -> Result<f64> {
    a.ensure_same_dims(b)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.values().iter().zip(b.values()) {
        let (x, y) = (x != 0, y != 0);
        inter += usize::from(x && y);
        union += usize::from(x || y);
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

pub(crate) fn bboxes_intersect<T: Real>(a: &[T; 4], b: &[T; 4]) -> bool {
    a[0] < b[2] && b[0] < a[2] && a[1] < b[3] && b[1] < a[3]
}

/// IoU of two polygons, rasterized by pixel-center coverage onto a shared grid
/// anchored at their joint bounding box with `resolution` samples per unit.
pub fn polygon_iou<T: Real>(a: &Polygon<T>, b: &Polygon<T>, resolution: T) -> Result<f64> {
    if !(resolution > T::zero()) || !resolution.is_finite() {
        return Err(Error::param("resolution", "must be positive and finite"));
    }
    for (index, p) in [a, b].into_iter().enumerate() {
        if polygon_area(p) == T::zero() {
            return Err(Error::DegeneratePolygon {
                index,
                reason: "zero area",
            });
        }
    }
    let (ba, bb) = (a.bbox(), b.bbox());
    if !bboxes_intersect(&ba, &bb) {
        return Ok(0.0);
    }
    let (x0, y0) = (ba[0].min(bb[0]), ba[1].min(bb[1]));
    let (x1, y1) = (ba[2].max(bb[2]), ba[3].max(bb[3]));
    let width = ((x1 - x0) * resolution)
        .ceil()
        .to_usize()
        .unwrap_or(0)
        .max(1);
    let height = ((y1 - y0) * resolution)
        .ceil()
        .to_usize()
        .unwrap_or(0)
        .max(1);
    let to_grid = |[x, y]: [T; 2]| [(x - x0) * resolution, (y - y0) * resolution];
    let ga = a.transform(to_grid)?;
    let gb = b.transform(to_grid)?;

    let mut mask = vec![0u8; height * width];
    ga.for_each_covered_pixel(height, width, |r, c| mask[r * width + c] |= 1);
    gb.for_each_covered_pixel(height, width, |r, c| mask[r * width + c] |= 2);
    let (mut inter, mut union) = (0usize, 0usize);
    for &m in &mask {
        inter += usize::from(m == 3);
        union += usize::from(m != 0);
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}
