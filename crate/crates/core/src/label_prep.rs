//! Training-target preparation: instance erosion, dense-class remapping, edge
//! extraction and the two boundary-emphasising pixel weighting schemes.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::postprocess::label_regions;
use crate::raster::{Raster, RasterKind};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MorphMode {
    Erode,
    Dilate,
}

/// 3×3 binary erosion or dilation; pixels outside the image count as background.
pub fn morph(mask: &Raster<u8>, mode: MorphMode) -> Result<Raster<u8>> {
    mask.ensure_binary()?;
    let (h, w) = mask.dims();
    let v = mask.values();
    let mut out = vec![0u8; h * w];
    for r in 0..h {
        for c in 0..w {
            let win = Window::new(h, w, r, c);
            out[r * w + c] = u8::from(match mode {
                MorphMode::Erode => win.full && win.all(|i| v[i] != 0, w),
                MorphMode::Dilate => win.any(|i| v[i] != 0, w),
            });
        }
    }
    Ok(Raster::from_parts(RasterKind::Mask, h, w, out))
}

/// The in-bounds part of the 3×3 window around a pixel.
pub(crate) struct Window {
    pub rows: std::ops::Range<usize>,
    pub cols: std::ops::Range<usize>,
    /// All nine positions lie inside the image.
    pub full: bool,
}

impl Window {
    pub(crate) fn new(h: usize, w: usize, r: usize, c: usize) -> Self {
        Self {
            rows: r.saturating_sub(1)..(r + 2).min(h),
            cols: c.saturating_sub(1)..(c + 2).min(w),
            full: r > 0 && c > 0 && r + 1 < h && c + 1 < w,
        }
    }

    pub(crate) fn all(&self, f: impl Fn(usize) -> bool, w: usize) -> bool {
        for rr in self.rows.clone() {
            for i in rr * w + self.cols.start..rr * w + self.cols.end {
                if !f(i) {
                    return false;
                }
            }
        }
        true
    }

    pub(crate) fn any(&self, f: impl Fn(usize) -> bool, w: usize) -> bool {
        !self.all(|i| !f(i), w)
    }
}

/// Splits a label raster into instances: 4-connected regions of equal nonzero class.
pub fn instances_from_labels(labels: &Raster<u8>) -> Raster<u32> {
    let v = labels.values();
    label_regions(
        labels.height(),
        labels.width(),
        |i| v[i] != 0,
        |a, b| v[a] == v[b],
    )
    .0
}

/// Erodes every instance independently with a 3×3 element: a pixel keeps its
/// id only if all eight neighbours exist and carry the same id.
pub fn erode_instances(ids: &Raster<u32>) -> Raster<u32> {
    let (h, w) = ids.dims();
    let v = ids.values();
    let mut out = vec![0u32; h * w];
    for r in 0..h {
        for c in 0..w {
            let id = v[r * w + c];
            let win = Window::new(h, w, r, c);
            if id != 0 && win.full && win.all(|i| v[i] == id, w) {
                out[r * w + c] = id;
            }
        }
    }
    Raster::from_parts(RasterKind::InstanceId, h, w, out)
}

/// Per-instance erosion of a label raster; instances are taken from
/// [`instances_from_labels`] and class values are preserved.
pub fn erode_labels(labels: &Raster<u8>) -> Raster<u8> {
    let eroded = erode_instances(&instances_from_labels(labels));
    let data = eroded
        .values()
        .iter()
        .zip(labels.values())
        .map(|(&id, &class)| if id != 0 { class } else { 0 })
        .collect();
    Raster::from_parts(RasterKind::Label, labels.height(), labels.width(), data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenseMode {
    /// Dense pixels become ordinary building pixels.
    ToBuilding,
    /// Dense pixels become background and are flagged in the ignore mask.
    ToIgnore,
}

/// Remaps the dense class; returns the new labels and a mask of ignored pixels.
pub fn remap_dense(labels: &Raster<u8>, mode: DenseMode) -> (Raster<u8>, Raster<u8>) {
    let (h, w) = labels.dims();
    let mut out = Vec::with_capacity(h * w);
    let mut ignore = vec![0u8; h * w];
    for (i, &v) in labels.values().iter().enumerate() {
        out.push(match (v, mode) {
            (2, DenseMode::ToBuilding) => 1,
            (2, DenseMode::ToIgnore) => {
                ignore[i] = 1;
                0
            }
            (v, _) => v,
        });
    }
    (
        Raster::from_parts(labels.kind(), h, w, out),
        Raster::from_parts(RasterKind::Mask, h, w, ignore),
    )
}

/// Marks foreground pixels with a 4-neighbour that is background, another
/// instance, or outside the image.
pub fn edge_image(ids: &Raster<u32>) -> Raster<u8> {
    let (h, w) = ids.dims();
    let v = ids.values();
    let mut out = vec![0u8; h * w];
    for r in 0..h {
        for c in 0..w {
            let id = v[r * w + c];
            if id == 0 {
                continue;
            }
            let differs = |rr: Option<usize>, cc: Option<usize>| match (rr, cc) {
                (Some(rr), Some(cc)) if rr < h && cc < w => v[rr * w + cc] != id,
                _ => true,
            };
            let edge = differs(r.checked_sub(1), Some(c))
                || differs(Some(r + 1), Some(c))
                || differs(Some(r), c.checked_sub(1))
                || differs(Some(r), Some(c + 1));
            out[r * w + c] = u8::from(edge);
        }
    }
    Raster::from_parts(RasterKind::Mask, h, w, out)
}

/// Parameters of the Gaussian-convolved edge weighting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightParams<T> {
    /// Kernel length scale in pixels.
    pub sigma: T,
    /// Multiplier applied to the convolved edge image.
    pub scale: T,
    /// Base weight every pixel receives.
    pub floor: T,
}

impl<T: Real> Default for WeightParams<T> {
    fn default() -> Self {
        Self {
            sigma: T::lit(3.0),
            scale: T::lit(200.0),
            floor: T::one(),
        }
    }
}

impl<T: Real> WeightParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > T::zero()) || !self.sigma.is_finite() {
            return Err(Error::param("sigma", "must be positive"));
        }
        if !(self.scale >= T::zero()) || !self.scale.is_finite() {
            return Err(Error::param("scale", "must be non-negative"));
        }
        if !(self.floor >= T::zero()) || !self.floor.is_finite() {
            return Err(Error::param("floor", "must be non-negative"));
        }
        Ok(())
    }
}

/// Truncation radius `⌈3σ⌉` of the discrete Gaussian.
pub fn gaussian_radius<T: Real>(sigma: T) -> usize {
    (T::lit(3.0) * sigma)
        .ceil()
        .to_usize()
        .expect("finite sigma")
}

/// One half of the normalised 1-D Gaussian: taps for offsets `0..=radius`.
/// The full kernel (both sides) sums to one, so the separable 2-D kernel does too.
pub fn gaussian_taps<T: Real>(sigma: T) -> Vec<T> {
    let radius = gaussian_radius(sigma);
    let two_var = T::lit(2.0) * sigma * sigma;
    let raw: Vec<T> = (0..=radius)
        .map(|d| {
            let d = T::from_count(d);
            (-(d * d) / two_var).exp()
        })
        .collect();
    let total = raw[0] + T::lit(2.0) * raw[1..].iter().copied().fold(T::zero(), |a, b| a + b);
    raw.into_iter().map(|g| g / total).collect()
}

/// `floor + scale · (G_σ ∗ E)` with zero padding.
///
/// Because `E` is binary, each output pixel is a sum of kernel taps
/// `g(|dy|)·g(|dx|)`. The taps are tallied by the unordered offset pair
/// `{|dy|, |dx|}` and summed in a fixed order, which makes the result
/// bit-identical under any of the eight square symmetries.
pub fn gaussian_edge_weights<T: Real>(
    edges: &Raster<u8>,
    params: &WeightParams<T>,
) -> Result<Raster<T>> {
    params.validate()?;
    edges.ensure_binary()?;
    let taps = gaussian_taps(params.sigma);
    let radius = taps.len() - 1;
    let pair_index = |i: usize, j: usize| j * (j + 1) / 2 + i; // i <= j
    let mut products = vec![T::zero(); pair_index(radius, radius) + 1];
    for j in 0..=radius {
        for i in 0..=j {
            products[pair_index(i, j)] = taps[i] * taps[j];
        }
    }
    let (h, w) = edges.dims();
    let e = edges.values();
    let rows: Vec<Vec<T>> = (0..h)
        .into_par_iter()
        .map(|r| {
            let mut counts = vec![0u32; products.len()];
            let mut row = Vec::with_capacity(w);
            let r_lo = r.saturating_sub(radius);
            let r_hi = (r + radius).min(h.saturating_sub(1));
            for c in 0..w {
                counts.iter_mut().for_each(|n| *n = 0);
                let c_lo = c.saturating_sub(radius);
                let c_hi = (c + radius).min(w - 1);
                let mut any = false;
                for rr in r_lo..=r_hi {
                    let dy = rr.abs_diff(r);
                    let line = &e[rr * w..rr * w + w];
                    for (cc, &v) in line.iter().enumerate().take(c_hi + 1).skip(c_lo) {
                        if v != 0 {
                            let dx = cc.abs_diff(c);
                            counts[pair_index(dy.min(dx), dy.max(dx))] += 1;
                            any = true;
                        }
                    }
                }
                let conv = if any {
                    counts
                        .iter()
                        .zip(&products)
                        .filter(|(&n, _)| n != 0)
                        .fold(T::zero(), |acc, (&n, &k)| acc + T::lit(n as f64) * k)
                } else {
                    T::zero()
                };
                row.push(params.floor + params.scale * conv);
            }
            row
        })
        .collect();
    Ok(Raster::from_parts(
        RasterKind::Weight,
        h,
        w,
        rows.into_iter().flatten().collect(),
    ))
}

/// Default length scale for [`unet_distance_weights`].
pub const DEFAULT_UNET_SIGMA: f64 = 5.0;

/// `exp(−(d₁ + d₂) / 2σ²)` where `d₁`, `d₂` are Euclidean distances from each
/// pixel center to the nearest and second-nearest instance. A missing
/// instance contributes infinite distance, so images with fewer than two
/// instances weigh to zero.
pub fn unet_distance_weights<T: Real>(ids: &Raster<u32>, sigma: T) -> Result<Raster<T>> {
    if !(sigma > T::zero()) || !sigma.is_finite() {
        return Err(Error::param("sigma", "must be positive"));
    }
    let (h, w) = ids.dims();
    let max_id = ids.values().iter().copied().max().unwrap_or(0);
    let mut best = vec![[f64::INFINITY; 2]; h * w];
    for id in 1..=max_id {
        if !ids.values().contains(&id) {
            continue;
        }
        let sq = squared_distance_transform(h, w, |i| ids.values()[i] == id);
        for (b, &d) in best.iter_mut().zip(&sq) {
            if d < b[0] {
                b[1] = b[0];
                b[0] = d;
            } else if d < b[1] {
                b[1] = d;
            }
        }
    }
    let data = best
        .iter()
        .map(|&[d1, d2]| unet_weight(T::lit(d1.sqrt()), T::lit(d2.sqrt()), sigma))
        .collect();
    Ok(Raster::from_parts(RasterKind::Weight, h, w, data))
}

/// Weight of a pixel at distances `d1`, `d2` from its two nearest instances.
pub fn unet_weight<T: Real>(d1: T, d2: T, sigma: T) -> T {
    let sum = d1 + d2;
    if sum.is_infinite() {
        T::zero()
    } else {
        (-sum / (T::lit(2.0) * sigma * sigma)).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightScheme {
    /// Gaussian-convolved edge image.
    Gaussian,
    /// Distance to the two nearest instances.
    Unet,
}

/// Label raster to per-pixel loss weights: remap the dense class, split
/// touching instances by erosion, then apply `floor + scale · term` where the
/// term is the convolved edge image or the two-instance distance weight.
/// Pixels flagged by the dense remap get weight 0.
pub fn weight_map<T: Real>(
    labels: &Raster<u8>,
    scheme: WeightScheme,
    params: &WeightParams<T>,
    dense: DenseMode,
) -> Result<Raster<T>> {
    labels.ensure_kind(RasterKind::Label)?;
    params.validate()?;
    let (labels, ignore) = remap_dense(labels, dense);
    let ids = erode_instances(&instances_from_labels(&labels));
    let term = match scheme {
        WeightScheme::Gaussian => {
            let unit = WeightParams {
                sigma: params.sigma,
                scale: T::one(),
                floor: T::zero(),
            };
            gaussian_edge_weights(&edge_image(&ids), &unit)?
        }
        WeightScheme::Unet => unet_distance_weights(&ids, params.sigma)?,
    };
    let data = term
        .values()
        .iter()
        .zip(ignore.values())
        .map(|(&t, &skip)| {
            if skip != 0 {
                T::zero()
            } else {
                params.floor + params.scale * t
            }
        })
        .collect();
    Ok(Raster::from_parts(
        RasterKind::Weight,
        labels.height(),
        labels.width(),
        data,
    ))
}

/// Exact squared Euclidean distance from each pixel to the nearest pixel where
/// `inside` holds (two-pass lower-envelope transform). Infinite when no pixel is inside.
pub fn squared_distance_transform(h: usize, w: usize, inside: impl Fn(usize) -> bool) -> Vec<f64> {
    let mut grid: Vec<f64> = (0..h * w)
        .map(|i| if inside(i) { 0.0 } else { f64::INFINITY })
        .collect();
    let mut f = Vec::new();
    let mut out = Vec::new();
    for c in 0..w {
        f.clear();
        f.extend((0..h).map(|r| grid[r * w + c]));
        lower_envelope(&f, &mut out);
        for r in 0..h {
            grid[r * w + c] = out[r];
        }
    }
    for r in 0..h {
        f.clear();
        f.extend_from_slice(&grid[r * w..(r + 1) * w]);
        lower_envelope(&f, &mut out);
        grid[r * w..(r + 1) * w].copy_from_slice(&out);
    }
    grid
}

/// 1-D `min_q (f[q] + (p − q)²)` over finite entries of `f`.
fn lower_envelope(f: &[f64], out: &mut Vec<f64>) {
    let n = f.len();
    out.clear();
    out.resize(n, f64::INFINITY);
    let mut v: Vec<usize> = Vec::with_capacity(n);
    let mut z: Vec<f64> = Vec::with_capacity(n + 1);
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        let qf = q as f64;
        loop {
            match v.last() {
                None => {
                    v.push(q);
                    z.clear();
                    z.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    let pf = p as f64;
                    let s = ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * qf - 2.0 * pf);
                    if s <= *z.last().expect("z tracks v") {
                        v.pop();
                        z.pop();
                    } else {
                        v.push(q);
                        z.push(s);
                        break;
                    }
                }
            }
        }
    }
    if v.is_empty() {
        return;
    }
    let mut k = 0;
    for (p, slot) in out.iter_mut().enumerate() {
        let pf = p as f64;
        while k + 1 < v.len() && z[k + 1] < pf {
            k += 1;
        }
        let d = pf - v[k] as f64;
        *slot = f[v[k]] + d * d;
    }
}
