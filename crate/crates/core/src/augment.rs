//! Seeded augmentations applied consistently to image, labels and weights.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::raster::{Raster, RasterKind};
use crate::scalar::Real;

/// Default crop size for training patches.
pub const DEFAULT_CROP: usize = 448;
/// Default colour jitter magnitude for every channel property.
pub const DEFAULT_JITTER: f64 = 0.1;

/// One training example.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    /// RGB channels in `[0, 1]`.
    pub image: [Raster<T>; 3],
    pub labels: Raster<u8>,
    pub weights: Raster<T>,
    pub rng_seed: u64,
}

impl<T: Real> Sample<T> {
    pub fn new(
        image: [Raster<T>; 3],
        labels: Raster<u8>,
        weights: Raster<T>,
        rng_seed: u64,
    ) -> Result<Self> {
        for ch in &image {
            labels.ensure_same_dims(ch)?;
        }
        labels.ensure_same_dims(&weights)?;
        Ok(Self {
            image,
            labels,
            weights,
            rng_seed,
        })
    }

    /// The sample's own generator.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.rng_seed)
    }

    pub fn dims(&self) -> (usize, usize) {
        self.labels.dims()
    }

    fn map_all(
        &self,
        mut f_img: impl FnMut(&Raster<T>) -> Result<Raster<T>>,
        f_lab: impl FnOnce(&Raster<u8>) -> Result<Raster<u8>>,
        f_w: impl FnOnce(&Raster<T>) -> Result<Raster<T>>,
    ) -> Result<Self> {
        Ok(Self {
            image: [
                f_img(&self.image[0])?,
                f_img(&self.image[1])?,
                f_img(&self.image[2])?,
            ],
            labels: f_lab(&self.labels)?,
            weights: f_w(&self.weights)?,
            rng_seed: self.rng_seed,
        })
    }
}

/// Applies the `k`-th square symmetry (see [`Raster::dihedral`]) to every raster.
pub fn dihedral<T: Real>(sample: &Sample<T>, k: u8) -> Result<Sample<T>> {
    sample.map_all(|r| r.dihedral(k), |r| r.dihedral(k), |r| r.dihedral(k))
}

/// Cuts the same `out_size`×`out_size` window out of every raster; the
/// offset is uniform over all valid positions.
pub fn random_crop<T: Real>(
    sample: &Sample<T>,
    out_size: usize,
    rng: &mut impl Rng,
) -> Result<Sample<T>> {
    let (h, w) = sample.dims();
    if out_size == 0 || out_size > h || out_size > w {
        return Err(Error::param(
            "out_size",
            format!("{out_size} does not fit in {h}x{w}"),
        ));
    }
    let (row, col) = crop_offset(h, w, out_size, rng);
    sample.map_all(
        |r| r.crop(row, col, out_size, out_size),
        |r| r.crop(row, col, out_size, out_size),
        |r| r.crop(row, col, out_size, out_size),
    )
}

/// Top-left corner drawn by [`random_crop`].
pub fn crop_offset(h: usize, w: usize, out_size: usize, rng: &mut impl Rng) -> (usize, usize) {
    let row = rng.gen_range(0..=h - out_size);
    let col = rng.gen_range(0..=w - out_size);
    (row, col)
}

/// Jitter magnitudes; factors are drawn from `[1 − m, 1 + m]`, hue shifts
/// from `[−m, m]` turns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterMagnitudes {
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub hue: f64,
}

impl Default for JitterMagnitudes {
    fn default() -> Self {
        Self {
            brightness: DEFAULT_JITTER,
            contrast: DEFAULT_JITTER,
            saturation: DEFAULT_JITTER,
            hue: DEFAULT_JITTER,
        }
    }
}

impl JitterMagnitudes {
    pub fn none() -> Self {
        Self {
            brightness: 0.0,
            contrast: 0.0,
            saturation: 0.0,
            hue: 0.0,
        }
    }
}

/// Drawn jitter parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterFactors {
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub hue_shift: f64,
}

impl JitterFactors {
    pub fn draw(m: &JitterMagnitudes, rng: &mut impl Rng) -> Result<Self> {
        for (name, v) in [
            ("brightness", m.brightness),
            ("contrast", m.contrast),
            ("saturation", m.saturation),
            ("hue", m.hue),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::param(name, "magnitude must be >= 0"));
            }
        }
        // Always four draws so the stream position is independent of the magnitudes.
        let mut factor = |m: f64| 1.0 + m * rng.gen_range(-1.0..=1.0);
        let brightness = factor(m.brightness);
        let contrast = factor(m.contrast);
        let saturation = factor(m.saturation);
        let hue_shift = factor(m.hue) - 1.0;
        Ok(Self {
            brightness,
            contrast,
            saturation,
            hue_shift,
        })
    }
}

/// Random brightness, contrast, saturation and hue changes; output clamped to `[0, 1]`.
pub fn color_jitter<T: Real>(
    image: &[Raster<T>; 3],
    magnitudes: &JitterMagnitudes,
    rng: &mut impl Rng,
) -> Result<[Raster<T>; 3]> {
    let f = JitterFactors::draw(magnitudes, rng)?;
    apply_jitter(image, &f)
}

/// Applies fixed jitter factors in the order brightness, contrast, saturation, hue.
pub fn apply_jitter<T: Real>(image: &[Raster<T>; 3], f: &JitterFactors) -> Result<[Raster<T>; 3]> {
    image[0].ensure_same_dims(&image[1])?;
    image[0].ensure_same_dims(&image[2])?;
    let n = image[0].len();
    let mut px: Vec<[f64; 3]> = (0..n)
        .map(|i| {
            [
                image[0].values()[i].as_f64(),
                image[1].values()[i].as_f64(),
                image[2].values()[i].as_f64(),
            ]
        })
        .collect();

    if f.brightness != 1.0 {
        for p in &mut px {
            for v in p.iter_mut() {
                *v *= f.brightness;
            }
        }
    }
    if f.contrast != 1.0 && n > 0 {
        let mean = px.iter().map(|p| luma(*p)).sum::<f64>() / n as f64;
        for p in &mut px {
            for v in p.iter_mut() {
                *v = mean + (*v - mean) * f.contrast;
            }
        }
    }
    if f.saturation != 1.0 || f.hue_shift != 0.0 {
        for p in &mut px {
            let [h, s, v] = rgb_to_hsv(*p);
            let s = (s * f.saturation).clamp(0.0, 1.0);
            let h = (h + f.hue_shift).rem_euclid(1.0);
            *p = hsv_to_rgb([h, s, v]);
        }
    }
    let channel = |k: usize| {
        Raster::from_parts(
            image[k].kind(),
            image[k].height(),
            image[k].width(),
            px.iter().map(|p| T::lit(p[k].clamp(0.0, 1.0))).collect(),
        )
    };
    Ok([channel(0), channel(1), channel(2)])
}

fn luma([r, g, b]: [f64; 3]) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

/// Hue in turns.
fn rgb_to_hsv([r, g, b]: [f64; 3]) -> [f64; 3] {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / delta).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    [h, s, max]
}

fn hsv_to_rgb([h, s, v]: [f64; 3]) -> [f64; 3] {
    if s == 0.0 {
        return [v, v, v];
    }
    let h6 = (h * 6.0).rem_euclid(6.0);
    let sector = h6.floor();
    let frac = h6 - sector;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * frac);
    let t = v * (1.0 - s * (1.0 - frac));
    match sector as u8 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// Which image border a black mask hangs from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    Top,
    Bottom,
    Left,
    Right,
}

/// Full-length strip of `depth` pixels along one image border.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskRect {
    pub edge: Edge,
    pub depth: usize,
}

impl MaskRect {
    /// `(row, col, height, width)` of the strip in an `h`×`w` image.
    pub fn bounds(&self, h: usize, w: usize) -> (usize, usize, usize, usize) {
        match self.edge {
            Edge::Top => (0, 0, self.depth.min(h), w),
            Edge::Bottom => (h - self.depth.min(h), 0, self.depth.min(h), w),
            Edge::Left => (0, 0, h, self.depth.min(w)),
            Edge::Right => (0, w - self.depth.min(w), h, self.depth.min(w)),
        }
    }

    pub fn area(&self, h: usize, w: usize) -> usize {
        let (_, _, rh, rw) = self.bounds(h, w);
        rh * rw
    }
}

/// Draws an edge-anchored strip covering at most `max_fraction` of the image.
pub fn draw_black_mask(
    h: usize,
    w: usize,
    max_fraction: f64,
    rng: &mut impl Rng,
) -> Result<MaskRect> {
    if !(max_fraction > 0.0 && max_fraction < 1.0) {
        return Err(Error::param("max_fraction", "must be in (0, 1)"));
    }
    let edge = match rng.gen_range(0..4u8) {
        0 => Edge::Top,
        1 => Edge::Bottom,
        2 => Edge::Left,
        _ => Edge::Right,
    };
    let span = match edge {
        Edge::Top | Edge::Bottom => h,
        Edge::Left | Edge::Right => w,
    };
    let max_depth = (max_fraction * span as f64).floor() as usize;
    let depth = rng.gen_range(0..=max_depth);
    Ok(MaskRect { edge, depth })
}

/// Zeroes all image channels and the weights inside `rect`; labels are untouched.
pub fn apply_black_mask<T: Real>(sample: &Sample<T>, rect: &MaskRect) -> Sample<T> {
    let (h, w) = sample.dims();
    let (r0, c0, rh, rw) = rect.bounds(h, w);
    let blank = |r: &Raster<T>| -> Result<Raster<T>> {
        let mut v = r.values().to_vec();
        for row in r0..r0 + rh {
            v[row * w + c0..row * w + c0 + rw].fill(T::zero());
        }
        Ok(Raster::from_parts(r.kind(), h, w, v))
    };
    sample
        .map_all(blank, |l| Ok(l.clone()), blank)
        .expect("masking cannot fail")
}

/// Black-mask augmentation: draw a strip, then apply it.
pub fn black_mask<T: Real>(
    sample: &Sample<T>,
    rng: &mut impl Rng,
    max_fraction: f64,
) -> Result<Sample<T>> {
    let (h, w) = sample.dims();
    let rect = draw_black_mask(h, w, max_fraction, rng)?;
    Ok(apply_black_mask(sample, &rect))
}

/// Builds a three-channel image stack of the given constant colour.
pub fn constant_image<T: Real>(h: usize, w: usize, rgb: [T; 3]) -> [Raster<T>; 3] {
    rgb.map(|v| Raster::filled(RasterKind::ImageChannel, h, w, v))
}
