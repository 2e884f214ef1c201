//! Pixel containers, polygon rasterization and bilinear resizing.

use crate::error::{Error, Result};
use crate::scalar::{Pixel, Real};

/// Semantic role of a raster; decides which value invariants apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RasterKind {
    /// Per-pixel probabilities in `[0, 1]`.
    Confidence,
    /// 0 background, 1 building, 2 dense.
    Label,
    /// Non-negative loss weights.
    Weight,
    /// 0 background, 1.. instance ids.
    InstanceId,
    /// One channel of an image in `[0, 1]`.
    ImageChannel,
    /// Binary 0/1 mask.
    Mask,
    /// Signed loss gradient.
    Gradient,
}

impl RasterKind {
    fn admits(self, v: f64) -> bool {
        match self {
            RasterKind::Confidence | RasterKind::ImageChannel => (0.0..=1.0).contains(&v),
            RasterKind::Label => v == 0.0 || v == 1.0 || v == 2.0,
            RasterKind::Weight => v >= 0.0 && v.is_finite(),
            RasterKind::Mask => v == 0.0 || v == 1.0,
            RasterKind::InstanceId => v >= 0.0,
            RasterKind::Gradient => v.is_finite(),
        }
    }
}

/// Ground-truth class of a labelled polygon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LabelClass {
    Building = 1,
    Dense = 2,
}

impl LabelClass {
    pub fn value(self) -> u8 {
        self as u8
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LabelClass::Building => "building",
            LabelClass::Dense => "dense",
        }
    }
}

/// Row-major 2-D grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T> {
    height: usize,
    width: usize,
    kind: RasterKind,
    data: Vec<T>,
}

impl<T: Pixel> Raster<T> {
    /// Builds a raster, checking length and the kind's value invariant.
    pub fn new(kind: RasterKind, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::LengthMismatch {
                height,
                width,
                actual: data.len(),
            });
        }
        if let Some((index, v)) = data
            .iter()
            .map(|v| v.value_f64())
            .enumerate()
            .find(|(_, v)| !kind.admits(*v))
        {
            return Err(Error::InvalidPixel {
                kind,
                index,
                value: v,
            });
        }
        Ok(Self {
            height,
            width,
            kind,
            data,
        })
    }

    pub fn filled(kind: RasterKind, height: usize, width: usize, value: T) -> Self {
        Self::new(kind, height, width, vec![value; height * width])
            .expect("fill value admissible for kind")
    }

    pub fn zeros(kind: RasterKind, height: usize, width: usize) -> Self {
        Self::filled(kind, height, width, T::default())
    }

    /// Same as [`Raster::new`] without the value check. Callers guarantee the invariant.
    pub(crate) fn from_parts(kind: RasterKind, height: usize, width: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        Self {
            height,
            width,
            kind,
            data,
        }
    }

    pub fn from_fn(
        kind: RasterKind,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> T,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self::new(kind, height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn kind(&self) -> RasterKind {
        self.kind
    }

    pub fn values(&self) -> &[T] {
        &self.data
    }

    pub fn into_values(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.width + col]
    }

    /// Reinterprets the raster under another kind, re-checking the invariant.
    pub fn with_kind(self, kind: RasterKind) -> Result<Self> {
        Self::new(kind, self.height, self.width, self.data)
    }

    pub fn map<U: Pixel>(&self, kind: RasterKind, f: impl FnMut(T) -> U) -> Result<Raster<U>> {
        Raster::new(
            kind,
            self.height,
            self.width,
            self.data.iter().copied().map(f).collect(),
        )
    }

    pub fn ensure_same_dims<U: Pixel>(&self, other: &Raster<U>) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: other.dims(),
            });
        }
        Ok(())
    }

    pub fn ensure_kind(&self, expected: RasterKind) -> Result<()> {
        if self.kind != expected {
            return Err(Error::WrongKind {
                expected,
                actual: self.kind,
            });
        }
        Ok(())
    }

    /// Applies one of the eight symmetries of the square.
    ///
    /// `k`: 0 identity, 1..=3 clockwise rotation by `k`·90°, 4 horizontal flip
    /// (mirror columns), 5 vertical flip, 6 transpose, 7 anti-transpose.
    pub fn dihedral(&self, k: u8) -> Result<Self> {
        if k > 7 {
            return Err(Error::param(
                "k",
                format!("dihedral index {k} not in 0..=7"),
            ));
        }
        let (h, w) = self.dims();
        let (oh, ow) = if matches!(k, 1 | 3 | 6 | 7) {
            (w, h)
        } else {
            (h, w)
        };
        let mut data = Vec::with_capacity(h * w);
        for r in 0..oh {
            for c in 0..ow {
                let (sr, sc) = match k {
                    0 => (r, c),
                    1 => (h - 1 - c, r),
                    2 => (h - 1 - r, w - 1 - c),
                    3 => (c, w - 1 - r),
                    4 => (r, w - 1 - c),
                    5 => (h - 1 - r, c),
                    6 => (c, r),
                    _ => (h - 1 - c, w - 1 - r),
                };
                data.push(self.get(sr, sc));
            }
        }
        Ok(Self::from_parts(self.kind, oh, ow, data))
    }

    /// Copies the `height`×`width` window whose top-left pixel is `(row, col)`.
    pub fn crop(&self, row: usize, col: usize, height: usize, width: usize) -> Result<Self> {
        if row + height > self.height || col + width > self.width {
            return Err(Error::param(
                "crop",
                format!(
                    "window {height}x{width} at ({row},{col}) exceeds {}x{}",
                    self.height, self.width
                ),
            ));
        }
        let mut data = Vec::with_capacity(height * width);
        for r in row..row + height {
            let start = r * self.width + col;
            data.extend_from_slice(&self.data[start..start + width]);
        }
        Ok(Self::from_parts(self.kind, height, width, data))
    }
}

impl Raster<u8> {
    /// Number of nonzero pixels.
    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Binary view: 1 where the pixel is nonzero.
    pub fn binarize(&self) -> Raster<u8> {
        Raster::from_parts(
            RasterKind::Mask,
            self.height,
            self.width,
            self.data.iter().map(|&v| u8::from(v != 0)).collect(),
        )
    }

    pub fn ensure_binary(&self) -> Result<()> {
        match self.data.iter().position(|&v| v > 1) {
            Some(index) => Err(Error::NonBinary {
                index,
                value: self.data[index] as f64,
            }),
            None => Ok(()),
        }
    }
}

impl<T: Real> Raster<T> {
    pub fn min_max(&self) -> Option<(T, T)> {
        let mut it = self.data.iter().copied();
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v))))
    }
}

/// Simple polygon given by its exterior ring; closure is implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon<T> {
    ring: Vec<[T; 2]>,
}

impl<T: Real> Polygon<T> {
    /// Validates ≥3 vertices, no consecutive duplicates (cyclically) and nonzero area.
    pub fn new(ring: Vec<[T; 2]>) -> Result<Self> {
        Self::validated(ring, 0)
    }

    /// Like [`Polygon::new`], with `index` reported in the error.
    pub fn validated(mut ring: Vec<[T; 2]>, index: usize) -> Result<Self> {
        if ring.len() > 1 && ring.first() == ring.last() {
            ring.pop();
        }
        if ring.len() < 3 {
            return Err(Error::DegeneratePolygon {
                index,
                reason: "fewer than 3 vertices",
            });
        }
        if ring.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::DegeneratePolygon {
                index,
                reason: "non-finite coordinate",
            });
        }
        let n = ring.len();
        if (0..n).any(|i| ring[i] == ring[(i + 1) % n]) {
            return Err(Error::DegeneratePolygon {
                index,
                reason: "consecutive duplicate vertices",
            });
        }
        let poly = Self { ring };
        if poly.signed_area() == T::zero() {
            return Err(Error::DegeneratePolygon {
                index,
                reason: "zero area",
            });
        }
        Ok(poly)
    }

    pub fn rect(x0: T, y0: T, x1: T, y1: T) -> Result<Self> {
        Self::new(vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    }

    pub fn vertices(&self) -> &[[T; 2]] {
        &self.ring
    }

    pub fn len(&self) -> usize {
        self.ring.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ring.is_empty()
    }

    /// Shoelace sum; positive for counter-clockwise rings in a y-up frame.
    pub fn signed_area(&self) -> T {
        let n = self.ring.len();
        let two = T::one() + T::one();
        (0..n)
            .map(|i| {
                let [x0, y0] = self.ring[i];
                let [x1, y1] = self.ring[(i + 1) % n];
                x0 * y1 - x1 * y0
            })
            .fold(T::zero(), |a, b| a + b)
            / two
    }

    /// `[min_x, min_y, max_x, max_y]`.
    pub fn bbox(&self) -> [T; 4] {
        let mut b = [
            T::infinity(),
            T::infinity(),
            T::neg_infinity(),
            T::neg_infinity(),
        ];
        for &[x, y] in &self.ring {
            b[0] = b[0].min(x);
            b[1] = b[1].min(y);
            b[2] = b[2].max(x);
            b[3] = b[3].max(y);
        }
        b
    }

    /// Area centroid.
    pub fn centroid(&self) -> [T; 2] {
        let n = self.ring.len();
        let (mut cx, mut cy, mut a2) = (T::zero(), T::zero(), T::zero());
        // Shift to the first vertex to limit cancellation for projected coordinates.
        let [ox, oy] = self.ring[0];
        for i in 0..n {
            let [x0, y0] = self.ring[i];
            let [x1, y1] = self.ring[(i + 1) % n];
            let (x0, y0, x1, y1) = (x0 - ox, y0 - oy, x1 - ox, y1 - oy);
            let cross = x0 * y1 - x1 * y0;
            a2 = a2 + cross;
            cx = cx + (x0 + x1) * cross;
            cy = cy + (y0 + y1) * cross;
        }
        let three = T::lit(3.0);
        [ox + cx / (three * a2), oy + cy / (three * a2)]
    }

    /// Even-odd containment with the half-open crossing rule used by rasterization.
    pub fn contains(&self, x: T, y: T) -> bool {
        let n = self.ring.len();
        let mut inside = false;
        for i in 0..n {
            let [x0, y0] = self.ring[i];
            let [x1, y1] = self.ring[(i + 1) % n];
            if (y0 > y) != (y1 > y) {
                let xi = x0 + (y - y0) * (x1 - x0) / (y1 - y0);
                if xi > x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Maps every vertex through `f`.
    pub fn transform(&self, f: impl Fn([T; 2]) -> [T; 2]) -> Result<Self> {
        Self::new(self.ring.iter().copied().map(f).collect())
    }

    /// Sorted x coordinates where the horizontal line `y` crosses the ring.
    fn crossings(&self, y: T, out: &mut Vec<T>) {
        out.clear();
        let n = self.ring.len();
        for i in 0..n {
            let [x0, y0] = self.ring[i];
            let [x1, y1] = self.ring[(i + 1) % n];
            if (y0 > y) != (y1 > y) {
                out.push(x0 + (y - y0) * (x1 - x0) / (y1 - y0));
            }
        }
        out.sort_by(|a, b| a.partial_cmp(b).expect("finite crossings"));
    }

    /// Calls `f(row, col)` for every pixel of an `height`×`width` grid whose
    /// center lies inside the polygon. Pixel `(r, c)` has center `(c + ½, r + ½)`.
    pub fn for_each_covered_pixel(
        &self,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize),
    ) {
        let [_, min_y, _, max_y] = self.bbox();
        let half = T::lit(0.5);
        let r0 = clamp_index(min_y - half, height);
        let r1 = clamp_index(max_y + half, height);
        let mut xs = Vec::new();
        for r in r0..r1.min(height) {
            let yc = T::from_count(r) + half;
            if yc < min_y || yc > max_y {
                continue;
            }
            self.crossings(yc, &mut xs);
            for pair in xs.chunks_exact(2) {
                // Inside iff x_left <= center < x_right.
                let c_start = first_center_at_or_after(pair[0], width);
                let c_end = first_center_at_or_after(pair[1], width);
                for c in c_start..c_end {
                    f(r, c);
                }
            }
        }
    }
}

/// Smallest column `c` (capped at `width`) whose center `c + ½` is `>= x`.
fn first_center_at_or_after<T: Real>(x: T, width: usize) -> usize {
    let half = T::lit(0.5);
    let mut c = clamp_index(x - half, width);
    while c > 0 && T::from_count(c - 1) + half >= x {
        c -= 1;
    }
    while c < width && T::from_count(c) + half < x {
        c += 1;
    }
    c
}

fn clamp_index<T: Real>(v: T, n: usize) -> usize {
    if v <= T::zero() {
        0
    } else {
        v.floor().to_usize().unwrap_or(n).min(n)
    }
}

/// Burns polygons into a label raster by pixel-center coverage; later polygons win.
pub fn rasterize_polygons<T: Real>(
    polygons: &[(Polygon<T>, LabelClass)],
    height: usize,
    width: usize,
) -> Result<Raster<u8>> {
    let mut data = vec![0u8; height * width];
    for (index, (poly, class)) in polygons.iter().enumerate() {
        check_polygon(poly, index)?;
        poly.for_each_covered_pixel(height, width, |r, c| data[r * width + c] = class.value());
    }
    Ok(Raster::from_parts(RasterKind::Label, height, width, data))
}

/// Burns polygons into an instance-id raster; polygon `i` gets id `i + 1`, later polygons win.
pub fn rasterize_instances<T: Real>(
    polygons: &[Polygon<T>],
    height: usize,
    width: usize,
) -> Result<Raster<u32>> {
    let mut data = vec![0u32; height * width];
    for (index, poly) in polygons.iter().enumerate() {
        check_polygon(poly, index)?;
        let id = u32::try_from(index + 1).map_err(|_| Error::param("polygons", "too many"))?;
        poly.for_each_covered_pixel(height, width, |r, c| data[r * width + c] = id);
    }
    Ok(Raster::from_parts(
        RasterKind::InstanceId,
        height,
        width,
        data,
    ))
}

fn check_polygon<T: Real>(poly: &Polygon<T>, index: usize) -> Result<()> {
    // Polygons built through `Polygon::new` are valid; re-check in case of `transform` drift.
    if poly.len() < 3 {
        return Err(Error::DegeneratePolygon {
            index,
            reason: "fewer than 3 vertices",
        });
    }
    if poly.signed_area() == T::zero() {
        return Err(Error::DegeneratePolygon {
            index,
            reason: "zero area",
        });
    }
    Ok(())
}

/// Bilinear resize with half-pixel-center alignment and edge clamping.
pub fn resize_bilinear<T: Real>(
    r: &Raster<T>,
    new_height: usize,
    new_width: usize,
) -> Result<Raster<T>> {
    r.ensure_kind(RasterKind::Confidence)?;
    if new_height == 0 || new_width == 0 {
        return Err(Error::param("size", "target dimensions must be >= 1"));
    }
    if r.is_empty() {
        return Err(Error::Empty("source raster"));
    }
    if r.dims() == (new_height, new_width) {
        return Ok(r.clone());
    }
    let rows = sample_axis::<T>(r.height(), new_height);
    let cols = sample_axis::<T>(r.width(), new_width);
    let mut data = Vec::with_capacity(new_height * new_width);
    for &(r0, r1, fy) in &rows {
        for &(c0, c1, fx) in &cols {
            let top = lerp(r.get(r0, c0), r.get(r0, c1), fx);
            let bottom = lerp(r.get(r1, c0), r.get(r1, c1), fx);
            data.push(lerp(top, bottom, fy));
        }
    }
    Ok(Raster::from_parts(
        RasterKind::Confidence,
        new_height,
        new_width,
        data,
    ))
}

/// Source index pair and fraction for each output coordinate along one axis.
fn sample_axis<T: Real>(input: usize, output: usize) -> Vec<(usize, usize, T)> {
    let scale = T::from_count(input) / T::from_count(output);
    let half = T::lit(0.5);
    let last = T::from_count(input - 1);
    (0..output)
        .map(|d| {
            let src = ((T::from_count(d) + half) * scale - half)
                .max(T::zero())
                .min(last);
            let i0 = src.floor().to_usize().expect("non-negative");
            let i1 = (i0 + 1).min(input - 1);
            (i0, i1, src - T::from_count(i0))
        })
        .collect()
}

/// `a + (b − a)·t`, clamped to the segment so results never leave `[min, max]`.
fn lerp<T: Real>(a: T, b: T, t: T) -> T {
    let v = a + (b - a) * t;
    v.max(a.min(b)).min(a.max(b))
}
