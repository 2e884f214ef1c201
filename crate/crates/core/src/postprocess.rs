//! Confidence raster → scored building instances → polygons.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::polygon_area;
use crate::label_prep::Window;
use crate::raster::{resize_bilinear, Polygon, Raster, RasterKind};
use crate::scalar::Real;

/// A scored polygon in pixel or projected coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub polygon: Polygon<f64>,
    pub score: f64,
    pub asset_id: String,
    /// RFC 3339 acquisition date or timestamp.
    pub acquired: Option<String>,
    pub quality: Option<f64>,
    /// Image the detection came from; used for per-image matching and grouping.
    pub image: Option<String>,
    /// Assets whose detections were merged into this one by deduplication.
    pub support: Vec<String>,
}

impl Detection {
    pub fn new(polygon: Polygon<f64>, score: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::param("score", format!("{score} not in [0, 1]")));
        }
        Ok(Self {
            polygon,
            score,
            asset_id: String::new(),
            acquired: None,
            quality: None,
            image: None,
            support: Vec::new(),
        })
    }

    pub fn with_asset(mut self, asset_id: impl Into<String>) -> Self {
        self.asset_id = asset_id.into();
        self
    }

    pub fn with_image(mut self, image: impl Into<String>) -> Self {
        self.image = Some(image.into());
        self
    }

    pub fn area(&self) -> f64 {
        polygon_area(&self.polygon)
    }
}

/// Connected instances with optional per-instance scores.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMap<T> {
    pub ids: Raster<u32>,
    pub count: u32,
    /// `scores[k - 1]` is the score of instance `k`.
    pub scores: Option<Vec<T>>,
}

impl<T: Real> InstanceMap<T> {
    pub fn score(&self, id: u32) -> Option<T> {
        self.scores
            .as_ref()?
            .get(id.checked_sub(1)? as usize)
            .copied()
    }

    /// Pixel count per instance, indexed by `id - 1`.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.count as usize];
        for &id in self.ids.values() {
            if id != 0 {
                sizes[id as usize - 1] += 1;
            }
        }
        sizes
    }
}

/// `1` where `conf >= t`.
pub fn threshold<T: Real>(conf: &Raster<T>, t: T) -> Result<Raster<u8>> {
    if !(t >= T::zero() && t <= T::one()) {
        return Err(Error::param("threshold", format!("{t} not in [0, 1]")));
    }
    Ok(Raster::from_parts(
        RasterKind::Mask,
        conf.height(),
        conf.width(),
        conf.values().iter().map(|&v| u8::from(v >= t)).collect(),
    ))
}

/// Union-find with path halving.
pub(crate) struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Smaller root wins so results do not depend on union order.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Labels 4-connected regions of pixels satisfying `fg`, joining neighbours
/// only when `same` holds. Ids are assigned 1.. in raster order of first pixel.
pub(crate) fn label_regions(
    h: usize,
    w: usize,
    fg: impl Fn(usize) -> bool,
    same: impl Fn(usize, usize) -> bool,
) -> (Raster<u32>, u32) {
    let mut sets = DisjointSet::new(h * w);
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if !fg(i) {
                continue;
            }
            if c > 0 && fg(i - 1) && same(i, i - 1) {
                sets.union(i, i - 1);
            }
            if r > 0 && fg(i - w) && same(i, i - w) {
                sets.union(i, i - w);
            }
        }
    }
    let mut root_id: HashMap<usize, u32> = HashMap::new();
    let mut out = vec![0u32; h * w];
    let mut next = 0u32;
    for (i, slot) in out.iter_mut().enumerate() {
        if !fg(i) {
            continue;
        }
        let root = sets.find(i);
        *slot = *root_id.entry(root).or_insert_with(|| {
            next += 1;
            next
        });
    }
    (Raster::from_parts(RasterKind::InstanceId, h, w, out), next)
}

/// 4-connected components of a binary mask, numbered by first encounter in raster order.
pub fn connected_components<T: Real>(mask: &Raster<u8>) -> Result<InstanceMap<T>> {
    mask.ensure_binary()?;
    let v = mask.values();
    let (ids, count) = label_regions(mask.height(), mask.width(), |i| v[i] != 0, |_, _| true);
    Ok(InstanceMap {
        ids,
        count,
        scores: None,
    })
}

/// Sets each instance's score to the mean confidence over its pixels.
pub fn score_instances<T: Real>(imap: &InstanceMap<T>, conf: &Raster<T>) -> Result<InstanceMap<T>> {
    imap.ids.ensure_same_dims(conf)?;
    let n = imap.count as usize;
    let mut sums = vec![T::zero(); n];
    let mut counts = vec![0usize; n];
    for (&id, &c) in imap.ids.values().iter().zip(conf.values()) {
        if id != 0 {
            sums[id as usize - 1] = sums[id as usize - 1] + c;
            counts[id as usize - 1] += 1;
        }
    }
    let scores = sums
        .into_iter()
        .zip(counts)
        .map(|(s, k)| {
            if k == 0 {
                T::zero()
            } else {
                s / T::from_count(k)
            }
        })
        .collect();
    Ok(InstanceMap {
        ids: imap.ids.clone(),
        count: imap.count,
        scores: Some(scores),
    })
}

/// Grows every instance by the 3×3 element. Background pixels reached by
/// several instances go to the highest score, ties to the lowest id; pixels
/// that already belong to an instance keep it.
pub fn dilate_instances<T: Real>(imap: &InstanceMap<T>) -> Result<InstanceMap<T>> {
    let scores = imap.scores.as_ref().ok_or(Error::Unscored)?;
    let (h, w) = imap.ids.dims();
    let v = imap.ids.values();
    let mut out = v.to_vec();
    for r in 0..h {
        for c in 0..w {
            if v[r * w + c] != 0 {
                continue;
            }
            let mut best: Option<u32> = None;
            let win = Window::new(h, w, r, c);
            for rr in win.rows.clone() {
                for &id in &v[rr * w + win.cols.start..rr * w + win.cols.end] {
                    if id == 0 {
                        continue;
                    }
                    best = match best {
                        None => Some(id),
                        Some(b) => {
                            let (sb, si) = (scores[b as usize - 1], scores[id as usize - 1]);
                            if si > sb || (si == sb && id < b) {
                                Some(id)
                            } else {
                                Some(b)
                            }
                        }
                    };
                }
            }
            if let Some(id) = best {
                out[r * w + c] = id;
            }
        }
    }
    Ok(InstanceMap {
        ids: Raster::from_parts(RasterKind::InstanceId, h, w, out),
        count: imap.count,
        scores: imap.scores.clone(),
    })
}

/// Resizes every mask to `height`×`width` and takes the pixel-wise mean.
///
/// Per-pixel values are summed in sorted order, so the result does not
/// depend on the order of `masks`.
pub fn average_masks<T: Real>(
    masks: &[Raster<T>],
    height: usize,
    width: usize,
) -> Result<Raster<T>> {
    if masks.is_empty() {
        return Err(Error::Empty("mask list"));
    }
    let resized = masks
        .iter()
        .map(|m| resize_bilinear(m, height, width))
        .collect::<Result<Vec<_>>>()?;
    let n = T::from_count(resized.len());
    let mut column = Vec::with_capacity(resized.len());
    let data = (0..height * width)
        .map(|i| {
            column.clear();
            column.extend(resized.iter().map(|m| m.values()[i]));
            column.sort_by(|a, b| a.partial_cmp(b).expect("confidence values are finite"));
            let mean = column.iter().copied().fold(T::zero(), |a, b| a + b) / n;
            mean.max(column[0]).min(column[column.len() - 1])
        })
        .collect();
    Ok(Raster::from_parts(
        RasterKind::Confidence,
        height,
        width,
        data,
    ))
}

/// Default Douglas–Peucker tolerance in pixels.
pub const DEFAULT_SIMPLIFY: f64 = 0.5;
/// Default minimum polygon area in pixels.
pub const DEFAULT_MIN_AREA: f64 = 4.0;

/// Traces each instance's outer boundary along pixel edges (holes filled),
/// then simplifies with tolerance `simplify`. Vertices sit on pixel corners:
/// pixel `(r, c)` spans `x ∈ [c, c+1]`, `y ∈ [r, r+1]`.
pub fn vectorize<T: Real>(imap: &InstanceMap<T>, simplify: f64) -> Result<Vec<Detection>> {
    let scores = imap.scores.as_ref().ok_or(Error::Unscored)?;
    if !(simplify >= 0.0) {
        return Err(Error::param("simplify", "must be non-negative"));
    }
    let (h, w) = imap.ids.dims();
    let n = imap.count as usize;
    // Bounding boxes in one pass.
    let mut bbox = vec![[usize::MAX, usize::MAX, 0usize, 0usize]; n];
    for r in 0..h {
        for c in 0..w {
            let id = imap.ids.get(r, c);
            if id != 0 {
                let b = &mut bbox[id as usize - 1];
                b[0] = b[0].min(r);
                b[1] = b[1].min(c);
                b[2] = b[2].max(r);
                b[3] = b[3].max(c);
            }
        }
    }
    let mut out = Vec::with_capacity(n);
    for (k, b) in bbox.iter().enumerate() {
        if b[0] == usize::MAX {
            continue;
        }
        let id = k as u32 + 1;
        let ring = trace_instance(&imap.ids, id, *b);
        let ring = simplify_ring(&ring, simplify);
        let polygon = Polygon::new(ring)?;
        let score = scores[k].as_f64().clamp(0.0, 1.0);
        out.push(Detection::new(polygon, score)?);
    }
    Ok(out)
}

/// Outer boundary of instance `id` (holes filled) as integer corner coordinates,
/// with collinear vertices removed.
fn trace_instance(ids: &Raster<u32>, id: u32, b: [usize; 4]) -> Vec<[f64; 2]> {
    // Local grid padded by one pixel on every side.
    let lh = b[2] - b[0] + 3;
    let lw = b[3] - b[1] + 3;
    let mut inside = vec![false; lh * lw];
    for r in b[0]..=b[2] {
        for c in b[1]..=b[3] {
            if ids.get(r, c) == id {
                inside[(r - b[0] + 1) * lw + (c - b[1] + 1)] = true;
            }
        }
    }
    fill_holes(&mut inside, lh, lw);

    // Directed boundary edges, clockwise on screen (interior to the right).
    let mut outgoing: HashMap<(i64, i64), Vec<(i64, i64)>> = HashMap::new();
    let at = |r: usize, c: usize| inside[r * lw + c];
    let mut start = None;
    for r in 1..lh - 1 {
        for c in 1..lw - 1 {
            if !at(r, c) {
                continue;
            }
            let (x, y) = (c as i64, r as i64);
            let mut push = |a: (i64, i64), z: (i64, i64)| {
                outgoing.entry(a).or_default().push(z);
            };
            if !at(r - 1, c) {
                push((x, y), (x + 1, y));
                start.get_or_insert((x, y));
            }
            if !at(r, c + 1) {
                push((x + 1, y), (x + 1, y + 1));
            }
            if !at(r + 1, c) {
                push((x + 1, y + 1), (x, y + 1));
            }
            if !at(r, c - 1) {
                push((x, y + 1), (x, y));
            }
        }
    }
    let start = start.expect("instance has at least one pixel");

    // Follow edges from the top-left boundary corner, preferring right turns
    // at pinch vertices so touching lobes stay on one loop.
    let mut ring = vec![start];
    let mut prev_dir = (1i64, 0i64);
    let mut cur = start;
    loop {
        let cands = outgoing.get_mut(&cur).expect("boundary is closed");
        let pick = if cands.len() == 1 {
            0
        } else {
            let right = (-prev_dir.1, prev_dir.0);
            cands
                .iter()
                .position(|&(nx, ny)| (nx - cur.0, ny - cur.1) == right)
                .or_else(|| {
                    cands
                        .iter()
                        .position(|&(nx, ny)| (nx - cur.0, ny - cur.1) == prev_dir)
                })
                .unwrap_or(0)
        };
        let next = cands.swap_remove(pick);
        prev_dir = (next.0 - cur.0, next.1 - cur.1);
        cur = next;
        if cur == start && outgoing.get(&cur).is_none_or(|v| v.is_empty()) {
            break;
        }
        ring.push(cur);
    }
    if ring.len() > 1 && ring.last() == ring.first() {
        ring.pop();
    }

    let ox = b[1] as f64 - 1.0;
    let oy = b[0] as f64 - 1.0;
    let pts: Vec<[f64; 2]> = remove_collinear(&ring)
        .into_iter()
        .map(|(x, y)| [x as f64 + ox, y as f64 + oy])
        .collect();
    pts
}

fn fill_holes(inside: &mut [bool], h: usize, w: usize) {
    let mut outside = vec![false; h * w];
    let mut stack: Vec<usize> = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if (r == 0 || c == 0 || r == h - 1 || c == w - 1) && !inside[r * w + c] {
                outside[r * w + c] = true;
                stack.push(r * w + c);
            }
        }
    }
    while let Some(i) = stack.pop() {
        let (r, c) = (i / w, i % w);
        let mut visit = |j: usize| {
            if !inside[j] && !outside[j] {
                outside[j] = true;
                stack.push(j);
            }
        };
        if r > 0 {
            visit(i - w);
        }
        if r + 1 < h {
            visit(i + w);
        }
        if c > 0 {
            visit(i - 1);
        }
        if c + 1 < w {
            visit(i + 1);
        }
    }
    for (cell, &out) in inside.iter_mut().zip(&outside) {
        if !out {
            *cell = true;
        }
    }
}

fn remove_collinear(ring: &[(i64, i64)]) -> Vec<(i64, i64)> {
    let n = ring.len();
    if n < 3 {
        return ring.to_vec();
    }
    (0..n)
        .filter(|&i| {
            let (a, b, c) = (ring[(i + n - 1) % n], ring[i], ring[(i + 1) % n]);
            (b.0 - a.0) * (c.1 - b.1) - (b.1 - a.1) * (c.0 - b.0) != 0
        })
        .map(|i| ring[i])
        .collect()
}

/// Douglas–Peucker on a closed ring. Falls back to the input when the result
/// would be degenerate.
pub fn simplify_ring(ring: &[[f64; 2]], tolerance: f64) -> Vec<[f64; 2]> {
    let n = ring.len();
    if tolerance <= 0.0 || n <= 4 {
        return ring.to_vec();
    }
    // Split at the first vertex and the vertex farthest from it.
    let far = (1..n)
        .max_by(|&a, &b| {
            dist2(ring[0], ring[a])
                .partial_cmp(&dist2(ring[0], ring[b]))
                .expect("finite")
                .then(b.cmp(&a))
        })
        .expect("n > 1");
    let mut keep = vec![false; n];
    keep[0] = true;
    keep[far] = true;
    let first: Vec<usize> = (0..=far).collect();
    let second: Vec<usize> = (far..n).chain(std::iter::once(0)).collect();
    douglas_peucker(ring, &first, tolerance, &mut keep);
    douglas_peucker(ring, &second, tolerance, &mut keep);
    let out: Vec<[f64; 2]> = (0..n).filter(|&i| keep[i]).map(|i| ring[i]).collect();
    match Polygon::new(out.clone()) {
        Ok(_) if out.len() >= 3 => out,
        _ => ring.to_vec(),
    }
}

fn douglas_peucker(ring: &[[f64; 2]], chain: &[usize], tol: f64, keep: &mut [bool]) {
    if chain.len() < 3 {
        return;
    }
    let (a, b) = (ring[chain[0]], ring[chain[chain.len() - 1]]);
    let (mut worst, mut at) = (-1.0, 0);
    for (k, &i) in chain.iter().enumerate().take(chain.len() - 1).skip(1) {
        let d = segment_distance(ring[i], a, b);
        if d > worst {
            worst = d;
            at = k;
        }
    }
    if worst > tol {
        keep[chain[at]] = true;
        douglas_peucker(ring, &chain[..=at], tol, keep);
        douglas_peucker(ring, &chain[at..], tol, keep);
    }
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return dist2(p, a).sqrt();
    }
    let t = (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0);
    dist2(p, [a[0] + t * dx, a[1] + t * dy]).sqrt()
}

/// Drops detections whose polygon area is below `min_pixels`.
pub fn min_area_filter(dets: Vec<Detection>, min_pixels: f64) -> Result<Vec<Detection>> {
    if !(min_pixels >= 0.0) {
        return Err(Error::param("min_pixels", "must be non-negative"));
    }
    Ok(dets
        .into_iter()
        .filter(|d| d.area() >= min_pixels)
        .collect())
}

/// Settings for [`extract_detections`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostprocessParams {
    pub threshold: f64,
    pub min_area: f64,
    pub simplify: f64,
    pub dilate: bool,
}

impl Default for PostprocessParams {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            min_area: DEFAULT_MIN_AREA,
            simplify: DEFAULT_SIMPLIFY,
            dilate: true,
        }
    }
}

/// threshold → components → scores → dilation → polygons → area filter.
pub fn extract_detections<T: Real>(
    conf: &Raster<T>,
    params: &PostprocessParams,
) -> Result<Vec<Detection>> {
    let mask = threshold(conf, T::lit(params.threshold))?;
    let imap = score_instances(&connected_components(&mask)?, conf)?;
    let imap = if params.dilate {
        dilate_instances(&imap)?
    } else {
        imap
    };
    min_area_filter(vectorize(&imap, params.simplify)?, params.min_area)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::rasterize_instances;

    fn mask(rows: &[&str]) -> Raster<u8> {
        Raster::from_fn(RasterKind::Mask, rows.len(), rows[0].len(), |r, c| {
            u8::from(rows[r].as_bytes()[c] == b'#')
        })
        .unwrap()
    }

    fn conf(h: usize, w: usize, v: &[f64]) -> Raster<f64> {
        Raster::new(RasterKind::Confidence, h, w, v.to_vec()).unwrap()
    }

    #[test]
    fn threshold_rule() {
        let c = conf(1, 3, &[0.0, 0.49, 0.5]);
        assert_eq!(threshold(&c, 0.0).unwrap().count_nonzero(), 3);
        assert_eq!(threshold(&c, 0.5).unwrap().values(), &[0, 0, 1]);
        assert!(threshold(&c, 1.5).is_err());
    }

    #[test]
    fn components_four_connected() {
        let m = mask(&["#.#", "...", "#.#"]);
        assert_eq!(connected_components::<f64>(&m).unwrap().count, 4);
        let m = mask(&["#.", ".#"]);
        let imap = connected_components::<f64>(&m).unwrap();
        assert_eq!(imap.count, 2);
        assert_eq!(imap.ids.values(), &[1, 0, 0, 2]);
    }

    #[test]
    fn first_encounter_order() {
        let m = mask(&["..#", "#.#", "###"]);
        let imap = connected_components::<f64>(&m).unwrap();
        assert_eq!(imap.count, 1);
        let m = mask(&["...#", "#..#", "#..."]);
        let imap = connected_components::<f64>(&m).unwrap();
        assert_eq!(imap.ids.get(0, 3), 1);
        assert_eq!(imap.ids.get(1, 0), 2);
    }

    #[test]
    fn scoring() {
        let m = mask(&["##.#"]);
        let c = conf(1, 4, &[0.6, 1.0, 0.0, 0.8]);
        let imap = score_instances(&connected_components(&m).unwrap(), &c).unwrap();
        assert!((imap.score(1).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(imap.score(2).unwrap(), 0.8);
    }

    #[test]
    fn dilation_contest_goes_to_higher_score() {
        // Instances at columns 1 and 3, one free column between them.
        let m = mask(&[".....", ".#.#.", "....."]);
        let c = conf(
            3,
            5,
            &[
                0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.6, 0.0, 0.9, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
            ],
        );
        let imap = score_instances(&connected_components(&m).unwrap(), &c).unwrap();
        let d = dilate_instances(&imap).unwrap();
        for r in 0..3 {
            assert_eq!(d.ids.get(r, 2), 2, "row {r}");
            assert_eq!(d.ids.get(r, 0), 1);
            assert_eq!(d.ids.get(r, 4), 2);
        }
    }

    #[test]
    fn dilation_requires_scores() {
        let imap = connected_components::<f64>(&mask(&["#"])).unwrap();
        assert!(matches!(dilate_instances(&imap), Err(Error::Unscored)));
        let empty = connected_components::<f64>(&mask(&["..", ".."])).unwrap();
        let empty = score_instances(&empty, &conf(2, 2, &[0.0; 4])).unwrap();
        assert_eq!(dilate_instances(&empty).unwrap(), empty);
    }

    #[test]
    fn averaging() {
        let a = Raster::filled(RasterKind::Confidence, 2, 2, 0.2);
        let b = Raster::filled(RasterKind::Confidence, 4, 4, 0.8);
        let avg = average_masks(&[a.clone(), b.clone()], 2, 2).unwrap();
        assert!(avg.values().iter().all(|&v: &f64| (v - 0.5).abs() < 1e-15));
        assert_eq!(average_masks(&[b, a.clone()], 2, 2).unwrap(), avg);
        assert_eq!(average_masks(std::slice::from_ref(&a), 2, 2).unwrap(), a);
        assert!(average_masks::<f64>(&[], 2, 2).is_err());
    }

    fn scored(m: &Raster<u8>) -> InstanceMap<f64> {
        let c = m.map(RasterKind::Confidence, |v| v as f64).unwrap();
        score_instances(&connected_components(m).unwrap(), &c).unwrap()
    }

    #[test]
    fn vectorize_square() {
        let m = mask(&["##..", "##..", "...."]);
        let dets = vectorize(&scored(&m), 0.0).unwrap();
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].area(), 4.0);
        assert_eq!(dets[0].polygon.bbox(), [0.0, 0.0, 2.0, 2.0]);
        assert_eq!(dets[0].polygon.len(), 4);
        assert_eq!(dets[0].score, 1.0);
    }

    #[test]
    fn vectorize_l_shape() {
        let m = mask(&["#..", "#..", "###"]);
        let dets = vectorize(&scored(&m), 0.0).unwrap();
        assert_eq!(dets[0].polygon.len(), 6);
        assert_eq!(dets[0].area(), 5.0);
    }

    #[test]
    fn vectorize_fills_holes() {
        let m = mask(&["###", "#.#", "###"]);
        let dets = vectorize(&scored(&m), 0.0).unwrap();
        assert_eq!(dets[0].area(), 9.0);
    }

    #[test]
    fn vectorize_lossless_at_zero_tolerance() {
        let m = mask(&[
            "..........",
            ".###...#..",
            ".#.##.###.",
            ".####..#..",
            "......##..",
            "##.......#",
        ]);
        let imap = scored(&m);
        let dets = vectorize(&imap, 0.0).unwrap();
        let polys: Vec<_> = dets.iter().map(|d| d.polygon.clone()).collect();
        let back = rasterize_instances(&polys, 6, 10).unwrap();
        // Hole at (2, 2) is filled in the polygon.
        let mut expect = imap.ids.clone().into_values();
        expect[2 * 10 + 2] = 1;
        assert_eq!(back.values(), &expect[..]);
    }

    #[test]
    fn corner_contact_is_traced() {
        // The enclosed pixel is filled; the outline passes the diagonal contact once.
        let m = mask(&["##.", "#.#", "###"]);
        let dets = vectorize(&scored(&m), 0.0).unwrap();
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].area(), 8.0);
    }

    #[test]
    fn simplification_reduces_staircase() {
        let m = mask(&["#....", "##...", "###..", "####.", "#####"]);
        let exact = vectorize(&scored(&m), 0.0).unwrap();
        let simple = vectorize(&scored(&m), 1.0).unwrap();
        assert!(simple[0].polygon.len() < exact[0].polygon.len());
    }

    #[test]
    fn area_filter() {
        let speck = Detection::new(Polygon::rect(0.0, 0.0, 1.0, 1.0).unwrap(), 0.9).unwrap();
        let house = Detection::new(Polygon::rect(0.0, 0.0, 6.0, 6.0).unwrap(), 0.9).unwrap();
        let all = vec![speck, house];
        assert_eq!(min_area_filter(all.clone(), 0.0).unwrap().len(), 2);
        let kept = min_area_filter(all, 4.0).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].area(), 36.0);
    }
}
