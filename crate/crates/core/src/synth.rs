//! Seeded synthetic scenes of axis-aligned rectangular buildings with known
//! ground truth and a pseudo-model confidence raster.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::label_prep::erode_instances;
use crate::metrics::GroundTruth;
use crate::raster::{LabelClass, Polygon, Raster, RasterKind};

/// Tile edge length in pixels.
pub const DEFAULT_SCENE_SIZE: usize = 600;
/// Smallest building edge in pixels.
pub const MIN_BUILDING: usize = 6;
/// Placement attempts per building before giving up.
pub const MAX_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneParams {
    pub size: usize,
    /// Inclusive range of the number of buildings.
    pub count: (usize, usize),
    /// Inclusive range of building edge lengths.
    pub building_size: (usize, usize),
    /// Probability that a placement becomes an abutting pair labelled dense.
    pub dense_prob: f64,
    /// Amplitude of the uniform confidence noise, in `[0, 0.5)`.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            size: DEFAULT_SCENE_SIZE,
            count: (10, 40),
            building_size: (MIN_BUILDING, 40),
            dense_prob: 0.1,
            noise: 0.0,
            seed: 0,
        }
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(Error::param("size", "must be positive"));
        }
        if self.count.0 > self.count.1 {
            return Err(Error::param("count", "min exceeds max"));
        }
        let (lo, hi) = self.building_size;
        if lo < MIN_BUILDING || lo > hi || hi > self.size {
            return Err(Error::param(
                "building_size",
                format!("need {MIN_BUILDING} <= min <= max <= {}", self.size),
            ));
        }
        if !(0.0..=1.0).contains(&self.dense_prob) {
            return Err(Error::param("dense_prob", "must be in [0, 1]"));
        }
        if !(0.0..0.5).contains(&self.noise) {
            return Err(Error::param("noise", "must be in [0, 0.5)"));
        }
        Ok(())
    }
}

/// Half-open pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Rect {
    fn overlaps(&self, o: &Rect) -> bool {
        self.x0 < o.x1 && o.x0 < self.x1 && self.y0 < o.y1 && o.y0 < self.y1
    }

    pub fn polygon(&self) -> Polygon<f64> {
        Polygon::rect(
            self.x0 as f64,
            self.y0 as f64,
            self.x1 as f64,
            self.y1 as f64,
        )
        .expect("rectangles have positive area")
    }
}

/// A placed footprint; dense footprints are the union of an abutting pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Footprint {
    pub rect: Rect,
    pub class: LabelClass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image_id: String,
    pub image: [Raster<f64>; 3],
    pub labels: Raster<u8>,
    pub instances: Raster<u32>,
    pub footprints: Vec<Footprint>,
    pub confidence: Raster<f64>,
}

impl Scene {
    pub fn ground_truth(&self) -> Vec<GroundTruth> {
        self.footprints
            .iter()
            .map(|f| GroundTruth {
                polygon: f.rect.polygon(),
                class: f.class,
                image: Some(self.image_id.clone()),
            })
            .collect()
    }
}

fn place(
    p: &SceneParams,
    rng: &mut ChaCha8Rng,
    placed: &[Footprint],
    want: usize,
) -> Option<Footprint> {
    let (lo, hi) = p.building_size;
    for _ in 0..MAX_ATTEMPTS {
        let w = rng.gen_range(lo..=hi);
        let h = rng.gen_range(lo..=hi);
        let x0 = rng.gen_range(0..=p.size - w);
        let y0 = rng.gen_range(0..=p.size - h);
        let mut rect = Rect {
            x0,
            y0,
            x1: x0 + w,
            y1: y0 + h,
        };
        let mut class = LabelClass::Building;
        if want >= 2 && rng.gen_bool(p.dense_prob) {
            // abutting neighbour of the same height on the right
            let w2 = rng.gen_range(lo..=hi);
            if rect.x1 + w2 <= p.size {
                rect.x1 += w2;
                class = LabelClass::Dense;
            }
        }
        if placed.iter().all(|f| !f.rect.overlaps(&rect)) {
            return Some(Footprint { rect, class });
        }
    }
    None
}

/// Generates one scene; the same parameters always produce identical output.
pub fn generate_scene(p: &SceneParams) -> Result<Scene> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let target = rng.gen_range(p.count.0..=p.count.1);
    let mut footprints: Vec<Footprint> = Vec::new();
    let mut buildings = 0;
    while buildings < target {
        let f = place(p, &mut rng, &footprints, target - buildings).ok_or(
            Error::InfeasiblePacking {
                count: target,
                attempts: MAX_ATTEMPTS,
            },
        )?;
        buildings += if f.class == LabelClass::Dense { 2 } else { 1 };
        footprints.push(f);
    }

    let n = p.size;
    let mut labels = vec![0u8; n * n];
    let mut ids = vec![0u32; n * n];
    let background = [0.35, 0.32, 0.25];
    let mut channels = [
        vec![background[0]; n * n],
        vec![background[1]; n * n],
        vec![background[2]; n * n],
    ];
    for (k, f) in footprints.iter().enumerate() {
        let roof: [f64; 3] = [
            rng.gen_range(0.55..0.95),
            rng.gen_range(0.55..0.95),
            rng.gen_range(0.55..0.95),
        ];
        for r in f.rect.y0..f.rect.y1 {
            for c in f.rect.x0..f.rect.x1 {
                labels[r * n + c] = f.class.value();
                ids[r * n + c] = k as u32 + 1;
                for ch in 0..3 {
                    channels[ch][r * n + c] = roof[ch];
                }
            }
        }
    }
    let instances = Raster::from_parts(RasterKind::InstanceId, n, n, ids);
    let eroded = erode_instances(&instances);
    let mut confidence: Vec<f64> = eroded
        .values()
        .iter()
        .map(|&id| if id != 0 { 1.0 } else { 0.0 })
        .collect();
    if p.noise > 0.0 {
        for v in &mut confidence {
            *v = (*v + rng.gen_range(-p.noise..=p.noise)).clamp(0.0, 1.0);
        }
    }
    let [c0, c1, c2] = channels;
    let channel = |v: Vec<f64>| Raster::from_parts(RasterKind::ImageChannel, n, n, v);
    Ok(Scene {
        image_id: format!("scene-{}", p.seed),
        image: [channel(c0), channel(c1), channel(c2)],
        labels: Raster::from_parts(RasterKind::Label, n, n, labels),
        instances,
        footprints,
        confidence: Raster::from_parts(RasterKind::Confidence, n, n, confidence),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::polygon_iou;

    fn small(seed: u64) -> SceneParams {
        SceneParams {
            size: 96,
            count: (3, 8),
            building_size: (6, 16),
            dense_prob: 0.3,
            noise: 0.0,
            seed,
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(
            generate_scene(&small(5)).unwrap(),
            generate_scene(&small(5)).unwrap()
        );
        let mut noisy = small(5);
        noisy.noise = 0.2;
        assert_eq!(
            generate_scene(&noisy).unwrap(),
            generate_scene(&noisy).unwrap()
        );
    }

    #[test]
    fn empty_scene() {
        let mut p = small(1);
        p.count = (0, 0);
        let s = generate_scene(&p).unwrap();
        assert!(s.footprints.is_empty());
        assert!(s.confidence.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn footprints_never_overlap() {
        for seed in 0..20 {
            let s = generate_scene(&small(seed)).unwrap();
            let gt = s.ground_truth();
            for a in 0..gt.len() {
                for b in a + 1..gt.len() {
                    assert_eq!(
                        polygon_iou(&gt[a].polygon, &gt[b].polygon, 1.0).unwrap(),
                        0.0
                    );
                }
                let r = s.footprints[a].rect;
                assert!(r.x1 - r.x0 >= MIN_BUILDING && r.y1 - r.y0 >= MIN_BUILDING);
            }
        }
    }

    #[test]
    fn overfull_scene_fails() {
        let p = SceneParams {
            size: 12,
            count: (5, 5),
            building_size: (6, 6),
            dense_prob: 0.0,
            noise: 0.0,
            seed: 0,
        };
        assert!(matches!(
            generate_scene(&p),
            Err(Error::InfeasiblePacking { count: 5, .. })
        ));
    }

    #[test]
    fn clean_scene_is_recovered_exactly() {
        use crate::metrics::{evaluate, Verdict};
        use crate::postprocess::{extract_detections, PostprocessParams};
        for seed in 0..10 {
            let s = generate_scene(&small(seed)).unwrap();
            let gt = s.ground_truth();
            let dets = extract_detections(&s.confidence, &PostprocessParams::default()).unwrap();
            assert_eq!(dets.len(), gt.len());
            let ev = evaluate(&dets, &gt, 0.5, 4.0).unwrap();
            assert_eq!(ev.ap_101, 1.0, "seed {seed}");
            for (e, d) in ev.matches.entries.iter().zip(&dets) {
                assert_ne!(e.verdict, Verdict::FalsePositive);
                let g = &gt[e.gt.unwrap()];
                assert_eq!(polygon_iou(&d.polygon, &g.polygon, 4.0).unwrap(), 1.0);
            }
        }
    }

    #[test]
    fn parameter_checks() {
        let mut p = small(0);
        p.noise = 0.5;
        assert!(generate_scene(&p).is_err());
        let mut p = small(0);
        p.building_size = (5, 10);
        assert!(generate_scene(&p).is_err());
    }
}
