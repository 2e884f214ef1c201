//! Collapsing duplicate detections from overlapping imagery assets.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{bboxes_intersect, polygon_iou, DEFAULT_IOU_RESOLUTION};
use crate::postprocess::{Detection, DisjointSet};
use crate::raster::Polygon;

pub const DEFAULT_DEDUP_IOU: f64 = 0.5;
pub const DEFAULT_AGREE_CONF: f64 = 0.65;

/// Footprint and quality of every imagery asset.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AssetCoverage {
    pub polygons: BTreeMap<String, Polygon<f64>>,
    /// Quality in `[0, 1]`; assets without an entry count as 1.
    pub quality: BTreeMap<String, f64>,
}

impl AssetCoverage {
    pub fn insert(&mut self, asset_id: impl Into<String>, polygon: Polygon<f64>, quality: f64) {
        let id = asset_id.into();
        self.polygons.insert(id.clone(), polygon);
        self.quality.insert(id, quality);
    }

    pub fn quality_of(&self, asset_id: &str) -> f64 {
        self.quality.get(asset_id).copied().unwrap_or(1.0)
    }

    /// Number of assets whose footprint contains the point.
    pub fn coverage_count(&self, x: f64, y: f64) -> usize {
        self.polygons.values().filter(|p| p.contains(x, y)).count()
    }

    pub fn validate(&self) -> Result<()> {
        for (id, q) in &self.quality {
            if !(0.0..=1.0).contains(q) {
                return Err(Error::param(
                    "quality",
                    format!("asset {id}: {q} not in [0, 1]"),
                ));
            }
        }
        Ok(())
    }
}

/// Dedup settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DedupParams {
    pub iou_thr: f64,
    pub agree_conf: f64,
    pub resolution: f64,
}

impl Default for DedupParams {
    fn default() -> Self {
        Self {
            iou_thr: DEFAULT_DEDUP_IOU,
            agree_conf: DEFAULT_AGREE_CONF,
            resolution: DEFAULT_IOU_RESOLUTION,
        }
    }
}

fn diagonal(b: &[f64; 4]) -> f64 {
    (b[2] - b[0]).hypot(b[3] - b[1])
}

/// Uniform grid over bounding boxes; each box is registered in every cell it touches.
struct Grid {
    cell: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl Grid {
    fn new(boxes: &[[f64; 4]]) -> Self {
        let mut diags: Vec<f64> = boxes.iter().map(diagonal).collect();
        diags.sort_by(f64::total_cmp);
        let median = diags[diags.len() / 2];
        let cell = if median > 0.0 { 2.0 * median } else { 1.0 };
        let mut grid = Self {
            cell,
            cells: HashMap::new(),
        };
        for (i, b) in boxes.iter().enumerate() {
            for key in grid.span(b) {
                grid.cells.entry(key).or_default().push(i);
            }
        }
        grid
    }

    fn span(&self, b: &[f64; 4]) -> impl Iterator<Item = (i64, i64)> {
        let lo = |v: f64| (v / self.cell).floor() as i64;
        let (x0, y0, x1, y1) = (lo(b[0]), lo(b[1]), lo(b[2]), lo(b[3]));
        (x0..=x1).flat_map(move |x| (y0..=y1).map(move |y| (x, y)))
    }

    fn neighbours(&self, b: &[f64; 4]) -> BTreeSet<usize> {
        self.span(b)
            .filter_map(|k| self.cells.get(&k))
            .flatten()
            .copied()
            .collect()
    }
}

/// Partitions detections into groups connected by IoU ≥ `iou_thr`.
/// Groups are sorted by smallest member; members ascend.
pub fn group(dets: &[Detection], iou_thr: f64, resolution: f64) -> Result<Vec<Vec<usize>>> {
    if !(iou_thr > 0.0 && iou_thr <= 1.0) {
        return Err(Error::param("iou_thr", format!("{iou_thr} not in (0, 1]")));
    }
    if dets.is_empty() {
        return Ok(Vec::new());
    }
    let boxes: Vec<[f64; 4]> = dets.iter().map(|d| d.polygon.bbox()).collect();
    let grid = Grid::new(&boxes);
    let edges: Vec<Vec<usize>> = (0..dets.len())
        .into_par_iter()
        .map(|i| {
            let mut linked = Vec::new();
            for j in grid.neighbours(&boxes[i]).into_iter().filter(|&j| j > i) {
                if bboxes_intersect(&boxes[i], &boxes[j])
                    && polygon_iou(&dets[i].polygon, &dets[j].polygon, resolution)? >= iou_thr
                {
                    linked.push(j);
                }
            }
            Ok(linked)
        })
        .collect::<Result<_>>()?;

    let mut sets = DisjointSet::new(dets.len());
    for (i, linked) in edges.iter().enumerate() {
        for &j in linked {
            sets.union(i, j);
        }
    }
    let mut by_root: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..dets.len() {
        by_root.entry(sets.find(i)).or_default().push(i);
    }
    let mut groups: Vec<Vec<usize>> = by_root.into_values().collect();
    groups.sort_by_key(|g| g[0]);
    Ok(groups)
}

/// Keeps the best detection of every group and drops unconfirmed low-confidence
/// detections in multiply-covered areas.
///
/// The kept detection maximizes `score × quality`, then area, then comes first
/// in the input. Its `support` lists every asset seen in its group. A detection
/// supported by a single asset is dropped when its centroid lies under two or
/// more asset footprints and its score is below `agree_conf`.
pub fn deduplicate(
    dets: &[Detection],
    coverage: &AssetCoverage,
    params: &DedupParams,
) -> Result<Vec<Detection>> {
    coverage.validate()?;
    if !(0.0..=1.0).contains(&params.agree_conf) {
        return Err(Error::param("agree_conf", "must be in [0, 1]"));
    }
    for (index, d) in dets.iter().enumerate() {
        if !coverage.polygons.contains_key(&d.asset_id) {
            return Err(Error::UnknownAsset {
                index,
                asset_id: d.asset_id.clone(),
            });
        }
    }
    let groups = group(dets, params.iou_thr, params.resolution)?;
    let key = |i: usize| dets[i].score * coverage.quality_of(&dets[i].asset_id);

    let mut out = Vec::with_capacity(groups.len());
    for members in groups {
        let best = members
            .iter()
            .copied()
            .reduce(|a, b| {
                let better =
                    key(b) > key(a) || (key(b) == key(a) && dets[b].area() > dets[a].area());
                if better {
                    b
                } else {
                    a
                }
            })
            .expect("groups are non-empty");
        let support: BTreeSet<String> = members
            .iter()
            .flat_map(|&i| {
                std::iter::once(dets[i].asset_id.clone()).chain(dets[i].support.iter().cloned())
            })
            .collect();
        let mut rep = dets[best].clone();
        rep.support = support.into_iter().collect();
        if rep.support.len() <= 1 && rep.score < params.agree_conf {
            let [cx, cy] = rep.polygon.centroid();
            if coverage.coverage_count(cx, cy) >= 2 {
                continue;
            }
        }
        out.push(rep);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(x0: f64, y0: f64, x1: f64, y1: f64, score: f64, asset: &str) -> Detection {
        Detection::new(Polygon::rect(x0, y0, x1, y1).unwrap(), score)
            .unwrap()
            .with_asset(asset)
    }

    fn two_assets() -> AssetCoverage {
        let mut c = AssetCoverage::default();
        c.insert("a", Polygon::rect(0.0, 0.0, 100.0, 100.0).unwrap(), 1.0);
        c.insert("b", Polygon::rect(0.0, 0.0, 100.0, 100.0).unwrap(), 1.0);
        c
    }

    #[test]
    fn grouping_cases() {
        assert!(group(&[], 0.5, 4.0).unwrap().is_empty());
        let apart = [
            det(0.0, 0.0, 1.0, 1.0, 0.9, "a"),
            det(5.0, 5.0, 6.0, 6.0, 0.9, "a"),
            det(10.0, 0.0, 11.0, 1.0, 0.9, "a"),
        ];
        assert_eq!(
            group(&apart, 0.5, 4.0).unwrap(),
            vec![vec![0], vec![1], vec![2]]
        );

        // A~B at 0.82, B~C at 0.6, A and C below threshold
        let a = det(0.0, 0.0, 10.0, 10.0, 0.9, "a");
        let b = det(1.0, 0.0, 11.0, 10.0, 0.9, "a");
        let c = det(3.5, 0.0, 13.5, 10.0, 0.9, "a");
        let iou = |x: &Detection, y: &Detection| polygon_iou(&x.polygon, &y.polygon, 4.0).unwrap();
        assert!(iou(&a, &b) >= 0.8);
        assert!((iou(&b, &c) - 0.6).abs() < 1e-12);
        assert!(iou(&a, &c) < 0.5);
        let transitive = [a, b, c];
        assert_eq!(group(&transitive, 0.5, 4.0).unwrap(), vec![vec![0, 1, 2]]);
        assert!(group(&transitive, 0.0, 4.0).is_err());
    }

    #[test]
    fn keeps_best_copy() {
        let dets = [
            det(10.0, 10.0, 20.0, 20.0, 0.7, "a"),
            det(10.0, 10.0, 20.0, 20.5, 0.9, "b"),
        ];
        let out = deduplicate(&dets, &two_assets(), &DedupParams::default()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].score, 0.9);
        assert_eq!(out[0].support, vec!["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn quality_weighs_in() {
        let mut cov = two_assets();
        cov.quality.insert("b".into(), 0.5);
        let dets = [
            det(10.0, 10.0, 20.0, 20.0, 0.7, "a"),
            det(10.0, 10.0, 20.0, 20.0, 0.9, "b"),
        ];
        let out = deduplicate(&dets, &cov, &DedupParams::default()).unwrap();
        assert_eq!(out[0].asset_id, "a");
    }

    #[test]
    fn agreement_filter() {
        let lone = [det(10.0, 10.0, 20.0, 20.0, 0.55, "a")];
        assert!(deduplicate(&lone, &two_assets(), &DedupParams::default())
            .unwrap()
            .is_empty());
        let confident = [det(10.0, 10.0, 20.0, 20.0, 0.8, "a")];
        assert_eq!(
            deduplicate(&confident, &two_assets(), &DedupParams::default())
                .unwrap()
                .len(),
            1
        );
        let mut single = AssetCoverage::default();
        single.insert("a", Polygon::rect(0.0, 0.0, 100.0, 100.0).unwrap(), 1.0);
        assert_eq!(
            deduplicate(&lone, &single, &DedupParams::default())
                .unwrap()
                .len(),
            1
        );
    }

    #[test]
    fn unknown_asset() {
        let dets = [det(0.0, 0.0, 1.0, 1.0, 0.9, "zz")];
        assert!(matches!(
            deduplicate(&dets, &two_assets(), &DedupParams::default()),
            Err(Error::UnknownAsset { index: 0, .. })
        ));
    }

    #[test]
    fn idempotent_with_same_asset_duplicates() {
        let dets = [
            det(10.0, 10.0, 20.0, 20.0, 0.6, "a"),
            det(10.0, 10.0, 20.0, 20.5, 0.5, "a"),
            det(40.0, 40.0, 50.0, 50.0, 0.6, "a"),
            det(40.0, 40.0, 50.0, 50.0, 0.5, "b"),
        ];
        let p = DedupParams::default();
        let once = deduplicate(&dets, &two_assets(), &p).unwrap();
        let twice = deduplicate(&once, &two_assets(), &p).unwrap();
        assert_eq!(once, twice);
        assert_eq!(once.len(), 1);
    }
}
