//! Detection matching, precision-recall curves, average precision and
//! precision-targeted threshold calibration.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::polygon_iou;
use crate::postprocess::Detection;
use crate::raster::{LabelClass, Polygon};

/// Default IoU threshold for a true positive.
pub const DEFAULT_MATCH_IOU: f64 = 0.5;
/// Name of the evaluation entry covering every group.
pub const OVERALL: &str = "overall";

/// A ground-truth footprint. Dense ground truth behaves like a COCO crowd region.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub polygon: Polygon<f64>,
    pub class: LabelClass,
    pub image: Option<String>,
}

impl GroundTruth {
    pub fn building(polygon: Polygon<f64>) -> Self {
        Self {
            polygon,
            class: LabelClass::Building,
            image: None,
        }
    }

    pub fn dense(polygon: Polygon<f64>) -> Self {
        Self {
            polygon,
            class: LabelClass::Dense,
            image: None,
        }
    }

    pub fn with_image(mut self, image: impl Into<String>) -> Self {
        self.image = Some(image.into());
        self
    }

    pub fn is_dense(&self) -> bool {
        self.class == LabelClass::Dense
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    TruePositive,
    FalsePositive,
    /// Matched only a dense region; excluded from every count.
    Ignored,
}

/// Outcome for one detection.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchEntry {
    pub score: f64,
    pub verdict: Verdict,
    /// Index of the matched ground truth (for ignored detections, the dense region).
    pub gt: Option<usize>,
}

/// Per-detection verdicts, in detection input order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchResult {
    pub entries: Vec<MatchEntry>,
    /// Number of non-dense ground truths.
    pub n_gt: usize,
    pub group_key: Option<String>,
}

impl MatchResult {
    /// Builds a result directly from `(score, verdict)` pairs.
    pub fn from_verdicts(verdicts: &[(f64, Verdict)], n_gt: usize) -> Result<Self> {
        let entries = verdicts
            .iter()
            .map(|&(score, verdict)| MatchEntry {
                score,
                verdict,
                gt: None,
            })
            .collect();
        let m = Self {
            entries,
            n_gt,
            group_key: None,
        };
        if m.true_positives() > n_gt {
            return Err(Error::param(
                "n_gt",
                "fewer ground truths than true positives",
            ));
        }
        Ok(m)
    }

    pub fn true_positives(&self) -> usize {
        self.count(Verdict::TruePositive)
    }

    pub fn false_positives(&self) -> usize {
        self.count(Verdict::FalsePositive)
    }

    pub fn ignored(&self) -> usize {
        self.count(Verdict::Ignored)
    }

    fn count(&self, v: Verdict) -> usize {
        self.entries.iter().filter(|e| e.verdict == v).count()
    }

    /// Indices of entries by descending score, ties in input order.
    fn ranked(&self) -> Vec<usize> {
        score_order(self.entries.iter().map(|e| e.score))
    }
}

fn score_order(scores: impl Iterator<Item = f64>) -> Vec<usize> {
    let scores: Vec<f64> = scores.collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

fn same_frame(a: &Option<String>, b: &Option<String>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => a == b,
        _ => true,
    }
}

fn validate_iou(iou_thr: f64) -> Result<()> {
    if !(iou_thr > 0.0 && iou_thr <= 1.0) {
        return Err(Error::param("iou_thr", format!("{iou_thr} not in (0, 1]")));
    }
    Ok(())
}

/// Greedy COCO-style matching. Detections and ground truth tagged with
/// different images are never compared; an untagged side matches any image.
pub fn match_detections(
    dets: &[Detection],
    gts: &[GroundTruth],
    iou_thr: f64,
    resolution: f64,
) -> Result<MatchResult> {
    validate_iou(iou_thr)?;
    let order = score_order(dets.iter().map(|d| d.score));
    let ious: Vec<Vec<f64>> = dets
        .par_iter()
        .map(|d| {
            gts.iter()
                .map(|g| {
                    if same_frame(&d.image, &g.image) {
                        polygon_iou(&d.polygon, &g.polygon, resolution)
                    } else {
                        Ok(0.0)
                    }
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    let mut taken = vec![false; gts.len()];
    let mut entries: Vec<Option<MatchEntry>> = vec![None; dets.len()];
    for &i in &order {
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in gts.iter().enumerate() {
            let iou = ious[i][j];
            if g.is_dense() || taken[j] || iou < iou_thr {
                continue;
            }
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((j, iou));
            }
        }
        let (verdict, gt) = if let Some((j, _)) = best {
            taken[j] = true;
            (Verdict::TruePositive, Some(j))
        } else if let Some(j) = (0..gts.len()).find(|&j| gts[j].is_dense() && ious[i][j] >= iou_thr)
        {
            (Verdict::Ignored, Some(j))
        } else {
            (Verdict::FalsePositive, None)
        };
        entries[i] = Some(MatchEntry {
            score: dets[i].score,
            verdict,
            gt,
        });
    }
    Ok(MatchResult {
        entries: entries
            .into_iter()
            .map(|e| e.expect("every detection ranked"))
            .collect(),
        n_gt: gts.iter().filter(|g| !g.is_dense()).count(),
        group_key: None,
    })
}

/// Operating point after keeping every detection with score ≥ `score`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub score: f64,
    pub precision: f64,
    pub recall: f64,
    pub tp: usize,
    pub fp: usize,
}

/// Points ordered by descending score threshold.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub n_gt: usize,
}

/// One point per distinct score, cumulative from the highest score; ignored detections are skipped.
pub fn pr_curve(m: &MatchResult) -> Result<PrCurve> {
    if m.n_gt == 0 {
        return Err(Error::Empty("ground truth"));
    }
    let ranked: Vec<&MatchEntry> = m
        .ranked()
        .into_iter()
        .map(|i| &m.entries[i])
        .filter(|e| e.verdict != Verdict::Ignored)
        .collect();
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for (k, e) in ranked.iter().enumerate() {
        match e.verdict {
            Verdict::TruePositive => tp += 1,
            _ => fp += 1,
        }
        let last_of_score = ranked.get(k + 1).is_none_or(|n| n.score != e.score);
        if last_of_score {
            points.push(PrPoint {
                score: e.score,
                precision: tp as f64 / (tp + fp) as f64,
                recall: tp as f64 / m.n_gt as f64,
                tp,
                fp,
            });
        }
    }
    Ok(PrCurve {
        points,
        n_gt: m.n_gt,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ApMode {
    /// Area under the precision envelope.
    Exact,
    /// Mean envelope precision at recall 0.00, 0.01, …, 1.00.
    #[default]
    Interp101,
}

/// Average precision under the monotone precision envelope.
pub fn average_precision(curve: &PrCurve, mode: ApMode) -> f64 {
    let pts = &curve.points;
    // envelope[k] = max precision over points k.. (recall is non-decreasing along the curve)
    let mut envelope = vec![0.0f64; pts.len()];
    let mut run = 0.0f64;
    for k in (0..pts.len()).rev() {
        run = run.max(pts[k].precision);
        envelope[k] = run;
    }
    match mode {
        ApMode::Exact => {
            let mut prev_tp = 0usize;
            let mut area = 0.0;
            for (p, &env) in pts.iter().zip(&envelope) {
                if p.tp > prev_tp {
                    area += (p.tp - prev_tp) as f64 / curve.n_gt as f64 * env;
                    prev_tp = p.tp;
                }
            }
            area
        }
        ApMode::Interp101 => {
            let mut total = 0.0;
            let mut k = 0;
            for i in 0..=100usize {
                // first point whose recall tp/n_gt reaches i/100
                while k < pts.len() && pts[k].tp * 100 < i * curve.n_gt {
                    k += 1;
                }
                if k < pts.len() {
                    total += envelope[k];
                }
            }
            total / 101.0
        }
    }
}

/// Matches, curve and both AP values for one group.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub matches: MatchResult,
    pub curve: PrCurve,
    pub ap_exact: f64,
    pub ap_101: f64,
}

impl Evaluation {
    fn from_matches(matches: MatchResult) -> Self {
        let curve = pr_curve(&matches).unwrap_or_default();
        let ap_exact = average_precision(&curve, ApMode::Exact);
        let ap_101 = average_precision(&curve, ApMode::Interp101);
        Self {
            matches,
            curve,
            ap_exact,
            ap_101,
        }
    }

    pub fn recall(&self) -> f64 {
        self.curve.points.last().map_or(0.0, |p| p.recall)
    }
}

/// Full evaluation of a detection set.
pub fn evaluate(
    dets: &[Detection],
    gts: &[GroundTruth],
    iou_thr: f64,
    resolution: f64,
) -> Result<Evaluation> {
    Ok(Evaluation::from_matches(match_detections(
        dets, gts, iou_thr, resolution,
    )?))
}

/// Independent evaluation per group key plus an [`OVERALL`] entry.
/// `grouping` maps image ids to keys.
pub fn evaluate_groups(
    dets: &[Detection],
    gts: &[GroundTruth],
    grouping: &HashMap<String, String>,
    iou_thr: f64,
    resolution: f64,
) -> Result<BTreeMap<String, Evaluation>> {
    validate_iou(iou_thr)?;
    let key_of = |index: usize, image: &Option<String>| -> Result<&String> {
        let image = image.as_deref().unwrap_or("");
        grouping.get(image).ok_or_else(|| Error::UnknownGroupKey {
            index,
            image: image.to_string(),
        })
    };
    let mut det_groups: BTreeMap<&String, Vec<Detection>> = BTreeMap::new();
    let mut gt_groups: BTreeMap<&String, Vec<GroundTruth>> = BTreeMap::new();
    for key in grouping.values() {
        det_groups.entry(key).or_default();
        gt_groups.entry(key).or_default();
    }
    for (i, d) in dets.iter().enumerate() {
        det_groups
            .get_mut(key_of(i, &d.image)?)
            .expect("keys pre-seeded")
            .push(d.clone());
    }
    for (i, g) in gts.iter().enumerate() {
        gt_groups
            .get_mut(key_of(i, &g.image)?)
            .expect("keys pre-seeded")
            .push(g.clone());
    }
    let keys: Vec<&String> = det_groups.keys().copied().collect();
    let mut out: BTreeMap<String, Evaluation> = keys
        .par_iter()
        .map(|&key| {
            let mut ev = evaluate(&det_groups[key], &gt_groups[key], iou_thr, resolution)?;
            ev.matches.group_key = Some(key.clone());
            Ok((key.clone(), ev))
        })
        .collect::<Result<_>>()?;
    let mut overall = evaluate(dets, gts, iou_thr, resolution)?;
    overall.matches.group_key = Some(OVERALL.to_string());
    out.insert(OVERALL.to_string(), overall);
    Ok(out)
}

/// Smallest observed score `t` whose (weighted) precision over detections
/// with score ≥ `t` reaches `target`. `weights` is aligned with `m.entries`.
/// Returns `None` when no observed score qualifies.
pub fn calibrate_threshold(
    m: &MatchResult,
    target: f64,
    weights: Option<&[f64]>,
) -> Result<Option<f64>> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::param(
            "target_precision",
            format!("{target} not in (0, 1]"),
        ));
    }
    if let Some(w) = weights {
        if w.len() != m.entries.len() {
            return Err(Error::param(
                "weights",
                format!("{} weights for {} detections", w.len(), m.entries.len()),
            ));
        }
        if let Some(bad) = w.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::param(
                "weights",
                format!("{bad} is not a finite weight >= 0"),
            ));
        }
    }
    let ranked: Vec<usize> = m
        .ranked()
        .into_iter()
        .filter(|&i| m.entries[i].verdict != Verdict::Ignored)
        .collect();
    if ranked.is_empty() {
        return Err(Error::Empty("match set"));
    }
    let weight = |i: usize| weights.map_or(1.0, |w| w[i]);
    let (mut tp, mut fp) = (0.0f64, 0.0f64);
    let mut best = None;
    for (k, &i) in ranked.iter().enumerate() {
        let e = &m.entries[i];
        match e.verdict {
            Verdict::TruePositive => tp += weight(i),
            _ => fp += weight(i),
        }
        let last_of_score = ranked
            .get(k + 1)
            .is_none_or(|&n| m.entries[n].score != e.score);
        if last_of_score && tp + fp > 0.0 && tp / (tp + fp) >= target {
            best = Some(e.score);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Verdict::*;

    fn fixture() -> MatchResult {
        MatchResult::from_verdicts(
            &[
                (0.9, TruePositive),
                (0.8, FalsePositive),
                (0.7, TruePositive),
            ],
            2,
        )
        .unwrap()
    }

    fn det(x0: f64, y0: f64, x1: f64, y1: f64, score: f64) -> Detection {
        Detection::new(Polygon::rect(x0, y0, x1, y1).unwrap(), score).unwrap()
    }

    #[test]
    fn curve_fixture() {
        let c = pr_curve(&fixture()).unwrap();
        let pr: Vec<(f64, f64)> = c.points.iter().map(|p| (p.precision, p.recall)).collect();
        assert_eq!(pr, vec![(1.0, 0.5), (0.5, 0.5), (2.0 / 3.0, 1.0)]);
        assert!(pr_curve(&MatchResult::from_verdicts(&[], 0).unwrap()).is_err());
    }

    #[test]
    fn ap_fixture() {
        let c = pr_curve(&fixture()).unwrap();
        let exact = average_precision(&c, ApMode::Exact);
        assert!((exact - 5.0 / 6.0).abs() < 1e-15);
        let interp = average_precision(&c, ApMode::Interp101);
        assert!((interp - (51.0 + 50.0 * 2.0 / 3.0) / 101.0).abs() < 1e-15);
        assert!((interp - 0.8350).abs() < 5e-5);
    }

    #[test]
    fn perfect_detector() {
        let m = MatchResult::from_verdicts(&[(0.9, TruePositive), (0.4, TruePositive)], 2).unwrap();
        let c = pr_curve(&m).unwrap();
        assert!(c.points.iter().all(|p| p.precision == 1.0));
        assert_eq!(average_precision(&c, ApMode::Exact), 1.0);
        assert_eq!(average_precision(&c, ApMode::Interp101), 1.0);
    }

    #[test]
    fn greedy_matching() {
        let gt = [GroundTruth::building(
            Polygon::rect(0.0, 0.0, 10.0, 10.0).unwrap(),
        )];
        let dets = [det(0.0, 0.0, 10.0, 10.0, 0.9)];
        let m = match_detections(&dets, &gt, 0.5, 4.0).unwrap();
        assert_eq!(m.true_positives(), 1);

        // A: IoU 0.6, B: IoU 0.55 against the same ground truth
        let a = det(0.0, 0.0, 6.0, 10.0, 0.9);
        let b = det(0.0, 0.0, 5.5, 10.0, 0.8);
        let m = match_detections(&[b, a], &gt, 0.5, 4.0).unwrap();
        assert_eq!(m.entries[0].verdict, FalsePositive);
        assert_eq!(m.entries[1].verdict, TruePositive);
        assert!(match_detections(&dets, &gt, 0.0, 4.0).is_err());
    }

    #[test]
    fn dense_regions_are_ignored() {
        let gts = [
            GroundTruth::building(Polygon::rect(0.0, 0.0, 10.0, 10.0).unwrap()),
            GroundTruth::dense(Polygon::rect(20.0, 0.0, 30.0, 10.0).unwrap()),
        ];
        let base = [
            det(0.0, 0.0, 10.0, 10.0, 0.9),
            det(40.0, 0.0, 45.0, 5.0, 0.6),
        ];
        let mut extra = base.to_vec();
        extra.push(det(20.0, 0.0, 27.0, 10.0, 0.8));
        let m0 = match_detections(&base, &gts, 0.5, 4.0).unwrap();
        let m1 = match_detections(&extra, &gts, 0.5, 4.0).unwrap();
        assert_eq!(m1.entries[2].verdict, Ignored);
        assert_eq!(m1.n_gt, 1);
        assert_eq!(pr_curve(&m0).unwrap(), pr_curve(&m1).unwrap());
        assert_eq!(
            calibrate_threshold(&m0, 0.9, None).unwrap(),
            calibrate_threshold(&m1, 0.9, None).unwrap()
        );
    }

    #[test]
    fn images_are_matched_separately() {
        let gts =
            [GroundTruth::building(Polygon::rect(0.0, 0.0, 10.0, 10.0).unwrap()).with_image("a")];
        let dets = [det(0.0, 0.0, 10.0, 10.0, 0.9).with_image("b")];
        let m = match_detections(&dets, &gts, 0.5, 4.0).unwrap();
        assert_eq!(m.false_positives(), 1);
    }

    #[test]
    fn calibration() {
        assert_eq!(
            calibrate_threshold(&fixture(), 0.9, None).unwrap(),
            Some(0.9)
        );
        assert_eq!(
            calibrate_threshold(&fixture(), 0.6, None).unwrap(),
            Some(0.7)
        );
        let all_tp =
            MatchResult::from_verdicts(&[(0.9, TruePositive), (0.3, TruePositive)], 2).unwrap();
        assert_eq!(calibrate_threshold(&all_tp, 1.0, None).unwrap(), Some(0.3));
        let fp_top =
            MatchResult::from_verdicts(&[(0.9, FalsePositive), (0.3, TruePositive)], 1).unwrap();
        assert_eq!(calibrate_threshold(&fp_top, 1.0, None).unwrap(), None);
        assert!(calibrate_threshold(&MatchResult::default(), 0.5, None).is_err());
        assert!(calibrate_threshold(&fixture(), 0.0, None).is_err());
        // down-weighting the false positive lets 0.7 qualify at 0.9
        let w = [1.0, 0.1, 1.0];
        assert_eq!(
            calibrate_threshold(&fixture(), 0.9, Some(&w)).unwrap(),
            Some(0.7)
        );
    }

    #[test]
    fn groups() {
        let gts = vec![
            GroundTruth::building(Polygon::rect(0.0, 0.0, 10.0, 10.0).unwrap()).with_image("u1"),
            GroundTruth::building(Polygon::rect(0.0, 0.0, 10.0, 10.0).unwrap()).with_image("r1"),
        ];
        let dets = vec![det(0.0, 0.0, 10.0, 10.0, 0.9).with_image("u1")];
        let grouping: HashMap<String, String> = [("u1", "urban"), ("r1", "rural")]
            .into_iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        let ev = evaluate_groups(&dets, &gts, &grouping, 0.5, 4.0).unwrap();
        assert_eq!(ev.len(), 3);
        assert_eq!(ev["urban"].ap_101, 1.0);
        assert_eq!(ev["rural"].ap_101, 0.0);
        assert_eq!(ev["rural"].recall(), 0.0);
        let tp: usize = ["urban", "rural"]
            .iter()
            .map(|k| ev[*k].matches.true_positives())
            .sum();
        assert_eq!(tp, ev[OVERALL].matches.true_positives());

        let stray = vec![det(0.0, 0.0, 1.0, 1.0, 0.5).with_image("x")];
        assert!(matches!(
            evaluate_groups(&stray, &gts, &grouping, 0.5, 4.0),
            Err(Error::UnknownGroupKey { index: 0, .. })
        ));
    }
}
