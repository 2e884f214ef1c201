//! GeoJSON FeatureCollections of polygons with detection, ground-truth or
//! coverage properties. Output keys are sorted and numbers use the shortest
//! round-trip representation.

use std::path::Path;

use serde_json::{json, Map, Value};

use crate::dedup::AssetCoverage;
use crate::error::{Error, Result};
use crate::metrics::GroundTruth;
use crate::postprocess::Detection;
use crate::raster::{LabelClass, Polygon};

use super::{read_text, write_atomic};

fn geometry(p: &Polygon<f64>) -> Value {
    let mut ring: Vec<Value> = p.vertices().iter().map(|&[x, y]| json!([x, y])).collect();
    ring.push(ring[0].clone());
    json!({"type": "Polygon", "coordinates": [ring]})
}

fn collection(features: Vec<Value>) -> Vec<u8> {
    let mut out = serde_json::to_vec(&json!({"type": "FeatureCollection", "features": features}))
        .expect("JSON values always serialize");
    out.push(b'\n');
    out
}

fn feature(p: &Polygon<f64>, properties: Map<String, Value>) -> Value {
    json!({"type": "Feature", "geometry": geometry(p), "properties": properties})
}

/// Feature-level parse context.
struct Ctx<'a> {
    path: &'a Path,
    index: usize,
}

impl Ctx<'_> {
    fn err(&self, reason: impl Into<String>) -> Error {
        Error::Feature {
            path: self.path.to_path_buf(),
            index: self.index,
            reason: reason.into(),
        }
    }

    fn polygon(&self, f: &Value) -> Result<Polygon<f64>> {
        let g = f
            .get("geometry")
            .ok_or_else(|| self.err("missing geometry"))?;
        let kind = g.get("type").and_then(Value::as_str).unwrap_or("<none>");
        if kind != "Polygon" {
            return Err(self.err(format!("geometry type {kind} is not Polygon")));
        }
        let outer = g
            .get("coordinates")
            .and_then(Value::as_array)
            .and_then(|rings| rings.first())
            .and_then(Value::as_array)
            .ok_or_else(|| self.err("polygon has no outer ring"))?;
        let ring = outer
            .iter()
            .map(|pt| match pt.as_array().map(Vec::as_slice) {
                Some([x, y, ..]) => match (x.as_f64(), y.as_f64()) {
                    (Some(x), Some(y)) => Ok([x, y]),
                    _ => Err(self.err("non-numeric coordinate")),
                },
                _ => Err(self.err("position needs two coordinates")),
            })
            .collect::<Result<Vec<_>>>()?;
        Polygon::validated(ring, self.index).map_err(|e| self.err(e.to_string()))
    }

    fn props<'v>(&self, f: &'v Value) -> Result<&'v Map<String, Value>> {
        static EMPTY: std::sync::OnceLock<Map<String, Value>> = std::sync::OnceLock::new();
        match f.get("properties") {
            None | Some(Value::Null) => Ok(EMPTY.get_or_init(Map::new)),
            Some(Value::Object(m)) => Ok(m),
            Some(_) => Err(self.err("properties is not an object")),
        }
    }

    fn string(&self, props: &Map<String, Value>, key: &str) -> Result<Option<String>> {
        match props.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(self.err(format!("{key} is not a string"))),
        }
    }

    fn unit(&self, props: &Map<String, Value>, key: &str) -> Result<Option<f64>> {
        match props.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => {
                let x = v
                    .as_f64()
                    .ok_or_else(|| self.err(format!("{key} is not a number")))?;
                if !(0.0..=1.0).contains(&x) {
                    return Err(self.err(format!("{key} {x} not in [0, 1]")));
                }
                Ok(Some(x))
            }
        }
    }
}

fn features(path: &Path) -> Result<Vec<Value>> {
    let text = read_text(path)?;
    let root: Value = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    if root.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: "not a FeatureCollection".into(),
        });
    }
    match root.get("features") {
        Some(Value::Array(f)) => Ok(f.clone()),
        _ => Err(Error::Format {
            path: path.to_path_buf(),
            reason: "features is not an array".into(),
        }),
    }
}

/// Accepts an RFC 3339 timestamp or full date.
fn valid_date(s: &str) -> bool {
    chrono::DateTime::parse_from_rfc3339(s).is_ok()
        || chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d").is_ok()
}

pub fn detections_to_bytes(dets: &[Detection]) -> Vec<u8> {
    let features = dets
        .iter()
        .map(|d| {
            let mut p = Map::new();
            p.insert("score".into(), json!(d.score));
            if !d.asset_id.is_empty() {
                p.insert("asset_id".into(), json!(d.asset_id));
            }
            if let Some(a) = &d.acquired {
                p.insert("acquired".into(), json!(a));
            }
            if let Some(q) = d.quality {
                p.insert("quality".into(), json!(q));
            }
            if let Some(i) = &d.image {
                p.insert("image".into(), json!(i));
            }
            if !d.support.is_empty() {
                p.insert("support".into(), json!(d.support));
            }
            feature(&d.polygon, p)
        })
        .collect();
    collection(features)
}

pub fn write_detections(dets: &[Detection], path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, &detections_to_bytes(dets))
}

pub fn read_detections(path: impl AsRef<Path>) -> Result<Vec<Detection>> {
    let path = path.as_ref();
    features(path)?
        .iter()
        .enumerate()
        .map(|(index, f)| {
            let cx = Ctx { path, index };
            let polygon = cx.polygon(f)?;
            let props = cx.props(f)?;
            let score = cx
                .unit(props, "score")?
                .ok_or_else(|| cx.err("missing score"))?;
            let acquired = cx.string(props, "acquired")?;
            if let Some(a) = &acquired {
                if !valid_date(a) {
                    return Err(cx.err(format!("acquired {a:?} is not an RFC 3339 date")));
                }
            }
            let support = match props.get("support") {
                None | Some(Value::Null) => Vec::new(),
                Some(Value::Array(items)) => items
                    .iter()
                    .map(|v| {
                        v.as_str()
                            .map(str::to_string)
                            .ok_or_else(|| cx.err("support entries must be strings"))
                    })
                    .collect::<Result<_>>()?,
                Some(_) => return Err(cx.err("support is not an array")),
            };
            Ok(Detection {
                polygon,
                score,
                asset_id: cx.string(props, "asset_id")?.unwrap_or_default(),
                acquired,
                quality: cx.unit(props, "quality")?,
                image: cx.string(props, "image")?,
                support,
            })
        })
        .collect()
}

pub fn write_ground_truth(gts: &[GroundTruth], path: impl AsRef<Path>) -> Result<()> {
    let features = gts
        .iter()
        .map(|g| {
            let mut p = Map::new();
            p.insert("class".into(), json!(g.class.as_str()));
            if let Some(i) = &g.image {
                p.insert("image".into(), json!(i));
            }
            feature(&g.polygon, p)
        })
        .collect();
    write_atomic(path, &collection(features))
}

pub fn read_ground_truth(path: impl AsRef<Path>) -> Result<Vec<GroundTruth>> {
    let path = path.as_ref();
    features(path)?
        .iter()
        .enumerate()
        .map(|(index, f)| {
            let cx = Ctx { path, index };
            let polygon = cx.polygon(f)?;
            let props = cx.props(f)?;
            let class = match cx.string(props, "class")?.as_deref() {
                None | Some("building") => LabelClass::Building,
                Some("dense") => LabelClass::Dense,
                Some(other) => return Err(cx.err(format!("unknown class {other:?}"))),
            };
            Ok(GroundTruth {
                polygon,
                class,
                image: cx.string(props, "image")?,
            })
        })
        .collect()
}

pub fn write_coverage(cov: &AssetCoverage, path: impl AsRef<Path>) -> Result<()> {
    let features = cov
        .polygons
        .iter()
        .map(|(id, poly)| {
            let mut p = Map::new();
            p.insert("asset_id".into(), json!(id));
            p.insert("quality".into(), json!(cov.quality_of(id)));
            feature(poly, p)
        })
        .collect();
    write_atomic(path, &collection(features))
}

pub fn read_coverage(path: impl AsRef<Path>) -> Result<AssetCoverage> {
    let path = path.as_ref();
    let mut cov = AssetCoverage::default();
    for (index, f) in features(path)?.iter().enumerate() {
        let cx = Ctx { path, index };
        let polygon = cx.polygon(f)?;
        let props = cx.props(f)?;
        let id = cx
            .string(props, "asset_id")?
            .ok_or_else(|| cx.err("missing asset_id"))?;
        if cov.polygons.contains_key(&id) {
            return Err(cx.err(format!("duplicate asset_id {id:?}")));
        }
        let quality = cx.unit(props, "quality")?.unwrap_or(1.0);
        cov.insert(id, polygon, quality);
    }
    Ok(cov)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn empty_collection() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "e.geojson",
            r#"{"type":"FeatureCollection","features":[]}"#,
        );
        assert!(read_detections(&p).unwrap().is_empty());
    }

    #[test]
    fn validation_names_feature() {
        let dir = tempfile::tempdir().unwrap();
        let poly = r#"{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,0]]]}"#;
        let text = format!(
            r#"{{"type":"FeatureCollection","features":[
              {{"type":"Feature","geometry":{poly},"properties":{{"score":0.5}}}},
              {{"type":"Feature","geometry":{poly},"properties":{{"score":1.5}}}}]}}"#
        );
        let p = write(&dir, "bad.geojson", &text);
        let err = read_detections(&p).unwrap_err();
        assert!(matches!(err, Error::Feature { index: 1, .. }), "{err}");

        let text = format!(
            r#"{{"type":"FeatureCollection","features":[{{"type":"Feature","geometry":{poly},"properties":{{}}}}]}}"#
        );
        let p = write(&dir, "noscore.geojson", &text);
        assert!(matches!(
            read_detections(&p),
            Err(Error::Feature { index: 0, .. })
        ));

        let text = r#"{"type":"FeatureCollection","features":[{"type":"Feature","geometry":{"type":"Point","coordinates":[0,0]},"properties":{"score":0.5}}]}"#;
        let p = write(&dir, "point.geojson", text);
        assert!(matches!(
            read_detections(&p),
            Err(Error::Feature { index: 0, .. })
        ));
    }

    #[test]
    fn detection_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut d = Detection::new(
            Polygon::new(vec![[0.1, 0.2], [3.3, 0.25], [2.0, 4.0 / 3.0]]).unwrap(),
            0.7,
        )
        .unwrap()
        .with_asset("a1")
        .with_image("img");
        d.acquired = Some("2021-03-04".into());
        d.quality = Some(0.8);
        d.support = vec!["a1".into(), "b2".into()];
        let p = dir.path().join("d.geojson");
        write_detections(&[d.clone()], &p).unwrap();
        assert_eq!(read_detections(&p).unwrap(), vec![d]);
    }

    #[test]
    fn bad_date_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let text = r#"{"type":"FeatureCollection","features":[{"type":"Feature","geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1]]]},"properties":{"score":0.5,"acquired":"March"}}]}"#;
        let p = write(&dir, "d.geojson", text);
        assert!(matches!(
            read_detections(&p),
            Err(Error::Feature { index: 0, .. })
        ));
    }

    #[test]
    fn ground_truth_and_coverage_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let gts = vec![
            GroundTruth::building(Polygon::rect(0.0, 0.0, 2.0, 2.0).unwrap()).with_image("x"),
            GroundTruth::dense(Polygon::rect(5.0, 5.0, 9.0, 7.0).unwrap()),
        ];
        let p = dir.path().join("g.geojson");
        write_ground_truth(&gts, &p).unwrap();
        assert_eq!(read_ground_truth(&p).unwrap(), gts);

        let mut cov = AssetCoverage::default();
        cov.insert("a", Polygon::rect(0.0, 0.0, 10.0, 10.0).unwrap(), 0.9);
        cov.insert("b", Polygon::rect(5.0, 0.0, 15.0, 10.0).unwrap(), 1.0);
        let p = dir.path().join("c.geojson");
        write_coverage(&cov, &p).unwrap();
        assert_eq!(read_coverage(&p).unwrap(), cov);
    }
}
