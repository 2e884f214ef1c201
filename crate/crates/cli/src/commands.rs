use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use num_rational::Ratio;
use seg2f::cells::CellId;
use seg2f::dedup::{deduplicate, DedupParams};
use seg2f::gradcheck::gradient_suite;
use seg2f::io::{self, DatasetManifest, GeoTransform, ManifestRecord};
use seg2f::label_prep::{weight_map, DenseMode, WeightParams, WeightScheme, DEFAULT_UNET_SIGMA};
use seg2f::metrics::{self, calibrate_threshold, evaluate_groups, match_detections, Verdict};
use seg2f::postprocess::{average_masks, extract_detections, PostprocessParams};
use seg2f::synth::{generate_scene, SceneParams};
use seg2f::{Error, LabelClass, Raster64, RasterKind, Result};

use crate::{
    CalibrateArgs, DedupArgs, Dense, EnsembleArgs, EvaluateArgs, LosscheckArgs, PostprocessArgs,
    Scheme, SynthArgs, WeightsArgs,
};

/// Ordered `key=value` lines printed on success.
pub type Summary = Vec<(String, String)>;

fn line(key: impl Into<String>, value: impl ToString) -> (String, String) {
    (key.into(), value.to_string())
}

fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParam {
        name,
        reason: reason.into(),
    }
}

fn not_found(path: &Path, what: &str) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::new(std::io::ErrorKind::NotFound, what.to_string()),
    }
}

/// Checks inputs exist and output directories are present before any work starts.
fn check_paths(inputs: &[&Path], outputs: &[&Path]) -> Result<()> {
    for p in inputs {
        if !p.is_file() {
            return Err(not_found(p, "input file not found"));
        }
    }
    for p in outputs {
        let dir = match p.parent() {
            Some(d) if !d.as_os_str().is_empty() => d,
            _ => Path::new("."),
        };
        if !dir.is_dir() {
            return Err(not_found(dir, "output directory not found"));
        }
    }
    Ok(())
}

fn read_json_map(path: &Path) -> Result<serde_json::Map<String, serde_json::Value>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    match serde_json::from_str(&text) {
        Ok(serde_json::Value::Object(m)) => Ok(m),
        Ok(_) => Err(Error::Format {
            path: path.to_path_buf(),
            reason: "expected a JSON object".into(),
        }),
        Err(e) => Err(Error::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        }),
    }
}

pub fn synth(a: &SynthArgs, seed: u64) -> Result<Summary> {
    if !a.out_dir.is_dir() {
        std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::Io {
            path: a.out_dir.clone(),
            source: e,
        })?;
    }
    let mut manifest = DatasetManifest::default();
    let mut buildings = 0;
    for k in 0..a.scenes {
        let params = SceneParams {
            size: a.size,
            count: (a.count_min, a.count_max),
            building_size: (a.min_size, a.max_size),
            dense_prob: a.dense_prob,
            noise: a.noise,
            seed: seed.wrapping_add(k as u64),
        };
        let scene = generate_scene(&params)?;
        let dir = a.out_dir.join(&scene.image_id);
        std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
            path: dir.clone(),
            source: e,
        })?;
        io::write_stack(&scene.image, dir.join("image.npy"))?;
        io::write_raster(&scene.labels, dir.join("labels.npy"))?;
        io::write_raster(&scene.confidence, dir.join("confidence.npy"))?;
        io::write_ground_truth(&scene.ground_truth(), dir.join("gt.geojson"))?;
        buildings += scene
            .footprints
            .iter()
            .map(|f| if f.class == LabelClass::Dense { 2 } else { 1 })
            .sum::<usize>();
        let rel = PathBuf::from(&scene.image_id);
        manifest.records.push(ManifestRecord {
            id: scene.image_id.clone(),
            image: rel.join("image.npy"),
            labels: Some(rel.join("labels.npy")),
            ground_truth: Some(rel.join("gt.geojson")),
            group_key: "synthetic".into(),
            geo: GeoTransform {
                origin_lat: 0.0,
                origin_lon: 0.0,
                meters_per_pixel: 0.5,
            },
        });
        log::info!("wrote {}", dir.display());
    }
    manifest.write(a.out_dir.join("manifest.json"))?;
    Ok(vec![line("scenes", a.scenes), line("buildings", buildings)])
}

pub fn weights(a: &WeightsArgs) -> Result<Summary> {
    check_paths(&[&a.labels], &[&a.out])?;
    let labels = io::read_raster::<u8>(&a.labels, RasterKind::Label)?;
    let (scheme, default_sigma) = match a.scheme {
        Scheme::Gaussian => (WeightScheme::Gaussian, 3.0),
        Scheme::Unet => (WeightScheme::Unet, DEFAULT_UNET_SIGMA),
    };
    let params = WeightParams {
        sigma: a.sigma.unwrap_or(default_sigma),
        scale: a.scale,
        floor: a.floor,
    };
    let dense = match a.dense {
        Dense::Building => DenseMode::ToBuilding,
        Dense::Ignore => DenseMode::ToIgnore,
    };
    let w = weight_map(&labels, scheme, &params, dense)?;
    io::write_raster(&w, &a.out)?;
    let (lo, hi) = w.min_max().unwrap_or((0.0, 0.0));
    Ok(vec![
        line("height", w.height()),
        line("width", w.width()),
        line("min", format!("{lo:?}")),
        line("max", format!("{hi:?}")),
    ])
}

pub fn losscheck(a: &LosscheckArgs, seed: u64) -> Result<Summary> {
    if a.cases == 0 || a.size == 0 {
        return Err(invalid("cases/size", "must be positive"));
    }
    let results = gradient_suite(a.cases, a.size, seed, &Default::default())?;
    let mut out: Summary = results
        .iter()
        .map(|(name, err)| line(format!("{name}_max_rel_err"), format!("{err:e}")))
        .collect();
    let failing: Vec<&str> = results
        .iter()
        .filter(|(_, e)| *e > a.tolerance)
        .map(|(n, _)| *n)
        .collect();
    if !failing.is_empty() {
        for (k, v) in &out {
            println!("{k}={v}");
        }
        return Err(invalid(
            "tolerance",
            format!("gradient check failed for {}", failing.join(", ")),
        ));
    }
    out.push(line("pass", true));
    Ok(out)
}

pub fn postprocess(a: &PostprocessArgs) -> Result<Summary> {
    check_paths(&[&a.conf], &[&a.out])?;
    let conf = io::read_raster::<f64>(&a.conf, RasterKind::Confidence)?;
    let params = PostprocessParams {
        threshold: a.threshold,
        min_area: a.min_area,
        simplify: a.simplify,
        dilate: !a.no_dilate,
    };
    let mut dets = extract_detections(&conf, &params)?;
    if let Some(image) = &a.image {
        for d in &mut dets {
            d.image = Some(image.clone());
        }
    }
    io::write_detections(&dets, &a.out)?;
    Ok(vec![line("detections", dets.len())])
}

/// Parses `1,512/448,...` into exact ratios.
pub fn parse_scales(text: &str) -> Result<Vec<Ratio<u64>>> {
    text.split(',')
        .map(|tok| {
            let r: Ratio<u64> = tok.trim().parse().map_err(|_| {
                invalid("scales", format!("{tok:?} is not an integer or a/b ratio"))
            })?;
            if r == Ratio::from_integer(0) {
                return Err(invalid("scales", "scale must be positive"));
            }
            Ok(r)
        })
        .collect()
}

/// Output size for an input of `len` pixels predicted at `scale`.
fn base_len(len: usize, scale: Ratio<u64>) -> Option<usize> {
    let base = Ratio::from_integer(len as u64) / scale;
    base.is_integer().then(|| *base.numer() as usize)
}

pub fn ensemble(a: &EnsembleArgs) -> Result<Summary> {
    let inputs: Vec<&Path> = a.inputs.iter().map(PathBuf::as_path).collect();
    check_paths(&inputs, &[&a.out])?;
    let scales = parse_scales(&a.scales)?;
    if scales.len() != a.inputs.len() {
        return Err(invalid(
            "scales",
            format!("{} scales for {} inputs", scales.len(), a.inputs.len()),
        ));
    }
    let masks = inputs
        .iter()
        .map(|p| io::read_raster::<f64>(p, RasterKind::Confidence))
        .collect::<Result<Vec<Raster64>>>()?;
    let mut target = None;
    for (i, (m, &s)) in masks.iter().zip(&scales).enumerate() {
        let dims = base_len(m.height(), s)
            .zip(base_len(m.width(), s))
            .ok_or_else(|| {
                invalid(
                    "scales",
                    format!(
                        "{}x{} input {i} is not an exact multiple of scale {s}",
                        m.height(),
                        m.width()
                    ),
                )
            })?;
        match target {
            None => target = Some(dims),
            Some(t) if t != dims => {
                return Err(invalid(
                    "scales",
                    format!("input {i} implies {dims:?}, input 0 implies {t:?}"),
                ))
            }
            _ => {}
        }
    }
    let (h, w) = target.expect("at least one input");
    let avg = average_masks(&masks, h, w)?;
    io::write_raster(&avg, &a.out)?;
    Ok(vec![
        line("inputs", masks.len()),
        line("height", h),
        line("width", w),
    ])
}

fn fmt(v: f64) -> String {
    format!("{v:?}")
}

pub fn evaluate(a: &EvaluateArgs) -> Result<Summary> {
    let mut inputs = vec![a.det.as_path(), a.gt.as_path()];
    if let Some(g) = &a.groups {
        inputs.push(g);
    }
    let outputs: Vec<&Path> = a.out.iter().map(PathBuf::as_path).collect();
    check_paths(&inputs, &outputs)?;
    let dets = io::read_detections(&a.det)?;
    let gts = io::read_ground_truth(&a.gt)?;
    let grouping: HashMap<String, String> = match &a.groups {
        Some(p) => read_json_map(p)?
            .into_iter()
            .map(|(k, v)| match v {
                serde_json::Value::String(s) => Ok((k, s)),
                _ => Err(Error::Format {
                    path: p.clone(),
                    reason: format!("group key for {k:?} is not a string"),
                }),
            })
            .collect::<Result<_>>()?,
        None => HashMap::new(),
    };
    let evals = if grouping.is_empty() {
        let ev = metrics::evaluate(&dets, &gts, a.iou, a.resolution)?;
        BTreeMap::from([(metrics::OVERALL.to_string(), ev)])
    } else {
        evaluate_groups(&dets, &gts, &grouping, a.iou, a.resolution)?
    };
    let overall = &evals[metrics::OVERALL];
    if let Some(out) = &a.out {
        io::write_pr_csv(&overall.curve, overall.ap_exact, overall.ap_101, out)?;
    }
    let mut s = vec![
        line("detections", dets.len()),
        line("n_gt", overall.matches.n_gt),
        line("tp", overall.matches.true_positives()),
        line("fp", overall.matches.false_positives()),
        line("ignored", overall.matches.ignored()),
        line("ap_exact", fmt(overall.ap_exact)),
        line("ap_101", fmt(overall.ap_101)),
    ];
    for (key, ev) in evals.iter().filter(|(k, _)| k.as_str() != metrics::OVERALL) {
        s.push(line(format!("group.{key}.ap_101"), fmt(ev.ap_101)));
        s.push(line(format!("group.{key}.recall"), fmt(ev.recall())));
    }
    Ok(s)
}

fn parse_level(spec: &str) -> Result<u8> {
    spec.strip_prefix("level=")
        .and_then(|l| l.parse::<u8>().ok())
        .filter(|&l| l <= seg2f::cells::MAX_LEVEL)
        .ok_or_else(|| invalid("cells", format!("{spec:?} is not level=N with N <= 20")))
}

fn threshold_text(t: Option<f64>) -> String {
    t.map_or_else(|| "unreachable".to_string(), fmt)
}

pub fn calibrate(a: &CalibrateArgs) -> Result<Summary> {
    let mut inputs = vec![a.matches.as_path(), a.gt.as_path()];
    if let Some(p) = &a.cell_weights {
        inputs.push(p);
    }
    let outputs: Vec<&Path> = a.out.iter().map(PathBuf::as_path).collect();
    check_paths(&inputs, &outputs)?;
    let level = a.cells.as_deref().map(parse_level).transpose()?;
    if a.cell_weights.is_some() && level.is_none() {
        return Err(invalid("cell-weights", "requires --cells level=N"));
    }
    let dets = io::read_detections(&a.matches)?;
    let gts = io::read_ground_truth(&a.gt)?;
    let m = match_detections(&dets, &gts, a.iou, a.resolution)?;

    let cells: Option<Vec<CellId>> = level
        .map(|l| {
            dets.iter()
                .map(|d| {
                    let [lon, lat] = d.polygon.centroid();
                    CellId::of(lat, lon, l)
                })
                .collect::<Result<Vec<_>>>()
        })
        .transpose()?;
    let weights: Option<Vec<f64>> = match (&a.cell_weights, &cells) {
        (Some(p), Some(cells)) => {
            let map = read_json_map(p)?;
            let mut table = HashMap::new();
            for (k, v) in map {
                let cell: CellId = k.parse()?;
                let w = v.as_f64().ok_or_else(|| Error::Format {
                    path: p.clone(),
                    reason: format!("weight for {k} is not a number"),
                })?;
                table.insert(cell, w);
            }
            Some(
                cells
                    .iter()
                    .map(|c| table.get(c).copied().unwrap_or(1.0))
                    .collect(),
            )
        }
        _ => None,
    };
    let global = calibrate_threshold(&m, a.precision, weights.as_deref())?;
    let mut s = vec![
        line("detections", dets.len()),
        line("target", fmt(a.precision)),
        line("threshold", threshold_text(global)),
    ];

    if let Some(cells) = cells {
        let mut by_cell: BTreeMap<CellId, Vec<usize>> = BTreeMap::new();
        for (i, c) in cells.iter().enumerate() {
            by_cell.entry(*c).or_default().push(i);
        }
        let mut csv = String::from("cell,detections,threshold\n");
        for (cell, idx) in &by_cell {
            let sub = metrics::MatchResult {
                entries: idx.iter().map(|&i| m.entries[i].clone()).collect(),
                n_gt: m.n_gt,
                group_key: Some(cell.to_string()),
            };
            let t = if sub.entries.iter().all(|e| e.verdict == Verdict::Ignored) {
                None
            } else {
                calibrate_threshold(&sub, a.precision, None)?
            };
            s.push(line(format!("cell.{cell}"), threshold_text(t)));
            csv.push_str(&format!("{cell},{},{}\n", idx.len(), threshold_text(t)));
        }
        if let Some(out) = &a.out {
            io::write_atomic(out, csv.as_bytes())?;
        }
    }
    Ok(s)
}

pub fn dedup(a: &DedupArgs) -> Result<Summary> {
    check_paths(&[&a.input, &a.coverage], &[&a.out])?;
    let dets = io::read_detections(&a.input)?;
    let coverage = io::read_coverage(&a.coverage)?;
    let params = DedupParams {
        iou_thr: a.iou,
        agree_conf: a.agree_conf,
        resolution: a.resolution,
    };
    let kept = deduplicate(&dets, &coverage, &params)?;
    io::write_detections(&kept, &a.out)?;
    Ok(vec![line("input", dets.len()), line("output", kept.len())])
}
