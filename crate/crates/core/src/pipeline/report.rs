use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    aggregate_corpus, group_detections, rank_sections, score_profile, MaskDir, MaskSource, PipelineError,
    DEFAULT_WINDOW,
};
use crate::density::{DensityThreshold, FeatureUnit};
use crate::ingest::{self, DEFAULT_SPACING_M, DEFAULT_STREETVIEW_BASE_URL, DEFAULT_VIEW_M, PITCH_WIDE_VIEW};
use crate::metrics::{mae, r_squared, rmse, split_dataset, PairedSeries};
use crate::predictors::PaserModel;
use crate::NUM_CLASSES;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusPaths {
    pub manifest: Option<PathBuf>,
    pub detections: Option<PathBuf>,
    pub masks: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreetViewConfig {
    pub base_url: String,
    pub pitch: f64,
    /// Fixed heading in degrees; when absent each image faces the next one.
    pub heading: Option<f64>,
    pub size: (u32, u32),
    pub key: String,
}

impl Default for StreetViewConfig {
    fn default() -> Self {
        Self {
            base_url: DEFAULT_STREETVIEW_BASE_URL.to_string(),
            pitch: PITCH_WIDE_VIEW,
            heading: None,
            size: (640, 640),
            key: String::new(),
        }
    }
}

/// Run configuration, read from JSON. Relative paths resolve against the
/// directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub corpus: CorpusPaths,
    pub out_dir: Option<PathBuf>,
    pub threshold: u8,
    /// Model names (`"gep"`) or full model records (`{"model": ..., "params": ...}`).
    pub models: Vec<Value>,
    pub window: usize,
    pub spacing_m: f64,
    pub view_m: f64,
    pub seed: u64,
    pub min_confidence: f64,
    pub streetview: StreetViewConfig,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            corpus: CorpusPaths::default(),
            out_dir: None,
            threshold: DensityThreshold::default().lo,
            models: ["gep", "weights", "linreg"].iter().map(|m| Value::String(m.to_string())).collect(),
            window: DEFAULT_WINDOW,
            spacing_m: DEFAULT_SPACING_M,
            view_m: DEFAULT_VIEW_M,
            seed: 0,
            min_confidence: 0.0,
            streetview: StreetViewConfig::default(),
        }
    }
}

impl ReportConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path)
            .map_err(|source| PipelineError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn parsed_models(&self) -> Result<Vec<PaserModel>, PipelineError> {
        if self.models.is_empty() {
            return Err(PipelineError::Config("no models configured".into()));
        }
        self.models
            .iter()
            .map(|v| match v {
                Value::String(name) => {
                    PaserModel::by_name(name).ok_or_else(|| PipelineError::Config(format!("unknown model {name:?}")))
                }
                other => PaserModel::from_json_value(other).map_err(PipelineError::from),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SplitMetrics {
    pub n: usize,
    pub r2: Option<f64>,
    pub rmse: Option<f64>,
    pub mae: Option<f64>,
}

fn split_metrics(series: Option<PairedSeries>) -> SplitMetrics {
    match series {
        None => SplitMetrics { n: 0, r2: None, rmse: None, mae: None },
        Some(s) => SplitMetrics { n: s.len(), r2: r_squared(&s).ok(), rmse: Some(rmse(&s)), mae: Some(mae(&s)) },
    }
}

/// R², RMSE and MAE on all pairs and, with at least three pairs, on the
/// seeded 70/15/15 train/validation/test split.
pub fn metrics_report(
    measured: &[f64],
    predicted: &[f64],
    seed: u64,
) -> Result<BTreeMap<String, SplitMetrics>, PipelineError> {
    let mut out = BTreeMap::new();
    if measured.is_empty() && predicted.is_empty() {
        out.insert("all".to_string(), split_metrics(None));
        return Ok(out);
    }
    let all = PairedSeries::new(measured.to_vec(), predicted.to_vec())?;
    if let Ok(split) = split_dataset(all.len(), seed) {
        for (name, idx) in [("train", &split.train), ("validation", &split.validation), ("test", &split.test)] {
            out.insert(name.to_string(), split_metrics(all.select(idx).ok()));
        }
    }
    out.insert("all".to_string(), split_metrics(Some(all)));
    Ok(out)
}

/// Named output files, in write order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportBundle {
    pub files: Vec<(String, Vec<u8>)>,
}

impl ReportBundle {
    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }
}

pub fn write_bundle(bundle: &ReportBundle, dir: &Path) -> Result<(), PipelineError> {
    fn io(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
        move |source| PipelineError::Io { path: path.display().to_string(), source }
    }
    fs::create_dir_all(dir).map_err(io(dir))?;
    for (name, bytes) in &bundle.files {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(io(&path))?;
    }
    Ok(())
}

fn num(x: f64) -> String {
    format!("{x:.6}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn csv(header: &[&str], rows: Vec<Vec<String>>) -> Vec<u8> {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out.into_bytes()
}

fn feature_header(prefix: &str) -> Vec<String> {
    (1..=NUM_CLASSES).map(|k| format!("{prefix}{k}")).collect()
}

#[derive(Serialize)]
struct ModelReport {
    model: String,
    params: Value,
    kendall_tau: Option<f64>,
    metrics: BTreeMap<String, SplitMetrics>,
}

#[derive(Serialize)]
struct ReportJson {
    n_sections: usize,
    n_images: usize,
    threshold: u8,
    window: usize,
    seed: u64,
    models: Vec<ModelReport>,
}

fn read_file(base: &Path, rel: &Option<PathBuf>, what: &str) -> Result<(PathBuf, Vec<u8>), PipelineError> {
    let rel = rel.as_ref().ok_or_else(|| PipelineError::Config(format!("corpus.{what} is not set")))?;
    let path = base.join(rel);
    let bytes = fs::read(&path).map_err(|source| PipelineError::Io { path: path.display().to_string(), source })?;
    Ok((path, bytes))
}

/// Runs the whole pipeline and renders every output file in memory.
/// Sections are processed in parallel on the current rayon pool; the
/// output is byte-identical for any thread count.
pub fn build_report(cfg: &ReportConfig, base: &Path) -> Result<ReportBundle, PipelineError> {
    let (manifest_path, manifest_bytes) = read_file(base, &cfg.corpus.manifest, "manifest")?;
    let sections = ingest::parse_manifest_with_defaults(manifest_bytes.as_slice(), cfg.spacing_m, cfg.view_m)
        .map_err(|source| PipelineError::Ingest { path: manifest_path.display().to_string(), source })?;
    if sections.is_empty() {
        return Err(PipelineError::EmptyCorpus);
    }
    let (det_path, det_bytes) = read_file(base, &cfg.corpus.detections, "detections")?;
    let detections = ingest::parse_detections(det_bytes.as_slice())
        .map_err(|source| PipelineError::Ingest { path: det_path.display().to_string(), source })?;
    let detections = group_detections(detections, cfg.min_confidence);

    let models = cfg.parsed_models()?;
    let need_density = models.iter().any(|m| m.unit() == FeatureUnit::PercentDensity);
    let masks: Box<dyn MaskSource> = match &cfg.corpus.masks {
        Some(dir) => Box::new(MaskDir(base.join(dir))),
        None if need_density => {
            return Err(PipelineError::Config("corpus.masks is required by the density models".into()))
        }
        None => Box::new(HashMap::new()),
    };
    let threshold = DensityThreshold::new(cfg.threshold);
    let corpus = aggregate_corpus(&sections, &detections, masks.as_ref(), threshold, need_density)?;

    let mut files = Vec::new();

    let mut header = vec!["image_id".to_string()];
    header.extend(feature_header("d"));
    header.extend(["global_density".to_string(), "threshold".to_string()]);
    let rows = corpus
        .iter()
        .flat_map(|(images, _)| images)
        .filter_map(|f| {
            let d = f.densities?;
            let mut row = vec![f.image_id.clone()];
            row.extend(d.values().iter().map(|&x| num(x)));
            row.push(opt(f.global_density));
            row.push(cfg.threshold.to_string());
            Some(row)
        })
        .collect();
    files.push(("densities.csv".to_string(), csv(&header.iter().map(String::as_str).collect::<Vec<_>>(), rows)));

    let mut header = vec!["section_id".to_string(), "n_images".to_string()];
    header.extend(feature_header("c"));
    header.extend(feature_header("d"));
    header.push("paser".to_string());
    let rows = corpus
        .iter()
        .map(|(_, a)| {
            let mut row = vec![a.section_id.clone(), a.n_images.to_string()];
            row.extend(a.mean_counts.values().iter().map(|&x| num(x)));
            match &a.mean_densities {
                Some(d) => row.extend(d.values().iter().map(|&x| num(x))),
                None => row.extend(std::iter::repeat_n(String::new(), NUM_CLASSES)),
            }
            row.push(opt(a.measured_paser));
            row
        })
        .collect();
    files.push(("sections.csv".to_string(), csv(&header.iter().map(String::as_str).collect::<Vec<_>>(), rows)));

    let aggregates: Vec<_> = corpus.iter().map(|(_, a)| a.clone()).collect();
    let mut score_rows = Vec::new();
    let mut profile_rows = Vec::new();
    let mut ranking_rows = Vec::new();
    let mut model_reports = Vec::new();
    for model in &models {
        let unit = model.unit();
        let mut measured = Vec::new();
        let mut predicted = Vec::new();
        for (_, agg) in &corpus {
            let d = agg.features(unit).ok_or_else(|| PipelineError::MissingMask(agg.section_id.clone()))?;
            let s = model.predict(d)?;
            score_rows.push(vec![
                agg.section_id.clone(),
                model.name().to_string(),
                num(s.value),
                num(s.raw),
                opt(agg.measured_paser),
            ]);
            if let Some(m) = agg.measured_paser {
                measured.push(m);
                predicted.push(s.value);
            }
        }
        for (section, (images, _)) in sections.iter().zip(&corpus) {
            let features = images
                .iter()
                .map(|f| f.for_unit(unit).copied().ok_or_else(|| PipelineError::MissingMask(f.image_id.clone())))
                .collect::<Result<Vec<_>, _>>()?;
            let p = score_profile(section, model, &features, cfg.window)?;
            for i in 0..p.paser.len() {
                profile_rows.push(vec![
                    p.section_id.clone(),
                    num(p.chainage_m[i]),
                    num(p.paser[i]),
                    num(p.paser_ma[i]),
                    p.model.clone(),
                ]);
            }
        }
        let ranking = rank_sections(&aggregates, model)?;
        for e in &ranking.entries {
            ranking_rows.push(vec![
                ranking.model.clone(),
                e.rank.to_string(),
                e.section_id.clone(),
                num(e.predicted.value),
                opt(e.measured_paser),
            ]);
        }
        model_reports.push(ModelReport {
            model: model.name().to_string(),
            params: model.to_json_value()["params"].clone(),
            kendall_tau: ranking.kendall_tau,
            metrics: metrics_report(&measured, &predicted, cfg.seed)?,
        });
    }
    files.push((
        "scores.csv".to_string(),
        csv(&["section_id", "model", "paser", "paser_raw", "measured_paser"], score_rows),
    ));
    let ma_col = format!("paser_ma{}", cfg.window);
    files.push((
        "profiles.csv".to_string(),
        csv(&["section_id", "chainage_m", "paser", ma_col.as_str(), "model"], profile_rows),
    ));
    files.push((
        "rankings.csv".to_string(),
        csv(&["model", "rank", "section_id", "predicted_paser", "measured_paser"], ranking_rows),
    ));

    let report = ReportJson {
        n_sections: sections.len(),
        n_images: sections.iter().map(|s| s.images.len()).sum(),
        threshold: cfg.threshold,
        window: cfg.window,
        seed: cfg.seed,
        models: model_reports,
    };
    let mut json = serde_json::to_vec_pretty(&report).expect("report serializes");
    json.push(b'\n');
    files.push(("report.json".to_string(), json));

    Ok(ReportBundle { files })
}
