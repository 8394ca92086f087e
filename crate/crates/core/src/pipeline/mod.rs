//! End-to-end orchestration: per-image features, section aggregates,
//! moving-average route profiles, section rankings and report bundles.

mod report;
mod tables;

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::density::{self, DensityError, DensityThreshold, DistressVector, FeatureUnit};
use crate::gep::GepError;
use crate::ingest::{
    self, bearing_deg, Detection, IngestError, ManifestImage, Mask, SectionManifest, StreetViewRequest,
};
use crate::metrics::{kendall_tau, MetricsError};
use crate::predictors::{PaserModel, PaserScore, PredictError};

pub use report::{
    build_report, metrics_report, write_bundle, CorpusPaths, ReportBundle, ReportConfig, SplitMetrics, StreetViewConfig,
};
pub use tables::{read_feature_table, write_csv_row, FeatureTable};

/// Trailing moving-average window, in images.
pub const DEFAULT_WINDOW: usize = 20;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Ingest { path: String, source: IngestError },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Gep(#[from] GepError),
    #[error("missing mask for image {0}")]
    MissingMask(String),
    #[error("image {image_id}: {source}")]
    Image { image_id: String, source: IngestError },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("moving-average window must be at least 1")]
    ZeroWindow,
    #[error("configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Table(String),
}

impl PipelineError {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            PipelineError::Predict(PredictError::NonFinite { .. } | PredictError::RankDeficient { .. })
                | PipelineError::Metrics(MetricsError::ZeroVariance(_))
        )
    }
}

/// Features of one image after cropping.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageFeatures {
    pub image_id: String,
    /// Detections per class on this image (a count vector over one image).
    pub counts: DistressVector,
    pub densities: Option<DistressVector>,
    pub global_density: Option<f64>,
}

impl ImageFeatures {
    pub fn for_unit(&self, unit: FeatureUnit) -> Option<&DistressVector> {
        match unit {
            FeatureUnit::CountPerImage => Some(&self.counts),
            FeatureUnit::PercentDensity => self.densities.as_ref(),
        }
    }
}

/// Applies the image's crop (if any) to its mask and detections, then
/// computes counts and, when a mask is given, densities.
pub fn image_features(
    image: &ManifestImage,
    detections: &[Detection],
    mask: Option<&Mask>,
    threshold: DensityThreshold,
) -> Result<ImageFeatures, PipelineError> {
    let (dets, mask) = match image.crop {
        Some(rect) => {
            let cropped = mask
                .map(|m| ingest::apply_crop(m, &rect))
                .transpose()
                .map_err(|source| PipelineError::Image { image_id: image.image_id.clone(), source })?;
            let dets: Vec<Detection> = detections.iter().filter_map(|d| ingest::clip_detection(d, &rect)).collect();
            (dets, cropped)
        }
        None => (detections.to_vec(), mask.cloned()),
    };
    let counts = density::count_vector(&dets, 1)?;
    let (densities, global_density) = match &mask {
        Some(m) => {
            let bm = density::binarize(m, threshold);
            (Some(density::density_vector(&bm, &dets)?), Some(density::global_density(&bm)?))
        }
        None => (None, None),
    };
    Ok(ImageFeatures { image_id: image.image_id.clone(), counts, densities, global_density })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectionAggregate {
    pub section_id: String,
    pub mean_counts: DistressVector,
    pub mean_densities: Option<DistressVector>,
    pub n_images: usize,
    pub measured_paser: Option<f64>,
}

impl SectionAggregate {
    pub fn features(&self, unit: FeatureUnit) -> Option<&DistressVector> {
        match unit {
            FeatureUnit::CountPerImage => Some(&self.mean_counts),
            FeatureUnit::PercentDensity => self.mean_densities.as_ref(),
        }
    }
}

/// Means over the section's images. Sums run in image-id order so the
/// result does not depend on manifest order.
pub fn aggregate_images(
    section: &SectionManifest,
    images: &[ImageFeatures],
) -> Result<SectionAggregate, PipelineError> {
    if images.is_empty() {
        return Err(PipelineError::EmptyCorpus);
    }
    let mut sorted: Vec<&ImageFeatures> = images.iter().collect();
    sorted.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    let counts: Vec<DistressVector> = sorted.iter().map(|f| f.counts).collect();
    let mean_counts = DistressVector::mean(&counts).expect("non-empty");
    let mean_densities =
        sorted.iter().map(|f| f.densities).collect::<Option<Vec<_>>>().and_then(|v| DistressVector::mean(&v));
    Ok(SectionAggregate {
        section_id: section.section_id.clone(),
        mean_counts,
        mean_densities,
        n_images: images.len(),
        measured_paser: section.measured_paser,
    })
}

/// Source of masks keyed by image id.
pub trait MaskSource: Sync {
    fn mask(&self, image_id: &str) -> Result<Option<Mask>, PipelineError>;
}

impl MaskSource for HashMap<String, Mask> {
    fn mask(&self, image_id: &str) -> Result<Option<Mask>, PipelineError> {
        Ok(self.get(image_id).cloned())
    }
}

/// Reads `<image_id>.pgm` from a directory.
pub struct MaskDir(pub std::path::PathBuf);

impl MaskSource for MaskDir {
    fn mask(&self, image_id: &str) -> Result<Option<Mask>, PipelineError> {
        let path = self.0.join(format!("{image_id}.pgm"));
        match std::fs::read(&path) {
            Ok(bytes) => ingest::read_mask(&bytes)
                .map(Some)
                .map_err(|source| PipelineError::Ingest { path: path.display().to_string(), source }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(source) => Err(PipelineError::Io { path: path.display().to_string(), source }),
        }
    }
}

/// Per-image features for a whole section, in manifest order.
pub fn section_image_features(
    section: &SectionManifest,
    detections: &HashMap<String, Vec<Detection>>,
    masks: &dyn MaskSource,
    threshold: DensityThreshold,
    need_density: bool,
) -> Result<Vec<ImageFeatures>, PipelineError> {
    section
        .images
        .iter()
        .map(|img| {
            let mask = masks.mask(&img.image_id)?;
            if need_density && mask.is_none() {
                return Err(PipelineError::MissingMask(img.image_id.clone()));
            }
            let dets = detections.get(&img.image_id).map(Vec::as_slice).unwrap_or(&[]);
            image_features(img, dets, mask.as_ref(), threshold)
        })
        .collect()
}

pub fn aggregate_section(
    section: &SectionManifest,
    detections: &HashMap<String, Vec<Detection>>,
    masks: &dyn MaskSource,
    threshold: DensityThreshold,
    need_density: bool,
) -> Result<SectionAggregate, PipelineError> {
    let images = section_image_features(section, detections, masks, threshold, need_density)?;
    aggregate_images(section, &images)
}

/// Groups detections by image id, dropping those under `min_confidence`.
pub fn group_detections(dets: Vec<Detection>, min_confidence: f64) -> HashMap<String, Vec<Detection>> {
    let mut map: HashMap<String, Vec<Detection>> = HashMap::new();
    for d in dets.into_iter().filter(|d| d.confidence >= min_confidence) {
        map.entry(d.image_id.clone()).or_default().push(d);
    }
    map
}

/// Trailing mean over the last `window` values, using a partial window
/// at the start. Each output lies within the range of its window.
pub fn moving_average(series: &[f64], window: usize) -> Result<Vec<f64>, PipelineError> {
    if window == 0 {
        return Err(PipelineError::ZeroWindow);
    }
    Ok((0..series.len())
        .map(|i| {
            let w = &series[(i + 1).saturating_sub(window)..=i];
            let lo = w.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (w.iter().sum::<f64>() / w.len() as f64).clamp(lo, hi)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectionProfile {
    pub section_id: String,
    pub model: String,
    pub window: usize,
    pub chainage_m: Vec<f64>,
    pub paser: Vec<f64>,
    pub paser_ma: Vec<f64>,
}

/// Scores every image of a section and smooths the series along chainage.
/// Chainage starts at 0 and advances by each image's spacing.
pub fn score_profile(
    section: &SectionManifest,
    model: &PaserModel,
    features: &[DistressVector],
    window: usize,
) -> Result<SectionProfile, PipelineError> {
    if features.len() != section.images.len() {
        return Err(PipelineError::Config(format!(
            "section {}: {} feature rows for {} images",
            section.section_id,
            features.len(),
            section.images.len()
        )));
    }
    let paser = features.iter().map(|d| model.predict(d).map(|s| s.value)).collect::<Result<Vec<_>, _>>()?;
    let mut chainage_m = Vec::with_capacity(paser.len());
    let mut at = 0.0;
    for img in &section.images {
        chainage_m.push(at);
        at += img.spacing_m;
    }
    Ok(SectionProfile {
        section_id: section.section_id.clone(),
        model: model.name().to_string(),
        window,
        chainage_m,
        paser_ma: moving_average(&paser, window)?,
        paser,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedSection {
    pub rank: usize,
    pub section_id: String,
    pub predicted: PaserScore,
    pub measured_paser: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ranking {
    pub model: String,
    pub entries: Vec<RankedSection>,
    /// Kendall tau-b between predicted and measured PASER over sections
    /// that have a measurement.
    pub kendall_tau: Option<f64>,
}

/// Orders sections best first (descending predicted PASER), breaking ties
/// by section id.
pub fn rank_sections(aggregates: &[SectionAggregate], model: &PaserModel) -> Result<Ranking, PipelineError> {
    let mut scored = aggregates
        .iter()
        .map(|a| {
            let d = a.features(model.unit()).ok_or_else(|| {
                PipelineError::Config(format!("section {} lacks {} features", a.section_id, model.unit()))
            })?;
            Ok((a, model.predict(d)?))
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    scored.sort_by(|(a, sa), (b, sb)| sb.value.total_cmp(&sa.value).then_with(|| a.section_id.cmp(&b.section_id)));

    let (pred, meas): (Vec<f64>, Vec<f64>) =
        scored.iter().filter_map(|(a, s)| a.measured_paser.map(|m| (s.value, m))).unzip();
    Ok(Ranking {
        model: model.name().to_string(),
        kendall_tau: kendall_tau(&pred, &meas),
        entries: scored
            .into_iter()
            .enumerate()
            .map(|(i, (a, s))| RankedSection {
                rank: i + 1,
                section_id: a.section_id.clone(),
                predicted: s,
                measured_paser: a.measured_paser,
            })
            .collect(),
    })
}

/// Aggregates all sections in parallel; output keeps manifest order.
pub fn aggregate_corpus(
    sections: &[SectionManifest],
    detections: &HashMap<String, Vec<Detection>>,
    masks: &dyn MaskSource,
    threshold: DensityThreshold,
    need_density: bool,
) -> Result<Vec<(Vec<ImageFeatures>, SectionAggregate)>, PipelineError> {
    sections
        .par_iter()
        .map(|s| {
            let images = section_image_features(s, detections, masks, threshold, need_density)?;
            let agg = aggregate_images(s, &images)?;
            Ok((images, agg))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageUrl {
    pub section_id: String,
    pub image_id: String,
    pub heading: f64,
    pub url: String,
    pub nonstandard_pitch: bool,
}

/// One street-view URL per manifest image. Without a configured heading
/// each image looks toward the next image of its section (the last one
/// keeps the previous bearing).
pub fn streetview_urls(sections: &[SectionManifest], cfg: &StreetViewConfig) -> Result<Vec<ImageUrl>, PipelineError> {
    let mut out = Vec::new();
    for s in sections {
        let imgs = &s.images;
        for (i, img) in imgs.iter().enumerate() {
            let heading = match cfg.heading {
                Some(h) => h,
                None if imgs.len() < 2 => 0.0,
                None => {
                    let (a, b) = if i + 1 < imgs.len() { (img, &imgs[i + 1]) } else { (&imgs[i - 1], img) };
                    bearing_deg(a.latitude, a.longitude, b.latitude, b.longitude)
                }
            };
            let req = StreetViewRequest {
                latitude: img.latitude,
                longitude: img.longitude,
                pitch: cfg.pitch,
                heading,
                image_size: cfg.size,
                api_key: cfg.key.clone(),
            };
            let built = ingest::build_streetview_url(&req, &cfg.base_url)
                .map_err(|source| PipelineError::Image { image_id: img.image_id.clone(), source })?;
            out.push(ImageUrl {
                section_id: s.section_id.clone(),
                image_id: img.image_id.clone(),
                heading,
                url: built.url,
                nonstandard_pitch: built.nonstandard_pitch,
            });
        }
    }
    Ok(out)
}
