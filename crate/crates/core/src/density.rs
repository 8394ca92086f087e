//! Crack-density features: binarization of segmentation masks, global
//! white-pixel density and per-class density under the union of that
//! class's detection boxes.
//!
//! Densities are percentages of the full image area. A white pixel that
//! lies under boxes of two different classes counts toward both classes;
//! overlapping boxes of the same class count it once.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{BBox, Detection, DistressClass, Mask};
use crate::NUM_CLASSES;

#[derive(Debug, Error, PartialEq)]
pub enum DensityError {
    #[error("zero-area mask")]
    ZeroArea,
    #[error("invalid distress vector: {0}")]
    InvalidVector(String),
    #[error("unit mismatch: expected {expected}, got {actual}")]
    UnitMismatch { expected: FeatureUnit, actual: FeatureUnit },
}

/// Mask pixels at or above `lo` are crack pixels; the upper bound is 255.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DensityThreshold {
    pub lo: u8,
}

impl DensityThreshold {
    pub const T127: Self = Self { lo: 127 };
    pub const T200: Self = Self { lo: 200 };

    pub fn new(lo: u8) -> Self {
        Self { lo }
    }
}

impl Default for DensityThreshold {
    fn default() -> Self {
        Self::T127
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>) -> Result<Self, DensityError> {
        if bits.len() != width as usize * height as usize {
            return Err(DensityError::InvalidVector(format!(
                "bit count {} does not match {width}x{height}",
                bits.len()
            )));
        }
        Ok(Self { width, height, bits })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn area(&self) -> u64 {
        self.width as u64 * self.height as u64
    }

    pub fn count_true(&self) -> u64 {
        self.bits.iter().filter(|&&b| b).count() as u64
    }

    fn row(&self, y: u32) -> &[bool] {
        let w = self.width as usize;
        &self.bits[y as usize * w..(y as usize + 1) * w]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FeatureUnit {
    /// Mean number of detections per image.
    CountPerImage,
    /// Percentage of image pixels, 0..=100.
    PercentDensity,
}

impl std::fmt::Display for FeatureUnit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FeatureUnit::CountPerImage => "COUNT_PER_IMAGE",
            FeatureUnit::PercentDensity => "PERCENT_DENSITY",
        })
    }
}

/// The nine features d(1)..d(9); slot k-1 houses class D(k-1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistressVector {
    values: [f64; NUM_CLASSES],
    unit: FeatureUnit,
}

impl DistressVector {
    pub fn new(values: [f64; NUM_CLASSES], unit: FeatureUnit) -> Result<Self, DensityError> {
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(DensityError::InvalidVector(format!("d({}) = {v} must be finite and >= 0", i + 1)));
            }
            if unit == FeatureUnit::PercentDensity && v > 100.0 {
                return Err(DensityError::InvalidVector(format!("d({}) = {v} exceeds 100%", i + 1)));
            }
        }
        Ok(Self { values, unit })
    }

    pub fn zeros(unit: FeatureUnit) -> Self {
        Self { values: [0.0; NUM_CLASSES], unit }
    }

    pub fn values(&self) -> &[f64; NUM_CLASSES] {
        &self.values
    }

    pub fn unit(&self) -> FeatureUnit {
        self.unit
    }

    /// One-based accessor: `d(1)` is reflective cracking, `d(9)` potholes.
    pub fn d(&self, k: usize) -> f64 {
        self.values[k - 1]
    }

    pub fn expect_unit(&self, expected: FeatureUnit) -> Result<(), DensityError> {
        if self.unit == expected {
            Ok(())
        } else {
            Err(DensityError::UnitMismatch { expected, actual: self.unit })
        }
    }

    /// Index-ordered arithmetic mean; `None` for an empty slice or mixed units.
    pub fn mean(vectors: &[DistressVector]) -> Option<DistressVector> {
        let first = vectors.first()?;
        if vectors.iter().any(|v| v.unit != first.unit) {
            return None;
        }
        let mut sum = [0.0; NUM_CLASSES];
        for v in vectors {
            for (s, x) in sum.iter_mut().zip(v.values) {
                *s += x;
            }
        }
        let n = vectors.len() as f64;
        Some(DistressVector { values: sum.map(|s| s / n), unit: first.unit })
    }
}

/// Set union of axis-aligned boxes, already clipped to image bounds.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Region {
    rects: Vec<BBox>,
}

impl Region {
    pub fn rects(&self) -> &[BBox] {
        &self.rects
    }

    pub fn is_empty(&self) -> bool {
        self.rects.is_empty()
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        self.rects.iter().any(|r| x >= r.x && (x as u64) < r.right() && y >= r.y && (y as u64) < r.bottom())
    }

    /// Disjoint, sorted half-open column spans covered on row `y`.
    pub fn row_spans(&self, y: u32) -> Vec<(u32, u32)> {
        let mut spans: Vec<(u32, u32)> = self
            .rects
            .iter()
            .filter(|r| y >= r.y && (y as u64) < r.bottom())
            .map(|r| (r.x, r.right() as u32))
            .collect();
        spans.sort_unstable();
        let mut merged: Vec<(u32, u32)> = Vec::with_capacity(spans.len());
        for (a, b) in spans {
            match merged.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        merged
    }

    fn rows(&self) -> std::ops::Range<u32> {
        let top = self.rects.iter().map(|r| r.y).min().unwrap_or(0);
        let bottom = self.rects.iter().map(|r| r.bottom() as u32).max().unwrap_or(0);
        top..bottom
    }

    pub fn area(&self) -> u64 {
        self.rows().map(|y| self.row_spans(y).iter().map(|(a, b)| (b - a) as u64).sum::<u64>()).sum()
    }

    /// Number of crack pixels inside the region.
    pub fn count_true(&self, bm: &BinaryMask) -> u64 {
        self.rows()
            .filter(|&y| y < bm.height)
            .map(|y| {
                let row = bm.row(y);
                self.row_spans(y)
                    .iter()
                    .map(|&(a, b)| row[a as usize..(b.min(bm.width)) as usize].iter().filter(|&&v| v).count() as u64)
                    .sum::<u64>()
            })
            .sum()
    }
}

pub fn binarize(mask: &Mask, t: DensityThreshold) -> BinaryMask {
    BinaryMask { width: mask.width(), height: mask.height(), bits: mask.pixels().iter().map(|&p| p >= t.lo).collect() }
}

fn percent(count: u64, area: u64) -> Result<f64, DensityError> {
    if area == 0 {
        return Err(DensityError::ZeroArea);
    }
    Ok(100.0 * count as f64 / area as f64)
}

/// Percentage of crack pixels over the whole mask.
pub fn global_density(bm: &BinaryMask) -> Result<f64, DensityError> {
    percent(bm.count_true(), bm.area())
}

/// Union of all boxes of `class`, clipped to `bounds` (width, height).
pub fn class_pixel_union(dets: &[Detection], class: DistressClass, bounds: (u32, u32)) -> Region {
    let frame = BBox::new(0, 0, bounds.0, bounds.1);
    Region { rects: dets.iter().filter(|d| d.class == class).filter_map(|d| d.bbox.intersect(&frame)).collect() }
}

/// Crack pixels under the class's box union as a percentage of the whole image.
pub fn masked_class_density(bm: &BinaryMask, dets: &[Detection], class: DistressClass) -> Result<f64, DensityError> {
    let region = class_pixel_union(dets, class, (bm.width, bm.height));
    percent(region.count_true(bm), bm.area())
}

pub fn density_vector(bm: &BinaryMask, dets: &[Detection]) -> Result<DistressVector, DensityError> {
    let mut values = [0.0; NUM_CLASSES];
    for class in DistressClass::all() {
        values[class.index()] = masked_class_density(bm, dets, class)?;
    }
    DistressVector::new(values, FeatureUnit::PercentDensity)
}

/// Mean detections per image for each class.
pub fn count_vector(dets: &[Detection], n_images: usize) -> Result<DistressVector, DensityError> {
    if n_images == 0 {
        return Err(DensityError::InvalidVector("no images".into()));
    }
    let mut counts = [0u64; NUM_CLASSES];
    for d in dets {
        counts[d.class.index()] += 1;
    }
    DistressVector::new(counts.map(|c| c as f64 / n_images as f64), FeatureUnit::CountPerImage)
}
