//! Parsing of every external input: detections, masks, crop rectangles,
//! section manifests and street-view request URLs.

mod detections;
mod manifest;
mod pgm;
mod streetview;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use detections::{clip_detection, parse_detections, write_detection_line};
pub use manifest::{
    parse_manifest, parse_manifest_with_defaults, ManifestImage, SectionManifest, DEFAULT_SPACING_M, DEFAULT_VIEW_M,
};
pub use pgm::{apply_crop, read_mask, write_mask, Mask};
pub use streetview::{
    bearing_deg, build_streetview_url, StreetViewRequest, StreetViewUrl, DEFAULT_STREETVIEW_BASE_URL, PITCH_TOP_DOWN,
    PITCH_WIDE_VIEW,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: malformed record: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: class out of range: {class_id} (expected 0..=8)")]
    ClassOutOfRange { line: usize, class_id: i64 },
    #[error("line {line}: invalid bounding box: {reason}")]
    InvalidBox { line: usize, reason: String },
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("truncated pixel data: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("crop rectangle {rect} exceeds {width}x{height} image")]
    CropOutOfBounds { rect: CropRect, width: u32, height: u32 },
    #[error("coordinate out of range: {0}")]
    CoordinateOutOfRange(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("invalid url: {0}")]
    Url(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One of the nine distress classes, D0 through D8.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct DistressClass(u8);

impl DistressClass {
    pub const REFLECTIVE: Self = Self(0);
    pub const TRANSVERSE: Self = Self(1);
    pub const BLOCK: Self = Self(2);
    pub const LONGITUDINAL: Self = Self(3);
    pub const ALLIGATOR: Self = Self(4);
    pub const SEALED_REFLECTIVE: Self = Self(5);
    pub const LANE_LONGITUDINAL: Self = Self(6);
    pub const SEALED_LONGITUDINAL: Self = Self(7);
    pub const POTHOLE: Self = Self(8);

    pub fn new(id: u8) -> Option<Self> {
        (id < 9).then_some(Self(id))
    }

    pub fn all() -> impl Iterator<Item = Self> {
        (0..9).map(Self)
    }

    pub fn id(self) -> u8 {
        self.0
    }

    /// Zero-based slot in a distress vector; d(k) houses class D(k-1).
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> &'static str {
        match self.0 {
            0 => "reflective crack",
            1 => "transverse crack",
            2 => "block crack",
            3 => "longitudinal crack",
            4 => "alligator crack",
            5 => "sealed reflective crack",
            6 => "lane longitudinal crack",
            7 => "sealed longitudinal crack",
            _ => "pothole",
        }
    }
}

impl TryFrom<u8> for DistressClass {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        Self::new(value).ok_or_else(|| format!("class out of range: {value}"))
    }
}

impl From<DistressClass> for u8 {
    fn from(c: DistressClass) -> u8 {
        c.0
    }
}

impl fmt::Display for DistressClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "D{}", self.0)
    }
}

/// Axis-aligned pixel box, origin top-left, `w` and `h` strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BBox {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn right(&self) -> u64 {
        self.x as u64 + self.w as u64
    }

    pub fn bottom(&self) -> u64 {
        self.y as u64 + self.h as u64
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    /// Intersection with another box, `None` when empty.
    pub fn intersect(&self, other: &BBox) -> Option<BBox> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        if x1 <= x0 as u64 || y1 <= y0 as u64 {
            return None;
        }
        Some(BBox::new(x0, y0, (x1 - x0 as u64) as u32, (y1 - y0 as u64) as u32))
    }
}

/// One classified distress instance on one image.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub image_id: String,
    pub class: DistressClass,
    pub bbox: BBox,
    pub confidence: f64,
}

/// Road window within an image; everything outside it is ignored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CropRect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl CropRect {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn full(width: u32, height: u32) -> Self {
        Self::new(0, 0, width, height)
    }

    pub fn as_bbox(&self) -> BBox {
        BBox::new(self.x, self.y, self.w, self.h)
    }

    pub fn fits_within(&self, width: u32, height: u32) -> bool {
        self.w > 0
            && self.h > 0
            && self.x as u64 + self.w as u64 <= width as u64
            && self.y as u64 + self.h as u64 <= height as u64
    }
}

impl fmt::Display for CropRect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{},{})", self.x, self.y, self.w, self.h)
    }
}
