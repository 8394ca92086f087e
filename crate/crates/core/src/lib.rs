//! Pavement condition scoring on the PASER scale.
//!
//! The crate turns per-image distress detections (classes D0..D8) and
//! binary crack masks into PASER scores using three models: a closed-form
//! gene-expression formula over mean distress counts, a weighted-deduct
//! model and a linear-regression deduct model over per-class crack
//! densities. A small gene-expression-programming engine can evolve new
//! formulas, and the pipeline module aggregates sections, builds route
//! profiles and writes reproducible report bundles.

pub mod density;
pub mod gep;
pub mod ingest;
pub mod metrics;
pub mod pipeline;
pub mod predictors;

pub use density::{BinaryMask, DensityThreshold, DistressVector, FeatureUnit};
pub use ingest::{CropRect, Detection, DistressClass, Mask, SectionManifest};
pub use predictors::{PaserModel, PaserScore};

/// Number of distress classes (D0..D8) and entries in a distress vector.
pub const NUM_CLASSES: usize = 9;
