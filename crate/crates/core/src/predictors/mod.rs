//! PASER prediction models and the least-squares fit of the deduct model.

mod gep_formula;
mod linreg;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::density::{DensityError, DistressVector, FeatureUnit};
use crate::gep::{evaluate_raw, render_program, Chromosome, Gene};

pub use gep_formula::{gep_paser, gep_terms, GepConstants};
pub use linreg::{fit_linreg, LinregFit, RANK_TOLERANCE};

/// Number of features consumed by the deduct models; potholes carry no weight.
pub const DEDUCT_FEATURES: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum PredictError {
    #[error(transparent)]
    Feature(#[from] DensityError),
    #[error("non-finite value in sub-term {term}")]
    NonFinite { term: &'static str },
    #[error("rank-deficient design matrix (rank {rank} of {DEDUCT_FEATURES}); unidentifiable coefficients: {unidentifiable:?}")]
    RankDeficient { rank: usize, unidentifiable: Vec<usize> },
    #[error("length mismatch: {features} feature rows vs {targets} targets")]
    LengthMismatch { features: usize, targets: usize },
    #[error("invalid model file: {0}")]
    ModelFile(String),
}

/// A PASER score clamped to [0, 10], with the unclamped value kept for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PaserScore {
    pub value: f64,
    pub raw: f64,
}

impl PaserScore {
    pub const MIN: f64 = 0.0;
    pub const MAX: f64 = 10.0;

    pub fn from_raw(raw: f64) -> Self {
        Self { value: raw.clamp(Self::MIN, Self::MAX), raw }
    }
}

/// Distress weights w(1)..w(8) of the weighted-deduct model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightTable {
    pub weights: [f64; DEDUCT_FEATURES],
}

impl Default for WeightTable {
    fn default() -> Self {
        Self { weights: [0.4, 0.4, 0.4, 0.4, 0.4, 0.1, 0.1, 0.1] }
    }
}

/// Intercept-free coefficients B(1)..B(8) of the regression deduct model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionCoefficients {
    pub coefficients: [f64; DEDUCT_FEATURES],
}

impl Default for RegressionCoefficients {
    fn default() -> Self {
        Self { coefficients: [100.433, -40.603, 47.709, 70.774, 40.781, 14.959, 20.856, 7.887] }
    }
}

/// Σ c(i)·d(i) over the first eight features.
pub fn deduct(d: &DistressVector, coefficients: &[f64; DEDUCT_FEATURES]) -> f64 {
    coefficients.iter().zip(d.values()).map(|(c, x)| c * x).sum()
}

fn deduct_score(d: &DistressVector, coefficients: &[f64; DEDUCT_FEATURES]) -> Result<PaserScore, PredictError> {
    d.expect_unit(FeatureUnit::PercentDensity)?;
    let raw = 0.1 * (100.0 - deduct(d, coefficients));
    if !raw.is_finite() {
        return Err(PredictError::NonFinite { term: "deduct" });
    }
    Ok(PaserScore::from_raw(raw))
}

/// PASER = 0.1 (100 − Σ w(i) d(i)) over percent densities.
pub fn weight_paser(d: &DistressVector, w: &WeightTable) -> Result<PaserScore, PredictError> {
    deduct_score(d, &w.weights)
}

/// PASER = 0.1 (100 − Σ B(i) d(i)) over percent densities.
pub fn linreg_paser(d: &DistressVector, b: &RegressionCoefficients) -> Result<PaserScore, PredictError> {
    deduct_score(d, &b.coefficients)
}

#[derive(Debug, Clone, PartialEq)]
pub enum PaserModel {
    Gep(GepConstants),
    Weights(WeightTable),
    Linreg(RegressionCoefficients),
    /// A chromosome evolved by `gep::evolve`, over features of `unit`.
    Program {
        chromosome: Chromosome,
        unit: FeatureUnit,
    },
}

#[derive(Serialize, Deserialize)]
struct ProgramParams {
    unit: FeatureUnit,
    genes: Vec<Gene>,
    /// Human-readable rendering; ignored when reading.
    #[serde(default, skip_deserializing)]
    formula: String,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    model: String,
    #[serde(default)]
    params: Value,
}

impl PaserModel {
    pub fn gep() -> Self {
        Self::Gep(GepConstants::default())
    }

    pub fn weights() -> Self {
        Self::Weights(WeightTable::default())
    }

    pub fn linreg() -> Self {
        Self::Linreg(RegressionCoefficients::default())
    }

    /// Default-parameter model for `gep`, `weights` or `linreg`.
    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "gep" => Some(Self::gep()),
            "weights" => Some(Self::weights()),
            "linreg" => Some(Self::linreg()),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Gep(_) => "gep",
            Self::Weights(_) => "weights",
            Self::Linreg(_) => "linreg",
            Self::Program { .. } => "gep_program",
        }
    }

    /// Feature unit the model was built on.
    pub fn unit(&self) -> FeatureUnit {
        match self {
            Self::Gep(_) => FeatureUnit::CountPerImage,
            Self::Weights(_) | Self::Linreg(_) => FeatureUnit::PercentDensity,
            Self::Program { unit, .. } => *unit,
        }
    }

    pub fn predict(&self, d: &DistressVector) -> Result<PaserScore, PredictError> {
        match self {
            Self::Gep(c) => gep_paser(d, c),
            Self::Weights(w) => weight_paser(d, w),
            Self::Linreg(b) => linreg_paser(d, b),
            Self::Program { chromosome, unit } => {
                d.expect_unit(*unit)?;
                let raw = evaluate_raw(chromosome, d.values());
                if !raw.is_finite() {
                    return Err(PredictError::NonFinite { term: "program" });
                }
                Ok(PaserScore::from_raw(raw))
            }
        }
    }

    /// Parses `{"model": ..., "params": {...}}`; missing params take defaults.
    pub fn from_json_value(v: &Value) -> Result<Self, PredictError> {
        let file: ModelFile = serde_json::from_value(v.clone()).map_err(|e| PredictError::ModelFile(e.to_string()))?;
        let params = if file.params.is_null() { Value::Object(Default::default()) } else { file.params };
        let bad = |e: serde_json::Error| PredictError::ModelFile(format!("{}: {e}", file.model));
        Ok(match file.model.as_str() {
            "gep" => Self::Gep(serde_json::from_value(params).map_err(bad)?),
            "weights" => {
                Self::Weights(serde_json::from_value(with_default(params, WeightTable::default())).map_err(bad)?)
            }
            "linreg" => Self::Linreg(
                serde_json::from_value(with_default(params, RegressionCoefficients::default())).map_err(bad)?,
            ),
            "gep_program" => {
                let p: ProgramParams = serde_json::from_value(params).map_err(bad)?;
                let chromosome = Chromosome { genes: p.genes };
                chromosome.validate().map_err(|e| PredictError::ModelFile(e.to_string()))?;
                Self::Program { chromosome, unit: p.unit }
            }
            other => return Err(PredictError::ModelFile(format!("unknown model {other:?}"))),
        })
    }

    pub fn from_json(text: &str) -> Result<Self, PredictError> {
        let v: Value = serde_json::from_str(text).map_err(|e| PredictError::ModelFile(e.to_string()))?;
        Self::from_json_value(&v)
    }

    pub fn to_json_value(&self) -> Value {
        let params = match self {
            Self::Gep(c) => serde_json::to_value(c),
            Self::Weights(w) => serde_json::to_value(w),
            Self::Linreg(b) => serde_json::to_value(b),
            Self::Program { chromosome, unit } => serde_json::to_value(ProgramParams {
                unit: *unit,
                genes: chromosome.genes.clone(),
                formula: render_program(chromosome),
            }),
        }
        .expect("model parameters serialize");
        serde_json::to_value(ModelFile { model: self.name().to_string(), params }).expect("model file serializes")
    }
}

fn with_default<T: Serialize>(params: Value, default: T) -> Value {
    let mut base = serde_json::to_value(default).expect("defaults serialize");
    if let (Value::Object(b), Value::Object(p)) = (&mut base, params) {
        b.extend(p);
    }
    base
}
