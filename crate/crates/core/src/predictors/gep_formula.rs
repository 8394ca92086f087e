// Closed-form PASER model evolved by gene expression programming over mean
// distress counts per image. The six sub-terms are linked by addition.
//
// Conventions: x^(1/3) is the signed real cube root; reallog is ln restricted
// to positive arguments; Y2 is read as
//   sin(sin(tanh((d9 + (min(d8 - d1, min(G2C4, d6)) + (G2C7 + G2C7))) - d4)))

use serde::{Deserialize, Serialize};

use super::{PaserScore, PredictError};
use crate::density::{DistressVector, FeatureUnit};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GepConstants {
    #[serde(rename = "G2C7")]
    pub g2c7: f64,
    #[serde(rename = "G2C4")]
    pub g2c4: f64,
    #[serde(rename = "G3C6")]
    pub g3c6: f64,
    #[serde(rename = "G3C8")]
    pub g3c8: f64,
    #[serde(rename = "G4C2")]
    pub g4c2: f64,
    #[serde(rename = "G5C9")]
    pub g5c9: f64,
    #[serde(rename = "G5C4")]
    pub g5c4: f64,
    #[serde(rename = "G5C3")]
    pub g5c3: f64,
    #[serde(rename = "G5C2")]
    pub g5c2: f64,
    #[serde(rename = "G6C6")]
    pub g6c6: f64,
    #[serde(rename = "G6C9")]
    pub g6c9: f64,
}

impl Default for GepConstants {
    fn default() -> Self {
        Self {
            g2c7: -0.19,
            g2c4: 0.51,
            g3c6: 9.60,
            g3c8: 10.07,
            g4c2: 5.40,
            g5c9: 2.57,
            g5c4: 1.83,
            g5c3: 6.68,
            g5c2: -7.18,
            g6c6: -6.74,
            g6c9: -3.36,
        }
    }
}

fn finite(term: &'static str, v: f64) -> Result<f64, PredictError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(PredictError::NonFinite { term })
    }
}

fn reallog(term: &'static str, x: f64) -> Result<f64, PredictError> {
    if x > 0.0 {
        Ok(x.ln())
    } else {
        Err(PredictError::NonFinite { term })
    }
}

fn reciprocal(term: &'static str, x: f64) -> Result<f64, PredictError> {
    if x == 0.0 {
        Err(PredictError::NonFinite { term })
    } else {
        finite(term, 1.0 / x)
    }
}

/// The six sub-terms Y1..Y6, in order.
pub fn gep_terms(d: &DistressVector, c: &GepConstants) -> Result<[f64; 6], PredictError> {
    let [d1, d2, d3, d4, d5, d6, d7, d8, d9] = *d.values();

    let y1 = (d9.cbrt() - (d5 - d3).powi(2)).atan();

    let y2 = (((d9 + ((d8 - d1).min(c.g2c4.min(d6)) + (c.g2c7 + c.g2c7))) - d4).tanh().sin()).sin();

    let y3 = (d6.min((((d3 + c.g3c8).cbrt() + d2) / d6.exp()) - (c.g3c6 - (1.0 - d1)))).exp();

    let y4 = d9.min((((d5.exp() * d5.min(d1)).min(c.g4c2 - d2)) + d6).sin());

    let y5 = {
        let product = ((c.g5c3 + c.g5c2) + (d3 + d1)).cbrt() * (d7 + c.g5c9).cbrt();
        let tail = reallog("Y5", d6.max(c.g5c4))?.exp();
        reciprocal("Y5", product + tail)?
    };

    let y6 = 1.0 - (d2.min(c.g6c6) - ((reciprocal("Y6", c.g6c9 - d4)? * ((d3 + d1) + d3)) - d9));

    Ok([
        finite("Y1", y1)?,
        finite("Y2", y2)?,
        finite("Y3", y3)?,
        finite("Y4", y4)?,
        finite("Y5", y5)?,
        finite("Y6", y6)?,
    ])
}

/// Evaluates the closed-form model on mean counts per image.
pub fn gep_paser(d: &DistressVector, c: &GepConstants) -> Result<PaserScore, PredictError> {
    d.expect_unit(FeatureUnit::CountPerImage)?;
    let raw: f64 = gep_terms(d, c)?.iter().sum();
    Ok(PaserScore::from_raw(finite("Y", raw)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(v: [f64; 9]) -> DistressVector {
        DistressVector::new(v, FeatureUnit::CountPerImage).unwrap()
    }

    #[test]
    fn zero_input_terms() {
        let t = gep_terms(&counts([0.0; 9]), &GepConstants::default()).unwrap();
        assert_eq!(t[0], 0.0);
        assert!((t[1] - -0.347_409_251_709_798_5).abs() < 1e-12);
        assert!((t[2] - 0.001_595_528_930_280_46).abs() < 1e-12);
        assert_eq!(t[3], 0.0);
        assert!((t[4] - 1.346_219_288_658_72).abs() < 1e-12);
        assert!((t[5] - 7.74).abs() < 1e-12);
        let s = gep_paser(&counts([0.0; 9]), &GepConstants::default()).unwrap();
        assert!((s.raw - 8.7398).abs() < 1e-3);
        assert_eq!(s.value, s.raw);
    }

    #[test]
    fn singular_denominators_are_reported_by_term() {
        // G6C9 = 0 makes 1/(G6C9 - d4) blow up at d4 = 0
        let c = GepConstants { g6c9: 0.0, ..GepConstants::default() };
        assert_eq!(gep_paser(&counts([0.0; 9]), &c), Err(PredictError::NonFinite { term: "Y6" }));
        let c = GepConstants { g5c4: -1.0, ..GepConstants::default() };
        assert_eq!(gep_paser(&counts([0.0; 9]), &c), Err(PredictError::NonFinite { term: "Y5" }));
    }

    #[test]
    fn rejects_percent_features() {
        let d = DistressVector::zeros(FeatureUnit::PercentDensity);
        assert!(matches!(gep_paser(&d, &GepConstants::default()), Err(PredictError::Feature(_))));
    }
}
