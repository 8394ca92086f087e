use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{PredictError, RegressionCoefficients, DEDUCT_FEATURES};
use crate::density::{DistressVector, FeatureUnit};

/// Singular values below this fraction of the largest are treated as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Least-squares fit of the deduct `100 - 10 * PASER` through the origin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinregFit {
    pub coefficients: RegressionCoefficients,
    /// `None` when there are no residual degrees of freedom.
    pub std_errors: Option<[f64; DEDUCT_FEATURES]>,
    pub t_values: Option<[f64; DEDUCT_FEATURES]>,
    pub residual_std_error: Option<f64>,
    pub degrees_of_freedom: usize,
    pub n_samples: usize,
}

impl LinregFit {
    /// Coefficient table with one row per feature.
    pub fn table(&self) -> String {
        let mut out = String::from("variable  coefficient   std.error     t-value\n");
        for i in 0..DEDUCT_FEATURES {
            let se = self.std_errors.map(|s| format!("{:>11.3}", s[i])).unwrap_or_else(|| format!("{:>11}", "NA"));
            let t = self.t_values.map(|t| format!("{:>11.3}", t[i])).unwrap_or_else(|| format!("{:>11}", "NA"));
            out.push_str(&format!("d({})     {:>11.3} {se} {t}\n", i + 1, self.coefficients.coefficients[i]));
        }
        out
    }
}

pub fn fit_linreg(features: &[DistressVector], paser: &[f64]) -> Result<LinregFit, PredictError> {
    if features.len() != paser.len() {
        return Err(PredictError::LengthMismatch { features: features.len(), targets: paser.len() });
    }
    for d in features {
        d.expect_unit(FeatureUnit::PercentDensity)?;
    }
    let n = features.len();
    let p = DEDUCT_FEATURES;

    // Zero rows pad short designs so the SVD yields a full right basis.
    let rows = n.max(p);
    let x = DMatrix::from_fn(rows, p, |i, j| if i < n { features[i].values()[j] } else { 0.0 });
    let svd = x.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let smax = svd.singular_values.max();
    let cutoff = RANK_TOLERANCE * smax;
    let null_dirs: Vec<usize> = (0..p)
        .filter(|&k| svd.singular_values[k].partial_cmp(&cutoff) != Some(std::cmp::Ordering::Greater) || smax == 0.0)
        .collect();
    if !null_dirs.is_empty() {
        let mut unidentifiable: Vec<usize> =
            (0..p).filter(|&j| null_dirs.iter().any(|&k| v_t[(k, j)].abs() > 1e-8)).map(|j| j + 1).collect();
        unidentifiable.dedup();
        return Err(PredictError::RankDeficient { rank: p - null_dirs.len(), unidentifiable });
    }

    let x = x.rows(0, n).into_owned();
    let r = DVector::from_iterator(n, paser.iter().map(|y| 100.0 - 10.0 * y));
    let xtx = x.transpose() * &x;
    let xtr = x.transpose() * &r;
    let chol = xtx.clone().cholesky().ok_or(PredictError::RankDeficient { rank: p, unidentifiable: vec![] })?;
    let beta = chol.solve(&xtr);
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(PredictError::NonFinite { term: "coefficients" });
    }

    let residuals = &r - &x * &beta;
    let sse = residuals.norm_squared();
    let df = n - p;
    let (std_errors, t_values, rse) = if df > 0 {
        let sigma2 = sse / df as f64;
        let inv = chol.inverse();
        let se: [f64; DEDUCT_FEATURES] = std::array::from_fn(|i| (sigma2 * inv[(i, i)]).sqrt());
        let t: [f64; DEDUCT_FEATURES] = std::array::from_fn(|i| beta[i] / se[i]);
        (Some(se), Some(t), Some(sigma2.sqrt()))
    } else {
        (None, None, None)
    };

    Ok(LinregFit {
        coefficients: RegressionCoefficients { coefficients: std::array::from_fn(|i| beta[i]) },
        std_errors,
        t_values,
        residual_std_error: rse,
        degrees_of_freedom: df,
        n_samples: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictors::linreg_paser;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn synthetic(n: usize, seed: u64) -> (Vec<DistressVector>, Vec<f64>) {
        let b = RegressionCoefficients::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<DistressVector> = (0..n)
            .map(|_| {
                DistressVector::new(std::array::from_fn(|_| rng.gen_range(0.0..0.2)), FeatureUnit::PercentDensity)
                    .unwrap()
            })
            .collect();
        let ys = xs.iter().map(|d| linreg_paser(d, &b).unwrap().raw).collect();
        (xs, ys)
    }

    #[test]
    fn recovers_generating_coefficients() {
        let (xs, ys) = synthetic(60, 3);
        let fit = fit_linreg(&xs, &ys).unwrap();
        for (got, want) in fit.coefficients.coefficients.iter().zip(RegressionCoefficients::default().coefficients) {
            assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        }
        for (d, y) in xs.iter().zip(&ys) {
            assert!((linreg_paser(d, &fit.coefficients).unwrap().raw - y).abs() < 1e-9);
        }
        assert!(fit.residual_std_error.unwrap() < 1e-9);
        assert_eq!(fit.degrees_of_freedom, 52);
    }

    #[test]
    fn too_few_samples_is_rank_deficient() {
        let (xs, ys) = synthetic(4, 5);
        assert!(matches!(fit_linreg(&xs, &ys), Err(PredictError::RankDeficient { rank: 4, .. })));
    }

    #[test]
    fn zero_column_flagged() {
        let (mut xs, ys) = synthetic(30, 7);
        for d in xs.iter_mut() {
            let mut v = *d.values();
            v[4] = 0.0;
            *d = DistressVector::new(v, FeatureUnit::PercentDensity).unwrap();
        }
        match fit_linreg(&xs, &ys) {
            Err(PredictError::RankDeficient { rank, unidentifiable }) => {
                assert_eq!(rank, 7);
                assert_eq!(unidentifiable, vec![5]);
            }
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn exact_fit_has_no_diagnostics() {
        let (xs, ys) = synthetic(8, 9);
        let fit = fit_linreg(&xs, &ys).unwrap();
        assert_eq!(fit.degrees_of_freedom, 0);
        assert!(fit.std_errors.is_none());
        assert!(fit.table().contains("NA"));
    }

    #[test]
    fn length_mismatch() {
        let (xs, _) = synthetic(10, 1);
        assert!(matches!(fit_linreg(&xs, &[1.0]), Err(PredictError::LengthMismatch { .. })));
    }
}
