//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_RED` are reported as FAIL but do not fail the
//! run; any other failure makes the process exit non-zero.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{
    d3_samples, fixture_bundle, formula_oracle, golden_mismatches, random_feature_vectors, totality_failures,
    validation_r2,
};
use paver_core::density::{binarize, density_vector, global_density, masked_class_density};
use paver_core::gep::{evolve, GepConfig};
use paver_core::ingest::{read_mask, write_mask, BBox};
use paver_core::metrics::{
    f1_score, importance_ranking, macro_average, mae, r_squared, rmse, split_dataset, variable_importance,
    PairedSeries, Prf,
};
use paver_core::predictors::{
    fit_linreg, gep_paser, linreg_paser, weight_paser, GepConstants, PaserModel, RegressionCoefficients, WeightTable,
};
use paver_core::{DensityThreshold, Detection, DistressClass, DistressVector, FeatureUnit, Mask};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

/// Criteria that cannot pass as stated, with the reason.
const KNOWN_RED: &[(usize, &str)] = &[(
    2,
    "the reference D5 column (P=0.93, R=0.83) gives F1=0.8772, 0.0072 from its stated 0.87; \
     that value is only reachable from unrounded P/R",
)];

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn pct(v: [f64; 9]) -> DistressVector {
    DistressVector::new(v, FeatureUnit::PercentDensity).unwrap()
}

fn counts(v: [f64; 9]) -> DistressVector {
    DistressVector::new(v, FeatureUnit::CountPerImage).unwrap()
}

fn c1_fixture_density() -> Outcome {
    let start = Instant::now();
    let (w, h) = (584u32, 565u32);
    let lane = BBox::new(120, 200, 300, 60);
    let mut mask = Mask::filled(w, h, 0).unwrap();
    let mut placed = 0;
    'fill: for y in lane.y..lane.y + lane.h {
        for x in (lane.x..lane.x + lane.w).step_by(7) {
            if placed == 521 {
                break 'fill;
            }
            mask.set(x, y, 255);
            placed += 1;
        }
    }
    // white pixels outside every box must not count
    for x in 0..50 {
        mask.set(x, 10, 255);
    }
    let mask = read_mask(&write_mask(&mask)).map_err(|e| e.to_string())?;
    let dets =
        [Detection { image_id: "lane".into(), class: DistressClass::LANE_LONGITUDINAL, bbox: lane, confidence: 0.9 }];
    let bm = binarize(&mask, DensityThreshold::default());
    let lane_density = masked_class_density(&bm, &dets, DistressClass::LANE_LONGITUDINAL).map_err(|e| e.to_string())?;
    let v = density_vector(&bm, &dets).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let want = 521.0 / (584.0 * 565.0) * 100.0;
    check((lane_density - want).abs() < 1e-9, format!("lane density {lane_density} != {want}"))?;
    check(v.d(7) == lane_density, "vector entry differs")?;
    check(v.d(9) == 0.0, format!("pothole density {}", v.d(9)))?;
    check(elapsed.as_secs_f64() < 1.0, format!("took {elapsed:?}"))?;
    Ok(format!("d(7) = {lane_density:.9}%, d(9) = 0, {:.1} ms", elapsed.as_secs_f64() * 1e3))
}

fn c2_f1_table() -> Outcome {
    let p = [0.93, 0.90, 0.93, 0.91, 0.91, 0.93, 0.93, 0.94, 0.96];
    let r = [0.76, 0.83, 0.79, 0.83, 0.74, 0.83, 0.79, 0.57, 0.78];
    let stated = [0.84, 0.86, 0.85, 0.87, 0.82, 0.87, 0.85, 0.71, 0.86];
    let per_class: Vec<Prf> = p.iter().zip(&r).map(|(&p, &r)| Prf::from_pr(Some(p), Some(r))).collect();
    let mut bad = Vec::new();
    for (k, (prf, &want)) in per_class.iter().zip(&stated).enumerate() {
        let f1 = prf.f1.unwrap();
        if (f1 - want).abs() > 0.005 {
            bad.push(format!("D{k}: F1 {f1:.4} vs stated {want}"));
        }
    }
    let (avg, warnings) = macro_average(&per_class);
    let (ap, ar, af) = (avg.precision.unwrap(), avg.recall.unwrap(), avg.f1.unwrap());
    for (name, got, want) in [("precision", ap, 0.93), ("recall", ar, 0.77), ("F1", af, 0.84)] {
        if (got - want).abs() > 0.005 {
            bad.push(format!("average {name} {got:.4} vs {want}"));
        }
    }
    check(warnings.is_empty(), "unexpected warnings")?;
    check(f1_score(0.94, 0.57).map(|f| (f - 0.7097).abs() < 5e-5) == Some(true), "D7 F1")?;
    let summary = format!("averages {ap:.4}/{ar:.4}/{af:.4}");
    if bad.is_empty() {
        Ok(format!("9/9 columns within 0.005, {summary}"))
    } else {
        Err(format!("{}; {summary}", bad.join("; ")))
    }
}

fn c3_formula_oracle() -> Outcome {
    let c = GepConstants::default();
    let mut worst: f64 = 0.0;
    for v in random_feature_vectors(1000, 2024) {
        let got = gep_paser(&counts(v), &c).map_err(|e| e.to_string())?.raw;
        worst = worst.max((got - formula_oracle::raw(&v)).abs());
    }
    check(worst <= 1e-9, format!("max deviation {worst:e}"))?;
    let zero = gep_paser(&counts([0.0; 9]), &c).map_err(|e| e.to_string())?.raw;
    check((zero - 8.7398).abs() <= 1e-3, format!("zero input {zero}"))?;
    Ok(format!("max |diff| {worst:.1e} over 1000 vectors; zero input {zero:.6}"))
}

fn c4_weight_model() -> Outcome {
    let w = WeightTable::default();
    check(weight_paser(&pct([0.0; 9]), &w).unwrap().value == 10.0, "zero vector is not 10.0")?;
    let expected = [0.4, 0.4, 0.4, 0.4, 0.4, 0.1, 0.1, 0.1];
    check(w.weights.map(f64::to_bits) == expected.map(f64::to_bits), "default weights differ")?;
    let loaded = PaserModel::from_json(r#"{"model":"weights"}"#).map_err(|e| e.to_string())?;
    check(loaded == PaserModel::Weights(w), "weights loaded from a model file differ")?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10_000 {
        let d: [f64; 9] = std::array::from_fn(|_| rng.gen_range(0.0..5.0));
        let a = rng.gen_range(0.0..20.0);
        let deduct = |v: [f64; 9]| 100.0 - 10.0 * weight_paser(&pct(v), &w).unwrap().raw;
        let (base, scaled) = (deduct(d), deduct(d.map(|x| a * x)));
        check((scaled - a * base).abs() <= 1e-9 * (1.0 + scaled.abs()), format!("deduct not linear at a={a}"))?;
    }
    Ok("zero -> 10.0, weights bit-exact, deduct(a*d) = a*deduct(d) on 10^4 cases".into())
}

fn c5_linear_regression() -> Outcome {
    let b = RegressionCoefficients::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let features: Vec<DistressVector> =
        (0..71).map(|_| pct(std::array::from_fn(|_| rng.gen_range(0.0..2.0)))).collect();
    let paser: Vec<f64> = features
        .iter()
        .map(|d| 0.1 * (100.0 - d.values().iter().zip(&b.coefficients).map(|(x, c)| x * c).sum::<f64>()))
        .collect();
    let fit = fit_linreg(&features, &paser).map_err(|e| e.to_string())?;
    let err = fit.coefficients.coefficients.iter().zip(&b.coefficients).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    check(err <= 1e-6, format!("coefficient error {err:e}"))?;
    let mut d = [0.0; 9];
    d[2] = 0.5;
    let s = linreg_paser(&pct(d), &b).map_err(|e| e.to_string())?.value;
    check((s - 7.61455).abs() <= 1e-9, format!("d(3)=0.5 gives {s}"))?;
    Ok(format!("max coefficient error {err:.1e}; d(3)=0.5 -> {s:.5}"))
}

fn c6_metrics() -> Outcome {
    let s = PairedSeries::new(vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 5.0]).unwrap();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    check(close(rmse(&s), (4.0f64 / 3.0).sqrt()), "rmse (1,2,3)/(1,2,5)")?;
    check(close(mae(&s), 2.0 / 3.0), "mae (1,2,3)/(1,2,5)")?;
    let r2 = r_squared(&s).unwrap();
    check(close(r2, 12.0 / 13.0), format!("r2 (1,2,3)/(1,2,5) = {r2}"))?;
    let s4 = PairedSeries::new(vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 4.0]).unwrap();
    check(close(r_squared(&s4).unwrap(), 27.0 / 28.0), "r2 (1,2,3)/(1,2,4)")?;
    let one = PairedSeries::new(vec![0.0], vec![3.0]).unwrap();
    check(rmse(&one) == 3.0 && mae(&one) == 3.0, "single pair")?;
    let same = PairedSeries::new(vec![1.0, 5.0, 2.0], vec![1.0, 5.0, 2.0]).unwrap();
    check(rmse(&same) == 0.0 && mae(&same) == 0.0 && close(r_squared(&same).unwrap(), 1.0), "identical series")?;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..10_000 {
        let n = rng.gen_range(1..40);
        let m: Vec<f64> = (0..n).map(|_| rng.gen_range(-100.0..100.0)).collect();
        let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-100.0..100.0)).collect();
        let s = PairedSeries::new(m, p).unwrap();
        check(rmse(&s) >= mae(&s) - 1e-12, "rmse < mae")?;
    }
    for _ in 0..1_000 {
        let n = rng.gen_range(3..40);
        let m: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let (a, c) = (rng.gen_range(0.1..5.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 }, rng.gen_range(-50.0..50.0));
        let base = r_squared(&PairedSeries::new(m.clone(), p.clone()).unwrap()).unwrap();
        let moved = r_squared(&PairedSeries::new(m, p.iter().map(|x| a * x + c).collect()).unwrap()).unwrap();
        check((base - moved).abs() <= 1e-9, format!("r2 changed under affine map: {base} vs {moved}"))?;
    }
    Ok("hand values to 1e-12 (r2 = 12/13 for (1,2,5)); rmse >= mae on 10^4; affine invariance on 10^3".into())
}

fn c7_threshold_monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..10_000 {
        let (w, h) = (rng.gen_range(1..24u32), rng.gen_range(1..24u32));
        let pixels: Vec<u8> = (0..w * h).map(|_| rng.gen()).collect();
        let mask = Mask::new(w, h, pixels).unwrap();
        let dets: Vec<Detection> = (0..rng.gen_range(0..4))
            .map(|_| {
                let (x, y) = (rng.gen_range(0..w), rng.gen_range(0..h));
                Detection {
                    image_id: "m".into(),
                    class: DistressClass::new(rng.gen_range(0..9)).unwrap(),
                    bbox: BBox::new(x, y, rng.gen_range(1..=w - x), rng.gen_range(1..=h - y)),
                    confidence: 1.0,
                }
            })
            .collect();
        let (lo, hi) = (binarize(&mask, DensityThreshold::T127), binarize(&mask, DensityThreshold::T200));
        let (dl, dh) = (density_vector(&lo, &dets).unwrap(), density_vector(&hi, &dets).unwrap());
        check(global_density(&lo).unwrap() >= global_density(&hi).unwrap(), format!("global density, mask {i}"))?;
        check(dl.values().iter().zip(dh.values()).all(|(a, b)| a >= b), format!("class density, mask {i}"))?;
    }
    Ok("threshold 127 >= threshold 200 on 10^4 random masks".into())
}

fn c8_gep_engine() -> Outcome {
    let fuzz_start = Instant::now();
    let failures = totality_failures(100_000, 8);
    check(failures == 0, format!("{failures} totality failures"))?;
    let fuzz = fuzz_start.elapsed();

    let samples = d3_samples(50, 1);
    let mut recovered = 0;
    let mut runs = Vec::new();
    let mut fastest = (u64::MAX, f64::INFINITY);
    for seed in 0..5 {
        let start = Instant::now();
        let r = evolve(&samples, &GepConfig { seed, ..GepConfig::default() }).map_err(|e| e.to_string())?;
        let secs = start.elapsed().as_secs_f64();
        let r2 = validation_r2(&r, &samples).unwrap_or(f64::NAN);
        if r2 >= 0.99 && secs < 60.0 {
            recovered += 1;
        }
        if secs < fastest.1 {
            fastest = (seed, secs);
        }
        runs.push(format!("seed {seed}: r2 {r2:.6} in {secs:.1}s"));
    }
    check(recovered >= 4, format!("{recovered}/5 recovered: {}", runs.join(", ")))?;
    let cfg = GepConfig { seed: fastest.0, ..GepConfig::default() };
    let (a, b) = (evolve(&samples, &cfg), evolve(&samples, &cfg));
    check(a == b, "rerun differs")?;
    Ok(format!(
        "10^5 random programs total ({:.1}s); {recovered}/5 seeds recovered y=d(3) [{}]; rerun identical",
        fuzz.as_secs_f64(),
        runs.join(", ")
    ))
}

fn c9_split_sizes() -> Outcome {
    for seed in 0..20 {
        let s = split_dataset(71, seed).map_err(|e| e.to_string())?;
        check(
            (s.train.len(), s.validation.len(), s.test.len()) == (49, 11, 11),
            format!("seed {seed}: {}/{}/{}", s.train.len(), s.validation.len(), s.test.len()),
        )?;
        let mut all: Vec<usize> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
        all.sort_unstable();
        check(all == (0..71).collect::<Vec<_>>(), "not a partition")?;
        check(split_dataset(71, seed).unwrap() == s, format!("seed {seed} not deterministic"))?;
    }
    Ok("n=71 -> 49/11/11 on 20 seeds, deterministic".into())
}

fn c10_report_golden() -> Outcome {
    let first = fixture_bundle(1);
    let bad = golden_mismatches(&first);
    check(bad.is_empty(), format!("differs from golden: {bad:?}"))?;
    check(fixture_bundle(1) == first, "second single-thread run differs")?;
    check(fixture_bundle(8) == first, "8-thread run differs")?;
    Ok(format!("{} files byte-identical to golden across reruns and 1/8 threads", first.files.len()))
}

fn c11_importance() -> Outcome {
    let c = GepConstants::default();
    let samples = random_feature_vectors(2000, 11);
    let model = |v: &[f64; 9]| gep_paser(&counts(*v), &c).map(|s| s.raw).unwrap_or(f64::NAN);
    let imp = variable_importance(model, &samples, 11);
    let rank = importance_ranking(&imp);
    check(rank[0] == 2, format!("top variable d({}), importances {imp:.3?}", rank[0] + 1))?;
    Ok(format!("d(3) first with {:.3} of total importance; next d({})", imp[2], rank[1] + 1))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("masked class density on a 584x565 mask", c1_fixture_density),
        ("F1 from reference precision/recall", c2_f1_table),
        ("GEP formula vs independent evaluator", c3_formula_oracle),
        ("weight deduct model", c4_weight_model),
        ("linear regression deduct model", c5_linear_regression),
        ("R2 / RMSE / MAE", c6_metrics),
        ("density threshold monotonicity", c7_threshold_monotonicity),
        ("GEP engine totality, recovery, determinism", c8_gep_engine),
        ("70/15/15 split sizes", c9_split_sizes),
        ("report bundle golden files", c10_report_golden),
        ("variable importance ranking", c11_importance),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut unexpected = 0;
    let mut passed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or(p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let known = KNOWN_RED.iter().find(|(k, _)| *k == id);
        match (&outcome, known) {
            (Ok(detail), _) => {
                passed += 1;
                println!("PASS {id:>2}  {name}: {detail}");
                if known.is_some() {
                    println!("        note: listed as known red but now passes");
                }
            }
            (Err(detail), Some((_, why))) => {
                println!("FAIL {id:>2}  {name}: {detail}");
                println!("        known red: {why}");
            }
            (Err(detail), None) => {
                unexpected += 1;
                println!("FAIL {id:>2}  {name}: {detail}");
            }
        }
    }
    println!("{passed}/{} criteria pass", criteria.len());
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
