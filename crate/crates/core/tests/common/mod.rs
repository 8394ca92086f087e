//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Upper bounds of the nine mean-count features observed on the surveyed
/// sections; the lower bounds are all zero.
pub const FEATURE_MAXIMA: [f64; 9] = [2.09, 1.07, 4.32, 0.94, 0.92, 4.07, 1.37, 2.65, 0.08];

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/corpus")
}

/// Uniform vectors inside the observed feature box.
pub fn random_feature_vectors(n: usize, seed: u64) -> Vec<[f64; 9]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| std::array::from_fn(|k| rng.gen_range(0.0..=FEATURE_MAXIMA[k]))).collect()
}

pub mod formula_oracle {
    //! A second, deliberately separate evaluator of the reference GEP
    //! formula. It parses the six sub-expressions as text, exactly as the
    //! reference writes them, and evaluates them while parsing. `x^(1/3)`
    //! is the signed real cube root; `reallog` is ln on positive arguments.
    //! The reference text has a few unbalanced parentheses: surplus
    //! trailing `)` are ignored and missing ones are closed at the end of
    //! the expression.

    pub const Y: [&str; 6] = [
        "arctan((d(9)^(1/3) - ((d(5) - d(3))^2)))",
        "sin(sin(tanh(((d(9) + (min((d(8) - d(1)), min(G2C4, d(6))) + (G2C7 + G2C7))) - d(4))))))",
        "(exp(min(d(6), (((d(3) + G3C8)^(1/3) + d(2))/exp(d(6))) - (G3C6 - (1.0 - d(1))))))",
        "min(d(9), sin((min((exp(d(5)) * min(d(5), d(1))), (G4C2 - d(2))) + d(6)))",
        "(1.0/((((G5C3 + G5C2) + (d(3) + d(1))))^(1/3) * ((d(7) + G5C9))^(1/3) + exp(reallog(max(d(6), G5C4))))))",
        "(1.0 - (min(d(2), G6C6) - (((1.0/((G6C9 - d(4)))) * ((d(3) + d(1)) + d(3))) - d(9)))",
    ];

    pub const CONSTANTS: [(&str, f64); 11] = [
        ("G2C7", -0.19),
        ("G2C4", 0.51),
        ("G3C6", 9.60),
        ("G3C8", 10.07),
        ("G4C2", 5.40),
        ("G5C9", 2.57),
        ("G5C4", 1.83),
        ("G5C3", 6.68),
        ("G5C2", -7.18),
        ("G6C6", -6.74),
        ("G6C9", -3.36),
    ];

    struct Parser<'a> {
        s: &'a [u8],
        pos: usize,
        d: &'a [f64; 9],
    }

    impl Parser<'_> {
        fn ws(&mut self) {
            while self.s.get(self.pos).is_some_and(|c| c.is_ascii_whitespace()) {
                self.pos += 1;
            }
        }

        fn peek(&mut self) -> Option<u8> {
            self.ws();
            self.s.get(self.pos).copied()
        }

        fn eat(&mut self, c: u8) -> bool {
            if self.peek() == Some(c) {
                self.pos += 1;
                true
            } else {
                false
            }
        }

        fn close(&mut self) {
            // a missing `)` at the end of the text is implied
            if !self.eat(b')') {
                assert!(self.peek().is_none(), "expected ')' at {}", self.pos);
            }
        }

        fn expr(&mut self) -> f64 {
            let mut v = self.term();
            loop {
                if self.eat(b'+') {
                    v += self.term();
                } else if self.eat(b'-') {
                    v -= self.term();
                } else {
                    return v;
                }
            }
        }

        fn term(&mut self) -> f64 {
            let mut v = self.power();
            loop {
                if self.eat(b'*') {
                    v *= self.power();
                } else if self.eat(b'/') {
                    v /= self.power();
                } else {
                    return v;
                }
            }
        }

        fn power(&mut self) -> f64 {
            let base = self.atom();
            if !self.eat(b'^') {
                return base;
            }
            let start = self.pos;
            let exp = self.atom();
            let text: String = String::from_utf8_lossy(&self.s[start..self.pos]).split_whitespace().collect();
            if text == "(1/3)" {
                base.cbrt()
            } else {
                base.powf(exp)
            }
        }

        fn ident(&mut self) -> String {
            self.ws();
            let start = self.pos;
            while self.s.get(self.pos).is_some_and(|c| c.is_ascii_alphanumeric()) {
                self.pos += 1;
            }
            String::from_utf8_lossy(&self.s[start..self.pos]).into_owned()
        }

        fn args(&mut self) -> Vec<f64> {
            assert!(self.eat(b'('), "expected '(' at {}", self.pos);
            let mut out = vec![self.expr()];
            while self.eat(b',') {
                out.push(self.expr());
            }
            self.close();
            out
        }

        fn atom(&mut self) -> f64 {
            match self.peek() {
                Some(b'(') => {
                    self.pos += 1;
                    let v = self.expr();
                    self.close();
                    v
                }
                Some(c) if c.is_ascii_digit() => {
                    let start = self.pos;
                    while self.s.get(self.pos).is_some_and(|c| c.is_ascii_digit() || *c == b'.') {
                        self.pos += 1;
                    }
                    std::str::from_utf8(&self.s[start..self.pos]).unwrap().parse().unwrap()
                }
                Some(b'-') => {
                    self.pos += 1;
                    -self.atom()
                }
                _ => {
                    let name = self.ident();
                    if let Some((_, v)) = CONSTANTS.iter().find(|(n, _)| *n == name) {
                        return *v;
                    }
                    let a = self.args();
                    match (name.as_str(), a.as_slice()) {
                        ("d", [k]) => self.d[*k as usize - 1],
                        ("arctan", [x]) => x.atan(),
                        ("sin", [x]) => x.sin(),
                        ("tanh", [x]) => x.tanh(),
                        ("exp", [x]) => x.exp(),
                        ("reallog", [x]) => {
                            if *x > 0.0 {
                                x.ln()
                            } else {
                                f64::NAN
                            }
                        }
                        ("min", [a, b]) => a.min(*b),
                        ("max", [a, b]) => a.max(*b),
                        (other, args) => panic!("unknown call {other}/{}", args.len()),
                    }
                }
            }
        }
    }

    /// Value of one sub-expression.
    pub fn term(index: usize, d: &[f64; 9]) -> f64 {
        let mut p = Parser { s: Y[index].as_bytes(), pos: 0, d };
        let v = p.expr();
        // surplus closing parentheses at the end are ignored
        while p.eat(b')') {}
        assert!(p.peek().is_none(), "trailing input in Y{} at {}", index + 1, p.pos);
        v
    }

    pub fn terms(d: &[f64; 9]) -> [f64; 6] {
        std::array::from_fn(|i| term(i, d))
    }

    pub fn raw(d: &[f64; 9]) -> f64 {
        terms(d).iter().sum()
    }
}

/// `y = d(3)` on inputs uniform in [0, 4).
pub fn d3_samples(n: usize, seed: u64) -> Vec<paver_core::gep::Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let inputs: [f64; 9] = std::array::from_fn(|_| rng.gen_range(0.0..4.0));
            paver_core::gep::Sample { inputs, target: inputs[2] }
        })
        .collect()
}

/// Validation-split R² of an evolved program.
pub fn validation_r2(result: &paver_core::gep::EvolutionResult, samples: &[paver_core::gep::Sample]) -> Option<f64> {
    use paver_core::metrics::{r_squared, PairedSeries};
    let idx = &result.split.validation;
    let measured = idx.iter().map(|&i| samples[i].target).collect();
    let predicted = idx.iter().map(|&i| paver_core::gep::evaluate_raw(&result.best, &samples[i].inputs)).collect();
    r_squared(&PairedSeries::new(measured, predicted).ok()?).ok()
}

/// Decodes and evaluates `n` random chromosomes on hostile inputs; returns
/// the number of panics or non-total results.
pub fn totality_failures(n: usize, seed: u64) -> usize {
    use paver_core::gep::{evaluate_program, evaluate_raw, fitness, random_chromosome, FunctionSet, GepConfig, Sample};
    use paver_core::{DistressVector, FeatureUnit};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let specials = [0.0, -0.0, 1e-300, 1e300, -1e300, f64::MAX, f64::MIN_POSITIVE, -1.0, 0.5];
    let mut failures = 0;
    for i in 0..n {
        let cfg = GepConfig {
            head: 1 + i % 16,
            genes: 1 + i % 7,
            max_complexity: 2 + i % 12,
            function_set: if i % 2 == 0 { FunctionSet::standard() } else { FunctionSet::extended() },
            ..GepConfig::default()
        };
        let c = random_chromosome(&mut rng, &cfg);
        let inputs: [f64; 9] = std::array::from_fn(|_| {
            if rng.gen_bool(0.3) {
                specials[rng.gen_range(0..specials.len())]
            } else {
                rng.gen_range(-10.0..10.0)
            }
        });
        let ok = std::panic::catch_unwind(|| {
            if c.validate().is_err() || c.max_depth() > cfg.max_complexity {
                return false;
            }
            let raw = evaluate_raw(&c, &inputs);
            let nonneg = inputs.map(f64::abs).map(|v| if v.is_finite() { v } else { 0.0 });
            let d = DistressVector::new(nonneg, FeatureUnit::CountPerImage).unwrap();
            let v = evaluate_program(&c, &d);
            let f = fitness(&c, &[Sample { inputs, target: 1.0 }]).unwrap();
            (raw.is_finite() || raw.is_nan() || raw.is_infinite()) && v.is_finite() && (0.0..=1000.0).contains(&f)
        });
        if !matches!(ok, Ok(true)) {
            failures += 1;
        }
    }
    failures
}

/// Report bundle for the fixture corpus, built on a pool of `threads`.
pub fn fixture_bundle(threads: usize) -> paver_core::pipeline::ReportBundle {
    use paver_core::pipeline::{build_report, ReportConfig};
    let dir = fixture_dir();
    let cfg = ReportConfig::load(&dir.join("config.json")).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| build_report(&cfg, &dir)).unwrap()
}

/// Names of bundle files that differ from the checked-in golden copies.
pub fn golden_mismatches(bundle: &paver_core::pipeline::ReportBundle) -> Vec<String> {
    let golden = fixture_dir().join("golden");
    let mut names: Vec<String> =
        std::fs::read_dir(&golden).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    names.sort();
    let mut bad: Vec<String> = bundle
        .files
        .iter()
        .filter(|(name, bytes)| std::fs::read(golden.join(name)).ok().as_ref() != Some(bytes))
        .map(|(name, _)| name.clone())
        .collect();
    bad.extend(names.into_iter().filter(|n| bundle.get(n).is_none()));
    bad
}
