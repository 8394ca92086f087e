use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::expr::DecodedGene;
use super::{decode_gene, invert, mutate, random_chromosome, Chromosome, GepConfig, GepError};
use crate::metrics::{split_dataset, SplitIndices};
use crate::NUM_CLASSES;

/// Fitness of a program with zero error.
pub const MAX_FITNESS: f64 = 1000.0;

/// Offspring breaking the depth cap are redrawn this many times before the
/// parent is copied unchanged.
const MAX_OFFSPRING_ATTEMPTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sample {
    pub inputs: [f64; NUM_CLASSES],
    pub target: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GenerationRecord {
    /// Counts across tries.
    pub generation: u64,
    pub try_index: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionResult {
    pub best: Chromosome,
    pub training_fitness: f64,
    /// Fitness on the validation split, or on the training split when the
    /// dataset is too small to hold one out.
    pub validation_fitness: f64,
    pub best_try: usize,
    pub history: Vec<GenerationRecord>,
    pub split: SplitIndices,
}

struct Compiled(Vec<DecodedGene>);

impl Compiled {
    fn new(c: &Chromosome) -> Self {
        Self(c.genes.iter().map(decode_gene).collect())
    }

    fn fitness(&self, samples: &[Sample]) -> f64 {
        let mut scratch = Vec::new();
        let mut sse = 0.0;
        for s in samples {
            let y: f64 = self.0.iter().map(|g| g.eval_with(&s.inputs, &mut scratch)).sum();
            if !y.is_finite() {
                return 0.0;
            }
            sse += (y - s.target).powi(2);
        }
        let rmse = (sse / samples.len() as f64).sqrt();
        if rmse.is_finite() {
            MAX_FITNESS / (1.0 + rmse)
        } else {
            0.0
        }
    }

    fn depth_ok(&self, max: usize) -> bool {
        self.0.iter().all(|g| g.depth() <= max)
    }
}

/// `1000 / (1 + RMSE)`; 0 if any prediction is not finite.
pub fn fitness(chromosome: &Chromosome, samples: &[Sample]) -> Result<f64, GepError> {
    if samples.is_empty() {
        return Err(GepError::EmptyDataset);
    }
    Ok(Compiled::new(chromosome).fitness(samples))
}

fn evaluate_population(pop: &[Chromosome], samples: &[Sample]) -> Vec<f64> {
    pop.par_iter().map(|c| Compiled::new(c).fitness(samples)).collect()
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn spin<R: Rng>(fitness: &[f64], total: f64, rng: &mut R) -> usize {
    if total <= 0.0 {
        return rng.gen_range(0..fitness.len());
    }
    let mut r = rng.gen_range(0.0..total);
    for (i, &f) in fitness.iter().enumerate() {
        if r < f {
            return i;
        }
        r -= f;
    }
    fitness.len() - 1
}

fn offspring<R: Rng>(parent: &Chromosome, cfg: &GepConfig, rng: &mut R) -> Chromosome {
    for _ in 0..MAX_OFFSPRING_ATTEMPTS {
        let child = invert(&mutate(parent, cfg.mutation_rate, cfg, rng), cfg.inversion_rate, rng);
        if Compiled::new(&child).depth_ok(cfg.max_complexity) {
            return child;
        }
    }
    parent.clone()
}

/// Runs `cfg.tries` independent restarts of generational evolution with
/// single elitism and roulette-wheel selection. Each restart ends after
/// `generations_without_change` generations without a better training
/// fitness (or at `max_generations`, or on a perfect fit). The result is
/// the restart winner with the best validation fitness.
pub fn evolve(samples: &[Sample], cfg: &GepConfig) -> Result<EvolutionResult, GepError> {
    if samples.is_empty() {
        return Err(GepError::EmptyDataset);
    }
    cfg.validate()?;

    let split = match split_dataset(samples.len(), cfg.seed) {
        Ok(s) => s,
        Err(_) => SplitIndices { train: (0..samples.len()).collect(), validation: vec![], test: vec![] },
    };
    let pick = |idx: &[usize]| idx.iter().map(|&i| samples[i]).collect::<Vec<_>>();
    let train = pick(&split.train);
    let validation = pick(&split.validation);
    let holdout = if validation.is_empty() { &train } else { &validation };

    let mut history = Vec::new();
    let mut generation = 0u64;
    let mut winner: Option<(Chromosome, f64, f64, usize)> = None;

    for try_index in 0..cfg.tries {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(try_index as u64 + 1);

        let mut pop: Vec<Chromosome> = (0..cfg.population).map(|_| random_chromosome(&mut rng, cfg)).collect();
        let mut fit = evaluate_population(&pop, &train);
        let mut best = argmax(&fit);
        let mut best_fitness = fit[best];
        let mut stagnant = 0u64;
        let mut local_gen = 0u64;

        loop {
            history.push(GenerationRecord {
                generation,
                try_index,
                best_fitness: fit[best],
                mean_fitness: fit.iter().sum::<f64>() / fit.len() as f64,
            });
            if stagnant >= cfg.generations_without_change
                || local_gen >= cfg.max_generations
                || best_fitness >= MAX_FITNESS
            {
                break;
            }

            let total: f64 = fit.iter().sum();
            let mut next = Vec::with_capacity(cfg.population);
            next.push(pop[best].clone());
            while next.len() < cfg.population {
                let parent = &pop[spin(&fit, total, &mut rng)];
                next.push(offspring(parent, cfg, &mut rng));
            }
            pop = next;
            fit = evaluate_population(&pop, &train);
            best = argmax(&fit);
            if fit[best] > best_fitness {
                best_fitness = fit[best];
                stagnant = 0;
            } else {
                stagnant += 1;
            }
            generation += 1;
            local_gen += 1;
        }

        let champion = pop[best].clone();
        let val = Compiled::new(&champion).fitness(holdout);
        if winner.as_ref().is_none_or(|w| val > w.2) {
            winner = Some((champion, best_fitness, val, try_index));
        }
        generation += 1;
    }

    let (best, training_fitness, validation_fitness, best_try) = winner.expect("at least one try");
    Ok(EvolutionResult { best, training_fitness, validation_fitness, best_try, history, split })
}
