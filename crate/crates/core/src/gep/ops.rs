use rand::Rng;

use super::{Chromosome, FunctionSet, Gene, GepConfig, Symbol};
use crate::NUM_CLASSES;

fn terminal<R: Rng + ?Sized>(rng: &mut R, with_constants: bool) -> Symbol {
    let choices = NUM_CLASSES + usize::from(with_constants);
    match rng.gen_range(0..choices) {
        k if k < NUM_CLASSES => Symbol::Var(k as u8),
        _ => Symbol::Const,
    }
}

/// Head symbols are functions half of the time, otherwise terminals.
fn head_symbol<R: Rng + ?Sized>(rng: &mut R, functions: &FunctionSet, with_constants: bool) -> Symbol {
    if rng.gen_bool(0.5) {
        let fs = functions.functions();
        Symbol::Func(fs[rng.gen_range(0..fs.len())])
    } else {
        terminal(rng, with_constants)
    }
}

fn random_constant<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    rng.gen_range(lo..=hi)
}

fn random_gene<R: Rng + ?Sized>(rng: &mut R, cfg: &GepConfig) -> Gene {
    let tail_len = Gene::tail_len(cfg.head);
    Gene {
        head: (0..cfg.head).map(|_| head_symbol(rng, &cfg.function_set, true)).collect(),
        tail: (0..tail_len).map(|_| terminal(rng, true)).collect(),
        dc: (0..tail_len).map(|_| rng.gen_range(0..cfg.constant_pool) as u8).collect(),
        constants: (0..cfg.constant_pool).map(|_| random_constant(rng, cfg.constant_range)).collect(),
    }
}

/// Uniformly random chromosome; genes deeper than `max_complexity` are
/// redrawn.
pub fn random_chromosome<R: Rng + ?Sized>(rng: &mut R, cfg: &GepConfig) -> Chromosome {
    let genes = (0..cfg.genes)
        .map(|_| loop {
            let g = random_gene(rng, cfg);
            if super::decode_gene(&g).depth() <= cfg.max_complexity {
                break g;
            }
        })
        .collect();
    Chromosome { genes }
}

/// Point mutation: every head, tail and Dc position, and every pool
/// constant, is independently replaced with probability `rate`. Head
/// positions may receive any symbol, tail positions only terminals.
/// A mutated constant is either redrawn from the constant range or nudged
/// by a random amount at a random decimal scale.
pub fn mutate<R: Rng + ?Sized>(chromosome: &Chromosome, rate: f64, cfg: &GepConfig, rng: &mut R) -> Chromosome {
    let mut out = chromosome.clone();
    if rate <= 0.0 {
        return out;
    }
    let (lo, hi) = cfg.constant_range;
    for gene in &mut out.genes {
        let pool = gene.constants.len();
        for s in gene.head.iter_mut() {
            if rng.gen_bool(rate) {
                *s = head_symbol(rng, &cfg.function_set, pool > 0);
            }
        }
        for s in gene.tail.iter_mut() {
            if rng.gen_bool(rate) {
                *s = terminal(rng, pool > 0);
            }
        }
        if pool > 0 {
            for i in gene.dc.iter_mut() {
                if rng.gen_bool(rate) {
                    *i = rng.gen_range(0..pool) as u8;
                }
            }
        }
        for c in gene.constants.iter_mut() {
            if rng.gen_bool(rate) {
                *c = if rng.gen_bool(0.5) {
                    random_constant(rng, (lo, hi))
                } else {
                    let scale = 10f64.powi(-rng.gen_range(0..=6));
                    (*c + rng.gen_range(-1.0..=1.0) * scale).clamp(lo, hi)
                };
            }
        }
    }
    out
}

/// With probability `rate`, reverses a random segment of one random gene's head.
pub fn invert<R: Rng + ?Sized>(chromosome: &Chromosome, rate: f64, rng: &mut R) -> Chromosome {
    let mut out = chromosome.clone();
    if rate <= 0.0 || out.genes.is_empty() || !rng.gen_bool(rate) {
        return out;
    }
    let g = rng.gen_range(0..out.genes.len());
    let head = &mut out.genes[g].head;
    if head.len() >= 2 {
        let a = rng.gen_range(0..head.len() - 1);
        let b = rng.gen_range(a + 1..head.len());
        head[a..=b].reverse();
    }
    out
}
