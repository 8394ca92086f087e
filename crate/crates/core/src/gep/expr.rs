use std::fmt::Write;

use super::{Chromosome, Function, Gene, Symbol};
use crate::density::DistressVector;
use crate::NUM_CLASSES;

/// Stand-in returned by [`evaluate_program`] when the raw value is not finite.
pub const PENALTY_SENTINEL: f64 = 1.0e15;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Func(Function),
    Var(usize),
    Const(f64),
}

/// A gene's open reading frame in breadth-first order. Children of node
/// `i` occupy `first_child[i] .. first_child[i] + arity`, always after `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedGene {
    ops: Vec<Op>,
    first_child: Vec<usize>,
}

/// Expression tree of one gene.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Var(usize),
    Const(f64),
    Unary(Function, Box<Expr>),
    Binary(Function, Box<Expr>, Box<Expr>),
}

/// Karva decoding: symbols are read left to right and attached level by
/// level until every function has its arguments. Symbols past that point
/// are not expressed.
pub fn decode_gene(gene: &Gene) -> DecodedGene {
    let mut ops = Vec::new();
    let mut first_child = Vec::new();
    let mut next_free = 1;
    let mut next_const = 0;
    for sym in gene.symbols() {
        if ops.len() == next_free {
            break;
        }
        let op = match sym {
            Symbol::Func(f) => Op::Func(f),
            Symbol::Var(i) => Op::Var(i as usize),
            Symbol::Const => {
                let slot = gene.dc.get(next_const).copied().unwrap_or(0) as usize;
                next_const += 1;
                Op::Const(gene.constants.get(slot).copied().unwrap_or(0.0))
            }
        };
        first_child.push(next_free);
        next_free += sym.arity();
        ops.push(op);
    }
    DecodedGene { ops, first_child }
}

impl DecodedGene {
    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    fn arity(&self, i: usize) -> usize {
        match self.ops[i] {
            Op::Func(f) => f.arity(),
            _ => 0,
        }
    }

    /// Number of levels; a single terminal has depth 1.
    pub fn depth(&self) -> usize {
        let mut depth = vec![1usize; self.ops.len()];
        for i in (0..self.ops.len()).rev() {
            let c = self.first_child[i];
            depth[i] = 1 + (c..c + self.arity(i)).map(|j| depth[j]).max().unwrap_or(0);
        }
        depth.first().copied().unwrap_or(0)
    }

    /// Evaluates bottom-up; scratch is reused between calls.
    pub fn eval_with(&self, inputs: &[f64; NUM_CLASSES], scratch: &mut Vec<f64>) -> f64 {
        scratch.clear();
        scratch.resize(self.ops.len(), 0.0);
        for i in (0..self.ops.len()).rev() {
            let c = self.first_child[i];
            scratch[i] = match self.ops[i] {
                Op::Var(k) => inputs[k],
                Op::Const(v) => v,
                Op::Func(f) if f.arity() == 1 => f.apply1(scratch[c]),
                Op::Func(f) => f.apply2(scratch[c], scratch[c + 1]),
            };
        }
        scratch[0]
    }

    pub fn eval(&self, inputs: &[f64; NUM_CLASSES]) -> f64 {
        self.eval_with(inputs, &mut Vec::with_capacity(self.ops.len()))
    }

    pub fn to_expr(&self) -> Expr {
        self.subtree(0)
    }

    fn subtree(&self, i: usize) -> Expr {
        let c = self.first_child[i];
        match self.ops[i] {
            Op::Var(k) => Expr::Var(k),
            Op::Const(v) => Expr::Const(v),
            Op::Func(f) if f.arity() == 1 => Expr::Unary(f, Box::new(self.subtree(c))),
            Op::Func(f) => Expr::Binary(f, Box::new(self.subtree(c)), Box::new(self.subtree(c + 1))),
        }
    }
}

impl Expr {
    pub fn eval(&self, inputs: &[f64; NUM_CLASSES]) -> f64 {
        match self {
            Expr::Var(k) => inputs[*k],
            Expr::Const(v) => *v,
            Expr::Unary(f, a) => f.apply1(a.eval(inputs)),
            Expr::Binary(f, a, b) => f.apply2(a.eval(inputs), b.eval(inputs)),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Var(_) | Expr::Const(_) => 1,
            Expr::Unary(_, a) => 1 + a.depth(),
            Expr::Binary(_, a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    /// Fully parenthesized infix form.
    pub fn render(&self) -> String {
        let mut s = String::new();
        self.render_into(&mut s);
        s
    }

    fn render_into(&self, out: &mut String) {
        match self {
            Expr::Var(k) => {
                let _ = write!(out, "d({})", k + 1);
            }
            Expr::Const(v) => {
                let _ = write!(out, "{v:.2}");
            }
            Expr::Unary(f, a) => {
                out.push_str(f.token());
                out.push('(');
                a.render_into(out);
                out.push(')');
            }
            Expr::Binary(f @ (Function::Min | Function::Max), a, b) => {
                out.push_str(f.token());
                out.push('(');
                a.render_into(out);
                out.push(',');
                b.render_into(out);
                out.push(')');
            }
            Expr::Binary(f, a, b) => {
                let op = match f {
                    Function::Pow => "^",
                    other => other.token(),
                };
                out.push('(');
                a.render_into(out);
                out.push_str(op);
                b.render_into(out);
                out.push(')');
            }
        }
    }
}

pub fn render_gene(gene: &Gene) -> String {
    decode_gene(gene).to_expr().render()
}

/// Sum of the rendered genes, e.g. `d(3) + 0.00`.
pub fn render_program(chromosome: &Chromosome) -> String {
    chromosome.genes.iter().map(render_gene).collect::<Vec<_>>().join(" + ")
}

/// Unsanitized program value; may be NaN or infinite.
pub fn evaluate_raw(chromosome: &Chromosome, inputs: &[f64; NUM_CLASSES]) -> f64 {
    let mut scratch = Vec::new();
    chromosome.genes.iter().map(|g| decode_gene(g).eval_with(inputs, &mut scratch)).sum()
}

/// Program value with non-finite results replaced by [`PENALTY_SENTINEL`].
pub fn evaluate_program(chromosome: &Chromosome, d: &DistressVector) -> f64 {
    let v = evaluate_raw(chromosome, d.values());
    if v.is_finite() {
        v
    } else {
        PENALTY_SENTINEL
    }
}
