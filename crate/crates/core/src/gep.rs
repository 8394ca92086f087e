//! Gene expression programming for symbolic regression of PASER formulas.
//!
//! Chromosomes hold a fixed number of genes linked by addition. Each gene
//! is a Karva-notation string: a head of functions, inputs and constant
//! placeholders, a tail of inputs and placeholders only, a constant-index
//! domain (Dc) and a per-gene pool of random numerical constants.
//!
//! Evaluation is total: invalid operations (division by zero, logs and
//! square roots out of domain, overflow) produce a non-finite value that
//! the fitness function scores as 0.

mod engine;
mod expr;
mod ops;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use engine::{evolve, fitness, EvolutionResult, GenerationRecord, Sample, MAX_FITNESS};
pub use expr::{
    decode_gene, evaluate_program, evaluate_raw, render_gene, render_program, DecodedGene, Expr, PENALTY_SENTINEL,
};
pub use ops::{invert, mutate, random_chromosome};

#[derive(Debug, Error, PartialEq)]
pub enum GepError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid chromosome: {0}")]
    Chromosome(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Function {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Sqrt,
    Cbrt,
    Ln,
    Log10,
    Exp,
    Sin,
    Cos,
    Tan,
    Min,
    Max,
    Tanh,
    Atan,
}

impl Function {
    pub const ALL: [Function; 17] = [
        Function::Add,
        Function::Sub,
        Function::Mul,
        Function::Div,
        Function::Pow,
        Function::Sqrt,
        Function::Cbrt,
        Function::Ln,
        Function::Log10,
        Function::Exp,
        Function::Sin,
        Function::Cos,
        Function::Tan,
        Function::Min,
        Function::Max,
        Function::Tanh,
        Function::Atan,
    ];

    pub fn arity(self) -> usize {
        match self {
            Function::Add
            | Function::Sub
            | Function::Mul
            | Function::Div
            | Function::Pow
            | Function::Min
            | Function::Max => 2,
            _ => 1,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Function::Add => "+",
            Function::Sub => "-",
            Function::Mul => "*",
            Function::Div => "/",
            Function::Pow => "pow",
            Function::Sqrt => "sqrt",
            Function::Cbrt => "cbrt",
            Function::Ln => "ln",
            Function::Log10 => "log10",
            Function::Exp => "exp",
            Function::Sin => "sin",
            Function::Cos => "cos",
            Function::Tan => "tan",
            Function::Min => "min",
            Function::Max => "max",
            Function::Tanh => "tanh",
            Function::Atan => "atan",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.token() == token)
    }

    pub fn apply1(self, x: f64) -> f64 {
        match self {
            Function::Sqrt if x < 0.0 => f64::NAN,
            Function::Sqrt => x.sqrt(),
            Function::Cbrt => x.cbrt(),
            Function::Ln | Function::Log10 if x <= 0.0 => f64::NAN,
            Function::Ln => x.ln(),
            Function::Log10 => x.log10(),
            Function::Exp => x.exp(),
            Function::Sin => x.sin(),
            Function::Cos => x.cos(),
            Function::Tan => x.tan(),
            Function::Tanh => x.tanh(),
            Function::Atan => x.atan(),
            _ => f64::NAN,
        }
    }

    pub fn apply2(self, a: f64, b: f64) -> f64 {
        match self {
            Function::Add => a + b,
            Function::Sub => a - b,
            Function::Mul => a * b,
            Function::Div if b == 0.0 => f64::NAN,
            Function::Div => a / b,
            // sign-preserving power keeps negative bases real
            Function::Pow => a.signum() * a.abs().powf(b),
            Function::Min | Function::Max if a.is_nan() || b.is_nan() => f64::NAN,
            Function::Min => a.min(b),
            Function::Max => a.max(b),
            _ => f64::NAN,
        }
    }
}

/// Functions available to head positions. Maximum arity is always 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionSet {
    functions: Vec<Function>,
}

impl FunctionSet {
    pub fn new(mut functions: Vec<Function>) -> Result<Self, GepError> {
        functions.sort();
        functions.dedup();
        if functions.is_empty() {
            return Err(GepError::Config("empty function set".into()));
        }
        Ok(Self { functions })
    }

    /// +, −, ×, /, √, ∛, ln, log, power, exp, sin, cos, tan.
    pub fn standard() -> Self {
        use Function::*;
        Self { functions: vec![Add, Sub, Mul, Div, Pow, Sqrt, Cbrt, Ln, Log10, Exp, Sin, Cos, Tan] }
    }

    /// The standard set plus min, max, tanh and atan.
    pub fn extended() -> Self {
        Self { functions: Function::ALL.to_vec() }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "standard" => Some(Self::standard()),
            "extended" => Some(Self::extended()),
            _ => None,
        }
    }

    pub fn functions(&self) -> &[Function] {
        &self.functions
    }

    pub fn contains(&self, f: Function) -> bool {
        self.functions.contains(&f)
    }
}

/// One symbol of a Karva expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Symbol {
    Func(Function),
    /// Zero-based input index: `Var(0)` is d(1).
    Var(u8),
    /// Placeholder resolved through the gene's Dc domain.
    Const,
}

impl Symbol {
    pub fn arity(self) -> usize {
        match self {
            Symbol::Func(f) => f.arity(),
            _ => 0,
        }
    }

    pub fn is_function(self) -> bool {
        matches!(self, Symbol::Func(_))
    }
}

impl From<Symbol> for String {
    fn from(s: Symbol) -> String {
        match s {
            Symbol::Func(f) => f.token().to_string(),
            Symbol::Var(i) => format!("d{}", i + 1),
            Symbol::Const => "?".to_string(),
        }
    }
}

impl TryFrom<String> for Symbol {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        if s == "?" {
            return Ok(Symbol::Const);
        }
        if let Some(f) = Function::from_token(&s) {
            return Ok(Symbol::Func(f));
        }
        s.strip_prefix('d')
            .and_then(|k| k.parse::<u8>().ok())
            .filter(|k| (1..=crate::NUM_CLASSES as u8).contains(k))
            .map(|k| Symbol::Var(k - 1))
            .ok_or_else(|| format!("unknown symbol {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gene {
    pub head: Vec<Symbol>,
    pub tail: Vec<Symbol>,
    pub dc: Vec<u8>,
    pub constants: Vec<f64>,
}

impl Gene {
    /// Tail length for a head of `head_len` with maximum arity 2.
    pub fn tail_len(head_len: usize) -> usize {
        head_len + 1
    }

    pub fn validate(&self) -> Result<(), GepError> {
        let bad = |m: String| Err(GepError::Chromosome(m));
        if self.head.is_empty() {
            return bad("empty head".into());
        }
        if self.tail.len() != Self::tail_len(self.head.len()) {
            return bad(format!("tail length {} for head {}", self.tail.len(), self.head.len()));
        }
        if self.tail.iter().any(|s| s.is_function()) {
            return bad("function symbol in tail".into());
        }
        if self.dc.len() != self.tail.len() {
            return bad(format!("dc length {} != tail length {}", self.dc.len(), self.tail.len()));
        }
        if self.constants.is_empty() && self.head.iter().chain(&self.tail).any(|s| *s == Symbol::Const) {
            return bad("constant placeholder without a constant pool".into());
        }
        if self.dc.iter().any(|&i| i as usize >= self.constants.len().max(1)) {
            return bad("dc index outside constant pool".into());
        }
        if self.constants.iter().any(|c| !c.is_finite()) {
            return bad("non-finite constant".into());
        }
        Ok(())
    }

    pub fn symbols(&self) -> impl Iterator<Item = Symbol> + '_ {
        self.head.iter().chain(&self.tail).copied()
    }
}

/// Genes linked by addition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chromosome {
    pub genes: Vec<Gene>,
}

impl Chromosome {
    pub fn validate(&self) -> Result<(), GepError> {
        if self.genes.is_empty() {
            return Err(GepError::Chromosome("no genes".into()));
        }
        let head = self.genes[0].head.len();
        for g in &self.genes {
            if g.head.len() != head {
                return Err(GepError::Chromosome("genes differ in head length".into()));
            }
            g.validate()?;
        }
        Ok(())
    }

    /// Largest decoded tree depth over all genes (a lone terminal has depth 1).
    pub fn max_depth(&self) -> usize {
        self.genes.iter().map(|g| decode_gene(g).depth()).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GepConfig {
    pub population: usize,
    pub genes: usize,
    pub head: usize,
    pub mutation_rate: f64,
    pub inversion_rate: f64,
    pub generations_without_change: u64,
    pub tries: usize,
    /// Maximum decoded tree depth per gene.
    pub max_complexity: usize,
    pub constant_pool: usize,
    pub constant_range: (f64, f64),
    pub function_set: FunctionSet,
    /// Hard stop per try regardless of progress.
    pub max_generations: u64,
    pub seed: u64,
}

impl Default for GepConfig {
    fn default() -> Self {
        Self {
            population: 30,
            genes: 6,
            head: 12,
            mutation_rate: 0.044,
            inversion_rate: 0.00546,
            generations_without_change: 2000,
            tries: 3,
            max_complexity: 5,
            constant_pool: 10,
            constant_range: (-10.0, 10.0),
            function_set: FunctionSet::standard(),
            max_generations: 50_000,
            seed: 0,
        }
    }
}

impl GepConfig {
    /// Same settings with the lower mutation rate of 0.00138.
    pub fn low_mutation() -> Self {
        Self { mutation_rate: 0.00138, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), GepError> {
        let fail = |m: &str| Err(GepError::Config(m.to_string()));
        if self.population < 2 {
            return fail("population must be at least 2");
        }
        if self.genes == 0 || self.head == 0 {
            return fail("genes and head size must be positive");
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) || !(0.0..=1.0).contains(&self.inversion_rate) {
            return fail("rates must lie in [0, 1]");
        }
        if self.tries == 0 || self.generations_without_change == 0 || self.max_generations == 0 {
            return fail("tries and generation limits must be positive");
        }
        if self.max_complexity == 0 {
            return fail("max_complexity must be at least 1");
        }
        if self.constant_pool == 0 || self.constant_pool > u8::MAX as usize + 1 {
            return fail("constant pool size must be in 1..=256");
        }
        let (lo, hi) = self.constant_range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return fail("constant range must be finite with lower < upper");
        }
        Ok(())
    }
}
