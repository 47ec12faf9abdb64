//! Basis dictionaries `Ψ(x) = [ψ_1(x), …, ψ_K(x)]` for drift and diffusion
//! regression.

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

use crate::expr::{Expr, ExprError};
use crate::numeric::DenseMatrix;

/// Upper bound on dictionary size.
pub const MAX_BASIS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BasisError {
    #[error("dictionary must contain at least one function")]
    Empty,
    #[error("duplicate basis function name `{0}`")]
    DuplicateName(String),
    #[error("dictionary of {0} functions exceeds the cap of {MAX_BASIS}")]
    TooLarge(u128),
    #[error("function {index} has dimension {got}, dictionary has {expected}")]
    Dimension { index: usize, expected: usize, got: usize },
    #[error("basis function {index}: {source}")]
    Parse { index: usize, source: ExprError },
    #[error("evaluating basis function {function} at row {row}: {source}")]
    Eval { row: usize, function: usize, source: ExprError },
    #[error("points have {got} columns, dictionary dimension is {expected}")]
    PointDimension { expected: usize, got: usize },
    #[error("unknown dictionary `{0}` (expected `poly:<degree>` or `example2`)")]
    UnknownName(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisDictionary {
    dimension: usize,
    names: Vec<String>,
    functions: Vec<Expr>,
}

impl BasisDictionary {
    pub fn new(dimension: usize, names: Vec<String>, functions: Vec<Expr>) -> Result<Self, BasisError> {
        if functions.is_empty() {
            return Err(BasisError::Empty);
        }
        if functions.len() > MAX_BASIS {
            return Err(BasisError::TooLarge(functions.len() as u128));
        }
        assert_eq!(names.len(), functions.len(), "one name per function");
        for (index, f) in functions.iter().enumerate() {
            if f.dimension() != dimension {
                return Err(BasisError::Dimension { index, expected: dimension, got: f.dimension() });
            }
        }
        let mut seen = HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(BasisError::DuplicateName(name.clone()));
            }
        }
        Ok(Self { dimension, names, functions })
    }

    /// Parses each expression; the expression text doubles as its name.
    pub fn from_expressions<S: AsRef<str>>(dimension: usize, exprs: &[S]) -> Result<Self, BasisError> {
        let functions = exprs
            .iter()
            .enumerate()
            .map(|(index, s)| Expr::parse(s.as_ref(), dimension).map_err(|source| BasisError::Parse { index, source }))
            .collect::<Result<Vec<_>, _>>()?;
        let names = exprs.iter().map(|s| s.as_ref().trim().to_string()).collect();
        Self::new(dimension, names, functions)
    }

    /// Resolves `poly:<degree>` or `example2` for state dimension `n`.
    pub fn by_name(name: &str, n: usize) -> Result<Self, BasisError> {
        if name == "example2" {
            let d = example2_dictionary();
            if n != 1 {
                return Err(BasisError::Dimension { index: 0, expected: n, got: 1 });
            }
            return Ok(d);
        }
        let degree = name
            .strip_prefix("poly:")
            .and_then(|d| d.parse::<u32>().ok())
            .ok_or_else(|| BasisError::UnknownName(name.to_string()))?;
        polynomial_dictionary(n, degree)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn functions(&self) -> &[Expr] {
        &self.functions
    }

    /// Writes `ψ_k(point)` into `out[k]`.
    pub fn eval_into(&self, point: &[f64], out: &mut [f64]) -> Result<(), (usize, ExprError)> {
        for (k, (f, o)) in self.functions.iter().zip(out.iter_mut()).enumerate() {
            *o = f.eval(point).map_err(|e| (k, e))?;
        }
        Ok(())
    }

    /// `Σ_k coefficients[k] ψ_k(point)`.
    pub fn combine(&self, coefficients: &[f64], point: &[f64]) -> Result<f64, ExprError> {
        let mut acc = 0.0;
        for (f, c) in self.functions.iter().zip(coefficients) {
            acc += c * f.eval(point)?;
        }
        Ok(acc)
    }
}

impl fmt::Display for BasisDictionary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.names.join(", "))
    }
}

/// All monomials of total degree ≤ `degree` in `n` variables, ordered by
/// total degree and then by descending exponent of the earliest variable
/// (`1, x1, x2, x3, x1^2, x1*x2, x1*x3, x2^2, x2*x3, x3^2` for n = 3,
/// degree = 2).
pub fn polynomial_dictionary(n: usize, degree: u32) -> Result<BasisDictionary, BasisError> {
    if n == 0 {
        return Err(BasisError::Parse { index: 0, source: ExprError::ZeroDimension });
    }
    let count = binomial(n as u128 + degree as u128, degree as u128);
    if count > MAX_BASIS as u128 {
        return Err(BasisError::TooLarge(count));
    }
    let mut exponents: Vec<Vec<u32>> = Vec::new();
    for total in 0..=degree {
        let mut current = vec![0u32; n];
        compositions(total, 0, &mut current, &mut exponents);
    }
    let names: Vec<String> = exponents.iter().map(|e| monomial_name(e)).collect();
    BasisDictionary::from_expressions(n, &names)
}

/// Exponent vectors summing to `remaining` over positions `pos..`, with
/// larger exponents on earlier variables first.
fn compositions(remaining: u32, pos: usize, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if pos == current.len() - 1 {
        current[pos] = remaining;
        out.push(current.clone());
        current[pos] = 0;
        return;
    }
    for e in (0..=remaining).rev() {
        current[pos] = e;
        compositions(remaining - e, pos + 1, current, out);
    }
    current[pos] = 0;
}

fn monomial_name(exponents: &[u32]) -> String {
    let factors: Vec<String> = exponents
        .iter()
        .enumerate()
        .filter(|(_, &e)| e > 0)
        .map(|(i, &e)| if e == 1 { format!("x{}", i + 1) } else { format!("x{}^{e}", i + 1) })
        .collect();
    if factors.is_empty() {
        "1".to_string()
    } else {
        factors.join("*")
    }
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

/// The 19-function one-dimensional dictionary used for the gene regulation
/// example, in its published order.
pub const EXAMPLE2_FUNCTIONS: [&str; 19] = [
    "1",
    "x1",
    "x1^2",
    "x1^3",
    "sin(x1)",
    "cos(11*x1)",
    "sin(11*x1)",
    "-10*tanh(10*x1)^2 + 10",
    "-10*tanh(10*x1 - 10)^2 + 10",
    "exp(-50*x1^2)",
    "exp(-50*(x1 - 3)^2)",
    "exp(-0.3*x1^2)",
    "exp(-0.3*(x1 - 3)^2)",
    "exp(-2*(x1 - 2)^2)",
    "exp(-50*(x1 - 4)^2)",
    "exp(-0.6*(x1 - 4)^2)",
    "exp(-0.6*(x1 - 3)^2)",
    "-2*tanh(2*x1 - 4)^2 + 2",
    "tanh(x1 - 4)^2 + 1",
];

pub fn example2_dictionary() -> BasisDictionary {
    BasisDictionary::from_expressions(1, &EXAMPLE2_FUNCTIONS).expect("frozen dictionary parses")
}

/// `M × K` matrix with entry `(j, k) = ψ_k(points[j])`; `points` is `M × n`.
pub fn design_matrix(dict: &BasisDictionary, points: &DenseMatrix) -> Result<DenseMatrix, BasisError> {
    if points.cols() != dict.dimension() {
        return Err(BasisError::PointDimension { expected: dict.dimension(), got: points.cols() });
    }
    let k = dict.len();
    let mut out = DenseMatrix::zeros(points.rows(), k);
    let mut buf = vec![0.0; k];
    for row in 0..points.rows() {
        dict.eval_into(points.row(row), &mut buf)
            .map_err(|(function, source)| BasisError::Eval { row, function, source })?;
        for (c, v) in buf.iter().enumerate() {
            out[(row, c)] = *v;
        }
    }
    Ok(out)
}
