//! Pair-data generation: one Euler step of
//!
//! ```text
//! dx = b(x) dt + Λ(x) dB_t + σ dL_t
//! ```
//!
//! from every initial point. Each row draws from its own random stream keyed
//! by `(seed, row)`, so datasets are bit-reproducible for any worker count.

use rayon::prelude::*;
use thiserror::Error;

use crate::expr::{Expr, ExprError};
use crate::numeric::DenseMatrix;
use crate::rng::{StreamKey, StreamRng};
use crate::stable::{stable_variate, StableParams};
use rand_distr::{Distribution, StandardNormal};

/// Default cap on the number of generated grid points.
pub const DEFAULT_GRID_CAP: usize = 100_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulateError {
    #[error("model dimension must be at least 1")]
    ZeroDimension,
    #[error("{what}: expected {expected} entries, found {got}")]
    Shape { what: String, expected: usize, got: usize },
    #[error("{term}[{index}]: {source}")]
    Expression { term: &'static str, index: String, source: ExprError },
    #[error("grid axis {axis}: {reason}")]
    Grid { axis: usize, reason: String },
    #[error("grid of {points} points exceeds the cap of {cap}")]
    GridTooLarge { points: u128, cap: usize },
    #[error("time step h = {0} must be positive and finite")]
    Step(f64),
    #[error("no initial points")]
    Empty,
    #[error("initial points are not finite at row {0}")]
    NonFiniteInput(usize),
    #[error("row {row}: {term} of coordinate {coordinate}: {source}")]
    Eval { row: usize, coordinate: usize, term: &'static str, source: ExprError },
    #[error("row {row}: step produced a non-finite state")]
    NonFinite { row: usize },
    #[error("dataset: {0}")]
    Dataset(String),
}

/// Drift, Brownian coefficient and Lévy noise of an additive-noise SDE.
#[derive(Debug, Clone, PartialEq)]
pub struct SdeModel {
    dimension: usize,
    drift: Vec<Expr>,
    /// `Λ(x)` row-major, `None` when the Brownian term is switched off.
    gaussian: Option<Vec<Expr>>,
    /// Per-component `(α_i, β_i, σ_i)`, `None` when the jump term is off.
    levy: Option<Vec<StableParams>>,
    /// Nonzero entries of `Λ` as `(i, j, index into gaussian)`.
    gaussian_support: Vec<(usize, usize)>,
}

impl SdeModel {
    pub fn new(
        drift: Vec<Expr>,
        gaussian: Option<Vec<Vec<Expr>>>,
        levy: Option<Vec<StableParams>>,
    ) -> Result<Self, SimulateError> {
        let n = drift.len();
        if n == 0 {
            return Err(SimulateError::ZeroDimension);
        }
        for (i, e) in drift.iter().enumerate() {
            if e.dimension() != n {
                return Err(SimulateError::Shape { what: format!("drift[{i}] dimension"), expected: n, got: e.dimension() });
            }
        }
        let gaussian = match gaussian {
            None => None,
            Some(rows) => {
                if rows.len() != n {
                    return Err(SimulateError::Shape { what: "gaussian rows".into(), expected: n, got: rows.len() });
                }
                let mut flat = Vec::with_capacity(n * n);
                for (i, row) in rows.into_iter().enumerate() {
                    if row.len() != n {
                        return Err(SimulateError::Shape { what: format!("gaussian[{i}]"), expected: n, got: row.len() });
                    }
                    for (j, e) in row.iter().enumerate() {
                        if e.dimension() != n {
                            return Err(SimulateError::Shape {
                                what: format!("gaussian[{i}][{j}] dimension"),
                                expected: n,
                                got: e.dimension(),
                            });
                        }
                    }
                    flat.extend(row);
                }
                Some(flat)
            }
        };
        if let Some(l) = &levy {
            if l.len() != n {
                return Err(SimulateError::Shape { what: "levy".into(), expected: n, got: l.len() });
            }
        }
        let gaussian_support = gaussian
            .as_ref()
            .map(|g| {
                (0..n * n)
                    .filter(|&idx| g[idx].as_constant() != Some(0.0))
                    .map(|idx| (idx / n, idx % n))
                    .collect()
            })
            .unwrap_or_default();
        Ok(Self { dimension: n, drift, gaussian, levy, gaussian_support })
    }

    /// Parses expression strings for an `n`-dimensional model.
    pub fn parse<S: AsRef<str>>(
        drift: &[S],
        gaussian: Option<&[Vec<S>]>,
        levy: Option<Vec<StableParams>>,
    ) -> Result<Self, SimulateError> {
        let n = drift.len();
        let parse = |term: &'static str, index: String, s: &S| {
            Expr::parse(s.as_ref(), n.max(1)).map_err(|source| SimulateError::Expression { term, index, source })
        };
        let drift = drift
            .iter()
            .enumerate()
            .map(|(i, s)| parse("drift", (i + 1).to_string(), s))
            .collect::<Result<Vec<_>, _>>()?;
        let gaussian = match gaussian {
            None => None,
            Some(rows) => Some(
                rows.iter()
                    .enumerate()
                    .map(|(i, row)| {
                        row.iter()
                            .enumerate()
                            .map(|(j, s)| parse("gaussian", format!("{}][{}", i + 1, j + 1), s))
                            .collect::<Result<Vec<_>, _>>()
                    })
                    .collect::<Result<Vec<_>, _>>()?,
            ),
        };
        Self::new(drift, gaussian, levy)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn drift(&self) -> &[Expr] {
        &self.drift
    }

    pub fn gaussian(&self) -> Option<&[Expr]> {
        self.gaussian.as_deref()
    }

    pub fn levy(&self) -> Option<&[StableParams]> {
        self.levy.as_deref()
    }

    /// Drops both noise terms; deterministic Euler steps only.
    pub fn without_noise(self) -> Self {
        self.without_gaussian().without_levy()
    }

    pub fn without_gaussian(mut self) -> Self {
        self.gaussian = None;
        self.gaussian_support.clear();
        self
    }

    pub fn without_levy(mut self) -> Self {
        self.levy = None;
        self
    }

    pub fn drift_at(&self, x: &[f64]) -> Result<Vec<f64>, (usize, ExprError)> {
        self.drift.iter().enumerate().map(|(i, e)| e.eval(x).map_err(|err| (i, err))).collect()
    }

    /// `Λ(x)`, zero when the Brownian term is off.
    pub fn gaussian_at(&self, x: &[f64]) -> Result<DenseMatrix, (usize, ExprError)> {
        let n = self.dimension;
        let mut out = DenseMatrix::zeros(n, n);
        if let Some(g) = &self.gaussian {
            for &(i, j) in &self.gaussian_support {
                out[(i, j)] = g[i * n + j].eval(x).map_err(|e| (i, e))?;
            }
        }
        Ok(out)
    }

    /// Diffusion matrix `a(x) = Λ(x) Λ(x)ᵀ`.
    pub fn diffusion_at(&self, x: &[f64]) -> Result<DenseMatrix, (usize, ExprError)> {
        let l = self.gaussian_at(x)?;
        Ok(l.matmul(&l.transpose()).expect("square"))
    }
}

/// Tensor-product grid size, or an error past `cap`.
pub fn grid_size(mesh: &[usize], cap: usize) -> Result<usize, SimulateError> {
    let points = mesh.iter().fold(1u128, |acc, &m| acc.saturating_mul(m as u128));
    if points > cap as u128 {
        return Err(SimulateError::GridTooLarge { points, cap });
    }
    Ok(points as usize)
}

/// Uniform tensor grid over `bounds` with `mesh[k]` points on axis `k`,
/// endpoints included, first axis varying slowest. An axis with a single
/// point sits at its lower bound.
pub fn generate_grid(bounds: &[(f64, f64)], mesh: &[usize]) -> Result<DenseMatrix, SimulateError> {
    generate_grid_capped(bounds, mesh, DEFAULT_GRID_CAP)
}

pub fn generate_grid_capped(bounds: &[(f64, f64)], mesh: &[usize], cap: usize) -> Result<DenseMatrix, SimulateError> {
    let n = bounds.len();
    if n == 0 {
        return Err(SimulateError::ZeroDimension);
    }
    if mesh.len() != n {
        return Err(SimulateError::Shape { what: "mesh".into(), expected: n, got: mesh.len() });
    }
    for (axis, (&(lo, hi), &m)) in bounds.iter().zip(mesh).enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(SimulateError::Grid { axis: axis + 1, reason: format!("need lower < upper, got [{lo}, {hi}]") });
        }
        if m == 0 {
            return Err(SimulateError::Grid { axis: axis + 1, reason: "mesh must be at least 1".into() });
        }
    }
    let total = grid_size(mesh, cap)?;
    let axes: Vec<Vec<f64>> = bounds
        .iter()
        .zip(mesh)
        .map(|(&(lo, hi), &m)| {
            if m == 1 {
                vec![lo]
            } else {
                let step = (hi - lo) / (m - 1) as f64;
                (0..m).map(|i| if i == m - 1 { hi } else { lo + i as f64 * step }).collect()
            }
        })
        .collect();
    let mut data = vec![0.0; total * n];
    data.par_chunks_mut(n).enumerate().for_each(|(row, out)| {
        let mut rem = row;
        for k in (0..n).rev() {
            out[k] = axes[k][rem % mesh[k]];
            rem /= mesh[k];
        }
    });
    Ok(DenseMatrix::from_vec(total, n, data).expect("finite grid"))
}

/// Pair data `(Z, X)` with `X` the image of `Z` after time `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetPair {
    dimension: usize,
    h: f64,
    z: Vec<f64>,
    x: Vec<f64>,
}

impl DatasetPair {
    pub fn new(dimension: usize, h: f64, z: Vec<f64>, x: Vec<f64>) -> Result<Self, SimulateError> {
        if dimension == 0 {
            return Err(SimulateError::ZeroDimension);
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(SimulateError::Step(h));
        }
        if z.len() != x.len() || z.len() % dimension != 0 {
            return Err(SimulateError::Dataset(format!(
                "Z has {} entries and X has {} for dimension {dimension}",
                z.len(),
                x.len()
            )));
        }
        if z.is_empty() {
            return Err(SimulateError::Empty);
        }
        if let Some(pos) = z.iter().chain(&x).position(|v| !v.is_finite()) {
            return Err(SimulateError::NonFinite { row: (pos % z.len()) / dimension });
        }
        Ok(Self { dimension, h, z, x })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Number of pairs `M`.
    pub fn len(&self) -> usize {
        self.z.len() / self.dimension
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn z_row(&self, j: usize) -> &[f64] {
        &self.z[j * self.dimension..(j + 1) * self.dimension]
    }

    pub fn x_row(&self, j: usize) -> &[f64] {
        &self.x[j * self.dimension..(j + 1) * self.dimension]
    }

    /// Keeps the rows for which `keep(j)` holds, in order.
    pub fn select(&self, keep: impl Fn(usize) -> bool) -> Self {
        let n = self.dimension;
        let mut z = Vec::new();
        let mut x = Vec::new();
        for j in 0..self.len() {
            if keep(j) {
                z.extend_from_slice(self.z_row(j));
                x.extend_from_slice(self.x_row(j));
            }
        }
        Self { dimension: n, h: self.h, z, x }
    }
}

struct StepScratch {
    normals: Vec<f64>,
}

fn step_into(
    model: &SdeModel,
    z: &[f64],
    h: f64,
    rng: &mut StreamRng,
    out: &mut [f64],
    scratch: &mut StepScratch,
) -> Result<(), (usize, &'static str, ExprError)> {
    let n = model.dimension;
    for i in 0..n {
        out[i] = z[i] + h * model.drift[i].eval(z).map_err(|e| (i, "drift", e))?;
    }
    if let Some(g) = &model.gaussian {
        let root_h = h.sqrt();
        for v in scratch.normals.iter_mut() {
            let s: f64 = StandardNormal.sample(rng);
            *v = root_h * s;
        }
        for &(i, j) in &model.gaussian_support {
            let lam = g[i * n + j].eval(z).map_err(|e| (i, "gaussian", e))?;
            out[i] += lam * scratch.normals[j];
        }
    }
    if let Some(levy) = &model.levy {
        for (i, p) in levy.iter().enumerate() {
            let scale = h.powf(1.0 / p.alpha());
            out[i] += p.sigma() * stable_variate(p.shape(), scale, rng);
        }
    }
    Ok(())
}

/// `z + b(z) h + Λ(z) √h g + σ ΔL`, with `g` standard normal and
/// `ΔL_i ~ S_{α_i}(h^{1/α_i}, β_i, 0)`. Errors carry the coordinate.
pub fn euler_pair_step(model: &SdeModel, z: &[f64], h: f64, rng: &mut StreamRng) -> Result<Vec<f64>, SimulateError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(SimulateError::Step(h));
    }
    if z.len() != model.dimension {
        return Err(SimulateError::Shape { what: "initial point".into(), expected: model.dimension, got: z.len() });
    }
    let mut out = vec![0.0; model.dimension];
    let mut scratch = StepScratch { normals: vec![0.0; model.dimension] };
    step_into(model, z, h, rng, &mut out, &mut scratch)
        .map_err(|(coordinate, term, source)| SimulateError::Eval { row: 0, coordinate: coordinate + 1, term, source })?;
    Ok(out)
}

/// Applies [`euler_pair_step`] to every row of `z` (`M × n`), row `j` using
/// stream `j` of `seed`.
pub fn simulate_pairs(model: &SdeModel, z: DenseMatrix, h: f64, seed: u64) -> Result<DatasetPair, SimulateError> {
    let n = model.dimension;
    if !(h > 0.0 && h.is_finite()) {
        return Err(SimulateError::Step(h));
    }
    if z.cols() != n {
        return Err(SimulateError::Shape { what: "initial point columns".into(), expected: n, got: z.cols() });
    }
    if z.rows() == 0 {
        return Err(SimulateError::Empty);
    }
    let key = StreamKey::from_seed(seed);
    let zs = z.as_slice();
    let mut x = vec![0.0; zs.len()];
    let failure = x
        .par_chunks_mut(n)
        .enumerate()
        .map_init(
            || StepScratch { normals: vec![0.0; n] },
            |scratch, (row, out)| {
                let zr = &zs[row * n..(row + 1) * n];
                let mut rng = key.stream(row as u64);
                match step_into(model, zr, h, &mut rng, out, scratch) {
                    Err((coordinate, term, source)) => {
                        Some(SimulateError::Eval { row, coordinate: coordinate + 1, term, source })
                    }
                    Ok(()) if out.iter().any(|v| !v.is_finite()) => Some(SimulateError::NonFinite { row }),
                    Ok(()) => None,
                }
            },
        )
        .flatten()
        .min_by_key(|e| match e {
            SimulateError::Eval { row, .. } | SimulateError::NonFinite { row } => *row,
            _ => usize::MAX,
        });
    if let Some(err) = failure {
        return Err(err);
    }
    DatasetPair::new(n, h, z.as_slice().to_vec(), x)
}

/// A model together with the initial-point grid and step used to exercise it.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: &'static str,
    pub model: SdeModel,
    pub bounds: Vec<(f64, f64)>,
    pub mesh: Vec<usize>,
    pub h: f64,
}

fn p(alpha: f64, beta: f64, sigma: f64) -> StableParams {
    StableParams::new(alpha, beta, sigma).expect("valid built-in parameters")
}

/// Stochastic Lorenz-type system on `[-2, 2]³` with `h = 0.001`.
pub fn lorenz3d() -> Scenario {
    let drift = ["10*(x2 - x1)", "4*x1 - x2 - x1*x3", "-8/3*x3 + x1*x2"];
    let gaussian = vec![vec!["1 + x3", "1", "0"], vec!["0", "x2", "0"], vec!["0", "0", "x1"]];
    let levy = vec![p(0.5, 0.5, 2.0), p(1.0, 0.0, 1.0), p(1.5, -0.5, 0.5)];
    Scenario {
        name: "lorenz3d",
        model: SdeModel::parse(&drift, Some(&gaussian), Some(levy)).expect("built-in model"),
        bounds: vec![(-2.0, 2.0); 3],
        mesh: vec![400; 3],
        h: 1e-3,
    }
}

/// One-dimensional gene regulation model on `[0, 5]` with `h = 0.001`.
pub fn genereg1d() -> Scenario {
    let drift = ["6*x1^2/(x1^2 + 10) - x1 + 0.4"];
    let gaussian = vec![vec!["x1/sqrt(x1^2 + 0.5)"]];
    Scenario {
        name: "genereg1d",
        model: SdeModel::parse(&drift, Some(&gaussian), Some(vec![p(1.5, -0.5, 0.5)])).expect("built-in model"),
        bounds: vec![(0.0, 5.0)],
        mesh: vec![10_000_000],
        h: 1e-3,
    }
}

pub fn scenario_by_name(name: &str) -> Option<Scenario> {
    match name {
        "lorenz3d" => Some(lorenz3d()),
        "genereg1d" => Some(genereg1d()),
        _ => None,
    }
}
