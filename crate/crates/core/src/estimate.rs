//! Nonlocal Kramers–Moyal estimators.
//!
//! Lévy parameters are read off from jump-tail interval counts of each
//! component's increments. Drift and diffusion come from least-squares fits
//! of the small-increment moments against a basis dictionary, after removing
//! the contribution of the jumps that stay inside the cube `[−ε, ε]ⁿ`.
//!
//! Component indices in this module are 0-based; labels in tables are
//! 1-based (`b1`, `a12`).

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::{BasisDictionary, BasisError};
use crate::numeric::{solve_streaming, sym_eigen, DenseMatrix, NumericError, RowBlocks, SolveMethod, CONDITION_LIMIT};
use crate::simulate::DatasetPair;
use crate::stable::{correction_r, correction_s, k_alpha, StableError, StableParams};

/// Clamp range for the tail-index estimate.
pub const ALPHA_MIN: f64 = 0.01;
pub const ALPHA_MAX: f64 = 1.99;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimateError {
    #[error("invalid estimation config: {0}")]
    Config(String),
    #[error("component index {index} out of range for dimension {dimension}")]
    Component { index: usize, dimension: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("no rows survive the cube filter of half-width {0}")]
    EmptyCube(f64),
    #[error("{rows} rows cannot determine {basis} coefficients")]
    TooFewRows { rows: usize, basis: usize },
    #[error("matrix is not positive semidefinite: eigenvalue {eigenvalue} < -{tolerance}")]
    NotPsd { eigenvalue: f64, tolerance: f64 },
    #[error("{0}")]
    Shape(String),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Stable(#[from] StableError),
}

/// Non-fatal diagnostics collected along the way.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    AlphaClamped { raw: f64, clamped: f64 },
    EmptyBin { estimator: &'static str, k: usize },
    IllConditioned { condition: f64 },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::AlphaClamped { raw, clamped } => write!(f, "alpha estimate {raw} clamped to {clamped}"),
            Warning::EmptyBin { estimator, k } => write!(f, "{estimator}: bin {k} is empty and was skipped"),
            Warning::IllConditioned { condition } => {
                write!(f, "normal equations ill-conditioned (condition {condition:.3e}); solved by QR")
            }
        }
    }
}

#[derive(Deserialize)]
struct RawConfig {
    epsilon: f64,
    m: f64,
    #[serde(rename = "N", alias = "n")]
    n_bins: usize,
    #[serde(default)]
    cube_epsilon: Option<f64>,
}

/// Bin origin `ε`, growth ratio `m`, bin count `N` and the optional separate
/// cube half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConfig")]
pub struct EstimationConfig {
    epsilon: f64,
    m: f64,
    #[serde(rename = "N")]
    n_bins: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    cube_epsilon: Option<f64>,
}

impl TryFrom<RawConfig> for EstimationConfig {
    type Error = EstimateError;
    fn try_from(raw: RawConfig) -> Result<Self, Self::Error> {
        let mut cfg = Self::new(raw.epsilon, raw.m, raw.n_bins)?;
        if let Some(c) = raw.cube_epsilon {
            cfg = cfg.with_cube_epsilon(c)?;
        }
        Ok(cfg)
    }
}

impl EstimationConfig {
    pub fn new(epsilon: f64, m: f64, n_bins: usize) -> Result<Self, EstimateError> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(EstimateError::Config(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(m > 1.0 && m.is_finite()) {
            return Err(EstimateError::Config(format!("m must exceed 1, got {m}")));
        }
        if n_bins == 0 {
            return Err(EstimateError::Config("N must be at least 1".into()));
        }
        let top = epsilon * m.powi(n_bins as i32 + 1);
        if !top.is_finite() {
            return Err(EstimateError::Config(format!("outermost bin edge epsilon*m^(N+1) overflows")));
        }
        Ok(Self { epsilon, m, n_bins, cube_epsilon: None })
    }

    pub fn with_cube_epsilon(mut self, half_width: f64) -> Result<Self, EstimateError> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(EstimateError::Config(format!("cube half-width must be positive, got {half_width}")));
        }
        self.cube_epsilon = Some(half_width);
        Ok(self)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    /// Half-width of the cube used by the drift and diffusion fits.
    pub fn cube_half_width(&self) -> f64 {
        self.cube_epsilon.unwrap_or(self.epsilon)
    }

    /// Bin edges `ε m^k`, `k = 0 … N+1`.
    pub fn edges(&self) -> Vec<f64> {
        (0..=self.n_bins + 1).map(|k| self.epsilon * self.m.powi(k as i32)).collect()
    }
}

/// Tail interval counts `n_k^±` of one component's increments.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinCounts {
    positive: Vec<u64>,
    negative: Vec<u64>,
    total: u64,
    h: f64,
}

impl BinCounts {
    pub fn new(positive: Vec<u64>, negative: Vec<u64>, total: u64, h: f64) -> Result<Self, EstimateError> {
        if positive.len() != negative.len() || positive.len() < 2 {
            return Err(EstimateError::Shape(format!(
                "need N+1 ≥ 2 counts per side, got {} and {}",
                positive.len(),
                negative.len()
            )));
        }
        if positive.iter().chain(&negative).any(|&c| c > total) {
            return Err(EstimateError::Shape(format!("a bin count exceeds the total {total}")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(EstimateError::Shape(format!("step h must be positive, got {h}")));
        }
        Ok(Self { positive, negative, total, h })
    }

    pub fn positive(&self) -> &[u64] {
        &self.positive
    }

    pub fn negative(&self) -> &[u64] {
        &self.negative
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// `n_k^+ + n_k^-`.
    pub fn combined(&self, k: usize) -> u64 {
        self.positive[k] + self.negative[k]
    }

    pub fn n_bins(&self) -> usize {
        self.positive.len() - 1
    }
}

/// `X[:, i] − Z[:, i]` in row order.
pub fn component_increments(data: &DatasetPair, i: usize) -> Result<Vec<f64>, EstimateError> {
    let n = data.dimension();
    if i >= n {
        return Err(EstimateError::Component { index: i, dimension: n });
    }
    Ok(data.x().iter().skip(i).step_by(n).zip(data.z().iter().skip(i).step_by(n)).map(|(x, z)| x - z).collect())
}

/// Counts increments in `[m^k ε, m^{k+1} ε)` and `[−m^{k+1} ε, −m^k ε)`.
pub fn bin_counts(y: &[f64], config: &EstimationConfig, h: f64) -> Result<BinCounts, EstimateError> {
    let edges = config.edges();
    let bins = config.n_bins + 1;
    let count = |chunk: &[f64]| {
        let mut pos = vec![0u64; bins];
        let mut neg = vec![0u64; bins];
        for &v in chunk {
            let a = v.abs();
            if a < edges[0] || a >= edges[bins] {
                // a negative value sitting exactly on -m^{N+1}ε is in the last bin
                if v < 0.0 && a == edges[bins] {
                    neg[bins - 1] += 1;
                }
                continue;
            }
            let mut k = 0;
            while a >= edges[k + 1] {
                k += 1;
            }
            if v > 0.0 {
                pos[k] += 1;
            } else if a == edges[k] && k > 0 {
                // -m^k ε closes negative bin k-1
                neg[k - 1] += 1;
            } else if a != edges[k] {
                neg[k] += 1;
            }
        }
        (pos, neg)
    };
    let (positive, negative) = y
        .par_chunks(1 << 16)
        .map(count)
        .reduce(
            || (vec![0; bins], vec![0; bins]),
            |mut a, b| {
                a.0.iter_mut().zip(b.0).for_each(|(x, y)| *x += y);
                a.1.iter_mut().zip(b.1).for_each(|(x, y)| *x += y);
                a
            },
        );
    BinCounts::new(positive, negative, y.len() as u64, h)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaEstimate {
    pub value: f64,
    /// `ln(n_0/n_k) / (k ln m)` for `k = 1 … N`, `None` where bin `k` is empty.
    pub per_bin: Vec<Option<f64>>,
    pub warnings: Vec<Warning>,
}

/// Mean over usable `k ≥ 1` of `ln(n_0 / n_k) / (k ln m)`, clamped into
/// `[ALPHA_MIN, ALPHA_MAX]`.
pub fn estimate_alpha(counts: &BinCounts, config: &EstimationConfig) -> Result<AlphaEstimate, EstimateError> {
    let n0 = counts.combined(0);
    if n0 == 0 {
        return Err(EstimateError::InsufficientData("innermost tail bin is empty; alpha is undetermined".into()));
    }
    let mut warnings = Vec::new();
    let ln_m = config.m.ln();
    let per_bin: Vec<Option<f64>> = (1..=counts.n_bins())
        .map(|k| {
            let nk = counts.combined(k);
            if nk == 0 {
                warnings.push(Warning::EmptyBin { estimator: "alpha", k });
                None
            } else {
                Some((n0 as f64 / nk as f64).ln() / (k as f64 * ln_m))
            }
        })
        .collect();
    let usable: Vec<f64> = per_bin.iter().flatten().copied().collect();
    if usable.is_empty() {
        return Err(EstimateError::InsufficientData("all outer tail bins are empty; alpha is undetermined".into()));
    }
    let raw = usable.iter().sum::<f64>() / usable.len() as f64;
    let value = raw.clamp(ALPHA_MIN, ALPHA_MAX);
    if value != raw {
        warnings.push(Warning::AlphaClamped { raw, clamped: value });
    }
    Ok(AlphaEstimate { value, per_bin, warnings })
}

/// `β = (1−ρ)/(1+ρ)` with `ρ = Σn_k^- / Σn_k^+`.
pub fn estimate_beta(counts: &BinCounts) -> Result<f64, EstimateError> {
    let pos: u64 = counts.positive.iter().sum();
    let neg: u64 = counts.negative.iter().sum();
    match (pos, neg) {
        (0, 0) => Err(EstimateError::InsufficientData("no increments fall in any tail bin; beta is undetermined".into())),
        (0, _) => Ok(-1.0),
        (_, 0) => Ok(1.0),
        // (1-ρ)/(1+ρ) rewritten without the intermediate ratio
        (p, q) => Ok((p as f64 - q as f64) / (p as f64 + q as f64)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaEstimate {
    pub value: f64,
    /// Per-bin scale estimates for `k = 0 … N`.
    pub per_bin: Vec<Option<f64>>,
    pub warnings: Vec<Warning>,
}

/// Mean over nonempty bins of
/// `[α ε^α m^{kα} n_k / (k_α h M (1 − m^{−α}))]^{1/α}`.
pub fn estimate_sigma(
    counts: &BinCounts,
    alpha_hat: f64,
    config: &EstimationConfig,
) -> Result<SigmaEstimate, EstimateError> {
    let ka = k_alpha(alpha_hat)?;
    let a = alpha_hat;
    let denom = ka * counts.h * counts.total as f64 * (1.0 - config.m.powf(-a));
    let mut warnings = Vec::new();
    let per_bin: Vec<Option<f64>> = (0..=counts.n_bins())
        .map(|k| {
            let nk = counts.combined(k);
            if nk == 0 {
                warnings.push(Warning::EmptyBin { estimator: "sigma", k });
                return None;
            }
            let num = a * config.epsilon.powf(a) * config.m.powf(k as f64 * a) * nk as f64;
            Some((num / denom).powf(1.0 / a))
        })
        .collect();
    let usable: Vec<f64> = per_bin.iter().flatten().copied().collect();
    if usable.is_empty() {
        return Err(EstimateError::InsufficientData("all tail bins are empty; sigma is undetermined".into()));
    }
    let value = usable.iter().sum::<f64>() / usable.len() as f64;
    Ok(SigmaEstimate { value, per_bin, warnings })
}

/// Lévy parameter estimate for one component with its diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevyEstimate {
    /// 0-based component index.
    pub component: usize,
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    pub counts: BinCounts,
    pub alpha_per_bin: Vec<Option<f64>>,
    pub sigma_per_bin: Vec<Option<f64>>,
    pub warnings: Vec<Warning>,
}

impl LevyEstimate {
    pub fn params(&self) -> Result<StableParams, EstimateError> {
        Ok(StableParams::new(self.alpha, self.beta, self.sigma)?)
    }
}

/// Tail-interval estimate of `(α_i, β_i, σ_i)` from component `i` alone.
pub fn estimate_levy(data: &DatasetPair, i: usize, config: &EstimationConfig) -> Result<LevyEstimate, EstimateError> {
    let y = component_increments(data, i)?;
    estimate_levy_from_increments(&y, i, config, data.h())
}

pub fn estimate_levy_from_increments(
    y: &[f64],
    component: usize,
    config: &EstimationConfig,
    h: f64,
) -> Result<LevyEstimate, EstimateError> {
    let counts = bin_counts(y, config, h)?;
    let alpha = estimate_alpha(&counts, config)?;
    let beta = estimate_beta(&counts)?;
    let sigma = estimate_sigma(&counts, alpha.value, config)?;
    let mut warnings = alpha.warnings;
    warnings.extend(sigma.warnings);
    Ok(LevyEstimate {
        component,
        alpha: alpha.value,
        beta,
        sigma: sigma.value,
        counts,
        alpha_per_bin: alpha.per_bin,
        sigma_per_bin: sigma.per_bin,
        warnings,
    })
}

/// Keeps rows with `max_i |x_i − z_i| ≤ half_width`, returning them in order
/// together with the survival fraction `M̂/M`.
pub fn cube_filter(data: &DatasetPair, half_width: f64) -> Result<(DatasetPair, f64), EstimateError> {
    if !(half_width > 0.0) {
        return Err(EstimateError::Config(format!("cube half-width must be positive, got {half_width}")));
    }
    let inside = |j: usize| data.x_row(j).iter().zip(data.z_row(j)).all(|(x, z)| (x - z).abs() <= half_width);
    let kept = data.select(inside);
    if kept.is_empty() {
        return Err(EstimateError::EmptyCube(half_width));
    }
    let fraction = kept.len() as f64 / data.len() as f64;
    Ok((kept, fraction))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TableKind {
    Drift,
    Diffusion,
}

/// Coefficients of one drift component `b_i` or one diffusion entry `a_ij`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientEntry {
    /// `b1`, `a12`, … (1-based).
    pub label: String,
    pub i: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j: Option<usize>,
    pub coefficients: Vec<f64>,
    pub residual_norm: f64,
}

/// Fitted coefficients over a dictionary. Diffusion tables hold `i ≤ j`
/// only and are read back symmetrically.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientTable {
    pub kind: TableKind,
    pub functions: Vec<String>,
    pub entries: Vec<CoefficientEntry>,
    pub survival_fraction: f64,
    pub method: SolveMethod,
    pub condition: f64,
    pub warnings: Vec<Warning>,
}

impl CoefficientTable {
    /// Coefficients of `b_i`.
    pub fn drift(&self, i: usize) -> Option<&[f64]> {
        if self.kind != TableKind::Drift {
            return None;
        }
        self.entries.iter().find(|e| e.i == i).map(|e| e.coefficients.as_slice())
    }

    /// Coefficients of `a_ij = a_ji`.
    pub fn diffusion(&self, i: usize, j: usize) -> Option<&[f64]> {
        if self.kind != TableKind::Diffusion {
            return None;
        }
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.entries.iter().find(|e| e.i == i && e.j == Some(j)).map(|e| e.coefficients.as_slice())
    }

    pub fn entry(&self, label: &str) -> Option<&CoefficientEntry> {
        self.entries.iter().find(|e| e.label == label)
    }

    /// Coefficient of the named dictionary function in the entry `label`.
    pub fn coefficient(&self, label: &str, function: &str) -> Option<f64> {
        let k = self.functions.iter().position(|f| f == function)?;
        self.entry(label).map(|e| e.coefficients[k])
    }

    /// Learned `a(x)` assembled from a diffusion table.
    pub fn diffusion_matrix_at(&self, dict: &BasisDictionary, x: &[f64]) -> Result<DenseMatrix, EstimateError> {
        let n = dict.dimension();
        let mut a = DenseMatrix::zeros(n, n);
        for e in &self.entries {
            let j = e.j.ok_or_else(|| EstimateError::Shape("not a diffusion table".into()))?;
            let v = dict.combine(&e.coefficients, x).map_err(|source| BasisError::Eval { row: 0, function: 0, source })?;
            a[(e.i, j)] = v;
            a[(j, e.i)] = v;
        }
        Ok(a)
    }
}

pub fn drift_label(i: usize) -> String {
    format!("b{}", i + 1)
}

pub fn diffusion_label(i: usize, j: usize) -> String {
    format!("a{}{}", i + 1, j + 1)
}

/// Streams design rows `ψ(ẑ_j)` and scaled moment targets.
struct MomentRows<'a> {
    data: &'a DatasetPair,
    dict: &'a BasisDictionary,
    scale: f64,
    /// `(i, R_i)` for drift targets.
    drift: Vec<(usize, f64)>,
    /// `(i, j, S_ij)` for diffusion targets.
    diffusion: Vec<(usize, usize, f64)>,
}

impl RowBlocks for MomentRows<'_> {
    type Error = EstimateError;

    fn rows(&self) -> usize {
        self.data.len()
    }

    fn basis_len(&self) -> usize {
        self.dict.len()
    }

    fn target_len(&self) -> usize {
        self.drift.len() + self.diffusion.len()
    }

    fn fill(&self, start: usize, design: &mut [f64], targets: &mut [f64]) -> Result<(), EstimateError> {
        let k = self.dict.len();
        let t = self.target_len();
        for (r, row_design) in design.chunks_exact_mut(k).enumerate() {
            let row = start + r;
            let z = self.data.z_row(row);
            let x = self.data.x_row(row);
            self.dict
                .eval_into(z, row_design)
                .map_err(|(function, source)| BasisError::Eval { row, function, source })?;
            let out = &mut targets[r * t..(r + 1) * t];
            for (o, &(i, corr)) in out.iter_mut().zip(&self.drift) {
                *o = self.scale * (x[i] - z[i]) - corr;
            }
            for (o, &(i, j, corr)) in out[self.drift.len()..].iter_mut().zip(&self.diffusion) {
                *o = self.scale * (x[i] - z[i]) * (x[j] - z[j]) - corr;
            }
        }
        Ok(())
    }
}

/// Drift and diffusion fits from one streaming pass over the filtered data.
///
/// `levy = None` drops the jump corrections (`R = S = 0`).
pub fn regress_moments(
    filtered: &DatasetPair,
    fraction: f64,
    dict: &BasisDictionary,
    levy: Option<&[StableParams]>,
    config: &EstimationConfig,
) -> Result<(CoefficientTable, CoefficientTable), EstimateError> {
    let n = filtered.dimension();
    let drift: Vec<usize> = (0..n).collect();
    let diffusion: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let mut tables = fit(filtered, fraction, dict, levy, config, &drift, &diffusion)?;
    let diff = tables.pop().expect("two tables");
    let drift = tables.pop().expect("two tables");
    Ok((drift, diff))
}

/// Least-squares drift coefficients `c_i`, one entry per component.
pub fn drift_regression(
    filtered: &DatasetPair,
    fraction: f64,
    dict: &BasisDictionary,
    levy: Option<&[StableParams]>,
    config: &EstimationConfig,
) -> Result<CoefficientTable, EstimateError> {
    let drift: Vec<usize> = (0..filtered.dimension()).collect();
    Ok(fit(filtered, fraction, dict, levy, config, &drift, &[])?.swap_remove(0))
}

/// Least-squares diffusion coefficients `d_ij` for `i ≤ j`.
pub fn diffusion_regression(
    filtered: &DatasetPair,
    fraction: f64,
    dict: &BasisDictionary,
    levy: Option<&[StableParams]>,
    config: &EstimationConfig,
) -> Result<CoefficientTable, EstimateError> {
    let n = filtered.dimension();
    let diffusion: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    Ok(fit(filtered, fraction, dict, levy, config, &[], &diffusion)?.swap_remove(1))
}

fn fit(
    filtered: &DatasetPair,
    fraction: f64,
    dict: &BasisDictionary,
    levy: Option<&[StableParams]>,
    config: &EstimationConfig,
    drift: &[usize],
    diffusion: &[(usize, usize)],
) -> Result<Vec<CoefficientTable>, EstimateError> {
    let n = filtered.dimension();
    if dict.dimension() != n {
        return Err(BasisError::PointDimension { expected: dict.dimension(), got: n }.into());
    }
    if let Some(l) = levy {
        if l.len() != n {
            return Err(EstimateError::Shape(format!("{} Lévy parameter sets for dimension {n}", l.len())));
        }
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(EstimateError::Shape(format!("survival fraction {fraction} outside (0, 1]")));
    }
    if filtered.len() < dict.len() {
        return Err(EstimateError::TooFewRows { rows: filtered.len(), basis: dict.len() });
    }
    let eps = config.cube_half_width();
    let r = |i: usize| -> Result<f64, EstimateError> {
        Ok(match levy {
            Some(l) => correction_r(&l[i], eps)?,
            None => 0.0,
        })
    };
    let s = |i: usize, j: usize| -> Result<f64, EstimateError> {
        Ok(match levy {
            Some(l) if i == j => correction_s(&l[i], eps, i, j)?,
            _ => 0.0,
        })
    };
    let rows = MomentRows {
        data: filtered,
        dict,
        scale: fraction / filtered.h(),
        drift: drift.iter().map(|&i| Ok((i, r(i)?))).collect::<Result<_, EstimateError>>()?,
        diffusion: diffusion.iter().map(|&(i, j)| Ok((i, j, s(i, j)?))).collect::<Result<_, EstimateError>>()?,
    };
    let sol = solve_streaming(&rows, CONDITION_LIMIT)?;
    let warnings = match sol.method {
        SolveMethod::Qr => vec![Warning::IllConditioned { condition: sol.condition }],
        SolveMethod::NormalEquations => Vec::new(),
    };
    let table = |kind, entries| CoefficientTable {
        kind,
        functions: dict.names().to_vec(),
        entries,
        survival_fraction: fraction,
        method: sol.method,
        condition: sol.condition,
        warnings: warnings.clone(),
    };
    let drift_entries = drift
        .iter()
        .enumerate()
        .map(|(t, &i)| CoefficientEntry {
            label: drift_label(i),
            i,
            j: None,
            coefficients: sol.column(t),
            residual_norm: sol.residual_norms[t],
        })
        .collect();
    let diffusion_entries = diffusion
        .iter()
        .enumerate()
        .map(|(t, &(i, j))| {
            let t = t + drift.len();
            CoefficientEntry {
                label: diffusion_label(i, j),
                i,
                j: Some(j),
                coefficients: sol.column(t),
                residual_norm: sol.residual_norms[t],
            }
        })
        .collect();
    Ok(vec![table(TableKind::Drift, drift_entries), table(TableKind::Diffusion, diffusion_entries)])
}

/// `Λ = Q √J` from `a = Q J Qᵀ`, with eigenvalues in `[−tolerance, 0)`
/// treated as zero.
pub fn factor_diffusion(a: &DenseMatrix, tolerance: f64) -> Result<DenseMatrix, EstimateError> {
    if !(tolerance >= 0.0) {
        return Err(EstimateError::Config(format!("tolerance must be nonnegative, got {tolerance}")));
    }
    let n = a.rows();
    if a.cols() != n {
        return Err(NumericError::Shape(format!("{}x{} is not square", n, a.cols())).into());
    }
    let mut sym = a.clone();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            sym[(i, j)] = m;
            sym[(j, i)] = m;
        }
    }
    if worst > tolerance.max(1e-12 * a.frobenius_norm()) {
        return Err(NumericError::NotSymmetric(worst).into());
    }
    let eig = sym_eigen(&sym)?;
    let mut out = DenseMatrix::zeros(n, n);
    for (c, &lambda) in eig.values.iter().enumerate() {
        if lambda < -tolerance {
            return Err(EstimateError::NotPsd { eigenvalue: lambda, tolerance });
        }
        let root = lambda.max(0.0).sqrt();
        for r in 0..n {
            out[(r, c)] = eig.vectors[(r, c)] * root;
        }
    }
    Ok(out)
}

/// Everything the estimator extracts from one dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelEstimate {
    pub levy: Vec<LevyEstimate>,
    pub survival_fraction: f64,
    pub drift: CoefficientTable,
    pub diffusion: CoefficientTable,
}

/// Lévy identification per component, cube filter, then one regression pass
/// using the estimated jump parameters for the corrections.
pub fn estimate_model(
    data: &DatasetPair,
    dict: &BasisDictionary,
    config: &EstimationConfig,
) -> Result<ModelEstimate, EstimateError> {
    let levy = (0..data.dimension()).map(|i| estimate_levy(data, i, config)).collect::<Result<Vec<_>, _>>()?;
    let params = levy.iter().map(LevyEstimate::params).collect::<Result<Vec<_>, _>>()?;
    let (filtered, fraction) = cube_filter(data, config.cube_half_width())?;
    let (drift, diffusion) = regress_moments(&filtered, fraction, dict, Some(&params), config)?;
    Ok(ModelEstimate { levy, survival_fraction: fraction, drift, diffusion })
}
