//! JSON model and estimation configuration files.

use std::path::Path;

use levy_sid::basis::{BasisDictionary, BasisError};
use levy_sid::estimate::EstimationConfig;
use levy_sid::expr::Expr;
use levy_sid::simulate::{generate_grid, scenario_by_name, SdeModel, SimulateError};
use levy_sid::stable::{StableError, StableParams};
use levy_sid::numeric::DenseMatrix;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::CliError;

/// Distinguishes an absent field from an explicit `null`.
fn explicit<'de, D, T>(d: D) -> Result<Option<Option<T>>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    Option::<T>::deserialize(d).map(Some)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevyConfig {
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<Vec<usize>>,
}

/// Model file. A built-in `name` supplies defaults that the other fields
/// override; `"gaussian": null` or `"levy": null` switches a noise off.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<Vec<String>>,
    #[serde(default, deserialize_with = "explicit", skip_serializing_if = "Option::is_none")]
    pub gaussian: Option<Option<Vec<Vec<String>>>>,
    #[serde(default, deserialize_with = "explicit", skip_serializing_if = "Option::is_none")]
    pub levy: Option<Option<Vec<LevyConfig>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
}

/// A validated model with its sampling grid.
#[derive(Debug, Clone)]
pub struct ResolvedModel {
    pub model: SdeModel,
    pub bounds: Vec<(f64, f64)>,
    pub mesh: Vec<usize>,
    pub h: f64,
    /// Fully expanded configuration, echoed into reports.
    pub echo: ModelConfig,
}

impl ResolvedModel {
    pub fn grid(&self) -> Result<DenseMatrix, CliError> {
        Ok(generate_grid(&self.bounds, &self.mesh)?)
    }

    pub fn rows(&self) -> usize {
        self.mesh.iter().product()
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn parse_json<T: for<'de> Deserialize<'de>>(text: &str, file: &str) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::config(file, path, e.into_inner().to_string())
    })
}

/// Reads a model file. A bare built-in name that is not an existing file is
/// accepted in place of a path.
pub fn load_model(path: &Path) -> Result<ResolvedModel, CliError> {
    let label = path.display().to_string();
    if !path.exists() {
        if let Some(name) = path.to_str().filter(|s| scenario_by_name(s).is_some()) {
            return resolve_model(ModelConfig { name: Some(name.to_string()), ..Default::default() }, &label);
        }
    }
    parse_model(&read_text(path)?, &label)
}

pub fn parse_model(text: &str, file: &str) -> Result<ResolvedModel, CliError> {
    resolve_model(parse_json(text, file)?, file)
}

fn builtin_defaults(name: &str, file: &str) -> Result<ModelConfig, CliError> {
    let sc = scenario_by_name(name)
        .ok_or_else(|| CliError::config(file, "name", format!("unknown built-in model `{name}` (expected lorenz3d or genereg1d)")))?;
    let n = sc.model.dimension();
    let gaussian = sc.model.gaussian().map(|g| {
        (0..n).map(|i| (0..n).map(|j| g[i * n + j].to_string()).collect()).collect()
    });
    let levy = sc.model.levy().map(|l| {
        l.iter().map(|p| LevyConfig { alpha: p.alpha(), beta: p.beta(), sigma: p.sigma() }).collect()
    });
    Ok(ModelConfig {
        name: Some(name.to_string()),
        dimension: Some(n),
        drift: Some(sc.model.drift().iter().map(|e| e.to_string()).collect()),
        gaussian: Some(gaussian),
        levy: Some(levy),
        grid: Some(GridConfig { bounds: Some(sc.bounds.iter().map(|&(a, b)| [a, b]).collect()), mesh: Some(sc.mesh) }),
        h: Some(sc.h),
    })
}

fn stable_field(e: &StableError) -> &'static str {
    match e {
        StableError::Alpha(_) => ".alpha",
        StableError::Beta(_) => ".beta",
        StableError::Sigma(_) => ".sigma",
        _ => "",
    }
}

pub fn resolve_model(cfg: ModelConfig, file: &str) -> Result<ResolvedModel, CliError> {
    let err = |path: &str, msg: String| CliError::config(file, path, msg);
    let base = match &cfg.name {
        Some(name) => builtin_defaults(name, file)?,
        None => ModelConfig::default(),
    };
    let grid_in = cfg.grid.clone().unwrap_or_default();
    let grid_base = base.grid.clone().unwrap_or_default();
    let drift = cfg.drift.or(base.drift).ok_or_else(|| err("drift", "missing field (or give a built-in `name`)".into()))?;
    let n = drift.len();
    if n == 0 {
        return Err(err("drift", "model needs at least one component".into()));
    }
    if let Some(d) = cfg.dimension {
        if d != n {
            return Err(err("dimension", format!("dimension {d} does not match {n} drift entries")));
        }
    }
    let gaussian = cfg.gaussian.or(base.gaussian).flatten();
    let levy = cfg.levy.or(base.levy).flatten();
    let bounds = grid_in.bounds.or(grid_base.bounds).ok_or_else(|| err("grid.bounds", "missing field".into()))?;
    let mesh = grid_in.mesh.or(grid_base.mesh).ok_or_else(|| err("grid.mesh", "missing field".into()))?;
    let h = cfg.h.or(base.h).ok_or_else(|| err("h", "missing field".into()))?;

    let parse = |path: String, s: &str| Expr::parse(s, n).map_err(|e| err(&path, e.to_string()));
    let drift_exprs = drift.iter().enumerate().map(|(i, s)| parse(format!("drift[{i}]"), s)).collect::<Result<Vec<_>, _>>()?;
    let gaussian_exprs = match &gaussian {
        None => None,
        Some(rows) => {
            if rows.len() != n {
                return Err(err("gaussian", format!("expected {n} rows, found {}", rows.len())));
            }
            let mut out = Vec::with_capacity(n);
            for (i, row) in rows.iter().enumerate() {
                if row.len() != n {
                    return Err(err(&format!("gaussian[{i}]"), format!("expected {n} entries, found {}", row.len())));
                }
                out.push(row.iter().enumerate().map(|(j, s)| parse(format!("gaussian[{i}][{j}]"), s)).collect::<Result<Vec<_>, _>>()?);
            }
            Some(out)
        }
    };
    let levy_params = match &levy {
        None => None,
        Some(list) => {
            if list.len() != n {
                return Err(err("levy", format!("expected {n} entries, found {}", list.len())));
            }
            let params = list
                .iter()
                .enumerate()
                .map(|(i, l)| {
                    StableParams::new(l.alpha, l.beta, l.sigma)
                        .map_err(|e| err(&format!("levy[{i}]{}", stable_field(&e)), e.to_string()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Some(params)
        }
    };
    if !(h > 0.0 && h.is_finite()) {
        return Err(err("h", format!("time step must be positive, got {h}")));
    }
    if bounds.len() != n {
        return Err(err("grid.bounds", format!("expected {n} intervals, found {}", bounds.len())));
    }
    if mesh.len() != n {
        return Err(err("grid.mesh", format!("expected {n} entries, found {}", mesh.len())));
    }
    for (axis, [lo, hi]) in bounds.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(err(&format!("grid.bounds[{axis}]"), format!("need lower < upper, got [{lo}, {hi}]")));
        }
    }
    if let Some(axis) = mesh.iter().position(|&m| m == 0) {
        return Err(err(&format!("grid.mesh[{axis}]"), "mesh must be at least 1".into()));
    }
    levy_sid::simulate::grid_size(&mesh, levy_sid::simulate::DEFAULT_GRID_CAP).map_err(|e| err("grid.mesh", e.to_string()))?;

    let model = SdeModel::new(drift_exprs, gaussian_exprs, levy_params).map_err(|e| match e {
        SimulateError::Shape { ref what, .. } => err(what, e.to_string()),
        other => err("", other.to_string()),
    })?;
    let echo = ModelConfig {
        name: cfg.name,
        dimension: Some(n),
        drift: Some(drift),
        gaussian: Some(gaussian),
        levy: Some(levy),
        grid: Some(GridConfig { bounds: Some(bounds.clone()), mesh: Some(mesh.clone()) }),
        h: Some(h),
    };
    Ok(ResolvedModel { model, bounds: bounds.iter().map(|&[a, b]| (a, b)).collect(), mesh, h, echo })
}

/// Named dictionary (`poly:<d>`, `example2`) or explicit expressions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DictionarySpec {
    Named(String),
    Expressions(Vec<String>),
}

impl DictionarySpec {
    pub fn build(&self, dimension: usize) -> Result<BasisDictionary, BasisError> {
        match self {
            DictionarySpec::Named(name) => BasisDictionary::by_name(name, dimension),
            DictionarySpec::Expressions(list) => BasisDictionary::from_expressions(dimension, list),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEstimation {
    epsilon: f64,
    m: f64,
    #[serde(rename = "N", alias = "n")]
    n_bins: usize,
    #[serde(default)]
    cube_epsilon: Option<f64>,
    dictionary: DictionarySpec,
}

/// Estimation file: bin settings plus the regression dictionary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationSettings {
    #[serde(flatten)]
    pub config: EstimationConfig,
    pub dictionary: DictionarySpec,
}

pub fn load_estimation(path: &Path) -> Result<EstimationSettings, CliError> {
    parse_estimation(&read_text(path)?, &path.display().to_string())
}

pub fn parse_estimation(text: &str, file: &str) -> Result<EstimationSettings, CliError> {
    let raw: RawEstimation = parse_json(text, file)?;
    let err = |path: &str, e: levy_sid::estimate::EstimateError| CliError::config(file, path, e.to_string());
    let mut config = EstimationConfig::new(raw.epsilon, raw.m, raw.n_bins).map_err(|e| {
        let path = if !(raw.epsilon > 0.0 && raw.epsilon.is_finite()) {
            "epsilon"
        } else if !(raw.m > 1.0 && raw.m.is_finite()) {
            "m"
        } else {
            "N"
        };
        err(path, e)
    })?;
    if let Some(c) = raw.cube_epsilon {
        config = config.with_cube_epsilon(c).map_err(|e| err("cube_epsilon", e))?;
    }
    if let DictionarySpec::Expressions(list) = &raw.dictionary {
        if list.is_empty() {
            return Err(CliError::config(file, "dictionary", "dictionary must contain at least one function"));
        }
    }
    Ok(EstimationSettings { config, dictionary: raw.dictionary })
}

/// Builds the dictionary for an `n`-dimensional dataset, reporting failures
/// against the `dictionary` field.
pub fn build_dictionary(spec: &DictionarySpec, n: usize, file: &str) -> Result<BasisDictionary, CliError> {
    spec.build(n).map_err(|e| {
        let path = match (&e, spec) {
            (BasisError::Parse { index, .. }, DictionarySpec::Expressions(_)) => format!("dictionary[{index}]"),
            _ => "dictionary".to_string(),
        };
        CliError::config(file, path, e.to_string())
    })
}
