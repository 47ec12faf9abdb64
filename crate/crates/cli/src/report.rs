//! JSON run report.

use std::path::Path;

use levy_sid::estimate::{CoefficientTable, EstimationConfig, LevyEstimate, ModelEstimate, Warning};
use levy_sid::numeric::SolveMethod;
use serde::{Deserialize, Serialize};

use crate::config::{DictionarySpec, EstimationSettings, ModelConfig};
use crate::error::CliError;

pub const REPORT_FORMAT: &str = "levy-sid-report v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub dimension: usize,
    pub rows: usize,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinReport {
    /// `ε, mε, …, m^N ε`.
    pub edges: Vec<f64>,
    pub positive: Vec<u64>,
    pub negative: Vec<u64>,
    pub total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevyReport {
    /// 1-based.
    pub component: usize,
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    pub bins: BinReport,
    pub alpha_per_bin: Vec<Option<f64>>,
    pub sigma_per_bin: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryReport {
    pub label: String,
    pub coefficients: Vec<f64>,
    pub residual_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableReport {
    pub entries: Vec<EntryReport>,
    pub method: SolveMethod,
    /// `null` when the condition estimate is not finite.
    pub condition: Option<f64>,
}

impl TableReport {
    pub fn entry(&self, label: &str) -> Option<&EntryReport> {
        self.entries.iter().find(|e| e.label == label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DictionaryReport {
    pub spec: DictionarySpec,
    pub functions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WarningReport {
    pub scope: String,
    pub message: String,
}

/// Wall-clock seconds; only recorded on request since they vary run to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate_seconds: Option<f64>,
    pub estimate_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub format: String,
    pub seed: Option<u64>,
    pub model: Option<ModelConfig>,
    pub estimation: EstimationSettings,
    pub dataset: DatasetMeta,
    pub levy: Vec<LevyReport>,
    pub survival_fraction: f64,
    pub dictionary: DictionaryReport,
    pub drift: TableReport,
    pub diffusion: TableReport,
    pub warnings: Vec<WarningReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn levy_report(e: &LevyEstimate, config: &EstimationConfig) -> LevyReport {
    LevyReport {
        component: e.component + 1,
        alpha: e.alpha,
        beta: e.beta,
        sigma: e.sigma,
        bins: BinReport {
            edges: config.edges(),
            positive: e.counts.positive().to_vec(),
            negative: e.counts.negative().to_vec(),
            total: e.counts.total(),
        },
        alpha_per_bin: e.alpha_per_bin.clone(),
        sigma_per_bin: e.sigma_per_bin.clone(),
    }
}

fn table_report(t: &CoefficientTable) -> TableReport {
    TableReport {
        entries: t
            .entries
            .iter()
            .map(|e| EntryReport { label: e.label.clone(), coefficients: e.coefficients.clone(), residual_norm: e.residual_norm })
            .collect(),
        method: t.method,
        condition: finite(t.condition),
    }
}

fn warnings_of(scope: &str, list: &[Warning], out: &mut Vec<WarningReport>) {
    out.extend(list.iter().map(|w| WarningReport { scope: scope.to_string(), message: w.to_string() }));
}

pub struct ReportInputs<'a> {
    pub seed: Option<u64>,
    pub model: Option<ModelConfig>,
    pub estimation: &'a EstimationSettings,
    pub dataset: DatasetMeta,
    pub functions: Vec<String>,
    pub timings: Option<Timings>,
}

impl RunReport {
    pub fn build(inputs: ReportInputs<'_>, estimate: &ModelEstimate) -> Self {
        let config = &inputs.estimation.config;
        let mut warnings = Vec::new();
        for e in &estimate.levy {
            warnings_of(&format!("levy[{}]", e.component + 1), &e.warnings, &mut warnings);
        }
        warnings_of("drift", &estimate.drift.warnings, &mut warnings);
        warnings_of("diffusion", &estimate.diffusion.warnings, &mut warnings);
        RunReport {
            format: REPORT_FORMAT.to_string(),
            seed: inputs.seed,
            model: inputs.model,
            estimation: inputs.estimation.clone(),
            dataset: inputs.dataset,
            levy: estimate.levy.iter().map(|e| levy_report(e, config)).collect(),
            survival_fraction: estimate.survival_fraction,
            dictionary: DictionaryReport { spec: inputs.estimation.dictionary.clone(), functions: inputs.functions },
            drift: table_report(&estimate.drift),
            diffusion: table_report(&estimate.diffusion),
            warnings,
            timings: inputs.timings,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str, file: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let report: RunReport = serde_path_to_error::deserialize(de)
            .map_err(|e| CliError::data(file, format!("at `{}`: {}", e.path(), e.inner())))?;
        if report.format != REPORT_FORMAT {
            return Err(CliError::data(file, format!("unsupported report format `{}`", report.format)));
        }
        Ok(report)
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.to_json()).map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn levy_component(&self, i: usize) -> Option<&LevyReport> {
        self.levy.iter().find(|l| l.component == i + 1)
    }
}
