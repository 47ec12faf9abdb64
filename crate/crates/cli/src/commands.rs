//! Subcommand implementations.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use levy_sid::estimate::estimate_model;
use levy_sid::simulate::{simulate_pairs, DatasetPair};

use crate::config::{build_dictionary, load_estimation, load_model, EstimationSettings, ResolvedModel};
use crate::dataset_io::{read_dataset, write_dataset, DatasetFormat};
use crate::error::CliError;
use crate::report::{DatasetMeta, ReportInputs, RunReport, Timings};

/// Number of points in the plot files written by the pipeline.
pub const PIPELINE_PLOT_POINTS: usize = 501;

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateSummary {
    pub rows: usize,
    pub dimension: usize,
    pub h: f64,
    pub seconds: f64,
}

impl SimulateSummary {
    pub fn rate(&self) -> f64 {
        self.rows as f64 / self.seconds.max(1e-9)
    }
}

pub fn simulate_model(model: &ResolvedModel, seed: u64) -> Result<DatasetPair, CliError> {
    Ok(simulate_pairs(&model.model, model.grid()?, model.h, seed)?)
}

pub fn cmd_simulate(config: &Path, out: &Path, seed: u64, format: DatasetFormat) -> Result<SimulateSummary, CliError> {
    let model = load_model(config)?;
    let start = Instant::now();
    let data = simulate_model(&model, seed)?;
    let seconds = start.elapsed().as_secs_f64();
    write_dataset(out, &data, format)?;
    Ok(SimulateSummary { rows: data.len(), dimension: data.dimension(), h: data.h(), seconds })
}

/// Runs the estimator on an in-memory dataset and packages the report.
pub fn estimate_report(
    data: &DatasetPair,
    settings: &EstimationSettings,
    settings_file: &str,
    model: Option<&ResolvedModel>,
    seed: Option<u64>,
    timings: Option<Timings>,
) -> Result<RunReport, CliError> {
    let dict = build_dictionary(&settings.dictionary, data.dimension(), settings_file)?;
    let start = Instant::now();
    let estimate = estimate_model(data, &dict, &settings.config)?;
    let timings = timings.map(|t| Timings { estimate_seconds: start.elapsed().as_secs_f64(), ..t });
    let inputs = ReportInputs {
        seed,
        model: model.map(|m| m.echo.clone()),
        estimation: settings,
        dataset: DatasetMeta { dimension: data.dimension(), rows: data.len(), h: data.h() },
        functions: dict.names().to_vec(),
        timings,
    };
    Ok(RunReport::build(inputs, &estimate))
}

pub fn cmd_estimate(
    data: &Path,
    est_config: &Path,
    report: &Path,
    model_config: Option<&Path>,
    timings: bool,
) -> Result<RunReport, CliError> {
    let settings = load_estimation(est_config)?;
    let model = model_config.map(load_model).transpose()?;
    let dataset = read_dataset(data)?;
    if let Some(m) = &model {
        if m.model.dimension() != dataset.dimension() {
            return Err(CliError::Usage(format!(
                "model has dimension {} but the dataset has {}",
                m.model.dimension(),
                dataset.dimension()
            )));
        }
    }
    let timing = timings.then_some(Timings { simulate_seconds: None, estimate_seconds: 0.0 });
    let out = estimate_report(&dataset, &settings, &est_config.display().to_string(), model.as_ref(), None, timing)?;
    out.write(report)?;
    Ok(out)
}

/// Drift component `b_i` or diffusion entry `a_ij`, 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Drift(usize),
    Diffusion(usize, usize),
}

impl Component {
    /// Accepts `b1`, `a12`, `b:1` and `a:1,2` (1-based).
    pub fn parse(spec: &str) -> Result<Self, CliError> {
        let bad = || CliError::Usage(format!("bad component `{spec}` (expected b<i>, a<ij>, b:<i> or a:<i>,<j>)"));
        let index = |s: &str| s.trim().parse::<usize>().ok().filter(|&v| v >= 1).map(|v| v - 1).ok_or_else(bad);
        if let Some(rest) = spec.strip_prefix("b") {
            return Ok(Component::Drift(index(rest.strip_prefix(':').unwrap_or(rest))?));
        }
        if let Some(rest) = spec.strip_prefix("a") {
            if let Some(pair) = rest.strip_prefix(':') {
                let (i, j) = pair.split_once(',').ok_or_else(bad)?;
                return Ok(Component::Diffusion(index(i)?, index(j)?));
            }
            let digits: Vec<char> = rest.chars().collect();
            if digits.len() == 2 && digits.iter().all(|c| c.is_ascii_digit()) {
                return Ok(Component::Diffusion(index(&digits[0].to_string())?, index(&digits[1].to_string())?));
            }
        }
        Err(bad())
    }

    pub fn label(self) -> String {
        match self {
            Component::Drift(i) => format!("b{}", i + 1),
            Component::Diffusion(i, j) => {
                let (i, j) = if i <= j { (i, j) } else { (j, i) };
                format!("a{}{}", i + 1, j + 1)
            }
        }
    }

    fn max_index(self) -> usize {
        match self {
            Component::Drift(i) => i,
            Component::Diffusion(i, j) => i.max(j),
        }
    }
}

/// Inclusive arithmetic grid `start:stop:step`.
pub fn parse_range(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = |why: &str| CliError::Usage(format!("bad range `{spec}`: {why}"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(bad("expected start:stop:step"));
    }
    let num = |s: &str| s.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| bad("not a finite number"));
    let (start, stop, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
    if step <= 0.0 {
        return Err(bad("step must be positive"));
    }
    if stop < start {
        return Err(bad("stop is below start"));
    }
    let intervals = ((stop - start) / step * (1.0 + 1e-12)).floor();
    if intervals >= 1e7 {
        return Err(bad("more than 10^7 points"));
    }
    let count = intervals as usize + 1;
    Ok(range_points(start, step, count))
}

fn range_points(start: f64, step: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| start + k as f64 * step).collect()
}

pub struct PlotRequest<'a> {
    pub component: Component,
    pub xs: Vec<f64>,
    /// 0-based coordinate that varies along the plot.
    pub axis: usize,
    /// Values of the other coordinates; defaults to the grid centre when a
    /// model is given, otherwise zeros.
    pub at: Option<Vec<f64>>,
    pub model: Option<&'a ResolvedModel>,
}

/// Plot rows `(x, learned[, true])` for one coefficient of a report.
pub fn plot_rows(report: &RunReport, req: &PlotRequest<'_>) -> Result<Vec<(f64, f64, Option<f64>)>, CliError> {
    let n = report.dataset.dimension;
    if req.component.max_index() >= n {
        return Err(CliError::Usage(format!("component {} out of range for dimension {n}", req.component.label())));
    }
    if req.axis >= n {
        return Err(CliError::Usage(format!("axis {} out of range for dimension {n}", req.axis + 1)));
    }
    let label = req.component.label();
    let table = match req.component {
        Component::Drift(_) => &report.drift,
        Component::Diffusion(..) => &report.diffusion,
    };
    let entry = table.entry(&label).ok_or_else(|| CliError::Usage(format!("report has no coefficient `{label}`")))?;
    let dict = build_dictionary(&report.dictionary.spec, n, "report")?;
    if dict.names() != report.dictionary.functions.as_slice() {
        return Err(CliError::data("report", "dictionary functions do not match the dictionary spec"));
    }
    if let Some(m) = req.model {
        if m.model.dimension() != n {
            return Err(CliError::Usage(format!("model has dimension {} but the report has {n}", m.model.dimension())));
        }
    }
    let mut point = match (&req.at, req.model) {
        (Some(at), _) => {
            if at.len() != n {
                return Err(CliError::Usage(format!("--at needs {n} values, got {}", at.len())));
            }
            at.clone()
        }
        (None, Some(m)) => m.bounds.iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect(),
        (None, None) => vec![0.0; n],
    };
    let mut rows = Vec::with_capacity(req.xs.len());
    for &x in &req.xs {
        point[req.axis] = x;
        let learned = dict.combine(&entry.coefficients, &point).map_err(|e| CliError::Usage(format!("at x = {x}: {e}")))?;
        let truth = match req.model {
            None => None,
            Some(m) => Some(match req.component {
                Component::Drift(i) => m.model.drift_at(&point).map(|b| b[i]),
                Component::Diffusion(i, j) => m.model.diffusion_at(&point).map(|a| a[(i, j)]),
            }
            .map_err(|(k, e)| CliError::Usage(format!("true model, coordinate {}, at x = {x}: {e}", k + 1)))?),
        };
        rows.push((x, learned, truth));
    }
    Ok(rows)
}

pub fn plot_csv(rows: &[(f64, f64, Option<f64>)]) -> String {
    let with_truth = rows.first().is_some_and(|r| r.2.is_some());
    let mut s = String::from(if with_truth { "x,learned,true\n" } else { "x,learned\n" });
    for (x, learned, truth) in rows {
        match truth {
            Some(t) => writeln!(s, "{x:?},{learned:?},{t:?}"),
            None => writeln!(s, "{x:?},{learned:?}"),
        }
        .expect("writing to a string");
    }
    s
}

pub struct PlotArgs<'a> {
    pub report: &'a Path,
    pub model_config: Option<&'a Path>,
    pub component: &'a str,
    pub range: &'a str,
    pub axis: usize,
    pub at: Option<Vec<f64>>,
    pub out: &'a Path,
}

pub fn cmd_plot_data(args: PlotArgs<'_>) -> Result<usize, CliError> {
    let report = RunReport::read(args.report)?;
    let model = args.model_config.map(load_model).transpose()?;
    if args.axis == 0 {
        return Err(CliError::Usage("--axis is 1-based".into()));
    }
    let req = PlotRequest {
        component: Component::parse(args.component)?,
        xs: parse_range(args.range)?,
        axis: args.axis - 1,
        at: args.at,
        model: model.as_ref(),
    };
    let rows = plot_rows(&report, &req)?;
    std::fs::write(args.out, plot_csv(&rows)).map_err(|e| CliError::io(args.out, e))?;
    Ok(rows.len())
}

#[derive(Debug)]
pub struct PipelineOutput {
    pub dataset: PathBuf,
    pub report_path: PathBuf,
    pub plots: Vec<PathBuf>,
    pub report: RunReport,
    pub simulate: SimulateSummary,
}

pub struct PipelineOptions {
    pub seed: u64,
    pub format: DatasetFormat,
    pub timings: bool,
}

pub fn cmd_pipeline(config: &Path, est_config: &Path, workdir: &Path, opts: &PipelineOptions) -> Result<PipelineOutput, CliError> {
    let model = load_model(config)?;
    let settings = load_estimation(est_config)?;
    run_pipeline(&model, &settings, &est_config.display().to_string(), workdir, opts)
}

/// Simulates, writes the dataset, estimates, writes the report and one plot
/// file per learned coefficient along the first axis of the grid.
pub fn run_pipeline(
    model: &ResolvedModel,
    settings: &EstimationSettings,
    settings_file: &str,
    workdir: &Path,
    opts: &PipelineOptions,
) -> Result<PipelineOutput, CliError> {
    std::fs::create_dir_all(workdir).map_err(|e| CliError::io(workdir, e))?;
    let n = model.model.dimension();
    build_dictionary(&settings.dictionary, n, settings_file)?;

    let start = Instant::now();
    let data = simulate_model(model, opts.seed)?;
    let seconds = start.elapsed().as_secs_f64();
    let simulate = SimulateSummary { rows: data.len(), dimension: n, h: data.h(), seconds };
    let dataset = workdir.join(format!("dataset.{}", opts.format.extension()));
    write_dataset(&dataset, &data, opts.format)?;

    let timing = opts.timings.then_some(Timings { simulate_seconds: Some(seconds), estimate_seconds: 0.0 });
    let report = estimate_report(&data, settings, settings_file, Some(model), Some(opts.seed), timing)?;
    drop(data);
    let report_path = workdir.join("report.json");
    report.write(&report_path)?;

    let (lo, hi) = model.bounds[0];
    let step = (hi - lo) / (PIPELINE_PLOT_POINTS - 1) as f64;
    let mut xs = range_points(lo, step, PIPELINE_PLOT_POINTS);
    xs[PIPELINE_PLOT_POINTS - 1] = hi;
    let mut components: Vec<Component> = (0..n).map(Component::Drift).collect();
    for i in 0..n {
        for j in i..n {
            components.push(Component::Diffusion(i, j));
        }
    }
    let mut plots = Vec::new();
    for component in components {
        let req = PlotRequest { component, xs: xs.clone(), axis: 0, at: None, model: Some(model) };
        let rows = plot_rows(&report, &req)?;
        let path = workdir.join(format!("plot_{}.csv", component.label()));
        std::fs::write(&path, plot_csv(&rows)).map_err(|e| CliError::io(&path, e))?;
        plots.push(path);
    }
    Ok(PipelineOutput { dataset, report_path, plots, report, simulate })
}
