//! `iontrap` command-line front end: scenario loading, report formatting and
//! parameter sweeps over the core models.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};

use iontrap_core::detection_chain::{budget, BudgetRow, DetectionScenario, LockinComparison};
use iontrap_core::electrostatics::{calibrate, solve, CalibrationReport, CalibrationTargets, Point, TrapLayout, TrapSolution};
use iontrap_core::entanglement_link::{compare, entanglement_rate, monte_carlo, MonteCarloEstimate, RateReport};
use iontrap_core::scenario::{
    preset_text, sweep_value, EntanglementModel, FidelityQuery, Model, Scenario, Schema, SweepSpec, TrapModel,
    TOOLKIT_VERSION,
};
use iontrap_core::state_detection::{fidelity_at_time, min_integration_time, optimal_threshold, CountModel};
use iontrap_core::Error;

pub const PRESET_DIR_ENV: &str = "IONTRAP_PRESET_DIR";

#[derive(Debug, Parser)]
#[command(name = "iontrap", version, about = "Ion-trap detection signal-chain toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Built-in preset name.
    #[arg(long, conflicts_with = "scenario")]
    pub preset: Option<String>,
    /// Scenario JSON file.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Seed for stochastic operations (overrides the scenario's).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for file artifacts.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Trap electrostatics.
    Trap {
        #[command(subcommand)]
        op: TrapOp,
    },
    /// Detection budget and lock-in simulation.
    Detect {
        #[command(subcommand)]
        op: DetectOp,
    },
    /// State-detection fidelity.
    Fidelity {
        #[command(subcommand)]
        op: FidelityOp,
    },
    /// Remote-entanglement link rates.
    Entangle {
        #[command(subcommand)]
        op: EntangleOp,
    },
    /// Evaluate a scenario over a parameter range.
    Sweep(SweepArgs),
}

#[derive(Debug, Subcommand)]
pub enum TrapOp {
    /// Minimum, secular frequencies and depth of a layout.
    Solve(Common),
    /// Fit a five-wire template to height, frequency and depth targets.
    Calibrate(Common),
}

#[derive(Debug, Subcommand)]
pub enum DetectOp {
    /// Static power budget (one table row).
    Budget(Common),
    /// Lock-in runs with and without ions.
    Lockin(LockinArgs),
}

#[derive(Debug, Clone, Args)]
pub struct LockinArgs {
    #[command(flatten)]
    pub common: Common,
    /// Histogram bin width, V.
    #[arg(long, default_value_t = 0.01)]
    pub bin_width: f64,
}

#[derive(Debug, Subcommand)]
pub enum FidelityOp {
    /// Minimum integration time for the target fidelity.
    Time(Common),
}

#[derive(Debug, Subcommand)]
pub enum EntangleOp {
    /// Heralded entanglement rate report.
    Rate(Common),
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    /// Dot path into the model; overrides the scenario's sweep.
    #[arg(long)]
    pub parameter: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub start: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub stop: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Detection scenarios: also run the lock-in simulation at every point.
    #[arg(long)]
    pub simulate: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Model(#[from] Error),
    #[error("cannot access {path}: {message}")]
    Io { path: String, message: String },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    /// 2 for malformed input, 3 for model or solver failures, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io { .. } => 1,
            CliError::Model(e) => match e {
                Error::Parse { .. } | Error::Invalid { .. } | Error::Config(_) => 2,
                _ => 3,
            },
        }
    }

    /// Machine-readable error report.
    pub fn report(&self) -> Value {
        let (kind, field, detail) = match self {
            CliError::Usage(_) => ("usage", None, Value::Null),
            CliError::Io { path, .. } => ("io", Some(path.clone()), Value::Null),
            CliError::Model(e) => match e {
                Error::Parse { path, .. } => ("schema", Some(path.clone()), Value::Null),
                Error::Invalid { field, .. } => ("schema", Some(field.clone()), Value::Null),
                Error::Config(_) => ("config", None, Value::Null),
                Error::NoConvergence { iterations, gradient_norm, best } => (
                    "no_convergence",
                    None,
                    json!({"iterations": iterations, "gradient_norm": gradient_norm, "best_m": best}),
                ),
                Error::UnstableTrap { axis, eigenvalue } => {
                    ("unstable_trap", None, json!({"axis": axis, "eigenvalue": eigenvalue}))
                }
                Error::InvalidLayout { z } => ("invalid_layout", None, json!({"z_m": z})),
                Error::UnboundedSearch { bound } => ("unbounded_search", None, json!({"bound_m": bound})),
                Error::Calibration(_) => ("calibration", None, Value::Null),
                Error::NotDiscriminable { bright, dark } => {
                    ("not_discriminable", None, json!({"bright": bright, "dark": dark}))
                }
                Error::Infeasible { target, supremum } => {
                    ("infeasible", None, json!({"target": target, "supremum": supremum}))
                }
                Error::Domain(_) => ("domain", None, Value::Null),
            },
        };
        json!({
            "error": kind,
            "field": field,
            "message": self.to_string(),
            "detail": detail,
            "exit_code": self.exit_code(),
            "toolkit_version": TOOLKIT_VERSION,
        })
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// A file to be written under `--out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub stdout: String,
    pub files: Vec<Artifact>,
    pub out_dir: Option<PathBuf>,
}

impl Outcome {
    /// Writes artifacts under the output directory, if one was given.
    pub fn write_files(&self) -> CliResult<()> {
        let Some(dir) = &self.out_dir else {
            return Ok(());
        };
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        for a in &self.files {
            let p = dir.join(&a.name);
            std::fs::write(&p, &a.contents).map_err(|e| io_error(&p, e))?;
        }
        Ok(())
    }
}

fn io_error(p: &Path, e: std::io::Error) -> CliError {
    CliError::Io {
        path: p.display().to_string(),
        message: e.to_string(),
    }
}

/// Loads `--preset` (searching `IONTRAP_PRESET_DIR` first) or `--scenario`.
pub fn load_scenario(c: &Common) -> CliResult<Scenario> {
    let text = match (&c.preset, &c.scenario) {
        (Some(name), None) => {
            let from_dir = std::env::var_os(PRESET_DIR_ENV)
                .map(|d| PathBuf::from(d).join(format!("{name}.json")))
                .filter(|p| p.is_file());
            match from_dir {
                Some(p) => std::fs::read_to_string(&p).map_err(|e| io_error(&p, e))?,
                None => preset_text(name)
                    .ok_or_else(|| {
                        CliError::Model(Error::Parse {
                            path: "preset".into(),
                            message: format!("unknown preset '{name}'"),
                        })
                    })?
                    .to_string(),
            }
        }
        (None, Some(p)) => std::fs::read_to_string(p).map_err(|e| io_error(p, e))?,
        _ => return Err(CliError::Usage("give exactly one of --preset and --scenario".into())),
    };
    Ok(Scenario::parse(&text)?)
}

fn expect_schema(s: &Scenario, want: Schema) -> CliResult<()> {
    if s.schema() != want {
        return Err(Error::invalid(
            "schema",
            format!("this command needs '{}', scenario is '{}'", want.tag(), s.schema().tag()),
        )
        .into());
    }
    Ok(())
}

/// Number formatting shared by every CSV: shortest round-trip form,
/// scientific outside [1e-3, 1e7).
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 || !v.is_finite() || (v.abs() >= 1e-3 && v.abs() < 1e7) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn opt_num(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

/// CSV text with a header row and `\n` line endings.
pub fn csv_table(headers: &[String], rows: &[Vec<String>]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(headers).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

type Columns = Vec<(String, String)>;

fn single_row(cols: Columns) -> String {
    let (h, v): (Vec<String>, Vec<String>) = cols.into_iter().unzip();
    csv_table(&h, &[v])
}

fn json_report(schema: Schema, command: &str, result: Value) -> String {
    let v = json!({
        "schema": schema.tag(),
        "toolkit_version": TOOLKIT_VERSION,
        "command": command,
        "result": result,
    });
    serde_json::to_string_pretty(&v).expect("report serializes") + "\n"
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report serializes")
}

/// Histogram CSV (`bin_center,count`) with bins `[lo + k·w, lo + (k+1)·w)`
/// aligned to multiples of `bin_width`.
pub fn emit_histogram(samples: &[f64], bin_width: f64) -> Result<String, Error> {
    if !(bin_width > 0.0) || !bin_width.is_finite() {
        return Err(Error::Domain(format!("bin width must be positive, got {bin_width}")));
    }
    if samples.len() < 2 {
        return Err(Error::Domain("need at least two samples".into()));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("samples must be finite".into()));
    }
    let bin = |v: f64| (v / bin_width).floor() as i64;
    let lo = samples.iter().copied().map(bin).min().unwrap();
    let hi = samples.iter().copied().map(bin).max().unwrap();
    let mut counts = vec![0u64; (hi - lo + 1) as usize];
    for &v in samples {
        counts[(bin(v) - lo) as usize] += 1;
    }
    let rows: Vec<Vec<String>> = counts
        .iter()
        .enumerate()
        .map(|(i, c)| vec![fmt_num((lo + i as i64) as f64 * bin_width + 0.5 * bin_width), c.to_string()])
        .collect();
    Ok(csv_table(&["bin_center".into(), "count".into()], &rows))
}

fn col(name: &str, v: impl Into<String>) -> (String, String) {
    (name.to_string(), v.into())
}

pub fn budget_columns(r: &BudgetRow) -> Columns {
    vec![
        col("name", r.name.clone()),
        col("detector", to_value(&r.detector).as_str().unwrap_or_default()),
        col("temperature_K", fmt_num(r.temperature_k)),
        col("emitted_power_W", fmt_num(r.emitted_power_w)),
        col("source_power_W", fmt_num(r.source_power_w)),
        col("solid_angle_fraction", fmt_num(r.solid_angle_fraction)),
        col("stack_transmission", fmt_num(r.stack_transmission)),
        col("collection_efficiency", fmt_num(r.collection_efficiency)),
        col("power_at_detector_W", fmt_num(r.power_at_detector_w)),
        col("quantum_efficiency", fmt_num(r.quantum_efficiency)),
        col("photocurrent_A", opt_num(r.photocurrent_a)),
        col("lockin_output_V", opt_num(r.lockin_output_v)),
    ]
}

pub fn solution_columns(s: &TrapSolution) -> Columns {
    let [x, y, z] = s.minimum_position;
    let [f1, f2, f3] = s.secular_frequencies;
    vec![
        col("x_m", fmt_num(x)),
        col("y_m", fmt_num(y)),
        col("z_m", fmt_num(z)),
        col("f1_Hz", fmt_num(f1)),
        col("f2_Hz", fmt_num(f2)),
        col("f3_Hz", fmt_num(f3)),
        col("depth_eV", fmt_num(s.trap_depth)),
        col("rf_only_depth_eV", fmt_num(s.rf_only_depth)),
        col("escape_z_m", fmt_num(s.escape_position[2])),
        col("mathieu_q", fmt_num(s.mathieu_q)),
    ]
}

fn lockin_columns(c: &LockinComparison) -> Columns {
    vec![
        col("with_ions_mean_V", fmt_num(c.with_ions.mean_v)),
        col("with_ions_std_V", fmt_num(c.with_ions.std_v)),
        col("without_ions_mean_V", fmt_num(c.without_ions.mean_v)),
        col("without_ions_std_V", fmt_num(c.without_ions.std_v)),
        col("signal_V", fmt_num(c.signal_v)),
        col("pooled_std_V", fmt_num(c.pooled_std_v)),
        col("separation", fmt_num(c.separation)),
    ]
}

fn rate_columns(r: &RateReport) -> Columns {
    vec![
        col("protocol", to_value(&r.protocol).as_str().unwrap_or_default()),
        col("attempt_rate_Hz", fmt_num(r.attempt_rate_hz)),
        col("per_attempt_probability", fmt_num(r.per_attempt_probability)),
        col("rate_per_s", fmt_num(r.rate_s)),
    ]
}

fn trap_model(s: &Scenario) -> CliResult<&TrapModel> {
    expect_schema(s, Schema::TrapLayout)?;
    match &s.model {
        Model::Trap(t) => Ok(t),
        _ => unreachable!(),
    }
}

fn detection_model(s: &Scenario) -> CliResult<&DetectionScenario> {
    expect_schema(s, Schema::Detection)?;
    match &s.model {
        Model::Detection(d) => Ok(d),
        _ => unreachable!(),
    }
}

fn entanglement_model(s: &Scenario) -> CliResult<&EntanglementModel> {
    expect_schema(s, Schema::Entanglement)?;
    match &s.model {
        Model::Entanglement(e) => Ok(e),
        _ => unreachable!(),
    }
}

fn fidelity_model(s: &Scenario) -> CliResult<&FidelityQuery> {
    expect_schema(s, Schema::Fidelity)?;
    match &s.model {
        Model::Fidelity(f) => Ok(f),
        _ => unreachable!(),
    }
}

fn layout_and_guess(t: &TrapModel) -> CliResult<(TrapLayout, Point)> {
    let layout = match (&t.layout, &t.template) {
        (Some(l), _) => l.clone(),
        (None, Some(tpl)) => tpl.build()?,
        (None, None) => return Err(Error::invalid("model.layout", "missing").into()),
    };
    let guess = match (t.initial_guess, &t.template) {
        (Some(g), _) => Point::new(g[0], g[1], g[2]),
        (None, Some(tpl)) => Point::new(0.0, 0.0, tpl.analytic_height()),
        (None, None) => return Err(Error::invalid("model.initial_guess_m", "needed without a template").into()),
    };
    Ok((layout, guess))
}

pub fn trap_solve(s: &Scenario) -> CliResult<TrapSolution> {
    let (layout, guess) = layout_and_guess(trap_model(s)?)?;
    Ok(solve(&layout, &guess)?)
}

pub fn trap_calibrate(s: &Scenario) -> CliResult<(TrapLayout, CalibrationReport)> {
    let t = trap_model(s)?;
    let template = t
        .template
        .as_ref()
        .ok_or_else(|| Error::invalid("model.template", "calibration needs a template"))?;
    let targets = t.targets.clone().unwrap_or_else(CalibrationTargets::standard);
    Ok(calibrate(template, &targets)?)
}

pub fn detect_budget(s: &Scenario) -> CliResult<BudgetRow> {
    Ok(budget(detection_model(s)?)?)
}

pub fn detect_lockin(s: &Scenario, seed: Option<u64>) -> CliResult<LockinComparison> {
    let d = detection_model(s)?;
    let seed = s.require_seed(seed)?;
    Ok(d.simulate(seed)?)
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct FidelityReport {
    pub bright_rate_s: f64,
    pub dark_rate_s: f64,
    pub target_fidelity: f64,
    pub min_time_s: f64,
    pub threshold_at_min_time: u64,
    pub fidelity_at_min_time: f64,
    pub integration_time_s: Option<f64>,
    pub fidelity_at_integration_time: Option<f64>,
}

pub fn fidelity_time(s: &Scenario) -> CliResult<FidelityReport> {
    let q = fidelity_model(s)?;
    let bright = q.bright_rate()?;
    let t = min_integration_time(bright, q.dark_rate_s, q.target_fidelity)?;
    let at = optimal_threshold(&CountModel {
        bright_rate: bright,
        dark_rate: q.dark_rate_s,
        integration_time: t,
    })?;
    let f_window = match q.integration_time_s {
        Some(w) => Some(fidelity_at_time(bright, q.dark_rate_s, w)?),
        None => None,
    };
    Ok(FidelityReport {
        bright_rate_s: bright,
        dark_rate_s: q.dark_rate_s,
        target_fidelity: q.target_fidelity,
        min_time_s: t,
        threshold_at_min_time: at.threshold,
        fidelity_at_min_time: at.fidelity,
        integration_time_s: q.integration_time_s,
        fidelity_at_integration_time: f_window,
    })
}

fn fidelity_columns(r: &FidelityReport) -> Columns {
    vec![
        col("bright_rate_per_s", fmt_num(r.bright_rate_s)),
        col("dark_rate_per_s", fmt_num(r.dark_rate_s)),
        col("target_fidelity", fmt_num(r.target_fidelity)),
        col("min_time_s", fmt_num(r.min_time_s)),
        col("threshold_counts", r.threshold_at_min_time.to_string()),
        col("fidelity_at_min_time", fmt_num(r.fidelity_at_min_time)),
        col("integration_time_s", opt_num(r.integration_time_s)),
        col("fidelity_at_integration_time", opt_num(r.fidelity_at_integration_time)),
    ]
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct EntanglementReport {
    pub rate: RateReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison: Option<iontrap_core::entanglement_link::LinkComparison>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<MonteCarloEstimate>,
}

/// Rate report; the Monte Carlo check runs only when `with_monte_carlo` is set.
pub fn entangle_rate(s: &Scenario, seed: Option<u64>, with_monte_carlo: bool) -> CliResult<EntanglementReport> {
    let m = entanglement_model(s)?;
    let mut rate = entanglement_rate(&m.link)?;
    let comparison = match &m.baseline {
        Some(b) => {
            let c = compare(&m.link, b)?;
            rate.ratio_to_baseline = Some(rate.rate_s / c.baseline_linear.rate_s);
            Some(c)
        }
        None => None,
    };
    let mc = match m.monte_carlo_attempts.filter(|_| with_monte_carlo) {
        Some(n) => Some(monte_carlo(&m.link, n, s.require_seed(seed)?)?),
        None => None,
    };
    Ok(EntanglementReport {
        rate,
        comparison,
        monte_carlo: mc,
    })
}

fn entanglement_columns(r: &EntanglementReport) -> Columns {
    let mut cols = rate_columns(&r.rate);
    let c = r.comparison.as_ref();
    cols.extend([
        col("baseline_linear_rate_per_s", opt_num(c.map(|c| c.baseline_linear.rate_s))),
        col("baseline_coincidence_rate_per_s", opt_num(c.map(|c| c.baseline_coincidence.rate_s))),
        col("published_baseline_rate_per_s", opt_num(c.map(|c| c.published_baseline_rate_s))),
        col("ratio_to_baseline_linear", opt_num(c.map(|c| c.ratio_linear))),
        col("ratio_to_published", opt_num(c.map(|c| c.ratio_to_published))),
        col("baseline_discrepancy", c.map(|c| c.baseline_discrepancy.to_string()).unwrap_or_default()),
    ]);
    let mc = r.monte_carlo.as_ref();
    cols.extend([
        col("mc_attempts", mc.map(|m| m.attempts.to_string()).unwrap_or_default()),
        col("mc_probability", opt_num(mc.map(|m| m.probability))),
        col("mc_standard_error", opt_num(mc.map(|m| m.standard_error))),
    ]);
    cols
}

/// Sweep over `spec`, evaluating points in parallel; rows keep sweep order.
pub fn sweep(s: &Scenario, spec: &SweepSpec, simulate: bool, seed: Option<u64>) -> CliResult<String> {
    spec.validate()?;
    let seed = if simulate { Some(s.require_seed(seed)?) } else { None };
    if simulate && s.schema() != Schema::Detection {
        return Err(Error::invalid("sweep.simulate", "only detection scenarios can be simulated").into());
    }
    let values = spec.values();
    // surface bad paths as input errors before fanning out
    s.with_parameter(&spec.parameter, sweep_value(values[0]))?;
    let rows: Vec<CliResult<Columns>> = values
        .par_iter()
        .enumerate()
        .map(|(i, &v)| {
            let mut point = s.with_parameter(&spec.parameter, sweep_value(v))?;
            // a fixed quoted source power would mask a swept source
            if let Model::Detection(d) = &mut point.model {
                if spec.parameter.starts_with("source.") {
                    d.reference_source_power = None;
                }
            }
            let mut cols = vec![col("index", i.to_string()), col(&spec.parameter, fmt_num(v))];
            cols.extend(match s.schema() {
                Schema::TrapLayout => solution_columns(&trap_solve(&point)?),
                Schema::Detection => {
                    let mut c = budget_columns(&detect_budget(&point)?);
                    if let Some(seed) = seed {
                        c.extend(lockin_columns(&detect_lockin(&point, Some(seed))?));
                    }
                    c
                }
                Schema::Entanglement => entanglement_columns(&entangle_rate(&point, None, false)?),
                Schema::Fidelity => fidelity_columns(&fidelity_time(&point)?),
            });
            Ok(cols)
        })
        .collect();
    let mut headers = Vec::new();
    let mut table = Vec::with_capacity(rows.len());
    for r in rows {
        let cols = r?;
        if headers.is_empty() {
            headers = cols.iter().map(|(h, _)| h.clone()).collect();
        }
        table.push(cols.into_iter().map(|(_, v)| v).collect());
    }
    Ok(csv_table(&headers, &table))
}

fn render(format: Format, schema: Schema, command: &str, result: Value, cols: Columns) -> String {
    match format {
        Format::Json => json_report(schema, command, result),
        Format::Csv => single_row(cols),
    }
}

/// Executes a parsed command line.
pub fn run(cli: &Cli) -> CliResult<Outcome> {
    let (common, stdout, files) = match &cli.command {
        Command::Trap { op: TrapOp::Solve(c) } => {
            let s = load_scenario(c)?;
            let sol = trap_solve(&s)?;
            (c, render(c.format, s.schema(), "trap solve", to_value(&sol), solution_columns(&sol)), vec![])
        }
        Command::Trap { op: TrapOp::Calibrate(c) } => {
            let s = load_scenario(c)?;
            let (layout, report) = trap_calibrate(&s)?;
            let mut cols = solution_columns(&report.solution);
            cols.extend([
                col("height_relative_residual", fmt_num(report.residuals.height_relative)),
                col("depth_relative_residual", fmt_num(report.residuals.depth_relative)),
                col("band_violation_Hz", fmt_num(report.residuals.band_violation_hz)),
                col("cost", fmt_num(report.cost)),
                col("evaluations", report.evaluations.to_string()),
            ]);
            let calibrated = Scenario {
                name: s.name.clone(),
                seed: None,
                overrides: Default::default(),
                sweep: None,
                outputs: None,
                model: Model::Trap(TrapModel {
                    layout: Some(layout.clone()),
                    template: Some(report.template.clone()),
                    targets: Some(trap_model(&s)?.targets.clone().unwrap_or_else(CalibrationTargets::standard)),
                    initial_guess: Some(report.solution.minimum_position),
                }),
            };
            let files = vec![Artifact {
                name: "calibrated_layout.json".into(),
                contents: calibrated.to_json() + "\n",
            }];
            let result = json!({"layout": layout, "report": report});
            (c, render(c.format, s.schema(), "trap calibrate", result, cols), files)
        }
        Command::Detect { op: DetectOp::Budget(c) } => {
            let s = load_scenario(c)?;
            let row = detect_budget(&s)?;
            (c, render(c.format, s.schema(), "detect budget", to_value(&row), budget_columns(&row)), vec![])
        }
        Command::Detect { op: DetectOp::Lockin(a) } => {
            let c = &a.common;
            let s = load_scenario(c)?;
            let cmp = detect_lockin(&s, c.seed)?;
            let with = emit_histogram(cmp.with_ions.settled(), a.bin_width)?;
            let without = emit_histogram(cmp.without_ions.settled(), a.bin_width)?;
            let trace: Vec<Vec<String>> = cmp
                .with_ions
                .time_s
                .iter()
                .zip(cmp.with_ions.output_v.iter().zip(&cmp.without_ions.output_v))
                .map(|(t, (w, wo))| vec![fmt_num(*t), fmt_num(*w), fmt_num(*wo)])
                .collect();
            let files = vec![
                Artifact {
                    name: "lockin_trace.csv".into(),
                    contents: csv_table(&["time_s".into(), "with_ions_V".into(), "without_ions_V".into()], &trace),
                },
                Artifact {
                    name: "lockin_hist_with_ions.csv".into(),
                    contents: with,
                },
                Artifact {
                    name: "lockin_hist_without_ions.csv".into(),
                    contents: without,
                },
            ];
            let summary = json!({
                "with_ions": {"mean_v": cmp.with_ions.mean_v, "std_v": cmp.with_ions.std_v},
                "without_ions": {"mean_v": cmp.without_ions.mean_v, "std_v": cmp.without_ions.std_v},
                "signal_v": cmp.signal_v,
                "pooled_std_v": cmp.pooled_std_v,
                "separation": cmp.separation,
            });
            (c, render(c.format, s.schema(), "detect lockin", summary, lockin_columns(&cmp)), files)
        }
        Command::Fidelity { op: FidelityOp::Time(c) } => {
            let s = load_scenario(c)?;
            let r = fidelity_time(&s)?;
            (c, render(c.format, s.schema(), "fidelity time", to_value(&r), fidelity_columns(&r)), vec![])
        }
        Command::Entangle { op: EntangleOp::Rate(c) } => {
            let s = load_scenario(c)?;
            let r = entangle_rate(&s, c.seed, true)?;
            (c, render(c.format, s.schema(), "entangle rate", to_value(&r), entanglement_columns(&r)), vec![])
        }
        Command::Sweep(a) => {
            let c = &a.common;
            let s = load_scenario(c)?;
            let base = s.sweep.clone();
            let spec = SweepSpec {
                parameter: a
                    .parameter
                    .clone()
                    .or_else(|| base.as_ref().map(|b| b.parameter.clone()))
                    .ok_or_else(|| Error::invalid("sweep.parameter", "no sweep given"))?,
                start: a.start.or(base.as_ref().map(|b| b.start)).ok_or_else(|| Error::invalid("sweep.start", "missing"))?,
                stop: a.stop.or(base.as_ref().map(|b| b.stop)).ok_or_else(|| Error::invalid("sweep.stop", "missing"))?,
                steps: a.steps.or(base.as_ref().map(|b| b.steps)).ok_or_else(|| Error::invalid("sweep.steps", "missing"))?,
            };
            let table = sweep(&s, &spec, a.simulate, c.seed)?;
            let files = vec![Artifact {
                name: "sweep.csv".into(),
                contents: table.clone(),
            }];
            (c, table, files)
        }
    };
    Ok(Outcome {
        stdout,
        files,
        out_dir: common.out.clone(),
    })
}
