//! Repeated seeded tomography runs over a sweep of binning strategies.
//!
//! Every repetition draws one dataset from a seed derived from
//! `(master_seed, repetition)`, so all sweep points of a repetition see the
//! same samples. Timings cover width selection, histogramming, operator
//! construction and MLE; dataset generation is excluded.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binning::{build_histograms_anchored, estimate_mean_photon, mean_width, BinAnchor, WidthStrategy};
use crate::error::{invalid, Result, TomoError};
use crate::fock::{fidelity, DensityMatrix};
use crate::mle::{reconstruct, LikelihoodModel, MleConfig};
use crate::povm::{build_bin_operator_set_with_order, default_quadrature_order, BinMode, PointPovmBuilder, DEFAULT_EFFICIENCY};
use crate::sampler::{derive_seed, generate_from_state, PhaseSchedule, QuadratureDataset};
use crate::states::{PreparedState, StateSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// One point operator per sample.
    Raw,
    Center,
    Integral,
}

impl Mode {
    pub fn bin_mode(self) -> Option<BinMode> {
        match self {
            Mode::Raw => None,
            Mode::Center => Some(BinMode::Center),
            Mode::Integral => Some(BinMode::Integral),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Raw => "raw",
            Mode::Center => "center",
            Mode::Integral => "integral",
        })
    }
}

impl FromStr for Mode {
    type Err = TomoError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "raw" => Ok(Mode::Raw),
            "center" => Ok(Mode::Center),
            "integral" => Ok(Mode::Integral),
            other => invalid(format!("unknown mode `{other}` (expected raw, center or integral)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub mode: Mode,
    /// Ignored in raw mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<WidthStrategy>,
}

impl SweepPoint {
    pub fn raw() -> Self {
        Self { mode: Mode::Raw, strategy: None }
    }

    pub fn binned(strategy: WidthStrategy, mode: Mode) -> Self {
        Self { mode, strategy: Some(strategy) }
    }

    pub fn fixed(width: f64, mode: Mode) -> Self {
        Self::binned(WidthStrategy::Fixed { width }, mode)
    }

    pub fn strategy_label(&self) -> String {
        match (&self.mode, &self.strategy) {
            (Mode::Raw, _) | (_, None) => "none".into(),
            (_, Some(s)) => s.to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.mode, &self.strategy) {
            (Mode::Raw, _) => Ok(()),
            (_, None) => invalid(format!("{} mode needs a width strategy", self.mode)),
            (_, Some(s)) => s.validate(),
        }
    }
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

fn default_eta() -> f64 {
    DEFAULT_EFFICIENCY
}

fn default_repetitions() -> usize {
    100
}

/// JSON experiment description. The truncation lives in `state`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub state: StateSpec,
    /// Number of equally spaced phases in `[0, π)`.
    pub m: usize,
    /// Total samples `N`, split evenly across phases.
    pub samples: usize,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    pub sweep: Vec<SweepPoint>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
    #[serde(default)]
    pub mle: MleConfig,
    #[serde(default)]
    pub anchor: BinAnchor,
    /// Gauss–Legendre order for integral mode; `None` uses `max(20, t + 2)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature_order: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(state: StateSpec, m: usize, samples: usize, repetitions: usize, sweep: Vec<SweepPoint>, master_seed: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            state,
            m,
            samples,
            eta: DEFAULT_EFFICIENCY,
            repetitions,
            sweep,
            master_seed,
            output_path: None,
            mle: MleConfig::default(),
            anchor: BinAnchor::default(),
            quadrature_order: None,
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(s)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn truncation(&self) -> usize {
        self.state.truncation
    }

    pub fn schedule(&self) -> Result<PhaseSchedule> {
        PhaseSchedule::new(self.m, self.samples)
    }

    pub fn quadrature_order(&self) -> usize {
        self.quadrature_order.unwrap_or_else(|| default_quadrature_order(self.truncation()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return invalid(format!("unsupported schema_version {} (expected {SCHEMA_VERSION})", self.schema_version));
        }
        if self.repetitions == 0 {
            return invalid("repetitions must be at least 1");
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return invalid(format!("efficiency must lie in (0, 1], got {}", self.eta));
        }
        if self.m <= self.truncation() {
            return invalid(format!("{} phases cannot determine a state truncated at t = {}", self.m, self.truncation()));
        }
        if self.quadrature_order == Some(0) || self.quadrature_order == Some(1) {
            return invalid("quadrature order must be at least 2");
        }
        self.state.validate()?;
        self.schedule()?;
        self.mle.validate()?;
        self.sweep.iter().try_for_each(SweepPoint::validate)
    }

    pub fn dataset_seed(&self, repetition: usize) -> u64 {
        derive_seed(self.master_seed, repetition as u64, 0)
    }
}

/// One reconstruction. `fidelity` is NaN when `error` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub point: usize,
    pub strategy: String,
    pub mode: Mode,
    pub repetition: usize,
    pub seed: u64,
    /// Mean realized bin width over phases; empty in raw mode.
    pub width: Option<f64>,
    pub operators: usize,
    pub fidelity: f64,
    pub wall_time_s: f64,
    pub nbar_estimate: f64,
    pub iterations_rpr: usize,
    pub iterations_rga: usize,
    pub final_gap: f64,
    pub converged: bool,
    pub error: Option<String>,
}

impl RunRow {
    /// Rows that enter the sweep means.
    pub fn included(&self) -> bool {
        self.converged && self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub strategy: String,
    pub mode: Mode,
    pub width: Option<f64>,
    pub mean_fidelity: f64,
    pub std_fidelity: f64,
    pub mean_time_s: f64,
    pub mean_nbar: f64,
    pub included: usize,
    pub non_converged: usize,
    pub failed: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub rows: Vec<RunRow>,
    pub summaries: Vec<SweepSummary>,
    pub warnings: Vec<String>,
}

impl ExperimentReport {
    pub fn non_converged(&self) -> usize {
        self.rows.iter().filter(|r| !r.converged && r.error.is_none()).count()
    }

    pub fn failed(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }
}

/// Mean and sample standard deviation; NaN where undefined.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Aggregates rows per sweep point, in row order, over included rows only.
pub fn summarize(sweep: &[SweepPoint], rows: &[RunRow]) -> Vec<SweepSummary> {
    sweep
        .iter()
        .enumerate()
        .map(|(i, point)| {
            let mine: Vec<&RunRow> = rows.iter().filter(|r| r.point == i).collect();
            let ok: Vec<&RunRow> = mine.iter().copied().filter(|r| r.included()).collect();
            let collect = |f: &dyn Fn(&RunRow) -> f64| ok.iter().map(|r| f(r)).collect::<Vec<_>>();
            let (mean_fidelity, std_fidelity) = mean_std(&collect(&|r| r.fidelity));
            let widths: Vec<f64> = ok.iter().filter_map(|r| r.width).collect();
            SweepSummary {
                strategy: point.strategy_label(),
                mode: point.mode,
                width: (!widths.is_empty()).then(|| mean_std(&widths).0),
                mean_fidelity,
                std_fidelity,
                mean_time_s: mean_std(&collect(&|r| r.wall_time_s)).0,
                mean_nbar: mean_std(&collect(&|r| r.nbar_estimate)).0,
                included: ok.len(),
                non_converged: mine.iter().filter(|r| !r.converged && r.error.is_none()).count(),
                failed: mine.iter().filter(|r| r.error.is_some()).count(),
            }
        })
        .collect()
}

/// Reconstructs `rho_true` from `dataset` at one sweep point.
pub fn run_on_dataset(
    config: &ExperimentConfig,
    point_index: usize,
    repetition: usize,
    dataset: &QuadratureDataset,
    rho_true: &DensityMatrix,
) -> RunRow {
    let point = &config.sweep[point_index];
    let mut row = RunRow {
        point: point_index,
        strategy: point.strategy_label(),
        mode: point.mode,
        repetition,
        seed: config.dataset_seed(repetition),
        width: None,
        operators: 0,
        fidelity: f64::NAN,
        wall_time_s: f64::NAN,
        nbar_estimate: f64::NAN,
        iterations_rpr: 0,
        iterations_rga: 0,
        final_gap: f64::NAN,
        converged: false,
        error: None,
    };
    if let Err(e) = execute(config, point, dataset, rho_true, &mut row) {
        row.error = Some(e.to_string());
        row.converged = false;
    }
    row
}

fn execute(config: &ExperimentConfig, point: &SweepPoint, dataset: &QuadratureDataset, rho_true: &DensityMatrix, row: &mut RunRow) -> Result<()> {
    row.nbar_estimate = estimate_mean_photon(dataset)?;
    let t = config.truncation();
    let start = Instant::now();
    let model = match (point.mode.bin_mode(), &point.strategy) {
        (None, _) => raw_model(dataset, t, config.eta)?,
        (Some(mode), Some(strategy)) => {
            let hists = build_histograms_anchored(dataset, strategy, t, config.anchor)?;
            row.width = Some(mean_width(&hists));
            build_bin_operator_set_with_order(&hists, mode, t, config.eta, config.quadrature_order())?.likelihood_model()?
        }
        (Some(_), None) => return invalid("binned mode without a width strategy"),
    };
    row.operators = model.len();
    let result = reconstruct(&model, &config.mle)?;
    row.wall_time_s = start.elapsed().as_secs_f64();
    row.iterations_rpr = result.iterations_rpr;
    row.iterations_rga = result.iterations_rga;
    row.final_gap = result.final_gap_bound;
    row.converged = result.converged;
    row.fidelity = fidelity(&result.rho_hat, rho_true)?;
    Ok(())
}

/// One efficiency-corrected point operator per sample.
pub fn raw_model(dataset: &QuadratureDataset, t: usize, eta: f64) -> Result<LikelihoodModel> {
    let mut builder = PointPovmBuilder::new(t, eta)?;
    let ops = dataset.samples.iter().map(|s| (builder.build(s.x, s.theta), 1u64)).collect::<Vec<_>>();
    LikelihoodModel::from_weighted(t + 1, ops)
}

fn repetition_dataset(config: &ExperimentConfig, prepared: &PreparedState, repetition: usize) -> Result<QuadratureDataset> {
    let mut ds = generate_from_state(&prepared.rho_true, &config.schedule()?, config.eta, config.dataset_seed(repetition))?;
    ds.spec = Some(config.state.clone());
    Ok(ds)
}

/// A single `(sweep point, repetition)` run, regenerating its dataset.
pub fn run_single(config: &ExperimentConfig, point_index: usize, repetition: usize) -> Result<RunRow> {
    config.validate()?;
    if point_index >= config.sweep.len() {
        return invalid(format!("sweep point {point_index} out of range ({} points)", config.sweep.len()));
    }
    let prepared = config.state.prepare()?;
    let dataset = repetition_dataset(config, &prepared, repetition)?;
    Ok(run_on_dataset(config, point_index, repetition, &dataset, &prepared.rho_true))
}

/// All sweep points for all repetitions. Row errors are recorded in the
/// row and do not abort the sweep.
pub fn run_sweep(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let prepared = config.state.prepare()?;
    let points = config.sweep.len();
    let per_rep: Vec<Vec<RunRow>> = (0..config.repetitions)
        .into_par_iter()
        .map(|rep| match repetition_dataset(config, &prepared, rep) {
            Ok(ds) => (0..points).into_par_iter().map(|i| run_on_dataset(config, i, rep, &ds, &prepared.rho_true)).collect(),
            Err(e) => (0..points)
                .map(|i| RunRow {
                    point: i,
                    strategy: config.sweep[i].strategy_label(),
                    mode: config.sweep[i].mode,
                    repetition: rep,
                    seed: config.dataset_seed(rep),
                    width: None,
                    operators: 0,
                    fidelity: f64::NAN,
                    wall_time_s: f64::NAN,
                    nbar_estimate: f64::NAN,
                    iterations_rpr: 0,
                    iterations_rga: 0,
                    final_gap: f64::NAN,
                    converged: false,
                    error: Some(e.to_string()),
                })
                .collect(),
        })
        .collect();
    let mut rows: Vec<RunRow> = per_rep.into_iter().flatten().collect();
    rows.sort_by_key(|r| (r.point, r.repetition));
    let summaries = summarize(&config.sweep, &rows);
    Ok(ExperimentReport { config: config.clone(), rows, summaries, warnings: prepared.warning.into_iter().collect() })
}

/// Writes `summary.csv`, `runs.csv` and `plot.svg` into `dir`.
pub fn emit_report(report: &ExperimentReport, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_summary_csv(&report.summaries, dir.join("summary.csv"))?;
    write_runs_csv(&report.rows, dir.join("runs.csv"))?;
    std::fs::write(dir.join("plot.svg"), render_svg(&report.summaries, &report.config.state.kind.label()))?;
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.12e}")).unwrap_or_default()
}

pub fn write_summary_csv(summaries: &[SweepSummary], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["strategy", "mode", "width", "mean_fidelity", "std_fidelity", "mean_time_s", "mean_nbar"])?;
    for s in summaries {
        w.write_record([
            s.strategy.clone(),
            s.mode.to_string(),
            fmt_opt(s.width),
            format!("{:.17e}", s.mean_fidelity),
            format!("{:.17e}", s.std_fidelity),
            format!("{:.17e}", s.mean_time_s),
            format!("{:.17e}", s.mean_nbar),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_runs_csv(rows: &[RunRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record([
        "point",
        "strategy",
        "mode",
        "repetition",
        "seed",
        "width",
        "operators",
        "fidelity",
        "wall_time_s",
        "nbar_estimate",
        "iterations_rpr",
        "iterations_rga",
        "final_gap",
        "converged",
        "error",
    ])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_runs_csv(path: impl AsRef<Path>) -> Result<Vec<RunRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Fidelity against mean width, one series per binned mode; raw mode is a
/// horizontal band.
pub fn render_svg(summaries: &[SweepSummary], title: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const L: f64 = 70.0;
    const R: f64 = 20.0;
    const T: f64 = 40.0;
    const B: f64 = 50.0;
    let finite = |v: f64| v.is_finite().then_some(v);
    let pts: Vec<&SweepSummary> = summaries.iter().filter(|s| finite(s.mean_fidelity).is_some()).collect();
    let xs: Vec<f64> = pts.iter().filter_map(|s| s.width).collect();
    let (xmin, xmax) = match (xs.iter().cloned().reduce(f64::min), xs.iter().cloned().reduce(f64::max)) {
        (Some(a), Some(b)) if b > a => (0.0f64.min(a), b * 1.05),
        (Some(a), _) => (0.0, (a * 2.0).max(1.0)),
        _ => (0.0, 1.0),
    };
    let spread = |s: &SweepSummary| finite(s.std_fidelity).unwrap_or(0.0);
    let lo = pts.iter().map(|s| s.mean_fidelity - spread(s)).fold(f64::INFINITY, f64::min);
    let hi = pts.iter().map(|s| s.mean_fidelity + spread(s)).fold(f64::NEG_INFINITY, f64::max);
    let (ymin, ymax) = if lo.is_finite() && hi > lo { (lo - 0.05 * (hi - lo), (hi + 0.05 * (hi - lo)).min(1.0).max(hi)) } else { (0.0, 1.0) };
    let px = |x: f64| L + (x - xmin) / (xmax - xmin) * (W - L - R);
    let py = |y: f64| H - B - (y - ymin) / (ymax - ymin) * (H - T - B);

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n\
         <line x1=\"{L}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{L}\" y1=\"{T}\" x2=\"{L}\" y2=\"{}\" stroke=\"black\"/>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">bin width</text>\n\
         <text x=\"18\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">fidelity</text>\n",
        W / 2.0,
        escape(title),
        H - B,
        W - R,
        H - B,
        H - B,
        (L + W - R) / 2.0,
        H - 12.0,
        (T + H - B) / 2.0,
        (T + H - B) / 2.0,
    );
    for k in 0..=4 {
        let x = xmin + (xmax - xmin) * k as f64 / 4.0;
        let y = ymin + (ymax - ymin) * k as f64 / 4.0;
        svg += &format!("<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{x:.2}</text>\n", px(x), H - B + 16.0);
        svg += &format!("<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{y:.4}</text>\n", L - 6.0, py(y) + 4.0);
    }
    let colors = [(Mode::Raw, "#444444"), (Mode::Center, "#1f77b4"), (Mode::Integral, "#d62728")];
    let mut legend_y = T + 10.0;
    for (mode, color) in colors {
        let series: Vec<&&SweepSummary> = pts.iter().filter(|s| s.mode == mode).collect();
        if series.is_empty() {
            continue;
        }
        if mode == Mode::Raw {
            for s in &series {
                let (y0, y1) = (py(s.mean_fidelity - spread(s)), py(s.mean_fidelity + spread(s)));
                svg += &format!(
                    "<rect x=\"{L}\" y=\"{y1:.1}\" width=\"{}\" height=\"{:.1}\" fill=\"{color}\" fill-opacity=\"0.15\"/>\n\
                     <line x1=\"{L}\" y1=\"{:.1}\" x2=\"{}\" y2=\"{:.1}\" stroke=\"{color}\" stroke-dasharray=\"6 4\"/>\n",
                    W - L - R,
                    (y0 - y1).max(0.0),
                    py(s.mean_fidelity),
                    W - R,
                    py(s.mean_fidelity)
                );
            }
        } else {
            let mut ordered: Vec<_> = series.iter().filter(|s| s.width.is_some()).collect();
            ordered.sort_by(|a, b| a.width.partial_cmp(&b.width).unwrap_or(std::cmp::Ordering::Equal));
            let path: Vec<String> =
                ordered.iter().map(|s| format!("{:.1},{:.1}", px(s.width.unwrap_or(0.0)), py(s.mean_fidelity))).collect();
            svg += &format!("<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\"/>\n", path.join(" "));
            for s in ordered {
                let x = px(s.width.unwrap_or(0.0));
                svg += &format!(
                    "<line x1=\"{x:.1}\" y1=\"{:.1}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"{color}\"/>\n<circle cx=\"{x:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"{color}\"/>\n",
                    py(s.mean_fidelity - spread(s)),
                    py(s.mean_fidelity + spread(s)),
                    py(s.mean_fidelity)
                );
            }
        }
        svg += &format!(
            "<line x1=\"{}\" y1=\"{legend_y}\" x2=\"{}\" y2=\"{legend_y}\" stroke=\"{color}\" stroke-width=\"2\"/>\n<text x=\"{}\" y=\"{}\">{mode}</text>\n",
            W - R - 110.0,
            W - R - 85.0,
            W - R - 78.0,
            legend_y + 4.0
        );
        legend_y += 16.0;
    }
    svg += "</svg>\n";
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
