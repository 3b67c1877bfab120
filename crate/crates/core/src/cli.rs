//! Command-line front end.
//!
//! Every command validates its flags before touching data, writes its output
//! files atomically and reports failures on standard error with a distinct
//! exit status (see [`exit_code`]).

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::afm::{self, RowCorrection};
use crate::error::{Error, Result};
use crate::fit::{FitConstraints, SolverOptions, Weighting};
use crate::io;
use crate::linewidth::{self, Labeling, LinewidthOptions};
use crate::spectra::{self, PeakThresholds, SpectrumClassification, ZplWindows};
use crate::synth::{self, AfmSynthConfig, PlantedPeak, PleSynthConfig, SpectrumSynthConfig};
use crate::wander::{self, PeakChoice, WanderOptions, WanderSample, WanderSummary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_DEGENERATE: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

/// Environment variable bounding the worker pool size.
pub const THREADS_ENV: &str = "PLEKIT_THREADS";

/// Exit status for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } | Error::Parse(_) | Error::Validation { .. } | Error::Config(_) => EXIT_IO,
        Error::NonConvergence { .. } => EXIT_NONCONVERGENCE,
        Error::DegenerateData(_)
        | Error::ConstraintInfeasible
        | Error::InvalidInit(_)
        | Error::GridMismatch(_)
        | Error::TooFewSuccessfulLines { .. }
        | Error::NonPositiveSeparation(_)
        | Error::NonPositiveDt(..)
        | Error::EmptyRegion(_)
        | Error::EmptyGrid
        | Error::RankDeficient { .. } => EXIT_DEGENERATE,
    }
}

#[derive(Debug, Parser)]
#[command(name = "plekit", version, about = "PLE linewidth, wandering, spectra and AFM analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract calibrated A1/A2 linewidths from a PLE scan.
    Linewidth(LinewidthArgs),
    /// Histogram spectral-wandering rates from scans or rate samples.
    Wander(WanderArgs),
    /// Detect and classify emission peaks in a spectrum file or directory.
    Spectra(SpectraArgs),
    /// Level an AFM height map and report its roughness.
    Afm(AfmArgs),
    /// Generate synthetic data with a ground-truth sidecar.
    Synth(SynthArgs),
}

/// `auto` or an explicit positive number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AutoOr {
    Auto,
    Value(f64),
}

impl FromStr for AutoOr {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            return Ok(AutoOr::Auto);
        }
        let v: f64 = s.parse().map_err(|_| format!("expected `auto` or a number, got `{s}`"))?;
        if !(v.is_finite() && v >= 0.0) {
            return Err(format!("must be a non-negative number, got `{s}`"));
        }
        Ok(AutoOr::Value(v))
    }
}

impl fmt::Display for AutoOr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AutoOr::Auto => f.write_str("auto"),
            AutoOr::Value(v) => write!(f, "{v}"),
        }
    }
}

fn positive_f64(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("must be positive, got `{s}`"))
    }
}

fn non_negative_f64(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("must be non-negative, got `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Summed,
    Aligned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightingArg {
    Uniform,
    Poisson,
}

impl From<WeightingArg> for Weighting {
    fn from(w: WeightingArg) -> Self {
        match w {
            WeightingArg::Uniform => Weighting::Uniform,
            WeightingArg::Poisson => Weighting::Poisson,
        }
    }
}

/// Options shared by every command that fits PLE lines.
#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// A1-A2 splitting in MHz; overrides the value stored in the scan.
    #[arg(long, value_parser = positive_f64)]
    pub splitting_mhz: Option<f64>,
    /// JSON file with fit constraints; inferred from the summed scan when absent.
    #[arg(long, value_name = "FILE")]
    pub constraints: Option<PathBuf>,
    /// Label the higher-voltage peak A1 instead of the lower-voltage one.
    #[arg(long)]
    pub flip_labels: bool,
    /// Residual weighting of the least-squares fits.
    #[arg(long, value_enum, default_value_t = WeightingArg::Uniform)]
    pub weighting: WeightingArg,
}

impl FitArgs {
    fn options(&self) -> LinewidthOptions {
        LinewidthOptions {
            splitting_mhz: self.splitting_mhz,
            labeling: if self.flip_labels {
                Labeling::HigherVoltageIsA1
            } else {
                Labeling::LowerVoltageIsA1
            },
            solver: SolverOptions {
                weighting: self.weighting.into(),
                ..SolverOptions::default()
            },
        }
    }

    fn read_constraints(&self) -> Result<Option<FitConstraints>> {
        let Some(path) = &self.constraints else {
            return Ok(None);
        };
        let text = read_text(path)?;
        let c: FitConstraints =
            serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        c.validate()?;
        Ok(Some(c))
    }
}

#[derive(Debug, Clone, Args)]
pub struct LinewidthArgs {
    /// PLE scan JSON file.
    pub scan: PathBuf,
    /// Linewidth estimator.
    #[arg(long, value_enum, default_value_t = MethodArg::Aligned)]
    pub method: MethodArg,
    #[command(flatten)]
    pub fit: FitArgs,
    /// Include the statistical errors of the final fit and provenance fields.
    #[arg(long)]
    pub verbose: bool,
    /// Output JSON file; standard output when absent.
    #[arg(short, long, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PeakArg {
    Mean,
    A1,
    A2,
}

#[derive(Debug, Clone, Args)]
pub struct WanderArgs {
    /// Scan JSON files and/or rate-sample CSV files.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Samples whose sigma exceeds this (MHz/s) are rejected.
    #[arg(long, value_parser = positive_f64, default_value_t = wander::DEFAULT_SIGMA_THRESHOLD_MHZ_PER_S)]
    pub sigma_threshold: f64,
    /// Histogram bin width in MHz/s, or `auto` for the largest per-region mean sigma.
    #[arg(long, default_value_t = AutoOr::Auto)]
    pub bin_width: AutoOr,
    /// Histogram rate magnitudes instead of signed rates.
    #[arg(long)]
    pub magnitude: bool,
    /// Fitted position used as the line's peak position.
    #[arg(long, value_enum, default_value_t = PeakArg::Mean)]
    pub peak: PeakArg,
    #[command(flatten)]
    pub fit: FitArgs,
    /// Directory receiving histogram.csv, summary.json and samples.csv.
    #[arg(short, long, value_name = "DIR", default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SpectraArgs {
    /// Spectrum CSV file, or a directory searched recursively for *.csv.
    pub input: PathBuf,
    /// JSON file with ZPL windows, e.g. {"v1":[861.8,863.2],"v2":[916.5,917.9]}.
    #[arg(long, value_name = "FILE")]
    pub windows: Option<PathBuf>,
    /// Minimum peak prominence, or `auto` for ten robust noise standard deviations.
    #[arg(long, default_value_t = AutoOr::Auto)]
    pub min_prominence: AutoOr,
    /// Minimum raw peak intensity.
    #[arg(long, default_value_t = 0.0)]
    pub min_height: f64,
    /// Minimum distance between peaks in samples.
    #[arg(long, default_value_t = 1)]
    pub min_distance: usize,
    /// Directory receiving classification.json and stats.csv.
    #[arg(short, long, value_name = "DIR", default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RowCorrectionArg {
    None,
    Median,
    MedianDiff,
}

impl From<RowCorrectionArg> for RowCorrection {
    fn from(r: RowCorrectionArg) -> Self {
        match r {
            RowCorrectionArg::None => RowCorrection::None,
            RowCorrectionArg::Median => RowCorrection::Median,
            RowCorrectionArg::MedianDiff => RowCorrection::MedianDiff,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct AfmArgs {
    /// AFM height map (text grid).
    pub map: PathBuf,
    /// Total degree of the subtracted background polynomial.
    #[arg(long, default_value_t = 2)]
    pub degree: usize,
    /// Per-scan-line offset correction applied before levelling.
    #[arg(long, value_enum, default_value_t = RowCorrectionArg::Median)]
    pub row_correction: RowCorrectionArg,
    /// Output JSON file; standard output when absent.
    #[arg(short, long, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[command(subcommand)]
    pub kind: SynthKind,
}

#[derive(Debug, Clone, Subcommand)]
pub enum SynthKind {
    /// Synthetic PLE scan (JSON) with the true centers and widths.
    Ple(SynthPleArgs),
    /// Synthetic emission spectrum (CSV) with its generating config.
    Spectrum(SynthSpectrumArgs),
    /// Synthetic AFM map with the realized roughness.
    Afm(SynthAfmArgs),
}

/// Options shared by every generator.
#[derive(Debug, Clone, Args)]
pub struct SynthCommon {
    /// JSON config file; flags given on the command line override its fields.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// PRNG seed [config default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output data file.
    #[arg(short, long, value_name = "FILE")]
    pub output: PathBuf,
    /// Ground-truth JSON file; `<output>.truth.json` when absent.
    #[arg(long, value_name = "FILE")]
    pub truth: Option<PathBuf>,
}

impl SynthCommon {
    fn truth_path(&self) -> PathBuf {
        self.truth.clone().unwrap_or_else(|| {
            let mut s = self.output.clone().into_os_string();
            s.push(".truth.json");
            PathBuf::from(s)
        })
    }

    fn prepare_output(&self) -> Result<()> {
        match self.output.parent() {
            Some(dir) if !dir.as_os_str().is_empty() => ensure_dir(dir),
            _ => Ok(()),
        }
    }

    fn load<T: serde::de::DeserializeOwned + Default>(&self) -> Result<T> {
        match &self.config {
            None => Ok(T::default()),
            Some(path) => {
                let text = read_text(path)?;
                serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
            }
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SynthPleArgs {
    #[command(flatten)]
    pub common: SynthCommon,
    /// True FWHM in MHz [config default: 60].
    #[arg(long, value_parser = positive_f64)]
    pub fwhm_mhz: Option<f64>,
    /// Number of lines [config default: 50].
    #[arg(long)]
    pub n_lines: Option<usize>,
    /// Random-walk step std of the line center, MHz per line [config default: 0].
    #[arg(long, value_parser = non_negative_f64)]
    pub walk_std: Option<f64>,
    /// Expected peak counts above background [config default: 100].
    #[arg(long, value_parser = positive_f64)]
    pub peak_counts: Option<f64>,
    /// Expected background counts [config default: 5].
    #[arg(long, value_parser = non_negative_f64)]
    pub background: Option<f64>,
    /// Write expected counts instead of Poisson draws.
    #[arg(long)]
    pub noiseless: bool,
    /// Region label stored in the scan [config default: synthetic].
    #[arg(long)]
    pub region: Option<String>,
}

fn parse_planted(s: &str) -> std::result::Result<PlantedPeak, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.is_empty() || parts.len() > 3 {
        return Err(format!("expected CENTER[:HEIGHT[:WIDTH]], got `{s}`"));
    }
    let num = |p: &str| p.parse::<f64>().map_err(|_| format!("`{p}` is not a number"));
    Ok(PlantedPeak {
        center_nm: num(parts[0])?,
        height: parts.get(1).map(|p| num(p)).transpose()?.unwrap_or(1000.0),
        width_nm: parts.get(2).map(|p| num(p)).transpose()?.unwrap_or(0.35),
    })
}

#[derive(Debug, Clone, Args)]
pub struct SynthSpectrumArgs {
    #[command(flatten)]
    pub common: SynthCommon,
    /// Planted peak CENTER_NM[:HEIGHT[:WIDTH_NM]] (height 1000, width 0.35 when omitted); repeatable, replaces the config's peaks.
    #[arg(long = "peak", value_parser = parse_planted)]
    pub peaks: Vec<PlantedPeak>,
    /// Gaussian noise std [config default: 5].
    #[arg(long, value_parser = non_negative_f64)]
    pub noise_std: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthAfmArgs {
    #[command(flatten)]
    pub common: SynthCommon,
    /// Columns [config default: 512].
    #[arg(long)]
    pub nx: Option<usize>,
    /// Rows [config default: 512].
    #[arg(long)]
    pub ny: Option<usize>,
    /// Roughness std in pm [config default: 350].
    #[arg(long, value_parser = non_negative_f64)]
    pub sigma_pm: Option<f64>,
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn emit(text: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(path) => io::write_atomic(path, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn constraints_for(scan: &crate::model::PleScan, given: Option<FitConstraints>) -> Result<FitConstraints> {
    match given {
        Some(c) => Ok(c),
        None => linewidth::auto_constraints(scan),
    }
}

#[derive(Serialize)]
struct VerboseLinewidth<'a> {
    #[serde(flatten)]
    result: &'a linewidth::LinewidthResult,
    constraints: FitConstraints,
}

pub fn cmd_linewidth(args: &LinewidthArgs) -> Result<()> {
    let given = args.fit.read_constraints()?;
    let scan = io::read_scan(&args.scan)?;
    let constraints = constraints_for(&scan, given)?;
    let opts = args.fit.options();
    let result = match args.method {
        MethodArg::Summed => linewidth::summed_linewidth_with(&scan, &constraints, &opts)?,
        MethodArg::Aligned => linewidth::aligned_linewidth_with(&scan, &constraints, &opts)?,
    };
    let text = if args.verbose {
        io::to_json_string(&VerboseLinewidth {
            result: &result,
            constraints,
        })
    } else {
        io::to_json_string(&result.summary())
    };
    emit(&text, args.output.as_deref())
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Rate samples of one scan file: per-line fits, calibration from the
/// aligned final fit, then consecutive-line rates.
fn scan_samples(path: &Path, args: &WanderArgs, given: Option<FitConstraints>) -> Result<Vec<WanderSample>> {
    let scan = io::read_scan(path)?;
    let constraints = constraints_for(&scan, given)?;
    let opts = args.fit.options();
    let fits = linewidth::fit_lines(&scan, &constraints, &opts.solver)?;
    let result = linewidth::aligned_from_fits(&scan, &fits, &constraints, &opts)?;
    let wopts = WanderOptions {
        peak: match args.peak {
            PeakArg::Mean => PeakChoice::Mean,
            PeakArg::A1 => PeakChoice::A1,
            PeakArg::A2 => PeakChoice::A2,
        },
        labeling: opts.labeling,
    };
    wander::wander_rates_with(&scan, &fits, &result.calibration, &wopts)
}

pub fn cmd_wander(args: &WanderArgs) -> Result<()> {
    let given = args.fit.read_constraints()?;
    let per_input: Vec<Result<Vec<WanderSample>>> = args
        .inputs
        .par_iter()
        .map(|path| {
            if is_csv(path) {
                wander::parse_samples_csv(&read_text(path)?)
                    .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
            } else {
                scan_samples(path, args, given)
            }
        })
        .collect();
    let mut samples = Vec::new();
    for s in per_input {
        samples.extend(s?);
    }

    let (kept, n_rejected) = wander::reject_outliers(&samples, args.sigma_threshold);
    if kept.is_empty() {
        return Err(Error::DegenerateData(format!(
            "no rate samples left after rejecting {n_rejected} above {} MHz/s",
            args.sigma_threshold
        )));
    }
    let regions = wander::group_by_region(&kept);
    let region_mean_sigmas = wander::region_mean_sigmas(&regions)?;
    let (width, rule) = match args.bin_width {
        AutoOr::Auto => (wander::bin_width(&regions)?, "max_region_mean_sigma"),
        AutoOr::Value(v) => (v, "fixed"),
    };
    if !(width > 0.0) {
        return Err(Error::DegenerateData(format!("bin width {width} is not positive")));
    }
    let mut hist = if args.magnitude {
        wander::histogram_magnitude(&kept, width)
    } else {
        wander::histogram(&kept, width)
    };
    hist.n_rejected = n_rejected;
    let summary = WanderSummary {
        bin_width: width,
        bin_width_rule: rule.into(),
        n_kept: kept.len(),
        n_rejected,
        sigma_threshold_mhz_per_s: args.sigma_threshold,
        region_mean_sigmas,
        signed: !args.magnitude,
    };

    ensure_dir(&args.out_dir)?;
    io::write_atomic(&args.out_dir.join("samples.csv"), wander::samples_to_csv(&samples).as_bytes())?;
    io::write_atomic(&args.out_dir.join("histogram.csv"), hist.to_csv().as_bytes())?;
    io::write_json(&summary, &args.out_dir.join("summary.json"))
}

#[derive(Debug, Serialize)]
struct ClassifiedFile {
    file: String,
    region: String,
    #[serde(flatten)]
    classification: SpectrumClassification,
}

fn collect_csv(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_csv(&path, out)?;
        } else if is_csv(&path) {
            out.push(path);
        }
    }
    Ok(())
}

fn dir_name(path: &Path) -> String {
    path.canonicalize()
        .ok()
        .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_else(|| ".".into())
}

/// `(relative file name, region)` pairs: the region of a file is the first
/// directory below the input, or the input directory's own name for files
/// directly inside it.
fn spectrum_inputs(input: &Path) -> Result<Vec<(PathBuf, String, String)>> {
    if !input.is_dir() {
        let region = input.parent().map(dir_name).unwrap_or_else(|| ".".into());
        let name = input
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        return Ok(vec![(input.to_path_buf(), name, region)]);
    }
    let mut files = Vec::new();
    collect_csv(input, &mut files)?;
    let own = dir_name(input);
    let mut out: Vec<(PathBuf, String, String)> = files
        .into_iter()
        .map(|path| {
            let rel = path.strip_prefix(input).unwrap_or(&path).to_path_buf();
            let parts: Vec<String> = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect();
            let region = if parts.len() > 1 { parts[0].clone() } else { own.clone() };
            (path, parts.join("/"), region)
        })
        .collect();
    out.sort_by(|a, b| a.1.cmp(&b.1));
    Ok(out)
}

pub fn cmd_spectra(args: &SpectraArgs) -> Result<()> {
    let windows = match &args.windows {
        Some(path) => {
            let w: ZplWindows = serde_json::from_str(&read_text(path)?)
                .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
            w.validate()?;
            w
        }
        None => ZplWindows::default(),
    };
    let inputs = spectrum_inputs(&args.input)?;
    let results: Vec<Result<ClassifiedFile>> = inputs
        .par_iter()
        .map(|(path, name, region)| {
            let spectrum = io::read_spectrum(path)?;
            let mut thresholds = PeakThresholds::default_for(&spectrum);
            if let AutoOr::Value(v) = args.min_prominence {
                thresholds.min_prominence = v;
            }
            thresholds.min_height = args.min_height;
            thresholds.min_distance_samples = args.min_distance.max(1);
            let peaks = spectra::find_peaks(&spectrum, &thresholds);
            Ok(ClassifiedFile {
                file: name.clone(),
                region: region.clone(),
                classification: spectra::classify(&peaks, &windows),
            })
        })
        .collect();
    let classified = results.into_iter().collect::<Result<Vec<_>>>()?;
    let stats = spectra::batch_stats(
        classified
            .iter()
            .map(|c| (c.region.as_str(), c.classification.label)),
    );

    ensure_dir(&args.out_dir)?;
    io::write_json(&classified, &args.out_dir.join("classification.json"))?;
    io::write_atomic(&args.out_dir.join("stats.csv"), stats.to_csv().as_bytes())
}

pub fn cmd_afm(args: &AfmArgs) -> Result<()> {
    let map = io::read_afm(&args.map)?;
    let result = afm::analyze(&map, args.row_correction.into(), args.degree)?;
    emit(&io::to_json_string(&result), args.output.as_deref())
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let common = match &args.kind {
        SynthKind::Ple(a) => &a.common,
        SynthKind::Spectrum(a) => &a.common,
        SynthKind::Afm(a) => &a.common,
    };
    common.prepare_output()?;
    match &args.kind {
        SynthKind::Ple(a) => {
            let mut cfg: PleSynthConfig = a.common.load()?;
            if let Some(v) = a.common.seed {
                cfg.seed = v;
            }
            if let Some(v) = a.fwhm_mhz {
                cfg.fwhm_mhz = v;
            }
            if let Some(v) = a.n_lines {
                cfg.n_lines = v;
            }
            if let Some(v) = a.walk_std {
                cfg.walk_std_mhz_per_line = v;
            }
            if let Some(v) = a.peak_counts {
                cfg.peak_counts = v;
            }
            if let Some(v) = a.background {
                cfg.background_counts = v;
            }
            if let Some(v) = &a.region {
                cfg.region_id = v.clone();
            }
            cfg.noiseless |= a.noiseless;
            let (scan, truth) = synth::synth_ple(&cfg)?;
            io::write_scan(&scan, &a.common.output)?;
            io::write_json(&truth, &a.common.truth_path())
        }
        SynthKind::Spectrum(a) => {
            let mut cfg: SpectrumSynthConfig = a.common.load()?;
            if let Some(v) = a.common.seed {
                cfg.seed = v;
            }
            if !a.peaks.is_empty() {
                cfg.peaks = a.peaks.clone();
            }
            if let Some(v) = a.noise_std {
                cfg.noise_std = v;
            }
            let spectrum = synth::synth_spectrum(&cfg)?;
            io::write_spectrum(&spectrum, &a.common.output)?;
            io::write_json(&cfg, &a.common.truth_path())
        }
        SynthKind::Afm(a) => {
            let mut cfg: AfmSynthConfig = a.common.load()?;
            if let Some(v) = a.common.seed {
                cfg.seed = v;
            }
            if let Some(v) = a.nx {
                cfg.nx = v;
            }
            if let Some(v) = a.ny {
                cfg.ny = v;
            }
            if let Some(v) = a.sigma_pm {
                cfg.sigma_pm = v;
            }
            let (map, truth) = synth::synth_afm(&cfg)?;
            io::write_afm(&map, &a.common.output)?;
            io::write_json(&truth, &a.common.truth_path())
        }
    }
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Linewidth(a) => cmd_linewidth(a),
        Command::Wander(a) => cmd_wander(a),
        Command::Spectra(a) => cmd_spectra(a),
        Command::Afm(a) => cmd_afm(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn thread_count() -> std::result::Result<usize, String> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(0),
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .map_err(|_| format!("{THREADS_ENV} must be a non-negative integer, got `{s}`")),
    }
}

/// Parse `args` (including the program name), run the command and return
/// the process exit status. Diagnostics go to standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let threads = match thread_count() {
        Ok(n) => n,
        Err(msg) => {
            eprintln!("error: {msg}");
            return EXIT_USAGE;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_IO;
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
