//! Linewidth extraction from PLE scans.
//!
//! Two estimators are provided. [`summed_linewidth`] adds all lines and fits
//! one doublet, which is only meaningful when the emitter does not wander.
//! [`aligned_linewidth`] fits every line on its own, shifts the lines with a
//! successful fit so their doublets coincide, sums them and fits the sum.
//! Either way the fitted A1–A2 separation in volts, together with the known
//! splitting in MHz, converts widths from volts to MHz, and every width is
//! reported with a flat 7.5 % calibration error.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit_double_report, fit_double_xy, initial_guess_xy, DoubleFit, FitConstraints, SolverOptions};
use crate::model::{PleLine, PleScan, ScanMeta};
use crate::signal::{local_maxima, moving_average, prominence};

/// Relative calibration error attached to every extracted linewidth.
pub const CALIBRATION_ERROR_FRACTION: f64 = 0.075;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFactor {
    pub mhz_per_volt: f64,
    pub derived_from_separation_v: f64,
    pub splitting_mhz: f64,
}

pub fn calibrate(separation_v: f64, splitting_mhz: f64) -> Result<CalibrationFactor> {
    if !(separation_v.is_finite() && separation_v > 0.0) {
        return Err(Error::NonPositiveSeparation(separation_v));
    }
    if !(splitting_mhz.is_finite() && splitting_mhz > 0.0) {
        return Err(Error::invalid("splitting_mhz", "must be positive"));
    }
    Ok(CalibrationFactor {
        mhz_per_volt: splitting_mhz / separation_v,
        derived_from_separation_v: separation_v,
        splitting_mhz,
    })
}

pub fn attach_error(fwhm_mhz: f64) -> f64 {
    CALIBRATION_ERROR_FRACTION * fwhm_mhz
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Summed,
    Aligned,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Summed => "summed",
            Method::Aligned => "aligned",
        }
    }
}

/// Which fitted peak is reported as A1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Labeling {
    #[default]
    LowerVoltageIsA1,
    HigherVoltageIsA1,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LinewidthOptions {
    /// Replaces the scan's own `splitting_mhz` when set.
    pub splitting_mhz: Option<f64>,
    pub labeling: Labeling,
    pub solver: SolverOptions,
}

impl LinewidthOptions {
    fn splitting(&self, meta: &ScanMeta) -> f64 {
        self.splitting_mhz.unwrap_or(meta.splitting_mhz)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinewidthResult {
    pub method: Method,
    pub fwhm_a1_mhz: f64,
    pub error_a1_mhz: f64,
    pub fwhm_a2_mhz: f64,
    pub error_a2_mhz: f64,
    pub n_lines_total: usize,
    pub n_lines_used: usize,
    pub calibration: CalibrationFactor,
    pub labeling: Labeling,
    /// Statistical errors of the final fit, in MHz (A1, A2).
    pub fit_std_error_a1_mhz: f64,
    pub fit_std_error_a2_mhz: f64,
    pub final_model: &'static str,
    pub resampling: &'static str,
    #[serde(skip)]
    pub final_fit: DoubleFit,
}

/// The stable result record written by the command line tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinewidthSummary {
    pub method: String,
    pub fwhm_a1_mhz: f64,
    pub error_a1_mhz: f64,
    pub fwhm_a2_mhz: f64,
    pub error_a2_mhz: f64,
    pub n_lines_total: usize,
    pub n_lines_used: usize,
    pub mhz_per_volt: f64,
}

impl LinewidthResult {
    fn from_fit(
        method: Method,
        fit: DoubleFit,
        calibration: CalibrationFactor,
        n_lines_total: usize,
        n_lines_used: usize,
        labeling: Labeling,
    ) -> Self {
        let k = calibration.mhz_per_volt;
        let (w1, w2) = (fit.params.p1.fwhm * k, fit.params.p2.fwhm * k);
        let (e1, e2) = (fit.std_errors.fwhm1 * k, fit.std_errors.fwhm2 * k);
        let ((a1, ea1), (a2, ea2)) = match labeling {
            Labeling::LowerVoltageIsA1 => ((w1, e1), (w2, e2)),
            Labeling::HigherVoltageIsA1 => ((w2, e2), (w1, e1)),
        };
        LinewidthResult {
            method,
            fwhm_a1_mhz: a1,
            error_a1_mhz: attach_error(a1),
            fwhm_a2_mhz: a2,
            error_a2_mhz: attach_error(a2),
            n_lines_total,
            n_lines_used,
            calibration,
            labeling,
            fit_std_error_a1_mhz: ea1,
            fit_std_error_a2_mhz: ea2,
            final_model: "double_lorentzian",
            resampling: match method {
                Method::Summed => "none",
                Method::Aligned => "linear interpolation, samples shifted off the grid dropped",
            },
            final_fit: fit,
        }
    }

    pub fn summary(&self) -> LinewidthSummary {
        LinewidthSummary {
            method: self.method.as_str().to_string(),
            fwhm_a1_mhz: self.fwhm_a1_mhz,
            error_a1_mhz: self.error_a1_mhz,
            fwhm_a2_mhz: self.fwhm_a2_mhz,
            error_a2_mhz: self.error_a2_mhz,
            n_lines_total: self.n_lines_total,
            n_lines_used: self.n_lines_used,
            mhz_per_volt: self.calibration.mhz_per_volt,
        }
    }
}

/// Fit outcome for one line of a scan.
#[derive(Debug, Clone, PartialEq)]
pub struct LineFit {
    pub index: usize,
    pub fit: Option<DoubleFit>,
    pub error: Option<String>,
}

impl LineFit {
    pub fn is_successful(&self) -> bool {
        self.fit.as_ref().is_some_and(|f| f.is_successful())
    }

    /// The fit, when it passed the success rule.
    pub fn successful_fit(&self) -> Option<&DoubleFit> {
        self.fit.as_ref().filter(|f| f.is_successful())
    }
}

fn fit_line(line: &PleLine, constraints: &FitConstraints, solver: &SolverOptions) -> LineFit {
    let init = initial_guess_xy(line.voltage(), line.counts(), constraints);
    match fit_double_report(line.voltage(), line.counts(), &init, constraints, solver) {
        Ok(fit) => LineFit {
            index: line.index(),
            fit: Some(fit),
            error: None,
        },
        Err(e) => LineFit {
            index: line.index(),
            fit: None,
            error: Some(e.to_string()),
        },
    }
}

/// Doublet fit of every line, in line order. Runs on the current rayon pool.
pub fn fit_lines(scan: &PleScan, constraints: &FitConstraints, solver: &SolverOptions) -> Result<Vec<LineFit>> {
    constraints.validate()?;
    constraints.feasible_separation()?;
    Ok(scan
        .lines()
        .par_iter()
        .map(|l| fit_line(l, constraints, solver))
        .collect())
}

fn final_fit(xs: &[f64], ys: &[f64], constraints: &FitConstraints, solver: &SolverOptions) -> Result<DoubleFit> {
    let init = initial_guess_xy(xs, ys, constraints);
    fit_double_xy(xs, ys, &init, constraints, solver)
}

pub fn summed_linewidth(scan: &PleScan, constraints: &FitConstraints) -> Result<LinewidthResult> {
    summed_linewidth_with(scan, constraints, &LinewidthOptions::default())
}

pub fn summed_linewidth_with(
    scan: &PleScan,
    constraints: &FitConstraints,
    opts: &LinewidthOptions,
) -> Result<LinewidthResult> {
    if let Some(i) = scan.first_grid_mismatch() {
        return Err(Error::GridMismatch(i));
    }
    let xs = scan.lines()[0].voltage();
    let mut sum = vec![0.0; xs.len()];
    for line in scan.lines() {
        sum.iter_mut().zip(line.counts()).for_each(|(s, c)| *s += c);
    }
    let fit = final_fit(xs, &sum, constraints, &opts.solver)?;
    let calibration = calibrate(fit.params.separation(), opts.splitting(scan.meta()))?;
    let n = scan.lines().len();
    Ok(LinewidthResult::from_fit(Method::Summed, fit, calibration, n, n, opts.labeling))
}

/// Constraints inferred from the scan itself: the two most prominent maxima
/// of the smoothed line sum (on the first line's grid) give the expected
/// positions, windows have half-width 0.4 × their separation and widths are
/// bounded by the first line's span.
pub fn auto_constraints(scan: &PleScan) -> Result<FitConstraints> {
    let first = &scan.lines()[0];
    let grid = first.voltage();
    let mut sum = vec![0.0; grid.len()];
    for line in scan.lines() {
        for (s, &g) in sum.iter_mut().zip(grid) {
            *s += interpolate(line.voltage(), line.counts(), g).unwrap_or(0.0);
        }
    }
    let smooth = moving_average(&sum, 5);
    let mut peaks: Vec<(usize, f64)> = local_maxima(&smooth)
        .into_iter()
        .map(|i| (i, prominence(&smooth, i).prominence))
        .collect();
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1));
    let [(i, _), (j, _), ..] = peaks.as_slice() else {
        return Err(Error::DegenerateData(format!(
            "found {} maxima in the summed scan, need two to place the doublet",
            peaks.len()
        )));
    };
    let (a, b) = (grid[*i], grid[*j]);
    let (c1, c2) = (a.min(b), a.max(b));
    Ok(FitConstraints::around(c1, c2, 0.4 * (c2 - c1), first.span()))
}

/// Linear interpolation of `(xs, ys)` at `x`; `None` outside the sampled
/// range. `xs` must be strictly monotone in either direction.
pub fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> Option<f64> {
    let n = xs.len();
    let increasing = xs[n - 1] > xs[0];
    let (lo, hi) = if increasing { (xs[0], xs[n - 1]) } else { (xs[n - 1], xs[0]) };
    if !(x >= lo && x <= hi) {
        return None;
    }
    // first index whose coordinate lies beyond x in scan direction
    let j = if increasing {
        xs.partition_point(|&v| v <= x)
    } else {
        xs.partition_point(|&v| v >= x)
    };
    if j == 0 {
        return Some(ys[0]);
    }
    if j >= n {
        return Some(ys[n - 1]);
    }
    let (x0, x1) = (xs[j - 1], xs[j]);
    let t = (x - x0) / (x1 - x0);
    Some(ys[j - 1] + t * (ys[j] - ys[j - 1]))
}

/// Lines of a scan resampled onto a common grid after rigid shifts.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedLines {
    pub grid: Vec<f64>,
    /// Source line index, start time, shift applied (V) and resampled counts.
    pub lines: Vec<(usize, f64, f64, Vec<f64>)>,
    pub target_center: f64,
    /// Resampled values dropped because the shifted grid point fell outside
    /// some line; counted per line.
    pub n_dropped: usize,
}

impl AlignedLines {
    pub fn sum(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.len()];
        for (_, _, _, counts) in &self.lines {
            out.iter_mut().zip(counts).for_each(|(s, c)| *s += c);
        }
        out
    }

    /// The aligned lines as a scan of their own, on the common grid.
    pub fn to_scan(&self, meta: ScanMeta) -> Result<PleScan> {
        let lines = self
            .lines
            .iter()
            .map(|(i, t0, _, counts)| PleLine::new(*i, *t0, self.grid.clone(), counts.clone()))
            .collect::<Result<Vec<_>>>()?;
        PleScan::new(meta, lines)
    }
}

/// Shift every successfully fitted line so its mean center lands on the
/// average mean center, resampling onto the first line's grid.
pub fn align_lines(scan: &PleScan, fits: &[LineFit]) -> Result<AlignedLines> {
    let used: Vec<(&PleLine, &DoubleFit)> = scan
        .lines()
        .iter()
        .zip(fits)
        .filter_map(|(l, f)| f.successful_fit().map(|fit| (l, fit)))
        .collect();
    if used.len() < 2 {
        return Err(Error::TooFewSuccessfulLines {
            found: used.len(),
            required: 2,
        });
    }
    let target = used.iter().map(|(_, f)| f.params.mean_center()).sum::<f64>() / used.len() as f64;
    let full = scan.lines()[0].voltage();
    let resampled: Vec<(f64, Vec<Option<f64>>)> = used
        .iter()
        .map(|(line, fit)| {
            let shift = target - fit.params.mean_center();
            let counts = full
                .iter()
                .map(|&g| interpolate(line.voltage(), line.counts(), g - shift))
                .collect();
            (shift, counts)
        })
        .collect();
    // keep only grid points every shifted line covers, so the sum has no steps
    let keep: Vec<bool> = (0..full.len())
        .map(|k| resampled.iter().all(|(_, c)| c[k].is_some()))
        .collect();
    let n_dropped = keep.iter().filter(|k| !**k).count() * resampled.len();
    if keep.iter().filter(|k| **k).count() < 2 {
        return Err(Error::DegenerateData("aligned lines share no common voltage range".into()));
    }
    let grid: Vec<f64> = full.iter().zip(&keep).filter(|(_, k)| **k).map(|(g, _)| *g).collect();
    let lines = used
        .iter()
        .zip(resampled)
        .map(|((line, _), (shift, counts))| {
            let counts = counts.into_iter().zip(&keep).filter_map(|(c, k)| c.filter(|_| *k)).collect();
            (line.index(), line.t0_s(), shift, counts)
        })
        .collect();
    Ok(AlignedLines {
        grid,
        lines,
        target_center: target,
        n_dropped,
    })
}

pub fn aligned_linewidth(scan: &PleScan, constraints: &FitConstraints) -> Result<LinewidthResult> {
    aligned_linewidth_with(scan, constraints, &LinewidthOptions::default())
}

pub fn aligned_linewidth_with(
    scan: &PleScan,
    constraints: &FitConstraints,
    opts: &LinewidthOptions,
) -> Result<LinewidthResult> {
    let fits = fit_lines(scan, constraints, &opts.solver)?;
    aligned_from_fits(scan, &fits, constraints, opts)
}

/// Aligned estimator from per-line fits computed elsewhere.
pub fn aligned_from_fits(
    scan: &PleScan,
    fits: &[LineFit],
    constraints: &FitConstraints,
    opts: &LinewidthOptions,
) -> Result<LinewidthResult> {
    let aligned = align_lines(scan, fits)?;
    let fit = final_fit(&aligned.grid, &aligned.sum(), constraints, &opts.solver)?;
    let calibration = calibrate(fit.params.separation(), opts.splitting(scan.meta()))?;
    Ok(LinewidthResult::from_fit(
        Method::Aligned,
        fit,
        calibration,
        scan.lines().len(),
        aligned.lines.len(),
        opts.labeling,
    ))
}
