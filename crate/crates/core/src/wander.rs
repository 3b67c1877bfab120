//! Spectral-wandering rates between consecutive PLE lines.
//!
//! A rate is the shift of the fitted peak position between two consecutive
//! successfully fitted lines, converted to MHz and divided by the time between
//! the line starts. Its uncertainty propagates both center standard errors in
//! quadrature. Samples whose uncertainty exceeds a threshold (200 MHz/s by
//! default) are discarded, and the histogram bin width defaults to the largest
//! per-region mean uncertainty.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linewidth::{CalibrationFactor, Labeling, LineFit};
use crate::model::PleScan;

pub const DEFAULT_SIGMA_THRESHOLD_MHZ_PER_S: f64 = 200.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WanderSample {
    pub rate_mhz_per_s: f64,
    pub sigma_mhz_per_s: f64,
    pub region_id: String,
    /// Indices of the two consecutive lines.
    pub pair: (usize, usize),
}

/// Which fitted position defines the peak position of a line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PeakChoice {
    #[default]
    Mean,
    A1,
    A2,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WanderOptions {
    pub peak: PeakChoice,
    pub labeling: Labeling,
}

fn position(fit: &crate::fit::DoubleFit, opts: &WanderOptions) -> (f64, f64) {
    let (p, e) = (&fit.params, &fit.std_errors);
    let lower = (p.p1.center, e.center1);
    let upper = (p.p2.center, e.center2);
    let (a1, a2) = match opts.labeling {
        Labeling::LowerVoltageIsA1 => (lower, upper),
        Labeling::HigherVoltageIsA1 => (upper, lower),
    };
    match opts.peak {
        PeakChoice::Mean => (p.mean_center(), e.mean_center),
        PeakChoice::A1 => a1,
        PeakChoice::A2 => a2,
    }
}

pub fn wander_rates(scan: &PleScan, fits: &[LineFit], calib: &CalibrationFactor) -> Result<Vec<WanderSample>> {
    wander_rates_with(scan, fits, calib, &WanderOptions::default())
}

pub fn wander_rates_with(
    scan: &PleScan,
    fits: &[LineFit],
    calib: &CalibrationFactor,
    opts: &WanderOptions,
) -> Result<Vec<WanderSample>> {
    if fits.len() != scan.lines().len() {
        return Err(Error::invalid(
            "fits",
            format!("{} fits for {} lines", fits.len(), scan.lines().len()),
        ));
    }
    let k = calib.mhz_per_volt;
    let lines = scan.lines();
    let mut out = Vec::new();
    for i in 0..lines.len().saturating_sub(1) {
        let (a, b) = (&lines[i], &lines[i + 1]);
        let dt = b.t0_s() - a.t0_s();
        if !(dt > 0.0) {
            return Err(Error::NonPositiveDt(a.index(), b.index()));
        }
        let (Some(fa), Some(fb)) = (fits[i].successful_fit(), fits[i + 1].successful_fit()) else {
            continue;
        };
        let (ca, sa) = position(fa, opts);
        let (cb, sb) = position(fb, opts);
        out.push(WanderSample {
            rate_mhz_per_s: (cb - ca) * k / dt,
            sigma_mhz_per_s: (sa * sa + sb * sb).sqrt() * k / dt,
            region_id: scan.meta().region_id.clone(),
            pair: (a.index(), b.index()),
        });
    }
    Ok(out)
}

/// Drop samples whose sigma exceeds `threshold` (which must be positive);
/// returns the kept samples in input order and the number dropped.
pub fn reject_outliers(samples: &[WanderSample], threshold: f64) -> (Vec<WanderSample>, usize) {
    debug_assert!(threshold > 0.0);
    let kept: Vec<WanderSample> = samples
        .iter()
        .filter(|s| s.sigma_mhz_per_s <= threshold)
        .cloned()
        .collect();
    let rejected = samples.len() - kept.len();
    (kept, rejected)
}

pub fn group_by_region(samples: &[WanderSample]) -> BTreeMap<String, Vec<WanderSample>> {
    let mut out: BTreeMap<String, Vec<WanderSample>> = BTreeMap::new();
    for s in samples {
        out.entry(s.region_id.clone()).or_default().push(s.clone());
    }
    out
}

pub fn region_mean_sigmas(regions: &BTreeMap<String, Vec<WanderSample>>) -> Result<BTreeMap<String, f64>> {
    regions
        .iter()
        .map(|(name, samples)| {
            if samples.is_empty() {
                return Err(Error::EmptyRegion(name.clone()));
            }
            let mean = samples.iter().map(|s| s.sigma_mhz_per_s).sum::<f64>() / samples.len() as f64;
            Ok((name.clone(), mean))
        })
        .collect()
}

/// Largest per-region mean sigma.
pub fn bin_width(regions: &BTreeMap<String, Vec<WanderSample>>) -> Result<f64> {
    let means = region_mean_sigmas(regions)?;
    means
        .values()
        .copied()
        .reduce(f64::max)
        .ok_or_else(|| Error::EmptyRegion("<none>".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateHistogram {
    pub bin_width_mhz_per_s: f64,
    /// Bin edges; bin `i` is `[edges[i], edges[i + 1])`.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub n_kept: usize,
    pub n_rejected: usize,
}

impl RateHistogram {
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect()
    }

    pub fn mean(&self) -> f64 {
        let n: usize = self.counts.iter().sum();
        self.centers()
            .iter()
            .zip(&self.counts)
            .map(|(c, &k)| c * k as f64)
            .sum::<f64>()
            / n as f64
    }

    /// Standard deviation estimated from bin centers.
    pub fn std_dev(&self) -> f64 {
        let n: usize = self.counts.iter().sum();
        let m = self.mean();
        let ss: f64 = self
            .centers()
            .iter()
            .zip(&self.counts)
            .map(|(c, &k)| (c - m).powi(2) * k as f64)
            .sum();
        (ss / (n as f64 - 1.0)).sqrt()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_center_mhz_per_s,count\n");
        for (c, k) in self.centers().iter().zip(&self.counts) {
            writeln!(out, "{c},{k}").unwrap();
        }
        out
    }
}

fn bin_of(v: f64, width: f64) -> i64 {
    (v / width + 0.5).floor() as i64
}

/// Histogram of raw values with one bin centered on zero.
pub fn histogram_values(values: &[f64], width: f64) -> RateHistogram {
    assert!(width > 0.0 && width.is_finite(), "bin width must be positive");
    let mut hist = RateHistogram {
        bin_width_mhz_per_s: width,
        edges: Vec::new(),
        counts: Vec::new(),
        n_kept: values.len(),
        n_rejected: 0,
    };
    if values.is_empty() {
        return hist;
    }
    let kmin = values.iter().map(|&v| bin_of(v, width)).min().unwrap();
    let kmax = values.iter().map(|&v| bin_of(v, width)).max().unwrap();
    let nbins = (kmax - kmin + 1) as usize;
    hist.edges = (0..=nbins)
        .map(|i| ((kmin + i as i64) as f64 - 0.5) * width)
        .collect();
    hist.counts = vec![0; nbins];
    for &v in values {
        hist.counts[(bin_of(v, width) - kmin) as usize] += 1;
    }
    hist
}

pub fn histogram(samples: &[WanderSample], width: f64) -> RateHistogram {
    let values: Vec<f64> = samples.iter().map(|s| s.rate_mhz_per_s).collect();
    histogram_values(&values, width)
}

pub fn histogram_magnitude(samples: &[WanderSample], width: f64) -> RateHistogram {
    let values: Vec<f64> = samples.iter().map(|s| s.rate_mhz_per_s.abs()).collect();
    histogram_values(&values, width)
}

/// Summary record of a histogram run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WanderSummary {
    pub bin_width: f64,
    pub bin_width_rule: String,
    pub n_kept: usize,
    pub n_rejected: usize,
    pub sigma_threshold_mhz_per_s: f64,
    pub region_mean_sigmas: BTreeMap<String, f64>,
    pub signed: bool,
}

pub const SAMPLES_CSV_HEADER: &str = "region,line_i,line_j,rate_mhz_per_s,sigma_mhz_per_s";

pub fn samples_to_csv(samples: &[WanderSample]) -> String {
    let mut out = format!("{SAMPLES_CSV_HEADER}\n");
    for s in samples {
        writeln!(
            out,
            "{},{},{},{},{}",
            s.region_id, s.pair.0, s.pair.1, s.rate_mhz_per_s, s.sigma_mhz_per_s
        )
        .unwrap();
    }
    out
}

pub fn parse_samples_csv(text: &str) -> Result<Vec<WanderSample>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse(format!("samples CSV header: {e}")))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if headers != SAMPLES_CSV_HEADER {
        return Err(Error::Parse(format!(
            "samples CSV header must be `{SAMPLES_CSV_HEADER}`, got `{headers}`"
        )));
    }
    let mut out = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(format!("samples CSV row {}: {e}", row + 2)))?;
        let bad = |what: &str| Error::Parse(format!("samples CSV row {}: bad {what}", row + 2));
        let sample = WanderSample {
            region_id: rec[0].to_string(),
            pair: (
                rec[1].parse().map_err(|_| bad("line_i"))?,
                rec[2].parse().map_err(|_| bad("line_j"))?,
            ),
            rate_mhz_per_s: rec[3].parse().map_err(|_| bad("rate"))?,
            sigma_mhz_per_s: rec[4].parse().map_err(|_| bad("sigma"))?,
        };
        if !sample.rate_mhz_per_s.is_finite() || !(sample.sigma_mhz_per_s >= 0.0) {
            return Err(Error::invalid("sigma_mhz_per_s", format!("row {}: must be finite and >= 0", row + 2)));
        }
        out.push(sample);
    }
    Ok(out)
}
