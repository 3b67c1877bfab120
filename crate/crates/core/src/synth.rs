//! Seeded ground-truth generators.
//!
//! Every generator draws from a ChaCha8 stream (`rand_chacha::ChaCha8Rng`,
//! seeded through `SeedableRng::seed_from_u64`), whose output is fixed by
//! its published algorithm. Normal deviates come from `rand_distr`'s
//! `StandardNormal`. Poisson counts use CDF inversion below a mean of 30 and
//! a rounded normal approximation (clamped at zero) from 30 upwards.
//!
//! Spectral wandering is modelled as a Gaussian random walk of the doublet's
//! mean frequency, one step per line.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::afm::{eval_poly, norm_coord, poly_terms};
use crate::error::{Error, Result};
use crate::fit::FitConstraints;
use crate::lorentz::{DoubleLorentzParams, LineShape};
use crate::model::{AfmMap, PleLine, PleScan, ScanMeta, Spectrum, DEFAULT_RESOLUTION_NM, DEFAULT_SPLITTING_MHZ};

const POISSON_INVERSION_LIMIT: f64 = 30.0;

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn standard_normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn poisson(rng: &mut impl Rng, mean: f64) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    if mean < POISSON_INVERSION_LIMIT {
        let u: f64 = rng.random();
        let mut k = 0u32;
        let mut p = (-mean).exp();
        let mut cdf = p;
        while u > cdf {
            k += 1;
            p *= mean / k as f64;
            cdf += p;
            if p < 1e-300 && cdf >= 1.0 - 1e-15 {
                break;
            }
        }
        k as f64
    } else {
        (mean + mean.sqrt() * standard_normal(rng)).round().max(0.0)
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive, got {v}")))
    }
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be non-negative, got {v}")))
    }
}

// ---------------------------------------------------------------------------
// PLE scans

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PleSynthConfig {
    pub fwhm_mhz: f64,
    pub splitting_mhz: f64,
    pub mhz_per_volt: f64,
    pub n_lines: usize,
    pub samples_per_line: usize,
    pub scan_span_v: f64,
    /// Expected counts at each peak maximum, above background.
    pub peak_counts: f64,
    pub background_counts: f64,
    pub walk_std_mhz_per_line: f64,
    pub line_period_s: f64,
    pub seed: u64,
    /// Emit the expected counts instead of Poisson draws.
    pub noiseless: bool,
    pub region_id: String,
}

impl Default for PleSynthConfig {
    fn default() -> Self {
        PleSynthConfig {
            fwhm_mhz: 60.0,
            splitting_mhz: DEFAULT_SPLITTING_MHZ,
            mhz_per_volt: 800.0,
            n_lines: 50,
            samples_per_line: 300,
            scan_span_v: 3.0,
            peak_counts: 100.0,
            background_counts: 5.0,
            walk_std_mhz_per_line: 0.0,
            line_period_s: 5.0,
            seed: 0,
            noiseless: false,
            region_id: "synthetic".into(),
        }
    }
}

impl PleSynthConfig {
    pub fn validate(&self) -> Result<()> {
        positive("fwhm_mhz", self.fwhm_mhz)?;
        positive("splitting_mhz", self.splitting_mhz)?;
        positive("mhz_per_volt", self.mhz_per_volt)?;
        positive("scan_span_v", self.scan_span_v)?;
        positive("peak_counts", self.peak_counts)?;
        positive("line_period_s", self.line_period_s)?;
        non_negative("background_counts", self.background_counts)?;
        non_negative("walk_std_mhz_per_line", self.walk_std_mhz_per_line)?;
        if self.n_lines == 0 {
            return Err(Error::Config("n_lines must be positive".into()));
        }
        if self.samples_per_line < crate::model::MIN_LINE_SAMPLES {
            return Err(Error::Config(format!(
                "samples_per_line must be at least {}",
                crate::model::MIN_LINE_SAMPLES
            )));
        }
        Ok(())
    }

    pub fn separation_v(&self) -> f64 {
        self.splitting_mhz / self.mhz_per_volt
    }

    /// Constraints an analyst would set for these scans: windows of
    /// half-width 0.4 × separation around the nominal peak positions and
    /// widths bounded by the scan span.
    pub fn nominal_constraints(&self) -> FitConstraints {
        let s = self.separation_v();
        FitConstraints::around(-0.5 * s, 0.5 * s, 0.4 * s, self.scan_span_v)
    }

    pub fn voltage_grid(&self) -> Vec<f64> {
        let n = self.samples_per_line;
        (0..n)
            .map(|i| self.scan_span_v * (i as f64 / (n - 1) as f64 - 0.5))
            .collect()
    }
}

/// Everything needed to score an analysis of a synthetic scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PleGroundTruth {
    /// Random-walk offset of the doublet's mean frequency, per line.
    pub centers_mhz: Vec<f64>,
    pub true_fwhm_mhz: f64,
    pub splitting_mhz: f64,
    pub mhz_per_volt: f64,
    pub true_fwhm_v: f64,
    /// `(W[i+1] - W[i]) / line_period`, per consecutive pair.
    pub true_rates_mhz_per_s: Vec<f64>,
    pub line_period_s: f64,
    pub seed: u64,
}

impl PleGroundTruth {
    /// True doublet of line `i` in volts, with the given peak height and background.
    pub fn line_params(&self, i: usize, peak_counts: f64, background: f64) -> DoubleLorentzParams {
        let m = self.centers_mhz[i] / self.mhz_per_volt;
        let s = self.splitting_mhz / self.mhz_per_volt;
        DoubleLorentzParams::new(
            peak_counts,
            m - 0.5 * s,
            self.true_fwhm_v,
            peak_counts,
            m + 0.5 * s,
            self.true_fwhm_v,
            background,
        )
    }
}

pub fn synth_ple(config: &PleSynthConfig) -> Result<(PleScan, PleGroundTruth)> {
    config.validate()?;
    let mut rng = rng_from_seed(config.seed);
    let grid = config.voltage_grid();

    let mut walk = Vec::with_capacity(config.n_lines);
    let mut w = 0.0;
    for i in 0..config.n_lines {
        if i > 0 {
            w += config.walk_std_mhz_per_line * standard_normal(&mut rng);
        }
        walk.push(w);
    }

    let truth = PleGroundTruth {
        true_rates_mhz_per_s: walk.windows(2).map(|p| (p[1] - p[0]) / config.line_period_s).collect(),
        centers_mhz: walk,
        true_fwhm_mhz: config.fwhm_mhz,
        splitting_mhz: config.splitting_mhz,
        mhz_per_volt: config.mhz_per_volt,
        true_fwhm_v: config.fwhm_mhz / config.mhz_per_volt,
        line_period_s: config.line_period_s,
        seed: config.seed,
    };

    let mut lines = Vec::with_capacity(config.n_lines);
    for i in 0..config.n_lines {
        let p = truth.line_params(i, config.peak_counts, config.background_counts);
        let counts = grid
            .iter()
            .map(|&v| {
                let mean = p.eval(v);
                if config.noiseless {
                    mean
                } else {
                    poisson(&mut rng, mean)
                }
            })
            .collect();
        lines.push(PleLine::new(i, i as f64 * config.line_period_s, grid.clone(), counts)?);
    }
    let mut meta = ScanMeta::new(config.region_id.clone());
    meta.splitting_mhz = config.splitting_mhz;
    meta.notes = Some(format!("synthetic, seed {}", config.seed));
    Ok((PleScan::new(meta, lines)?, truth))
}

// ---------------------------------------------------------------------------
// spectra

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedPeak {
    pub center_nm: f64,
    pub height: f64,
    pub width_nm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectrumSynthConfig {
    pub peaks: Vec<PlantedPeak>,
    pub background: f64,
    pub noise_std: f64,
    pub start_nm: f64,
    pub stop_nm: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for SpectrumSynthConfig {
    fn default() -> Self {
        SpectrumSynthConfig {
            peaks: Vec::new(),
            background: 100.0,
            noise_std: 5.0,
            start_nm: 850.0,
            stop_nm: 950.0,
            // ~0.1 nm sampling
            n_samples: 1001,
            seed: 0,
        }
    }
}

pub fn synth_spectrum(config: &SpectrumSynthConfig) -> Result<Spectrum> {
    if config.n_samples < 2 || !(config.stop_nm > config.start_nm) || !config.start_nm.is_finite() {
        return Err(Error::Config(format!(
            "wavelength grid [{}, {}] with {} samples is not valid",
            config.start_nm, config.stop_nm, config.n_samples
        )));
    }
    non_negative("noise_std", config.noise_std)?;
    if !config.background.is_finite() {
        return Err(Error::Config("background must be finite".into()));
    }
    for p in &config.peaks {
        positive("peak width_nm", p.width_nm)?;
        if !(p.center_nm.is_finite() && p.height.is_finite()) {
            return Err(Error::Config(format!("invalid planted peak {p:?}")));
        }
    }
    let mut rng = rng_from_seed(config.seed);
    let n = config.n_samples;
    let step = (config.stop_nm - config.start_nm) / (n - 1) as f64;
    let wavelength: Vec<f64> = (0..n).map(|i| config.start_nm + step * i as f64).collect();
    let intensity = wavelength
        .iter()
        .map(|&w| {
            let signal: f64 = config
                .peaks
                .iter()
                .map(|p| {
                    let h = 0.5 * p.width_nm;
                    let d = w - p.center_nm;
                    p.height * h * h / (d * d + h * h)
                })
                .sum();
            let noise = if config.noise_std > 0.0 {
                config.noise_std * standard_normal(&mut rng)
            } else {
                0.0
            };
            config.background + signal + noise
        })
        .collect();
    Spectrum::new(wavelength, intensity, DEFAULT_RESOLUTION_NM)
}

// ---------------------------------------------------------------------------
// AFM maps

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AfmSynthConfig {
    pub nx: usize,
    pub ny: usize,
    pub dx_um: f64,
    pub dy_um: f64,
    /// White roughness standard deviation.
    pub sigma_pm: f64,
    /// Background polynomial in nm over normalized [-1, 1] coordinates, in
    /// `afm::poly_terms` order; the length fixes the degree.
    pub poly_coeffs_nm: Vec<f64>,
    pub row_offsets_std_pm: f64,
    pub seed: u64,
}

impl Default for AfmSynthConfig {
    fn default() -> Self {
        AfmSynthConfig {
            nx: 512,
            ny: 512,
            dx_um: 5.0 / 512.0,
            dy_um: 5.0 / 512.0,
            sigma_pm: 350.0,
            poly_coeffs_nm: vec![2.0, 1.5, -0.8, 3.0, 0.6, -1.2],
            row_offsets_std_pm: 500.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AfmGroundTruth {
    pub sigma_pm: f64,
    /// RMS of the roughness actually drawn.
    pub realized_rq_pm: f64,
    pub realized_ra_pm: f64,
    pub poly_coeffs_nm: Vec<f64>,
    pub row_offsets_pm: Vec<f64>,
    pub seed: u64,
}

fn degree_for(n_coeffs: usize) -> Option<usize> {
    (0..64).find(|&d| crate::afm::n_poly_terms(d) == n_coeffs)
}

pub fn synth_afm(config: &AfmSynthConfig) -> Result<(AfmMap, AfmGroundTruth)> {
    if config.nx < AfmMap::MIN_DIM || config.ny < AfmMap::MIN_DIM {
        return Err(Error::Config(format!("grid {}x{} smaller than 4x4", config.nx, config.ny)));
    }
    positive("dx_um", config.dx_um)?;
    positive("dy_um", config.dy_um)?;
    non_negative("sigma_pm", config.sigma_pm)?;
    non_negative("row_offsets_std_pm", config.row_offsets_std_pm)?;
    let terms = match config.poly_coeffs_nm.len() {
        0 => Vec::new(),
        n => poly_terms(degree_for(n).ok_or_else(|| {
            Error::Config(format!("{n} polynomial coefficients do not form a complete degree"))
        })?),
    };

    let mut rng = rng_from_seed(config.seed);
    let row_offsets: Vec<f64> = (0..config.ny)
        .map(|_| config.row_offsets_std_pm * standard_normal(&mut rng))
        .collect();
    let mut heights = Vec::with_capacity(config.nx * config.ny);
    let (mut sq, mut abs) = (0.0, 0.0);
    for (r, offset) in row_offsets.iter().enumerate() {
        let y = norm_coord(r, config.ny);
        for c in 0..config.nx {
            let x = norm_coord(c, config.nx);
            let rough_pm = config.sigma_pm * standard_normal(&mut rng);
            sq += rough_pm * rough_pm;
            abs += rough_pm.abs();
            heights.push(eval_poly(&config.poly_coeffs_nm, &terms, x, y) + (offset + rough_pm) / 1000.0);
        }
    }
    let n = (config.nx * config.ny) as f64;
    let map = AfmMap::new(config.nx, config.ny, config.dx_um, config.dy_um, heights)?;
    Ok((
        map,
        AfmGroundTruth {
            sigma_pm: config.sigma_pm,
            realized_rq_pm: (sq / n).sqrt(),
            realized_ra_pm: abs / n,
            poly_coeffs_nm: config.poly_coeffs_nm.clone(),
            row_offsets_pm: row_offsets,
            seed: config.seed,
        },
    ))
}
