//! Domain types shared by every analysis path.
//!
//! All types validate their invariants on construction and are immutable
//! afterwards. Deserialization goes through the same constructors, so a
//! value that exists is always valid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of samples in one PLE line.
pub const MIN_LINE_SAMPLES: usize = 8;

/// Default A1-A2 excited-state splitting of the V2 centre, in MHz.
pub const DEFAULT_SPLITTING_MHZ: f64 = 1000.0;

/// Default spectrometer resolution in nm.
pub const DEFAULT_RESOLUTION_NM: f64 = 0.35;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Increasing,
    Decreasing,
}

fn monotone_direction(values: &[f64], field: &'static str) -> Result<Direction> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(field, "contains non-finite values"));
    }
    let increasing = values.windows(2).all(|w| w[1] > w[0]);
    let decreasing = values.windows(2).all(|w| w[1] < w[0]);
    match (increasing, decreasing) {
        (true, _) => Ok(Direction::Increasing),
        (_, true) => Ok(Direction::Decreasing),
        _ => Err(Error::invalid(field, "not strictly monotone")),
    }
}

/// One PLE line: photon counts recorded against the laser scan voltage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLine", into = "RawLine")]
pub struct PleLine {
    index: usize,
    t0_s: f64,
    voltage_v: Vec<f64>,
    counts: Vec<f64>,
    direction: Direction,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct RawLine {
    pub(crate) index: usize,
    pub(crate) t0_s: f64,
    pub(crate) voltage_v: Vec<f64>,
    pub(crate) counts: Vec<f64>,
}

impl TryFrom<RawLine> for PleLine {
    type Error = Error;
    fn try_from(raw: RawLine) -> Result<Self> {
        PleLine::new(raw.index, raw.t0_s, raw.voltage_v, raw.counts)
    }
}

impl From<PleLine> for RawLine {
    fn from(line: PleLine) -> Self {
        RawLine {
            index: line.index,
            t0_s: line.t0_s,
            voltage_v: line.voltage_v,
            counts: line.counts,
        }
    }
}

impl PleLine {
    pub fn new(index: usize, t0_s: f64, voltage_v: Vec<f64>, counts: Vec<f64>) -> Result<Self> {
        if !t0_s.is_finite() {
            return Err(Error::invalid("t0_s", "not finite"));
        }
        if voltage_v.len() < MIN_LINE_SAMPLES {
            return Err(Error::invalid(
                "voltage",
                format!("{} samples, at least {MIN_LINE_SAMPLES} required", voltage_v.len()),
            ));
        }
        if counts.len() != voltage_v.len() {
            return Err(Error::invalid(
                "counts",
                format!("length {} differs from voltage length {}", counts.len(), voltage_v.len()),
            ));
        }
        let direction = monotone_direction(&voltage_v, "voltage")?;
        if counts.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::invalid("counts", "must be finite and non-negative"));
        }
        Ok(PleLine {
            index,
            t0_s,
            voltage_v,
            counts,
            direction,
        })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn t0_s(&self) -> f64 {
        self.t0_s
    }

    pub fn voltage(&self) -> &[f64] {
        &self.voltage_v
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Length of the scanned voltage interval.
    pub fn span(&self) -> f64 {
        (self.voltage_v[self.voltage_v.len() - 1] - self.voltage_v[0]).abs()
    }

    /// (lowest, highest) scan voltage.
    pub fn voltage_range(&self) -> (f64, f64) {
        let a = self.voltage_v[0];
        let b = self.voltage_v[self.voltage_v.len() - 1];
        (a.min(b), a.max(b))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanMeta {
    pub region_id: String,
    #[serde(default = "default_splitting")]
    pub splitting_mhz: f64,
    #[serde(default)]
    pub excitation_power_nw: Option<f64>,
    #[serde(default)]
    pub notes: Option<String>,
}

fn default_splitting() -> f64 {
    DEFAULT_SPLITTING_MHZ
}

impl ScanMeta {
    pub fn new(region_id: impl Into<String>) -> Self {
        ScanMeta {
            region_id: region_id.into(),
            splitting_mhz: DEFAULT_SPLITTING_MHZ,
            excitation_power_nw: None,
            notes: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.splitting_mhz.is_finite() && self.splitting_mhz > 0.0) {
            return Err(Error::invalid("splitting_mhz", "must be positive"));
        }
        if let Some(p) = self.excitation_power_nw {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::invalid("excitation_power_nw", "must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

/// A time-ordered sequence of PLE lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScan", into = "RawScan")]
pub struct PleScan {
    meta: ScanMeta,
    lines: Vec<PleLine>,
}

#[derive(Serialize, Deserialize)]
struct RawScan {
    meta: ScanMeta,
    lines: Vec<PleLine>,
}

/// Unvalidated scan file contents; validation happens in [`ScanFile::into_scan`].
#[derive(Deserialize)]
pub(crate) struct ScanFile {
    meta: ScanMeta,
    lines: Vec<RawLine>,
}

impl ScanFile {
    pub(crate) fn into_scan(self) -> Result<PleScan> {
        let lines = self
            .lines
            .into_iter()
            .map(PleLine::try_from)
            .collect::<Result<Vec<_>>>()?;
        PleScan::new(self.meta, lines)
    }
}

impl TryFrom<RawScan> for PleScan {
    type Error = Error;
    fn try_from(raw: RawScan) -> Result<Self> {
        PleScan::new(raw.meta, raw.lines)
    }
}

impl From<PleScan> for RawScan {
    fn from(scan: PleScan) -> Self {
        RawScan {
            meta: scan.meta,
            lines: scan.lines,
        }
    }
}

impl PleScan {
    pub fn new(meta: ScanMeta, lines: Vec<PleLine>) -> Result<Self> {
        meta.validate()?;
        if lines.is_empty() {
            return Err(Error::invalid("lines", "scan contains no lines"));
        }
        if lines.windows(2).any(|w| w[1].t0_s <= w[0].t0_s) {
            return Err(Error::invalid("t0_s", "line start times not strictly increasing"));
        }
        let dir = lines[0].direction;
        if lines.iter().any(|l| l.direction != dir) {
            return Err(Error::invalid("voltage", "scan direction differs between lines"));
        }
        Ok(PleScan { meta, lines })
    }

    pub fn meta(&self) -> &ScanMeta {
        &self.meta
    }

    pub fn lines(&self) -> &[PleLine] {
        &self.lines
    }

    /// Index of the first line whose voltage grid differs from line 0, if any.
    pub fn first_grid_mismatch(&self) -> Option<usize> {
        let grid = self.lines[0].voltage();
        self.lines
            .iter()
            .position(|l| l.voltage() != grid)
    }

    pub fn has_common_grid(&self) -> bool {
        self.first_grid_mismatch().is_none()
    }

    /// Copy of the scan with every voltage multiplied by `k` (k > 0).
    pub fn scale_voltage(&self, k: f64) -> Result<PleScan> {
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::invalid("k", "scale factor must be positive"));
        }
        let lines = self
            .lines
            .iter()
            .map(|l| {
                PleLine::new(
                    l.index,
                    l.t0_s,
                    l.voltage_v.iter().map(|v| v * k).collect(),
                    l.counts.clone(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        PleScan::new(self.meta.clone(), lines)
    }

    /// Copy of the scan with the line order reversed in time.
    ///
    /// Start times are mirrored around the last line so they stay increasing.
    pub fn reverse_time(&self) -> Result<PleScan> {
        let t_last = self.lines[self.lines.len() - 1].t0_s;
        let t_first = self.lines[0].t0_s;
        let lines = self
            .lines
            .iter()
            .rev()
            .enumerate()
            .map(|(i, l)| {
                PleLine::new(i, t_first + t_last - l.t0_s, l.voltage_v.clone(), l.counts.clone())
            })
            .collect::<Result<Vec<_>>>()?;
        PleScan::new(self.meta.clone(), lines)
    }
}

/// An emission spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    wavelength_nm: Vec<f64>,
    intensity: Vec<f64>,
    resolution_nm: f64,
}

impl Spectrum {
    pub fn new(wavelength_nm: Vec<f64>, intensity: Vec<f64>, resolution_nm: f64) -> Result<Self> {
        if wavelength_nm.len() != intensity.len() {
            return Err(Error::invalid(
                "intensity",
                format!("length {} differs from wavelength length {}", intensity.len(), wavelength_nm.len()),
            ));
        }
        if wavelength_nm.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("wavelength_nm", "contains non-finite values"));
        }
        if wavelength_nm.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("wavelength_nm", "not strictly increasing"));
        }
        if intensity.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("intensity", "contains non-finite values"));
        }
        if !(resolution_nm.is_finite() && resolution_nm > 0.0) {
            return Err(Error::invalid("resolution_nm", "must be positive"));
        }
        Ok(Spectrum {
            wavelength_nm,
            intensity,
            resolution_nm,
        })
    }

    pub fn wavelength(&self) -> &[f64] {
        &self.wavelength_nm
    }

    pub fn intensity(&self) -> &[f64] {
        &self.intensity
    }

    pub fn resolution_nm(&self) -> f64 {
        self.resolution_nm
    }

    pub fn len(&self) -> usize {
        self.intensity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intensity.is_empty()
    }

    /// Same samples with a constant added to every intensity.
    pub fn offset(&self, c: f64) -> Spectrum {
        Spectrum {
            wavelength_nm: self.wavelength_nm.clone(),
            intensity: self.intensity.iter().map(|v| v + c).collect(),
            resolution_nm: self.resolution_nm,
        }
    }
}

/// Rectangular AFM height map, stored row-major (`ny` rows of `nx` heights).
#[derive(Debug, Clone, PartialEq)]
pub struct AfmMap {
    nx: usize,
    ny: usize,
    dx_um: f64,
    dy_um: f64,
    heights_nm: Vec<f64>,
}

impl AfmMap {
    pub const MIN_DIM: usize = 4;

    pub fn new(nx: usize, ny: usize, dx_um: f64, dy_um: f64, heights_nm: Vec<f64>) -> Result<Self> {
        if nx < Self::MIN_DIM || ny < Self::MIN_DIM {
            return Err(Error::invalid("nx/ny", format!("grid {nx}x{ny} smaller than 4x4")));
        }
        if !(dx_um.is_finite() && dx_um > 0.0 && dy_um.is_finite() && dy_um > 0.0) {
            return Err(Error::invalid("dx_um/dy_um", "pixel pitch must be positive"));
        }
        if heights_nm.len() != nx * ny {
            return Err(Error::invalid(
                "heights_nm",
                format!("{} values for a {nx}x{ny} grid", heights_nm.len()),
            ));
        }
        if heights_nm.iter().any(|h| !h.is_finite()) {
            return Err(Error::invalid("heights_nm", "contains non-finite values"));
        }
        Ok(AfmMap {
            nx,
            ny,
            dx_um,
            dy_um,
            heights_nm,
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn dx_um(&self) -> f64 {
        self.dx_um
    }

    pub fn dy_um(&self) -> f64 {
        self.dy_um
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights_nm
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.heights_nm[r * self.nx..(r + 1) * self.nx]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.heights_nm.chunks_exact(self.nx)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.heights_nm[row * self.nx + col]
    }

    /// Same geometry with new heights; heights are trusted to be finite.
    pub(crate) fn with_heights(&self, heights_nm: Vec<f64>) -> AfmMap {
        debug_assert_eq!(heights_nm.len(), self.nx * self.ny);
        AfmMap {
            heights_nm,
            ..*self
        }
    }

    pub fn map_heights(&self, f: impl Fn(f64) -> f64) -> Result<AfmMap> {
        AfmMap::new(
            self.nx,
            self.ny,
            self.dx_um,
            self.dy_um,
            self.heights_nm.iter().map(|&h| f(h)).collect(),
        )
    }
}
