//! Emission-spectrum peak detection and ZPL-window classification.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Spectrum;
use crate::signal::{local_maxima, median, prominence};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub wavelength_nm: f64,
    /// Raw intensity at the peak sample.
    pub height: f64,
    pub prominence: f64,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakThresholds {
    pub min_prominence: f64,
    pub min_height: f64,
    pub min_distance_samples: usize,
}

/// Multiple of the robust noise estimate used as the default prominence cut.
pub const DEFAULT_PROMINENCE_NOISE_FACTOR: f64 = 10.0;

/// Robust white-noise standard deviation: `1.4826 * MAD(diff) / sqrt(2)`.
pub fn noise_sigma(spectrum: &Spectrum) -> f64 {
    let y = spectrum.intensity();
    if y.len() < 2 {
        return 0.0;
    }
    let d: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
    let med = median(&d);
    let abs_dev: Vec<f64> = d.iter().map(|v| (v - med).abs()).collect();
    1.4826 * median(&abs_dev) / std::f64::consts::SQRT_2
}

impl PeakThresholds {
    /// Prominence of at least ten noise standard deviations, non-negative
    /// height, no distance thinning.
    pub fn default_for(spectrum: &Spectrum) -> Self {
        PeakThresholds {
            min_prominence: DEFAULT_PROMINENCE_NOISE_FACTOR * noise_sigma(spectrum),
            min_height: 0.0,
            min_distance_samples: 1,
        }
    }
}

pub fn find_peaks(spectrum: &Spectrum, thresholds: &PeakThresholds) -> Vec<Peak> {
    let y = spectrum.intensity();
    let wl = spectrum.wavelength();
    let mut peaks: Vec<Peak> = local_maxima(y)
        .into_iter()
        .filter(|&i| y[i] >= thresholds.min_height)
        .map(|i| Peak {
            wavelength_nm: wl[i],
            height: y[i],
            prominence: prominence(y, i).prominence,
            index: i,
        })
        .filter(|p| p.prominence >= thresholds.min_prominence)
        .collect();

    if thresholds.min_distance_samples > 1 && peaks.len() > 1 {
        let mut order: Vec<usize> = (0..peaks.len()).collect();
        // stable, so equal prominences keep the lower index first
        order.sort_by(|&a, &b| peaks[b].prominence.total_cmp(&peaks[a].prominence));
        let mut keep = vec![true; peaks.len()];
        for (pos, &i) in order.iter().enumerate() {
            if !keep[i] {
                continue;
            }
            for &j in &order[pos + 1..] {
                if keep[j] && peaks[i].index.abs_diff(peaks[j].index) < thresholds.min_distance_samples {
                    keep[j] = false;
                }
            }
        }
        let mut k = keep.into_iter();
        peaks.retain(|_| k.next().unwrap());
    }
    peaks
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZplWindows {
    pub v1: (f64, f64),
    pub v2: (f64, f64),
}

impl Default for ZplWindows {
    fn default() -> Self {
        ZplWindows {
            v1: (861.8, 863.2),
            v2: (916.5, 917.9),
        }
    }
}

impl ZplWindows {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("v1", self.v1), ("v2", self.v2)] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::invalid(name, format!("[{lo}, {hi}] is not a non-empty interval")));
            }
        }
        if self.v1.0 <= self.v2.1 && self.v2.0 <= self.v1.1 {
            return Err(Error::invalid("v1/v2", "windows overlap"));
        }
        Ok(())
    }

    pub fn tag(&self, wavelength_nm: f64) -> PeakTag {
        let inside = |(lo, hi): (f64, f64)| wavelength_nm >= lo && wavelength_nm <= hi;
        if inside(self.v1) {
            PeakTag::V1
        } else if inside(self.v2) {
            PeakTag::V2
        } else {
            PeakTag::Other
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PeakTag {
    V1,
    V2,
    #[serde(rename = "other")]
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    V1,
    V2,
    #[serde(rename = "V1+V2")]
    V1V2,
    #[serde(rename = "multiple")]
    Multiple,
    #[serde(rename = "other")]
    Other,
    #[serde(rename = "none")]
    None,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::V1 => "V1",
            Label::V2 => "V2",
            Label::V1V2 => "V1+V2",
            Label::Multiple => "multiple",
            Label::Other => "other",
            Label::None => "none",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaggedPeak {
    #[serde(flatten)]
    pub peak: Peak,
    pub tag: PeakTag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumClassification {
    pub label: Label,
    pub peaks: Vec<TaggedPeak>,
}

/// Label implied by a set of peak tags.
pub fn label_for(tags: &[PeakTag]) -> Label {
    let v1 = tags.contains(&PeakTag::V1);
    let v2 = tags.contains(&PeakTag::V2);
    match (tags.len(), v1, v2) {
        (0, _, _) => Label::None,
        (_, true, true) => Label::V1V2,
        (_, false, false) => Label::Other,
        (1, true, false) => Label::V1,
        (1, false, true) => Label::V2,
        _ => Label::Multiple,
    }
}

pub fn classify(peaks: &[Peak], windows: &ZplWindows) -> SpectrumClassification {
    let peaks: Vec<TaggedPeak> = peaks
        .iter()
        .map(|&p| TaggedPeak {
            peak: p,
            tag: windows.tag(p.wavelength_nm),
        })
        .collect();
    let tags: Vec<PeakTag> = peaks.iter().map(|p| p.tag).collect();
    SpectrumClassification {
        label: label_for(&tags),
        peaks,
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct RegionStats {
    pub total: usize,
    pub counts: BTreeMap<Label, usize>,
}

impl RegionStats {
    pub fn fraction(&self, label: Label) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        *self.counts.get(&label).unwrap_or(&0) as f64 / self.total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct BatchStats {
    pub total: usize,
    pub regions: BTreeMap<String, RegionStats>,
}

/// Per-region label counts from `(region, label)` pairs.
pub fn batch_stats<'a>(items: impl IntoIterator<Item = (&'a str, Label)>) -> BatchStats {
    let mut stats = BatchStats::default();
    for (region, label) in items {
        let r = stats.regions.entry(region.to_string()).or_default();
        r.total += 1;
        *r.counts.entry(label).or_default() += 1;
        stats.total += 1;
    }
    stats
}

impl BatchStats {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("region,label,count,fraction\n");
        for (region, r) in &self.regions {
            for (label, count) in &r.counts {
                writeln!(out, "{region},{},{count},{}", label.as_str(), r.fraction(*label)).unwrap();
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spectrum(y: Vec<f64>) -> Spectrum {
        let wl = (0..y.len()).map(|i| 900.0 + 0.1 * i as f64).collect();
        Spectrum::new(wl, y, 0.35).unwrap()
    }

    fn loose() -> PeakThresholds {
        PeakThresholds {
            min_prominence: 0.0,
            min_height: 0.0,
            min_distance_samples: 1,
        }
    }

    #[test]
    fn monotone_has_no_peaks() {
        let s = spectrum((0..50).map(|i| i as f64).collect());
        assert!(find_peaks(&s, &loose()).is_empty());
    }

    #[test]
    fn triangle_prominence_is_height() {
        let s = spectrum(vec![0.0, 1.0, 2.0, 3.0, 4.0, 3.0, 2.0, 1.0, 0.0]);
        let p = find_peaks(&s, &loose());
        assert_eq!(p.len(), 1);
        assert_eq!((p[0].index, p[0].prominence, p[0].height), (4, 4.0, 4.0));
    }

    #[test]
    fn distance_thinning_prefers_prominence() {
        let s = spectrum(vec![0.0, 5.0, 1.0, 3.0, 0.0, 0.0, 2.0, 0.0]);
        let mut t = loose();
        assert_eq!(find_peaks(&s, &t).iter().map(|p| p.index).collect::<Vec<_>>(), vec![1, 3, 6]);
        t.min_distance_samples = 3;
        assert_eq!(find_peaks(&s, &t).iter().map(|p| p.index).collect::<Vec<_>>(), vec![1, 6]);
        t.min_prominence = 2.5;
        assert_eq!(find_peaks(&s, &t).iter().map(|p| p.index).collect::<Vec<_>>(), vec![1]);
    }

    fn peak_at(wl: f64) -> Peak {
        Peak {
            wavelength_nm: wl,
            height: 10.0,
            prominence: 10.0,
            index: 0,
        }
    }

    #[test]
    fn classification_rules() {
        let w = ZplWindows::default();
        assert_eq!(classify(&[peak_at(917.0)], &w).label, Label::V2);
        assert_eq!(classify(&[peak_at(862.0)], &w).label, Label::V1);
        assert_eq!(classify(&[peak_at(900.0)], &w).label, Label::Other);
        assert_eq!(classify(&[], &w).label, Label::None);
        assert_eq!(classify(&[peak_at(862.0), peak_at(917.0)], &w).label, Label::V1V2);
        assert_eq!(classify(&[peak_at(880.0), peak_at(917.0)], &w).label, Label::Multiple);
        assert_eq!(classify(&[peak_at(917.0), peak_at(917.5)], &w).label, Label::Multiple);
        assert_eq!(classify(&[peak_at(880.0), peak_at(890.0)], &w).label, Label::Other);
        // window edges are inclusive
        assert_eq!(classify(&[peak_at(916.5)], &w).label, Label::V2);
        assert_eq!(classify(&[peak_at(917.9)], &w).label, Label::V2);
        assert_eq!(classify(&[peak_at(917.91)], &w).label, Label::Other);
    }

    #[test]
    fn windows_validation() {
        assert!(ZplWindows::default().validate().is_ok());
        let overlap = ZplWindows {
            v1: (900.0, 910.0),
            v2: (905.0, 915.0),
        };
        assert!(overlap.validate().is_err());
    }

    #[test]
    fn stats() {
        let none: Vec<(&str, Label)> = (0..10).map(|_| ("r", Label::None)).collect();
        let s = batch_stats(none);
        assert_eq!(s.total, 10);
        assert_eq!(s.regions["r"].counts[&Label::None], 10);
        assert_eq!(s.regions["r"].fraction(Label::None), 1.0);
        let empty = batch_stats(std::iter::empty());
        assert_eq!(empty.total, 0);
        assert!(empty.regions.is_empty());
        let mixed = batch_stats([("a", Label::V2), ("a", Label::None), ("b", Label::Other), ("a", Label::V2)]);
        assert_eq!(mixed.to_csv(), "region,label,count,fraction\na,V2,2,0.6666666666666666\na,none,1,0.3333333333333333\nb,other,1,1\n");
    }
}
