//! Detect peaks in a few synthetic spectra and label them by ZPL window.

use plekit::spectra::{batch_stats, classify, find_peaks, PeakThresholds, ZplWindows};
use plekit::synth::{synth_spectrum, PlantedPeak, SpectrumSynthConfig};

fn main() -> plekit::Result<()> {
    let spectra: [(&str, &[f64]); 5] = [
        ("bulk", &[862.5, 917.2]),
        ("bulk", &[917.1]),
        ("membrane", &[]),
        ("membrane", &[895.0]),
        ("membrane", &[862.4]),
    ];
    let windows = ZplWindows::default();
    let mut labels = Vec::new();
    for (seed, (region, centers)) in spectra.iter().enumerate() {
        let cfg = SpectrumSynthConfig {
            peaks: centers
                .iter()
                .map(|&c| PlantedPeak { center_nm: c, height: 800.0, width_nm: 0.35 })
                .collect(),
            seed: seed as u64,
            ..Default::default()
        };
        let s = synth_spectrum(&cfg)?;
        let peaks = find_peaks(&s, &PeakThresholds::default_for(&s));
        let c = classify(&peaks, &windows);
        let found: Vec<String> = c.peaks.iter().map(|p| format!("{:.2}", p.peak.wavelength_nm)).collect();
        println!("{region:9} planted {centers:?} found [{}] -> {}", found.join(", "), c.label.as_str());
        labels.push((*region, c.label));
    }
    print!("\n{}", batch_stats(labels).to_csv());
    Ok(())
}
