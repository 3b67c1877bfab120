//! Wandering rates between consecutive lines, binned into a zero-centred
//! histogram.

use std::collections::BTreeMap;

use plekit::fit::SolverOptions;
use plekit::linewidth::{calibrate, fit_lines};
use plekit::synth::{synth_ple, PleSynthConfig};
use plekit::wander::{bin_width, histogram, reject_outliers, wander_rates};

fn main() -> plekit::Result<()> {
    let cfg = PleSynthConfig {
        walk_std_mhz_per_line: 15.0,
        n_lines: 200,
        seed: 11,
        ..Default::default()
    };
    let (scan, _) = synth_ple(&cfg)?;
    let fits = fit_lines(&scan, &cfg.nominal_constraints(), &SolverOptions::default())?;
    let calib = calibrate(cfg.separation_v(), scan.meta().splitting_mhz)?;
    let samples = wander_rates(&scan, &fits, &calib)?;
    let (kept, rejected) = reject_outliers(&samples, 200.0);

    let mut regions = BTreeMap::new();
    regions.insert(scan.meta().region_id.clone(), kept.clone());
    let width = bin_width(&regions)?;
    let mut hist = histogram(&kept, width);
    hist.n_rejected = rejected;

    println!("{} rates kept, {rejected} rejected, bin width {width:.3} MHz/s", kept.len());
    let peak = hist.counts.iter().copied().max().unwrap_or(1).max(1);
    for (c, k) in hist.centers().iter().zip(&hist.counts).filter(|(_, k)| **k > 0) {
        println!("{c:8.2} {:4} {}", k, "#".repeat(k * 40 / peak));
    }
    println!("std dev {:.2} MHz/s", hist.std_dev());
    Ok(())
}
