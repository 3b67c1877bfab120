//! Write a small synthetic dataset (scan, spectra, AFM map) to a directory.
//!
//! Usage: cargo run --example synth_dataset -- [OUT_DIR]

use std::path::PathBuf;

use plekit::io::{write_afm, write_json, write_scan, write_spectrum};
use plekit::synth::{synth_afm, synth_ple, synth_spectrum, AfmSynthConfig, PlantedPeak, PleSynthConfig, SpectrumSynthConfig};

fn main() -> plekit::Result<()> {
    let out: PathBuf = std::env::args_os().nth(1).map(Into::into).unwrap_or_else(|| "synthetic".into());
    let create = |p: &PathBuf| std::fs::create_dir_all(p).map_err(|e| plekit::Error::Io { path: p.clone(), source: e });
    create(&out.join("spectra/R1"))?;

    let (scan, truth) = synth_ple(&PleSynthConfig {
        walk_std_mhz_per_line: 10.0,
        seed: 1,
        ..Default::default()
    })?;
    write_scan(&scan, &out.join("scan.json"))?;
    write_json(&truth, &out.join("scan.truth.json"))?;

    for (i, center) in [862.5, 917.2, 890.0].into_iter().enumerate() {
        let s = synth_spectrum(&SpectrumSynthConfig {
            peaks: vec![PlantedPeak { center_nm: center, height: 1000.0, width_nm: 0.35 }],
            seed: i as u64,
            ..Default::default()
        })?;
        write_spectrum(&s, &out.join(format!("spectra/R1/spot{i}.csv")))?;
    }

    let (map, _) = synth_afm(&AfmSynthConfig {
        nx: 128,
        ny: 128,
        seed: 2,
        ..Default::default()
    })?;
    write_afm(&map, &out.join("map.txt"))?;
    println!("wrote dataset to {}", out.display());
    Ok(())
}
