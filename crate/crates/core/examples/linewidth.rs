//! Compare the summed and aligned linewidth estimators on a wandering line.

use plekit::linewidth::{aligned_linewidth, summed_linewidth};
use plekit::synth::{synth_ple, PleSynthConfig};

fn main() -> plekit::Result<()> {
    println!("walk MHz/line   summed A1/A2 (MHz)   aligned A1/A2 (MHz)");
    for walk in [0.0, 10.0, 20.0, 40.0] {
        let cfg = PleSynthConfig {
            walk_std_mhz_per_line: walk,
            seed: 2,
            ..Default::default()
        };
        let (scan, _) = synth_ple(&cfg)?;
        let c = cfg.nominal_constraints();
        let summed = match summed_linewidth(&scan, &c) {
            Ok(r) => format!("{:6.1} / {:6.1}", r.fwhm_a1_mhz, r.fwhm_a2_mhz),
            Err(e) => format!("failed ({e})"),
        };
        let a = aligned_linewidth(&scan, &c)?;
        println!("{walk:13.0}   {summed:>18}   {:6.1} / {:6.1}", a.fwhm_a1_mhz, a.fwhm_a2_mhz);
    }
    println!("true FWHM: {:.1} MHz", PleSynthConfig::default().fwhm_mhz);
    Ok(())
}
