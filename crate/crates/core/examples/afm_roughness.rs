//! Level a tilted AFM map with row offsets and compare the roughness with
//! what was drawn.

use plekit::afm::{analyze, RowCorrection};
use plekit::synth::{synth_afm, AfmSynthConfig};

fn main() -> plekit::Result<()> {
    let cfg = AfmSynthConfig {
        nx: 256,
        ny: 256,
        seed: 4,
        ..Default::default()
    };
    let (map, truth) = synth_afm(&cfg)?;
    println!("drawn roughness: Rq {:.1} pm, Ra {:.1} pm", truth.realized_rq_pm, truth.realized_ra_pm);
    for mode in [RowCorrection::None, RowCorrection::Median, RowCorrection::MedianDiff] {
        for degree in [0, 1, 2] {
            let r = analyze(&map, mode, degree)?;
            println!("{:12} degree {degree}: Rq {:9.1} pm, Ra {:9.1} pm", mode.as_str(), r.rq_pm, r.ra_pm);
        }
    }
    Ok(())
}
