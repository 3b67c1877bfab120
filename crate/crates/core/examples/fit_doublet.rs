//! Fit a Lorentzian doublet to one noisy PLE line and print the parameters
//! with their standard errors.

use plekit::fit::{fit_double, initial_guess};
use plekit::synth::{synth_ple, PleSynthConfig};

fn main() -> plekit::Result<()> {
    let cfg = PleSynthConfig {
        n_lines: 1,
        seed: 7,
        ..Default::default()
    };
    let (scan, truth) = synth_ple(&cfg)?;
    let line = &scan.lines()[0];
    let c = cfg.nominal_constraints();
    let fit = fit_double(line, &initial_guess(line, &c), &c)?;
    let (p, e) = (&fit.params, &fit.std_errors);

    println!("converged after {} iterations, cost {:.1}", fit.n_iter, fit.cost);
    println!("peak 1: center {:.5} +- {:.5} V, fwhm {:.5} +- {:.5} V, amplitude {:.1}", p.p1.center, e.center1, p.p1.fwhm, e.fwhm1, p.p1.amplitude);
    println!("peak 2: center {:.5} +- {:.5} V, fwhm {:.5} +- {:.5} V, amplitude {:.1}", p.p2.center, e.center2, p.p2.fwhm, e.fwhm2, p.p2.amplitude);
    println!("baseline {:.2}, separation {:.5} V", p.baseline, p.separation());
    println!("true fwhm {:.5} V, successful: {}", truth.true_fwhm_v, fit.is_successful());
    Ok(())
}
