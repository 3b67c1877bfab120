//! Analysis toolkit for colour-centre spectroscopy.
//!
//! * [`fit`]: bounded Levenberg–Marquardt fits of Lorentzian lines and A1/A2 doublets
//! * [`linewidth`]: summed and drift-aligned linewidth extraction from PLE scans
//! * [`wander`]: spectral-wandering rates, outlier rejection and histograms
//! * [`spectra`]: emission peak detection and ZPL-window classification
//! * [`afm`]: row correction, polynomial levelling and surface roughness
//! * [`synth`]: seeded ground-truth generators for all of the above
//!
//! File formats live in [`io`]; the `plekit` binary is a thin front end over
//! [`cli`].

pub mod afm;
pub mod cli;
pub mod error;
pub mod fit;
pub mod io;
pub mod linewidth;
pub mod lorentz;
pub mod model;
pub mod signal;
pub mod spectra;
pub mod synth;
pub mod wander;

pub use error::{Error, Result};
pub use lorentz::{DoubleLorentzParams, LineShape, LorentzParams};
pub use model::{AfmMap, PleLine, PleScan, ScanMeta, Spectrum};
