//! Lorentzian line shapes.
//!
//! A single line is `baseline + amplitude * h^2 / ((x - center)^2 + h^2)`
//! with `h = fwhm / 2`, so `amplitude` is the peak height above baseline and
//! the curve drops to half height at `center ± fwhm / 2`. A doublet is two
//! such lines on one shared baseline.

use serde::{Deserialize, Serialize};

/// Anything that can be evaluated at a scan coordinate.
pub trait LineShape {
    fn eval(&self, x: f64) -> f64;

    /// Sum of squared residuals against `(xs, ys)`.
    fn sum_sq(&self, xs: &[f64], ys: &[f64]) -> f64 {
        xs.iter()
            .zip(ys)
            .map(|(&x, &y)| {
                let r = self.eval(x) - y;
                r * r
            })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzParams {
    pub amplitude: f64,
    pub center: f64,
    pub fwhm: f64,
    pub baseline: f64,
}

/// Unit-height Lorentzian profile.
#[inline]
fn profile(x: f64, center: f64, fwhm: f64) -> f64 {
    let h = 0.5 * fwhm;
    let d = x - center;
    let h2 = h * h;
    h2 / (d * d + h2)
}

/// (profile, d/dcenter, d/dfwhm) of the unit-height profile.
#[inline]
fn profile_grad(x: f64, center: f64, fwhm: f64) -> (f64, f64, f64) {
    let h = 0.5 * fwhm;
    let d = x - center;
    let h2 = h * h;
    let den = d * d + h2;
    let den2 = den * den;
    (h2 / den, 2.0 * d * h2 / den2, h * d * d / den2)
}

pub fn lorentz_eval(params: &LorentzParams, x: f64) -> f64 {
    params.baseline + params.amplitude * profile(x, params.center, params.fwhm)
}

impl LorentzParams {
    pub fn new(amplitude: f64, center: f64, fwhm: f64, baseline: f64) -> Self {
        LorentzParams {
            amplitude,
            center,
            fwhm,
            baseline,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.amplitude.is_finite()
            && self.center.is_finite()
            && self.fwhm.is_finite()
            && self.baseline.is_finite()
            && self.amplitude >= 0.0
            && self.fwhm > 0.0
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.amplitude, self.center, self.fwhm, self.baseline]
    }

    pub fn from_array(p: [f64; 4]) -> Self {
        LorentzParams::new(p[0], p[1], p[2], p[3])
    }

    /// Partial derivatives in `[amplitude, center, fwhm, baseline]` order.
    pub fn gradient(&self, x: f64) -> [f64; 4] {
        let (l, dc, dw) = profile_grad(x, self.center, self.fwhm);
        [l, self.amplitude * dc, self.amplitude * dw, 1.0]
    }
}

impl LineShape for LorentzParams {
    fn eval(&self, x: f64) -> f64 {
        lorentz_eval(self, x)
    }
}

/// Two Lorentzians on a shared baseline.
///
/// `p1` is the lower-coordinate peak. The `baseline` fields inside `p1`/`p2`
/// are ignored; only `baseline` counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoubleLorentzParams {
    pub p1: LorentzParams,
    pub p2: LorentzParams,
    pub baseline: f64,
}

impl DoubleLorentzParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(a1: f64, c1: f64, w1: f64, a2: f64, c2: f64, w2: f64, baseline: f64) -> Self {
        DoubleLorentzParams {
            p1: LorentzParams::new(a1, c1, w1, 0.0),
            p2: LorentzParams::new(a2, c2, w2, 0.0),
            baseline,
        }
    }

    pub fn mean_center(&self) -> f64 {
        0.5 * (self.p1.center + self.p2.center)
    }

    pub fn separation(&self) -> f64 {
        self.p2.center - self.p1.center
    }

    /// Same doublet moved by `dx` along the scan axis.
    pub fn shifted(&self, dx: f64) -> Self {
        let mut out = *self;
        out.p1.center += dx;
        out.p2.center += dx;
        out
    }

    /// `[a1, a2, mean_center, separation, w1, w2, baseline]`, the solver's layout.
    pub fn pack(&self) -> [f64; 7] {
        [
            self.p1.amplitude,
            self.p2.amplitude,
            self.mean_center(),
            self.separation(),
            self.p1.fwhm,
            self.p2.fwhm,
            self.baseline,
        ]
    }

    pub fn unpack(theta: &[f64; 7]) -> Self {
        let [a1, a2, m, s, w1, w2, b] = *theta;
        DoubleLorentzParams::new(a1, m - 0.5 * s, w1, a2, m + 0.5 * s, w2, b)
    }

    /// Partial derivatives in natural order `[a1, c1, w1, a2, c2, w2, baseline]`.
    pub fn gradient(&self, x: f64) -> [f64; 7] {
        let (l1, dc1, dw1) = profile_grad(x, self.p1.center, self.p1.fwhm);
        let (l2, dc2, dw2) = profile_grad(x, self.p2.center, self.p2.fwhm);
        let (a1, a2) = (self.p1.amplitude, self.p2.amplitude);
        [l1, a1 * dc1, a1 * dw1, l2, a2 * dc2, a2 * dw2, 1.0]
    }
}

impl LineShape for DoubleLorentzParams {
    fn eval(&self, x: f64) -> f64 {
        self.baseline
            + self.p1.amplitude * profile(x, self.p1.center, self.p1.fwhm)
            + self.p2.amplitude * profile(x, self.p2.center, self.p2.fwhm)
    }
}

/// Doublet value in the packed `(mean, separation)` layout.
pub fn doublet_eval_packed(theta: &[f64; 7], x: f64) -> f64 {
    let [a1, a2, m, s, w1, w2, b] = *theta;
    b + a1 * profile(x, m - 0.5 * s, w1) + a2 * profile(x, m + 0.5 * s, w2)
}

/// Gradient of [`doublet_eval_packed`] with respect to the packed parameters.
pub fn doublet_gradient_packed(theta: &[f64; 7], x: f64) -> [f64; 7] {
    let [a1, a2, m, s, w1, w2, _] = *theta;
    let (l1, dc1, dw1) = profile_grad(x, m - 0.5 * s, w1);
    let (l2, dc2, dw2) = profile_grad(x, m + 0.5 * s, w2);
    [
        l1,
        l2,
        a1 * dc1 + a2 * dc2,
        0.5 * (a2 * dc2 - a1 * dc1),
        a1 * dw1,
        a2 * dw2,
        1.0,
    ]
}
