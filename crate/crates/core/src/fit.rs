//! Bounded Levenberg–Marquardt fits of single Lorentzians and A1/A2 doublets.
//!
//! Box bounds are enforced by projecting every trial point back into the
//! feasible set before its cost is evaluated. The doublet is solved in a
//! `(mean center, separation)` parameterization so the separation tolerance is
//! a plain box; the two position windows then become an interval for the mean
//! center that depends on the separation, which the projection also handles.
//!
//! Damping starts at `1e-3`, is multiplied by 10 on a rejected step and
//! divided by 10 on an accepted one. Iteration stops when the relative cost
//! decrease or the relative step falls below `1e-10`, or when no damping
//! level yields a decrease. Hitting the iteration cap is a non-convergence.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lorentz::{
    doublet_eval_packed, doublet_gradient_packed, DoubleLorentzParams, LineShape, LorentzParams,
};
use crate::model::PleLine;
use crate::signal;

const LAMBDA_MIN: f64 = 1e-12;
const LAMBDA_MAX: f64 = 1e16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// Plain sum of squared residuals.
    #[default]
    Uniform,
    /// Residuals divided by `sqrt(max(count, 1))`.
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iter: usize,
    pub ftol: f64,
    pub xtol: f64,
    pub lambda0: f64,
    pub weighting: Weighting,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iter: 200,
            ftol: 1e-10,
            xtol: 1e-10,
            lambda0: 1e-3,
            weighting: Weighting::Uniform,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult<P, E> {
    pub params: P,
    pub std_errors: E,
    /// Final (weighted) sum of squared residuals.
    pub cost: f64,
    pub converged: bool,
    pub n_iter: usize,
    /// Cost at the start and after every accepted step.
    #[serde(skip)]
    pub cost_history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LorentzErrors {
    pub amplitude: f64,
    pub center: f64,
    pub fwhm: f64,
    pub baseline: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DoubleLorentzErrors {
    pub amplitude1: f64,
    pub center1: f64,
    pub fwhm1: f64,
    pub amplitude2: f64,
    pub center2: f64,
    pub fwhm2: f64,
    pub baseline: f64,
    pub mean_center: f64,
    pub separation: f64,
}

pub type SingleFit = FitResult<LorentzParams, LorentzErrors>;
pub type DoubleFit = FitResult<DoubleLorentzParams, DoubleLorentzErrors>;

impl DoubleFit {
    /// Converged, both centers determined to better than their width and both
    /// amplitudes above three standard errors.
    pub fn is_successful(&self) -> bool {
        let p = &self.params;
        let e = &self.std_errors;
        self.converged
            && e.center1 < p.p1.fwhm
            && e.center2 < p.p2.fwhm
            && p.p1.amplitude > 3.0 * e.amplitude1
            && p.p2.amplitude > 3.0 * e.amplitude2
    }
}

// ---------------------------------------------------------------------------
// solver core

struct Outcome<const N: usize> {
    theta: [f64; N],
    cost: f64,
    n_iter: usize,
    converged: bool,
    rel_change: f64,
    history: Vec<f64>,
    covariance: Option<SMatrix<f64, N, N>>,
}

struct Problem<'a, const N: usize, F, G, P> {
    xs: &'a [f64],
    ys: &'a [f64],
    weights: Option<Vec<f64>>,
    eval: F,
    grad: G,
    project: P,
}

impl<'a, const N: usize, F, G, P> Problem<'a, N, F, G, P>
where
    F: Fn(&[f64; N], f64) -> f64,
    G: Fn(&[f64; N], f64) -> [f64; N],
    P: Fn(&mut [f64; N]),
{
    fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    fn cost(&self, theta: &[f64; N]) -> f64 {
        let mut c = 0.0;
        for (i, (&x, &y)) in self.xs.iter().zip(self.ys).enumerate() {
            let r = (self.eval)(theta, x) - y;
            c += self.weight(i) * r * r;
        }
        c
    }

    fn normal_equations(&self, theta: &[f64; N]) -> (SMatrix<f64, N, N>, SVector<f64, N>) {
        let mut jtj = SMatrix::<f64, N, N>::zeros();
        let mut jtr = SVector::<f64, N>::zeros();
        for (i, (&x, &y)) in self.xs.iter().zip(self.ys).enumerate() {
            let w = self.weight(i);
            let g = (self.grad)(theta, x);
            let r = (self.eval)(theta, x) - y;
            for a in 0..N {
                jtr[a] += w * g[a] * r;
                for b in a..N {
                    jtj[(a, b)] += w * g[a] * g[b];
                }
            }
        }
        for a in 0..N {
            for b in 0..a {
                jtj[(a, b)] = jtj[(b, a)];
            }
        }
        (jtj, jtr)
    }

    /// Damped step followed by projection. Coordinates the projection moves
    /// are pinned at their projected value and the remaining ones re-solved,
    /// until the projection no longer changes any free coordinate.
    fn projected_step(
        &self,
        theta: &[f64; N],
        a: &SMatrix<f64, N, N>,
        jtr: &SVector<f64, N>,
    ) -> Option<[f64; N]> {
        let mut fixed = [false; N];
        let mut pinned = [0.0; N];
        let mut trial = *theta;
        for _ in 0..=N {
            let mut m = *a;
            let mut rhs = -jtr;
            for i in 0..N {
                if fixed[i] {
                    for j in 0..N {
                        if !fixed[j] {
                            rhs[j] -= a[(j, i)] * pinned[i];
                        }
                        m[(i, j)] = 0.0;
                        m[(j, i)] = 0.0;
                    }
                    m[(i, i)] = 1.0;
                    rhs[i] = pinned[i];
                }
            }
            let delta = m.cholesky()?.solve(&rhs);
            let mut raw = *theta;
            for i in 0..N {
                raw[i] += delta[i];
            }
            trial = raw;
            (self.project)(&mut trial);
            let mut changed = false;
            for i in 0..N {
                let tol = 1e-12 * (theta[i].abs() + delta[i].abs()) + f64::MIN_POSITIVE;
                if !fixed[i] && (trial[i] - raw[i]).abs() > tol {
                    fixed[i] = true;
                    pinned[i] = trial[i] - theta[i];
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        Some(trial)
    }

    fn solve(&self, init: [f64; N], opts: &SolverOptions) -> Outcome<N> {
        let mut theta = init;
        (self.project)(&mut theta);
        let mut cost = self.cost(&theta);
        let mut history = vec![cost];
        let mut lambda = opts.lambda0;
        let mut rel_change = f64::INFINITY;
        let mut converged = false;
        let mut n_iter = 0;

        'outer: while n_iter < opts.max_iter {
            n_iter += 1;
            if cost == 0.0 {
                converged = true;
                rel_change = 0.0;
                break;
            }
            let (jtj, jtr) = self.normal_equations(&theta);
            let diag_floor = 1e-12 * (0..N).map(|i| jtj[(i, i)]).fold(0.0, f64::max).max(1e-300);
            loop {
                let mut a = jtj;
                for i in 0..N {
                    a[(i, i)] += lambda * jtj[(i, i)].max(diag_floor);
                }
                let Some(trial) = self.projected_step(&theta, &a, &jtr) else {
                    lambda *= 10.0;
                    if lambda > LAMBDA_MAX {
                        converged = true;
                        rel_change = 0.0;
                        break 'outer;
                    }
                    continue;
                };
                let new_cost = self.cost(&trial);
                if new_cost < cost {
                    let step2: f64 = (0..N).map(|i| (trial[i] - theta[i]).powi(2)).sum();
                    let norm2: f64 = theta.iter().map(|v| v * v).sum();
                    rel_change = (cost - new_cost) / cost;
                    theta = trial;
                    cost = new_cost;
                    history.push(cost);
                    lambda = (lambda / 10.0).max(LAMBDA_MIN);
                    if rel_change < opts.ftol || step2.sqrt() < opts.xtol * (norm2.sqrt() + opts.xtol) {
                        converged = true;
                        break 'outer;
                    }
                    break;
                }
                lambda *= 10.0;
                if lambda > LAMBDA_MAX {
                    converged = true;
                    rel_change = 0.0;
                    break 'outer;
                }
            }
        }

        let covariance = {
            let n = self.xs.len();
            let (jtj, _) = self.normal_equations(&theta);
            if n > N {
                let scale = cost / (n - N) as f64;
                jtj.cholesky().map(|c| c.inverse() * scale)
            } else {
                None
            }
        };

        Outcome {
            theta,
            cost,
            n_iter,
            converged,
            rel_change,
            history,
            covariance,
        }
    }
}

fn poisson_weights(ys: &[f64]) -> Vec<f64> {
    ys.iter().map(|&y| 1.0 / y.max(1.0)).collect()
}

fn weights_for(ys: &[f64], weighting: Weighting) -> Option<Vec<f64>> {
    match weighting {
        Weighting::Uniform => None,
        Weighting::Poisson => Some(poisson_weights(ys)),
    }
}

fn check_data(xs: &[f64], ys: &[f64], min_len: usize) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::invalid("ys", format!("length {} differs from xs length {}", ys.len(), xs.len())));
    }
    if xs.len() < min_len {
        return Err(Error::invalid("xs", format!("{} samples, at least {min_len} required", xs.len())));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::invalid("ys", "non-finite sample"));
    }
    let (lo, hi) = ys
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| (lo.min(y), hi.max(y)));
    if lo == hi {
        return Err(Error::DegenerateData(format!("all {} samples equal {lo}", ys.len())));
    }
    Ok(())
}

fn stderr(cov: &Option<SMatrix<f64, 4, 4>>, i: usize) -> f64 {
    cov.as_ref()
        .map(|c| c[(i, i)].max(0.0).sqrt())
        .unwrap_or(f64::INFINITY)
}

// ---------------------------------------------------------------------------
// single Lorentzian

/// Closed intervals for each single-Lorentzian parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzBounds {
    pub amplitude: (f64, f64),
    pub center: (f64, f64),
    pub fwhm: (f64, f64),
    pub baseline: (f64, f64),
}

impl Default for LorentzBounds {
    fn default() -> Self {
        LorentzBounds {
            amplitude: (0.0, f64::INFINITY),
            center: (f64::NEG_INFINITY, f64::INFINITY),
            fwhm: (0.0, f64::INFINITY),
            baseline: (f64::NEG_INFINITY, f64::INFINITY),
        }
    }
}

impl LorentzBounds {
    fn as_array(&self) -> [(f64, f64); 4] {
        [self.amplitude, self.center, self.fwhm, self.baseline]
    }

    pub fn contains(&self, p: &LorentzParams) -> bool {
        self.as_array()
            .iter()
            .zip(p.to_array())
            .all(|(&(lo, hi), v)| v >= lo && v <= hi)
    }
}

pub fn fit_single(
    xs: &[f64],
    ys: &[f64],
    init: &LorentzParams,
    bounds: &LorentzBounds,
) -> Result<SingleFit> {
    fit_single_with(xs, ys, init, bounds, &SolverOptions::default())
}

pub fn fit_single_with(
    xs: &[f64],
    ys: &[f64],
    init: &LorentzParams,
    bounds: &LorentzBounds,
    opts: &SolverOptions,
) -> Result<SingleFit> {
    check_data(xs, ys, 5)?;
    if !init.is_valid() {
        return Err(Error::InvalidInit(format!("{init:?} is not a valid Lorentzian")));
    }
    if !bounds.contains(init) {
        return Err(Error::InvalidInit(format!("{init:?} outside bounds {bounds:?}")));
    }
    let span = xs.iter().fold(0.0_f64, |m, &x| m.max((x - xs[0]).abs()));
    let min_fwhm = bounds.fwhm.0.max(1e-12 * span.max(f64::MIN_POSITIVE));
    let mut boxes = bounds.as_array();
    boxes[2].0 = min_fwhm;

    let problem = Problem {
        xs,
        ys,
        weights: weights_for(ys, opts.weighting),
        eval: |t: &[f64; 4], x: f64| LorentzParams::from_array(*t).eval(x),
        grad: |t: &[f64; 4], x: f64| LorentzParams::from_array(*t).gradient(x),
        project: |t: &mut [f64; 4]| {
            for (v, &(lo, hi)) in t.iter_mut().zip(&boxes) {
                *v = v.clamp(lo, hi);
            }
        },
    };
    let out = problem.solve(init.to_array(), opts);
    if !out.converged {
        return Err(Error::NonConvergence {
            iterations: out.n_iter,
            rel_change: out.rel_change,
        });
    }
    Ok(FitResult {
        params: LorentzParams::from_array(out.theta),
        std_errors: LorentzErrors {
            amplitude: stderr(&out.covariance, 0),
            center: stderr(&out.covariance, 1),
            fwhm: stderr(&out.covariance, 2),
            baseline: stderr(&out.covariance, 3),
        },
        cost: out.cost,
        converged: true,
        n_iter: out.n_iter,
        cost_history: out.history,
    })
}

// ---------------------------------------------------------------------------
// doublet

fn default_tol_frac() -> f64 {
    0.10
}

/// Restrictions on a doublet fit, in scan-axis units.
///
/// Window 1 applies to the lower-coordinate peak, window 2 to the upper one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConstraints {
    pub pos_window_1: (f64, f64),
    pub pos_window_2: (f64, f64),
    /// Widths must stay strictly below this (the scanned interval).
    pub max_fwhm: f64,
    pub separation_ref: f64,
    #[serde(default = "default_tol_frac")]
    pub separation_tol_frac: f64,
}

impl FitConstraints {
    /// Windows of half-width `window_half` around the expected peak
    /// positions `c1 < c2`; the reference separation is `c2 - c1`.
    pub fn around(c1: f64, c2: f64, window_half: f64, max_fwhm: f64) -> Self {
        FitConstraints {
            pos_window_1: (c1 - window_half, c1 + window_half),
            pos_window_2: (c2 - window_half, c2 + window_half),
            max_fwhm,
            separation_ref: c2 - c1,
            separation_tol_frac: default_tol_frac(),
        }
    }

    /// Constraints for a line whose doublet is expected near `mean_center`
    /// with separation `separation`: windows of half-width `0.4 * separation`
    /// and widths bounded by the scanned interval.
    pub fn for_line(line: &PleLine, mean_center: f64, separation: f64) -> Self {
        let s = separation.abs();
        FitConstraints::around(mean_center - 0.5 * s, mean_center + 0.5 * s, 0.4 * s, line.span())
    }

    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("pos_window_1", self.pos_window_1), ("pos_window_2", self.pos_window_2)] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::invalid(name, format!("[{lo}, {hi}] is not a non-empty interval")));
            }
        }
        if !(self.max_fwhm.is_finite() && self.max_fwhm > 0.0) {
            return Err(Error::invalid("max_fwhm", "must be positive"));
        }
        if !(self.separation_ref.is_finite() && self.separation_ref > 0.0) {
            return Err(Error::invalid("separation_ref", "must be positive"));
        }
        if !(self.separation_tol_frac > 0.0 && self.separation_tol_frac < 1.0) {
            return Err(Error::invalid("separation_tol_frac", "must lie in (0, 1)"));
        }
        Ok(())
    }

    fn separation_box(&self) -> (f64, f64) {
        let d = self.separation_tol_frac * self.separation_ref;
        (self.separation_ref - d, self.separation_ref + d)
    }

    /// Separations compatible with both windows and the tolerance.
    pub fn feasible_separation(&self) -> Result<(f64, f64)> {
        let (w1, w2) = (self.pos_window_1, self.pos_window_2);
        let (s_lo, s_hi) = self.separation_box();
        let lo = s_lo.max(w2.0 - w1.1).max(0.0);
        let hi = s_hi.min(w2.1 - w1.0);
        if lo > hi || hi <= 0.0 {
            return Err(Error::ConstraintInfeasible);
        }
        Ok((lo, hi))
    }

    fn mean_interval(&self, s: f64) -> (f64, f64) {
        let (w1, w2) = (self.pos_window_1, self.pos_window_2);
        ((w1.0 + 0.5 * s).max(w2.0 - 0.5 * s), (w1.1 + 0.5 * s).min(w2.1 - 0.5 * s))
    }

    fn fwhm_box(&self) -> (f64, f64) {
        (1e-9 * self.max_fwhm, self.max_fwhm * (1.0 - 1e-9))
    }

    /// Exact check of every constraint on a doublet.
    pub fn is_satisfied_by(&self, p: &DoubleLorentzParams) -> bool {
        let inside = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        p.p1.amplitude >= 0.0
            && p.p2.amplitude >= 0.0
            && p.p1.fwhm > 0.0
            && p.p2.fwhm > 0.0
            && p.p1.fwhm < self.max_fwhm
            && p.p2.fwhm < self.max_fwhm
            && inside(p.p1.center, self.pos_window_1)
            && inside(p.p2.center, self.pos_window_2)
            && (p.separation() - self.separation_ref).abs() <= self.separation_tol_frac * self.separation_ref
    }

    /// Map packed parameters into the feasible set. Requires feasible constraints.
    fn project(&self, theta: &mut [f64; 7], sep: (f64, f64)) {
        // Shrink every box by a few ulps of its scale so rounding in the
        // unpacked centers cannot leave the windows.
        let scale = self.pos_window_1.0.abs().max(self.pos_window_2.1.abs()).max(self.separation_ref);
        let eps = 16.0 * f64::EPSILON * scale;
        let shrink = |(lo, hi): (f64, f64)| {
            if hi - lo > 2.0 * eps {
                (lo + eps, hi - eps)
            } else {
                let mid = 0.5 * (lo + hi);
                (mid, mid)
            }
        };

        let (w_lo, w_hi) = self.fwhm_box();
        theta[0] = theta[0].max(0.0);
        theta[1] = theta[1].max(0.0);
        let (s_lo, s_hi) = shrink(sep);
        theta[3] = theta[3].clamp(s_lo, s_hi);
        let (m_lo, m_hi) = shrink(self.mean_interval(theta[3]));
        theta[2] = theta[2].clamp(m_lo, m_hi.max(m_lo));
        theta[4] = theta[4].clamp(w_lo, w_hi);
        theta[5] = theta[5].clamp(w_lo, w_hi);
    }

    /// Closest feasible doublet to `p` under the solver's projection.
    pub fn projected(&self, p: &DoubleLorentzParams) -> Result<DoubleLorentzParams> {
        self.validate()?;
        let sep = self.feasible_separation()?;
        let mut theta = p.pack();
        self.project(&mut theta, sep);
        Ok(DoubleLorentzParams::unpack(&theta))
    }
}

pub fn fit_double(
    line: &PleLine,
    init: &DoubleLorentzParams,
    constraints: &FitConstraints,
) -> Result<DoubleFit> {
    fit_double_xy(line.voltage(), line.counts(), init, constraints, &SolverOptions::default())
}

/// Doublet fit on raw samples; errors if the solver does not converge.
pub fn fit_double_xy(
    xs: &[f64],
    ys: &[f64],
    init: &DoubleLorentzParams,
    constraints: &FitConstraints,
    opts: &SolverOptions,
) -> Result<DoubleFit> {
    let fit = fit_double_report(xs, ys, init, constraints, opts)?;
    if !fit.converged {
        return Err(Error::NonConvergence {
            iterations: fit.n_iter,
            rel_change: fit.cost_history.windows(2).last().map_or(f64::INFINITY, |w| (w[0] - w[1]) / w[0]),
        });
    }
    Ok(fit)
}

/// Like [`fit_double_xy`] but returns a non-converged fit instead of an error.
pub fn fit_double_report(
    xs: &[f64],
    ys: &[f64],
    init: &DoubleLorentzParams,
    constraints: &FitConstraints,
    opts: &SolverOptions,
) -> Result<DoubleFit> {
    constraints.validate()?;
    let sep = constraints.feasible_separation()?;
    check_data(xs, ys, 8)?;
    if !init.p1.is_valid() || !init.p2.is_valid() || !init.baseline.is_finite() {
        return Err(Error::InvalidInit(format!(
            "amplitudes must be >= 0 and widths > 0, got {init:?}"
        )));
    }
    if !constraints.is_satisfied_by(init) {
        return Err(Error::InvalidInit(format!("{init:?} violates {constraints:?}")));
    }

    let problem = Problem {
        xs,
        ys,
        weights: weights_for(ys, opts.weighting),
        eval: doublet_eval_packed,
        grad: doublet_gradient_packed,
        project: |t: &mut [f64; 7]| constraints.project(t, sep),
    };
    let out = problem.solve(init.pack(), opts);

    let se = |i: usize| {
        out.covariance
            .as_ref()
            .map(|c| c[(i, i)].max(0.0).sqrt())
            .unwrap_or(f64::INFINITY)
    };
    let (se_c1, se_c2) = match &out.covariance {
        Some(c) => {
            let (vm, vs, cms) = (c[(2, 2)], c[(3, 3)], c[(2, 3)]);
            (
                (vm + 0.25 * vs - cms).max(0.0).sqrt(),
                (vm + 0.25 * vs + cms).max(0.0).sqrt(),
            )
        }
        None => (f64::INFINITY, f64::INFINITY),
    };
    Ok(FitResult {
        params: DoubleLorentzParams::unpack(&out.theta),
        std_errors: DoubleLorentzErrors {
            amplitude1: se(0),
            center1: se_c1,
            fwhm1: se(4),
            amplitude2: se(1),
            center2: se_c2,
            fwhm2: se(5),
            baseline: se(6),
            mean_center: se(2),
            separation: se(3),
        },
        cost: out.cost,
        converged: out.converged,
        n_iter: out.n_iter,
        cost_history: out.history,
    })
}

// ---------------------------------------------------------------------------
// initial guess

/// Relative prominence (to the strongest maximum) a smoothed maximum needs
/// to count as a visible peak.
const VISIBLE_PEAK_FRACTION: f64 = 0.25;

pub fn initial_guess(line: &PleLine, constraints: &FitConstraints) -> DoubleLorentzParams {
    initial_guess_xy(line.voltage(), line.counts(), constraints)
}

/// Feasible starting doublet from the two most prominent maxima of a
/// 5-point moving average, falling back to the window midpoints.
pub fn initial_guess_xy(xs: &[f64], ys: &[f64], constraints: &FitConstraints) -> DoubleLorentzParams {
    let smooth = signal::moving_average(ys, 5);
    let n = smooth.len();

    let mut sorted = smooth.clone();
    sorted.sort_by(f64::total_cmp);
    let baseline = sorted[n / 10];
    let top = sorted[n - 1];

    let mut peaks: Vec<(usize, f64)> = signal::local_maxima(&smooth)
        .into_iter()
        .map(|i| (i, signal::prominence(&smooth, i).prominence))
        .collect();
    // stable: equal prominences keep the lower index first
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1));
    let strongest = peaks.first().map_or(0.0, |p| p.1);
    peaks.retain(|p| strongest > 0.0 && p.1 >= VISIBLE_PEAK_FRACTION * strongest);

    let sep_ref = constraints.separation_ref;
    let mid = |(lo, hi): (f64, f64)| 0.5 * (lo + hi);
    let in_window = |x: f64, (lo, hi): (f64, f64)| x >= lo && x <= hi;

    let (c1, c2) = match peaks.as_slice() {
        [] => {
            let m = 0.5 * (mid(constraints.pos_window_1) + mid(constraints.pos_window_2));
            (m - 0.5 * sep_ref, m + 0.5 * sep_ref)
        }
        [(i, _)] => {
            let x = xs[*i];
            if in_window(x, constraints.pos_window_2) && !in_window(x, constraints.pos_window_1) {
                (x - sep_ref, x)
            } else {
                (x, x + sep_ref)
            }
        }
        [(i, _), (j, _), ..] => {
            let (a, b) = (xs[*i], xs[*j]);
            (a.min(b), a.max(b))
        }
    };

    let dx = xs.windows(2).map(|w| (w[1] - w[0]).abs()).fold(f64::INFINITY, f64::min);
    let nearest = |x: f64| -> usize {
        xs.iter()
            .enumerate()
            .min_by(|a, b| (a.1 - x).abs().total_cmp(&(b.1 - x).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0)
    };
    let min_amp = 1e-6 * (top - baseline).abs().max(1e-12);
    let amp_at = |x: f64| (smooth[nearest(x)] - baseline).max(min_amp);

    let fwhm = match peaks.first() {
        Some(&(p, _)) => {
            let half = baseline + 0.5 * (smooth[p] - baseline);
            let mut l = p;
            while l > 0 && smooth[l] > half {
                l -= 1;
            }
            let mut r = p;
            while r + 1 < n && smooth[r] > half {
                r += 1;
            }
            (xs[r] - xs[l]).abs()
        }
        None => 0.1 * sep_ref,
    };
    let fwhm = fwhm.clamp(2.0 * dx, 0.5 * constraints.max_fwhm.max(4.0 * dx));

    let guess = DoubleLorentzParams::new(amp_at(c1), c1, fwhm, amp_at(c2), c2, fwhm, baseline);
    constraints.projected(&guess).unwrap_or(guess)
}

// ---------------------------------------------------------------------------
// exhaustive oracle

/// Grid element with the smallest sum of squared residuals (first on ties).
pub fn grid_oracle<P: LineShape + Clone>(xs: &[f64], ys: &[f64], grid: &[P]) -> Result<(P, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (k, p) in grid.iter().enumerate() {
        let c = p.sum_sq(xs, ys);
        if best.is_none_or(|(_, bc)| c < bc) {
            best = Some((k, c));
        }
    }
    let (k, c) = best.ok_or(Error::EmptyGrid)?;
    Ok((grid[k].clone(), c))
}

/// Cartesian grid of doublets around `center` in natural parameter order
/// `[a1, c1, w1, a2, c2, w2, baseline]`: `points` values per axis spaced by
/// `steps[k]` and centered on the corresponding parameter.
pub fn doublet_neighborhood(center: &DoubleLorentzParams, steps: [f64; 7], points: usize) -> Vec<DoubleLorentzParams> {
    let base = [
        center.p1.amplitude,
        center.p1.center,
        center.p1.fwhm,
        center.p2.amplitude,
        center.p2.center,
        center.p2.fwhm,
        center.baseline,
    ];
    let offsets: Vec<f64> = (0..points).map(|i| i as f64 - 0.5 * (points as f64 - 1.0)).collect();
    let total = points.pow(7);
    let mut out = Vec::with_capacity(total);
    for mut idx in 0..total {
        let mut v = [0.0; 7];
        for k in 0..7 {
            v[k] = base[k] + offsets[idx % points] * steps[k];
            idx /= points;
        }
        out.push(DoubleLorentzParams::new(v[0], v[1], v[2], v[3], v[4], v[5], v[6]));
    }
    out
}
