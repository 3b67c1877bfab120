//! AFM height-map levelling and roughness.
//!
//! The default pipeline subtracts each scan line's median, removes a
//! least-squares degree-2 surface and reports Rq/Ra in picometres.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::AfmMap;
use crate::signal::median_in_place;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowCorrection {
    None,
    /// Subtract each row's median.
    #[default]
    Median,
    /// Subtract the running sum of medians of row-to-row differences.
    MedianDiff,
}

impl RowCorrection {
    pub fn as_str(&self) -> &'static str {
        match self {
            RowCorrection::None => "none",
            RowCorrection::Median => "median",
            RowCorrection::MedianDiff => "median_diff",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoughnessResult {
    pub rq_pm: f64,
    pub ra_pm: f64,
    pub degree: usize,
    pub row_correction: RowCorrection,
}

pub fn step_line_correct(map: &AfmMap, mode: RowCorrection) -> AfmMap {
    let nx = map.nx();
    let mut out = map.heights().to_vec();
    match mode {
        RowCorrection::None => {}
        RowCorrection::Median => {
            let mut buf = vec![0.0; nx];
            for row in out.chunks_exact_mut(nx) {
                buf.copy_from_slice(row);
                let med = median_in_place(&mut buf);
                row.iter_mut().for_each(|h| *h -= med);
            }
        }
        RowCorrection::MedianDiff => {
            let mut buf = vec![0.0; nx];
            let mut offset = 0.0;
            for r in 1..map.ny() {
                let (prev, cur) = (map.row(r - 1), map.row(r));
                for (b, (c, p)) in buf.iter_mut().zip(cur.iter().zip(prev)) {
                    *b = c - p;
                }
                offset += median_in_place(&mut buf);
                out[r * nx..(r + 1) * nx].iter_mut().for_each(|h| *h -= offset);
            }
        }
    }
    map.with_heights(out)
}

/// Exponent pairs `(a, b)` of the monomials `x^a y^b` with `a + b <= degree`,
/// ordered by total degree, then by descending power of x:
/// `1, x, y, x², xy, y², ...`.
pub fn poly_terms(degree: usize) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    for total in 0..=degree as u32 {
        for a in (0..=total).rev() {
            out.push((a, total - a));
        }
    }
    out
}

/// Number of monomials of total degree at most `degree`.
pub fn n_poly_terms(degree: usize) -> usize {
    (degree + 1) * (degree + 2) / 2
}

/// Column coordinate mapped to [-1, 1].
pub fn norm_coord(i: usize, n: usize) -> f64 {
    -1.0 + 2.0 * i as f64 / (n - 1) as f64
}

/// Evaluate `sum coeffs[k] * x^a_k * y^b_k` in normalized coordinates.
pub fn eval_poly(coeffs: &[f64], terms: &[(u32, u32)], x: f64, y: f64) -> f64 {
    coeffs
        .iter()
        .zip(terms)
        .map(|(c, &(a, b))| c * x.powi(a as i32) * y.powi(b as i32))
        .sum()
}

fn design_row(terms: &[(u32, u32)], x: f64, y: f64, row: &mut [f64]) {
    for (v, &(a, b)) in row.iter_mut().zip(terms) {
        *v = x.powi(a as i32) * y.powi(b as i32);
    }
}

fn normal_equations(map: &AfmMap, terms: &[(u32, u32)], z: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    let p = terms.len();
    let mut ata = DMatrix::<f64>::zeros(p, p);
    let mut atz = DVector::<f64>::zeros(p);
    let mut row = vec![0.0; p];
    for r in 0..map.ny() {
        let y = norm_coord(r, map.ny());
        for c in 0..map.nx() {
            design_row(terms, norm_coord(c, map.nx()), y, &mut row);
            let h = z[r * map.nx() + c];
            for i in 0..p {
                atz[i] += row[i] * h;
                for j in i..p {
                    ata[(i, j)] += row[i] * row[j];
                }
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            ata[(i, j)] = ata[(j, i)];
        }
    }
    (ata, atz)
}

/// Least-squares polynomial surface of total degree `degree` in normalized
/// coordinates; returns the coefficients in [`poly_terms`] order.
pub fn fit_poly_surface(map: &AfmMap, degree: usize) -> Result<Vec<f64>> {
    let terms = poly_terms(degree);
    let p = terms.len();
    let rank_err = || Error::RankDeficient {
        degree,
        nx: map.nx(),
        ny: map.ny(),
    };
    // x^a needs at least a+1 distinct columns, y^b at least b+1 rows
    if degree >= map.nx() || degree >= map.ny() || p >= map.nx() * map.ny() {
        return Err(rank_err());
    }
    let (ata, atz) = normal_equations(map, &terms, map.heights());
    let svd = ata.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= 1e-13 * smax {
        return Err(rank_err());
    }
    let chol = ata.cholesky().ok_or_else(rank_err)?;
    let mut coeffs = chol.solve(&atz);

    // one round of iterative refinement on the residual
    let residual = subtract_poly(map, coeffs.as_slice(), &terms);
    let (_, atr) = normal_equations(map, &terms, &residual);
    coeffs += chol.solve(&atr);
    Ok(coeffs.as_slice().to_vec())
}

fn subtract_poly(map: &AfmMap, coeffs: &[f64], terms: &[(u32, u32)]) -> Vec<f64> {
    let mut out = Vec::with_capacity(map.heights().len());
    for r in 0..map.ny() {
        let y = norm_coord(r, map.ny());
        for c in 0..map.nx() {
            out.push(map.get(r, c) - eval_poly(coeffs, terms, norm_coord(c, map.nx()), y));
        }
    }
    out
}

/// Subtract the least-squares polynomial surface of the given degree.
pub fn poly_detrend(map: &AfmMap, degree: usize) -> Result<AfmMap> {
    let coeffs = fit_poly_surface(map, degree)?;
    Ok(map.with_heights(subtract_poly(map, &coeffs, &poly_terms(degree))))
}

/// Rq and Ra over all pixels; heights are taken as already levelled.
pub fn roughness(map: &AfmMap) -> RoughnessResult {
    let n = map.heights().len() as f64;
    let (sq, abs) = map
        .heights()
        .iter()
        .fold((0.0, 0.0), |(sq, abs), &h| (sq + h * h, abs + h.abs()));
    RoughnessResult {
        rq_pm: 1000.0 * (sq / n).sqrt(),
        ra_pm: 1000.0 * abs / n,
        degree: 0,
        row_correction: RowCorrection::None,
    }
}

/// Row correction, polynomial detrend and roughness in one pass.
pub fn analyze(map: &AfmMap, mode: RowCorrection, degree: usize) -> Result<RoughnessResult> {
    let levelled = poly_detrend(&step_line_correct(map, mode), degree)?;
    Ok(RoughnessResult {
        degree,
        row_correction: mode,
        ..roughness(&levelled)
    })
}
