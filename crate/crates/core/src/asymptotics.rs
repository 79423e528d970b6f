//! Predicted error constants of the diffuse-domain schemes and the tools
//! that measure them from computed solutions.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::ddm_ops::{Family, SchemeKind};
use crate::error::{DdmError, Result};
use crate::grid::{same_grid, ScalarField};
use crate::levelset::LevelSetField;

pub const EULER_GAMMA: f64 = 0.577_215_664_901_533;

pub const OUTER_COEFF_EPS: &str = "outer_coeff_eps";
pub const LNEPS_SLOPE: &str = "lneps_slope";
pub const OUTER_INTERCEPT: &str = "outer_intercept";
pub const BOUNDARY_CONST_P15: &str = "boundary_const_p15";
pub const BOUNDARY_CONST_EPS: &str = "boundary_const_eps";

#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticPrediction {
    pub scheme: SchemeKind,
    /// Outward normal derivative of the exact solution on the boundary.
    pub a: f64,
    pub eps: f64,
    pub constants: BTreeMap<&'static str, f64>,
}

impl AsymptoticPrediction {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.constants.get(name).copied()
    }
}

pub fn predict(scheme: SchemeKind, a: f64, eps: f64) -> AsymptoticPrediction {
    let mut c = BTreeMap::new();
    let ln6 = 6f64.ln();
    match scheme.family {
        Family::Ddm2 => {
            c.insert(OUTER_COEFF_EPS, a / 3.0 * (-ln6 + EULER_GAMMA));
        }
        Family::Ddm1 | Family::Ddm3 => {
            let inner = if scheme.family == Family::Ddm1 {
                -ln6
            } else {
                -(0.5 * (2.0f64 / 3.0).sqrt()).ln()
            };
            let slope = -a / 6.0;
            let intercept = a / 3.0 * (inner + EULER_GAMMA);
            c.insert(LNEPS_SLOPE, slope);
            c.insert(OUTER_INTERCEPT, intercept);
            c.insert(OUTER_COEFF_EPS, slope * eps.ln() + intercept);
        }
        Family::MDdm1 => {
            c.insert(BOUNDARY_CONST_P15, -a / (2.0 * PI).sqrt());
        }
        Family::MDdm3 => {
            c.insert(BOUNDARY_CONST_P15, -a / (6.0 * PI).sqrt());
        }
        Family::MDdm2 => {
            let big_h = h_integral();
            c.insert(OUTER_COEFF_EPS, -a / big_h);
            c.insert(BOUNDARY_CONST_EPS, -a * h_integrand(0.0) / big_h);
        }
    }
    AsymptoticPrediction {
        scheme,
        a,
        eps,
        constants: c,
    }
}

/// Leading modelling error at the boundary relative to `u_norm`, for the
/// modified families with an `eps^1.5` boundary layer.
pub fn analytic_leading_error(scheme: SchemeKind, a: f64, eps: f64, u_norm: f64) -> Option<f64> {
    predict(scheme, a, eps)
        .get(BOUNDARY_CONST_P15)
        .map(|c| c * eps.powf(1.5) / u_norm)
}

pub fn h_integrand(x: f64) -> f64 {
    (((6.0 * x).exp() * (1.0 - 6.0 * x)) / 36.0 + 6.0 * x).exp()
}

const H_LEFT: f64 = -30.0;
const H_RIGHT: f64 = 3.0;

fn simpson_step(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

/// Adaptive Simpson quadrature, started from unit-length panels so that
/// narrow peaks are not missed.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let panels = (b - a).abs().ceil().max(1.0) as usize;
    let w = (b - a) / panels as f64;
    (0..panels)
        .map(|k| {
            let lo = a + k as f64 * w;
            let hi = lo + w;
            let fa = f(lo);
            let fb = f(hi);
            let fm = f(0.5 * (lo + hi));
            let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
            simpson_step(f, lo, hi, fa, fm, fb, whole, tol / panels as f64, 50)
        })
        .sum()
}

/// `int_{-inf}^{0} h` (the left tail beyond -30 is below e^{-180}).
pub fn h_integral_left() -> f64 {
    integrate(&h_integrand, H_LEFT, 0.0, 1e-12)
}

/// `int_{0}^{inf} h` (the integrand is below e^{-10^7} beyond 3).
pub fn h_integral_right() -> f64 {
    integrate(&h_integrand, 0.0, H_RIGHT, 1e-12)
}

pub fn h_integral() -> f64 {
    integrate(&h_integrand, H_LEFT, H_RIGHT, 1e-12)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// `c0 + c1 x + c2 x^2 + ...`
    pub coefficients: Vec<f64>,
    pub residual_norm: f64,
    /// Residual norm over the norm of the data.
    pub relative_residual: f64,
}

impl FitResult {
    pub fn intercept(&self) -> f64 {
        self.coefficients[0]
    }
    pub fn slope(&self) -> f64 {
        self.coefficients.get(1).copied().unwrap_or(0.0)
    }
    pub fn eval(&self, x: f64) -> f64 {
        self.coefficients
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * x + c)
    }
}

/// Least-squares polynomial fit of `ys` against `xs`.
pub fn fit_poly(xs: &[f64], ys: &[f64], degree: usize) -> Result<FitResult> {
    if xs.len() != ys.len() {
        return Err(DdmError::Fit(
            "abscissae and values differ in length".into(),
        ));
    }
    if xs.len() < degree + 2 {
        return Err(DdmError::Fit(format!(
            "{} points cannot support a degree-{degree} fit with a residual",
            xs.len()
        )));
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(DdmError::Fit("abscissae are not distinct".into()));
    }
    let m = DMatrix::from_fn(xs.len(), degree + 1, |i, j| xs[i].powi(j as i32));
    let b = DVector::from_column_slice(ys);
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-12 * smax) {
        return Err(DdmError::Fit("design matrix is rank deficient".into()));
    }
    let c = svd
        .solve(&b, 0.0)
        .map_err(|e| DdmError::Fit(e.to_string()))?;
    let resid = (&m * &c - &b).norm();
    let scale = b.norm();
    Ok(FitResult {
        coefficients: c.iter().copied().collect(),
        residual_norm: resid,
        relative_residual: if scale > 0.0 { resid / scale } else { resid },
    })
}

/// Fit of `value` against powers of `ln eps`.
pub fn fit_poly_in_ln_eps(points: &[(f64, f64)], degree: usize) -> Result<FitResult> {
    if degree == 0 || degree > 2 {
        return Err(DdmError::Fit(format!("degree {degree} not in 1..=2")));
    }
    if points.iter().any(|p| !(p.0 > 0.0)) {
        return Err(DdmError::Fit("eps must be positive".into()));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    fit_poly(&xs, &ys, degree)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateauWindow {
    /// Range of `z = r / eps`.
    pub z_min: f64,
    pub z_max: f64,
    /// Allowed `(max - min) / |mean|`.
    pub flatness: f64,
    pub min_nodes: usize,
}

impl Default for PlateauWindow {
    fn default() -> Self {
        PlateauWindow {
            z_min: -10.0,
            z_max: -5.0,
            flatness: 0.05,
            min_nodes: 5,
        }
    }
}

pub fn extract_interior_constant(
    u_num: &ScalarField,
    u_exact: &ScalarField,
    r: &LevelSetField,
    eps: f64,
    power: f64,
) -> Result<f64> {
    extract_interior_constant_in(u_num, u_exact, r, eps, power, &PlateauWindow::default())
}

/// Mean of `(u_num - u_exact) / eps^power` over the plateau window, which must be flat.
pub fn extract_interior_constant_in(
    u_num: &ScalarField,
    u_exact: &ScalarField,
    r: &LevelSetField,
    eps: f64,
    power: f64,
    window: &PlateauWindow,
) -> Result<f64> {
    same_grid(u_num.grid(), u_exact.grid())?;
    same_grid(u_num.grid(), r.grid())?;
    let scale = eps.powf(power);
    let vals: Vec<f64> = (0..u_num.len())
        .filter(|&i| {
            let z = r.r[i] / eps;
            z >= window.z_min && z <= window.z_max
        })
        .map(|i| (u_num[i] - u_exact[i]) / scale)
        .collect();
    if vals.len() < window.min_nodes {
        return Err(DdmError::InvalidParameter(format!(
            "plateau window holds {} nodes, needs {}",
            vals.len(),
            window.min_nodes
        )));
    }
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let (lo, hi) = vals
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let limit = window.flatness * mean.abs() + 1e-12;
    if hi - lo > limit {
        return Err(DdmError::NoPlateau {
            spread: hi - lo,
            limit,
        });
    }
    Ok(mean)
}

fn lagrange(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    (0..xs.len())
        .map(|i| {
            let w: f64 = (0..xs.len())
                .filter(|&j| j != i)
                .map(|j| (x - xs[j]) / (xs[i] - xs[j]))
                .product();
            w * ys[i]
        })
        .sum()
}

/// `(u_num - u_exact) / eps^power` interpolated (cubic) at the zero crossings
/// of `r` on a 1D grid, averaged over the crossings.
pub fn boundary_value(
    u_num: &ScalarField,
    u_exact: &ScalarField,
    r: &LevelSetField,
    eps: f64,
    power: f64,
) -> Result<f64> {
    same_grid(u_num.grid(), u_exact.grid())?;
    same_grid(u_num.grid(), r.grid())?;
    let g = *u_num.grid();
    if g.dim() != 1 {
        return Err(DdmError::InvalidParameter(
            "boundary values are extracted on 1D grids".into(),
        ));
    }
    let n = g.len();
    let rv = r.r.values();
    let mut vals = Vec::new();
    for i in 0..n - 1 {
        if (rv[i] <= 0.0) == (rv[i + 1] <= 0.0) {
            continue;
        }
        let x0 = g.coord(0, i);
        let xb = x0 + rv[i] / (rv[i] - rv[i + 1]) * g.h(0);
        let start = i.saturating_sub(1).min(n - 4);
        let xs: Vec<f64> = (start..start + 4).map(|k| g.coord(0, k)).collect();
        let ys: Vec<f64> = (start..start + 4).map(|k| u_num[k] - u_exact[k]).collect();
        vals.push(lagrange(&xs, &ys, xb) / eps.powf(power));
    }
    if vals.is_empty() {
        return Err(DdmError::EmptyMask);
    }
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

/// The extrapolation fit behind [`extract_boundary_constant`], without the
/// residual check.
pub fn boundary_fit(samples: &[(f64, f64)], power: f64) -> Result<FitResult> {
    if samples.len() < 4 {
        return Err(DdmError::Fit(format!(
            "{} eps values, need at least 4",
            samples.len()
        )));
    }
    let ys: Vec<f64> = samples.iter().map(|s| s.1).collect();
    if (power - 1.5).abs() < 1e-12 {
        let xs: Vec<f64> = samples.iter().map(|s| s.0.sqrt()).collect();
        fit_poly(&xs, &ys, 2)
    } else {
        let xs: Vec<f64> = samples.iter().map(|s| s.0).collect();
        fit_poly(&xs, &ys, 1)
    }
}

/// Extrapolates boundary values to `eps = 0`: quadratic in `sqrt(eps)` for the
/// `eps^1.5` layer, linear in `eps` otherwise.
pub fn extract_boundary_constant(samples: &[(f64, f64)], power: f64) -> Result<FitResult> {
    let fit = boundary_fit(samples, power)?;
    if fit.residual_norm > 0.1 * fit.intercept().abs() {
        return Err(DdmError::Fit(format!(
            "fit residual {:.3e} exceeds 10% of intercept {:.4}",
            fit.residual_norm,
            fit.intercept()
        )));
    }
    Ok(fit)
}
