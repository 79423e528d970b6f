use std::io::Write;

use rayon::prelude::*;

use crate::asymptotics::{
    analytic_leading_error, boundary_fit, boundary_value, extract_boundary_constant,
    extract_interior_constant_in, fit_poly, fit_poly_in_ln_eps, predict, FitResult, PlateauWindow,
    BOUNDARY_CONST_EPS, BOUNDARY_CONST_P15, LNEPS_SLOPE, OUTER_COEFF_EPS, OUTER_INTERCEPT,
};
use crate::ddm_ops::{Family, SchemeKind};
use crate::error::{DdmError, Result};
use crate::grid::norm_linf_masked;

use super::cases::{CaseSpec, HRule};
use super::run::{solve_elliptic_at, RunOptions, RunOutcome};

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantOptions {
    pub run: RunOptions,
    /// Replaces the scheme's default spacing rule.
    pub h_rule: Option<HRule>,
    /// Replaces the default schedule of the scheme.
    pub eps: Option<Vec<f64>>,
    pub window: PlateauWindow,
}

/// eps values at which error constants are measured; the logarithmic and
/// `sqrt(eps)` corrections are still visible at the larger schedules.
pub const CONSTANT_EPS: [f64; 4] = [0.00625, 0.003125, 0.0015625, 0.00078125];

/// Schedule for the `ln eps` fits of the plain conservative families, whose
/// `O(eps)` drift in the slope dies out more slowly.
pub const LNEPS_FIT_EPS: [f64; 4] = [0.0015625, 0.00078125, 0.000390625, 0.0001953125];

fn default_schedule(family: Family) -> Vec<f64> {
    match family {
        Family::Ddm1 | Family::Ddm3 => LNEPS_FIT_EPS.to_vec(),
        _ => CONSTANT_EPS.to_vec(),
    }
}

impl Default for ConstantOptions {
    fn default() -> Self {
        ConstantOptions {
            run: RunOptions::default(),
            h_rule: None,
            eps: None,
            window: PlateauWindow::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantRow {
    pub scheme: SchemeKind,
    pub case_id: String,
    pub constant_name: String,
    pub predicted: f64,
    pub measured: f64,
    /// Relative gap, or the absolute gap when the prediction is zero.
    pub rel_gap: f64,
}

impl ConstantRow {
    fn new(scheme: SchemeKind, case: &CaseSpec, name: &str, predicted: f64, measured: f64) -> Self {
        let gap = (measured - predicted).abs();
        ConstantRow {
            scheme,
            case_id: case.id.clone(),
            constant_name: name.to_string(),
            predicted,
            measured,
            rel_gap: if predicted != 0.0 {
                gap / predicted.abs()
            } else {
                gap
            },
        }
    }
}

pub fn write_constants_csv<W: Write>(rows: &[ConstantRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "scheme",
        "case",
        "constant_name",
        "predicted",
        "measured",
        "rel_gap",
    ])?;
    for r in rows {
        w.write_record([
            r.scheme.to_string(),
            r.case_id.clone(),
            r.constant_name.clone(),
            format!("{:.6}", r.predicted),
            format!("{:.6}", r.measured),
            format!("{:.4e}", r.rel_gap),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn sweep(case: &CaseSpec, scheme: SchemeKind, opts: &ConstantOptions) -> Result<Vec<RunOutcome>> {
    let eps = opts
        .eps
        .clone()
        .unwrap_or_else(|| default_schedule(scheme.family));
    let rule = opts.h_rule.unwrap_or_else(|| case.h_rule_for(scheme));
    eps.par_iter()
        .map(|&e| solve_elliptic_at(case, scheme, e, rule.h(e), &opts.run))
        .collect()
}

fn interior(o: &RunOutcome, power: f64, window: &PlateauWindow) -> Result<f64> {
    extract_interior_constant_in(&o.u, &o.u_exact, &o.level_set, o.eps, power, window)
}

/// Value at `eps = 0` of a straight line through `(eps, value)`.
fn extrapolate_linear(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 3 {
        return points
            .last()
            .map(|p| p.1)
            .ok_or_else(|| DdmError::Fit("no data".into()));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    Ok(fit_poly(&xs, &ys, 1)?.intercept())
}

/// With `a = 0` the constant vanishes and only the fitted value is reported.
fn boundary_constant(points: &[(f64, f64)], power: f64, a: f64) -> Result<f64> {
    if a == 0.0 {
        return Ok(boundary_fit(points, power)?.intercept());
    }
    Ok(extract_boundary_constant(points, power)?.intercept())
}

pub fn run_constant_validation(case: &CaseSpec, scheme: SchemeKind) -> Result<Vec<ConstantRow>> {
    run_constant_validation_with(case, scheme, &ConstantOptions::default())
}

/// Measures the error constants of `scheme` on `case` and sets them against
/// the predicted values.
pub fn run_constant_validation_with(
    case: &CaseSpec,
    scheme: SchemeKind,
    opts: &ConstantOptions,
) -> Result<Vec<ConstantRow>> {
    let a = case.a.ok_or_else(|| {
        DdmError::InvalidParameter(format!("case {} has no boundary slope", case.id))
    })?;
    let runs = sweep(case, scheme, opts)?;
    let eps_min = runs.iter().map(|o| o.eps).fold(f64::INFINITY, f64::min);
    let pred = predict(scheme, a, eps_min);
    let p = |name: &str| pred.get(name).unwrap_or(0.0);
    let ctx = |e: DdmError| e.context(format!("constants of {scheme} on {}", case.id));
    let interior_points = |power: f64| -> Result<Vec<(f64, f64)>> {
        runs.iter()
            .map(|o| Ok((o.eps, interior(o, power, &opts.window)?)))
            .collect()
    };
    let boundary_points = |power: f64| -> Result<Vec<(f64, f64)>> {
        runs.iter()
            .map(|o| {
                Ok((
                    o.eps,
                    boundary_value(&o.u, &o.u_exact, &o.level_set, o.eps, power)?,
                ))
            })
            .collect()
    };
    let mut rows = Vec::new();
    match scheme.family {
        Family::Ddm2 => {
            let c = extrapolate_linear(&interior_points(1.0).map_err(ctx)?).map_err(ctx)?;
            rows.push(ConstantRow::new(
                scheme,
                case,
                OUTER_COEFF_EPS,
                p(OUTER_COEFF_EPS),
                c,
            ));
        }
        Family::Ddm1 | Family::Ddm3 => {
            let fit = fit_poly_in_ln_eps(&interior_points(1.0).map_err(ctx)?, 1).map_err(ctx)?;
            rows.push(ConstantRow::new(
                scheme,
                case,
                LNEPS_SLOPE,
                p(LNEPS_SLOPE),
                fit.slope(),
            ));
            rows.push(ConstantRow::new(
                scheme,
                case,
                OUTER_INTERCEPT,
                p(OUTER_INTERCEPT),
                fit.intercept(),
            ));
        }
        Family::MDdm1 | Family::MDdm3 => {
            let c = boundary_constant(&boundary_points(1.5).map_err(ctx)?, 1.5, a).map_err(ctx)?;
            rows.push(ConstantRow::new(
                scheme,
                case,
                BOUNDARY_CONST_P15,
                p(BOUNDARY_CONST_P15),
                c,
            ));
        }
        Family::MDdm2 => {
            let c = extrapolate_linear(&interior_points(1.0).map_err(ctx)?).map_err(ctx)?;
            rows.push(ConstantRow::new(
                scheme,
                case,
                OUTER_COEFF_EPS,
                p(OUTER_COEFF_EPS),
                c,
            ));
            let c = boundary_constant(&boundary_points(1.0).map_err(ctx)?, 1.0, a).map_err(ctx)?;
            rows.push(ConstantRow::new(
                scheme,
                case,
                BOUNDARY_CONST_EPS,
                p(BOUNDARY_CONST_EPS),
                c,
            ));
        }
    }
    Ok(rows)
}

/// Fit of the interior plateau of `(u_eps - u) / eps^2` as a quadratic in `ln eps`.
pub fn lneps_quadratic_defect(
    case: &CaseSpec,
    scheme: SchemeKind,
    opts: &ConstantOptions,
) -> Result<(Vec<(f64, f64)>, FitResult)> {
    let runs = sweep(case, scheme, opts)?;
    let points = runs
        .iter()
        .map(|o| Ok((o.eps, interior(o, 2.0, &opts.window)?)))
        .collect::<Result<Vec<_>>>()?;
    let fit = fit_poly_in_ln_eps(&points, 2)?;
    Ok((points, fit))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitReport {
    pub eps: f64,
    pub h: Vec<f64>,
    /// `u_h - u_{h/2}` at the node of D where it is largest in magnitude,
    /// relative to `max_D |u|`.
    pub consecutive: Vec<f64>,
    /// Orders in h between successive consecutive errors.
    pub consecutive_orders: Vec<f64>,
    /// Sum of the consecutive errors of the finest spacing onward, with a
    /// second-order geometric tail; estimates `u_h - u_eps` on the finest
    /// spacing listed first.
    pub truncation_estimate: f64,
    /// Leading analytic error `u_eps - u` at the boundary relative to
    /// `max_D |u|`, when the scheme has an `eps^1.5` boundary layer.
    pub analytic_error: Option<f64>,
    /// `max_D |u_h - u| / max_D |u|` per spacing.
    pub total_errors: Vec<f64>,
    pub u_norm: f64,
}

impl SplitReport {
    pub fn all_consecutive_positive(&self) -> bool {
        self.consecutive.iter().all(|&e| e > 0.0)
    }

    pub fn opposite_signs(&self) -> Option<bool> {
        self.analytic_error
            .map(|a| a * self.truncation_estimate < 0.0)
    }
}

/// Splits the error of `scheme` at fixed `eps` into discretization and
/// modelling parts using `h = eps / c` for each `c` (nested grids).
pub fn truncation_split(
    case: &CaseSpec,
    scheme: SchemeKind,
    eps: f64,
    cs: &[f64],
    opts: &RunOptions,
) -> Result<SplitReport> {
    if cs.len() < 3 {
        return Err(DdmError::InvalidParameter(format!(
            "{} spacings given, need at least 3",
            cs.len()
        )));
    }
    let runs = cs
        .par_iter()
        .map(|&c| solve_elliptic_at(case, scheme, eps, eps / c, opts))
        .collect::<Result<Vec<_>>>()?;
    let finest = runs.last().expect("nonempty");
    let rf = finest.level_set.r.values();
    let u_norm = norm_linf_masked(|i| rf[i] <= 0.0, &finest.u_exact)?;
    let mut consecutive = Vec::new();
    for pair in runs.windows(2) {
        let (c, f) = (&pair[0], &pair[1]);
        let gc = *c.u.grid();
        let gf = *f.u.grid();
        if gc.dim() != 1 || (gf.n(0) - 1) % (gc.n(0) - 1) != 0 {
            return Err(DdmError::GridMismatch);
        }
        let k = (gf.n(0) - 1) / (gc.n(0) - 1);
        let rc = c.level_set.r.values();
        let best = (0..gc.len())
            .filter(|&i| rc[i] <= 0.0)
            .map(|i| c.u[i] - f.u[i * k])
            .fold(0.0_f64, |m, d| if d.abs() > m.abs() { d } else { m });
        consecutive.push(best / u_norm);
    }
    let consecutive_orders = consecutive
        .windows(2)
        .zip(runs.windows(3))
        .map(|(e, r)| (e[0] / e[1]).abs().ln() / (r[0].h / r[1].h).ln())
        .collect();
    let last = *consecutive.last().expect("nonempty");
    let truncation_estimate = consecutive.iter().sum::<f64>() + last / 3.0;
    let analytic_error = case
        .a
        .and_then(|a| analytic_leading_error(scheme, a, eps, u_norm));
    Ok(SplitReport {
        eps,
        h: runs.iter().map(|o| o.h).collect(),
        consecutive,
        consecutive_orders,
        truncation_estimate,
        analytic_error,
        total_errors: runs.iter().map(|o| o.einf).collect(),
        u_norm,
    })
}
