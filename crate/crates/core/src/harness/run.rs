use rayon::prelude::*;

use crate::ddm_ops::{
    assemble_heat_step_from, assemble_poisson, Geometry, GeometryOptions, Motion, ProblemFields,
    SchemeKind, SpatialLevel,
};
use crate::error::{DdmError, Result};
use crate::grid::{norm_l2_weighted, norm_linf_masked, GridSpec, ScalarField, VectorField};
use crate::levelset::{
    advect_with, analytic_seed, closest_points, extend_constant_normal_frozen, needs_reinit,
    reinitialize, LevelSetField, Velocity, CFL_LIMIT,
};
use crate::solvers::{solve, MgConfig};

use super::cases::{CaseSpec, DataExtension};
use super::table::ConvergenceTable;

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub mg: MgConfig,
    /// Replaces the case's geometry options.
    pub geometry: Option<GeometryOptions>,
    pub reinit_steps: usize,
    /// Width, in units of eps, over which the level set is kept a distance function.
    pub reinit_band: f64,
    /// Width, in units of eps, of the transport extension of boundary data.
    pub extension_band: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            mg: MgConfig::default(),
            geometry: None,
            reinit_steps: 200,
            reinit_band: 5.0,
            extension_band: 3.0,
        }
    }
}

/// One solve at a single eps.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub eps: f64,
    pub h: f64,
    pub dt: Option<f64>,
    pub steps: usize,
    pub t: f64,
    pub e2: f64,
    pub einf: f64,
    /// Largest V-cycle count over all solves (1 for direct solves).
    pub iterations: usize,
    pub residual: f64,
    pub u: ScalarField,
    /// Exact solution inside D, extended boundary data outside.
    pub u_ref: ScalarField,
    /// Exact solution evaluated at every node.
    pub u_exact: ScalarField,
    pub level_set: LevelSetField,
    pub phi: ScalarField,
}

impl RunOutcome {
    /// `max |u - u_ref|` over the nodes of D.
    pub fn max_error(&self) -> f64 {
        let diff = self
            .u
            .zip_with(&self.u_ref, |a, b| a - b)
            .expect("same grid");
        let r = self.level_set.r.values();
        norm_linf_masked(|i| r[i] <= 0.0, &diff).unwrap_or(f64::NAN)
    }
}

fn make_grid(case: &CaseSpec, h: f64) -> Result<GridSpec> {
    let p = &case.problem;
    let dim = p.dim();
    if (1..dim).any(|a| p.lo[a] != p.lo[0] || p.hi[a] != p.hi[0]) {
        return Err(DdmError::InvalidGrid(format!(
            "case {} does not live on a cube",
            case.id
        )));
    }
    GridSpec::cube_with_spacing(dim, p.lo[0], p.hi[0], h)
}

fn geometry_options(case: &CaseSpec, opts: &RunOptions) -> GeometryOptions {
    opts.geometry.unwrap_or(case.geometry)
}

fn extend_boundary_data(
    case: &CaseSpec,
    r: &LevelSetField,
    cps: &[[f64; 3]],
    t: f64,
    eps: f64,
    opts: &RunOptions,
) -> Result<ScalarField> {
    let grid = *r.grid();
    let g = &case.problem.boundary;
    let seed = ScalarField::new(grid, cps.iter().map(|&p| g(p, t)).collect())?;
    match case.extension {
        DataExtension::ClosestPoint => Ok(seed),
        DataExtension::Transport => {
            let h = grid.spacing();
            let frozen: Vec<bool> = r.r.values().iter().map(|v| v.abs() <= h).collect();
            extend_constant_normal_frozen(&seed, r, opts.extension_band * eps, &frozen)
        }
    }
}

fn sample_fields(
    case: &CaseSpec,
    r: &LevelSetField,
    cps: &[[f64; 3]],
    t: f64,
    eps: f64,
    opts: &RunOptions,
) -> Result<ProblemFields> {
    let grid = *r.grid();
    let p = &case.problem;
    let beta = match &p.beta {
        Some(b) => ScalarField::from_fn(grid, |x| b(x, t)),
        None => ScalarField::constant(grid, 1.0),
    };
    let advection = p
        .advection
        .as_ref()
        .map(|b| VectorField::from_fn(grid, |x| b(x, t)));
    let reaction = p
        .reaction
        .as_ref()
        .map(|c| ScalarField::from_fn(grid, |x| c(x, t)));
    let f = ScalarField::from_fn(grid, |x| (p.forcing)(x, t));
    let g = extend_boundary_data(case, r, cps, t, eps, opts)?;
    Ok(ProblemFields {
        beta,
        advection,
        reaction,
        f,
        g,
    })
}

fn reference(
    case: &CaseSpec,
    r: &LevelSetField,
    g: &ScalarField,
    t: f64,
) -> Result<(ScalarField, ScalarField)> {
    let grid = *r.grid();
    let exact = case.problem.exact.as_ref().ok_or_else(|| {
        DdmError::InvalidParameter(format!("case {} has no exact solution", case.id))
    })?;
    let u_exact = ScalarField::from_fn(grid, |x| exact(x, t));
    let rv = r.r.values();
    let u_ref = ScalarField::new(
        grid,
        (0..grid.len())
            .map(|i| if rv[i] <= 0.0 { u_exact[i] } else { g[i] })
            .collect(),
    )?;
    Ok((u_ref, u_exact))
}

/// Relative errors `|phi (u_ref - u)|_2 / |phi u_ref|_2` and `max_D |u_ref - u| / max_D |u_ref|`.
fn relative_errors(
    u: &ScalarField,
    u_ref: &ScalarField,
    phi: &ScalarField,
    r: &LevelSetField,
) -> Result<(f64, f64)> {
    let diff = u.zip_with(u_ref, |a, b| b - a)?;
    let e2 = norm_l2_weighted(phi, &diff)? / norm_l2_weighted(phi, u_ref)?;
    let rv = r.r.values();
    let inside = |i: usize| rv[i] <= 0.0;
    let einf = norm_linf_masked(inside, &diff)? / norm_linf_masked(inside, u_ref)?;
    Ok((e2, einf))
}

pub fn solve_elliptic_at(
    case: &CaseSpec,
    scheme: SchemeKind,
    eps: f64,
    h: f64,
    opts: &RunOptions,
) -> Result<RunOutcome> {
    let ctx = || format!("case {} scheme {scheme} eps {eps}", case.id);
    inner_elliptic(case, scheme, eps, h, opts).map_err(|e| e.context(ctx()))
}

fn inner_elliptic(
    case: &CaseSpec,
    scheme: SchemeKind,
    eps: f64,
    h: f64,
    opts: &RunOptions,
) -> Result<RunOutcome> {
    if case.is_time_dependent() {
        return Err(DdmError::InvalidParameter(
            "time-dependent case passed to the elliptic driver".into(),
        ));
    }
    case.problem.check_invariants(eps)?;
    let grid = make_grid(case, h)?;
    let r = analytic_seed(&case.problem.shape, &grid, opts.reinit_band * eps)?;
    let geom = Geometry::from_level_set(&r, eps, &geometry_options(case, opts))?;
    let fields = sample_fields(case, &r, &closest_points(&r), 0.0, eps, opts)?;
    let op = assemble_poisson(&fields, scheme, &geom)?;
    let (u, report) = solve(&op, &opts.mg, &fields.g)?;
    let (u_ref, u_exact) = reference(case, &r, &fields.g, 0.0)?;
    let (e2, einf) = relative_errors(&u, &u_ref, &geom.phi, &r)?;
    Ok(RunOutcome {
        eps,
        h: grid.spacing(),
        dt: None,
        steps: 0,
        t: 0.0,
        e2,
        einf,
        iterations: report.iterations,
        residual: report.final_residual,
        u,
        u_ref,
        u_exact,
        level_set: r,
        phi: geom.phi,
    })
}

/// Whether the operator coefficients of two samplings agree exactly.
fn same_coefficients(a: &ProblemFields, b: &ProblemFields) -> bool {
    a.beta == b.beta && a.advection == b.advection && a.reaction == b.reaction
}

fn velocity_at(motion: &Motion, grid: GridSpec, t: f64) -> Option<Velocity> {
    match motion {
        Motion::Stationary => None,
        Motion::NormalSpeed(s) => Some(Velocity::Normal(ScalarField::from_fn(grid, |x| s(x, t)))),
        Motion::Velocity(v) => Some(Velocity::Vector(VectorField::from_fn(grid, |x| v(x, t)))),
    }
}

/// Moves the level set from `t` to `t + dt` in CFL-limited substeps and
/// reinitializes it when its slope has drifted.
pub fn advance_level_set(
    case: &CaseSpec,
    r: &LevelSetField,
    t: f64,
    dt: f64,
    opts: &RunOptions,
) -> Result<LevelSetField> {
    let grid = *r.grid();
    let motion = &case.problem.motion;
    let (Some(v0), Some(v1)) = (
        velocity_at(motion, grid, t),
        velocity_at(motion, grid, t + dt),
    ) else {
        return Ok(r.clone());
    };
    let vmax = v0.max_speed().max(v1.max_speed());
    let sub = ((dt * vmax / (0.9 * CFL_LIMIT * grid.spacing())).ceil() as usize).max(1);
    let ds = dt / sub as f64;
    let mut cur = r.clone();
    let mut va = v0;
    for k in 0..sub {
        let tb = t + (k + 1) as f64 * ds;
        let vb = if k + 1 == sub {
            v1.clone()
        } else {
            velocity_at(motion, grid, tb).expect("moving")
        };
        cur = advect_with(&cur, &va, &vb, ds)?;
        va = vb;
    }
    if needs_reinit(&cur) {
        cur = reinitialize(&cur, opts.reinit_steps);
    }
    Ok(cur)
}

/// Marches from 0 to `t_end`; `observer` sees the solution after every step
/// (and at t = 0).
#[allow(clippy::too_many_arguments)]
pub fn solve_parabolic_at(
    case: &CaseSpec,
    scheme: SchemeKind,
    eps: f64,
    h: f64,
    dt: f64,
    t_end: f64,
    opts: &RunOptions,
    observer: &mut dyn FnMut(f64, &ScalarField, &LevelSetField) -> Result<()>,
) -> Result<RunOutcome> {
    let ctx = || format!("case {} scheme {scheme} eps {eps}", case.id);
    inner_parabolic(case, scheme, eps, h, dt, t_end, opts, observer).map_err(|e| e.context(ctx()))
}

#[allow(clippy::too_many_arguments)]
fn inner_parabolic(
    case: &CaseSpec,
    scheme: SchemeKind,
    eps: f64,
    h: f64,
    dt: f64,
    t_end: f64,
    opts: &RunOptions,
    observer: &mut dyn FnMut(f64, &ScalarField, &LevelSetField) -> Result<()>,
) -> Result<RunOutcome> {
    if !(dt > 0.0) || !(t_end > 0.0) {
        return Err(DdmError::InvalidParameter(format!(
            "dt = {dt} and t_end = {t_end} must be positive"
        )));
    }
    case.problem.check_invariants(eps)?;
    let grid = make_grid(case, h)?;
    let steps = ((t_end / dt).round() as usize).max(1);
    let dt = t_end / steps as f64;
    let gopts = geometry_options(case, opts);
    let moving = !matches!(case.problem.motion, Motion::Stationary);

    let mut r = analytic_seed(&case.problem.shape, &grid, opts.reinit_band * eps)?;
    let mut geom = Geometry::from_level_set(&r, eps, &gopts)?;
    let cps = closest_points(&r);
    let mut fields = sample_fields(case, &r, &cps, 0.0, eps, opts)?;
    let mut level = SpatialLevel::new(scheme, &geom, &fields)?;
    let initial = case
        .problem
        .initial
        .as_ref()
        .or(case.problem.exact.as_ref())
        .ok_or_else(|| {
            DdmError::InvalidParameter(format!(
                "case {} has neither an initial condition nor an exact solution",
                case.id
            ))
        })?;
    let rv = r.r.values();
    let mut u = ScalarField::new(
        grid,
        (0..grid.len())
            .map(|i| {
                if rv[i] <= 0.0 {
                    initial(grid.point(i), 0.0)
                } else {
                    initial(cps[i], 0.0)
                }
            })
            .collect(),
    )?;
    observer(0.0, &u, &r)?;

    let mut iterations = 0;
    let mut residual: f64 = 0.0;
    for n in 0..steps {
        let t = n as f64 * dt;
        let t_new = (n + 1) as f64 * dt;
        let step = || format!("step {} (t = {t_new:.6})", n + 1);
        if moving {
            let r_new = advance_level_set(case, &r, t, dt, opts).map_err(|e| e.context(step()))?;
            let geom_new = Geometry::from_level_set(&r_new, eps, &gopts)?;
            let cps_new = closest_points(&r_new);
            let fields_new = sample_fields(case, &r_new, &cps_new, t_new, eps, opts)
                .map_err(|e| e.context(step()))?;
            let level_new = SpatialLevel::new(scheme, &geom_new, &fields_new)?;
            let op = assemble_heat_step_from(
                &level,
                &level_new,
                &fields,
                &fields_new,
                scheme,
                &geom,
                &geom_new,
                &u,
                dt,
            )?;
            let (u_new, report) = solve(&op, &opts.mg, &u).map_err(|e| e.context(step()))?;
            iterations = iterations.max(report.iterations);
            residual = residual.max(report.final_residual);
            (u, r, geom, fields, level) = (u_new, r_new, geom_new, fields_new, level_new);
        } else {
            let fields_new =
                sample_fields(case, &r, &cps, t_new, eps, opts).map_err(|e| e.context(step()))?;
            let rebuilt = match same_coefficients(&fields, &fields_new) {
                true => None,
                false => Some(SpatialLevel::new(scheme, &geom, &fields_new)?),
            };
            let level_new = rebuilt.as_ref().unwrap_or(&level);
            let op = assemble_heat_step_from(
                &level,
                level_new,
                &fields,
                &fields_new,
                scheme,
                &geom,
                &geom,
                &u,
                dt,
            )?;
            let (u_new, report) = solve(&op, &opts.mg, &u).map_err(|e| e.context(step()))?;
            iterations = iterations.max(report.iterations);
            residual = residual.max(report.final_residual);
            (u, fields) = (u_new, fields_new);
            if let Some(l) = rebuilt {
                level = l;
            }
        }
        observer(t_new, &u, &r)?;
    }
    let (u_ref, u_exact) = reference(case, &r, &fields.g, t_end)?;
    let (e2, einf) = relative_errors(&u, &u_ref, &geom.phi, &r)?;
    Ok(RunOutcome {
        eps,
        h: grid.spacing(),
        dt: Some(dt),
        steps,
        t: t_end,
        e2,
        einf,
        iterations,
        residual,
        u,
        u_ref,
        u_exact,
        level_set: r,
        phi: geom.phi,
    })
}

fn table_from(
    case: &CaseSpec,
    scheme: SchemeKind,
    outcomes: &[RunOutcome],
    opts_rule: super::cases::HRule,
) -> ConvergenceTable {
    let data: Vec<_> = outcomes
        .iter()
        .map(|o| (o.eps, o.e2, o.einf, o.iterations, o.residual))
        .collect();
    ConvergenceTable::from_errors(&case.id, scheme, opts_rule, &data)
}

pub fn run_elliptic(case: &CaseSpec, scheme: SchemeKind) -> Result<ConvergenceTable> {
    run_elliptic_with(case, scheme, &RunOptions::default())
}

pub fn run_elliptic_with(
    case: &CaseSpec,
    scheme: SchemeKind,
    opts: &RunOptions,
) -> Result<ConvergenceTable> {
    case.validate()?;
    let rule = case.h_rule_for(scheme);
    let outcomes = case
        .eps_schedule
        .par_iter()
        .map(|&eps| solve_elliptic_at(case, scheme, eps, rule.h(eps), opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(table_from(case, scheme, &outcomes, rule))
}

pub fn run_parabolic(case: &CaseSpec, scheme: SchemeKind) -> Result<ConvergenceTable> {
    run_parabolic_with(case, scheme, &RunOptions::default())
}

pub fn run_parabolic_with(
    case: &CaseSpec,
    scheme: SchemeKind,
    opts: &RunOptions,
) -> Result<ConvergenceTable> {
    case.validate()?;
    let time = case.time.ok_or_else(|| {
        DdmError::InvalidParameter(format!("case {} is not time-dependent", case.id))
    })?;
    let rule = case.h_rule_for(scheme);
    let outcomes = case
        .eps_schedule
        .par_iter()
        .map(|&eps| {
            let h = rule.h(eps);
            solve_parabolic_at(
                case,
                scheme,
                eps,
                h,
                time.dt.dt(eps, h),
                time.t_end,
                opts,
                &mut |_, _, _| Ok(()),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(table_from(case, scheme, &outcomes, rule))
}
