//! Signed-distance geometry: phase field, normals, Hamilton-Jacobi
//! advection and reinitialization (WENO5 + TVD-RK2), constant-normal
//! extension of data, and exact seeds for the built-in shapes.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{DdmError, Result};
use crate::grid::{centered_gradient, same_grid, GridSpec, ScalarField, VectorField};

pub const DEFAULT_TAU: f64 = 1e-15;
pub const REINIT_THRESHOLD: f64 = 0.01;
pub const REINIT_RESIDUAL: f64 = 1e-3;
pub const WENO_EPS: f64 = 1e-6;
pub const CFL_LIMIT: f64 = 0.5;
const STAR_SAMPLES: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetField {
    pub r: ScalarField,
    /// Width around the zero set where `|grad r| = 1` is checked and restored.
    pub band_width: f64,
}

impl LevelSetField {
    pub fn new(r: ScalarField, band_width: f64) -> Self {
        LevelSetField { r, band_width }
    }
    pub fn grid(&self) -> &GridSpec {
        self.r.grid()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseField {
    pub phi: ScalarField,
    pub eps: f64,
}

pub fn phase_value(r: f64, eps: f64) -> f64 {
    0.5 * (1.0 - (3.0 * r / eps).tanh())
}

pub fn phase_from_distance(r: &LevelSetField, eps: f64) -> Result<PhaseField> {
    if !(eps > 0.0) {
        return Err(DdmError::InvalidParameter(format!(
            "eps = {eps} must be positive"
        )));
    }
    Ok(PhaseField {
        phi: r.r.map(|v| phase_value(v, eps)),
        eps,
    })
}

/// `tau + (1 - tau) |grad phi|` with centered differences.
pub fn regularized_grad_mag(phi: &PhaseField, tau: f64) -> ScalarField {
    let mag = centered_gradient(&phi.phi).magnitude();
    mag.map(|m| tau + (1.0 - tau) * m)
}

/// Closed-form `|grad phi| = 6 phi (1 - phi) / eps` for an exact distance function.
pub fn analytic_grad_mag(phi: &PhaseField, tau: f64) -> ScalarField {
    let eps = phi.eps;
    phi.phi
        .map(|p| tau + (1.0 - tau) * 6.0 * p * (1.0 - p) / eps)
}

/// `-grad phi / |grad phi|` where `r <= 0`, zero outside D.
pub fn masked_normal(phi: &PhaseField, r: &LevelSetField) -> Result<VectorField> {
    normal_field(phi, r, DEFAULT_TAU, true)
}

/// Unit normal from the phase field; vanishes where `|grad phi| <= tau`
/// and, when `mask` is set, wherever `r > 0`.
pub fn normal_field(
    phi: &PhaseField,
    r: &LevelSetField,
    tau: f64,
    mask: bool,
) -> Result<VectorField> {
    same_grid(phi.phi.grid(), r.grid())?;
    let grad = centered_gradient(&phi.phi);
    let g = *phi.phi.grid();
    let mut out = VectorField::zeros(g);
    for idx in 0..g.len() {
        if mask && r.r[idx] > 0.0 {
            continue;
        }
        let v = grad.at(idx);
        let m = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if m > tau {
            for a in 0..g.dim() {
                out.component_mut(a)[idx] = -v[a] / m;
            }
        }
    }
    Ok(out)
}

/// Smoothed sign function of width `h`.
pub fn sgn_h(r: f64, h: f64) -> f64 {
    if r < -h {
        -1.0
    } else if r > h {
        1.0
    } else {
        r / h + (PI * r / h).sin() / PI
    }
}

fn weno5(v1: f64, v2: f64, v3: f64, v4: f64, v5: f64) -> f64 {
    let p1 = v1 / 3.0 - 7.0 * v2 / 6.0 + 11.0 * v3 / 6.0;
    let p2 = -v2 / 6.0 + 5.0 * v3 / 6.0 + v4 / 3.0;
    let p3 = v3 / 3.0 + 5.0 * v4 / 6.0 - v5 / 6.0;
    let s1 = 13.0 / 12.0 * (v1 - 2.0 * v2 + v3).powi(2) + 0.25 * (v1 - 4.0 * v2 + 3.0 * v3).powi(2);
    let s2 = 13.0 / 12.0 * (v2 - 2.0 * v3 + v4).powi(2) + 0.25 * (v2 - v4).powi(2);
    let s3 = 13.0 / 12.0 * (v3 - 2.0 * v4 + v5).powi(2) + 0.25 * (3.0 * v3 - 4.0 * v4 + v5).powi(2);
    let a1 = 0.1 / (WENO_EPS + s1).powi(2);
    let a2 = 0.6 / (WENO_EPS + s2).powi(2);
    let a3 = 0.3 / (WENO_EPS + s3).powi(2);
    (a1 * p1 + a2 * p2 + a3 * p3) / (a1 + a2 + a3)
}

/// Values at offsets -3..=3 along `axis`, linearly extrapolated past the box.
fn line7(v: &[f64], g: &GridSpec, idx: usize, i: usize, axis: usize) -> [f64; 7] {
    let s = g.stride(axis) as isize;
    let n = g.n(axis) as isize;
    let i = i as isize;
    let at = |k: isize| v[(idx as isize + (k - i) * s) as usize];
    let mut out = [0.0; 7];
    for (slot, off) in (-3isize..=3).enumerate() {
        let k = i + off;
        out[slot] = if k < 0 {
            at(0) + k as f64 * (at(1) - at(0))
        } else if k >= n {
            at(n - 1) + (k - n + 1) as f64 * (at(n - 1) - at(n - 2))
        } else {
            at(k)
        };
    }
    out
}

/// WENO5 one-sided derivatives `(D-, D+)` at a node along an axis.
pub fn weno_derivatives(v: &[f64], g: &GridSpec, idx: usize, axis: usize) -> (f64, f64) {
    let i = g.unravel(idx)[axis];
    let w = line7(v, g, idx, i, axis);
    let h = g.h(axis);
    let d: [f64; 6] = std::array::from_fn(|k| (w[k + 1] - w[k]) / h);
    (
        weno5(d[0], d[1], d[2], d[3], d[4]),
        weno5(d[5], d[4], d[3], d[2], d[1]),
    )
}

/// Godunov upwind `|grad r|` for a front moving with the sign of `s`.
fn godunov_norm(v: &[f64], g: &GridSpec, idx: usize, s: f64) -> f64 {
    let mut acc = 0.0;
    for a in 0..g.dim() {
        let (dm, dp) = weno_derivatives(v, g, idx, a);
        acc += if s >= 0.0 {
            dm.max(0.0).powi(2).max(dp.min(0.0).powi(2))
        } else {
            dm.min(0.0).powi(2).max(dp.max(0.0).powi(2))
        };
    }
    acc.sqrt()
}

#[derive(Debug, Clone)]
pub enum Velocity {
    /// Speed along the outward normal `grad r / |grad r|`.
    Normal(ScalarField),
    Vector(VectorField),
}

impl Velocity {
    fn grid(&self) -> &GridSpec {
        match self {
            Velocity::Normal(f) => f.grid(),
            Velocity::Vector(f) => f.grid(),
        }
    }

    pub fn max_speed(&self) -> f64 {
        match self {
            Velocity::Normal(f) => f.max_abs(),
            Velocity::Vector(f) => f.magnitude().max_abs(),
        }
    }

    fn rate(&self, r: &[f64], g: &GridSpec) -> Vec<f64> {
        (0..g.len())
            .into_par_iter()
            .map(|idx| match self {
                Velocity::Normal(f) => {
                    let vn = f[idx];
                    if vn == 0.0 {
                        return 0.0;
                    }
                    -vn * godunov_norm(r, g, idx, vn)
                }
                Velocity::Vector(f) => {
                    let mut acc = 0.0;
                    for a in 0..g.dim() {
                        let va = f.component(a)[idx];
                        if va == 0.0 {
                            continue;
                        }
                        let (dm, dp) = weno_derivatives(r, g, idx, a);
                        acc += va * if va > 0.0 { dm } else { dp };
                    }
                    -acc
                }
            })
            .collect()
    }
}

/// One TVD-RK2 step of `r_t + v |grad r| = 0` (or `r_t + v . grad r = 0`).
pub fn advect(r: &LevelSetField, v: &Velocity, dt: f64) -> Result<LevelSetField> {
    advect_with(r, v, v, dt)
}

/// As [`advect`], with the velocity sampled at the start and end of the step.
pub fn advect_with(
    r: &LevelSetField,
    v0: &Velocity,
    v1: &Velocity,
    dt: f64,
) -> Result<LevelSetField> {
    let g = *r.grid();
    same_grid(&g, v0.grid())?;
    same_grid(&g, v1.grid())?;
    if !(dt > 0.0) {
        return Err(DdmError::InvalidParameter(format!(
            "dt = {dt} must be positive"
        )));
    }
    let cfl = dt * v0.max_speed().max(v1.max_speed()) / g.spacing();
    if cfl > CFL_LIMIT {
        return Err(DdmError::Cfl {
            cfl,
            limit: CFL_LIMIT,
        });
    }
    let r0 = r.r.values();
    let k0 = v0.rate(r0, &g);
    let r1: Vec<f64> = r0.iter().zip(&k0).map(|(a, k)| a + dt * k).collect();
    let k1 = v1.rate(&r1, &g);
    let out: Vec<f64> = (0..g.len())
        .map(|i| 0.5 * r0[i] + 0.5 * (r1[i] + dt * k1[i]))
        .collect();
    Ok(LevelSetField {
        r: ScalarField::new(g, out)?,
        band_width: r.band_width,
    })
}

/// Largest deviation of the upwind slope magnitude from 1 within `band` of the zero set.
pub fn max_slope_defect(r: &LevelSetField, band: f64) -> f64 {
    let g = *r.grid();
    let v = r.r.values();
    (0..g.len())
        .filter(|&i| v[i].abs() <= band)
        .map(|i| (godunov_norm(v, &g, i, v[i]) - 1.0).abs())
        .fold(0.0, f64::max)
}

pub fn needs_reinit(r: &LevelSetField) -> bool {
    max_slope_defect(r, r.band_width) > REINIT_THRESHOLD
}

/// Pseudo-time relaxation of `r_t = sgn_h(r0)(1 - |grad r|)` with `dtau = h/2`,
/// stopping once the band residual drops below [`REINIT_RESIDUAL`].
pub fn reinitialize(r: &LevelSetField, pseudo_steps: usize) -> LevelSetField {
    let g = *r.grid();
    let h = g.spacing();
    let dtau = 0.5 * h;
    let sign: Vec<f64> = r.r.values().iter().map(|&v| sgn_h(v, h)).collect();
    let rate = |v: &[f64]| -> Vec<f64> {
        (0..g.len())
            .into_par_iter()
            .map(|i| sign[i] * (1.0 - godunov_norm(v, &g, i, sign[i])))
            .collect()
    };
    let mut cur = r.r.values().to_vec();
    for _ in 0..pseudo_steps.max(1) {
        let k0 = rate(&cur);
        let residual = (0..g.len())
            .filter(|&i| cur[i].abs() <= r.band_width)
            .map(|i| k0[i].abs())
            .fold(0.0, f64::max);
        if residual < REINIT_RESIDUAL {
            break;
        }
        let r1: Vec<f64> = cur.iter().zip(&k0).map(|(a, k)| a + dtau * k).collect();
        let k1 = rate(&r1);
        cur = (0..g.len())
            .map(|i| 0.5 * cur[i] + 0.5 * (r1[i] + dtau * k1[i]))
            .collect();
    }
    LevelSetField {
        r: ScalarField::new(g, cur).expect("same grid"),
        band_width: r.band_width,
    }
}

/// Extends `psi` off D so that it is constant along the normal within `band`
/// outside D. Values with `r <= 0` are kept.
pub fn extend_constant_normal(
    psi: &ScalarField,
    r: &LevelSetField,
    band: f64,
) -> Result<ScalarField> {
    let frozen: Vec<bool> = r.r.values().iter().map(|&v| v <= 0.0).collect();
    extend_constant_normal_frozen(psi, r, band, &frozen)
}

/// Steady state of `psi_t + sgn(r) n . grad psi = 0` (first-order upwind) on the
/// nodes with `|r| <= band` that are not `frozen`. Nodes are relaxed in order of
/// increasing `|r|`, so information flows away from the zero set on both sides.
pub fn extend_constant_normal_frozen(
    psi: &ScalarField,
    r: &LevelSetField,
    band: f64,
    frozen: &[bool],
) -> Result<ScalarField> {
    let g = *psi.grid();
    same_grid(&g, r.grid())?;
    if frozen.len() != g.len() {
        return Err(DdmError::InvalidParameter(
            "frozen mask length differs from grid".into(),
        ));
    }
    let rv = r.r.values();
    let h = g.spacing();
    let clearance = (0..g.len())
        .filter(|&i| rv[i].abs() <= h)
        .map(|i| g.distance_to_boundary(g.point(i)))
        .fold(f64::INFINITY, f64::min);
    if band > clearance {
        return Err(DdmError::InvalidParameter(format!(
            "extension band {band} exceeds distance {clearance:.4} from the zero set to the box"
        )));
    }
    let grad = centered_gradient(&r.r);
    let mut active: Vec<usize> = (0..g.len())
        .filter(|&i| !frozen[i] && rv[i].abs() <= band && !g.is_boundary(i))
        .collect();
    active.sort_by(|&a, &b| rv[a].abs().total_cmp(&rv[b].abs()).then(a.cmp(&b)));
    // Upwind neighbours and weights are fixed by the geometry.
    let stencils: Vec<Vec<(usize, f64)>> = active
        .iter()
        .map(|&i| {
            let n = grad.at(i);
            let m = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt().max(1e-300);
            let side = rv[i].signum();
            (0..g.dim())
                .filter_map(|a| {
                    let c = side * n[a] / m;
                    if c.abs() < 1e-14 {
                        None
                    } else if c > 0.0 {
                        Some((i - g.stride(a), c.abs()))
                    } else {
                        Some((i + g.stride(a), c.abs()))
                    }
                })
                .collect()
        })
        .collect();
    let mut out = psi.values().to_vec();
    let scale = out
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    for _sweep in 0..50 {
        let mut change = 0.0_f64;
        for (k, &i) in active.iter().enumerate() {
            let st = &stencils[k];
            if st.is_empty() {
                continue;
            }
            let wsum: f64 = st.iter().map(|s| s.1).sum();
            let new = st.iter().map(|&(j, w)| w * out[j]).sum::<f64>() / wsum;
            change = change.max((new - out[i]).abs());
            out[i] = new;
        }
        if change <= 1e-15 * scale {
            break;
        }
    }
    ScalarField::new(g, out)
}

/// Closest point on the zero set, `x - r grad r / |grad r|`, for every node.
pub fn closest_points(r: &LevelSetField) -> Vec<[f64; 3]> {
    let g = *r.grid();
    let grad = centered_gradient(&r.r);
    (0..g.len())
        .map(|i| {
            let p = g.point(i);
            let n = grad.at(i);
            let m = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            if m < 1e-12 {
                return p;
            }
            let d = r.r[i] / m;
            [p[0] - d * n[0], p[1] - d * n[1], p[2] - d * n[2]]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Interval {
        a: f64,
        b: f64,
    },
    /// Polar curve `rho(theta) = base + sum amp cos(freq theta)`.
    PolarStar {
        base: f64,
        modes: Vec<(f64, f64)>,
    },
    /// Torus with major radius `major`, minor radius `minor`, axis tilted by
    /// `tilt_deg` about the x axis.
    Torus {
        major: f64,
        minor: f64,
        tilt_deg: f64,
    },
}

impl Shape {
    pub fn star() -> Shape {
        Shape::PolarStar {
            base: 1.0,
            modes: vec![(0.1, 3.0), (0.02, 5.0)],
        }
    }

    pub fn torus() -> Shape {
        Shape::Torus {
            major: 0.6,
            minor: 0.3,
            tilt_deg: 135.0,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Shape::Interval { .. } => 1,
            Shape::PolarStar { .. } => 2,
            Shape::Torus { .. } => 3,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DdmError::InvalidParameter(m));
        match self {
            Shape::Interval { a, b } if !(b > a) => bad(format!("interval [{a}, {b}] is empty")),
            Shape::PolarStar { base, modes } => {
                let amp: f64 = modes.iter().map(|m| m.0.abs()).sum();
                if !(base - amp > 0.0) {
                    bad("polar curve radius is not positive".into())
                } else {
                    Ok(())
                }
            }
            Shape::Torus { major, minor, .. } if !(*minor > 0.0 && major > minor) => {
                bad(format!("torus radii ({major}, {minor}) are degenerate"))
            }
            _ => Ok(()),
        }
    }

    pub fn polar_radius(&self, theta: f64) -> f64 {
        match self {
            Shape::PolarStar { base, modes } => {
                base + modes
                    .iter()
                    .map(|(a, k)| a * (k * theta).cos())
                    .sum::<f64>()
            }
            _ => f64::NAN,
        }
    }

    fn polar_derivs(&self, theta: f64) -> (f64, f64, f64) {
        match self {
            Shape::PolarStar { base, modes } => {
                let mut r = *base;
                let mut d1 = 0.0;
                let mut d2 = 0.0;
                for (a, k) in modes {
                    r += a * (k * theta).cos();
                    d1 -= a * k * (k * theta).sin();
                    d2 -= a * k * k * (k * theta).cos();
                }
                (r, d1, d2)
            }
            _ => (f64::NAN, f64::NAN, f64::NAN),
        }
    }

    /// Exact signed distance (negative inside) at a point.
    pub fn signed_distance(&self, p: [f64; 3]) -> f64 {
        match self {
            Shape::Interval { a, b } => (a - p[0]).max(p[0] - b),
            Shape::PolarStar { .. } => self.star_distance(p[0], p[1]),
            Shape::Torus {
                major,
                minor,
                tilt_deg,
            } => {
                let t = tilt_deg.to_radians();
                let rx = p[0];
                let ry = p[1] * t.sin() + p[2] * t.cos();
                let rz = p[1] * t.cos() - p[2] * t.sin();
                ((major - (rx * rx + ry * ry).sqrt()).powi(2) + rz * rz).sqrt() - minor
            }
        }
    }

    fn star_samples(&self) -> Vec<(f64, f64, f64)> {
        (0..STAR_SAMPLES)
            .map(|k| {
                let th = 2.0 * PI * k as f64 / STAR_SAMPLES as f64;
                let rho = self.polar_radius(th);
                (th, rho * th.cos(), rho * th.sin())
            })
            .collect()
    }

    fn star_distance(&self, x: f64, y: f64) -> f64 {
        self.star_distance_sampled(x, y, &self.star_samples())
    }

    fn star_distance_sampled(&self, x: f64, y: f64, samples: &[(f64, f64, f64)]) -> f64 {
        let mut best = (0.0, f64::INFINITY);
        for &(th, sx, sy) in samples {
            let d = (x - sx).powi(2) + (y - sy).powi(2);
            if d < best.1 {
                best = (th, d);
            }
        }
        let d2 = |th: f64| {
            let rho = self.polar_radius(th);
            (x - rho * th.cos()).powi(2) + (y - rho * th.sin()).powi(2)
        };
        // Golden-section refinement between the neighbouring samples.
        let dth = 2.0 * PI / STAR_SAMPLES as f64;
        let (mut lo, mut hi) = (best.0 - dth, best.0 + dth);
        let ratio = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = hi - ratio * (hi - lo);
        let mut d = lo + ratio * (hi - lo);
        let (mut fc, mut fd) = (d2(c), d2(d));
        while hi - lo > 1e-13 {
            if fc < fd {
                hi = d;
                d = c;
                fd = fc;
                c = hi - ratio * (hi - lo);
                fc = d2(c);
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + ratio * (hi - lo);
                fd = d2(d);
            }
        }
        let dist = fc.min(fd).min(best.1).sqrt();
        if (x * x + y * y).sqrt() < self.polar_radius(y.atan2(x)) {
            -dist
        } else {
            dist
        }
    }

    /// Largest principal curvature magnitude of the boundary.
    pub fn max_curvature(&self) -> f64 {
        match self {
            Shape::Interval { .. } => 0.0,
            Shape::PolarStar { .. } => (0..4096)
                .map(|k| {
                    let th = 2.0 * PI * k as f64 / 4096.0;
                    let (r, d1, d2) = self.polar_derivs(th);
                    ((r * r + 2.0 * d1 * d1 - r * d2) / (r * r + d1 * d1).powf(1.5)).abs()
                })
                .fold(0.0, f64::max),
            Shape::Torus { major, minor, .. } => (1.0 / minor).max(1.0 / (major - minor)),
        }
    }

    /// Boundary points sampled uniformly in the shape's parameters.
    pub fn boundary_samples(&self) -> Vec<[f64; 3]> {
        match self {
            Shape::Interval { a, b } => vec![[*a, 0.0, 0.0], [*b, 0.0, 0.0]],
            Shape::PolarStar { .. } => (0..2048)
                .map(|k| {
                    let th = 2.0 * PI * k as f64 / 2048.0;
                    let rho = self.polar_radius(th);
                    [rho * th.cos(), rho * th.sin(), 0.0]
                })
                .collect(),
            Shape::Torus {
                major,
                minor,
                tilt_deg,
            } => {
                let t = tilt_deg.to_radians();
                let mut pts = Vec::new();
                for i in 0..128 {
                    for j in 0..64 {
                        let u = 2.0 * PI * i as f64 / 128.0;
                        let w = 2.0 * PI * j as f64 / 64.0;
                        let rx = (major + minor * w.cos()) * u.cos();
                        let ry = (major + minor * w.cos()) * u.sin();
                        let rz = minor * w.sin();
                        // Invert the rotation used in `signed_distance`.
                        let y = ry * t.sin() + rz * t.cos();
                        let z = ry * t.cos() - rz * t.sin();
                        pts.push([rx, y, z]);
                    }
                }
                pts
            }
        }
    }
}

/// Signed distance to `shape` sampled on `grid`.
pub fn analytic_seed(shape: &Shape, grid: &GridSpec, band_width: f64) -> Result<LevelSetField> {
    shape.validate()?;
    if shape.dim() != grid.dim() {
        return Err(DdmError::InvalidParameter(format!(
            "{}-dimensional shape on a {}-dimensional grid",
            shape.dim(),
            grid.dim()
        )));
    }
    let r = match shape {
        Shape::PolarStar { .. } => {
            let samples = shape.star_samples();
            ScalarField::from_fn(*grid, |p| shape.star_distance_sampled(p[0], p[1], &samples))
        }
        _ => ScalarField::from_fn(*grid, |p| shape.signed_distance(p)),
    };
    let ls = LevelSetField::new(r, band_width);
    if matches!(shape, Shape::PolarStar { .. }) && needs_reinit(&ls) {
        return Ok(reinitialize(&ls, 200));
    }
    Ok(ls)
}
