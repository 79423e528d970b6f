//! Diffuse-domain operators.
//!
//! Every scheme is expressed through pointwise coefficients of
//!
//! ```text
//! A u = m u + s * [ D(u) + phi b.grad u + phi c u - w (u - r n.grad u) ]
//! ```
//!
//! where `D` is either `div(phi beta grad u)` or `phi div(beta grad u)`, `w`
//! is the penalty weight of the family and the `r n.grad u` term is present
//! only for the modified families. Box-boundary rows are Dirichlet.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{DdmError, Result};
use crate::grid::{same_grid, GridSpec, ScalarField, VectorField};
use crate::levelset::{
    analytic_grad_mag, normal_field, phase_from_distance, regularized_grad_mag, LevelSetField,
    Shape, DEFAULT_TAU,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Ddm1,
    Ddm2,
    Ddm3,
    MDdm1,
    MDdm2,
    MDdm3,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Ddm1,
        Family::Ddm2,
        Family::Ddm3,
        Family::MDdm1,
        Family::MDdm2,
        Family::MDdm3,
    ];

    pub fn is_modified(self) -> bool {
        matches!(self, Family::MDdm1 | Family::MDdm2 | Family::MDdm3)
    }

    /// 1, 2 or 3: which penalty/diffusion pairing the family uses.
    pub fn variant(self) -> u8 {
        match self {
            Family::Ddm1 | Family::MDdm1 => 1,
            Family::Ddm2 | Family::MDdm2 => 2,
            Family::Ddm3 | Family::MDdm3 => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SchemeKind {
    pub family: Family,
    pub time_dependent: bool,
}

impl SchemeKind {
    pub fn new(family: Family) -> Self {
        SchemeKind {
            family,
            time_dependent: false,
        }
    }
    pub fn time_dependent(family: Family) -> Self {
        SchemeKind {
            family,
            time_dependent: true,
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = if self.family.is_modified() { "m" } else { "" };
        let t = if self.time_dependent { "t" } else { "" };
        write!(f, "{m}ddm{t}{}", self.family.variant())
    }
}

impl FromStr for SchemeKind {
    type Err = DdmError;
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        let unknown = || DdmError::Unknown {
            kind: "scheme",
            name: s.to_owned(),
        };
        let (modified, rest) = match lower.strip_prefix('m') {
            Some(r) => (true, r),
            None => (false, lower.as_str()),
        };
        let rest = rest.strip_prefix("ddm").ok_or_else(unknown)?;
        let (time_dependent, digit) = match rest.strip_prefix('t') {
            Some(d) => (true, d),
            None => (false, rest),
        };
        let family = match (modified, digit) {
            (false, "1") => Family::Ddm1,
            (false, "2") => Family::Ddm2,
            (false, "3") => Family::Ddm3,
            (true, "1") => Family::MDdm1,
            (true, "2") => Family::MDdm2,
            (true, "3") => Family::MDdm3,
            _ => return Err(unknown()),
        };
        Ok(SchemeKind {
            family,
            time_dependent,
        })
    }
}

pub type ScalarFn = Arc<dyn Fn([f64; 3], f64) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn([f64; 3], f64) -> [f64; 3] + Send + Sync>;

pub fn scalar_fn(f: impl Fn([f64; 3], f64) -> f64 + Send + Sync + 'static) -> ScalarFn {
    Arc::new(f)
}

pub fn vector_fn(f: impl Fn([f64; 3], f64) -> [f64; 3] + Send + Sync + 'static) -> VectorFn {
    Arc::new(f)
}

#[derive(Clone)]
pub enum Motion {
    Stationary,
    /// Speed along the outward normal.
    NormalSpeed(ScalarFn),
    Velocity(VectorFn),
}

/// Bounds checked before any run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvariantLimits {
    /// Minimum distance from the domain to the box, in units of eps.
    pub min_buffer: f64,
    /// Upper bound on `eps * max |curvature|`.
    pub max_eps_curvature: f64,
}

impl Default for InvariantLimits {
    fn default() -> Self {
        InvariantLimits {
            min_buffer: 10.0,
            max_eps_curvature: 0.3,
        }
    }
}

/// One experiment. The target problem in D is
/// `div(beta grad u) + b.grad u + c u = f` (elliptic) or
/// `u_t = div(beta grad u) + b.grad u + c u + f` (parabolic), `u = g` on the boundary.
#[derive(Clone)]
pub struct ProblemSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub shape: Shape,
    pub motion: Motion,
    pub beta: Option<ScalarFn>,
    pub advection: Option<VectorFn>,
    pub reaction: Option<ScalarFn>,
    pub forcing: ScalarFn,
    /// Boundary data; only its values on the boundary of D are used.
    pub boundary: ScalarFn,
    pub exact: Option<ScalarFn>,
    pub initial: Option<ScalarFn>,
    pub limits: InvariantLimits,
}

impl ProblemSpec {
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Checks eps against the geometry of the initial domain.
    pub fn check_invariants(&self, eps: f64) -> Result<()> {
        if !(eps > 0.0) {
            return Err(DdmError::Invariant(format!("eps = {eps} must be positive")));
        }
        let buffer = self
            .shape
            .boundary_samples()
            .iter()
            .map(|p| {
                (0..self.dim())
                    .map(|a| (p[a] - self.lo[a]).min(self.hi[a] - p[a]))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min);
        if buffer < self.limits.min_buffer * eps {
            return Err(DdmError::Invariant(format!(
                "distance {buffer:.4} from D to the box is below {} eps = {:.4}",
                self.limits.min_buffer,
                self.limits.min_buffer * eps
            )));
        }
        let k = eps * self.shape.max_curvature();
        if k >= self.limits.max_eps_curvature {
            return Err(DdmError::Invariant(format!(
                "eps * max curvature = {k:.4} is not below {}",
                self.limits.max_eps_curvature
            )));
        }
        Ok(())
    }
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("lo", &self.lo)
            .field("hi", &self.hi)
            .field("shape", &self.shape)
            .finish_non_exhaustive()
    }
}

/// Problem data sampled on a grid; `f` and `g` already extended off D.
#[derive(Debug, Clone)]
pub struct ProblemFields {
    pub beta: ScalarField,
    pub advection: Option<VectorField>,
    pub reaction: Option<ScalarField>,
    pub f: ScalarField,
    pub g: ScalarField,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryOptions {
    pub tau: f64,
    /// Zero the normal outside D.
    pub mask_normal: bool,
    /// Use `6 phi (1 - phi) / eps` instead of the differenced `|grad phi|`.
    pub analytic_grad: bool,
}

impl Default for GeometryOptions {
    fn default() -> Self {
        GeometryOptions {
            tau: DEFAULT_TAU,
            mask_normal: true,
            analytic_grad: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Geometry {
    pub r: ScalarField,
    pub phi: ScalarField,
    pub grad_phi: ScalarField,
    pub normal: VectorField,
    pub eps: f64,
}

impl Geometry {
    pub fn from_level_set(r: &LevelSetField, eps: f64, opts: &GeometryOptions) -> Result<Geometry> {
        let phase = phase_from_distance(r, eps)?;
        let grad_phi = if opts.analytic_grad {
            analytic_grad_mag(&phase, opts.tau)
        } else {
            regularized_grad_mag(&phase, opts.tau)
        };
        let normal = normal_field(&phase, r, opts.tau, opts.mask_normal)?;
        Ok(Geometry {
            r: r.r.clone(),
            phi: phase.phi,
            grad_phi,
            normal,
            eps,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        self.r.grid()
    }

    /// Penalty weight of `family` at every node.
    pub fn penalty(&self, family: Family) -> Vec<f64> {
        let e = self.eps;
        match family.variant() {
            1 => self
                .phi
                .values()
                .iter()
                .map(|p| (1.0 - p) / (e * e * e))
                .collect(),
            2 => self
                .phi
                .values()
                .iter()
                .map(|p| (1.0 - p) / (e * e))
                .collect(),
            _ => self.grad_phi.values().iter().map(|w| w / (e * e)).collect(),
        }
    }
}

/// Pointwise coefficients of an operator.
#[derive(Debug, Clone)]
pub struct OperatorCoefficients {
    grid: GridSpec,
    conservative: bool,
    /// Diffusion coefficient on the face between node `i` and `i + stride(a)`, per axis.
    faces: Vec<Vec<f64>>,
    outer: Option<Vec<f64>>,
    advection: Option<Vec<Vec<f64>>>,
    reaction: Option<Vec<f64>>,
    penalty: Vec<f64>,
    correction: Option<Vec<Vec<f64>>>,
    mass: Option<Vec<f64>>,
    sigma: f64,
}

impl OperatorCoefficients {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    fn spatial(scheme: SchemeKind, geom: &Geometry, fields: &ProblemFields) -> Result<Self> {
        let g = *geom.grid();
        for f in [&fields.beta, &fields.f, &fields.g] {
            same_grid(&g, f.grid())?;
        }
        let family = scheme.family;
        let phi = geom.phi.values();
        let beta = fields.beta.values();
        let (conservative, kappa, outer) = if family.variant() == 2 {
            (false, beta.to_vec(), Some(phi.to_vec()))
        } else {
            (
                true,
                phi.iter().zip(beta).map(|(p, b)| p * b).collect(),
                None,
            )
        };
        let advection = match &fields.advection {
            Some(b) => {
                same_grid(&g, b.grid())?;
                Some(
                    (0..g.dim())
                        .map(|a| b.component(a).iter().zip(phi).map(|(v, p)| v * p).collect())
                        .collect(),
                )
            }
            None => None,
        };
        let reaction = match &fields.reaction {
            Some(c) => {
                same_grid(&g, c.grid())?;
                Some(c.values().iter().zip(phi).map(|(v, p)| v * p).collect())
            }
            None => None,
        };
        let penalty = geom.penalty(family);
        let correction = family.is_modified().then(|| {
            (0..g.dim())
                .map(|a| {
                    let n = geom.normal.component(a);
                    let r = geom.r.values();
                    (0..g.len()).map(|i| penalty[i] * r[i] * n[i]).collect()
                })
                .collect()
        });
        Ok(OperatorCoefficients {
            grid: g,
            conservative,
            faces: face_average(&g, &kappa),
            outer,
            advection,
            reaction,
            penalty,
            correction,
            mass: None,
            sigma: 1.0,
        })
    }

    /// Full-weighting average onto a grid that shares every other node, with
    /// box-boundary nodes injected.
    pub fn restrict(&self, coarse: &GridSpec) -> Result<Self> {
        let f = &self.grid;
        let dim = f.dim();
        for a in 0..dim {
            if 2 * (coarse.n(a) - 1) != f.n(a) - 1 {
                return Err(DdmError::GridMismatch);
            }
        }
        let span = |a: usize| if a < dim { -1i64..=1 } else { 0..=0 };
        let stencils: Vec<Vec<(usize, f64)>> = (0..coarse.len())
            .map(|i| {
                let c = coarse.unravel(i);
                let base = f.index([
                    2 * c[0],
                    if dim > 1 { 2 * c[1] } else { 0 },
                    if dim > 2 { 2 * c[2] } else { 0 },
                ]);
                if coarse.is_boundary(i) {
                    return vec![(base, 1.0)];
                }
                let mut taps = Vec::with_capacity(27);
                for d0 in span(0) {
                    for d1 in span(1) {
                        for d2 in span(2) {
                            let w = [d0, d1, d2]
                                .iter()
                                .take(dim)
                                .map(|&d| if d == 0 { 0.5 } else { 0.25 })
                                .product::<f64>();
                            let off = d0 * f.stride(0) as i64
                                + d1 * f.stride(1) as i64
                                + d2 * f.stride(2) as i64;
                            taps.push(((base as i64 + off) as usize, w));
                        }
                    }
                }
                taps
            })
            .collect();
        let pick = |v: &Vec<f64>| -> Vec<f64> {
            stencils
                .par_iter()
                .map(|taps| taps.iter().map(|&(j, w)| w * v[j]).sum())
                .collect()
        };
        let pick_vec = |v: &Vec<Vec<f64>>| -> Vec<Vec<f64>> { v.iter().map(pick).collect() };
        Ok(OperatorCoefficients {
            grid: *coarse,
            conservative: self.conservative,
            faces: restrict_faces(f, coarse, &self.faces),
            outer: self.outer.as_ref().map(pick),
            advection: self.advection.as_ref().map(pick_vec),
            reaction: self.reaction.as_ref().map(pick),
            penalty: pick(&self.penalty),
            correction: self.correction.as_ref().map(pick_vec),
            mass: self.mass.as_ref().map(pick),
            sigma: self.sigma,
        })
    }

    fn row(&self, idx: usize) -> (f64, [f64; 6]) {
        let g = &self.grid;
        let mut off = [0.0; 6];
        let mut diag = 0.0;
        let outer = self.outer.as_ref().map_or(1.0, |o| o[idx]);
        for a in 0..g.dim() {
            let s = g.stride(a);
            let h = g.h(a);
            let kp = self.faces[a][idx];
            let km = self.faces[a][idx - s];
            let (mut lo, mut hi) = (outer * km / (h * h), outer * kp / (h * h));
            diag -= lo + hi;
            let mut conv = 0.0;
            if let Some(b) = &self.advection {
                conv += b[a][idx];
            }
            if let Some(c) = &self.correction {
                conv += c[a][idx];
            }
            lo -= conv / (2.0 * h);
            hi += conv / (2.0 * h);
            off[2 * a] = lo;
            off[2 * a + 1] = hi;
        }
        if let Some(c) = &self.reaction {
            diag += c[idx];
        }
        diag -= self.penalty[idx];
        for o in off.iter_mut() {
            *o *= self.sigma;
        }
        diag *= self.sigma;
        if let Some(m) = &self.mass {
            diag += m[idx];
        }
        (diag, off)
    }
}

fn face_average(g: &GridSpec, kappa: &[f64]) -> Vec<Vec<f64>> {
    (0..g.dim())
        .map(|a| {
            let s = g.stride(a);
            (0..g.len())
                .into_par_iter()
                .map(|i| {
                    if g.unravel(i)[a] + 1 < g.n(a) {
                        0.5 * (kappa[i] + kappa[i + s])
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Coarse face `(I, I + S)` averages the two fine faces it spans, weighted
/// across the face like full weighting.
fn restrict_faces(f: &GridSpec, coarse: &GridSpec, faces: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dim = f.dim();
    (0..dim)
        .map(|a| {
            let s = f.stride(a);
            (0..coarse.len())
                .into_par_iter()
                .map(|ci| {
                    let c = coarse.unravel(ci);
                    if c[a] + 1 >= coarse.n(a) {
                        return 0.0;
                    }
                    let mut acc = 0.0;
                    let mut weight = 0.0;
                    let span = |b: usize| if b < dim && b != a { -1i64..=1 } else { 0..=0 };
                    for d0 in span(0) {
                        for d1 in span(1) {
                            for d2 in span(2) {
                                let d = [d0, d1, d2];
                                let mut fine = [0usize; 3];
                                let mut w = 1.0;
                                let mut inside = true;
                                for b in 0..dim {
                                    let x = 2 * c[b] as i64 + d[b];
                                    inside &= x >= 0 && x < f.n(b) as i64;
                                    fine[b] = x.max(0) as usize;
                                    if b != a {
                                        w *= if d[b] == 0 { 0.5 } else { 0.25 };
                                    }
                                }
                                if !inside {
                                    continue;
                                }
                                let i = f.index(fine);
                                acc += w * 0.5 * (faces[a][i] + faces[a][i + s]);
                                weight += w;
                            }
                        }
                    }
                    acc / weight
                })
                .collect()
        })
        .collect()
}

const APPLY_CHUNK: usize = 4096;

/// Per-node stencil: diagonal plus (minus, plus) neighbours per axis.
#[derive(Debug, Clone)]
pub struct Stencil {
    grid: GridSpec,
    pub diag: Vec<f64>,
    pub off: Vec<[f64; 6]>,
}

impl Stencil {
    pub fn build(c: &OperatorCoefficients) -> Stencil {
        let g = c.grid;
        let rows: Vec<(f64, [f64; 6])> = (0..g.len())
            .into_par_iter()
            .map(|i| {
                if g.is_boundary(i) {
                    (1.0, [0.0; 6])
                } else {
                    c.row(i)
                }
            })
            .collect();
        let (diag, off) = rows.into_iter().unzip();
        Stencil { grid: g, diag, off }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// `sum_j a_ij u_j` over the off-diagonal neighbours of node `i`.
    #[inline]
    pub fn neighbour_sum(&self, i: usize, u: &[f64]) -> f64 {
        let g = &self.grid;
        if g.is_boundary(i) {
            return 0.0;
        }
        let o = &self.off[i];
        let mut acc = 0.0;
        for a in 0..g.dim() {
            let s = g.stride(a);
            acc += o[2 * a] * u[i - s] + o[2 * a + 1] * u[i + s];
        }
        acc
    }

    pub fn apply_slice(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        out.par_chunks_mut(APPLY_CHUNK)
            .enumerate()
            .for_each(|(c, chunk)| {
                let base = c * APPLY_CHUNK;
                for (k, v) in chunk.iter_mut().enumerate() {
                    let i = base + k;
                    *v = self.diag[i] * u[i] + self.neighbour_sum(i, u);
                }
            });
        out
    }
}

#[derive(Debug, Clone)]
pub struct AssembledOperator {
    pub coeffs: OperatorCoefficients,
    pub stencil: Stencil,
    pub rhs: ScalarField,
    pub scheme: SchemeKind,
    pub eps: f64,
}

impl AssembledOperator {
    pub fn grid(&self) -> &GridSpec {
        self.stencil.grid()
    }

    pub fn apply(&self, u: &ScalarField) -> ScalarField {
        ScalarField::new(*self.grid(), self.stencil.apply_slice(u.values())).expect("operator grid")
    }

    /// `apply(u) - rhs`.
    pub fn residual(&self, u: &ScalarField) -> ScalarField {
        let mut r = self.apply(u);
        for (v, b) in r.values_mut().iter_mut().zip(self.rhs.values()) {
            *v -= b;
        }
        r
    }
}

fn check_extended(f: &ScalarField) -> Result<()> {
    match f.values().iter().position(|v| !v.is_finite()) {
        Some(node) => Err(DdmError::MissingExtension { node }),
        None => Ok(()),
    }
}

/// `phi f - w g`: the source of the spatial operator.
fn spatial_source(scheme: SchemeKind, geom: &Geometry, fields: &ProblemFields) -> Vec<f64> {
    let w = geom.penalty(scheme.family);
    let phi = geom.phi.values();
    (0..phi.len())
        .map(|i| phi[i] * fields.f[i] - w[i] * fields.g[i])
        .collect()
}

fn validate(geom: &Geometry, fields: &ProblemFields) -> Result<()> {
    if !(geom.eps > 0.0) {
        return Err(DdmError::Invariant(format!(
            "eps = {} must be positive",
            geom.eps
        )));
    }
    check_extended(&fields.f)?;
    check_extended(&fields.g)
}

/// Steady diffuse-domain system `L(u) = phi f - w g` with `u = g` on the box.
pub fn assemble_poisson(
    fields: &ProblemFields,
    scheme: SchemeKind,
    geom: &Geometry,
) -> Result<AssembledOperator> {
    validate(geom, fields)?;
    let coeffs = OperatorCoefficients::spatial(scheme, geom, fields)?;
    let stencil = Stencil::build(&coeffs);
    let g = *geom.grid();
    let mut rhs = spatial_source(scheme, geom, fields);
    for (i, v) in rhs.iter_mut().enumerate() {
        if g.is_boundary(i) {
            *v = fields.g[i];
        }
    }
    Ok(AssembledOperator {
        coeffs,
        stencil,
        rhs: ScalarField::new(g, rhs)?,
        scheme,
        eps: geom.eps,
    })
}

/// Spatial operator of one time level, reused as the old level of the next step.
#[derive(Debug, Clone)]
pub struct SpatialLevel {
    pub coeffs: OperatorCoefficients,
    pub stencil: Stencil,
}

impl SpatialLevel {
    pub fn new(
        scheme: SchemeKind,
        geom: &Geometry,
        fields: &ProblemFields,
    ) -> Result<SpatialLevel> {
        validate(geom, fields)?;
        let coeffs = OperatorCoefficients::spatial(scheme, geom, fields)?;
        let stencil = Stencil::build(&coeffs);
        Ok(SpatialLevel { coeffs, stencil })
    }
}

/// Crank-Nicolson step for `(phi u)_t = L(u) + w g + phi f`.
#[allow(clippy::too_many_arguments)]
pub fn assemble_heat_step(
    fields_old: &ProblemFields,
    fields_new: &ProblemFields,
    scheme: SchemeKind,
    geom_old: &Geometry,
    geom_new: &Geometry,
    u_old: &ScalarField,
    dt: f64,
) -> Result<AssembledOperator> {
    let old = SpatialLevel::new(scheme, geom_old, fields_old)?;
    let new = SpatialLevel::new(scheme, geom_new, fields_new)?;
    assemble_heat_step_from(
        &old, &new, fields_old, fields_new, scheme, geom_old, geom_new, u_old, dt,
    )
}

/// As [`assemble_heat_step`], with the spatial operators of both levels given.
#[allow(clippy::too_many_arguments)]
pub fn assemble_heat_step_from(
    old: &SpatialLevel,
    new: &SpatialLevel,
    fields_old: &ProblemFields,
    fields_new: &ProblemFields,
    scheme: SchemeKind,
    geom_old: &Geometry,
    geom_new: &Geometry,
    u_old: &ScalarField,
    dt: f64,
) -> Result<AssembledOperator> {
    if !(dt > 0.0) {
        return Err(DdmError::InvalidParameter(format!(
            "dt = {dt} must be positive"
        )));
    }
    let g = *geom_new.grid();
    for other in [
        geom_old.grid(),
        u_old.grid(),
        old.stencil.grid(),
        new.stencil.grid(),
    ] {
        same_grid(&g, other)?;
    }
    let l_old = old.stencil.apply_slice(u_old.values());
    let w_old = geom_old.penalty(scheme.family);
    let w_new = geom_new.penalty(scheme.family);
    let phi_old = geom_old.phi.values();
    let phi_new = geom_new.phi.values();
    let boundary = g.boundary_mask();
    let rhs: Vec<f64> = (0..g.len())
        .map(|i| {
            if boundary[i] {
                return fields_new.g[i];
            }
            let src_old = w_old[i] * fields_old.g[i] + phi_old[i] * fields_old.f[i];
            let src_new = w_new[i] * fields_new.g[i] + phi_new[i] * fields_new.f[i];
            phi_old[i] * u_old[i] / dt + 0.5 * l_old[i] + 0.5 * (src_old + src_new)
        })
        .collect();
    let mass: Vec<f64> = phi_new.iter().map(|p| p / dt).collect();
    let mut stencil = new.stencil.clone();
    for i in 0..g.len() {
        if boundary[i] {
            continue;
        }
        stencil.diag[i] = -0.5 * stencil.diag[i] + mass[i];
        for o in stencil.off[i].iter_mut() {
            *o *= -0.5;
        }
    }
    let mut coeffs = new.coeffs.clone();
    coeffs.sigma = -0.5;
    coeffs.mass = Some(mass);
    Ok(AssembledOperator {
        coeffs,
        stencil,
        rhs: ScalarField::new(g, rhs)?,
        scheme,
        eps: geom_new.eps,
    })
}
