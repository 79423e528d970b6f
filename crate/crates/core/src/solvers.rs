//! Linear solvers for assembled diffuse-domain systems: the Thomas
//! algorithm in 1D and geometric multigrid V-cycles in 2D/3D.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::ddm_ops::{AssembledOperator, Stencil};
use crate::error::{DdmError, Result};
use crate::grid::{same_grid, GridSpec, ScalarField};

/// Solves a tridiagonal system; `lower[0]` and `upper[n-1]` are ignored.
pub fn thomas_solve(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if lower.len() != n || upper.len() != n || rhs.len() != n {
        return Err(DdmError::InvalidParameter(
            "tridiagonal bands have inconsistent lengths".into(),
        ));
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    for i in 0..n {
        let (l, prev_c, prev_d) = if i == 0 {
            (0.0, 0.0, 0.0)
        } else {
            (lower[i], c[i - 1], d[i - 1])
        };
        let pivot = diag[i] - l * prev_c;
        if pivot == 0.0 || !pivot.is_finite() {
            return Err(DdmError::ZeroPivot { row: i });
        }
        c[i] = if i + 1 < n { upper[i] / pivot } else { 0.0 };
        d[i] = (rhs[i] - l * prev_d) / pivot;
    }
    for i in (0..n.saturating_sub(1)).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}

/// How coarse-level operators are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoarseOperator {
    /// `R A P` with the transfer operators of the cycle.
    Galerkin,
    /// The same scheme on restricted coefficient fields.
    Rediscretize,
}

impl fmt::Display for CoarseOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CoarseOperator::Galerkin => "galerkin",
            CoarseOperator::Rediscretize => "rediscretize",
        })
    }
}

impl FromStr for CoarseOperator {
    type Err = DdmError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "galerkin" => Ok(CoarseOperator::Galerkin),
            "rediscretize" => Ok(CoarseOperator::Rediscretize),
            _ => Err(DdmError::Unknown {
                kind: "coarse operator",
                name: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MgConfig {
    /// Maximum number of levels; 0 coarsens as far as the grid allows.
    pub n_levels: usize,
    pub pre_smooth: usize,
    pub post_smooth: usize,
    pub tolerance: f64,
    pub max_vcycles: usize,
    pub min_coarse_nodes: usize,
    pub coarse_operator: CoarseOperator,
}

impl Default for MgConfig {
    fn default() -> Self {
        MgConfig {
            n_levels: 0,
            pre_smooth: 2,
            post_smooth: 2,
            tolerance: 1e-10,
            max_vcycles: 200,
            min_coarse_nodes: 5,
            coarse_operator: CoarseOperator::Galerkin,
        }
    }
}

/// Outcome of a solve. Residuals are measured after diagonal scaling and
/// relative to the scaled right-hand side.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
    pub history: Vec<f64>,
}

impl SolveReport {
    /// Largest ratio between consecutive residuals.
    pub fn worst_contraction(&self) -> f64 {
        self.history
            .windows(2)
            .map(|w| w[1] / w[0])
            .fold(0.0, f64::max)
    }
}

/// Direct solve of a 1D assembled system.
pub fn tridiagonal_solve(op: &AssembledOperator) -> Result<(ScalarField, SolveReport)> {
    let g = *op.grid();
    if g.dim() != 1 {
        return Err(DdmError::InvalidParameter(
            "tridiagonal solve needs a 1D grid".into(),
        ));
    }
    let st = &op.stencil;
    let lower: Vec<f64> = st.off.iter().map(|o| o[0]).collect();
    let upper: Vec<f64> = st.off.iter().map(|o| o[1]).collect();
    let u = thomas_solve(&lower, &st.diag, &upper, op.rhs.values())?;
    let u = ScalarField::new(g, u)?;
    let res = scaled_norm(st, &op.residual(&u).into_values())
        / scaled_norm(st, op.rhs.values()).max(f64::MIN_POSITIVE);
    Ok((
        u,
        SolveReport {
            iterations: 1,
            final_residual: res,
            converged: true,
            history: vec![res],
        },
    ))
}

fn scaled_norm(st: &Stencil, r: &[f64]) -> f64 {
    r.iter()
        .zip(&st.diag)
        .map(|(v, d)| (v / d) * (v / d))
        .sum::<f64>()
        .sqrt()
}

/// Full-weighting restriction to the next coarser grid; coarse box-boundary values are zero.
pub fn restrict(fine: &ScalarField, coarse: &GridSpec) -> ScalarField {
    let f = fine.grid();
    let v = fine.values();
    let dim = f.dim();
    let data = (0..coarse.len())
        .into_par_iter()
        .map(|ci| {
            if coarse.is_boundary(ci) {
                return 0.0;
            }
            let c = coarse.unravel(ci);
            let base = f.index([
                2 * c[0],
                if dim > 1 { 2 * c[1] } else { 0 },
                if dim > 2 { 2 * c[2] } else { 0 },
            ]);
            let mut acc = 0.0;
            let span = |a: usize| if a < dim { -1i64..=1 } else { 0..=0 };
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
                        acc += w * v[(base as i64 + off) as usize];
                    }
                }
            }
            acc
        })
        .collect();
    ScalarField::new(*coarse, data).expect("coarse grid")
}

/// Multilinear interpolation from the next coarser grid.
pub fn prolong(coarse: &ScalarField, fine: &GridSpec) -> ScalarField {
    let c = coarse.grid();
    let v = coarse.values();
    let dim = fine.dim();
    let data = (0..fine.len())
        .into_par_iter()
        .map(|fi| {
            let ijk = fine.unravel(fi);
            let mut lo = [0usize; 3];
            let mut odd = [false; 3];
            for a in 0..dim {
                lo[a] = ijk[a] / 2;
                odd[a] = ijk[a] % 2 == 1;
            }
            let mut acc = 0.0;
            let span = |a: usize| {
                if a < dim && odd[a] {
                    0..=1usize
                } else {
                    0..=0usize
                }
            };
            let w = if (0..dim).all(|a| !odd[a]) {
                1.0
            } else {
                0.5f64.powi((0..dim).filter(|&a| odd[a]).count() as i32)
            };
            for d0 in span(0) {
                for d1 in span(1) {
                    for d2 in span(2) {
                        acc += v[c.index([lo[0] + d0, lo[1] + d1, lo[2] + d2])];
                    }
                }
            }
            w * acc
        })
        .collect();
    ScalarField::new(*fine, data).expect("fine grid")
}

/// Operator of a coarse level: a full `3^dim` neighbourhood per node.
#[derive(Debug, Clone)]
struct BoxStencil {
    grid: GridSpec,
    offsets: Vec<isize>,
    center: usize,
    coef: Vec<f64>,
}

impl BoxStencil {
    fn taps(&self) -> usize {
        self.offsets.len()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.coef[i * self.taps()..(i + 1) * self.taps()]
    }
}

fn box_offsets(g: &GridSpec) -> (Vec<isize>, Vec<[i64; 3]>) {
    let dim = g.dim();
    let span = |a: usize| if a < dim { -1i64..=1 } else { 0..=0 };
    let mut offsets = Vec::new();
    let mut shifts = Vec::new();
    for d2 in span(2) {
        for d1 in span(1) {
            for d0 in span(0) {
                offsets.push(
                    (d0 * g.stride(0) as i64 + d1 * g.stride(1) as i64 + d2 * g.stride(2) as i64)
                        as isize,
                );
                shifts.push([d0, d1, d2]);
            }
        }
    }
    (offsets, shifts)
}

#[derive(Debug, Clone)]
enum LevelOp {
    Fine(Stencil),
    Coarse(BoxStencil),
}

impl LevelOp {
    fn grid(&self) -> &GridSpec {
        match self {
            LevelOp::Fine(s) => s.grid(),
            LevelOp::Coarse(b) => &b.grid,
        }
    }

    fn diag(&self, i: usize) -> f64 {
        match self {
            LevelOp::Fine(s) => s.diag[i],
            LevelOp::Coarse(b) => b.row(i)[b.center],
        }
    }

    fn neighbour_sum(&self, i: usize, u: &[f64]) -> f64 {
        match self {
            LevelOp::Fine(s) => s.neighbour_sum(i, u),
            LevelOp::Coarse(b) => {
                if b.grid.is_boundary(i) {
                    return 0.0;
                }
                b.row(i)
                    .iter()
                    .zip(&b.offsets)
                    .enumerate()
                    .filter(|&(k, _)| k != b.center)
                    .map(|(_, (c, &o))| c * u[(i as isize + o) as usize])
                    .sum()
            }
        }
    }

    fn apply_slice(&self, u: &[f64]) -> Vec<f64> {
        match self {
            LevelOp::Fine(s) => s.apply_slice(u),
            LevelOp::Coarse(_) => (0..u.len())
                .into_par_iter()
                .map(|i| self.diag(i) * u[i] + self.neighbour_sum(i, u))
                .collect(),
        }
    }

    /// `(column, value)` pairs of row `i`.
    fn entries(&self, i: usize) -> Vec<(usize, f64)> {
        let g = self.grid();
        let mut out = vec![(i, self.diag(i))];
        if g.is_boundary(i) {
            return out;
        }
        match self {
            LevelOp::Fine(s) => {
                for a in 0..g.dim() {
                    let st = g.stride(a);
                    out.push((i - st, s.off[i][2 * a]));
                    out.push((i + st, s.off[i][2 * a + 1]));
                }
            }
            LevelOp::Coarse(b) => {
                for (k, (&c, &o)) in b.row(i).iter().zip(&b.offsets).enumerate() {
                    if k != b.center {
                        out.push(((i as isize + o) as usize, c));
                    }
                }
            }
        }
        out
    }

    /// `R A P` on `coarse`, probing with one class of coarse nodes per
    /// residue modulo 3 so that the images do not overlap.
    fn galerkin(&self, coarse: &GridSpec) -> LevelOp {
        let (offsets, shifts) = box_offsets(coarse);
        let taps = offsets.len();
        let center = taps / 2;
        let dim = coarse.dim();
        let mut coef = vec![0.0; coarse.len() * taps];
        let classes = 3usize.pow(dim as u32);
        for class in 0..classes {
            let residue = [class % 3, (class / 3) % 3, class / 9];
            let member = |ijk: [usize; 3]| (0..dim).all(|a| ijk[a] % 3 == residue[a]);
            let probe: Vec<f64> = (0..coarse.len())
                .map(|j| {
                    if !coarse.is_boundary(j) && member(coarse.unravel(j)) {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect();
            let probe = ScalarField::new(*coarse, probe).expect("coarse grid");
            let fine = prolong(&probe, self.grid());
            let image = ScalarField::new(*self.grid(), self.apply_slice(fine.values()))
                .expect("level grid");
            let back = restrict(&image, coarse);
            coef.par_chunks_mut(taps).enumerate().for_each(|(i, row)| {
                if coarse.is_boundary(i) {
                    return;
                }
                let ijk = coarse.unravel(i);
                for (k, sh) in shifts.iter().enumerate() {
                    let j = [0, 1, 2].map(|a| (ijk[a] as i64 + sh[a]) as usize);
                    if member(j) && !coarse.is_boundary(coarse.index(j)) {
                        row[k] = back[i];
                    }
                }
            });
        }
        for i in 0..coarse.len() {
            if coarse.is_boundary(i) {
                coef[i * taps + center] = 1.0;
            }
        }
        LevelOp::Coarse(BoxStencil {
            grid: *coarse,
            offsets,
            center,
            coef,
        })
    }
}

struct Level {
    op: LevelOp,
    colors: Vec<Vec<usize>>,
    boundary: Vec<usize>,
}

impl Level {
    fn new(op: LevelOp) -> Level {
        let g = *op.grid();
        // Red-black for the five/seven-point fine operator, one color per parity
        // pattern for the box stencils.
        let n_colors = match op {
            LevelOp::Fine(_) => 2,
            LevelOp::Coarse(_) => 1 << g.dim(),
        };
        let mut colors = vec![Vec::new(); n_colors];
        let mut boundary = Vec::new();
        for i in 0..g.len() {
            if g.is_boundary(i) {
                boundary.push(i);
            } else {
                let ijk = g.unravel(i);
                let c = if n_colors == 2 {
                    (ijk[0] + ijk[1] + ijk[2]) % 2
                } else {
                    (0..g.dim()).map(|a| (ijk[a] % 2) << a).sum()
                };
                colors[c].push(i);
            }
        }
        Level {
            op,
            colors,
            boundary,
        }
    }

    fn grid(&self) -> &GridSpec {
        self.op.grid()
    }

    fn smooth(&self, u: &mut [f64], b: &[f64], sweeps: usize) {
        let op = &self.op;
        for &i in &self.boundary {
            u[i] = b[i] / op.diag(i);
        }
        for _ in 0..sweeps {
            for nodes in &self.colors {
                let new: Vec<f64> = nodes
                    .par_iter()
                    .map(|&i| (b[i] - op.neighbour_sum(i, u)) / op.diag(i))
                    .collect();
                for (k, &i) in nodes.iter().enumerate() {
                    u[i] = new[k];
                }
            }
        }
    }

    fn residual(&self, u: &[f64], b: &[f64]) -> Vec<f64> {
        let au = self.op.apply_slice(u);
        b.iter().zip(au).map(|(b, a)| b - a).collect()
    }
}

enum Coarsest {
    Direct(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
    Sweeps,
}

struct Hierarchy {
    levels: Vec<Level>,
    coarsest: Coarsest,
}

const DIRECT_LIMIT: usize = 4096;

impl Hierarchy {
    fn build(op: &AssembledOperator, cfg: &MgConfig) -> Result<Hierarchy> {
        let mut levels = vec![Level::new(LevelOp::Fine(op.stencil.clone()))];
        let mut coeffs = op.coeffs.clone();
        let max_levels = if cfg.n_levels == 0 {
            usize::MAX
        } else {
            cfg.n_levels
        };
        while levels.len() < max_levels {
            let last = levels.last().expect("at least one level");
            let Some(coarse) = last.grid().coarsen(cfg.min_coarse_nodes) else {
                break;
            };
            let next = match cfg.coarse_operator {
                CoarseOperator::Galerkin => last.op.galerkin(&coarse),
                CoarseOperator::Rediscretize => {
                    coeffs = coeffs.restrict(&coarse)?;
                    LevelOp::Fine(Stencil::build(&coeffs))
                }
            };
            levels.push(Level::new(next));
        }
        let last = levels.last().expect("at least one level");
        let n = last.grid().len();
        let coarsest = if n <= DIRECT_LIMIT && levels.len() > 1 {
            let mut m = DMatrix::<f64>::zeros(n, n);
            for i in 0..n {
                for (j, v) in last.op.entries(i) {
                    m[(i, j)] += v;
                }
            }
            Coarsest::Direct(m.lu())
        } else {
            Coarsest::Sweeps
        };
        Ok(Hierarchy { levels, coarsest })
    }

    fn vcycle(&self, level: usize, u: &mut [f64], b: &[f64], cfg: &MgConfig) {
        let lv = &self.levels[level];
        if level + 1 == self.levels.len() {
            match &self.coarsest {
                Coarsest::Direct(lu) => {
                    if let Some(x) = lu.solve(&DVector::from_column_slice(b)) {
                        u.copy_from_slice(x.as_slice());
                        return;
                    }
                    lv.smooth(u, b, 50);
                }
                Coarsest::Sweeps => lv.smooth(u, b, cfg.pre_smooth + cfg.post_smooth),
            }
            return;
        }
        lv.smooth(u, b, cfg.pre_smooth);
        let r = ScalarField::new(*lv.grid(), lv.residual(u, b)).expect("level grid");
        let next = &self.levels[level + 1];
        let rc = restrict(&r, next.grid());
        let mut ec = vec![0.0; rc.len()];
        self.vcycle(level + 1, &mut ec, rc.values(), cfg);
        let ef = prolong(
            &ScalarField::new(*next.grid(), ec).expect("coarse grid"),
            lv.grid(),
        );
        for (ui, e) in u.iter_mut().zip(ef.values()) {
            *ui += e;
        }
        lv.smooth(u, b, cfg.post_smooth);
    }
}

/// V-cycle multigrid from the initial guess `u0`. Non-convergence is reported
/// through `SolveReport::converged`, never hidden.
pub fn multigrid_solve(
    op: &AssembledOperator,
    cfg: &MgConfig,
    u0: &ScalarField,
) -> Result<(ScalarField, SolveReport)> {
    if !(cfg.tolerance > 0.0) || cfg.min_coarse_nodes < 5 {
        return Err(DdmError::InvalidParameter(
            "multigrid tolerance must be positive and coarse grids keep >= 5 nodes".into(),
        ));
    }
    same_grid(op.grid(), u0.grid())?;
    let b = op.rhs.values();
    let st = &op.stencil;
    let b_norm = scaled_norm(st, b);
    if b_norm == 0.0 && u0.max_abs() == 0.0 {
        return Ok((
            u0.clone(),
            SolveReport {
                iterations: 0,
                final_residual: 0.0,
                converged: true,
                history: vec![0.0],
            },
        ));
    }
    let b_norm = b_norm.max(f64::MIN_POSITIVE);
    let h = Hierarchy::build(op, cfg)?;
    let mut u = u0.values().to_vec();
    let rel = |u: &[f64]| scaled_norm(st, &h.levels[0].residual(u, b)) / b_norm;
    let mut res = rel(&u);
    let mut history = vec![res];
    let mut iterations = 0;
    while res > cfg.tolerance && iterations < cfg.max_vcycles {
        h.vcycle(0, &mut u, b, cfg);
        iterations += 1;
        res = rel(&u);
        history.push(res);
        if !res.is_finite() {
            break;
        }
    }
    let converged = res <= cfg.tolerance;
    Ok((
        ScalarField::new(*op.grid(), u)?,
        SolveReport {
            iterations,
            final_residual: res,
            converged,
            history,
        },
    ))
}

/// Thomas in 1D, multigrid otherwise; a solve that misses the tolerance is an error.
pub fn solve(
    op: &AssembledOperator,
    cfg: &MgConfig,
    u0: &ScalarField,
) -> Result<(ScalarField, SolveReport)> {
    let (u, report) = if op.grid().dim() == 1 {
        tridiagonal_solve(op)?
    } else {
        multigrid_solve(op, cfg, u0)?
    };
    if !report.converged {
        return Err(DdmError::NotConverged {
            iterations: report.iterations,
            residual: report.final_residual,
        });
    }
    Ok((u, report))
}
