//! Uniform node-centered box grids in one to three dimensions, the fields
//! that live on them, and the basic difference stencils and norms.
//!
//! Nodes are stored row-major: axis 0 varies slowest. Unused axes of a
//! lower-dimensional grid carry a single node.

use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::error::{DdmError, Result};

const SQUARE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    dim: usize,
    lo: [f64; 3],
    hi: [f64; 3],
    n: [usize; 3],
    h: [f64; 3],
}

impl GridSpec {
    /// Grid with square cells; fails if the per-axis spacings differ.
    pub fn new(lo: &[f64], hi: &[f64], n: &[usize]) -> Result<Self> {
        let g = Self::new_anisotropic(lo, hi, n)?;
        let h0 = g.h[0];
        for a in 1..g.dim {
            if (g.h[a] - h0).abs() > SQUARE_TOL * h0 {
                return Err(DdmError::InvalidGrid(format!(
                    "non-square cells: h[0]={h0}, h[{a}]={}",
                    g.h[a]
                )));
            }
        }
        Ok(g)
    }

    pub fn new_anisotropic(lo: &[f64], hi: &[f64], n: &[usize]) -> Result<Self> {
        let dim = n.len();
        if !(1..=3).contains(&dim) || lo.len() != dim || hi.len() != dim {
            return Err(DdmError::InvalidGrid(format!(
                "dimension mismatch: lo {}, hi {}, n {}",
                lo.len(),
                hi.len(),
                dim
            )));
        }
        let mut g = GridSpec {
            dim,
            lo: [0.0; 3],
            hi: [0.0; 3],
            n: [1; 3],
            h: [1.0; 3],
        };
        for a in 0..dim {
            if n[a] < 3 {
                return Err(DdmError::InvalidGrid(format!(
                    "axis {a} has {} < 3 nodes",
                    n[a]
                )));
            }
            if !(hi[a] > lo[a]) || !lo[a].is_finite() || !hi[a].is_finite() {
                return Err(DdmError::InvalidGrid(format!(
                    "axis {a}: bad bounds [{}, {}]",
                    lo[a], hi[a]
                )));
            }
            g.lo[a] = lo[a];
            g.hi[a] = hi[a];
            g.n[a] = n[a];
            g.h[a] = (hi[a] - lo[a]) / (n[a] - 1) as f64;
        }
        Ok(g)
    }

    /// Cube `[lo, hi]^dim` with `n` nodes per axis.
    pub fn cube(dim: usize, lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::new(&vec![lo; dim], &vec![hi; dim], &vec![n; dim])
    }

    /// Cube whose spacing is the closest achievable to `h` (node count rounded).
    pub fn cube_with_spacing(dim: usize, lo: f64, hi: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(DdmError::InvalidGrid(format!(
                "spacing {h} must be positive"
            )));
        }
        let cells = ((hi - lo) / h).round().max(2.0) as usize;
        Self::cube(dim, lo, hi, cells + 1)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn n(&self, axis: usize) -> usize {
        self.n[axis]
    }
    pub fn lo(&self, axis: usize) -> f64 {
        self.lo[axis]
    }
    pub fn hi(&self, axis: usize) -> f64 {
        self.hi[axis]
    }
    pub fn h(&self, axis: usize) -> f64 {
        self.h[axis]
    }
    /// Spacing of axis 0 (all axes share it on square grids).
    pub fn spacing(&self) -> f64 {
        self.h[0]
    }
    pub fn len(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => self.n[1] * self.n[2],
            1 => self.n[2],
            _ => 1,
        }
    }

    pub fn index(&self, ijk: [usize; 3]) -> usize {
        (ijk[0] * self.n[1] + ijk[1]) * self.n[2] + ijk[2]
    }

    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        if self.dim == 1 {
            return [idx, 0, 0];
        }
        let k = idx % self.n[2];
        let rest = idx / self.n[2];
        [rest / self.n[1], rest % self.n[1], k]
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        if i + 1 == self.n[axis] && self.n[axis] > 1 {
            self.hi[axis]
        } else {
            self.lo[axis] + i as f64 * self.h[axis]
        }
    }

    /// Physical position of a node; unused axes are 0.
    pub fn point(&self, idx: usize) -> [f64; 3] {
        if self.dim == 1 {
            return [self.coord(0, idx), 0.0, 0.0];
        }
        let ijk = self.unravel(idx);
        let mut p = [0.0; 3];
        for a in 0..self.dim {
            p[a] = self.coord(a, ijk[a]);
        }
        p
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        if self.dim == 1 {
            return idx == 0 || idx + 1 == self.n[0];
        }
        let ijk = self.unravel(idx);
        (0..self.dim).any(|a| ijk[a] == 0 || ijk[a] + 1 == self.n[a])
    }

    /// `is_boundary` for every node.
    pub fn boundary_mask(&self) -> Vec<bool> {
        (0..self.len()).map(|i| self.is_boundary(i)).collect()
    }

    /// Next coarser grid sharing every other node, if each axis allows it
    /// and keeps at least `min_nodes` nodes.
    pub fn coarsen(&self, min_nodes: usize) -> Option<GridSpec> {
        let mut c = *self;
        for a in 0..self.dim {
            if (self.n[a] - 1) % 2 != 0 {
                return None;
            }
            let nc = (self.n[a] - 1) / 2 + 1;
            if nc < min_nodes.max(3) {
                return None;
            }
            c.n[a] = nc;
            c.h[a] = 2.0 * self.h[a];
        }
        Some(c)
    }

    /// Grid with every cell halved.
    pub fn refine(&self) -> GridSpec {
        let mut f = *self;
        for a in 0..self.dim {
            f.n[a] = 2 * (self.n[a] - 1) + 1;
            f.h[a] = 0.5 * self.h[a];
        }
        f
    }

    /// Shortest distance from a point to the box boundary.
    pub fn distance_to_boundary(&self, p: [f64; 3]) -> f64 {
        (0..self.dim)
            .map(|a| (p[a] - self.lo[a]).min(self.hi[a] - p[a]))
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: GridSpec, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(DdmError::InvalidGrid(format!(
                "field has {} values, grid has {} nodes",
                data.len(),
                grid.len()
            )));
        }
        Ok(ScalarField { grid, data })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        ScalarField {
            grid,
            data: vec![c; grid.len()],
        }
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn([f64; 3]) -> f64 + Sync) -> Self {
        let data = (0..grid.len())
            .into_par_iter()
            .map(|i| f(grid.point(i)))
            .collect();
        ScalarField { grid, data }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.data
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
    pub fn into_values(self) -> Vec<f64> {
        self.data
    }
    pub fn len(&self) -> usize {
        self.data.len()
    }
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync) -> Self {
        ScalarField {
            grid: self.grid,
            data: self.data.par_iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(
        &self,
        other: &ScalarField,
        f: impl Fn(f64, f64) -> f64 + Sync,
    ) -> Result<Self> {
        same_grid(&self.grid, &other.grid)?;
        let data = self
            .data
            .par_iter()
            .zip(other.data.par_iter())
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(ScalarField {
            grid: self.grid,
            data,
        })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl std::ops::Index<usize> for ScalarField {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl std::ops::IndexMut<usize> for ScalarField {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: GridSpec,
    comps: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn zeros(grid: GridSpec) -> Self {
        VectorField {
            grid,
            comps: vec![vec![0.0; grid.len()]; grid.dim()],
        }
    }

    pub fn new(grid: GridSpec, comps: Vec<Vec<f64>>) -> Result<Self> {
        if comps.len() != grid.dim() || comps.iter().any(|c| c.len() != grid.len()) {
            return Err(DdmError::InvalidGrid(
                "vector components do not match grid".into(),
            ));
        }
        Ok(VectorField { grid, comps })
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn([f64; 3]) -> [f64; 3] + Sync) -> Self {
        let vals: Vec<[f64; 3]> = (0..grid.len())
            .into_par_iter()
            .map(|i| f(grid.point(i)))
            .collect();
        let comps = (0..grid.dim())
            .map(|a| vals.iter().map(|v| v[a]).collect())
            .collect();
        VectorField { grid, comps }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }
    pub fn component(&self, axis: usize) -> &[f64] {
        &self.comps[axis]
    }
    pub fn component_mut(&mut self, axis: usize) -> &mut [f64] {
        &mut self.comps[axis]
    }

    pub fn at(&self, idx: usize) -> [f64; 3] {
        let mut v = [0.0; 3];
        for (a, c) in self.comps.iter().enumerate() {
            v[a] = c[idx];
        }
        v
    }

    pub fn magnitude(&self) -> ScalarField {
        let data = (0..self.grid.len())
            .map(|i| self.comps.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt())
            .collect();
        ScalarField {
            grid: self.grid,
            data,
        }
    }
}

pub(crate) fn same_grid(a: &GridSpec, b: &GridSpec) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(DdmError::GridMismatch)
    }
}

/// Second-order centered differences; one-sided second-order at the box edges.
pub fn centered_gradient(f: &ScalarField) -> VectorField {
    let g = *f.grid();
    let v = f.values();
    let comps = (0..g.dim())
        .map(|a| {
            let s = g.stride(a);
            let n = g.n(a);
            let inv2h = 0.5 / g.h(a);
            (0..g.len())
                .into_par_iter()
                .map(|idx| {
                    let i = g.unravel(idx)[a];
                    if i == 0 {
                        (-3.0 * v[idx] + 4.0 * v[idx + s] - v[idx + 2 * s]) * inv2h
                    } else if i + 1 == n {
                        (3.0 * v[idx] - 4.0 * v[idx - s] + v[idx - 2 * s]) * inv2h
                    } else {
                        (v[idx + s] - v[idx - s]) * inv2h
                    }
                })
                .collect()
        })
        .collect();
    VectorField { grid: g, comps }
}

/// Conservative `div(coef grad u)` with arithmetic-mean face coefficients.
/// Box-boundary nodes carry no stencil and are set to zero.
pub fn flux_divergence(coef: &ScalarField, u: &ScalarField) -> Result<ScalarField> {
    same_grid(coef.grid(), u.grid())?;
    let g = *u.grid();
    let c = coef.values();
    let uv = u.values();
    let data = (0..g.len())
        .into_par_iter()
        .map(|idx| {
            if g.is_boundary(idx) {
                return 0.0;
            }
            let mut acc = 0.0;
            for a in 0..g.dim() {
                let s = g.stride(a);
                let cp = 0.5 * (c[idx] + c[idx + s]);
                let cm = 0.5 * (c[idx] + c[idx - s]);
                acc += (cp * (uv[idx + s] - uv[idx]) - cm * (uv[idx] - uv[idx - s]))
                    / (g.h(a) * g.h(a));
            }
            acc
        })
        .collect();
    Ok(ScalarField { grid: g, data })
}

/// `sqrt(1/N sum (w f)^2)` over every node of the box.
pub fn norm_l2_weighted(w: &ScalarField, f: &ScalarField) -> Result<f64> {
    same_grid(w.grid(), f.grid())?;
    let sum: f64 = w
        .values()
        .iter()
        .zip(f.values())
        .map(|(a, b)| (a * b) * (a * b))
        .sum();
    Ok((sum / f.len() as f64).sqrt())
}

/// Maximum of `|f|` over the nodes selected by `mask`.
pub fn norm_linf_masked(mask: impl Fn(usize) -> bool, f: &ScalarField) -> Result<f64> {
    let mut any = false;
    let mut m = 0.0_f64;
    for (i, v) in f.values().iter().enumerate() {
        if mask(i) {
            any = true;
            m = m.max(v.abs());
        }
    }
    if any {
        Ok(m)
    } else {
        Err(DdmError::EmptyMask)
    }
}

/// Default undivided-difference threshold for refinement flags.
pub const FLAG_THRESHOLD: f64 = 1e-4;

/// Flags nodes where the undivided difference of `u*phi` reaches `threshold`
/// along some axis. Edge nodes use the one-sided difference doubled.
pub fn flag_refinement(u: &ScalarField, phi: &ScalarField, threshold: f64) -> Result<Vec<bool>> {
    let w = u.zip_with(phi, |a, b| a * b)?;
    let g = *u.grid();
    let v = w.values();
    Ok((0..g.len())
        .map(|idx| {
            let ijk = g.unravel(idx);
            (0..g.dim()).any(|a| {
                let s = g.stride(a);
                let i = ijk[a];
                let d = if i == 0 {
                    2.0 * (v[idx + s] - v[idx])
                } else if i + 1 == g.n(a) {
                    2.0 * (v[idx] - v[idx - s])
                } else {
                    v[idx + s] - v[idx - s]
                };
                d.abs() >= threshold
            })
        })
        .collect())
}

/// Writes the plain-text field dump: header lines then one value per line.
pub fn write_field<W: Write>(mut out: W, f: &ScalarField) -> Result<()> {
    let g = f.grid();
    let d = g.dim();
    let join = |vals: Vec<String>| vals.join(" ");
    writeln!(out, "dim {d}")?;
    writeln!(
        out,
        "n {}",
        join((0..d).map(|a| g.n(a).to_string()).collect())
    )?;
    writeln!(
        out,
        "lo {}",
        join((0..d).map(|a| g.lo(a).to_string()).collect())
    )?;
    writeln!(
        out,
        "hi {}",
        join((0..d).map(|a| g.hi(a).to_string()).collect())
    )?;
    for v in f.values() {
        writeln!(out, "{v}")?;
    }
    Ok(())
}

pub fn read_field<R: BufRead>(input: R) -> Result<ScalarField> {
    let mut lines = input.lines();
    let mut header = |key: &str| -> Result<Vec<String>> {
        let line = lines
            .next()
            .ok_or_else(|| DdmError::Parse(format!("missing '{key}' line")))??;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(DdmError::Parse(format!(
                "expected '{key}' header, got '{line}'"
            )));
        }
        Ok(parts.map(str::to_owned).collect())
    };
    let num = |s: &String| {
        s.parse::<f64>()
            .map_err(|e| DdmError::Parse(format!("{s}: {e}")))
    };
    let dim: usize = header("dim")?[0]
        .parse()
        .map_err(|_| DdmError::Parse("bad dim".into()))?;
    let n: Vec<usize> = header("n")?
        .iter()
        .map(|s| {
            s.parse()
                .map_err(|_| DdmError::Parse(format!("bad count {s}")))
        })
        .collect::<Result<_>>()?;
    let lo: Vec<f64> = header("lo")?.iter().map(num).collect::<Result<_>>()?;
    let hi: Vec<f64> = header("hi")?.iter().map(num).collect::<Result<_>>()?;
    if n.len() != dim {
        return Err(DdmError::Parse("node counts do not match dim".into()));
    }
    let grid = GridSpec::new_anisotropic(&lo, &hi, &n)?;
    let mut data = Vec::with_capacity(grid.len());
    for line in lines {
        let line = line?;
        for tok in line.split_whitespace() {
            data.push(
                tok.parse::<f64>()
                    .map_err(|e| DdmError::Parse(format!("{tok}: {e}")))?,
            );
        }
    }
    ScalarField::new(grid, data)
}
