//! Cell-centered Cartesian grids, node masks and nodal vector fields.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{norm, Mat, MAX_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    origin: [f64; MAX_DIM],
    h: [f64; MAX_DIM],
    n: [usize; MAX_DIM],
}

impl Grid {
    pub fn new(dim: usize, origin: &[f64], extent: &[f64], n_cells: &[usize]) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::Unsupported(format!("grid dimension {dim}")));
        }
        if origin.len() != dim || extent.len() != dim || n_cells.len() != dim {
            return invalid(format!("grid blocks must have {dim} entries per axis"));
        }
        let mut g = Grid {
            dim,
            origin: [0.0; MAX_DIM],
            h: [1.0; MAX_DIM],
            n: [1; MAX_DIM],
        };
        for k in 0..dim {
            if n_cells[k] < 2 {
                return invalid(format!("axis {k}: need at least 2 cells, got {}", n_cells[k]));
            }
            if !(extent[k] > 0.0) || !extent[k].is_finite() || !origin[k].is_finite() {
                return invalid(format!("axis {k}: extent must be positive and finite"));
            }
            g.origin[k] = origin[k];
            g.n[k] = n_cells[k];
            g.h[k] = extent[k] / n_cells[k] as f64;
        }
        Ok(g)
    }

    /// The unit cube (0,1)^d with `n` cells per axis.
    pub fn unit(dim: usize, n: usize) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::Unsupported(format!("grid dimension {dim}")));
        }
        Self::new(dim, &[0.0; MAX_DIM][..dim], &[1.0; MAX_DIM][..dim], &[n; MAX_DIM][..dim])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin[..self.dim]
    }

    pub fn spacing(&self) -> &[f64] {
        &self.h[..self.dim]
    }

    pub fn n_cells(&self) -> &[usize] {
        &self.n[..self.dim]
    }

    pub fn extent(&self) -> Vec<f64> {
        (0..self.dim).map(|k| self.h[k] * self.n[k] as f64).collect()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n[..self.dim].iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.h[..self.dim].iter().product()
    }

    /// Edge length of a cube with the cell's volume.
    pub fn h_eff(&self) -> f64 {
        self.cell_volume().powf(1.0 / self.dim as f64)
    }

    pub fn h_max(&self) -> f64 {
        self.h[..self.dim].iter().cloned().fold(0.0, f64::max)
    }

    /// Multi-index of a linear node index; axis 0 varies fastest.
    #[inline]
    pub fn multi_index(&self, idx: usize) -> [usize; MAX_DIM] {
        let mut mi = [0; MAX_DIM];
        let mut rest = idx;
        for k in 0..self.dim {
            mi[k] = rest % self.n[k];
            rest /= self.n[k];
        }
        mi
    }

    #[inline]
    pub fn linear_index(&self, mi: &[usize]) -> usize {
        let mut idx = 0;
        for k in (0..self.dim).rev() {
            idx = idx * self.n[k] + mi[k];
        }
        idx
    }

    /// Linear index of `idx` shifted by an integer offset, if inside the grid.
    #[inline]
    pub fn shifted(&self, mi: &[usize; MAX_DIM], off: &[isize; MAX_DIM]) -> Option<usize> {
        let mut idx = 0usize;
        for k in (0..self.dim).rev() {
            let c = mi[k] as isize + off[k];
            if c < 0 || c >= self.n[k] as isize {
                return None;
            }
            idx = idx * self.n[k] + c as usize;
        }
        Some(idx)
    }

    /// Coordinates of node `idx`: origin + (i + ½)·h.
    #[inline]
    pub fn node(&self, idx: usize) -> [f64; MAX_DIM] {
        let mi = self.multi_index(idx);
        let mut x = [0.0; MAX_DIM];
        for k in 0..self.dim {
            x[k] = self.origin[k] + (mi[k] as f64 + 0.5) * self.h[k];
        }
        x
    }

    pub fn node_vec(&self, idx: usize) -> Vec<f64> {
        self.node(idx)[..self.dim].to_vec()
    }

    /// Node closest to `x`, if `x` lies within half a cell of the grid box.
    pub fn nearest_node(&self, x: &[f64]) -> Option<usize> {
        let mut mi = [0usize; MAX_DIM];
        for k in 0..self.dim {
            let t = (x[k] - self.origin[k]) / self.h[k] - 0.5;
            let c = t.round();
            if c < -0.5 || c > self.n[k] as f64 - 0.5 || !c.is_finite() {
                return None;
            }
            mi[k] = (c.max(0.0) as usize).min(self.n[k] - 1);
        }
        Some(self.linear_index(&mi))
    }

    /// Distance from node `idx` to the boundary of the grid box.
    pub fn distance_to_box_boundary(&self, idx: usize) -> f64 {
        let x = self.node(idx);
        let mut d = f64::INFINITY;
        for k in 0..self.dim {
            let lo = x[k] - self.origin[k];
            let hi = self.origin[k] + self.n[k] as f64 * self.h[k] - x[k];
            d = d.min(lo).min(hi);
        }
        d
    }
}

/// Active node set A together with the collar width r₀ of the Dirichlet
/// layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubdomainMask {
    grid: Grid,
    active: Vec<bool>,
    collar_width: f64,
}

impl SubdomainMask {
    pub fn full(grid: Grid) -> Self {
        Self {
            grid,
            active: vec![true; grid.len()],
            collar_width: 0.0,
        }
    }

    pub fn from_active(grid: Grid, active: Vec<bool>, collar_width: f64) -> Result<Self> {
        if active.len() != grid.len() {
            return invalid(format!(
                "mask has {} entries for a grid of {} nodes",
                active.len(),
                grid.len()
            ));
        }
        if collar_width < 0.0 || !collar_width.is_finite() {
            return invalid("collar width must be a nonnegative finite length");
        }
        Ok(Self {
            grid,
            active,
            collar_width,
        })
    }

    pub fn from_predicate(grid: Grid, collar_width: f64, pred: impl Fn(&[f64]) -> bool) -> Result<Self> {
        let active = (0..grid.len())
            .map(|i| pred(&grid.node(i)[..grid.dim()]))
            .collect();
        Self::from_active(grid, active, collar_width)
    }

    /// Nodes farther than `margin` from the grid boundary are active; the
    /// rest form Ω∖A.
    pub fn interior(grid: Grid, margin: f64, collar_width: f64) -> Result<Self> {
        let active = (0..grid.len())
            .map(|i| grid.distance_to_box_boundary(i) > margin)
            .collect();
        Self::from_active(grid, active, collar_width)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn is_active(&self, idx: usize) -> bool {
        self.active[idx]
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    pub fn collar_width(&self) -> f64 {
        self.collar_width
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.active.len()).filter(|&i| self.active[i]).collect()
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    /// |A| as the total volume of active cells.
    pub fn measure(&self) -> f64 {
        self.active_count() as f64 * self.grid.cell_volume()
    }

    /// Distance from each node to the nearest inactive node (zero on
    /// inactive nodes, infinity if every node is active).
    pub fn distance_to_inactive(&self) -> Vec<f64> {
        let inactive: Vec<[f64; MAX_DIM]> = (0..self.grid.len())
            .filter(|&i| !self.active[i])
            .map(|i| self.grid.node(i))
            .collect();
        let d = self.grid.dim();
        (0..self.grid.len())
            .map(|i| {
                if !self.active[i] {
                    return 0.0;
                }
                let x = self.grid.node(i);
                inactive
                    .iter()
                    .map(|y| {
                        (0..d)
                            .map(|k| (x[k] - y[k]) * (x[k] - y[k]))
                            .sum::<f64>()
                    })
                    .fold(f64::INFINITY, f64::min)
                    .sqrt()
            })
            .collect()
    }

    /// Active nodes with dist(x, Ω∖A) < r₀.
    pub fn collar(&self) -> Vec<bool> {
        let dist = self.distance_to_inactive();
        (0..self.grid.len())
            .map(|i| self.active[i] && dist[i] < self.collar_width)
            .collect()
    }

    /// Nodes whose values are free in a Dirichlet problem: active and
    /// outside the collar.
    pub fn free_nodes(&self) -> Vec<bool> {
        let collar = self.collar();
        (0..self.grid.len())
            .map(|i| self.active[i] && !collar[i])
            .collect()
    }

    /// Diameter of the active node set.
    pub fn diameter(&self) -> f64 {
        let d = self.grid.dim();
        let mut lo = [f64::INFINITY; MAX_DIM];
        let mut hi = [f64::NEG_INFINITY; MAX_DIM];
        for i in self.active_indices() {
            let x = self.grid.node(i);
            for k in 0..d {
                lo[k] = lo[k].min(x[k]);
                hi[k] = hi[k].max(x[k]);
            }
        }
        (0..d)
            .map(|k| (hi[k] - lo[k]).max(0.0).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// A d-vector per node, stored contiguously node after node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorField {
    grid: Grid,
    values: Vec<f64>,
}

/// Body force density, one d-vector per node.
pub type LoadField = VectorField;

impl VectorField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len() * grid.dim()],
        }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() * grid.dim() {
            return invalid(format!(
                "field has {} values, expected {}",
                values.len(),
                grid.len() * grid.dim()
            ));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("field value at node {}", pos / grid.dim())));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f(x, out)` at every node.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64], &mut [f64])) -> Self {
        let d = grid.dim();
        let mut values = vec![0.0; grid.len() * d];
        for i in 0..grid.len() {
            let x = grid.node(i);
            f(&x[..d], &mut values[i * d..(i + 1) * d]);
        }
        Self { grid, values }
    }

    /// v(x) = F x + b.
    pub fn affine(grid: Grid, f: &Mat, b: &[f64]) -> Self {
        Self::from_fn(grid, |x, out| {
            f.apply_into(x, out);
            for (o, bk) in out.iter_mut().zip(b) {
                *o += bk;
            }
        })
    }

    pub fn identity(grid: Grid) -> Self {
        Self::affine(grid, &Mat::identity(grid.dim()), &vec![0.0; grid.dim()])
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn get(&self, idx: usize) -> &[f64] {
        let d = self.grid.dim();
        &self.values[idx * d..(idx + 1) * d]
    }

    #[inline]
    pub fn get_mut(&mut self, idx: usize) -> &mut [f64] {
        let d = self.grid.dim();
        &mut self.values[idx * d..(idx + 1) * d]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn add(&self, other: &VectorField) -> VectorField {
        assert_eq!(self.values.len(), other.values.len());
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Self {
            grid: self.grid,
            values,
        }
    }

    pub fn scaled(&self, s: f64) -> VectorField {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| s * v).collect(),
        }
    }

    /// Applies `U` to every nodal value.
    pub fn map_linear(&self, u: &Mat) -> VectorField {
        let d = self.grid.dim();
        let mut out = self.clone();
        for i in 0..self.grid.len() {
            u.apply_into(self.get(i), &mut out.values[i * d..(i + 1) * d]);
        }
        out
    }

    /// max over nodes of |v(x_i) − w(x_i)|.
    pub fn sup_distance(&self, other: &VectorField) -> f64 {
        let d = self.grid.dim();
        (0..self.grid.len())
            .map(|i| {
                let a = self.get(i);
                let b = other.get(i);
                (0..d).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// max over nodes and components of |v_k(x_i) − w_k(x_i)|.
    pub fn sup_component_distance(&self, other: &VectorField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// CSV layout: a commented header with grid metadata, a column row,
    /// then one row per node `i1..id,x1..xd,v1..vd`.
    pub fn to_csv(&self) -> String {
        let g = &self.grid;
        let d = g.dim();
        let mut s = String::new();
        let names: Vec<String> = std::iter::once("dim".to_string())
            .chain((1..=d).map(|k| format!("h{k}")))
            .chain((1..=d).map(|k| format!("o{k}")))
            .chain((1..=d).map(|k| format!("n{k}")))
            .collect();
        let _ = writeln!(s, "# {}", names.join(","));
        let meta: Vec<String> = std::iter::once(d.to_string())
            .chain(g.spacing().iter().map(|h| format!("{h}")))
            .chain(g.origin().iter().map(|o| format!("{o}")))
            .chain(g.n_cells().iter().map(|n| n.to_string()))
            .collect();
        let _ = writeln!(s, "# {}", meta.join(","));
        let cols: Vec<String> = (1..=d)
            .map(|k| format!("i{k}"))
            .chain((1..=d).map(|k| format!("x{k}")))
            .chain((1..=d).map(|k| format!("v{k}")))
            .collect();
        let _ = writeln!(s, "{}", cols.join(","));
        for idx in 0..g.len() {
            let mi = g.multi_index(idx);
            let x = g.node(idx);
            let row: Vec<String> = mi[..d]
                .iter()
                .map(|i| i.to_string())
                .chain(x[..d].iter().map(|v| format!("{v}")))
                .chain(self.get(idx).iter().map(|v| format!("{v}")))
                .collect();
            let _ = writeln!(s, "{}", row.join(","));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let parse_err = |m: &str| Error::Parse(format!("field csv: {m}"));
        lines.next().ok_or_else(|| parse_err("missing header"))?;
        let meta = lines
            .next()
            .and_then(|l| l.strip_prefix("# "))
            .ok_or_else(|| parse_err("missing metadata row"))?;
        let meta: Vec<&str> = meta.split(',').collect();
        let d: usize = meta[0].parse().map_err(|_| parse_err("bad dim"))?;
        if meta.len() != 1 + 3 * d {
            return Err(parse_err("metadata row length"));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| parse_err("bad number"));
        let h: Vec<f64> = meta[1..=d].iter().map(|s| num(s)).collect::<Result<_>>()?;
        let o: Vec<f64> = meta[1 + d..=2 * d].iter().map(|s| num(s)).collect::<Result<_>>()?;
        let n: Vec<usize> = meta[1 + 2 * d..]
            .iter()
            .map(|s| s.trim().parse::<usize>().map_err(|_| parse_err("bad cell count")))
            .collect::<Result<_>>()?;
        let extent: Vec<f64> = (0..d).map(|k| h[k] * n[k] as f64).collect();
        let grid = Grid::new(d, &o, &extent, &n)?;
        lines.next().ok_or_else(|| parse_err("missing column row"))?;
        let mut values = vec![0.0; grid.len() * d];
        let mut seen = 0;
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 3 * d {
                return Err(parse_err("row length"));
            }
            let mi: Vec<usize> = cells[..d]
                .iter()
                .map(|s| s.trim().parse::<usize>().map_err(|_| parse_err("bad index")))
                .collect::<Result<_>>()?;
            if mi.iter().zip(grid.n_cells()).any(|(i, n)| i >= n) {
                return Err(parse_err("index out of range"));
            }
            let idx = grid.linear_index(&mi);
            for k in 0..d {
                values[idx * d + k] = num(cells[2 * d + k])?;
            }
            seen += 1;
        }
        if seen != grid.len() {
            return Err(parse_err("row count does not match grid"));
        }
        Self::from_values(grid, values)
    }
}

/// 𝒟v(y, x) = (v(y) − v(x)) / |y − x| for nodes x = x_i, y = x_j.
pub fn difference_quotient(v: &VectorField, i: usize, j: usize) -> Result<Vec<f64>> {
    let g = v.grid();
    let d = g.dim();
    if i == j {
        return Err(Error::Domain(format!("difference quotient on the diagonal (node {i})")));
    }
    if i >= g.len() || j >= g.len() {
        return Err(Error::Domain("node index outside the grid".into()));
    }
    let xi = g.node(i);
    let xj = g.node(j);
    let r = norm(&(0..d).map(|k| xj[k] - xi[k]).collect::<Vec<_>>());
    Ok((0..d).map(|k| (v.get(j)[k] - v.get(i)[k]) / r).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn node_positions_are_cell_centered() {
        let g = Grid::unit(2, 4).unwrap();
        let x = g.node(g.linear_index(&[1, 2]));
        assert_abs_diff_eq!(x[0], 0.375);
        assert_abs_diff_eq!(x[1], 0.625);
        assert_eq!(g.len(), 16);
        for i in 0..g.len() {
            assert_eq!(g.linear_index(&g.multi_index(i)[..2]), i);
        }
    }

    #[test]
    fn grid_rejects_degenerate_input() {
        assert!(Grid::unit(2, 1).is_err());
        assert!(Grid::new(1, &[0.0], &[-1.0], &[4]).is_err());
        assert!(Grid::unit(4, 8).is_err());
    }

    #[test]
    fn identity_quotient_has_unit_length() {
        let g = Grid::unit(1, 10).unwrap();
        let v = VectorField::identity(g);
        for j in 1..10 {
            let q = difference_quotient(&v, 0, j).unwrap();
            assert_abs_diff_eq!(q[0], 1.0, epsilon = 1e-14);
        }
        assert!(difference_quotient(&v, 3, 3).is_err());
    }

    #[test]
    fn linear_map_quotient() {
        let g = Grid::new(2, &[-0.05, -0.05], &[1.0, 1.0], &[10, 10]).unwrap();
        let v = VectorField::affine(g, &Mat::scaled_identity(2, 2.0), &[0.0, 0.0]);
        let i = g.nearest_node(&[0.0, 0.0]).unwrap();
        let j = g.nearest_node(&[0.1, 0.0]).unwrap();
        let q = difference_quotient(&v, i, j).unwrap();
        assert_abs_diff_eq!(q[0], 2.0, epsilon = 1e-13);
        assert_abs_diff_eq!(q[1], 0.0, epsilon = 1e-13);
    }

    #[test]
    fn collar_of_interior_mask() {
        let g = Grid::unit(1, 20).unwrap();
        let m = SubdomainMask::interior(g, 0.1, 0.08).unwrap();
        // inactive: x < 0.1 or x > 0.9 -> 2 nodes each side
        assert_eq!(m.active_count(), 16);
        let collar = m.collar();
        let n_collar = collar.iter().filter(|c| **c).count();
        // only the first active node on each side lies within 0.08 of Ω∖A
        assert_eq!(n_collar, 2);
        assert_eq!(m.free_nodes().iter().filter(|f| **f).count(), 14);
    }

    #[test]
    fn csv_roundtrip() {
        let g = Grid::new(2, &[0.0, 1.0], &[1.0, 0.5], &[3, 2]).unwrap();
        let v = VectorField::from_fn(g, |x, out| {
            out[0] = x[0] * x[1];
            out[1] = 1.0 / 3.0 + x[0];
        });
        let text = v.to_csv();
        assert!(text.starts_with("# dim,h1,h2,o1,o2,n1,n2\n# 2,"));
        let back = VectorField::from_csv(&text).unwrap();
        assert_eq!(back, v);
    }
}
