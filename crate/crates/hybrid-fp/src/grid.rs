//! Node-centred rectangular grids and density fields on them.
//!
//! Non-periodic axes carry `n` nodes from `lower` to `upper` inclusive
//! (spacing `(upper − lower)/(n − 1)`), so nodes sit on the chart walls and
//! receive jump values directly; periodic axes carry `n` nodes with spacing
//! `(upper − lower)/n`. Each node owns the dual cell around it, whose volume
//! is the trapezoid weight.

use crate::error::{Error, Result};
use crate::system::{DomainBox, HybridSystem};

/// Largest number of grid nodes accepted.
pub const MAX_NODES: usize = 50_000_000;

/// Grid over the continuous coordinates, repeated per sheet.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub domain: DomainBox,
    pub shape: Vec<usize>,
    pub sheets: usize,
}

impl GridSpec {
    /// Validated grid: `shape[i] ≥ 4`, at least one sheet, node cap.
    pub fn new(domain: DomainBox, shape: Vec<usize>, sheets: usize) -> Result<Self> {
        if shape.len() != domain.dim() {
            return Err(Error::Invalid(format!("grid shape has {} axes, box has {}", shape.len(), domain.dim())));
        }
        if let Some(n) = shape.iter().find(|&&n| n < 4) {
            return Err(Error::Invalid(format!("grid axes need at least 4 nodes, got {n}")));
        }
        if sheets == 0 {
            return Err(Error::Invalid("grid needs at least one sheet".into()));
        }
        let total = shape.iter().try_fold(sheets, |acc: usize, &n| acc.checked_mul(n));
        match total {
            Some(t) if t <= MAX_NODES => Ok(Self { domain, shape, sheets }),
            _ => Err(Error::Invalid(format!("grid exceeds the node cap of {MAX_NODES}"))),
        }
    }

    /// Number of continuous axes.
    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    /// Nodes per sheet.
    pub fn nodes_per_sheet(&self) -> usize {
        self.shape.iter().product()
    }

    /// Total nodes over all sheets.
    pub fn len(&self) -> usize {
        self.nodes_per_sheet() * self.sheets
    }

    /// True when the grid has no nodes (never, for a validated grid).
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Node spacing on axis `i`.
    pub fn spacing(&self, i: usize) -> f64 {
        let n = self.shape[i] as f64;
        if self.domain.periodic[i] {
            self.domain.extent(i) / n
        } else {
            self.domain.extent(i) / (n - 1.0)
        }
    }

    /// Coordinate of node `k` on axis `i`.
    pub fn coord(&self, i: usize, k: usize) -> f64 {
        self.domain.lower[i] + k as f64 * self.spacing(i)
    }

    /// `(sheet, per-axis indices)` of a flat index (last axis fastest).
    pub fn unravel(&self, mut idx: usize) -> (usize, Vec<usize>) {
        let mut ks = vec![0; self.dim()];
        for i in (0..self.dim()).rev() {
            ks[i] = idx % self.shape[i];
            idx /= self.shape[i];
        }
        (idx, ks)
    }

    /// Flat index of `(sheet, per-axis indices)`.
    pub fn ravel(&self, sheet: usize, ks: &[usize]) -> usize {
        let mut idx = sheet;
        for i in 0..self.dim() {
            idx = idx * self.shape[i] + ks[i];
        }
        idx
    }

    /// Continuous coordinates of a node.
    pub fn node_coords(&self, idx: usize) -> Vec<f64> {
        let (_, ks) = self.unravel(idx);
        ks.iter().enumerate().map(|(i, &k)| self.coord(i, k)).collect()
    }

    /// Full system state of a node (appends the sheet coordinate if the
    /// system has sheets).
    pub fn node_state(&self, sys: &dyn HybridSystem, idx: usize) -> Vec<f64> {
        let (sheet, _) = self.unravel(idx);
        let mut x = self.node_coords(idx);
        if sys.sheet_count() > 1 {
            x.push(sys.sheet_value(sheet));
        }
        x
    }

    /// Dual-cell volume (trapezoid weight) of a node.
    pub fn weight(&self, idx: usize) -> f64 {
        let (_, ks) = self.unravel(idx);
        (0..self.dim())
            .map(|i| {
                let h = self.spacing(i);
                if !self.domain.periodic[i] && (ks[i] == 0 || ks[i] == self.shape[i] - 1) {
                    0.5 * h
                } else {
                    h
                }
            })
            .product()
    }

    /// All node weights in flat order.
    pub fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.weight(i)).collect()
    }

    /// `ρ` at every node.
    pub fn node_ref_density(&self, sys: &dyn HybridSystem) -> Vec<f64> {
        (0..self.len()).map(|i| sys.ref_density(&self.node_state(sys, i))).collect()
    }

    /// True when the continuous part of `x` is inside the grid box up to a
    /// relative slack.
    pub fn contains(&self, x: &[f64], slack: f64) -> bool {
        self.domain.contains(&x[..self.dim()], slack)
    }

    /// Index of the node whose dual cell contains `x`, if any.
    pub fn cell_of(&self, x: &[f64], sheet: usize) -> Option<usize> {
        let mut ks = vec![0; self.dim()];
        for i in 0..self.dim() {
            let h = self.spacing(i);
            let r = ((x[i] - self.domain.lower[i]) / h).round();
            let n = self.shape[i] as f64;
            if self.domain.periodic[i] {
                ks[i] = r.rem_euclid(n) as usize % self.shape[i];
            } else {
                if !(r >= 0.0 && r <= n - 1.0) {
                    return None;
                }
                ks[i] = r as usize;
            }
        }
        Some(self.ravel(sheet, &ks))
    }

    /// Multilinear interpolation stencil `(node, weight)` at `x` on a sheet.
    /// Non-periodic coordinates are clamped into the box.
    pub fn multilinear(&self, x: &[f64], sheet: usize) -> Vec<(usize, f64)> {
        let d = self.dim();
        let mut lo = vec![0usize; d];
        let mut hi = vec![0usize; d];
        let mut fr = vec![0.0; d];
        for i in 0..d {
            let n = self.shape[i];
            let r = (x[i] - self.domain.lower[i]) / self.spacing(i);
            if self.domain.periodic[i] {
                let r = r.rem_euclid(n as f64);
                let k = (r.floor() as usize).min(n - 1);
                lo[i] = k;
                hi[i] = (k + 1) % n;
                fr[i] = (r - k as f64).clamp(0.0, 1.0);
            } else {
                let r = r.clamp(0.0, (n - 1) as f64);
                let k = (r.floor() as usize).min(n - 2);
                lo[i] = k;
                hi[i] = k + 1;
                fr[i] = r - k as f64;
            }
        }
        let mut out = Vec::with_capacity(1 << d);
        let mut ks = vec![0usize; d];
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            for i in 0..d {
                if corner >> i & 1 == 1 {
                    ks[i] = hi[i];
                    w *= fr[i];
                } else {
                    ks[i] = lo[i];
                    w *= 1.0 - fr[i];
                }
            }
            if w != 0.0 {
                out.push((self.ravel(sheet, &ks), w));
            }
        }
        out
    }

    /// Nearest node to `x` on a sheet (coordinates clamped into the box).
    pub fn nearest(&self, x: &[f64], sheet: usize) -> usize {
        let mut y = x[..self.dim()].to_vec();
        self.domain.clamp(&mut y);
        self.cell_of(&y, sheet).expect("clamped point lies in a cell")
    }

    /// Header line used by snapshot files.
    pub fn header(&self, t: f64) -> String {
        let shape: Vec<String> = self.shape.iter().map(|n| n.to_string()).collect();
        let bx: Vec<String> =
            (0..self.dim()).map(|i| format!("{}:{}", self.domain.lower[i], self.domain.upper[i])).collect();
        let mut h = format!("# t={} shape={} sheets={} box={}", t, shape.join(","), self.sheets, bx.join(","));
        let per: Vec<String> =
            (0..self.dim()).filter(|&i| self.domain.periodic[i]).map(|i| i.to_string()).collect();
        if !per.is_empty() {
            h.push_str(&format!(" periodic={}", per.join(",")));
        }
        h
    }
}

/// Scalar values on every node of a grid at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub grid: GridSpec,
    pub t: f64,
    pub values: Vec<f64>,
    /// `∫ u ρ dx` by the trapezoid rule, accumulated serially.
    pub mass: f64,
}

impl DensityField {
    /// Builds a field and its cached mass from node values and node `ρ`.
    pub fn new(grid: GridSpec, t: f64, values: Vec<f64>, rho: &[f64]) -> Result<Self> {
        if values.len() != grid.len() || rho.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: values.len() });
        }
        let mass = Self::integrate(&grid, &values, rho);
        Ok(Self { grid, t, values, mass })
    }

    /// Field with unit reference density.
    pub fn with_unit_density(grid: GridSpec, t: f64, values: Vec<f64>) -> Result<Self> {
        let rho = vec![1.0; grid.len()];
        Self::new(grid, t, values, &rho)
    }

    /// Serial trapezoid integral `Σ wᵢ ρᵢ uᵢ`.
    pub fn integrate(grid: &GridSpec, values: &[f64], rho: &[f64]) -> f64 {
        let mut m = 0.0;
        for i in 0..values.len() {
            m += grid.weight(i) * rho[i] * values[i];
        }
        m
    }

    /// Sum over sheets (for display): values of a single-sheet layout.
    pub fn sheet_sum(&self) -> Vec<f64> {
        let n = self.grid.nodes_per_sheet();
        (0..n).map(|i| (0..self.grid.sheets).map(|s| self.values[s * n + i]).sum()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_grid(n: usize) -> GridSpec {
        GridSpec::new(DomainBox::aperiodic(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(), vec![n, n], 1).unwrap()
    }

    #[test]
    fn ravel_inverts_unravel() {
        let g = GridSpec::new(DomainBox::aperiodic(vec![0.0; 3], vec![1.0; 3]).unwrap(), vec![4, 5, 6], 2).unwrap();
        for idx in 0..g.len() {
            let (s, ks) = g.unravel(idx);
            assert_eq!(g.ravel(s, &ks), idx);
        }
    }

    #[test]
    fn weights_sum_to_box_volume() {
        let g = unit_grid(7);
        let total: f64 = g.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
        let p = GridSpec::new(DomainBox::new(vec![0.0], vec![2.0], vec![true]).unwrap(), vec![8], 1).unwrap();
        assert!((p.weights().iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn multilinear_reproduces_linear_functions() {
        let g = unit_grid(5);
        let f = |x: &[f64]| 2.0 * x[0] - 3.0 * x[1] + 0.5;
        let vals: Vec<f64> = (0..g.len()).map(|i| f(&g.node_coords(i))).collect();
        for p in [[0.1, 0.7], [0.0, 1.0], [0.999, 0.25]] {
            let v: f64 = g.multilinear(&p, 0).iter().map(|&(j, w)| w * vals[j]).sum();
            assert!((v - f(&p)).abs() < 1e-12);
        }
    }

    #[test]
    fn periodic_axis_wraps_in_stencils() {
        let g = GridSpec::new(DomainBox::new(vec![0.0], vec![1.0], vec![true]).unwrap(), vec![4], 1).unwrap();
        let st = g.multilinear(&[0.875], 0);
        assert_eq!(st.len(), 2);
        assert!(st.contains(&(3, 0.5)) && st.contains(&(0, 0.5)));
        assert_eq!(g.cell_of(&[0.99], 0), Some(0));
    }

    #[test]
    fn cell_of_rejects_points_outside() {
        let g = unit_grid(5);
        assert_eq!(g.cell_of(&[1.2, 0.5], 0), None);
        assert_eq!(g.cell_of(&[0.5, 0.5], 0), Some(g.ravel(0, &[2, 2])));
    }

    #[test]
    fn grid_validation() {
        let b = DomainBox::aperiodic(vec![0.0], vec![1.0]).unwrap();
        assert!(GridSpec::new(b.clone(), vec![3], 1).is_err());
        assert!(GridSpec::new(b.clone(), vec![4], 0).is_err());
        assert!(GridSpec::new(b, vec![MAX_NODES + 1], 1).is_err());
    }

    #[test]
    fn mass_matches_recomputation() {
        let g = unit_grid(6);
        let vals: Vec<f64> = (0..g.len()).map(|i| i as f64 * 0.1).collect();
        let f = DensityField::with_unit_density(g.clone(), 0.0, vals.clone()).unwrap();
        let again = DensityField::integrate(&g, &vals, &vec![1.0; g.len()]);
        assert!((f.mass - again).abs() <= 1e-12);
    }
}
