//! Uniform lattices on `(0,1)` and `(0,1)²` and grid functions on them.
//!
//! Nodes are ordered lexicographically by coordinate tuple: in 2D the node
//! `(ix, iy)` has flat index `ix * n + iy`, so `x` is the slow axis.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;

/// Value standing in for an absent obstacle from below (semantically `-∞`).
pub const NO_OBSTACLE_BELOW: f64 = -1e9;
/// Value standing in for an absent obstacle from above (semantically `+∞`).
pub const NO_OBSTACLE_ABOVE: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    n: usize,
}

impl Grid {
    pub fn new(dim: usize, n_per_axis: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidDimension(dim));
        }
        if n_per_axis < 3 {
            return Err(Error::InvalidResolution(n_per_axis));
        }
        Ok(Self { dim, n: n_per_axis })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_per_axis(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.n - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Per-axis lattice indices of a flat node index.
    pub fn axis_indices(&self, node: usize) -> [usize; 2] {
        match self.dim {
            1 => [node, 0],
            _ => [node / self.n, node % self.n],
        }
    }

    pub fn flat_index(&self, ix: usize, iy: usize) -> usize {
        match self.dim {
            1 => ix,
            _ => ix * self.n + iy,
        }
    }

    fn axis_coord(&self, i: usize) -> f64 {
        // i / (n-1) rather than i * h: shared nodes of refined grids then
        // carry bit-identical coordinates.
        i as f64 / (self.n - 1) as f64
    }

    /// Coordinates of a node; the second entry is 0 in 1D.
    pub fn coords(&self, node: usize) -> [f64; 2] {
        let [ix, iy] = self.axis_indices(node);
        match self.dim {
            1 => [self.axis_coord(ix), 0.0],
            _ => [self.axis_coord(ix), self.axis_coord(iy)],
        }
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        let last = self.n - 1;
        let [ix, iy] = self.axis_indices(node);
        match self.dim {
            1 => ix == 0 || ix == last,
            _ => ix == 0 || ix == last || iy == 0 || iy == last,
        }
    }

    pub fn boundary_mask(&self) -> Vec<bool> {
        (0..self.len()).map(|i| self.is_boundary(i)).collect()
    }

    pub fn interior_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&i| !self.is_boundary(i))
    }

    pub fn boundary_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&i| self.is_boundary(i))
    }

    /// Axis neighbours of an interior node: `[x-, x+]` in 1D and
    /// `[x-, x+, y-, y+]` in 2D.
    pub fn axis_neighbors(&self, node: usize) -> ([usize; 4], usize) {
        match self.dim {
            1 => ([node - 1, node + 1, 0, 0], 2),
            _ => ([node - self.n, node + self.n, node - 1, node + 1], 4),
        }
    }

    /// Axis and diagonal neighbours of an interior node (2 in 1D, 8 in 2D).
    pub fn stencil_neighbors(&self, node: usize) -> ([usize; 8], usize) {
        match self.dim {
            1 => ([node - 1, node + 1, 0, 0, 0, 0, 0, 0], 2),
            _ => {
                let n = self.n;
                (
                    [
                        node - n,
                        node + n,
                        node - 1,
                        node + 1,
                        node - n - 1,
                        node - n + 1,
                        node + n - 1,
                        node + n + 1,
                    ],
                    8,
                )
            }
        }
    }

    /// Trapezoid quadrature weight of a node.
    pub fn node_volume(&self, node: usize) -> f64 {
        let h = self.spacing();
        let last = self.n - 1;
        let [ix, iy] = self.axis_indices(node);
        let w = |i: usize| if i == 0 || i == last { 0.5 * h } else { h };
        match self.dim {
            1 => w(ix),
            _ => w(ix) * w(iy),
        }
    }
}

/// One real value per grid node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Evaluates `f(x, y)` at every node (`y = 0` in 1D).
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.len());
        for node in 0..grid.len() {
            let [x, y] = grid.coords(node);
            let value = f(x, y);
            if !value.is_finite() {
                let coords = grid.coords(node)[..grid.dim()].to_vec();
                return Err(Error::Sampling {
                    node,
                    coords,
                    value,
                });
            }
            values.push(value);
        }
        Ok(Self { grid, values })
    }

    pub fn sample(grid: Grid, expr: &Expr) -> Result<Self> {
        Self::from_fn(grid, |x, y| expr.eval(x, y))
    }

    pub fn grid(&self) -> Grid {
        self.grid
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

    pub fn at(&self, node: usize) -> f64 {
        self.values[node]
    }

    pub fn ensure_same_grid(&self, other: &ScalarField) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn negated(&self) -> Self {
        self.map(|v| -v)
    }

    /// `max_i |self_i - other_i|` over all nodes.
    pub fn sup_distance(&self, other: &ScalarField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Value at the node nearest to `(x, y)`.
    pub fn value_near(&self, x: f64, y: f64) -> f64 {
        let n = self.grid.n_per_axis();
        let idx = |t: f64| ((t * (n - 1) as f64).round().max(0.0) as usize).min(n - 1);
        self.values[self.grid.flat_index(idx(x), idx(y))]
    }

    /// Writes `x[,y],value` rows in node order with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        if self.grid.dim() == 1 {
            writeln!(out, "x,value")?;
        } else {
            writeln!(out, "x,y,value")?;
        }
        for (node, v) in self.values.iter().enumerate() {
            let [x, y] = self.grid.coords(node);
            if self.grid.dim() == 1 {
                writeln!(out, "{:.16e},{:.16e}", x, v)?;
            } else {
                writeln!(out, "{:.16e},{:.16e},{:.16e}", x, y, v)?;
            }
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is ascii")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_grid() {
        let g = Grid::new(1, 3).unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(g.coords(0)[0], 0.0);
        assert_eq!(g.coords(1)[0], 0.5);
        assert_eq!(g.coords(2)[0], 1.0);
        assert_eq!(g.boundary_mask(), vec![true, false, true]);
    }

    #[test]
    fn spacing_1d() {
        let g = Grid::new(1, 201).unwrap();
        assert_eq!(g.spacing(), 0.005);
        assert!((g.spacing() * 200.0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perimeter_count_2d() {
        let g = Grid::new(2, 5).unwrap();
        assert_eq!(g.len(), 25);
        assert_eq!(g.boundary_nodes().count(), 16);
        assert_eq!(g.interior_nodes().count(), 9);
    }

    #[test]
    fn rejects_small_resolution_and_bad_dim() {
        assert_eq!(Grid::new(1, 2), Err(Error::InvalidResolution(2)));
        assert_eq!(Grid::new(3, 5), Err(Error::InvalidDimension(3)));
    }

    #[test]
    fn lexicographic_order_2d() {
        let g = Grid::new(2, 4).unwrap();
        let coords: Vec<_> = (0..g.len()).map(|i| g.coords(i)).collect();
        for w in coords.windows(2) {
            assert!(w[0] < w[1], "{:?} !< {:?}", w[0], w[1]);
        }
    }

    #[test]
    fn sample_example_profiles() {
        let g = Grid::new(1, 201).unwrap();
        let v = ScalarField::sample(g, &Expr::parse("x*(1−x)").unwrap()).unwrap();
        assert_eq!(v.value_near(0.5, 0.0), 0.25);
        let u = ScalarField::sample(g, &Expr::parse("−5*x*(1−x)+1").unwrap()).unwrap();
        assert_eq!(u.value_near(0.5, 0.0), -0.25);
        let z = ScalarField::sample(g, &Expr::parse("0").unwrap()).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sampling_reports_non_finite_node() {
        let g = Grid::new(1, 5).unwrap();
        let err = ScalarField::sample(g, &Expr::parse("1/x").unwrap()).unwrap_err();
        match err {
            Error::Sampling { node, .. } => assert_eq!(node, 0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn refined_grids_share_coordinates_exactly() {
        let expr = Expr::parse("sin(3*x) + x^2*y - abs(y-0.3)").unwrap();
        for dim in [1, 2] {
            let coarse = Grid::new(dim, 9).unwrap();
            let fine = Grid::new(dim, 17).unwrap();
            let a = ScalarField::sample(coarse, &expr).unwrap();
            let b = ScalarField::sample(fine, &expr).unwrap();
            for node in 0..coarse.len() {
                let [ix, iy] = coarse.axis_indices(node);
                let fnode = fine.flat_index(2 * ix, 2 * iy);
                assert_eq!(coarse.coords(node), fine.coords(fnode));
                assert_eq!(a.at(node), b.at(fnode));
            }
        }
    }

    #[test]
    fn csv_layout() {
        let g = Grid::new(2, 3).unwrap();
        let f = ScalarField::from_fn(g, |x, y| x + 10.0 * y).unwrap();
        let csv = f.to_csv_string();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "x,y,value");
        assert_eq!(lines.len(), 10);
        assert_eq!(
            lines[2],
            "0.0000000000000000e0,5.0000000000000000e-1,5.0000000000000000e0"
        );
    }

    #[test]
    fn node_volumes_integrate_one() {
        for dim in [1, 2] {
            let g = Grid::new(dim, 11).unwrap();
            let total: f64 = (0..g.len()).map(|i| g.node_volume(i)).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }
}
