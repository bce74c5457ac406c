//! Uniform cell-centred grids in one or two dimensions and the per-cell
//! fields that live on them.
//!
//! Cells are numbered `i + nx * j`. One-dimensional grids carry a dummy
//! second axis with a single cell and unit spacing so that cell volumes and
//! face areas come out of the same formulas in both cases.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    extents: [usize; 2],
    spacing: [f64; 2],
    origin: [f64; 2],
}

/// A face on the boundary of the grid: the adjacent cell and the face area.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFace {
    pub cell: usize,
    pub area: f64,
    /// Distance from the cell centre to the face.
    pub half_width: f64,
}

impl Grid {
    pub fn new(dim: usize, extents: &[usize], spacing: &[f64], origin: &[f64]) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::Grid(format!("dimension must be 1 or 2, got {dim}")));
        }
        if extents.len() != dim || spacing.len() != dim || origin.len() != dim {
            return Err(Error::Grid(format!(
                "expected {dim} extents/spacings/origins, got {}/{}/{}",
                extents.len(),
                spacing.len(),
                origin.len()
            )));
        }
        if extents.iter().any(|&n| n == 0) {
            return Err(Error::Grid("extents must be at least 1".into()));
        }
        if spacing.iter().any(|&h| !(h > 0.0) || !h.is_finite()) {
            return Err(Error::Grid("spacing must be positive and finite".into()));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::NonFinite("grid origin"));
        }
        let mut g = Grid {
            dim,
            extents: [1, 1],
            spacing: [1.0, 1.0],
            origin: [0.0, 0.0],
        };
        for a in 0..dim {
            g.extents[a] = extents[a];
            g.spacing[a] = spacing[a];
            g.origin[a] = origin[a];
        }
        Ok(g)
    }

    /// Grid covering `[0, length]` per axis with `n` cells, cell centres at `(i + 1/2) h`.
    pub fn unit_box(dim: usize, extents: &[usize], lengths: &[f64]) -> Result<Self> {
        if extents.len() != lengths.len() {
            return Err(Error::Grid("extents and lengths differ in length".into()));
        }
        let spacing: Vec<f64> = extents
            .iter()
            .zip(lengths)
            .map(|(&n, &l)| l / n as f64)
            .collect();
        let origin: Vec<f64> = spacing.iter().map(|h| 0.5 * h).collect();
        Grid::new(dim, extents, &spacing, &origin)
    }

    /// A one-dimensional grid of `n` cells on `[0, length]`.
    pub fn line(n: usize, length: f64) -> Result<Self> {
        Grid::unit_box(1, &[n], &[length])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents[..self.dim]
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing[..self.dim]
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin[..self.dim]
    }

    pub fn nx(&self) -> usize {
        self.extents[0]
    }

    pub fn ny(&self) -> usize {
        self.extents[1]
    }

    pub fn hx(&self) -> f64 {
        self.spacing[0]
    }

    pub fn hy(&self) -> f64 {
        self.spacing[1]
    }

    pub fn cell_count(&self) -> usize {
        self.extents[0] * self.extents[1]
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing[..self.dim].iter().product()
    }

    pub fn domain_volume(&self) -> f64 {
        self.cell_volume() * self.cell_count() as f64
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.extents[0] * j
    }

    pub fn coords(&self, c: usize) -> (usize, usize) {
        (c % self.extents[0], c / self.extents[0])
    }

    /// Physical coordinates of the centre of cell `c`.
    pub fn center(&self, c: usize) -> [f64; 2] {
        let (i, j) = self.coords(c);
        [
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
        ]
    }

    /// Physical extent of the domain along each axis.
    pub fn lengths(&self) -> [f64; 2] {
        [
            self.extents[0] as f64 * self.spacing[0],
            self.extents[1] as f64 * self.spacing[1],
        ]
    }

    /// All boundary faces in a fixed order: x-low, x-high, then (2D) y-low, y-high.
    pub fn boundary_faces(&self) -> Vec<BoundaryFace> {
        let (nx, ny) = (self.extents[0], self.extents[1]);
        let mut faces = Vec::new();
        let ax = if self.dim == 2 { self.spacing[1] } else { 1.0 };
        for j in 0..ny {
            faces.push(BoundaryFace {
                cell: self.index(0, j),
                area: ax,
                half_width: 0.5 * self.spacing[0],
            });
            faces.push(BoundaryFace {
                cell: self.index(nx - 1, j),
                area: ax,
                half_width: 0.5 * self.spacing[0],
            });
        }
        if self.dim == 2 {
            for i in 0..nx {
                faces.push(BoundaryFace {
                    cell: self.index(i, 0),
                    area: self.spacing[0],
                    half_width: 0.5 * self.spacing[1],
                });
                faces.push(BoundaryFace {
                    cell: self.index(i, ny - 1),
                    area: self.spacing[0],
                    half_width: 0.5 * self.spacing[1],
                });
            }
        }
        faces
    }

    /// Interior faces as `(left cell, right cell, area, centre distance)`.
    pub fn interior_faces(&self) -> Vec<(usize, usize, f64, f64)> {
        let (nx, ny) = (self.extents[0], self.extents[1]);
        let mut faces = Vec::new();
        let ax = if self.dim == 2 { self.spacing[1] } else { 1.0 };
        for j in 0..ny {
            for i in 0..nx.saturating_sub(1) {
                faces.push((self.index(i, j), self.index(i + 1, j), ax, self.spacing[0]));
            }
        }
        if self.dim == 2 {
            for j in 0..ny - 1 {
                for i in 0..nx {
                    faces.push((self.index(i, j), self.index(i, j + 1), self.spacing[0], self.spacing[1]));
                }
            }
        }
        faces
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cell_count() {
            return Err(Error::Mismatch(format!(
                "scalar field has {} values for {} cells",
                values.len(),
                grid.cell_count()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("scalar field"));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        ScalarField {
            grid,
            values: vec![value; grid.cell_count()],
        }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut([f64; 2]) -> f64) -> Self {
        let values = (0..grid.cell_count()).map(|c| f(grid.center(c))).collect();
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
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

    /// `∫_Ω f dx` by the midpoint rule.
    pub fn integral(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().sum::<f64>()
    }

    pub fn l2_inner(&self, other: &ScalarField) -> Result<f64> {
        check_same(&self.grid, &other.grid)?;
        Ok(self.grid.cell_volume() * dot(&self.values, &other.values))
    }

    pub fn add(&self, other: &ScalarField) -> Result<ScalarField> {
        check_same(&self.grid, &other.grid)?;
        Ok(ScalarField {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn scale(&self, s: f64) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// A field with `ncomp` components per cell, stored cell-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    ncomp: usize,
    values: Vec<f64>,
}

impl VectorField {
    pub fn new(grid: Grid, ncomp: usize, values: Vec<f64>) -> Result<Self> {
        if ncomp == 0 || values.len() != grid.cell_count() * ncomp {
            return Err(Error::Mismatch(format!(
                "vector field has {} values for {} cells x {} components",
                values.len(),
                grid.cell_count(),
                ncomp
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("vector field"));
        }
        Ok(VectorField { grid, ncomp, values })
    }

    pub fn zeros(grid: Grid, ncomp: usize) -> Self {
        VectorField {
            grid,
            ncomp,
            values: vec![0.0; grid.cell_count() * ncomp],
        }
    }

    /// Every cell carries the same vector.
    pub fn uniform(grid: Grid, v: &[f64]) -> Self {
        let mut values = Vec::with_capacity(grid.cell_count() * v.len());
        for _ in 0..grid.cell_count() {
            values.extend_from_slice(v);
        }
        VectorField {
            grid,
            ncomp: v.len(),
            values,
        }
    }

    pub fn from_fn(grid: Grid, ncomp: usize, mut f: impl FnMut([f64; 2], &mut [f64])) -> Self {
        let mut values = vec![0.0; grid.cell_count() * ncomp];
        for (c, chunk) in values.chunks_mut(ncomp).enumerate() {
            f(grid.center(c), chunk);
        }
        VectorField { grid, ncomp, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
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

    pub fn cell(&self, c: usize) -> &[f64] {
        &self.values[c * self.ncomp..(c + 1) * self.ncomp]
    }

    pub fn cell_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.values[c * self.ncomp..(c + 1) * self.ncomp]
    }

    /// Component `k` as a scalar field.
    pub fn component(&self, k: usize) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().skip(k).step_by(self.ncomp).copied().collect(),
        }
    }

    pub fn l2_inner(&self, other: &VectorField) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self.grid.cell_volume() * dot(&self.values, &other.values))
    }

    pub fn l2_norm(&self) -> f64 {
        (self.grid.cell_volume() * dot(&self.values, &self.values)).sqrt()
    }

    pub fn add(&self, other: &VectorField) -> Result<VectorField> {
        self.check_compatible(other)?;
        Ok(self.zip_map(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &VectorField) -> Result<VectorField> {
        self.check_compatible(other)?;
        Ok(self.zip_map(other, |a, b| a - b))
    }

    pub fn scale(&self, s: f64) -> VectorField {
        VectorField {
            grid: self.grid,
            ncomp: self.ncomp,
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    /// Cell-volume weighted mean of each component.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.ncomp];
        for chunk in self.values.chunks(self.ncomp) {
            for (a, b) in m.iter_mut().zip(chunk) {
                *a += b;
            }
        }
        let n = self.grid.cell_count() as f64;
        m.iter_mut().for_each(|a| *a /= n);
        m
    }

    fn zip_map(&self, other: &VectorField, f: impl Fn(f64, f64) -> f64) -> VectorField {
        VectorField {
            grid: self.grid,
            ncomp: self.ncomp,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    fn check_compatible(&self, other: &VectorField) -> Result<()> {
        check_same(&self.grid, &other.grid)?;
        if self.ncomp != other.ncomp {
            return Err(Error::Mismatch(format!(
                "component counts differ: {} vs {}",
                self.ncomp, other.ncomp
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_same(a: &Grid, b: &Grid) -> Result<()> {
    if a != b {
        return Err(Error::Mismatch("fields live on different grids".into()));
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_count_and_volume() {
        let g = Grid::unit_box(2, &[4, 3], &[1.0, 0.6]).unwrap();
        assert_eq!(g.cell_count(), 12);
        assert!((g.cell_volume() - 0.25 * 0.2).abs() < 1e-15);
        assert!((g.domain_volume() - 0.6).abs() < 1e-14);
        assert_eq!(g.boundary_faces().len(), 2 * 3 + 2 * 4);
        assert_eq!(g.interior_faces().len(), 3 * 3 + 4 * 2);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::new(3, &[2, 2, 2], &[1.0; 3], &[0.0; 3]).is_err());
        assert!(Grid::new(1, &[0], &[1.0], &[0.0]).is_err());
        assert!(Grid::new(1, &[4], &[-1.0], &[0.0]).is_err());
        assert!(Grid::new(2, &[4], &[1.0], &[0.0]).is_err());
    }

    #[test]
    fn mixing_grids_is_rejected() {
        let a = Grid::line(4, 1.0).unwrap();
        let b = Grid::line(5, 1.0).unwrap();
        let fa = VectorField::zeros(a, 2);
        let fb = VectorField::zeros(b, 2);
        assert!(fa.add(&fb).is_err());
        assert!(ScalarField::constant(a, 1.0)
            .l2_inner(&ScalarField::constant(b, 1.0))
            .is_err());
    }

    #[test]
    fn non_finite_values_rejected() {
        let g = Grid::line(2, 1.0).unwrap();
        assert!(ScalarField::new(g, vec![0.0, f64::NAN]).is_err());
        assert!(VectorField::new(g, 1, vec![f64::INFINITY, 0.0]).is_err());
    }
}
