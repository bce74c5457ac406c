//! Per-cell atomic Young measures over magnetization space.
//!
//! A measure stores, for every cell, a short list of atoms `sᵢ ∈ ℝ^d` and
//! probability weights `wᵢ`. Optimization runs on a fixed [`Dictionary`] of
//! atoms shared by all cells, with a dense weight matrix; [`Dictionary::measure`]
//! turns such a matrix into a compact measure by pruning negligible weights.

use crate::error::{Error, Result};
use crate::grid::{Grid, VectorField};

/// Weights below this value are dropped after optimization.
pub const PRUNE_THRESHOLD: f64 = 1e-14;

/// Tolerance on per-cell weight sums.
pub const SIMPLEX_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct AtomicYoungMeasure {
    grid: Grid,
    dim: usize,
    r_max: f64,
    /// `offsets[c]..offsets[c + 1]` indexes the atoms of cell `c`.
    offsets: Vec<usize>,
    /// Flat atom coordinates, `dim` per atom.
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

/// First and second moments of a measure: `m = id•ν` and `L•ν = (m, |m|²•ν)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentPair {
    pub m: VectorField,
    pub lnu: VectorField,
}

impl AtomicYoungMeasure {
    /// Builds a measure from per-cell `(atoms, weights)`, atoms given as flat coordinates.
    pub fn from_cells(grid: Grid, dim: usize, r_max: f64, cells: Vec<(Vec<f64>, Vec<f64>)>) -> Result<Self> {
        if cells.len() != grid.cell_count() {
            return Err(Error::Mismatch(format!(
                "{} cells of atoms for a grid with {} cells",
                cells.len(),
                grid.cell_count()
            )));
        }
        let mut offsets = Vec::with_capacity(cells.len() + 1);
        offsets.push(0);
        let mut atoms = Vec::new();
        let mut weights = Vec::new();
        for (a, w) in cells {
            if a.len() != w.len() * dim {
                return Err(Error::Mismatch("atom coordinates do not match weight count".into()));
            }
            atoms.extend(a);
            weights.extend(w);
            offsets.push(weights.len());
        }
        let nu = AtomicYoungMeasure {
            grid,
            dim,
            r_max,
            offsets,
            atoms,
            weights,
        };
        nu.validate()?;
        Ok(nu)
    }

    fn validate(&self) -> Result<()> {
        if self.atoms.iter().chain(&self.weights).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("Young measure"));
        }
        for c in 0..self.grid.cell_count() {
            let (atoms, w) = self.cell(c);
            if w.is_empty() {
                return Err(Error::Mismatch(format!("cell {c} has no atoms")));
            }
            if w.iter().any(|&x| x < 0.0) {
                return Err(Error::Mismatch(format!("cell {c} has a negative weight")));
            }
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::Mismatch(format!("cell {c} weights sum to {sum}")));
            }
            for s in atoms.chunks(self.dim) {
                let norm = s.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > self.r_max * (1.0 + 1e-12) {
                    return Err(Error::AtomOutsideBall {
                        norm,
                        r_max: self.r_max,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    /// Atoms (flat) and weights of cell `c`.
    pub fn cell(&self, c: usize) -> (&[f64], &[f64]) {
        let (a, b) = (self.offsets[c], self.offsets[c + 1]);
        (&self.atoms[a * self.dim..b * self.dim], &self.weights[a..b])
    }

    /// Largest deviation of a per-cell weight sum from one.
    pub fn simplex_defect(&self) -> f64 {
        (0..self.grid.cell_count())
            .map(|c| {
                let w = self.cell(c).1;
                let neg = w.iter().fold(0.0f64, |acc, &x| acc.max(-x));
                neg.max((w.iter().sum::<f64>() - 1.0).abs())
            })
            .fold(0.0, f64::max)
    }
}

/// Embeds a magnetization field as Dirac measures `ν_x = δ_{m(x)}`.
pub fn dirac(m: &VectorField, r_max: f64) -> Result<AtomicYoungMeasure> {
    let cells = (0..m.grid().cell_count())
        .map(|c| (m.cell(c).to_vec(), vec![1.0]))
        .collect();
    AtomicYoungMeasure::from_cells(*m.grid(), m.ncomp(), r_max, cells)
}

/// Computes `m = Σ wᵢ sᵢ` and `L•ν = Σ wᵢ (sᵢ, |sᵢ|²)` per cell.
pub fn moments(nu: &AtomicYoungMeasure) -> MomentPair {
    let d = nu.dim;
    let grid = nu.grid;
    let n = grid.cell_count();
    let mut m = vec![0.0; n * d];
    let mut lnu = vec![0.0; n * (d + 1)];
    for c in 0..n {
        let (atoms, w) = nu.cell(c);
        let mut second = 0.0;
        for (s, &wi) in atoms.chunks(d).zip(w) {
            for k in 0..d {
                m[c * d + k] += wi * s[k];
            }
            second += wi * s.iter().map(|x| x * x).sum::<f64>();
        }
        lnu[c * (d + 1)..c * (d + 1) + d].copy_from_slice(&m[c * d..(c + 1) * d]);
        lnu[c * (d + 1) + d] = second;
    }
    MomentPair {
        m: VectorField::new(grid, d, m).expect("moments of a valid measure are finite"),
        lnu: VectorField::new(grid, d + 1, lnu).expect("moments of a valid measure are finite"),
    }
}

/// Smallest per-cell Jensen gap `(L•ν)_{d+1} − |m|²`.
pub fn jensen_gap(mp: &MomentPair) -> f64 {
    let d = mp.m.ncomp();
    (0..mp.m.grid().cell_count())
        .map(|c| {
            let m = mp.m.cell(c);
            mp.lnu.cell(c)[d] - m.iter().map(|x| x * x).sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
}

/// `∫_Ω Σᵢ wᵢ |sᵢ|^p dx`.
pub fn pth_moment(nu: &AtomicYoungMeasure, p: f64) -> f64 {
    let vol = nu.grid.cell_volume();
    let d = nu.dim;
    (0..nu.grid.cell_count())
        .map(|c| {
            let (atoms, w) = nu.cell(c);
            atoms
                .chunks(d)
                .zip(w)
                .map(|(s, &wi)| wi * s.iter().map(|x| x * x).sum::<f64>().sqrt().powf(p))
                .sum::<f64>()
        })
        .sum::<f64>()
        * vol
}

/// Euclidean projection onto the probability simplex `{w ≥ 0, Σw = 1}`.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    project_simplex_into(v, &mut out, &mut Vec::new());
    out
}

/// In-place variant of [`project_simplex`] with caller-provided scratch.
pub(crate) fn project_simplex_into(v: &[f64], out: &mut [f64], scratch: &mut Vec<f64>) {
    scratch.clear();
    scratch.extend_from_slice(v);
    scratch.sort_unstable_by(|a, b| b.partial_cmp(a).expect("finite weights"));
    let mut cumsum = 0.0;
    let mut shift = 0.0;
    for (k, &u) in scratch.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            shift = t;
        }
    }
    for (o, &x) in out.iter_mut().zip(v) {
        *o = (x - shift).max(0.0);
    }
}

/// Fixed finite set of candidate atoms shared by all cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    dim: usize,
    r_max: f64,
    atoms: Vec<f64>,
}

impl Dictionary {
    /// `n` points uniformly spaced on `[−r_max, r_max]`.
    pub fn uniform_1d(n: usize, r_max: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Mismatch("a 1D dictionary needs at least two atoms".into()));
        }
        let atoms = (0..n)
            .map(|i| -r_max + 2.0 * r_max * i as f64 / (n - 1) as f64)
            .collect();
        Ok(Dictionary { dim: 1, r_max, atoms })
    }

    /// Origin plus a polar lattice of `n_angles × n_radii` points, radii `r_max·j/n_radii`.
    pub fn polar_2d(n_angles: usize, n_radii: usize, r_max: f64) -> Result<Self> {
        if n_angles == 0 || n_radii == 0 {
            return Err(Error::Mismatch("polar dictionary needs angles and radii".into()));
        }
        let mut atoms = vec![0.0, 0.0];
        for j in 1..=n_radii {
            let r = r_max * j as f64 / n_radii as f64;
            for i in 0..n_angles {
                let a = 2.0 * std::f64::consts::PI * i as f64 / n_angles as f64;
                atoms.push(r * a.cos());
                atoms.push(r * a.sin());
            }
        }
        Ok(Dictionary { dim: 2, r_max, atoms })
    }

    /// The default dictionary: 33 atoms in 1D, 12 × 9 + 1 atoms in 2D.
    pub fn default_for(dim: usize, r_max: f64) -> Result<Self> {
        match dim {
            1 => Dictionary::uniform_1d(33, r_max),
            2 => Dictionary::polar_2d(12, 9, r_max),
            _ => Err(Error::Mismatch(format!("unsupported dimension {dim}"))),
        }
    }

    /// Arbitrary atoms given as flat coordinates.
    pub fn custom(dim: usize, r_max: f64, atoms: Vec<f64>) -> Result<Self> {
        if dim == 0 || atoms.is_empty() || atoms.len() % dim != 0 {
            return Err(Error::Mismatch("atom coordinates must be a non-empty multiple of dim".into()));
        }
        for s in atoms.chunks(dim) {
            let norm = s.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !norm.is_finite() || norm > r_max * (1.0 + 1e-12) {
                return Err(Error::AtomOutsideBall { norm, r_max });
            }
        }
        Ok(Dictionary { dim, r_max, atoms })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn len(&self) -> usize {
        self.atoms.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atom(&self, a: usize) -> &[f64] {
        &self.atoms[a * self.dim..(a + 1) * self.dim]
    }

    /// `L(s) = (s, |s|²)` for atom `a`, written into `out`.
    pub fn lift(&self, a: usize, out: &mut [f64]) {
        let s = self.atom(a);
        out[..self.dim].copy_from_slice(s);
        out[self.dim] = s.iter().map(|x| x * x).sum();
    }

    /// Index of the atom closest to `m` (lowest index on ties).
    pub fn nearest(&self, m: &[f64]) -> usize {
        let mut best = (0, f64::INFINITY);
        for a in 0..self.len() {
            let d2: f64 = self.atom(a).iter().zip(m).map(|(x, y)| (x - y) * (x - y)).sum();
            if d2 < best.1 {
                best = (a, d2);
            }
        }
        best.0
    }

    /// Converts a dense `cells × atoms` weight matrix into a measure, pruning
    /// weights below [`PRUNE_THRESHOLD`] and renormalizing each cell.
    pub fn measure(&self, grid: &Grid, weights: &[f64]) -> Result<AtomicYoungMeasure> {
        let na = self.len();
        if weights.len() != grid.cell_count() * na {
            return Err(Error::Mismatch("weight matrix does not match grid and dictionary".into()));
        }
        let cells = weights
            .chunks(na)
            .map(|row| {
                let mut atoms = Vec::new();
                let mut w = Vec::new();
                for (a, &x) in row.iter().enumerate() {
                    if x >= PRUNE_THRESHOLD {
                        atoms.extend_from_slice(self.atom(a));
                        w.push(x);
                    }
                }
                if w.is_empty() {
                    let a = argmax(row);
                    atoms.extend_from_slice(self.atom(a));
                    w.push(1.0);
                }
                let s: f64 = w.iter().sum();
                w.iter_mut().for_each(|x| *x /= s);
                (atoms, w)
            })
            .collect();
        AtomicYoungMeasure::from_cells(*grid, self.dim, self.r_max, cells)
    }

    /// Dense weights of `nu` if all of its atoms belong to the dictionary.
    pub fn weights_of(&self, nu: &AtomicYoungMeasure) -> Option<Vec<f64>> {
        if nu.dim != self.dim {
            return None;
        }
        let na = self.len();
        let mut out = vec![0.0; nu.grid.cell_count() * na];
        for c in 0..nu.grid.cell_count() {
            let (atoms, w) = nu.cell(c);
            for (s, &wi) in atoms.chunks(self.dim).zip(w) {
                let a = self.nearest(s);
                let d: f64 = self.atom(a).iter().zip(s).map(|(x, y)| (x - y).abs()).sum();
                if d > 1e-12 * (1.0 + self.r_max) {
                    return None;
                }
                out[c * na + a] += wi;
            }
        }
        Some(out)
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
