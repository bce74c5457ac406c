//! Dirichlet Poisson solves and the H⁻¹ machinery built on them, plus the
//! reduced magnetostatic problem.
//!
//! Sign convention: `solve` returns `u` with `Δu = f`. The cell-centred
//! Laplacian uses mirrored ghost values `u_ghost = −u` at the boundary, so it
//! is diagonalized by the type-II discrete sine transform and each solve is
//! exact up to rounding.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{check_same, Grid, ScalarField, VectorField};

/// Type-II sine transform of length `n` and its inverse, via a complex FFT of length `2n`.
#[derive(Clone)]
struct SineTransform {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// `(i/2)·exp(−iπk/(2n))` for `k = 0..=n`.
    post: Vec<Complex64>,
    /// `c_k·exp(iπk/(2n))` with the orthogonality weights `c_k`.
    pre: Vec<Complex64>,
}

impl SineTransform {
    fn new(n: usize, planner: &mut FftPlanner<f64>) -> Self {
        let post = (0..=n)
            .map(|k| {
                let a = -PI * k as f64 / (2 * n) as f64;
                Complex64::new(0.0, 0.5) * Complex64::from_polar(1.0, a)
            })
            .collect();
        let pre = (0..=n)
            .map(|k| {
                let c = if k == n { 1.0 / n as f64 } else { 2.0 / n as f64 };
                Complex64::from_polar(c, PI * k as f64 / (2 * n) as f64)
            })
            .collect();
        SineTransform {
            n,
            fwd: planner.plan_fft_forward(2 * n),
            inv: planner.plan_fft_inverse(2 * n),
            post,
            pre,
        }
    }

    /// `X_k = Σ_j x_j sin(πk(j+½)/n)` for `k = 1..=n`, stored at `k − 1`.
    fn forward(&self, x: &mut [f64], buf: &mut Vec<Complex64>) {
        let n = self.n;
        buf.clear();
        buf.extend(x.iter().map(|&v| Complex64::new(v, 0.0)));
        buf.extend(x.iter().rev().map(|&v| Complex64::new(-v, 0.0)));
        self.fwd.process(buf);
        for k in 1..=n {
            x[k - 1] = (self.post[k] * buf[k]).re;
        }
    }

    /// Inverse of [`SineTransform::forward`].
    fn inverse(&self, x: &mut [f64], buf: &mut Vec<Complex64>) {
        let n = self.n;
        buf.clear();
        buf.resize(2 * n, Complex64::new(0.0, 0.0));
        for k in 1..=n {
            buf[k] = self.pre[k] * x[k - 1];
        }
        self.inv.process(buf);
        for j in 0..n {
            x[j] = buf[j].im;
        }
    }
}

/// Eigenvalues `4 sin²(πk/(2n))/h²` of `−Δ_h` in one direction, `k = 1..=n`.
fn eigenvalues(n: usize, h: f64) -> Vec<f64> {
    (1..=n)
        .map(|k| {
            let s = (PI * k as f64 / (2 * n) as f64).sin();
            4.0 * s * s / (h * h)
        })
        .collect()
}

/// Homogeneous Dirichlet problem `Δu = f` on a grid, solved by fast sine transforms.
#[derive(Clone)]
pub struct DirichletPoisson {
    grid: Grid,
    tx: SineTransform,
    ty: Option<SineTransform>,
    eig_x: Vec<f64>,
    eig_y: Vec<f64>,
}

impl std::fmt::Debug for DirichletPoisson {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DirichletPoisson").field("grid", &self.grid).finish()
    }
}

impl DirichletPoisson {
    pub fn new(grid: &Grid) -> Self {
        let mut planner = FftPlanner::new();
        let tx = SineTransform::new(grid.nx(), &mut planner);
        let (ty, eig_y) = if grid.dim() == 2 {
            (
                Some(SineTransform::new(grid.ny(), &mut planner)),
                eigenvalues(grid.ny(), grid.hy()),
            )
        } else {
            (None, vec![0.0])
        };
        DirichletPoisson {
            grid: *grid,
            tx,
            ty,
            eig_x: eigenvalues(grid.nx(), grid.hx()),
            eig_y,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Solves `Δu = f` for one scalar component stored as a flat slice.
    pub fn solve(&self, f: &[f64]) -> Vec<f64> {
        let mut u = f.to_vec();
        self.solve_in_place(&mut u);
        u
    }

    pub(crate) fn solve_in_place(&self, u: &mut [f64]) {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        let mut buf = Vec::with_capacity(2 * nx.max(ny));
        for row in u.chunks_mut(nx) {
            self.tx.forward(row, &mut buf);
        }
        let mut col = vec![0.0; ny];
        if let Some(ty) = &self.ty {
            for i in 0..nx {
                for j in 0..ny {
                    col[j] = u[i + nx * j];
                }
                ty.forward(&mut col, &mut buf);
                for j in 0..ny {
                    u[i + nx * j] = col[j];
                }
            }
        }
        for j in 0..ny {
            for i in 0..nx {
                u[i + nx * j] /= -(self.eig_x[i] + self.eig_y[j]);
            }
        }
        if let Some(ty) = &self.ty {
            for i in 0..nx {
                for j in 0..ny {
                    col[j] = u[i + nx * j];
                }
                ty.inverse(&mut col, &mut buf);
                for j in 0..ny {
                    u[i + nx * j] = col[j];
                }
            }
        }
        for row in u.chunks_mut(nx) {
            self.tx.inverse(row, &mut buf);
        }
    }

    /// Applies the discrete Dirichlet Laplacian `Δ_h`.
    pub fn apply_laplacian(&self, u: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        let (nx, ny) = (g.nx(), g.ny());
        let at = |i: isize, j: isize, c: f64| -> f64 {
            if i < 0 || j < 0 || i >= nx as isize || j >= ny as isize {
                -c
            } else {
                u[i as usize + nx * j as usize]
            }
        };
        let mut out = vec![0.0; u.len()];
        for j in 0..ny as isize {
            for i in 0..nx as isize {
                let c = u[i as usize + nx * j as usize];
                let mut v = (at(i - 1, j, c) - 2.0 * c + at(i + 1, j, c)) / (g.hx() * g.hx());
                if g.dim() == 2 {
                    v += (at(i, j - 1, c) - 2.0 * c + at(i, j + 1, c)) / (g.hy() * g.hy());
                }
                out[i as usize + nx * j as usize] = v;
            }
        }
        out
    }

    pub fn solve_dirichlet(&self, f: &ScalarField) -> Result<ScalarField> {
        check_same(&self.grid, f.grid())?;
        ScalarField::new(self.grid, self.solve(f.values()))
    }

    /// Componentwise `Δ⁻¹` of a cell-major vector field stored as a flat slice.
    pub(crate) fn solve_components(&self, f: &[f64], ncomp: usize) -> Vec<f64> {
        let n = self.grid.cell_count();
        let mut out = vec![0.0; f.len()];
        let mut comp = vec![0.0; n];
        for k in 0..ncomp {
            for c in 0..n {
                comp[c] = f[c * ncomp + k];
            }
            self.solve_in_place(&mut comp);
            for c in 0..n {
                out[c * ncomp + k] = comp[c];
            }
        }
        out
    }

    /// `−Δ⁻¹f` per component, multiplied by the cell volume: the gradient of `½⟨⟨f,f⟩⟩` in `f`.
    pub(crate) fn hminus_gradient(&self, f: &[f64], ncomp: usize) -> Vec<f64> {
        let vol = self.grid.cell_volume();
        let mut u = self.solve_components(f, ncomp);
        u.iter_mut().for_each(|x| *x *= -vol);
        u
    }

    /// `⟨⟨f,g⟩⟩ = ∫ ∇Δ⁻¹f·∇Δ⁻¹g = −∫ Δ⁻¹f·g` summed over components.
    pub fn hminus_inner(&self, f: &VectorField, g: &VectorField) -> Result<f64> {
        check_same(&self.grid, f.grid())?;
        check_same(&self.grid, g.grid())?;
        if f.ncomp() != g.ncomp() {
            return Err(Error::Mismatch("component counts differ".into()));
        }
        let gf = self.hminus_gradient(f.values(), f.ncomp());
        Ok(gf.iter().zip(g.values()).map(|(a, b)| a * b).sum())
    }

    pub fn hminus_norm(&self, f: &VectorField) -> Result<f64> {
        Ok(self.hminus_inner(f, f)?.max(0.0).sqrt())
    }
}

/// Output of a magnetostatic solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Magnetostatics {
    /// Potential on the padded box (row-major over `padded_grid`).
    pub potential: Vec<f64>,
    pub padded_grid: Grid,
    /// `∇u_m` on Ω by central differences.
    pub h_dem: VectorField,
    /// `½∫_Ω m·∇u_m`.
    pub energy: f64,
}

#[derive(Clone, Debug)]
enum Demag {
    Disabled,
    /// Exact first integral `μ₀u′ = χ_Ω m` of the one-dimensional flux equation.
    Line,
    Padded {
        poisson: DirichletPoisson,
        offset: [usize; 2],
    },
}

/// Solver for `div(μ₀∇u − χ_Ω m) = 0` with Ω embedded in a padded Dirichlet box.
#[derive(Clone, Debug)]
pub struct MagnetostaticSolver {
    grid: Grid,
    mu0: f64,
    pad_factor: f64,
    demag: Demag,
}

impl MagnetostaticSolver {
    /// `pad_factor` is the ratio of box side to Ω side per axis.
    pub fn new(grid: &Grid, mu0: f64, pad_factor: f64) -> Result<Self> {
        if !(mu0 > 0.0) {
            return Err(Error::Material(format!("mu0 must be positive, got {mu0}")));
        }
        if !(pad_factor >= 1.0) {
            return Err(Error::Grid(format!("pad factor must be at least 1, got {pad_factor}")));
        }
        let demag = if grid.dim() == 1 {
            Demag::Line
        } else {
            let pad = |n: usize| ((pad_factor - 1.0) * n as f64 / 2.0).ceil() as usize + 1;
            let offset = [pad(grid.nx()), pad(grid.ny())];
            let ext = [grid.nx() + 2 * offset[0], grid.ny() + 2 * offset[1]];
            let origin = [
                grid.origin()[0] - offset[0] as f64 * grid.hx(),
                grid.origin()[1] - offset[1] as f64 * grid.hy(),
            ];
            let boxed = Grid::new(2, &ext, &[grid.hx(), grid.hy()], &origin)?;
            Demag::Padded {
                poisson: DirichletPoisson::new(&boxed),
                offset,
            }
        };
        Ok(MagnetostaticSolver {
            grid: *grid,
            mu0,
            pad_factor,
            demag,
        })
    }

    /// A solver that returns a zero field; used to switch magnetostatics off.
    pub fn disabled(grid: &Grid, mu0: f64) -> Self {
        MagnetostaticSolver {
            grid: *grid,
            mu0,
            pad_factor: 1.0,
            demag: Demag::Disabled,
        }
    }

    pub fn is_enabled(&self) -> bool {
        !matches!(self.demag, Demag::Disabled)
    }

    pub fn pad_factor(&self) -> f64 {
        self.pad_factor
    }

    /// `h_dem = ∇u_m` on Ω for a cell-major magnetization slice.
    pub(crate) fn field_into(&self, m: &[f64], out: &mut [f64]) -> Option<Vec<f64>> {
        let d = self.grid.dim();
        match &self.demag {
            Demag::Disabled => {
                out.iter_mut().for_each(|x| *x = 0.0);
                None
            }
            Demag::Line => {
                for (o, &x) in out.iter_mut().zip(m) {
                    *o = x / self.mu0;
                }
                None
            }
            Demag::Padded { poisson, offset } => {
                let pg = poisson.grid();
                let (nx, ny) = (self.grid.nx(), self.grid.ny());
                let pnx = pg.nx();
                // Central divergence of the zero-extended magnetization.
                let mut rhs = vec![0.0; pg.cell_count()];
                let mval = |i: isize, j: isize, k: usize| -> f64 {
                    if i < 0 || j < 0 || i >= nx as isize || j >= ny as isize {
                        0.0
                    } else {
                        m[(i as usize + nx * j as usize) * d + k]
                    }
                };
                for j in -1..=ny as isize {
                    for i in -1..=nx as isize {
                        let div = (mval(i + 1, j, 0) - mval(i - 1, j, 0)) / (2.0 * self.grid.hx())
                            + (mval(i, j + 1, 1) - mval(i, j - 1, 1)) / (2.0 * self.grid.hy());
                        let pi = (i + offset[0] as isize) as usize;
                        let pj = (j + offset[1] as isize) as usize;
                        rhs[pi + pnx * pj] = div / self.mu0;
                    }
                }
                poisson.solve_in_place(&mut rhs);
                let u = rhs;
                for j in 0..ny {
                    for i in 0..nx {
                        let p = (i + offset[0]) + pnx * (j + offset[1]);
                        let c = i + nx * j;
                        out[c * d] = (u[p + 1] - u[p - 1]) / (2.0 * self.grid.hx());
                        out[c * d + 1] = (u[p + pnx] - u[p - pnx]) / (2.0 * self.grid.hy());
                    }
                }
                Some(u)
            }
        }
    }

    /// Magnetostatic energy `½Σ vol m·h_dem` of a flat magnetization.
    pub(crate) fn energy_of(&self, m: &[f64], h_dem: &[f64]) -> f64 {
        0.5 * self.grid.cell_volume() * m.iter().zip(h_dem).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn solve_magnetostatic(&self, m: &VectorField) -> Result<Magnetostatics> {
        check_same(&self.grid, m.grid())?;
        if m.ncomp() != self.grid.dim() {
            return Err(Error::Mismatch("magnetization must have d components".into()));
        }
        let mut h = vec![0.0; m.values().len()];
        let potential = self.field_into(m.values(), &mut h);
        let energy = self.energy_of(m.values(), &h);
        let (potential, padded_grid) = match (&self.demag, potential) {
            (Demag::Padded { poisson, .. }, Some(u)) => (u, *poisson.grid()),
            _ => {
                // Integrate u′ = h_dem from the left end, where u vanishes.
                let mut u = Vec::with_capacity(self.grid.cell_count());
                let mut acc = 0.0;
                let hx = self.grid.hx();
                for c in 0..self.grid.cell_count() {
                    acc += 0.5 * hx * h[c * m.ncomp()];
                    u.push(acc);
                    acc += 0.5 * hx * h[c * m.ncomp()];
                }
                (u, self.grid)
            }
        };
        Ok(Magnetostatics {
            potential,
            padded_grid,
            h_dem: VectorField::new(self.grid, m.ncomp(), h)?,
            energy,
        })
    }
}

/// The elliptic solvers needed on one grid.
#[derive(Clone, Debug)]
pub struct Solvers {
    pub poisson: DirichletPoisson,
    pub magnetostatic: MagnetostaticSolver,
}

impl Solvers {
    pub fn new(grid: &Grid, mu0: f64, pad_factor: f64, magnetostatics: bool) -> Result<Self> {
        Ok(Solvers {
            poisson: DirichletPoisson::new(grid),
            magnetostatic: if magnetostatics {
                MagnetostaticSolver::new(grid, mu0, pad_factor)?
            } else {
                MagnetostaticSolver::disabled(grid, mu0)
            },
        })
    }
}
