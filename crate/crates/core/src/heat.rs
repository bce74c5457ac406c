//! One implicit step of the enthalpy equation with Robin boundary data.
//!
//! Finite-volume form per cell `c`:
//!
//! ```text
//! vol(w_c − w_c^{k−1})/τ + Σ_faces 𝒦·area/dist·(w_c − w_n) + B_c 𝕀(w_c)
//!     = B_c θ_ext + vol·ξ(r_c) + s_c 𝕀(w_c),
//! ```
//!
//! with `B_c = Σ b·area` over the boundary faces of the cell, `r = (λ^k − λ^{k−1})/τ`
//! and `s_c = vol·a♭·r_c`. The nonlinearity is resolved by Picard iteration on
//! the secant form `𝕀(w) ≈ (𝕀(w̃)/w̃)·w`: the absorbing part `B + s⁻` goes into
//! the matrix and the producing part `s⁺𝕀(w̃)` stays on the right-hand side,
//! so every inner system is a symmetric M-matrix with non-negative data.

use crate::energy;
use crate::error::{Error, Result};
use crate::grid::{check_same, Grid, ScalarField, VectorField};
use crate::material::Material;

pub const HEAT_TOL: f64 = 1e-10;
pub const HEAT_MAX_ITER: usize = 200;
/// Entries above this (negated) count as non-negativity violations.
pub const NONNEG_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub struct HeatStepProblem<'a> {
    pub tau: f64,
    pub w_prev: &'a ScalarField,
    pub lambda: &'a VectorField,
    pub lambda_prev: &'a VectorField,
    pub material: &'a Material,
    pub theta_ext: f64,
    pub b_coeff: f64,
}

#[derive(Debug, Clone)]
pub struct HeatStep {
    pub w: ScalarField,
    pub iterations: usize,
    /// Relative residual of the nonlinear finite-volume equations at `w`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonnegativityReport {
    pub min: f64,
    pub violations: Vec<usize>,
}

/// Per-cell data of a step that does not depend on the unknown.
struct Sources {
    /// `vol·ξ(r)`.
    dissipation: Vec<f64>,
    /// `vol·a♭·r`.
    coupling: Vec<f64>,
    /// `Σ b·area` over boundary faces.
    robin: Vec<f64>,
}

fn sources(prob: &HeatStepProblem<'_>) -> Result<Sources> {
    let grid = *prob.w_prev.grid();
    check_same(&grid, prob.lambda.grid())?;
    check_same(&grid, prob.lambda_prev.grid())?;
    let mat = prob.material;
    let n = mat.lambda_dim();
    if prob.lambda.ncomp() != n || prob.lambda_prev.ncomp() != n {
        return Err(Error::Mismatch(format!("lambda needs {n} components")));
    }
    if !(prob.tau > 0.0) {
        return Err(Error::Schedule(format!("time step must be positive, got {}", prob.tau)));
    }
    if !(prob.b_coeff >= 0.0) || !(prob.theta_ext >= 0.0) {
        return Err(Error::Schedule("boundary coefficient and exterior temperature must be non-negative".into()));
    }
    let vol = grid.cell_volume();
    let a = mat.coupling_vector();
    let mut r = vec![0.0; n];
    let mut dissipation = vec![0.0; grid.cell_count()];
    let mut coupling = vec![0.0; grid.cell_count()];
    for c in 0..grid.cell_count() {
        for j in 0..n {
            r[j] = (prob.lambda.cell(c)[j] - prob.lambda_prev.cell(c)[j]) / prob.tau;
        }
        dissipation[c] = vol * energy::dissipation_rate(&r, mat);
        coupling[c] = vol * r.iter().zip(&a).map(|(x, y)| x * y).sum::<f64>();
    }
    let mut robin = vec![0.0; grid.cell_count()];
    for f in grid.boundary_faces() {
        robin[f.cell] += prob.b_coeff * f.area;
    }
    Ok(Sources {
        dissipation,
        coupling,
        robin,
    })
}

/// `𝕀(w)/w`, continued by its limit `1/c₀` at `w = 0`.
fn secant(w: f64, mat: &Material) -> f64 {
    if w > 1e-300 {
        let s = energy::theta_of_enthalpy(w, mat) / w;
        if s.is_finite() && s > 0.0 {
            return s;
        }
    }
    1.0 / mat.cv_c0
}

/// Face transmissibilities `𝒦·area/dist` at the lagged state.
fn transmissibilities(grid: &Grid, lambda: &VectorField, w: &[f64], mat: &Material) -> Vec<(usize, usize, f64)> {
    grid.interior_faces()
        .into_iter()
        .map(|(l, r, area, dist)| {
            let kl = energy::conductivity(lambda.cell(l), w[l], mat);
            let kr = energy::conductivity(lambda.cell(r), w[r], mat);
            (l, r, 0.5 * (kl + kr) * area / dist)
        })
        .collect()
}

/// Symmetric banded matrix stored by rows as `band[i][k] = A[i][i − k]`.
struct Banded {
    n: usize,
    bw: usize,
    band: Vec<f64>,
}

impl Banded {
    fn new(n: usize, bw: usize) -> Self {
        Banded {
            n,
            bw,
            band: vec![0.0; n * (bw + 1)],
        }
    }

    fn at(&mut self, i: usize, j: usize) -> &mut f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        &mut self.band[i * (self.bw + 1) + (i - j)]
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.band[i * (self.bw + 1) + (i - j)]
        }
    }

    /// In-place banded Cholesky followed by the two triangular solves.
    fn solve(mut self, rhs: &mut [f64]) -> Result<()> {
        let (n, bw) = (self.n, self.bw);
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let mut s = self.get(i, j);
                let k0 = i.saturating_sub(bw).max(j.saturating_sub(bw));
                for k in k0..j {
                    s -= self.get(i, k) * self.get(j, k);
                }
                if i == j {
                    if !(s > 0.0) {
                        return Err(Error::NoConvergence {
                            what: "heat system factorization",
                            residual: s,
                            iterations: i,
                        });
                    }
                    *self.at(i, i) = s.sqrt();
                } else {
                    *self.at(i, j) = s / self.get(j, j);
                }
            }
        }
        for i in 0..n {
            let mut s = rhs[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.get(i, k) * rhs[k];
            }
            rhs[i] = s / self.get(i, i);
        }
        for i in (0..n).rev() {
            let mut s = rhs[i];
            for k in i + 1..(i + bw + 1).min(n) {
                s -= self.get(k, i) * rhs[k];
            }
            rhs[i] = s / self.get(i, i);
        }
        Ok(())
    }
}

/// Residual of the nonlinear equations at `w`, relative to the size of the data.
fn nonlinear_residual(prob: &HeatStepProblem<'_>, src: &Sources, w: &[f64]) -> f64 {
    let grid = *prob.w_prev.grid();
    let mat = prob.material;
    let vol = grid.cell_volume();
    let wp = prob.w_prev.values();
    let mut res = vec![0.0; w.len()];
    let mut scale = vec![0.0; w.len()];
    for c in 0..w.len() {
        let th = energy::theta_of_enthalpy(w[c], mat);
        let terms = [
            vol * (w[c] - wp[c]) / prob.tau,
            src.robin[c] * th,
            -src.robin[c] * prob.theta_ext,
            -src.dissipation[c],
            -src.coupling[c] * th,
        ];
        res[c] = terms.iter().sum();
        scale[c] = terms.iter().map(|t| t.abs()).sum::<f64>() + vol * w[c].abs() / prob.tau;
    }
    for (l, r, t) in transmissibilities(&grid, prob.lambda, w, mat) {
        let flux = t * (w[l] - w[r]);
        res[l] += flux;
        res[r] -= flux;
        scale[l] += flux.abs();
        scale[r] += flux.abs();
    }
    let num = res.iter().map(|x| x * x).sum::<f64>().sqrt();
    let den = scale.iter().map(|x| x * x).sum::<f64>().sqrt();
    num / den.max(f64::MIN_POSITIVE)
}

/// Advances the enthalpy by one implicit step.
pub fn heat_step(prob: &HeatStepProblem<'_>) -> Result<HeatStep> {
    let src = sources(prob)?;
    let grid = *prob.w_prev.grid();
    let mat = prob.material;
    let vol = grid.cell_volume();
    let n = grid.cell_count();
    let wp = prob.w_prev.values();
    if wp.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("enthalpy"));
    }
    let bw = grid
        .interior_faces()
        .iter()
        .map(|&(l, r, _, _)| r.abs_diff(l))
        .max()
        .unwrap_or(0);
    let mut w = wp.to_vec();
    for it in 1..=HEAT_MAX_ITER {
        let mut a = Banded::new(n, bw);
        let mut rhs = vec![0.0; n];
        for c in 0..n {
            let s = src.coupling[c];
            let th = energy::theta_of_enthalpy(w[c], mat);
            *a.at(c, c) += vol / prob.tau + (src.robin[c] + (-s).max(0.0)) * secant(w[c], mat);
            rhs[c] = vol * wp[c] / prob.tau + src.robin[c] * prob.theta_ext + src.dissipation[c] + s.max(0.0) * th;
        }
        for (l, r, t) in transmissibilities(&grid, prob.lambda, &w, mat) {
            *a.at(l, l) += t;
            *a.at(r, r) += t;
            *a.at(l, r) -= t;
        }
        a.solve(&mut rhs)?;
        let change = rhs.iter().zip(&w).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let size = rhs.iter().map(|a| a * a).sum::<f64>().sqrt();
        w = rhs;
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("enthalpy"));
        }
        if change <= HEAT_TOL * (1.0 + size) {
            let residual = nonlinear_residual(prob, &src, &w);
            return Ok(HeatStep {
                w: ScalarField::new(grid, w)?,
                iterations: it,
                residual,
            });
        }
    }
    Err(Error::NoConvergence {
        what: "heat step fixed point",
        residual: nonlinear_residual(prob, &src, &w),
        iterations: HEAT_MAX_ITER,
    })
}

/// Both sides of the tested-by-one energy identity
/// `Σ vol(w^k − w^{k−1}) = τ[∫ξ + ∫𝕀(w^k)a♭·r + Σ b·area(θ_ext − 𝕀(w^k))]`.
pub fn heat_bookkeeping(prob: &HeatStepProblem<'_>, w: &ScalarField) -> Result<(f64, f64)> {
    let src = sources(prob)?;
    check_same(prob.w_prev.grid(), w.grid())?;
    let vol = w.grid().cell_volume();
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for (c, (&wk, &wp)) in w.values().iter().zip(prob.w_prev.values()).enumerate() {
        let th = energy::theta_of_enthalpy(wk, prob.material);
        lhs += vol * (wk - wp);
        rhs += prob.tau * (src.dissipation[c] + src.coupling[c] * th + src.robin[c] * (prob.theta_ext - th));
    }
    Ok((lhs, rhs))
}

/// Minimum of `w` and the cells below `−1e−12`.
pub fn check_nonnegativity(w: &ScalarField) -> NonnegativityReport {
    let min = w.values().iter().cloned().fold(f64::INFINITY, f64::min);
    let violations = w
        .values()
        .iter()
        .enumerate()
        .filter(|(_, &x)| x < -NONNEG_TOL)
        .map(|(c, _)| c)
        .collect();
    NonnegativityReport { min, violations }
}
