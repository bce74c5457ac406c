//! Time-incremental minimization and the static penalized problem.
//!
//! One increment minimizes, over per-cell dictionary weights `W` and the
//! phase field `Λ`,
//!
//! ```text
//! J(W, Λ) = Σ vol·[φ•ν − h·m + c·Λ + τ·reg·|Λ|^{2q} + τ ζ((Λ − Λ_prev)/τ)]
//!         + E_ms(m) + (κ/2)‖Λ − L•ν‖²_{H⁻¹},     c = (𝕀(w_prev) − θ_c)a♭,
//! ```
//!
//! by Gauss–Seidel sweeps over the two blocks. Each block is solved by
//! accelerated proximal gradient: projection onto the simplex for `W`, the
//! dissipation prox for `Λ`.

use serde::{Deserialize, Serialize};

use crate::apg::{self, ApgOptions, Composite};
use crate::audit;
use crate::elliptic::{Magnetostatics, Solvers};
use crate::energy::{self, gibbs_with_field, GibbsEvaluation};
use crate::error::{Error, Result};
use crate::grid::{check_same, Grid, ScalarField, VectorField};
use crate::material::Material;
use crate::measure::{moments, project_simplex_into, AtomicYoungMeasure, Dictionary};
use crate::schedule::Schedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepOrder {
    NuFirst,
    LambdaFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Relative Frank–Wolfe gap at which the ν-step stops.
    pub tol_nu: f64,
    /// Relative gradient-mapping residual at which the λ-step stops.
    pub tol_lambda: f64,
    /// Relative objective decrease per sweep below which the alternation stops.
    pub tol_alt: f64,
    pub max_nu_iter: usize,
    pub max_lambda_iter: usize,
    pub max_sweeps: usize,
    pub order: SweepOrder,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol_nu: 1e-10,
            tol_lambda: 1e-10,
            tol_alt: 1e-10,
            max_nu_iter: 2000,
            max_lambda_iter: 500,
            max_sweeps: 100,
            order: SweepOrder::NuFirst,
        }
    }
}

/// Data of one time increment.
#[derive(Debug, Clone, Copy)]
pub struct IncrementProblem<'a> {
    pub k: usize,
    pub tau: f64,
    pub nu_prev: &'a AtomicYoungMeasure,
    pub lambda_prev: &'a VectorField,
    pub w_prev: &'a ScalarField,
    pub material: &'a Material,
    pub schedule: &'a Schedule,
    pub solvers: &'a Solvers,
    pub dictionary: &'a Dictionary,
    /// Weight of the `τ|λ|^{2q}` regularization.
    pub reg_weight: f64,
    pub options: SolverOptions,
}

#[derive(Debug, Clone)]
pub struct IncrementSolution {
    pub nu: AtomicYoungMeasure,
    /// Dense dictionary weights of `nu`, before pruning.
    pub weights: Vec<f64>,
    pub lambda: VectorField,
    pub objective: f64,
    /// Objective after each sweep, starting with the warm start.
    pub trace: Vec<f64>,
    pub sweeps: usize,
    pub nu_gap: f64,
    pub lambda_residual: f64,
    pub converged: bool,
    /// Worst flow-rule variational-inequality margin over the default test directions.
    pub flow_rule_residual: f64,
}

#[derive(Debug, Clone)]
pub struct NuStep {
    pub nu: AtomicYoungMeasure,
    pub weights: Vec<f64>,
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct LambdaStep {
    pub lambda: VectorField,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct StaticSolution {
    pub nu: AtomicYoungMeasure,
    pub weights: Vec<f64>,
    pub lambda: VectorField,
    pub magnetostatics: Magnetostatics,
    pub gibbs: GibbsEvaluation,
    /// `‖λ − L•ν‖_{H⁻¹}`.
    pub constraint_gap: f64,
    pub nu_gap: f64,
    pub iterations: usize,
}

/// Everything the block subproblems share.
struct Model<'a> {
    grid: Grid,
    d: usize,
    vol: f64,
    natoms: usize,
    /// `L(s_a)` per atom, `d + 1` entries each.
    lifted: Vec<f64>,
    atoms: &'a Dictionary,
    /// Linear cost per cell and atom: `vol·(φ(s_a) − h_c·s_a [+ c_c·L(s_a)])`.
    cost: Vec<f64>,
    /// `vol·c` per cell.
    coupling: Vec<f64>,
    kappa: f64,
    solvers: &'a Solvers,
}

impl<'a> Model<'a> {
    fn new(
        grid: Grid,
        dict: &'a Dictionary,
        mat: &Material,
        h: &[f64],
        c: &[f64],
        coupling_in_cost: bool,
        kappa: f64,
        solvers: &'a Solvers,
    ) -> Self {
        let d = dict.dim();
        let n = d + 1;
        let na = dict.len();
        let vol = grid.cell_volume();
        let mut lifted = vec![0.0; na * n];
        for a in 0..na {
            dict.lift(a, &mut lifted[a * n..(a + 1) * n]);
        }
        let phis: Vec<f64> = (0..na).map(|a| energy::phi(dict.atom(a), mat)).collect();
        let ncell = grid.cell_count();
        let mut cost = vec![0.0; ncell * na];
        for cell in 0..ncell {
            let hc = &h[cell * d..(cell + 1) * d];
            let cc = &c[cell * n..(cell + 1) * n];
            for a in 0..na {
                let s = dict.atom(a);
                let mut v = phis[a] - s.iter().zip(hc).map(|(x, y)| x * y).sum::<f64>();
                if coupling_in_cost {
                    v += lifted[a * n..(a + 1) * n].iter().zip(cc).map(|(x, y)| x * y).sum::<f64>();
                }
                cost[cell * na + a] = vol * v;
            }
        }
        Model {
            grid,
            d,
            vol,
            natoms: na,
            lifted,
            atoms: dict,
            cost,
            coupling: c.iter().map(|x| vol * x).collect(),
            kappa,
            solvers,
        }
    }

    fn ncomp(&self) -> usize {
        self.d + 1
    }

    /// `L•ν` per cell for dense weights.
    fn lnu(&self, w: &[f64]) -> Vec<f64> {
        let n = self.ncomp();
        let mut out = vec![0.0; self.grid.cell_count() * n];
        for (cell, row) in w.chunks(self.natoms).enumerate() {
            let o = &mut out[cell * n..(cell + 1) * n];
            for (a, &x) in row.iter().enumerate() {
                if x != 0.0 {
                    for j in 0..n {
                        o[j] += x * self.lifted[a * n + j];
                    }
                }
            }
        }
        out
    }

    fn magnetization(&self, lnu: &[f64]) -> Vec<f64> {
        let n = self.ncomp();
        lnu.chunks(n).flat_map(|l| l[..self.d].to_vec()).collect()
    }

    /// `κ·vol·(−Δ⁻¹)(Λ − L•ν)` and the penalty value.
    fn penalty(&self, lambda: &[f64], lnu: &[f64]) -> (Vec<f64>, f64) {
        if self.kappa == 0.0 {
            return (vec![0.0; lambda.len()], 0.0);
        }
        let r: Vec<f64> = lambda.iter().zip(lnu).map(|(a, b)| a - b).collect();
        let mut g = self.solvers.poisson.hminus_gradient(&r, self.ncomp());
        g.iter_mut().for_each(|x| *x *= self.kappa);
        let value = 0.5 * g.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>();
        (g, value)
    }

    /// Smooth ν-part `Σ cost·W + E_ms + penalty` and its gradient in `W`.
    fn nu_objective(&self, w: &[f64], lambda: Option<&[f64]>, grad: &mut [f64]) -> f64 {
        let n = self.ncomp();
        let d = self.d;
        let na = self.natoms;
        let lnu = self.lnu(w);
        let m = self.magnetization(&lnu);
        let mut hdem = vec![0.0; m.len()];
        let ems = if self.solvers.magnetostatic.is_enabled() {
            self.solvers.magnetostatic.field_into(&m, &mut hdem);
            self.solvers.magnetostatic.energy_of(&m, &hdem)
        } else {
            0.0
        };
        let (pg, pen) = match lambda {
            Some(l) => self.penalty(l, &lnu),
            None => (vec![0.0; lnu.len()], 0.0),
        };
        let mut lin = 0.0;
        for cell in 0..self.grid.cell_count() {
            let hd = &hdem[cell * d..(cell + 1) * d];
            let pc = &pg[cell * n..(cell + 1) * n];
            for a in 0..na {
                let i = cell * na + a;
                lin += self.cost[i] * w[i];
                let s = self.atoms.atom(a);
                let l = &self.lifted[a * n..(a + 1) * n];
                let mut g = self.cost[i];
                for k in 0..d {
                    g += self.vol * hd[k] * s[k];
                }
                for j in 0..n {
                    g -= pc[j] * l[j];
                }
                grad[i] = g;
            }
        }
        lin + ems + pen
    }

    /// Per-cell Frank–Wolfe gap `Σ_c (⟨g_c, w_c⟩ − min_a g_ca)`.
    fn fw_gap(&self, w: &[f64], grad: &[f64]) -> f64 {
        w.chunks(self.natoms)
            .zip(grad.chunks(self.natoms))
            .map(|(wc, gc)| {
                let min = gc.iter().cloned().fold(f64::INFINITY, f64::min);
                wc.iter().zip(gc).map(|(x, g)| x * g).sum::<f64>() - min
            })
            .sum::<f64>()
            .max(0.0)
    }

    /// Per-cell vertex minimizing the linear cost (lowest index on ties).
    fn vertex_start(&self) -> Vec<f64> {
        let na = self.natoms;
        let mut w = vec![0.0; self.cost.len()];
        for (cell, row) in self.cost.chunks(na).enumerate() {
            let mut best = 0;
            for a in 1..na {
                if row[a] < row[best] {
                    best = a;
                }
            }
            w[cell * na + best] = 1.0;
        }
        w
    }
}

struct NuProblem<'m, 'a> {
    model: &'m Model<'a>,
    lambda: Option<&'m [f64]>,
    scratch: Vec<f64>,
}

impl Composite for NuProblem<'_, '_> {
    fn smooth(&mut self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        Ok(self.model.nu_objective(x, self.lambda, grad))
    }

    fn prox(&mut self, y: &[f64], _step: f64, out: &mut [f64]) -> Result<()> {
        let na = self.model.natoms;
        for (yc, oc) in y.chunks(na).zip(out.chunks_mut(na)) {
            project_simplex_into(yc, oc, &mut self.scratch);
        }
        Ok(())
    }

    fn nonsmooth(&mut self, _x: &[f64]) -> Result<f64> {
        Ok(0.0)
    }

    fn residual(&mut self, x: &[f64], grad: &[f64], _step: f64, objective: f64) -> Result<f64> {
        Ok(self.model.fw_gap(x, grad) / (1.0 + objective.abs()))
    }
}

struct LambdaProblem<'m, 'a> {
    model: &'m Model<'a>,
    mat: &'m Material,
    lnu: &'m [f64],
    lambda_prev: &'m [f64],
    tau: f64,
    reg: f64,
    scratch: Vec<f64>,
}

impl LambdaProblem<'_, '_> {
    fn reg_term(&self, lambda: &[f64], grad: Option<&mut [f64]>) -> f64 {
        if self.reg == 0.0 {
            return 0.0;
        }
        let n = self.model.ncomp();
        let q = self.mat.q;
        let scale = self.tau * self.reg * self.model.vol;
        let mut value = 0.0;
        let mut grad = grad;
        for (cell, l) in lambda.chunks(n).enumerate() {
            let l2: f64 = l.iter().map(|x| x * x).sum();
            value += l2.powf(q);
            if let Some(g) = grad.as_deref_mut() {
                let f = scale * 2.0 * q * l2.powf(q - 1.0);
                for j in 0..n {
                    g[cell * n + j] += f * l[j];
                }
            }
        }
        scale * value
    }
}

impl Composite for LambdaProblem<'_, '_> {
    fn smooth(&mut self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        let (pg, pen) = self.model.penalty(x, self.lnu);
        let mut lin = 0.0;
        for i in 0..x.len() {
            lin += self.model.coupling[i] * x[i];
            grad[i] = self.model.coupling[i] + pg[i];
        }
        let reg = self.reg_term(x, Some(grad));
        Ok(lin + pen + reg)
    }

    fn prox(&mut self, y: &[f64], step: f64, out: &mut [f64]) -> Result<()> {
        let n = self.model.ncomp();
        let sigma = step * self.model.vol / self.tau;
        self.scratch.resize(n, 0.0);
        let mut v = vec![0.0; n];
        for c in 0..y.len() / n {
            let r = c * n..(c + 1) * n;
            for j in 0..n {
                self.scratch[j] = (y[c * n + j] - self.lambda_prev[c * n + j]) / self.tau;
            }
            energy::prox_into(&self.scratch, sigma, self.mat, &mut v)?;
            for (j, i) in r.enumerate() {
                out[i] = self.lambda_prev[i] + self.tau * v[j];
            }
        }
        Ok(())
    }

    fn nonsmooth(&mut self, x: &[f64]) -> Result<f64> {
        let n = self.model.ncomp();
        let mut v = vec![0.0; n];
        let mut total = 0.0;
        for c in 0..x.len() / n {
            for j in 0..n {
                v[j] = (x[c * n + j] - self.lambda_prev[c * n + j]) / self.tau;
            }
            total += energy::zeta(&v, self.mat);
        }
        Ok(self.model.vol * self.tau * total)
    }

    fn residual(&mut self, x: &[f64], grad: &[f64], step: f64, _objective: f64) -> Result<f64> {
        let trial: Vec<f64> = x.iter().zip(grad).map(|(a, g)| a - step * g).collect();
        let mut p = vec![0.0; x.len()];
        self.prox(&trial, step, &mut p)?;
        let gm = x.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() / step;
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let cells = self.model.grid.cell_count() as f64;
        Ok(gm / (gnorm + self.model.vol * cells.sqrt()))
    }
}

/// Coupling vector `c = (𝕀(w) − θ_c)a♭` per cell.
pub fn coupling_field(w: &ScalarField, mat: &Material) -> Vec<f64> {
    let n = mat.lambda_dim();
    let mut c = vec![0.0; w.grid().cell_count() * n];
    for (cell, &wv) in w.values().iter().enumerate() {
        c[cell * n + n - 1] = (energy::theta_of_enthalpy(wv, mat) - mat.theta_c) * mat.a0;
    }
    c
}

/// Same as [`coupling_field`] but for a temperature field.
fn coupling_from_theta(theta: &ScalarField, mat: &Material) -> Vec<f64> {
    let n = mat.lambda_dim();
    let mut c = vec![0.0; theta.grid().cell_count() * n];
    for (cell, &th) in theta.values().iter().enumerate() {
        c[cell * n + n - 1] = (th - mat.theta_c) * mat.a0;
    }
    c
}

/// Internal solver state for one increment.
struct Increment<'a> {
    prob: IncrementProblem<'a>,
    model: Model<'a>,
    lip_nu: f64,
    lip_lambda: f64,
}

impl<'a> Increment<'a> {
    fn new(prob: IncrementProblem<'a>) -> Result<Self> {
        let grid = *prob.nu_prev.grid();
        check_same(&grid, prob.lambda_prev.grid())?;
        check_same(&grid, prob.w_prev.grid())?;
        let mat = prob.material;
        if prob.dictionary.dim() != mat.dim || prob.nu_prev.dim() != mat.dim || grid.dim() != mat.dim {
            return Err(Error::Mismatch("material, grid, measure and dictionary dimensions differ".into()));
        }
        if prob.lambda_prev.ncomp() != mat.lambda_dim() {
            return Err(Error::Mismatch(format!("lambda needs {} components", mat.lambda_dim())));
        }
        if !(prob.tau > 0.0) {
            return Err(Error::Schedule(format!("time step must be positive, got {}", prob.tau)));
        }
        let t = prob.k as f64 * prob.tau;
        let (h, _) = prob.schedule.field_at(t)?;
        if h.len() != mat.dim {
            return Err(Error::Mismatch("field dimension differs from material dimension".into()));
        }
        let hfield: Vec<f64> = (0..grid.cell_count()).flat_map(|_| h.clone()).collect();
        let c = coupling_field(prob.w_prev, mat);
        let model = Model::new(grid, prob.dictionary, mat, &hfield, &c, false, mat.kappa_pen, prob.solvers);
        Ok(Increment {
            prob,
            model,
            lip_nu: 1.0,
            lip_lambda: 1.0,
        })
    }

    fn warm_weights(&self) -> Vec<f64> {
        self.prob
            .dictionary
            .weights_of(self.prob.nu_prev)
            .unwrap_or_else(|| self.model.vertex_start())
    }

    fn nu_block(&mut self, w: Vec<f64>, lambda: &[f64]) -> Result<(Vec<f64>, f64, usize, bool)> {
        let mut p = NuProblem {
            model: &self.model,
            lambda: Some(lambda),
            scratch: Vec::new(),
        };
        let out = apg::minimize(
            &mut p,
            w,
            ApgOptions {
                max_iter: self.prob.options.max_nu_iter,
                tol: self.prob.options.tol_nu,
                lipschitz: self.lip_nu,
            },
        )?;
        self.lip_nu = out.lipschitz;
        Ok((out.x, out.residual, out.iterations, out.converged))
    }

    fn lambda_block(&mut self, lambda: Vec<f64>, w: &[f64]) -> Result<(Vec<f64>, f64, usize, bool)> {
        let lnu = self.model.lnu(w);
        let mut p = LambdaProblem {
            model: &self.model,
            mat: self.prob.material,
            lnu: &lnu,
            lambda_prev: self.prob.lambda_prev.values(),
            tau: self.prob.tau,
            reg: self.prob.reg_weight,
            scratch: Vec::new(),
        };
        let out = apg::minimize(
            &mut p,
            lambda,
            ApgOptions {
                max_iter: self.prob.options.max_lambda_iter,
                tol: self.prob.options.tol_lambda,
                lipschitz: self.lip_lambda,
            },
        )?;
        self.lip_lambda = out.lipschitz;
        Ok((out.x, out.residual, out.iterations, out.converged))
    }

    /// Full objective `J(W, Λ)`.
    fn objective(&self, w: &[f64], lambda: &[f64]) -> Result<f64> {
        let mut g = vec![0.0; w.len()];
        let nu_part = self.model.nu_objective(w, Some(lambda), &mut g);
        let lnu = self.model.lnu(w);
        let mut p = LambdaProblem {
            model: &self.model,
            mat: self.prob.material,
            lnu: &lnu,
            lambda_prev: self.prob.lambda_prev.values(),
            tau: self.prob.tau,
            reg: self.prob.reg_weight,
            scratch: Vec::new(),
        };
        let lin: f64 = self.model.coupling.iter().zip(lambda).map(|(a, b)| a * b).sum();
        Ok(nu_part + lin + p.reg_term(lambda, None) + p.nonsmooth(lambda)?)
    }

    fn nu_gap(&self, w: &[f64], lambda: &[f64], objective: f64) -> f64 {
        let mut g = vec![0.0; w.len()];
        self.model.nu_objective(w, Some(lambda), &mut g);
        self.model.fw_gap(w, &g) / (1.0 + objective.abs())
    }

    fn lambda_residual(&mut self, lambda: &[f64], w: &[f64]) -> Result<f64> {
        let lnu = self.model.lnu(w);
        let mut p = LambdaProblem {
            model: &self.model,
            mat: self.prob.material,
            lnu: &lnu,
            lambda_prev: self.prob.lambda_prev.values(),
            tau: self.prob.tau,
            reg: self.prob.reg_weight,
            scratch: Vec::new(),
        };
        let mut g = vec![0.0; lambda.len()];
        p.smooth(lambda, &mut g)?;
        p.residual(lambda, &g, 1.0 / self.lip_lambda, 0.0)
    }
}

/// Minimizes the λ-part of the increment objective for fixed `nu_fixed`.
pub fn lambda_step(prob: &IncrementProblem<'_>, nu_fixed: &AtomicYoungMeasure) -> Result<LambdaStep> {
    let mut inc = Increment::new(*prob)?;
    let w = prob
        .dictionary
        .weights_of(nu_fixed)
        .ok_or_else(|| Error::Mismatch("measure atoms are not in the dictionary".into()))?;
    let (x, residual, iterations, converged) = inc.lambda_block(prob.lambda_prev.values().to_vec(), &w)?;
    Ok(LambdaStep {
        lambda: VectorField::new(*prob.lambda_prev.grid(), prob.material.lambda_dim(), x)?,
        residual,
        iterations,
        converged,
    })
}

/// Minimizes the ν-part of the increment objective for fixed `lambda_fixed`.
pub fn nu_step(prob: &IncrementProblem<'_>, lambda_fixed: &VectorField) -> Result<NuStep> {
    let mut inc = Increment::new(*prob)?;
    let w0 = inc.warm_weights();
    let (w, gap, iterations, converged) = inc.nu_block(w0, lambda_fixed.values())?;
    Ok(NuStep {
        nu: prob.dictionary.measure(prob.nu_prev.grid(), &w)?,
        weights: w,
        gap,
        iterations,
        converged,
    })
}

/// Solves one increment by alternating ν- and λ-steps from the previous state.
pub fn incremental_solve(prob: &IncrementProblem<'_>) -> Result<IncrementSolution> {
    let mut inc = Increment::new(*prob)?;
    let opts = prob.options;
    let mut w = inc.warm_weights();
    let mut lambda = prob.lambda_prev.values().to_vec();
    let mut obj = inc.objective(&w, &lambda)?;
    let mut trace = vec![obj];
    let mut converged = false;
    let mut nu_gap = f64::INFINITY;
    let mut lambda_residual = f64::INFINITY;
    let mut sweeps = 0;
    for sweep in 1..=opts.max_sweeps {
        sweeps = sweep;
        match opts.order {
            SweepOrder::NuFirst => {
                w = inc.nu_block(w, &lambda)?.0;
                lambda = inc.lambda_block(lambda, &w)?.0;
            }
            SweepOrder::LambdaFirst => {
                lambda = inc.lambda_block(lambda, &w)?.0;
                w = inc.nu_block(w, &lambda)?.0;
            }
        }
        let next = inc.objective(&w, &lambda)?;
        if next > obj + 1e-12 * (1.0 + obj.abs()) {
            return Err(Error::NonMonotone { before: obj, after: next });
        }
        let decrease = obj - next;
        obj = next;
        trace.push(obj);
        nu_gap = inc.nu_gap(&w, &lambda, obj);
        lambda_residual = inc.lambda_residual(&lambda, &w)?;
        if decrease <= opts.tol_alt * (1.0 + obj.abs()) && nu_gap <= opts.tol_nu && lambda_residual <= opts.tol_lambda {
            converged = true;
            break;
        }
    }
    let grid = *prob.nu_prev.grid();
    let lambda = VectorField::new(grid, prob.material.lambda_dim(), lambda)?;
    let nu = prob.dictionary.measure(&grid, &w)?;
    let flow_rule_residual = audit::flowrule_residual(
        prob,
        &nu,
        &lambda,
        &audit::default_directions(prob.lambda_prev, &lambda, prob.tau, audit::DEFAULT_SEED),
    )?
    .worst;
    Ok(IncrementSolution {
        nu,
        weights: w,
        lambda,
        objective: obj,
        trace,
        sweeps,
        nu_gap,
        lambda_residual,
        converged,
        flow_rule_residual,
    })
}

/// Minimizes the static penalized Gibbs energy for temperature `theta` and field `h`.
///
/// The phase field enters only through `c·λ + (κ/2)‖λ − L•ν‖²_{H⁻¹}`, whose
/// minimizer is `λ = L•ν + Δc/κ`; the remaining problem in ν is solved on the
/// dictionary.
pub fn static_solve(
    mat: &Material,
    h: &VectorField,
    theta: &ScalarField,
    kappa: f64,
    solvers: &Solvers,
    dict: &Dictionary,
    options: &SolverOptions,
) -> Result<StaticSolution> {
    let grid = *theta.grid();
    check_same(&grid, h.grid())?;
    if theta.values().iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("temperature"));
    }
    if !(kappa > 0.0) {
        return Err(Error::Material(format!("kappa must be positive, got {kappa}")));
    }
    if dict.dim() != mat.dim || h.ncomp() != mat.dim {
        return Err(Error::Mismatch("dimension mismatch between material, field and dictionary".into()));
    }
    let n = mat.lambda_dim();
    let c = coupling_from_theta(theta, mat);
    let model = Model::new(grid, dict, mat, h.values(), &c, true, 0.0, solvers);
    let mut p = NuProblem {
        model: &model,
        lambda: None,
        scratch: Vec::new(),
    };
    let out = apg::minimize(
        &mut p,
        model.vertex_start(),
        ApgOptions {
            max_iter: options.max_nu_iter.max(1),
            tol: options.tol_nu,
            lipschitz: 1.0,
        },
    )?;
    let w = out.x;
    let nu = dict.measure(&grid, &w)?;
    let lnu = moments(&nu).lnu;
    let mut lambda = lnu.values().to_vec();
    for k in 0..n {
        let comp: Vec<f64> = (0..grid.cell_count()).map(|cell| c[cell * n + k]).collect();
        if comp.iter().all(|&x| x == 0.0) {
            continue;
        }
        let lap = solvers.poisson.apply_laplacian(&comp);
        for cell in 0..grid.cell_count() {
            lambda[cell * n + k] += lap[cell] / kappa;
        }
    }
    let lambda = VectorField::new(grid, n, lambda)?;
    let mut mk = mat.clone();
    mk.kappa_pen = kappa;
    let gibbs = gibbs_with_field(&nu, &lambda, theta, h, solvers, &mk)?;
    let magnetostatics = solvers.magnetostatic.solve_magnetostatic(&moments(&nu).m)?;
    let constraint_gap = solvers.poisson.hminus_norm(&lambda.sub(&lnu)?)?;
    Ok(StaticSolution {
        nu,
        weights: w,
        lambda,
        magnetostatics,
        gibbs,
        constraint_gap,
        nu_gap: out.residual,
        iterations: out.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::Activation;
    use crate::measure::dirac;
    use approx::assert_abs_diff_eq;

    struct Setup {
        grid: Grid,
        mat: Material,
        schedule: Schedule,
        solvers: Solvers,
        dict: Dictionary,
    }

    fn setup(n: usize, h: f64, magnetostatics: bool) -> Setup {
        let grid = Grid::line(n, 1.0).unwrap();
        let mat = Material::uniaxial(1);
        let schedule = Schedule::constant(vec![h], 0.5, 0.0, 1.0, 0.1).unwrap();
        let solvers = Solvers::new(&grid, mat.mu0, 4.0, magnetostatics).unwrap();
        let dict = Dictionary::default_for(1, mat.default_r_max()).unwrap();
        Setup {
            grid,
            mat,
            schedule,
            solvers,
            dict,
        }
    }

    #[test]
    fn paramagnetic_static_has_zero_magnetization() {
        let s = setup(4, 0.0, true);
        let theta = ScalarField::constant(s.grid, 1.5);
        let out = static_solve(
            &s.mat,
            &VectorField::zeros(s.grid, 1),
            &theta,
            s.mat.kappa_pen,
            &s.solvers,
            &s.dict,
            &SolverOptions::default(),
        )
        .unwrap();
        for &m in moments(&out.nu).m.values() {
            assert_abs_diff_eq!(m, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn ferromagnetic_static_uses_easy_axis_atoms() {
        // Without magnetostatics and field each cell is an LP whose optimum is an atom near ±t*.
        let s = setup(3, 0.0, false);
        let theta = ScalarField::constant(s.grid, 0.5);
        let out = static_solve(
            &s.mat,
            &VectorField::zeros(s.grid, 1),
            &theta,
            s.mat.kappa_pen,
            &s.solvers,
            &s.dict,
            &SolverOptions::default(),
        )
        .unwrap();
        let mut best = (f64::INFINITY, 0.0);
        for a in 0..s.dict.len() {
            let x = s.dict.atom(a)[0];
            let v = energy::psi(&[x], 0.5, &s.mat);
            if v < best.0 {
                best = (v, x.abs());
            }
        }
        for c in 0..3 {
            let (atoms, _) = out.nu.cell(c);
            assert!(atoms.iter().all(|a| (a.abs() - best.1).abs() < 1e-12));
        }
        let lnu = moments(&out.nu).lnu;
        assert_abs_diff_eq!(lnu.cell(0)[1], best.1 * best.1, epsilon = 1e-12);
    }

    #[test]
    fn stick_when_nothing_drives() {
        // κ = 0, θ = θ_c, no regularization: λ stays exactly where it was.
        let mut s = setup(4, 0.3, true);
        s.mat.kappa_pen = 0.0;
        let w = ScalarField::constant(s.grid, energy::enthalpy_of_theta(s.mat.theta_c, &s.mat));
        let nu = dirac(&VectorField::zeros(s.grid, 1), s.dict.r_max()).unwrap();
        let lambda = VectorField::from_fn(s.grid, 2, |x, o| {
            o[0] = x[0];
            o[1] = 0.2;
        });
        let prob = IncrementProblem {
            k: 1,
            tau: 0.1,
            nu_prev: &nu,
            lambda_prev: &lambda,
            w_prev: &w,
            material: &s.mat,
            schedule: &s.schedule,
            solvers: &s.solvers,
            dictionary: &s.dict,
            reg_weight: 0.0,
            options: SolverOptions::default(),
        };
        let out = lambda_step(&prob, &nu).unwrap();
        assert_eq!(out.lambda, lambda);
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let s = setup(6, 0.4, true);
        let theta = 0.5;
        let thetaf = ScalarField::constant(s.grid, theta);
        let st = static_solve(
            &s.mat,
            &VectorField::uniform(s.grid, &[0.4]),
            &thetaf,
            s.mat.kappa_pen,
            &s.solvers,
            &s.dict,
            &SolverOptions::default(),
        )
        .unwrap();
        let w = ScalarField::constant(s.grid, energy::enthalpy_of_theta(theta, &s.mat));
        let prob = IncrementProblem {
            k: 1,
            tau: 0.1,
            nu_prev: &st.nu,
            lambda_prev: &st.lambda,
            w_prev: &w,
            material: &s.mat,
            schedule: &s.schedule,
            solvers: &s.solvers,
            dictionary: &s.dict,
            reg_weight: 0.0,
            options: SolverOptions::default(),
        };
        let out = incremental_solve(&prob).unwrap();
        assert!(out.converged);
        assert_eq!(out.lambda, st.lambda);
        let m0 = moments(&st.nu);
        let m1 = moments(&out.nu);
        for (a, b) in m0.lnu.values().iter().zip(m1.lnu.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-6);
        }
    }

    #[test]
    fn trace_is_non_increasing_under_load() {
        let mut s = setup(8, 0.0, true);
        s.mat.activation = Activation::Ball { rho: 0.05 };
        s.schedule = Schedule::triangle(&[1.0], 1.5, 1.0, 1, 0.5, 0.0, 0.05).unwrap();
        let thetaf = ScalarField::constant(s.grid, 0.5);
        let st = static_solve(
            &s.mat,
            &VectorField::zeros(s.grid, 1),
            &thetaf,
            s.mat.kappa_pen,
            &s.solvers,
            &s.dict,
            &SolverOptions::default(),
        )
        .unwrap();
        let w = ScalarField::constant(s.grid, energy::enthalpy_of_theta(0.5, &s.mat));
        let prob = IncrementProblem {
            k: 4,
            tau: 0.05,
            nu_prev: &st.nu,
            lambda_prev: &st.lambda,
            w_prev: &w,
            material: &s.mat,
            schedule: &s.schedule,
            solvers: &s.solvers,
            dictionary: &s.dict,
            reg_weight: 1.0,
            options: SolverOptions::default(),
        };
        let out = incremental_solve(&prob).unwrap();
        assert!(out.trace.windows(2).all(|p| p[1] <= p[0] + 1e-13 * (1.0 + p[0].abs())));
        assert!(out.trace.last().unwrap() < &out.trace[0]);
        assert!(out.converged, "sweeps {} gap {} res {}", out.sweeps, out.nu_gap, out.lambda_residual);
        assert!(out.flow_rule_residual >= -1e-7);
    }
}
