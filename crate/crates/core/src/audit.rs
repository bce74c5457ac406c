//! Runtime checks of the discrete inequalities every accepted step satisfies:
//! the flow-rule variational inequality, the discrete energy inequality,
//! a-priori monitors, semistability of the split-dissipation variant, and the
//! variation of the purely rate-independent component.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::elliptic::Solvers;
use crate::energy::{self, gibbs};
use crate::error::{Error, Result};
use crate::grid::{check_same, ScalarField, VectorField};
use crate::heat::{self, HeatStepProblem};
use crate::increment::{coupling_field, IncrementProblem, SolverOptions};
use crate::material::Material;
use crate::measure::{jensen_gap, moments, pth_moment, AtomicYoungMeasure, Dictionary};
use crate::schedule::Schedule;

pub const DEFAULT_SEED: u64 = 0;
pub const RANDOM_DIRECTIONS: usize = 64;
pub const FLOWRULE_TOL: f64 = 1e-7;
pub const ENERGY_TOL: f64 = 1e-6;
pub const SEMISTABILITY_TOL: f64 = 1e-6;
pub const JENSEN_TOL: f64 = 1e-12;
pub const SIMPLEX_TOL: f64 = 1e-12;
/// Relative drift allowed for a-priori monitors across a refinement ladder.
pub const MONITOR_DRIFT: f64 = 0.2;

/// One time level of a trajectory.
#[derive(Debug, Clone)]
pub struct State {
    pub nu: AtomicYoungMeasure,
    pub lambda: VectorField,
    pub w: ScalarField,
}

/// A stored run: `states[0]` is the initial state, `states[k]` the state at `kτ`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub material: Material,
    pub schedule: Schedule,
    pub dictionary: Dictionary,
    pub tau: f64,
    pub reg_weight: f64,
    /// Temperature held at its initial value instead of solving the heat equation.
    pub isothermal: bool,
    pub states: Vec<State>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.tau
    }

    /// The increment that produced `states[k]` from `states[k − 1]`.
    pub fn increment<'a>(&'a self, k: usize, solvers: &'a Solvers) -> IncrementProblem<'a> {
        let prev = &self.states[k - 1];
        IncrementProblem {
            k,
            tau: self.tau,
            nu_prev: &prev.nu,
            lambda_prev: &prev.lambda,
            w_prev: &prev.w,
            material: &self.material,
            schedule: &self.schedule,
            solvers,
            dictionary: &self.dictionary,
            reg_weight: self.reg_weight,
            options: SolverOptions::default(),
        }
    }

    fn rate(&self, k: usize) -> Result<VectorField> {
        Ok(self.states[k].lambda.sub(&self.states[k - 1].lambda)?.scale(1.0 / self.tau))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowRuleReport {
    /// Smallest `(LHS − RHS)/scale` over the test directions.
    pub worst: f64,
    /// The same quantity at `v = λ̇`, zero by construction.
    pub at_rate: f64,
}

/// Test rates: `0`, `λ̇`, `2λ̇`, `½λ̇`, `−λ̇`, then [`RANDOM_DIRECTIONS`] seeded perturbations of `λ̇`.
pub fn default_directions(lambda_prev: &VectorField, lambda: &VectorField, tau: f64, seed: u64) -> Vec<VectorField> {
    let rate = match lambda.sub(lambda_prev) {
        Ok(d) => d.scale(1.0 / tau),
        Err(_) => return Vec::new(),
    };
    let amp = 1.0 + rate.values().iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let mut out = vec![
        VectorField::zeros(*rate.grid(), rate.ncomp()),
        rate.clone(),
        rate.scale(2.0),
        rate.scale(0.5),
        rate.scale(-1.0),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..RANDOM_DIRECTIONS {
        let mut v = rate.clone();
        v.values_mut().iter_mut().for_each(|x| *x += amp * rng.gen_range(-1.0..1.0));
        out.push(v);
    }
    out
}

/// Discrete flow-rule inequality at `(nu, lambda)` for the increment `prob`:
///
/// ```text
/// ∫[c·(v − λ̇) + ζ(v) − ζ(λ̇) + 2qτ·reg|λ|^{2q−2}λ·(v − λ̇)] + κ⟨⟨λ − L•ν, v − λ̇⟩⟩ ≥ 0
/// ```
///
/// for every test rate `v`, each normalized by the size of its terms.
pub fn flowrule_residual(
    prob: &IncrementProblem<'_>,
    nu: &AtomicYoungMeasure,
    lambda: &VectorField,
    directions: &[VectorField],
) -> Result<FlowRuleReport> {
    let grid = *lambda.grid();
    check_same(&grid, prob.lambda_prev.grid())?;
    check_same(&grid, nu.grid())?;
    if directions.is_empty() {
        return Err(Error::Mismatch("flow-rule check needs at least one direction".into()));
    }
    let mat = prob.material;
    let n = mat.lambda_dim();
    let vol = grid.cell_volume();
    let rate = lambda.sub(prob.lambda_prev)?.scale(1.0 / prob.tau);
    let c = coupling_field(prob.w_prev, mat);
    let diff = lambda.sub(&moments(nu).lnu)?;
    let mut g = prob.solvers.poisson.hminus_gradient(diff.values(), n);
    let q = mat.q;
    for cell in 0..grid.cell_count() {
        let l = lambda.cell(cell);
        let l2: f64 = l.iter().map(|x| x * x).sum();
        let f = if prob.reg_weight == 0.0 {
            0.0
        } else {
            2.0 * q * prob.tau * prob.reg_weight * l2.powf(q - 1.0)
        };
        for j in 0..n {
            let i = cell * n + j;
            g[i] = mat.kappa_pen * g[i] + vol * (c[i] + f * l[j]);
        }
    }
    let zeta_rate: Vec<f64> = (0..grid.cell_count()).map(|k| energy::zeta(rate.cell(k), mat)).collect();
    let margin = |v: &VectorField| -> Result<f64> {
        check_same(&grid, v.grid())?;
        if v.ncomp() != n {
            return Err(Error::Mismatch(format!("test directions need {n} components")));
        }
        let mut lin = 0.0;
        let mut diss = 0.0;
        let mut size = 0.0;
        for cell in 0..grid.cell_count() {
            let zv = energy::zeta(v.cell(cell), mat);
            diss += vol * (zv - zeta_rate[cell]);
            size += vol * (zv + zeta_rate[cell]);
            for j in 0..n {
                let i = cell * n + j;
                lin += g[i] * (v.values()[i] - rate.values()[i]);
            }
        }
        Ok((lin + diss) / (1.0 + size + lin.abs()))
    };
    let mut worst = f64::INFINITY;
    for v in directions {
        worst = worst.min(margin(v)?);
    }
    Ok(FlowRuleReport {
        worst,
        at_rate: margin(&rate)?,
    })
}

/// `reg·∫|λ|^{2q}`.
fn regularization(lambda: &VectorField, reg: f64, mat: &Material) -> f64 {
    if reg == 0.0 {
        return 0.0;
    }
    let n = lambda.ncomp();
    let vol = lambda.grid().cell_volume();
    reg * vol
        * lambda
            .values()
            .chunks(n)
            .map(|l| l.iter().map(|x| x * x).sum::<f64>().powf(mat.q))
            .sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRow {
    pub k: usize,
    pub t: f64,
    /// Magnetic part of the Gibbs energy at `(t_k, ν^k, λ^k)`.
    pub magnetic: f64,
    /// `τ·reg·∫|λ^k|^{2q}`.
    pub regularization: f64,
    /// Cumulative external work `−Σ∫(h_j − h_{j−1})·m^{j−1}`.
    pub work: f64,
    /// Cumulative `Σ τ∫ξ(λ̇_j)`.
    pub dissipated: f64,
    /// Cumulative `Σ ∫c_j·(λ^j − λ^{j−1})` with `c_j = (𝕀(w^{j−1}) − θ_c)a♭`.
    pub coupling_work: f64,
    pub slack: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyBalance {
    pub rows: Vec<EnergyRow>,
    /// Smallest `slack/scale` over all steps.
    pub worst: f64,
}

/// Cumulative discrete energy inequality
/// `𝔊(t_k) + τR(λ^k) + Σ τ∫ξ + Σ C_j ≤ 𝔊(0) + τR(λ⁰) + Σ W_j`.
pub fn energy_balance_report(traj: &Trajectory, solvers: &Solvers) -> Result<EnergyBalance> {
    let mat = &traj.material;
    let grid = *traj.states[0].lambda.grid();
    let vol = grid.cell_volume();
    let n = mat.lambda_dim();
    let theta = ScalarField::constant(grid, mat.theta_c);
    let magnetic = |k: usize| -> Result<f64> {
        let s = &traj.states[k];
        Ok(gibbs(traj.time(k), &s.nu, &s.lambda, &theta, &traj.schedule, solvers, mat)?.magnetic())
    };
    let g0 = magnetic(0)?;
    let r0 = traj.tau * regularization(&traj.states[0].lambda, traj.reg_weight, mat);
    let mut rows = vec![EnergyRow {
        k: 0,
        t: 0.0,
        magnetic: g0,
        regularization: r0,
        work: 0.0,
        dissipated: 0.0,
        coupling_work: 0.0,
        slack: 0.0,
        scale: 1.0 + g0.abs() + r0,
    }];
    let (mut work, mut dissipated, mut coupling) = (0.0, 0.0, 0.0);
    let (mut abs_work, mut abs_coupling) = (0.0, 0.0);
    let mut worst = 0.0f64;
    for k in 1..traj.states.len() {
        let (prev, cur) = (&traj.states[k - 1], &traj.states[k]);
        let (h1, _) = traj.schedule.field_at(traj.time(k))?;
        let (h0, _) = traj.schedule.field_at(traj.time(k - 1))?;
        let m_prev = moments(&prev.nu).m;
        let d = m_prev.ncomp();
        let w_k: f64 = -vol
            * m_prev
                .values()
                .chunks(d)
                .map(|m| m.iter().zip(h1.iter().zip(&h0)).map(|(x, (a, b))| x * (a - b)).sum::<f64>())
                .sum::<f64>();
        let rate = traj.rate(k)?;
        let d_k: f64 = traj.tau
            * vol
            * (0..grid.cell_count())
                .map(|c| energy::dissipation_rate(rate.cell(c), mat))
                .sum::<f64>();
        let c = coupling_field(&prev.w, mat);
        let dl = cur.lambda.sub(&prev.lambda)?;
        let c_k: f64 = vol * c.iter().zip(dl.values()).map(|(a, b)| a * b).sum::<f64>();
        debug_assert_eq!(c.len(), grid.cell_count() * n);
        work += w_k;
        dissipated += d_k;
        coupling += c_k;
        abs_work += w_k.abs();
        abs_coupling += c_k.abs();
        let gk = magnetic(k)?;
        let rk = traj.tau * regularization(&cur.lambda, traj.reg_weight, mat);
        let slack = (g0 + r0 + work) - (gk + rk + dissipated + coupling);
        let scale = 1.0 + g0.abs() + r0 + gk.abs() + rk + abs_work + dissipated + abs_coupling;
        worst = worst.min(slack / scale);
        rows.push(EnergyRow {
            k,
            t: traj.time(k),
            magnetic: gk,
            regularization: rk,
            work,
            dissipated,
            coupling_work: coupling,
            slack,
            scale,
        });
    }
    Ok(EnergyBalance { rows, worst })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorRow {
    pub k: usize,
    pub t: f64,
    /// `∫|·|^p•ν^k`.
    pub pth_moment: f64,
    /// `‖λ̇‖_{L^q(0,t_k; L^q)}`.
    pub rate_lq: f64,
    /// `‖w^k‖_{L¹}`.
    pub w_l1: f64,
    /// `‖∇w‖_{L^r(0,t_k; L^r)}` with `r = (d+2)/(d+1) − 0.1`.
    pub grad_w_lr: f64,
    /// `(κ/2)‖λ^k − L•ν^k‖²_{H⁻¹}`.
    pub penalty: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorTable {
    pub rows: Vec<MonitorRow>,
    pub sup_pth_moment: f64,
    pub rate_lq: f64,
    pub sup_w_l1: f64,
    pub grad_w_lr: f64,
    pub sup_penalty: f64,
}

impl MonitorTable {
    /// The monitored bounds in a fixed order.
    pub fn summary(&self) -> [f64; 5] {
        [self.sup_pth_moment, self.rate_lq, self.sup_w_l1, self.grad_w_lr, self.sup_penalty]
    }
}

/// Exponent of the enthalpy-gradient monitor.
pub fn gradient_exponent(dim: usize) -> f64 {
    (dim as f64 + 2.0) / (dim as f64 + 1.0) - 0.1
}

/// Per-step a-priori monitors and their running bounds.
pub fn apriori_monitors(traj: &Trajectory, solvers: &Solvers) -> Result<MonitorTable> {
    let mat = &traj.material;
    let grid = *traj.states[0].lambda.grid();
    let vol = grid.cell_volume();
    let r = gradient_exponent(grid.dim());
    let faces = grid.interior_faces();
    let mut rows = Vec::with_capacity(traj.states.len());
    let (mut rate_acc, mut grad_acc) = (0.0, 0.0);
    for (k, s) in traj.states.iter().enumerate() {
        if k > 0 {
            let rate = traj.rate(k)?;
            rate_acc += traj.tau
                * vol
                * (0..grid.cell_count())
                    .map(|c| rate.cell(c).iter().map(|x| x * x).sum::<f64>().sqrt().powf(mat.q))
                    .sum::<f64>();
            let w = s.w.values();
            grad_acc += traj.tau
                * faces
                    .iter()
                    .map(|&(l, rr, area, dist)| area * dist * ((w[rr] - w[l]) / dist).abs().powf(r))
                    .sum::<f64>();
        }
        let diff = s.lambda.sub(&moments(&s.nu).lnu)?;
        let penalty = 0.5 * mat.kappa_pen * solvers.poisson.hminus_inner(&diff, &diff)?;
        rows.push(MonitorRow {
            k,
            t: traj.time(k),
            pth_moment: pth_moment(&s.nu, mat.p),
            rate_lq: rate_acc.powf(1.0 / mat.q),
            w_l1: vol * s.w.values().iter().map(|x| x.abs()).sum::<f64>(),
            grad_w_lr: grad_acc.powf(1.0 / r),
            penalty,
        });
    }
    let sup = |f: fn(&MonitorRow) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    Ok(MonitorTable {
        sup_pth_moment: sup(|r| r.pth_moment),
        rate_lq: rows.last().map_or(0.0, |r| r.rate_lq),
        sup_w_l1: sup(|r| r.w_l1),
        grad_w_lr: rows.last().map_or(0.0, |r| r.grad_w_lr),
        sup_penalty: sup(|r| r.penalty),
        rows,
    })
}

/// Largest relative spread `|a − b|/max(|a|, |b|)` of each monitor between consecutive tables.
pub fn monitor_drift(tables: &[MonitorTable]) -> f64 {
    let mut worst = 0.0f64;
    for pair in tables.windows(2) {
        for (a, b) in pair[0].summary().iter().zip(pair[1].summary()) {
            let den = a.abs().max(b.abs());
            if den > 1e-12 {
                worst = worst.max((a - b).abs() / den);
            }
        }
    }
    worst
}

/// A competitor `(ν̃, λ̃)` for the semistability check, with `Aλ̃ = 0`.
#[derive(Debug, Clone)]
pub struct TestPair {
    pub nu: AtomicYoungMeasure,
    pub lambda: VectorField,
}

/// Default competitors: the current `(ν, A⊥λ)`, dictionary reshuffles of ν,
/// and `A⊥λ` moved by `±ρ₁`-scaled random directions inside the range of `A⊥`.
pub fn default_test_pairs(traj: &Trajectory, k: usize, count: usize, seed: u64) -> Result<Vec<TestPair>> {
    let mat = &traj.material;
    let proj = mat
        .projector
        .as_ref()
        .ok_or_else(|| Error::Material("semistability needs a projector".into()))?;
    let s = &traj.states[k];
    let grid = *s.lambda.grid();
    let n = mat.lambda_dim();
    let perp = |v: &[f64]| proj.split(v).1;
    let base: Vec<f64> = s.lambda.values().chunks(n).flat_map(perp).collect();
    let base = VectorField::new(grid, n, base)?;
    let dict = &traj.dictionary;
    let na = dict.len();
    let weights = dict.weights_of(&s.nu);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut out = vec![TestPair {
        nu: s.nu.clone(),
        lambda: base.clone(),
    }];
    let amp = proj.rho_s1.max(1e-3);
    for i in 0..count {
        let nu = match (&weights, i % 2) {
            (Some(w), 0) => {
                let mut w = w.clone();
                let mix: f64 = rng.gen_range(0.0..1.0);
                for cell in 0..grid.cell_count() {
                    let a = rng.gen_range(0..na);
                    let row = &mut w[cell * na..(cell + 1) * na];
                    row.iter_mut().for_each(|x| *x *= 1.0 - mix);
                    row[a] += mix;
                }
                dict.measure(&grid, &w)?
            }
            _ => s.nu.clone(),
        };
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let scale = sign * amp * rng.gen_range(0.0..2.0);
        let mut lam = base.clone();
        for cell in 0..grid.cell_count() {
            let dir: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let d = perp(&dir);
            for (x, y) in lam.cell_mut(cell).iter_mut().zip(d) {
                *x += scale * y;
            }
        }
        out.push(TestPair { nu, lambda: lam });
    }
    Ok(out)
}

/// Worst relative semistability margin at step `k ≥ 1`:
///
/// ```text
/// 𝒢(ν^k, λ^k) + τR(λ^k) ≤ 𝒢(ν̃, λ̃ + Aλ^k) + τR(λ̃ + Aλ^k) + ∫δ*_{S₁}(A⊥(λ̃ − λ^k)),
/// ```
///
/// with `𝒢` at time `t_k` and temperature `𝕀(w^{k−1})`.
pub fn semistability_residual(traj: &Trajectory, k: usize, solvers: &Solvers, pairs: &[TestPair]) -> Result<f64> {
    let mat = &traj.material;
    let proj = mat
        .projector
        .as_ref()
        .ok_or_else(|| Error::Material("semistability needs a projector".into()))?;
    if k == 0 || k >= traj.states.len() {
        return Err(Error::Mismatch(format!("step {k} outside the trajectory")));
    }
    let s = &traj.states[k];
    let grid = *s.lambda.grid();
    let n = mat.lambda_dim();
    let vol = grid.cell_volume();
    let theta = ScalarField::new(
        grid,
        traj.states[k - 1].w.values().iter().map(|&w| energy::theta_of_enthalpy(w, mat)).collect(),
    )?;
    let t = traj.time(k);
    let tr = |l: &VectorField| traj.tau * regularization(l, traj.reg_weight, mat);
    let lhs = gibbs(t, &s.nu, &s.lambda, &theta, &traj.schedule, solvers, mat)?.total + tr(&s.lambda);
    let mut worst = f64::INFINITY;
    for p in pairs {
        let mut lam = p.lambda.clone();
        for cell in 0..grid.cell_count() {
            let a = proj.split(s.lambda.cell(cell)).0;
            for j in 0..n {
                lam.cell_mut(cell)[j] += a[j];
            }
        }
        let dist: f64 = vol
            * (0..grid.cell_count())
                .map(|cell| {
                    let d: Vec<f64> = (0..n).map(|j| p.lambda.cell(cell)[j] - s.lambda.cell(cell)[j]).collect();
                    energy::complement_support(&d, mat)
                })
                .sum::<f64>();
        let rhs = gibbs(t, &p.nu, &lam, &theta, &traj.schedule, solvers, mat)?.total + tr(&lam) + dist;
        worst = worst.min((rhs - lhs) / (1.0 + lhs.abs() + rhs.abs()));
    }
    Ok(worst)
}

/// `Σ_{k0<k≤k1} ∫δ*_{S₁}(A⊥(λ^k − λ^{k−1}))`.
pub fn variation_measure(lambdas: &[VectorField], mat: &Material, k0: usize, k1: usize) -> Result<f64> {
    if k0 > k1 || k1 >= lambdas.len() {
        return Err(Error::Mismatch(format!("interval [{k0}, {k1}] outside the trajectory")));
    }
    let mut total = 0.0;
    for k in k0 + 1..=k1 {
        let d = lambdas[k].sub(&lambdas[k - 1])?;
        let n = d.ncomp();
        total += d.grid().cell_volume()
            * d.values().chunks(n).map(|v| energy::complement_support(v, mat)).sum::<f64>();
    }
    Ok(total)
}

/// Total rate-independent dissipation `Σ_k ∫ rate-independent part of ξ(λ^k − λ^{k−1})`.
pub fn rate_independent_dissipation(lambdas: &[VectorField], mat: &Material) -> Result<f64> {
    let mut total = 0.0;
    for k in 1..lambdas.len() {
        let d = lambdas[k].sub(&lambdas[k - 1])?;
        let n = d.ncomp();
        total += d.grid().cell_volume() * d.values().chunks(n).map(|v| energy::rate_independent(v, mat)).sum::<f64>();
    }
    Ok(total)
}

/// Per-step audit record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditRow {
    pub k: usize,
    pub t: f64,
    pub anisotropy: f64,
    pub coupling: f64,
    pub magnetostatic: f64,
    pub zeeman: f64,
    pub penalty: f64,
    /// `τ∫ξ(λ̇_k)`.
    pub dissipation: f64,
    /// `∫w^k`.
    pub heat_content: f64,
    /// `τ∮b(θ_ext − 𝕀(w^k))`.
    pub boundary_flux: f64,
    /// Defect of the tested-by-one heat identity (zero for isothermal runs).
    pub heat_defect: f64,
    pub flow_rule: f64,
    pub semistability: f64,
    pub energy_slack: f64,
    pub pth_moment: f64,
    pub rate_lq: f64,
    pub w_l1: f64,
    pub grad_w_lr: f64,
    pub jensen_min: f64,
    pub simplex_defect: f64,
    pub w_min: f64,
}

impl AuditRow {
    pub const HEADER: [&'static str; 21] = [
        "k",
        "t",
        "anisotropy",
        "coupling",
        "magnetostatic",
        "zeeman",
        "penalty",
        "dissipation",
        "heat_content",
        "boundary_flux",
        "heat_defect",
        "flow_rule",
        "semistability",
        "energy_slack",
        "pth_moment",
        "rate_lq",
        "w_l1",
        "grad_w_lr",
        "jensen_min",
        "simplex_defect",
        "w_min",
    ];

    pub fn values(&self) -> [f64; 21] {
        [
            self.k as f64,
            self.t,
            self.anisotropy,
            self.coupling,
            self.magnetostatic,
            self.zeeman,
            self.penalty,
            self.dissipation,
            self.heat_content,
            self.boundary_flux,
            self.heat_defect,
            self.flow_rule,
            self.semistability,
            self.energy_slack,
            self.pth_moment,
            self.rate_lq,
            self.w_l1,
            self.grad_w_lr,
            self.jensen_min,
            self.simplex_defect,
            self.w_min,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub rows: Vec<AuditRow>,
    pub failures: Vec<String>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Runs every check on a stored trajectory.
pub fn audit_trajectory(traj: &Trajectory, solvers: &Solvers, seed: u64) -> Result<AuditReport> {
    let mat = &traj.material;
    let grid = *traj.states[0].lambda.grid();
    let vol = grid.cell_volume();
    let balance = energy_balance_report(traj, solvers)?;
    let monitors = apriori_monitors(traj, solvers)?;
    let mut rows = Vec::with_capacity(traj.states.len());
    let mut failures = Vec::new();
    let boundary = grid.boundary_faces();
    for (k, s) in traj.states.iter().enumerate() {
        let t = traj.time(k);
        let theta_prev = if k == 0 { &s.w } else { &traj.states[k - 1].w };
        let theta = ScalarField::new(
            grid,
            theta_prev.values().iter().map(|&w| energy::theta_of_enthalpy(w, mat)).collect(),
        )?;
        let g = gibbs(t, &s.nu, &s.lambda, &theta, &traj.schedule, solvers, mat)?;
        let mut row = AuditRow {
            k,
            t,
            anisotropy: g.anisotropy,
            coupling: g.coupling,
            magnetostatic: g.magnetostatic,
            zeeman: g.zeeman,
            penalty: g.penalty,
            dissipation: 0.0,
            heat_content: s.w.integral(),
            boundary_flux: 0.0,
            heat_defect: 0.0,
            flow_rule: 0.0,
            semistability: 0.0,
            energy_slack: balance.rows[k].slack / balance.rows[k].scale,
            pth_moment: monitors.rows[k].pth_moment,
            rate_lq: monitors.rows[k].rate_lq,
            w_l1: monitors.rows[k].w_l1,
            grad_w_lr: monitors.rows[k].grad_w_lr,
            jensen_min: jensen_gap(&moments(&s.nu)),
            simplex_defect: s.nu.simplex_defect(),
            w_min: heat::check_nonnegativity(&s.w).min,
        };
        if k > 0 {
            let prev = &traj.states[k - 1];
            let rate = traj.rate(k)?;
            row.dissipation = traj.tau
                * vol
                * (0..grid.cell_count())
                    .map(|c| energy::dissipation_rate(rate.cell(c), mat))
                    .sum::<f64>();
            let theta_ext = traj.schedule.theta_ext_at(t)?;
            let b = traj.schedule.b_coeff;
            row.boundary_flux = traj.tau
                * boundary
                    .iter()
                    .map(|f| b * f.area * (theta_ext - energy::theta_of_enthalpy(s.w.values()[f.cell], mat)))
                    .sum::<f64>();
            if !traj.isothermal {
                let hp = HeatStepProblem {
                    tau: traj.tau,
                    w_prev: &prev.w,
                    lambda: &s.lambda,
                    lambda_prev: &prev.lambda,
                    material: mat,
                    theta_ext,
                    b_coeff: b,
                };
                let (lhs, rhs) = heat::heat_bookkeeping(&hp, &s.w)?;
                row.heat_defect = (lhs - rhs) / (1.0 + lhs.abs() + rhs.abs());
            }
            let prob = traj.increment(k, solvers);
            let dirs = default_directions(&prev.lambda, &s.lambda, traj.tau, seed.wrapping_add(k as u64));
            row.flow_rule = flowrule_residual(&prob, &s.nu, &s.lambda, &dirs)?.worst;
            if mat.projector.is_some() {
                let pairs = default_test_pairs(traj, k, 16, seed)?;
                row.semistability = semistability_residual(traj, k, solvers, &pairs)?;
            }
        }
        let checks = [
            (row.flow_rule >= -FLOWRULE_TOL, "flow-rule inequality"),
            (row.energy_slack >= -ENERGY_TOL, "energy inequality"),
            (row.semistability >= -SEMISTABILITY_TOL, "semistability"),
            (row.jensen_min >= -JENSEN_TOL, "Jensen inequality"),
            (row.simplex_defect <= SIMPLEX_TOL, "simplex constraint"),
            (row.w_min >= -heat::NONNEG_TOL, "enthalpy sign"),
            (row.heat_defect.abs() <= 1e-8, "heat identity"),
        ];
        for (ok, what) in checks {
            if !ok {
                failures.push(format!("step {k}: {what} violated"));
            }
        }
        if row.values().iter().any(|x| !x.is_finite()) {
            failures.push(format!("step {k}: non-finite audit value"));
        }
        rows.push(row);
    }
    Ok(AuditReport { rows, failures })
}
