//! Scenario drivers: evolution, static minimization, κ-sweeps, hysteresis
//! loops, τ-refinement studies and Curie sweeps.
//!
//! Each driver returns its tables in memory; [`run_mode`] renders them to
//! named text files so that callers decide where (and whether) to write.

use crate::audit::{self, AuditReport, State, Trajectory};
use crate::config::Config;
use crate::elliptic::Solvers;
use crate::energy;
use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField, VectorField};
use crate::heat::{heat_step, HeatStepProblem};
use crate::increment::{incremental_solve, static_solve, IncrementProblem, SolverOptions, StaticSolution};
use crate::io::{measure_snapshot, state_snapshot, Table};
use crate::material::{Activation, Material};
use crate::measure::{moments, Dictionary};
use crate::schedule::Schedule;

/// Everything a run needs, resolved from a [`Config`].
#[derive(Debug, Clone)]
pub struct Setup {
    pub grid: Grid,
    pub material: Material,
    pub schedule: Schedule,
    pub solvers: Solvers,
    pub dictionary: Dictionary,
    pub options: SolverOptions,
    pub reg_weight: f64,
    pub isothermal: bool,
    pub theta0: f64,
    pub snapshot_every: usize,
}

impl Setup {
    pub fn from_config(cfg: &Config) -> Result<Setup> {
        Ok(Setup {
            grid: cfg.grid()?,
            material: cfg.material.clone(),
            schedule: cfg.schedule()?,
            solvers: cfg.solvers()?,
            dictionary: cfg.dictionary()?,
            options: cfg.solver.options,
            reg_weight: cfg.solver.reg_weight,
            isothermal: cfg.solver.isothermal,
            theta0: cfg.initial.theta,
            snapshot_every: cfg.output.snapshot_every,
        })
    }
}

/// Static minimizer at uniform temperature `theta` and the schedule's field at `t`.
pub fn static_at(setup: &Setup, theta: f64, t: f64, kappa: f64) -> Result<StaticSolution> {
    let (h, _) = setup.schedule.field_at(t)?;
    static_solve(
        &setup.material,
        &VectorField::uniform(setup.grid, &h),
        &ScalarField::constant(setup.grid, theta),
        kappa,
        &setup.solvers,
        &setup.dictionary,
        &setup.options,
    )
}

/// Initial state: the static minimizer at `θ₀` and `h(0)`, with `w₀ = ĉ_v(θ₀)`.
pub fn initial_state(setup: &Setup) -> Result<State> {
    let st = static_at(setup, setup.theta0, 0.0, setup.material.kappa_pen)?;
    Ok(State {
        nu: st.nu,
        lambda: st.lambda,
        w: ScalarField::constant(setup.grid, energy::enthalpy_of_theta(setup.theta0, &setup.material)),
    })
}

#[derive(Debug, Clone)]
pub struct EvolveResult {
    pub trajectory: Trajectory,
    pub series: Table,
    pub audit: AuditReport,
    /// Steps whose alternation stopped at the sweep limit.
    pub unconverged: usize,
}

pub const SERIES_HEADER: [&str; 13] = [
    "k",
    "t",
    "h1",
    "m1",
    "m_sq",
    "lambda_last",
    "theta",
    "gibbs_magnetic",
    "dissipation",
    "cumulative_dissipation",
    "heat_content",
    "sweeps",
    "flow_rule",
];

fn series_row(
    setup: &Setup,
    k: usize,
    s: &State,
    dissipation: f64,
    cumulative: f64,
    sweeps: usize,
    flow: f64,
) -> Result<Vec<f64>> {
    let t = k as f64 * setup.schedule.tau;
    let (h, _) = setup.schedule.field_at(t)?;
    let mp = moments(&s.nu);
    let d = setup.grid.dim();
    let theta: Vec<f64> = s.w.values().iter().map(|&w| energy::theta_of_enthalpy(w, &setup.material)).collect();
    let theta_field = ScalarField::new(setup.grid, theta.clone())?;
    let g = energy::gibbs(t, &s.nu, &s.lambda, &theta_field, &setup.schedule, &setup.solvers, &setup.material)?;
    let n = theta.len() as f64;
    Ok(vec![
        k as f64,
        t,
        h[0],
        mp.m.mean()[0],
        mp.lnu.mean()[d],
        s.lambda.mean()[d],
        theta.iter().sum::<f64>() / n,
        g.magnetic(),
        dissipation,
        cumulative,
        s.w.integral(),
        sweeps as f64,
        flow,
    ])
}

/// Runs `T/τ` steps from `initial`, alternating the incremental minimization and the heat step.
pub fn evolve(setup: &Setup, initial: State, seed: u64) -> Result<EvolveResult> {
    let steps = setup.schedule.steps();
    let tau = setup.schedule.tau;
    let mat = &setup.material;
    let mut states = Vec::with_capacity(steps + 1);
    let mut series = Table::new(&SERIES_HEADER);
    series.push(series_row(setup, 0, &initial, 0.0, 0.0, 0, 0.0)?);
    states.push(initial);
    let mut cumulative = 0.0;
    let mut unconverged = 0;
    for k in 1..=steps {
        let prev = states.last().expect("initial state present");
        let prob = IncrementProblem {
            k,
            tau,
            nu_prev: &prev.nu,
            lambda_prev: &prev.lambda,
            w_prev: &prev.w,
            material: mat,
            schedule: &setup.schedule,
            solvers: &setup.solvers,
            dictionary: &setup.dictionary,
            reg_weight: setup.reg_weight,
            options: setup.options,
        };
        let sol = incremental_solve(&prob).map_err(|e| step_error(k, e))?;
        if !sol.converged {
            unconverged += 1;
        }
        let w = if setup.isothermal {
            prev.w.clone()
        } else {
            let t = k as f64 * tau;
            heat_step(&HeatStepProblem {
                tau,
                w_prev: &prev.w,
                lambda: &sol.lambda,
                lambda_prev: &prev.lambda,
                material: mat,
                theta_ext: setup.schedule.theta_ext_at(t)?,
                b_coeff: setup.schedule.b_coeff,
            })
            .map_err(|e| step_error(k, e))?
            .w
        };
        let dl = sol.lambda.sub(&prev.lambda)?;
        let n = dl.ncomp();
        let dissipation = setup.grid.cell_volume()
            * dl.values()
                .chunks(n)
                .map(|v| {
                    let r: Vec<f64> = v.iter().map(|x| x / tau).collect();
                    tau * energy::dissipation_rate(&r, mat)
                })
                .sum::<f64>();
        cumulative += dissipation;
        let state = State {
            nu: sol.nu,
            lambda: sol.lambda,
            w,
        };
        series.push(series_row(
            setup,
            k,
            &state,
            dissipation,
            cumulative,
            sol.sweeps,
            sol.flow_rule_residual,
        )?);
        states.push(state);
    }
    let trajectory = Trajectory {
        material: mat.clone(),
        schedule: setup.schedule.clone(),
        dictionary: setup.dictionary.clone(),
        tau,
        reg_weight: setup.reg_weight,
        isothermal: setup.isothermal,
        states,
    };
    let audit = audit::audit_trajectory(&trajectory, &setup.solvers, seed)?;
    Ok(EvolveResult {
        trajectory,
        series,
        audit,
        unconverged,
    })
}

fn step_error(k: usize, e: Error) -> Error {
    match e {
        Error::NoConvergence { .. } | Error::NonMonotone { .. } | Error::NonFinite(_) => {
            Error::Config(format!("step {k}: {e}"))
        }
        other => other,
    }
}

pub fn run_evolve(cfg: &Config, seed: u64) -> Result<EvolveResult> {
    let setup = Setup::from_config(cfg)?;
    let init = initial_state(&setup)?;
    evolve(&setup, init, seed)
}

/// Per-cell table of a static solution: `cell, m…, L•ν last, λ…`.
pub fn static_table(sol: &StaticSolution) -> Table {
    let grid = *sol.lambda.grid();
    let d = grid.dim();
    let mut header: Vec<String> = vec!["cell".into()];
    header.extend((1..=d).map(|k| format!("m{k}")));
    header.push("m_sq".into());
    header.extend((1..=d + 1).map(|k| format!("lambda{k}")));
    let mp = moments(&sol.nu);
    let mut t = Table {
        header,
        rows: Vec::new(),
    };
    for c in 0..grid.cell_count() {
        let mut row = vec![c as f64];
        row.extend_from_slice(mp.m.cell(c));
        row.push(mp.lnu.cell(c)[d]);
        row.extend_from_slice(sol.lambda.cell(c));
        t.rows.push(row);
    }
    t
}

pub const KAPPA_HEADER: [&str; 7] = ["kappa", "gap", "kappa_gap_sq", "gibbs", "magnetic", "penalty", "nu_gap"];

/// Static minimizers along a κ ladder at the initial temperature and `h(0)`.
pub fn kappa_sweep(setup: &Setup, kappas: &[f64]) -> Result<Table> {
    let mut t = Table::new(&KAPPA_HEADER);
    for &k in kappas {
        let s = static_at(setup, setup.theta0, 0.0, k)?;
        t.push(vec![
            k,
            s.constraint_gap,
            k * s.constraint_gap * s.constraint_gap,
            s.gibbs.total,
            s.gibbs.magnetic(),
            s.gibbs.penalty,
            s.nu_gap,
        ]);
    }
    Ok(t)
}

#[derive(Debug, Clone)]
pub struct HysteresisResult {
    pub theta: f64,
    /// `k, t, h, m, λ…` per step.
    pub table: Table,
    /// `|∮ m dh|` over the second period.
    pub area: f64,
    /// `Σ τ∫ξ(λ̇)` over the whole run.
    pub dissipation: f64,
    /// Rate-independent part of the dissipation.
    pub rate_independent: f64,
    /// `Σ ∫|λ^k − λ^{k−1}|`.
    pub pathlength: f64,
    /// Threshold radius of the activation set.
    pub rho: f64,
    pub audit: AuditReport,
    pub trajectory: Trajectory,
}

/// Isothermal cyclic loading along `e₁` at uniform temperature `theta`.
pub fn hysteresis_loop(cfg: &Config, theta: f64, seed: u64) -> Result<HysteresisResult> {
    let hc = &cfg.hysteresis;
    let d = cfg.grid.dim;
    let mut dir = vec![0.0; d];
    dir[0] = 1.0;
    let tau = hc.period / hc.steps_per_period as f64;
    let mut setup = Setup::from_config(cfg)?;
    setup.schedule = Schedule::triangle(&dir, hc.amplitude, hc.period, hc.periods, theta, 0.0, tau)?;
    setup.isothermal = true;
    setup.theta0 = theta;
    let init = initial_state(&setup)?;
    let run = evolve(&setup, init, seed)?;
    let traj = &run.trajectory;
    let n = setup.material.lambda_dim();
    let mut header = vec!["k", "t", "h", "m"];
    let names: Vec<String> = (1..=n).map(|k| format!("lambda{k}")).collect();
    header.extend(names.iter().map(|s| s.as_str()));
    let mut table = Table::new(&header);
    let mut h_series = Vec::new();
    let mut m_series = Vec::new();
    for (k, s) in traj.states.iter().enumerate() {
        let t = traj.time(k);
        let (h, _) = setup.schedule.field_at(t)?;
        let m = moments(&s.nu).m.mean()[0];
        let mut row = vec![k as f64, t, h[0], m];
        row.extend(s.lambda.mean());
        table.push(row);
        h_series.push(h[0]);
        m_series.push(m);
    }
    let spp = hc.steps_per_period;
    let area = (spp + 1..=2 * spp)
        .map(|k| 0.5 * (m_series[k] + m_series[k - 1]) * (h_series[k] - h_series[k - 1]))
        .sum::<f64>()
        .abs();
    let vol = setup.grid.cell_volume();
    let mut pathlength = 0.0;
    for k in 1..traj.states.len() {
        let dl = traj.states[k].lambda.sub(&traj.states[k - 1].lambda)?;
        pathlength += vol * dl.values().chunks(n).map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt()).sum::<f64>();
    }
    let lambdas: Vec<VectorField> = traj.states.iter().map(|s| s.lambda.clone()).collect();
    let rate_independent = audit::rate_independent_dissipation(&lambdas, &setup.material)?;
    let dissipation = run.series.column("cumulative_dissipation").and_then(|c| c.last().copied()).unwrap_or(0.0);
    let rho = match &setup.material.activation {
        Activation::Ball { rho } => *rho,
        Activation::Box { .. } => setup.material.activation_radius(),
    };
    Ok(HysteresisResult {
        theta,
        table,
        area,
        dissipation,
        rate_independent,
        pathlength,
        rho,
        audit: run.audit,
        trajectory: run.trajectory,
    })
}

#[derive(Debug, Clone)]
pub struct TauStudyResult {
    /// One row per level: step, checkpoint distances to the next finer level, their ratios, and monitors.
    pub table: Table,
    /// Worst ratio of successive distances over all metrics.
    pub worst_ratio: f64,
    /// Largest relative monitor change between successive levels.
    pub monitor_drift: f64,
    pub audits_passed: bool,
}

pub const TAU_HEADER: [&str; 13] = [
    "level",
    "tau",
    "dist_lambda",
    "dist_w",
    "dist_m",
    "ratio_lambda",
    "ratio_w",
    "ratio_m",
    "pth_moment",
    "rate_lq",
    "w_l1",
    "grad_w_lr",
    "penalty",
];

/// Distances below this are treated as exact agreement in the ratio test.
const DISTANCE_FLOOR: f64 = 1e-10;

/// Runs the configured scenario at `base_steps·2^l` steps for each level and
/// compares successive levels at common checkpoints.
pub fn tau_study(cfg: &Config, seed: u64) -> Result<TauStudyResult> {
    let ts = &cfg.tau_study;
    if ts.base_steps % ts.checkpoints != 0 {
        return Err(Error::Config("tau_study.base_steps must be a multiple of checkpoints".into()));
    }
    let mut runs = Vec::new();
    let mut monitors = Vec::new();
    let mut audits_passed = true;
    for l in 0..ts.levels {
        let mut c = cfg.clone();
        let steps = ts.base_steps << l;
        c.schedule.tau = c.schedule.t_end / steps as f64;
        let setup = Setup::from_config(&c)?;
        let init = initial_state(&setup)?;
        let run = evolve(&setup, init, seed)?;
        audits_passed &= run.audit.passed();
        monitors.push(audit::apriori_monitors(&run.trajectory, &setup.solvers)?);
        runs.push((steps, c.schedule.tau, run.trajectory));
    }
    let mut dists = Vec::new();
    for pair in runs.windows(2) {
        let (sa, _, ta) = &pair[0];
        let (sb, _, tb) = &pair[1];
        let mut d = [0.0f64; 3];
        for j in 1..=ts.checkpoints {
            let a = &ta.states[sa * j / ts.checkpoints];
            let b = &tb.states[sb * j / ts.checkpoints];
            d[0] = d[0].max(a.lambda.sub(&b.lambda)?.l2_norm());
            let vol = a.w.grid().cell_volume();
            let dw: f64 = a.w.values().iter().zip(b.w.values()).map(|(x, y)| (x - y).abs()).sum();
            d[1] = d[1].max(vol * dw);
            let ma = moments(&a.nu).m.mean()[0];
            let mb = moments(&b.nu).m.mean()[0];
            d[2] = d[2].max((ma - mb).abs());
        }
        dists.push(d);
    }
    let mut table = Table::new(&TAU_HEADER);
    let mut worst_ratio = 0.0f64;
    for (l, (_, tau, _)) in runs.iter().enumerate() {
        let d = dists.get(l).copied().unwrap_or([0.0; 3]);
        let mut ratio = [0.0; 3];
        if l >= 1 && l < dists.len() {
            for i in 0..3 {
                let prev = dists[l - 1][i];
                ratio[i] = if prev > DISTANCE_FLOOR { d[i] / prev } else { 0.0 };
                worst_ratio = worst_ratio.max(ratio[i]);
            }
        }
        let m = monitors[l].summary();
        table.push(vec![
            l as f64, *tau, d[0], d[1], d[2], ratio[0], ratio[1], ratio[2], m[0], m[1], m[2], m[3], m[4],
        ]);
    }
    Ok(TauStudyResult {
        table,
        worst_ratio,
        monitor_drift: audit::monitor_drift(&monitors),
        audits_passed,
    })
}

pub const CURIE_HEADER: [&str; 6] = ["theta", "m_abs", "m_sq", "lambda_last", "gibbs", "jensen_gap"];

/// Static minimizers over a temperature ladder.
pub fn curie_sweep(cfg: &Config) -> Result<Table> {
    let mut setup = Setup::from_config(cfg)?;
    let c = &cfg.curie_sweep;
    if let Some(h) = &c.h {
        setup.schedule.field = vec![crate::schedule::FieldKeyframe { t: 0.0, h: h.clone() }];
    }
    let d = setup.grid.dim();
    let mut t = Table::new(&CURIE_HEADER);
    for i in 0..c.count {
        let theta = if c.count == 1 {
            c.theta_min
        } else {
            c.theta_min + (c.theta_max - c.theta_min) * i as f64 / (c.count - 1) as f64
        };
        let s = static_at(&setup, theta, 0.0, setup.material.kappa_pen)?;
        let mp = moments(&s.nu);
        let grid = setup.grid;
        let m_abs = (0..grid.cell_count())
            .map(|cell| mp.m.cell(cell).iter().map(|x| x * x).sum::<f64>().sqrt())
            .sum::<f64>()
            / grid.cell_count() as f64;
        t.push(vec![
            theta,
            m_abs,
            mp.lnu.mean()[d],
            s.lambda.mean()[d],
            s.gibbs.total,
            crate::measure::jensen_gap(&mp),
        ]);
    }
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Evolve,
    Static,
    KappaSweep,
    TauStudy,
    Hysteresis,
    CurieSweep,
}

/// Rendered output of one scenario run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    /// `(file name, contents)` pairs.
    pub files: Vec<(String, String)>,
    pub passed: bool,
    pub messages: Vec<String>,
}

fn audit_table(report: &AuditReport) -> Table {
    let mut t = Table::new(&audit::AuditRow::HEADER);
    for r in &report.rows {
        t.push(r.values().to_vec());
    }
    t
}

/// Runs one scenario and renders every table it produces.
pub fn run_mode(mode: Mode, cfg: &Config, seed: u64) -> Result<RunOutput> {
    let mut files = Vec::new();
    let mut messages = Vec::new();
    let passed = match mode {
        Mode::Evolve => {
            let setup = Setup::from_config(cfg)?;
            let init = initial_state(&setup)?;
            let run = evolve(&setup, init, seed)?;
            files.push(("series.csv".into(), run.series.to_csv()));
            files.push(("audit.csv".into(), audit_table(&run.audit).to_csv()));
            let balance = audit::energy_balance_report(&run.trajectory, &setup.solvers)?;
            let mut et = Table::new(&[
                "k",
                "t",
                "magnetic",
                "regularization",
                "work",
                "dissipated",
                "coupling_work",
                "slack",
                "scale",
            ]);
            for r in &balance.rows {
                et.push(vec![
                    r.k as f64,
                    r.t,
                    r.magnetic,
                    r.regularization,
                    r.work,
                    r.dissipated,
                    r.coupling_work,
                    r.slack,
                    r.scale,
                ]);
            }
            files.push(("energy.csv".into(), et.to_csv()));
            let traj = &run.trajectory;
            let last = traj.steps();
            for (k, s) in traj.states.iter().enumerate() {
                let every = setup.snapshot_every;
                if k == last || (every > 0 && k % every == 0) {
                    files.push((format!("nu_{k:05}.txt"), measure_snapshot(&s.nu, traj.time(k))));
                    files.push((format!("state_{k:05}.txt"), state_snapshot(&s.lambda, &s.w, traj.time(k))));
                }
            }
            if run.unconverged > 0 {
                messages.push(format!("{} steps reached the sweep limit", run.unconverged));
            }
            messages.extend(run.audit.failures.iter().cloned());
            run.audit.passed()
        }
        Mode::Static => {
            let setup = Setup::from_config(cfg)?;
            let s = static_at(&setup, setup.theta0, 0.0, setup.material.kappa_pen)?;
            files.push(("static.csv".into(), static_table(&s).to_csv()));
            files.push(("nu_static.txt".into(), measure_snapshot(&s.nu, 0.0)));
            let mut summary = Table::new(&["gibbs", "magnetic", "penalty", "gap", "nu_gap", "iterations"]);
            summary.push(vec![
                s.gibbs.total,
                s.gibbs.magnetic(),
                s.gibbs.penalty,
                s.constraint_gap,
                s.nu_gap,
                s.iterations as f64,
            ]);
            files.push(("static_summary.csv".into(), summary.to_csv()));
            let ok = s.nu_gap <= setup.options.tol_nu
                && s.nu.simplex_defect() <= audit::SIMPLEX_TOL
                && crate::measure::jensen_gap(&moments(&s.nu)) >= -audit::JENSEN_TOL;
            if !ok {
                messages.push(format!("static solve did not certify optimality (gap {:.3e})", s.nu_gap));
            }
            ok
        }
        Mode::KappaSweep => {
            let setup = Setup::from_config(cfg)?;
            let t = kappa_sweep(&setup, &cfg.kappa_sweep.kappas)?;
            let gaps = t.column("gap").unwrap_or_default();
            let monotone = gaps.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-6) + 1e-14);
            if !monotone {
                messages.push("constraint gap increased along the kappa ladder".into());
            }
            files.push(("kappa_sweep.csv".into(), t.to_csv()));
            monotone
        }
        Mode::TauStudy => {
            let r = tau_study(cfg, seed)?;
            files.push(("tau_study.csv".into(), r.table.to_csv()));
            let ok = r.worst_ratio <= 0.7 && r.monitor_drift <= audit::MONITOR_DRIFT && r.audits_passed;
            if !ok {
                messages.push(format!(
                    "worst distance ratio {:.3}, monitor drift {:.3}, audits {}",
                    r.worst_ratio,
                    r.monitor_drift,
                    if r.audits_passed { "passed" } else { "failed" }
                ));
            }
            ok
        }
        Mode::Hysteresis => {
            let mut summary = Table::new(&["theta", "area", "dissipation", "rate_independent", "rho_pathlength"]);
            let mut ok = true;
            for &theta in &cfg.hysteresis.thetas {
                let r = hysteresis_loop(cfg, theta, seed)?;
                files.push((format!("hysteresis_theta_{theta}.csv"), r.table.to_csv()));
                summary.push(vec![theta, r.area, r.dissipation, r.rate_independent, r.rho * r.pathlength]);
                if !r.audit.passed() {
                    ok = false;
                    messages.extend(r.audit.failures.iter().map(|f| format!("theta {theta}: {f}")));
                }
            }
            files.push(("hysteresis_summary.csv".into(), summary.to_csv()));
            ok
        }
        Mode::CurieSweep => {
            let t = curie_sweep(cfg)?;
            let jensen_ok = t.column("jensen_gap").unwrap_or_default().iter().all(|&j| j >= -audit::JENSEN_TOL);
            files.push(("curie_sweep.csv".into(), t.to_csv()));
            jensen_ok
        }
    };
    Ok(RunOutput {
        files,
        passed,
        messages,
    })
}
