//! Monotone accelerated proximal gradient (MFISTA) with backtracking and
//! function-value restart, for composite objectives `f + g` over flat vectors.

use crate::error::Result;

/// A composite problem: smooth `f`, proximable `g`, and an optimality measure.
pub(crate) trait Composite {
    /// Value of `f` at `x`; writes `∇f(x)` into `grad`.
    fn smooth(&mut self, x: &[f64], grad: &mut [f64]) -> Result<f64>;
    /// `argmin_u g(u) + |u − y|²/(2·step)`.
    fn prox(&mut self, y: &[f64], step: f64, out: &mut [f64]) -> Result<()>;
    /// Value of `g` at a point returned by [`Composite::prox`].
    fn nonsmooth(&mut self, x: &[f64]) -> Result<f64>;
    /// Scale-free optimality residual at `x`, given `∇f(x)` and the objective value.
    fn residual(&mut self, x: &[f64], grad: &[f64], step: f64, objective: f64) -> Result<f64>;
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ApgOptions {
    pub max_iter: usize,
    pub tol: f64,
    /// Initial Lipschitz estimate.
    pub lipschitz: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct ApgOutcome {
    pub x: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub lipschitz: f64,
}

/// Runs MFISTA from `x0`, which must be feasible for `g`. The returned iterate is
/// `x0` or a prox output, and its objective exceeds that of `x0` by at most
/// `1e−14(1 + |F|)` per accepted step.
pub(crate) fn minimize<P: Composite>(problem: &mut P, x0: Vec<f64>, opts: ApgOptions) -> Result<ApgOutcome> {
    let n = x0.len();
    let mut lip = opts.lipschitz.max(1e-12);
    let mut x = x0;
    let mut grad_x = vec![0.0; n];
    let mut obj_x = problem.smooth(&x, &mut grad_x)? + problem.nonsmooth(&x)?;
    let mut residual = problem.residual(&x, &grad_x, 1.0 / lip, obj_x)?;
    if residual <= opts.tol {
        return Ok(ApgOutcome {
            x,
            residual,
            iterations: 0,
            converged: true,
            lipschitz: lip,
        });
    }
    let mut x_prev = x.clone();
    let mut y = x.clone();
    let mut grad_y = grad_x.clone();
    let mut f_y = obj_x - problem.nonsmooth(&x)?;
    let mut t = 1.0f64;
    let mut z = vec![0.0; n];
    let mut grad_z = vec![0.0; n];
    let mut step_point = vec![0.0; n];

    for it in 1..=opts.max_iter {
        lip = (0.9 * lip).max(1e-12);
        let f_z = loop {
            let s = 1.0 / lip;
            for i in 0..n {
                step_point[i] = y[i] - s * grad_y[i];
            }
            problem.prox(&step_point, s, &mut z)?;
            let f_z = problem.smooth(&z, &mut grad_z)?;
            let mut lin = 0.0;
            let mut sq = 0.0;
            for i in 0..n {
                let d = z[i] - y[i];
                lin += grad_y[i] * d;
                sq += d * d;
            }
            let model = f_y + lin + 0.5 * lip * sq;
            if f_z <= model || sq == 0.0 || lip > 1e30 {
                break f_z;
            }
            // Near the optimum the value test drowns in rounding; fall back to curvature.
            if f_z <= model + 1e-13 * (1.0 + f_y.abs()) {
                let mut curv = 0.0;
                for i in 0..n {
                    curv += (grad_z[i] - grad_y[i]) * (z[i] - y[i]);
                }
                if curv <= lip * sq {
                    break f_z;
                }
            }
            lip *= 2.0;
        };
        let obj_z = f_z + problem.nonsmooth(&z)?;
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        // Within rounding of the objective, progress is judged by the residual instead.
        let mut res_z = None;
        let accept = obj_z <= obj_x
            || (obj_z - obj_x <= 1e-14 * (1.0 + obj_x.abs()) && {
                let r = problem.residual(&z, &grad_z, 1.0 / lip, obj_z)?;
                res_z = Some(r);
                r < residual
            });
        if accept {
            std::mem::swap(&mut x_prev, &mut x);
            x.copy_from_slice(&z);
            grad_x.copy_from_slice(&grad_z);
            obj_x = obj_z;
            residual = match res_z {
                Some(r) => r,
                None => problem.residual(&x, &grad_x, 1.0 / lip, obj_x)?,
            };
            if residual <= opts.tol {
                return Ok(ApgOutcome {
                    x,
                            residual,
                    iterations: it,
                    converged: true,
                    lipschitz: lip,
                });
            }
            let beta = (t - 1.0) / t_next;
            if beta == 0.0 {
                y.copy_from_slice(&x);
                grad_y.copy_from_slice(&grad_x);
                f_y = obj_x - problem.nonsmooth(&x)?;
            } else {
                for i in 0..n {
                    y[i] = x[i] + beta * (x[i] - x_prev[i]);
                }
                f_y = problem.smooth(&y, &mut grad_y)?;
            }
            t = t_next;
        } else {
            // Restart the momentum from the best point.
            x_prev.copy_from_slice(&x);
            y.copy_from_slice(&x);
            grad_y.copy_from_slice(&grad_x);
            f_y = obj_x - problem.nonsmooth(&x)?;
            t = 1.0;
        }
    }
    Ok(ApgOutcome {
        x,
        residual,
        iterations: opts.max_iter,
        converged: false,
        lipschitz: lip,
    })
}
