//! Scalar potentials: anisotropy, dissipation and its proximal map, the
//! enthalpy transformation, conductivity, and the penalized Gibbs energy.

use crate::elliptic::Solvers;
use crate::error::{Error, Result};
use crate::grid::{check_same, ScalarField, VectorField};
use crate::material::{Activation, ConductivityModel, Material};
use crate::measure::{moments, AtomicYoungMeasure};
use crate::schedule::Schedule;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Anisotropy density `φ(m) = β(|m|² − max_α (m·s_α)²) + b₀|m|⁴ + b_p|m|^p`.
pub fn phi(m: &[f64], mat: &Material) -> f64 {
    let m2: f64 = m.iter().map(|x| x * x).sum();
    let along = mat
        .easy_axes
        .iter()
        .map(|s| {
            let d: f64 = s.iter().zip(m).map(|(a, b)| a * b).sum();
            d * d
        })
        .fold(0.0, f64::max);
    let poles = if mat.easy_axes.is_empty() { 0.0 } else { mat.beta_aniso * (m2 - along).max(0.0) };
    let growth = if mat.b_p > 0.0 { mat.b_p * m2.sqrt().powf(mat.p) } else { 0.0 };
    poles + mat.b0 * m2 * m2 + growth
}

/// `ψ(m, θ) = φ(m) + a₀(θ − θ_c)|m|²`.
pub fn psi(m: &[f64], theta: f64, mat: &Material) -> f64 {
    let m2: f64 = m.iter().map(|x| x * x).sum();
    phi(m, mat) + mat.a0 * (theta - mat.theta_c) * m2
}

/// Support function `δ*_S(v)` of the activation set.
pub fn support_s(v: &[f64], mat: &Material) -> f64 {
    match &mat.activation {
        Activation::Ball { rho } => rho * norm(v),
        Activation::Box { half_widths } => half_widths.iter().zip(v).map(|(r, x)| r * x.abs()).sum(),
    }
}

/// Rate-independent part of the dissipation. With a projector `A` this is
/// `δ*_{S₂}(Av) + δ*_{S₁}(A⊥v)`, otherwise `δ*_S(v)`.
pub fn rate_independent(v: &[f64], mat: &Material) -> f64 {
    match &mat.projector {
        None => support_s(v, mat),
        Some(p) => {
            let (a, perp) = p.split(v);
            p.rho_s2 * norm(&a) + p.rho_s1 * norm(&perp)
        }
    }
}

/// `δ*_{S₁}(A⊥v)`: the purely rate-independent component of the split dissipation.
pub fn complement_support(v: &[f64], mat: &Material) -> f64 {
    match &mat.projector {
        None => 0.0,
        Some(p) => p.rho_s1 * norm(&p.split(v).1),
    }
}

/// Magnitude entering the viscous term: `|v|`, or `|Av|` with a projector.
pub fn viscous_magnitude(v: &[f64], mat: &Material) -> f64 {
    match &mat.projector {
        None => norm(v),
        Some(p) => norm(&p.split(v).0),
    }
}

/// Dissipation potential `ζ(v) = δ*_S(v) + (ε/q)|v|^q`.
pub fn zeta(v: &[f64], mat: &Material) -> f64 {
    rate_independent(v, mat) + mat.eps_visc / mat.q * viscous_magnitude(v, mat).powf(mat.q)
}

/// Heat production rate `ξ(v) = δ*_S(v) + ε|v|^q`.
pub fn dissipation_rate(v: &[f64], mat: &Material) -> f64 {
    rate_independent(v, mat) + mat.eps_visc * viscous_magnitude(v, mat).powf(mat.q)
}

/// Solves `μ + σε μ^{q−1} = r` for `μ ∈ [0, r]`.
fn radial_root(r: f64, sigma: f64, mat: &Material) -> Result<f64> {
    let (eps, q) = (mat.eps_visc, mat.q);
    if r <= 0.0 {
        return Ok(0.0);
    }
    if eps == 0.0 {
        return Ok(r);
    }
    if q == 2.0 {
        return Ok(r / (1.0 + sigma * eps));
    }
    // The residual is increasing and convex, so Newton from μ = r decreases monotonically.
    let mut mu = r;
    for it in 0..200 {
        let g = mu + sigma * eps * mu.powf(q - 1.0) - r;
        let dg = 1.0 + sigma * eps * (q - 1.0) * mu.powf(q - 2.0);
        let next = (mu - g / dg).max(0.0);
        if (next - mu).abs() <= 1e-15 * r || g.abs() <= 1e-15 * r {
            return Ok(next);
        }
        mu = next;
        if it == 199 {
            return Err(Error::NoConvergence {
                what: "radial prox equation",
                residual: g.abs(),
                iterations: 200,
            });
        }
    }
    Ok(mu)
}

/// Radial prox of `δ*_{ball ρ} + (ε/q)|·|^q`, written into `out`.
fn prox_ball(z: &[f64], rho: f64, sigma: f64, viscous: bool, mat: &Material, out: &mut [f64]) -> Result<()> {
    let r = norm(z);
    let shrunk = (r - sigma * rho).max(0.0);
    let mu = if viscous { radial_root(shrunk, sigma, mat)? } else { shrunk };
    if mu == 0.0 || r == 0.0 {
        out.iter_mut().for_each(|x| *x = 0.0);
    } else {
        let s = mu / r;
        for (o, &x) in out.iter_mut().zip(z) {
            *o = s * x;
        }
    }
    Ok(())
}

/// `argmin_v ζ(v) + |v − z|²/(2σ)`.
pub fn prox_dissipation(z: &[f64], sigma: f64, mat: &Material) -> Result<Vec<f64>> {
    let mut out = vec![0.0; z.len()];
    prox_into(z, sigma, mat, &mut out)?;
    Ok(out)
}

pub(crate) fn prox_into(z: &[f64], sigma: f64, mat: &Material, out: &mut [f64]) -> Result<()> {
    if !(sigma > 0.0) {
        return Err(Error::Material(format!("prox step must be positive, got {sigma}")));
    }
    match &mat.projector {
        Some(p) => {
            // The two pieces live on orthogonal subspaces, so the prox splits.
            let (a, perp) = p.split(z);
            let mut pa = vec![0.0; z.len()];
            let mut pp = vec![0.0; z.len()];
            prox_ball(&a, p.rho_s2, sigma, true, mat, &mut pa)?;
            prox_ball(&perp, p.rho_s1, sigma, false, mat, &mut pp)?;
            for i in 0..z.len() {
                out[i] = pa[i] + pp[i];
            }
            Ok(())
        }
        None => match &mat.activation {
            Activation::Ball { rho } => prox_ball(z, *rho, sigma, true, mat, out),
            Activation::Box { half_widths } => {
                // Soft thresholding followed by the radial viscous prox.
                let soft: Vec<f64> = z
                    .iter()
                    .zip(half_widths)
                    .map(|(&x, &r)| x.signum() * (x.abs() - sigma * r).max(0.0))
                    .collect();
                prox_ball(&soft, 0.0, sigma, true, mat, out)
            }
        },
    }
}

/// Heat capacity `c_v(θ) = c₀(1+θ)^{ω−1}`.
pub fn heat_capacity(theta: f64, mat: &Material) -> f64 {
    mat.cv_c0 * (1.0 + theta.max(0.0)).powf(mat.cv_omega - 1.0)
}

/// `ĉ_v(θ) = ∫₀^θ c_v = c₀((1+θ)^ω − 1)/ω`.
pub fn enthalpy_of_theta(theta: f64, mat: &Material) -> f64 {
    mat.cv_c0 * ((1.0 + theta).powf(mat.cv_omega) - 1.0) / mat.cv_omega
}

/// `𝕀(w) = (ωw/c₀ + 1)^{1/ω} − 1` for `w ≥ 0`, and `0` for `w < 0`.
pub fn theta_of_enthalpy(w: f64, mat: &Material) -> f64 {
    if w <= 0.0 {
        0.0
    } else {
        (mat.cv_omega * w / mat.cv_c0 + 1.0).powf(1.0 / mat.cv_omega) - 1.0
    }
}

/// Transformed conductivity `𝒦(λ, w)`, always within `[κ₀, C_K]`.
pub fn conductivity(lambda: &[f64], w: f64, mat: &Material) -> f64 {
    let k = &mat.conductivity;
    match k.model {
        ConductivityModel::Constant => k.kappa0,
        ConductivityModel::Clamped => {
            let l2: f64 = lambda.iter().map(|x| x * x).sum();
            let theta = theta_of_enthalpy(w, mat);
            let raw = k.kappa0 + (k.c_k - k.kappa0) * l2 / (1.0 + l2 + theta);
            raw.clamp(k.kappa0, k.c_k)
        }
    }
}

/// Parts of the penalized mesoscopic Gibbs energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GibbsEvaluation {
    pub total: f64,
    /// `∫ φ•ν`.
    pub anisotropy: f64,
    /// `∫ (θ − θ_c) a♭·λ`.
    pub coupling: f64,
    /// `½∫ m·h_dem`.
    pub magnetostatic: f64,
    /// `−∫ h·m`.
    pub zeeman: f64,
    /// `(κ/2)‖λ − L•ν‖²_{H⁻¹}`.
    pub penalty: f64,
}

impl GibbsEvaluation {
    /// The magnetic part: everything except the temperature coupling.
    pub fn magnetic(&self) -> f64 {
        self.anisotropy + self.magnetostatic + self.zeeman + self.penalty
    }
}

/// Evaluates the penalized Gibbs energy at time `t` with temperature field `theta`.
pub fn gibbs(
    t: f64,
    nu: &AtomicYoungMeasure,
    lambda: &VectorField,
    theta: &ScalarField,
    schedule: &Schedule,
    solvers: &Solvers,
    mat: &Material,
) -> Result<GibbsEvaluation> {
    let (h, _) = schedule.field_at(t)?;
    if h.len() != nu.dim() {
        return Err(Error::Mismatch("field dimension differs from measure dimension".into()));
    }
    gibbs_with_field(nu, lambda, theta, &VectorField::uniform(*nu.grid(), &h), solvers, mat)
}

/// [`gibbs`] with the external field given directly.
pub fn gibbs_with_field(
    nu: &AtomicYoungMeasure,
    lambda: &VectorField,
    theta: &ScalarField,
    h: &VectorField,
    solvers: &Solvers,
    mat: &Material,
) -> Result<GibbsEvaluation> {
    let grid = nu.grid();
    check_same(grid, lambda.grid())?;
    check_same(grid, theta.grid())?;
    check_same(grid, h.grid())?;
    let d = nu.dim();
    if lambda.ncomp() != d + 1 || h.ncomp() != d {
        return Err(Error::Mismatch(format!("lambda needs {} and h needs {d} components", d + 1)));
    }
    let vol = grid.cell_volume();
    let mp = moments(nu);
    let mut anisotropy = 0.0;
    for c in 0..grid.cell_count() {
        let (atoms, w) = nu.cell(c);
        anisotropy += atoms.chunks(d).zip(w).map(|(s, &wi)| wi * phi(s, mat)).sum::<f64>();
    }
    anisotropy *= vol;
    let coupling = vol
        * (0..grid.cell_count())
            .map(|c| (theta.values()[c] - mat.theta_c) * mat.a0 * lambda.cell(c)[d])
            .sum::<f64>();
    let zeeman = -mp.m.l2_inner(h)?;
    let ms = solvers.magnetostatic.solve_magnetostatic(&mp.m)?;
    let diff = lambda.sub(&mp.lnu)?;
    let penalty = 0.5 * mat.kappa_pen * solvers.poisson.hminus_inner(&diff, &diff)?;
    let parts = [anisotropy, coupling, ms.energy, zeeman, penalty];
    if parts.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("Gibbs energy"));
    }
    Ok(GibbsEvaluation {
        total: parts.iter().sum(),
        anisotropy,
        coupling,
        magnetostatic: ms.energy,
        zeeman,
        penalty,
    })
}

/// `L²` gradient of the Gibbs energy in λ: `(θ − θ_c)a♭ + κ(−Δ⁻¹)(λ − L•ν)` per cell.
pub fn gibbs_lambda_gradient(
    nu: &AtomicYoungMeasure,
    lambda: &VectorField,
    theta: &ScalarField,
    solvers: &Solvers,
    mat: &Material,
) -> Result<VectorField> {
    let grid = *nu.grid();
    check_same(&grid, lambda.grid())?;
    check_same(&grid, theta.grid())?;
    let n = lambda.ncomp();
    let diff = lambda.sub(&moments(nu).lnu)?;
    let mut g = solvers.poisson.solve_components(diff.values(), n);
    for c in 0..grid.cell_count() {
        for k in 0..n {
            g[c * n + k] *= -mat.kappa_pen;
        }
        g[c * n + n - 1] += (theta.values()[c] - mat.theta_c) * mat.a0;
    }
    VectorField::new(grid, n, g)
}
