//! Model constants and their admissibility checks.

use serde::{Deserialize, Serialize};

/// Shape of the activation set `S` whose support function gives the
/// rate-independent part of the dissipation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Activation {
    /// Euclidean ball of radius `rho`.
    Ball { rho: f64 },
    /// Axis-aligned box with the given half-widths (one per component of λ).
    Box { half_widths: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ConductivityModel {
    Constant,
    /// `κ₀ + (C_K − κ₀)·|λ|²/(1 + |λ|² + |w|)`, clamped to `[κ₀, C_K]`.
    Clamped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conductivity {
    pub kappa0: f64,
    pub c_k: f64,
    #[serde(flatten)]
    pub model: ConductivityModel,
}

impl Default for Conductivity {
    fn default() -> Self {
        Conductivity {
            kappa0: 1.0,
            c_k: 1.0,
            model: ConductivityModel::Constant,
        }
    }
}

/// Orthogonal projector `A` on `ℝ^{d+1}` selecting the rate-dependent part of
/// λ; the complement evolves purely rate-independently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projector {
    /// Row-major `(d+1) x (d+1)` matrix.
    pub matrix: Vec<f64>,
    /// Ball radius of `S₁`, acting on `A⊥λ̇`.
    pub rho_s1: f64,
    /// Ball radius of `S₂`, acting on `Aλ̇`.
    pub rho_s2: f64,
}

impl Projector {
    /// Projector onto the last (|m|²-moment) component of λ.
    pub fn last_component(n: usize, rho_s1: f64, rho_s2: f64) -> Self {
        let mut matrix = vec![0.0; n * n];
        matrix[n * n - 1] = 1.0;
        Projector {
            matrix,
            rho_s1,
            rho_s2,
        }
    }

    pub fn size(&self) -> usize {
        (self.matrix.len() as f64).sqrt().round() as usize
    }

    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        let n = v.len();
        for i in 0..n {
            out[i] = (0..n).map(|j| self.matrix[i * n + j] * v[j]).sum();
        }
    }

    /// Splits `v` into `(Av, v − Av)`.
    pub fn split(&self, v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut a = vec![0.0; v.len()];
        self.apply(v, &mut a);
        let perp = v.iter().zip(&a).map(|(x, y)| x - y).collect();
        (a, perp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Material {
    /// Spatial dimension `d`; λ has `d + 1` components.
    pub dim: usize,
    pub a0: f64,
    pub b0: f64,
    pub theta_c: f64,
    pub beta_aniso: f64,
    /// Easy axes `s_α`, each of length `dim`.
    pub easy_axes: Vec<Vec<f64>>,
    pub p: f64,
    pub b_p: f64,
    pub eps_visc: f64,
    pub q: f64,
    pub activation: Activation,
    pub kappa_pen: f64,
    pub mu0: f64,
    pub cv_c0: f64,
    pub cv_omega: f64,
    pub conductivity: Conductivity,
    pub projector: Option<Projector>,
}

impl Material {
    /// Uniaxial reference material with easy axis `e₁`.
    pub fn uniaxial(dim: usize) -> Self {
        let mut axis = vec![0.0; dim];
        axis[0] = 1.0;
        Material {
            dim,
            a0: 2.0,
            b0: 1.0,
            theta_c: 1.0,
            beta_aniso: if dim > 1 { 1.0 } else { 0.0 },
            easy_axes: vec![axis],
            p: 6.0,
            b_p: 1e-3,
            eps_visc: 0.1,
            q: 2.0,
            activation: Activation::Ball { rho: 0.1 },
            kappa_pen: 4.0,
            mu0: 1.0,
            cv_c0: 1.0,
            cv_omega: 2.0,
            conductivity: Conductivity::default(),
            projector: None,
        }
    }

    /// Number of components of λ.
    pub fn lambda_dim(&self) -> usize {
        self.dim + 1
    }

    /// Coupling vector `a♭ = (0, …, 0, a₀)`.
    pub fn coupling_vector(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.lambda_dim()];
        v[self.dim] = self.a0;
        v
    }

    /// Zero-temperature easy-axis magnitude `√(a₀θ_c/(2b₀))`.
    pub fn saturation_magnitude(&self) -> f64 {
        (self.a0 * self.theta_c / (2.0 * self.b0)).sqrt()
    }

    /// Default admissible magnetization radius: twice the saturation magnitude.
    pub fn default_r_max(&self) -> f64 {
        2.0 * self.saturation_magnitude()
    }

    /// Conjugate exponent `q' = q/(q−1)`.
    pub fn q_conjugate(&self) -> f64 {
        self.q / (self.q - 1.0)
    }

    /// Largest ball radius contained in `S` (the stick threshold along any direction).
    pub fn activation_radius(&self) -> f64 {
        match &self.activation {
            Activation::Ball { rho } => *rho,
            Activation::Box { half_widths } => half_widths.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }
}

/// One failed admissibility condition.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Returns every violated data qualification; an empty list means the material is admissible.
pub fn validate_material(mat: &Material) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut bad = |field: &'static str, message: String| out.push(Violation { field, message });

    if mat.dim != 1 && mat.dim != 2 {
        bad("dim", format!("dimension must be 1 or 2, got {}", mat.dim));
    }
    let positive = [
        ("a0", mat.a0),
        ("b0", mat.b0),
        ("theta_c", mat.theta_c),
        ("eps_visc", mat.eps_visc),
        ("kappa_pen", mat.kappa_pen),
        ("mu0", mat.mu0),
        ("cv_c0", mat.cv_c0),
    ];
    for (name, v) in positive {
        if !(v > 0.0) || !v.is_finite() {
            bad(name, format!("must be positive and finite, got {v}"));
        }
    }
    if !(mat.beta_aniso >= 0.0) {
        bad("beta_aniso", format!("must be non-negative, got {}", mat.beta_aniso));
    }
    if !(mat.b_p >= 0.0) {
        bad("b_p", format!("must be non-negative, got {}", mat.b_p));
    }
    if mat.b_p > 0.0 && !(mat.p > 4.0) {
        bad("p", format!("p>4 required for coercivity when b_p>0, got p={}", mat.p));
    }
    if !(mat.q >= 2.0) {
        bad("q", format!("q>=2 required, got {}", mat.q));
    } else if !(mat.cv_omega >= mat.q_conjugate()) {
        bad(
            "cv_omega",
            format!("omega >= q' = {} required, got {}", mat.q_conjugate(), mat.cv_omega),
        );
    }
    match &mat.activation {
        Activation::Ball { rho } => {
            if !(*rho >= 0.0) {
                bad("activation", format!("ball radius must be non-negative, got {rho}"));
            }
        }
        Activation::Box { half_widths } => {
            if half_widths.len() != mat.lambda_dim() {
                bad(
                    "activation",
                    format!("box needs {} half-widths, got {}", mat.lambda_dim(), half_widths.len()),
                );
            }
            if half_widths.iter().any(|h| !(*h >= 0.0)) {
                bad("activation", "box half-widths must be non-negative".into());
            }
        }
    }
    let k = &mat.conductivity;
    if !(k.kappa0 > 0.0) || !(k.c_k >= k.kappa0) {
        bad(
            "conductivity",
            format!("need 0 < kappa0 <= C_K, got kappa0={} C_K={}", k.kappa0, k.c_k),
        );
    }
    if mat.easy_axes.is_empty() && mat.beta_aniso > 0.0 {
        bad("easy_axes", "at least one easy axis required when beta_aniso > 0".into());
    }
    for axis in &mat.easy_axes {
        let n2: f64 = axis.iter().map(|x| x * x).sum();
        if axis.len() != mat.dim || (n2.sqrt() - 1.0).abs() > 1e-12 {
            bad("easy_axes", format!("easy axis {axis:?} is not a unit vector in R^{}", mat.dim));
        }
    }
    if let Some(proj) = &mat.projector {
        let n = mat.lambda_dim();
        if proj.matrix.len() != n * n {
            bad("projector", format!("projector must be {n}x{n}"));
        } else {
            let a = &proj.matrix;
            let mut idem = 0.0f64;
            let mut sym = 0.0f64;
            for i in 0..n {
                for j in 0..n {
                    let aa: f64 = (0..n).map(|k| a[i * n + k] * a[k * n + j]).sum();
                    idem = idem.max((aa - a[i * n + j]).abs());
                    sym = sym.max((a[i * n + j] - a[j * n + i]).abs());
                }
            }
            if idem > 1e-12 {
                bad("projector", "A*A != A".into());
            }
            if sym > 1e-12 {
                bad("projector", "only orthogonal (symmetric) projectors are supported".into());
            }
            // Ker A ⊆ Ker(a♭·)  ⇔  a♭ ∈ Range(Aᵀ) = Range(A) for symmetric A  ⇔  A a♭ = a♭.
            let ab = mat.coupling_vector();
            let mut aab = vec![0.0; n];
            proj.apply(&ab, &mut aab);
            if aab.iter().zip(&ab).any(|(x, y)| (x - y).abs() > 1e-12) {
                bad("projector", "Ker A must be contained in Ker(a_flat . )".into());
            }
        }
        if !(proj.rho_s1 >= 0.0) || !(proj.rho_s2 >= 0.0) {
            bad("projector", "split activation radii must be non-negative".into());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q2_omega2_is_valid() {
        let mut m = Material::uniaxial(1);
        m.q = 2.0;
        m.cv_omega = 2.0;
        assert!(validate_material(&m).is_empty());
    }

    #[test]
    fn low_growth_exponent_is_flagged() {
        let mut m = Material::uniaxial(1);
        m.p = 3.0;
        m.b_p = 0.1;
        let v = validate_material(&m);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "p");
        assert!(v[0].message.contains("p>4"));
    }

    #[test]
    fn zero_threshold_purely_viscous_is_valid() {
        let mut m = Material::uniaxial(2);
        m.activation = Activation::Ball { rho: 0.0 };
        m.eps_visc = 0.5;
        assert!(validate_material(&m).is_empty());
    }

    #[test]
    fn omega_below_conjugate_exponent_is_flagged() {
        let mut m = Material::uniaxial(1);
        m.q = 3.0;
        m.cv_omega = 1.2;
        assert!(validate_material(&m).iter().any(|v| v.field == "cv_omega"));
    }

    #[test]
    fn projector_checks() {
        let mut m = Material::uniaxial(1);
        m.projector = Some(Projector::last_component(2, 0.1, 0.1));
        assert!(validate_material(&m).is_empty());
        // Projector onto the first component: a♭ is not in its range.
        m.projector = Some(Projector {
            matrix: vec![1.0, 0.0, 0.0, 0.0],
            rho_s1: 0.1,
            rho_s2: 0.1,
        });
        assert!(validate_material(&m).iter().any(|v| v.field == "projector"));
        m.projector = Some(Projector {
            matrix: vec![1.0, 0.0, 0.0, 2.0],
            rho_s1: 0.1,
            rho_s2: 0.1,
        });
        assert!(validate_material(&m).iter().any(|v| v.message.contains("A*A")));
    }

    #[test]
    fn validation_is_pure_and_idempotent() {
        let mut m = Material::uniaxial(2);
        m.p = 2.0;
        m.q = 1.0;
        let a = validate_material(&m);
        let b = validate_material(&m);
        assert_eq!(a, b);
        assert!(a.len() >= 2);
    }

    #[test]
    fn non_unit_easy_axis_is_flagged() {
        let mut m = Material::uniaxial(2);
        m.easy_axes = vec![vec![1.0, 1.0]];
        assert!(validate_material(&m).iter().any(|v| v.field == "easy_axes"));
    }
}
