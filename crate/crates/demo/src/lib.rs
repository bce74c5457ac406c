//! Browser demo: a hysteresis loop, a Curie sweep and a static profile,
//! each returned to JavaScript as a flat `Float64Array`.
//!
//! The plain functions are usable natively; the `wasm_*` wrappers convert
//! errors into JavaScript exceptions.

use mesomag::config::Config;
use mesomag::experiments::{self, Setup};
use mesomag::measure::moments;
use wasm_bindgen::prelude::*;

const BASE_1D: &str = r#"
[grid]
dim = 1
extents = [1]

[material]
theta_c = 1.0
eps_visc = 0.01
activation = { shape = "ball", rho = 0.5 }

[schedule]
t_end = 1.0
tau = 0.1
theta_ext = 0.5
field = { kind = "constant", h = [0.0] }

[solver]
isothermal = true
reg_weight = 0.01
"#;

fn config(cells: usize, rho: f64) -> Result<Config, String> {
    let mut cfg = Config::from_toml(BASE_1D).map_err(|e| e.to_string())?;
    cfg.grid.extents = vec![cells];
    cfg.material.activation = mesomag::material::Activation::Ball { rho };
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

/// Single-cell loop at temperature `theta`: `[h₀, m₀, h₁, m₁, …]` over all periods.
pub fn hysteresis_loop(theta: f64, rho: f64, amplitude: f64, steps_per_period: usize) -> Result<Vec<f64>, String> {
    let mut cfg = config(1, rho)?;
    cfg.hysteresis.amplitude = amplitude;
    cfg.hysteresis.steps_per_period = steps_per_period;
    cfg.validate().map_err(|e| e.to_string())?;
    let r = experiments::hysteresis_loop(&cfg, theta, 0).map_err(|e| e.to_string())?;
    let h = r.table.column("h").unwrap_or_default();
    let m = r.table.column("m").unwrap_or_default();
    Ok(h.into_iter().zip(m).flat_map(|(a, b)| [a, b]).collect())
}

/// Static mean `|m|` of a single cell over a temperature ladder: `[θ₀, |m|₀, …]`.
pub fn curie_sweep(theta_max: f64, count: usize, h: f64) -> Result<Vec<f64>, String> {
    let mut cfg = config(1, 0.5)?;
    cfg.curie_sweep.theta_min = 0.0;
    cfg.curie_sweep.theta_max = theta_max;
    cfg.curie_sweep.count = count;
    cfg.curie_sweep.h = Some(vec![h]);
    cfg.validate().map_err(|e| e.to_string())?;
    let t = experiments::curie_sweep(&cfg).map_err(|e| e.to_string())?;
    let th = t.column("theta").unwrap_or_default();
    let m = t.column("m_abs").unwrap_or_default();
    Ok(th.into_iter().zip(m).flat_map(|(a, b)| [a, b]).collect())
}

/// Static minimizer on a bar of `cells` cells: `[x, m, λ₁, λ₂]` per cell.
pub fn static_profile(cells: usize, theta: f64, h: f64, kappa: f64) -> Result<Vec<f64>, String> {
    let mut cfg = config(cells, 0.5)?;
    cfg.material.kappa_pen = kappa;
    cfg.schedule.field = mesomag::config::FieldConfig::Constant { h: vec![h] };
    cfg.validate().map_err(|e| e.to_string())?;
    let setup = Setup::from_config(&cfg).map_err(|e| e.to_string())?;
    let s = experiments::static_at(&setup, theta, 0.0, kappa).map_err(|e| e.to_string())?;
    let m = moments(&s.nu).m;
    let grid = setup.grid;
    Ok((0..grid.cell_count())
        .flat_map(|c| {
            let l = s.lambda.cell(c);
            [grid.center(c)[0], m.cell(c)[0], l[0], l[1]]
        })
        .collect())
}

#[wasm_bindgen(js_name = hysteresisLoop)]
pub fn wasm_hysteresis_loop(theta: f64, rho: f64, amplitude: f64, steps_per_period: usize) -> Result<Vec<f64>, JsError> {
    hysteresis_loop(theta, rho, amplitude, steps_per_period).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = curieSweep)]
pub fn wasm_curie_sweep(theta_max: f64, count: usize, h: f64) -> Result<Vec<f64>, JsError> {
    curie_sweep(theta_max, count, h).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = staticProfile)]
pub fn wasm_static_profile(cells: usize, theta: f64, h: f64, kappa: f64) -> Result<Vec<f64>, JsError> {
    static_profile(cells, theta, h, kappa).map_err(|e| JsError::new(&e))
}
