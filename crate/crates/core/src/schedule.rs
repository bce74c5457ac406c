//! Time-dependent loading: external field `h(t)`, exterior temperature
//! `θ_ext(t)` and the boundary heat-transfer coefficient `b`.
//!
//! Both `h` and `θ_ext` are piecewise linear between keyframes and spatially
//! uniform. Before the first keyframe and after the last one they are held
//! constant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, VectorField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldKeyframe {
    pub t: f64,
    pub h: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarKeyframe {
    pub t: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub field: Vec<FieldKeyframe>,
    pub theta_ext: Vec<ScalarKeyframe>,
    pub b_coeff: f64,
    pub t_end: f64,
    pub tau: f64,
}

/// Loading evaluated at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleSample {
    pub h: VectorField,
    /// Right-continuous time derivative of `h`.
    pub hdot: VectorField,
    pub theta_ext: f64,
    pub b: f64,
}

impl Schedule {
    /// Constant field `h`, constant exterior temperature.
    pub fn constant(h: Vec<f64>, theta_ext: f64, b_coeff: f64, t_end: f64, tau: f64) -> Result<Self> {
        let s = Schedule {
            field: vec![FieldKeyframe { t: 0.0, h }],
            theta_ext: vec![ScalarKeyframe { t: 0.0, value: theta_ext }],
            b_coeff,
            t_end,
            tau,
        };
        s.validate()?;
        Ok(s)
    }

    /// Triangle wave `0 → +A → −A → 0` repeated `periods` times along `direction`.
    pub fn triangle(
        direction: &[f64],
        amplitude: f64,
        period: f64,
        periods: usize,
        theta_ext: f64,
        b_coeff: f64,
        tau: f64,
    ) -> Result<Self> {
        let at = |s: f64| direction.iter().map(|d| d * s * amplitude).collect::<Vec<_>>();
        let mut field = vec![FieldKeyframe { t: 0.0, h: at(0.0) }];
        for p in 0..periods {
            let t0 = p as f64 * period;
            field.push(FieldKeyframe { t: t0 + 0.25 * period, h: at(1.0) });
            field.push(FieldKeyframe { t: t0 + 0.75 * period, h: at(-1.0) });
            field.push(FieldKeyframe { t: t0 + period, h: at(0.0) });
        }
        let s = Schedule {
            field,
            theta_ext: vec![ScalarKeyframe { t: 0.0, value: theta_ext }],
            b_coeff,
            t_end: periods as f64 * period,
            tau,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn field_dim(&self) -> usize {
        self.field.first().map_or(0, |k| k.h.len())
    }

    /// Number of time steps `T/τ`, rounded to the nearest integer.
    pub fn steps(&self) -> usize {
        (self.t_end / self.tau).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.field.is_empty() || self.theta_ext.is_empty() {
            return Err(Error::Schedule("at least one keyframe is required for h and theta_ext".into()));
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(Error::Schedule(format!("t_end must be positive, got {}", self.t_end)));
        }
        if !(self.tau > 0.0) || self.tau > self.t_end {
            return Err(Error::Schedule(format!("tau must lie in (0, t_end], got {}", self.tau)));
        }
        let steps = self.t_end / self.tau;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::Schedule(format!(
                "t_end/tau must be an integer, got {steps}"
            )));
        }
        if !(self.b_coeff >= 0.0) {
            return Err(Error::Schedule(format!("b must be non-negative, got {}", self.b_coeff)));
        }
        let d = self.field[0].h.len();
        if self.field.iter().any(|k| k.h.len() != d) {
            return Err(Error::Schedule("all field keyframes must have the same length".into()));
        }
        if self.field.iter().any(|k| !k.t.is_finite() || k.h.iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFinite("field keyframes"));
        }
        if self.field.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(Error::Schedule("field keyframe times must be strictly increasing".into()));
        }
        if self.theta_ext.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(Error::Schedule("theta_ext keyframe times must be strictly increasing".into()));
        }
        if self.theta_ext.iter().any(|k| !(k.value >= 0.0) || !k.value.is_finite()) {
            return Err(Error::Schedule("theta_ext must be non-negative".into()));
        }
        Ok(())
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let slack = 1e-12 * self.t_end;
        if !(t >= -slack && t <= self.t_end + slack) {
            return Err(Error::TimeOutOfRange { t, t_end: self.t_end });
        }
        Ok(())
    }

    /// Uniform field value `h(t)` and its right-continuous derivative.
    pub fn field_at(&self, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_time(t)?;
        let keys = &self.field;
        let d = keys[0].h.len();
        let seg = active_segment(keys.iter().map(|k| k.t), t);
        Ok(match seg {
            Segment::Before => (keys[0].h.clone(), vec![0.0; d]),
            Segment::After => (keys[keys.len() - 1].h.clone(), vec![0.0; d]),
            Segment::Inside(i) => {
                let (a, b) = (&keys[i], &keys[i + 1]);
                let s = (t - a.t) / (b.t - a.t);
                let h = (0..d).map(|c| a.h[c] + s * (b.h[c] - a.h[c])).collect();
                let hdot = (0..d).map(|c| (b.h[c] - a.h[c]) / (b.t - a.t)).collect();
                (h, hdot)
            }
        })
    }

    pub fn theta_ext_at(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        let keys = &self.theta_ext;
        Ok(match active_segment(keys.iter().map(|k| k.t), t) {
            Segment::Before => keys[0].value,
            Segment::After => keys[keys.len() - 1].value,
            Segment::Inside(i) => {
                let (a, b) = (keys[i], keys[i + 1]);
                a.value + (t - a.t) / (b.t - a.t) * (b.value - a.value)
            }
        })
    }
}

enum Segment {
    Before,
    Inside(usize),
    After,
}

/// Segment `[t_i, t_{i+1})` containing `t`; the final keyframe belongs to the last segment.
fn active_segment(times: impl Iterator<Item = f64>, t: f64) -> Segment {
    let times: Vec<f64> = times.collect();
    let n = times.len();
    if t < times[0] {
        return Segment::Before;
    }
    if n < 2 {
        return Segment::After;
    }
    if t > times[n - 1] {
        return Segment::After;
    }
    // partition_point gives the first keyframe strictly after t.
    let i = times.partition_point(|&k| k <= t);
    Segment::Inside(i.saturating_sub(1).min(n - 2))
}

/// Evaluates the schedule at time `t` as fields on `grid`.
pub fn sample_schedule(s: &Schedule, grid: &Grid, t: f64) -> Result<ScheduleSample> {
    let (h, hdot) = s.field_at(t)?;
    if h.len() != grid.dim() {
        return Err(Error::Mismatch(format!(
            "field has {} components, grid is {}-dimensional",
            h.len(),
            grid.dim()
        )));
    }
    Ok(ScheduleSample {
        h: VectorField::uniform(*grid, &h),
        hdot: VectorField::uniform(*grid, &hdot),
        theta_ext: s.theta_ext_at(t)?,
        b: s.b_coeff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> Schedule {
        Schedule {
            field: vec![
                FieldKeyframe { t: 0.0, h: vec![0.0] },
                FieldKeyframe { t: 1.0, h: vec![2.0] },
                FieldKeyframe { t: 2.0, h: vec![-2.0] },
            ],
            theta_ext: vec![ScalarKeyframe { t: 0.0, value: 0.5 }],
            b_coeff: 1.0,
            t_end: 2.0,
            tau: 0.1,
        }
    }

    #[test]
    fn linear_interpolation_midpoint() {
        let s = ramp();
        let (h, hdot) = s.field_at(0.5).unwrap();
        assert_eq!(h, vec![1.0]);
        assert_eq!(hdot, vec![2.0]);
    }

    #[test]
    fn constant_field_has_zero_rate() {
        let s = Schedule::constant(vec![0.3, -0.1], 1.0, 0.0, 1.0, 0.25).unwrap();
        for t in [0.0, 0.3, 1.0] {
            assert_eq!(s.field_at(t).unwrap().1, vec![0.0, 0.0]);
        }
    }

    #[test]
    fn rate_is_right_continuous_at_keyframes() {
        let s = ramp();
        assert_eq!(s.field_at(1.0 - 1e-9).unwrap().1, vec![2.0]);
        assert_eq!(s.field_at(1.0).unwrap().1, vec![-4.0]);
        assert_eq!(s.field_at(2.0).unwrap().1, vec![-4.0]);
        // h itself is continuous.
        let below = s.field_at(1.0 - 1e-9).unwrap().0[0];
        let at = s.field_at(1.0).unwrap().0[0];
        assert!((below - at).abs() < 1e-8);
    }

    #[test]
    fn out_of_range_time_is_rejected() {
        let s = ramp();
        assert!(matches!(s.field_at(2.5), Err(Error::TimeOutOfRange { .. })));
        assert!(matches!(s.field_at(-0.1), Err(Error::TimeOutOfRange { .. })));
    }

    #[test]
    fn triangle_wave_shape() {
        let s = Schedule::triangle(&[1.0], 2.0, 4.0, 2, 0.0, 0.0, 0.1).unwrap();
        assert_eq!(s.t_end, 8.0);
        assert_eq!(s.steps(), 80);
        assert_eq!(s.field_at(1.0).unwrap().0, vec![2.0]);
        assert_eq!(s.field_at(3.0).unwrap().0, vec![-2.0]);
        assert_eq!(s.field_at(6.0).unwrap().0, vec![0.0]);
    }

    #[test]
    fn invalid_schedules() {
        let mut s = ramp();
        s.b_coeff = -1.0;
        assert!(s.validate().is_err());
        let mut s = ramp();
        s.field[1].t = 0.0;
        assert!(s.validate().is_err());
        let mut s = ramp();
        s.theta_ext[0].value = -0.1;
        assert!(s.validate().is_err());
        let mut s = ramp();
        s.tau = 0.3;
        assert!(s.validate().is_err());
    }

    #[test]
    fn sample_builds_uniform_fields() {
        let g = Grid::line(4, 1.0).unwrap();
        let smp = sample_schedule(&ramp(), &g, 1.5).unwrap();
        assert!(smp.h.values().iter().all(|&v| v == 0.0));
        assert!(smp.hdot.values().iter().all(|&v| v == -4.0));
        assert_eq!(smp.theta_ext, 0.5);
        assert_eq!(smp.b, 1.0);
    }
}
