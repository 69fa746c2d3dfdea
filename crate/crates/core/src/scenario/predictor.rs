//! Constant-acceleration trajectory predictor.
//!
//! Produces `num_variants` straight-line extrapolations along the actor's
//! heading whose accelerations are the current acceleration plus offsets
//! spread evenly over `[-decel_spread, +decel_spread]`. Speeds never go
//! negative: a braking variant stops and stays put.

use serde::{Deserialize, Serialize};

use crate::error::{Result, ZhuyiError};
use crate::state::{KinematicState, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictorConfig {
    pub horizon: f64,
    pub num_variants: usize,
    /// Largest acceleration offset from the current value, m/s².
    pub decel_spread: f64,
    /// One probability per variant, ordered from hardest braking up.
    pub variant_probabilities: Vec<f64>,
    pub sample_dt: f64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            horizon: 8.0,
            num_variants: 3,
            decel_spread: 2.0,
            variant_probabilities: vec![0.25, 0.5, 0.25],
            sample_dt: 0.1,
        }
    }
}

impl PredictorConfig {
    pub fn single(horizon: f64) -> Self {
        Self { horizon, num_variants: 1, decel_spread: 0.0, variant_probabilities: vec![1.0], sample_dt: 0.1 }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: String| Err(ZhuyiError::InvalidParam { name, reason });
        if self.num_variants == 0 {
            return bad("num_variants", "must be >= 1".into());
        }
        if self.variant_probabilities.len() != self.num_variants {
            return bad(
                "variant_probabilities",
                format!("{} entries for {} variants", self.variant_probabilities.len(), self.num_variants),
            );
        }
        if self.variant_probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("variant_probabilities", "entries must lie in [0, 1]".into());
        }
        let sum: f64 = self.variant_probabilities.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return bad("variant_probabilities", format!("sum to {sum}, expected 1"));
        }
        if !(self.horizon > 0.0 && self.sample_dt > 0.0 && self.decel_spread >= 0.0) {
            return bad("predictor", "horizon and sample_dt must be positive, spread >= 0".into());
        }
        Ok(())
    }

    /// Acceleration offsets, hardest braking first.
    pub fn offsets(&self) -> Vec<f64> {
        if self.num_variants == 1 {
            return vec![0.0];
        }
        let n = (self.num_variants - 1) as f64;
        (0..self.num_variants)
            .map(|i| -self.decel_spread + 2.0 * self.decel_spread * i as f64 / n)
            .collect()
    }
}

/// Distance and speed after `t` seconds at constant acceleration, stopping
/// at zero speed.
fn extrapolate(v: f64, a: f64, t: f64) -> (f64, f64) {
    if a < 0.0 && v + a * t < 0.0 {
        (v * v / (-2.0 * a), 0.0)
    } else {
        (v * t + 0.5 * a * t * t, v + a * t)
    }
}

pub fn predict_trajectories(current: &KinematicState, cfg: &PredictorConfig) -> Result<Vec<Trajectory>> {
    cfg.validate()?;
    let steps = (cfg.horizon / cfg.sample_dt).ceil() as usize;
    let (sin, cos) = current.heading.sin_cos();
    cfg.offsets()
        .into_iter()
        .zip(&cfg.variant_probabilities)
        .map(|(offset, &p)| {
            let accel = current.a + offset;
            let samples = (0..=steps)
                .map(|i| {
                    let t = (i as f64 * cfg.sample_dt).min(cfg.horizon);
                    let (dist, v) = extrapolate(current.v, accel, t);
                    let moving = v > 0.0 || accel > 0.0;
                    let state = KinematicState {
                        x: current.x + dist * cos,
                        y: current.y + dist * sin,
                        v: v.max(0.0),
                        a: if moving { accel } else { 0.0 },
                        heading: current.heading,
                    };
                    (t, state)
                })
                .collect();
            Trajectory::new(samples, p)
        })
        .collect()
}
