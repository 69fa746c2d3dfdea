//! Kinematic states and time-indexed trajectories.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ZhuyiError};

/// Wraps an angle into (-π, π].
pub fn normalize_angle(theta: f64) -> f64 {
    let mut a = theta % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Planar state of the ego or an actor at one instant, SI units.
///
/// `v` is a speed (never negative); `a` is the signed longitudinal
/// acceleration, negative while decelerating.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KinematicState {
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub a: f64,
    pub heading: f64,
}

impl KinematicState {
    pub fn new(x: f64, y: f64, v: f64, a: f64, heading: f64) -> Self {
        Self { x, y, v: v.max(0.0), a, heading: normalize_angle(heading) }
    }

    pub fn at(x: f64, y: f64) -> Self {
        Self::new(x, y, 0.0, 0.0, 0.0)
    }

    pub fn distance_to(&self, other: &KinematicState) -> f64 {
        (other.x - self.x).hypot(other.y - self.y)
    }
}

/// A predicted (or recorded) future of one actor with its probability.
///
/// Samples start at `t = 0` with strictly increasing times. Position and
/// speed are linearly interpolated between samples; queries past the last
/// sample continue at the final speed along the final heading with zero
/// acceleration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    samples: Vec<(f64, KinematicState)>,
    probability: f64,
}

impl Trajectory {
    pub fn new(samples: Vec<(f64, KinematicState)>, probability: f64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(ZhuyiError::MalformedTrajectory(format!(
                "need at least 2 samples, got {}",
                samples.len()
            )));
        }
        if samples[0].0 != 0.0 {
            return Err(ZhuyiError::MalformedTrajectory(format!(
                "first sample at t = {}, expected 0",
                samples[0].0
            )));
        }
        if let Some(i) = samples.windows(2).position(|w| !(w[1].0 > w[0].0)) {
            return Err(ZhuyiError::MalformedTrajectory(format!(
                "time not strictly increasing at sample {}",
                i + 1
            )));
        }
        if samples.iter().any(|(t, s)| !t.is_finite() || s.v < 0.0 || !s.v.is_finite()) {
            return Err(ZhuyiError::MalformedTrajectory("non-finite time or invalid speed".into()));
        }
        if !(0.0..=1.0).contains(&probability) {
            return Err(ZhuyiError::MalformedTrajectory(format!(
                "probability {probability} outside [0, 1]"
            )));
        }
        Ok(Self { samples, probability })
    }

    /// Two-sample trajectory of an actor that stays at `state` for `duration`.
    pub fn constant(state: KinematicState, duration: f64) -> Self {
        Self { samples: vec![(0.0, state), (duration.max(f64::MIN_POSITIVE), state)], probability: 1.0 }
    }

    pub fn probability(&self) -> f64 {
        self.probability
    }

    pub fn samples(&self) -> &[(f64, KinematicState)] {
        &self.samples
    }

    pub fn duration(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.0)
    }

    pub fn state_at(&self, t: f64) -> KinematicState {
        let (t_end, last) = *self.samples.last().expect("trajectory has samples");
        if t >= t_end {
            let dt = t - t_end;
            let (sin, cos) = last.heading.sin_cos();
            return KinematicState {
                x: last.x + last.v * dt * cos,
                y: last.y + last.v * dt * sin,
                v: last.v,
                a: 0.0,
                heading: last.heading,
            };
        }
        if t <= 0.0 {
            return self.samples[0].1;
        }
        // first sample strictly after t
        let hi = self.samples.partition_point(|(ts, _)| *ts <= t);
        let (t0, s0) = self.samples[hi - 1];
        let (t1, s1) = self.samples[hi];
        let w = (t - t0) / (t1 - t0);
        KinematicState {
            x: s0.x + w * (s1.x - s0.x),
            y: s0.y + w * (s1.y - s0.y),
            v: s0.v + w * (s1.v - s0.v),
            a: s0.a,
            heading: normalize_angle(s0.heading + w * normalize_angle(s1.heading - s0.heading)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angle_normalization_half_open() {
        assert_eq!(normalize_angle(PI), PI);
        assert!((normalize_angle(-PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((normalize_angle(7.0 * PI) - PI).abs() < 1e-9);
    }

    #[test]
    fn malformed_trajectories_rejected() {
        let s = KinematicState::default();
        assert!(Trajectory::new(vec![(0.0, s)], 1.0).is_err());
        assert!(Trajectory::new(vec![(0.1, s), (0.2, s)], 1.0).is_err());
        assert!(Trajectory::new(vec![(0.0, s), (0.0, s)], 1.0).is_err());
        assert!(Trajectory::new(vec![(0.0, s), (1.0, s)], 1.5).is_err());
    }

    #[test]
    fn interpolates_and_extrapolates() {
        let a = KinematicState::new(0.0, 0.0, 10.0, 0.0, 0.0);
        let b = KinematicState::new(1.0, 0.0, 10.0, 0.0, 0.0);
        let traj = Trajectory::new(vec![(0.0, a), (0.1, b)], 1.0).unwrap();
        assert!((traj.state_at(0.05).x - 0.5).abs() < 1e-12);
        // past the end: constant speed along heading
        assert!((traj.state_at(1.1).x - 11.0).abs() < 1e-9);
        assert_eq!(traj.state_at(-1.0), a);
    }
}
