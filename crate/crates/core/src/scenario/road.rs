//! Three-lane road, straight or of constant curvature.
//!
//! Positions are given as arc length `s` along the centre line and lateral
//! offset `d` (left positive). The centre line starts at the origin heading
//! along +x; positive curvature bends left.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Road {
    pub lane_width: f64,
    /// 1 / radius, 0 for a straight road.
    pub curvature: f64,
}

/// Lane on a three-lane road.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lane {
    Right,
    Center,
    Left,
}

impl Road {
    pub fn straight(lane_width: f64) -> Self {
        Self { lane_width, curvature: 0.0 }
    }

    pub fn lane_offset(&self, lane: Lane) -> f64 {
        match lane {
            Lane::Right => -self.lane_width,
            Lane::Center => 0.0,
            Lane::Left => self.lane_width,
        }
    }

    /// World `(x, y, heading)` of road coordinates `(s, d)`.
    pub fn pose(&self, s: f64, d: f64) -> (f64, f64, f64) {
        if self.curvature == 0.0 {
            return (s, d, 0.0);
        }
        let r = 1.0 / self.curvature;
        let theta = s * self.curvature;
        ((r - d) * theta.sin(), r - (r - d) * theta.cos(), theta)
    }

    /// Ratio of ground speed to centre-line arc-length rate at offset `d`.
    pub fn speed_scale(&self, d: f64) -> f64 {
        1.0 - self.curvature * d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_pose_is_identity() {
        let road = Road::straight(3.7);
        assert_eq!(road.pose(12.0, -3.7), (12.0, -3.7, 0.0));
        assert_eq!(road.lane_offset(Lane::Left), 3.7);
    }

    #[test]
    fn curved_pose_stays_on_circle() {
        let road = Road { lane_width: 3.7, curvature: 1.0 / 200.0 };
        for s in [0.0, 50.0, 314.0] {
            for d in [-3.7, 0.0, 3.7] {
                let (x, y, _) = road.pose(s, d);
                let r = (x * x + (y - 200.0) * (y - 200.0)).sqrt();
                assert!((r - (200.0 - d)).abs() < 1e-9);
            }
        }
        let (_, _, h) = road.pose(100.0 * std::f64::consts::PI, 0.0);
        assert!((h - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }
}
