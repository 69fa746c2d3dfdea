//! Separation distances, bearings and camera field-of-view membership.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Result, ZhuyiError};
use crate::state::{normalize_angle, KinematicState};

/// Slack on the closed FOV interval so that edge bearings computed through
/// `atan2` still count as inside.
const FOV_EDGE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraConfig {
    pub id: String,
    /// Optical axis, radians relative to the ego heading (left positive).
    pub azimuth_center: f64,
    /// Horizontal field of view, radians in (0, 2π].
    pub fov: f64,
}

impl CameraConfig {
    pub fn new(id: impl Into<String>, azimuth_center: f64, fov: f64) -> Result<Self> {
        if !(fov > 0.0 && fov <= TAU + 1e-12) {
            return Err(ZhuyiError::InvalidParam {
                name: "fov",
                reason: format!("{fov} not in (0, 2π]"),
            });
        }
        Ok(Self { id: id.into(), azimuth_center: normalize_angle(azimuth_center), fov })
    }

    pub fn from_degrees(id: impl Into<String>, azimuth_deg: f64, fov_deg: f64) -> Self {
        Self::new(id, azimuth_deg.to_radians(), fov_deg.to_radians())
            .expect("valid camera literal")
    }

    /// Whether the ego-relative bearing lies within this camera's view.
    pub fn covers_bearing(&self, bearing: f64) -> bool {
        if self.fov >= TAU {
            return true;
        }
        normalize_angle(bearing - self.azimuth_center).abs() <= self.fov / 2.0 + FOV_EDGE_EPS
    }
}

/// The five-camera rig: wide and narrow front, two sides, rear.
pub fn default_rig() -> Vec<CameraConfig> {
    vec![
        CameraConfig::from_degrees("front", 0.0, 120.0),
        CameraConfig::from_degrees("front_narrow", 0.0, 60.0),
        CameraConfig::from_degrees("left", 90.0, 100.0),
        CameraConfig::from_degrees("right", -90.0, 100.0),
        CameraConfig::from_degrees("rear", 180.0, 120.0),
    ]
}

/// Largest angular gap (radians) not covered by any camera; 0 when the rig
/// sees every bearing. Evaluated on a 0.01° lattice.
pub fn largest_blind_wedge(rig: &[CameraConfig]) -> f64 {
    let steps = 36_000;
    let step = TAU / steps as f64;
    let mut worst = 0usize;
    let mut run = 0usize;
    // two laps so a wedge straddling ±π is measured whole
    for i in 0..2 * steps {
        let bearing = -PI + (i % steps) as f64 * step;
        if rig.iter().any(|c| c.covers_bearing(bearing)) {
            run = 0;
        } else {
            run += 1;
            worst = worst.max(run.min(steps));
        }
    }
    worst as f64 * step
}

/// Combined half-extent subtracted from center-to-center distances.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleExtent {
    pub margin: f64,
}

impl VehicleExtent {
    pub fn new(margin: f64) -> Result<Self> {
        if !(margin >= 0.0 && margin.is_finite()) {
            return Err(ZhuyiError::InvalidParam {
                name: "margin",
                reason: format!("{margin} must be a finite value >= 0"),
            });
        }
        Ok(Self { margin })
    }
}

/// `s_n`: distance from the ego at t₀ to the actor at t_n, less the extent
/// margin, floored at zero.
pub fn separation(ego0: &KinematicState, actor_at_tn: &KinematicState, extent: VehicleExtent) -> f64 {
    (ego0.distance_to(actor_at_tn) - extent.margin).max(0.0)
}

/// Bearing of `actor` seen from `ego`, relative to the ego heading.
pub fn relative_bearing(ego: &KinematicState, actor: &KinematicState) -> f64 {
    normalize_angle((actor.y - ego.y).atan2(actor.x - ego.x) - ego.heading)
}

/// FOV membership at t₀. An actor coincident with the ego belongs to every
/// camera.
pub fn in_fov(ego0: &KinematicState, actor0: &KinematicState, cam: &CameraConfig) -> bool {
    if ego0.distance_to(actor0) == 0.0 {
        return true;
    }
    cam.covers_bearing(relative_bearing(ego0, actor0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at_bearing(deg: f64) -> KinematicState {
        let r = 20.0;
        KinematicState::at(r * deg.to_radians().cos(), r * deg.to_radians().sin())
    }

    #[test]
    fn separation_examples() {
        let ego = KinematicState::at(0.0, 0.0);
        let none = VehicleExtent::default();
        assert_eq!(separation(&ego, &KinematicState::at(30.0, 0.0), none), 30.0);
        assert_eq!(separation(&ego, &KinematicState::at(3.0, 4.0), none), 5.0);
        let m = VehicleExtent::new(4.5).unwrap();
        assert_eq!(separation(&ego, &KinematicState::at(30.0, 0.0), m), 25.5);
        assert_eq!(separation(&ego, &KinematicState::at(3.0, 0.0), m), 0.0);
        assert!(VehicleExtent::new(-1.0).is_err());
    }

    #[test]
    fn front_camera_membership() {
        let ego = KinematicState::at(0.0, 0.0);
        let front = CameraConfig::from_degrees("front", 0.0, 120.0);
        assert!(in_fov(&ego, &at_bearing(0.0), &front));
        assert!(!in_fov(&ego, &at_bearing(180.0), &front));
        assert!(!in_fov(&ego, &at_bearing(60.0001), &front));
        assert!(in_fov(&ego, &at_bearing(59.9999), &front));
        assert!(in_fov(&ego, &at_bearing(-59.9999), &front));
        assert!(in_fov(&ego, &ego, &CameraConfig::from_degrees("rear", 180.0, 10.0)));
    }

    #[test]
    fn wraparound_rear_camera() {
        let ego = KinematicState::at(0.0, 0.0);
        let rear = CameraConfig::from_degrees("rear", 180.0, 120.0);
        assert!(in_fov(&ego, &at_bearing(179.0), &rear));
        assert!(in_fov(&ego, &at_bearing(-179.0), &rear));
        assert!(in_fov(&ego, &at_bearing(-121.0), &rear));
        assert!(!in_fov(&ego, &at_bearing(-119.0), &rear));
    }

    #[test]
    fn default_rig_has_no_blind_wedge() {
        assert_eq!(largest_blind_wedge(&default_rig()), 0.0);
        let front_only = vec![CameraConfig::from_degrees("front", 0.0, 120.0)];
        assert!((largest_blind_wedge(&front_only) - 240f64.to_radians()).abs() < 1e-3);
    }

    #[test]
    fn rejects_bad_fov() {
        assert!(CameraConfig::new("x", 0.0, 0.0).is_err());
        assert!(CameraConfig::new("x", 0.0, 7.0).is_err());
    }
}
