//! Declarative closed-loop scenario descriptions.
//!
//! A [`ScenarioScript`] names either one of the built-in [`Family`] layouts
//! plus overrides, or carries a fully custom [`ScenarioSpec`]. Building a
//! script yields a [`ScenarioSpec`]: road, ego cruise, controller constants
//! and a list of actors with trigger/action events. Nothing here runs the
//! simulation; see [`super::engine`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ZhuyiError};
use crate::geometry::{default_rig, CameraConfig};
use crate::ActorId;

use super::road::{Lane, Road};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    CutOut,
    CutOutFast,
    CutIn,
    ChallengingCutIn,
    ChallengingCutInCurved,
    VehicleFollowing,
    FrontRightActivity1,
    FrontRightActivity2,
    FrontRightActivity3,
    /// Ego alone on the road.
    OpenRoad,
}

impl Family {
    pub const BENCHMARK: [Family; 9] = [
        Family::CutOut,
        Family::CutOutFast,
        Family::CutIn,
        Family::ChallengingCutIn,
        Family::ChallengingCutInCurved,
        Family::VehicleFollowing,
        Family::FrontRightActivity1,
        Family::FrontRightActivity2,
        Family::FrontRightActivity3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::CutOut => "cut_out",
            Family::CutOutFast => "cut_out_fast",
            Family::CutIn => "cut_in",
            Family::ChallengingCutIn => "challenging_cut_in",
            Family::ChallengingCutInCurved => "challenging_cut_in_curved",
            Family::VehicleFollowing => "vehicle_following",
            Family::FrontRightActivity1 => "front_right_activity_1",
            Family::FrontRightActivity2 => "front_right_activity_2",
            Family::FrontRightActivity3 => "front_right_activity_3",
            Family::OpenRoad => "open_road",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Family::BENCHMARK
            .iter()
            .chain(std::iter::once(&Family::OpenRoad))
            .copied()
            .find(|f| f.name() == name)
            .ok_or_else(|| ZhuyiError::UnknownFamily(name.to_string()))
    }

    /// Ego cruise speed, m/s.
    pub fn default_ego_speed(self) -> f64 {
        use crate::MPH;
        match self {
            Family::CutOut => 20.0 * MPH,
            Family::CutOutFast | Family::ChallengingCutInCurved => 40.0 * MPH,
            Family::FrontRightActivity1 | Family::FrontRightActivity2 => 40.0 * MPH,
            Family::ChallengingCutIn | Family::FrontRightActivity3 => 60.0 * MPH,
            Family::CutIn | Family::VehicleFollowing | Family::OpenRoad => 70.0 * MPH,
        }
    }

    /// The family's key distance, meters. For the cut-outs it is the lead's
    /// distance to the hidden obstacle when it leaves the lane; otherwise the
    /// initial gap from the ego to the scripted actor.
    pub fn default_trigger_gap(self) -> f64 {
        match self {
            Family::CutOut => 20.0,
            Family::CutOutFast => 30.0,
            Family::CutIn => 40.0,
            Family::ChallengingCutIn | Family::ChallengingCutInCurved => 15.0,
            Family::VehicleFollowing => 50.0,
            Family::FrontRightActivity1 => 25.0,
            Family::FrontRightActivity2 => 30.0,
            Family::FrontRightActivity3 => 35.0,
            Family::OpenRoad => 50.0,
        }
    }
}

/// Optional overrides of a family's layout. Absent fields take the family
/// defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FamilyParams {
    /// m/s, in [0, 40].
    pub ego_speed: Option<f64>,
    /// m, in [2.5, 5].
    pub lane_width: Option<f64>,
    /// s, in [1, 120].
    pub duration: Option<f64>,
    /// Uniform noise on actor start positions, m, in [0, 5].
    pub jitter: Option<f64>,
    /// m, in [1, 200]; see [`Family::default_trigger_gap`].
    pub trigger_gap: Option<f64>,
    /// 1/m, magnitude at most 0.02. Only the curved family defaults to non-zero.
    pub curvature: Option<f64>,
}

fn in_range(name: &str, value: Option<f64>, lo: f64, hi: f64) -> Result<()> {
    match value {
        Some(v) if !(v >= lo && v <= hi) => Err(ZhuyiError::ScenarioParam {
            name: name.to_string(),
            reason: format!("{v} outside [{lo}, {hi}]"),
        }),
        _ => Ok(()),
    }
}

impl FamilyParams {
    pub fn validate(&self) -> Result<()> {
        in_range("ego_speed", self.ego_speed, 0.0, 40.0)?;
        in_range("lane_width", self.lane_width, 2.5, 5.0)?;
        in_range("duration", self.duration, 1.0, 120.0)?;
        in_range("jitter", self.jitter, 0.0, 5.0)?;
        in_range("trigger_gap", self.trigger_gap, 1.0, 200.0)?;
        in_range("curvature", self.curvature, -0.02, 0.02)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Trigger {
    /// Scenario time, s.
    AtTime(f64),
    /// The actor's own arc-length position, m.
    ReachS(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    /// Move to lateral offset `to_d` over `duration` seconds on a smooth
    /// cosine profile.
    ChangeLane { to_d: f64, duration: f64 },
    /// Ramp the speed toward `target` at `rate` m/s².
    SetSpeed { target: f64, rate: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorEvent {
    pub trigger: Trigger,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorSpec {
    pub id: ActorId,
    pub s0: f64,
    pub d0: f64,
    pub speed0: f64,
    #[serde(default)]
    pub events: Vec<ActorEvent>,
}

/// Ego car-following constants (intelligent driver model) and perception
/// settings of the closed loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub max_accel: f64,
    pub comfort_decel: f64,
    pub time_headway: f64,
    pub min_gap: f64,
    pub vehicle_length: f64,
    /// Physical braking limit, m/s².
    pub hard_brake: f64,
    /// An actor is in path when its lateral offset from the ego is below this
    /// fraction of the lane width.
    pub in_path_fraction: f64,
    /// Frames needed to confirm a detection.
    pub confirm_frames: u32,
    /// A track not refreshed for this long is dropped, s.
    pub track_timeout: f64,
    /// Camera detection range, m.
    pub detection_range: f64,
    /// Half width of an actor for occlusion, m.
    pub actor_half_width: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            max_accel: 1.5,
            comfort_decel: 3.0,
            time_headway: 1.2,
            min_gap: 2.0,
            vehicle_length: 4.5,
            hard_brake: 8.0,
            in_path_fraction: 0.6,
            confirm_frames: 5,
            track_timeout: 3.0,
            detection_range: 200.0,
            actor_half_width: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub road: Road,
    pub dt: f64,
    pub duration: f64,
    pub ego_d: f64,
    pub ego_speed: f64,
    #[serde(default)]
    pub controller: ControllerConfig,
    pub actors: Vec<ActorSpec>,
    #[serde(default = "default_rig")]
    pub cameras: Vec<CameraConfig>,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &str, reason: String| {
            Err(ZhuyiError::ScenarioParam { name: name.to_string(), reason })
        };
        if !(self.dt > 0.0 && self.duration > 0.0) {
            return bad("dt", "dt and duration must be positive".into());
        }
        if !(self.ego_speed >= 0.0) {
            return bad("ego_speed", format!("{} is negative", self.ego_speed));
        }
        let mut ids: Vec<&str> = self.actors.iter().map(|a| a.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return bad("actors", "duplicate actor id".into());
        }
        for a in &self.actors {
            if !(a.speed0 >= 0.0) {
                return bad("speed0", format!("actor `{}` has negative speed", a.id));
            }
            for e in &a.events {
                match e.action {
                    Action::ChangeLane { duration, .. } if !(duration > 0.0) => {
                        return bad("duration", format!("lane change of `{}` must take time", a.id));
                    }
                    Action::SetSpeed { target, rate } if !(target >= 0.0 && rate > 0.0) => {
                        return bad("rate", format!("speed change of `{}` is invalid", a.id));
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    /// Earliest `AtTime` trigger, the scripted moment the scenario turns.
    pub fn first_timed_trigger(&self) -> Option<f64> {
        self.actors
            .iter()
            .flat_map(|a| &a.events)
            .filter_map(|e| match e.trigger {
                Trigger::AtTime(t) => Some(t),
                Trigger::ReachS(_) => None,
            })
            .reduce(f64::min)
    }
}

/// A scenario file: a family with overrides, or a custom spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioScript {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<Family>,
    #[serde(default)]
    pub params: FamilyParams,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom: Option<ScenarioSpec>,
}

impl ScenarioScript {
    pub fn family(family: Family) -> Self {
        Self { family: Some(family), params: FamilyParams::default(), seed: 0, custom: None }
    }

    pub fn custom(spec: ScenarioSpec) -> Self {
        Self { family: None, params: FamilyParams::default(), seed: 0, custom: Some(spec) }
    }

    pub fn with_params(mut self, params: FamilyParams) -> Self {
        self.params = params;
        self
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let script: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        script.build()?;
        Ok(script)
    }

    pub fn build(&self) -> Result<ScenarioSpec> {
        let spec = match (&self.family, &self.custom) {
            (Some(family), None) => generate_scenario(*family, &self.params, self.seed)?,
            (None, Some(spec)) => spec.clone(),
            _ => {
                return Err(ZhuyiError::ScenarioParam {
                    name: "family".into(),
                    reason: "give exactly one of `family` and `custom`".into(),
                })
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn actor(id: &str, s0: f64, d0: f64, speed0: f64, events: Vec<ActorEvent>) -> ActorSpec {
    ActorSpec { id: id.to_string(), s0, d0, speed0, events }
}

fn at(t: f64, action: Action) -> ActorEvent {
    ActorEvent { trigger: Trigger::AtTime(t), action }
}

/// Builds the layout of `family`. Actor speeds are multiples of the ego
/// speed, so an ego speed of zero freezes every actor.
pub fn generate_scenario(family: Family, params: &FamilyParams, seed: u64) -> Result<ScenarioSpec> {
    params.validate()?;
    let v = params.ego_speed.unwrap_or_else(|| family.default_ego_speed());
    let w = params.lane_width.unwrap_or(3.7);
    let gap = params.trigger_gap.unwrap_or_else(|| family.default_trigger_gap());
    let curvature = params.curvature.unwrap_or(match family {
        Family::ChallengingCutInCurved => 1.0 / 200.0,
        _ => 0.0,
    });
    let road = Road { lane_width: w, curvature };
    let (left, center, right) = (road.lane_offset(Lane::Left), 0.0, road.lane_offset(Lane::Right));
    let change = |to_d: f64, duration: f64| Action::ChangeLane { to_d, duration };
    let speed = |target: f64, rate: f64| Action::SetSpeed { target, rate };

    let mut ego_d = center;
    let actors = match family {
        Family::OpenRoad => vec![],
        Family::CutOut | Family::CutOutFast => {
            let lead_gap = if family == Family::CutOut { 20.0 } else { 30.0 };
            let obstacle_s = lead_gap + gap + 3.0 * v.max(1.0);
            vec![
                actor("lead", lead_gap, center, v, vec![ActorEvent {
                    trigger: Trigger::ReachS(obstacle_s - gap),
                    action: change(left, 1.5),
                }]),
                actor("obstacle", obstacle_s, center, 0.0, vec![]),
                actor("side_left", 2.0, left, v, vec![]),
                actor("side_right", -2.0, right, v, vec![]),
            ]
        }
        Family::CutIn => vec![actor("cutter", gap, left, 0.85 * v, vec![
            at(3.0, change(center, 2.0)),
            at(3.0, speed(0.6 * v, 2.0)),
        ])],
        Family::ChallengingCutIn | Family::ChallengingCutInCurved => vec![
            actor("cutter", gap, right, 0.9 * v, vec![
                at(2.0, change(center, 1.5)),
                at(3.0, speed(0.0, 4.0)),
            ]),
            actor("side_left", 0.0, left, v, vec![]),
        ],
        Family::VehicleFollowing => {
            vec![actor("lead", gap, center, v, vec![at(4.0, speed(0.0, 6.0))])]
        }
        Family::FrontRightActivity1 => {
            ego_d = left;
            vec![
                actor("right", gap, right, 0.8 * v, vec![at(2.0, change(center, 3.0))]),
                actor("rear", -15.0, left, 0.95 * v, vec![at(4.0, change(center, 3.0))]),
            ]
        }
        Family::FrontRightActivity2 => vec![
            actor("front", gap, center, v, vec![at(2.0, change(right, 2.0)), at(5.0, speed(0.7 * v, 1.5))]),
            actor("right_slow", 2.0 * gap, right, 0.5 * v, vec![]),
        ],
        Family::FrontRightActivity3 => vec![
            actor("cutter", gap, right, 0.85 * v, vec![at(3.0, change(center, 2.5))]),
            actor("side_left", -5.0, left, v, vec![]),
        ],
    };

    let jitter = params.jitter.unwrap_or(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let actors = actors
        .into_iter()
        .map(|mut a| {
            if jitter > 0.0 {
                a.s0 += rng.gen_range(-jitter..=jitter);
            }
            a
        })
        .collect();

    Ok(ScenarioSpec {
        name: family.name().to_string(),
        road,
        dt: 1.0 / 30.0,
        duration: params.duration.unwrap_or(15.0),
        ego_d,
        ego_speed: v,
        controller: ControllerConfig::default(),
        actors,
        cameras: default_rig(),
    })
}
