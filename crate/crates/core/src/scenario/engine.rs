//! Closed-loop scenario engine.
//!
//! Each tick records the world, checks for a collision, runs the camera
//! pipeline and the ego controller, then advances every actor. Cameras
//! capture on their own schedule at the operating rate and each frame
//! reaches the tracker one frame period after capture. An actor detected in
//! `confirm_frames` distinct capture instants becomes a confirmed track.
//! The run starts mid-drive: actors in the very first frames are already
//! confirmed, while actors revealed later must earn confirmation. The ego
//! follows the nearest confirmed in-path track with the intelligent
//! driver model. A run is single-threaded and deterministic.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Result, ZhuyiError};
use crate::exec::Execution;
use crate::geometry::{in_fov, relative_bearing};
use crate::model::{evaluate_tick, ActorInput, TickEstimate};
use crate::params::ZhuyiParams;
use crate::scheduler::{allocate, requirements, safety_check, AlarmEvent, Budget, RateBounds};
use crate::state::{normalize_angle, KinematicState};
use crate::ActorId;

use super::predictor::{predict_trajectories, PredictorConfig};
use super::script::{Action, ActorSpec, ScenarioScript, ScenarioSpec, Trigger};
use super::trace::{ScenarioTrace, TickRecord, TraceMetadata};

const TIME_EPS: f64 = 1e-9;

/// How camera processing rates are chosen during a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatePolicy {
    /// Every camera at the same rate.
    Fixed(f64),
    /// One rate per camera id.
    PerCamera(BTreeMap<String, f64>),
    /// Cameras at the highest rate while the model runs online and its
    /// requirements are logged.
    Zhuyi { predictor: PredictorConfig },
    /// The model runs online and its requirements drive the budgeted
    /// allocation used from the next tick on.
    Budgeted { budget: f64, predictor: PredictorConfig },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub t: f64,
    pub actor: ActorId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerEvent {
    pub t: f64,
    pub actor: ActorId,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickLog {
    pub tick: usize,
    pub t: f64,
    pub estimate: Option<TickEstimate>,
    pub operating: BTreeMap<String, f64>,
    pub alarm: Option<AlarmEvent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub trace: ScenarioTrace,
    pub collision: Option<CollisionEvent>,
    pub triggers: Vec<TriggerEvent>,
    pub log: Vec<TickLog>,
}

#[derive(Debug, Clone, Copy)]
struct LaneChange {
    from: f64,
    to: f64,
    start: f64,
    duration: f64,
}

impl LaneChange {
    fn progress(&self, t: f64) -> f64 {
        ((t - self.start) / self.duration).clamp(0.0, 1.0)
    }

    fn offset(&self, t: f64) -> f64 {
        let p = self.progress(t);
        self.from + (self.to - self.from) * (1.0 - (std::f64::consts::PI * p).cos()) / 2.0
    }

    fn lateral_rate(&self, t: f64) -> f64 {
        let p = self.progress(t);
        if p <= 0.0 || p >= 1.0 {
            return 0.0;
        }
        (self.to - self.from) * std::f64::consts::PI / (2.0 * self.duration)
            * (std::f64::consts::PI * p).sin()
    }
}

#[derive(Debug, Clone)]
struct ActorSim {
    spec: ActorSpec,
    s: f64,
    d: f64,
    v: f64,
    a: f64,
    lane_change: Option<LaneChange>,
    speed_target: Option<(f64, f64)>,
    fired: Vec<bool>,
}

#[derive(Debug, Clone, Copy)]
struct Observation {
    world: KinematicState,
    s: f64,
    d: f64,
    v: f64,
}

#[derive(Debug, Clone)]
struct Frame {
    deliver_at: f64,
    capture_tick: usize,
    detections: Vec<(ActorId, Observation)>,
}

#[derive(Debug, Clone, Default)]
struct Track {
    captures: BTreeSet<usize>,
    confirmed: bool,
    latest_tick: usize,
    latest: Option<Observation>,
}

fn stop_clamped(v: f64, a: f64, dt: f64) -> (f64, f64) {
    if a < 0.0 && v + a * dt < 0.0 {
        (v * v / (-2.0 * a), 0.0)
    } else {
        (v * dt + 0.5 * a * dt * dt, v + a * dt)
    }
}

struct World<'a> {
    spec: &'a ScenarioSpec,
    ego_s: f64,
    ego_v: f64,
    ego_a: f64,
    actors: Vec<ActorSim>,
}

impl World<'_> {
    fn ego_state(&self) -> KinematicState {
        let (x, y, h) = self.spec.road.pose(self.ego_s, self.spec.ego_d);
        KinematicState::new(x, y, self.ego_v, self.ego_a, h)
    }

    fn actor_state(&self, actor: &ActorSim, t: f64) -> KinematicState {
        let road = &self.spec.road;
        let (x, y, h) = road.pose(actor.s, actor.d);
        let along = actor.v;
        let lateral = actor.lane_change.map_or(0.0, |lc| lc.lateral_rate(t));
        let heading = if along == 0.0 && lateral == 0.0 { h } else { h + lateral.atan2(along) };
        KinematicState::new(x, y, along.hypot(lateral), actor.a, heading)
    }

    fn fire_events(&mut self, t: f64, triggers: &mut Vec<TriggerEvent>) {
        for actor in &mut self.actors {
            for (i, event) in actor.spec.events.iter().enumerate() {
                if actor.fired[i] {
                    continue;
                }
                let due = match event.trigger {
                    Trigger::AtTime(at) => t + TIME_EPS >= at,
                    Trigger::ReachS(s) => actor.s >= s,
                };
                if !due {
                    continue;
                }
                actor.fired[i] = true;
                match event.action {
                    Action::ChangeLane { to_d, duration } => {
                        actor.lane_change = Some(LaneChange { from: actor.d, to: to_d, start: t, duration });
                    }
                    Action::SetSpeed { target, rate } => actor.speed_target = Some((target, rate)),
                }
                triggers.push(TriggerEvent { t, actor: actor.spec.id.clone(), action: event.action });
            }
        }
    }

    fn advance_actors(&mut self, t: f64, dt: f64) {
        let road = self.spec.road;
        for actor in &mut self.actors {
            let v_next = match actor.speed_target {
                Some((target, rate)) if actor.v < target => (actor.v + rate * dt).min(target),
                Some((target, rate)) => (actor.v - rate * dt).max(target),
                None => actor.v,
            };
            actor.a = (v_next - actor.v) / dt;
            let scale = road.speed_scale(actor.d).max(1e-9);
            actor.s += 0.5 * (actor.v + v_next) * dt / scale;
            actor.v = v_next;
            if let Some(lc) = actor.lane_change {
                actor.d = lc.offset(t + dt);
                if lc.progress(t + dt) >= 1.0 {
                    actor.lane_change = None;
                }
            }
        }
    }

    fn advance_ego(&mut self, accel: f64, dt: f64) {
        if self.spec.ego_speed <= 0.0 {
            return;
        }
        let (dist, v) = stop_clamped(self.ego_v, accel, dt);
        self.ego_s += dist / self.spec.road.speed_scale(self.spec.ego_d).max(1e-9);
        self.ego_v = v.max(0.0);
        self.ego_a = if self.ego_v == 0.0 && accel < 0.0 { 0.0 } else { accel };
    }

    /// Intelligent-driver-model acceleration behind the nearest confirmed
    /// in-path track.
    fn controller(&self, tracks: &BTreeMap<ActorId, Track>, t: f64) -> f64 {
        let c = &self.spec.controller;
        let v0 = self.spec.ego_speed;
        let v = self.ego_v;
        let mut accel = c.max_accel * (1.0 - (v / v0).powi(4));
        let in_path = c.in_path_fraction * self.spec.road.lane_width;
        let leader = tracks
            .values()
            .filter(|tr| tr.confirmed)
            .filter_map(|tr| tr.latest.map(|o| (tr.latest_tick, o)))
            .filter(|(_, o)| (o.d - self.spec.ego_d).abs() < in_path)
            .map(|(tick, o)| {
                let age = t - tick as f64 * self.spec.dt;
                (o.s + o.v * age, o.v)
            })
            .filter(|(s, _)| *s > self.ego_s)
            .min_by(|a, b| a.0.total_cmp(&b.0));
        if let Some((s, lead_v)) = leader {
            let gap = s - self.ego_s - c.vehicle_length;
            if gap <= 0.0 {
                return -c.hard_brake;
            }
            let dv = v - lead_v;
            let desired = c.min_gap
                + (v * c.time_headway + v * dv / (2.0 * (c.max_accel * c.comfort_decel).sqrt())).max(0.0);
            accel -= c.max_accel * (desired / gap).powi(2);
        }
        accel.clamp(-c.hard_brake, c.max_accel)
    }

    /// Actors the camera sees at this instant: in field of view, in range and
    /// not hidden behind a nearer actor.
    fn detect(&self, ego: &KinematicState, states: &[KinematicState], cam: usize) -> Vec<usize> {
        let c = &self.spec.controller;
        let camera = &self.spec.cameras[cam];
        let geo: Vec<(f64, f64)> =
            states.iter().map(|s| (ego.distance_to(s), relative_bearing(ego, s))).collect();
        (0..states.len())
            .filter(|&i| geo[i].0 <= c.detection_range && in_fov(ego, &states[i], camera))
            .filter(|&i| {
                !geo.iter().enumerate().any(|(j, &(dist, bearing))| {
                    j != i
                        && dist < geo[i].0
                        && dist > 0.0
                        && normalize_angle(bearing - geo[i].1).abs() < (c.actor_half_width / dist).atan()
                })
            })
            .collect()
    }
}

fn operating_rates(spec: &ScenarioSpec, policy: &RatePolicy, params: &ZhuyiParams) -> Result<BTreeMap<String, f64>> {
    let ids = spec.cameras.iter().map(|c| c.id.clone());
    let rates: BTreeMap<String, f64> = match policy {
        RatePolicy::Fixed(f) => ids.map(|id| (id, *f)).collect(),
        RatePolicy::PerCamera(map) => {
            let mut out = BTreeMap::new();
            for id in ids {
                let f = map.get(&id).ok_or_else(|| ZhuyiError::KeyMismatch(format!("no rate for camera `{id}`")))?;
                out.insert(id, *f);
            }
            out
        }
        RatePolicy::Zhuyi { .. } => ids.map(|id| (id, params.max_fpr())).collect(),
        RatePolicy::Budgeted { budget, .. } => {
            let floor: BTreeMap<String, f64> = ids.map(|id| (id, params.min_fpr())).collect();
            allocate(&floor, Budget::new(*budget)?, RateBounds::from_params(params)).per_camera_fps
        }
    };
    if let Some((id, f)) = rates.iter().find(|(_, f)| !(f.is_finite() && **f > 0.0)) {
        return Err(ZhuyiError::InvalidParam { name: "rate", reason: format!("camera `{id}` rate {f}") });
    }
    Ok(rates)
}

/// Runs `script` to completion or first collision. A collision is any actor
/// center closer than `collision_radius` to the ego center.
pub fn run_closed_loop(
    script: &ScenarioScript,
    params: &ZhuyiParams,
    policy: &RatePolicy,
    collision_radius: f64,
    exec: Execution,
) -> Result<RunResult> {
    params.validate()?;
    let spec = script.build()?;
    let predictor = match policy {
        RatePolicy::Zhuyi { predictor } | RatePolicy::Budgeted { predictor, .. } => {
            predictor.validate()?;
            Some(predictor)
        }
        _ => None,
    };
    let mut operating = operating_rates(&spec, policy, params)?;
    let dt = spec.dt;
    let n_ticks = (spec.duration / dt).round() as usize;
    let mut world = World {
        spec: &spec,
        ego_s: 0.0,
        ego_v: spec.ego_speed,
        ego_a: 0.0,
        actors: spec
            .actors
            .iter()
            .map(|a| ActorSim {
                spec: a.clone(),
                s: a.s0,
                d: a.d0,
                v: a.speed0,
                a: 0.0,
                lane_change: None,
                speed_target: None,
                fired: vec![false; a.events.len()],
            })
            .collect(),
    };
    let mut last_capture: Vec<Option<f64>> = vec![None; spec.cameras.len()];
    let mut pending: Vec<Frame> = Vec::new();
    let mut tracks: BTreeMap<ActorId, Track> = BTreeMap::new();
    let mut ticks = Vec::with_capacity(n_ticks + 1);
    let mut triggers = Vec::new();
    let mut log = Vec::with_capacity(n_ticks + 1);
    let mut collision = None;

    for tick in 0..=n_ticks {
        let t = tick as f64 * dt;
        let ego = world.ego_state();
        let states: Vec<KinematicState> = world.actors.iter().map(|a| world.actor_state(a, t)).collect();
        ticks.push(TickRecord {
            t,
            ego,
            actors: world.actors.iter().zip(&states).map(|(a, s)| (a.spec.id.clone(), *s)).collect(),
        });
        if let Some((a, _)) = world
            .actors
            .iter()
            .zip(&states)
            .find(|(_, s)| ego.distance_to(s) < collision_radius)
        {
            collision = Some(CollisionEvent { t, actor: a.spec.id.clone() });
            break;
        }

        for (cam, last) in last_capture.iter_mut().enumerate() {
            let period = 1.0 / operating[&spec.cameras[cam].id];
            if last.is_some_and(|l| t + TIME_EPS < l + period) {
                continue;
            }
            *last = Some(t);
            let detections = world
                .detect(&ego, &states, cam)
                .into_iter()
                .map(|i| {
                    let a = &world.actors[i];
                    (a.spec.id.clone(), Observation { world: states[i], s: a.s, d: a.d, v: a.v })
                })
                .collect();
            pending.push(Frame { deliver_at: t + period, capture_tick: tick, detections });
        }
        pending.sort_by_key(|f| f.capture_tick);
        let (due, later): (Vec<Frame>, Vec<Frame>) =
            pending.drain(..).partition(|f| f.deliver_at <= t + TIME_EPS);
        pending = later;
        let confirm = spec.controller.confirm_frames as usize;
        for frame in due {
            for (id, obs) in frame.detections {
                let track = tracks.entry(id).or_default();
                track.captures.insert(frame.capture_tick);
                track.confirmed |= frame.capture_tick == 0 || track.captures.len() >= confirm;
                if track.latest.is_none() || frame.capture_tick >= track.latest_tick {
                    track.latest_tick = frame.capture_tick;
                    track.latest = Some(obs);
                }
            }
        }
        let timeout = spec.controller.track_timeout;
        tracks.retain(|_, tr| t - tr.latest_tick as f64 * dt <= timeout);

        let mut estimate = None;
        let mut alarm = None;
        let mut reallocated = None;
        if let Some(predictor) = predictor {
            let inputs = online_inputs(&spec, &ego, &tracks, &operating, predictor, params, t)?;
            let est = evaluate_tick(&ego, &inputs, &spec.cameras, params, exec)?;
            let required = requirements(&est);
            alarm = match policy {
                RatePolicy::Budgeted { budget, .. } => {
                    let fps = required.iter().map(|(k, r)| (k.clone(), r.fps)).collect();
                    let alloc = allocate(&fps, Budget::new(*budget)?, RateBounds::from_params(params));
                    let alarm = safety_check(&required, &alloc.per_camera_fps)?.or(alloc.alarm);
                    reallocated = Some(alloc.per_camera_fps);
                    alarm
                }
                _ => safety_check(&required, &operating)?,
            };
            estimate = Some(est);
        }
        log.push(TickLog { tick, t, estimate, operating: operating.clone(), alarm });
        if let Some(rates) = reallocated {
            operating = rates;
        }
        world.step(&tracks, t, dt, &mut triggers);
    }

    let run_fpr = match policy {
        RatePolicy::Fixed(f) => Some(*f),
        _ => None,
    };
    let trace = ScenarioTrace {
        dt,
        ticks,
        cameras: spec.cameras.clone(),
        metadata: TraceMetadata {
            name: spec.name.clone(),
            ego_nominal_speed: spec.ego_speed,
            run_fpr,
            script: Some(script.clone()),
        },
    };
    Ok(RunResult { trace, collision, triggers, log })
}

impl World<'_> {
    fn step(&mut self, tracks: &BTreeMap<ActorId, Track>, t: f64, dt: f64, triggers: &mut Vec<TriggerEvent>) {
        let accel = self.controller(tracks, t);
        self.fire_events(t, triggers);
        self.advance_actors(t, dt);
        self.advance_ego(accel, dt);
    }
}

/// Tracked actors extrapolated to `t` at constant velocity, with predicted
/// futures and the current latency of the fastest camera covering them.
fn online_inputs(
    spec: &ScenarioSpec,
    ego: &KinematicState,
    tracks: &BTreeMap<ActorId, Track>,
    operating: &BTreeMap<String, f64>,
    predictor: &PredictorConfig,
    params: &ZhuyiParams,
    t: f64,
) -> Result<Vec<ActorInput>> {
    tracks
        .iter()
        .filter_map(|(id, tr)| tr.latest.map(|o| (id, tr.latest_tick, o)))
        .map(|(id, tick, obs)| {
            let age = t - tick as f64 * spec.dt;
            let w = obs.world;
            let (sin, cos) = w.heading.sin_cos();
            let state = KinematicState { x: w.x + w.v * age * cos, y: w.y + w.v * age * sin, ..w };
            let fastest = spec
                .cameras
                .iter()
                .filter(|c| in_fov(ego, &state, c))
                .map(|c| operating[&c.id])
                .fold(params.min_fpr(), f64::max);
            Ok(ActorInput {
                id: id.clone(),
                state,
                trajectories: predict_trajectories(&state, predictor)?,
                l0: Some(1.0 / fastest),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CameraConfig;
    use crate::scenario::script::{Family, FamilyParams};
    use crate::scenario::trace::load_trace;

    const R: f64 = crate::oracle::SCENARIO_COLLISION_RADIUS;

    fn run(script: &ScenarioScript, fpr: f64) -> RunResult {
        run_closed_loop(script, &ZhuyiParams::default(), &RatePolicy::Fixed(fpr), R, Execution::Sequential)
            .unwrap()
    }

    #[test]
    fn identical_inputs_give_identical_traces() {
        let script = ScenarioScript::family(Family::CutOut)
            .with_params(FamilyParams { jitter: Some(1.0), ..Default::default() });
        let a = run(&script, 7.0);
        let b = run(&script, 7.0);
        assert_eq!(a.trace.to_jsonl(), b.trace.to_jsonl());
        assert_eq!(a.collision, b.collision);
    }

    #[test]
    fn generated_traces_survive_a_round_trip() {
        for family in Family::BENCHMARK {
            let result = run(&ScenarioScript::family(family), 30.0);
            let text = result.trace.to_jsonl();
            let loaded = load_trace(text.as_bytes()).unwrap();
            assert_eq!(loaded.to_jsonl(), text, "{}", family.name());
        }
    }

    #[test]
    fn an_actor_enters_the_front_view_before_the_trigger() {
        for family in Family::BENCHMARK {
            let result = run(&ScenarioScript::family(family), 30.0);
            let trigger_t = result.triggers.first().map(|e| e.t).expect("scripted trigger fires");
            let front: &CameraConfig = &result.trace.cameras[0];
            let seen = result
                .trace
                .ticks
                .iter()
                .take_while(|tick| tick.t <= trigger_t + 1e-9)
                .any(|tick| tick.actors.values().any(|a| in_fov(&tick.ego, a, front)));
            assert!(seen, "{}", family.name());
        }
    }

    #[test]
    fn zero_ego_speed_never_collides() {
        for family in Family::BENCHMARK {
            let script = ScenarioScript::family(family)
                .with_params(FamilyParams { ego_speed: Some(0.0), duration: Some(5.0), ..Default::default() });
            for fpr in [1.0, 30.0] {
                assert!(run(&script, fpr).collision.is_none(), "{}", family.name());
            }
        }
    }

    #[test]
    fn vehicle_following_lead_stops() {
        let result = run(&ScenarioScript::family(Family::VehicleFollowing), 30.0);
        assert!(result.collision.is_none());
        let last = result.trace.ticks.last().unwrap();
        assert_eq!(last.actors["lead"].v, 0.0);
        assert!(result.triggers.iter().any(|e| e.actor == "lead" && (e.t - 4.0).abs() < 1e-6));
    }

    #[test]
    fn cut_out_at_thirty_fpr_is_safe_and_at_one_fpr_is_not() {
        let script = ScenarioScript::family(Family::CutOutFast);
        assert!(run(&script, 30.0).collision.is_none());
        assert!(run(&script, 1.0).collision.is_some());
    }

    #[test]
    fn per_camera_rates_need_every_camera() {
        let partial = RatePolicy::PerCamera([("front".to_string(), 10.0)].into_iter().collect());
        let err = run_closed_loop(
            &ScenarioScript::family(Family::CutIn),
            &ZhuyiParams::default(),
            &partial,
            R,
            Execution::Sequential,
        );
        assert!(matches!(err, Err(ZhuyiError::KeyMismatch(_))));
    }
}
