//! Per-trajectory tolerable latency, per-actor aggregation and per-camera
//! frame-processing rate.
//!
//! For a candidate latency `l` the ego is assumed to keep its current
//! acceleration for the reaction time `t_r = l + α` and then brake hard at
//! `a_b` until `t_n`. The candidate is safe at `t_n` when
//!
//! ```text
//! d_e1 + d_e2 <= c1 * s_n        (distance)
//! v_en        <= c2 * v_an       (velocity)
//! ```
//!
//! where `s_n` is the distance from the ego at t₀ to the actor at `t_n` and
//! `v_an` the actor's speed at `t_n`. [`tolerable_latency`] walks the latency
//! grid downwards and, per candidate, adjusts `t_n` at most `m` times using
//! the closed-form step of [`delta_t_update`].
//!
//! Candidate `t_n` values live on the lattice `k * fine_dt` (k integer), the
//! same lattice the brute-force oracle scans, so every latency declared safe
//! here is re-checkable by the oracle.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Result, ZhuyiError};
use crate::exec::Execution;
use crate::geometry::{in_fov, separation, CameraConfig, VehicleExtent};
use crate::params::{Aggregator, L0Policy, ZhuyiParams};
use crate::state::{KinematicState, Trajectory};
use crate::ActorId;

/// Tolerance on `t_n >= t_r` comparisons.
const TIME_EPS: f64 = 1e-9;

/// Hard-braking deceleration magnitude. Only an existing deceleration is
/// amplified; accelerating never raises braking capability.
pub fn braking_decel(a0: f64, params: &ZhuyiParams) -> f64 {
    params.c3.max(params.c4 * (-a0).max(0.0))
}

/// `t_r = l + k * max(0, l - l0)`.
pub fn reaction_time(l: f64, l0: f64, params: &ZhuyiParams) -> f64 {
    l + params.k as f64 * (l - l0).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrakingProfile {
    /// Distance covered during the reaction phase.
    pub d_e1: f64,
    /// Distance covered while braking, up to `t_n`.
    pub d_e2: f64,
    /// Ego speed at `t_n`.
    pub v_en: f64,
    pub t_r: f64,
    /// Ego speed when braking starts.
    pub v_r: f64,
    pub a_b: f64,
}

/// Distance and end speed after holding acceleration `a` for `dt` from speed
/// `v`, stopping (not reversing) if the speed reaches zero.
fn advance(v: f64, a: f64, dt: f64) -> (f64, f64) {
    if dt <= 0.0 {
        return (0.0, v);
    }
    let v_end = v + a * dt;
    if v_end >= 0.0 {
        (v * dt + 0.5 * a * dt * dt, v_end)
    } else {
        // a < 0 here; stops at v / -a
        (v * v / (-2.0 * a), 0.0)
    }
}

pub fn braking_profile(
    ego0: &KinematicState,
    l: f64,
    l0: f64,
    t_n: f64,
    params: &ZhuyiParams,
) -> Result<BrakingProfile> {
    let t_r = reaction_time(l, l0, params);
    if t_n < t_r - TIME_EPS {
        return Err(ZhuyiError::BeforeReaction { t_n, t_r });
    }
    let a_b = braking_decel(ego0.a, params);
    let (d_e1, v_r) = advance(ego0.v, ego0.a, t_r);
    let (d_e2, v_en) = advance(v_r, -a_b, t_n - t_r);
    Ok(BrakingProfile { d_e1, d_e2, v_en, t_r, v_r, a_b })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintCheck {
    pub met: bool,
    /// `c1 * s_n - d_e1 - d_e2`; non-negative when the distance bound holds.
    pub gap_d: f64,
    /// `v_en - c2 * v_an`; non-positive when the velocity bound holds.
    pub gap_v: f64,
    pub s_n: f64,
    pub v_an: f64,
    pub profile: BrakingProfile,
}

pub fn constraints_met(
    ego0: &KinematicState,
    traj: &Trajectory,
    l: f64,
    l0: f64,
    t_n: f64,
    params: &ZhuyiParams,
) -> Result<ConstraintCheck> {
    let profile = braking_profile(ego0, l, l0, t_n, params)?;
    let actor = traj.state_at(t_n);
    let s_n = separation(ego0, &actor, VehicleExtent { margin: params.extent_margin });
    let v_an = actor.v;
    let gap_d = params.c1 * s_n - profile.d_e1 - profile.d_e2;
    let gap_v = profile.v_en - params.c2 * v_an;
    Ok(ConstraintCheck { met: gap_d >= 0.0 && gap_v <= 0.0, gap_d, gap_v, s_n, v_an, profile })
}

/// Closed-form `t_n` adjustment.
///
/// The distance step applies when `gap_d >= 0`, the velocity step when
/// `gap_v >= 0`, the smaller of the two when both apply, and zero when
/// neither does.
pub fn delta_t_update(gap_d: f64, gap_v: f64, v_en: f64, a_b: f64) -> f64 {
    let by_distance = (gap_d >= 0.0).then(|| distance_step(gap_d, v_en, a_b));
    let by_velocity = (gap_v >= 0.0).then(|| gap_v / a_b);
    match (by_distance, by_velocity) {
        (Some(d), Some(v)) => d.min(v),
        (Some(d), None) => d,
        (None, Some(v)) => v,
        (None, None) => 0.0,
    }
}

fn distance_step(gap_d: f64, v_en: f64, a_b: f64) -> f64 {
    (v_en + (v_en * v_en + 2.0 * a_b * gap_d.abs()).sqrt()) / a_b
}

/// Index of the first lattice point `k * dt` at or after `t`.
pub(crate) fn lattice_index_at_or_after(t: f64, dt: f64) -> u64 {
    let mut k = (t / dt).ceil().max(0.0) as u64;
    while (k as f64) * dt < t {
        k += 1;
    }
    while k > 0 && ((k - 1) as f64) * dt >= t {
        k -= 1;
    }
    k
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyEstimate {
    /// Tolerable latency in seconds, `None` when no candidate is safe.
    pub latency: Option<f64>,
    /// `t_n` at which the constraints were met.
    pub t_n_witness: Option<f64>,
    /// Index of the trajectory that produced this estimate.
    pub binding_trajectory: usize,
}

impl LatencyEstimate {
    pub fn infeasible(binding_trajectory: usize) -> Self {
        Self { latency: None, t_n_witness: None, binding_trajectory }
    }

    pub fn is_feasible(&self) -> bool {
        self.latency.is_some()
    }

    /// Latency used for ranking; infeasible ranks as zero.
    pub fn rank_value(&self) -> f64 {
        self.latency.unwrap_or(0.0)
    }

    /// Required processing rate, clamped to the model's rate range; the
    /// maximum rate when infeasible.
    pub fn fpr(&self, params: &ZhuyiParams) -> f64 {
        match self.latency {
            Some(l) => (1.0 / l).clamp(params.min_fpr(), params.max_fpr()),
            None => params.max_fpr(),
        }
    }
}

/// Largest grid latency for which the bounded `t_n` search meets both
/// constraints on this trajectory.
pub fn tolerable_latency(
    ego0: &KinematicState,
    traj: &Trajectory,
    params: &ZhuyiParams,
) -> Result<LatencyEstimate> {
    tolerable_latency_with(ego0, traj, params.l0_policy, params)
}

pub fn tolerable_latency_with(
    ego0: &KinematicState,
    traj: &Trajectory,
    l0_policy: L0Policy,
    params: &ZhuyiParams,
) -> Result<LatencyEstimate> {
    let dt = params.fine_dt;
    for l in params.latency_grid() {
        let l0 = l0_policy.l0_for(l);
        let t_r = reaction_time(l, l0, params);
        let mut k = lattice_index_at_or_after(t_r, dt);
        for _ in 0..params.m {
            let t_n = k as f64 * dt;
            if t_n > params.horizon {
                break;
            }
            let check = constraints_met(ego0, traj, l, l0, t_n, params)?;
            if check.met {
                return Ok(LatencyEstimate {
                    latency: Some(l),
                    t_n_witness: Some(t_n),
                    binding_trajectory: 0,
                });
            }
            let a_b = check.profile.a_b;
            let mut step = delta_t_update(check.gap_d, check.gap_v, check.profile.v_en, a_b);
            if !(step > 0.0) || !step.is_finite() {
                // distance violated while the velocity bound already holds:
                // neither closed-form branch applies, so advance by the time
                // needed to cover the distance shortfall
                step = distance_step(check.gap_d, check.profile.v_en, a_b);
            }
            k = lattice_index_at_or_after(t_n + step, dt).max(k + 1);
        }
    }
    Ok(LatencyEstimate::infeasible(0))
}

/// Collapses per-trajectory estimates of one actor into a single estimate.
pub fn aggregate_actor_latency(
    estimates: &[(LatencyEstimate, f64)],
    aggregator: Aggregator,
    percentile: f64,
) -> Result<LatencyEstimate> {
    if estimates.is_empty() {
        return Err(ZhuyiError::EmptyAggregate);
    }
    let pick = |i: usize| estimates[i].0;
    let by_value = |a: &usize, b: &usize| {
        pick(*a).rank_value().total_cmp(&pick(*b).rank_value()).then(a.cmp(b))
    };
    let idx: Vec<usize> = (0..estimates.len()).collect();
    let chosen = match aggregator {
        Aggregator::Min => pick(*idx.iter().min_by(|a, b| by_value(a, b)).unwrap()),
        Aggregator::Max => pick(*idx.iter().max_by(|a, b| by_value(a, b)).unwrap()),
        Aggregator::Percentile => {
            let mut sorted = idx;
            sorted.sort_by(by_value);
            let n = estimates.len() as f64;
            let rank = (((100.0 - percentile) / 100.0 * n) - 1e-9).ceil().max(1.0) as usize;
            pick(sorted[rank.min(sorted.len()) - 1])
        }
        Aggregator::Mean => {
            let total: f64 = estimates.iter().map(|(_, p)| *p).sum();
            let uniform = 1.0 / estimates.len() as f64;
            let weight = |p: f64| if total > 0.0 { p / total } else { uniform };
            let most_likely = idx
                .iter()
                .copied()
                .max_by(|a, b| estimates[*a].1.total_cmp(&estimates[*b].1).then(b.cmp(a)))
                .unwrap();
            let binding = pick(most_likely).binding_trajectory;
            if estimates.iter().any(|(e, p)| !e.is_feasible() && weight(*p) > 0.0) {
                LatencyEstimate::infeasible(binding)
            } else {
                let mean = estimates
                    .iter()
                    .map(|(e, p)| weight(*p) * e.rank_value())
                    .sum::<f64>();
                LatencyEstimate { latency: Some(mean), t_n_witness: None, binding_trajectory: binding }
            }
        }
    };
    Ok(chosen)
}

/// Evaluates every trajectory of one actor and aggregates per `params`.
pub fn actor_latency(
    ego0: &KinematicState,
    trajectories: &[Trajectory],
    l0_policy: L0Policy,
    params: &ZhuyiParams,
) -> Result<LatencyEstimate> {
    let per_traj = trajectories
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mut e = tolerable_latency_with(ego0, t, l0_policy, params)?;
            e.binding_trajectory = i;
            Ok((e, t.probability()))
        })
        .collect::<Result<Vec<_>>>()?;
    aggregate_actor_latency(&per_traj, params.aggregator, params.percentile)
}

/// Rate requirement of one camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraFpr {
    pub fpr: f64,
    /// Actor with the smallest latency among the FOV members.
    pub binding_actor: Option<ActorId>,
    /// `l_sensor`; `None` when a member is infeasible.
    pub latency: Option<f64>,
    /// Set when some member has no safe latency.
    pub infeasible: bool,
}

pub fn camera_fpr(
    actor_latencies: &BTreeMap<ActorId, LatencyEstimate>,
    fov_members: &BTreeSet<ActorId>,
    params: &ZhuyiParams,
) -> CameraFpr {
    let members = fov_members.iter().filter_map(|id| actor_latencies.get(id).map(|e| (id, e)));
    let mut binding: Option<(&ActorId, &LatencyEstimate)> = None;
    for (id, e) in members {
        if !e.is_feasible() {
            return CameraFpr {
                fpr: params.max_fpr(),
                binding_actor: Some(id.clone()),
                latency: None,
                infeasible: true,
            };
        }
        if binding.map_or(true, |(_, b)| e.rank_value() < b.rank_value()) {
            binding = Some((id, e));
        }
    }
    match binding {
        Some((id, e)) => CameraFpr {
            fpr: e.fpr(params),
            binding_actor: Some(id.clone()),
            latency: e.latency,
            infeasible: false,
        },
        None => CameraFpr {
            fpr: params.min_fpr(),
            binding_actor: None,
            latency: Some(params.l_max),
            infeasible: false,
        },
    }
}

/// `|A| × |T| × M × L × C` operations for one full evaluation.
pub fn estimate_compute_ops(
    num_actors: u64,
    num_trajectories: u64,
    params: &ZhuyiParams,
    ops_per_iteration: u64,
) -> u64 {
    num_actors * num_trajectories * params.m as u64 * params.latency_steps() * ops_per_iteration
}

/// Ops per search iteration used when none is given.
pub const DEFAULT_OPS_PER_ITERATION: u64 = 100;

/// One actor as seen at the evaluation instant.
#[derive(Debug, Clone)]
pub struct ActorInput {
    pub id: ActorId,
    pub state: KinematicState,
    pub trajectories: Vec<Trajectory>,
    /// Overrides the params' `l0` policy with a fixed current latency.
    pub l0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickEstimate {
    pub actors: BTreeMap<ActorId, LatencyEstimate>,
    /// Per-camera requirement in rig order.
    pub cameras: Vec<(String, CameraFpr)>,
}

impl TickEstimate {
    pub fn camera(&self, id: &str) -> Option<&CameraFpr> {
        self.cameras.iter().find(|(c, _)| c == id).map(|(_, f)| f)
    }

    pub fn total_fpr(&self) -> f64 {
        self.cameras.iter().map(|(_, f)| f.fpr).sum()
    }
}

/// Full evaluation for one instant: every (actor, trajectory) pair, per-actor
/// aggregation, then per-camera rates over FOV membership at t₀.
pub fn evaluate_tick(
    ego0: &KinematicState,
    actors: &[ActorInput],
    cameras: &[CameraConfig],
    params: &ZhuyiParams,
    exec: Execution,
) -> Result<TickEstimate> {
    let pairs: Vec<(usize, usize)> = actors
        .iter()
        .enumerate()
        .flat_map(|(a, actor)| (0..actor.trajectories.len()).map(move |t| (a, t)))
        .collect();
    let results = exec.map(&pairs, |&(a, t)| {
        let actor = &actors[a];
        let policy = actor.l0.map_or(params.l0_policy, L0Policy::Fixed);
        tolerable_latency_with(ego0, &actor.trajectories[t], policy, params).map(|mut e| {
            e.binding_trajectory = t;
            (e, actor.trajectories[t].probability())
        })
    });
    let mut grouped: Vec<Vec<(LatencyEstimate, f64)>> = vec![Vec::new(); actors.len()];
    for (&(a, _), r) in pairs.iter().zip(results) {
        grouped[a].push(r?);
    }
    let mut per_actor = BTreeMap::new();
    for (actor, ests) in actors.iter().zip(grouped) {
        if ests.is_empty() {
            continue;
        }
        let agg = aggregate_actor_latency(&ests, params.aggregator, params.percentile)?;
        per_actor.insert(actor.id.clone(), agg);
    }
    let cameras = cameras
        .iter()
        .map(|cam| {
            let members: BTreeSet<ActorId> = actors
                .iter()
                .filter(|a| in_fov(ego0, &a.state, cam))
                .map(|a| a.id.clone())
                .collect();
            (cam.id.clone(), camera_fpr(&per_actor, &members, params))
        })
        .collect();
    Ok(TickEstimate { actors: per_actor, cameras })
}
