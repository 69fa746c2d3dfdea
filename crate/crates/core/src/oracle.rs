//! Brute-force validation of the latency search.
//!
//! [`feasible_latency_scan`] checks every `t_n` on the `fine_dt` lattice up
//! to the horizon instead of taking the `m` closed-form steps, and
//! [`collision_check`] integrates the ego's reaction-then-brake motion and
//! compares positions against the actor directly. [`scenario_mrf`] finds the
//! minimum fixed processing rate at which a closed-loop scenario stays
//! collision free.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::exec::Execution;
use crate::model::{braking_decel, constraints_met, reaction_time};
use crate::params::{L0Policy, ZhuyiParams};
use crate::scenario::engine::{run_closed_loop, RatePolicy};
use crate::scenario::script::ScenarioScript;
use crate::state::{KinematicState, Trajectory};

/// Collision radius used for realistic scenario runs.
pub const SCENARIO_COLLISION_RADIUS: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleVerdict {
    pub feasible: bool,
    pub best_latency: Option<f64>,
    pub t_n_found: Option<f64>,
}

/// First `t_n` on the `k * fine_dt` lattice, within the horizon, where both
/// constraints hold for latency `l`.
pub fn feasible_t_n(
    ego0: &KinematicState,
    traj: &Trajectory,
    l0: f64,
    l: f64,
    params: &ZhuyiParams,
) -> Result<Option<f64>> {
    let dt = params.fine_dt;
    let t_r = reaction_time(l, l0, params);
    let mut k = (t_r / dt).floor() as u64;
    while (k as f64) * dt < t_r {
        k += 1;
    }
    loop {
        let t_n = k as f64 * dt;
        if t_n > params.horizon {
            return Ok(None);
        }
        if constraints_met(ego0, traj, l, l0, t_n, params)?.met {
            return Ok(Some(t_n));
        }
        k += 1;
    }
}

pub fn feasible_latency_scan(
    ego0: &KinematicState,
    traj: &Trajectory,
    l0: f64,
    l: f64,
    params: &ZhuyiParams,
) -> Result<bool> {
    Ok(feasible_t_n(ego0, traj, l0, l, params)?.is_some())
}

/// Largest grid latency the exhaustive scan declares feasible.
pub fn oracle_best_latency(
    ego0: &KinematicState,
    traj: &Trajectory,
    l0_policy: L0Policy,
    params: &ZhuyiParams,
) -> Result<OracleVerdict> {
    for l in params.latency_grid() {
        if let Some(t_n) = feasible_t_n(ego0, traj, l0_policy.l0_for(l), l, params)? {
            return Ok(OracleVerdict { feasible: true, best_latency: Some(l), t_n_found: Some(t_n) });
        }
    }
    Ok(OracleVerdict { feasible: false, best_latency: None, t_n_found: None })
}

/// Simulates the ego along its heading ray: hold the current acceleration
/// for the reaction time, then brake at `a_b` until stopped. Returns `true`
/// when the ego comes closer than `collision_radius` to the actor at any
/// `fine_dt` step within the horizon.
pub fn collision_check(
    ego0: &KinematicState,
    traj: &Trajectory,
    l: f64,
    l0: f64,
    params: &ZhuyiParams,
    collision_radius: f64,
) -> bool {
    let dt = params.fine_dt;
    let t_r = reaction_time(l, l0, params);
    let a_b = braking_decel(ego0.a, params);
    let (sin, cos) = ego0.heading.sin_cos();
    let steps = (params.horizon / dt).floor() as u64;
    let mut travelled = 0.0;
    let mut v = ego0.v;
    for i in 0..=steps {
        let t = i as f64 * dt;
        let actor = traj.state_at(t);
        let ex = ego0.x + travelled * cos;
        let ey = ego0.y + travelled * sin;
        if (actor.x - ex).hypot(actor.y - ey) < collision_radius {
            return true;
        }
        // integrate over [t, t + dt], splitting at t_r and at the stop
        let mut remaining = dt;
        let mut now = t;
        while remaining > 0.0 && v > 0.0 {
            let accel = if now < t_r { ego0.a } else { -a_b };
            let mut span = remaining;
            if now < t_r {
                span = span.min(t_r - now);
            }
            if accel < 0.0 {
                span = span.min(v / -accel);
            }
            let span = span.max(1e-15);
            travelled += v * span + 0.5 * accel * span * span;
            v = (v + accel * span).max(0.0);
            remaining -= span;
            now += span;
        }
    }
    false
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrfResult {
    /// Smallest fixed rate in `1..=max_rate` above which no run collides;
    /// `None` when even the top rate collides.
    pub mrf: Option<u32>,
    /// Collision outcome per fixed rate, index 0 = 1 FPR.
    pub collided: Vec<bool>,
}

/// Runs the closed-loop scenario at every fixed rate in `1..=max_rate` and
/// reports the minimum rate from which all higher rates are collision free.
/// The grid floor is 1 FPR.
pub fn scenario_mrf(
    script: &ScenarioScript,
    params: &ZhuyiParams,
    collision_radius: f64,
    max_rate: u32,
    exec: Execution,
) -> Result<MrfResult> {
    let rates: Vec<u32> = (1..=max_rate).collect();
    let runs = exec.map(&rates, |&fpr| {
        run_closed_loop(script, params, &RatePolicy::Fixed(fpr as f64), collision_radius, Execution::Sequential)
            .map(|r| r.collision.is_some())
    });
    let collided = runs.into_iter().collect::<Result<Vec<bool>>>()?;
    let mrf = match collided.iter().rposition(|c| *c) {
        None => Some(1),
        Some(i) if i + 1 == collided.len() => None,
        Some(i) => Some(i as u32 + 2),
    };
    Ok(MrfResult { mrf, collided })
}
