//! Offline analysis of recorded traces and reports of closed-loop runs.
//!
//! Every tick of a trace is evaluated with each actor's recorded future as
//! its single trajectory. Reports are line-delimited records (per-camera and
//! per-actor) followed by one summary object.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ZhuyiError};
use crate::exec::Execution;
use crate::model::{evaluate_tick, ActorInput, TickEstimate};
use crate::oracle::{scenario_mrf, SCENARIO_COLLISION_RADIUS};
use crate::params::ZhuyiParams;
use crate::scenario::engine::{CollisionEvent, RunResult};
use crate::scenario::trace::{ground_truth_trajectory, ScenarioTrace};
use crate::scheduler::{AlarmEvent, Severity};
use crate::ActorId;

/// Highest fixed rate tried when searching for the minimum required rate.
pub const MRF_MAX_RATE: u32 = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    pub tick: usize,
    pub t: f64,
    pub camera: String,
    pub fpr: f64,
    pub binding_actor: Option<ActorId>,
    pub latency: Option<f64>,
    pub infeasible: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operating: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorRecord {
    pub tick: usize,
    pub t: f64,
    pub actor: ActorId,
    pub latency: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrfCheck {
    /// `None` when even the highest rate collides.
    pub mrf: Option<u32>,
    pub collided: Vec<bool>,
    /// Whether the largest per-camera estimate reaches the MRF.
    pub estimate_covers_mrf: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub ticks: usize,
    pub num_cameras: usize,
    pub max_camera_fpr: BTreeMap<String, f64>,
    pub max_total_fpr: f64,
    /// `max_total_fpr` over the rig's total rate at `1 / l_min`.
    pub fraction: f64,
    pub fraction_display: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mrf: Option<MrfCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collision: Option<CollisionEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alarms: Option<AlarmCounts>,
}

impl Summary {
    /// Largest per-camera requirement over the whole run.
    pub fn max_fpr(&self) -> f64 {
        self.max_camera_fpr.values().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlarmCounts {
    pub deficit: usize,
    pub infeasible: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReportRecord {
    Camera(CameraRecord),
    Actor(ActorRecord),
    Alarm { tick: usize, t: f64, alarm: AlarmEvent },
    Summary(Summary),
}

pub fn fraction(max_total_fpr: f64, num_cameras: usize, params: &ZhuyiParams) -> f64 {
    max_total_fpr / (num_cameras as f64 * params.max_fpr())
}

/// Two-decimal rendering used in reports.
pub fn format_fraction(fraction: f64) -> String {
    format!("{fraction:.2}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceAnalysis {
    pub ticks: Vec<(usize, f64, TickEstimate)>,
    pub summary: Summary,
}

impl TraceAnalysis {
    pub fn records(&self) -> Vec<ReportRecord> {
        let mut out = Vec::new();
        for (tick, t, est) in &self.ticks {
            push_tick(&mut out, *tick, *t, est, None);
        }
        out.push(ReportRecord::Summary(self.summary.clone()));
        out
    }
}

fn push_tick(
    out: &mut Vec<ReportRecord>,
    tick: usize,
    t: f64,
    est: &TickEstimate,
    operating: Option<&BTreeMap<String, f64>>,
) {
    for (camera, c) in &est.cameras {
        out.push(ReportRecord::Camera(CameraRecord {
            tick,
            t,
            camera: camera.clone(),
            fpr: c.fpr,
            binding_actor: c.binding_actor.clone(),
            latency: c.latency,
            infeasible: c.infeasible,
            operating: operating.and_then(|o| o.get(camera).copied()),
        }));
    }
    for (actor, e) in &est.actors {
        out.push(ReportRecord::Actor(ActorRecord { tick, t, actor: actor.clone(), latency: e.latency }));
    }
}

fn summarize<'a>(
    estimates: impl Iterator<Item = &'a TickEstimate>,
    camera_ids: &[String],
    params: &ZhuyiParams,
) -> Summary {
    let mut max_camera_fpr: BTreeMap<String, f64> =
        camera_ids.iter().map(|id| (id.clone(), params.min_fpr())).collect();
    let mut max_total_fpr = 0.0f64;
    let mut ticks = 0;
    for est in estimates {
        ticks += 1;
        for (id, c) in &est.cameras {
            let slot = max_camera_fpr.entry(id.clone()).or_insert(c.fpr);
            *slot = slot.max(c.fpr);
        }
        max_total_fpr = max_total_fpr.max(est.total_fpr());
    }
    let f = fraction(max_total_fpr, camera_ids.len(), params);
    Summary {
        ticks,
        num_cameras: camera_ids.len(),
        max_camera_fpr,
        max_total_fpr,
        fraction: f,
        fraction_display: format_fraction(f),
        mrf: None,
        collision: None,
        alarms: None,
    }
}

/// Evaluates every tick of `trace` against the recorded futures. When the
/// trace records the fixed rate it ran at, that rate sets every actor's
/// current latency; otherwise the params' policy applies.
pub fn analyze_trace(trace: &ScenarioTrace, params: &ZhuyiParams, exec: Execution) -> Result<TraceAnalysis> {
    params.validate()?;
    trace.validate()?;
    let l0 = trace.metadata.run_fpr.map(|f| 1.0 / f);
    let per_tick = exec.map_range(trace.ticks.len(), |i| {
        let tick = &trace.ticks[i];
        let inputs = tick
            .actors
            .iter()
            .map(|(id, state)| {
                Ok(ActorInput {
                    id: id.clone(),
                    state: *state,
                    trajectories: vec![ground_truth_trajectory(trace, id, i)?],
                    l0,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        evaluate_tick(&tick.ego, &inputs, &trace.cameras, params, Execution::Sequential)
    });
    let ticks = per_tick
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.map(|e| (i, trace.ticks[i].t, e)))
        .collect::<Result<Vec<_>>>()?;
    let ids: Vec<String> = trace.cameras.iter().map(|c| c.id.clone()).collect();
    let summary = summarize(ticks.iter().map(|(_, _, e)| e), &ids, params);
    Ok(TraceAnalysis { ticks, summary })
}

/// [`analyze_trace`] plus the minimum required fixed rate of the scenario
/// that produced the trace, found by re-running its script.
pub fn analyze_with_mrf(trace: &ScenarioTrace, params: &ZhuyiParams, exec: Execution) -> Result<TraceAnalysis> {
    let script = trace.metadata.script.as_ref().ok_or_else(|| {
        ZhuyiError::Header("trace metadata carries no scenario script to re-run".into())
    })?;
    let mut analysis = analyze_trace(trace, params, exec)?;
    let mrf = scenario_mrf(script, params, SCENARIO_COLLISION_RADIUS, MRF_MAX_RATE, exec)?;
    let covers = match mrf.mrf {
        Some(m) => analysis.summary.max_fpr() >= m as f64,
        None => false,
    };
    analysis.summary.mrf = Some(MrfCheck { mrf: mrf.mrf, collided: mrf.collided, estimate_covers_mrf: covers });
    Ok(analysis)
}

/// Report of a closed-loop run with online estimates.
pub fn simulation_records(run: &RunResult, params: &ZhuyiParams) -> Vec<ReportRecord> {
    let mut out = Vec::new();
    let mut counts = AlarmCounts::default();
    for entry in &run.log {
        if let Some(est) = &entry.estimate {
            push_tick(&mut out, entry.tick, entry.t, est, Some(&entry.operating));
        }
        if let Some(alarm) = &entry.alarm {
            match alarm.severity {
                Severity::Deficit => counts.deficit += 1,
                Severity::Infeasible => counts.infeasible += 1,
            }
            out.push(ReportRecord::Alarm { tick: entry.tick, t: entry.t, alarm: alarm.clone() });
        }
    }
    let ids: Vec<String> = run.trace.cameras.iter().map(|c| c.id.clone()).collect();
    let mut summary = summarize(run.log.iter().filter_map(|l| l.estimate.as_ref()), &ids, params);
    summary.ticks = run.log.len();
    summary.collision = run.collision.clone();
    summary.alarms = Some(counts);
    out.push(ReportRecord::Summary(summary));
    out
}

pub fn write_records<W: Write>(records: &[ReportRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CameraConfig;
    use crate::scenario::trace::{TickRecord, TraceMetadata};
    use crate::state::KinematicState;

    fn three_cameras() -> Vec<CameraConfig> {
        vec![
            CameraConfig::from_degrees("front", 0.0, 120.0),
            CameraConfig::from_degrees("left", 120.0, 120.0),
            CameraConfig::from_degrees("right", -120.0, 120.0),
        ]
    }

    #[test]
    fn fractions_render_to_two_decimals() {
        let p = ZhuyiParams::default();
        let got: Vec<String> =
            [32.0, 11.0, 3.0, 9.0].iter().map(|&m| format_fraction(fraction(m, 3, &p))).collect();
        assert_eq!(got, ["0.36", "0.12", "0.03", "0.10"]);
    }

    #[test]
    fn empty_trace_runs_every_camera_at_the_floor() {
        let trace = ScenarioTrace {
            dt: 0.1,
            ticks: (0..5)
                .map(|i| TickRecord {
                    t: i as f64 * 0.1,
                    ego: KinematicState::new(i as f64, 0.0, 10.0, 0.0, 0.0),
                    actors: BTreeMap::new(),
                })
                .collect(),
            cameras: three_cameras(),
            metadata: TraceMetadata { name: "empty".into(), ego_nominal_speed: 10.0, run_fpr: None, script: None },
        };
        let a = analyze_trace(&trace, &ZhuyiParams::default(), Execution::Sequential).unwrap();
        assert!(a.ticks.iter().all(|(_, _, e)| e.cameras.iter().all(|(_, c)| c.fpr == 1.0)));
        assert_eq!(a.summary.max_total_fpr, 3.0);
        assert_eq!(a.summary.fraction_display, "0.03");
        assert!(analyze_with_mrf(&trace, &ZhuyiParams::default(), Execution::Sequential).is_err());
        let recs = a.records();
        assert!(matches!(recs.last(), Some(ReportRecord::Summary(_))));
        assert_eq!(recs.len(), 5 * 3 + 1);
    }
}
